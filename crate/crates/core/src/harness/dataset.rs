//! Prepared dataset files and synthetic populations.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{invalid, Error, Result};

/// On-disk layout of a prepared binary dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetFormat {
    /// One ASCII `0` or `1` per line.
    BitLines,
    /// A CSV file with a header row; the named column holds `0`/`1`.
    CsvColumn { column: String },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatasetSummary {
    pub name: String,
    pub n: usize,
    pub n1: usize,
    pub ratio: f64,
}

impl DatasetSummary {
    pub fn of(name: impl Into<String>, values: &[bool]) -> Self {
        let n = values.len();
        let n1 = values.iter().filter(|&&v| v).count();
        let ratio = if n == 0 { 0.0 } else { n1 as f64 / n as f64 };
        DatasetSummary {
            name: name.into(),
            n,
            n1,
            ratio,
        }
    }
}

/// A loaded binary population. Only the summary is serialized.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Dataset {
    pub summary: DatasetSummary,
    pub source: Option<PathBuf>,
    #[serde(skip)]
    pub values: Vec<bool>,
}

fn parse_bit(field: &str) -> Option<bool> {
    match field {
        "0" => Some(false),
        "1" => Some(true),
        _ => None,
    }
}

fn parse_error(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn read_bit_lines(path: &Path) -> Result<Vec<bool>> {
    let reader = BufReader::new(File::open(path)?);
    let mut values = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.strip_suffix('\r').unwrap_or(&line);
        let bit = parse_bit(line)
            .ok_or_else(|| parse_error(path, i + 1, format!("expected 0 or 1, found {line:?}")))?;
        values.push(bit);
    }
    Ok(values)
}

fn read_csv_column(path: &Path, column: &str) -> Result<Vec<bool>> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    let idx = headers
        .iter()
        .position(|h| h.trim() == column)
        .ok_or_else(|| parse_error(path, 1, format!("no column named {column:?}")))?;
    let mut values = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let field = record
            .get(idx)
            .ok_or_else(|| parse_error(path, line, format!("missing column {column:?}")))?;
        let bit = parse_bit(field.trim())
            .ok_or_else(|| parse_error(path, line, format!("expected 0 or 1, found {field:?}")))?;
        values.push(bit);
    }
    Ok(values)
}

/// Loads a prepared binary dataset in file order.
pub fn load_dataset(path: &Path, format: &DatasetFormat) -> Result<Dataset> {
    let values = match format {
        DatasetFormat::BitLines => read_bit_lines(path)?,
        DatasetFormat::CsvColumn { column } => read_csv_column(path, column)?,
    };
    if values.is_empty() {
        return Err(parse_error(path, 0, "dataset is empty"));
    }
    let name = path.file_stem().map_or_else(
        || "dataset".to_owned(),
        |s| s.to_string_lossy().into_owned(),
    );
    Ok(Dataset {
        summary: DatasetSummary::of(name, &values),
        source: Some(path.to_path_buf()),
        values,
    })
}

/// Writes values in the bit-lines format.
pub fn write_bit_lines<W: Write>(values: &[bool], mut out: W) -> Result<()> {
    for &v in values {
        out.write_all(if v { b"1\n" } else { b"0\n" })?;
    }
    out.flush()?;
    Ok(())
}

/// Exactly `n1` ones among `n`, in a seed-determined order.
pub fn synthesize(n: usize, n1: usize, seed: u64) -> Result<Vec<bool>> {
    if n1 > n {
        return Err(invalid(format!("n1 = {n1} exceeds n = {n}")));
    }
    let mut values: Vec<bool> = (0..n).map(|i| i < n1).collect();
    values.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok(values)
}
