#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use jrr::error::{Error, Result};
use jrr::estimation::{jrr_variance, rr_variance, EstimationResult};
use jrr::grouping::{perturb_cohort, Cohort, PerturbMode};
use jrr::harness::{
    load_dataset, run_experiment_streaming, write_bit_lines, write_sidecar, Dataset, DatasetFormat,
    ExperimentConfig, MechanismChoice, RrBaseline, Share, Sweep, CSV_HEADER,
};
use jrr::mechanisms::{rr_keep_probability, PerturbParams};
use jrr::oracle::{
    enumerate_reports, exact_estimator_moments, exact_privacy_ratio, PairingSet, MAX_REPORT_N,
};
use jrr::privacy::{
    effective_epsilon, privacy_ratio_bound, search_params_with, PrivacyBudget, SearchConfig,
    SearchStrategy, FEASIBILITY_SLACK,
};

#[derive(Parser)]
#[command(
    name = "jrr",
    version,
    about = "Joint randomized response: perturb, estimate, search parameters, simulate"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Grid-search (p, rho) for a privacy budget and print it as JSON.
    SearchParams(SearchParamsArgs),
    /// Perturb a binary dataset and write the reports as bit-lines.
    Perturb(PerturbArgs),
    /// Estimate counts from a file of reports.
    Estimate(EstimateArgs),
    /// Run a Monte-Carlo experiment and write CSV plus a JSON sidecar.
    Simulate(SimulateArgs),
    /// Exact enumeration for a small cohort, as JSON.
    Oracle(OracleArgs),
    /// Dataset utilities.
    Datasets {
        #[command(subcommand)]
        command: DatasetsCommand,
    },
}

#[derive(Subcommand)]
enum DatasetsCommand {
    /// Print n, n1 and the ratio of a prepared dataset.
    Summarize(SummarizeArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    BitLines,
    CsvColumn,
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyArg {
    FirstFeasible,
    MinVariance,
}

#[derive(Clone, Copy, ValueEnum, PartialEq, Eq)]
enum MechanismArg {
    Rr,
    Jrr,
    Both,
}

#[derive(Clone, Copy, ValueEnum)]
enum BaselineArg {
    BudgetOptimal,
    MatchedP,
}

#[derive(Args)]
struct DatasetArgs {
    /// Prepared dataset file.
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "bit-lines")]
    format: FormatArg,
    /// Column holding the bit, for --format csv-column.
    #[arg(long)]
    column: Option<String>,
}

impl DatasetArgs {
    fn load(&self) -> Result<Option<Dataset>> {
        let Some(path) = &self.dataset else {
            return Ok(None);
        };
        let format = match (self.format, &self.column) {
            (FormatArg::BitLines, _) => DatasetFormat::BitLines,
            (FormatArg::CsvColumn, Some(c)) => DatasetFormat::CsvColumn { column: c.clone() },
            (FormatArg::CsvColumn, None) => {
                return Err(usage("--format csv-column needs --column"))
            }
        };
        load_dataset(path, &format).map(Some)
    }

    fn require(&self) -> Result<Dataset> {
        self.load()?.ok_or_else(|| usage("--dataset is required"))
    }
}

#[derive(Args)]
struct SearchArgs {
    #[arg(long, default_value_t = 1e-4)]
    delta_p: f64,
    #[arg(long, default_value_t = 1e-4)]
    delta_rho: f64,
    #[arg(long, value_enum, default_value = "first-feasible")]
    strategy: StrategyArg,
    /// Number of ones assumed by --strategy min-variance.
    #[arg(long, default_value_t = 0)]
    strategy_n1: usize,
}

impl SearchArgs {
    fn config(&self) -> Result<(SearchConfig, SearchStrategy)> {
        let cfg = SearchConfig::new(self.delta_p, self.delta_rho)?;
        let strategy = match self.strategy {
            StrategyArg::FirstFeasible => SearchStrategy::FirstFeasible,
            StrategyArg::MinVariance => SearchStrategy::MinVariance {
                n1: self.strategy_n1,
            },
        };
        Ok((cfg, strategy))
    }
}

#[derive(Args)]
struct SearchParamsArgs {
    #[arg(long)]
    epsilon: f64,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 5)]
    m_max: usize,
    /// Also report the closed-form variance at this many ones.
    #[arg(long)]
    n1: Option<usize>,
    #[command(flatten)]
    search: SearchArgs,
}

#[derive(Args)]
struct PerturbArgs {
    #[command(flatten)]
    data: DatasetArgs,
    #[arg(long, value_enum, default_value = "jrr")]
    mechanism: MechanismArg,
    #[arg(long)]
    epsilon: f64,
    #[arg(long, default_value_t = 5)]
    m_max: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    search: SearchArgs,
}

#[derive(Args)]
struct EstimateArgs {
    /// Reports to estimate from.
    #[command(flatten)]
    data: DatasetArgs,
    /// Keep probability used when perturbing; otherwise derived from --epsilon.
    #[arg(long)]
    p: Option<f64>,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    rho: f64,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long, value_enum, default_value = "jrr")]
    mechanism: MechanismArg,
    #[arg(long, default_value_t = 5)]
    m_max: usize,
    #[command(flatten)]
    search: SearchArgs,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, value_enum, default_value = "both")]
    mechanism: MechanismArg,
    #[arg(long, default_value_t = 10_000)]
    n: usize,
    #[arg(long, conflicts_with = "ratio")]
    n1: Option<usize>,
    /// Fraction of ones; default 0.1.
    #[arg(long)]
    ratio: Option<f64>,
    #[command(flatten)]
    data: DatasetArgs,
    #[arg(long, default_value_t = 0.1)]
    epsilon: f64,
    #[arg(long, default_value_t = 5)]
    m_max: usize,
    #[arg(long, default_value_t = 1000)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_delimiter = ',', group = "sweep")]
    sweep_epsilon: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', group = "sweep")]
    sweep_n: Option<Vec<usize>>,
    /// start:stop:step
    #[arg(long, group = "sweep")]
    sweep_ratio: Option<String>,
    #[arg(long, value_delimiter = ',', group = "sweep")]
    sweep_m: Option<Vec<usize>>,
    #[arg(long, value_enum, default_value = "budget-optimal")]
    rr_baseline: BaselineArg,
    #[command(flatten)]
    search: SearchArgs,
    /// CSV output; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Sidecar JSON; defaults to the --out path with a .json extension.
    #[arg(long)]
    sidecar: Option<PathBuf>,
}

#[derive(Args)]
struct OracleArgs {
    /// Comma-separated bits; overrides --n/--n1.
    #[arg(long, value_delimiter = ',')]
    values: Option<Vec<u8>>,
    #[arg(long, default_value_t = 4)]
    n: usize,
    #[arg(long, default_value_t = 2)]
    n1: usize,
    #[arg(long)]
    p: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    rho: f64,
    /// Also compute the worst-case privacy ratio for these colluders.
    #[arg(long, value_delimiter = ',')]
    colluders: Option<Vec<usize>>,
    #[arg(long, default_value_t = 0)]
    target: usize,
}

#[derive(Args)]
struct SummarizeArgs {
    #[command(flatten)]
    data: DatasetArgs,
    /// Name to report instead of the file stem.
    #[arg(long)]
    name: Option<String>,
}

fn usage(msg: &str) -> Error {
    Error::InvalidParameter(msg.to_owned())
}

fn print_json(value: &serde_json::Value) -> Result<()> {
    let stdout = io::stdout();
    let mut out = stdout.lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout())),
    })
}

fn searched_params(
    epsilon: f64,
    m_max: usize,
    n: usize,
    search: &SearchArgs,
) -> Result<PerturbParams> {
    let budget = PrivacyBudget::new(epsilon, m_max, n)?;
    let (cfg, strategy) = search.config()?;
    let found = search_params_with(&budget, &cfg, strategy).ok_or_else(|| {
        usage("no feasible (p, rho) on the search grid; coarsen the grid or change epsilon")
    })?;
    PerturbParams::binary(found.p, found.rho)
}

fn search_params_cmd(a: SearchParamsArgs) -> Result<()> {
    let budget = PrivacyBudget::new(a.epsilon, a.m_max, a.n)?;
    let (cfg, strategy) = a.search.config()?;
    let Some(found) = search_params_with(&budget, &cfg, strategy) else {
        return print_json(
            &json!({ "found": false, "epsilon": a.epsilon, "n": a.n, "m_max": a.m_max }),
        );
    };
    let by_m = (0..=a.m_max)
        .map(|m| effective_epsilon(found.p, found.rho, a.n, m))
        .collect::<Result<Vec<_>>>()?;
    let mut value = json!({
        "found": true,
        "p": found.p,
        "q": 1.0 - found.p,
        "rho": found.rho,
        "epsilon": a.epsilon,
        "n": a.n,
        "m_max": a.m_max,
        "effective_epsilon_by_m": by_m,
        "rr_p": rr_keep_probability(a.epsilon),
        "delta_p": cfg.delta_p(),
        "delta_rho": cfg.delta_rho(),
        "strategy": strategy,
        "feasibility_slack": FEASIBILITY_SLACK,
    });
    if let Some(n1) = a.n1 {
        value["n1"] = json!(n1);
        value["var_closed"] = json!(jrr_variance(a.n, n1, found.p, found.rho)?);
        value["rr_var_closed"] = json!(rr_variance(a.n, rr_keep_probability(a.epsilon)));
    }
    print_json(&value)
}

fn perturb_cmd(a: PerturbArgs) -> Result<()> {
    let data = a.data.require()?;
    let n = data.values.len();
    let params = match a.mechanism {
        MechanismArg::Rr => PerturbParams::rr_for_epsilon(a.epsilon)?,
        MechanismArg::Jrr => searched_params(a.epsilon, a.m_max, n, &a.search)?,
        MechanismArg::Both => return Err(usage("perturb takes --mechanism rr or jrr")),
    };
    let mode = if params.rho() <= 0.0 {
        PerturbMode::Sampler
    } else {
        PerturbMode::DirectJoint
    };
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let values: Vec<usize> = data.values.iter().map(|&v| usize::from(v)).collect();
    let cohort = Cohort::with_random_pairing(values, &mut rng)?;
    let reports = perturb_cohort(&cohort, &params, mode, &mut rng)?;
    let bits: Vec<bool> = reports.iter().map(|&r| r == 1).collect();
    write_bit_lines(&bits, output(a.out.as_deref())?)?;
    eprintln!("p = {}, rho = {}, n = {n}", params.p(), params.rho());
    Ok(())
}

fn estimate_cmd(a: EstimateArgs) -> Result<()> {
    let data = a.data.require()?;
    let n = data.values.len();
    let params = match (a.p, a.epsilon, a.mechanism) {
        (Some(p), _, _) => PerturbParams::binary(p, a.rho)?,
        (None, Some(eps), MechanismArg::Rr) => PerturbParams::rr_for_epsilon(eps)?,
        (None, Some(eps), MechanismArg::Jrr) => searched_params(eps, a.m_max, n, &a.search)?,
        (None, Some(_), MechanismArg::Both) => {
            return Err(usage("estimate takes --mechanism rr or jrr"))
        }
        (None, None, _) => return Err(usage("give --p or --epsilon")),
    };
    let reports: Vec<usize> = data.values.iter().map(|&v| usize::from(v)).collect();
    let result = EstimationResult::from_reports(&reports, &params)?;
    print_json(&json!({
        "p": params.p(),
        "q": params.q(),
        "rho": params.rho(),
        "n": result.n,
        "i_v": result.i_v,
        "n_hat": result.n_hat,
        "n_hat_clipped": result.clipped(),
        "var_closed": result.var_closed,
    }))
}

fn parse_ratio_range(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<f64> = spec
        .split(':')
        .map(|s| s.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| usage("--sweep-ratio expects start:stop:step"))?;
    let [start, stop, step] = parts[..] else {
        return Err(usage("--sweep-ratio expects start:stop:step"));
    };
    if !(step > 0.0) || stop < start {
        return Err(usage("--sweep-ratio needs step > 0 and stop >= start"));
    }
    let count = ((stop - start) / step + 1e-9).floor() as usize;
    Ok((0..=count)
        .map(|i| ((start + i as f64 * step) * 1e12).round() / 1e12)
        .collect())
}

fn simulate_cmd(a: SimulateArgs) -> Result<()> {
    let sweep = if let Some(v) = a.sweep_epsilon {
        Some(Sweep::Epsilon(v))
    } else if let Some(v) = a.sweep_n {
        Some(Sweep::N(v))
    } else if let Some(s) = &a.sweep_ratio {
        Some(Sweep::Ratio(parse_ratio_range(s)?))
    } else {
        a.sweep_m.map(Sweep::M)
    };
    let (search, strategy) = a.search.config()?;
    let cfg = ExperimentConfig {
        mechanism: match a.mechanism {
            MechanismArg::Rr => MechanismChoice::Rr,
            MechanismArg::Jrr => MechanismChoice::Jrr,
            MechanismArg::Both => MechanismChoice::Both,
        },
        n: a.n,
        share: match (a.n1, a.ratio) {
            (Some(n1), _) => Share::Count(n1),
            (None, Some(r)) => Share::Ratio(r),
            (None, None) => Share::Ratio(0.1),
        },
        dataset: a.data.load()?,
        epsilon: a.epsilon,
        m_max: a.m_max,
        trials: a.trials,
        seed: a.seed,
        sweep,
        search,
        strategy,
        baseline: match a.rr_baseline {
            BaselineArg::BudgetOptimal => RrBaseline::BudgetOptimal,
            BaselineArg::MatchedP => RrBaseline::MatchedP,
        },
    };
    let mut csv_out = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(output(a.out.as_deref())?);
    csv_out.write_record(CSV_HEADER.split(','))?;
    let result = run_experiment_streaming(&cfg, |rows| {
        for row in rows {
            csv_out.serialize(row)?;
        }
        csv_out.flush()?;
        Ok(())
    })?;
    for p in result.points.iter().filter(|p| p.error.is_some()) {
        eprintln!(
            "warning: point {} ({}) failed: {}",
            p.index,
            p.mechanism,
            p.error.as_deref().unwrap_or_default()
        );
    }
    let sidecar = a
        .sidecar
        .or_else(|| a.out.as_ref().map(|o| o.with_extension("json")));
    if let Some(path) = sidecar {
        write_sidecar(&cfg, &result, BufWriter::new(File::create(path)?))?;
    }
    Ok(())
}

fn oracle_cmd(a: OracleArgs) -> Result<()> {
    let values: Vec<bool> = match &a.values {
        Some(v) => v.iter().map(|&b| b != 0).collect(),
        None => {
            if a.n1 > a.n {
                return Err(usage("--n1 exceeds --n"));
            }
            (0..a.n).map(|i| i < a.n1).collect()
        }
    };
    let n = values.len();
    if n > MAX_REPORT_N {
        return Err(Error::TooLarge {
            n,
            cap: MAX_REPORT_N,
        });
    }
    let params = PerturbParams::binary(a.p, a.rho)?;
    let dist = enumerate_reports(&values, &params, PairingSet::All)?;
    let moments = exact_estimator_moments(&dist, params.p(), params.q())?;
    let n1 = values.iter().filter(|&&v| v).count();
    let closed = jrr_variance(n, n1, params.p(), params.rho())?;
    let support: Vec<_> = dist
        .support()
        .into_iter()
        .map(|(r, pr)| {
            let bits: String = r.iter().map(|&b| if b { '1' } else { '0' }).collect();
            json!({ "reports": bits, "probability": pr })
        })
        .collect();
    let mut value = json!({
        "provenance": dist.provenance,
        "total_probability": dist.total(),
        "support": support,
        "estimator": { "mean": moments.mean, "variance": moments.variance },
        "n1": n1,
        "closed_form_variance": closed,
        "variance_abs_diff": (moments.variance - closed).abs(),
    });
    if let Some(colluders) = &a.colluders {
        let r = exact_privacy_ratio(n, &params, colluders, a.target)?;
        let bound = privacy_ratio_bound(params.p(), params.rho(), n, colluders.len())?;
        value["privacy"] = json!({
            "colluders": colluders,
            "target": a.target,
            "worst_case": r,
            "bound": bound,
            "within_bound": r.ratio <= bound + 1e-10,
        });
    }
    print_json(&value)
}

fn summarize_cmd(a: SummarizeArgs) -> Result<()> {
    let data = a.data.require()?;
    let mut summary = data.summary;
    if let Some(name) = a.name {
        summary.name = name;
    }
    print_json(&serde_json::to_value(summary)?)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::SearchParams(a) => search_params_cmd(a),
        Command::Perturb(a) => perturb_cmd(a),
        Command::Estimate(a) => estimate_cmd(a),
        Command::Simulate(a) => simulate_cmd(a),
        Command::Oracle(a) => oracle_cmd(a),
        Command::Datasets {
            command: DatasetsCommand::Summarize(a),
        } => summarize_cmd(a),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
