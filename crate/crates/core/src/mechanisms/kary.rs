use rand::Rng;
use serde::Serialize;

use super::PerturbParams;
use crate::error::{invalid, Result};

/// Truthfulness-pair probabilities of k-ary JRR, each summed over the
/// `k - 1` possible untruthful reports.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KaryTruthTable {
    pub both: f64,
    pub first_only: f64,
    pub second_only: f64,
    pub neither: f64,
}

impl KaryTruthTable {
    pub fn new(params: &PerturbParams) -> Self {
        let [e11, e10, e00] = params.outcome_probabilities();
        let others = (params.k() - 1) as f64;
        KaryTruthTable {
            both: e11,
            first_only: others * e10,
            second_only: others * e10,
            neither: others * others * e00,
        }
    }

    fn truthfulness_from_uniform(&self, u: f64) -> (bool, bool) {
        if u < self.both {
            (true, true)
        } else if u < self.both + self.first_only {
            (true, false)
        } else if u < self.both + self.first_only + self.second_only {
            (false, true)
        } else {
            (false, false)
        }
    }
}

/// Probability that a pair holding `(v1, v2)` reports `(r1, r2)`.
pub fn kjrr_outcome_probability(
    params: &PerturbParams,
    (v1, v2): (usize, usize),
    (r1, r2): (usize, usize),
) -> f64 {
    let [e11, e10, e00] = params.outcome_probabilities();
    match (r1 == v1, r2 == v2) {
        (true, true) => e11,
        (true, false) | (false, true) => e10,
        (false, false) => e00,
    }
}

fn other_value<R: Rng + ?Sized>(v: usize, k: usize, rng: &mut R) -> usize {
    let w = rng.gen_range(0..k - 1);
    if w >= v {
        w + 1
    } else {
        w
    }
}

/// Jointly perturbs two values in `0..k`. An untruthful report is uniform
/// over the other `k - 1` values.
pub fn kjrr_perturb_pair<R: Rng + ?Sized>(
    v1: usize,
    v2: usize,
    params: &PerturbParams,
    rng: &mut R,
) -> Result<(usize, usize)> {
    let k = params.k();
    if v1 >= k || v2 >= k {
        return Err(invalid(format!(
            "values ({v1}, {v2}) outside domain 0..{k}"
        )));
    }
    let table = KaryTruthTable::new(params);
    let (t1, t2) = table.truthfulness_from_uniform(rng.gen::<f64>());
    let r1 = if t1 { v1 } else { other_value(v1, k, rng) };
    let r2 = if t2 { v2 } else { other_value(v2, k, rng) };
    Ok((r1, r2))
}
