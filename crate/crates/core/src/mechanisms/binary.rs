use rand::Rng;
use serde::Serialize;

use super::{apply_truth, PerturbParams};
use crate::error::{invalid, Error, Result};
use crate::PROB_TOL;

/// Joint distribution of the truthfulness indicators `(T1, T2)` of one pair.
///
/// `p10` is `Pr[T1 = 1, T2 = 0]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct JointTable {
    pub p11: f64,
    pub p10: f64,
    pub p01: f64,
    pub p00: f64,
}

impl JointTable {
    /// `{p^2 + rho pq, (1 - rho) pq, (1 - rho) pq, q^2 + rho pq}`.
    pub fn new(params: &PerturbParams) -> Result<Self> {
        if params.k() != 2 {
            return Err(invalid(format!(
                "the 2x2 joint table is binary only; got k = {}",
                params.k()
            )));
        }
        let (p, q, rho) = (params.p(), params.q(), params.rho());
        let off = (1.0 - rho) * p * q;
        let table = JointTable {
            p11: p * p + rho * p * q,
            p10: off,
            p01: off,
            p00: q * q + rho * p * q,
        };
        if table.entries().iter().any(|&e| e < -PROB_TOL) {
            return Err(Error::InfeasibleRho { p, rho, k: 2 });
        }
        Ok(table)
    }

    pub fn entries(&self) -> [f64; 4] {
        [self.p11, self.p10, self.p01, self.p00]
    }

    /// `Pr[T1 = 1]`.
    pub fn marginal_first(&self) -> f64 {
        self.p11 + self.p10
    }

    /// `Pr[T2 = 1]`.
    pub fn marginal_second(&self) -> f64 {
        self.p11 + self.p01
    }

    /// Pearson correlation of `(T1, T2)`; `None` when a marginal is degenerate.
    pub fn correlation(&self) -> Option<f64> {
        let a = self.marginal_first();
        let b = self.marginal_second();
        let denom = (a * (1.0 - a) * b * (1.0 - b)).sqrt();
        (denom > 0.0).then(|| (self.p11 - a * b) / denom)
    }

    /// Maps one uniform draw in `[0, 1)` to a truthfulness pair.
    #[inline]
    pub fn truthfulness_from_uniform(&self, u: f64) -> (bool, bool) {
        if u < self.p11 {
            (true, true)
        } else if u < self.p11 + self.p10 {
            (true, false)
        } else if u < self.p11 + self.p10 + self.p01 {
            (false, true)
        } else {
            (false, false)
        }
    }

    pub fn sample_truthfulness<R: Rng + ?Sized>(&self, rng: &mut R) -> (bool, bool) {
        self.truthfulness_from_uniform(rng.gen::<f64>())
    }
}

/// Jointly perturbs the bits of one pair.
pub fn jrr_perturb_pair<R: Rng + ?Sized>(
    x1: bool,
    x2: bool,
    table: &JointTable,
    rng: &mut R,
) -> (bool, bool) {
    let (t1, t2) = table.sample_truthfulness(rng);
    (apply_truth(x1, t1), apply_truth(x2, t2))
}
