//! Perturbation mechanisms.
//!
//! Every randomized function takes an explicit `&mut impl Rng`; nothing here
//! touches a global or thread-local generator, so replaying the same generator
//! state replays the same reports.

mod binary;
mod kary;
mod oue;
mod sampler;

pub use binary::{jrr_perturb_pair, JointTable};
pub use kary::{kjrr_outcome_probability, kjrr_perturb_pair, KaryTruthTable};
pub use oue::{oue_encode, oue_jrr_perturb_pair, BitPairTable, OueParams};
pub use sampler::{sampler_decide, CValue, SamplerConfig, Sign};

use rand::Rng;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::PROB_TOL;

/// The `(p, q, rho)` triple of a JRR joint distribution over a domain of size `k`.
///
/// `p` is the probability of reporting the true value, `q` the probability of
/// reporting any one specific other value, so `p + (k - 1) q = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PerturbParams {
    p: f64,
    q: f64,
    rho: f64,
    k: usize,
}

impl PerturbParams {
    /// Binary JRR with `q = 1 - p`.
    pub fn binary(p: f64, rho: f64) -> Result<Self> {
        Self::k_ary(2, p, rho)
    }

    /// Classical randomized response: binary, independent pairs.
    pub fn rr(p: f64) -> Result<Self> {
        Self::binary(p, 0.0)
    }

    /// The RR keep-probability that exactly spends `epsilon`: `e^eps / (1 + e^eps)`.
    pub fn rr_for_epsilon(epsilon: f64) -> Result<Self> {
        if !(epsilon.is_finite() && epsilon > 0.0) {
            return Err(invalid(format!(
                "epsilon must be positive and finite, got {epsilon}"
            )));
        }
        Self::rr(rr_keep_probability(epsilon))
    }

    /// k-ary JRR with `q = (1 - p) / (k - 1)`.
    pub fn k_ary(k: usize, p: f64, rho: f64) -> Result<Self> {
        if k < 2 {
            return Err(invalid(format!(
                "domain size k must be at least 2, got {k}"
            )));
        }
        if !p.is_finite() || !rho.is_finite() {
            return Err(invalid("p and rho must be finite"));
        }
        if p > 1.0 + PROB_TOL {
            return Err(invalid(format!("p must be at most 1, got {p}")));
        }
        let p = p.min(1.0);
        let q = (1.0 - p) / (k - 1) as f64;
        if p <= q {
            return Err(invalid(format!(
                "p must exceed q (p > 1/k); got p = {p}, q = {q}"
            )));
        }
        let params = PerturbParams { p, q, rho, k };
        if k == 2 && (rho > 1.0 + PROB_TOL || rho < 1.0 - 1.0 / p - PROB_TOL) {
            return Err(Error::InfeasibleRho { p, rho, k });
        }
        let [e11, e10, e00] = params.outcome_probabilities();
        if e11 < -PROB_TOL || e10 < -PROB_TOL || e00 < -PROB_TOL {
            return Err(Error::InfeasibleRho { p, rho, k });
        }
        Ok(params)
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Probability of one specific joint report `(v1', v2')` in each of the
    /// three cases: both truthful, exactly one truthful, neither truthful.
    pub(crate) fn outcome_probabilities(&self) -> [f64; 3] {
        let (p, q, rho) = (self.p, self.q, self.rho);
        let km1 = (self.k - 1) as f64;
        [
            p * p + rho * p * q,
            p * q - rho * p * q / km1,
            q * q + rho * p * q / (km1 * km1),
        ]
    }
}

/// `e^eps / (1 + e^eps)`, written to stay accurate for large `eps`.
pub fn rr_keep_probability(epsilon: f64) -> f64 {
    1.0 / (1.0 + (-epsilon).exp())
}

/// Classical randomized response on one bit.
pub fn rr_perturb<R: Rng + ?Sized>(value: bool, p: f64, rng: &mut R) -> Result<bool> {
    if !(p > 0.5 && p <= 1.0) {
        return Err(invalid(format!("RR needs 0.5 < p <= 1, got {p}")));
    }
    Ok(if rng.gen::<f64>() < p { value } else { !value })
}

/// Report `value` when truthful, its flip otherwise.
#[inline]
pub(crate) fn apply_truth(value: bool, truthful: bool) -> bool {
    value == truthful
}
