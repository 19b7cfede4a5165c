//! JRR applied bit-wise to optimized unary encoding (OUE).
//!
//! OUE keeps a 1-bit with probability `p` and turns a 0-bit into 1 with
//! probability `q`, so the "keep" probability depends on the bit. Two paired
//! contributors draw the keep indicators of each bit position from a 2x2
//! table with those marginals and a shared correlation `rho`. Positions are
//! independent of each other.

use rand::Rng;
use serde::Serialize;

use crate::error::{invalid, Result};
use crate::PROB_TOL;

/// Bivariate Bernoulli with marginals `a`, `b` and Pearson correlation `rho`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BitPairTable {
    pub p11: f64,
    pub p10: f64,
    pub p01: f64,
    pub p00: f64,
}

impl BitPairTable {
    pub fn new(a: f64, b: f64, rho: f64) -> Result<Self> {
        let cov = rho * (a * (1.0 - a) * b * (1.0 - b)).sqrt();
        let t = BitPairTable {
            p11: a * b + cov,
            p10: a * (1.0 - b) - cov,
            p01: (1.0 - a) * b - cov,
            p00: (1.0 - a) * (1.0 - b) + cov,
        };
        if [t.p11, t.p10, t.p01, t.p00].iter().any(|&e| e < -PROB_TOL) {
            return Err(invalid(format!(
                "no 2x2 table with marginals ({a}, {b}) and correlation {rho}"
            )));
        }
        Ok(t)
    }

    #[inline]
    fn pick(&self, u: f64) -> (bool, bool) {
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
}

/// OUE parameters plus the shared pair correlation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OueParams {
    k: usize,
    /// `Pr[B'[j] = 1 | B[j] = 1]`.
    p: f64,
    /// `Pr[B'[j] = 1 | B[j] = 0]`.
    q: f64,
    rho: f64,
    /// Indexed by `(first bit, second bit)` as `[11, 10, 01, 00]`.
    tables: [BitPairTable; 4],
}

impl OueParams {
    pub fn new(k: usize, p: f64, q: f64, rho: f64) -> Result<Self> {
        if k < 2 {
            return Err(invalid(format!(
                "OUE needs a domain of at least 2 values, got {k}"
            )));
        }
        if !(0.0..=1.0).contains(&q) || !(0.0..=1.0).contains(&p) || p <= q {
            return Err(invalid(format!(
                "OUE needs 0 <= q < p <= 1, got p = {p}, q = {q}"
            )));
        }
        let keep_one = p;
        let keep_zero = 1.0 - q;
        let tables = [
            BitPairTable::new(keep_one, keep_one, rho)?,
            BitPairTable::new(keep_one, keep_zero, rho)?,
            BitPairTable::new(keep_zero, keep_one, rho)?,
            BitPairTable::new(keep_zero, keep_zero, rho)?,
        ];
        Ok(OueParams {
            k,
            p,
            q,
            rho,
            tables,
        })
    }

    /// Standard OUE: `p = 1/2`, `q = 1 / (e^eps + 1)`.
    pub fn optimized(k: usize, epsilon: f64, rho: f64) -> Result<Self> {
        if !(epsilon.is_finite() && epsilon > 0.0) {
            return Err(invalid(format!(
                "epsilon must be positive and finite, got {epsilon}"
            )));
        }
        Self::new(k, 0.5, 1.0 / (epsilon.exp() + 1.0), rho)
    }

    pub fn k(&self) -> usize {
        self.k
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

    fn table(&self, b1: bool, b2: bool) -> &BitPairTable {
        match (b1, b2) {
            (true, true) => &self.tables[0],
            (true, false) => &self.tables[1],
            (false, true) => &self.tables[2],
            (false, false) => &self.tables[3],
        }
    }
}

/// One-hot encoding of `x` in a domain of size `k`.
pub fn oue_encode(x: usize, k: usize) -> Result<Vec<bool>> {
    if k < 2 || x >= k {
        return Err(invalid(format!(
            "cannot one-hot encode {x} in a domain of size {k}"
        )));
    }
    Ok((0..k).map(|j| j == x).collect())
}

/// Perturbs the one-hot encodings of `x1` and `x2` with bit-wise JRR.
pub fn oue_jrr_perturb_pair<R: Rng + ?Sized>(
    x1: usize,
    x2: usize,
    params: &OueParams,
    rng: &mut R,
) -> Result<(Vec<bool>, Vec<bool>)> {
    let b1 = oue_encode(x1, params.k)?;
    let b2 = oue_encode(x2, params.k)?;
    let mut out1 = Vec::with_capacity(params.k);
    let mut out2 = Vec::with_capacity(params.k);
    for (&bit1, &bit2) in b1.iter().zip(&b2) {
        let (keep1, keep2) = params.table(bit1, bit2).pick(rng.gen::<f64>());
        out1.push(bit1 == keep1);
        out2.push(bit2 == keep2);
    }
    Ok((out1, out2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn degenerate_domain_rejected() {
        assert!(OueParams::optimized(1, 1.0, 0.0).is_err());
        assert!(oue_encode(0, 1).is_err());
        assert!(oue_encode(3, 3).is_err());
    }

    #[test]
    fn shared_table_reduces_to_binary_jrr() {
        use crate::mechanisms::{JointTable, PerturbParams};
        let t = BitPairTable::new(0.8, 0.8, -0.1875).unwrap();
        let j = JointTable::new(&PerturbParams::binary(0.8, -0.1875).unwrap()).unwrap();
        for (a, b) in [t.p11, t.p10, t.p01, t.p00].iter().zip(j.entries()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn too_negative_rho_rejected() {
        // Keep-probabilities 0.5 and 1 - q force the feasible rho range.
        assert!(OueParams::optimized(4, 1.0, -0.99).is_err());
        assert!(OueParams::optimized(4, 1.0, -0.2).is_ok());
    }

    #[test]
    fn independent_bits_follow_oue_marginals() {
        let params = OueParams::optimized(3, 1.0, 0.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let draws = 200_000;
        let mut ones = [0usize; 3];
        for _ in 0..draws {
            let (b1, _) = oue_jrr_perturb_pair(2, 2, &params, &mut rng).unwrap();
            for (j, bit) in b1.iter().enumerate() {
                ones[j] += usize::from(*bit);
            }
        }
        let f = |c: usize| c as f64 / draws as f64;
        assert!((f(ones[2]) - 0.5).abs() < 0.005);
        assert!((f(ones[0]) - params.q()).abs() < 0.005);
        assert!((f(ones[1]) - params.q()).abs() < 0.005);
    }

    #[test]
    fn one_bit_keep_rate_with_correlation() {
        let params = OueParams::optimized(3, 1.0, -0.3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let draws = 1_000_000;
        let mut kept = 0usize;
        let mut both = 0usize;
        for _ in 0..draws {
            let (b1, b2) = oue_jrr_perturb_pair(1, 1, &params, &mut rng).unwrap();
            kept += usize::from(b1[1]);
            both += usize::from(b1[1] && b2[1]);
        }
        let f = |c: usize| c as f64 / draws as f64;
        assert!((f(kept) - params.p()).abs() < 0.005);
        // 0.25 + rho * 0.25
        assert!((f(both) - 0.175).abs() < 0.005);
    }
}
