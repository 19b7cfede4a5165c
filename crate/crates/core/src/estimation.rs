//! Count estimators, closed-form variances and the evaluation metrics.

use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::grouping::Pairing;
use crate::mechanisms::PerturbParams;

/// Unbiased count estimate `(i_v - n q) / (p - q)`. Not clipped to `[0, n]`.
pub fn estimate(i_v: usize, n: usize, p: f64, q: f64) -> Result<f64> {
    if !(p > q) {
        return Err(Error::DegenerateEstimator { p, q });
    }
    Ok((i_v as f64 - n as f64 * q) / (p - q))
}

/// Variance of the RR count estimate: `n p q / (p - q)^2`.
pub fn rr_variance(n: usize, p: f64) -> f64 {
    let q = 1.0 - p;
    n as f64 * p * q / ((p - q) * (p - q))
}

/// Variance of the JRR count estimate for `n1` ones among `n`, averaged over
/// uniformly random pairings:
/// `pq/(p-q)^2 * (n + rho((2 n1 - n)^2 - n)/(n - 1))`.
pub fn jrr_variance(n: usize, n1: usize, p: f64, rho: f64) -> Result<f64> {
    if n < 2 {
        return Err(invalid(format!("JRR variance needs n >= 2, got {n}")));
    }
    if n1 > n {
        return Err(invalid(format!("n1 = {n1} exceeds n = {n}")));
    }
    let q = 1.0 - p;
    if !(p > q) {
        return Err(Error::DegenerateEstimator { p, q });
    }
    let nf = n as f64;
    let d = 2.0 * n1 as f64 - nf;
    Ok(p * q / ((p - q) * (p - q)) * (nf + rho * (d * d - nf) / (nf - 1.0)))
}

/// Whether `(2 n1 - n)^2 < n`, i.e. the ratio `n1 / n` sits in the band
/// around one half where negative correlation increases the variance.
pub fn in_underperforming_band(n: usize, n1: usize) -> bool {
    let d = 2 * n1 as i128 - n as i128;
    d * d < n as i128
}

/// Pair counts by the true values they hold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct GroupTypeCounts {
    /// Pairs holding two ones.
    pub ones: usize,
    /// Pairs holding one of each.
    pub mixed: usize,
    /// Pairs holding two zeros.
    pub zeros: usize,
    /// 1 when `n` is odd.
    pub unpaired: usize,
}

impl GroupTypeCounts {
    pub fn from_pairing(values: &[bool], pairing: &Pairing) -> Result<Self> {
        if values.len() != pairing.n() {
            return Err(invalid("value count does not match pairing size"));
        }
        let mut out = GroupTypeCounts::default();
        for &(a, b) in pairing.pairs() {
            match (values[a], values[b]) {
                (true, true) => out.ones += 1,
                (false, false) => out.zeros += 1,
                _ => out.mixed += 1,
            }
        }
        out.unpaired = usize::from(pairing.leftover().is_some());
        Ok(out)
    }
}

/// Variance of the reported one-count contributed by one pair of each type.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GroupTypeVariances {
    pub ones: f64,
    pub mixed: f64,
    pub zeros: f64,
}

impl GroupTypeVariances {
    pub fn new(p: f64, rho: f64) -> Self {
        let q = 1.0 - p;
        GroupTypeVariances {
            ones: 2.0 * p * q * (1.0 + rho),
            mixed: 2.0 * p * q * (1.0 - rho),
            zeros: 2.0 * p * q * (1.0 + rho),
        }
    }
}

/// `Var[I_1]` for one fixed pairing, as a sum over pair types.
pub fn conditional_count_variance(counts: &GroupTypeCounts, p: f64, rho: f64) -> f64 {
    let v = GroupTypeVariances::new(p, rho);
    counts.ones as f64 * v.ones
        + counts.mixed as f64 * v.mixed
        + counts.zeros as f64 * v.zeros
        + counts.unpaired as f64 * p * (1.0 - p)
}

/// Estimator MSE given a fixed pairing: `Var[I_1 | pairing] / (p - q)^2`.
pub fn conditional_estimator_variance(
    values: &[bool],
    pairing: &Pairing,
    params: &PerturbParams,
) -> Result<f64> {
    if params.k() != 2 {
        return Err(invalid("conditional variance is defined for binary JRR"));
    }
    let counts = GroupTypeCounts::from_pairing(values, pairing)?;
    let d = params.p() - params.q();
    Ok(conditional_count_variance(&counts, params.p(), params.rho()) / (d * d))
}

/// Estimated counts for every value of the domain from a bare report sequence.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimationResult {
    pub n: usize,
    pub i_v: Vec<usize>,
    pub n_hat: Vec<f64>,
    /// Closed-form variance with `n1` replaced by the clipped estimate.
    /// Binary domains only; the same value applies to both counts.
    pub var_closed: Option<f64>,
}

impl EstimationResult {
    pub fn from_reports(reports: &[usize], params: &PerturbParams) -> Result<Self> {
        let n = reports.len();
        let k = params.k();
        let mut i_v = vec![0usize; k];
        for &r in reports {
            if r >= k {
                return Err(invalid(format!("report {r} outside domain 0..{k}")));
            }
            i_v[r] += 1;
        }
        let n_hat = i_v
            .iter()
            .map(|&c| estimate(c, n, params.p(), params.q()))
            .collect::<Result<Vec<_>>>()?;
        let var_closed = if k == 2 && n >= 2 {
            let n1 = n_hat[1].round().clamp(0.0, n as f64) as usize;
            Some(jrr_variance(n, n1, params.p(), params.rho())?)
        } else {
            None
        };
        Ok(EstimationResult {
            n,
            i_v,
            n_hat,
            var_closed,
        })
    }

    /// Estimates clipped to `[0, n]`, for display only.
    pub fn clipped(&self) -> Vec<f64> {
        self.n_hat
            .iter()
            .map(|v| v.clamp(0.0, self.n as f64))
            .collect()
    }
}

fn check_domain(estimates: &[f64], truths: &[usize]) -> Result<()> {
    if estimates.is_empty() {
        return Err(Error::UndefinedMetric("empty value domain"));
    }
    if estimates.len() != truths.len() {
        return Err(invalid("estimates and truths cover different domains"));
    }
    Ok(())
}

/// Mean over the domain of the squared count error.
pub fn mse(estimates: &[f64], truths: &[usize]) -> Result<f64> {
    check_domain(estimates, truths)?;
    let total: f64 = estimates
        .iter()
        .zip(truths)
        .map(|(e, &t)| (e - t as f64).powi(2))
        .sum();
    Ok(total / estimates.len() as f64)
}

/// Mean relative error over values with a nonzero true count.
pub fn are(estimates: &[f64], truths: &[usize]) -> Result<f64> {
    check_domain(estimates, truths)?;
    let (sum, used) = estimates
        .iter()
        .zip(truths)
        .filter(|(_, &t)| t > 0)
        .fold((0.0, 0usize), |(s, c), (e, &t)| {
            (s + (e - t as f64).abs() / t as f64, c + 1)
        });
    if used == 0 {
        return Err(Error::UndefinedMetric("every true count is zero"));
    }
    Ok(sum / used as f64)
}

/// `(mse_jrr - mse_rr) / mse_rr`.
pub fn relative_increase(mse_jrr: f64, mse_rr: f64) -> Result<f64> {
    if !(mse_rr > 0.0) {
        return Err(Error::UndefinedMetric("baseline MSE must be positive"));
    }
    Ok((mse_jrr - mse_rr) / mse_rr)
}

/// Width of the contiguous ratio interval around one half where JRR's MSE
/// exceeds RR's.
///
/// `ratios` must be strictly increasing. The interval edges are placed by
/// linear interpolation of `mse_jrr - mse_rr` between the last grid point
/// inside and the first point outside; an interval running into the end of
/// the grid stops there. Returns 0 when no grid point near one half
/// underperforms.
pub fn underperforming_range(ratios: &[f64], mse_jrr: &[f64], mse_rr: &[f64]) -> Result<f64> {
    if ratios.len() != mse_jrr.len() || ratios.len() != mse_rr.len() {
        return Err(invalid("ratio grid and MSE curves differ in length"));
    }
    if ratios.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(invalid("ratio grid must be strictly increasing"));
    }
    let diff: Vec<f64> = mse_jrr.iter().zip(mse_rr).map(|(j, r)| j - r).collect();
    let worse = |i: usize| diff[i] > 0.0;

    // Start from the underperforming grid point closest to one half.
    let Some(centre) = (0..ratios.len())
        .filter(|&i| worse(i))
        .min_by(|&a, &b| (ratios[a] - 0.5).abs().total_cmp(&(ratios[b] - 0.5).abs()))
    else {
        return Ok(0.0);
    };
    let mut lo = centre;
    while lo > 0 && worse(lo - 1) {
        lo -= 1;
    }
    let mut hi = centre;
    while hi + 1 < ratios.len() && worse(hi + 1) {
        hi += 1;
    }
    let crossing = |inside: usize, outside: usize| {
        let (di, dout) = (diff[inside], diff[outside]);
        let t = di / (di - dout);
        ratios[inside] + t * (ratios[outside] - ratios[inside])
    };
    let left = if lo > 0 {
        crossing(lo, lo - 1)
    } else {
        ratios[0]
    };
    let right = if hi + 1 < ratios.len() {
        crossing(hi, hi + 1)
    } else {
        ratios[hi]
    };
    Ok(right - left)
}

/// Linear-interpolation percentile of already sorted data, `q` in `[0, 1]`.
pub fn percentile_sorted(sorted: &[f64], q: f64) -> Option<f64> {
    if sorted.is_empty() || !(0.0..=1.0).contains(&q) {
        return None;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    Some(sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo]))
}

/// One CSV record of the experiment output. Metric cells are `None` when
/// the point failed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsRow {
    pub mechanism: String,
    pub n: usize,
    pub n1: usize,
    pub epsilon: f64,
    pub m_max: usize,
    pub p: Option<f64>,
    pub rho: Option<f64>,
    pub trials: usize,
    pub seed: u64,
    pub mse: Option<f64>,
    pub are: Option<f64>,
    pub var_closed: Option<f64>,
    pub are_p10: Option<f64>,
    pub are_p50: Option<f64>,
    pub are_p90: Option<f64>,
    pub ri: Option<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn estimate_examples() {
        assert!(close(estimate(2, 2, 0.8, 0.2).unwrap(), 2.6667, 1e-4));
        assert_eq!(estimate(200, 1000, 0.8, 0.2).unwrap(), 0.0);
        assert!(close(
            estimate(750, 1000, 0.75, 0.25).unwrap(),
            1000.0,
            1e-9
        ));
        assert!(estimate(1, 2, 0.5, 0.5).is_err());
    }

    #[test]
    fn rr_variance_examples() {
        assert!(close(rr_variance(2, 0.8), 0.8889, 1e-4));
        assert_eq!(rr_variance(0, 0.8), 0.0);
        let p = 1.0 / (1.0 + (-0.1f64).exp());
        let v = rr_variance(10_000, p);
        // p - q = tanh(eps/2) and pq = (1 - tanh^2)/4.
        let t = (0.05f64).tanh();
        let expected = 10_000.0 * (1.0 - t * t) / (4.0 * t * t);
        assert!((v / expected - 1.0).abs() < 1e-12, "{v}");
        assert!((v / 9.9917e5 - 1.0).abs() < 1e-4, "{v}");
    }

    #[test]
    fn jrr_variance_examples() {
        assert!(close(
            jrr_variance(2, 2, 0.8, -0.1875).unwrap(),
            0.7222,
            1e-4
        ));
        assert!(close(
            jrr_variance(100, 50, 0.8, -0.2).unwrap(),
            44.534,
            1e-3
        ));
        assert!(close(
            jrr_variance(500, 37, 0.7, 0.0).unwrap(),
            rr_variance(500, 0.7),
            1e-9
        ));
        assert!(jrr_variance(1, 1, 0.8, 0.0).is_err());
        assert!(jrr_variance(4, 5, 0.8, 0.0).is_err());
    }

    #[test]
    fn band_matches_ratio_interval_exhaustively() {
        for n in 1..=10_000usize {
            let half_width = 1.0 / (2.0 * (n as f64).sqrt());
            for n1 in 0..=n {
                let r = n1 as f64 / n as f64;
                let in_interval = r > 0.5 - half_width && r < 0.5 + half_width;
                // Float comparison at the exact boundary is unreliable; only
                // check points clearly away from it.
                let margin = (r - 0.5).abs() - half_width;
                if margin.abs() > 1e-12 {
                    assert_eq!(in_underperforming_band(n, n1), in_interval, "n={n} n1={n1}");
                }
            }
        }
    }

    #[test]
    fn group_type_variance_sums_to_pairing_formula() {
        let values = [true, true, true, false, false, true, false, false];
        let pairing = Pairing::new(8, vec![(0, 1), (2, 3), (4, 5), (6, 7)], None).unwrap();
        let counts = GroupTypeCounts::from_pairing(&values, &pairing).unwrap();
        assert_eq!((counts.ones, counts.mixed, counts.zeros), (1, 2, 1));
        let (p, rho) = (0.75, -0.2);
        let q = 1.0 - p;
        let (n, n1, m1) = (8.0, 4.0, 1.0);
        let expected = n * p * q + (8.0 * m1 + n - 4.0 * n1) * rho * p * q;
        assert!(close(
            conditional_count_variance(&counts, p, rho),
            expected,
            1e-12
        ));
    }

    #[test]
    fn metric_examples() {
        assert_eq!(mse(&[110.0, 890.0], &[100, 900]).unwrap(), 100.0);
        assert_eq!(mse(&[3.0, 4.0], &[3, 4]).unwrap(), 0.0);
        assert!(close(
            are(&[110.0, 890.0], &[100, 900]).unwrap(),
            0.055556,
            1e-6
        ));
        assert_eq!(are(&[1.0], &[1]).unwrap(), 0.0);
        assert!(close(are(&[5.0, 995.0], &[0, 1000]).unwrap(), 0.005, 1e-12));
        assert!(are(&[1.0, 2.0], &[0, 0]).is_err());
        assert!(mse(&[], &[]).is_err());
        assert_eq!(relative_increase(2.0, 2.0).unwrap(), 0.0);
        assert!(close(relative_increase(1.0001, 1.0).unwrap(), 1e-4, 1e-12));
        assert!(relative_increase(1.0, 0.0).is_err());
    }

    #[test]
    fn estimation_result_identities() {
        let params = PerturbParams::binary(0.8, -0.1875).unwrap();
        let reports = [1, 0, 1, 1, 0, 1, 1];
        let r = EstimationResult::from_reports(&reports, &params).unwrap();
        assert_eq!(r.i_v, vec![2, 5]);
        assert!(close(r.n_hat[0] + r.n_hat[1], 7.0, 1e-9));
        assert!(r.var_closed.unwrap() > 0.0);
        assert!(EstimationResult::from_reports(&[2], &params).is_err());
    }

    #[test]
    fn underperforming_range_cases() {
        let ratios = [0.0, 0.25, 0.5, 0.75, 1.0];
        assert_eq!(
            underperforming_range(&ratios, &[1.0; 5], &[2.0; 5]).unwrap(),
            0.0
        );
        // Difference -1, 1, 1, 1, -1: crossings at 0.125 and 0.875.
        let jrr = [1.0, 3.0, 3.0, 3.0, 1.0];
        let rr = [2.0; 5];
        assert!(close(
            underperforming_range(&ratios, &jrr, &rr).unwrap(),
            0.75,
            1e-12
        ));
        assert!(underperforming_range(&[0.5, 0.5], &[1.0, 1.0], &[0.0, 0.0]).is_err());
    }

    #[test]
    fn closed_form_range_tracks_inverse_sqrt_n() {
        let n = 10_000usize;
        let ratios: Vec<f64> = (0..=200).map(|i| i as f64 / 200.0).collect();
        let (p, rho) = (0.52, -0.5);
        let jrr: Vec<f64> = ratios
            .iter()
            .map(|r| jrr_variance(n, (r * n as f64).round() as usize, p, rho).unwrap())
            .collect();
        let rr = vec![rr_variance(n, p); ratios.len()];
        let r = underperforming_range(&ratios, &jrr, &rr).unwrap();
        assert!((r - 0.01).abs() <= 0.005, "{r}");
    }

    #[test]
    fn percentile_interpolates() {
        let data = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(percentile_sorted(&data, 0.5), Some(3.0));
        assert_eq!(percentile_sorted(&data, 0.1), Some(1.4));
        assert_eq!(percentile_sorted(&[], 0.5), None);
    }

    proptest! {
        #[test]
        fn variance_is_positive(
            n in 2usize..2000,
            frac in 0.0f64..=1.0,
            p in 0.5001f64..=1.0,
            t in 0.0f64..=1.0,
        ) {
            let n1 = (frac * n as f64).round() as usize;
            let rho = (1.0 - 1.0 / p) + t * (1.0 / p);
            let v = jrr_variance(n, n1, p, rho).unwrap();
            prop_assert!(v >= 0.0);
            if p < 1.0 {
                prop_assert!(v > 0.0);
            }
        }

        #[test]
        fn binary_mse_symmetric_under_flip(
            n in 1usize..5000,
            frac in 0.0f64..=1.0,
            err in -500.0f64..500.0,
        ) {
            let n1 = (frac * n as f64).round() as usize;
            let n0 = n - n1;
            let hat1 = n1 as f64 + err;
            let hat0 = n as f64 - hat1;
            let a = mse(&[hat0, hat1], &[n0, n1]).unwrap();
            let b = mse(&[hat1, hat0], &[n1, n0]).unwrap();
            prop_assert!((a - b).abs() <= 1e-9 * a.max(1.0));
            prop_assert!(((hat1 - n1 as f64).powi(2) - a).abs() <= 1e-6 * a.max(1.0));
        }
    }
}
