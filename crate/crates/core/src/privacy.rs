//! Privacy accounting when up to `M` contributors share their truthfulness
//! indicators with the collector, and the grid search for `(p, rho)`.

use serde::Serialize;

use crate::error::{invalid, Result};
use crate::estimation::jrr_variance;
use crate::mechanisms::rr_keep_probability;
use crate::PROB_TOL;

/// Additive slack on the `e^eps` comparison so grid points sitting exactly
/// on the boundary do not flip with rounding.
pub const FEASIBILITY_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PrivacyBudget {
    epsilon: f64,
    m_max: usize,
    n: usize,
}

impl PrivacyBudget {
    pub fn new(epsilon: f64, m_max: usize, n: usize) -> Result<Self> {
        if !(epsilon.is_finite() && epsilon > 0.0) {
            return Err(invalid(format!(
                "epsilon must be positive and finite, got {epsilon}"
            )));
        }
        if n < 2 {
            return Err(invalid(format!(
                "population must have at least 2 contributors, got {n}"
            )));
        }
        if m_max > n - 1 {
            return Err(invalid(format!(
                "m_max = {m_max} exceeds n - 1 = {}",
                n - 1
            )));
        }
        Ok(PrivacyBudget { epsilon, m_max, n })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn m_max(&self) -> usize {
        self.m_max
    }

    pub fn n(&self) -> usize {
        self.n
    }
}

/// Grid steps for [`search_params`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SearchConfig {
    delta_p: f64,
    delta_rho: f64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            delta_p: 1e-4,
            delta_rho: 1e-4,
        }
    }
}

impl SearchConfig {
    pub fn new(delta_p: f64, delta_rho: f64) -> Result<Self> {
        if !(delta_p > 0.0 && delta_p.is_finite() && delta_rho > 0.0 && delta_rho.is_finite()) {
            return Err(invalid("grid steps must be positive and finite"));
        }
        Ok(SearchConfig { delta_p, delta_rho })
    }

    pub fn delta_p(&self) -> f64 {
        self.delta_p
    }

    pub fn delta_rho(&self) -> f64 {
        self.delta_rho
    }
}

/// Largest and smallest probability that a contributor is truthful once the
/// collector knows its partner's truthfulness.
pub fn p_extremes(p: f64, rho: f64) -> (f64, f64) {
    let q = 1.0 - p;
    let p_max = ((1.0 - rho) * p).max(p + rho * q);
    let p_min = ((1.0 - rho) * q).min(q + rho * p);
    (p_max, p_min)
}

/// The likelihood-ratio bound `(m p_max + (n-m-1) p) / (m p_min + (n-m-1) q)`.
/// Infinite when the denominator is not positive.
pub fn privacy_ratio_bound(p: f64, rho: f64, n: usize, m: usize) -> Result<f64> {
    if n < 2 {
        return Err(invalid(format!("need n >= 2, got {n}")));
    }
    if m > n - 1 {
        return Err(invalid(format!("m = {m} exceeds n - 1 = {}", n - 1)));
    }
    let q = 1.0 - p;
    let (p_max, p_min) = p_extremes(p, rho);
    let (mf, rest) = (m as f64, (n - m - 1) as f64);
    let num = mf * p_max + rest * p;
    let den = mf * p_min + rest * q;
    if den <= 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(num / den)
}

/// Privacy level guaranteed against `m` colluders. Returns `f64::INFINITY`
/// (not an error) when the bound is unbounded, e.g. `p = 1`.
pub fn effective_epsilon(p: f64, rho: f64, n: usize, m: usize) -> Result<f64> {
    Ok(privacy_ratio_bound(p, rho, n, m)?.ln())
}

/// Domain and privacy constraints of the search, with `m = M`.
pub fn is_feasible(p: f64, rho: f64, budget: &PrivacyBudget) -> bool {
    if !(p > 0.5 && p <= 1.0) {
        return false;
    }
    if !(rho >= 1.0 - 1.0 / p - PROB_TOL && rho <= 1.0 + PROB_TOL) {
        return false;
    }
    match privacy_ratio_bound(p, rho, budget.n, budget.m_max) {
        Ok(ratio) => ratio <= budget.epsilon.exp() + FEASIBILITY_SLACK,
        Err(_) => false,
    }
}

/// How [`search_params_with`] picks among grid points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SearchStrategy {
    /// Scan `p` downward and `rho` upward; return the first feasible point.
    FirstFeasible,
    /// For every `p` on the same grid take the smallest feasible `rho`, then
    /// keep the pair whose closed-form variance at `n1` ones is lowest.
    MinVariance { n1: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SearchResult {
    pub p: f64,
    pub rho: f64,
    /// Grid indices: `p = p_start - (p_step + 1) * delta_p`,
    /// `rho = (1 - 1/p) + rho_step * delta_rho`.
    pub p_step: usize,
    pub rho_step: usize,
}

/// Grid points are computed from their index, not by repeated addition, so
/// long scans do not drift.
fn p_grid(epsilon: f64, cfg: &SearchConfig) -> impl Iterator<Item = (usize, f64)> {
    let p0 = rr_keep_probability(epsilon);
    let dp = cfg.delta_p;
    (0usize..)
        .map(move |k| (k, p0 - (k + 1) as f64 * dp))
        .take_while(|&(_, p)| p > 0.5)
}

fn first_feasible_rho(p: f64, budget: &PrivacyBudget, cfg: &SearchConfig) -> Option<(usize, f64)> {
    let rho0 = 1.0 - 1.0 / p;
    (0usize..)
        .map(|j| (j, rho0 + j as f64 * cfg.delta_rho))
        .take_while(|&(_, rho)| rho <= 1.0 + PROB_TOL)
        .find(|&(_, rho)| is_feasible(p, rho, budget))
}

/// The grid search with `p` descending from `e^eps/(1+e^eps) - delta_p` and
/// `rho` ascending from `1 - 1/p`; returns the first feasible pair.
pub fn search_params(budget: &PrivacyBudget, cfg: &SearchConfig) -> Option<SearchResult> {
    search_params_with(budget, cfg, SearchStrategy::FirstFeasible)
}

pub fn search_params_with(
    budget: &PrivacyBudget,
    cfg: &SearchConfig,
    strategy: SearchStrategy,
) -> Option<SearchResult> {
    let mut candidates = p_grid(budget.epsilon, cfg).filter_map(|(k, p)| {
        first_feasible_rho(p, budget, cfg).map(|(j, rho)| SearchResult {
            p,
            rho,
            p_step: k,
            rho_step: j,
        })
    });
    match strategy {
        SearchStrategy::FirstFeasible => candidates.next(),
        SearchStrategy::MinVariance { n1 } => {
            let n1 = n1.min(budget.n);
            let mut best: Option<(f64, SearchResult)> = None;
            for c in candidates {
                let Ok(v) = jrr_variance(budget.n, n1, c.p, c.rho) else {
                    continue;
                };
                // Strict comparison keeps the larger p on ties.
                if best.is_none_or(|(bv, _)| v < bv) {
                    best = Some((v, c));
                }
            }
            best.map(|(_, c)| c)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn extremes_examples() {
        let (hi, lo) = p_extremes(0.75, -0.2);
        assert!((hi - 0.9).abs() < 1e-12 && (lo - 0.10).abs() < 1e-12);
        assert_eq!(p_extremes(0.7, 0.0), (0.7, 1.0 - 0.7));
        let (hi, lo) = p_extremes(0.8, 1.0);
        assert!((hi - 1.0).abs() < 1e-12 && lo.abs() < 1e-12);
    }

    #[test]
    fn effective_epsilon_examples() {
        for n in [2, 10, 10_000] {
            for rho in [-0.25, 0.0, 0.3] {
                let e = effective_epsilon(0.8, rho, n, 0).unwrap();
                assert!((e - 4f64.ln()).abs() < 1e-12);
            }
        }
        let e = effective_epsilon(0.75, -0.2, 10_000, 5).unwrap();
        assert!((e - (7500.0f64 / 2499.0).ln()).abs() < 1e-9);
        assert!((e - 1.0990).abs() < 1e-4);
        assert!(
            effective_epsilon(0.75, -0.2, 10_000, 10).unwrap()
                >= effective_epsilon(0.75, -0.2, 10_000, 5).unwrap()
        );
        assert_eq!(effective_epsilon(1.0, 0.0, 10, 3).unwrap(), f64::INFINITY);
        assert!(effective_epsilon(0.8, 0.0, 10, 10).is_err());
    }

    #[test]
    fn feasibility_examples() {
        let eps = 0.7;
        let p = rr_keep_probability(eps);
        for m in [0, 1, 5, 99] {
            assert!(is_feasible(
                p,
                0.0,
                &PrivacyBudget::new(eps, m, 100).unwrap()
            ));
        }
        let b = PrivacyBudget::new(3.0, 5, 100).unwrap();
        assert!(!is_feasible(1.0, 0.0, &b));
        assert!(!is_feasible(0.8, -0.3, &b));
        assert!(!is_feasible(0.5, 0.0, &b));
    }

    #[test]
    fn budget_validation() {
        assert!(PrivacyBudget::new(0.0, 0, 10).is_err());
        assert!(PrivacyBudget::new(1.0, 10, 10).is_err());
        assert!(PrivacyBudget::new(1.0, 9, 10).is_ok());
        assert!(SearchConfig::new(0.0, 1e-4).is_err());
    }

    #[test]
    fn search_default_point() {
        let budget = PrivacyBudget::new(0.1, 5, 10_000).unwrap();
        let cfg = SearchConfig::default();
        let r = search_params(&budget, &cfg).unwrap();
        assert!(r.p > 0.5 && r.p < rr_keep_probability(0.1));
        assert!(r.rho < 0.0);
        assert!(is_feasible(r.p, r.rho, &budget));
        if r.rho_step > 0 {
            assert!(!is_feasible(r.p, r.rho - cfg.delta_rho(), &budget));
        }
        assert!((r.p - 0.52488).abs() < 1e-4, "{r:?}");
    }

    #[test]
    fn search_all_colluders_degrades_to_rr() {
        let n = 10_000;
        let budget = PrivacyBudget::new(0.1, n - 1, n).unwrap();
        let r = search_params(&budget, &SearchConfig::default()).unwrap();
        assert!(r.rho.abs() < 1e-3, "{r:?}");
    }

    #[test]
    fn min_variance_never_worse_than_first_feasible() {
        let budget = PrivacyBudget::new(0.01, 5, 10_000).unwrap();
        let cfg = SearchConfig::default();
        let a = search_params(&budget, &cfg).unwrap();
        let b = search_params_with(&budget, &cfg, SearchStrategy::MinVariance { n1: 0 }).unwrap();
        assert!(is_feasible(b.p, b.rho, &budget));
        let va = jrr_variance(10_000, 0, a.p, a.rho).unwrap();
        let vb = jrr_variance(10_000, 0, b.p, b.rho).unwrap();
        assert!(vb <= va);
    }

    proptest! {
        #[test]
        fn epsilon_nondecreasing_in_m(
            p in 0.51f64..0.99,
            t in 0.0f64..=1.0,
            n in 2usize..60,
        ) {
            let rho = (1.0 - 1.0 / p) + t * (1.0 / p);
            let mut prev = effective_epsilon(p, rho, n, 0).unwrap();
            for m in 1..n {
                let e = effective_epsilon(p, rho, n, m).unwrap();
                prop_assert!(e >= prev - 1e-12, "m={} {} < {}", m, e, prev);
                prev = e;
            }
        }
    }
}
