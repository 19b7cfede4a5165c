//! Exact brute-force enumeration for small cohorts.
//!
//! Nothing here samples. Pair probabilities are recomputed from `(p, rho)`
//! directly rather than taken from [`JointTable`](crate::JointTable), so the
//! enumeration stays an independent check of the mechanism code.

use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::grouping::Pairing;
use crate::mechanisms::{
    kjrr_outcome_probability, sampler_decide, CValue, PerturbParams, SamplerConfig, Sign,
};

/// Report enumeration cap.
pub const MAX_REPORT_N: usize = 12;
/// Privacy-ratio enumeration cap.
pub const MAX_PRIVACY_N: usize = 6;
/// Cap on `k^n` for k-ary enumeration.
pub const MAX_KARY_STATES: usize = 1 << 20;

/// Compensated (Kahan) accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    c: f64,
}

impl KahanSum {
    pub fn add(&mut self, x: f64) {
        let y = x - self.c;
        let t = self.sum + y;
        self.c = (t - self.sum) - y;
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum
    }
}

/// All pairings of `0..n`; for odd `n` each pairing has one leftover index.
pub fn all_pairings(n: usize) -> Result<Vec<Pairing>> {
    if n < 2 {
        return Err(invalid(format!(
            "pairing needs at least 2 contributors, got {n}"
        )));
    }
    if n > MAX_REPORT_N {
        return Err(Error::TooLarge {
            n,
            cap: MAX_REPORT_N,
        });
    }
    fn go(
        rest: &[usize],
        allow_leftover: bool,
        pairs: &mut Vec<(usize, usize)>,
        leftover: Option<usize>,
        out: &mut Vec<(Vec<(usize, usize)>, Option<usize>)>,
    ) {
        let Some((&first, tail)) = rest.split_first() else {
            out.push((pairs.clone(), leftover));
            return;
        };
        if allow_leftover {
            go(tail, false, pairs, Some(first), out);
        }
        for (i, &partner) in tail.iter().enumerate() {
            let mut remaining = tail.to_vec();
            remaining.remove(i);
            pairs.push((first, partner));
            go(&remaining, allow_leftover, pairs, leftover, out);
            pairs.pop();
        }
    }
    let idx: Vec<usize> = (0..n).collect();
    let mut raw = Vec::new();
    go(&idx, n % 2 == 1, &mut Vec::new(), None, &mut raw);
    raw.into_iter()
        .map(|(pairs, leftover)| Pairing::new(n, pairs, leftover))
        .collect()
}

/// Probability of the truthfulness pair `(t1, t2)`, straight from `(p, rho)`.
fn pair_truth_probability(t1: bool, t2: bool, p: f64, rho: f64) -> f64 {
    let q = 1.0 - p;
    let cov = rho * p * q;
    match (t1, t2) {
        (true, true) => p * p + cov,
        (false, false) => q * q + cov,
        _ => p * q - cov,
    }
}

fn single_truth_probability(t: bool, p: f64) -> f64 {
    if t {
        p
    } else {
        1.0 - p
    }
}

/// Probability of a full truthfulness vector (bit `j` of `truth`) under one pairing.
fn truth_vector_probability(truth: u32, pairing: &Pairing, p: f64, rho: f64) -> f64 {
    let bit = |j: usize| truth >> j & 1 == 1;
    let mut prob: f64 = pairing
        .pairs()
        .iter()
        .map(|&(a, b)| pair_truth_probability(bit(a), bit(b), p, rho))
        .product();
    if let Some(l) = pairing.leftover() {
        prob *= single_truth_probability(bit(l), p);
    }
    prob
}

/// Which pairings to enumerate over.
#[derive(Debug, Clone, Copy)]
pub enum PairingSet<'a> {
    Single(&'a Pairing),
    /// Uniform average over every pairing of `0..n`.
    All,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Provenance {
    pub n: usize,
    pub values: Vec<bool>,
    pub p: f64,
    pub rho: f64,
    pub pairing_averaged: bool,
    pub pairings: usize,
}

/// Exact distribution of the binary report vector. Index bit `j` holds
/// contributor `j`'s report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExactDistribution {
    pub provenance: Provenance,
    probs: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Moments {
    pub mean: f64,
    pub variance: f64,
}

impl ExactDistribution {
    pub fn n(&self) -> usize {
        self.provenance.n
    }

    pub fn probability(&self, reports: &[bool]) -> Option<f64> {
        if reports.len() != self.n() {
            return None;
        }
        let idx = reports
            .iter()
            .enumerate()
            .fold(0usize, |acc, (j, &r)| acc | (usize::from(r) << j));
        Some(self.probs[idx])
    }

    /// Outcomes with positive probability, in index order.
    pub fn support(&self) -> Vec<(Vec<bool>, f64)> {
        let n = self.n();
        self.probs
            .iter()
            .enumerate()
            .filter(|(_, &pr)| pr > 0.0)
            .map(|(idx, &pr)| ((0..n).map(|j| idx >> j & 1 == 1).collect(), pr))
            .collect()
    }

    pub fn total(&self) -> f64 {
        let mut s = KahanSum::default();
        self.probs.iter().for_each(|&x| s.add(x));
        s.value()
    }

    /// Exact mean and variance of the count estimate for `value`.
    pub fn count_moments(&self, value: bool, p: f64, q: f64) -> Result<Moments> {
        if !(p > q) {
            return Err(Error::DegenerateEstimator { p, q });
        }
        let n = self.n();
        let est = |idx: usize| {
            let ones = idx.count_ones() as usize;
            let i_v = if value { ones } else { n - ones };
            (i_v as f64 - n as f64 * q) / (p - q)
        };
        let mut mean = KahanSum::default();
        for (idx, &pr) in self.probs.iter().enumerate() {
            mean.add(pr * est(idx));
        }
        let mean = mean.value();
        let mut var = KahanSum::default();
        for (idx, &pr) in self.probs.iter().enumerate() {
            let d = est(idx) - mean;
            var.add(pr * d * d);
        }
        Ok(Moments {
            mean,
            variance: var.value(),
        })
    }
}

/// Exact joint distribution of the report vector of a binary cohort.
pub fn enumerate_reports(
    values: &[bool],
    params: &PerturbParams,
    pairings: PairingSet<'_>,
) -> Result<ExactDistribution> {
    let n = values.len();
    if params.k() != 2 {
        return Err(invalid(
            "report enumeration is binary; use the k-ary helpers",
        ));
    }
    if n > MAX_REPORT_N {
        return Err(Error::TooLarge {
            n,
            cap: MAX_REPORT_N,
        });
    }
    let owned;
    let list: &[Pairing] = match pairings {
        PairingSet::Single(p) => {
            if p.n() != n {
                return Err(invalid("pairing size does not match the values"));
            }
            std::slice::from_ref(p)
        }
        PairingSet::All => {
            owned = all_pairings(n)?;
            &owned
        }
    };
    let (p, rho) = (params.p(), params.rho());
    let truth_mask = values
        .iter()
        .enumerate()
        .fold(0u32, |acc, (j, &x)| acc | (u32::from(x) << j));
    let full = (1u32 << n) - 1;
    let weight = 1.0 / list.len() as f64;
    let mut acc = vec![KahanSum::default(); 1 << n];
    for pairing in list {
        for y in 0..=full {
            // Contributor j is truthful exactly when its report equals its value.
            let truth = !(y ^ truth_mask) & full;
            acc[y as usize].add(weight * truth_vector_probability(truth, pairing, p, rho));
        }
    }
    Ok(ExactDistribution {
        provenance: Provenance {
            n,
            values: values.to_vec(),
            p,
            rho,
            pairing_averaged: matches!(pairings, PairingSet::All),
            pairings: list.len(),
        },
        probs: acc.iter().map(KahanSum::value).collect(),
    })
}

/// Exact mean and variance of the estimate of the number of ones.
pub fn exact_estimator_moments(dist: &ExactDistribution, p: f64, q: f64) -> Result<Moments> {
    dist.count_moments(true, p, q)
}

/// The configuration attaining a worst-case privacy ratio.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PrivacyRatio {
    pub ratio: f64,
    /// Colluders' truthfulness bits, in the order the colluders were given.
    pub colluder_truth: Vec<bool>,
    pub x: bool,
    pub x_prime: bool,
    pub y: bool,
}

/// How the unknown pairing is handled when conditioning on colluder truthfulness.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum PairingConditioning {
    /// Per-pairing conditional probabilities averaged with uniform weights.
    PriorAveraged,
    /// Full Bayesian update of the pairing given the colluders' bits.
    Posterior,
}

fn check_privacy_inputs(
    n: usize,
    params: &PerturbParams,
    colluders: &[usize],
    target: usize,
) -> Result<()> {
    if params.k() != 2 {
        return Err(invalid("privacy enumeration is binary"));
    }
    if n > MAX_PRIVACY_N {
        return Err(Error::TooLarge {
            n,
            cap: MAX_PRIVACY_N,
        });
    }
    if target >= n {
        return Err(invalid(format!("target {target} outside 0..{n}")));
    }
    if colluders.contains(&target) {
        return Err(invalid("target must not be a colluder"));
    }
    let mut sorted = colluders.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != colluders.len() || sorted.iter().any(|&c| c >= n) {
        return Err(invalid("colluders must be distinct indices in 0..n"));
    }
    Ok(())
}

fn privacy_ratio(
    n: usize,
    params: &PerturbParams,
    colluders: &[usize],
    target: usize,
    mode: PairingConditioning,
) -> Result<PrivacyRatio> {
    check_privacy_inputs(n, params, colluders, target)?;
    let pairings = all_pairings(n)?;
    let (p, rho) = (params.p(), params.rho());
    let m = colluders.len();
    let mut best: Option<PrivacyRatio> = None;
    for tau in 0u32..(1 << m) {
        // Per pairing: Pr[T_c = tau] and Pr[T_c = tau, T_target = 1].
        let per_pairing: Vec<(f64, f64)> = pairings
            .iter()
            .map(|pairing| {
                let (mut marg, mut joint) = (KahanSum::default(), KahanSum::default());
                for truth in 0u32..(1 << n) {
                    let matches = colluders
                        .iter()
                        .enumerate()
                        .all(|(i, &c)| (truth >> c & 1) == (tau >> i & 1));
                    if !matches {
                        continue;
                    }
                    let pr = truth_vector_probability(truth, pairing, p, rho);
                    marg.add(pr);
                    if truth >> target & 1 == 1 {
                        joint.add(pr);
                    }
                }
                (marg.value(), joint.value())
            })
            .collect();
        let truthful = match mode {
            PairingConditioning::PriorAveraged => {
                // Pairings under which tau cannot occur give no conditional; drop them.
                let live: Vec<f64> = per_pairing
                    .iter()
                    .filter(|(marg, _)| *marg > 0.0)
                    .map(|(marg, joint)| joint / marg)
                    .collect();
                if live.is_empty() {
                    continue;
                }
                live.iter().sum::<f64>() / live.len() as f64
            }
            PairingConditioning::Posterior => {
                let marg: f64 = per_pairing.iter().map(|t| t.0).sum();
                if marg <= 0.0 {
                    continue;
                }
                per_pairing.iter().map(|t| t.1).sum::<f64>() / marg
            }
        };
        let report_prob = |x: bool, y: bool| if x == y { truthful } else { 1.0 - truthful };
        for x in [false, true] {
            for x_prime in [false, true] {
                for y in [false, true] {
                    let (a, b) = (report_prob(x, y), report_prob(x_prime, y));
                    let ratio = if b > 0.0 {
                        a / b
                    } else if a > 0.0 {
                        f64::INFINITY
                    } else {
                        continue;
                    };
                    if best.as_ref().is_none_or(|bst| ratio > bst.ratio) {
                        best = Some(PrivacyRatio {
                            ratio,
                            colluder_truth: (0..m).map(|i| tau >> i & 1 == 1).collect(),
                            x,
                            x_prime,
                            y,
                        });
                    }
                }
            }
        }
    }
    best.ok_or(Error::UndefinedMetric(
        "no colluder truthfulness assignment has positive probability",
    ))
}

/// Worst case over `x`, `x'`, `y` and the colluders' truthfulness bits of
/// `Pr[report = y | x, T_c] / Pr[report = y | x', T_c]`, where the
/// conditional under each pairing is averaged with uniform pairing weights.
pub fn exact_privacy_ratio(
    n: usize,
    params: &PerturbParams,
    colluders: &[usize],
    target: usize,
) -> Result<PrivacyRatio> {
    privacy_ratio(
        n,
        params,
        colluders,
        target,
        PairingConditioning::PriorAveraged,
    )
}

/// Same maximization, but the pairing is updated by Bayes' rule after
/// observing the colluders' bits. This can exceed the closed-form bound
/// because the bits themselves carry information about who is paired.
pub fn posterior_privacy_ratio(
    n: usize,
    params: &PerturbParams,
    colluders: &[usize],
    target: usize,
) -> Result<PrivacyRatio> {
    privacy_ratio(n, params, colluders, target, PairingConditioning::Posterior)
}

/// Joint truthfulness table `[t11, t10, t01, t00]` produced by the C/R
/// sampler, by enumerating both `C` values and the first member's sign.
pub fn sampler_joint_table(params: &PerturbParams) -> Result<[f64; 4]> {
    let cfg = SamplerConfig::new(params)?;
    let mut out = [KahanSum::default(); 4];
    for c1 in CValue::ALL {
        for c2 in CValue::ALL {
            for r1 in [Sign::Plus, Sign::Minus] {
                let pr = cfg.probability(c1) * cfg.probability(c2) * 0.5;
                let t1 = sampler_decide(c1, r1);
                let t2 = sampler_decide(c2, r1.opposite());
                let cell = match (t1, t2) {
                    (true, true) => 0,
                    (true, false) => 1,
                    (false, true) => 2,
                    (false, false) => 3,
                };
                out[cell].add(pr);
            }
        }
    }
    Ok(out.map(|s| s.value()))
}

/// Reference table `[t11, t10, t01, t00]` computed from `(p, rho)`.
pub fn reference_joint_table(p: f64, rho: f64) -> [f64; 4] {
    [
        pair_truth_probability(true, true, p, rho),
        pair_truth_probability(true, false, p, rho),
        pair_truth_probability(false, true, p, rho),
        pair_truth_probability(false, false, p, rho),
    ]
}

/// Marginal report distribution of the first member of a k-ary pair.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KaryMarginals {
    /// `Pr[v1' = v1]`.
    pub truthful: f64,
    /// `Pr[v1' = w]` for every `w`, including `w = v1`.
    pub by_value: Vec<f64>,
    /// Total mass of the enumerated joint distribution.
    pub total: f64,
}

/// Enumerates all `k^2` joint reports of one k-ary pair.
pub fn kjrr_marginals(params: &PerturbParams, v1: usize, v2: usize) -> Result<KaryMarginals> {
    let k = params.k();
    let mut by_value = vec![KahanSum::default(); k];
    let mut total = KahanSum::default();
    for r1 in 0..k {
        for r2 in 0..k {
            let pr = kjrr_outcome_probability(params, (v1, v2), (r1, r2));
            by_value[r1].add(pr);
            total.add(pr);
        }
    }
    let by_value: Vec<f64> = by_value.iter().map(KahanSum::value).collect();
    Ok(KaryMarginals {
        truthful: by_value[v1],
        by_value,
        total: total.value(),
    })
}

/// Exact `E[n_hat_v]` for every value `v` of a k-ary cohort, averaged over
/// all pairings. A leftover contributor reports generalized RR.
pub fn kary_estimator_means(values: &[usize], params: &PerturbParams) -> Result<Vec<f64>> {
    let n = values.len();
    let k = params.k();
    if values.iter().any(|&v| v >= k) {
        return Err(invalid("value outside the domain"));
    }
    let states = k
        .checked_pow(n as u32)
        .filter(|&s| s <= MAX_KARY_STATES)
        .ok_or(Error::TooLarge {
            n,
            cap: MAX_KARY_STATES,
        })?;
    let pairings = all_pairings(n)?;
    let (p, q) = (params.p(), params.q());
    let weight = 1.0 / pairings.len() as f64;
    let mut sums = vec![KahanSum::default(); k];
    let mut reports = vec![0usize; n];
    for pairing in &pairings {
        for idx in 0..states {
            let mut rest = idx;
            for r in reports.iter_mut() {
                *r = rest % k;
                rest /= k;
            }
            let mut pr = 1.0;
            for &(a, b) in pairing.pairs() {
                pr *= kjrr_outcome_probability(
                    params,
                    (values[a], values[b]),
                    (reports[a], reports[b]),
                );
            }
            if let Some(l) = pairing.leftover() {
                pr *= if reports[l] == values[l] { p } else { q };
            }
            if pr == 0.0 {
                continue;
            }
            let mut counts = vec![0usize; k];
            reports.iter().for_each(|&r| counts[r] += 1);
            for (v, &c) in counts.iter().enumerate() {
                sums[v].add(weight * pr * (c as f64 - n as f64 * q) / (p - q));
            }
        }
    }
    Ok(sums.iter().map(KahanSum::value).collect())
}
