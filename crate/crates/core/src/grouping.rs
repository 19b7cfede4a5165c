//! Random pair formation and whole-cohort perturbation.
//!
//! Pairs come from a uniform permutation with adjacent positions grouped,
//! which is how a shuffle-based deployment forms groups. The shuffle here is
//! an ordinary in-process permutation with no cryptographic protection.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::Serialize;

use crate::error::{invalid, Result};
use crate::mechanisms::{
    apply_truth, kjrr_perturb_pair, sampler_decide, JointTable, PerturbParams, SamplerConfig, Sign,
};

/// A partition of `0..n` into disjoint pairs plus one leftover index when `n` is odd.
///
/// Pairs are stored as `(smaller, larger)` and sorted by first element.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Pairing {
    n: usize,
    pairs: Vec<(usize, usize)>,
    leftover: Option<usize>,
}

impl Pairing {
    pub fn new(n: usize, pairs: Vec<(usize, usize)>, leftover: Option<usize>) -> Result<Self> {
        let mut seen = vec![false; n];
        let mut mark = |i: usize| -> Result<()> {
            if i >= n || std::mem::replace(&mut seen[i], true) {
                return Err(invalid(format!(
                    "index {i} out of range or repeated in pairing"
                )));
            }
            Ok(())
        };
        for &(a, b) in &pairs {
            mark(a)?;
            mark(b)?;
        }
        if let Some(l) = leftover {
            mark(l)?;
        }
        if seen.iter().any(|s| !s) {
            return Err(invalid("pairing does not cover every index"));
        }
        if leftover.is_some() != (n % 2 == 1) {
            return Err(invalid("a leftover index must exist exactly when n is odd"));
        }
        let mut pairs: Vec<_> = pairs
            .into_iter()
            .map(|(a, b)| (a.min(b), a.max(b)))
            .collect();
        pairs.sort_unstable();
        Ok(Pairing { n, pairs, leftover })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn leftover(&self) -> Option<usize> {
        self.leftover
    }

    /// `partners()[i]` is the index paired with `i`, if any.
    pub fn partners(&self) -> Vec<Option<usize>> {
        let mut out = vec![None; self.n];
        for &(a, b) in &self.pairs {
            out[a] = Some(b);
            out[b] = Some(a);
        }
        out
    }
}

/// Uniformly random pairing of `0..n`.
pub fn random_pairing<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<Pairing> {
    if n < 2 {
        return Err(invalid(format!(
            "pairing needs at least 2 contributors, got {n}"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let pairs = order
        .chunks_exact(2)
        .map(|c| (c[0].min(c[1]), c[0].max(c[1])))
        .collect();
    let leftover = (n % 2 == 1).then(|| order[n - 1]);
    let mut pairing = Pairing { n, pairs, leftover };
    pairing.pairs.sort_unstable();
    Ok(pairing)
}

/// Helper-assigned signs: opposite within each pair, none for the leftover.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RAssignment {
    signs: Vec<Option<Sign>>,
}

impl RAssignment {
    pub fn signs(&self) -> &[Option<Sign>] {
        &self.signs
    }
}

/// Draws the first member's sign uniformly and gives the partner the opposite one.
pub fn assign_r<R: Rng + ?Sized>(pairing: &Pairing, rng: &mut R) -> RAssignment {
    let mut signs = vec![None; pairing.n];
    for &(a, b) in &pairing.pairs {
        let s = Sign::random(rng);
        signs[a] = Some(s);
        signs[b] = Some(s.opposite());
    }
    RAssignment { signs }
}

/// True values of a population together with its (private) pairing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cohort {
    values: Vec<usize>,
    pairing: Pairing,
}

impl Cohort {
    pub fn new(values: Vec<usize>, pairing: Pairing) -> Result<Self> {
        if values.len() != pairing.n() {
            return Err(invalid(format!(
                "{} values but the pairing covers {} contributors",
                values.len(),
                pairing.n()
            )));
        }
        Ok(Cohort { values, pairing })
    }

    pub fn with_random_pairing<R: Rng + ?Sized>(values: Vec<usize>, rng: &mut R) -> Result<Self> {
        let pairing = random_pairing(values.len(), rng)?;
        Ok(Cohort { values, pairing })
    }

    pub fn values(&self) -> &[usize] {
        &self.values
    }

    pub fn pairing(&self) -> &Pairing {
        &self.pairing
    }

    pub fn n(&self) -> usize {
        self.values.len()
    }
}

/// How each pair realizes its joint truthfulness draw.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PerturbMode {
    /// One draw from the 2x2 joint table per pair.
    DirectJoint,
    /// Helper signs plus a private `C` per contributor; needs `rho <= 0`.
    Sampler,
}

/// Binary perturbation via the C/R sampler. `noise` supplies one uniform per
/// contributor, consumed in index order; unpaired contributors use plain RR.
pub fn perturb_bits_sampler<R: Rng + ?Sized>(
    values: &[bool],
    signs: &RAssignment,
    sampler: &SamplerConfig,
    p: f64,
    noise: &mut R,
) -> Vec<bool> {
    values
        .iter()
        .zip(&signs.signs)
        .map(|(&x, sign)| {
            let u = noise.gen::<f64>();
            let truthful = match sign {
                Some(r) => sampler_decide(sampler.c_from_uniform(u), *r),
                None => u < p,
            };
            apply_truth(x, truthful)
        })
        .collect()
}

/// Binary perturbation with one joint-table draw per pair, in pair order,
/// followed by RR for the leftover contributor.
pub fn perturb_bits_direct<R: Rng + ?Sized>(
    values: &[bool],
    pairing: &Pairing,
    table: &JointTable,
    p: f64,
    noise: &mut R,
) -> Vec<bool> {
    let mut out = values.to_vec();
    for &(a, b) in &pairing.pairs {
        let (ta, tb) = table.sample_truthfulness(noise);
        out[a] = apply_truth(values[a], ta);
        out[b] = apply_truth(values[b], tb);
    }
    if let Some(l) = pairing.leftover {
        out[l] = apply_truth(values[l], noise.gen::<f64>() < p);
    }
    out
}

/// Perturbs every contributor of `cohort`. The output is the bare report
/// sequence in contributor order; it carries no pairing information.
pub fn perturb_cohort<R: Rng + ?Sized>(
    cohort: &Cohort,
    params: &PerturbParams,
    mode: PerturbMode,
    rng: &mut R,
) -> Result<Vec<usize>> {
    let k = params.k();
    if let Some(&bad) = cohort.values.iter().find(|&&v| v >= k) {
        return Err(invalid(format!("value {bad} outside domain 0..{k}")));
    }
    if k == 2 {
        let bits: Vec<bool> = cohort.values.iter().map(|&v| v == 1).collect();
        let reports = match mode {
            PerturbMode::DirectJoint => {
                let table = JointTable::new(params)?;
                perturb_bits_direct(&bits, &cohort.pairing, &table, params.p(), rng)
            }
            PerturbMode::Sampler => {
                let sampler = SamplerConfig::new(params)?;
                let signs = assign_r(&cohort.pairing, rng);
                perturb_bits_sampler(&bits, &signs, &sampler, params.p(), rng)
            }
        };
        return Ok(reports.into_iter().map(usize::from).collect());
    }
    if mode == PerturbMode::Sampler {
        return Err(invalid("the C/R sampler is defined for binary values only"));
    }
    let mut out = cohort.values.clone();
    for &(a, b) in &cohort.pairing.pairs {
        let (ra, rb) = kjrr_perturb_pair(cohort.values[a], cohort.values[b], params, rng)?;
        out[a] = ra;
        out[b] = rb;
    }
    if let Some(l) = cohort.pairing.leftover {
        let v = cohort.values[l];
        if rng.gen::<f64>() >= params.p() {
            let w = rng.gen_range(0..k - 1);
            out[l] = if w >= v { w + 1 } else { w };
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::HashMap;

    #[test]
    fn two_contributors_single_pair() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..100 {
            let p = random_pairing(2, &mut rng).unwrap();
            assert_eq!(p.pairs(), &[(0, 1)]);
            assert_eq!(p.leftover(), None);
        }
    }

    #[test]
    fn too_small_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(random_pairing(1, &mut rng).is_err());
        assert!(random_pairing(0, &mut rng).is_err());
    }

    #[test]
    fn four_matchings_equally_likely() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let draws = 1_000_000;
        let mut counts: HashMap<Vec<(usize, usize)>, usize> = HashMap::new();
        for _ in 0..draws {
            let p = random_pairing(4, &mut rng).unwrap();
            *counts.entry(p.pairs().to_vec()).or_default() += 1;
        }
        assert_eq!(counts.len(), 3);
        for c in counts.values() {
            assert!((*c as f64 / draws as f64 - 1.0 / 3.0).abs() < 0.01);
        }
    }

    #[test]
    fn odd_leftover_is_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let draws = 1_000_000;
        let mut counts = [0usize; 5];
        for _ in 0..draws {
            let p = random_pairing(5, &mut rng).unwrap();
            counts[p.leftover().unwrap()] += 1;
        }
        for c in counts {
            assert!((c as f64 / draws as f64 - 0.2).abs() < 0.01);
        }
    }

    #[test]
    fn pairing_validation() {
        assert!(Pairing::new(4, vec![(0, 1), (2, 3)], None).is_ok());
        assert!(Pairing::new(4, vec![(0, 1), (1, 3)], None).is_err());
        assert!(Pairing::new(3, vec![(0, 1)], None).is_err());
        assert!(Pairing::new(3, vec![(0, 1)], Some(2)).is_ok());
        assert!(Pairing::new(4, vec![(0, 1)], Some(2)).is_err());
        let p = Pairing::new(4, vec![(3, 2), (1, 0)], None).unwrap();
        assert_eq!(p.pairs(), &[(0, 1), (2, 3)]);
    }

    #[test]
    fn signs_are_opposite_within_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pairing = random_pairing(7, &mut rng).unwrap();
        let r = assign_r(&pairing, &mut rng);
        for &(a, b) in pairing.pairs() {
            let (sa, sb) = (r.signs()[a].unwrap(), r.signs()[b].unwrap());
            assert_eq!(sa.value() * sb.value(), -1);
        }
        assert_eq!(r.signs()[pairing.leftover().unwrap()], None);
    }

    #[test]
    fn first_sign_is_fair() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pairing = Pairing::new(2, vec![(0, 1)], None).unwrap();
        let draws = 1_000_000;
        let plus = (0..draws)
            .filter(|_| assign_r(&pairing, &mut rng).signs()[0] == Some(Sign::Plus))
            .count();
        assert!((plus as f64 / draws as f64 - 0.5).abs() < 0.005);
    }

    #[test]
    fn truthful_cohort_reports_truth() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cohort = Cohort::with_random_pairing(vec![1; 9], &mut rng).unwrap();
        let params = PerturbParams::binary(1.0, 0.0).unwrap();
        for mode in [PerturbMode::DirectJoint, PerturbMode::Sampler] {
            let reports = perturb_cohort(&cohort, &params, mode, &mut rng).unwrap();
            assert!(reports.iter().all(|&r| r == 1));
        }
    }

    #[test]
    fn sampler_mode_rejects_positive_rho() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let cohort = Cohort::with_random_pairing(vec![0, 1, 1, 0], &mut rng).unwrap();
        let params = PerturbParams::binary(0.8, 0.2).unwrap();
        assert!(perturb_cohort(&cohort, &params, PerturbMode::Sampler, &mut rng).is_err());
        assert!(perturb_cohort(&cohort, &params, PerturbMode::DirectJoint, &mut rng).is_ok());
    }

    #[test]
    fn modes_agree_on_pair_frequencies() {
        let params = PerturbParams::binary(0.8, -0.1875).unwrap();
        let cohort = Cohort::new(vec![1, 1], Pairing::new(2, vec![(0, 1)], None).unwrap()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let trials = 1_000_000;
        let mut freq = [[0usize; 4]; 2];
        for (m, mode) in [PerturbMode::DirectJoint, PerturbMode::Sampler]
            .into_iter()
            .enumerate()
        {
            for _ in 0..trials {
                let r = perturb_cohort(&cohort, &params, mode, &mut rng).unwrap();
                freq[m][r[0] * 2 + r[1]] += 1;
            }
        }
        let f = |c: usize| c as f64 / trials as f64;
        assert!((f(freq[0][3]) - 0.61).abs() < 0.005);
        assert!((f(freq[1][3]) - 0.61).abs() < 0.005);
        for cell in 0..4 {
            assert!((f(freq[0][cell]) - f(freq[1][cell])).abs() < 0.005);
        }
    }

    #[test]
    fn kary_cohort_stays_in_domain() {
        let params = PerturbParams::k_ary(4, 0.55, -0.2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let cohort = Cohort::with_random_pairing(vec![0, 1, 2, 3, 3], &mut rng).unwrap();
        let reports = perturb_cohort(&cohort, &params, PerturbMode::DirectJoint, &mut rng).unwrap();
        assert_eq!(reports.len(), 5);
        assert!(reports.iter().all(|&r| r < 4));
        assert!(perturb_cohort(&cohort, &params, PerturbMode::Sampler, &mut rng).is_err());
    }
}
