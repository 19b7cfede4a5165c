//! Monte-Carlo samplers checked against exact enumeration.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use jrr::grouping::{
    assign_r, perturb_bits_direct, perturb_bits_sampler, perturb_cohort, random_pairing, Cohort,
    Pairing, PerturbMode,
};
use jrr::harness::{run_experiment, ExperimentConfig, MechanismChoice, RrBaseline, Share};
use jrr::mechanisms::{JointTable, PerturbParams, SamplerConfig};
use jrr::oracle::{all_pairings, enumerate_reports, reference_joint_table, PairingSet};

const ALPHA: f64 = 1e-3;

/// Pearson statistic of `counts` against `expected` probabilities; asserts
/// the upper tail probability stays above `ALPHA`.
fn chi_square(counts: &[u64], expected: &[f64], what: &str) {
    let total: u64 = counts.iter().sum();
    let mut stat = 0.0;
    let mut cells = 0;
    for (&c, &e) in counts.iter().zip(expected) {
        let e = e * total as f64;
        if e == 0.0 {
            assert_eq!(c, 0, "{what}: impossible cell observed");
            continue;
        }
        stat += (c as f64 - e).powi(2) / e;
        cells += 1;
    }
    let tail = 1.0 - ChiSquared::new((cells - 1) as f64).unwrap().cdf(stat);
    assert!(
        tail > ALPHA,
        "{what}: chi-square {stat:.2} on {} dof, p-value {tail:.2e}",
        cells - 1
    );
}

fn bits_index(bits: &[usize]) -> usize {
    bits.iter().enumerate().map(|(i, &b)| b << i).sum()
}

#[test]
fn random_pairings_are_uniform() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for n in 3..=6 {
        let all = all_pairings(n).unwrap();
        let mut counts = vec![0u64; all.len()];
        let draws = 3000 * all.len();
        for _ in 0..draws {
            let p = random_pairing(n, &mut rng).unwrap();
            let i = all
                .iter()
                .position(|q| q == &p)
                .expect("pairing is a perfect matching");
            counts[i] += 1;
        }
        chi_square(
            &counts,
            &vec![1.0 / all.len() as f64; all.len()],
            &format!("matchings n={n}"),
        );
    }
}

#[test]
fn cohort_reports_match_enumeration() {
    let values = [1usize, 1, 0, 1, 0];
    let bits: Vec<bool> = values.iter().map(|&v| v == 1).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let cases = [
        (0.7, -0.3, PerturbMode::Sampler),
        (0.7, -0.3, PerturbMode::DirectJoint),
        (0.8, 0.4, PerturbMode::DirectJoint),
        (0.6, 0.0, PerturbMode::Sampler),
    ];
    for (p, rho, mode) in cases {
        let params = PerturbParams::binary(p, rho).unwrap();
        let exact = enumerate_reports(&bits, &params, PairingSet::All).unwrap();
        let mut expected = vec![0.0; 1 << values.len()];
        for (reports, pr) in exact.support() {
            let r: Vec<usize> = reports.iter().map(|&b| usize::from(b)).collect();
            expected[bits_index(&r)] = pr;
        }
        let draws = 300_000u64;
        let mut counts = vec![0u64; expected.len()];
        for _ in 0..draws {
            let cohort = Cohort::with_random_pairing(values.to_vec(), &mut rng).unwrap();
            counts[bits_index(&perturb_cohort(&cohort, &params, mode, &mut rng).unwrap())] += 1;
        }
        let what = format!("p={p} rho={rho} {mode:?}");
        chi_square(&counts, &expected, &what);
        for (&c, &e) in counts.iter().zip(&expected) {
            let se = (e * (1.0 - e) / draws as f64).sqrt();
            assert!(
                (c as f64 / draws as f64 - e).abs() <= 4.5 * se + 1e-12,
                "{what}"
            );
        }
    }
}

#[test]
fn pair_truthfulness_follows_joint_table() {
    let pairing = Pairing::new(2, vec![(0, 1)], None).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for (p, rho) in [(0.8, -0.1875), (0.55, -0.8), (0.9, 0.5)] {
        let params = PerturbParams::binary(p, rho).unwrap();
        let table = JointTable::new(&params).unwrap();
        // Both hold 1, so a report of 1 means truthful.
        let values = [true, true];
        let want = reference_joint_table(p, rho);
        let mut direct = [0u64; 4];
        let mut sampled = [0u64; 4];
        for _ in 0..200_000 {
            let r = perturb_bits_direct(&values, &pairing, &table, p, &mut rng);
            direct[cell(r[0], r[1])] += 1;
            if rho <= 0.0 {
                let sampler = SamplerConfig::new(&params).unwrap();
                let signs = assign_r(&pairing, &mut rng);
                let r = perturb_bits_sampler(&values, &signs, &sampler, p, &mut rng);
                sampled[cell(r[0], r[1])] += 1;
            }
        }
        chi_square(&direct, &want, &format!("direct p={p} rho={rho}"));
        if rho <= 0.0 {
            chi_square(&sampled, &want, &format!("sampler p={p} rho={rho}"));
        }
    }
}

fn cell(a: bool, b: bool) -> usize {
    match (a, b) {
        (true, true) => 0,
        (true, false) => 1,
        (false, true) => 2,
        (false, false) => 3,
    }
}

#[test]
fn harness_estimates_are_unbiased() {
    for (epsilon, baseline) in [
        (0.5, RrBaseline::BudgetOptimal),
        (2.0, RrBaseline::MatchedP),
    ] {
        let cfg = ExperimentConfig {
            mechanism: MechanismChoice::Both,
            n: 1001,
            share: Share::Ratio(0.3),
            epsilon,
            m_max: 5,
            trials: 4000,
            seed: 17,
            baseline,
            ..ExperimentConfig::default()
        };
        let out = run_experiment(&cfg).unwrap();
        for point in &out.points {
            let mean = point.mean_estimate.unwrap();
            let se = point.estimate_std_error.unwrap();
            assert!(
                (mean - point.n1 as f64).abs() <= 4.0 * se,
                "{} eps={epsilon}: mean {mean}, n1 {}, se {se}",
                point.mechanism,
                point.n1
            );
        }
        for row in &out.rows {
            let (mse, closed) = (row.mse.unwrap(), row.var_closed.unwrap());
            assert!(
                (mse - closed).abs() / closed < 0.1,
                "{}: mse {mse} vs {closed}",
                row.mechanism
            );
        }
    }
}
