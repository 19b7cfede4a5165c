//! Monte-Carlo experiment runner.
//!
//! Seeding: trial `t` of sweep point `i` uses `trial_seed(master, i, t)`.
//! That seed opens two ChaCha8 streams. Stream 0 supplies one uniform per
//! contributor in index order (the RR coin, or the uniform mapped to `C` on
//! the sampler path). Stream 1 supplies the pairing shuffle and the helper
//! signs. RR and JRR runs at the same point share trial seeds, so at `rho = 0`
//! and equal `p` they produce identical reports.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::dataset::{synthesize, Dataset};
use super::splitmix64;
use crate::error::{invalid, Error, Result};
use crate::estimation::{
    are, conditional_estimator_variance, estimate, jrr_variance, mse, percentile_sorted,
    relative_increase, rr_variance, MetricsRow,
};
use crate::grouping::{assign_r, perturb_bits_direct, perturb_bits_sampler, random_pairing};
use crate::mechanisms::{
    apply_truth, rr_keep_probability, JointTable, PerturbParams, SamplerConfig,
};
use crate::privacy::{
    search_params_with, PrivacyBudget, SearchConfig, SearchStrategy, FEASIBILITY_SLACK,
};

pub const CSV_HEADER: &str =
    "mechanism,n,n1,epsilon,m_max,p,rho,trials,seed,mse,are,var_closed,are_p10,are_p50,are_p90,ri";

const SEEDING_NOTE: &str = "trial seed = splitmix64(splitmix64(splitmix64(master) ^ point) ^ trial); \
    ChaCha8 stream 0 = per-contributor uniforms in index order, stream 1 = pairing shuffle and signs; \
    RR and JRR share trial seeds at each point";
const ARE_NOTE: &str = "ARE averages |n_hat_v - n_v| / n_v over values with n_v > 0 only";

/// Tags that keep auxiliary seeds apart from trial seeds.
const POPULATION_TAG: u64 = u64::MAX;
const PAIRING_SAMPLE_TAG: u64 = u64::MAX - 1;

/// Per-trial seed derived from the master seed, sweep point and trial index.
pub fn trial_seed(master: u64, point: u64, trial: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(master) ^ point) ^ trial)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MechanismChoice {
    Rr,
    Jrr,
    Both,
}

/// Which keep-probability the RR baseline uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RrBaseline {
    /// `p = e^eps / (1 + e^eps)`: RR spending the whole budget.
    BudgetOptimal,
    /// The same `p` the JRR search returned, so only `rho` differs.
    MatchedP,
}

/// Number of ones in a synthetic population.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Share {
    Count(usize),
    Ratio(f64),
}

impl Share {
    fn resolve(&self, n: usize) -> Result<usize> {
        match *self {
            Share::Count(n1) if n1 <= n => Ok(n1),
            Share::Count(n1) => Err(invalid(format!("n1 = {n1} exceeds n = {n}"))),
            Share::Ratio(r) if (0.0..=1.0).contains(&r) => Ok((r * n as f64).round() as usize),
            Share::Ratio(r) => Err(invalid(format!("ratio {r} outside [0, 1]"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "axis", content = "values", rename_all = "kebab-case")]
pub enum Sweep {
    Epsilon(Vec<f64>),
    N(Vec<usize>),
    Ratio(Vec<f64>),
    M(Vec<usize>),
}

impl Sweep {
    fn len(&self) -> usize {
        match self {
            Sweep::Epsilon(v) | Sweep::Ratio(v) => v.len(),
            Sweep::N(v) | Sweep::M(v) => v.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub mechanism: MechanismChoice,
    /// Ignored when a dataset is given.
    pub n: usize,
    /// Ignored when a dataset is given.
    pub share: Share,
    pub dataset: Option<Dataset>,
    pub epsilon: f64,
    pub m_max: usize,
    pub trials: usize,
    pub seed: u64,
    pub sweep: Option<Sweep>,
    pub search: SearchConfig,
    pub strategy: SearchStrategy,
    pub baseline: RrBaseline,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            mechanism: MechanismChoice::Both,
            n: 10_000,
            share: Share::Ratio(0.1),
            dataset: None,
            epsilon: 0.1,
            m_max: 5,
            trials: 1000,
            seed: 0,
            sweep: None,
            search: SearchConfig::default(),
            strategy: SearchStrategy::FirstFeasible,
            baseline: RrBaseline::BudgetOptimal,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Point {
    index: usize,
    n: usize,
    n1: usize,
    epsilon: f64,
    m_max: usize,
}

impl ExperimentConfig {
    fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(invalid("trials must be at least 1"));
        }
        if let Some(sweep) = &self.sweep {
            if sweep.len() == 0 {
                return Err(invalid("sweep axis is empty"));
            }
            if self.dataset.is_some() && matches!(sweep, Sweep::N(_) | Sweep::Ratio(_)) {
                return Err(invalid(
                    "a dataset fixes n and n1; sweep epsilon or m instead",
                ));
            }
        }
        Ok(())
    }

    fn base_population(&self) -> Result<(usize, usize)> {
        match &self.dataset {
            Some(d) => Ok((d.summary.n, d.summary.n1)),
            None => Ok((self.n, self.share.resolve(self.n)?)),
        }
    }

    /// Sweep points in output order.
    fn points(&self) -> Result<Vec<Point>> {
        let point = |index, n, n1, epsilon, m_max| Point {
            index,
            n,
            n1,
            epsilon,
            m_max,
        };
        Ok(match &self.sweep {
            None => {
                let (n, n1) = self.base_population()?;
                vec![point(0, n, n1, self.epsilon, self.m_max)]
            }
            Some(Sweep::Epsilon(v)) => {
                let (n, n1) = self.base_population()?;
                v.iter()
                    .enumerate()
                    .map(|(i, &e)| point(i, n, n1, e, self.m_max))
                    .collect()
            }
            Some(Sweep::M(v)) => {
                let (n, n1) = self.base_population()?;
                v.iter()
                    .enumerate()
                    .map(|(i, &m)| point(i, n, n1, self.epsilon, m))
                    .collect()
            }
            Some(Sweep::N(v)) => v
                .iter()
                .enumerate()
                .map(|(i, &n)| {
                    Ok(point(
                        i,
                        n,
                        self.share.resolve(n)?,
                        self.epsilon,
                        self.m_max,
                    ))
                })
                .collect::<Result<_>>()?,
            Some(Sweep::Ratio(v)) => v
                .iter()
                .enumerate()
                .map(|(i, &r)| {
                    let n1 = Share::Ratio(r).resolve(self.n)?;
                    Ok(point(i, self.n, n1, self.epsilon, self.m_max))
                })
                .collect::<Result<_>>()?,
        })
    }
}

/// Per-point detail that does not fit the CSV: all deciles, estimate mean, failures.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointReport {
    pub index: usize,
    pub mechanism: &'static str,
    pub n: usize,
    pub n1: usize,
    pub epsilon: f64,
    pub m_max: usize,
    pub status: &'static str,
    pub error: Option<String>,
    pub path: Option<&'static str>,
    pub p: Option<f64>,
    pub rho: Option<f64>,
    pub mse_std_error: Option<f64>,
    pub mean_estimate: Option<f64>,
    pub estimate_std_error: Option<f64>,
    /// 10th through 90th percentile of per-trial ARE.
    pub are_deciles: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentOutput {
    pub rows: Vec<MetricsRow>,
    pub points: Vec<PointReport>,
}

enum Setup {
    Rr {
        p: f64,
    },
    Jrr {
        params: PerturbParams,
        path: JrrPath,
    },
}

enum JrrPath {
    Sampler(SamplerConfig),
    Direct(JointTable),
}

impl Setup {
    fn rr(p: f64) -> Result<Self> {
        PerturbParams::rr(p)?;
        Ok(Setup::Rr { p })
    }

    /// The sampler is used whenever it exists (`rho <= 0`).
    fn jrr(params: PerturbParams) -> Result<Self> {
        let path = if params.rho() <= 0.0 {
            JrrPath::Sampler(SamplerConfig::new(&params)?)
        } else {
            JrrPath::Direct(JointTable::new(&params)?)
        };
        Ok(Setup::Jrr { params, path })
    }

    fn name(&self) -> &'static str {
        match self {
            Setup::Rr { .. } => "rr",
            Setup::Jrr { .. } => "jrr",
        }
    }

    fn path(&self) -> &'static str {
        match self {
            Setup::Rr { .. } => "rr",
            Setup::Jrr {
                path: JrrPath::Sampler(_),
                ..
            } => "sampler",
            Setup::Jrr {
                path: JrrPath::Direct(_),
                ..
            } => "direct-joint",
        }
    }

    fn p(&self) -> f64 {
        match self {
            Setup::Rr { p } => *p,
            Setup::Jrr { params, .. } => params.p(),
        }
    }

    fn rho(&self) -> f64 {
        match self {
            Setup::Rr { .. } => 0.0,
            Setup::Jrr { params, .. } => params.rho(),
        }
    }

    fn var_closed(&self, n: usize, n1: usize) -> Result<f64> {
        match self {
            Setup::Rr { p } => Ok(rr_variance(n, *p)),
            Setup::Jrr { params, .. } => jrr_variance(n, n1, params.p(), params.rho()),
        }
    }
}

struct TrialOutcome {
    n_hat1: f64,
    mse: f64,
    are: f64,
}

fn run_trial(values: &[bool], n1: usize, setup: &Setup, seed: u64) -> Result<TrialOutcome> {
    let n = values.len();
    let mut noise = ChaCha8Rng::seed_from_u64(seed);
    noise.set_stream(0);
    let ones = match setup {
        Setup::Rr { p } => values
            .iter()
            .filter(|&&x| apply_truth(x, noise.gen::<f64>() < *p))
            .count(),
        Setup::Jrr { params, path } => {
            let mut structure = ChaCha8Rng::seed_from_u64(seed);
            structure.set_stream(1);
            let pairing = random_pairing(n, &mut structure)?;
            let reports = match path {
                JrrPath::Sampler(cfg) => {
                    let signs = assign_r(&pairing, &mut structure);
                    perturb_bits_sampler(values, &signs, cfg, params.p(), &mut noise)
                }
                JrrPath::Direct(table) => {
                    perturb_bits_direct(values, &pairing, table, params.p(), &mut noise)
                }
            };
            reports.iter().filter(|&&r| r).count()
        }
    };
    let (p, q) = (setup.p(), 1.0 - setup.p());
    let n_hat = [estimate(n - ones, n, p, q)?, estimate(ones, n, p, q)?];
    let truths = [n - n1, n1];
    Ok(TrialOutcome {
        n_hat1: n_hat[1],
        mse: mse(&n_hat, &truths)?,
        are: are(&n_hat, &truths)?,
    })
}

fn mean_and_se(xs: impl Iterator<Item = f64> + Clone, count: usize) -> (f64, f64) {
    let c = count as f64;
    let mean = xs.clone().sum::<f64>() / c;
    if count < 2 {
        return (mean, f64::NAN);
    }
    let var = xs.map(|x| (x - mean) * (x - mean)).sum::<f64>() / (c - 1.0);
    (mean, (var / c).sqrt())
}

struct PointResult {
    row: MetricsRow,
    report: PointReport,
}

fn failed(cfg: &ExperimentConfig, pt: &Point, name: &'static str, err: &Error) -> PointResult {
    PointResult {
        row: MetricsRow {
            mechanism: name.to_owned(),
            n: pt.n,
            n1: pt.n1,
            epsilon: pt.epsilon,
            m_max: pt.m_max,
            p: None,
            rho: None,
            trials: cfg.trials,
            seed: cfg.seed,
            mse: None,
            are: None,
            var_closed: None,
            are_p10: None,
            are_p50: None,
            are_p90: None,
            ri: None,
        },
        report: PointReport {
            index: pt.index,
            mechanism: name,
            n: pt.n,
            n1: pt.n1,
            epsilon: pt.epsilon,
            m_max: pt.m_max,
            status: "failed",
            error: Some(err.to_string()),
            path: None,
            p: None,
            rho: None,
            mse_std_error: None,
            mean_estimate: None,
            estimate_std_error: None,
            are_deciles: Vec::new(),
        },
    }
}

fn simulate(
    cfg: &ExperimentConfig,
    pt: &Point,
    values: &[bool],
    setup: &Setup,
) -> Result<PointResult> {
    let outcomes = (0..cfg.trials)
        .into_par_iter()
        .map(|t| {
            run_trial(
                values,
                pt.n1,
                setup,
                trial_seed(cfg.seed, pt.index as u64, t as u64),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let count = outcomes.len();
    let (mse_mean, mse_se) = mean_and_se(outcomes.iter().map(|o| o.mse), count);
    let (are_mean, _) = mean_and_se(outcomes.iter().map(|o| o.are), count);
    let (est_mean, est_se) = mean_and_se(outcomes.iter().map(|o| o.n_hat1), count);
    let mut ares: Vec<f64> = outcomes.iter().map(|o| o.are).collect();
    ares.sort_by(f64::total_cmp);
    let deciles: Vec<f64> = (1..=9)
        .map(|d| percentile_sorted(&ares, d as f64 / 10.0).unwrap_or(f64::NAN))
        .collect();
    let var_closed = setup.var_closed(pt.n, pt.n1)?;
    Ok(PointResult {
        row: MetricsRow {
            mechanism: setup.name().to_owned(),
            n: pt.n,
            n1: pt.n1,
            epsilon: pt.epsilon,
            m_max: pt.m_max,
            p: Some(setup.p()),
            rho: Some(setup.rho()),
            trials: cfg.trials,
            seed: cfg.seed,
            mse: Some(mse_mean),
            are: Some(are_mean),
            var_closed: Some(var_closed),
            are_p10: Some(deciles[0]),
            are_p50: Some(deciles[4]),
            are_p90: Some(deciles[8]),
            ri: None,
        },
        report: PointReport {
            index: pt.index,
            mechanism: setup.name(),
            n: pt.n,
            n1: pt.n1,
            epsilon: pt.epsilon,
            m_max: pt.m_max,
            status: "ok",
            error: None,
            path: Some(setup.path()),
            p: Some(setup.p()),
            rho: Some(setup.rho()),
            mse_std_error: Some(mse_se),
            mean_estimate: Some(est_mean),
            estimate_std_error: Some(est_se),
            are_deciles: deciles,
        },
    })
}

fn jrr_params(cfg: &ExperimentConfig, pt: &Point) -> Result<PerturbParams> {
    let budget = PrivacyBudget::new(pt.epsilon, pt.m_max, pt.n)?;
    let found = search_params_with(&budget, &cfg.search, cfg.strategy).ok_or_else(|| {
        invalid(format!(
            "no feasible (p, rho) on the search grid for epsilon = {}, M = {}, n = {}",
            pt.epsilon, pt.m_max, pt.n
        ))
    })?;
    PerturbParams::binary(found.p, found.rho)
}

fn run_point(cfg: &ExperimentConfig, pt: &Point) -> Vec<PointResult> {
    let wanted: &[&'static str] = match cfg.mechanism {
        MechanismChoice::Rr => &["rr"],
        MechanismChoice::Jrr => &["jrr"],
        MechanismChoice::Both => &["rr", "jrr"],
    };
    let values = match &cfg.dataset {
        Some(d) => Ok(d.values.clone()),
        None => synthesize(
            pt.n,
            pt.n1,
            trial_seed(cfg.seed, pt.index as u64, POPULATION_TAG),
        ),
    };
    let values = match values {
        Ok(v) => v,
        Err(e) => return wanted.iter().map(|&m| failed(cfg, pt, m, &e)).collect(),
    };
    let needs_jrr = wanted.contains(&"jrr") || cfg.baseline == RrBaseline::MatchedP;
    let jrr = if needs_jrr {
        Some(jrr_params(cfg, pt))
    } else {
        None
    };
    let mut results: Vec<PointResult> = wanted
        .iter()
        .map(|&m| {
            let setup = if m == "rr" {
                match (cfg.baseline, &jrr) {
                    (RrBaseline::MatchedP, Some(Ok(params))) => Setup::rr(params.p()),
                    (RrBaseline::MatchedP, Some(Err(e))) => {
                        Err(invalid(format!("matched-p baseline: {e}")))
                    }
                    _ => Setup::rr(rr_keep_probability(pt.epsilon)),
                }
            } else {
                match jrr.as_ref().expect("jrr params resolved") {
                    Ok(params) => Setup::jrr(*params),
                    Err(e) => Err(invalid(e.to_string())),
                }
            };
            match setup.and_then(|s| simulate(cfg, pt, &values, &s)) {
                Ok(r) => r,
                Err(e) => failed(cfg, pt, m, &e),
            }
        })
        .collect();
    if let [rr, jrr] = results.as_mut_slice() {
        if let (Some(a), Some(b)) = (jrr.row.mse, rr.row.mse) {
            jrr.row.ri = relative_increase(a, b).ok();
        }
    }
    results
}

/// Runs every sweep point in order, handing each finished point's rows to
/// `sink` before starting the next. Failed points yield rows with empty
/// metric cells and do not stop the sweep.
pub fn run_experiment_streaming(
    cfg: &ExperimentConfig,
    mut sink: impl FnMut(&[MetricsRow]) -> Result<()>,
) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let mut out = ExperimentOutput {
        rows: Vec::new(),
        points: Vec::new(),
    };
    for pt in cfg.points()? {
        let results = run_point(cfg, &pt);
        let rows: Vec<MetricsRow> = results.iter().map(|r| r.row.clone()).collect();
        sink(&rows)?;
        out.rows.extend(rows);
        out.points.extend(results.into_iter().map(|r| r.report));
    }
    Ok(out)
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    run_experiment_streaming(cfg, |_| Ok(()))
}

/// CSV writer that always emits the header, even for zero rows.
pub fn write_csv<W: Write>(rows: &[MetricsRow], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(out);
    w.write_record(CSV_HEADER.split(','))?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct Sidecar<'a> {
    tool: &'static str,
    version: &'static str,
    config: &'a ExperimentConfig,
    csv_header: &'static str,
    seeding: &'static str,
    are_note: &'static str,
    feasibility_slack: f64,
    ratio_grid_step: Option<f64>,
    points: &'a [PointReport],
}

/// JSON metadata accompanying a CSV: config echo, version, seeding scheme.
pub fn write_sidecar<W: Write>(
    cfg: &ExperimentConfig,
    output: &ExperimentOutput,
    out: W,
) -> Result<()> {
    let ratio_grid_step = match &cfg.sweep {
        Some(Sweep::Ratio(v)) if v.len() >= 2 => Some(v[1] - v[0]),
        _ => None,
    };
    let sidecar = Sidecar {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        config: cfg,
        csv_header: CSV_HEADER,
        seeding: SEEDING_NOTE,
        are_note: ARE_NOTE,
        feasibility_slack: FEASIBILITY_SLACK,
        ratio_grid_step,
        points: &output.points,
    };
    serde_json::to_writer_pretty(out, &sidecar)?;
    Ok(())
}

/// Mean over random pairings of the exact conditional MSE given the pairing,
/// with its standard error. Averages out the perturbation noise analytically,
/// leaving only the pairing-to-pairing spread.
pub fn pairing_averaged_mse(
    values: &[bool],
    params: &PerturbParams,
    samples: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    if samples == 0 {
        return Err(invalid("need at least one pairing sample"));
    }
    let vars = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(trial_seed(seed, PAIRING_SAMPLE_TAG, i as u64));
            let pairing = random_pairing(values.len(), &mut rng)?;
            conditional_estimator_variance(values, &pairing, params)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(mean_and_se(vars.iter().copied(), samples))
}
