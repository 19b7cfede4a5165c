//! Joint randomized response (JRR).
//!
//! Contributors holding a private bit are split into random disjoint pairs.
//! Each pair draws its two "report truthfully" indicators from a correlated
//! 2x2 distribution whose marginals equal classical randomized response, so
//! every individual report looks exactly like an RR report while the negative
//! correlation inside a pair cancels part of the estimation noise.
//!
//! Modules:
//!
//! - [`mechanisms`]: RR, the JRR joint table, the C/R sampler instantiation,
//!   k-ary JRR and the OUE bit-vector integration.
//! - [`grouping`]: random pairings, sign assignment and whole-cohort perturbation.
//! - [`estimation`]: the unbiased count estimator, closed-form variances and metrics.
//! - [`privacy`]: the collusion-aware privacy bound and the `(p, rho)` grid search.
//! - [`oracle`]: exact brute-force enumeration used to verify all of the above.
//! - [`harness`]: datasets, synthetic cohorts, and the experiment runner behind the CLI.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod estimation;
pub mod grouping;
pub mod harness;
pub mod mechanisms;
pub mod oracle;
pub mod privacy;

pub use error::{Error, Result};
pub use mechanisms::{JointTable, PerturbParams, SamplerConfig};

/// Absolute tolerance used when validating probabilities.
pub const PROB_TOL: f64 = 1e-12;
