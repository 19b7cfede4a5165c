//! Datasets, synthetic cohorts and the experiment runner behind the CLI.

mod dataset;
mod experiment;

pub use dataset::{
    load_dataset, synthesize, write_bit_lines, Dataset, DatasetFormat, DatasetSummary,
};
pub use experiment::{
    pairing_averaged_mse, run_experiment, run_experiment_streaming, trial_seed, write_csv,
    write_sidecar, ExperimentConfig, ExperimentOutput, MechanismChoice, PointReport, RrBaseline,
    Share, Sweep, CSV_HEADER,
};

/// SplitMix64 finalizer; used to derive independent seeds from a master seed.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
