//! Synthetic data, Monte Carlo tables and the loading normality experiment.

pub mod dgp;
pub mod experiment;
pub mod normality;

pub use dgp::{gen_cov, gen_series, mse_common, CovCase, DgpConfig, GroundTruth, NoiseDraw};
pub use experiment::{mean_sd, replication_seed, run_monte_carlo, Metric, ReportRow, ReportTable, Setting};
pub use normality::{
    align_rotation, asymptotic_variance_r, histogram, ks_distance, normality_experiment, AsymptoticVariance,
    NormalityReport, RotationAlignment,
};
