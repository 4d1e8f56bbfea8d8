//! Generalized principal component analysis for matrix factor models
//! `X_t = R F_t Cᵀ + E_t` with separable noise covariance `V⊗U`.
//!
//! The crate provides the estimators (α-PCA, PE, Oracle GPCA, data-driven
//! GPCA), adaptive thresholding of the row and column covariances, the
//! Monte Carlo data-generating processes, and a rolling out-of-sample
//! evaluation on panel data.

pub mod covariance;
pub mod error;
pub mod estimators;
pub mod evaluation;
pub mod linalg;
pub mod model;
pub mod pipeline;
pub mod simulation;

pub use covariance::{
    data_driven_gpca, data_driven_gpca_with_pilot, estimate_separable_cov, CovarianceEstimate, Side, ThresholdConfig,
    ThresholdedCovariance,
};
pub use error::{GpcaError, Result};
pub use estimators::{
    alpha_pca_estimate, alpha_pca_init, closed_form_factor, closed_form_factors, common_components, oracle_gpca,
    pe_estimate, Initialization, IterationOptions,
};
pub use evaluation::{PanelDataset, RollingConfig, RollingReport};
pub use pipeline::{fit_methods, FitSettings, MethodFits};
pub use linalg::{subspace_distance, DenseMatrix};
pub use model::{
    EstimationResult, FactorSeries, Identification, LoadingMatrix, MatrixSeries, Method, ScaleConvention,
    SeparableCovariance,
};
