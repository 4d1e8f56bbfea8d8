//! Runs several estimators on one dataset, sharing the PE pilot between PE
//! and data-driven GPCA.

use serde::{Deserialize, Serialize};

use crate::covariance::{self, CovarianceEstimate, ThresholdConfig};
use crate::error::{GpcaError, Result};
use crate::estimators::{self, Initialization, IterationOptions};
use crate::model::{EstimationResult, MatrixSeries, Method, SeparableCovariance};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitSettings {
    pub iteration: IterationOptions,
    pub threshold: ThresholdConfig,
}

/// Fits of the requested methods plus the covariance estimate behind GPCA.
#[derive(Debug)]
pub struct MethodFits {
    pub fits: Vec<(Method, Result<EstimationResult>)>,
    pub covariance: Option<CovarianceEstimate>,
}

impl MethodFits {
    pub fn get(&self, method: Method) -> Option<&Result<EstimationResult>> {
        self.fits.iter().find(|(m, _)| *m == method).map(|(_, r)| r)
    }
}

/// Fits every method in `methods` (in order). Per-method failures are kept
/// as errors in the output rather than aborting the others. Oracle GPCA
/// requires `oracle`.
pub fn fit_methods(
    x: &MatrixSeries,
    k1: usize,
    k2: usize,
    methods: &[Method],
    oracle: Option<&SeparableCovariance>,
    settings: &FitSettings,
) -> MethodFits {
    let opts = &settings.iteration;
    let mut gpca: Option<Result<EstimationResult>> = None;
    let mut covariance = None;
    if methods.contains(&Method::Gpca) {
        match covariance::data_driven_gpca_with_pilot(x, k1, k2, &settings.threshold, opts) {
            Ok((fit, est)) => {
                gpca = Some(Ok(fit));
                covariance = Some(est);
            }
            Err(e) => gpca = Some(Err(e)),
        }
    }
    let fits = methods
        .iter()
        .map(|&m| {
            let res = match m {
                Method::AlphaPca => estimators::alpha_pca_estimate(x, k1, k2),
                Method::Pe => match &covariance {
                    Some(est) => Ok(est.pilot.clone()),
                    None => estimators::pe_estimate(x, k1, k2, opts),
                },
                Method::OracleGpca => match oracle {
                    Some(cov) => estimators::oracle_gpca(x, cov, k1, k2, &Initialization::AlphaPca, opts),
                    None => Err(GpcaError::Config("oracle GPCA needs the true covariance pair".into())),
                },
                Method::Gpca => match gpca.take() {
                    Some(r) => r,
                    None => covariance::data_driven_gpca(x, k1, k2, &settings.threshold, opts),
                },
            };
            (m, res)
        })
        .collect();
    MethodFits { fits, covariance }
}
