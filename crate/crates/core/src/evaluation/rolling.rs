//! Rolling out-of-sample validation: refit on a trailing window every
//! period, then score the fitted common components of the next period.

use std::io;

use serde::{Deserialize, Serialize};

use super::panel::{cell_moments, check_spread, PanelDataset};
use crate::covariance;
use crate::error::{GpcaError, Result};
use crate::estimators;
use crate::linalg::{self, DenseMatrix};
use crate::model::{EstimationResult, MatrixSeries, Method};
use crate::pipeline::FitSettings;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RollingConfig {
    /// Bandwidth: number of trailing periods in each fitting window.
    pub n_years: usize,
    /// Factor count on both sides.
    pub k: usize,
    pub method: Method,
    pub months_per_period: usize,
    /// Standardize with the moments of each training window instead of
    /// expecting pre-standardized data.
    pub per_window_standardization: bool,
    pub settings: FitSettings,
}

impl Default for RollingConfig {
    fn default() -> Self {
        RollingConfig {
            n_years: 5,
            k: 2,
            method: Method::Gpca,
            months_per_period: 12,
            per_window_standardization: false,
            settings: FitSettings::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct YearRecord {
    /// Date label of the first observation in the period.
    pub year: String,
    pub mse: f64,
    pub rho: f64,
    /// Loading drift against the previous period; absent for the first one.
    pub upsilon: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RollingReport {
    pub config: RollingConfig,
    pub records: Vec<YearRecord>,
    pub mean_mse: f64,
    pub mean_rho: f64,
    pub mean_upsilon: Option<f64>,
    pub warnings: Vec<String>,
}

impl RollingReport {
    /// `year,mse,rho,upsilon` per period plus a `mean` row; an undefined
    /// upsilon is an empty field.
    pub fn write_csv<W: io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let fmt = |x: f64| format!("{x:.16e}");
        let fmt_opt = |x: Option<f64>| x.map(fmt).unwrap_or_default();
        let err = |e: csv::Error| GpcaError::Data(e.to_string());
        out.write_record(["year", "mse", "rho", "upsilon"]).map_err(err)?;
        for r in &self.records {
            out.write_record([r.year.clone(), fmt(r.mse), fmt(r.rho), fmt_opt(r.upsilon)]).map_err(err)?;
        }
        out.write_record(["mean".to_string(), fmt(self.mean_mse), fmt(self.mean_rho), fmt_opt(self.mean_upsilon)])
            .map_err(err)?;
        out.flush()?;
        Ok(())
    }
}

/// Loadings fitted on one window and the fitted common components of the
/// evaluation months.
#[derive(Debug, Clone)]
pub struct PeriodFit {
    pub r: DenseMatrix,
    pub c: DenseMatrix,
    pub fitted: Vec<DenseMatrix>,
}

/// Mean squared error per entry and the unexplained share of the
/// within-period variation.
pub fn period_metrics(observed: &[DenseMatrix], fitted: &[DenseMatrix]) -> Result<(f64, f64)> {
    if observed.is_empty() || observed.len() != fitted.len() {
        return Err(GpcaError::Dimension(format!("{} observed vs {} fitted matrices", observed.len(), fitted.len())));
    }
    let (p1, p2) = observed[0].shape();
    let mut mean = DenseMatrix::zeros(p1, p2);
    for y in observed {
        mean += y;
    }
    mean /= observed.len() as f64;
    let mut err = 0.0;
    let mut total = 0.0;
    for (y, f) in observed.iter().zip(fitted) {
        if y.shape() != f.shape() || y.shape() != (p1, p2) {
            return Err(GpcaError::Dimension("fitted and observed shapes differ".into()));
        }
        err += (f - y).norm_squared();
        total += (y - &mean).norm_squared();
    }
    if !(total > 0.0) {
        return Err(GpcaError::Data("observations do not vary within the period".into()));
    }
    Ok((err / (observed.len() * p1 * p2) as f64, err / total))
}

/// `D(C₁⊗R₁, C₀⊗R₀)`, the drift of the joint loading space.
pub fn loading_drift(r_prev: &DenseMatrix, c_prev: &DenseMatrix, r: &DenseMatrix, c: &DenseMatrix) -> Result<f64> {
    linalg::subspace_distance(&c.kronecker(r), &c_prev.kronecker(r_prev))
}

/// Fits `method` and returns the loadings plus the fitted covariance used
/// for the out-of-window factors.
fn fit_window(train: &MatrixSeries, cfg: &RollingConfig) -> Result<EstimationResult> {
    let (k, s) = (cfg.k, &cfg.settings);
    match cfg.method {
        Method::Gpca => covariance::data_driven_gpca(train, k, k, &s.threshold, &s.iteration),
        Method::Pe => estimators::pe_estimate(train, k, k, &s.iteration),
        Method::AlphaPca => estimators::alpha_pca_estimate(train, k, k),
        Method::OracleGpca => Err(GpcaError::Config("oracle GPCA needs the true covariance, unavailable for panel data".into())),
    }
}

/// Rolling validation with the configured estimator. Factors of the
/// evaluation months come from the closed-form factor formula with the
/// loadings and covariance fitted on the trailing window.
pub fn rolling_validate(d: &PanelDataset, cfg: &RollingConfig) -> Result<RollingReport> {
    rolling_validate_with(d, cfg, |train, eval| {
        let fit = fit_window(train, cfg)?;
        let factors = estimators::closed_form_factors(eval, &fit.r_hat, &fit.c_hat, &fit.covariance)?;
        let fitted = estimators::common_components(&fit.r_hat, &factors, &fit.c_hat)?;
        Ok((
            PeriodFit { r: fit.r_hat.into_inner(), c: fit.c_hat.into_inner(), fitted: fitted.into_inner() },
            fit.warnings,
        ))
    })
}

/// Rolling validation with a caller-supplied fit. `fit` receives the
/// training window and the evaluation months and never sees later data.
///
/// Periods are consecutive blocks of `months_per_period` observations from
/// the start of the sample; a trailing partial block is ignored.
pub fn rolling_validate_with<F>(d: &PanelDataset, cfg: &RollingConfig, mut fit: F) -> Result<RollingReport>
where
    F: FnMut(&MatrixSeries, &MatrixSeries) -> Result<(PeriodFit, Vec<String>)>,
{
    if cfg.n_years == 0 || cfg.months_per_period == 0 || cfg.k == 0 {
        return Err(GpcaError::Config("n_years, months_per_period and k must be positive".into()));
    }
    if d.missing_count() > 0 {
        return Err(GpcaError::Data(format!("{} missing entries; impute before validation", d.missing_count())));
    }
    let mpp = cfg.months_per_period;
    let periods = d.len() / mpp;
    if periods <= cfg.n_years {
        return Err(GpcaError::Config(format!(
            "{} observations give {periods} full periods; a bandwidth of {} needs at least {}",
            d.len(),
            cfg.n_years,
            cfg.n_years + 1
        )));
    }
    let all = d.values().as_slice();
    let mut records = Vec::with_capacity(periods - cfg.n_years);
    let mut warnings = Vec::new();
    let mut prev: Option<(DenseMatrix, DenseMatrix)> = None;
    for period in cfg.n_years..periods {
        let start = period * mpp;
        let mut train = all[start - cfg.n_years * mpp..start].to_vec();
        let mut eval = all[start..start + mpp].to_vec();
        if cfg.per_window_standardization {
            let (mean, sd) = cell_moments(&train);
            check_spread(&mean, &sd, d.row_labels(), d.col_labels())?;
            for m in train.iter_mut().chain(eval.iter_mut()) {
                *m = (&*m - &mean).component_div(&sd);
            }
        }
        let (pf, w) = fit(&MatrixSeries::new(train)?, &MatrixSeries::new(eval.clone())?)?;
        warnings.extend(w.into_iter().map(|s| format!("{}: {s}", d.dates()[start])));
        let (mse, rho) = period_metrics(&eval, &pf.fitted)?;
        let upsilon = match &prev {
            Some((r0, c0)) => Some(loading_drift(r0, c0, &pf.r, &pf.c)?),
            None => None,
        };
        records.push(YearRecord { year: d.dates()[start].clone(), mse, rho, upsilon });
        prev = Some((pf.r, pf.c));
    }
    let n = records.len() as f64;
    let mean_mse = records.iter().map(|r| r.mse).sum::<f64>() / n;
    let mean_rho = records.iter().map(|r| r.rho).sum::<f64>() / n;
    let ups: Vec<f64> = records.iter().filter_map(|r| r.upsilon).collect();
    let mean_upsilon = (!ups.is_empty()).then(|| ups.iter().sum::<f64>() / ups.len() as f64);
    Ok(RollingReport { config: cfg.clone(), records, mean_mse, mean_rho, mean_upsilon, warnings })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn randn(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
        DMatrix::from_fn(r, c, |_, _| rng.sample(StandardNormal))
    }

    fn panel(seed: u64, months: usize) -> PanelDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r = randn(&mut rng, 6, 2);
        let c = randn(&mut rng, 5, 2);
        let xs = (0..months).map(|_| &r * randn(&mut rng, 2, 2) * c.transpose() + randn(&mut rng, 6, 5) * 0.3).collect();
        PanelDataset::from_series(MatrixSeries::new(xs).unwrap())
    }

    fn quick(method: Method) -> RollingConfig {
        let mut cfg = RollingConfig { n_years: 2, k: 2, method, months_per_period: 6, ..Default::default() };
        cfg.settings.threshold.h = 2;
        cfg
    }

    #[test]
    fn exact_and_mean_predictions() {
        let d = panel(1, 30);
        let cfg = quick(Method::Pe);
        let exact = rolling_validate_with(&d, &cfg, |_, eval| {
            Ok((PeriodFit { r: DMatrix::identity(6, 2), c: DMatrix::identity(5, 2), fitted: eval.as_slice().to_vec() }, vec![]))
        })
        .unwrap();
        assert_eq!(exact.records.len(), 3);
        assert!(exact.records.iter().all(|r| r.mse == 0.0 && r.rho == 0.0 && r.upsilon.map_or(true, |u| u == 0.0)));
        assert_eq!(exact.records[0].upsilon, None);
        assert_eq!(exact.records[0].year, "13");
        let mean = rolling_validate_with(&d, &cfg, |_, eval| {
            let mut m = DMatrix::zeros(6, 5);
            for y in eval.iter() {
                m += y;
            }
            m /= eval.len() as f64;
            Ok((PeriodFit { r: DMatrix::identity(6, 2), c: DMatrix::identity(5, 2), fitted: vec![m; eval.len()] }, vec![]))
        })
        .unwrap();
        assert!(mean.records.iter().all(|r| (r.rho - 1.0).abs() < 1e-12));
    }

    #[test]
    fn no_lookahead() {
        let d = panel(2, 36);
        let mut poisoned: Vec<DMatrix<f64>> = d.values().as_slice().to_vec();
        for m in poisoned.iter_mut().skip(30) {
            *m *= 1e3;
        }
        let p = d.with_values(MatrixSeries::new(poisoned).unwrap()).unwrap();
        for method in [Method::Pe, Method::Gpca] {
            let a = rolling_validate(&d, &quick(method)).unwrap();
            let b = rolling_validate(&p, &quick(method)).unwrap();
            assert_eq!(a.records[..3], b.records[..3]);
            assert_ne!(a.records[3], b.records[3]);
        }
    }

    #[test]
    fn rho_is_scale_invariant_and_metrics_are_bounded() {
        let d = panel(3, 30);
        let scaled = d.with_values(d.values().map(|m| m * -7.5).unwrap()).unwrap();
        let a = rolling_validate(&d, &quick(Method::Pe)).unwrap();
        let b = rolling_validate(&scaled, &quick(Method::Pe)).unwrap();
        for (x, y) in a.records.iter().zip(&b.records) {
            assert!((x.rho - y.rho).abs() < 1e-9 * x.rho.max(1.0));
            assert!(x.rho >= 0.0);
            assert!(x.upsilon.map_or(true, |u| (0.0..=1.0).contains(&u)));
        }
        let mut buf = Vec::new();
        a.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("year,mse,rho,upsilon\n13,"));
        assert!(text.lines().last().unwrap().starts_with("mean,"));
        assert_eq!(text.lines().nth(1).unwrap().split(',').nth(3), Some(""));
    }

    #[test]
    fn guards() {
        let d = panel(4, 20);
        assert!(matches!(rolling_validate(&d, &RollingConfig { months_per_period: 10, ..quick(Method::Pe) }), Err(GpcaError::Config(_))));
        assert!(matches!(rolling_validate(&d, &quick(Method::OracleGpca)), Err(GpcaError::Config(_))));
        let per = RollingConfig { per_window_standardization: true, ..quick(Method::AlphaPca) };
        assert_eq!(rolling_validate(&d, &per).unwrap().records.len(), 1);
    }

    proptest! {
        #[test]
        fn drift_ignores_basis_changes(seed in 0u64..500, a in 0.5f64..3.0, b in -2.0f64..2.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (r0, c0, r1, c1) = (randn(&mut rng, 6, 2), randn(&mut rng, 5, 2), randn(&mut rng, 6, 2), randn(&mut rng, 5, 2));
            let g = DMatrix::from_row_slice(2, 2, &[a, b, 0.0, 1.0 / a]);
            let base = loading_drift(&r0, &c0, &r1, &c1).unwrap();
            let moved = loading_drift(&(&r0 * &g), &c0, &r1, &(&c1 * g.transpose())).unwrap();
            prop_assert!((base - moved).abs() < 1e-10);
            prop_assert!((0.0..=1.0).contains(&base));
        }
    }
}
