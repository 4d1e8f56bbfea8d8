//! Residual-based estimation of the separable covariance pair `(U, V)` by
//! adaptive soft thresholding, with cross-validated threshold constants.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{GpcaError, Result};
use crate::estimators::{self, Initialization, IterationOptions};
use crate::linalg::{self, DenseMatrix};
use crate::model::{EstimationResult, LoadingMatrix, MatrixSeries, Method, ScaleConvention, SeparableCovariance};

/// Which covariance factor is being estimated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    /// `U`, the `p₁×p₁` row covariance.
    Row,
    /// `V`, the `p₂×p₂` column covariance.
    Col,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ThresholdConfig {
    /// Fixed row constant; selected by cross-validation when absent.
    pub c_r: Option<f64>,
    /// Fixed column constant; selected by cross-validation when absent.
    pub c_c: Option<f64>,
    /// Number of random cross-validation splits.
    pub h: usize,
    /// Strictly increasing candidate constants.
    pub grid: Vec<f64>,
    /// Constant at which the estimate is treated as fully diagonal. When
    /// absent, the smallest diagonalizing grid value is used.
    pub m_cap: Option<f64>,
    pub pd_tolerance: f64,
    pub cv_seed: u64,
}

impl Default for ThresholdConfig {
    fn default() -> Self {
        ThresholdConfig {
            c_r: None,
            c_c: None,
            h: 10,
            grid: (0..=40).map(|i| i as f64 / 10.0).collect(),
            m_cap: None,
            pd_tolerance: linalg::PD_TOLERANCE,
            cv_seed: 0,
        }
    }
}

impl ThresholdConfig {
    pub fn validate(&self) -> Result<()> {
        if self.grid.is_empty() {
            return Err(GpcaError::Config("threshold grid is empty".into()));
        }
        if self.grid.iter().any(|c| !c.is_finite() || *c < 0.0) {
            return Err(GpcaError::Config("threshold grid values must be finite and nonnegative".into()));
        }
        if self.grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(GpcaError::Config("threshold grid must be strictly increasing".into()));
        }
        if self.h == 0 {
            return Err(GpcaError::Config("number of cross-validation splits must be at least 1".into()));
        }
        for c in [self.c_r, self.c_c, self.m_cap].into_iter().flatten() {
            if !c.is_finite() || c < 0.0 {
                return Err(GpcaError::Config(format!("threshold constant {c} must be finite and nonnegative")));
            }
        }
        if !(self.pd_tolerance >= 0.0) {
            return Err(GpcaError::Config("pd_tolerance must be nonnegative".into()));
        }
        Ok(())
    }
}

/// A soft-thresholded sample covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdedCovariance {
    pub matrix: DenseMatrix,
    pub chosen_constant: f64,
    /// The rate `ω_T` of the side.
    pub omega: f64,
    /// Entry-wise variance proxies `θ̃ᵢⱼ`.
    pub theta: DenseMatrix,
    /// Fraction of off-diagonal entries that are exactly zero.
    pub sparsity: f64,
}

/// `Ë_t = X_t − R̈ (R̈ᵀX_tC̈/(p₁p₂)) C̈ᵀ`.
pub fn residual_series(x: &MatrixSeries, r: &LoadingMatrix, c: &LoadingMatrix) -> Result<MatrixSeries> {
    let (p1, p2) = x.shape();
    if r.nrows() != p1 || c.nrows() != p2 {
        return Err(GpcaError::Dimension(format!(
            "loadings {}x{} / {}x{} do not match {p1}x{p2} observations",
            r.nrows(),
            r.ncols(),
            c.nrows(),
            c.ncols()
        )));
    }
    let (rv, cv) = (r.values(), c.values());
    let rt = rv.transpose();
    let ct = cv.transpose();
    let scale = 1.0 / (p1 * p2) as f64;
    x.map(|xt| {
        let f = &rt * xt * cv * scale;
        xt - rv * f * &ct
    })
}

/// `Ũ = (Tp₂)⁻¹ Σ_t E_t E_tᵀ`.
pub fn sample_row_cov(e: &MatrixSeries) -> DenseMatrix {
    let eh = e.hstack();
    linalg::symmetrize(&(&eh * eh.transpose() / (e.len() * e.cols()) as f64))
}

/// `Ṽ = (Tp₁)⁻¹ Σ_t E_tᵀ E_t`.
pub fn sample_col_cov(e: &MatrixSeries) -> DenseMatrix {
    let ev = e.vstack();
    linalg::symmetrize(&(ev.transpose() * &ev / (e.len() * e.rows()) as f64))
}

/// `ω_T` for the given side and dimensions.
pub fn omega(side: Side, t: usize, p1: usize, p2: usize) -> f64 {
    let (t, p1, p2) = (t as f64, p1 as f64, p2 as f64);
    let tail = 1.0 / (p1 * p2).sqrt();
    match side {
        Side::Row => (p1.ln() / (t * p2)).sqrt() + 1.0 / (t * p1).sqrt() + tail,
        Side::Col => (p2.ln() / (t * p1)).sqrt() + 1.0 / (t * p2).sqrt() + tail,
    }
}

/// Residuals arranged so that one side's covariance is a Gram matrix:
/// `p × n` where each column is one residual vector of that side.
fn side_layout(e: &MatrixSeries, side: Side) -> DenseMatrix {
    match side {
        Side::Row => e.hstack(),
        Side::Col => e.vstack().transpose(),
    }
}

/// Sums `Σ e eᵀ` and `Σ (e∘e)(e∘e)ᵀ` over the residual vectors of one side.
#[derive(Debug, Clone)]
struct Moments {
    prod: DenseMatrix,
    sq: DenseMatrix,
}

impl Moments {
    fn from_layout(m: &DenseMatrix) -> Moments {
        let m2 = m.component_mul(m);
        Moments { prod: m * m.transpose(), sq: &m2 * m2.transpose() }
    }

    fn minus(&self, other: &Moments) -> Moments {
        Moments { prod: &self.prod - &other.prod, sq: &self.sq - &other.sq }
    }
}

/// `θ̃ᵢⱼ = n⁻¹ Σ (eᵢeⱼ − ũᵢⱼ)²` from the moment sums, for an arbitrary
/// centring matrix `ũ`; negative rounding residue is clamped at zero.
fn theta_from(moments: &Moments, n: f64, centre: &DenseMatrix) -> DenseMatrix {
    let p = centre.nrows();
    DMatrix::from_fn(p, p, |i, j| {
        let (a, b) = if i <= j { (i, j) } else { (j, i) };
        let u = centre[(a, b)];
        let v = moments.sq[(a, b)] / n - 2.0 * u * moments.prod[(a, b)] / n + u * u;
        v.max(0.0)
    })
}

/// Everything needed to threshold one side at any constant.
#[derive(Debug, Clone)]
struct SideProblem {
    sample: DenseMatrix,
    /// `√θ̃ᵢⱼ · ω_T`, so the threshold at constant C is `C · scale`.
    scale: DenseMatrix,
    theta: DenseMatrix,
    omega: f64,
}

impl SideProblem {
    fn new(sample: DenseMatrix, theta: DenseMatrix, omega: f64) -> SideProblem {
        let scale = theta.map(|v| v.sqrt() * omega);
        SideProblem { sample, scale, theta, omega }
    }

    fn from_moments(moments: &Moments, n: f64, omega: f64) -> SideProblem {
        let sample = linalg::symmetrize(&(&moments.prod / n));
        let theta = theta_from(moments, n, &sample);
        SideProblem::new(sample, theta, omega)
    }

    fn entry(&self, i: usize, j: usize, c: f64) -> f64 {
        let (a, b) = if i <= j { (i, j) } else { (j, i) };
        let z = self.sample[(a, b)];
        if a == b {
            return z;
        }
        soft(z, c * self.scale[(a, b)])
    }

    fn matrix(&self, c: f64) -> DenseMatrix {
        let p = self.sample.nrows();
        DMatrix::from_fn(p, p, |i, j| self.entry(i, j, c))
    }

    fn threshold(&self, c: f64) -> ThresholdedCovariance {
        let matrix = self.matrix(c);
        let sparsity = off_diagonal_sparsity(&matrix);
        ThresholdedCovariance { matrix, chosen_constant: c, omega: self.omega, theta: self.theta.clone(), sparsity }
    }

    fn is_diagonal_at(&self, c: f64) -> bool {
        let p = self.sample.nrows();
        (0..p).all(|j| (0..j).all(|i| self.entry(i, j, c) == 0.0))
    }

    fn check_diagonal(&self) -> Result<()> {
        for i in 0..self.sample.nrows() {
            let d = self.sample[(i, i)];
            if !(d > 0.0) {
                return Err(GpcaError::InvalidSampleCovariance { index: i, value: d });
            }
        }
        Ok(())
    }
}

fn soft(z: f64, tau: f64) -> f64 {
    let m = z.abs() - tau;
    if m > 0.0 {
        m.copysign(z)
    } else {
        0.0
    }
}

fn off_diagonal_sparsity(m: &DenseMatrix) -> f64 {
    let p = m.nrows();
    if p < 2 {
        return 1.0;
    }
    let zeros = (0..p).flat_map(|j| (0..p).map(move |i| (i, j))).filter(|&(i, j)| i != j && m[(i, j)] == 0.0).count();
    zeros as f64 / (p * (p - 1)) as f64
}

fn side_dim(e: &MatrixSeries, side: Side) -> usize {
    match side {
        Side::Row => e.rows(),
        Side::Col => e.cols(),
    }
}

/// Vectors per time point on the given side (p₂ for rows, p₁ for columns).
fn per_t(e: &MatrixSeries, side: Side) -> usize {
    match side {
        Side::Row => e.cols(),
        Side::Col => e.rows(),
    }
}

fn problem_for(sample_cov: &DenseMatrix, e: &MatrixSeries, side: Side) -> Result<SideProblem> {
    let p = side_dim(e, side);
    if sample_cov.shape() != (p, p) {
        return Err(GpcaError::Dimension(format!(
            "sample covariance is {}x{}, expected {p}x{p}",
            sample_cov.nrows(),
            sample_cov.ncols()
        )));
    }
    let moments = Moments::from_layout(&side_layout(e, side));
    let n = (e.len() * per_t(e, side)) as f64;
    let theta = theta_from(&moments, n, sample_cov);
    Ok(SideProblem::new(sample_cov.clone(), theta, omega(side, e.len(), e.rows(), e.cols())))
}

/// Soft thresholding of the off-diagonal entries of `sample_cov` at
/// `τᵢⱼ = C·√θ̃ᵢⱼ·ω_T`; the diagonal is copied unchanged.
pub fn adaptive_threshold(sample_cov: &DenseMatrix, e: &MatrixSeries, side: Side, c: f64) -> Result<ThresholdedCovariance> {
    if !(c >= 0.0) || !c.is_finite() {
        return Err(GpcaError::Config(format!("threshold constant must be finite and nonnegative, got {c}")));
    }
    Ok(problem_for(sample_cov, e, side)?.threshold(c))
}

/// Result of the positive-definiteness search over the grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PdConstant {
    pub constant: f64,
    /// False when no grid value produced a positive definite estimate; the
    /// grid maximum is returned in that case.
    pub found: bool,
}

/// Scans the grid downward and stops at the first failure, so every grid
/// value at or above the returned constant is positive definite.
fn min_pd_on(problem: &SideProblem, cfg: &ThresholdConfig) -> Result<PdConstant> {
    problem.check_diagonal()?;
    let min_diag = problem.sample.diagonal().min();
    let mut lowest = None;
    for &c in cfg.grid.iter().rev() {
        let ok = if min_diag > cfg.pd_tolerance && problem.is_diagonal_at(c) {
            true
        } else {
            linalg::is_positive_definite(&problem.matrix(c), cfg.pd_tolerance)
        };
        if !ok {
            break;
        }
        lowest = Some(c);
    }
    Ok(match lowest {
        Some(c) => PdConstant { constant: c, found: true },
        None => PdConstant { constant: *cfg.grid.last().unwrap(), found: false },
    })
}

/// Smallest grid constant `C` such that the thresholded estimate has
/// `λ_min > pd_tolerance` at `C` and at every larger grid value.
pub fn min_pd_constant(
    sample_cov: &DenseMatrix,
    e: &MatrixSeries,
    side: Side,
    cfg: &ThresholdConfig,
) -> Result<PdConstant> {
    cfg.validate()?;
    min_pd_on(&problem_for(sample_cov, e, side)?, cfg)
}

fn m_cap_on(problem: &SideProblem, cfg: &ThresholdConfig) -> f64 {
    if let Some(m) = cfg.m_cap {
        return m;
    }
    let grid_max = *cfg.grid.last().unwrap();
    cfg.grid.iter().copied().find(|&c| problem.is_diagonal_at(c)).unwrap_or(grid_max)
}

/// Smallest grid constant at which the thresholded estimate is diagonal
/// (the configured value when set, the grid maximum when none is).
pub fn m_cap(sample_cov: &DenseMatrix, e: &MatrixSeries, side: Side, cfg: &ThresholdConfig) -> Result<f64> {
    cfg.validate()?;
    Ok(m_cap_on(&problem_for(sample_cov, e, side)?, cfg))
}

/// Outcome of the cross-validated constant search for one side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvSelection {
    pub constant: f64,
    pub c_min: f64,
    pub pd_found: bool,
    pub m_cap: f64,
    /// `(C, average loss)` for every candidate examined.
    pub scores: Vec<(f64, f64)>,
}

/// `|J₁| = round(T(1 − 1/log T))`, kept inside `[1, T − 1]`.
pub fn training_size(t: usize) -> usize {
    let tf = t as f64;
    let n1 = (tf * (1.0 - 1.0 / tf.ln())).round();
    (n1.max(1.0) as usize).min(t - 1)
}

/// Selects the threshold constant by H-fold random-split cross-validation.
///
/// Candidates are the grid values in `[C_min, M_cap]`, both computed on the
/// full sample. Each split draws a uniform random permutation of the time
/// indices; the first `|J₁|` form the training set. The loss is
/// `‖Û_{J₁}(C) − Ũ_{J₂}‖²_F` averaged over splits, and ties go to the smaller C.
pub fn cross_validate_constant(e: &MatrixSeries, side: Side, cfg: &ThresholdConfig, seed: u64) -> Result<CvSelection> {
    cfg.validate()?;
    let t = e.len();
    if t < 4 {
        return Err(GpcaError::InsufficientData { needed: 4, got: t });
    }
    let layout = side_layout(e, side);
    let full = Moments::from_layout(&layout);
    let (p1, p2) = e.shape();
    let full_problem = SideProblem::from_moments(&full, (t * per_t(e, side)) as f64, omega(side, t, p1, p2));
    cv_on(&layout, &full, &full_problem, e, side, cfg, seed)
}

fn cv_on(
    layout: &DenseMatrix,
    full: &Moments,
    full_problem: &SideProblem,
    e: &MatrixSeries,
    side: Side,
    cfg: &ThresholdConfig,
    seed: u64,
) -> Result<CvSelection> {
    let t = e.len();
    if t < 4 {
        return Err(GpcaError::InsufficientData { needed: 4, got: t });
    }
    let (p1, p2) = e.shape();
    let k = per_t(e, side);
    let pd = min_pd_on(full_problem, cfg)?;
    let cap = m_cap_on(full_problem, cfg);
    let candidates: Vec<f64> = {
        let inside: Vec<f64> = cfg.grid.iter().copied().filter(|&c| c >= pd.constant && c <= cap).collect();
        if inside.is_empty() {
            vec![pd.constant]
        } else {
            inside
        }
    };
    let n1 = training_size(t);
    let n2 = t - n1;
    let p = layout.nrows();
    let mut totals = vec![0.0; candidates.len()];
    let mut order: Vec<usize> = (0..t).collect();
    for split in 0..cfg.h {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(split as u64);
        order.sort_unstable();
        order.shuffle(&mut rng);
        let mut test_idx = order[n1..].to_vec();
        test_idx.sort_unstable();
        let mut test_cols = DMatrix::zeros(p, n2 * k);
        for (slot, &s) in test_idx.iter().enumerate() {
            test_cols.columns_mut(slot * k, k).copy_from(&layout.columns(s * k, k));
        }
        let test = Moments::from_layout(&test_cols);
        let train = full.minus(&test);
        let target = &test.prod / (n2 * k) as f64;
        let problem = SideProblem::from_moments(&train, (n1 * k) as f64, omega(side, n1, p1, p2));
        let diag: f64 = (0..p).map(|i| (problem.sample[(i, i)] - target[(i, i)]).powi(2)).sum();
        for total in totals.iter_mut() {
            *total += diag;
        }
        for j in 1..p {
            for i in 0..j {
                let (z, tau, y) = (problem.sample[(i, j)], problem.scale[(i, j)], target[(i, j)]);
                for (slot, &c) in candidates.iter().enumerate() {
                    let d = soft(z, c * tau) - y;
                    totals[slot] += 2.0 * d * d;
                }
            }
        }
    }
    let scores: Vec<(f64, f64)> = candidates.iter().zip(&totals).map(|(&c, &s)| (c, s / cfg.h as f64)).collect();
    let mut best = 0;
    for (i, &(_, s)) in scores.iter().enumerate() {
        if s < scores[best].1 {
            best = i;
        }
    }
    Ok(CvSelection { constant: scores[best].0, c_min: pd.constant, pd_found: pd.found, m_cap: cap, scores })
}

/// Estimated covariance pair with the intermediate quantities that produced it.
#[derive(Debug, Clone)]
pub struct CovarianceEstimate {
    /// `(c·Û, V̂)` with `c = Tp₁p₂/Σ_t‖Ë_t‖²_F` folded into `Û`.
    pub covariance: SeparableCovariance,
    pub row: ThresholdedCovariance,
    pub col: ThresholdedCovariance,
    /// The identifiability constant `Tp₁p₂/Σ_t‖Ë_t‖²_F`.
    pub scale_constant: f64,
    pub row_cv: Option<CvSelection>,
    pub col_cv: Option<CvSelection>,
    /// The PE fit whose residuals were thresholded.
    pub pilot: EstimationResult,
    pub warnings: Vec<String>,
}

impl CovarianceEstimate {
    /// The same product estimator with the constant carried by the chosen factor.
    pub fn with_convention(&self, convention: ScaleConvention) -> Result<SeparableCovariance> {
        let (u, v) = match convention {
            ScaleConvention::ConstantOnU => (&self.row.matrix * self.scale_constant, self.col.matrix.clone()),
            ScaleConvention::ConstantOnV => (self.row.matrix.clone(), &self.col.matrix * self.scale_constant),
            ScaleConvention::AsGiven => (self.row.matrix.clone(), self.col.matrix.clone()),
        };
        SeparableCovariance::new(u, v, convention)
    }
}

/// Residual energy, relative to the data, below which the noise covariance
/// is treated as not estimable.
const NEGLIGIBLE_RESIDUAL: f64 = 1e-20;

fn identity_estimate(pilot: EstimationResult, warnings: Vec<String>) -> CovarianceEstimate {
    let (p1, p2) = (pilot.r_hat.nrows(), pilot.c_hat.nrows());
    let plain = |p: usize| ThresholdedCovariance {
        matrix: DMatrix::identity(p, p),
        chosen_constant: 0.0,
        omega: 0.0,
        theta: DMatrix::zeros(p, p),
        sparsity: 1.0,
    };
    CovarianceEstimate {
        covariance: SeparableCovariance::identity(p1, p2),
        row: plain(p1),
        col: plain(p2),
        scale_constant: 1.0,
        row_cv: None,
        col_cv: None,
        pilot,
        warnings,
    }
}

/// PE pilot, residuals, thresholded `Ũ`/`Ṽ` and the identifiability rescaling.
pub fn estimate_separable_cov(
    x: &MatrixSeries,
    k1: usize,
    k2: usize,
    cfg: &ThresholdConfig,
    opts: &IterationOptions,
) -> Result<CovarianceEstimate> {
    let pilot = estimators::pe_estimate(x, k1, k2, opts)?;
    covariance_from_pilot(x, pilot, cfg)
}

fn covariance_from_pilot(x: &MatrixSeries, pilot: EstimationResult, cfg: &ThresholdConfig) -> Result<CovarianceEstimate> {
    cfg.validate()?;
    let e = &pilot.residuals;
    let (t, p1, p2) = (x.len(), x.rows(), x.cols());
    let mut warnings = Vec::new();
    let total = e.total_sq_norm();
    if !(total > NEGLIGIBLE_RESIDUAL * x.total_sq_norm()) {
        warnings.push("residuals are negligible; using identity covariances".to_string());
        return Ok(identity_estimate(pilot, warnings));
    }
    let mut side_fit = |side: Side, fixed: Option<f64>, seed: u64| -> Result<(ThresholdedCovariance, Option<CvSelection>)> {
        let layout = side_layout(e, side);
        let moments = Moments::from_layout(&layout);
        let problem = SideProblem::from_moments(&moments, (t * per_t(e, side)) as f64, omega(side, t, p1, p2));
        problem.check_diagonal()?;
        match fixed {
            Some(c) => Ok((problem.threshold(c), None)),
            None => {
                if t < 4 {
                    return Err(GpcaError::InsufficientData { needed: 4, got: t });
                }
                let sel = cv_on(&layout, &moments, &problem, e, side, cfg, seed)?;
                if !sel.pd_found {
                    warnings.push(format!("{side:?} covariance: no grid constant gives a positive definite estimate"));
                }
                Ok((problem.threshold(sel.constant), Some(sel)))
            }
        }
    };
    let (row, row_cv) = side_fit(Side::Row, cfg.c_r, cfg.cv_seed)?;
    let (col, col_cv) = side_fit(Side::Col, cfg.c_c, cfg.cv_seed ^ 0x9e37_79b9_7f4a_7c15)?;
    let scale_constant = (t * p1 * p2) as f64 / total;
    let covariance = SeparableCovariance::new(&row.matrix * scale_constant, col.matrix.clone(), ScaleConvention::ConstantOnU)?;
    Ok(CovarianceEstimate { covariance, row, col, scale_constant, row_cv, col_cv, pilot, warnings })
}

/// Data-driven GPCA: estimate `(Û, V̂)` from PE residuals, then run the
/// whitened iteration with the estimates in place of the truth.
pub fn data_driven_gpca(
    x: &MatrixSeries,
    k1: usize,
    k2: usize,
    cfg: &ThresholdConfig,
    opts: &IterationOptions,
) -> Result<EstimationResult> {
    Ok(data_driven_gpca_with_pilot(x, k1, k2, cfg, opts)?.0)
}

/// [`data_driven_gpca`] that also returns the covariance estimate and, in it,
/// the PE pilot fit.
pub fn data_driven_gpca_with_pilot(
    x: &MatrixSeries,
    k1: usize,
    k2: usize,
    cfg: &ThresholdConfig,
    opts: &IterationOptions,
) -> Result<(EstimationResult, CovarianceEstimate)> {
    let est = estimate_separable_cov(x, k1, k2, cfg, opts)?;
    let mut fit = estimators::fit_whitened(x, &est.covariance, k1, k2, &Initialization::AlphaPca, opts, Method::Gpca)?;
    let mut warnings = est.warnings.clone();
    warnings.append(&mut fit.warnings);
    fit.warnings = warnings;
    Ok((fit, est))
}

/// Residual-variance identity used by callers comparing conventions:
/// `(Tp₁p₂/Σ‖Ë‖²)·(V̂⊗Û)`.
pub fn product_estimator(est: &CovarianceEstimate) -> DenseMatrix {
    est.col.matrix.kronecker(&est.row.matrix) * est.scale_constant
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::subspace_distance;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn randn(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DenseMatrix {
        DMatrix::from_fn(r, c, |_, _| rng.sample(StandardNormal))
    }

    fn iid_series(seed: u64, t: usize, p1: usize, p2: usize) -> MatrixSeries {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        MatrixSeries::new((0..t).map(|_| randn(&mut rng, p1, p2)).collect()).unwrap()
    }

    #[test]
    fn residuals_vanish_for_noiseless_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let r = randn(&mut rng, 8, 2);
        let c = randn(&mut rng, 7, 2);
        let x = MatrixSeries::new((0..10).map(|_| &r * randn(&mut rng, 2, 2) * c.transpose()).collect()).unwrap();
        let pe = estimators::pe_estimate(&x, 2, 2, &IterationOptions::default()).unwrap();
        let e = residual_series(&x, &pe.r_hat, &pe.c_hat).unwrap();
        assert!(e.iter().all(|m| m.amax() < 1e-8));
    }

    #[test]
    fn residuals_match_naive_recomputation() {
        let x = iid_series(2, 6, 5, 4);
        let pe = estimators::pe_estimate(&x, 2, 1, &IterationOptions::default()).unwrap();
        let e = residual_series(&x, &pe.r_hat, &pe.c_hat).unwrap();
        let (r, c) = (pe.r_hat.values(), pe.c_hat.values());
        for t in 0..6 {
            let xt = x.get(t);
            for i in 0..5 {
                for j in 0..4 {
                    let mut s = 0.0;
                    for a in 0..2 {
                        let mut f = 0.0;
                        for i2 in 0..5 {
                            for j2 in 0..4 {
                                f += r[(i2, a)] * xt[(i2, j2)] * c[(j2, 0)];
                            }
                        }
                        s += r[(i, a)] * f / 20.0 * c[(j, 0)];
                    }
                    assert!((e.get(t)[(i, j)] - (xt[(i, j)] - s)).abs() < 1e-12);
                }
            }
            assert!((e.get(t) - pe.residuals.get(t)).amax() < 1e-12);
        }
        let bad = LoadingMatrix::new(DMatrix::from_element(3, 1, 1.0), crate::model::Identification::Raw).unwrap();
        assert!(residual_series(&x, &bad, &pe.c_hat).is_err());
    }

    #[test]
    fn sample_covariance_examples() {
        let zero = MatrixSeries::zeros(3, 4, 5);
        assert_eq!(sample_row_cov(&zero).amax(), 0.0);
        assert_eq!(sample_col_cov(&zero).amax(), 0.0);
        let mut e1 = DMatrix::zeros(3, 4);
        e1.row_mut(0).fill(1.0);
        let u = sample_row_cov(&MatrixSeries::new(vec![e1]).unwrap());
        let mut expect = DMatrix::zeros(3, 3);
        expect[(0, 0)] = 1.0;
        assert_eq!(u, expect);
        let e = iid_series(3, 2000, 10, 10);
        let id = DMatrix::<f64>::identity(10, 10);
        assert!((sample_row_cov(&e) - &id).amax() <= 0.1);
        assert!((sample_col_cov(&e) - &id).amax() <= 0.1);
    }

    #[test]
    fn threshold_matches_direct_summation() {
        // T = 2, p₁ = 3, p₂ = 2.
        let e = MatrixSeries::new(vec![
            DMatrix::from_row_slice(3, 2, &[0.3, -1.2, 0.8, 0.5, -0.4, 1.1]),
            DMatrix::from_row_slice(3, 2, &[1.0, 0.2, -0.7, 0.9, 0.6, -0.3]),
        ])
        .unwrap();
        let u = sample_row_cov(&e);
        let c = 0.8;
        let out = adaptive_threshold(&u, &e, Side::Row, c).unwrap();
        let n = 4.0;
        let w = (3f64.ln() / 4.0).sqrt() + 1.0 / 6f64.sqrt() + 1.0 / 6f64.sqrt();
        assert!((out.omega - w).abs() < 1e-15);
        for i in 0..3 {
            for j in 0..3 {
                let mut uij = 0.0;
                for t in 0..2 {
                    for l in 0..2 {
                        uij += e.get(t)[(i, l)] * e.get(t)[(j, l)];
                    }
                }
                uij /= n;
                let mut th = 0.0;
                for t in 0..2 {
                    for l in 0..2 {
                        let d = e.get(t)[(i, l)] * e.get(t)[(j, l)] - uij;
                        th += d * d;
                    }
                }
                th /= n;
                assert!((out.theta[(i, j)] - th).abs() < 1e-12);
                let expect = if i == j { uij } else { uij.signum() * (uij.abs() - c * th.sqrt() * w).max(0.0) };
                assert!((out.matrix[(i, j)] - expect).abs() < 1e-12, "({i},{j})");
            }
        }
    }

    #[test]
    fn zero_and_large_constants() {
        let e = iid_series(4, 30, 6, 5);
        let v = sample_col_cov(&e);
        assert_eq!(adaptive_threshold(&v, &e, Side::Col, 0.0).unwrap().matrix, v);
        let cfg = ThresholdConfig::default();
        let cap = m_cap(&v, &e, Side::Col, &cfg).unwrap();
        let d = adaptive_threshold(&v, &e, Side::Col, cap).unwrap();
        assert_eq!(d.sparsity, 1.0);
        assert_eq!(d.matrix, DMatrix::from_diagonal(&v.diagonal()));
        assert!(adaptive_threshold(&v, &e, Side::Col, -1.0).is_err());
    }

    #[test]
    fn min_pd_examples() {
        let cfg = ThresholdConfig::default();
        let e = iid_series(5, 200, 4, 6);
        let u = sample_row_cov(&e);
        assert_eq!(min_pd_constant(&u, &e, Side::Row, &cfg).unwrap(), PdConstant { constant: 0.0, found: true });
        let diag = DMatrix::from_diagonal(&u.diagonal());
        assert_eq!(min_pd_constant(&diag, &e, Side::Row, &cfg).unwrap().constant, 0.0);

        // Nearly collinear rows: the raw sample covariance is singular.
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let near = MatrixSeries::new(
            (0..3)
                .map(|_| {
                    let z = randn(&mut rng, 1, 2);
                    let mut m = DMatrix::zeros(2, 2);
                    m.row_mut(0).copy_from(&z.row(0));
                    m.row_mut(1).copy_from(&(z.row(0) * -1.0));
                    m
                })
                .collect(),
        )
        .unwrap();
        let s = sample_row_cov(&near);
        let got = min_pd_constant(&s, &near, Side::Row, &cfg).unwrap();
        let scan = cfg
            .grid
            .iter()
            .copied()
            .find(|&c| {
                let m = adaptive_threshold(&s, &near, Side::Row, c).unwrap().matrix;
                linalg::min_eigenvalue(&m).unwrap() > cfg.pd_tolerance
            })
            .unwrap();
        assert!(got.found);
        assert_eq!(got.constant, scan);
        assert!(got.constant > 0.0);

        let mut bad = u.clone();
        bad[(1, 1)] = 0.0;
        assert!(matches!(
            min_pd_constant(&bad, &e, Side::Row, &cfg),
            Err(GpcaError::InvalidSampleCovariance { index: 1, .. })
        ));
    }

    #[test]
    fn cross_validation_examples() {
        let e = iid_series(7, 200, 10, 8);
        let cfg = ThresholdConfig { h: 3, ..ThresholdConfig::default() };
        let sel = cross_validate_constant(&e, Side::Row, &cfg, 1).unwrap();
        let u = sample_row_cov(&e);
        let est = adaptive_threshold(&u, &e, Side::Row, sel.constant).unwrap();
        assert!(est.sparsity >= 0.9, "sparsity {} at C = {}", est.sparsity, sel.constant);

        let one = ThresholdConfig { h: 1, ..ThresholdConfig::default() };
        let a = cross_validate_constant(&e, Side::Col, &one, 42).unwrap();
        let b = cross_validate_constant(&e, Side::Col, &one, 42).unwrap();
        assert_eq!(a, b);

        let single = ThresholdConfig { grid: vec![1.3], ..ThresholdConfig::default() };
        assert_eq!(cross_validate_constant(&e, Side::Col, &single, 0).unwrap().constant, 1.3);

        let short = iid_series(8, 3, 4, 4);
        assert!(matches!(
            cross_validate_constant(&short, Side::Row, &cfg, 0),
            Err(GpcaError::InsufficientData { needed: 4, got: 3 })
        ));
    }

    #[test]
    fn training_sizes() {
        assert_eq!(training_size(4), 1);
        assert_eq!(training_size(100), 78);
        assert_eq!(training_size(200), 162);
    }

    #[test]
    fn config_validation() {
        assert!(ThresholdConfig { grid: vec![0.0, 0.0], ..Default::default() }.validate().is_err());
        assert!(ThresholdConfig { grid: vec![], ..Default::default() }.validate().is_err());
        assert!(ThresholdConfig { h: 0, ..Default::default() }.validate().is_err());
        assert!(ThresholdConfig::default().validate().is_ok());
    }

    #[test]
    fn conventions_give_the_same_product() {
        let x = iid_series(9, 40, 6, 5);
        let cfg = ThresholdConfig { h: 2, ..ThresholdConfig::default() };
        let est = estimate_separable_cov(&x, 1, 1, &cfg, &IterationOptions::default()).unwrap();
        let on_u = est.with_convention(ScaleConvention::ConstantOnU).unwrap();
        let on_v = est.with_convention(ScaleConvention::ConstantOnV).unwrap();
        assert!((on_u.kronecker() - on_v.kronecker()).amax() < 1e-10);
        assert!((on_u.kronecker() - product_estimator(&est)).amax() < 1e-10);
        assert_eq!(est.covariance.scale_convention(), ScaleConvention::ConstantOnU);
        assert_eq!(est.covariance, on_u);
    }

    #[test]
    fn identity_truth_with_diagonal_thresholds_tracks_pe() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let r = randn(&mut rng, 12, 2);
        let c = randn(&mut rng, 10, 2);
        let x = MatrixSeries::new(
            (0..60).map(|_| &r * randn(&mut rng, 2, 2) * c.transpose() + randn(&mut rng, 12, 10)).collect(),
        )
        .unwrap();
        let cfg = ThresholdConfig { c_r: Some(4.0), c_c: Some(4.0), ..ThresholdConfig::default() };
        let opts = IterationOptions::default();
        let (g, est) = data_driven_gpca_with_pilot(&x, 2, 2, &cfg, &opts).unwrap();
        assert!(est.row.sparsity > 0.9 && est.col.sparsity > 0.9);
        assert!(subspace_distance(g.r_hat.values(), est.pilot.r_hat.values()).unwrap() < 0.1);
        assert_eq!(g.method, Method::Gpca);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn thresholding_properties(seed in any::<u64>(), p in 2usize..7, c1 in 0.0f64..3.0, dc in 0.0f64..3.0) {
            let e = iid_series(seed, 5, p, 3);
            let u = sample_row_cov(&e);
            let a = adaptive_threshold(&u, &e, Side::Row, c1).unwrap().matrix;
            let b = adaptive_threshold(&u, &e, Side::Row, c1 + dc).unwrap().matrix;
            for i in 0..p {
                prop_assert_eq!(a[(i, i)], u[(i, i)]);
                prop_assert_eq!(b[(i, i)], u[(i, i)]);
                for j in 0..p {
                    prop_assert_eq!(a[(i, j)], a[(j, i)]);
                    prop_assert!(a[(i, j)].abs() <= u[(i, j)].abs());
                    prop_assert!(b[(i, j)].abs() <= a[(i, j)].abs());
                }
            }
            let cfg = ThresholdConfig::default();
            let pd = min_pd_constant(&u, &e, Side::Row, &cfg).unwrap();
            if pd.found {
                for &c in cfg.grid.iter().filter(|&&c| c >= pd.constant) {
                    let m = adaptive_threshold(&u, &e, Side::Row, c).unwrap().matrix;
                    prop_assert!(linalg::min_eigenvalue(&m).unwrap() > cfg.pd_tolerance);
                }
            }
        }
    }
}
