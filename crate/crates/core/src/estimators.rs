//! Loading and factor estimation: α-PCA initialization, the whitened
//! eigen-iteration behind Oracle GPCA, and PE as its identity-covariance case.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{GpcaError, Result};
use crate::linalg::{self, DenseMatrix, SpdRoots, PD_TOLERANCE};
use crate::model::{
    self, EstimationResult, FactorSeries, Identification, LoadingMatrix, MatrixSeries, Method, SeparableCovariance,
};

/// Stopping rule for the alternating eigen-iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IterationOptions {
    pub max_iter: usize,
    /// Stop once both loading spaces move less than this in subspace distance.
    pub tol: f64,
}

impl Default for IterationOptions {
    fn default() -> Self {
        IterationOptions { max_iter: 100, tol: 1e-6 }
    }
}

impl IterationOptions {
    fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(GpcaError::Config(format!("tolerance must be positive, got {}", self.tol)));
        }
        Ok(())
    }
}

/// Starting point of the iteration, expressed as whitened loadings `(R₀*, C₀*)`.
#[derive(Debug, Clone, Default)]
pub enum Initialization {
    /// α-PCA (α = 0) on the whitened observations.
    #[default]
    AlphaPca,
    Given { r0: LoadingMatrix, c0: LoadingMatrix },
}

fn check_factor_counts(x: &MatrixSeries, k1: usize, k2: usize) -> Result<()> {
    let (p1, p2) = x.shape();
    if k1 == 0 || k2 == 0 || k1 > p1 || k2 > p2 {
        return Err(GpcaError::Dimension(format!(
            "factor numbers ({k1}, {k2}) must lie in [1, {p1}] x [1, {p2}]"
        )));
    }
    Ok(())
}

/// Observations whitened as `Z_t = U^{-1/2} X_t V^{-1/2}`, held in both
/// stacked layouts so each aggregate is a single matrix product.
pub(crate) struct Whitened {
    pub t: usize,
    pub p1: usize,
    pub p2: usize,
    /// `[Z_1, …, Z_T]`, `p₁ × T·p₂`.
    pub zh: DenseMatrix,
    /// `[Z_1; …; Z_T]`, `T·p₁ × p₂`.
    pub zv: DenseMatrix,
    pub total_sq: f64,
}

impl Whitened {
    pub fn new(x: &MatrixSeries, u_inv_sqrt: Option<&DenseMatrix>, v_inv_sqrt: Option<&DenseMatrix>) -> Self {
        let (p1, p2) = x.shape();
        let t = x.len();
        let (zh, zv) = match (u_inv_sqrt, v_inv_sqrt) {
            (None, None) => (x.hstack(), x.vstack()),
            _ => {
                let right = match v_inv_sqrt {
                    Some(v) => x.vstack() * v,
                    None => x.vstack(),
                };
                let yh = model::hstack(&model::split_vstack(&right, p1));
                let zh = match u_inv_sqrt {
                    Some(u) => u * yh,
                    None => yh,
                };
                let zv = model::vstack(&model::split_hstack(&zh, p2));
                (zh, zv)
            }
        };
        let total_sq = zh.norm_squared();
        Whitened { t, p1, p2, zh, zv, total_sq }
    }

    /// `(T·p₁·p₂)⁻¹ Σ Z_t Z_tᵀ`.
    fn row_second_moment(&self) -> DenseMatrix {
        let scale = 1.0 / (self.t * self.p1 * self.p2) as f64;
        linalg::symmetrize(&(&self.zh * self.zh.transpose() * scale))
    }

    /// `(T·p₁·p₂)⁻¹ Σ Z_tᵀ Z_t`.
    fn col_second_moment(&self) -> DenseMatrix {
        let scale = 1.0 / (self.t * self.p1 * self.p2) as f64;
        linalg::symmetrize(&(self.zv.transpose() * &self.zv * scale))
    }

    /// `M_C = (T·p₂)⁻¹ Σ Z_t C* C*ᵀ Z_tᵀ`.
    fn aggregate_c(&self, c_star: &DenseMatrix) -> DenseMatrix {
        let k2 = c_star.ncols();
        let prod = &self.zv * c_star;
        let mut a = DMatrix::zeros(self.p1, self.t * k2);
        for s in 0..self.t {
            for b in 0..k2 {
                let src = prod.column(b);
                let src = &src.as_slice()[s * self.p1..(s + 1) * self.p1];
                a.column_mut(s * k2 + b).copy_from_slice(src);
            }
        }
        let scale = 1.0 / (self.t * self.p2) as f64;
        linalg::symmetrize(&(&a * a.transpose() * scale))
    }

    /// `M_R = (T·p₁)⁻¹ Σ Z_tᵀ R* R*ᵀ Z_t` from `[QᵀZ_t]` stacked, with `R* = √s·Q`.
    fn aggregate_r_from(&self, gv: &DenseMatrix, s: f64) -> DenseMatrix {
        let scale = s / (self.t * self.p1) as f64;
        linalg::symmetrize(&(gv.transpose() * gv * scale))
    }

    /// `[L ᵀZ_1; …; LᵀZ_T]`, a `T·k × p₂` matrix.
    fn left_projected(&self, l: &DenseMatrix) -> DenseMatrix {
        let k = l.ncols();
        let g = l.transpose() * &self.zh;
        let mut gv = DMatrix::zeros(self.t * k, self.p2);
        for s in 0..self.t {
            for j in 0..self.p2 {
                for a in 0..k {
                    gv[(s * k + a, j)] = g[(a, s * self.p2 + j)];
                }
            }
        }
        gv
    }

    /// `Q_Rᵀ Z_t Q_C` for every t.
    fn project(&self, q_r: &DenseMatrix, q_c: &DenseMatrix) -> Vec<DenseMatrix> {
        model::split_vstack(&(self.left_projected(q_r) * q_c), q_r.ncols())
    }

    /// `T⁻¹ Σ ‖Z_t − Q_R Q_Rᵀ Z_t Q_C Q_Cᵀ‖²_F`, the least-squares objective at the
    /// optimal factors for the given loading spaces.
    fn objective(&self, q_r: &DenseMatrix, q_c: &DenseMatrix) -> f64 {
        self.objective_from(&self.left_projected(q_r), q_c)
    }

    fn objective_from(&self, gv: &DenseMatrix, q_c: &DenseMatrix) -> f64 {
        let captured = (gv * q_c).norm_squared();
        (self.total_sq - captured) / self.t as f64
    }
}

/// Top-k eigenvectors plus a warning when the retained eigengap is degenerate.
fn leading_space(m: &DenseMatrix, k: usize, label: &str, warnings: &mut Vec<String>) -> Result<DenseMatrix> {
    let (dec, next) = linalg::sym_eig_topk_with_next(m, k)?;
    if let Some(next) = next {
        let gap = dec.eigenvalues[k - 1] - next;
        if gap < 1e-8 * dec.eigenvalues[0].abs() {
            let msg = format!("{label}: eigengap {gap:e} below 1e-8 of the leading eigenvalue");
            if !warnings.contains(&msg) {
                warnings.push(msg);
            }
        }
    }
    Ok(dec.eigenvectors)
}

/// α-PCA with α = 0: `R₀* = √p₁·top-k₁ eigvecs of (Tp₁p₂)⁻¹ΣX_tX_tᵀ`,
/// `C₀* = √p₂·top-k₂ eigvecs of (Tp₁p₂)⁻¹ΣX_tᵀX_t`.
///
/// Pass whitened observations to obtain the GPCA starting point.
pub fn alpha_pca_init(x: &MatrixSeries, k1: usize, k2: usize) -> Result<(LoadingMatrix, LoadingMatrix)> {
    check_factor_counts(x, k1, k2)?;
    let w = Whitened::new(x, None, None);
    let mut warnings = Vec::new();
    let (q_r, q_c) = alpha_pca_spaces(&w, k1, k2, &mut warnings)?;
    Ok(scaled_whitened(q_r, q_c, w.p1, w.p2))
}

fn alpha_pca_spaces(
    w: &Whitened,
    k1: usize,
    k2: usize,
    warnings: &mut Vec<String>,
) -> Result<(DenseMatrix, DenseMatrix)> {
    let q_r = leading_space(&w.row_second_moment(), k1, "alpha-PCA row", warnings)?;
    let q_c = leading_space(&w.col_second_moment(), k2, "alpha-PCA column", warnings)?;
    Ok((q_r, q_c))
}

fn scaled_whitened(q_r: DenseMatrix, q_c: DenseMatrix, p1: usize, p2: usize) -> (LoadingMatrix, LoadingMatrix) {
    (
        LoadingMatrix::from_parts(q_r * (p1 as f64).sqrt(), Identification::Whitened),
        LoadingMatrix::from_parts(q_c * (p2 as f64).sqrt(), Identification::Whitened),
    )
}

/// `F_t = Rᵀ U⁻¹ X_t V⁻¹ C / (p₁p₂)`, the factor matrix minimizing the
/// whitened least-squares loss for fixed loadings.
pub fn closed_form_factor(
    x_t: &DenseMatrix,
    r: &LoadingMatrix,
    c: &LoadingMatrix,
    cov: &SeparableCovariance,
) -> Result<DenseMatrix> {
    let u_inv = SpdRoots::new(cov.u(), PD_TOLERANCE)?.inverse;
    let v_inv = SpdRoots::new(cov.v(), PD_TOLERANCE)?.inverse;
    factor_with_inverses(x_t, r.values(), c.values(), &u_inv, &v_inv)
}

/// [`closed_form_factor`] over a whole series with one factorization of `U`, `V`.
pub fn closed_form_factors(
    x: &MatrixSeries,
    r: &LoadingMatrix,
    c: &LoadingMatrix,
    cov: &SeparableCovariance,
) -> Result<FactorSeries> {
    let u_inv = SpdRoots::new(cov.u(), PD_TOLERANCE)?.inverse;
    let v_inv = SpdRoots::new(cov.v(), PD_TOLERANCE)?.inverse;
    let left = r.values().transpose() * &u_inv;
    let right = &v_inv * c.values();
    if left.ncols() != x.rows() || right.nrows() != x.cols() {
        return Err(GpcaError::Dimension("loadings do not match the observation shape".into()));
    }
    let scale = 1.0 / (x.rows() * x.cols()) as f64;
    x.map(|m| &left * m * &right * scale)
}

fn factor_with_inverses(
    x_t: &DenseMatrix,
    r: &DenseMatrix,
    c: &DenseMatrix,
    u_inv: &DenseMatrix,
    v_inv: &DenseMatrix,
) -> Result<DenseMatrix> {
    let (p1, p2) = x_t.shape();
    if r.nrows() != p1 || c.nrows() != p2 || u_inv.nrows() != p1 || v_inv.nrows() != p2 {
        return Err(GpcaError::Dimension(format!(
            "observation {p1}x{p2} vs loadings {}x{} / {}x{} and covariances {} / {}",
            r.nrows(),
            r.ncols(),
            c.nrows(),
            c.ncols(),
            u_inv.nrows(),
            v_inv.nrows()
        )));
    }
    Ok(r.transpose() * u_inv * x_t * v_inv * c / (p1 * p2) as f64)
}

/// `Ŝ_t = R̂ F̂_t Ĉᵀ` for each t.
pub fn common_components(r: &LoadingMatrix, factors: &FactorSeries, c: &LoadingMatrix) -> Result<MatrixSeries> {
    let (k1, k2) = factors.shape();
    if r.ncols() != k1 || c.ncols() != k2 {
        return Err(GpcaError::Dimension(format!(
            "factors are {k1}x{k2} but loadings have {} and {} columns",
            r.ncols(),
            c.ncols()
        )));
    }
    let ct = c.values().transpose();
    factors.map(|f| r.values() * f * &ct)
}

/// Oracle GPCA: alternating eigen-iteration on `Z_t = U^{-1/2}X_tV^{-1/2}` with
/// the true (or any supplied) separable covariance.
///
/// Each pass updates `Q̂_R` from the current `Ĉ*`, then `Q̂_C` from the
/// just-updated `R̂*`. Iteration stops when both spaces move less than
/// `opts.tol` in subspace distance; running out of iterations is reported in
/// `converged`, not as an error.
pub fn oracle_gpca(
    x: &MatrixSeries,
    cov: &SeparableCovariance,
    k1: usize,
    k2: usize,
    init: &Initialization,
    opts: &IterationOptions,
) -> Result<EstimationResult> {
    fit_whitened(x, cov, k1, k2, init, opts, Method::OracleGpca)
}

/// Projected estimation: the GPCA iteration with `U = I`, `V = I`.
pub fn pe_estimate(x: &MatrixSeries, k1: usize, k2: usize, opts: &IterationOptions) -> Result<EstimationResult> {
    let cov = SeparableCovariance::identity(x.rows(), x.cols());
    fit_whitened(x, &cov, k1, k2, &Initialization::AlphaPca, opts, Method::Pe)
}

/// α-PCA (α = 0) as a standalone estimator: no iteration, identity covariance.
pub fn alpha_pca_estimate(x: &MatrixSeries, k1: usize, k2: usize) -> Result<EstimationResult> {
    check_factor_counts(x, k1, k2)?;
    let w = Whitened::new(x, None, None);
    let mut warnings = Vec::new();
    let (q_r, q_c) = alpha_pca_spaces(&w, k1, k2, &mut warnings)?;
    let objective = w.objective(&q_r, &q_c);
    let cov = SeparableCovariance::identity(x.rows(), x.cols());
    finish(x, &w, None, q_r, q_c, cov, Method::AlphaPca, 0, true, 0.0, vec![objective], warnings)
}

pub(crate) fn fit_whitened(
    x: &MatrixSeries,
    cov: &SeparableCovariance,
    k1: usize,
    k2: usize,
    init: &Initialization,
    opts: &IterationOptions,
    method: Method,
) -> Result<EstimationResult> {
    check_factor_counts(x, k1, k2)?;
    opts.validate()?;
    let (p1, p2) = x.shape();
    if cov.p1() != p1 || cov.p2() != p2 {
        return Err(GpcaError::Dimension(format!(
            "covariance pair is {}/{} but observations are {p1}x{p2}",
            cov.p1(),
            cov.p2()
        )));
    }
    let roots = if cov.is_identity() {
        None
    } else {
        Some((SpdRoots::new(cov.u(), PD_TOLERANCE)?, SpdRoots::new(cov.v(), PD_TOLERANCE)?))
    };
    let w = match &roots {
        None => Whitened::new(x, None, None),
        Some((ru, rv)) => Whitened::new(x, Some(&ru.inv_sqrt), Some(&rv.inv_sqrt)),
    };
    let mut warnings = Vec::new();
    let (mut q_r, mut q_c) = match init {
        Initialization::AlphaPca => alpha_pca_spaces(&w, k1, k2, &mut warnings)?,
        Initialization::Given { r0, c0 } => {
            if r0.nrows() != p1 || r0.ncols() != k1 || c0.nrows() != p2 || c0.ncols() != k2 {
                return Err(GpcaError::Dimension("initial loadings do not match (p1, k1) / (p2, k2)".into()));
            }
            (linalg::orthonormalize(r0.values())?, linalg::orthonormalize(c0.values())?)
        }
    };
    let sp2 = (p2 as f64).sqrt();
    let mut trace = vec![w.objective(&q_r, &q_c)];
    let mut iterations = 0;
    let mut converged = false;
    let mut step = f64::INFINITY;
    while iterations < opts.max_iter {
        iterations += 1;
        let m_c = w.aggregate_c(&(&q_c * sp2));
        let new_r = leading_space(&m_c, k1, "row loading update", &mut warnings)?;
        let gv = w.left_projected(&new_r);
        let m_r = w.aggregate_r_from(&gv, p1 as f64);
        let new_c = leading_space(&m_r, k2, "column loading update", &mut warnings)?;
        step = linalg::subspace_distance(&new_r, &q_r)?.max(linalg::subspace_distance(&new_c, &q_c)?);
        q_r = new_r;
        q_c = new_c;
        trace.push(w.objective_from(&gv, &q_c));
        if step < opts.tol {
            converged = true;
            break;
        }
    }
    if !converged {
        warnings.push(format!("no convergence within {} iterations (last step {step:e})", opts.max_iter));
    }
    let u_sqrt = roots.as_ref().map(|(ru, rv)| (ru.sqrt.clone(), rv.sqrt.clone()));
    finish(x, &w, u_sqrt, q_r, q_c, cov.clone(), method, iterations, converged, step, trace, warnings)
}

#[allow(clippy::too_many_arguments)]
fn finish(
    x: &MatrixSeries,
    w: &Whitened,
    sqrt_roots: Option<(DenseMatrix, DenseMatrix)>,
    q_r: DenseMatrix,
    q_c: DenseMatrix,
    covariance: SeparableCovariance,
    method: Method,
    iterations: usize,
    converged: bool,
    final_step_distance: f64,
    objective_trace: Vec<f64>,
    warnings: Vec<String>,
) -> Result<EstimationResult> {
    let (p1, p2) = (w.p1, w.p2);
    let (sp1, sp2) = ((p1 as f64).sqrt(), (p2 as f64).sqrt());
    let (r_raw, c_raw) = match &sqrt_roots {
        None => (&q_r * sp1, &q_c * sp2),
        Some((us, vs)) => (us * &q_r * sp1, vs * &q_c * sp2),
    };
    let r_hat = LoadingMatrix::from_parts(r_raw, Identification::Raw);
    let c_hat = LoadingMatrix::from_parts(c_raw, Identification::Raw);
    let inv = 1.0 / (sp1 * sp2);
    let factors = MatrixSeries::new(w.project(&q_r, &q_c).into_iter().map(|f| f * inv).collect())?;
    let common = common_components(&r_hat, &factors, &c_hat)?;
    let residuals = MatrixSeries::new(x.iter().zip(common.iter()).map(|(a, b)| a - b).collect())?;
    Ok(EstimationResult {
        r_hat,
        c_hat,
        q_r,
        q_c,
        factors,
        common,
        residuals,
        covariance,
        method,
        iterations,
        converged,
        final_step_distance,
        objective_trace,
        warnings,
    })
}
