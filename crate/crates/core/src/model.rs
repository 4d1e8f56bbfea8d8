//! Domain types of the matrix factor model `X_t = R F_t Cᵀ + E_t`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{GpcaError, Result};
use crate::linalg::{self, DenseMatrix, PD_TOLERANCE};

/// An ordered sequence of equally shaped real matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixSeries {
    rows: usize,
    cols: usize,
    data: Vec<DenseMatrix>,
}

/// Latent factor matrices `F_t`, one `k₁×k₂` matrix per time point.
pub type FactorSeries = MatrixSeries;

impl MatrixSeries {
    pub fn new(data: Vec<DenseMatrix>) -> Result<Self> {
        let first = data
            .first()
            .ok_or_else(|| GpcaError::Dimension("matrix series needs at least one observation".into()))?;
        let (rows, cols) = first.shape();
        if rows == 0 || cols == 0 {
            return Err(GpcaError::Dimension(format!("empty {rows}x{cols} observations")));
        }
        for (t, m) in data.iter().enumerate() {
            if m.shape() != (rows, cols) {
                return Err(GpcaError::Dimension(format!(
                    "observation {t} is {}x{}, expected {rows}x{cols}",
                    m.nrows(),
                    m.ncols()
                )));
            }
            linalg::ensure_finite(m, "matrix series")?;
        }
        Ok(MatrixSeries { rows, cols, data })
    }

    /// Series of `len` zero matrices.
    pub fn zeros(len: usize, rows: usize, cols: usize) -> Self {
        MatrixSeries { rows, cols, data: vec![DMatrix::zeros(rows, cols); len] }
    }

    /// Number of time points.
    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn get(&self, t: usize) -> &DenseMatrix {
        &self.data[t]
    }

    pub fn iter(&self) -> std::slice::Iter<'_, DenseMatrix> {
        self.data.iter()
    }

    pub fn as_slice(&self) -> &[DenseMatrix] {
        &self.data
    }

    pub fn into_inner(self) -> Vec<DenseMatrix> {
        self.data
    }

    /// Sub-series at the given time indices, in the order given.
    pub fn select(&self, idx: &[usize]) -> Result<MatrixSeries> {
        MatrixSeries::new(idx.iter().map(|&t| self.data[t].clone()).collect())
    }

    /// Contiguous time window `[start, end)`.
    pub fn window(&self, start: usize, end: usize) -> Result<MatrixSeries> {
        MatrixSeries::new(self.data[start..end].to_vec())
    }

    pub fn map<F: FnMut(&DenseMatrix) -> DenseMatrix>(&self, f: F) -> Result<MatrixSeries> {
        MatrixSeries::new(self.data.iter().map(f).collect())
    }

    /// `[X_1, X_2, …, X_T]`, a `rows × (T·cols)` matrix.
    pub fn hstack(&self) -> DenseMatrix {
        hstack(&self.data)
    }

    /// `[X_1; X_2; …; X_T]`, a `(T·rows) × cols` matrix.
    pub fn vstack(&self) -> DenseMatrix {
        vstack(&self.data)
    }

    /// `Σ_t ‖X_t‖²_F`.
    pub fn total_sq_norm(&self) -> f64 {
        self.data.iter().map(|m| m.norm_squared()).sum()
    }
}

pub(crate) fn hstack(blocks: &[DenseMatrix]) -> DenseMatrix {
    let rows = blocks[0].nrows();
    let cols = blocks[0].ncols();
    let mut out = Vec::with_capacity(rows * cols * blocks.len());
    for b in blocks {
        out.extend_from_slice(b.as_slice());
    }
    DMatrix::from_vec(rows, cols * blocks.len(), out)
}

pub(crate) fn vstack(blocks: &[DenseMatrix]) -> DenseMatrix {
    let rows = blocks[0].nrows();
    let cols = blocks[0].ncols();
    let total = rows * blocks.len();
    let mut out = DMatrix::zeros(total, cols);
    for j in 0..cols {
        let dst = out.column_mut(j);
        let dst = dst.data.into_slice_mut();
        for (t, b) in blocks.iter().enumerate() {
            dst[t * rows..(t + 1) * rows].copy_from_slice(b.column(j).as_slice());
        }
    }
    out
}

/// Splits a `rows × (T·cols)` matrix back into `T` blocks.
pub(crate) fn split_hstack(m: &DenseMatrix, cols: usize) -> Vec<DenseMatrix> {
    let t = m.ncols() / cols;
    (0..t).map(|i| m.columns(i * cols, cols).into_owned()).collect()
}

/// Splits a `(T·rows) × cols` matrix back into `T` blocks.
pub(crate) fn split_vstack(m: &DenseMatrix, rows: usize) -> Vec<DenseMatrix> {
    let t = m.nrows() / rows;
    (0..t).map(|i| m.rows(i * rows, rows).into_owned()).collect()
}

/// Which normalization a loading matrix carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Identification {
    /// Loadings on the original scale, e.g. `R = √p₁·U^{1/2}Q_R`.
    Raw,
    /// Transformed loadings `R* = U^{-1/2}R` with `R*ᵀR*/p = I`.
    Whitened,
}

/// A `p×k` loading matrix of full column rank.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadingMatrix {
    values: DenseMatrix,
    identification: Identification,
}

impl LoadingMatrix {
    pub fn new(values: DenseMatrix, identification: Identification) -> Result<Self> {
        let (p, k) = values.shape();
        if k == 0 || k > p {
            return Err(GpcaError::Dimension(format!("loading matrix {p}x{k} needs 1 <= k <= p")));
        }
        linalg::orthonormalize(&values)?;
        Ok(LoadingMatrix { values, identification })
    }

    /// Skips the rank check; for values produced as scaled orthonormal bases.
    pub(crate) fn from_parts(values: DenseMatrix, identification: Identification) -> Self {
        LoadingMatrix { values, identification }
    }

    pub fn values(&self) -> &DenseMatrix {
        &self.values
    }

    pub fn identification(&self) -> Identification {
        self.identification
    }

    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.values.ncols()
    }

    pub fn into_inner(self) -> DenseMatrix {
        self.values
    }
}

/// Records which factor of `V⊗U` carries the free scalar.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScaleConvention {
    /// Scale supplied by the caller (true covariances, identity).
    AsGiven,
    /// The residual-variance constant `Tp₁p₂/Σ‖Ë_t‖²_F` was folded into `U`.
    ConstantOnU,
    /// The constant was folded into `V`.
    ConstantOnV,
}

/// Separable noise covariance `Cov(vec E_t) = V⊗U`, identified up to a scalar.
#[derive(Debug, Clone, PartialEq)]
pub struct SeparableCovariance {
    u: DenseMatrix,
    v: DenseMatrix,
    scale_convention: ScaleConvention,
}

impl SeparableCovariance {
    pub fn new(u: DenseMatrix, v: DenseMatrix, scale_convention: ScaleConvention) -> Result<Self> {
        for (m, name) in [(&u, "U"), (&v, "V")] {
            if !m.is_square() {
                return Err(GpcaError::Dimension(format!("{name} must be square")));
            }
            linalg::ensure_finite(m, "separable covariance")?;
            let asym = linalg::max_asymmetry(m);
            if asym > 1e-10 * linalg::max_abs(m).max(1.0) {
                return Err(GpcaError::NotSymmetric { asymmetry: asym, tolerance: 1e-10 });
            }
            if !linalg::is_positive_definite(m, PD_TOLERANCE) {
                let min = linalg::min_eigenvalue(m)?;
                if !(min > PD_TOLERANCE) {
                    return Err(GpcaError::NotPositiveDefinite { min_eigenvalue: min });
                }
            }
        }
        Ok(SeparableCovariance { u: linalg::symmetrize(&u), v: linalg::symmetrize(&v), scale_convention })
    }

    pub fn identity(p1: usize, p2: usize) -> Self {
        SeparableCovariance {
            u: DMatrix::identity(p1, p1),
            v: DMatrix::identity(p2, p2),
            scale_convention: ScaleConvention::AsGiven,
        }
    }

    pub fn u(&self) -> &DenseMatrix {
        &self.u
    }

    pub fn v(&self) -> &DenseMatrix {
        &self.v
    }

    pub fn scale_convention(&self) -> ScaleConvention {
        self.scale_convention
    }

    pub fn p1(&self) -> usize {
        self.u.nrows()
    }

    pub fn p2(&self) -> usize {
        self.v.nrows()
    }

    pub fn is_identity(&self) -> bool {
        linalg::is_exact_identity(&self.u) && linalg::is_exact_identity(&self.v)
    }

    /// `V⊗U`, the covariance of `vec(E_t)`.
    pub fn kronecker(&self) -> DenseMatrix {
        self.v.kronecker(&self.u)
    }
}

/// Estimation method tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    AlphaPca,
    Pe,
    OracleGpca,
    Gpca,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::AlphaPca => "alpha_pca",
            Method::Pe => "pe",
            Method::OracleGpca => "oracle_gpca",
            Method::Gpca => "gpca",
        }
    }

    pub fn parse(s: &str) -> Result<Method> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "alpha_pca" | "alphapca" | "alpha" => Ok(Method::AlphaPca),
            "pe" => Ok(Method::Pe),
            "oracle" | "oracle_gpca" => Ok(Method::OracleGpca),
            "gpca" => Ok(Method::Gpca),
            other => Err(GpcaError::Config(format!("unknown method '{other}'"))),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Output of every estimator.
#[derive(Debug, Clone)]
pub struct EstimationResult {
    /// Row loadings on the raw scale.
    pub r_hat: LoadingMatrix,
    /// Column loadings on the raw scale.
    pub c_hat: LoadingMatrix,
    /// Orthonormal basis of the whitened row loading space.
    pub q_r: DenseMatrix,
    /// Orthonormal basis of the whitened column loading space.
    pub q_c: DenseMatrix,
    pub factors: FactorSeries,
    /// `Ŝ_t = R̂ F̂_t Ĉᵀ`.
    pub common: MatrixSeries,
    /// `X_t − Ŝ_t`.
    pub residuals: MatrixSeries,
    /// Covariance pair used for whitening (identity for PE and α-PCA).
    pub covariance: SeparableCovariance,
    pub method: Method,
    pub iterations: usize,
    pub converged: bool,
    pub final_step_distance: f64,
    /// Least-squares objective after initialization and after each iteration.
    pub objective_trace: Vec<f64>,
    pub warnings: Vec<String>,
}

impl EstimationResult {
    pub fn k1(&self) -> usize {
        self.r_hat.ncols()
    }

    pub fn k2(&self) -> usize {
        self.c_hat.ncols()
    }
}
