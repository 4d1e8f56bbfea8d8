//! Synthetic matrix factor data with VAR(1) factors and matrix-normal AR(1) noise.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{GpcaError, Result};
use crate::linalg::{self, DenseMatrix, SpdRoots, PD_TOLERANCE};
use crate::model::{self, FactorSeries, Identification, LoadingMatrix, MatrixSeries, ScaleConvention, SeparableCovariance};

/// Factor variances in normality mode, cycled over `vec(F_t)`.
pub const NORMALITY_FACTOR_VARIANCES: [f64; 3] = [1.5, 1.0, 0.5];

/// Noise covariance design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovCase {
    /// Unit diagonal, off-diagonal `1/p`.
    Case1,
    /// Banded: `(1/2 − |i−j|/10)₊` off the diagonal, unit diagonal.
    Case2,
    /// Five diagonal blocks with off-diagonal `10/p` and diagonal drawn from {1.0, …, 1.4}.
    Case3,
    /// Caller-supplied matrices, given row by row.
    Custom { u: Vec<Vec<f64>>, v: Vec<Vec<f64>> },
}

impl CovCase {
    pub fn name(&self) -> &'static str {
        match self {
            CovCase::Case1 => "case1",
            CovCase::Case2 => "case2",
            CovCase::Case3 => "case3",
            CovCase::Custom { .. } => "custom",
        }
    }
}

/// How the case matrices enter the matrix-normal noise draw.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseDraw {
    /// `E = U^{1/2} W V^{1/2}`, so `Cov(vec E) = V⊗U`.
    #[default]
    Root,
    /// `E = U W V`: the case matrices act as square-root factors and the
    /// noise covariance is `V²⊗U²`.
    Direct,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DgpConfig {
    #[serde(rename = "T")]
    pub t: usize,
    pub p1: usize,
    pub p2: usize,
    pub k1: usize,
    pub k2: usize,
    /// Factor AR coefficient.
    pub phi: f64,
    /// Noise AR coefficient.
    pub psi: f64,
    pub cov_case: CovCase,
    pub seed: u64,
    pub burn_in: usize,
    /// iid factors with diagonal covariance D and normalized loadings.
    pub normality_mode: bool,
    /// Multiplies every noise matrix; 0 gives noiseless data.
    pub noise_scale: f64,
    pub noise_draw: NoiseDraw,
}

impl Default for DgpConfig {
    fn default() -> Self {
        DgpConfig {
            t: 200,
            p1: 20,
            p2: 200,
            k1: 3,
            k2: 3,
            phi: 0.1,
            psi: 0.1,
            cov_case: CovCase::Case1,
            seed: 0,
            burn_in: 100,
            normality_mode: false,
            noise_scale: 1.0,
            noise_draw: NoiseDraw::Root,
        }
    }
}

impl DgpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.t == 0 || self.p1 == 0 || self.p2 == 0 {
            return Err(GpcaError::Config("T, p1 and p2 must be positive".into()));
        }
        if self.k1 == 0 || self.k2 == 0 || self.k1 > self.p1 || self.k2 > self.p2 {
            return Err(GpcaError::Config(format!(
                "factor numbers ({}, {}) must lie in [1, p1] x [1, p2]",
                self.k1, self.k2
            )));
        }
        if !(self.phi.abs() < 1.0) || !(self.psi.abs() < 1.0) {
            return Err(GpcaError::Config("AR coefficients must satisfy |phi| < 1 and |psi| < 1".into()));
        }
        if !(self.noise_scale >= 0.0) || !self.noise_scale.is_finite() {
            return Err(GpcaError::Config("noise_scale must be finite and nonnegative".into()));
        }
        if self.cov_case == CovCase::Case3 && (self.p1 % 5 != 0 || self.p2 % 5 != 0) {
            return Err(GpcaError::Config("case3 requires p1 and p2 divisible by 5".into()));
        }
        Ok(())
    }
}

/// The components behind a generated series.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub r: LoadingMatrix,
    pub c: LoadingMatrix,
    pub cov: SeparableCovariance,
    pub factors: FactorSeries,
    pub noise: MatrixSeries,
    /// `R F_t Cᵀ`.
    pub common: MatrixSeries,
    /// Diagonal of `Cov(vec F_t)` when factors are iid (normality mode).
    pub factor_variances: Option<Vec<f64>>,
}

// Independent random streams of one replication.
const STREAM_LOADINGS: u64 = 1;
const STREAM_COV_U: u64 = 2;
const STREAM_COV_V: u64 = 3;
const STREAM_FACTORS: u64 = 4;
const STREAM_NOISE: u64 = 5;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Covariance matrix of the given case. `seed` only affects Case 3.
pub fn gen_cov(case: &CovCase, p: usize, seed: u64) -> Result<DenseMatrix> {
    let pf = p as f64;
    match case {
        CovCase::Case1 => Ok(DMatrix::from_fn(p, p, |i, j| if i == j { 1.0 } else { 1.0 / pf })),
        CovCase::Case2 => Ok(DMatrix::from_fn(p, p, |i, j| {
            if i == j {
                1.0
            } else {
                (0.5 - i.abs_diff(j) as f64 / 10.0).max(0.0)
            }
        })),
        CovCase::Case3 => {
            if p % 5 != 0 {
                return Err(GpcaError::Config(format!("case3 needs a dimension divisible by 5, got {p}")));
            }
            let block = p / 5;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let levels = Uniform::new_inclusive(10u32, 14).expect("valid range");
            let diag: Vec<f64> = (0..p).map(|_| rng.sample(levels) as f64 / 10.0).collect();
            Ok(DMatrix::from_fn(p, p, |i, j| {
                if i == j {
                    diag[i]
                } else if i / block == j / block {
                    10.0 / pf
                } else {
                    0.0
                }
            }))
        }
        CovCase::Custom { .. } => Err(GpcaError::Config("custom covariances are supplied, not generated".into())),
    }
}

fn from_rows(rows: &[Vec<f64>], what: &str) -> Result<DenseMatrix> {
    let n = rows.len();
    if n == 0 || rows.iter().any(|r| r.len() != n) {
        return Err(GpcaError::Config(format!("custom {what} must be a non-empty square matrix")));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    linalg::dense_from_row_major(n, n, &flat)
}

fn covariance_pair(cfg: &DgpConfig) -> Result<SeparableCovariance> {
    let (u, v) = match &cfg.cov_case {
        CovCase::Custom { u, v } => {
            let (u, v) = (from_rows(u, "U")?, from_rows(v, "V")?);
            if u.nrows() != cfg.p1 || v.nrows() != cfg.p2 {
                return Err(GpcaError::Config("custom U/V sizes do not match p1/p2".into()));
            }
            (u, v)
        }
        case => (
            gen_cov(case, cfg.p1, stream(cfg.seed, STREAM_COV_U).random())?,
            gen_cov(case, cfg.p2, stream(cfg.seed, STREAM_COV_V).random())?,
        ),
    };
    let (u, v) = match cfg.noise_draw {
        NoiseDraw::Root => (u, v),
        NoiseDraw::Direct => (linalg::symmetrize(&(&u * &u)), linalg::symmetrize(&(&v * &v))),
    };
    SeparableCovariance::new(u, v, ScaleConvention::AsGiven)
}

fn gaussian(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DenseMatrix {
    DMatrix::from_fn(r, c, |_, _| rng.sample(StandardNormal))
}

/// `√p · U^{1/2} · (left singular vectors of U^{-1/2} L)`.
fn normalize_loading(raw: &DenseMatrix, roots: &SpdRoots) -> Result<DenseMatrix> {
    let p = raw.nrows() as f64;
    let star = &roots.inv_sqrt * raw;
    let q = star.svd(true, false).u.ok_or_else(|| GpcaError::Data("SVD failed".into()))?;
    Ok(&roots.sqrt * q * p.sqrt())
}

/// Stationary unit-variance AR(1) draws `s_t = a·s_{t−1} + √(1−a²)·g_t`.
///
/// The state starts from its stationary law and `burn_in` steps are applied
/// in one aggregated transition `a^b s + √(1 − a^{2b}) g`, which has the same
/// distribution as iterating.
fn ar_path(rng: &mut ChaCha8Rng, a: f64, burn_in: usize, t: usize, r: usize, c: usize) -> Vec<DenseMatrix> {
    let mut state = gaussian(rng, r, c);
    if burn_in > 0 && a != 0.0 {
        let ab = a.powi(burn_in.min(i32::MAX as usize) as i32);
        state = state * ab + gaussian(rng, r, c) * (1.0 - ab * ab).max(0.0).sqrt();
    }
    let innov = (1.0 - a * a).sqrt();
    let mut out = Vec::with_capacity(t);
    for _ in 0..t {
        state = &state * a + gaussian(rng, r, c) * innov;
        out.push(state.clone());
    }
    out
}

/// Draws one series `X_t = R F_t Cᵀ + E_t` and its components.
pub fn gen_series(cfg: &DgpConfig) -> Result<(MatrixSeries, GroundTruth)> {
    cfg.validate()?;
    let (t, p1, p2, k1, k2) = (cfg.t, cfg.p1, cfg.p2, cfg.k1, cfg.k2);
    let cov = covariance_pair(cfg)?;
    let identity = cov.is_identity();
    let (ru, rv) = (SpdRoots::new(cov.u(), PD_TOLERANCE)?, SpdRoots::new(cov.v(), PD_TOLERANCE)?);

    let mut rng = stream(cfg.seed, STREAM_LOADINGS);
    let unif = Uniform::new(-1.0, 1.0).expect("valid range");
    let mut r = DMatrix::from_fn(p1, k1, |_, _| rng.sample(unif));
    let mut c = DMatrix::from_fn(p2, k2, |_, _| rng.sample(unif));
    if cfg.normality_mode {
        r = normalize_loading(&r, &ru)?;
        c = normalize_loading(&c, &rv)?;
    }

    let mut rng = stream(cfg.seed, STREAM_FACTORS);
    let (factors, factor_variances) = if cfg.normality_mode {
        let d: Vec<f64> = (0..k1 * k2).map(|i| NORMALITY_FACTOR_VARIANCES[i % 3]).collect();
        let sd = DMatrix::from_fn(k1, k2, |a, b| d[a + k1 * b].sqrt());
        let f: Vec<DenseMatrix> = (0..t).map(|_| gaussian(&mut rng, k1, k2).component_mul(&sd)).collect();
        (f, Some(d))
    } else {
        (ar_path(&mut rng, cfg.phi, cfg.burn_in, t, k1, k2), None)
    };

    let mut rng = stream(cfg.seed, STREAM_NOISE);
    let psi = if cfg.normality_mode { 0.0 } else { cfg.psi };
    let white = ar_path(&mut rng, psi, cfg.burn_in, t, p1, p2);
    let noise = if identity {
        white.into_iter().map(|w| w * cfg.noise_scale).collect::<Vec<_>>()
    } else {
        let left = &ru.sqrt * model::hstack(&white);
        let stacked = model::vstack(&model::split_hstack(&left, p2)) * &rv.sqrt * cfg.noise_scale;
        model::split_vstack(&stacked, p1)
    };

    let ct = c.transpose();
    let common: Vec<DenseMatrix> = factors.iter().map(|f| &r * f * &ct).collect();
    let x: Vec<DenseMatrix> = common.iter().zip(&noise).map(|(s, e)| s + e).collect();
    let truth = GroundTruth {
        r: LoadingMatrix::new(r, Identification::Raw)?,
        c: LoadingMatrix::new(c, Identification::Raw)?,
        cov,
        factors: MatrixSeries::new(factors)?,
        noise: MatrixSeries::new(noise)?,
        common: MatrixSeries::new(common)?,
        factor_variances,
    };
    Ok((MatrixSeries::new(x)?, truth))
}

/// `(Tp₁p₂)⁻¹ Σ_t ‖Ŝ_t − S_t‖²_F`.
pub fn mse_common(s_hat: &MatrixSeries, s: &MatrixSeries) -> Result<f64> {
    if s_hat.len() != s.len() || s_hat.shape() != s.shape() {
        return Err(GpcaError::Dimension(format!(
            "series of {} {}x{} vs {} {}x{}",
            s_hat.len(),
            s_hat.rows(),
            s_hat.cols(),
            s.len(),
            s.rows(),
            s.cols()
        )));
    }
    let total: f64 = s_hat.iter().zip(s.iter()).map(|(a, b)| (a - b).norm_squared()).sum();
    Ok(total / (s.len() * s.rows() * s.cols()) as f64)
}
