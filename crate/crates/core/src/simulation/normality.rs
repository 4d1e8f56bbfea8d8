//! Asymptotic normality check for one loading entry.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::dgp::{self, DgpConfig, GroundTruth};
use super::experiment::replication_seed;
use crate::error::{GpcaError, Result};
use crate::linalg::{self, DenseMatrix, SpdRoots, PD_TOLERANCE};
use crate::model::{LoadingMatrix, Method};
use crate::pipeline::{self, FitSettings};

/// Least-squares alignments `H = (LᵀL)⁻¹LᵀL̂` of estimated loadings onto the truth.
#[derive(Debug, Clone, PartialEq)]
pub struct RotationAlignment {
    pub h_r: DenseMatrix,
    pub h_c: DenseMatrix,
}

/// `H = (LᵀL)⁻¹Lᵀ L̂`, so that `est ≈ truth·H`.
pub fn align_rotation(est: &LoadingMatrix, truth: &LoadingMatrix) -> Result<DenseMatrix> {
    if est.nrows() != truth.nrows() || est.ncols() != truth.ncols() {
        return Err(GpcaError::Dimension(format!(
            "estimate {}x{} vs truth {}x{}",
            est.nrows(),
            est.ncols(),
            truth.nrows(),
            truth.ncols()
        )));
    }
    let l = truth.values();
    linalg::orthonormalize(l)?;
    let gram = l.transpose() * l;
    let chol = gram.cholesky().ok_or(GpcaError::RankDeficient { column: 0, norm: 0.0 })?;
    Ok(chol.solve(&(l.transpose() * est.values())))
}

/// Row and column alignments together.
pub fn align_both(r_est: &LoadingMatrix, r: &LoadingMatrix, c_est: &LoadingMatrix, c: &LoadingMatrix) -> Result<RotationAlignment> {
    Ok(RotationAlignment { h_r: align_rotation(r_est, r)?, h_c: align_rotation(c_est, c)? })
}

/// Monte Carlo approximation of the limiting covariance of `√(Tp₂)(R̂_{i·} − HᵀR_{i·})`.
#[derive(Debug, Clone, PartialEq)]
pub struct AsymptoticVariance {
    /// `Λ⁻¹ΓᵀAΓΛ⁻¹`.
    pub covariance: DenseMatrix,
    /// Entry-wise Monte Carlo standard errors of `covariance`.
    pub std_error: DenseMatrix,
    /// The averaged `A = (uᵢᵢ/p₂)·E[F CᵀV⁻¹C Fᵀ]`.
    pub a: DenseMatrix,
    /// Eigenvalues of `Σ₁ = E(F Fᵀ)`, descending.
    pub lambda: Vec<f64>,
    pub n_mc: usize,
}

/// Averages `(uᵢᵢ/p₂)·F CᵀV⁻¹C Fᵀ` over `n_mc` fresh factor draws
/// `vec F ~ N(0, D)` and sandwiches it with the spectral decomposition of
/// `Σ₁ = E(F Fᵀ)`, whose diagonal is `Σ_b D[a + k₁b]`.
pub fn asymptotic_variance_r(truth: &GroundTruth, i: usize, n_mc: usize, seed: u64) -> Result<AsymptoticVariance> {
    let d = truth
        .factor_variances
        .as_ref()
        .ok_or_else(|| GpcaError::Config("asymptotic variance needs a normality-mode ground truth".into()))?;
    let (p1, k1) = (truth.r.nrows(), truth.r.ncols());
    let (p2, k2) = (truth.c.nrows(), truth.c.ncols());
    if i >= p1 {
        return Err(GpcaError::Dimension(format!("row index {i} out of range for p1 = {p1}")));
    }
    if n_mc < 2 {
        return Err(GpcaError::Config("n_mc must be at least 2".into()));
    }
    let v_inv = SpdRoots::new(truth.cov.v(), PD_TOLERANCE)?.inverse;
    let c = truth.c.values();
    let ctvc = c.transpose() * v_inv * c;
    let uii = truth.cov.u()[(i, i)];
    let sigma1 = DMatrix::from_fn(k1, k1, |a, b| if a == b { (0..k2).map(|j| d[a + k1 * j]).sum() } else { 0.0 });
    let dec = linalg::sym_eig(&sigma1)?;
    let gamma = dec.eigenvectors;
    let m = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(k1, dec.eigenvalues.iter().map(|l| 1.0 / l)))
        * gamma.transpose();
    let sd = DMatrix::from_fn(k1, k2, |a, b| d[a + k1 * b].sqrt());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut a_sum = DMatrix::zeros(k1, k1);
    let mut c_sum = DMatrix::zeros(k1, k1);
    let mut c_sq = DMatrix::zeros(k1, k1);
    for _ in 0..n_mc {
        let f = DMatrix::<f64>::from_fn(k1, k2, |_, _| rng.sample(StandardNormal)).component_mul(&sd);
        let a = &f * &ctvc * f.transpose() * (uii / p2 as f64);
        let s = &m * &a * m.transpose();
        c_sq += s.component_mul(&s);
        c_sum += &s;
        a_sum += a;
    }
    let n = n_mc as f64;
    let covariance = &c_sum / n;
    let var = (c_sq / n - covariance.component_mul(&covariance)) * (n / (n - 1.0));
    let std_error = var.map(|v| (v.max(0.0) / n).sqrt());
    Ok(AsymptoticVariance { covariance, std_error, a: a_sum / n, lambda: dec.eigenvalues, n_mc })
}

/// Kolmogorov–Smirnov distance between the empirical law of `xs` and N(0, 1).
pub fn ks_distance(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let normal = Normal::standard();
    let n = v.len() as f64;
    v.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = normal.cdf(x);
            ((i + 1) as f64 / n - f).max(f - i as f64 / n)
        })
        .fold(0.0, f64::max)
}

/// Counts of `xs` in `bins` equal-width bins over `[lo, hi)`; values outside
/// are ignored.
pub fn histogram(xs: &[f64], lo: f64, hi: f64, bins: usize) -> Vec<usize> {
    let mut counts = vec![0; bins];
    let width = (hi - lo) / bins as f64;
    for &x in xs {
        if x >= lo && x < hi {
            let b = (((x - lo) / width) as usize).min(bins - 1);
            counts[b] += 1;
        }
    }
    counts
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodNormality {
    pub method: Method,
    /// Standardized errors of successful replications, in replication order.
    pub z: Vec<f64>,
    pub ks: f64,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormalityReport {
    pub methods: Vec<MethodNormality>,
    pub variance: AsymptoticVariance,
}

impl NormalityReport {
    pub fn get(&self, method: Method) -> Option<&MethodNormality> {
        self.methods.iter().find(|m| m.method == method)
    }
}

fn standardized_error(est: &LoadingMatrix, truth: &LoadingMatrix, t: usize, p2: usize, scale: f64) -> Result<f64> {
    let h = align_rotation(est, truth)?;
    let target = (truth.values().row(0) * h.column(0))[(0, 0)];
    Ok(((t * p2) as f64).sqrt() * (est.values()[(0, 0)] - target) / scale)
}

/// Fits each method on `n_reps` normality-mode datasets and standardizes the
/// error of the first row loading entry,
/// `z = √(Tp₂)(R̂₁₁ − [HᵀR_{1·}]₁) / √[Λ⁻¹ΓᵀAΓΛ⁻¹]₁₁`.
///
/// All methods see the same datasets. The asymptotic variance is computed
/// once from the first replication's truth: `u₁₁`, `D` and `CᵀV⁻¹C = p₂I` do
/// not change across replications.
pub fn normality_experiment(
    cfg: &DgpConfig,
    methods: &[Method],
    n_reps: usize,
    settings: &FitSettings,
    n_mc: usize,
) -> Result<NormalityReport> {
    if !cfg.normality_mode {
        return Err(GpcaError::Config("normality experiment needs normality_mode".into()));
    }
    if n_reps == 0 {
        return Err(GpcaError::Config("n_reps must be at least 1".into()));
    }
    let (_, first) = dgp::gen_series(&DgpConfig { seed: replication_seed(cfg.seed, 0), ..cfg.clone() })?;
    let variance = asymptotic_variance_r(&first, 0, n_mc, cfg.seed ^ 0x5bd1_e995)?;
    let scale = variance.covariance[(0, 0)].sqrt();
    let per_rep: Vec<Result<Vec<Option<f64>>>> = (0..n_reps)
        .into_par_iter()
        .map(|rep| {
            let seed = replication_seed(cfg.seed, rep);
            let (x, truth) = dgp::gen_series(&DgpConfig { seed, ..cfg.clone() })?;
            let mut local = settings.clone();
            local.threshold.cv_seed ^= seed;
            let fits = pipeline::fit_methods(&x, cfg.k1, cfg.k2, methods, Some(&truth.cov), &local);
            Ok(fits
                .fits
                .iter()
                .map(|(_, fit)| {
                    fit.as_ref().ok().and_then(|f| standardized_error(&f.r_hat, &truth.r, cfg.t, cfg.p2, scale).ok())
                })
                .collect())
        })
        .collect();
    let mut columns: Vec<Vec<Option<f64>>> = vec![Vec::with_capacity(n_reps); methods.len()];
    for rep in per_rep {
        for (slot, z) in rep?.into_iter().enumerate() {
            columns[slot].push(z);
        }
    }
    let methods = methods
        .iter()
        .zip(columns)
        .map(|(&method, col)| {
            let z: Vec<f64> = col.iter().flatten().copied().collect();
            MethodNormality { method, ks: ks_distance(&z), failures: col.len() - z.len(), z }
        })
        .collect();
    Ok(NormalityReport { methods, variance })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Identification;
    use crate::simulation::dgp::CovCase;

    fn randn(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DenseMatrix {
        DMatrix::from_fn(r, c, |_, _| rng.sample(StandardNormal))
    }

    fn rotation(theta: f64) -> DenseMatrix {
        DMatrix::from_row_slice(2, 2, &[theta.cos(), -theta.sin(), theta.sin(), theta.cos()])
    }

    #[test]
    fn alignment_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let l = LoadingMatrix::new(randn(&mut rng, 10, 2), Identification::Raw).unwrap();
        let h = align_rotation(&l, &l).unwrap();
        assert!((h - DMatrix::<f64>::identity(2, 2)).amax() < 1e-12);
        let o = rotation(0.4);
        let rotated = LoadingMatrix::new(l.values() * &o, Identification::Raw).unwrap();
        assert!((align_rotation(&rotated, &l).unwrap() - &o).amax() < 1e-10);

        let noisy = LoadingMatrix::new(l.values() * &o + randn(&mut rng, 10, 2) * 0.1, Identification::Raw).unwrap();
        let h = align_rotation(&noisy, &l).unwrap();
        let best = (noisy.values() - l.values() * h).norm();
        for k in 0..100 {
            let g = rotation(k as f64 * 0.0628);
            assert!(best <= (noisy.values() - l.values() * g).norm() + 1e-12);
        }
        let flat = LoadingMatrix::from_parts(DMatrix::from_element(10, 2, 1.0), Identification::Raw);
        assert!(align_rotation(&noisy, &flat).is_err());
    }

    #[test]
    fn variance_closed_form_with_identity_v() {
        let cfg = DgpConfig {
            t: 10,
            p1: 10,
            p2: 30,
            normality_mode: true,
            cov_case: CovCase::Custom {
                u: (0..10).map(|i| (0..10).map(|j| if i == j { 2.0 } else { 0.0 }).collect()).collect(),
                v: (0..30).map(|i| (0..30).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect(),
            },
            ..DgpConfig::default()
        };
        let (_, truth) = dgp::gen_series(&cfg).unwrap();
        let est = asymptotic_variance_r(&truth, 0, 4000, 3).unwrap();
        assert_eq!(est.lambda, vec![4.5, 3.0, 1.5]);
        for a in 0..3 {
            for b in 0..3 {
                let exact = if a == b { 2.0 / est.lambda[a] } else { 0.0 };
                assert!((est.covariance[(a, b)] - exact).abs() <= 3.0 * est.std_error[(a, b)] + 1e-12, "({a},{b})");
            }
        }
        let small = asymptotic_variance_r(&truth, 0, 1000, 5).unwrap();
        let big = asymptotic_variance_r(&truth, 0, 4000, 5).unwrap();
        let ratio = big.std_error[(0, 0)] / small.std_error[(0, 0)];
        assert!((0.4..0.6).contains(&ratio), "{ratio}");
    }

    #[test]
    fn variance_is_linear_in_uii() {
        let mk = |s: f64| DgpConfig {
            t: 5,
            p1: 5,
            p2: 10,
            normality_mode: true,
            cov_case: CovCase::Custom {
                u: (0..5).map(|i| (0..5).map(|j| if i == j { s } else { 0.0 }).collect()).collect(),
                v: (0..10).map(|i| (0..10).map(|j| if i == j { 1.0 } else { 0.1 }).collect()).collect(),
            },
            ..DgpConfig::default()
        };
        let (_, a) = dgp::gen_series(&mk(1.0)).unwrap();
        let (_, b) = dgp::gen_series(&mk(2.0)).unwrap();
        let va = asymptotic_variance_r(&a, 0, 200, 9).unwrap();
        let vb = asymptotic_variance_r(&b, 0, 200, 9).unwrap();
        assert!((vb.covariance - va.covariance * 2.0).amax() < 1e-10);
        let (_, plain) = dgp::gen_series(&DgpConfig { t: 5, p1: 5, p2: 10, ..DgpConfig::default() }).unwrap();
        assert!(matches!(asymptotic_variance_r(&plain, 0, 10, 0), Err(GpcaError::Config(_))));
    }

    #[test]
    fn ks_and_histogram() {
        assert!((ks_distance(&[0.0]) - 0.5).abs() < 1e-12);
        let normal = Normal::standard();
        let grid: Vec<f64> = (0..1000).map(|i| normal.inverse_cdf((i as f64 + 0.5) / 1000.0)).collect();
        assert!(ks_distance(&grid) <= 0.0005 + 1e-9);
        let shifted: Vec<f64> = grid.iter().map(|x| x + 1.0).collect();
        assert!(ks_distance(&shifted) > 0.3);
        assert_eq!(histogram(&[-1.0, 0.1, 0.2, 5.0], -1.0, 1.0, 2), vec![1, 2]);
    }

    #[test]
    fn noiseless_errors_vanish() {
        let cfg = DgpConfig { t: 20, p1: 10, p2: 20, normality_mode: true, noise_scale: 0.0, ..DgpConfig::default() };
        let report = normality_experiment(&cfg, &[Method::Pe, Method::OracleGpca], 3, &FitSettings::default(), 50).unwrap();
        for m in &report.methods {
            assert_eq!(m.failures, 0);
            assert!(m.z.iter().all(|z| z.abs() < 1e-6), "{:?}", m.z);
        }
    }
}
