//! Dense linear algebra primitives shared by every estimator.
//!
//! Matrices are `nalgebra` dense matrices. Everything here is a pure function
//! of its inputs: identical input bytes produce identical output bytes.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};

use crate::error::{GpcaError, Result};

pub type DenseMatrix = DMatrix<f64>;

/// Floor on the smallest eigenvalue for a matrix to count as positive definite.
pub const PD_TOLERANCE: f64 = 1e-10;

/// Relative symmetry tolerance accepted by the eigen routines.
pub const SYMMETRY_TOLERANCE: f64 = 1e-8;

/// Matrices at or below this order always take the dense eigen path.
const DENSE_CUTOFF: usize = 64;

/// Builds a matrix from row-major entries, rejecting non-finite values.
pub fn dense_from_row_major(rows: usize, cols: usize, entries: &[f64]) -> Result<DenseMatrix> {
    if rows == 0 || cols == 0 {
        return Err(GpcaError::Dimension(format!("empty matrix {rows}x{cols}")));
    }
    if entries.len() != rows * cols {
        return Err(GpcaError::Dimension(format!(
            "{rows}x{cols} matrix needs {} entries, got {}",
            rows * cols,
            entries.len()
        )));
    }
    if entries.iter().any(|x| !x.is_finite()) {
        return Err(GpcaError::NonFinite("matrix entries"));
    }
    Ok(DMatrix::from_row_slice(rows, cols, entries))
}

pub fn ensure_finite(m: &DenseMatrix, what: &'static str) -> Result<()> {
    if m.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(GpcaError::NonFinite(what))
    }
}

/// Largest absolute entry.
pub fn max_abs(m: &DenseMatrix) -> f64 {
    m.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}

pub fn max_asymmetry(m: &DenseMatrix) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0_f64;
    for j in 0..n {
        for i in (j + 1)..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

/// Checks `‖S − Sᵀ‖_max ≤ rel_tol·‖S‖_max` and returns the exactly symmetrized copy.
pub fn symmetrize_checked(s: &DenseMatrix, rel_tol: f64) -> Result<DenseMatrix> {
    if !s.is_square() {
        return Err(GpcaError::Dimension(format!(
            "expected a square matrix, got {}x{}",
            s.nrows(),
            s.ncols()
        )));
    }
    ensure_finite(s, "symmetric input")?;
    let asym = max_asymmetry(s);
    let tolerance = rel_tol * max_abs(s);
    if asym > tolerance {
        return Err(GpcaError::NotSymmetric { asymmetry: asym, tolerance });
    }
    Ok(symmetrize(s))
}

/// `(S + Sᵀ)/2`, written so the result is bitwise symmetric.
pub fn symmetrize(s: &DenseMatrix) -> DenseMatrix {
    let n = s.nrows();
    let mut out = s.clone();
    for j in 0..n {
        for i in (j + 1)..n {
            let avg = 0.5 * (s[(i, j)] + s[(j, i)]);
            out[(i, j)] = avg;
            out[(j, i)] = avg;
        }
    }
    out
}

/// Leading eigenpairs of a symmetric matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralDecomposition {
    /// Non-increasing.
    pub eigenvalues: Vec<f64>,
    /// Orthonormal columns; in each column the entry of largest magnitude is
    /// positive (ties go to the lowest row index).
    pub eigenvectors: DenseMatrix,
}

impl SpectralDecomposition {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }
}

/// Flips each column so its largest-magnitude entry is positive.
pub fn apply_sign_convention(q: &mut DenseMatrix) {
    for mut col in q.column_iter_mut() {
        let mut best = 0usize;
        let mut best_abs = -1.0_f64;
        for (i, v) in col.iter().enumerate() {
            if v.abs() > best_abs {
                best_abs = v.abs();
                best = i;
            }
        }
        if col[best] < 0.0 {
            col.neg_mut();
        }
    }
}

/// Full spectral decomposition, eigenvalues sorted non-increasing.
pub fn sym_eig(s: &DenseMatrix) -> Result<SpectralDecomposition> {
    let sym = symmetrize_checked(s, SYMMETRY_TOLERANCE)?;
    Ok(dense_topk(sym, s.nrows()))
}

/// The `k` largest eigenvalues of a symmetric matrix with their eigenvectors.
///
/// Large matrices go through a block Krylov (Rayleigh–Ritz) solver whose
/// residuals are verified before the result is accepted; anything that fails
/// verification is recomputed with the dense solver.
pub fn sym_eig_topk(s: &DenseMatrix, k: usize) -> Result<SpectralDecomposition> {
    let p = s.nrows();
    if k > p || !s.is_square() {
        return Err(GpcaError::Dimension(format!(
            "requested {k} eigenpairs of a {}x{} matrix",
            s.nrows(),
            s.ncols()
        )));
    }
    let sym = symmetrize_checked(s, SYMMETRY_TOLERANCE)?;
    if k == 0 {
        return Ok(SpectralDecomposition {
            eigenvalues: Vec::new(),
            eigenvectors: DMatrix::zeros(p, 0),
        });
    }
    Ok(topk_with_next(sym, k).0)
}

/// Top-k eigenpairs plus an estimate of `λ_{k+1}` (exact on the dense path,
/// the next Ritz value on the Krylov path, where only the leading k pairs are
/// converged). The estimate is `None` when `k = p`.
pub fn sym_eig_topk_with_next(s: &DenseMatrix, k: usize) -> Result<(SpectralDecomposition, Option<f64>)> {
    let p = s.nrows();
    if k == 0 || k > p || !s.is_square() {
        return Err(GpcaError::Dimension(format!(
            "requested {k} eigenpairs of a {}x{} matrix",
            s.nrows(),
            s.ncols()
        )));
    }
    let sym = symmetrize_checked(s, SYMMETRY_TOLERANCE)?;
    Ok(topk_with_next(sym, k))
}

fn topk_with_next(sym: DenseMatrix, k: usize) -> (SpectralDecomposition, Option<f64>) {
    let p = sym.nrows();
    if p <= DENSE_CUTOFF || 4 * k >= p {
        let want = (k + 1).min(p);
        let mut dec = dense_topk(sym, want);
        let next = (want > k).then(|| dec.eigenvalues[k]);
        dec.eigenvalues.truncate(k);
        dec.eigenvectors = dec.eigenvectors.columns(0, k).into_owned();
        return (dec, next);
    }
    match krylov_topk(&sym, k) {
        Some(found) => found,
        None => {
            let mut dec = dense_topk(sym, k + 1);
            let next = Some(dec.eigenvalues[k]);
            dec.eigenvalues.truncate(k);
            dec.eigenvectors = dec.eigenvectors.columns(0, k).into_owned();
            (dec, next)
        }
    }
}

fn dense_topk(sym: DenseMatrix, k: usize) -> SpectralDecomposition {
    let p = sym.nrows();
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut vecs = DMatrix::zeros(p, k);
    let mut vals = Vec::with_capacity(k);
    for (j, &idx) in order.iter().take(k).enumerate() {
        vals.push(eig.eigenvalues[idx]);
        vecs.set_column(j, &eig.eigenvectors.column(idx));
    }
    apply_sign_convention(&mut vecs);
    SpectralDecomposition { eigenvalues: vals, eigenvectors: vecs }
}

/// Deterministic start block: splitmix64 stream mapped to [-1, 1).
fn start_block(p: usize, b: usize) -> DenseMatrix {
    let mut state: u64 = 0x9E37_79B9_7F4A_7C15 ^ ((p as u64) << 20) ^ b as u64;
    DMatrix::from_fn(p, b, |_, _| {
        state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
        (z >> 11) as f64 / (1u64 << 52) as f64 - 1.0
    })
}

/// Orthogonalizes `cols` against the first `filled` columns of `basis` (two
/// passes) and appends the surviving directions. Returns the number appended.
fn append_orthonormal(basis: &mut DenseMatrix, filled: usize, cols: &DenseMatrix, drop_tol: f64) -> usize {
    let mut added = 0;
    for c in 0..cols.ncols() {
        if filled + added >= basis.ncols() {
            break;
        }
        let mut v: DVector<f64> = cols.column(c).into_owned();
        let start_norm = v.norm();
        if start_norm == 0.0 {
            continue;
        }
        for _ in 0..2 {
            for j in 0..(filled + added) {
                let bj = basis.column(j);
                let proj = bj.dot(&v);
                v.axpy(-proj, &bj, 1.0);
            }
        }
        let norm = v.norm();
        if norm <= drop_tol * start_norm {
            continue;
        }
        v /= norm;
        basis.set_column(filled + added, &v);
        added += 1;
    }
    added
}

fn krylov_topk(s: &DenseMatrix, k: usize) -> Option<(SpectralDecomposition, Option<f64>)> {
    let p = s.nrows();
    let block = (k + 2).min(p);
    let mut dim = (8 * block).max(30).min(p);
    loop {
        if dim >= p {
            return None;
        }
        let mut basis = DMatrix::zeros(p, dim);
        let mut filled = append_orthonormal(&mut basis, 0, &start_block(p, block), 1e-10);
        let mut last = (0, filled);
        while filled < dim {
            let current = basis.columns(last.0, last.1 - last.0).into_owned();
            let next = s * current;
            let added = append_orthonormal(&mut basis, filled, &next, 1e-10);
            if added == 0 {
                break;
            }
            last = (filled, filled + added);
            filled += added;
        }
        if filled < k {
            return None;
        }
        let basis = basis.columns(0, filled).into_owned();
        let s_basis = s * &basis;
        let projected = symmetrize(&(basis.transpose() * &s_basis));
        let mut ritz = dense_topk(projected, (k + 1).min(filled));
        let next = (ritz.eigenvalues.len() > k).then(|| ritz.eigenvalues[k]);
        ritz.eigenvalues.truncate(k);
        ritz.eigenvectors = ritz.eigenvectors.columns(0, k).into_owned();
        let vectors = &basis * &ritz.eigenvectors;
        let images = &s_basis * &ritz.eigenvectors;
        let accept = 1e-11 * (ritz.eigenvalues[0].abs() + 1.0);
        let converged = (0..k).all(|j| {
            let r = images.column(j) - vectors.column(j) * ritz.eigenvalues[j];
            r.norm() <= accept
        });
        if converged {
            let mut vectors = vectors;
            apply_sign_convention(&mut vectors);
            return Some((SpectralDecomposition { eigenvalues: ritz.eigenvalues, eigenvectors: vectors }, next));
        }
        dim *= 2;
    }
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(s: &DenseMatrix) -> Result<f64> {
    let sym = symmetrize_checked(s, SYMMETRY_TOLERANCE)?;
    let eig = SymmetricEigen::new(sym);
    Ok(eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min))
}

/// Cheap sufficient test for `λ_min(S) > tol`: Cholesky of `S − 2·tol·I`.
pub fn is_positive_definite(s: &DenseMatrix, tol: f64) -> bool {
    let n = s.nrows();
    let shifted = s - DMatrix::<f64>::identity(n, n) * (2.0 * tol);
    Cholesky::new(symmetrize(&shifted)).is_some()
}

/// Square root, inverse square root and inverse of an SPD matrix, all taken
/// from a single spectral decomposition.
#[derive(Debug, Clone)]
pub struct SpdRoots {
    pub sqrt: DenseMatrix,
    pub inv_sqrt: DenseMatrix,
    pub inverse: DenseMatrix,
    pub min_eigenvalue: f64,
}

impl SpdRoots {
    pub fn new(s: &DenseMatrix, pd_tolerance: f64) -> Result<Self> {
        let n = s.nrows();
        let sym = symmetrize_checked(s, SYMMETRY_TOLERANCE)?;
        if is_exact_identity(&sym) {
            let id = DMatrix::identity(n, n);
            return Ok(SpdRoots { sqrt: id.clone(), inv_sqrt: id.clone(), inverse: id, min_eigenvalue: 1.0 });
        }
        let eig = SymmetricEigen::new(sym);
        let min_eigenvalue = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
        if !(min_eigenvalue > pd_tolerance) {
            return Err(GpcaError::NotPositiveDefinite { min_eigenvalue });
        }
        let q = &eig.eigenvectors;
        let build = |f: &dyn Fn(f64) -> f64| {
            let mut scaled = q.clone();
            for (j, mut col) in scaled.column_iter_mut().enumerate() {
                col *= f(eig.eigenvalues[j]);
            }
            symmetrize(&(scaled * q.transpose()))
        };
        Ok(SpdRoots {
            sqrt: build(&|l| l.sqrt()),
            inv_sqrt: build(&|l| 1.0 / l.sqrt()),
            inverse: build(&|l| 1.0 / l),
            min_eigenvalue,
        })
    }
}

pub fn is_exact_identity(m: &DenseMatrix) -> bool {
    m.is_square()
        && m
            .iter()
            .enumerate()
            .all(|(idx, &x)| if idx % (m.nrows() + 1) == 0 { x == 1.0 } else { x == 0.0 })
}

/// Symmetric square root of an SPD matrix.
pub fn spd_sqrt(s: &DenseMatrix) -> Result<DenseMatrix> {
    Ok(SpdRoots::new(s, PD_TOLERANCE)?.sqrt)
}

/// Symmetric inverse square root of an SPD matrix.
pub fn spd_inv_sqrt(s: &DenseMatrix) -> Result<DenseMatrix> {
    Ok(SpdRoots::new(s, PD_TOLERANCE)?.inv_sqrt)
}

/// Modified Gram–Schmidt with one reorthogonalization pass.
pub fn orthonormalize(q: &DenseMatrix) -> Result<DenseMatrix> {
    ensure_finite(q, "orthonormalize input")?;
    let (p, k) = q.shape();
    if k > p {
        return Err(GpcaError::RankDeficient { column: p, norm: 0.0 });
    }
    let mut out = q.clone();
    for j in 0..k {
        let original = q.column(j).norm();
        for _ in 0..2 {
            for i in 0..j {
                let proj = out.column(i).dot(&out.column(j));
                let qi = out.column(i).into_owned();
                out.column_mut(j).axpy(-proj, &qi, 1.0);
            }
        }
        let norm = out.column(j).norm();
        if norm < 1e-12 * original.max(1.0) {
            return Err(GpcaError::RankDeficient { column: j, norm });
        }
        out.column_mut(j).unscale_mut(norm);
    }
    Ok(out)
}

/// Distance between column spans, `(1 − Tr(P₁P₂)/min(q₁,q₂))^{1/2}` in [0, 1].
///
/// Evaluated as `‖(I − P_big)Q_small‖_F / √q_small`, which equals the trace
/// form but keeps full relative accuracy near zero. Equal-width inputs are
/// averaged over both orders so the result is exactly symmetric.
pub fn subspace_distance(q1: &DenseMatrix, q2: &DenseMatrix) -> Result<f64> {
    if q1.nrows() != q2.nrows() {
        return Err(GpcaError::Dimension(format!(
            "subspace distance between {}-row and {}-row bases",
            q1.nrows(),
            q2.nrows()
        )));
    }
    let a = orthonormalize(q1)?;
    let b = orthonormalize(q2)?;
    let d = match a.ncols().cmp(&b.ncols()) {
        std::cmp::Ordering::Less => projection_residual(&a, &b),
        std::cmp::Ordering::Greater => projection_residual(&b, &a),
        std::cmp::Ordering::Equal => 0.5 * (projection_residual(&a, &b) + projection_residual(&b, &a)),
    };
    Ok(d.clamp(0.0, 1.0))
}

fn projection_residual(small: &DenseMatrix, big: &DenseMatrix) -> f64 {
    if small.ncols() == 0 {
        return 0.0;
    }
    let resid = small - big * (big.transpose() * small);
    (resid.norm_squared() / small.ncols() as f64).sqrt()
}

/// Spectral norm of a symmetric matrix (largest absolute eigenvalue).
pub fn sym_spectral_norm(s: &DenseMatrix) -> Result<f64> {
    let sym = symmetrize_checked(s, SYMMETRY_TOLERANCE)?;
    let eig = SymmetricEigen::new(sym);
    Ok(eig.eigenvalues.iter().fold(0.0_f64, |acc, l| acc.max(l.abs())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn lcg_matrix(n: usize, m: usize, seed: u64) -> DenseMatrix {
        let mut s = seed;
        DMatrix::from_fn(n, m, |_, _| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        })
    }

    fn random_symmetric(n: usize, seed: u64) -> DenseMatrix {
        let a = lcg_matrix(n, n, seed);
        symmetrize(&(&a + a.transpose()))
    }

    #[test]
    fn diag_top_one() {
        let s = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 1.0]);
        let dec = sym_eig_topk(&s, 1).unwrap();
        assert_eq!(dec.eigenvalues, vec![2.0]);
        assert_eq!(dec.eigenvectors.column(0).as_slice(), &[1.0, 0.0]);
    }

    #[test]
    fn identity_top_two_is_orthonormal_with_positive_peaks() {
        let s = DMatrix::<f64>::identity(3, 3);
        let dec = sym_eig_topk(&s, 2).unwrap();
        assert_eq!(dec.eigenvalues, vec![1.0, 1.0]);
        let gram = dec.eigenvectors.transpose() * &dec.eigenvectors;
        assert!((gram - DMatrix::<f64>::identity(2, 2)).amax() < 1e-12);
        for col in dec.eigenvectors.column_iter() {
            let peak = col.iter().cloned().fold(0.0_f64, |a, x| if x.abs() > a.abs() { x } else { a });
            assert!(peak > 0.0);
        }
    }

    /// Coefficients of det(λI − S) via Faddeev–LeVerrier, then roots by bisection
    /// on sign changes over a fine grid. Independent of any eigensolver.
    fn char_poly_roots(s: &DenseMatrix) -> Vec<f64> {
        let n = s.nrows();
        let mut coeffs = vec![1.0];
        let mut m = DMatrix::<f64>::zeros(n, n);
        let id = DMatrix::<f64>::identity(n, n);
        for k in 1..=n {
            m = s * &m + &id * coeffs[k - 1];
            let c = -(s * &m).trace() / k as f64;
            coeffs.push(c);
        }
        let poly = |x: f64| coeffs.iter().fold(0.0, |acc, c| acc * x + c);
        let bound = 1.0 + s.iter().map(|x| x.abs()).sum::<f64>();
        let steps = 200_000;
        let mut roots = Vec::new();
        let h = 2.0 * bound / steps as f64;
        let mut lo = -bound;
        let mut flo = poly(lo);
        for i in 1..=steps {
            let hi = -bound + h * i as f64;
            let fhi = poly(hi);
            if flo == 0.0 {
                roots.push(lo);
            } else if flo * fhi < 0.0 {
                let (mut a, mut b, mut fa) = (lo, hi, flo);
                for _ in 0..200 {
                    let mid = 0.5 * (a + b);
                    let fm = poly(mid);
                    if fa * fm <= 0.0 {
                        b = mid;
                    } else {
                        a = mid;
                        fa = fm;
                    }
                }
                roots.push(0.5 * (a + b));
            }
            lo = hi;
            flo = fhi;
        }
        roots.sort_by(|a, b| b.partial_cmp(a).unwrap());
        roots
    }

    #[test]
    fn eigenvalues_match_characteristic_polynomial_roots() {
        let s = random_symmetric(4, 42);
        let roots = char_poly_roots(&s);
        assert_eq!(roots.len(), 4);
        let dec = sym_eig_topk(&s, 4).unwrap();
        for (a, b) in dec.eigenvalues.iter().zip(&roots) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-8);
        }
    }

    #[test]
    fn krylov_path_matches_dense_path() {
        let a = lcg_matrix(200, 12, 7);
        let s = &a * a.transpose() + DMatrix::<f64>::identity(200, 200) * 0.5;
        let fast = sym_eig_topk(&s, 3).unwrap();
        let dense = dense_topk(symmetrize(&s), 3);
        for j in 0..3 {
            assert_abs_diff_eq!(fast.eigenvalues[j], dense.eigenvalues[j], epsilon = 1e-9);
            let r = &s * fast.eigenvectors.column(j) - fast.eigenvectors.column(j) * fast.eigenvalues[j];
            assert!(r.norm() <= 1e-8 * (fast.eigenvalues[0].abs() + 1.0));
        }
        let d = subspace_distance(&fast.eigenvectors, &dense.eigenvectors).unwrap();
        assert!(d < 1e-9);
    }

    #[test]
    fn eig_rejects_bad_input() {
        let s = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]);
        assert!(matches!(sym_eig_topk(&s, 1), Err(GpcaError::NotSymmetric { .. })));
        let id = DMatrix::<f64>::identity(2, 2);
        assert!(matches!(sym_eig_topk(&id, 3), Err(GpcaError::Dimension(_))));
    }

    #[test]
    fn eig_is_deterministic() {
        let s = random_symmetric(90, 3);
        let a = sym_eig_topk(&s, 4).unwrap();
        let b = sym_eig_topk(&s, 4).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn sqrt_of_simple_matrices() {
        let id = DMatrix::<f64>::identity(4, 4);
        assert_eq!(spd_sqrt(&id).unwrap(), id);
        let d = DMatrix::from_row_slice(2, 2, &[4.0, 0.0, 0.0, 9.0]);
        let r = spd_sqrt(&d).unwrap();
        assert!((r - DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 3.0])).amax() < 1e-14);
    }

    #[test]
    fn sqrt_of_banded_matrix_multiplies_back() {
        let s = DMatrix::from_fn(6, 6, |i, j| {
            let d = (i as f64 - j as f64).abs();
            if i == j {
                1.0
            } else {
                (0.5 - d / 10.0).max(0.0)
            }
        });
        let m = spd_sqrt(&s).unwrap();
        assert!((&m * &m - &s).amax() <= 1e-8 * s.amax());
        let w = spd_inv_sqrt(&s).unwrap();
        assert!((&w * &s * &w - DMatrix::<f64>::identity(6, 6)).amax() <= 1e-8);
    }

    #[test]
    fn sqrt_rejects_indefinite() {
        let s = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        match spd_sqrt(&s) {
            Err(GpcaError::NotPositiveDefinite { min_eigenvalue }) => {
                assert_abs_diff_eq!(min_eigenvalue, -1.0, epsilon = 1e-12)
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn gram_schmidt_by_hand() {
        let q = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]);
        let o = orthonormalize(&q).unwrap();
        assert!((o - DMatrix::<f64>::identity(2, 2)).amax() < 1e-15);
    }

    #[test]
    fn gram_schmidt_is_idempotent_and_preserves_span() {
        let q = lcg_matrix(10, 3, 11);
        let o = orthonormalize(&q).unwrap();
        assert!((o.transpose() * &o - DMatrix::<f64>::identity(3, 3)).amax() < 1e-10);
        let again = orthonormalize(&o).unwrap();
        assert!((&again - &o).amax() < 1e-12);
        // Projector onto span(q) computed independently through the normal equations.
        let proj_q = &q * (q.transpose() * &q).try_inverse().unwrap() * q.transpose();
        assert!((proj_q - &o * o.transpose()).amax() < 1e-10);
    }

    #[test]
    fn gram_schmidt_rejects_rank_deficiency() {
        let q = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 1.0, 2.0, 1.0, 2.0]);
        assert!(matches!(orthonormalize(&q), Err(GpcaError::RankDeficient { column: 1, .. })));
    }

    #[test]
    fn distance_examples() {
        let e = DMatrix::<f64>::identity(3, 3);
        let q = lcg_matrix(3, 2, 5);
        assert!(subspace_distance(&q, &q).unwrap() < 1e-15);
        let d = subspace_distance(&e.columns(0, 1).into_owned(), &e.columns(1, 1).into_owned()).unwrap();
        assert_abs_diff_eq!(d, 1.0, epsilon = 1e-15);
        let a = e.columns(0, 2).into_owned();
        let b = DMatrix::from_columns(&[e.column(0), e.column(2)]);
        // Tr(P_a P_b) = 1 by direct projector multiplication.
        let tr = (&a * a.transpose() * &b * b.transpose()).trace();
        assert_abs_diff_eq!(tr, 1.0, epsilon = 1e-15);
        let d = subspace_distance(&a, &b).unwrap();
        assert_abs_diff_eq!(d, (1.0f64 - 0.5).sqrt(), epsilon = 1e-12);
        assert!(subspace_distance(&a, &DMatrix::zeros(4, 1)).is_err());
    }
}
