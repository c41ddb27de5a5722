//! Dense kernels shared by the realization, Riccati and LMI code.

use nalgebra::{DMatrix, DVector, Schur, SVD};
use num_complex::Complex64;

use super::SsError;

pub type Mat = DMatrix<f64>;
pub type CMat = DMatrix<Complex64>;

const SCHUR_MAX_ITER: usize = 10_000;
/// The QR sweep can stall on some inputs (observed on Hamiltonians). A copy
/// Pᵀ M P under a fixed orthogonal P follows a different path and its Schur
/// vectors map back as P U.
const SCHUR_SIMILARITIES: usize = 4;

fn similarity(n: usize, kind: usize) -> Mat {
    let householder = |v: DVector<f64>| Mat::identity(n, n) - &v * v.transpose() * (2.0 / v.norm_squared());
    match kind {
        0 => Mat::identity(n, n),
        1 => Mat::from_fn(n, n, |i, j| if i + j == n - 1 { 1.0 } else { 0.0 }),
        2 => householder(DVector::from_fn(n, |i, _| 1.0 + 0.3 * i as f64)),
        _ => householder(DVector::from_fn(n, |i, _| (i as f64 + 1.0).cos() + 0.1)),
    }
}

/// Schur form of Pᵀ M P for the first similarity P that converges, with P.
fn robust_schur<T: nalgebra::ComplexField<RealField = f64>>(
    m: &DMatrix<T>,
) -> Result<(Schur<T, nalgebra::Dyn>, Mat), SsError> {
    let n = m.nrows();
    for kind in 0..SCHUR_SIMILARITIES {
        let p = similarity(n, kind);
        let pt = p.transpose().map(T::from_real);
        let pm = &pt * m * p.map(T::from_real);
        if let Some(s) = Schur::try_new(pm, f64::EPSILON, SCHUR_MAX_ITER) {
            if kind != 0 {
                log::debug!("Schur converged after similarity {kind}");
            }
            return Ok((s, p));
        }
    }
    Err(SsError::NoConvergence)
}

/// All eigenvalues of a real square matrix, conjugate pairs kept exact.
pub fn eigenvalues(m: &Mat) -> Result<Vec<Complex64>, SsError> {
    if !m.is_square() {
        return Err(SsError::NotSquare(m.nrows(), m.ncols()));
    }
    if m.nrows() == 0 {
        return Ok(Vec::new());
    }
    let (schur, _) = robust_schur(m)?;
    Ok(schur.complex_eigenvalues().iter().copied().collect())
}

/// Largest real part of the spectrum (−∞ for an empty matrix).
pub fn spectral_abscissa(m: &Mat) -> Result<f64, SsError> {
    Ok(eigenvalues(m)?.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max))
}

pub fn is_hurwitz(m: &Mat, margin: f64) -> Result<bool, SsError> {
    Ok(spectral_abscissa(m)? < -margin)
}

pub fn to_complex(m: &Mat) -> CMat {
    m.map(|x| Complex64::new(x, 0.0))
}

pub fn sym(m: &Mat) -> Mat {
    (m + m.transpose()) * 0.5
}

pub fn kron(a: &Mat, b: &Mat) -> Mat {
    a.kronecker(b)
}

pub fn block_diag(blocks: &[&Mat]) -> Mat {
    let r: usize = blocks.iter().map(|b| b.nrows()).sum();
    let c: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = Mat::zeros(r, c);
    let (mut i, mut j) = (0, 0);
    for b in blocks {
        out.view_mut((i, j), (b.nrows(), b.ncols())).copy_from(*b);
        i += b.nrows();
        j += b.ncols();
    }
    out
}

/// Horizontal concatenation; all blocks must share the row count `rows`.
pub fn hcat(rows: usize, blocks: &[&Mat]) -> Mat {
    let c: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = Mat::zeros(rows, c);
    let mut j = 0;
    for b in blocks {
        debug_assert_eq!(b.nrows(), rows);
        out.view_mut((0, j), (rows, b.ncols())).copy_from(*b);
        j += b.ncols();
    }
    out
}

pub fn vcat(cols: usize, blocks: &[&Mat]) -> Mat {
    let r: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = Mat::zeros(r, cols);
    let mut i = 0;
    for b in blocks {
        debug_assert_eq!(b.ncols(), cols);
        out.view_mut((i, 0), (b.nrows(), cols)).copy_from(*b);
        i += b.nrows();
    }
    out
}

/// Eigenvalues of a symmetric matrix, ascending.
pub fn sym_eigenvalues(m: &Mat) -> Vec<f64> {
    if m.nrows() == 0 {
        return Vec::new();
    }
    let mut v: Vec<f64> = sym(m).symmetric_eigenvalues().iter().copied().collect();
    v.sort_by(|a, b| a.total_cmp(b));
    v
}

pub fn max_sym_eig(m: &Mat) -> f64 {
    sym_eigenvalues(m).last().copied().unwrap_or(f64::NEG_INFINITY)
}

pub fn min_sym_eig(m: &Mat) -> f64 {
    sym_eigenvalues(m).first().copied().unwrap_or(f64::INFINITY)
}

/// Orthonormal basis for the range of `m`, singular values below
/// `rtol * σ_max` treated as zero.
pub fn range_basis(m: &Mat, rtol: f64) -> Mat {
    let n = m.nrows();
    if m.ncols() == 0 || n == 0 {
        return Mat::zeros(n, 0);
    }
    let svd = SVD::new(m.clone(), true, false);
    let u = svd.u.expect("left singular vectors requested");
    let smax = svd.singular_values.max();
    if smax == 0.0 {
        return Mat::zeros(n, 0);
    }
    let mut idx: Vec<usize> = (0..svd.singular_values.len()).collect();
    idx.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let keep: Vec<usize> = idx.into_iter().filter(|&i| svd.singular_values[i] > rtol * smax).collect();
    Mat::from_fn(n, keep.len(), |i, j| u[(i, keep[j])])
}

/// Reciprocal 2-norm condition number, 0 for singular or empty-rank input.
pub fn rcond(m: &Mat) -> f64 {
    if m.nrows() == 0 {
        return 1.0;
    }
    let sv = m.singular_values();
    let smax = sv.max();
    if smax == 0.0 {
        0.0
    } else {
        sv.min() / smax
    }
}

/// Generate (c, s, r) with [c s; −conj(s) c]·[f; g] = [r; 0].
fn givens(f: Complex64, g: Complex64) -> (f64, Complex64) {
    if g.norm() == 0.0 {
        return (1.0, Complex64::new(0.0, 0.0));
    }
    if f.norm() == 0.0 {
        return (0.0, g.conj() / g.norm());
    }
    let nf = f.norm();
    let nrm = nf.hypot(g.norm());
    (nf / nrm, (f / nf) * g.conj() / nrm)
}

/// x ← c x + s y, y ← c y − conj(s) x
fn rot(x: &mut [Complex64], y: &mut [Complex64], c: f64, s: Complex64) {
    for (xi, yi) in x.iter_mut().zip(y.iter_mut()) {
        let t = *xi * c + s * *yi;
        *yi = *yi * c - s.conj() * *xi;
        *xi = t;
    }
}

/// Swap the adjacent diagonal entries k, k+1 of an upper-triangular T,
/// updating the Schur vectors Q so that Q T Qᴴ is preserved.
fn swap_adjacent(t: &mut CMat, q: &mut CMat, k: usize) {
    let n = t.nrows();
    let t11 = t[(k, k)];
    let t22 = t[(k + 1, k + 1)];
    let (c, s) = givens(t[(k, k + 1)], t22 - t11);
    if k + 2 < n {
        let mut r0: Vec<Complex64> = (k + 2..n).map(|j| t[(k, j)]).collect();
        let mut r1: Vec<Complex64> = (k + 2..n).map(|j| t[(k + 1, j)]).collect();
        rot(&mut r0, &mut r1, c, s);
        for (o, j) in (k + 2..n).enumerate() {
            t[(k, j)] = r0[o];
            t[(k + 1, j)] = r1[o];
        }
    }
    if k > 0 {
        let mut c0: Vec<Complex64> = (0..k).map(|i| t[(i, k)]).collect();
        let mut c1: Vec<Complex64> = (0..k).map(|i| t[(i, k + 1)]).collect();
        rot(&mut c0, &mut c1, c, s.conj());
        for i in 0..k {
            t[(i, k)] = c0[i];
            t[(i, k + 1)] = c1[i];
        }
    }
    t[(k, k)] = t22;
    t[(k + 1, k + 1)] = t11;
    let mut q0: Vec<Complex64> = q.column(k).iter().copied().collect();
    let mut q1: Vec<Complex64> = q.column(k + 1).iter().copied().collect();
    rot(&mut q0, &mut q1, c, s.conj());
    for i in 0..n {
        q[(i, k)] = q0[i];
        q[(i, k + 1)] = q1[i];
    }
}

/// Complex Schur form M = U T Uᴴ with the eigenvalues satisfying `select`
/// moved to the leading block. Returns (U, T, number selected).
pub fn ordered_schur(m: &Mat, select: impl Fn(Complex64) -> bool) -> Result<(CMat, CMat, usize), SsError> {
    if !m.is_square() {
        return Err(SsError::NotSquare(m.nrows(), m.ncols()));
    }
    let n = m.nrows();
    let (schur, p) = robust_schur(&to_complex(m))?;
    let (qp, mut t) = schur.unpack();
    // M = P (Qp T Qpᴴ) Pᵀ
    let mut q = to_complex(&p) * qp;
    // the strictly lower part is numerically zero; clear it so swaps stay triangular
    for j in 0..n {
        for i in j + 1..n {
            t[(i, j)] = Complex64::new(0.0, 0.0);
        }
    }
    let mut k = 0;
    for i in 0..n {
        if select(t[(i, i)]) {
            let mut j = i;
            while j > k {
                swap_adjacent(&mut t, &mut q, j - 1);
                j -= 1;
            }
            k += 1;
        }
    }
    Ok((q, t, k))
}

/// Real orthonormal basis for a conjugate-closed subspace given by complex
/// columns `u` (k columns, subspace of real dimension k).
pub fn real_basis(u: &CMat) -> Mat {
    let n = u.nrows();
    let k = u.ncols();
    if k == 0 {
        return Mat::zeros(n, 0);
    }
    let mut stacked = Mat::zeros(n, 2 * k);
    for j in 0..k {
        for i in 0..n {
            stacked[(i, j)] = u[(i, j)].re;
            stacked[(i, k + j)] = u[(i, j)].im;
        }
    }
    let svd = SVD::new(stacked, true, false);
    let uu = svd.u.expect("left singular vectors requested");
    let mut idx: Vec<usize> = (0..svd.singular_values.len()).collect();
    idx.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    Mat::from_fn(n, k, |i, j| uu[(i, idx[j])])
}
