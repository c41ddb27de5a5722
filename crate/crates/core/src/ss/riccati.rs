//! Stabilizing solution of AᵀX + XA − (XB + Cᵀ)D⁻¹(BᵀX + C) = 0
//! via the ordered Schur form of the Hamiltonian matrix.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::linalg::{self, ordered_schur, Mat};
use super::SsError;

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct AreOptions {
    /// ε added to D[0,0] when D is numerically singular; `None` makes that an error
    pub perturbation: Option<f64>,
    /// reciprocal condition number below which D counts as singular
    pub singular_rcond: f64,
}

impl Default for AreOptions {
    fn default() -> Self {
        Self { perturbation: None, singular_rcond: 1e-12 }
    }
}

#[derive(Clone, Debug)]
pub struct AreSolution {
    pub x: Mat,
    /// A − B D⁻¹(BᵀX + C)
    pub closed_loop: Mat,
    pub residual: f64,
    /// the ε actually added to D, if any
    pub perturbation: Option<f64>,
    /// D after perturbation
    pub d: Mat,
}

pub fn are_residual(a: &Mat, b: &Mat, c: &Mat, d_inv: &Mat, x: &Mat) -> f64 {
    let k = b.transpose() * x + c;
    (a.transpose() * x + x * a - k.transpose() * d_inv * &k).norm()
}

const NEWTON_STEPS: usize = 3;
/// Refinement solves an n²×n² Lyapunov system, so it is skipped above this size.
const NEWTON_MAX_N: usize = 30;

/// One Newton correction: A_Kᵀ δ + δ A_K = −Res(X) with A_K = A − B D⁻¹(BᵀX + C).
fn newton_step(a: &Mat, b: &Mat, c: &Mat, d_inv: &Mat, x: &Mat) -> Option<Mat> {
    let n = a.nrows();
    let k = b.transpose() * x + c;
    let res = a.transpose() * x + x * a - k.transpose() * d_inv * &k;
    let ak = a - b * d_inv * &k;
    // vec(Aᵀδ + δA) = (I ⊗ Aᵀ + Aᵀ ⊗ I) vec(δ), column-major
    let akt = ak.transpose();
    let mut l = Mat::zeros(n * n, n * n);
    for j in 0..n {
        for i in 0..n {
            let row = j * n + i;
            for p in 0..n {
                l[(row, j * n + p)] += akt[(i, p)];
                l[(row, p * n + i)] += ak[(p, j)];
            }
        }
    }
    let rhs = nalgebra::DVector::from_iterator(n * n, res.iter().map(|v| -v));
    let delta = l.lu().solve(&rhs)?;
    Some(linalg::sym(&(x + Mat::from_column_slice(n, n, delta.as_slice()))))
}

pub fn solve_are(a: &Mat, b: &Mat, c: &Mat, d: &Mat, opts: &AreOptions) -> Result<AreSolution, SsError> {
    if !a.is_square() {
        return Err(SsError::NotSquare(a.nrows(), a.ncols()));
    }
    let n = a.nrows();
    let m = b.ncols();
    if b.nrows() != n || c.shape() != (m, n) || d.shape() != (m, m) {
        return Err(SsError::Dimension(format!(
            "ARE data: A {n}x{n}, B {:?}, C {:?}, D {:?}",
            b.shape(),
            c.shape(),
            d.shape()
        )));
    }
    let mut d = d.clone();
    let mut perturbation = None;
    if linalg::rcond(&d) < opts.singular_rcond {
        match opts.perturbation {
            Some(eps) if m > 0 => {
                d[(0, 0)] += eps;
                perturbation = Some(eps);
                if linalg::rcond(&d) < opts.singular_rcond * 1e-6 {
                    return Err(SsError::SingularR);
                }
            }
            _ => return Err(SsError::SingularR),
        }
    }
    let d_inv = d.clone().try_inverse().ok_or(SsError::SingularR)?;
    if n == 0 {
        return Ok(AreSolution { x: Mat::zeros(0, 0), closed_loop: Mat::zeros(0, 0), residual: 0.0, perturbation, d });
    }

    let at = a - b * &d_inv * c;
    let g = b * &d_inv * b.transpose();
    let q = c.transpose() * &d_inv * c;
    let mut h = Mat::zeros(2 * n, 2 * n);
    h.view_mut((0, 0), (n, n)).copy_from(&at);
    h.view_mut((0, n), (n, n)).copy_from(&(-&g));
    h.view_mut((n, 0), (n, n)).copy_from(&q);
    h.view_mut((n, n), (n, n)).copy_from(&(-at.transpose()));

    let scale = 1.0 + h.norm();
    let eig = linalg::eigenvalues(&h)?;
    if let Some(z) = eig.iter().find(|z| z.re.abs() < 1e-10 * scale) {
        return Err(SsError::NoStabilizingSolution(format!("Hamiltonian eigenvalue {z:.3e} on the imaginary axis")));
    }
    let (u, _, k) = ordered_schur(&h, |z: Complex64| z.re < 0.0)?;
    if k != n {
        return Err(SsError::NoStabilizingSolution(format!("stable subspace has dimension {k}, expected {n}")));
    }
    let u1 = u.view((0, 0), (n, n)).into_owned();
    let u2 = u.view((n, 0), (n, n)).into_owned();
    // X U1 = U2  ⇔  U1ᵀ Xᵀ = U2ᵀ
    let xt = u1
        .transpose()
        .lu()
        .solve(&u2.transpose())
        .ok_or_else(|| SsError::NoStabilizingSolution("U1 singular".into()))?;
    let mut x = linalg::sym(&xt.transpose().map(|z| z.re));
    let mut residual = are_residual(a, b, c, &d_inv, &x);
    if n <= NEWTON_MAX_N {
        for _ in 0..NEWTON_STEPS {
            match newton_step(a, b, c, &d_inv, &x) {
                Some(next) => {
                    let r = are_residual(a, b, c, &d_inv, &next);
                    if !(r < residual) {
                        break;
                    }
                    x = next;
                    residual = r;
                }
                None => break,
            }
        }
    }
    let closed_loop = a - b * &d_inv * (b.transpose() * &x + c);
    if !linalg::is_hurwitz(&closed_loop, 0.0)? {
        return Err(SsError::NoStabilizingSolution("closed loop is not Hurwitz".into()));
    }
    Ok(AreSolution { x, closed_loop, residual, perturbation, d })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_trivial() {
        let one = Mat::from_element(1, 1, 1.0);
        let s = solve_are(&(-&one), &one, &Mat::zeros(1, 1), &one, &AreOptions::default()).unwrap();
        assert!(s.x[(0, 0)].abs() < 1e-12);
    }

    #[test]
    fn singular_r_reported() {
        let a = Mat::from_element(1, 1, -1.0);
        let b = Mat::from_row_slice(1, 2, &[1.0, 0.0]);
        let c = Mat::from_row_slice(2, 1, &[1.0, 0.0]);
        let d = Mat::from_row_slice(2, 2, &[0.0, 0.0, 0.0, -2.0]);
        assert!(matches!(solve_are(&a, &b, &c, &d, &AreOptions::default()), Err(SsError::SingularR)));
        let opts = AreOptions { perturbation: Some(1e-6), ..Default::default() };
        let s = solve_are(&a, &b, &c, &d, &opts).unwrap();
        assert_eq!(s.perturbation, Some(1e-6));
        assert!(s.residual < 1e-8 * (1.0 + s.x.norm()));
    }

    #[test]
    fn indefinite_weight() {
        // the stable-part data that yields X = 0.9950
        let a = Mat::from_element(1, 1, -1.0);
        let b = Mat::from_row_slice(1, 2, &[-1.0, 0.0]);
        let c = Mat::from_row_slice(2, 1, &[-0.005, 1.0]);
        let d = Mat::from_row_slice(2, 2, &[0.0, 1.0, 1.0, -0.01]);
        let s = solve_are(&a, &b, &c, &d, &AreOptions::default()).unwrap();
        assert!((s.x[(0, 0)] - 0.995).abs() < 1e-3);
    }
}
