//! State-space realizations and the dense kernels behind them.

pub mod linalg;
pub mod minreal;
pub mod riccati;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use linalg::{eigenvalues, is_hurwitz, CMat, Mat};
pub use minreal::{minimal_realization, stable_antistable_split};
pub use riccati::{solve_are, AreOptions, AreSolution};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SsError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("matrix is not square ({0}x{1})")]
    NotSquare(usize, usize),
    #[error("singular R")]
    SingularR,
    #[error("no stabilizing solution: {0}")]
    NoStabilizingSolution(String),
    #[error("Schur iteration did not converge")]
    NoConvergence,
    #[error("singular matrix: {0}")]
    Singular(String),
    #[error("invalid transfer function: {0}")]
    TransferFunction(String),
}

/// W = diag(I_m1, −I_m2)
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignatureMatrix {
    pub m1: usize,
    pub m2: usize,
}

impl SignatureMatrix {
    pub fn new(m1: usize, m2: usize) -> Self {
        Self { m1, m2 }
    }

    pub fn dim(&self) -> usize {
        self.m1 + self.m2
    }

    pub fn matrix(&self) -> Mat {
        let mut w = Mat::identity(self.dim(), self.dim());
        for i in self.m1..self.dim() {
            w[(i, i)] = -1.0;
        }
        w
    }
}

/// Continuous-time realization (A, B, C, D). n = 0 is a static gain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateSpace {
    a: Mat,
    b: Mat,
    c: Mat,
    d: Mat,
}

impl StateSpace {
    pub fn new(a: Mat, b: Mat, c: Mat, d: Mat) -> Result<Self, SsError> {
        if !a.is_square() {
            return Err(SsError::NotSquare(a.nrows(), a.ncols()));
        }
        let n = a.nrows();
        if b.nrows() != n {
            return Err(SsError::Dimension(format!("B has {} rows, A is {n}x{n}", b.nrows())));
        }
        if c.ncols() != n {
            return Err(SsError::Dimension(format!("C has {} columns, A is {n}x{n}", c.ncols())));
        }
        if d.nrows() != c.nrows() || d.ncols() != b.ncols() {
            return Err(SsError::Dimension(format!(
                "D is {}x{}, expected {}x{}",
                d.nrows(),
                d.ncols(),
                c.nrows(),
                b.ncols()
            )));
        }
        Ok(Self { a, b, c, d })
    }

    pub fn static_gain(d: Mat) -> Self {
        let (p, m) = d.shape();
        Self { a: Mat::zeros(0, 0), b: Mat::zeros(0, m), c: Mat::zeros(p, 0), d }
    }

    /// SISO realization of num(s)/den(s), coefficients highest power first.
    pub fn from_transfer_function(num: &[f64], den: &[f64]) -> Result<Self, SsError> {
        let first = den.iter().position(|&x| x != 0.0).ok_or_else(|| SsError::TransferFunction("zero denominator".into()))?;
        let den = &den[first..];
        let lead = den[0];
        let n = den.len() - 1;
        let nf = num.iter().position(|&x| x != 0.0).unwrap_or(num.len());
        let num = &num[nf..];
        if num.len() > n + 1 {
            return Err(SsError::TransferFunction("improper transfer function".into()));
        }
        let mut bnum = vec![0.0; n + 1 - num.len()];
        bnum.extend_from_slice(num);
        let a_coef: Vec<f64> = den.iter().map(|x| x / lead).collect();
        let b_coef: Vec<f64> = bnum.iter().map(|x| x / lead).collect();
        let d0 = b_coef[0];
        let mut a = Mat::zeros(n, n);
        for j in 0..n {
            a[(0, j)] = -a_coef[j + 1];
        }
        for i in 1..n {
            a[(i, i - 1)] = 1.0;
        }
        let mut b = Mat::zeros(n, 1);
        if n > 0 {
            b[(0, 0)] = 1.0;
        }
        let c = Mat::from_fn(1, n, |_, j| b_coef[j + 1] - d0 * a_coef[j + 1]);
        Self::new(a, b, c, Mat::from_element(1, 1, d0))
    }

    pub fn a(&self) -> &Mat {
        &self.a
    }
    pub fn b(&self) -> &Mat {
        &self.b
    }
    pub fn c(&self) -> &Mat {
        &self.c
    }
    pub fn d(&self) -> &Mat {
        &self.d
    }

    /// state dimension
    pub fn n(&self) -> usize {
        self.a.nrows()
    }
    pub fn inputs(&self) -> usize {
        self.b.ncols()
    }
    pub fn outputs(&self) -> usize {
        self.c.nrows()
    }

    pub fn is_static(&self) -> bool {
        self.n() == 0
    }

    pub fn poles(&self) -> Result<Vec<Complex64>, SsError> {
        eigenvalues(&self.a)
    }

    pub fn is_stable(&self, margin: f64) -> Result<bool, SsError> {
        is_hurwitz(&self.a, margin)
    }

    /// G(s) = C (sI − A)⁻¹ B + D, via a linear solve.
    pub fn eval(&self, s: Complex64) -> Result<CMat, SsError> {
        let mut g = linalg::to_complex(&self.d);
        if self.n() == 0 {
            return Ok(g);
        }
        let n = self.n();
        let mut m = -linalg::to_complex(&self.a);
        for i in 0..n {
            m[(i, i)] += s;
        }
        let x = m
            .lu()
            .solve(&linalg::to_complex(&self.b))
            .ok_or_else(|| SsError::Singular(format!("sI - A singular at s = {s}")))?;
        g += linalg::to_complex(&self.c) * x;
        Ok(g)
    }

    pub fn freq_response(&self, omega: f64) -> Result<CMat, SsError> {
        self.eval(Complex64::new(0.0, omega))
    }

    /// G2·G1: feed the output of `g1` into `g2`.
    pub fn series(g1: &StateSpace, g2: &StateSpace) -> Result<StateSpace, SsError> {
        if g1.outputs() != g2.inputs() {
            return Err(SsError::Dimension(format!("series: G1 has {} outputs, G2 has {} inputs", g1.outputs(), g2.inputs())));
        }
        let (n1, n2) = (g1.n(), g2.n());
        let mut a = Mat::zeros(n1 + n2, n1 + n2);
        a.view_mut((0, 0), (n1, n1)).copy_from(&g1.a);
        a.view_mut((n1, 0), (n2, n1)).copy_from(&(&g2.b * &g1.c));
        a.view_mut((n1, n1), (n2, n2)).copy_from(&g2.a);
        let b = linalg::vcat(g1.inputs(), &[&g1.b, &(&g2.b * &g1.d)]);
        let c = linalg::hcat(g2.outputs(), &[&(&g2.d * &g1.c), &g2.c]);
        StateSpace::new(a, b, c, &g2.d * &g1.d)
    }

    /// G1 + G2
    pub fn parallel(g1: &StateSpace, g2: &StateSpace) -> Result<StateSpace, SsError> {
        if g1.inputs() != g2.inputs() || g1.outputs() != g2.outputs() {
            return Err(SsError::Dimension("parallel: G1 and G2 must have equal shapes".into()));
        }
        let a = linalg::block_diag(&[&g1.a, &g2.a]);
        let b = linalg::vcat(g1.inputs(), &[&g1.b, &g2.b]);
        let c = linalg::hcat(g1.outputs(), &[&g1.c, &g2.c]);
        StateSpace::new(a, b, c, &g1.d + &g2.d)
    }

    /// diag(G1, G2)
    pub fn append(g1: &StateSpace, g2: &StateSpace) -> StateSpace {
        StateSpace {
            a: linalg::block_diag(&[&g1.a, &g2.a]),
            b: linalg::block_diag(&[&g1.b, &g2.b]),
            c: linalg::block_diag(&[&g1.c, &g2.c]),
            d: linalg::block_diag(&[&g1.d, &g2.d]),
        }
    }

    /// [G1; G2] driven by a common input.
    pub fn vstack(g1: &StateSpace, g2: &StateSpace) -> Result<StateSpace, SsError> {
        if g1.inputs() != g2.inputs() {
            return Err(SsError::Dimension("vstack: input counts differ".into()));
        }
        let a = linalg::block_diag(&[&g1.a, &g2.a]);
        let b = linalg::vcat(g1.inputs(), &[&g1.b, &g2.b]);
        let c = linalg::block_diag(&[&g1.c, &g2.c]);
        let d = linalg::vcat(g1.inputs(), &[&g1.d, &g2.d]);
        StateSpace::new(a, b, c, d)
    }

    /// Para-conjugate G~(s) = G(−s)ᵀ.
    pub fn para_conjugate(&self) -> StateSpace {
        StateSpace {
            a: -self.a.transpose(),
            b: -self.c.transpose(),
            c: self.b.transpose(),
            d: self.d.transpose(),
        }
    }

    /// L·G for a constant L.
    pub fn premul(&self, l: &Mat) -> Result<StateSpace, SsError> {
        StateSpace::series(self, &StateSpace::static_gain(l.clone()))
    }

    /// G·R for a constant R.
    pub fn postmul(&self, r: &Mat) -> Result<StateSpace, SsError> {
        StateSpace::series(&StateSpace::static_gain(r.clone()), self)
    }

    /// G⁻¹ for square G with invertible D.
    pub fn inverse(&self) -> Result<StateSpace, SsError> {
        if self.inputs() != self.outputs() {
            return Err(SsError::Dimension("inverse of a non-square system".into()));
        }
        let di = self.d.clone().try_inverse().ok_or_else(|| SsError::Singular("feedthrough not invertible".into()))?;
        let a = &self.a - &self.b * &di * &self.c;
        let b = &self.b * &di;
        let c = -(&di * &self.c);
        StateSpace::new(a, b, c, di)
    }

    /// Submatrix of the transfer function by row and column index lists.
    pub fn select(&self, rows: &[usize], cols: &[usize]) -> StateSpace {
        let b = self.b.select_columns(cols);
        let c = self.c.select_rows(rows);
        let d = self.d.select_rows(rows).select_columns(cols);
        StateSpace { a: self.a.clone(), b, c, d }
    }

    /// Similarity transform x = T z.
    pub fn transform(&self, t: &Mat) -> Result<StateSpace, SsError> {
        let ti = t.clone().try_inverse().ok_or_else(|| SsError::Singular("similarity transform".into()))?;
        StateSpace::new(&ti * &self.a * t, &ti * &self.b, &self.c * t, self.d.clone())
    }

    /// Numerator and monic denominator of entry (i, j) after a minimal
    /// realization, coefficients in descending powers of s.
    pub fn tf_coefficients(&self, i: usize, j: usize, tol: f64) -> Result<(Vec<f64>, Vec<f64>), SsError> {
        if i >= self.outputs() || j >= self.inputs() {
            return Err(SsError::Dimension(format!("entry ({i}, {j}) of a {}x{} system", self.outputs(), self.inputs())));
        }
        let g = minimal_realization(&self.select(&[i], &[j]), tol);
        let d = g.d[(0, 0)];
        let den = charpoly(&g.a)?;
        // det(sI − A + bc) = det(sI − A)(1 + c(sI − A)⁻¹b)
        let closed = charpoly(&(&g.a - &g.b * &g.c))?;
        let num = closed.iter().zip(&den).map(|(c, p)| c - p + d * p).collect();
        Ok((num, den))
    }

    /// Largest pointwise Frobenius distance between two responses on a grid.
    pub fn max_response_gap(&self, other: &StateSpace, omegas: &[f64]) -> Result<f64, SsError> {
        let mut worst: f64 = 0.0;
        for &w in omegas {
            let g = self.freq_response(w)?;
            let h = other.freq_response(w)?;
            if g.shape() != h.shape() {
                return Err(SsError::Dimension("responses have different shapes".into()));
            }
            worst = worst.max((g - h).norm());
        }
        Ok(worst)
    }
}

/// det(sI − A), monic, descending powers.
fn charpoly(a: &Mat) -> Result<Vec<f64>, SsError> {
    let mut c = vec![Complex64::new(1.0, 0.0)];
    for z in eigenvalues(a)? {
        let mut next = c.clone();
        next.push(Complex64::new(0.0, 0.0));
        for k in 1..next.len() {
            next[k] -= z * c[k - 1];
        }
        c = next;
    }
    Ok(c.iter().map(|z| z.re).collect())
}

/// Logarithmic frequency grid, `count` points from 10^lo to 10^hi.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![10f64.powf(lo)];
    }
    (0..count).map(|i| 10f64.powf(lo + (hi - lo) * i as f64 / (count - 1) as f64)).collect()
}

pub fn zeros(r: usize, c: usize) -> Mat {
    DMatrix::zeros(r, c)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tf_coefficients_round_trip() {
        let g = StateSpace::from_transfer_function(&[2.0, 3.0, 5.0], &[1.0, 3.0, 2.0]).unwrap();
        let (num, den) = g.tf_coefficients(0, 0, 1e-9).unwrap();
        for (a, b) in num.iter().zip(&[2.0, 3.0, 5.0]) {
            assert!((a - b).abs() < 1e-9, "{num:?}");
        }
        for (a, b) in den.iter().zip(&[1.0, 3.0, 2.0]) {
            assert!((a - b).abs() < 1e-9, "{den:?}");
        }
        // (s+1)/(s+1)(s+2) reduces to 1/(s+2)
        let h = StateSpace::from_transfer_function(&[1.0, 1.0], &[1.0, 3.0, 2.0]).unwrap();
        let (num, den) = h.tf_coefficients(0, 0, 1e-9).unwrap();
        assert_eq!(den.len(), 2);
        assert!((den[1] - 2.0).abs() < 1e-9 && (num[1] - 1.0).abs() < 1e-9 && num[0].abs() < 1e-9);
    }

    fn first_order(p: f64) -> StateSpace {
        StateSpace::new(
            Mat::from_element(1, 1, -p),
            Mat::from_element(1, 1, 1.0),
            Mat::from_element(1, 1, 1.0),
            Mat::zeros(1, 1),
        )
        .unwrap()
    }

    #[test]
    fn rejects_inconsistent_dims() {
        let r = StateSpace::new(Mat::zeros(2, 2), Mat::zeros(3, 1), Mat::zeros(1, 2), Mat::zeros(1, 1));
        assert!(matches!(r, Err(SsError::Dimension(_))));
    }

    #[test]
    fn static_series() {
        let d1 = StateSpace::static_gain(Mat::from_row_slice(1, 2, &[1.0, 2.0]));
        let d2 = StateSpace::static_gain(Mat::from_row_slice(2, 1, &[3.0, 4.0]));
        let g = StateSpace::series(&d1, &d2).unwrap();
        assert_eq!(g.n(), 0);
        assert_eq!(g.d(), &(d2.d() * d1.d()));
    }

    #[test]
    fn series_with_identity_is_identity() {
        let g = first_order(2.0);
        let id = StateSpace::static_gain(Mat::identity(1, 1));
        let h = StateSpace::series(&g, &id).unwrap();
        assert!(g.max_response_gap(&h, &log_grid(-2.0, 2.0, 20)).unwrap() < 1e-10);
    }

    #[test]
    fn lag_then_derivative_gives_highpass() {
        // s realized as the derivative of the 1/(s+1) state: y = ẋ = −x + u
        let g = first_order(1.0);
        let deriv_state = StateSpace::new(g.a().clone(), g.b().clone(), g.a().clone(), g.b().clone()).unwrap();
        for w in [0.1, 1.0, 10.0] {
            let s = Complex64::new(0.0, w);
            let want = s / (s + 1.0);
            let got = deriv_state.freq_response(w).unwrap()[(0, 0)];
            assert!((got - want).norm() < 1e-12);
        }
    }

    #[test]
    fn tf_realization() {
        let g = StateSpace::from_transfer_function(&[1.0, 3.0], &[1.0, 3.0, 2.0]).unwrap();
        let s = Complex64::new(0.0, 0.7);
        let want = (s + 3.0) / (s * s + 3.0 * s + 2.0);
        assert!((g.eval(s).unwrap()[(0, 0)] - want).norm() < 1e-12);
        let h = StateSpace::from_transfer_function(&[2.0, 1.0], &[1.0, 4.0]).unwrap();
        let want = (2.0 * s + 1.0) / (s + 4.0);
        assert!((h.eval(s).unwrap()[(0, 0)] - want).norm() < 1e-12);
        assert!(StateSpace::from_transfer_function(&[1.0, 0.0, 0.0], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn inverse_round_trip() {
        let g = StateSpace::new(
            Mat::from_element(1, 1, -1.0),
            Mat::from_row_slice(1, 2, &[1.0, 0.5]),
            Mat::from_row_slice(2, 1, &[0.2, -1.0]),
            Mat::from_row_slice(2, 2, &[1.0, 0.3, 0.0, 2.0]),
        )
        .unwrap();
        let gi = g.inverse().unwrap();
        let p = StateSpace::series(&g, &gi).unwrap();
        let id = StateSpace::static_gain(Mat::identity(2, 2));
        assert!(p.max_response_gap(&id, &log_grid(-2.0, 2.0, 10)).unwrap() < 1e-10);
    }

    #[test]
    fn signature_matrix() {
        let w = SignatureMatrix::new(1, 2).matrix();
        assert_eq!(w, Mat::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, -1.0, -1.0])));
    }
}
