//! Hard J-spectral factorization Π = Ψ~ W Ψ.

use serde::{Deserialize, Serialize};

use super::multiplier::{check_grid, IqcKind, Multiplier};
use super::IqcError;
use crate::ss::linalg::{self, CMat, Mat};
use crate::ss::minreal::{minimal_realization, stable_antistable_split, DEFAULT_MINREAL_TOL};
use crate::ss::{solve_are, AreOptions, SignatureMatrix, StateSpace};

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct FactorOptions {
    /// ε added to D_s[0,0] when the Riccati weight is singular
    pub regularization: f64,
    pub minreal_tol: f64,
}

impl Default for FactorOptions {
    fn default() -> Self {
        Self { regularization: 1e-6, minreal_tol: DEFAULT_MINREAL_TOL }
    }
}

/// Scaling slot carried by an uncertainty IQC; the values are decision variables.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalingSlot {
    /// symmetric m×m block X_m
    Symmetric(usize),
    /// scalar χ times I_r
    Scalar(usize),
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct FactorDiagnostics {
    /// stabilizing Riccati solution (empty for static multipliers)
    pub are_x: Mat,
    pub are_residual: f64,
    /// D_s = Π(∞) before regularization
    pub d_s: Mat,
    pub m_factor: Mat,
    /// ε actually added to D_s, if any
    pub regularization: Option<f64>,
    /// max_ω ‖Ψ*WΨ − Π_ε‖ where Π_ε = Π + ε e1e1ᵀ is the multiplier factorized
    pub residual: f64,
    /// max_ω ‖Ψ*WΨ − Π‖ against the unregularized multiplier
    pub raw_residual: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FactoredIQC {
    pub psi: StateSpace,
    pub w: SignatureMatrix,
    pub m1: usize,
    pub m2: usize,
    pub kind: IqcKind,
    pub scaling: Option<ScalingSlot>,
    pub diagnostics: FactorDiagnostics,
}

impl FactoredIQC {
    /// Ψ(jω)* W Ψ(jω)
    pub fn product(&self, omega: f64) -> Result<CMat, IqcError> {
        let p = self.psi.freq_response(omega)?;
        Ok(p.adjoint() * linalg::to_complex(&self.w.matrix()) * p)
    }

    /// Ψ and Ψ⁻¹ both Hurwitz with the given margin.
    pub fn is_bistable(&self, margin: f64) -> Result<bool, IqcError> {
        if !self.psi.is_stable(margin)? {
            return Ok(false);
        }
        let inv = self.psi.inverse()?;
        Ok(inv.is_stable(margin)?)
    }

    /// Largest ‖Ψ*WΨ − Π‖_F over `grid`.
    pub fn identity_residual(&self, pi: &Multiplier, grid: &[f64]) -> Result<f64, IqcError> {
        let mut worst: f64 = 0.0;
        for &w in grid {
            worst = worst.max((self.product(w)? - pi.eval(w)?).norm());
        }
        Ok(worst)
    }
}

/// Real M with Mᵀ W M = D for W = diag(I_m1, −I_m2). For the 2×2 case with
/// a zero (1,1) entry this gives M = [[1, a],[1, b]], the form used for the
/// Popov factor; a positive (1,1) entry gives an upper-triangular M.
pub fn congruence_factor(d: &Mat, m1: usize, m2: usize) -> Result<Mat, IqcError> {
    let n = m1 + m2;
    if d.shape() != (n, n) {
        return Err(IqcError::InvalidParameter("congruence factor: size mismatch".into()));
    }
    let tol = 1e-12 * (1.0 + d.norm());
    if m1 == 1 && m2 == 1 {
        let (d11, d12, d22) = (d[(0, 0)], 0.5 * (d[(0, 1)] + d[(1, 0)]), d[(1, 1)]);
        if d11.abs() <= tol && d12.abs() > tol {
            let a = 0.5 * (d12 + d22 / d12);
            let b = 0.5 * (d22 / d12 - d12);
            return Ok(Mat::from_row_slice(2, 2, &[1.0, a, 1.0, b]));
        }
        if d11 > tol {
            let m11 = d11.sqrt();
            let m12 = d12 / m11;
            let r = m12 * m12 - d22;
            if r > 0.0 {
                return Ok(Mat::from_row_slice(2, 2, &[m11, m12, 0.0, r.sqrt()]));
            }
        }
        if d22 < -tol {
            // lower form: M = [[p, 0],[q, r]] with r² = −d22
            let r = (-d22).sqrt();
            let q = -d12 / r;
            let p2 = d11 + q * q;
            if p2 > 0.0 {
                return Ok(Mat::from_row_slice(2, 2, &[p2.sqrt(), 0.0, q, r]));
            }
        }
    }
    let eig = linalg::sym(d).symmetric_eigen();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let mut m = Mat::zeros(n, n);
    for (row, &k) in idx.iter().enumerate() {
        let lam = eig.eigenvalues[k];
        let positive = row < m1;
        if (positive && lam <= tol) || (!positive && lam >= -tol) {
            return Err(IqcError::NotFactorizable(format!("D_s inertia does not match ({m1}, {m2})")));
        }
        let s = lam.abs().sqrt();
        for j in 0..n {
            m[(row, j)] = s * eig.eigenvectors[(j, k)];
        }
    }
    Ok(m)
}

/// Scale states so each row of B has unit 2-norm (rows that are zero are left alone).
fn normalize_input_rows(g: &StateSpace) -> Result<StateSpace, IqcError> {
    let n = g.n();
    let mut t = Mat::identity(n, n);
    for i in 0..n {
        let r = g.b().row(i).norm();
        if r > 0.0 {
            t[(i, i)] = r;
        }
    }
    // x = T z: B_z = T⁻¹ B has unit rows
    Ok(g.transform(&t)?)
}

pub fn j_spectral_factorize(pi: &Multiplier, opts: &FactorOptions) -> Result<FactoredIQC, IqcError> {
    let grid = check_grid();
    pi.check_factorizable(&grid)?;
    let (m1, m2) = (pi.m1(), pi.m2());
    let w = SignatureMatrix::new(m1, m2);
    let wm = w.matrix();

    let full = pi.realization()?;
    let minimal = minimal_realization(&full, opts.minreal_tol);
    let d_s = linalg::sym(minimal.d());
    let (stable, _) = stable_antistable_split(&minimal, 1e-10)?;
    let stable = normalize_input_rows(&stable)?;
    let (a_s, b_s, c_s) = (stable.a().clone(), stable.b().clone(), stable.c().clone());

    let are_opts = AreOptions { perturbation: Some(opts.regularization), ..Default::default() };
    let sol = solve_are(&a_s, &b_s, &c_s, &d_s, &are_opts)?;
    let m = congruence_factor(&sol.d, m1, m2)?;
    let m_inv_t = m.transpose().try_inverse().ok_or(IqcError::SingularFeedthrough)?;
    let c_psi = &wm * &m_inv_t * (b_s.transpose() * &sol.x + &c_s);
    let psi = StateSpace::new(a_s, b_s, c_psi, m.clone())?;

    let mut f = FactoredIQC {
        psi,
        w,
        m1,
        m2,
        kind: pi.kind(),
        scaling: None,
        diagnostics: FactorDiagnostics {
            are_x: sol.x.clone(),
            are_residual: sol.residual,
            d_s,
            m_factor: m,
            regularization: sol.perturbation,
            residual: 0.0,
            raw_residual: 0.0,
        },
    };
    if !f.is_bistable(1e-8)? {
        return Err(IqcError::NotFactorizable("factor or its inverse is not stable".into()));
    }
    let eps = sol.perturbation.unwrap_or(0.0);
    let mut residual: f64 = 0.0;
    let mut raw: f64 = 0.0;
    for &om in &grid {
        let prod = f.product(om)?;
        let target = pi.eval(om)?;
        raw = raw.max((&prod - &target).norm());
        let mut reg = target;
        reg[(0, 0)] += eps;
        residual = residual.max((prod - reg).norm());
    }
    f.diagnostics.residual = residual;
    f.diagnostics.raw_residual = raw;
    Ok(f)
}
