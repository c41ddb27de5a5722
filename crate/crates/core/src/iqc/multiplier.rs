//! IQC multipliers Π = Ψ0~ S Ψ0 for the dead-zone and the uncertainty blocks.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::IqcError;
use crate::ss::linalg::{self, block_diag, CMat, Mat};
use crate::ss::{log_grid, StateSpace};

/// Large-ω stand-in for ∞ in the factorizability checks.
pub const OMEGA_INF: f64 = 1e6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IqcKind {
    Popov,
    ZamesFalb,
    Sector,
    UncertaintyScalar,
    UncertaintyFull,
    Custom,
}

impl IqcKind {
    pub fn label(&self) -> &'static str {
        match self {
            IqcKind::Popov => "popov",
            IqcKind::ZamesFalb => "zames_falb",
            IqcKind::Sector => "sector",
            IqcKind::UncertaintyScalar => "uncertainty_scalar",
            IqcKind::UncertaintyFull => "uncertainty_full",
            IqcKind::Custom => "custom",
        }
    }
}

/// Para-Hermitian multiplier stored in outer form Π = Ψ0~ S Ψ0 with Ψ0 stable.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Multiplier {
    psi0: StateSpace,
    middle: Mat,
    m1: usize,
    m2: usize,
    kind: IqcKind,
}

/// Frequencies used for the Hermitian and sign checks.
pub fn check_grid() -> Vec<f64> {
    let mut g = log_grid(-3.0, 3.0, 40);
    g.push(OMEGA_INF);
    g
}

impl Multiplier {
    pub fn new(psi0: StateSpace, middle: Mat, m1: usize, m2: usize, kind: IqcKind) -> Result<Self, IqcError> {
        if psi0.inputs() != m1 + m2 {
            return Err(IqcError::InvalidParameter(format!("Ψ0 has {} inputs, expected {}", psi0.inputs(), m1 + m2)));
        }
        if middle.shape() != (psi0.outputs(), psi0.outputs()) {
            return Err(IqcError::InvalidParameter("middle matrix does not match Ψ0 outputs".into()));
        }
        if (&middle - middle.transpose()).norm() > 1e-12 * (1.0 + middle.norm()) {
            return Err(IqcError::InvalidParameter("middle matrix is not symmetric".into()));
        }
        if !psi0.is_stable(0.0)? {
            return Err(IqcError::InvalidParameter("outer factor Ψ0 is not stable".into()));
        }
        Ok(Self { psi0, middle, m1, m2, kind })
    }

    /// A constant multiplier Π = S.
    pub fn constant(pi: Mat, m1: usize, m2: usize, kind: IqcKind) -> Result<Self, IqcError> {
        let n = pi.nrows();
        Self::new(StateSpace::static_gain(Mat::identity(n, n)), pi, m1, m2, kind)
    }

    pub fn m1(&self) -> usize {
        self.m1
    }
    pub fn m2(&self) -> usize {
        self.m2
    }
    pub fn kind(&self) -> IqcKind {
        self.kind
    }
    pub fn outer_factor(&self) -> &StateSpace {
        &self.psi0
    }
    pub fn middle(&self) -> &Mat {
        &self.middle
    }

    pub fn eval(&self, omega: f64) -> Result<CMat, IqcError> {
        let p = self.psi0.freq_response(omega)?;
        Ok(p.adjoint() * linalg::to_complex(&self.middle) * p)
    }

    /// Π(∞) from the feedthrough.
    pub fn at_infinity(&self) -> Mat {
        let d = self.psi0.d();
        d.transpose() * &self.middle * d
    }

    /// Full (2n-state) realization of Ψ0~ S Ψ0.
    pub fn realization(&self) -> Result<StateSpace, IqcError> {
        let sp = StateSpace::series(&self.psi0, &StateSpace::static_gain(self.middle.clone()))?;
        Ok(StateSpace::series(&sp, &self.psi0.para_conjugate())?)
    }

    /// Multiply Ψ0 on the right by diag(1/(s+α)·I_m1, I_m2).
    pub fn loop_transformed(&self, alpha: f64) -> Result<Self, IqcError> {
        if alpha <= 0.0 {
            return Err(IqcError::InvalidParameter(format!("alpha must be positive, got {alpha}")));
        }
        let m1 = self.m1;
        let lag = StateSpace::new(
            Mat::identity(m1, m1) * -alpha,
            linalg::hcat(m1, &[&Mat::identity(m1, m1), &Mat::zeros(m1, self.m2)]),
            linalg::vcat(m1, &[&Mat::identity(m1, m1), &Mat::zeros(self.m2, m1)]),
            block_diag(&[&Mat::zeros(m1, m1), &Mat::identity(self.m2, self.m2)]),
        )?;
        let psi0 = StateSpace::series(&lag, &self.psi0)?;
        Self::new(psi0, self.middle.clone(), self.m1, self.m2, self.kind)
    }

    /// Σ λ_i Π_i with λ_i > 0.
    pub fn combine(terms: &[(f64, &Multiplier)]) -> Result<Self, IqcError> {
        let first = terms.first().ok_or_else(|| IqcError::InvalidParameter("empty combination".into()))?.1;
        let mut psi0 = first.psi0.clone();
        let mut mids = vec![first.middle.clone() * terms[0].0];
        for (lam, m) in &terms[1..] {
            if *lam <= 0.0 || m.m1 != first.m1 || m.m2 != first.m2 {
                return Err(IqcError::InvalidParameter("combination needs positive weights and equal partitions".into()));
            }
            psi0 = StateSpace::vstack(&psi0, &m.psi0)?;
            mids.push(m.middle.clone() * *lam);
        }
        if terms[0].0 <= 0.0 {
            return Err(IqcError::InvalidParameter("combination needs positive weights".into()));
        }
        let refs: Vec<&Mat> = mids.iter().collect();
        Self::new(psi0, block_diag(&refs), first.m1, first.m2, IqcKind::Custom)
    }

    /// Hermitian check plus the signs Π11 > 0, Π22 < 0 on `grid`.
    /// At ∞ (the feedthrough) Π11 ⪰ 0 is accepted: the loop-transformed
    /// multipliers all vanish there, which the factorization regularizes.
    pub fn check_factorizable(&self, grid: &[f64]) -> Result<(), IqcError> {
        for &w in grid {
            let p = self.eval(w)?;
            let scale = 1.0 + p.norm();
            if (&p - p.adjoint()).norm() > 1e-9 * scale {
                return Err(IqcError::NotFactorizable(format!("Π(j{w}) is not Hermitian")));
            }
            let (p11, p22) = self.diag_blocks(&p);
            if hermitian_min_eig(&p11) <= 0.0 {
                return Err(IqcError::NotFactorizable(format!("Π11(j{w}) is not positive definite")));
            }
            if hermitian_max_eig(&p22) >= 0.0 {
                return Err(IqcError::NotFactorizable(format!("Π22(j{w}) is not negative definite")));
            }
        }
        let inf = linalg::to_complex(&self.at_infinity());
        let (p11, p22) = self.diag_blocks(&inf);
        let tol = 1e-12 * (1.0 + inf.norm());
        if hermitian_min_eig(&p11) < -tol {
            return Err(IqcError::NotFactorizable("Π11(∞) is indefinite".into()));
        }
        if hermitian_max_eig(&p22) >= 0.0 {
            return Err(IqcError::NotFactorizable("Π22(∞) is not negative definite".into()));
        }
        Ok(())
    }

    fn diag_blocks(&self, p: &CMat) -> (CMat, CMat) {
        let (m1, m2) = (self.m1, self.m2);
        (p.view((0, 0), (m1, m1)).into_owned(), p.view((m1, m1), (m2, m2)).into_owned())
    }
}

fn hermitian_eigs(p: &CMat) -> Vec<f64> {
    if p.nrows() == 0 {
        return Vec::new();
    }
    // real symmetric embedding [[Re, −Im],[Im, Re]] doubles every eigenvalue
    let n = p.nrows();
    let mut e = DMatrix::<f64>::zeros(2 * n, 2 * n);
    for i in 0..n {
        for j in 0..n {
            let z = (p[(i, j)] + p[(j, i)].conj()) * 0.5;
            e[(i, j)] = z.re;
            e[(i + n, j + n)] = z.re;
            e[(i, j + n)] = -z.im;
            e[(i + n, j)] = z.im;
        }
    }
    linalg::sym_eigenvalues(&e)
}

fn hermitian_min_eig(p: &CMat) -> f64 {
    hermitian_eigs(p).first().copied().unwrap_or(f64::INFINITY)
}

fn hermitian_max_eig(p: &CMat) -> f64 {
    hermitian_eigs(p).last().copied().unwrap_or(f64::NEG_INFINITY)
}

/// Static sector multiplier [[eps, 1],[1, −2−eps]] for the dead-zone in sector [0, 1].
pub fn make_sector_multiplier(eps: f64) -> Result<Multiplier, IqcError> {
    if eps <= 0.0 || !eps.is_finite() {
        return Err(IqcError::InvalidParameter(format!("eps must be positive, got {eps}")));
    }
    Multiplier::constant(Mat::from_row_slice(2, 2, &[eps, 1.0, 1.0, -2.0 - eps]), 1, 1, IqcKind::Sector)
}

/// Sector multiplier seen through the 1/(s+α) loop transformation.
pub fn make_loop_sector_multiplier(alpha: f64, eps: f64) -> Result<Multiplier, IqcError> {
    make_sector_multiplier(eps)?.loop_transformed(alpha)
}

/// Modified Popov multiplier diag(1/(s+α), 1)~ [[eps, −s],[s, −eps]] diag(1/(s+α), 1).
/// Ψ0 maps (v, w) to (u, u̇, w) with u = v/(s+α).
pub fn make_popov_multiplier(alpha: f64, eps: f64) -> Result<Multiplier, IqcError> {
    if alpha <= 0.0 || !alpha.is_finite() {
        return Err(IqcError::InvalidParameter(format!("alpha must be positive, got {alpha}")));
    }
    if eps <= 0.0 || !eps.is_finite() {
        return Err(IqcError::InvalidParameter(format!("eps must be positive, got {eps}")));
    }
    let psi0 = StateSpace::new(
        Mat::from_element(1, 1, -alpha),
        Mat::from_row_slice(1, 2, &[1.0, 0.0]),
        Mat::from_row_slice(3, 1, &[1.0, -alpha, 0.0]),
        Mat::from_row_slice(3, 2, &[0.0, 0.0, 1.0, 0.0, 0.0, 1.0]),
    )?;
    let s = Mat::from_row_slice(3, 3, &[eps, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 1.0, -eps]);
    Multiplier::new(psi0, s, 1, 1, IqcKind::Popov)
}

/// Default Zames–Falb filter H(s) = 1/(s+2).
pub fn default_zf_filter() -> StateSpace {
    StateSpace::from_transfer_function(&[1.0], &[1.0, 2.0]).expect("valid first-order filter")
}

/// Modified Zames–Falb multiplier
/// diag(1/(s+α), 1)~ [[eps, 1+H],[1+H~, −2−eps−(H+H~)]] diag(1/(s+α), 1).
/// Ψ0 maps (v, w) to (u, w, Hw).
pub fn make_zames_falb_multiplier(alpha: f64, eps: f64, h: &StateSpace) -> Result<Multiplier, IqcError> {
    if alpha <= 0.0 || !alpha.is_finite() {
        return Err(IqcError::InvalidParameter(format!("alpha must be positive, got {alpha}")));
    }
    if eps <= 0.0 || !eps.is_finite() {
        return Err(IqcError::InvalidParameter(format!("eps must be positive, got {eps}")));
    }
    if h.inputs() != 1 || h.outputs() != 1 {
        return Err(IqcError::InvalidParameter("Zames–Falb filter must be SISO".into()));
    }
    if !h.is_stable(0.0)? {
        return Err(IqcError::UnstableFilter);
    }
    let l1 = l1_norm(h)?;
    if l1 > 1.0 + 1e-9 {
        return Err(IqcError::L1BoundViolated(l1));
    }
    let nh = h.n();
    let a = block_diag(&[&Mat::from_element(1, 1, -alpha), h.a()]);
    let mut b = Mat::zeros(1 + nh, 2);
    b[(0, 0)] = 1.0;
    b.view_mut((1, 1), (nh, 1)).copy_from(h.b());
    let mut c = Mat::zeros(3, 1 + nh);
    c[(0, 0)] = 1.0;
    c.view_mut((2, 1), (1, nh)).copy_from(h.c());
    let mut d = Mat::zeros(3, 2);
    d[(1, 1)] = 1.0;
    d[(2, 1)] = h.d()[(0, 0)];
    let psi0 = StateSpace::new(a, b, c, d)?;
    let s = Mat::from_row_slice(3, 3, &[eps, 1.0, 1.0, 1.0, -2.0 - eps, -1.0, 1.0, -1.0, 0.0]);
    Multiplier::new(psi0, s, 1, 1, IqcKind::ZamesFalb)
}

/// ∫|h(t)|dt for a stable SISO system, including |D| for the impulse at 0.
pub fn l1_norm(h: &StateSpace) -> Result<f64, IqcError> {
    if h.inputs() != 1 || h.outputs() != 1 {
        return Err(IqcError::InvalidParameter("L1 norm is computed for SISO filters".into()));
    }
    let d = h.d()[(0, 0)].abs();
    match h.n() {
        0 => Ok(d),
        1 => {
            let a = h.a()[(0, 0)];
            if a >= 0.0 {
                return Err(IqcError::UnstableFilter);
            }
            Ok(d + (h.c()[(0, 0)] * h.b()[(0, 0)]).abs() / -a)
        }
        _ => {
            let sigma = linalg::spectral_abscissa(h.a())?;
            if sigma >= 0.0 {
                return Err(IqcError::UnstableFilter);
            }
            let t_end = 45.0 / -sigma;
            let f = |t: f64| (h.c() * (h.a() * t).exp() * h.b())[(0, 0)].abs();
            let segments = 200;
            let width = t_end / segments as f64;
            let mut total = 0.0;
            for k in 0..segments {
                let (lo, hi) = (k as f64 * width, (k + 1) as f64 * width);
                total += adaptive_simpson(&f, lo, hi, 1e-6 / segments as f64, 30);
            }
            Ok(d + total)
        }
    }
}

fn adaptive_simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
    let c = 0.5 * (a + b);
    let (fa, fb, fc) = (f(a), f(b), f(c));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fc + fb);
    simpson_rec(f, a, b, fa, fb, fc, whole, tol, depth)
}

#[allow(clippy::too_many_arguments)]
fn simpson_rec(f: &impl Fn(f64) -> f64, a: f64, b: f64, fa: f64, fb: f64, fc: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let c = 0.5 * (a + b);
    let (d, e) = (0.5 * (a + c), 0.5 * (c + b));
    let (fd, fe) = (f(d), f(e));
    let left = (c - a) / 6.0 * (fa + 4.0 * fd + fc);
    let right = (b - c) / 6.0 * (fc + 4.0 * fe + fb);
    if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
        return left + right + (left + right - whole) / 15.0;
    }
    simpson_rec(f, a, c, fa, fc, fd, left, tol / 2.0, depth - 1) + simpson_rec(f, c, b, fc, fb, fe, right, tol / 2.0, depth - 1)
}

#[cfg(test)]
pub(crate) fn c64(re: f64) -> num_complex::Complex64 {
    num_complex::Complex64::new(re, 0.0)
}
