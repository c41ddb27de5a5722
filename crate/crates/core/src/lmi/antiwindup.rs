//! Static sector-condition baseline: u = F_c x + H_c N(u) on the original plant.

use serde::{Deserialize, Serialize};

use super::backend::{ClarabelBackend, SdpBackend, SolveStatus, SolverOptions};
use super::problem::{AffineExpr, BlockLmi, LmiProblem, Var};
use super::synthesis::add_q_bound;
use super::{solve, LmiError, STRICT_MARGIN};
use crate::lft::SaturatedLFTPlant;
use crate::ss::linalg::Mat;

#[derive(Clone, Debug)]
pub struct AntiWindupLmi {
    pub problem: LmiProblem,
    pub q: Var,
    /// diagonal entries of Γ = Λ⁻¹
    pub gamma_diag: Vec<Var>,
    pub f_hat: Var,
    pub h_hat: Var,
    pub gamma: Var,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AntiWindupResult {
    pub status: SolveStatus,
    pub gamma: f64,
    pub f_c: Mat,
    pub h_c: Mat,
    pub q: Mat,
    pub sector_scaling: Vec<f64>,
    pub margins: Vec<(String, f64)>,
}

/// V̇ + γ⁻¹eᵀe − γdᵀd + 2ωᵀΛ(u − ω) < 0 after the congruence diag(Q, Γ).
/// The uncertainty channel, if any, is ignored.
pub fn build_antiwindup_lmi(plant: &SaturatedLFTPlant) -> Result<AntiWindupLmi, LmiError> {
    plant.validate()?;
    let (nx, nu, nd, ne) = (plant.n_x(), plant.n_u(), plant.n_d(), plant.n_e());
    let mut p = LmiProblem::new();
    let q = p.symmetric("Q", nx);
    let gamma_diag: Vec<Var> = (0..nu).map(|i| p.scalar(&format!("Gamma_{i}"))).collect();
    let f_hat = p.full("F_hat", nu, nx);
    let h_hat = p.full("H_hat", nu, nu);
    let gamma = p.scalar("gamma");

    let mut g = AffineExpr::zeros(nu, nu);
    for (i, v) in gamma_diag.iter().enumerate() {
        let mut e = Mat::zeros(nu, nu);
        e[(i, i)] = 1.0;
        g = g.add(&AffineExpr::scaled(v, &e));
    }
    let (i_x, i_u) = (Mat::identity(nx, nx), Mat::identity(nu, nu));
    let (b0t, d10) = (plant.b0.transpose(), &plant.d10);

    let mut b = BlockLmi::new(&[nx, nu, nd, ne]);
    b.set(0, 0, AffineExpr::lr(&plant.a, &q, &i_x).add(&AffineExpr::lr(&plant.b0, &f_hat, &i_x)).he());
    b.set(
        1,
        0,
        g.mul_right(&b0t).neg().add(&AffineExpr::lrt(&i_u, &h_hat, &b0t)).add(&AffineExpr::var(&f_hat)),
    );
    b.set(1, 1, AffineExpr::var(&h_hat).he().sub(&g.scale(2.0)));
    b.set_const(2, 0, plant.b2.transpose());
    b.set(2, 2, AffineExpr::scaled(&gamma, &-Mat::identity(nd, nd)));
    b.set(3, 0, AffineExpr::lr(&plant.c1, &q, &i_x).add(&AffineExpr::lr(d10, &f_hat, &i_x)));
    b.set(3, 1, g.mul_left(d10).neg().add(&AffineExpr::lr(d10, &h_hat, &i_u)));
    b.set_const(3, 2, plant.d12.clone());
    b.set(3, 3, AffineExpr::scaled(&gamma, &-Mat::identity(ne, ne)));

    p.neg_def("antiwindup", b.build(), STRICT_MARGIN);
    p.pos_def("Q", AffineExpr::var(&q), STRICT_MARGIN);
    for (i, v) in gamma_diag.iter().enumerate() {
        p.pos_def(&format!("Gamma_{i}"), AffineExpr::var(v), STRICT_MARGIN);
    }
    p.pos_def("gamma", AffineExpr::var(&gamma), STRICT_MARGIN);
    p.minimize(&gamma);
    Ok(AntiWindupLmi { problem: p, q, gamma_diag, f_hat, h_hat, gamma })
}

impl AntiWindupLmi {
    pub fn with_q_bound(mut self, q_max: Option<f64>) -> Result<Self, LmiError> {
        if let Some(qm) = q_max {
            add_q_bound(&mut self.problem, qm)?;
        }
        Ok(self)
    }

    pub fn solve_with(&self, backend: &dyn SdpBackend, opts: &SolverOptions) -> Result<AntiWindupResult, LmiError> {
        let sol = solve(&self.problem, backend, opts)?;
        if !sol.status.has_solution() {
            return Err(LmiError::from_status(sol.status, &sol.detail));
        }
        let x = &sol.x;
        let q = self.q.value(x);
        let gd: Vec<f64> = self.gamma_diag.iter().map(|v| x[v.offset]).collect();
        let chol = q.clone().cholesky().ok_or_else(|| LmiError::NoSolution("Q is not positive definite".into()))?;
        let f_c = chol.solve(&self.f_hat.value(x).transpose()).transpose();
        // Ĥ = H Γ with Γ diagonal
        let h_hat = self.h_hat.value(x);
        let h_c = Mat::from_fn(h_hat.nrows(), h_hat.ncols(), |i, j| h_hat[(i, j)] / gd[j]);
        Ok(AntiWindupResult {
            status: sol.status,
            gamma: x[self.gamma.offset],
            f_c,
            h_c,
            q,
            sector_scaling: gd,
            margins: self.problem.margins(x),
        })
    }

    pub fn solve(&self, opts: &SolverOptions) -> Result<AntiWindupResult, LmiError> {
        self.solve_with(&ClarabelBackend, opts)
    }
}
