//! Robust L2-gain analysis of a fixed closed loop over (P, Γ, λ_l, γ).

use serde::{Deserialize, Serialize};

use super::backend::{ClarabelBackend, SdpBackend, SolveStatus, SolverOptions};
use super::problem::{AffineExpr, BlockLmi, LmiProblem, Var};
use super::synthesis::{declare_scalings, scaling_expr};
use super::{solve, LmiError, STRICT_MARGIN};
use crate::iqc::{ScalingSlot, UncertaintyBlock};
use crate::lft::{ClosedLoop, UncertaintyStructure};
use crate::ss::linalg::{self, Mat};

#[derive(Clone, Debug)]
pub struct AnalysisLmi {
    pub problem: LmiProblem,
    pub p: Var,
    pub scalings: Vec<(Var, ScalingSlot)>,
    pub offsets: Vec<usize>,
    pub lambdas: Vec<Var>,
    pub gamma: Var,
    pub n_q: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AnalysisResult {
    pub status: SolveStatus,
    pub gamma: f64,
    pub p: Mat,
    pub gamma_scaling: Mat,
    pub lambdas: Vec<f64>,
    pub margins: Vec<(String, f64)>,
}

fn slots_of(structure: &UncertaintyStructure) -> Vec<ScalingSlot> {
    structure
        .blocks()
        .iter()
        .map(|b| match *b {
            UncertaintyBlock::RepeatedScalar(m) => ScalingSlot::Symmetric(m),
            UncertaintyBlock::Full(r) => ScalingSlot::Scalar(r),
        })
        .collect()
}

/// Full row [C D0 D1 D2] of one filter output over (x_cl, p, w, d).
fn row(c: &Mat, d0: &Mat, d1: &Mat, d2: &Mat) -> Mat {
    linalg::hcat(c.nrows(), &[c, d0, d1, d2])
}

/// The dissipation inequality with the e-term Schur-complemented into a trailing −γI block, affine in
/// (P, X_k / χ_k, λ_l, γ).
pub fn build_analysis_lmi(cl: &ClosedLoop, structure: &UncertaintyStructure, n_iqc: usize) -> Result<AnalysisLmi, LmiError> {
    if structure.n_q() != cl.n_q {
        return Err(LmiError::Malformed(format!("structure covers {} channels, closed loop has n_q = {}", structure.n_q(), cl.n_q)));
    }
    if n_iqc != cl.filters.len() {
        return Err(LmiError::Malformed(format!("{n_iqc} IQCs requested, closed loop carries {}", cl.filters.len())));
    }
    let (n, nq, nu, nd, ne) = (cl.n(), cl.n_q, cl.n_u, cl.n_d, cl.n_e);
    let mut prob = LmiProblem::new();
    let p = prob.symmetric("P", n);
    let slots = slots_of(structure);
    let scalings = declare_scalings(&mut prob, &slots, "Gamma");
    let lambdas: Vec<Var> = (0..n_iqc).map(|l| prob.scalar(&format!("lambda_{l}"))).collect();
    let gamma = prob.scalar("gamma");
    let offsets = structure.offsets();
    let g = scaling_expr(&scalings, &offsets, nq);

    let i_n = Mat::identity(n, n);
    let mut b = BlockLmi::new(&[n, nq, nu, nd]);
    b.set(0, 0, AffineExpr::lr(&i_n, &p, &cl.a_cl).he());
    b.set(1, 0, AffineExpr::lr(&cl.b_cl0.transpose(), &p, &i_n));
    b.set(1, 1, g.neg());
    b.set(2, 0, AffineExpr::lr(&cl.b_cl1.transpose(), &p, &i_n));
    let mut d22 = AffineExpr::zeros(nu, nu);
    for v in &lambdas {
        d22 = d22.sub(&AffineExpr::scaled(v, &Mat::identity(nu, nu)));
    }
    b.set(2, 2, d22);
    b.set(3, 0, AffineExpr::lr(&cl.b_cl2.transpose(), &p, &i_n));
    b.set(3, 3, AffineExpr::scaled(&gamma, &-Mat::identity(nd, nd)));
    let mut top = b.build();

    for (k, ((v, slot), &off)) in scalings.iter().zip(&offsets).enumerate() {
        let theta = row(&cl.c_cl_delta1[k], &cl.d_cl_delta10[k], &cl.d_cl_delta11[k], &cl.d_cl_delta12[k]);
        let term = match slot {
            ScalingSlot::Symmetric(_) => AffineExpr::lr(&theta.transpose(), v, &theta),
            ScalingSlot::Scalar(_) => AffineExpr::scaled(v, &(theta.transpose() * &theta)),
        };
        debug_assert!(off + theta.nrows() <= nq);
        top = top.add(&term);
    }
    for (l, v) in lambdas.iter().enumerate() {
        let xi = row(&cl.c_cl_n1[l], &cl.d_cl_n10[l], &cl.d_cl_n11[l], &cl.d_cl_n12[l]);
        top = top.add(&AffineExpr::scaled(v, &(xi.transpose() * &xi)));
    }
    let m = top.rows;
    let e_row = row(&cl.c_cl2, &cl.d_cl20, &cl.d_cl21, &cl.d_cl22);
    let mut outer = BlockLmi::new(&[m, ne]);
    outer.set(0, 0, top);
    outer.set_const(1, 0, e_row);
    outer.set(1, 1, AffineExpr::scaled(&gamma, &-Mat::identity(ne, ne)));
    prob.neg_def("analysis", outer.build(), STRICT_MARGIN);
    prob.pos_def("P", AffineExpr::var(&p), STRICT_MARGIN);
    for (k, (v, _)) in scalings.iter().enumerate() {
        prob.pos_def(&format!("Gamma_{k}"), AffineExpr::var(v), STRICT_MARGIN);
    }
    for (l, v) in lambdas.iter().enumerate() {
        prob.pos_def(&format!("lambda_{l}"), AffineExpr::var(v), STRICT_MARGIN);
    }
    prob.pos_def("gamma", AffineExpr::var(&gamma), STRICT_MARGIN);
    prob.minimize(&gamma);
    Ok(AnalysisLmi { problem: prob, p, scalings, offsets, lambdas, gamma, n_q: nq })
}

impl AnalysisLmi {
    pub fn solve_with(&self, backend: &dyn SdpBackend, opts: &SolverOptions) -> Result<AnalysisResult, LmiError> {
        let sol = solve(&self.problem, backend, opts)?;
        if !sol.status.has_solution() {
            return Err(LmiError::from_status(sol.status, &sol.detail));
        }
        let x = &sol.x;
        Ok(AnalysisResult {
            status: sol.status,
            gamma: x[self.gamma.offset],
            p: self.p.value(x),
            gamma_scaling: scaling_expr(&self.scalings, &self.offsets, self.n_q).eval(x),
            lambdas: self.lambdas.iter().map(|v| x[v.offset]).collect(),
            margins: self.problem.margins(x),
        })
    }

    pub fn solve(&self, opts: &SolverOptions) -> Result<AnalysisResult, LmiError> {
        self.solve_with(&ClarabelBackend, opts)
    }
}

fn check_numeric(cl: &ClosedLoop, p: &Mat, gamma_scaling: &Mat, lambdas: &[f64]) -> Result<(), LmiError> {
    let n = cl.n();
    if p.shape() != (n, n) || gamma_scaling.shape() != (cl.n_q, cl.n_q) || lambdas.len() != cl.filters.len() {
        return Err(LmiError::Malformed("certificate dimensions do not match the closed loop".into()));
    }
    Ok(())
}

/// The seven-block matrix of the scaled bounded real lemma at a given point.
pub fn scaled_brl_matrix(cl: &ClosedLoop, p: &Mat, gamma_scaling: &Mat, lambdas: &[f64], gamma: f64) -> Result<Mat, LmiError> {
    check_numeric(cl, p, gamma_scaling, lambdas)?;
    let (n, nq, nu, nd, ne) = (cl.n(), cl.n_q, cl.n_u, cl.n_d, cl.n_e);
    let nf = lambdas.len();
    let (th1, th10, th11, th12) = cl.delta_rows();
    let (xi1, xi10, xi11, xi12) = cl.nonlin_rows();
    let g_inv = if nq == 0 {
        Mat::zeros(0, 0)
    } else {
        gamma_scaling.clone().try_inverse().ok_or_else(|| LmiError::NoSolution("Γ singular".into()))?
    };
    let mut lam = Mat::zeros(nf * nu, nf * nu);
    for (l, &v) in lambdas.iter().enumerate() {
        lam.view_mut((l * nu, l * nu), (nu, nu)).fill_diagonal(1.0 / v);
    }
    let sum_l: f64 = lambdas.iter().sum();
    let mut b = BlockLmi::new(&[n, nq, nu, nd, nq, nf * nu, ne]);
    b.set_const(0, 0, p * &cl.a_cl + cl.a_cl.transpose() * p);
    b.set_const(1, 0, cl.b_cl0.transpose() * p);
    b.set_const(1, 1, -gamma_scaling);
    b.set_const(2, 0, cl.b_cl1.transpose() * p);
    b.set_const(2, 2, Mat::identity(nu, nu) * -sum_l);
    b.set_const(3, 0, cl.b_cl2.transpose() * p);
    b.set_const(3, 3, Mat::identity(nd, nd) * -gamma);
    b.set_const(4, 0, th1);
    b.set_const(4, 1, th10);
    b.set_const(4, 2, th11);
    b.set_const(4, 3, th12);
    b.set_const(4, 4, -g_inv);
    b.set_const(5, 0, xi1);
    b.set_const(5, 1, xi10);
    b.set_const(5, 2, xi11);
    b.set_const(5, 3, xi12);
    b.set_const(5, 5, -lam);
    b.set_const(6, 0, cl.c_cl2.clone());
    b.set_const(6, 1, cl.d_cl20.clone());
    b.set_const(6, 2, cl.d_cl21.clone());
    b.set_const(6, 3, cl.d_cl22.clone());
    b.set_const(6, 6, Mat::identity(ne, ne) * -gamma);
    Ok(b.build().constant)
}

/// The dissipation inequality before any Schur complement, over (x_cl, p, w, d).
pub fn dissipation_matrix(cl: &ClosedLoop, p: &Mat, gamma_scaling: &Mat, lambdas: &[f64], gamma: f64) -> Result<Mat, LmiError> {
    check_numeric(cl, p, gamma_scaling, lambdas)?;
    let (n, nq, nu, nd) = (cl.n(), cl.n_q, cl.n_u, cl.n_d);
    let mut b = BlockLmi::new(&[n, nq, nu, nd]);
    b.set_const(0, 0, p * &cl.a_cl + cl.a_cl.transpose() * p);
    b.set_const(1, 0, cl.b_cl0.transpose() * p);
    b.set_const(1, 1, -gamma_scaling);
    b.set_const(2, 0, cl.b_cl1.transpose() * p);
    b.set_const(2, 2, Mat::identity(nu, nu) * -lambdas.iter().sum::<f64>());
    b.set_const(3, 0, cl.b_cl2.transpose() * p);
    b.set_const(3, 3, Mat::identity(nd, nd) * -gamma);
    let mut m = b.build().constant;
    let (th1, th10, th11, th12) = cl.delta_rows();
    let theta = row(&th1, &th10, &th11, &th12);
    m += theta.transpose() * gamma_scaling * &theta;
    for (l, &v) in lambdas.iter().enumerate() {
        let xi = row(&cl.c_cl_n1[l], &cl.d_cl_n10[l], &cl.d_cl_n11[l], &cl.d_cl_n12[l]);
        m += xi.transpose() * &xi * v;
    }
    let e = row(&cl.c_cl2, &cl.d_cl20, &cl.d_cl21, &cl.d_cl22);
    m += e.transpose() * &e / gamma;
    Ok(m)
}
