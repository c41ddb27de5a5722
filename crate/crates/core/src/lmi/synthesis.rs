//! Convex state-feedback synthesis over (Q, Γ̂, λ̂_l, λ̂, F̂_c, Ĥ_c, γ).

use serde::{Deserialize, Serialize};

use super::analysis::scaled_brl_matrix;
use super::backend::{ClarabelBackend, SdpBackend, SolveStatus, SolverOptions};
use super::problem::{jacobi_min_eig, AffineExpr, BlockLmi, LmiProblem, Var};
use super::{solve, LmiError, DEFAULT_Q_MAX, DEFAULT_SCALING_FLOOR, STRICT_MARGIN};
use crate::iqc::{FactoredIQC, ScalingSlot, TriangularFactor};
use crate::lft::{attach_filters, AugmentedPlant, ClosedLoop};
use crate::ss::linalg::{self, Mat};

#[derive(Clone, Debug)]
pub struct SynthesisLmi {
    pub problem: LmiProblem,
    /// open interconnection (zero gains) the blocks were taken from
    pub cl: ClosedLoop,
    pub q: Var,
    pub gamma_hat: Vec<(Var, ScalingSlot)>,
    pub lambda_hat_l: Vec<Var>,
    pub lambda_hat: Var,
    pub f_hat: Var,
    pub h_hat: Var,
    pub gamma: Var,
}

/// Γ̂ (or Γ in the analysis problem) as a block-diagonal expression.
pub(crate) fn scaling_expr(blocks: &[(Var, ScalingSlot)], offsets: &[usize], n_q: usize) -> AffineExpr {
    let mut out = AffineExpr::zeros(n_q, n_q);
    for ((v, slot), &off) in blocks.iter().zip(offsets) {
        let m = match *slot {
            ScalingSlot::Symmetric(m) | ScalingSlot::Scalar(m) => m,
        };
        let mut e = Mat::zeros(m, n_q);
        e.view_mut((0, off), (m, m)).fill_with_identity();
        let term = match slot {
            ScalingSlot::Symmetric(_) => AffineExpr::lr(&e.transpose(), v, &e),
            ScalingSlot::Scalar(_) => AffineExpr::scaled(v, &(e.transpose() * &e)),
        };
        out = out.add(&term);
    }
    out
}

pub(crate) fn declare_scalings(p: &mut LmiProblem, slots: &[ScalingSlot], prefix: &str) -> Vec<(Var, ScalingSlot)> {
    slots
        .iter()
        .enumerate()
        .map(|(k, s)| {
            let v = match *s {
                ScalingSlot::Symmetric(m) => p.symmetric(&format!("{prefix}_{k}"), m),
                ScalingSlot::Scalar(_) => p.scalar(&format!("{prefix}_{k}")),
            };
            (v, *s)
        })
        .collect()
}

fn stack(ms: &[Mat], cols: usize) -> Mat {
    linalg::vcat(cols, &ms.iter().collect::<Vec<_>>())
}

pub fn build_synthesis_lmi(
    aug: &AugmentedPlant,
    nonlin_filters: &[TriangularFactor],
    unc_filters: &[FactoredIQC],
) -> Result<SynthesisLmi, LmiError> {
    let cl = attach_filters(aug, nonlin_filters, unc_filters, None)?;
    let o = &cl.open;
    let (n, nq, nu, nd, ne) = (cl.n(), cl.n_q, cl.n_u, cl.n_d, cl.n_e);
    let n_filt = cl.filters.len();
    let mut p = LmiProblem::new();
    let q = p.symmetric("Q", n);
    let gamma_hat = declare_scalings(&mut p, &cl.unc.slots, "Gamma_hat");
    let lambda_hat_l: Vec<Var> = (0..n_filt).map(|l| p.scalar(&format!("lambda_hat_{l}"))).collect();
    let lambda_hat = p.scalar("lambda_hat");
    let f_hat = p.full("F_hat", nu, n);
    let h_hat = p.full("H_hat", nu, nu);
    let gamma = p.scalar("gamma");

    let i_n = Mat::identity(n, n);
    let i_u = Mat::identity(nu, nu);
    let g_hat = scaling_expr(&gamma_hat, &cl.unc.offsets, nq);
    let acl_q = AffineExpr::lr(&o.a0, &q, &i_n).add(&AffineExpr::lr(&o.b_v, &f_hat, &i_n));

    // rows/cols: x_cl, p, w, d, z_Δ1, z_N1, e
    let n_zn = n_filt * nu;
    let mut b = BlockLmi::new(&[n, nq, nu, nd, nq, n_zn, ne]);
    b.set(0, 0, acl_q.he());
    b.set(1, 0, g_hat.mul_right(&o.b_p.transpose()));
    b.set(1, 1, g_hat.neg());
    b.set(2, 0, AffineExpr::scaled(&lambda_hat, &o.b_w.transpose()).add(&AffineExpr::lrt(&i_u, &h_hat, &o.b_v.transpose())));
    let mut d33 = AffineExpr::scaled(&lambda_hat, &(&i_u * (-2.0 * n_filt as f64)));
    for v in &lambda_hat_l {
        d33 = d33.add(&AffineExpr::scaled(v, &i_u));
    }
    b.set(2, 2, d33);
    b.set_const(3, 0, o.b_d.transpose());
    b.set(3, 3, AffineExpr::scaled(&gamma, &-Mat::identity(nd, nd)));
    if nq > 0 {
        let c_d = stack(&o.c_delta, n);
        let d_p = stack(&o.d_delta_p, nq);
        let d_w = stack(&o.d_delta_w, nu);
        let d_d = stack(&o.d_delta_d, nd);
        b.set(4, 0, AffineExpr::lr(&c_d, &q, &i_n));
        b.set(4, 1, g_hat.mul_left(&d_p));
        b.set(4, 2, AffineExpr::scaled(&lambda_hat, &d_w));
        b.set_const(4, 3, d_d);
        b.set(4, 4, g_hat.neg());
    }
    let c_n = stack(&o.c_n, n);
    let d_n1 = stack(&o.d_n1, nu);
    let d_n2 = stack(&o.d_n2, nu);
    b.set(5, 0, AffineExpr::lr(&c_n, &q, &i_n).add(&AffineExpr::lr(&d_n1, &f_hat, &i_n)));
    b.set(5, 2, AffineExpr::lr(&d_n1, &h_hat, &i_u).add(&AffineExpr::scaled(&lambda_hat, &d_n2)));
    let mut lam_blk = AffineExpr::zeros(n_zn, n_zn);
    for (l, v) in lambda_hat_l.iter().enumerate() {
        let mut e = Mat::zeros(n_zn, n_zn);
        e.view_mut((l * nu, l * nu), (nu, nu)).fill_with_identity();
        lam_blk = lam_blk.sub(&AffineExpr::scaled(v, &e));
    }
    b.set(5, 5, lam_blk);
    b.set(6, 0, AffineExpr::lr(&o.c_e, &q, &i_n));
    if nq > 0 {
        b.set(6, 1, g_hat.mul_left(&o.d_ep));
    }
    b.set(6, 2, AffineExpr::scaled(&lambda_hat, &o.d_ew));
    b.set_const(6, 3, o.d_ed.clone());
    b.set(6, 6, AffineExpr::scaled(&gamma, &-Mat::identity(ne, ne)));

    p.neg_def("synthesis", b.build(), STRICT_MARGIN);
    p.pos_def("Q", AffineExpr::var(&q), STRICT_MARGIN);
    for (k, (v, _)) in gamma_hat.iter().enumerate() {
        p.pos_def(&format!("Gamma_hat_{k}"), AffineExpr::var(v), STRICT_MARGIN);
    }
    for (l, v) in lambda_hat_l.iter().enumerate() {
        p.pos_def(&format!("lambda_hat_{l}"), AffineExpr::var(v), STRICT_MARGIN);
    }
    p.pos_def("lambda_hat", AffineExpr::var(&lambda_hat), STRICT_MARGIN);
    p.pos_def("gamma", AffineExpr::var(&gamma), STRICT_MARGIN);
    p.minimize(&gamma);
    p.named.insert("acl_q".into(), acl_q);
    Ok(SynthesisLmi { problem: p, cl, q, gamma_hat, lambda_hat_l, lambda_hat, f_hat, h_hat, gamma })
}

/// Q ≼ q_max·I.
pub fn add_q_bound(prob: &mut LmiProblem, q_max: f64) -> Result<(), LmiError> {
    if !(q_max > 0.0) {
        return Err(LmiError::InvalidParameter(format!("q_max must be positive, got {q_max}")));
    }
    let q = prob.require("Q")?;
    let n = q.shape.dims().0;
    prob.neg_def("Q_max", AffineExpr::var(&q).add_const(&(Mat::identity(n, n) * -q_max)), 0.0);
    Ok(())
}

/// Pole clustering in {Re s < −ρ} ∩ {|Im s| < −tan θ · Re s} with X_D = Q.
pub fn add_pole_region(prob: &mut LmiProblem, rho: f64, theta: f64) -> Result<(), LmiError> {
    if !(rho > 0.0) {
        return Err(LmiError::InvalidParameter(format!("rho must be positive, got {rho}")));
    }
    if !(theta > 0.0 && theta < std::f64::consts::FRAC_PI_2) {
        return Err(LmiError::InvalidParameter(format!("theta must lie in (0, π/2), got {theta}")));
    }
    let q = prob.require("Q")?;
    let aq = prob.named.get("acl_q").cloned().ok_or_else(|| LmiError::MissingVariable("acl_q".into()))?;
    let s1 = aq.he();
    let s2 = aq.sub(&aq.transpose());
    prob.neg_def("pole_shift", s1.add(&AffineExpr::var(&q).scale(2.0 * rho)), STRICT_MARGIN);
    let n = aq.rows;
    let mut b = BlockLmi::new(&[n, n]);
    b.set(0, 0, s1.scale(theta.sin()));
    // lower block is the transpose of the upper one, cos θ·(AX − XAᵀ)ᵀ
    b.set(1, 0, s2.transpose().scale(theta.cos()));
    b.set(1, 1, s1.scale(theta.sin()));
    prob.neg_def("pole_sector", b.build(), STRICT_MARGIN);
    Ok(())
}

/// Pole clustering in the disk |s| < r with X_D = Q.
pub fn add_pole_radius(prob: &mut LmiProblem, r: f64) -> Result<(), LmiError> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(LmiError::InvalidParameter(format!("pole radius must be positive, got {r}")));
    }
    let q = prob.require("Q")?;
    let aq = prob.named.get("acl_q").cloned().ok_or_else(|| LmiError::MissingVariable("acl_q".into()))?;
    let n = aq.rows;
    let mq = AffineExpr::var(&q).scale(-r);
    let mut b = BlockLmi::new(&[n, n]);
    b.set(0, 0, mq.clone());
    b.set(1, 0, aq.transpose());
    b.set(1, 1, mq);
    prob.neg_def("pole_radius", b.build(), STRICT_MARGIN);
    Ok(())
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct SynthesisOptions {
    /// (ρ, θ)
    pub pole_region: Option<(f64, f64)>,
    /// |s| < r for every closed-loop pole
    #[serde(default)]
    pub pole_radius: Option<f64>,
    pub q_max: Option<f64>,
    /// lower bound on λ̂, λ̂_l; keeps the certificate away from the λ̂ → 0 boundary
    pub scaling_floor: Option<f64>,
    pub solver: SolverOptions,
}

impl Default for SynthesisOptions {
    fn default() -> Self {
        Self { pole_region: None, pole_radius: None, q_max: Some(DEFAULT_Q_MAX), scaling_floor: Some(DEFAULT_SCALING_FLOOR), solver: SolverOptions::default() }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SynthesisResult {
    pub status: SolveStatus,
    pub solver_detail: String,
    pub gamma: f64,
    pub f_c: Mat,
    pub h_c: Mat,
    /// λ_l = λ̂_l⁻¹
    pub lambdas: Vec<f64>,
    pub lambda_hat_l: Vec<f64>,
    pub lambda_hat: f64,
    /// Γ = Γ̂⁻¹
    pub gamma_scaling: Mat,
    pub gamma_hat: Mat,
    pub q: Mat,
    /// (constraint, Jacobi-scaled margin) at the returned point; ≥ 0 when satisfied
    pub margins: Vec<(String, f64)>,
    /// λ̂⁻²λ̂_l − 2λ̂⁻¹ + λ̂_l⁻¹ ≥ 0 per filter
    pub relaxation_gaps: Vec<f64>,
    pub solve_time: f64,
    pub iterations: u32,
}

impl SynthesisLmi {
    /// λ̂ ≥ floor and λ̂_l ≥ floor.
    pub fn add_scaling_floor(&mut self, floor: f64) -> Result<(), LmiError> {
        if !(floor > 0.0) {
            return Err(LmiError::InvalidParameter(format!("scaling floor must be positive, got {floor}")));
        }
        let p = &mut self.problem;
        for v in self.lambda_hat_l.iter().chain(std::iter::once(&self.lambda_hat)) {
            p.pos_def(&format!("floor_{}", v.id), AffineExpr::var(v), floor);
        }
        Ok(())
    }

    pub fn recover(&self, x: &[f64], status: SolveStatus) -> Result<SynthesisResult, LmiError> {
        let q = self.q.value(x);
        let f_hat = self.f_hat.value(x);
        let h_hat = self.h_hat.value(x);
        let lambda_hat = x[self.lambda_hat.offset];
        let lambda_hat_l: Vec<f64> = self.lambda_hat_l.iter().map(|v| x[v.offset]).collect();
        let chol = q.clone().cholesky().ok_or_else(|| LmiError::NoSolution("Q is not positive definite".into()))?;
        // F_c = F̂ Q⁻¹  ⇔  Q F_cᵀ = F̂ᵀ
        let f_c = chol.solve(&f_hat.transpose()).transpose();
        let h_c = h_hat / lambda_hat;
        let nq = self.cl.n_q;
        let gamma_hat = scaling_expr(&self.gamma_hat, &self.cl.unc.offsets, nq).eval(x);
        let gamma_scaling = if nq == 0 {
            Mat::zeros(0, 0)
        } else {
            gamma_hat.clone().try_inverse().ok_or_else(|| LmiError::NoSolution("Γ̂ singular".into()))?
        };
        let relaxation_gaps = lambda_hat_l
            .iter()
            .map(|&l| l / (lambda_hat * lambda_hat) - 2.0 / lambda_hat + 1.0 / l)
            .collect();
        Ok(SynthesisResult {
            status,
            solver_detail: String::new(),
            gamma: x[self.gamma.offset],
            f_c,
            h_c,
            lambdas: lambda_hat_l.iter().map(|l| 1.0 / l).collect(),
            lambda_hat_l,
            lambda_hat,
            gamma_scaling,
            gamma_hat,
            q,
            margins: self.problem.margins(x),
            relaxation_gaps,
            solve_time: 0.0,
            iterations: 0,
        })
    }

    pub fn solve_with(&self, backend: &dyn SdpBackend, opts: &SolverOptions) -> Result<SynthesisResult, LmiError> {
        let sol = solve(&self.problem, backend, opts)?;
        if !sol.status.has_solution() {
            return Err(LmiError::from_status(sol.status, &sol.detail));
        }
        let mut r = self.recover(&sol.x, sol.status)?;
        r.solver_detail = sol.detail;
        r.solve_time = sol.solve_time;
        r.iterations = sol.iterations;
        Ok(r)
    }
}

/// Build, constrain and solve the synthesis problem with Clarabel.
pub fn synthesize(
    aug: &AugmentedPlant,
    nonlin_filters: &[TriangularFactor],
    unc_filters: &[FactoredIQC],
    opts: &SynthesisOptions,
) -> Result<(SynthesisResult, ClosedLoop), LmiError> {
    let mut lmi = build_synthesis_lmi(aug, nonlin_filters, unc_filters)?;
    if let Some(qm) = opts.q_max {
        add_q_bound(&mut lmi.problem, qm)?;
    }
    if let Some((rho, theta)) = opts.pole_region {
        add_pole_region(&mut lmi.problem, rho, theta)?;
    }
    if let Some(r) = opts.pole_radius {
        add_pole_radius(&mut lmi.problem, r)?;
    }
    if let Some(floor) = opts.scaling_floor {
        lmi.add_scaling_floor(floor)?;
    }
    let r = lmi.solve_with(&ClarabelBackend, &opts.solver)?;
    let cl = lmi.cl.with_gains(&r.f_c, &r.h_c)?;
    Ok((r, cl))
}

/// Jacobi-scaled margin of the analysis matrix at P = Q⁻¹, Γ = Γ̂⁻¹, λ_l = λ̂_l⁻¹
/// for the closed loop with the recovered gains; ≥ 0 means the certificate holds.
pub fn round_trip_margin(cl: &ClosedLoop, r: &SynthesisResult) -> Result<f64, LmiError> {
    certificate_margin(cl, &r.q, &r.gamma_scaling, &r.lambdas, r.gamma)
}

/// Same margin from the raw certificate (Q, Γ, λ_l, γ).
pub fn certificate_margin(cl: &ClosedLoop, q: &Mat, gamma_scaling: &Mat, lambdas: &[f64], gamma: f64) -> Result<f64, LmiError> {
    let p = q.clone().try_inverse().ok_or_else(|| LmiError::NoSolution("Q singular".into()))?;
    let m = scaled_brl_matrix(cl, &p, gamma_scaling, lambdas, gamma)?;
    Ok(jacobi_min_eig(&-m))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::iqc::*;
    use crate::lft::augmented::tests::second_order;
    use crate::lft::loop_transform;
    use crate::lmi::analysis::{build_analysis_lmi, dissipation_matrix};
    use crate::ss::linalg::max_sym_eig;

    fn tri(m: &Multiplier) -> TriangularFactor {
        to_triangular(&j_spectral_factorize(m, &FactorOptions::default()).unwrap()).unwrap()
    }

    fn mixed(alpha: f64) -> Vec<TriangularFactor> {
        vec![
            tri(&make_popov_multiplier(alpha, 0.01).unwrap()),
            tri(&make_zames_falb_multiplier(alpha, 0.01, &default_zf_filter()).unwrap()),
            tri(&make_loop_sector_multiplier(alpha, 0.01).unwrap()),
        ]
    }

    fn unc() -> Vec<FactoredIQC> {
        vec![make_uncertainty_iqc(UncertaintyBlock::RepeatedScalar(1), 1.0).unwrap()]
    }

    #[test]
    fn variable_count() {
        let aug = loop_transform(&second_order(2.0)).unwrap();
        let lmi = build_synthesis_lmi(&aug, &mixed(2.0), &unc()).unwrap();
        let n = lmi.cl.n();
        assert_eq!(lmi.problem.n_scalars(), n * (n + 1) / 2 + 1 + 3 + 1 + n + 1 + 1);
    }

    #[test]
    fn mixed_synthesis_round_trip() {
        let aug = loop_transform(&second_order(2.0)).unwrap();
        let (r, cl) = synthesize(&aug, &mixed(2.0), &unc(), &SynthesisOptions::default()).unwrap();
        assert!(r.gamma > 1.43 && r.gamma < 1.59, "gamma = {}", r.gamma);
        assert!(r.relaxation_gaps.iter().all(|&g| g >= -1e-9));
        let m = round_trip_margin(&cl, &r).unwrap();
        assert!(m >= -1e-6, "round-trip margin {m}");
        // undoing the Schur complements gives a negative semidefinite dissipation matrix
        let p = r.q.clone().try_inverse().unwrap();
        let e20 = dissipation_matrix(&cl, &p, &r.gamma_scaling, &r.lambdas, r.gamma).unwrap();
        assert!(max_sym_eig(&e20) <= 1e-6 * (1.0 + e20.norm()));
        // fixed-gain analysis certifies at most the synthesized level
        let an = build_analysis_lmi(&cl, &aug.plant.structure, 3).unwrap();
        let a = an.solve(&SolverOptions::default()).unwrap();
        assert!(a.gamma <= r.gamma * (1.0 + 1e-4) + 1e-6, "{} vs {}", a.gamma, r.gamma);
    }

    #[test]
    fn pole_region_respected() {
        let aug = loop_transform(&second_order(2.0)).unwrap();
        let opts = SynthesisOptions { pole_region: Some((1.0, std::f64::consts::FRAC_PI_3)), ..Default::default() };
        let (_, cl) = synthesize(&aug, &mixed(2.0), &unc(), &opts).unwrap();
        let t = std::f64::consts::FRAC_PI_3.tan();
        for z in cl.poles().unwrap() {
            assert!(z.re < -1.0 + 1e-6, "{z}");
            assert!(z.im.abs() <= -t * z.re + 1e-6, "{z}");
        }
    }

    #[test]
    fn forced_small_gamma_infeasible() {
        let aug = loop_transform(&second_order(2.0)).unwrap();
        let mut lmi = build_synthesis_lmi(&aug, &mixed(2.0), &unc()).unwrap();
        let g = lmi.gamma;
        lmi.problem.upper_bound(&g, 0.1);
        let err = lmi.solve_with(&ClarabelBackend, &SolverOptions::default()).unwrap_err();
        assert!(matches!(err, LmiError::Infeasible(_)), "{err}");
    }

    #[test]
    fn pole_region_preconditions() {
        let aug = loop_transform(&second_order(2.0)).unwrap();
        let mut lmi = build_synthesis_lmi(&aug, &mixed(2.0), &unc()).unwrap();
        assert!(add_pole_region(&mut lmi.problem, 0.0, 1.0).is_err());
        assert!(add_pole_region(&mut lmi.problem, 1.0, 2.0).is_err());
        assert!(add_pole_region(&mut LmiProblem::new(), 1.0, 1.0).is_err());
    }

    #[test]
    fn empty_filter_list_rejected() {
        let aug = loop_transform(&second_order(2.0)).unwrap();
        assert!(build_synthesis_lmi(&aug, &[], &unc()).is_err());
    }
}
