//! Standard-form conic program and the Clarabel backend.

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, NonnegativeConeT, PSDTriangleConeT, SolverStatus, SupportedConeT,
};
use serde::{Deserialize, Serialize};

use super::problem::{LmiProblem, Sense};
use super::LmiError;
use crate::ss::linalg::Mat;

/// One PSD block: svec(b) − Σ_k x_k·svec(a_k) ∈ S₊ (svec = column-major upper
/// triangle with √2 on off-diagonals).
#[derive(Clone, Debug)]
pub struct SdpBlock {
    pub dim: usize,
    pub b: Vec<f64>,
    /// (variable index, svec entries as (row, value))
    pub a: Vec<(usize, Vec<(usize, f64)>)>,
}

/// min cᵀx  s.t.  b_i − A_i x ∈ S₊ for every block.
#[derive(Clone, Debug)]
pub struct SdpProblem {
    pub n_vars: usize,
    pub c: Vec<f64>,
    pub blocks: Vec<SdpBlock>,
}

pub fn svec_len(n: usize) -> usize {
    n * (n + 1) / 2
}

pub fn svec(m: &Mat) -> Vec<f64> {
    let n = m.nrows();
    let r2 = std::f64::consts::SQRT_2;
    let mut out = Vec::with_capacity(svec_len(n));
    for j in 0..n {
        for i in 0..=j {
            out.push(if i == j { m[(i, j)] } else { r2 * 0.5 * (m[(i, j)] + m[(j, i)]) });
        }
    }
    out
}

pub fn smat(v: &[f64], n: usize) -> Mat {
    let r2 = std::f64::consts::SQRT_2;
    let mut m = Mat::zeros(n, n);
    let mut k = 0;
    for j in 0..n {
        for i in 0..=j {
            if i == j {
                m[(i, i)] = v[k];
            } else {
                m[(i, j)] = v[k] / r2;
                m[(j, i)] = v[k] / r2;
            }
            k += 1;
        }
    }
    m
}

pub fn lower_to_sdp(prob: &LmiProblem) -> Result<SdpProblem, LmiError> {
    prob.validate()?;
    let n_vars = prob.n_scalars();
    let mut c = vec![0.0; n_vars];
    for (&k, &v) in &prob.objective {
        c[k] = v;
    }
    let mut blocks = Vec::with_capacity(prob.constraints.len());
    for con in &prob.constraints {
        let n = con.expr.rows;
        let delta = Mat::identity(n, n) * con.margin;
        // NegDef: −C0 − δI − Σx_k C_k ⪰ 0;  PosDef: C0 − δI + Σx_k C_k ⪰ 0
        let (b, sign) = match con.sense {
            Sense::NegDef => (-&con.expr.constant - &delta, 1.0),
            Sense::PosDef => (&con.expr.constant - &delta, -1.0),
        };
        let a = con
            .expr
            .coeffs
            .iter()
            .map(|(&k, m)| {
                let entries: Vec<(usize, f64)> =
                    svec(m).into_iter().enumerate().filter(|(_, v)| *v != 0.0).map(|(r, v)| (r, sign * v)).collect();
                (k, entries)
            })
            .collect();
        blocks.push(SdpBlock { dim: n, b: svec(&b), a });
    }
    Ok(SdpProblem { n_vars, c, blocks })
}

impl SdpProblem {
    /// Slack matrix of block `i` at x: b − A x as a symmetric matrix.
    pub fn slack(&self, i: usize, x: &[f64]) -> Mat {
        let blk = &self.blocks[i];
        let mut s = blk.b.clone();
        for (k, entries) in &blk.a {
            for &(r, v) in entries {
                s[r] -= v * x[*k];
            }
        }
        smat(&s, blk.dim)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    /// solution returned at reduced accuracy
    Inaccurate,
    Infeasible,
    Unbounded,
    Failed,
}

impl SolveStatus {
    pub fn has_solution(&self) -> bool {
        matches!(self, SolveStatus::Optimal | SolveStatus::Inaccurate)
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct SolverOptions {
    /// relative feasibility tolerance
    pub feas_tol: f64,
    /// relative duality gap
    pub gap: f64,
    pub max_iter: u32,
    pub verbose: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { feas_tol: 1e-7, gap: 1e-7, max_iter: 200, verbose: false }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SdpSolution {
    pub status: SolveStatus,
    pub x: Vec<f64>,
    pub objective: f64,
    pub detail: String,
    pub iterations: u32,
    pub solve_time: f64,
}

pub trait SdpBackend: Send + Sync {
    fn name(&self) -> &'static str;
    fn solve(&self, sdp: &SdpProblem, opts: &SolverOptions) -> Result<SdpSolution, LmiError>;
}

#[derive(Clone, Copy, Debug, Default)]
pub struct ClarabelBackend;

impl SdpBackend for ClarabelBackend {
    fn name(&self) -> &'static str {
        "clarabel"
    }

    fn solve(&self, sdp: &SdpProblem, opts: &SolverOptions) -> Result<SdpSolution, LmiError> {
        let n = sdp.n_vars;
        let (mut ii, mut jj, mut vv) = (Vec::new(), Vec::new(), Vec::new());
        let mut b = Vec::new();
        let mut cones: Vec<SupportedConeT<f64>> = Vec::new();
        let mut row = 0;
        for blk in &sdp.blocks {
            for (k, entries) in &blk.a {
                for &(r, v) in entries {
                    ii.push(row + r);
                    jj.push(*k);
                    vv.push(v);
                }
            }
            b.extend_from_slice(&blk.b);
            cones.push(if blk.dim == 1 { NonnegativeConeT(1) } else { PSDTriangleConeT(blk.dim) });
            row += blk.b.len();
        }
        let a = CscMatrix::new_from_triplets(row, n, ii, jj, vv);
        let p = CscMatrix::zeros((n, n));
        let settings = DefaultSettingsBuilder::default()
            .verbose(opts.verbose)
            .max_iter(opts.max_iter)
            .tol_feas(opts.feas_tol)
            .tol_gap_rel(opts.gap)
            .tol_gap_abs(opts.gap)
            .build()
            .map_err(|e| LmiError::Solver(format!("settings: {e:?}")))?;
        let mut solver = DefaultSolver::new(&p, &sdp.c, &a, &b, &cones, settings)
            .map_err(|e| LmiError::Solver(format!("setup: {e:?}")))?;
        solver.solve();
        let sol = &solver.solution;
        let status = match sol.status {
            SolverStatus::Solved => SolveStatus::Optimal,
            SolverStatus::AlmostSolved => SolveStatus::Inaccurate,
            SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => SolveStatus::Infeasible,
            SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => SolveStatus::Unbounded,
            SolverStatus::MaxIterations | SolverStatus::MaxTime | SolverStatus::InsufficientProgress => {
                if sol.x.iter().all(|v| v.is_finite()) {
                    SolveStatus::Inaccurate
                } else {
                    SolveStatus::Failed
                }
            }
            _ => SolveStatus::Failed,
        };
        Ok(SdpSolution {
            status,
            x: sol.x.clone(),
            objective: sol.obj_val,
            detail: format!("{:?}", sol.status),
            iterations: sol.iterations,
            solve_time: sol.solve_time,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lmi::problem::AffineExpr;

    #[test]
    fn svec_roundtrip() {
        let m = Mat::from_row_slice(3, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 5.0, 3.0, 5.0, 6.0]);
        assert!((smat(&svec(&m), 3) - &m).norm() < 1e-15);
        // inner product is preserved
        let ip: f64 = svec(&m).iter().map(|v| v * v).sum();
        assert!((ip - m.norm_squared()).abs() < 1e-12);
    }

    #[test]
    fn gamma_lower_bound() {
        let mut p = LmiProblem::new();
        let g = p.scalar("gamma");
        p.neg_def("g", AffineExpr::scaled(&g, &Mat::identity(2, 2)).neg(), 1e-3);
        p.minimize(&g);
        let s = ClarabelBackend.solve(&lower_to_sdp(&p).unwrap(), &SolverOptions::default()).unwrap();
        assert_eq!(s.status, SolveStatus::Optimal);
        assert!((s.x[0] - 1e-3).abs() < 1e-6);
    }

    #[test]
    fn lyapunov_feasible() {
        let mut p = LmiProblem::new();
        let pv = p.symmetric("P", 2);
        let a = -Mat::identity(2, 2);
        p.neg_def("lyap", AffineExpr::lr(&a.transpose(), &pv, &Mat::identity(2, 2)).he(), 1e-6);
        p.pos_def("P", AffineExpr::var(&pv), 1e-6);
        let sdp = lower_to_sdp(&p).unwrap();
        let s = ClarabelBackend.solve(&sdp, &SolverOptions::default()).unwrap();
        assert!(s.status.has_solution());
        assert!(p.margins(&s.x).iter().all(|(_, m)| *m > -1e-7));
        // P = I is feasible too
        let x = pv.scalars_of(&Mat::identity(2, 2));
        assert!(p.margins(&x).iter().all(|(_, m)| *m > 0.0));
    }

    #[test]
    fn lowering_matches_expression() {
        let mut p = LmiProblem::new();
        let q = p.symmetric("Q", 2);
        let f = p.full("F", 1, 2);
        let a = Mat::from_row_slice(2, 2, &[0.0, 1.0, -2.0, -3.0]);
        let b = Mat::from_row_slice(2, 1, &[0.0, 1.0]);
        let e = AffineExpr::lr(&a, &q, &Mat::identity(2, 2)).add(&AffineExpr::lr(&b, &f, &Mat::identity(2, 2))).he();
        p.neg_def("e", e.clone(), 0.0);
        let sdp = lower_to_sdp(&p).unwrap();
        let x = [0.3, -0.2, 1.1, 0.7, -0.4];
        assert!((sdp.slack(0, &x) + e.eval(&x)).norm() < 1e-12);
    }
}
