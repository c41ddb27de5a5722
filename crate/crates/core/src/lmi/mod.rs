//! LMI assembly, lowering to a conic program, solving and gain recovery.

pub mod analysis;
pub mod antiwindup;
pub mod backend;
pub mod problem;
pub mod synthesis;

use thiserror::Error;

use crate::lft::LftError;

pub use analysis::{build_analysis_lmi, dissipation_matrix, scaled_brl_matrix, AnalysisLmi, AnalysisResult};
pub use antiwindup::{build_antiwindup_lmi, AntiWindupLmi, AntiWindupResult};
pub use backend::{lower_to_sdp, ClarabelBackend, SdpBackend, SdpProblem, SdpSolution, SolveStatus, SolverOptions};
pub use problem::{jacobi_min_eig, AffineExpr, BlockLmi, LmiProblem, Sense, Var, VarShape};
pub use synthesis::{
    add_pole_radius, add_pole_region, build_synthesis_lmi, certificate_margin, round_trip_margin, synthesize, SynthesisLmi, SynthesisOptions,
    SynthesisResult,
};

/// Strictness margin δ for ≺ 0 constraints.
pub const STRICT_MARGIN: f64 = 1e-8;
/// Default Q ≼ q_max·I bound.
pub const DEFAULT_Q_MAX: f64 = 1e6;
/// Default lower bound on the IQC scalings λ̂, λ̂_l.
pub const DEFAULT_SCALING_FLOOR: f64 = 1e-4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LmiError {
    #[error("malformed problem: {0}")]
    Malformed(String),
    #[error("missing variable {0}")]
    MissingVariable(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("solver failure: {0}")]
    Solver(String),
    #[error("no solution: {0}")]
    NoSolution(String),
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error(transparent)]
    Lft(#[from] LftError),
}

impl LmiError {
    /// Error for a solve that returned no usable point.
    pub fn from_status(status: SolveStatus, detail: &str) -> Self {
        match status {
            SolveStatus::Infeasible => LmiError::Infeasible(detail.to_string()),
            _ => LmiError::NoSolution(format!("{status:?} ({detail})")),
        }
    }
}

/// Slack above which a phase-one solve certifies infeasibility.
pub const PHASE_ONE_TOL: f64 = 1e-7;

/// Lower and solve with the given backend. A failed solve is followed by a
/// phase-one solve; a positive optimal slack turns the status into Infeasible.
pub fn solve(prob: &LmiProblem, backend: &dyn SdpBackend, opts: &SolverOptions) -> Result<SdpSolution, LmiError> {
    let sdp = lower_to_sdp(prob)?;
    let mut sol = backend.solve(&sdp, opts)?;
    if sol.status.has_solution() || sol.status == SolveStatus::Infeasible {
        return Ok(sol);
    }
    let (p1, t) = prob.phase_one();
    if let Ok(s1) = backend.solve(&lower_to_sdp(&p1)?, opts) {
        let slack = s1.x.get(t.offset).copied().unwrap_or(f64::NAN);
        if s1.status.has_solution() && slack > PHASE_ONE_TOL {
            sol.status = SolveStatus::Infeasible;
            sol.detail = format!("phase-one slack {slack:.3e} > 0 after {}", sol.detail);
        }
    }
    Ok(sol)
}
