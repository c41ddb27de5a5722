//! Nonlinear closed-loop simulation, empirical gains and trajectory checks.

pub mod engine;
pub mod metrics;
pub mod scenario;

use thiserror::Error;

use crate::lft::LftError;

pub use engine::{max_delta_norm, simulate, simulate_static, SimTrace, DIVERGENCE_NORM};
pub use metrics::{
    check_dissipation, check_dissipation_with, empirical_l2_gain, nonlinearity_iqc_integrals, DissipationCheck,
};
pub use scenario::{Scenario, Signal, DEFAULT_STEP};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("uncertainty realization leaves the admissible set at t = {t}: ‖Δ‖ = {norm} > {bound}")]
    InadmissibleUncertainty { t: f64, norm: f64, bound: f64 },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("interconnection not well posed: {0}")]
    NotWellPosed(String),
    #[error("disturbance has zero energy")]
    ZeroDisturbance,
    #[error("empirical gain needs a zero initial state")]
    NonzeroInitialState,
    #[error("missing channels: {0}")]
    MissingChannels(String),
    #[error("io: {0}")]
    Io(String),
    #[error(transparent)]
    Lft(#[from] LftError),
}
