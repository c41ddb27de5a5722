//! IQC multipliers, J-spectral factors and their triangular form.

pub mod factor;
pub mod hard;
pub mod multiplier;
pub mod triangular;
pub mod uncertainty;

use thiserror::Error;

use crate::ss::SsError;

pub use factor::{congruence_factor, j_spectral_factorize, FactorOptions, FactoredIQC, ScalingSlot};
pub use hard::{check_hard_iqc, ProbeSignal};
pub use multiplier::{
    default_zf_filter, l1_norm, make_loop_sector_multiplier, make_popov_multiplier, make_sector_multiplier,
    make_zames_falb_multiplier, IqcKind, Multiplier,
};
pub use triangular::{to_triangular, TriangularFactor};
pub use uncertainty::{make_uncertainty_iqc, UncertaintyBlock};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IqcError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("not J-factorizable: {0}")]
    NotFactorizable(String),
    #[error("L1 bound violated: ‖h‖₁ = {0:.6} > 1")]
    L1BoundViolated(f64),
    #[error("Zames–Falb filter is unstable")]
    UnstableFilter,
    #[error("Ψ22 feedthrough is singular")]
    SingularFeedthrough,
    #[error(transparent)]
    Ss(#[from] SsError),
}
