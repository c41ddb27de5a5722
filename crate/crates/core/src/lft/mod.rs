//! Saturated uncertain LFT plants, loop transformation and closed-loop assembly.

pub mod augmented;
pub mod closed_loop;
pub mod plant;

use thiserror::Error;

use crate::iqc::IqcError;
use crate::ss::SsError;

pub use augmented::{loop_transform, AugmentedPlant};
pub use closed_loop::{attach_filters, ClosedLoop, FilterBank, OpenLoop, UncertaintyFilters};
pub use plant::{deadzone, saturate, stabilizable, SaturatedLFTPlant, UncertaintyStructure};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LftError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("interconnection not well posed: {0}")]
    NotWellPosed(String),
    #[error("at least one nonlinearity filter is required")]
    NoFilters,
    #[error(transparent)]
    Iqc(#[from] IqcError),
    #[error(transparent)]
    Ss(#[from] SsError),
}
