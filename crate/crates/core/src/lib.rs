//! Mixed-IQC robust state-feedback synthesis for uncertain plants with
//! input saturation.

extern crate openblas_src as _;

pub mod config;
pub mod iqc;
pub mod lft;
pub mod lmi;
pub mod sim;
pub mod ss;

pub use nalgebra;
pub use ss::{SignatureMatrix, SsError, StateSpace};
