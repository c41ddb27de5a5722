//! Shared inputs for the criterion benches.

use std::path::PathBuf;

use satiqc_core::config::ProblemConfig;

/// Load one of the shipped configs by name.
pub fn config(name: &str) -> ProblemConfig {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(format!("{name}.json"));
    ProblemConfig::load(&path).expect("shipped config loads")
}
