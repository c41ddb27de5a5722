//! Static IQCs for the norm-bounded uncertainty blocks.

use serde::{Deserialize, Serialize};

use super::factor::{FactorDiagnostics, FactoredIQC, ScalingSlot};
use super::multiplier::IqcKind;
use super::IqcError;
use crate::ss::linalg::{block_diag, Mat};
use crate::ss::{SignatureMatrix, StateSpace};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UncertaintyBlock {
    /// δ·I_m with scalar δ
    RepeatedScalar(usize),
    /// full r×r block
    Full(usize),
}

impl UncertaintyBlock {
    pub fn size(&self) -> usize {
        match *self {
            UncertaintyBlock::RepeatedScalar(m) | UncertaintyBlock::Full(m) => m,
        }
    }
}

/// Ψ_Δ = diag(b·I, I) with W = diag(X, −X) for a repeated scalar block or
/// diag(χI, −χI) for a full block. Only the structure is recorded here.
pub fn make_uncertainty_iqc(block: UncertaintyBlock, b: f64) -> Result<FactoredIQC, IqcError> {
    if b <= 0.0 || !b.is_finite() {
        return Err(IqcError::InvalidParameter(format!("uncertainty bound must be positive, got {b}")));
    }
    let m = block.size();
    if m == 0 {
        return Err(IqcError::InvalidParameter("uncertainty block of size 0".into()));
    }
    let psi = StateSpace::static_gain(block_diag(&[&(Mat::identity(m, m) * b), &Mat::identity(m, m)]));
    let (kind, scaling) = match block {
        UncertaintyBlock::RepeatedScalar(_) => (IqcKind::UncertaintyScalar, ScalingSlot::Symmetric(m)),
        UncertaintyBlock::Full(_) => (IqcKind::UncertaintyFull, ScalingSlot::Scalar(m)),
    };
    Ok(FactoredIQC {
        psi,
        w: SignatureMatrix::new(m, m),
        m1: m,
        m2: m,
        kind,
        scaling: Some(scaling),
        diagnostics: FactorDiagnostics::default(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_unit_bound() {
        let f = make_uncertainty_iqc(UncertaintyBlock::RepeatedScalar(1), 1.0).unwrap();
        assert!(f.psi.is_static());
        assert_eq!(f.psi.d(), &Mat::identity(2, 2));
        assert_eq!(f.kind, IqcKind::UncertaintyScalar);
    }

    #[test]
    fn full_block() {
        let f = make_uncertainty_iqc(UncertaintyBlock::Full(2), 0.5).unwrap();
        let want = block_diag(&[&(Mat::identity(2, 2) * 0.5), &Mat::identity(2, 2)]);
        assert_eq!(f.psi.d(), &want);
        assert_eq!(f.scaling, Some(ScalingSlot::Scalar(2)));
    }

    #[test]
    fn repeated_slot() {
        let f = make_uncertainty_iqc(UncertaintyBlock::RepeatedScalar(3), 1.0).unwrap();
        assert_eq!(f.scaling, Some(ScalingSlot::Symmetric(3)));
        assert!(make_uncertainty_iqc(UncertaintyBlock::Full(1), 0.0).is_err());
    }
}
