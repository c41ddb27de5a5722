//! Uncertain LFT plant with input saturation.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::LftError;
use crate::iqc::UncertaintyBlock;
use crate::ss::linalg::{self, Mat};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyStructure {
    /// multiplicities of the repeated scalar blocks δ_i I
    pub scalar_blocks: Vec<usize>,
    /// sizes of the full blocks
    pub full_blocks: Vec<usize>,
    /// common norm bound b
    pub bound: f64,
}

impl UncertaintyStructure {
    pub fn empty() -> Self {
        Self { scalar_blocks: Vec::new(), full_blocks: Vec::new(), bound: 1.0 }
    }

    pub fn n_q(&self) -> usize {
        self.scalar_blocks.iter().sum::<usize>() + self.full_blocks.iter().sum::<usize>()
    }

    /// Blocks in diagonal order: repeated scalars first, then full blocks.
    pub fn blocks(&self) -> Vec<UncertaintyBlock> {
        self.scalar_blocks
            .iter()
            .map(|&m| UncertaintyBlock::RepeatedScalar(m))
            .chain(self.full_blocks.iter().map(|&r| UncertaintyBlock::Full(r)))
            .collect()
    }

    /// Row offset of each block inside q.
    pub fn offsets(&self) -> Vec<usize> {
        let mut off = 0;
        self.blocks()
            .iter()
            .map(|b| {
                let o = off;
                off += b.size();
                o
            })
            .collect()
    }

    pub fn validate(&self) -> Result<(), LftError> {
        if self.n_q() > 0 && !(self.bound > 0.0 && self.bound.is_finite()) {
            return Err(LftError::InvalidParameter(format!("uncertainty bound must be positive, got {}", self.bound)));
        }
        if self.scalar_blocks.iter().chain(&self.full_blocks).any(|&m| m == 0) {
            return Err(LftError::InvalidParameter("uncertainty block of size 0".into()));
        }
        Ok(())
    }
}

/// ẋ = A x + B0 Sat(u) + B1 p + B2 d,  q = C0 x + D00 Sat(u) + D01 p + D02 d,
/// e = C1 x + D10 Sat(u) + D11 p + D12 d,  p = Δ q.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SaturatedLFTPlant {
    pub a: Mat,
    pub b0: Mat,
    pub b1: Mat,
    pub b2: Mat,
    pub c0: Mat,
    pub d00: Mat,
    pub d01: Mat,
    pub d02: Mat,
    pub c1: Mat,
    pub d10: Mat,
    pub d11: Mat,
    pub d12: Mat,
    pub structure: UncertaintyStructure,
    pub u_bar: DVector<f64>,
    pub alpha: f64,
}

fn expect_shape(name: &str, m: &Mat, r: usize, c: usize) -> Result<(), LftError> {
    if m.shape() != (r, c) {
        return Err(LftError::Dimension(format!("{name} is {}x{}, expected {r}x{c}", m.nrows(), m.ncols())));
    }
    Ok(())
}

impl SaturatedLFTPlant {
    pub fn n_x(&self) -> usize {
        self.a.nrows()
    }
    pub fn n_u(&self) -> usize {
        self.b0.ncols()
    }
    pub fn n_q(&self) -> usize {
        self.c0.nrows()
    }
    pub fn n_d(&self) -> usize {
        self.b2.ncols()
    }
    pub fn n_e(&self) -> usize {
        self.c1.nrows()
    }

    pub fn validate(&self) -> Result<(), LftError> {
        let (nx, nu, nq, nd, ne) = (self.a.nrows(), self.b0.ncols(), self.b1.ncols(), self.b2.ncols(), self.c1.nrows());
        expect_shape("A", &self.a, nx, nx)?;
        expect_shape("B0", &self.b0, nx, nu)?;
        expect_shape("B1", &self.b1, nx, nq)?;
        expect_shape("B2", &self.b2, nx, nd)?;
        expect_shape("C0", &self.c0, nq, nx)?;
        expect_shape("D00", &self.d00, nq, nu)?;
        expect_shape("D01", &self.d01, nq, nq)?;
        expect_shape("D02", &self.d02, nq, nd)?;
        expect_shape("C1", &self.c1, ne, nx)?;
        expect_shape("D10", &self.d10, ne, nu)?;
        expect_shape("D11", &self.d11, ne, nq)?;
        expect_shape("D12", &self.d12, ne, nd)?;
        if self.u_bar.len() != nu {
            return Err(LftError::Dimension(format!("u_bar has length {}, expected {nu}", self.u_bar.len())));
        }
        if self.u_bar.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
            return Err(LftError::InvalidParameter("u_bar must be positive".into()));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(LftError::InvalidParameter(format!("alpha must be positive, got {}", self.alpha)));
        }
        self.structure.validate()?;
        if self.structure.n_q() != nq {
            return Err(LftError::Dimension(format!("uncertainty structure covers {} channels, plant has n_q = {nq}", self.structure.n_q())));
        }
        self.check_well_posed()
    }

    /// I − Δ D01 invertible for every ‖Δ‖ ≤ b, via the small-gain bound b‖D01‖ < 1.
    pub fn check_well_posed(&self) -> Result<(), LftError> {
        if self.n_q() == 0 {
            return Ok(());
        }
        let gain = self.structure.bound * self.d01.clone().singular_values().max();
        if gain >= 1.0 {
            return Err(LftError::NotWellPosed(format!("b·‖D01‖ = {gain:.4} ≥ 1")));
        }
        Ok(())
    }

    /// Standing-assumption diagnostics (stable A, stabilizable (A, [B1 B0])); empty when satisfied.
    pub fn assumption_warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        match linalg::is_hurwitz(&self.a, 0.0) {
            Ok(true) => {}
            Ok(false) => out.push("A is not Hurwitz".to_string()),
            Err(e) => out.push(format!("eigenvalues of A failed: {e}")),
        }
        let b = linalg::hcat(self.n_x(), &[&self.b1, &self.b0]);
        if !stabilizable(&self.a, &b) {
            out.push("(A, [B1 B0]) is not stabilizable".to_string());
        }
        for w in &out {
            log::warn!("{w}");
        }
        out
    }
}

/// PBH test on the closed right half-plane eigenvalues.
pub fn stabilizable(a: &Mat, b: &Mat) -> bool {
    let n = a.nrows();
    let Ok(eig) = linalg::eigenvalues(a) else { return false };
    for lam in eig.into_iter().filter(|z| z.re >= 0.0) {
        let mut m = linalg::to_complex(&linalg::hcat(n, &[a, b]));
        for i in 0..n {
            m[(i, i)] -= lam;
        }
        let sv = m.singular_values();
        if sv.min() <= 1e-10 * (1.0 + sv.max()) {
            return false;
        }
    }
    true
}

/// N(u) = u − Sat(u) componentwise.
pub fn deadzone(u: &DVector<f64>, u_bar: &DVector<f64>) -> Result<DVector<f64>, LftError> {
    if u.len() != u_bar.len() {
        return Err(LftError::Dimension(format!("u has length {}, u_bar has {}", u.len(), u_bar.len())));
    }
    Ok(DVector::from_fn(u.len(), |i, _| u[i] - u[i].clamp(-u_bar[i], u_bar[i])))
}

pub fn saturate(u: &DVector<f64>, u_bar: &DVector<f64>) -> DVector<f64> {
    DVector::from_fn(u.len(), |i, _| u[i].clamp(-u_bar[i], u_bar[i]))
}
