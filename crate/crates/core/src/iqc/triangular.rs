//! Conversion of a factor Ψ to the upper-triangular form Ψ̄ = [[Ψ̄11, Ψ̄12],[0, I]].

use serde::{Deserialize, Serialize};

use super::factor::FactoredIQC;
use super::multiplier::IqcKind;
use super::IqcError;
use crate::ss::linalg::{self, Mat};
use crate::ss::minreal::{minimal_realization, DEFAULT_MINREAL_TOL};
use crate::ss::StateSpace;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TriangularFactor {
    pub psi_bar: StateSpace,
    pub m1: usize,
    pub m2: usize,
    pub kind: IqcKind,
}

impl TriangularFactor {
    pub fn n(&self) -> usize {
        self.psi_bar.n()
    }
    pub fn a(&self) -> &Mat {
        self.psi_bar.a()
    }
    /// input matrix of the first channel (v)
    pub fn b1(&self) -> Mat {
        self.psi_bar.b().columns(0, self.m1).into_owned()
    }
    /// input matrix of the second channel (w)
    pub fn b2(&self) -> Mat {
        self.psi_bar.b().columns(self.m1, self.m2).into_owned()
    }
    pub fn c1(&self) -> Mat {
        self.psi_bar.c().rows(0, self.m1).into_owned()
    }
    pub fn d11(&self) -> Mat {
        self.psi_bar.d().view((0, 0), (self.m1, self.m1)).into_owned()
    }
    pub fn d12(&self) -> Mat {
        self.psi_bar.d().view((0, self.m1), (self.m1, self.m2)).into_owned()
    }
    /// Ψ̄11
    pub fn psi11(&self) -> StateSpace {
        let rows: Vec<usize> = (0..self.m1).collect();
        self.psi_bar.select(&rows, &rows)
    }
    /// Ψ̄12
    pub fn psi12(&self) -> StateSpace {
        let rows: Vec<usize> = (0..self.m1).collect();
        let cols: Vec<usize> = (self.m1..self.m1 + self.m2).collect();
        self.psi_bar.select(&rows, &cols)
    }

    /// Ψ̄ ⊗ I_k: the same scalar factor applied to k channels, channel order
    /// (v_1..v_k, w_1..w_k).
    pub fn repeat(&self, k: usize) -> TriangularFactor {
        if k == 1 {
            return self.clone();
        }
        let i = Mat::identity(k, k);
        let g = &self.psi_bar;
        let psi_bar = StateSpace::new(
            linalg::kron(g.a(), &i),
            linalg::kron(g.b(), &i),
            linalg::kron(g.c(), &i),
            linalg::kron(g.d(), &i),
        )
        .expect("Kronecker expansion keeps dimensions consistent");
        TriangularFactor { psi_bar, m1: self.m1 * k, m2: self.m2 * k, kind: self.kind }
    }
}

pub fn to_triangular(f: &FactoredIQC) -> Result<TriangularFactor, IqcError> {
    let (m1, m2) = (f.m1, f.m2);
    let psi = &f.psi;
    let n = psi.n();
    let b1 = psi.b().columns(0, m1).into_owned();
    let b2 = psi.b().columns(m1, m2).into_owned();
    let c1 = psi.c().rows(0, m1).into_owned();
    let c2 = psi.c().rows(m1, m2).into_owned();
    let d = psi.d();
    let d11 = d.view((0, 0), (m1, m1)).into_owned();
    let d12 = d.view((0, m1), (m1, m2)).into_owned();
    let d21 = d.view((m1, 0), (m2, m1)).into_owned();
    let d22 = d.view((m1, m1), (m2, m2)).into_owned();
    if linalg::rcond(&d22) < 1e-13 {
        return Err(IqcError::SingularFeedthrough);
    }
    let d22i = d22.try_inverse().ok_or(IqcError::SingularFeedthrough)?;

    let a_bar = psi.a() - &b2 * &d22i * &c2;
    let b_bar1 = &b1 - &b2 * &d22i * &d21;
    let b_bar2 = &b2 * &d22i;
    let c_bar = &c1 - &d12 * &d22i * &c2;
    let d_bar1 = &d11 - &d12 * &d22i * &d21;
    let d_bar2 = &d12 * &d22i;

    let b = linalg::hcat(n, &[&b_bar1, &b_bar2]);
    let c = linalg::vcat(n, &[&c_bar, &Mat::zeros(m2, n)]);
    let top = linalg::hcat(m1, &[&d_bar1, &d_bar2]);
    let bottom = linalg::hcat(m2, &[&Mat::zeros(m2, m1), &Mat::identity(m2, m2)]);
    let dd = linalg::vcat(m1 + m2, &[&top, &bottom]);
    let full = StateSpace::new(a_bar, b, c, dd)?;
    let reduced = minimal_realization(&full, DEFAULT_MINREAL_TOL);

    // pin the bottom block to exactly [0, I]
    let mut c = reduced.c().clone();
    c.rows_mut(m1, m2).fill(0.0);
    let mut dd = reduced.d().clone();
    dd.view_mut((m1, 0), (m2, m1 + m2)).copy_from(&bottom);
    let psi_bar = StateSpace::new(reduced.a().clone(), reduced.b().clone(), c, dd)?;
    Ok(TriangularFactor { psi_bar, m1, m2, kind: f.kind })
}
