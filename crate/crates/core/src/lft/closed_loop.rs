//! Plant, IQC filters and the gains (F_c, H_c) wired into one realization.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::augmented::AugmentedPlant;
use super::plant::UncertaintyStructure;
use super::LftError;
use crate::iqc::{FactoredIQC, IqcKind, ScalingSlot, TriangularFactor};
use crate::ss::linalg::{self, Mat};
use crate::ss::StateSpace;

/// The nonlinearity filters Ψ̄_N,l stacked with a shared state x_NΨ̄.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FilterBank {
    pub a: Mat,
    pub b1: Mat,
    pub b2: Mat,
    /// C_NΨ̄,l over the full filter state (zero outside filter l)
    pub c: Vec<Mat>,
    pub d1: Vec<Mat>,
    pub d2: Vec<Mat>,
    pub state_dims: Vec<usize>,
    pub kinds: Vec<IqcKind>,
}

impl FilterBank {
    pub fn new(filters: &[TriangularFactor], n_u: usize) -> Result<Self, LftError> {
        if filters.is_empty() {
            return Err(LftError::NoFilters);
        }
        let mut expanded = Vec::with_capacity(filters.len());
        for (l, f) in filters.iter().enumerate() {
            let g = if f.m1 == n_u && f.m2 == n_u {
                f.clone()
            } else if f.m1 == 1 && f.m2 == 1 {
                f.repeat(n_u)
            } else {
                return Err(LftError::Dimension(format!("filter {l} has channels ({}, {}), plant has n_u = {n_u}", f.m1, f.m2)));
            };
            check_triangular(&g, l)?;
            expanded.push(g);
        }
        let n_psi: usize = expanded.iter().map(|f| f.n()).sum();
        let a_blocks: Vec<&Mat> = expanded.iter().map(|f| f.a()).collect();
        let a = linalg::block_diag(&a_blocks);
        let b1s: Vec<Mat> = expanded.iter().map(|f| f.b1()).collect();
        let b2s: Vec<Mat> = expanded.iter().map(|f| f.b2()).collect();
        let b1 = linalg::vcat(n_u, &b1s.iter().collect::<Vec<_>>());
        let b2 = linalg::vcat(n_u, &b2s.iter().collect::<Vec<_>>());
        let mut c = Vec::new();
        let mut off = 0;
        for f in &expanded {
            let mut cl = Mat::zeros(n_u, n_psi);
            cl.view_mut((0, off), (n_u, f.n())).copy_from(&f.c1());
            off += f.n();
            c.push(cl);
        }
        Ok(Self {
            a,
            b1,
            b2,
            c,
            d1: expanded.iter().map(|f| f.d11()).collect(),
            d2: expanded.iter().map(|f| f.d12()).collect(),
            state_dims: expanded.iter().map(|f| f.n()).collect(),
            kinds: expanded.iter().map(|f| f.kind).collect(),
        })
    }

    pub fn n_psi(&self) -> usize {
        self.a.nrows()
    }
    pub fn len(&self) -> usize {
        self.c.len()
    }
    pub fn is_empty(&self) -> bool {
        self.c.is_empty()
    }
}

fn check_triangular(f: &TriangularFactor, l: usize) -> Result<(), LftError> {
    let g = &f.psi_bar;
    let (m1, m2) = (f.m1, f.m2);
    let c2 = g.c().rows(m1, m2);
    let d21 = g.d().view((m1, 0), (m2, m1));
    let d22 = g.d().view((m1, m1), (m2, m2));
    let err = c2.norm() + d21.norm() + (d22 - Mat::identity(m2, m2)).norm();
    if err > 1e-8 {
        return Err(LftError::Dimension(format!("filter {l} is not in triangular form (bottom-row error {err:.2e})")));
    }
    Ok(())
}

/// Static uncertainty filters z_Δ1,k = D_ΔΨ̄1,k q + D_ΔΨ̄2,k p, with the
/// block selectors already folded into the n_q-wide matrices.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct UncertaintyFilters {
    pub d1: Vec<Mat>,
    pub d2: Vec<Mat>,
    pub slots: Vec<ScalingSlot>,
    pub offsets: Vec<usize>,
}

impl UncertaintyFilters {
    pub fn new(filters: &[FactoredIQC], n_q: usize) -> Result<Self, LftError> {
        let mut out = Self::default();
        let mut off = 0;
        for (k, f) in filters.iter().enumerate() {
            if !f.psi.is_static() {
                return Err(LftError::Dimension(format!("uncertainty filter {k} must be static")));
            }
            let m = f.m1;
            if f.m2 != m || off + m > n_q {
                return Err(LftError::Dimension(format!("uncertainty filter {k} of width {m} does not fit n_q = {n_q}")));
            }
            let d = f.psi.d();
            let mut sel = Mat::zeros(m, n_q);
            sel.view_mut((0, off), (m, m)).fill_with_identity();
            out.d1.push(d.view((0, 0), (m, m)) * &sel);
            out.d2.push(d.view((0, m), (m, m)) * &sel);
            out.slots.push(f.scaling.unwrap_or(ScalingSlot::Symmetric(m)));
            out.offsets.push(off);
            off += m;
        }
        if off != n_q {
            return Err(LftError::Dimension(format!("uncertainty filters cover {off} channels, plant has n_q = {n_q}")));
        }
        Ok(out)
    }

    pub fn len(&self) -> usize {
        self.d1.len()
    }
    pub fn is_empty(&self) -> bool {
        self.d1.is_empty()
    }
}

/// The gain-independent pieces of the closed-loop realization: every closed-loop block is
/// `base + slot·F_c` or `base + slot·H_c` with the parts below.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OpenLoop {
    pub a0: Mat,
    /// [0; I; B_NΨ̄1], multiplies both F_c and H_c
    pub b_v: Mat,
    pub b_p: Mat,
    /// [−B0; 0; B_NΨ̄2]
    pub b_w: Mat,
    pub b_d: Mat,
    /// q rows over x_cl, kept for evaluating a fixed Δ
    pub c_q: Mat,
    pub d_qp: Mat,
    pub d_qw: Mat,
    pub d_qd: Mat,
    pub c_delta: Vec<Mat>,
    pub d_delta_p: Vec<Mat>,
    pub d_delta_w: Vec<Mat>,
    pub d_delta_d: Vec<Mat>,
    /// [0 0 C_NΨ̄,l]
    pub c_n: Vec<Mat>,
    pub d_n1: Vec<Mat>,
    pub d_n2: Vec<Mat>,
    pub c_e: Mat,
    pub d_ep: Mat,
    pub d_ew: Mat,
    pub d_ed: Mat,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ClosedLoop {
    pub n_x: usize,
    pub n_u: usize,
    pub n_psi: usize,
    pub n_q: usize,
    pub n_d: usize,
    pub n_e: usize,
    pub alpha: f64,
    pub u_bar: DVector<f64>,
    pub structure: UncertaintyStructure,
    pub filters: FilterBank,
    pub unc: UncertaintyFilters,
    pub open: OpenLoop,
    /// (F_c, H_c) when a controller is attached
    pub gains: Option<(Mat, Mat)>,

    pub a_cl: Mat,
    pub b_cl0: Mat,
    pub b_cl1: Mat,
    pub b_cl2: Mat,
    pub c_cl_delta1: Vec<Mat>,
    pub d_cl_delta10: Vec<Mat>,
    pub d_cl_delta11: Vec<Mat>,
    pub d_cl_delta12: Vec<Mat>,
    pub c_cl_n1: Vec<Mat>,
    pub d_cl_n10: Vec<Mat>,
    pub d_cl_n11: Vec<Mat>,
    pub d_cl_n12: Vec<Mat>,
    pub c_cl2: Mat,
    pub d_cl20: Mat,
    pub d_cl21: Mat,
    pub d_cl22: Mat,
}

pub fn attach_filters(
    aug: &AugmentedPlant,
    nonlin_filters: &[TriangularFactor],
    unc_filters: &[FactoredIQC],
    controller: Option<(&Mat, &Mat)>,
) -> Result<ClosedLoop, LftError> {
    let (nx, nu) = (aug.n_x, aug.n_u);
    let (nq, nd, ne) = (aug.c_q.nrows(), aug.b_d.ncols(), aug.c_e.nrows());
    aug.plant.check_well_posed()?;
    let filters = FilterBank::new(nonlin_filters, nu)?;
    let unc = UncertaintyFilters::new(unc_filters, nq)?;
    let np = filters.n_psi();
    let n = nx + nu + np;
    let na = nx + nu;

    let mut a0 = Mat::zeros(n, n);
    a0.view_mut((0, 0), (na, na)).copy_from(&aug.a);
    a0.view_mut((na, na), (np, np)).copy_from(&filters.a);
    let b_v = linalg::vcat(nu, &[&aug.b_v, &filters.b1]);
    let b_p = linalg::vcat(nq, &[&aug.b_p, &Mat::zeros(np, nq)]);
    let b_w = linalg::vcat(nu, &[&aug.b_w, &filters.b2]);
    let b_d = linalg::vcat(nd, &[&aug.b_d, &Mat::zeros(np, nd)]);
    let c_q = linalg::hcat(nq, &[&aug.c_q, &Mat::zeros(nq, np)]);
    let open = OpenLoop {
        a0,
        b_v,
        b_p,
        b_w,
        b_d,
        c_q: c_q.clone(),
        d_qp: aug.d_qp.clone(),
        d_qw: aug.d_qw.clone(),
        d_qd: aug.d_qd.clone(),
        c_delta: unc.d1.iter().map(|d1| d1 * &c_q).collect(),
        d_delta_p: unc.d1.iter().zip(&unc.d2).map(|(d1, d2)| d1 * &aug.d_qp + d2).collect(),
        d_delta_w: unc.d1.iter().map(|d1| d1 * &aug.d_qw).collect(),
        d_delta_d: unc.d1.iter().map(|d1| d1 * &aug.d_qd).collect(),
        c_n: filters.c.iter().map(|c| linalg::hcat(nu, &[&Mat::zeros(nu, na), c])).collect(),
        d_n1: filters.d1.clone(),
        d_n2: filters.d2.clone(),
        c_e: linalg::hcat(ne, &[&aug.c_e, &Mat::zeros(ne, np)]),
        d_ep: aug.d_ep.clone(),
        d_ew: aug.d_ew.clone(),
        d_ed: aug.d_ed.clone(),
    };
    let zero_f = Mat::zeros(nu, n);
    let zero_h = Mat::zeros(nu, nu);
    let (f, h) = controller.unwrap_or((&zero_f, &zero_h));
    let mut cl = ClosedLoop {
        n_x: nx,
        n_u: nu,
        n_psi: np,
        n_q: nq,
        n_d: nd,
        n_e: ne,
        alpha: aug.alpha,
        u_bar: aug.plant.u_bar.clone(),
        structure: aug.plant.structure.clone(),
        filters,
        unc,
        open,
        gains: None,
        a_cl: Mat::zeros(0, 0),
        b_cl0: Mat::zeros(0, 0),
        b_cl1: Mat::zeros(0, 0),
        b_cl2: Mat::zeros(0, 0),
        c_cl_delta1: Vec::new(),
        d_cl_delta10: Vec::new(),
        d_cl_delta11: Vec::new(),
        d_cl_delta12: Vec::new(),
        c_cl_n1: Vec::new(),
        d_cl_n10: Vec::new(),
        d_cl_n11: Vec::new(),
        d_cl_n12: Vec::new(),
        c_cl2: Mat::zeros(0, 0),
        d_cl20: Mat::zeros(0, 0),
        d_cl21: Mat::zeros(0, 0),
        d_cl22: Mat::zeros(0, 0),
    };
    cl.assemble(f, h)?;
    cl.gains = controller.map(|(f, h)| (f.clone(), h.clone()));
    Ok(cl)
}

impl ClosedLoop {
    pub fn n(&self) -> usize {
        self.n_x + self.n_u + self.n_psi
    }

    /// Same interconnection with different gains.
    pub fn with_gains(&self, f: &Mat, h: &Mat) -> Result<ClosedLoop, LftError> {
        let mut out = self.clone();
        out.assemble(f, h)?;
        out.gains = Some((f.clone(), h.clone()));
        Ok(out)
    }

    fn assemble(&mut self, f: &Mat, h: &Mat) -> Result<(), LftError> {
        let (n, nu, nq, nd) = (self.n(), self.n_u, self.n_q, self.n_d);
        if f.shape() != (nu, n) || h.shape() != (nu, nu) {
            return Err(LftError::Dimension(format!(
                "gains F_c {:?} and H_c {:?}, expected ({nu}, {n}) and ({nu}, {nu})",
                f.shape(),
                h.shape()
            )));
        }
        let o = &self.open;
        self.a_cl = &o.a0 + &o.b_v * f;
        self.b_cl0 = o.b_p.clone();
        self.b_cl1 = &o.b_w + &o.b_v * h;
        self.b_cl2 = o.b_d.clone();
        self.c_cl_delta1 = o.c_delta.clone();
        self.d_cl_delta10 = o.d_delta_p.clone();
        self.d_cl_delta11 = o.d_delta_w.clone();
        self.d_cl_delta12 = o.d_delta_d.clone();
        self.c_cl_n1 = o.c_n.iter().zip(&o.d_n1).map(|(c, d1)| c + d1 * f).collect();
        self.d_cl_n10 = o.c_n.iter().map(|_| Mat::zeros(nu, nq)).collect();
        self.d_cl_n11 = o.d_n1.iter().zip(&o.d_n2).map(|(d1, d2)| d1 * h + d2).collect();
        self.d_cl_n12 = o.c_n.iter().map(|_| Mat::zeros(nu, nd)).collect();
        self.c_cl2 = o.c_e.clone();
        self.d_cl20 = o.d_ep.clone();
        self.d_cl21 = o.d_ew.clone();
        self.d_cl22 = o.d_ed.clone();
        Ok(())
    }

    /// Rows of all uncertainty filters stacked: (C, D0, D1, D2).
    pub fn delta_rows(&self) -> (Mat, Mat, Mat, Mat) {
        let n = self.n();
        (
            linalg::vcat(n, &self.c_cl_delta1.iter().collect::<Vec<_>>()),
            linalg::vcat(self.n_q, &self.d_cl_delta10.iter().collect::<Vec<_>>()),
            linalg::vcat(self.n_u, &self.d_cl_delta11.iter().collect::<Vec<_>>()),
            linalg::vcat(self.n_d, &self.d_cl_delta12.iter().collect::<Vec<_>>()),
        )
    }

    /// Rows of all nonlinearity filters stacked: (C, D0, D1, D2).
    pub fn nonlin_rows(&self) -> (Mat, Mat, Mat, Mat) {
        let n = self.n();
        (
            linalg::vcat(n, &self.c_cl_n1.iter().collect::<Vec<_>>()),
            linalg::vcat(self.n_q, &self.d_cl_n10.iter().collect::<Vec<_>>()),
            linalg::vcat(self.n_u, &self.d_cl_n11.iter().collect::<Vec<_>>()),
            linalg::vcat(self.n_d, &self.d_cl_n12.iter().collect::<Vec<_>>()),
        )
    }

    pub fn poles(&self) -> Result<Vec<num_complex::Complex64>, LftError> {
        Ok(linalg::eigenvalues(&self.a_cl)?)
    }

    /// Closed loop from d to e for a fixed constant Δ with the dead zone removed (w = 0).
    pub fn linear_d_to_e(&self, delta: &Mat) -> Result<StateSpace, LftError> {
        let nq = self.n_q;
        if delta.shape() != (nq, nq) {
            return Err(LftError::Dimension(format!("Δ is {:?}, expected ({nq}, {nq})", delta.shape())));
        }
        let n = self.n();
        let o = &self.open;
        // p = Δ(C_q x + D01 p + D02 d)  ⇒  p = (I − ΔD01)⁻¹Δ(C_q x + D02 d)
        let lhs = Mat::identity(nq, nq) - delta * &o.d_qp;
        let k = lhs.try_inverse().ok_or_else(|| LftError::NotWellPosed("I − ΔD01 singular".into()))? * delta;
        let px = &k * &o.c_q;
        let pd = &k * &o.d_qd;
        let a = &self.a_cl + &self.b_cl0 * &px;
        let b = &self.b_cl2 + &self.b_cl0 * &pd;
        let c = &self.c_cl2 + &self.d_cl20 * &px;
        let d = &self.d_cl22 + &self.d_cl20 * &pd;
        debug_assert_eq!(a.nrows(), n);
        Ok(StateSpace::new(a, b, c, d)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::iqc::*;
    use crate::lft::augmented::tests::second_order;
    use crate::lft::loop_transform;

    fn filters(alpha: f64) -> Vec<TriangularFactor> {
        let opts = FactorOptions::default();
        [
            make_popov_multiplier(alpha, 0.01).unwrap(),
            make_zames_falb_multiplier(alpha, 0.01, &default_zf_filter()).unwrap(),
            make_loop_sector_multiplier(alpha, 0.01).unwrap(),
        ]
        .iter()
        .map(|m| to_triangular(&j_spectral_factorize(m, &opts).unwrap()).unwrap())
        .collect()
    }

    fn unc() -> Vec<FactoredIQC> {
        vec![make_uncertainty_iqc(UncertaintyBlock::RepeatedScalar(1), 1.0).unwrap()]
    }

    #[test]
    fn stacked_filter_bank() {
        let aug = loop_transform(&second_order(2.0)).unwrap();
        let fs = filters(2.0);
        let cl = attach_filters(&aug, &fs, &unc(), None).unwrap();
        let dims: Vec<usize> = fs.iter().map(|f| f.n()).collect();
        assert_eq!(cl.n_psi, dims.iter().sum::<usize>());
        assert_eq!(cl.n(), 3 + cl.n_psi);
        // block-diagonal filter A inside A_cl, zero gains
        let mut off = 3;
        for f in &fs {
            let blk = cl.a_cl.view((off, off), (f.n(), f.n()));
            assert_eq!(blk, f.a().view((0, 0), (f.n(), f.n())));
            off += f.n();
        }
        assert_eq!(cl.a_cl.view((0, 0), (3, 3)), aug.a.view((0, 0), (3, 3)));
        assert!(cl.a_cl.view((0, 3), (3, cl.n_psi)).iter().all(|&x| x == 0.0));
    }

    #[test]
    fn zero_controller_identities() {
        let aug = loop_transform(&second_order(2.0)).unwrap();
        let fs = vec![to_triangular(
            &j_spectral_factorize(&make_sector_multiplier(0.01).unwrap(), &FactorOptions::default()).unwrap(),
        )
        .unwrap()];
        let cl = attach_filters(&aug, &fs, &unc(), None).unwrap();
        assert_eq!(cl.n_psi, 0);
        assert_eq!(cl.a_cl, aug.a);
        assert_eq!(cl.d_cl_n11[0], fs[0].d12());
        assert_eq!(cl.d_cl_delta10[0], Mat::from_element(1, 1, 0.0));
        assert_eq!(cl.d_cl_delta11[0], Mat::from_element(1, 1, -0.3));
        assert_eq!(cl.d_cl_delta12[0], Mat::from_element(1, 1, 1.0));
    }

    #[test]
    fn gains_enter_verbatim() {
        let aug = loop_transform(&second_order(2.0)).unwrap();
        let fs = filters(2.0);
        let cl0 = attach_filters(&aug, &fs, &unc(), None).unwrap();
        let n = cl0.n();
        let f = Mat::from_fn(1, n, |_, j| 0.1 * (j as f64 + 1.0));
        let h = Mat::from_element(1, 1, 0.6536);
        let cl = cl0.with_gains(&f, &h).unwrap();
        let o = &cl.open;
        assert!((&cl.a_cl - (&o.a0 + &o.b_v * &f)).norm() < 1e-15);
        assert!((&cl.b_cl1 - (&o.b_w + &o.b_v * &h)).norm() < 1e-15);
        for l in 0..fs.len() {
            assert!(cl.d_cl_n10[l].iter().all(|&x| x == 0.0));
            assert!(cl.d_cl_n12[l].iter().all(|&x| x == 0.0));
            assert!((&cl.d_cl_n11[l] - (&o.d_n1[l] * &h + &o.d_n2[l])).norm() < 1e-15);
        }
        assert_eq!(cl.d_cl20, aug.d_ep);
        assert_eq!(cl.d_cl21, -&aug.plant.d10);
        assert_eq!(cl.d_cl22, aug.plant.d12);
        // u-row of A_cl is −α e_u + F_c
        assert!((cl.a_cl[(2, 2)] - (-2.0 + f[(0, 2)])).abs() < 1e-15);
        assert!(cl0.with_gains(&Mat::zeros(1, n + 1), &h).is_err());
    }

    #[test]
    fn rejects_missing_filters_and_bad_widths() {
        let aug = loop_transform(&second_order(2.0)).unwrap();
        assert_eq!(attach_filters(&aug, &[], &unc(), None).unwrap_err(), LftError::NoFilters);
        let wide = vec![make_uncertainty_iqc(UncertaintyBlock::RepeatedScalar(2), 1.0).unwrap()];
        assert!(attach_filters(&aug, &filters(2.0), &wide, None).is_err());
    }

    #[test]
    fn fixed_delta_loop() {
        let aug = loop_transform(&second_order(2.0)).unwrap();
        let cl = attach_filters(&aug, &filters(2.0), &unc(), None).unwrap();
        let g = cl.linear_d_to_e(&Mat::from_element(1, 1, 0.5)).unwrap();
        assert_eq!(g.n(), cl.n());
        // Δ = 0 leaves the nominal d → e channel
        let g0 = cl.linear_d_to_e(&Mat::zeros(1, 1)).unwrap();
        assert_eq!(g0.a(), &cl.a_cl);
    }
}
