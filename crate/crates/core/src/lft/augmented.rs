//! Loop transformation u̇ = −αu + v with the saturation rewritten as Sat(u) = u − w.

use serde::{Deserialize, Serialize};

use super::plant::SaturatedLFTPlant;
use super::LftError;
use crate::ss::linalg::{self, Mat};
use crate::ss::StateSpace;

/// Realization with state x = [x_p; u], inputs (p, w, d, v), outputs (q, e).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AugmentedPlant {
    pub a: Mat,
    pub b_p: Mat,
    pub b_w: Mat,
    pub b_d: Mat,
    pub b_v: Mat,
    pub c_q: Mat,
    pub d_qp: Mat,
    pub d_qw: Mat,
    pub d_qd: Mat,
    pub c_e: Mat,
    pub d_ep: Mat,
    pub d_ew: Mat,
    pub d_ed: Mat,
    pub n_x: usize,
    pub n_u: usize,
    pub alpha: f64,
    pub plant: SaturatedLFTPlant,
}

pub fn loop_transform(plant: &SaturatedLFTPlant) -> Result<AugmentedPlant, LftError> {
    plant.validate()?;
    let (nx, nu, nq, nd, ne) = (plant.n_x(), plant.n_u(), plant.n_q(), plant.n_d(), plant.n_e());
    let n = nx + nu;
    let mut a = Mat::zeros(n, n);
    a.view_mut((0, 0), (nx, nx)).copy_from(&plant.a);
    a.view_mut((0, nx), (nx, nu)).copy_from(&plant.b0);
    a.view_mut((nx, nx), (nu, nu)).copy_from(&(Mat::identity(nu, nu) * -plant.alpha));
    let lower = |top: &Mat, cols: usize| linalg::vcat(cols, &[top, &Mat::zeros(nu, cols)]);
    let aug = AugmentedPlant {
        a,
        b_p: lower(&plant.b1, nq),
        b_w: lower(&(-&plant.b0), nu),
        b_d: lower(&plant.b2, nd),
        b_v: linalg::vcat(nu, &[&Mat::zeros(nx, nu), &Mat::identity(nu, nu)]),
        c_q: linalg::hcat(nq, &[&plant.c0, &plant.d00]),
        d_qp: plant.d01.clone(),
        d_qw: -&plant.d00,
        d_qd: plant.d02.clone(),
        c_e: linalg::hcat(ne, &[&plant.c1, &plant.d10]),
        d_ep: plant.d11.clone(),
        d_ew: -&plant.d10,
        d_ed: plant.d12.clone(),
        n_x: nx,
        n_u: nu,
        alpha: plant.alpha,
        plant: plant.clone(),
    };
    Ok(aug)
}

impl AugmentedPlant {
    pub fn n(&self) -> usize {
        self.n_x + self.n_u
    }

    /// The full block realization with inputs (p, w, d, v) and outputs (q, e);
    /// v has zero feedthrough to both outputs.
    pub fn as_state_space(&self) -> StateSpace {
        let n = self.n();
        let (nq, ne) = (self.c_q.nrows(), self.c_e.nrows());
        let nv = self.n_u;
        let b = linalg::hcat(n, &[&self.b_p, &self.b_w, &self.b_d, &self.b_v]);
        let c = linalg::vcat(n, &[&self.c_q, &self.c_e]);
        let dq = linalg::hcat(nq, &[&self.d_qp, &self.d_qw, &self.d_qd, &Mat::zeros(nq, nv)]);
        let de = linalg::hcat(ne, &[&self.d_ep, &self.d_ew, &self.d_ed, &Mat::zeros(ne, nv)]);
        let d = linalg::vcat(b.ncols(), &[&dq, &de]);
        StateSpace::new(self.a.clone(), b, c, d).expect("augmented blocks are consistent")
    }
}
