//! Time-domain check of the hard IQC ∫₀ᵀ zᵀWz dt ≥ 0.

use nalgebra::DVector;

use super::factor::FactoredIQC;
use crate::ss::linalg::Mat;
use crate::ss::StateSpace;

/// Sampled (v, w) pair on a uniform grid.
#[derive(Clone, Debug)]
pub struct ProbeSignal {
    pub dt: f64,
    pub v: Vec<DVector<f64>>,
    pub w: Vec<DVector<f64>>,
}

impl ProbeSignal {
    /// Sample scalar functions v(t), w(t) on [0, horizon].
    pub fn from_fn(dt: f64, horizon: f64, v: impl Fn(f64) -> f64, w: impl Fn(f64) -> f64) -> Self {
        let steps = (horizon / dt).round() as usize;
        let t = |k: usize| k as f64 * dt;
        Self {
            dt,
            v: (0..=steps).map(|k| DVector::from_element(1, v(t(k)))).collect(),
            w: (0..=steps).map(|k| DVector::from_element(1, w(t(k)))).collect(),
        }
    }

    fn input(&self, k: usize) -> DVector<f64> {
        let mut u = DVector::zeros(self.v[k].len() + self.w[k].len());
        u.rows_mut(0, self.v[k].len()).copy_from(&self.v[k]);
        u.rows_mut(self.v[k].len(), self.w[k].len()).copy_from(&self.w[k]);
        u
    }
}

/// Running integral ∫₀^{t_k} zᵀWz along the probe, filter started at rest.
/// Inputs are linearly interpolated inside each RK4 step.
pub fn running_integral(psi: &StateSpace, wmat: &Mat, probe: &ProbeSignal) -> Vec<f64> {
    let len = probe.v.len().min(probe.w.len());
    let mut out = Vec::with_capacity(len);
    if len == 0 {
        return out;
    }
    let h = probe.dt;
    let f = |x: &DVector<f64>, u: &DVector<f64>| psi.a() * x + psi.b() * u;
    let q = |x: &DVector<f64>, u: &DVector<f64>| {
        let z = psi.c() * x + psi.d() * u;
        z.dot(&(wmat * &z))
    };
    let mut x = DVector::zeros(psi.n());
    let mut u0 = probe.input(0);
    let mut q0 = q(&x, &u0);
    let mut acc = 0.0;
    out.push(0.0);
    for k in 1..len {
        let u1 = probe.input(k);
        let um = (&u0 + &u1) * 0.5;
        let k1 = f(&x, &u0);
        let k2 = f(&(&x + &k1 * (h / 2.0)), &um);
        let k3 = f(&(&x + &k2 * (h / 2.0)), &um);
        let k4 = f(&(&x + &k3 * h), &u1);
        x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        let q1 = q(&x, &u1);
        acc += 0.5 * h * (q0 + q1);
        out.push(acc);
        u0 = u1;
        q0 = q1;
    }
    out
}

/// True iff the truncated integral stays ≥ −1e−6 for every T ≤ horizon.
pub fn check_hard_iqc(f: &FactoredIQC, probe: &ProbeSignal, horizon: f64) -> bool {
    let samples = ((horizon / probe.dt).floor() as usize + 1).min(probe.v.len());
    let trimmed = ProbeSignal { dt: probe.dt, v: probe.v[..samples].to_vec(), w: probe.w[..samples].to_vec() };
    running_integral(&f.psi, &f.w.matrix(), &trimmed).iter().all(|&s| s >= -1e-6)
}
