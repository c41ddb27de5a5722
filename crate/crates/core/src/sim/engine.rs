//! Fixed-step RK4 on the saturated closed loop.

use std::io::Write;
use std::path::Path;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::scenario::Scenario;
use super::SimError;
use crate::lft::{deadzone, ClosedLoop, SaturatedLFTPlant, UncertaintyStructure};
use crate::ss::linalg::{self, Mat};

/// State norm past which a run is declared divergent.
pub const DIVERGENCE_NORM: f64 = 1e9;

type Vec64 = DVector<f64>;

/// Signals recorded at every grid point. `x_cl` is [x_p; u; ψ] for the IQC
/// loop and x_p for the static anti-windup loop.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct SimTrace {
    pub t: Vec<f64>,
    pub x_p: Vec<Vec64>,
    pub u: Vec<Vec64>,
    pub sat_u: Vec<Vec64>,
    pub w: Vec<Vec64>,
    pub p: Vec<Vec64>,
    pub q: Vec<Vec64>,
    pub e: Vec<Vec64>,
    pub d: Vec<Vec64>,
    pub psi: Vec<Vec64>,
    /// uncertainty filter outputs, stacked over blocks
    pub z_delta: Vec<Vec64>,
    /// first channel of every nonlinearity filter output, stacked over filters;
    /// the second channel is w
    pub z_n: Vec<Vec64>,
    pub x_cl: Vec<Vec64>,
    pub x_cl_dot: Vec<Vec64>,
    pub diverged: bool,
}

/// Everything the loop produces at one (t, x).
struct Sample {
    u: Vec64,
    sat_u: Vec64,
    w: Vec64,
    p: Vec64,
    q: Vec64,
    e: Vec64,
    d: Vec64,
    z_delta: Vec64,
    z_n: Vec64,
    xdot: Vec64,
}

trait Dynamics {
    fn x0(&self, sc: &Scenario) -> Vec64;
    fn eval(&self, t: f64, x: &Vec64, sc: &Scenario) -> Result<Sample, SimError>;
    fn n_x(&self) -> usize;
    fn n_u(&self) -> usize;
}

/// p = Δq with q = q₀ + D01 p  ⇒  p = (I − ΔD01)⁻¹Δq₀
fn close_delta(delta: &Mat, d01: &Mat, q0: &Vec64) -> Result<Vec64, SimError> {
    let nq = q0.len();
    if nq == 0 {
        return Ok(Vec64::zeros(0));
    }
    let lhs = Mat::identity(nq, nq) - delta * d01;
    lhs.lu().solve(&(delta * q0)).ok_or_else(|| SimError::NotWellPosed("I − ΔD01 is singular".into()))
}

struct IqcLoop<'a> {
    cl: &'a ClosedLoop,
    theta: (Mat, Mat, Mat, Mat),
    xi: (Mat, Mat, Mat, Mat),
}

impl Dynamics for IqcLoop<'_> {
    fn x0(&self, sc: &Scenario) -> Vec64 {
        let mut x = Vec64::zeros(self.cl.n());
        x.rows_mut(0, self.cl.n_x).copy_from(&sc.x0_vec(self.cl.n_x));
        x
    }

    fn eval(&self, t: f64, x: &Vec64, sc: &Scenario) -> Result<Sample, SimError> {
        let cl = self.cl;
        let o = &cl.open;
        let u = x.rows(cl.n_x, cl.n_u).into_owned();
        let w = deadzone(&u, &cl.u_bar)?;
        let d = sc.disturbance_at(t, cl.n_d);
        let delta = sc.delta_at(t, &cl.structure)?;
        let q0 = &o.c_q * x + &o.d_qw * &w + &o.d_qd * &d;
        let p = close_delta(&delta, &o.d_qp, &q0)?;
        let q = q0 + &o.d_qp * &p;
        let xdot = &cl.a_cl * x + &cl.b_cl0 * &p + &cl.b_cl1 * &w + &cl.b_cl2 * &d;
        let e = &cl.c_cl2 * x + &cl.d_cl20 * &p + &cl.d_cl21 * &w + &cl.d_cl22 * &d;
        let (t1, t10, t11, t12) = &self.theta;
        let (x1, x10, x11, x12) = &self.xi;
        let z_delta = t1 * x + t10 * &p + t11 * &w + t12 * &d;
        let z_n = x1 * x + x10 * &p + x11 * &w + x12 * &d;
        Ok(Sample { sat_u: &u - &w, u, w, p, q, e, d, z_delta, z_n, xdot })
    }

    fn n_x(&self) -> usize {
        self.cl.n_x
    }
    fn n_u(&self) -> usize {
        self.cl.n_u
    }
}

struct StaticLoop<'a> {
    plant: &'a SaturatedLFTPlant,
    f: &'a Mat,
    h: &'a Mat,
}

impl StaticLoop<'_> {
    /// Solve u = F x + H N(u). N is piecewise linear, so Newton on the
    /// active set terminates once the set stops changing.
    fn control(&self, x: &Vec64) -> Result<Vec64, SimError> {
        let ub = &self.plant.u_bar;
        let nu = ub.len();
        let fx = self.f * x;
        let mut u = fx.clone();
        for _ in 0..50 {
            let n = deadzone(&u, ub)?;
            let r = &u - self.h * &n - &fx;
            if r.amax() <= 1e-12 * (1.0 + fx.amax()) {
                return Ok(u);
            }
            let mut j = Mat::identity(nu, nu);
            for i in 0..nu {
                if u[i].abs() > ub[i] {
                    for k in 0..nu {
                        j[(k, i)] -= self.h[(k, i)];
                    }
                }
            }
            let du = j.lu().solve(&r).ok_or_else(|| SimError::NotWellPosed("I − H·diag(N') is singular".into()))?;
            u -= du;
        }
        Err(SimError::NotWellPosed("u = Fx + HN(u) did not converge".into()))
    }
}

impl Dynamics for StaticLoop<'_> {
    fn x0(&self, sc: &Scenario) -> Vec64 {
        sc.x0_vec(self.plant.n_x())
    }

    fn eval(&self, t: f64, x: &Vec64, sc: &Scenario) -> Result<Sample, SimError> {
        let pl = self.plant;
        let u = self.control(x)?;
        let w = deadzone(&u, &pl.u_bar)?;
        let sat_u = &u - &w;
        let d = sc.disturbance_at(t, pl.n_d());
        let delta = sc.delta_at(t, &pl.structure)?;
        let q0 = &pl.c0 * x + &pl.d00 * &sat_u + &pl.d02 * &d;
        let p = close_delta(&delta, &pl.d01, &q0)?;
        let q = q0 + &pl.d01 * &p;
        let xdot = &pl.a * x + &pl.b0 * &sat_u + &pl.b1 * &p + &pl.b2 * &d;
        let e = &pl.c1 * x + &pl.d10 * &sat_u + &pl.d11 * &p + &pl.d12 * &d;
        Ok(Sample { u, sat_u, w, p, q, e, d, z_delta: Vec64::zeros(0), z_n: Vec64::zeros(0), xdot })
    }

    fn n_x(&self) -> usize {
        self.plant.n_x()
    }
    fn n_u(&self) -> usize {
        self.plant.n_u()
    }
}

/// Simulate the IQC-synthesized loop, with the gains already in `cl`.
pub fn simulate(cl: &ClosedLoop, scenario: &Scenario) -> Result<SimTrace, SimError> {
    scenario.validate(cl.n_x, cl.n_d, &cl.structure)?;
    let dyn_ = IqcLoop { cl, theta: cl.delta_rows(), xi: cl.nonlin_rows() };
    run(&dyn_, scenario)
}

/// Simulate the static anti-windup loop u = F_c x_p + H_c N(u).
pub fn simulate_static(plant: &SaturatedLFTPlant, f: &Mat, h: &Mat, scenario: &Scenario) -> Result<SimTrace, SimError> {
    plant.validate()?;
    let (nx, nu) = (plant.n_x(), plant.n_u());
    if f.shape() != (nu, nx) || h.shape() != (nu, nu) {
        return Err(SimError::Dimension(format!(
            "gains F_c {:?} and H_c {:?}, expected ({nu}, {nx}) and ({nu}, {nu})",
            f.shape(),
            h.shape()
        )));
    }
    scenario.validate(nx, plant.n_d(), &plant.structure)?;
    run(&StaticLoop { plant, f, h }, scenario)
}

fn run(dy: &dyn Dynamics, sc: &Scenario) -> Result<SimTrace, SimError> {
    let h = sc.step;
    let steps = sc.n_steps();
    let mut tr = SimTrace::default();
    let mut x = dy.x0(sc);
    let (nx, nu) = (dy.n_x(), dy.n_u());
    for k in 0..=steps {
        let t = k as f64 * h;
        let s = dy.eval(t, &x, sc)?;
        record(&mut tr, t, &x, &s, nx, nu);
        if k == steps {
            break;
        }
        let k1 = s.xdot;
        let k2 = dy.eval(t + 0.5 * h, &(&x + &k1 * (0.5 * h)), sc)?.xdot;
        let k3 = dy.eval(t + 0.5 * h, &(&x + &k2 * (0.5 * h)), sc)?.xdot;
        let k4 = dy.eval(t + h, &(&x + &k3 * h), sc)?.xdot;
        x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        if !x.iter().all(|v| v.is_finite()) || x.norm() > DIVERGENCE_NORM {
            log::warn!("simulation diverged at t = {:.4}", t + h);
            tr.diverged = true;
            break;
        }
    }
    Ok(tr)
}

fn record(tr: &mut SimTrace, t: f64, x: &Vec64, s: &Sample, nx: usize, nu: usize) {
    tr.t.push(t);
    tr.x_p.push(x.rows(0, nx).into_owned());
    let psi_off = if x.len() > nx { nx + nu } else { nx };
    tr.psi.push(x.rows(psi_off, x.len() - psi_off).into_owned());
    tr.u.push(s.u.clone());
    tr.sat_u.push(s.sat_u.clone());
    tr.w.push(s.w.clone());
    tr.p.push(s.p.clone());
    tr.q.push(s.q.clone());
    tr.e.push(s.e.clone());
    tr.d.push(s.d.clone());
    tr.z_delta.push(s.z_delta.clone());
    tr.z_n.push(s.z_n.clone());
    tr.x_cl.push(x.clone());
    tr.x_cl_dot.push(s.xdot.clone());
}

impl SimTrace {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn terminal_state(&self) -> Option<&Vec64> {
        self.x_p.last()
    }

    /// Largest |u| reached relative to ū, per channel.
    pub fn saturation_ratio(&self, u_bar: &Vec64) -> Vec<f64> {
        (0..u_bar.len()).map(|i| self.u.iter().fold(0.0f64, |m, u| m.max(u[i].abs())) / u_bar[i]).collect()
    }

    /// First time after which ‖x_p‖ stays below `tol`.
    pub fn settling_time(&self, tol: f64) -> Option<f64> {
        let last_out = self.x_p.iter().rposition(|x| x.norm() >= tol);
        match last_out {
            None => self.t.first().copied(),
            Some(i) if i + 1 < self.t.len() => Some(self.t[i + 1]),
            Some(_) => None,
        }
    }

    fn columns(&self) -> Vec<(String, &[Vec64])> {
        let cols: [(&str, &[Vec64]); 12] = [
            ("x", &self.x_p),
            ("u", &self.u),
            ("sat_u", &self.sat_u),
            ("w", &self.w),
            ("p", &self.p),
            ("q", &self.q),
            ("e", &self.e),
            ("d", &self.d),
            ("psi", &self.psi),
            ("z_delta", &self.z_delta),
            ("z_n", &self.z_n),
            ("xdot", &self.x_cl_dot),
        ];
        cols.into_iter().map(|(n, v)| (n.to_string(), v)).collect()
    }

    /// Header row then one row per sample, 17 significant digits.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), SimError> {
        let mut wr = csv::Writer::from_writer(out);
        let cols = self.columns();
        let mut header = vec!["t".to_string()];
        for (name, v) in &cols {
            let width = v.first().map_or(0, |x| x.len());
            header.extend((0..width).map(|i| format!("{name}_{i}")));
        }
        wr.write_record(&header).map_err(|e| SimError::Io(e.to_string()))?;
        let mut row = Vec::with_capacity(header.len());
        for k in 0..self.len() {
            row.clear();
            row.push(fmt17(self.t[k]));
            for (_, v) in &cols {
                row.extend(v[k].iter().map(|&x| fmt17(x)));
            }
            wr.write_record(&row).map_err(|e| SimError::Io(e.to_string()))?;
        }
        wr.flush().map_err(|e| SimError::Io(e.to_string()))?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<(), SimError> {
        let f = std::fs::File::create(path).map_err(|e| SimError::Io(format!("{}: {e}", path.display())))?;
        self.write_csv(std::io::BufWriter::new(f))
    }
}

fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

/// Largest ‖Δ(t)‖ over the grid, for reporting.
pub fn max_delta_norm(sc: &Scenario, structure: &UncertaintyStructure) -> Result<f64, SimError> {
    let mut m = 0.0f64;
    for k in 0..=sc.n_steps() {
        let d = sc.delta_at(k as f64 * sc.step, structure)?;
        if d.nrows() > 0 {
            m = m.max(linalg::sym_eigenvalues(&(d.transpose() * &d)).iter().fold(0.0f64, |a, v| a.max(*v)).sqrt());
        }
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::iqc::*;
    use crate::lft::augmented::tests::second_order;
    use crate::lft::{attach_filters, loop_transform};
    use crate::sim::Signal;

    fn loop_with_gains(u_bar: f64) -> ClosedLoop {
        let mut plant = second_order(2.0);
        plant.u_bar[0] = u_bar;
        let aug = loop_transform(&plant).unwrap();
        let f = to_triangular(&j_spectral_factorize(&make_loop_sector_multiplier(2.0, 0.01).unwrap(), &FactorOptions::default()).unwrap()).unwrap();
        let unc = vec![make_uncertainty_iqc(UncertaintyBlock::RepeatedScalar(1), 1.0).unwrap()];
        let cl = attach_filters(&aug, &[f], &unc, None).unwrap();
        // a stabilizing hand-picked gain on [x_p; u], zero on the filter state
        let mut fc = Mat::zeros(1, cl.n());
        fc[(0, 0)] = -1.0;
        fc[(0, 1)] = -2.0;
        fc[(0, 2)] = -3.0;
        cl.with_gains(&fc, &Mat::zeros(1, 1)).unwrap()
    }

    #[test]
    fn zero_input_zero_trace() {
        let cl = loop_with_gains(0.0003);
        let tr = simulate(&cl, &Scenario::new(1.0, Signal::Zero)).unwrap();
        assert_eq!(tr.len(), 1001);
        assert!(tr.x_cl.iter().chain(&tr.e).chain(&tr.u).all(|v| v.iter().all(|&x| x == 0.0)));
        assert!(!tr.diverged);
    }

    #[test]
    fn trace_invariants() {
        let cl = loop_with_gains(0.0003);
        let sc = Scenario::new(5.0, Signal::Sinusoid { amplitude: 0.5, frequency: 0.5, phase: 1.0, window: Some((0.5, 3.0)) })
            .with_uncertainty(vec![Signal::Sinusoid { amplitude: 1.0, frequency: 1.0, phase: 0.0, window: None }]);
        let tr = simulate(&cl, &sc).unwrap();
        for k in 0..tr.len() {
            let (u, w, s) = (tr.u[k][0], tr.w[k][0], tr.sat_u[k][0]);
            assert_eq!(w, u - u.clamp(-0.0003, 0.0003));
            assert_eq!(s, u - w);
            // sector [0, 1]
            assert!(w * (u - w) >= 0.0);
            let delta = tr.t[k].sin();
            assert!((tr.p[k][0] - delta * tr.q[k][0]).abs() <= 1e-12 * (1.0 + tr.q[k][0].abs()));
        }
    }

    /// Unsaturated linear regime: the terminal-state error ratio across a
    /// step halving is 2⁴ = 16 for a fourth-order method.
    #[test]
    fn rk4_order() {
        let cl = loop_with_gains(1e6);
        let d = Signal::Sinusoid { amplitude: 1.0, frequency: 2.0, phase: 0.3, window: None };
        let run = |h: f64| simulate(&cl, &Scenario::new(2.0, d.clone()).with_step(h)).unwrap().x_cl.last().unwrap().clone();
        let (a, b, c) = (run(0.04), run(0.02), run(0.01));
        let ratio = (&a - &b).norm() / (&b - &c).norm();
        assert!((12.0..=20.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn divergence_flagged() {
        let cl = loop_with_gains(0.0003);
        let mut fc = Mat::zeros(1, cl.n());
        fc[(0, 0)] = 1.0;
        fc[(0, 2)] = 200.0;
        let bad = cl.with_gains(&fc, &Mat::zeros(1, 1)).unwrap();
        let tr = simulate(&bad, &Scenario::new(10.0, Signal::Zero).with_x0(vec![1.0, 0.0])).unwrap();
        assert!(tr.diverged);
        assert!(tr.len() < 10_001);
    }

    #[test]
    fn static_loop_implicit_control() {
        let mut plant = second_order(2.0);
        plant.u_bar[0] = 0.5;
        let f = Mat::from_row_slice(1, 2, &[-4.0, -1.0]);
        let h = Mat::from_element(1, 1, 0.6);
        let sc = Scenario::new(3.0, Signal::Zero).with_x0(vec![1.0, 0.0]);
        let tr = simulate_static(&plant, &f, &h, &sc).unwrap();
        for k in 0..tr.len() {
            let u = tr.u[k][0];
            let fx = (&f * &tr.x_p[k])[0];
            assert!((u - fx - 0.6 * tr.w[k][0]).abs() < 1e-10);
        }
        assert!(tr.saturation_ratio(&plant.u_bar)[0] > 1.0);
    }

    #[test]
    fn csv_full_precision() {
        let cl = loop_with_gains(0.0003);
        let sc = Scenario::new(0.01, Signal::Constant { value: 1.0 / 3.0 }).with_step(0.005);
        let tr = simulate(&cl, &sc).unwrap();
        let mut buf = Vec::new();
        tr.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        let header: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(header[0], "t");
        assert!(header.contains(&"x_1") && header.contains(&"z_n_0") && header.contains(&"psi_0"));
        let col = header.iter().position(|h| *h == "d_0").unwrap();
        let first: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(first[col].parse::<f64>().unwrap(), 1.0 / 3.0);
        assert_eq!(text.lines().count(), 4);
    }
}
