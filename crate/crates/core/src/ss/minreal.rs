//! Minimal realization and stable/antistable splitting.

use super::linalg::{self, ordered_schur, range_basis, real_basis, Mat};
use super::{SsError, StateSpace};

pub const DEFAULT_MINREAL_TOL: f64 = 1e-9;

/// Orthonormal basis of the smallest A-invariant subspace containing range(B).
fn krylov_basis(a: &Mat, b: &Mat, tol: f64) -> Mat {
    let n = a.nrows();
    let mut k = range_basis(b, tol);
    loop {
        if k.ncols() == n || k.ncols() == 0 {
            return k;
        }
        let ak = a * &k;
        let stack = linalg::hcat(n, &[&k, &ak]);
        let next = range_basis(&stack, tol);
        if next.ncols() <= k.ncols() {
            return k;
        }
        k = next;
    }
}

/// Remove uncontrollable then unobservable modes. Each reduction projects
/// onto an orthonormal basis V of the relevant subspace (S = Vᵀ, U = V, S·U = I),
/// which is exact because the discarded complement is A-invariant.
pub fn minimal_realization(g: &StateSpace, tol: f64) -> StateSpace {
    if g.n() == 0 {
        return g.clone();
    }
    let vc = krylov_basis(g.a(), g.b(), tol);
    let (a1, b1, c1) = (vc.transpose() * g.a() * &vc, vc.transpose() * g.b(), g.c() * &vc);
    if a1.nrows() == 0 {
        return StateSpace::static_gain(g.d().clone());
    }
    let vo = krylov_basis(&a1.transpose(), &c1.transpose(), tol);
    let a2 = vo.transpose() * &a1 * &vo;
    let b2 = vo.transpose() * &b1;
    let c2 = &c1 * &vo;
    StateSpace::new(a2, b2, c2, g.d().clone()).expect("projection preserves dimensions")
}

/// G = G_s + G_a + D with G_s stable and G_a antistable, both strictly proper.
/// Fails if A has eigenvalues within `axis_tol` of the imaginary axis.
pub fn stable_antistable_split(g: &StateSpace, axis_tol: f64) -> Result<(StateSpace, StateSpace), SsError> {
    let n = g.n();
    let (p, m) = (g.outputs(), g.inputs());
    if n == 0 {
        return Ok((
            StateSpace::new(Mat::zeros(0, 0), Mat::zeros(0, m), Mat::zeros(p, 0), Mat::zeros(p, m))?,
            StateSpace::new(Mat::zeros(0, 0), Mat::zeros(0, m), Mat::zeros(p, 0), Mat::zeros(p, m))?,
        ));
    }
    let scale = 1.0 + g.a().norm();
    let eig = linalg::eigenvalues(g.a())?;
    if let Some(z) = eig.iter().find(|z| z.re.abs() <= axis_tol * scale) {
        return Err(SsError::NoStabilizingSolution(format!("eigenvalue {z} on the imaginary axis")));
    }
    let (us, _, ks) = ordered_schur(g.a(), |z| z.re < 0.0)?;
    let (ua, _, ka) = ordered_schur(g.a(), |z| z.re > 0.0)?;
    debug_assert_eq!(ks + ka, n);
    let vs = real_basis(&us.columns(0, ks).into_owned());
    let va = real_basis(&ua.columns(0, ka).into_owned());
    let t = linalg::hcat(n, &[&vs, &va]);
    let ti = t.clone().try_inverse().ok_or_else(|| SsError::Singular("stable/antistable bases are dependent".into()))?;
    let at = &ti * g.a() * &t;
    let bt = &ti * g.b();
    let ct = g.c() * &t;
    let gs = StateSpace::new(
        at.view((0, 0), (ks, ks)).into_owned(),
        bt.rows(0, ks).into_owned(),
        ct.columns(0, ks).into_owned(),
        Mat::zeros(p, m),
    )?;
    let ga = StateSpace::new(
        at.view((ks, ks), (ka, ka)).into_owned(),
        bt.rows(ks, ka).into_owned(),
        ct.columns(ks, ka).into_owned(),
        Mat::zeros(p, m),
    )?;
    Ok((gs, ga))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ss::log_grid;
    use num_complex::Complex64;

    #[test]
    fn drops_unreachable_state() {
        let a = Mat::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, -2.0]);
        let b = Mat::from_row_slice(2, 1, &[1.0, 0.0]);
        let c = Mat::from_row_slice(1, 2, &[1.0, 1.0]);
        let g = StateSpace::new(a, b, c, Mat::zeros(1, 1)).unwrap();
        let r = minimal_realization(&g, DEFAULT_MINREAL_TOL);
        assert_eq!(r.n(), 1);
        assert!(g.max_response_gap(&r, &log_grid(-2.0, 2.0, 20)).unwrap() < 1e-10);
    }

    #[test]
    fn split_recombines() {
        let a = Mat::from_row_slice(3, 3, &[-1.0, 2.0, 0.0, 0.0, 3.0, 1.0, 0.0, 0.0, -4.0]);
        let b = Mat::from_row_slice(3, 1, &[1.0, 1.0, 1.0]);
        let c = Mat::from_row_slice(1, 3, &[1.0, -1.0, 2.0]);
        let g = StateSpace::new(a, b, c, Mat::from_element(1, 1, 0.5)).unwrap();
        let (gs, ga) = stable_antistable_split(&g, 1e-9).unwrap();
        assert_eq!(gs.n(), 2);
        assert_eq!(ga.n(), 1);
        assert!(gs.is_stable(0.0).unwrap());
        for w in log_grid(-2.0, 2.0, 15) {
            let s = Complex64::new(0.0, w);
            let sum = gs.eval(s).unwrap() + ga.eval(s).unwrap() + crate::ss::linalg::to_complex(g.d());
            assert!((sum - g.eval(s).unwrap()).norm() < 1e-10);
        }
    }
}
