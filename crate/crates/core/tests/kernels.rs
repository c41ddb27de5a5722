//! Riccati solver, factorization and hard-IQC checks on randomized data.

mod common;

use proptest::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

use common::*;
use satiqc_core::iqc::hard::running_integral;
use satiqc_core::iqc::multiplier::check_grid;
use satiqc_core::iqc::*;
use satiqc_core::ss::{eigenvalues, solve_are, AreOptions};

proptest! {
    #![proptest_config(ProptestConfig { cases: 100, max_global_rejects: 100_000, ..ProptestConfig::default() })]

    #[test]
    fn are_stabilizing_solution(seed in any::<u64>()) {
        let (a, b, c, d, margin) = lqr_instance(seed);
        prop_assume!(margin > 0.1);
        let s = solve_are(&a, &b, &c, &d, &AreOptions::default()).unwrap();
        let dinv = d.clone().try_inverse().unwrap();
        let k = b.transpose() * &s.x + &c;
        let res = a.transpose() * &s.x + &s.x * &a - k.transpose() * &dinv * &k;
        // relative to ‖X‖ once ‖X‖ > 1: evaluating R(X) in f64 alone costs ~eps·‖X‖²
        let rel = res.norm() / s.x.norm().max(1.0);
        prop_assert!(rel < 1e-8, "residual {:.3e} with |X| {:.3e}", res.norm(), s.x.norm());
        prop_assert!((&s.x - s.x.transpose()).norm() < 1e-10);
        let cl = &a - &b * &dinv * &k;
        prop_assert!(eigenvalues(&cl).unwrap().iter().all(|z| z.re < 0.0));
    }
}

#[test]
fn factorization_identity_all_families() {
    let mut grid = check_grid();
    grid.extend((0..200).map(|k| 10f64.powf(-3.0 + 6.0 * k as f64 / 199.0)));
    for alpha in [0.5, 1.0, 2.0, 10.0] {
        for (name, pi) in families(alpha) {
            let f = j_spectral_factorize(&pi, &FactorOptions::default()).unwrap();
            let r = f.identity_residual(&pi, &grid).unwrap();
            let tol = match f.diagnostics.regularization {
                // Ψ~WΨ reproduces Π + ε_D·e₁e₁ᵀ
                Some(eps) => 1e-6 + eps * 1.01,
                None => 1e-6,
            };
            assert!(r < tol, "{name} at alpha {alpha}: residual {r:.3e}");
            assert!(f.diagnostics.residual < 1e-6, "{name} at alpha {alpha}");
            assert!(f.is_bistable(0.0).unwrap(), "{name} at alpha {alpha}");
        }
    }
}

#[test]
fn hard_iqc_on_random_deadzone_probes() {
    let (dt, horizon, alpha) = (2e-3, 10.0, 2.0);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for (name, pi) in families(alpha) {
        let f = j_spectral_factorize(&pi, &FactorOptions::default()).unwrap();
        for i in 0..100 {
            let p = Probe::random(&mut rng);
            let signal = probe_signal(name, &p, alpha, dt, horizon);
            assert!(check_hard_iqc(&f, &signal, horizon), "{name} probe {i} violated");
        }
    }
}

#[test]
fn popov_triangular_factor_coefficients() {
    let f = j_spectral_factorize(&make_popov_multiplier(1.0, 0.01).unwrap(), &FactorOptions::default()).unwrap();
    assert!((f.diagnostics.are_x[(0, 0)] - 0.995).abs() < 1e-3);
    let t = to_triangular(&f).unwrap();
    let (num, den) = t.psi_bar.tf_coefficients(0, 0, 1e-9).unwrap();
    // reference coefficients, given to four significant digits
    for (x, y) in num.iter().zip([1.98, 0.0198]) {
        assert!((x - y).abs() < 1e-2);
    }
    for (x, y) in den.iter().zip([1.0, 1.0]) {
        assert!((x - y).abs() < 1e-2);
    }
    assert!((t.psi_bar.d()[(0, 1)] + 0.9802).abs() < 1e-2);
    assert!(t.psi_bar.d()[(1, 0)].abs() < 1e-12 && (t.psi_bar.d()[(1, 1)] - 1.0).abs() < 1e-12);
}

/// The triangular form is driven by (v, w) directly. That keeps the IQC hard
/// for the Popov and static sector factors but not for Zames–Falb or the
/// loop-transformed sector factor, whose Ψ21 is dynamic.
#[test]
fn triangular_form_hardness() {
    let (dt, horizon, alpha) = (2e-3, 10.0, 1.0);
    let w = satiqc_core::ss::SignatureMatrix::new(1, 1).matrix();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for (name, pi) in families(alpha) {
        let t = to_triangular(&j_spectral_factorize(&pi, &FactorOptions::default()).unwrap()).unwrap();
        let mut violations = 0;
        for _ in 0..50 {
            let p = Probe::random(&mut rng);
            let signal = probe_signal(name, &p, alpha, dt, horizon);
            if running_integral(&t.psi_bar, &w, &signal).iter().any(|&x| x < -1e-6) {
                violations += 1;
            }
        }
        match name {
            "popov" | "sector" => assert_eq!(violations, 0, "{name}"),
            _ => assert!(violations > 0, "{name}: expected violations of the triangular form"),
        }
    }
}
