//! End-to-end runs of the shipped configs: synthesis, pole placement,
//! certificate round trip and nonlinear simulation under random admissible
//! scenarios.

use std::path::PathBuf;
use std::sync::OnceLock;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use satiqc_core::config::{Outcome, ProblemConfig};
use satiqc_core::lft::{ClosedLoop, SaturatedLFTPlant};
use satiqc_core::lmi::{round_trip_margin, AntiWindupResult, SynthesisResult};
use satiqc_core::sim::*;

fn config(name: &str) -> ProblemConfig {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(format!("{name}.json"));
    ProblemConfig::load(&path).unwrap()
}

struct Iqc {
    cfg: ProblemConfig,
    result: SynthesisResult,
    cl: ClosedLoop,
}

fn iqc(name: &str) -> Iqc {
    let cfg = config(name);
    match cfg.run().unwrap() {
        Outcome::Iqc { result, closed_loop } => Iqc { cfg, result, cl: closed_loop },
        Outcome::AntiWindup { .. } => panic!("{name} is not an iqc design"),
    }
}

fn second_order() -> &'static Iqc {
    static CELL: OnceLock<Iqc> = OnceLock::new();
    CELL.get_or_init(|| iqc("second_order"))
}

fn cart() -> &'static Iqc {
    static CELL: OnceLock<Iqc> = OnceLock::new();
    CELL.get_or_init(|| iqc("cart_pendulum"))
}

fn antiwindup() -> &'static (ProblemConfig, AntiWindupResult, SaturatedLFTPlant) {
    static CELL: OnceLock<(ProblemConfig, AntiWindupResult, SaturatedLFTPlant)> = OnceLock::new();
    CELL.get_or_init(|| {
        let cfg = config("cart_pendulum_antiwindup");
        match cfg.run().unwrap() {
            Outcome::AntiWindup { result, plant } => (cfg, result, plant),
            Outcome::Iqc { .. } => panic!("expected the anti-windup design"),
        }
    })
}

#[test]
fn second_order_gamma_and_poles() {
    let s = second_order();
    assert!((1.43..=1.59).contains(&s.result.gamma), "gamma {}", s.result.gamma);
    let (rho, theta) = s.cfg.pole_region.map(|r| (r.rho, r.theta)).unwrap();
    for z in s.cl.poles().unwrap() {
        assert!(z.re < -rho + 1e-6, "pole {z}");
        assert!(z.im.abs() <= -z.re * theta.tan() + 1e-6, "pole {z} outside the sector");
    }
}

#[test]
fn certificates_round_trip() {
    for s in [second_order(), cart()] {
        let m = round_trip_margin(&s.cl, &s.result).unwrap();
        assert!(m >= -1e-6, "{}: margin {m:.3e}", s.cfg.name);
    }
}

fn soundness(s: &Iqc, seed: u64, duration: f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let st = s.cfg.structure();
    for i in 0..10 {
        let sc = Scenario::random(&mut rng, duration, s.cfg.plant.n_d, &st);
        let tr = simulate(&s.cl, &sc).unwrap();
        assert!(!tr.diverged, "{} scenario {i} diverged", s.cfg.name);
        let g = empirical_l2_gain(&tr).unwrap();
        assert!(g <= s.result.gamma, "{} scenario {i}: gain {g} > {}", s.cfg.name, s.result.gamma);
        let dc = check_dissipation(&tr, &s.result).unwrap();
        assert!(dc.holds(1e-4), "{} scenario {i}: worst margin {:.3e}", s.cfg.name, dc.worst());
    }
}

#[test]
fn second_order_random_scenarios() {
    soundness(second_order(), 1, 20.0);
}

#[test]
fn cart_random_scenarios() {
    soundness(cart(), 2, 10.0);
}

#[test]
fn second_order_configured_scenarios() {
    let s = second_order();
    let tr = simulate(&s.cl, &s.cfg.scenario("windowed_sine").unwrap()).unwrap();
    assert!(empirical_l2_gain(&tr).unwrap() <= s.result.gamma);
    assert!(tr.terminal_state().unwrap().norm() < 1e-6);
    let tr = simulate(&s.cl, &s.cfg.scenario("worst_constant_delta").unwrap()).unwrap();
    assert!(empirical_l2_gain(&tr).unwrap() <= s.result.gamma);
}

#[test]
fn zero_disturbance_gain_undefined() {
    let s = second_order();
    let tr = simulate(&s.cl, &Scenario::new(5.0, Signal::Zero)).unwrap();
    assert!(tr.x_cl.iter().all(|x| x.norm() == 0.0));
    assert!(matches!(empirical_l2_gain(&tr), Err(SimError::ZeroDisturbance)));
}

#[test]
fn cart_initial_swing_saturates_and_recovers() {
    let s = cart();
    let tr = simulate(&s.cl, &s.cfg.scenario("initial_swing").unwrap()).unwrap();
    assert!(!tr.diverged);
    assert!(tr.saturation_ratio(&s.cl.u_bar)[0] > 1.0, "saturation never active");
    assert!(tr.terminal_state().unwrap().norm() < 1e-3);
    assert!(check_dissipation(&tr, &s.result).unwrap().holds(1e-4));
}

#[test]
fn cart_dynamic_beats_antiwindup() {
    let (_, aw, _) = antiwindup();
    let g = cart().result.gamma;
    assert!(g * 10.0 < aw.gamma, "dynamic {g} vs static {}", aw.gamma);
    assert!(aw.h_c.iter().all(|h| *h < 1.0));
}

#[test]
fn antiwindup_loop_simulates() {
    let (cfg, aw, plant) = antiwindup();
    for ns in &cfg.scenarios {
        let tr = simulate_static(plant, &aw.f_c, &aw.h_c, &ns.scenario).unwrap();
        assert!(!tr.diverged, "{}", ns.name);
        if let Ok(g) = empirical_l2_gain(&tr) {
            assert!(g <= aw.gamma);
        }
    }
}
