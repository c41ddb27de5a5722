//! One PASS/FAIL line per acceptance criterion. The test itself always
//! passes; the printed verdicts are the result.

mod common;

use std::f64::consts::FRAC_PI_3;
use std::path::PathBuf;
use std::time::Instant;

use common::*;
use satiqc_core::config::{Outcome, ProblemConfig, Strategy};
use satiqc_core::iqc::multiplier::check_grid;

use satiqc_core::iqc::*;
use satiqc_core::lft::ClosedLoop;
use satiqc_core::lmi::{round_trip_margin, SynthesisResult};
use satiqc_core::sim::*;
use satiqc_core::ss::{solve_are, AreOptions};

// straight to stderr so the verdicts survive libtest output capture
macro_rules! say {
    ($($t:tt)*) => {{
        use std::io::Write;
        let _ = writeln!(std::io::stderr(), $($t)*);
    }};
}

const TABLE_ALPHAS: [f64; 12] = [2.0, 5.0, 7.0, 10.0, 15.0, 20.0, 30.0, 40.0, 50.0, 60.0, 70.0, 100.0];
const GAMMA_P: f64 = 3.041;
const GAMMA_S: f64 = 8.155;
const GAMMA_M: f64 = 1.508;
const GAMMA_DYN: f64 = 3.022;
const GAMMA_SC: f64 = 181.142;

fn config(name: &str) -> ProblemConfig {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(format!("{name}.json"));
    ProblemConfig::load(&path).expect("shipped config loads")
}

fn within(x: f64, target: f64, rel: f64) -> bool {
    (x - target).abs() <= rel * target.abs()
}

struct Report {
    lines: Vec<(usize, bool, String)>,
}

impl Report {
    fn record(&mut self, id: usize, ok: bool, detail: String) {
        say!("criterion {id}: {} {detail}", if ok { "PASS" } else { "FAIL" });
        self.lines.push((id, ok, detail));
    }
}

/// Synthesis results collected for the round-trip criterion.
type Solutions = Vec<(String, SynthesisResult, ClosedLoop)>;

fn criterion_1(rep: &mut Report) {
    let t0 = Instant::now();
    let run = || -> Result<(f64, f64, f64), IqcError> {
        let pi = make_popov_multiplier(1.0, 0.01)?;
        let f = j_spectral_factorize(&pi, &FactorOptions::default())?;
        let t = to_triangular(&f)?;
        let (num, den) = t.psi_bar.tf_coefficients(0, 0, 1e-9)?;
        let d = t.psi_bar.d();
        let printed = [
            (num.clone(), vec![1.98, 0.0198]),
            (den.clone(), vec![1.0, 1.0]),
            (vec![d[(0, 1)], d[(1, 0)], d[(1, 1)]], vec![-0.9802, 0.0, 1.0]),
        ];
        let mut coef_err: f64 = 0.0;
        for (got, want) in &printed {
            if got.len() != want.len() {
                coef_err = f64::INFINITY;
                continue;
            }
            for (g, w) in got.iter().zip(want) {
                coef_err = coef_err.max((g - w).abs());
            }
        }
        // the (2,1) entry must be identically zero, not just at infinity
        let (n21, _) = t.psi_bar.tf_coefficients(1, 0, 1e-9)?;
        coef_err = coef_err.max(n21.iter().fold(0.0, |m, v| m.max(v.abs())));
        let residual = f.identity_residual(&pi, &check_grid())?;
        Ok((coef_err, residual, f.diagnostics.are_x[(0, 0)]))
    };
    match run() {
        Ok((err, res, x)) => {
            let secs = t0.elapsed().as_secs_f64();
            let ok = err < 1e-2 && res < 1e-6 && (x - 0.995).abs() < 1e-3 && secs < 1.0;
            rep.record(1, ok, format!("coef err {err:.2e}, residual {res:.2e}, X = {x:.6}, {secs:.3}s"));
        }
        Err(e) => rep.record(1, false, format!("factorization failed: {e}")),
    }
}

fn criterion_2(rep: &mut Report, sols: &mut Solutions) {
    let cfg = config("second_order");
    let t0 = Instant::now();
    let mut table = Vec::new();
    for &a in &TABLE_ALPHAS {
        let mut row = [f64::NAN; 4];
        for (k, s) in Strategy::ALL.iter().enumerate() {
            match cfg.synthesize_iqc(a, &cfg.strategy_iqcs(*s)) {
                Ok((r, cl)) => {
                    row[k] = r.gamma;
                    sols.push((format!("second_order α={a} {}", s.column()), r, cl));
                }
                Err(e) => say!("  α = {a}, {}: {e}", s.column()),
            }
        }
        table.push(row);
    }
    let secs = t0.elapsed().as_secs_f64();
    say!("  alpha     gamma_P   gamma_ZF  gamma_S   gamma_M");
    for (a, r) in TABLE_ALPHAS.iter().zip(&table) {
        say!("  {a:<8} {:<9.4} {:<9.4} {:<9.4} {:<9.4}", r[0], r[1], r[2], r[3]);
    }
    let col = |k: usize| table.iter().map(|r| r[k]).collect::<Vec<_>>();
    let (gp, gzf, gs, gm) = (col(0), col(1), col(2), col(3));
    let p_ok = gp.iter().all(|&g| within(g, GAMMA_P, 0.05));
    let zf_range = gzf.iter().all(|&g| (1.45..=1.61).contains(&g));
    let tail: Vec<f64> = TABLE_ALPHAS.iter().zip(&gzf).filter(|(a, _)| **a >= 30.0).map(|(_, g)| *g).collect();
    let zf_drift = tail.windows(2).all(|w| w[1] >= w[0] - 1e-6) && tail.last() > tail.first();
    let s_ok = gs.iter().all(|&g| within(g, GAMMA_S, 0.05));
    let m_ok = gm.iter().all(|&g| within(g, GAMMA_M, 0.05));
    let mono = table.iter().all(|r| r[3] <= r[0].min(r[1]).min(r[2]) + 1e-3);
    let fast = secs < 300.0;
    let ok = p_ok && zf_range && zf_drift && s_ok && m_ok && mono && fast;
    rep.record(
        2,
        ok,
        format!(
            "gamma_P {} gamma_ZF range {} drift {} gamma_S {} gamma_M {} gamma_M<=min {} ({secs:.1}s)",
            verdict(p_ok),
            verdict(zf_range),
            verdict(zf_drift),
            verdict(s_ok),
            verdict(m_ok),
            verdict(mono)
        ),
    );
}

fn verdict(b: bool) -> &'static str {
    if b {
        "ok"
    } else {
        "off"
    }
}

fn criterion_3(rep: &mut Report, sols: &mut Solutions) {
    let t0 = Instant::now();
    let dynamic = config("cart_pendulum").run();
    let stat = config("cart_pendulum_antiwindup").run();
    let secs = t0.elapsed().as_secs_f64();
    match (dynamic, stat) {
        (Ok(Outcome::Iqc { result, closed_loop }), Ok(Outcome::AntiWindup { result: aw, .. })) => {
            let (gd, gs) = (result.gamma, aw.gamma);
            let ok = within(gd, GAMMA_DYN, 0.10) && within(gs, GAMMA_SC, 0.10) && gd * 10.0 <= gs && secs < 30.0;
            rep.record(3, ok, format!("gamma_dyn {gd:.4}, gamma_sc {gs:.4}, ratio {:.1} ({secs:.1}s)", gs / gd));
            sols.push(("cart_pendulum".into(), result, closed_loop));
        }
        (d, s) => rep.record(3, false, format!("synthesis failed: {:?} / {:?}", d.err(), s.err())),
    }
}

fn criterion_4(rep: &mut Report) {
    let cfg = config("second_order");
    let region = cfg.pole_region;
    match cfg.run() {
        Ok(Outcome::Iqc { closed_loop, .. }) => {
            let (rho, theta) = region.map_or((f64::NAN, f64::NAN), |r| (r.rho, r.theta));
            let poles = closed_loop.poles().unwrap_or_default();
            let max_re = poles.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
            let sector = poles.iter().all(|z| z.im.abs() <= -z.re * theta.tan() + 1e-6);
            let ok = rho == 1.0 && (theta - FRAC_PI_3).abs() < 1e-12 && !poles.is_empty() && max_re < -1.0 + 1e-6 && sector;
            rep.record(4, ok, format!("{} poles, max Re {max_re:.6}, sector {}", poles.len(), verdict(sector)));
        }
        other => rep.record(4, false, format!("synthesis failed: {:?}", other.err())),
    }
}

fn criterion_5(rep: &mut Report) {
    let mut details = Vec::new();
    let mut ok = true;
    for (name, seed, duration) in [("second_order", 101, 20.0), ("cart_pendulum", 202, 10.0)] {
        let cfg = config(name);
        let Ok(Outcome::Iqc { result, closed_loop }) = cfg.run() else {
            ok = false;
            details.push(format!("{name}: synthesis failed"));
            continue;
        };
        let mut rng = seeded(seed);
        let (mut worst_ratio, mut worst_margin, mut all) = (0.0f64, f64::NEG_INFINITY, true);
        for _ in 0..10 {
            let sc = Scenario::random(&mut rng, duration, cfg.plant.n_d, &cfg.structure());
            let checked = simulate(&closed_loop, &sc).and_then(|tr| {
                let g = empirical_l2_gain(&tr)?;
                let dc = check_dissipation(&tr, &result)?;
                Ok((tr.diverged, g, dc))
            });
            match checked {
                Ok((diverged, g, dc)) => {
                    worst_ratio = worst_ratio.max(g / result.gamma);
                    worst_margin = worst_margin.max(dc.worst());
                    all &= !diverged && g <= result.gamma && dc.holds(1e-4);
                }
                Err(e) => {
                    all = false;
                    details.push(format!("{name}: {e}"));
                }
            }
        }
        ok &= all;
        details.push(format!("{name}: max gain/gamma {worst_ratio:.3}, worst margin {worst_margin:.2e}"));
    }
    rep.record(5, ok, details.join("; "));
}

fn criterion_6(rep: &mut Report, sols: &Solutions) {
    let mut worst = f64::INFINITY;
    let mut name = String::new();
    let mut failed = 0;
    for (n, r, cl) in sols {
        match round_trip_margin(cl, r) {
            Ok(m) if m < worst => {
                worst = m;
                name = n.clone();
            }
            Ok(_) => {}
            Err(e) => {
                failed += 1;
                say!("  {n}: {e}");
            }
        }
    }
    let ok = failed == 0 && !sols.is_empty() && worst >= -1e-6;
    rep.record(6, ok, format!("{} solutions, worst margin {worst:.3e} ({name})", sols.len()));
}

fn criterion_7(rep: &mut Report) {
    // Riccati: 100 random instances with a stabilizability margin
    let (mut are_worst, mut are_fail, mut count, mut seed) = (0.0f64, 0, 0, 0u64);
    while count < 100 {
        seed += 1;
        let (a, b, c, d, margin) = lqr_instance(seed);
        if margin <= 0.1 {
            continue;
        }
        count += 1;
        match solve_are(&a, &b, &c, &d, &AreOptions::default()) {
            Ok(s) => are_worst = are_worst.max(s.residual / s.x.norm().max(1.0)),
            Err(_) => are_fail += 1,
        }
    }
    let are_ok = are_fail == 0 && are_worst < 1e-8;

    // factorization: four families across α
    let mut fac_worst = 0.0f64;
    let mut fac_fail = 0;
    for alpha in [0.5, 1.0, 2.0, 10.0] {
        for (_, pi) in families(alpha) {
            match j_spectral_factorize(&pi, &FactorOptions::default()) {
                Ok(f) => fac_worst = fac_worst.max(f.diagnostics.residual),
                Err(_) => fac_fail += 1,
            }
        }
    }
    let fac_ok = fac_fail == 0 && fac_worst < 1e-6;

    // hard IQC: 100 probes per family
    let mut rng = seeded(7);
    let mut hard_fail = 0;
    let alpha = 2.0;
    for (name, pi) in families(alpha) {
        let Ok(f) = j_spectral_factorize(&pi, &FactorOptions::default()) else {
            hard_fail += 100;
            continue;
        };
        for _ in 0..100 {
            let p = Probe::random(&mut rng);
            if !check_hard_iqc(&f, &probe_signal(name, &p, alpha, 2e-3, 10.0), 10.0) {
                hard_fail += 1;
            }
        }
    }
    let ok = are_ok && fac_ok && hard_fail == 0;
    rep.record(
        7,
        ok,
        format!(
            "ARE worst residual {are_worst:.2e} ({are_fail} failures); factorization worst {fac_worst:.2e}; hard-IQC violations {hard_fail}/400"
        ),
    );
}

#[test]
fn acceptance() {
    let mut rep = Report { lines: Vec::new() };
    let mut sols = Solutions::new();
    criterion_1(&mut rep);
    criterion_2(&mut rep, &mut sols);
    criterion_3(&mut rep, &mut sols);
    criterion_4(&mut rep);
    criterion_5(&mut rep);
    criterion_6(&mut rep, &sols);
    criterion_7(&mut rep);
    let passed = rep.lines.iter().filter(|l| l.1).count();
    say!("acceptance: {passed}/{} criteria pass", rep.lines.len());
}
