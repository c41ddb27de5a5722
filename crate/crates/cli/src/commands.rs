//! Subcommand implementations and the error-to-exit-code mapping.

use std::io::Write;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use satiqc_core::config::{ConfigError, Design, IqcSpec, Outcome, ProblemConfig, RunError, Strategy, TfConfig};
use satiqc_core::iqc::{j_spectral_factorize, to_triangular, FactorOptions, IqcError};
use satiqc_core::lft::{LftError, SaturatedLFTPlant};
use satiqc_core::lmi::{build_analysis_lmi, certificate_margin, round_trip_margin, LmiError};
use satiqc_core::sim::{
    check_dissipation_with, empirical_l2_gain, simulate, simulate_static, Scenario, SimError, SimTrace,
};
use satiqc_core::nalgebra::DVector;
use satiqc_core::ss::linalg::{self, Mat};
use satiqc_core::SsError;

use crate::report::*;
use crate::{Cli, Command};

pub const EXIT_FAILED: u8 = 1;
pub const EXIT_INPUT: u8 = 2;
pub const EXIT_NUMERIC: u8 = 3;

/// Frequency-identity residual accepted by `factorize`.
const FACTOR_RESIDUAL_TOL: f64 = 1e-6;
/// Dissipation tolerance relative to 1 + the term magnitudes.
const DISSIPATION_TOL: f64 = 1e-4;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub msg: String,
}

impl CliError {
    fn input(msg: impl Into<String>) -> Self {
        Self { code: EXIT_INPUT, msg: msg.into() }
    }
}

fn iqc_code(e: &IqcError) -> u8 {
    match e {
        IqcError::InvalidParameter(_) | IqcError::L1BoundViolated(_) | IqcError::UnstableFilter => EXIT_INPUT,
        IqcError::NotFactorizable(_) | IqcError::SingularFeedthrough | IqcError::Ss(_) => EXIT_NUMERIC,
    }
}

fn ss_code(e: &SsError) -> u8 {
    match e {
        SsError::Dimension(_) | SsError::NotSquare(..) | SsError::TransferFunction(_) => EXIT_INPUT,
        _ => EXIT_NUMERIC,
    }
}

fn lft_code(e: &LftError) -> u8 {
    match e {
        LftError::Iqc(e) => iqc_code(e),
        LftError::Ss(e) => ss_code(e),
        _ => EXIT_INPUT,
    }
}

fn lmi_code(e: &LmiError) -> u8 {
    match e {
        LmiError::Infeasible(_) => EXIT_FAILED,
        LmiError::InvalidParameter(_) => EXIT_INPUT,
        LmiError::Lft(e) => lft_code(e),
        _ => EXIT_NUMERIC,
    }
}

impl From<RunError> for CliError {
    fn from(e: RunError) -> Self {
        let code = match &e {
            RunError::Config(_) => EXIT_INPUT,
            RunError::Iqc(e) => iqc_code(e),
            RunError::Lft(e) => lft_code(e),
            RunError::Lmi(e) => lmi_code(e),
        };
        Self { code, msg: e.to_string() }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        Self::input(e.to_string())
    }
}

impl From<IqcError> for CliError {
    fn from(e: IqcError) -> Self {
        Self { code: iqc_code(&e), msg: e.to_string() }
    }
}

impl From<LmiError> for CliError {
    fn from(e: LmiError) -> Self {
        Self { code: lmi_code(&e), msg: e.to_string() }
    }
}

impl From<LftError> for CliError {
    fn from(e: LftError) -> Self {
        Self { code: lft_code(&e), msg: e.to_string() }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        let code = match &e {
            SimError::NotWellPosed(_) => EXIT_NUMERIC,
            SimError::Lft(e) => lft_code(e),
            _ => EXIT_INPUT,
        };
        Self { code, msg: e.to_string() }
    }
}

pub fn run(cli: &Cli) -> Result<u8, CliError> {
    match &cli.command {
        Command::Factorize { multiplier, alpha, eps, filter_num, filter_den } => {
            factorize(cli, multiplier, *alpha, *eps, filter_num.as_deref(), filter_den.as_deref())
        }
        Command::Synth => synth(cli),
        Command::Analyze { result } => analyze(cli, result.as_deref()),
        Command::Sweep { alpha } => sweep(cli, alpha.as_deref()),
        Command::Simulate { result, scenario, random, duration, summary } => {
            simulate_cmd(cli, result, scenario.as_deref(), *random, *duration, summary.as_deref())
        }
    }
}

fn load_config(cli: &Cli) -> Result<ProblemConfig, CliError> {
    let path = cli.config.as_ref().ok_or_else(|| CliError::input("--config is required"))?;
    let mut cfg = ProblemConfig::load(path)?;
    if let Some(t) = cli.feas_tol {
        cfg.solver.feas_tol = t;
    }
    if let Some(g) = cli.gap {
        cfg.solver.gap = g;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write_text(path: Option<&Path>, text: &str) -> Result<(), CliError> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| CliError::input(format!("{}: {e}", p.display()))),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes()).map_err(|e| CliError::input(e.to_string()))
        }
    }
}

fn to_json<T: serde::Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("report types serialize");
    s.push('\n');
    s
}

/// Tables go to stdout when the JSON goes to a file, to stderr otherwise.
fn table(cli: &Cli, text: &str) {
    if cli.out.is_some() {
        print!("{text}");
    } else {
        eprint!("{text}");
    }
}

fn poles_of(a: &Mat) -> Vec<(f64, f64)> {
    let mut p: Vec<(f64, f64)> = linalg::eigenvalues(a).map(|v| v.iter().map(|z| (z.re, z.im)).collect()).unwrap_or_default();
    p.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.total_cmp(&y.1)));
    p
}

fn version() -> String {
    env!("CARGO_PKG_VERSION").to_string()
}

fn factorize(
    cli: &Cli,
    name: &str,
    alpha: Option<f64>,
    eps: Option<f64>,
    num: Option<&[f64]>,
    den: Option<&[f64]>,
) -> Result<u8, CliError> {
    let cfg = match &cli.config {
        Some(_) => Some(load_config(cli)?),
        None => None,
    };
    let configured = cfg.as_ref().and_then(|c| c.iqcs.iter().find(|s| s.name() == name).cloned());
    let mut spec = match (name, configured) {
        (_, Some(s)) => s,
        ("popov", None) => IqcSpec::Popov { eps: 0.01 },
        ("zames_falb", None) => IqcSpec::ZamesFalb { eps: 0.01, filter: None },
        ("sector", None) => IqcSpec::Sector { eps: 0.01 },
        _ => return Err(CliError::input(format!("unknown multiplier {name:?}; expected popov, zames_falb or sector"))),
    };
    if let Some(e) = eps {
        match &mut spec {
            IqcSpec::Popov { eps } | IqcSpec::Sector { eps } | IqcSpec::ZamesFalb { eps, .. } => *eps = e,
        }
    }
    if num.is_some() || den.is_some() {
        match &mut spec {
            IqcSpec::ZamesFalb { filter, .. } => {
                let (n, d) = (num.unwrap_or(&[1.0]), den.ok_or_else(|| CliError::input("--filter-den is required"))?);
                *filter = Some(TfConfig { num: n.to_vec(), den: d.to_vec() });
            }
            _ => return Err(CliError::input("--filter-num/--filter-den apply to zames_falb only")),
        }
    }
    let alpha = alpha.or(cfg.as_ref().map(|c| c.alpha)).unwrap_or(1.0);
    let eps = match &spec {
        IqcSpec::Popov { eps } | IqcSpec::Sector { eps } | IqcSpec::ZamesFalb { eps, .. } => *eps,
    };
    let m = spec.standalone_multiplier(alpha)?;
    let f = j_spectral_factorize(&m, &FactorOptions::default())?;
    let t = to_triangular(&f)?;
    let g = &t.psi_bar;
    let mut tf = Vec::new();
    for i in 0..g.outputs() {
        let mut row = Vec::new();
        for j in 0..g.inputs() {
            let (num, den) = g.tf_coefficients(i, j, 1e-9).map_err(|e| CliError { code: EXIT_NUMERIC, msg: e.to_string() })?;
            row.push(Tf { num, den });
        }
        tf.push(row);
    }
    let diag = &f.diagnostics;
    let rep = FactorReport {
        multiplier: name.to_string(),
        alpha,
        eps,
        psi: (&f.psi).into(),
        psi_bar: g.into(),
        psi_bar_tf: tf,
        are_x: rows(&diag.are_x),
        are_residual: diag.are_residual,
        regularization: diag.regularization,
        residual: diag.residual,
        raw_residual: diag.raw_residual,
        bistable: f.is_bistable(0.0).unwrap_or(false),
    };
    let mut s = format!("multiplier {name} (alpha = {alpha}, eps = {eps})\n\n");
    s += &format!("Psi: {} states\n", f.psi.n());
    for (n, m) in [("A", &rep.psi.a), ("B", &rep.psi.b), ("C", &rep.psi.c), ("D", &rep.psi.d)] {
        s += &fmt_mat(n, m);
    }
    s += &format!("\nPsi_bar (triangular): {} states\n", g.n());
    for (n, m) in [("A", &rep.psi_bar.a), ("B", &rep.psi_bar.b), ("C", &rep.psi_bar.c), ("D", &rep.psi_bar.d)] {
        s += &fmt_mat(n, m);
    }
    s += "\nPsi_bar entries:\n";
    for (i, row) in rep.psi_bar_tf.iter().enumerate() {
        for (j, e) in row.iter().enumerate() {
            s += &format!("  ({},{}) = {}\n", i + 1, j + 1, fmt_tf(e));
        }
    }
    s += &fmt_mat("\nRiccati solution X", &rep.are_x);
    s += &format!("Riccati residual        {:.3e}\n", rep.are_residual);
    if let Some(r) = rep.regularization {
        s += &format!("regularization eps_D    {r:.1e}\n");
    }
    s += &format!("identity residual       {:.3e}  (raw {:.3e})\n", rep.residual, rep.raw_residual);
    s += &format!("Psi, Psi^-1 stable      {}\n", rep.bistable);
    table(cli, &s);
    write_text(cli.out.as_deref(), &to_json(&rep))?;
    if rep.residual < FACTOR_RESIDUAL_TOL {
        Ok(0)
    } else {
        eprintln!("error: identity residual {:.3e} exceeds {FACTOR_RESIDUAL_TOL:.0e}", rep.residual);
        Ok(EXIT_NUMERIC)
    }
}

fn synth(cli: &Cli) -> Result<u8, CliError> {
    let cfg = load_config(cli)?;
    let outcome = cfg.run()?;
    let rep = match &outcome {
        Outcome::Iqc { result: r, closed_loop } => SynthReport {
            problem: cfg.name.clone(),
            design: Design::Iqc,
            alpha: cfg.alpha,
            status: format!("{:?}", r.status),
            gamma: r.gamma,
            f_c: rows(&r.f_c),
            h_c: rows(&r.h_c),
            q: rows(&r.q),
            lambdas: r.lambdas.clone(),
            lambda_hat_l: r.lambda_hat_l.clone(),
            lambda_hat: Some(r.lambda_hat),
            gamma_scaling: rows(&r.gamma_scaling),
            sector_scaling: Vec::new(),
            round_trip_margin: Some(round_trip_margin(closed_loop, r)?),
            constraint_margins: r.margins.clone(),
            poles: poles_of(&closed_loop.a_cl),
            solver_iterations: r.iterations,
            solver_detail: r.solver_detail.clone(),
            metadata: Metadata { solve_time_s: r.solve_time, version: version() },
        },
        Outcome::AntiWindup { result: r, plant } => SynthReport {
            problem: cfg.name.clone(),
            design: Design::AntiWindup,
            alpha: cfg.alpha,
            status: format!("{:?}", r.status),
            gamma: r.gamma,
            f_c: rows(&r.f_c),
            h_c: rows(&r.h_c),
            q: rows(&r.q),
            lambdas: Vec::new(),
            lambda_hat_l: Vec::new(),
            lambda_hat: None,
            gamma_scaling: Vec::new(),
            sector_scaling: r.sector_scaling.clone(),
            round_trip_margin: None,
            constraint_margins: r.margins.clone(),
            poles: poles_of(&(&plant.a + &plant.b0 * &r.f_c)),
            solver_iterations: 0,
            solver_detail: String::new(),
            metadata: Metadata { solve_time_s: 0.0, version: version() },
        },
    };
    let mut s = format!("problem        {}\ndesign         {:?}\nalpha          {}\n", rep.problem, rep.design, rep.alpha);
    s += &format!("status         {}\ngamma          {:.6}\n", rep.status, rep.gamma);
    if !rep.lambdas.is_empty() {
        let names: Vec<&str> = cfg.iqcs.iter().map(|s| s.name()).collect();
        for (n, l) in names.iter().zip(&rep.lambdas) {
            s += &format!("lambda {n:<12} {l:.6}\n");
        }
    }
    if let Some(m) = rep.round_trip_margin {
        s += &format!("round trip     {m:.3e}\n");
    }
    s += &fmt_mat("F_c", &rep.f_c);
    s += &fmt_mat("H_c", &rep.h_c);
    s += "poles\n";
    for (re, im) in &rep.poles {
        s += &format!("  {re:>12.6} {im:>+12.6}i\n");
    }
    table(cli, &s);
    write_text(cli.out.as_deref(), &to_json(&rep))?;
    Ok(0)
}

fn load_report(path: &Path) -> Result<SynthReport, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

fn gains(rep: &SynthReport, n_u: usize, n: usize) -> Result<(Mat, Mat), CliError> {
    let f = mat(&rep.f_c, n_u, n).ok_or_else(|| CliError::input(format!("f_c must be {n_u}x{n}")))?;
    let h = mat(&rep.h_c, n_u, n_u).ok_or_else(|| CliError::input(format!("h_c must be {n_u}x{n_u}")))?;
    Ok((f, h))
}

fn analyze(cli: &Cli, result: Option<&Path>) -> Result<u8, CliError> {
    let cfg = load_config(cli)?;
    if cfg.design != Design::Iqc {
        return Err(CliError::input("analyze needs an iqc design"));
    }
    let rep = result.map(load_report).transpose()?;
    let alpha = rep.as_ref().map_or(cfg.alpha, |r| r.alpha);
    let open = cfg.closed_loop(alpha, None)?;
    let cl = match &rep {
        Some(r) => {
            let (f, h) = gains(r, open.n_u, open.n())?;
            open.with_gains(&f, &h)?
        }
        None => open,
    };
    let certificate_margin = match &rep {
        Some(r) => {
            let nq = cl.n_q;
            let q = mat(&r.q, cl.n(), cl.n()).ok_or_else(|| CliError::input("q has the wrong shape"))?;
            let g = mat(&r.gamma_scaling, nq, nq).ok_or_else(|| CliError::input("gamma_scaling has the wrong shape"))?;
            Some(certificate_margin(&cl, &q, &g, &r.lambdas, r.gamma)?)
        }
        None => None,
    };
    let an = build_analysis_lmi(&cl, &cfg.structure(), cfg.iqcs.len())?.solve(&cfg.solver_options())?;
    let out = AnalysisReport {
        problem: cfg.name.clone(),
        status: format!("{:?}", an.status),
        gamma: an.gamma,
        lambdas: an.lambdas.clone(),
        constraint_margins: an.margins.clone(),
        certificate_margin,
        metadata: Metadata { solve_time_s: 0.0, version: version() },
    };
    let mut s = format!("problem        {}\nstatus         {}\ngamma          {:.6}\n", out.problem, out.status, out.gamma);
    if let Some(m) = out.certificate_margin {
        s += &format!("certificate    {m:.3e}\n");
    }
    table(cli, &s);
    write_text(cli.out.as_deref(), &to_json(&out))?;
    Ok(0)
}

fn sweep(cli: &Cli, alpha: Option<&[f64]>) -> Result<u8, CliError> {
    let cfg = load_config(cli)?;
    let alphas: Vec<f64> = match (alpha, &cfg.sweep) {
        (Some(a), _) => a.to_vec(),
        (None, Some(s)) => s.alpha.clone(),
        (None, None) => return Err(CliError::input("no α values: pass --alpha or add sweep.alpha to the config")),
    };
    if alphas.is_empty() || alphas.iter().any(|&a| !(a > 0.0 && a.is_finite())) {
        return Err(CliError::input("α values must be positive"));
    }
    let cells: Vec<(usize, Strategy)> = (0..alphas.len()).flat_map(|i| Strategy::ALL.map(|s| (i, s))).collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.jobs.max(1))
        .build()
        .map_err(|e| CliError { code: EXIT_NUMERIC, msg: e.to_string() })?;
    let gammas: Vec<f64> = pool.install(|| cells.par_iter().map(|&(i, s)| cfg.sweep_cell(alphas[i], s)).collect());
    let mut buf = Vec::new();
    {
        let mut wr = csv::Writer::from_writer(&mut buf);
        let mut header = vec!["alpha".to_string()];
        header.extend(Strategy::ALL.iter().map(|s| s.column().to_string()));
        wr.write_record(&header).map_err(|e| CliError::input(e.to_string()))?;
        for (i, a) in alphas.iter().enumerate() {
            let mut rec = vec![a.to_string()];
            rec.extend((0..4).map(|k| gammas[i * 4 + k].to_string()));
            wr.write_record(&rec).map_err(|e| CliError::input(e.to_string()))?;
        }
        wr.flush().map_err(|e| CliError::input(e.to_string()))?;
    }
    let text = String::from_utf8(buf).expect("csv output is utf-8");
    if cli.out.is_some() {
        print!("{text}");
    }
    write_text(cli.out.as_deref(), &text)?;
    Ok(0)
}

enum Loop {
    Iqc { cl: satiqc_core::lft::ClosedLoop, p: Mat, gamma_scaling: Mat },
    Static { plant: SaturatedLFTPlant, f: Mat, h: Mat },
}

fn simulate_cmd(
    cli: &Cli,
    result: &Path,
    scenario: Option<&str>,
    random: Option<usize>,
    duration: f64,
    summary: Option<&Path>,
) -> Result<u8, CliError> {
    let cfg = load_config(cli)?;
    let rep = load_report(result)?;
    if rep.design != cfg.design {
        return Err(CliError::input(format!("result is a {:?} design, config is {:?}", rep.design, cfg.design)));
    }
    let lp = match cfg.design {
        Design::Iqc => {
            let open = cfg.closed_loop(rep.alpha, None)?;
            let (f, h) = gains(&rep, open.n_u, open.n())?;
            let cl = open.with_gains(&f, &h)?;
            let q = mat(&rep.q, cl.n(), cl.n()).ok_or_else(|| CliError::input("q has the wrong shape"))?;
            let p = q.try_inverse().ok_or_else(|| CliError::input("q is singular"))?;
            let gamma_scaling = mat(&rep.gamma_scaling, cl.n_q, cl.n_q).ok_or_else(|| CliError::input("gamma_scaling has the wrong shape"))?;
            Loop::Iqc { cl, p, gamma_scaling }
        }
        Design::AntiWindup => {
            let plant = cfg.plant()?;
            let (f, h) = gains(&rep, plant.n_u(), plant.n_x())?;
            Loop::Static { plant, f, h }
        }
    };
    let n_d = cfg.plant.n_d;
    let runs: Vec<(String, Scenario)> = match random {
        Some(k) => {
            let mut rng = ChaCha8Rng::seed_from_u64(cli.seed.unwrap_or(0));
            let st = cfg.structure();
            (0..k).map(|i| (format!("random_{i}"), Scenario::random(&mut rng, duration, n_d, &st))).collect()
        }
        None => {
            let ns = match scenario {
                Some(name) => cfg
                    .scenarios
                    .iter()
                    .find(|s| s.name == name)
                    .ok_or_else(|| CliError::input(format!("no scenario named {name:?}")))?,
                None => cfg.scenarios.first().ok_or_else(|| CliError::input("config has no scenarios"))?,
            };
            vec![(ns.name.clone(), ns.scenario.clone())]
        }
    };
    let mut summaries = Vec::new();
    let mut any_diverged = false;
    for (k, (name, sc)) in runs.iter().enumerate() {
        let (tr, poles, u_bar, dissipation) = match &lp {
            Loop::Iqc { cl, p, gamma_scaling } => {
                let tr = simulate(cl, sc)?;
                let dc = check_dissipation_with(&tr, p, gamma_scaling, &rep.lambdas, rep.gamma)?;
                (tr, poles_of(&cl.a_cl), cl.u_bar.clone(), Some(dc))
            }
            Loop::Static { plant, f, h } => {
                let tr = simulate_static(plant, f, h, sc)?;
                (tr, poles_of(&(&plant.a + &plant.b0 * f)), plant.u_bar.clone(), None)
            }
        };
        if let Some(out) = &cli.out {
            let path = if runs.len() == 1 { out.clone() } else { numbered(out, k) };
            tr.save_csv(&path)?;
        }
        any_diverged |= tr.diverged;
        summaries.push(summarize(name, &tr, rep.gamma, &u_bar, dissipation.as_ref(), poles));
    }
    let text = if summaries.len() == 1 { to_json(&summaries[0]) } else { to_json(&summaries) };
    write_text(summary, &text)?;
    if summary.is_some() {
        for s in &summaries {
            println!(
                "{:<20} gain {:>12} (gamma {:.4})  |x(T)| {:.3e}  diverged {}",
                s.scenario,
                s.empirical_l2_gain.map_or("undefined".to_string(), |g| format!("{g:.6}")),
                s.certified_gamma,
                s.terminal_state_norm,
                s.diverged
            );
        }
    }
    if any_diverged {
        eprintln!("error: simulation diverged");
        return Ok(EXIT_FAILED);
    }
    Ok(0)
}

fn numbered(p: &Path, k: usize) -> PathBuf {
    let stem = p.file_stem().and_then(|s| s.to_str()).unwrap_or("trace");
    let ext = p.extension().and_then(|s| s.to_str()).unwrap_or("csv");
    p.with_file_name(format!("{stem}_{k}.{ext}"))
}

fn summarize(
    name: &str,
    tr: &SimTrace,
    gamma: f64,
    u_bar: &DVector<f64>,
    dc: Option<&satiqc_core::sim::DissipationCheck>,
    poles: Vec<(f64, f64)>,
) -> SimSummary {
    SimSummary {
        scenario: name.to_string(),
        diverged: tr.diverged,
        samples: tr.len(),
        final_time: tr.t.last().copied().unwrap_or(0.0),
        empirical_l2_gain: empirical_l2_gain(tr).ok(),
        certified_gamma: gamma,
        terminal_state_norm: tr.terminal_state().map_or(0.0, |x| x.norm()),
        settling_time_1e_2: tr.settling_time(1e-2),
        saturation_ratio: tr.saturation_ratio(u_bar),
        dissipation_worst: dc.map(|d| d.worst()),
        dissipation_holds: dc.map(|d| d.holds(DISSIPATION_TOL)),
        poles,
    }
}
