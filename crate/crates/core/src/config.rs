//! JSON problem definitions: plant, IQC selection, synthesis options and scenarios.

use std::path::Path;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::iqc::{
    default_zf_filter, j_spectral_factorize, make_loop_sector_multiplier, make_popov_multiplier, make_sector_multiplier,
    make_uncertainty_iqc, make_zames_falb_multiplier, to_triangular, FactorOptions, FactoredIQC, IqcError, Multiplier,
    TriangularFactor,
};
use crate::lft::{attach_filters, loop_transform, ClosedLoop, LftError, SaturatedLFTPlant, UncertaintyStructure};
use crate::lmi::{
    build_antiwindup_lmi, synthesize, AntiWindupResult, LmiError, SolverOptions, SynthesisOptions, SynthesisResult,
    DEFAULT_Q_MAX, DEFAULT_SCALING_FLOOR,
};
use crate::sim::Scenario;
use crate::ss::linalg::Mat;
use crate::ss::StateSpace;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{0}")]
    Parse(String),
    #[error("{field}: {msg}")]
    Field { field: String, msg: String },
    #[error("io: {0}")]
    Io(String),
}

fn field_err(field: impl Into<String>, msg: impl Into<String>) -> ConfigError {
    ConfigError::Field { field: field.into(), msg: msg.into() }
}

/// Errors from running a configured problem.
#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Iqc(#[from] IqcError),
    #[error(transparent)]
    Lft(#[from] LftError),
    #[error(transparent)]
    Lmi(#[from] LmiError),
}

type Rows = Vec<Vec<f64>>;

/// Plant matrices as row-major nested arrays. Omitted matrices are zero.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantConfig {
    pub n_x: usize,
    pub n_u: usize,
    #[serde(default)]
    pub n_q: usize,
    #[serde(default)]
    pub n_d: usize,
    #[serde(default)]
    pub n_e: usize,
    pub a: Rows,
    pub b0: Rows,
    #[serde(default)]
    pub b1: Option<Rows>,
    #[serde(default)]
    pub b2: Option<Rows>,
    #[serde(default)]
    pub c0: Option<Rows>,
    #[serde(default)]
    pub d00: Option<Rows>,
    #[serde(default)]
    pub d01: Option<Rows>,
    #[serde(default)]
    pub d02: Option<Rows>,
    #[serde(default)]
    pub c1: Option<Rows>,
    #[serde(default)]
    pub d10: Option<Rows>,
    #[serde(default)]
    pub d11: Option<Rows>,
    #[serde(default)]
    pub d12: Option<Rows>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TfConfig {
    pub num: Vec<f64>,
    pub den: Vec<f64>,
}

fn default_eps() -> f64 {
    0.01
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum IqcSpec {
    Popov {
        #[serde(default = "default_eps")]
        eps: f64,
    },
    ZamesFalb {
        #[serde(default = "default_eps")]
        eps: f64,
        /// H(s); 1/(s+2) when omitted
        #[serde(default)]
        filter: Option<TfConfig>,
    },
    Sector {
        #[serde(default = "default_eps")]
        eps: f64,
    },
}

impl IqcSpec {
    pub fn name(&self) -> &'static str {
        match self {
            IqcSpec::Popov { .. } => "popov",
            IqcSpec::ZamesFalb { .. } => "zames_falb",
            IqcSpec::Sector { .. } => "sector",
        }
    }

    fn zf_filter(filter: &Option<TfConfig>) -> Result<StateSpace, IqcError> {
        match filter {
            None => Ok(default_zf_filter()),
            Some(tf) => Ok(StateSpace::from_transfer_function(&tf.num, &tf.den)?),
        }
    }

    /// The multiplier as used in synthesis, loop-transformed with α.
    pub fn loop_multiplier(&self, alpha: f64) -> Result<Multiplier, IqcError> {
        match self {
            IqcSpec::Popov { eps } => make_popov_multiplier(alpha, *eps),
            IqcSpec::ZamesFalb { eps, filter } => make_zames_falb_multiplier(alpha, *eps, &Self::zf_filter(filter)?),
            IqcSpec::Sector { eps } => make_loop_sector_multiplier(alpha, *eps),
        }
    }

    /// The multiplier as printed by `factorize`: the static sector multiplier
    /// is factorized without the loop transformation.
    pub fn standalone_multiplier(&self, alpha: f64) -> Result<Multiplier, IqcError> {
        match self {
            IqcSpec::Sector { eps } => make_sector_multiplier(*eps),
            _ => self.loop_multiplier(alpha),
        }
    }

    pub fn triangular_factor(&self, alpha: f64) -> Result<TriangularFactor, IqcError> {
        to_triangular(&j_spectral_factorize(&self.loop_multiplier(alpha)?, &FactorOptions::default())?)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoleRegion {
    pub rho: f64,
    pub theta: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Design {
    /// dynamic IQC state feedback on the loop-transformed plant
    #[default]
    Iqc,
    /// static sector-condition controller u = F_c x + H_c N(u)
    #[serde(rename = "antiwindup")]
    AntiWindup,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    #[serde(default = "SolverConfig::feas_tol")]
    pub feas_tol: f64,
    #[serde(default = "SolverConfig::gap")]
    pub gap: f64,
    #[serde(default = "SolverConfig::max_iter")]
    pub max_iter: u32,
}

impl SolverConfig {
    fn feas_tol() -> f64 {
        SolverOptions::default().feas_tol
    }
    fn gap() -> f64 {
        SolverOptions::default().gap
    }
    fn max_iter() -> u32 {
        SolverOptions::default().max_iter
    }
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { feas_tol: Self::feas_tol(), gap: Self::gap(), max_iter: Self::max_iter() }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NamedScenario {
    pub name: String,
    #[serde(flatten)]
    pub scenario: Scenario,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub alpha: Vec<f64>,
}

fn default_q_max() -> Option<f64> {
    Some(DEFAULT_Q_MAX)
}

fn default_floor() -> Option<f64> {
    Some(DEFAULT_SCALING_FLOOR)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    #[serde(default)]
    pub name: String,
    pub plant: PlantConfig,
    #[serde(default)]
    pub uncertainty: Option<UncertaintyStructure>,
    pub u_bar: Vec<f64>,
    pub alpha: f64,
    #[serde(default)]
    pub design: Design,
    #[serde(default)]
    pub iqcs: Vec<IqcSpec>,
    #[serde(default)]
    pub pole_region: Option<PoleRegion>,
    /// |s| < r for every closed-loop pole
    #[serde(default)]
    pub pole_radius: Option<f64>,
    /// Q ≼ q_max·I; `null` removes the bound
    #[serde(default = "default_q_max")]
    pub q_max: Option<f64>,
    #[serde(default = "default_floor")]
    pub scaling_floor: Option<f64>,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub scenarios: Vec<NamedScenario>,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
}

/// Table strategies: a single IQC family or all three mixed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Strategy {
    Popov,
    ZamesFalb,
    Sector,
    Mixed,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [Strategy::Popov, Strategy::ZamesFalb, Strategy::Sector, Strategy::Mixed];

    pub fn column(&self) -> &'static str {
        match self {
            Strategy::Popov => "gamma_P",
            Strategy::ZamesFalb => "gamma_ZF",
            Strategy::Sector => "gamma_S",
            Strategy::Mixed => "gamma_M",
        }
    }
}

pub enum Outcome {
    Iqc { result: SynthesisResult, closed_loop: ClosedLoop },
    AntiWindup { result: AntiWindupResult, plant: SaturatedLFTPlant },
}

impl Outcome {
    pub fn gamma(&self) -> f64 {
        match self {
            Outcome::Iqc { result, .. } => result.gamma,
            Outcome::AntiWindup { result, .. } => result.gamma,
        }
    }
}

fn to_mat(field: &str, rows: &Rows, r: usize, c: usize) -> Result<Mat, ConfigError> {
    if r == 0 || c == 0 {
        let nonempty = rows.iter().any(|row| !row.is_empty());
        if nonempty {
            return Err(field_err(field, format!("expected an empty {r}×{c} matrix")));
        }
        return Ok(Mat::zeros(r, c));
    }
    if rows.len() != r {
        return Err(field_err(field, format!("expected {r} rows, got {}", rows.len())));
    }
    for (i, row) in rows.iter().enumerate() {
        if row.len() != c {
            return Err(field_err(field, format!("row {i} has {} entries, expected {c}", row.len())));
        }
        if let Some(j) = row.iter().position(|v| !v.is_finite()) {
            return Err(field_err(field, format!("entry ({i}, {j}) is not finite")));
        }
    }
    Ok(Mat::from_fn(r, c, |i, j| rows[i][j]))
}

fn opt_mat(field: &str, rows: &Option<Rows>, r: usize, c: usize) -> Result<Mat, ConfigError> {
    match rows {
        None => Ok(Mat::zeros(r, c)),
        Some(rows) => to_mat(field, rows, r, c),
    }
}

impl ProblemConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| ConfigError::Parse(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn structure(&self) -> UncertaintyStructure {
        self.uncertainty.clone().unwrap_or_else(UncertaintyStructure::empty)
    }

    /// Dimension and parameter checks; every error names the offending field.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let p = &self.plant;
        if p.n_x == 0 {
            return Err(field_err("plant.n_x", "must be positive"));
        }
        if p.n_u == 0 {
            return Err(field_err("plant.n_u", "must be positive"));
        }
        let st = self.structure();
        if st.n_q() != p.n_q {
            return Err(field_err("plant.n_q", format!("is {}, uncertainty blocks cover {}", p.n_q, st.n_q())));
        }
        st.validate().map_err(|e| field_err("uncertainty", e.to_string()))?;
        self.plant_with_alpha(self.alpha)?;
        if self.u_bar.len() != p.n_u {
            return Err(field_err("u_bar", format!("has {} entries, expected n_u = {}", self.u_bar.len(), p.n_u)));
        }
        if let Some(i) = self.u_bar.iter().position(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(field_err(format!("u_bar[{i}]"), "must be positive"));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(field_err("alpha", "must be positive"));
        }
        if self.design == Design::Iqc && self.iqcs.is_empty() {
            return Err(field_err("iqcs", "at least one IQC is required for the iqc design"));
        }
        for (i, spec) in self.iqcs.iter().enumerate() {
            let eps = match spec {
                IqcSpec::Popov { eps } | IqcSpec::Sector { eps } | IqcSpec::ZamesFalb { eps, .. } => *eps,
            };
            if !(eps > 0.0 && eps.is_finite()) {
                return Err(field_err(format!("iqcs[{i}].eps"), "must be positive"));
            }
            if let IqcSpec::ZamesFalb { filter: Some(tf), .. } = spec {
                if tf.den.is_empty() || tf.num.len() > tf.den.len() {
                    return Err(field_err(format!("iqcs[{i}].filter"), "H(s) must be proper with a nonempty denominator"));
                }
            }
        }
        if let Some(pr) = self.pole_region {
            if !(pr.rho > 0.0) {
                return Err(field_err("pole_region.rho", "must be positive"));
            }
            if !(pr.theta > 0.0 && pr.theta < std::f64::consts::FRAC_PI_2) {
                return Err(field_err("pole_region.theta", "must lie in (0, π/2)"));
            }
        }
        if let Some(r) = self.pole_radius {
            if !(r > 0.0 && r.is_finite()) {
                return Err(field_err("pole_radius", "must be positive"));
            }
        }
        if let Some(q) = self.q_max {
            if !(q > 0.0 && q.is_finite()) {
                return Err(field_err("q_max", "must be positive or null"));
            }
        }
        if let Some(f) = self.scaling_floor {
            if !(f > 0.0 && f.is_finite()) {
                return Err(field_err("scaling_floor", "must be positive or null"));
            }
        }
        let s = &self.solver;
        if !(s.feas_tol > 0.0) || !(s.gap > 0.0) || s.max_iter == 0 {
            return Err(field_err("solver", "tolerances and max_iter must be positive"));
        }
        for (i, ns) in self.scenarios.iter().enumerate() {
            ns.scenario
                .validate(p.n_x, p.n_d, &st)
                .map_err(|e| field_err(format!("scenarios[{i}] ({})", ns.name), e.to_string()))?;
        }
        if let Some(sw) = &self.sweep {
            if sw.alpha.is_empty() {
                return Err(field_err("sweep.alpha", "must be nonempty"));
            }
            if let Some(i) = sw.alpha.iter().position(|&a| !(a > 0.0 && a.is_finite())) {
                return Err(field_err(format!("sweep.alpha[{i}]"), "must be positive"));
            }
        }
        Ok(())
    }

    pub fn plant(&self) -> Result<SaturatedLFTPlant, ConfigError> {
        self.plant_with_alpha(self.alpha)
    }

    pub fn plant_with_alpha(&self, alpha: f64) -> Result<SaturatedLFTPlant, ConfigError> {
        let p = &self.plant;
        let (nx, nu, nq, nd, ne) = (p.n_x, p.n_u, p.n_q, p.n_d, p.n_e);
        let plant = SaturatedLFTPlant {
            a: to_mat("plant.a", &p.a, nx, nx)?,
            b0: to_mat("plant.b0", &p.b0, nx, nu)?,
            b1: opt_mat("plant.b1", &p.b1, nx, nq)?,
            b2: opt_mat("plant.b2", &p.b2, nx, nd)?,
            c0: opt_mat("plant.c0", &p.c0, nq, nx)?,
            d00: opt_mat("plant.d00", &p.d00, nq, nu)?,
            d01: opt_mat("plant.d01", &p.d01, nq, nq)?,
            d02: opt_mat("plant.d02", &p.d02, nq, nd)?,
            c1: opt_mat("plant.c1", &p.c1, ne, nx)?,
            d10: opt_mat("plant.d10", &p.d10, ne, nu)?,
            d11: opt_mat("plant.d11", &p.d11, ne, nq)?,
            d12: opt_mat("plant.d12", &p.d12, ne, nd)?,
            structure: self.structure(),
            u_bar: DVector::from_column_slice(&self.u_bar),
            alpha,
        };
        if self.u_bar.len() == nu && self.u_bar.iter().all(|&v| v > 0.0) && alpha > 0.0 {
            plant.validate().map_err(|e| field_err("plant", e.to_string()))?;
        }
        Ok(plant)
    }

    pub fn solver_options(&self) -> SolverOptions {
        SolverOptions {
            feas_tol: self.solver.feas_tol,
            gap: self.solver.gap,
            max_iter: self.solver.max_iter,
            ..SolverOptions::default()
        }
    }

    pub fn synthesis_options(&self) -> SynthesisOptions {
        SynthesisOptions {
            pole_region: self.pole_region.map(|p| (p.rho, p.theta)),
            pole_radius: self.pole_radius,
            q_max: self.q_max,
            scaling_floor: self.scaling_floor,
            solver: self.solver_options(),
        }
    }

    pub fn uncertainty_filters(&self) -> Result<Vec<FactoredIQC>, IqcError> {
        let st = self.structure();
        st.blocks().into_iter().map(|b| make_uncertainty_iqc(b, st.bound)).collect()
    }

    /// Nonlinearity filters for a table strategy; `Mixed` uses the
    /// configured list in order.
    pub fn strategy_iqcs(&self, s: Strategy) -> Vec<IqcSpec> {
        let find = |pred: fn(&IqcSpec) -> bool, fallback: IqcSpec| {
            self.iqcs.iter().find(|x| pred(x)).cloned().unwrap_or(fallback)
        };
        match s {
            Strategy::Popov => vec![find(|x| matches!(x, IqcSpec::Popov { .. }), IqcSpec::Popov { eps: default_eps() })],
            Strategy::ZamesFalb => vec![find(
                |x| matches!(x, IqcSpec::ZamesFalb { .. }),
                IqcSpec::ZamesFalb { eps: default_eps(), filter: None },
            )],
            Strategy::Sector => vec![find(|x| matches!(x, IqcSpec::Sector { .. }), IqcSpec::Sector { eps: default_eps() })],
            Strategy::Mixed => self.iqcs.clone(),
        }
    }

    /// IQC synthesis at a given α with the given nonlinearity IQCs.
    pub fn synthesize_iqc(&self, alpha: f64, iqcs: &[IqcSpec]) -> Result<(SynthesisResult, ClosedLoop), RunError> {
        let plant = self.plant_with_alpha(alpha)?;
        let aug = loop_transform(&plant)?;
        let filters = iqcs.iter().map(|s| s.triangular_factor(alpha)).collect::<Result<Vec<_>, _>>()?;
        let unc = self.uncertainty_filters()?;
        Ok(synthesize(&aug, &filters, &unc, &self.synthesis_options())?)
    }

    /// The IQC closed loop at α with the configured filters and the given
    /// gains; the zero controller when `gains` is `None`.
    pub fn closed_loop(&self, alpha: f64, gains: Option<(&Mat, &Mat)>) -> Result<ClosedLoop, RunError> {
        let plant = self.plant_with_alpha(alpha)?;
        let aug = loop_transform(&plant)?;
        let filters = self.iqcs.iter().map(|s| s.triangular_factor(alpha)).collect::<Result<Vec<_>, _>>()?;
        Ok(attach_filters(&aug, &filters, &self.uncertainty_filters()?, gains)?)
    }

    /// Run the configured design.
    pub fn run(&self) -> Result<Outcome, RunError> {
        match self.design {
            Design::Iqc => {
                let (result, closed_loop) = self.synthesize_iqc(self.alpha, &self.iqcs)?;
                Ok(Outcome::Iqc { result, closed_loop })
            }
            Design::AntiWindup => {
                let plant = self.plant()?;
                let lmi = build_antiwindup_lmi(&plant)?.with_q_bound(self.q_max)?;
                let result = lmi.solve(&self.solver_options())?;
                Ok(Outcome::AntiWindup { result, plant })
            }
        }
    }

    /// γ for one sweep cell; NaN when the solve fails.
    pub fn sweep_cell(&self, alpha: f64, s: Strategy) -> f64 {
        match self.synthesize_iqc(alpha, &self.strategy_iqcs(s)) {
            Ok((r, _)) => r.gamma,
            Err(e) => {
                log::warn!("sweep cell α = {alpha}, {}: {e}", s.column());
                f64::NAN
            }
        }
    }

    pub fn scenario(&self, name: &str) -> Option<&Scenario> {
        self.scenarios.iter().find(|s| s.name == name).map(|s| &s.scenario)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal() -> serde_json::Value {
        serde_json::json!({
            "plant": {"n_x": 1, "n_u": 1, "n_d": 1, "n_e": 1,
                      "a": [[-1.0]], "b0": [[1.0]], "b2": [[1.0]], "c1": [[1.0]]},
            "u_bar": [1.0],
            "alpha": 1.0,
            "iqcs": [{"kind": "sector"}]
        })
    }

    fn err_field(v: serde_json::Value) -> String {
        match ProblemConfig::from_json(&v.to_string()) {
            Err(ConfigError::Field { field, .. }) => field,
            other => panic!("expected a field error, got {:?}", other.map(|c| c.name)),
        }
    }

    #[test]
    fn defaults_fill_in() {
        let c = ProblemConfig::from_json(&minimal().to_string()).unwrap();
        assert_eq!(c.q_max, Some(DEFAULT_Q_MAX));
        assert_eq!(c.iqcs, vec![IqcSpec::Sector { eps: 0.01 }]);
        let p = c.plant().unwrap();
        assert_eq!(p.d12.shape(), (1, 1));
        assert_eq!(p.b1.shape(), (1, 0));
    }

    #[test]
    fn null_q_max_disables_bound() {
        let mut v = minimal();
        v["q_max"] = serde_json::Value::Null;
        assert_eq!(ProblemConfig::from_json(&v.to_string()).unwrap().q_max, None);
    }

    #[test]
    fn dimension_errors_name_the_field() {
        let mut v = minimal();
        v["plant"]["b0"] = serde_json::json!([[1.0], [2.0]]);
        assert_eq!(err_field(v), "plant.b0");
        let mut v = minimal();
        v["plant"]["c1"] = serde_json::json!([[1.0, 0.0]]);
        assert_eq!(err_field(v), "plant.c1");
        let mut v = minimal();
        v["u_bar"] = serde_json::json!([1.0, 1.0]);
        assert_eq!(err_field(v), "u_bar");
        let mut v = minimal();
        v["plant"]["n_q"] = serde_json::json!(2);
        assert_eq!(err_field(v), "plant.n_q");
        let mut v = minimal();
        v["pole_region"] = serde_json::json!({"rho": 1.0, "theta": 2.0});
        assert_eq!(err_field(v), "pole_region.theta");
        let mut v = minimal();
        v["scenarios"] = serde_json::json!([{"name": "s", "duration": 1.0, "x0": [1.0, 2.0]}]);
        assert_eq!(err_field(v), "scenarios[0] (s)");
    }

    #[test]
    fn unknown_fields_rejected() {
        let mut v = minimal();
        v["gamma"] = serde_json::json!(1.0);
        assert!(matches!(ProblemConfig::from_json(&v.to_string()), Err(ConfigError::Parse(_))));
    }

    #[test]
    fn strategies_pick_configured_parameters() {
        let mut v = minimal();
        v["iqcs"] = serde_json::json!([{"kind": "popov", "eps": 0.02}, {"kind": "sector"}]);
        let c = ProblemConfig::from_json(&v.to_string()).unwrap();
        assert_eq!(c.strategy_iqcs(Strategy::Popov), vec![IqcSpec::Popov { eps: 0.02 }]);
        assert_eq!(c.strategy_iqcs(Strategy::ZamesFalb), vec![IqcSpec::ZamesFalb { eps: 0.01, filter: None }]);
        assert_eq!(c.strategy_iqcs(Strategy::Mixed).len(), 2);
    }
}
