//! Disturbance and uncertainty signals, and the scenario they make up.

use nalgebra::DVector;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::SimError;
use crate::lft::UncertaintyStructure;
use crate::ss::linalg::Mat;

/// Default RK4 step.
pub const DEFAULT_STEP: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Signal {
    Zero,
    Constant {
        value: f64,
    },
    /// `amplitude` for t ≥ `time`
    Step {
        time: f64,
        amplitude: f64,
    },
    /// a·sin(ωt + φ), optionally gated to [t_on, t_off)
    Sinusoid {
        amplitude: f64,
        frequency: f64,
        #[serde(default)]
        phase: f64,
        #[serde(default)]
        window: Option<(f64, f64)>,
    },
    /// Linear interpolation of uniformly spaced samples starting at t = 0, zero past the end.
    Samples {
        dt: f64,
        values: Vec<f64>,
    },
}

impl Signal {
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            Signal::Zero => 0.0,
            Signal::Constant { value } => *value,
            Signal::Step { time, amplitude } => {
                if t >= *time {
                    *amplitude
                } else {
                    0.0
                }
            }
            Signal::Sinusoid { amplitude, frequency, phase, window } => {
                if let Some((on, off)) = window {
                    if t < *on || t >= *off {
                        return 0.0;
                    }
                }
                amplitude * (frequency * t + phase).sin()
            }
            Signal::Samples { dt, values } => {
                if t < 0.0 || values.is_empty() {
                    return 0.0;
                }
                let s = t / dt;
                let i = s.floor() as usize;
                if i + 1 < values.len() {
                    let f = s - i as f64;
                    values[i] * (1.0 - f) + values[i + 1] * f
                } else if i + 1 == values.len() && s == i as f64 {
                    values[i]
                } else {
                    0.0
                }
            }
        }
    }

    /// sup_t |s(t)|
    pub fn sup(&self) -> f64 {
        match self {
            Signal::Zero => 0.0,
            Signal::Constant { value } => value.abs(),
            Signal::Step { amplitude, .. } => amplitude.abs(),
            Signal::Sinusoid { amplitude, .. } => amplitude.abs(),
            Signal::Samples { values, .. } => values.iter().fold(0.0, |m, v| m.max(v.abs())),
        }
    }

    fn validate(&self, what: &str) -> Result<(), SimError> {
        let finite = match self {
            Signal::Zero => true,
            Signal::Constant { value } => value.is_finite(),
            Signal::Step { time, amplitude } => time.is_finite() && amplitude.is_finite(),
            Signal::Sinusoid { amplitude, frequency, phase, window } => {
                amplitude.is_finite()
                    && frequency.is_finite()
                    && phase.is_finite()
                    && window.is_none_or(|(a, b)| a.is_finite() && b.is_finite() && a <= b)
            }
            Signal::Samples { dt, values } => *dt > 0.0 && dt.is_finite() && values.iter().all(|v| v.is_finite()),
        };
        if !finite {
            return Err(SimError::InvalidScenario(format!("{what}: non-finite or malformed signal {self:?}")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub duration: f64,
    #[serde(default = "default_step")]
    pub step: f64,
    /// one signal per disturbance channel; a single entry is broadcast to all channels
    #[serde(default)]
    pub disturbance: Vec<Signal>,
    /// one scalar signal per uncertainty block, Δ_k(t) = s_k(t)·I; empty means Δ ≡ 0
    #[serde(default)]
    pub uncertainty: Vec<Signal>,
    /// initial plant state; empty means zero
    #[serde(default)]
    pub x0: Vec<f64>,
}

fn default_step() -> f64 {
    DEFAULT_STEP
}

impl Scenario {
    pub fn new(duration: f64, disturbance: Signal) -> Self {
        Self { duration, step: DEFAULT_STEP, disturbance: vec![disturbance], uncertainty: Vec::new(), x0: Vec::new() }
    }

    pub fn with_uncertainty(mut self, u: Vec<Signal>) -> Self {
        self.uncertainty = u;
        self
    }

    pub fn with_x0(mut self, x0: Vec<f64>) -> Self {
        self.x0 = x0;
        self
    }

    pub fn with_step(mut self, h: f64) -> Self {
        self.step = h;
        self
    }

    /// Δ_k(t) = b·sin(t) on every block.
    pub fn stress_uncertainty(structure: &UncertaintyStructure) -> Vec<Signal> {
        let b = structure.bound;
        structure
            .blocks()
            .iter()
            .map(|_| Signal::Sinusoid { amplitude: b, frequency: 1.0, phase: 0.0, window: None })
            .collect()
    }

    pub fn n_steps(&self) -> usize {
        (self.duration / self.step).round() as usize
    }

    pub fn validate(&self, n_x: usize, n_d: usize, structure: &UncertaintyStructure) -> Result<(), SimError> {
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(SimError::InvalidScenario(format!("step must be positive, got {}", self.step)));
        }
        if !(self.duration > self.step && self.duration.is_finite()) {
            return Err(SimError::InvalidScenario(format!(
                "duration {} must exceed the step {}",
                self.duration, self.step
            )));
        }
        if !(self.disturbance.len() <= 1 || self.disturbance.len() == n_d) {
            return Err(SimError::InvalidScenario(format!(
                "{} disturbance signals for {n_d} channels",
                self.disturbance.len()
            )));
        }
        let nb = structure.blocks().len();
        if !(self.uncertainty.is_empty() || self.uncertainty.len() == nb) {
            return Err(SimError::InvalidScenario(format!(
                "{} uncertainty signals for {nb} blocks",
                self.uncertainty.len()
            )));
        }
        if !(self.x0.is_empty() || self.x0.len() == n_x) {
            return Err(SimError::InvalidScenario(format!("x0 has length {}, plant has {n_x} states", self.x0.len())));
        }
        if self.x0.iter().any(|v| !v.is_finite()) {
            return Err(SimError::InvalidScenario("x0 is not finite".into()));
        }
        for s in &self.disturbance {
            s.validate("disturbance")?;
        }
        for s in &self.uncertainty {
            s.validate("uncertainty")?;
        }
        Ok(())
    }

    pub fn x0_vec(&self, n_x: usize) -> DVector<f64> {
        if self.x0.is_empty() {
            DVector::zeros(n_x)
        } else {
            DVector::from_column_slice(&self.x0)
        }
    }

    pub fn disturbance_at(&self, t: f64, n_d: usize) -> DVector<f64> {
        match self.disturbance.len() {
            0 => DVector::zeros(n_d),
            1 => DVector::from_element(n_d, self.disturbance[0].eval(t)),
            _ => DVector::from_fn(n_d, |i, _| self.disturbance[i].eval(t)),
        }
    }

    /// Δ(t), checked against the structure's bound.
    pub fn delta_at(&self, t: f64, structure: &UncertaintyStructure) -> Result<Mat, SimError> {
        let nq = structure.n_q();
        let mut delta = Mat::zeros(nq, nq);
        if self.uncertainty.is_empty() {
            return Ok(delta);
        }
        let b = structure.bound;
        for ((blk, off), s) in structure.blocks().iter().zip(structure.offsets()).zip(&self.uncertainty) {
            let v = s.eval(t);
            if v.abs() > b * (1.0 + 1e-12) {
                return Err(SimError::InadmissibleUncertainty { t, norm: v.abs(), bound: b });
            }
            delta.view_mut((off, off), (blk.size(), blk.size())).fill_diagonal(v);
        }
        Ok(delta)
    }

    /// A random admissible scenario from zero initial state: windowed
    /// sinusoids on every disturbance channel and sinusoidal Δ_k(t) with
    /// |Δ_k| ≤ b.
    pub fn random<R: Rng>(rng: &mut R, duration: f64, n_d: usize, structure: &UncertaintyStructure) -> Self {
        let disturbance = (0..n_d)
            .map(|_| {
                let on = rng.random_range(0.0..duration * 0.4);
                let off = rng.random_range(on + duration * 0.1..duration * 0.7);
                Signal::Sinusoid {
                    amplitude: rng.random_range(0.05..1.0),
                    frequency: rng.random_range(0.1..5.0),
                    phase: rng.random_range(0.0..std::f64::consts::TAU),
                    window: Some((on, off)),
                }
            })
            .collect();
        let b = structure.bound;
        let uncertainty = structure
            .blocks()
            .iter()
            .map(|_| Signal::Sinusoid {
                amplitude: b * rng.random_range(0.0..=1.0),
                frequency: rng.random_range(0.0..3.0),
                phase: rng.random_range(0.0..std::f64::consts::TAU),
                window: None,
            })
            .collect();
        Self { duration, step: DEFAULT_STEP, disturbance, uncertainty, x0: Vec::new() }
    }
}
