//! JSON shapes written by the CLI and the plain-text tables.

use serde::{Deserialize, Serialize};

use satiqc_core::config::Design;
use satiqc_core::ss::linalg::Mat;
use satiqc_core::StateSpace;

pub type Rows = Vec<Vec<f64>>;

pub fn rows(m: &Mat) -> Rows {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

pub fn mat(r: &Rows, nrows: usize, ncols: usize) -> Option<Mat> {
    if nrows * ncols == 0 {
        return Some(Mat::zeros(nrows, ncols));
    }
    if r.len() != nrows || r.iter().any(|row| row.len() != ncols) {
        return None;
    }
    Some(Mat::from_fn(nrows, ncols, |i, j| r[i][j]))
}

#[derive(Serialize, Deserialize)]
pub struct Realization {
    pub a: Rows,
    pub b: Rows,
    pub c: Rows,
    pub d: Rows,
}

impl From<&StateSpace> for Realization {
    fn from(g: &StateSpace) -> Self {
        Self { a: rows(g.a()), b: rows(g.b()), c: rows(g.c()), d: rows(g.d()) }
    }
}

#[derive(Serialize, Deserialize)]
pub struct Tf {
    pub num: Vec<f64>,
    pub den: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
pub struct FactorReport {
    pub multiplier: String,
    pub alpha: f64,
    pub eps: f64,
    pub psi: Realization,
    pub psi_bar: Realization,
    /// entries of Ψ̄ row by row
    pub psi_bar_tf: Vec<Vec<Tf>>,
    pub are_x: Rows,
    pub are_residual: f64,
    pub regularization: Option<f64>,
    pub residual: f64,
    pub raw_residual: f64,
    pub bistable: bool,
}

#[derive(Serialize, Deserialize, Default)]
pub struct Metadata {
    pub solve_time_s: f64,
    pub version: String,
}

/// Result of `synth`. Everything outside `metadata` is deterministic for a
/// fixed config and solver settings.
#[derive(Serialize, Deserialize)]
pub struct SynthReport {
    pub problem: String,
    pub design: Design,
    pub alpha: f64,
    pub status: String,
    pub gamma: f64,
    pub f_c: Rows,
    pub h_c: Rows,
    pub q: Rows,
    /// λ_l per nonlinearity IQC
    pub lambdas: Vec<f64>,
    pub lambda_hat_l: Vec<f64>,
    pub lambda_hat: Option<f64>,
    /// Γ of the uncertainty IQC
    pub gamma_scaling: Rows,
    /// diagonal of Λ⁻¹ for the anti-windup design
    pub sector_scaling: Vec<f64>,
    pub round_trip_margin: Option<f64>,
    pub constraint_margins: Vec<(String, f64)>,
    /// closed-loop eigenvalues as (re, im)
    pub poles: Vec<(f64, f64)>,
    pub solver_iterations: u32,
    pub solver_detail: String,
    pub metadata: Metadata,
}

#[derive(Serialize, Deserialize)]
pub struct AnalysisReport {
    pub problem: String,
    pub status: String,
    pub gamma: f64,
    pub lambdas: Vec<f64>,
    pub constraint_margins: Vec<(String, f64)>,
    /// margin of the synthesis certificate itself, when a result was given
    pub certificate_margin: Option<f64>,
    pub metadata: Metadata,
}

#[derive(Serialize, Deserialize)]
pub struct SimSummary {
    pub scenario: String,
    pub diverged: bool,
    pub samples: usize,
    pub final_time: f64,
    /// ‖e‖₂/‖d‖₂; null when undefined (no disturbance or nonzero initial state)
    pub empirical_l2_gain: Option<f64>,
    pub certified_gamma: f64,
    pub terminal_state_norm: f64,
    pub settling_time_1e_2: Option<f64>,
    /// max |u|/ū per channel
    pub saturation_ratio: Vec<f64>,
    /// worst normalized dissipation margin; null for the anti-windup loop
    pub dissipation_worst: Option<f64>,
    pub dissipation_holds: Option<bool>,
    pub poles: Vec<(f64, f64)>,
}

pub fn fmt_poly(c: &[f64]) -> String {
    let n = c.len();
    let mut out = String::new();
    for (k, &v) in c.iter().enumerate() {
        if v.abs() < 1e-12 && n > 1 {
            continue;
        }
        let p = n - 1 - k;
        let sign = if out.is_empty() {
            if v < 0.0 {
                "-"
            } else {
                ""
            }
        } else if v < 0.0 {
            " - "
        } else {
            " + "
        };
        let term = match p {
            0 => format!("{:.6}", v.abs()),
            1 => format!("{:.6} s", v.abs()),
            _ => format!("{:.6} s^{p}", v.abs()),
        };
        out.push_str(sign);
        out.push_str(&term);
    }
    if out.is_empty() {
        "0".into()
    } else {
        out
    }
}

pub fn fmt_tf(t: &Tf) -> String {
    if t.den.len() == 1 {
        let k = t.num.last().copied().unwrap_or(0.0) / t.den[0];
        return format!("{k:.6}");
    }
    format!("({}) / ({})", fmt_poly(&t.num), fmt_poly(&t.den))
}

pub fn fmt_mat(name: &str, m: &Rows) -> String {
    let mut s = format!("{name} =");
    if m.is_empty() || m[0].is_empty() {
        s.push_str(" []\n");
        return s;
    }
    s.push('\n');
    for r in m {
        s.push_str("   ");
        for v in r {
            s.push_str(&format!(" {v:>14.6e}"));
        }
        s.push('\n');
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_text() {
        assert_eq!(fmt_poly(&[1.98, 0.0198]), "1.980000 s + 0.019800");
        assert_eq!(fmt_poly(&[1.0, 0.0, -2.0]), "1.000000 s^2 - 2.000000");
        assert_eq!(fmt_tf(&Tf { num: vec![-0.9802], den: vec![1.0] }), "-0.980200");
    }

    #[test]
    fn matrix_round_trip() {
        let m = Mat::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(mat(&rows(&m), 2, 3).unwrap(), m);
        assert!(mat(&rows(&m), 3, 2).is_none());
    }
}
