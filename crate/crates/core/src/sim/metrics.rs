//! Empirical gain and the dissipation inequality evaluated along a trace.

use serde::{Deserialize, Serialize};

use super::engine::SimTrace;
use super::SimError;
use crate::lmi::SynthesisResult;
use crate::ss::linalg::Mat;

fn trapz(t: &[f64], f: impl Fn(usize) -> f64) -> f64 {
    (1..t.len()).map(|k| 0.5 * (t[k] - t[k - 1]) * (f(k) + f(k - 1))).sum()
}

/// ‖e‖₂ / ‖d‖₂ over the whole horizon by the trapezoidal rule.
pub fn empirical_l2_gain(trace: &SimTrace) -> Result<f64, SimError> {
    if trace.len() < 2 {
        return Err(SimError::ZeroDisturbance);
    }
    if trace.x_cl[0].iter().any(|&v| v != 0.0) {
        return Err(SimError::NonzeroInitialState);
    }
    let ed = trapz(&trace.t, |k| trace.d[k].norm_squared());
    if !(ed > 0.0) {
        return Err(SimError::ZeroDisturbance);
    }
    let ee = trapz(&trace.t, |k| trace.e[k].norm_squared());
    Ok((ee / ed).sqrt())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DissipationCheck {
    /// V̇ + Σ zᵀWz − γdᵀd + γ⁻¹eᵀe per sample
    pub margins: Vec<f64>,
    /// sum of the magnitudes of the individual terms per sample
    pub scales: Vec<f64>,
}

impl DissipationCheck {
    /// max_k margin_k / (1 + scale_k)
    pub fn worst(&self) -> f64 {
        self.margins.iter().zip(&self.scales).map(|(m, s)| m / (1.0 + s)).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn holds(&self, tol: f64) -> bool {
        self.margins.iter().zip(&self.scales).all(|(m, s)| *m < tol * (1.0 + s))
    }
}

/// Evaluate the dissipation inequality at every sample with P = Q⁻¹,
/// Γ = Γ̂⁻¹ and λ_l from the synthesis result. V̇ = 2xᵀPẋ uses the stored
/// derivative.
pub fn check_dissipation(trace: &SimTrace, result: &SynthesisResult) -> Result<DissipationCheck, SimError> {
    let p = result.q.clone().try_inverse().ok_or_else(|| SimError::Dimension("Q is singular".into()))?;
    check_dissipation_with(trace, &p, &result.gamma_scaling, &result.lambdas, result.gamma)
}

pub fn check_dissipation_with(
    trace: &SimTrace,
    p: &Mat,
    gamma_scaling: &Mat,
    lambdas: &[f64],
    gamma: f64,
) -> Result<DissipationCheck, SimError> {
    if trace.is_empty() {
        return Ok(DissipationCheck { margins: Vec::new(), scales: Vec::new() });
    }
    let nu = trace.u[0].len();
    let nf = lambdas.len();
    if nf == 0 || trace.z_n[0].len() != nf * nu {
        return Err(SimError::MissingChannels(format!(
            "trace carries {} nonlinearity filter outputs, certificate has {nf} filters of width {nu}",
            trace.z_n[0].len()
        )));
    }
    let nq = trace.p[0].len();
    if trace.z_delta[0].len() != nq || gamma_scaling.shape() != (nq, nq) {
        return Err(SimError::MissingChannels(format!(
            "trace carries {} uncertainty filter outputs for n_q = {nq}",
            trace.z_delta[0].len()
        )));
    }
    if p.shape() != (trace.x_cl[0].len(), trace.x_cl[0].len()) {
        return Err(SimError::Dimension(format!("P is {:?}, state has {}", p.shape(), trace.x_cl[0].len())));
    }
    let mut margins = Vec::with_capacity(trace.len());
    let mut scales = Vec::with_capacity(trace.len());
    for k in 0..trace.len() {
        let x = &trace.x_cl[k];
        let vdot = 2.0 * x.dot(&(p * &trace.x_cl_dot[k]));
        let th = &trace.z_delta[k];
        let pk = &trace.p[k];
        let unc_in = th.dot(&(gamma_scaling * th));
        let unc_out = pk.dot(&(gamma_scaling * pk));
        let ww = trace.w[k].norm_squared();
        let mut nl_in = 0.0;
        for (l, lam) in lambdas.iter().enumerate() {
            nl_in += lam * trace.z_n[k].rows(l * nu, nu).norm_squared();
        }
        let nl_out = lambdas.iter().sum::<f64>() * ww;
        let dd = gamma * trace.d[k].norm_squared();
        let ee = trace.e[k].norm_squared() / gamma;
        margins.push(vdot + unc_in - unc_out + nl_in - nl_out - dd + ee);
        scales.push(vdot.abs() + unc_in + unc_out + nl_in + nl_out + dd + ee);
    }
    Ok(DissipationCheck { margins, scales })
}

/// Running integral ∫₀ᵀ (|z_l|² − |w|²) dt of every nonlinearity filter's
/// IQC along the trace, one vector per filter.
pub fn nonlinearity_iqc_integrals(trace: &SimTrace, n_filters: usize) -> Vec<Vec<f64>> {
    if trace.is_empty() {
        return vec![Vec::new(); n_filters];
    }
    let nu = trace.u[0].len();
    (0..n_filters)
        .map(|l| {
            let f = |k: usize| trace.z_n[k].rows(l * nu, nu).norm_squared() - trace.w[k].norm_squared();
            let mut acc = 0.0;
            let mut out = vec![0.0];
            for k in 1..trace.len() {
                acc += 0.5 * (trace.t[k] - trace.t[k - 1]) * (f(k) + f(k - 1));
                out.push(acc);
            }
            out
        })
        .collect()
}
