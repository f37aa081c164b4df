//! The ground state `ΔQ + Q^p = 0`, `Q(0) = 1`, its log-periodic tail and
//! the zero ladder of `ΛQ`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{phi_star_jet, ModelParams};
use crate::ode::{self, count_sign_changes, fit_log_oscillation, OdeError, OscillationFit, RadialFunction, RadialInit};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GroundStateError {
    #[error("integration failed: {0}")]
    Ode(#[from] OdeError),
    #[error("r_max = {0} too small (needs >= 1e3)")]
    RangeTooShort(f64),
    #[error("Q lost positivity or monotonicity at r = {0:e}")]
    Positivity(f64),
    #[error("no zero of ΛQ below r = {0:e}")]
    NoZeroBelow(f64),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroundState {
    pub params: ModelParams,
    pub profile: RadialFunction,
    pub lam_profile: RadialFunction,
    pub tail: OscillationFit,
    pub lam_tail: OscillationFit,
    pub zero_ladder: Vec<f64>,
}

pub fn compute_ground_state(params: &ModelParams, r_max: f64, tol: f64) -> Result<GroundState, GroundStateError> {
    if !(r_max >= 1e3) {
        return Err(GroundStateError::RangeTooShort(r_max));
    }
    let p = params.p;
    let a = params.two_over_pm1;
    let field = |r: f64, u: f64, du: f64| -2.0 * du / r - u.abs().powf(p - 1.0) * u;
    let init = RadialInit::Origin { u0: 1.0, u2: -1.0 / 6.0, r_min: 1e-6 };
    let q = ode::integrate_radial(field, init, (0.0, r_max), tol, "ground state Q")?;
    for i in 1..q.len() {
        if !(q.values[i] > 0.0 && q.derivs[i] < 0.0) {
            return Err(GroundStateError::Positivity(q.grid.nodes[i]));
        }
    }
    let second = q.second.clone().unwrap();
    let nodes = q.grid.nodes.clone();
    let mut lv = Vec::with_capacity(nodes.len());
    let mut ld = Vec::with_capacity(nodes.len());
    let mut l2 = Vec::with_capacity(nodes.len());
    for i in 0..nodes.len() {
        let (r, u, du, d2) = (nodes[i], q.values[i], q.derivs[i], second[i]);
        let d3 = if r > 0.0 { 2.0 * du / (r * r) - 2.0 * d2 / r - p * u.powf(p - 1.0) * du } else { 0.0 };
        lv.push(a * u + r * du);
        ld.push((a + 1.0) * du + r * d2);
        l2.push((a + 2.0) * d2 + r * d3);
    }
    let lam = RadialFunction::new(nodes.clone(), lv, ld, "ΛQ")?.with_second(l2);

    let window = (r_max.sqrt(), r_max);
    let dev = q.map(
        |r, u, du| {
            if r == 0.0 {
                (0.0, 0.0)
            } else {
                let (v, dv, _) = phi_star_jet(params, r);
                (u - v, du - dv)
            }
        },
        "Q - Φ*",
    );
    let tail = fit_log_oscillation(&dev, params.omega, window)?;
    let lam_tail = fit_log_oscillation(&lam, params.omega, window)?;
    let (_, zero_ladder) = count_sign_changes(&lam, (0.0, r_max), 1e-9)?;
    Ok(GroundState { params: *params, profile: q, lam_profile: lam, tail, lam_tail, zero_ladder })
}

impl GroundState {
    /// `(Q, Q')` at `x`, with the tail continued by `Φ*` plus the fitted
    /// oscillation beyond the computed range.
    pub fn eval(&self, x: f64) -> (f64, f64) {
        if x <= self.profile.r_max() {
            return self.profile.eval(x);
        }
        let w = self.params.omega;
        let f = &self.tail;
        let (v, dv, _) = phi_star_jet(&self.params, x);
        let t = w * x.ln() + f.phase;
        let amp = f.amplitude * x.powf(-0.5);
        (v + amp * t.sin(), dv + amp * (w * t.cos() - 0.5 * t.sin()) / x)
    }

    /// Phase offset predicted between the `ΛQ` and `Q − Φ*` tails.
    pub fn predicted_phase_shift(&self) -> f64 {
        let sc = self.params.s_c;
        let w = self.params.omega;
        ((1.0 - sc) / ((sc - 1.0).powi(2) + w * w).sqrt()).acos()
    }

    /// Quantization labels `q` and residuals `ω log r_q + c₈ − qπ` for the
    /// ladder, with `c₈` the fitted tail phase of `ΛQ`.
    pub fn quantization_residuals(&self) -> Vec<(i64, f64)> {
        let w = self.params.omega;
        let c8 = self.lam_tail.phase;
        let pi = std::f64::consts::PI;
        self.zero_ladder
            .iter()
            .map(|&r| {
                let t = w * r.ln() + c8;
                let q = (t / pi).round();
                (q as i64, t - q * pi)
            })
            .collect()
    }
}

/// The last zero of `ΛQ` strictly below `r_cut`.
pub fn lambda_q_zero_before(gs: &GroundState, r_cut: f64) -> Result<f64, GroundStateError> {
    gs.zero_ladder.iter().copied().filter(|&r| r < r_cut).last().ok_or(GroundStateError::NoZeroBelow(r_cut))
}
