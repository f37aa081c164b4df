//! Renormalized radial blow-up dynamics near a profile `Φₙ`: geometric
//! decomposition, modulation, a semi-implicit stepper for the perturbation,
//! and a physical-space solver used as an independent check.
//!
//! Everything lives on the finite-volume mesh of the `m = 0` weighted
//! operator. The profile itself is replaced by the discrete steady state
//! `Φ_h` of the same scheme, so that `Φ_h` is an exact fixed point of the
//! discrete flow and discretization error does not seed the unstable modes.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::construct::ProfileSolution;
use crate::model::ModelParams;
use crate::ode::{OdeError, RadialFunction};
use crate::spectral::{build_operator, fd_derivs, InnerBc, OperatorKind, Potential, SpectralError};
use crate::tridiag;

/// Default tube width for `‖v‖_∞`.
pub const DEFAULT_DELTA: f64 = 0.1;
pub const DYN_CELLS: usize = 1200;
pub const DYN_R: f64 = 10.0;
/// Gram matrices with a larger condition number are rejected.
pub const GRAM_COND_MAX: f64 = 1e8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("invalid dynamics request: {0}")]
    Invalid(String),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Ode(#[from] OdeError),
    #[error("discrete profile solve failed (residual {residual:e})")]
    ProfileNewton { residual: f64 },
    #[error("outside the tube: ‖v‖_∞ = {linf:e} > δ = {delta}")]
    OutsideTube { linf: f64, delta: f64 },
    #[error("decomposition Newton did not converge: {0}")]
    NoConvergence(String),
    #[error("Gram matrix ill-conditioned (cond {cond:e})")]
    IllConditioned { cond: f64 },
    #[error("mesh under-resolved near r = {r:e} (jump {jump:.3} of the maximum per cell)")]
    UnderResolved { r: f64, jump: f64 },
    #[error("non-finite state at s = {s}")]
    NonFinite { s: f64 },
}

#[inline]
fn pow_nl(p: f64, u: f64) -> f64 {
    u.abs().powf(p - 1.0) * u
}

fn dot_w(w: &[f64], u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).zip(w).map(|((a, b), m)| a * b * m).sum()
}

/// Solves a small dense system with partial pivoting, returning the
/// solution and a 1-norm condition estimate.
fn dense_solve(mut m: Vec<Vec<f64>>, rhs: &[f64]) -> Option<(Vec<f64>, f64)> {
    let n = rhs.len();
    let norm1 = |a: &Vec<Vec<f64>>| (0..n).map(|j| (0..n).map(|i| a[i][j].abs()).sum::<f64>()).fold(0.0, f64::max);
    let a_norm = norm1(&m);
    // augmented with the identity to get the inverse alongside
    for (i, row) in m.iter_mut().enumerate() {
        row.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
        row.push(rhs[i]);
    }
    for c in 0..n {
        let piv = (c..n).max_by(|&a, &b| m[a][c].abs().total_cmp(&m[b][c].abs()))?;
        if m[piv][c] == 0.0 {
            return None;
        }
        m.swap(c, piv);
        for r in 0..n {
            if r != c {
                let f = m[r][c] / m[c][c];
                if f != 0.0 {
                    for k in c..=2 * n {
                        m[r][k] -= f * m[c][k];
                    }
                }
            }
        }
    }
    let inv: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| m[i][n + j] / m[i][i]).collect()).collect();
    let x = (0..n).map(|i| m[i][2 * n] / m[i][i]).collect();
    Some((x, a_norm * norm1(&inv)))
}

/// Smooth cutoff: 1 on `[0, 1]`, 0 beyond 2, built from `exp(−1/x)`.
pub fn cutoff(x: f64) -> f64 {
    let f = |t: f64| if t > 0.0 { (-1.0 / t).exp() } else { 0.0 };
    let (a, b) = (f(2.0 - x), f(x - 1.0));
    a / (a + b)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowConfig {
    pub cells: usize,
    pub r_max: f64,
    pub delta: f64,
    /// Bootstrap rate; defaults to a quarter of the smallest positive
    /// discrete eigenvalue.
    pub mu: Option<f64>,
}

impl Default for FlowConfig {
    fn default() -> Self {
        FlowConfig { cells: DYN_CELLS, r_max: DYN_R, delta: DEFAULT_DELTA, mu: None }
    }
}

/// An unstable eigenpair `𝓛ψ = −μψ` of the discrete linearization.
#[derive(Debug, Clone)]
pub struct UnstableMode {
    pub mu: f64,
    /// Nodal values, unit norm in `L²_ρ`.
    pub psi: Vec<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub h2_rho: f64,
    pub l2_rho: f64,
    pub delta_v_l2: f64,
    pub linf_v: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvolutionState {
    pub s: f64,
    pub lambda: f64,
    /// Unstable coordinates `a_2, …, a_{n+1}`.
    pub a: Vec<f64>,
    /// Residual ε on `[0, R]` (zero at `R`).
    pub eps: RadialFunction,
    pub diagnostics: Diagnostics,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ExitCause {
    /// `‖v‖_∞ > δ`.
    Tube { linf: f64 },
    /// `Σ|a_j e^{μs}|² > 1`; `rate` is its s-derivative at exit.
    Unstable { value: f64, rate: f64 },
    /// `‖ε‖_{H²_ρ} e^{μs}` above the configured bound.
    Stable { value: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegimeExit {
    pub s: f64,
    pub cause: ExitCause,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModRecord {
    pub s: f64,
    /// `λ_s/λ + 1`.
    pub scaling: f64,
    /// `(a_j)_s − μ_j a_j`.
    pub a_rates: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Trajectory {
    pub states: Vec<EvolutionState>,
    pub physical_time: Vec<f64>,
    pub mod_record: Vec<ModRecord>,
    /// `max ‖ε‖_{H²_ρ} e^{μs}` over all steps.
    pub eps_weighted_max: f64,
    pub exit: Option<RegimeExit>,
    pub steps: usize,
}

impl Trajectory {
    /// Least-squares slope `c` of `λ² = c (T − t)` over the last third of
    /// the recorded states.
    pub fn blowup_slope(&self) -> Option<f64> {
        let n = self.states.len();
        if n < 6 {
            return None;
        }
        let pts: Vec<(f64, f64)> = (n - n / 3..n).map(|i| (self.physical_time[i], self.states[i].lambda.powi(2))).collect();
        let m = pts.len() as f64;
        let (sx, sy) = pts.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0, a.1 + p.1));
        let (mx, my) = (sx / m, sy / m);
        let (sxy, sxx) = pts.iter().fold((0.0, 0.0), |a, p| (a.0 + (p.0 - mx) * (p.1 - my), a.1 + (p.0 - mx).powi(2)));
        Some(-sxy / sxx)
    }

    /// `λ` at physical time `t` by log-linear interpolation.
    pub fn lambda_at(&self, t: f64) -> Option<f64> {
        let ts = &self.physical_time;
        if ts.is_empty() || t < ts[0] || t > *ts.last()? {
            return None;
        }
        let k = ts.partition_point(|&x| x <= t).clamp(1, ts.len() - 1);
        let (t0, t1) = (ts[k - 1], ts[k]);
        let (l0, l1) = (self.states[k - 1].lambda.ln(), self.states[k].lambda.ln());
        let th = if t1 > t0 { (t - t0) / (t1 - t0) } else { 0.0 };
        Some((l0 + th * (l1 - l0)).exp())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvolveConfig {
    pub ds: f64,
    pub record_every: usize,
    /// Renormalized time of the initial state for the bootstrap weights.
    pub s0: f64,
    /// Exit once `Σ|a_j e^{μs}|² > 1`.
    pub a_bound: bool,
    /// Exit once `‖ε‖_{H²_ρ} e^{μs}` exceeds this.
    pub eps_bound: f64,
}

impl Default for EvolveConfig {
    fn default() -> Self {
        EvolveConfig { ds: 1e-4, record_every: 1, s0: 0.0, a_bound: false, eps_bound: f64::INFINITY }
    }
}

/// The discrete renormalized flow around one profile.
#[derive(Debug, Clone)]
pub struct RenormalizedFlow {
    pub params: ModelParams,
    pub index_n: usize,
    pub profile: ProfileSolution,
    pub config: FlowConfig,
    /// Unknown positions on `[0, R)`; the value at `R` is fixed.
    pub nodes: Vec<f64>,
    /// Dual-cell masses of `r²ρ`.
    pub weights: Vec<f64>,
    pub mesh_scale: f64,
    dxi: f64,
    diag: Vec<f64>,
    off: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    right_flux: f64,
    /// Discrete steady profile.
    pub phi: Vec<f64>,
    pub phi_boundary: f64,
    /// Max nodal gap between `Φ_h` and the ODE profile.
    pub profile_gap: f64,
    /// `p|Φ_h|^{p−1}`.
    pot: Vec<f64>,
    /// `ΛΦₙ` at the nodes.
    pub lam_phi: Vec<f64>,
    pub gauge_eigenvalue: f64,
    pub modes: Vec<UnstableMode>,
    pub first_positive: f64,
    /// Bootstrap rate `μ`.
    pub mu: f64,
    basis: Vec<Vec<f64>>,
    gram_inv: Vec<Vec<f64>>,
    pub gram_cond: f64,
}

impl RenormalizedFlow {
    pub fn new(profile: &ProfileSolution, config: FlowConfig) -> Result<Self, DynamicsError> {
        let params = profile.params.clone();
        let (p, alpha) = (params.p, params.two_over_pm1);
        if !(config.r_max > 2.0 && config.delta > 0.0) {
            return Err(DynamicsError::Invalid(format!("R = {}, δ = {}", config.r_max, config.delta)));
        }
        let free = Potential::new("free", profile.mu, alpha, |_| 0.0);
        let op = build_operator(&free, 0, OperatorKind::Ln, (0.0, config.r_max), InnerBc::Regular, config.cells)?;
        let n = op.len();
        let w = op.weights.clone();
        let lower: Vec<f64> = (0..n).map(|i| if i > 0 { op.off[i - 1] * (w[i - 1] / w[i]).sqrt() } else { 0.0 }).collect();
        let upper: Vec<f64> = (0..n).map(|i| if i + 1 < n { op.off[i] * (w[i + 1] / w[i]).sqrt() } else { 0.0 }).collect();
        let mut flow = RenormalizedFlow {
            params,
            index_n: profile.index_n,
            profile: profile.clone(),
            config,
            nodes: op.nodes.clone(),
            weights: w,
            mesh_scale: op.mesh_scale,
            dxi: (config.r_max / op.mesh_scale).asinh() / config.cells as f64,
            diag: op.diag.clone(),
            off: op.off.clone(),
            lower,
            upper,
            right_flux: op.right_flux,
            phi: op.nodes.iter().map(|&r| profile.eval(r).0).collect(),
            phi_boundary: profile.eval(config.r_max).0,
            profile_gap: 0.0,
            pot: vec![],
            lam_phi: op.nodes.iter().map(|&r| profile.lambda_phi(r).0).collect(),
            gauge_eigenvalue: f64::NAN,
            modes: vec![],
            first_positive: f64::NAN,
            mu: f64::NAN,
            basis: vec![],
            gram_inv: vec![],
            gram_cond: f64::NAN,
        };
        flow.solve_profile()?;
        flow.profile_gap = flow.nodes.iter().zip(&flow.phi).map(|(&r, &v)| (v - profile.eval(r).0).abs() / profile.eval(r).0.abs()).fold(0.0, f64::max);
        flow.pot = flow.phi.iter().map(|&v| p * v.abs().powf(p - 1.0)).collect();
        flow.spectrum()?;
        flow.mu = config.mu.unwrap_or(0.25 * flow.first_positive);
        flow.build_basis()?;
        Ok(flow)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn inner(&self, u: &[f64], v: &[f64]) -> f64 {
        dot_w(&self.weights, u, v)
    }

    pub fn norm(&self, u: &[f64]) -> f64 {
        self.inner(u, u).sqrt()
    }

    /// `(−Δ + Λ) u` with `u(R) = 0`.
    pub fn apply_free(&self, u: &[f64]) -> Vec<f64> {
        let n = self.len();
        (0..n)
            .map(|i| {
                let mut y = self.diag[i] * u[i];
                if i > 0 {
                    y += self.lower[i] * u[i - 1];
                }
                if i + 1 < n {
                    y += self.upper[i] * u[i + 1];
                }
                y
            })
            .collect()
    }

    /// `𝓛ₙ u` for the discrete linearization at `Φ_h`.
    pub fn apply_linear(&self, u: &[f64]) -> Vec<f64> {
        let mut y = self.apply_free(u);
        for i in 0..y.len() {
            y[i] -= self.pot[i] * u[i];
        }
        y
    }

    fn extended(&self, u: &[f64], boundary: f64) -> (Vec<f64>, Vec<f64>) {
        let mut r = self.nodes.clone();
        r.push(self.config.r_max);
        let mut v = u.to_vec();
        v.push(boundary);
        (r, v)
    }

    /// Nodal `∂_r u` with `u(R) = boundary`.
    pub fn gradient(&self, u: &[f64], boundary: f64) -> Vec<f64> {
        let (r, v) = self.extended(u, boundary);
        let mut d = fd_derivs(&r, &v);
        d.truncate(self.len());
        d[0] = 0.0;
        d
    }

    /// `Λu = αu + r∂_r u` with `u(R) = 0`.
    pub fn lambda_op(&self, u: &[f64]) -> Vec<f64> {
        let g = self.gradient(u, 0.0);
        let a = self.params.two_over_pm1;
        (0..self.len()).map(|i| a * u[i] + self.nodes[i] * g[i]).collect()
    }

    /// Discrete `Δu = Λu − (−Δ + Λ)u`.
    pub fn laplacian(&self, u: &[f64]) -> Vec<f64> {
        let (l, f) = (self.lambda_op(u), self.apply_free(u));
        l.iter().zip(&f).map(|(a, b)| a - b).collect()
    }

    /// `|Φ + w|^{p−1}(Φ + w) − Φ^p − pΦ^{p−1}w`.
    pub fn nonlinear(&self, w: &[f64]) -> Vec<f64> {
        let p = self.params.p;
        (0..self.len())
            .map(|i| {
                let f = self.phi[i];
                pow_nl(p, f + w[i]) - pow_nl(p, f) - self.pot[i] * w[i]
            })
            .collect()
    }

    fn solve_profile(&mut self) -> Result<(), DynamicsError> {
        let p = self.params.p;
        let n = self.len();
        let src = self.right_flux / self.weights[n - 1] * self.phi_boundary;
        let sw: Vec<f64> = self.weights.iter().map(|w| w.sqrt()).collect();
        let residual = |phi: &[f64]| -> Vec<f64> {
            let mut g = self.apply_free(phi);
            g[n - 1] -= src;
            for i in 0..n {
                g[i] -= pow_nl(p, phi[i]);
            }
            g
        };
        // residual relative to the size of the individual terms, which
        // sets the roundoff floor near the origin
        let scale: f64 = (0..n).map(|i| self.diag[i].abs() * self.phi[i].abs() + pow_nl(p, self.phi[i]).abs()).fold(0.0, f64::max);
        let mut phi = self.phi.clone();
        let mut res = f64::INFINITY;
        for _ in 0..30 {
            let g = residual(&phi);
            let r = g.iter().fold(0.0f64, |m, v| m.max(v.abs())) / scale;
            if r < 1e-15 || r >= 0.5 * res {
                res = res.min(r);
                break;
            }
            res = r;
            let d: Vec<f64> = (0..n).map(|i| self.diag[i] - p * phi[i].abs().powf(p - 1.0)).collect();
            let b: Vec<f64> = (0..n).map(|i| -g[i] * sw[i]).collect();
            let y = tridiag::solve_shifted(&d, &self.off, 0.0, &b);
            for i in 0..n {
                phi[i] += y[i] / sw[i];
            }
        }
        if !(res < 1e-12) {
            return Err(DynamicsError::ProfileNewton { residual: res });
        }
        self.phi = phi;
        Ok(())
    }

    fn spectrum(&mut self) -> Result<(), DynamicsError> {
        let n = self.len();
        let d: Vec<f64> = (0..n).map(|i| self.diag[i] - self.pot[i]).collect();
        let neg = tridiag::sturm_count(&d, &self.off, 0.0);
        if neg != self.index_n + 1 {
            return Err(DynamicsError::Invalid(format!("{neg} negative modes for index {}", self.index_n)));
        }
        let bounds = tridiag::gershgorin(&d, &self.off);
        let eig: Vec<f64> = (0..=neg).map(|k| tridiag::bisect_eigenvalue(&d, &self.off, k, bounds)).collect();
        self.first_positive = eig[neg];
        let gauge = (0..neg).min_by(|&a, &b| (eig[a] + 2.0).abs().total_cmp(&(eig[b] + 2.0).abs())).unwrap_or(0);
        self.gauge_eigenvalue = eig[gauge];
        for (k, &lam) in eig[..neg].iter().enumerate() {
            if k == gauge {
                continue;
            }
            let y = tridiag::inverse_iteration(&d, &self.off, lam);
            let s = y[0].signum();
            let psi = y.iter().zip(&self.weights).map(|(v, w)| s * v / w.sqrt()).collect();
            self.modes.push(UnstableMode { mu: -lam, psi });
        }
        // ordered by decreasing instability, so a_2 is the fastest
        self.modes.sort_by(|a, b| b.mu.total_cmp(&a.mu));
        Ok(())
    }

    fn build_basis(&mut self) -> Result<(), DynamicsError> {
        let nl = self.norm(&self.lam_phi);
        let mut basis = vec![self.lam_phi.iter().map(|v| v / nl).collect::<Vec<_>>()];
        basis.extend(self.modes.iter().map(|m| m.psi.clone()));
        let k = basis.len();
        let gram: Vec<Vec<f64>> = (0..k).map(|i| (0..k).map(|j| self.inner(&basis[i], &basis[j])).collect()).collect();
        let mut inv = vec![vec![0.0; k]; k];
        let mut cond = 0.0;
        for j in 0..k {
            let e: Vec<f64> = (0..k).map(|i| if i == j { 1.0 } else { 0.0 }).collect();
            let (x, c) = dense_solve(gram.clone(), &e).ok_or(DynamicsError::IllConditioned { cond: f64::INFINITY })?;
            cond = c;
            for i in 0..k {
                inv[i][j] = x[i];
            }
        }
        if cond > GRAM_COND_MAX {
            return Err(DynamicsError::IllConditioned { cond });
        }
        self.basis = basis;
        self.gram_inv = inv;
        self.gram_cond = cond;
        Ok(())
    }

    /// Coefficients of `u` on `{ΛΦ/‖ΛΦ‖, ψ_2, …}` by `L²_ρ` projection.
    pub fn coefficients(&self, u: &[f64]) -> Vec<f64> {
        let pr: Vec<f64> = self.basis.iter().map(|e| self.inner(u, e)).collect();
        self.gram_inv.iter().map(|row| row.iter().zip(&pr).map(|(g, q)| g * q).sum()).collect()
    }

    /// Splits `w` into its gauge coefficient, unstable coordinates and ε.
    pub fn split(&self, w: &[f64]) -> (f64, Vec<f64>, Vec<f64>) {
        let c = self.coefficients(w);
        let mut eps = w.to_vec();
        for (ck, e) in c.iter().zip(&self.basis) {
            for i in 0..eps.len() {
                eps[i] -= ck * e[i];
            }
        }
        (c[0], c[1..].to_vec(), eps)
    }

    /// `max_k |(ε, e_k)_ρ|` over the normalized constraint directions.
    pub fn orthogonality_residual(&self, eps: &[f64]) -> f64 {
        self.basis.iter().map(|e| self.inner(eps, e).abs() / self.norm(e)).fold(0.0, f64::max)
    }

    pub fn h1_rho(&self, u: &[f64]) -> f64 {
        let g = self.gradient(u, 0.0);
        (self.inner(u, u) + self.inner(&g, &g)).sqrt()
    }

    pub fn diagnostics(&self, w: &[f64], eps: &[f64]) -> Diagnostics {
        let g = self.gradient(eps, 0.0);
        let lap = self.laplacian(eps);
        let lap_w = self.laplacian(w);
        let unweighted: f64 = (0..self.len()).map(|i| lap_w[i].powi(2) * self.weights[i] * (0.5 * self.nodes[i].powi(2)).exp()).sum();
        Diagnostics {
            h2_rho: (self.inner(eps, eps) + self.inner(&g, &g) + self.inner(&lap, &lap)).sqrt(),
            l2_rho: self.norm(eps),
            delta_v_l2: unweighted.sqrt(),
            linf_v: w.iter().fold(0.0f64, |m, v| m.max(v.abs())),
        }
    }

    fn radial(&self, u: &[f64], boundary: f64, meta: &str) -> Result<RadialFunction, DynamicsError> {
        let (r, v) = self.extended(u, boundary);
        let d = fd_derivs(&r, &v);
        Ok(RadialFunction::new(r, v, d, meta)?)
    }

    /// The state with perturbation `w = Σ a_j ψ_j + ε` at scale `lambda`.
    pub fn state(&self, s: f64, lambda: f64, w: &[f64]) -> Result<EvolutionState, DynamicsError> {
        let (_, a, eps) = self.split(w);
        Ok(EvolutionState { s, lambda, a, diagnostics: self.diagnostics(w, &eps), eps: self.radial(&eps, 0.0, "eps")? })
    }

    /// Nodal `w` of a state.
    pub fn perturbation(&self, state: &EvolutionState) -> Vec<f64> {
        let mut w = state.eps.values[..self.len()].to_vec();
        for (a, m) in state.a.iter().zip(&self.modes) {
            for i in 0..w.len() {
                w[i] += a * m.psi[i];
            }
        }
        w
    }

    /// The exact discrete profile at scale `lambda`, optionally shifted
    /// along the unstable modes and by a given ε.
    pub fn seeded(&self, lambda: f64, a: &[f64], eps: Option<&[f64]>) -> Result<EvolutionState, DynamicsError> {
        let mut w = eps.map(|e| e.to_vec()).unwrap_or_else(|| vec![0.0; self.len()]);
        for (c, m) in a.iter().zip(&self.modes) {
            for i in 0..w.len() {
                w[i] += c * m.psi[i];
            }
        }
        // remove any gauge component so the state is admissible as given
        let (c0, ..) = self.split(&w);
        for i in 0..w.len() {
            w[i] -= c0 * self.basis[0][i];
        }
        self.state(0.0, lambda, &w)
    }

    /// Makes `u` orthogonal to the constraint directions in `L²_ρ`.
    pub fn orthogonalize(&self, u: &[f64]) -> Vec<f64> {
        self.split(u).2
    }

    /// Physical function `u(r) = λ^{−α}(Φ_h + w)(r/λ)` on `[0, λR]`,
    /// continued by the profile `λ^{−α}Φₙ(r/λ)` up to `2λR`.
    pub fn to_physical(&self, state: &EvolutionState) -> Result<RadialFunction, DynamicsError> {
        let w = self.perturbation(state);
        let a = self.params.two_over_pm1;
        let l = state.lambda;
        let big_r = self.config.r_max;
        let mut y = self.nodes.clone();
        let mut v: Vec<f64> = (0..self.len()).map(|i| self.phi[i] + w[i]).collect();
        let h = big_r - self.nodes[self.len() - 1];
        let extra = (big_r / h).ceil() as usize;
        for k in 0..=extra {
            let x = big_r + k as f64 * big_r / extra as f64;
            y.push(x);
            v.push(if k == 0 { self.phi_boundary } else { self.profile.eval(x).0 });
        }
        let d = fd_derivs(&y, &v);
        let r: Vec<f64> = y.iter().map(|y| l * y).collect();
        let vals = v.iter().map(|v| l.powf(-a) * v).collect();
        let ders = d.iter().map(|d| l.powf(-a - 1.0) * d).collect();
        Ok(RadialFunction::new(r, vals, ders, "u")?)
    }

    /// Modulated decomposition of a physical profile: finds `λ` and `a_j`
    /// so that `ε = λ^α u(λ·) − Φ_h − Σ a_j ψ_j` is `ρ`-orthogonal to
    /// `ΛΦ` and every `ψ_j`.
    pub fn decompose(&self, u: &RadialFunction, lambda_guess: f64, s: f64) -> Result<EvolutionState, DynamicsError> {
        let (lambda, w) = self.decompose_nodal(u, lambda_guess)?;
        self.state(s, lambda, &w)
    }

    fn decompose_nodal(&self, u: &RadialFunction, lambda_guess: f64) -> Result<(f64, Vec<f64>), DynamicsError> {
        let a = self.params.two_over_pm1;
        let sample = |l: f64| -> Result<(Vec<f64>, Vec<f64>), DynamicsError> {
            if !(l > 0.0) || l * self.config.r_max > u.r_max() * (1.0 + 1e-12) {
                return Err(DynamicsError::NoConvergence(format!("scale λ = {l:e} leaves the data range")));
            }
            let mut w = Vec::with_capacity(self.len());
            let mut dw = Vec::with_capacity(self.len());
            for (i, &y) in self.nodes.iter().enumerate() {
                let (v, dv) = u.eval((l * y).min(u.r_max()));
                w.push(l.powf(a) * v - self.phi[i]);
                dw.push(a * l.powf(a - 1.0) * v + l.powf(a) * y * dv);
            }
            Ok((w, dw))
        };
        let mut l = lambda_guess;
        let mut prev = f64::INFINITY;
        for _ in 0..60 {
            let (w, dw) = sample(l)?;
            let linf = w.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if linf > self.config.delta {
                return Err(DynamicsError::OutsideTube { linf, delta: self.config.delta });
            }
            let f = self.coefficients(&w)[0];
            let df = self.coefficients(&dw)[0];
            if !(df.abs() > 0.0) {
                return Err(DynamicsError::NoConvergence("flat constraint".into()));
            }
            let step = (f / df).clamp(-0.2 * l, 0.2 * l);
            l -= step;
            // converged, or stalled at the interpolation noise floor
            if step.abs() <= 1e-15 * l || (step.abs() <= 1e-10 * l && step.abs() >= 0.5 * prev) {
                let (w, _) = sample(l)?;
                return Ok((l, w));
            }
            prev = step.abs();
        }
        Err(DynamicsError::NoConvergence(format!("λ iteration stalled near {l:e}")))
    }

    /// `(λ_s/λ + 1, (a_j)_s − μ_j a_j)` from pairing the flow with the
    /// constraint directions.
    pub fn modulation_coefficients(&self, state: &EvolutionState) -> Result<(f64, Vec<f64>), DynamicsError> {
        let w = self.perturbation(state);
        self.modulation_nodal(&w)
    }

    fn modulation_nodal(&self, w: &[f64]) -> Result<(f64, Vec<f64>), DynamicsError> {
        let k = self.basis.len();
        let lw = self.lambda_op(w);
        let g: Vec<f64> = (0..self.len()).map(|i| self.lam_phi[i] + lw[i]).collect();
        let lin = self.apply_linear(w);
        let nl = self.nonlinear(w);
        let f: Vec<f64> = (0..self.len()).map(|i| nl[i] - lin[i]).collect();
        let m: Vec<Vec<f64>> = (0..k)
            .map(|r| {
                let e = &self.basis[r];
                let mut row = vec![-self.inner(&g, e)];
                row.extend(self.modes.iter().map(|md| self.inner(&md.psi, e)));
                row
            })
            .collect();
        let rhs: Vec<f64> = self.basis.iter().map(|e| self.inner(&f, e)).collect();
        let (x, cond) = dense_solve(m, &rhs).ok_or(DynamicsError::IllConditioned { cond: f64::INFINITY })?;
        if cond > GRAM_COND_MAX {
            return Err(DynamicsError::IllConditioned { cond });
        }
        let (_, a, _) = self.split(w);
        let rates = self.modes.iter().enumerate().map(|(j, md)| x[1 + j] - md.mu * a[j]).collect();
        Ok((x[0], rates))
    }

    /// `(I + ds𝓛ₙ)^{-1} rhs`.
    fn implicit_solve(&self, ds: f64, rhs: &[f64]) -> Vec<f64> {
        let n = self.len();
        let sw: Vec<f64> = self.weights.iter().map(|w| w.sqrt()).collect();
        let d: Vec<f64> = (0..n).map(|i| 1.0 + ds * (self.diag[i] - self.pot[i])).collect();
        let e: Vec<f64> = self.off.iter().map(|o| ds * o).collect();
        let b: Vec<f64> = (0..n).map(|i| rhs[i] * sw[i]).collect();
        let y = tridiag::solve_shifted(&d, &e, 0.0, &b);
        (0..n).map(|i| y[i] / sw[i]).collect()
    }

    /// One linearly implicit Euler step; the scaling rate `b = λ_s/λ + 1`
    /// is chosen so that the new perturbation has no `ΛΦ` component.
    fn euler(&self, w: &[f64], ds: f64) -> (Vec<f64>, f64) {
        let n = self.len();
        let nl = self.nonlinear(w);
        let lw = self.lambda_op(w);
        let r0: Vec<f64> = (0..n).map(|i| w[i] + ds * nl[i]).collect();
        let g: Vec<f64> = (0..n).map(|i| ds * (self.lam_phi[i] + lw[i])).collect();
        let x0 = self.implicit_solve(ds, &r0);
        let xg = self.implicit_solve(ds, &g);
        let b = -self.coefficients(&x0)[0] / self.coefficients(&xg)[0];
        ((0..n).map(|i| x0[i] + b * xg[i]).collect(), ds * (b - 1.0))
    }

    /// Richardson-extrapolated step: returns the new perturbation and the
    /// increment of `log λ`.
    fn step_nodal(&self, w: &[f64], ds: f64) -> (Vec<f64>, f64) {
        let (wa, da) = self.euler(w, ds);
        let (wh, d1) = self.euler(w, 0.5 * ds);
        let (wb, d2) = self.euler(&wh, 0.5 * ds);
        let mut out: Vec<f64> = wa.iter().zip(&wb).map(|(a, b)| 2.0 * b - a).collect();
        // the combination is orthogonal by linearity; remove roundoff
        let c0 = self.coefficients(&out)[0];
        for i in 0..out.len() {
            out[i] -= c0 * self.basis[0][i];
        }
        (out, 2.0 * (d1 + d2) - da)
    }

    /// A single step of the renormalized flow.
    pub fn step(&self, state: &EvolutionState, ds: f64) -> Result<EvolutionState, DynamicsError> {
        let w = self.perturbation(state);
        let (w1, dl) = self.step_nodal(&w, ds);
        let next = self.state(state.s + ds, state.lambda * dl.exp(), &w1)?;
        if !next.diagnostics.linf_v.is_finite() {
            return Err(DynamicsError::NonFinite { s: next.s });
        }
        Ok(next)
    }

    fn a_weighted(&self, a: &[f64], s: f64) -> f64 {
        a.iter().map(|x| (x * (self.mu * s).exp()).powi(2)).sum()
    }

    /// Runs the flow for `s_span` or until a bootstrap bound fails.
    pub fn evolve(&self, initial: &EvolutionState, s_span: f64, cfg: &EvolveConfig) -> Result<Trajectory, DynamicsError> {
        if !(cfg.ds > 0.0 && s_span > 0.0) {
            return Err(DynamicsError::Invalid(format!("ds = {}, span = {s_span}", cfg.ds)));
        }
        let linf0 = initial.diagnostics.linf_v;
        if linf0 > self.config.delta {
            return Err(DynamicsError::OutsideTube { linf: linf0, delta: self.config.delta });
        }
        let steps = (s_span / cfg.ds).round().max(1.0) as usize;
        let every = cfg.record_every.max(1);
        let mut w = self.perturbation(initial);
        let mut log_l = initial.lambda.ln();
        let mut s = initial.s;
        let mut t = 0.0;
        let mut traj = Trajectory { states: vec![initial.clone()], physical_time: vec![0.0], mod_record: vec![], eps_weighted_max: 0.0, exit: None, steps: 0 };
        let weighted = |st: &EvolutionState| st.diagnostics.h2_rho * (self.mu * (cfg.s0 + st.s - initial.s)).exp();
        traj.eps_weighted_max = weighted(initial);
        for k in 1..=steps {
            let (b, rates) = self.modulation_nodal(&w)?;
            traj.mod_record.push(ModRecord { s, scaling: b, a_rates: rates });
            let (w1, dl) = self.step_nodal(&w, cfg.ds);
            let lam = log_l.exp();
            t += lam * lam * cfg.ds * if dl.abs() > 1e-300 { (2.0 * dl).exp_m1() / (2.0 * dl) } else { 1.0 };
            log_l += dl;
            s = initial.s + k as f64 * cfg.ds;
            w = w1;
            traj.steps = k;
            let (_, a, eps) = self.split(&w);
            let diag = self.diagnostics(&w, &eps);
            if !diag.linf_v.is_finite() || !log_l.is_finite() {
                return Err(DynamicsError::NonFinite { s });
            }
            let sb = cfg.s0 + s - initial.s;
            let ew = diag.h2_rho * (self.mu * sb).exp();
            traj.eps_weighted_max = traj.eps_weighted_max.max(ew);
            let exit = if diag.linf_v > self.config.delta {
                Some(ExitCause::Tube { linf: diag.linf_v })
            } else if cfg.a_bound && self.a_weighted(&a, sb) > 1.0 {
                let (_, rates) = self.modulation_nodal(&w)?;
                // d/ds Σ (a e^{μs})² = 2 Σ a (a_s + μa) e^{2μs}
                let rate = self.modes.iter().enumerate().map(|(j, m)| 2.0 * a[j] * (rates[j] + (m.mu + self.mu) * a[j]) * (2.0 * self.mu * sb).exp()).sum();
                Some(ExitCause::Unstable { value: self.a_weighted(&a, sb), rate })
            } else if ew > cfg.eps_bound {
                Some(ExitCause::Stable { value: ew })
            } else {
                None
            };
            if k % every == 0 || k == steps || exit.is_some() {
                traj.states.push(EvolutionState { s, lambda: log_l.exp(), a, eps: self.radial(&eps, 0.0, "eps")?, diagnostics: diag });
                traj.physical_time.push(t);
            }
            if let Some(cause) = exit {
                traj.exit = Some(RegimeExit { s, cause });
                break;
            }
        }
        Ok(traj)
    }

    /// Initial data in physical variables: the state on `[0, λR]`, continued
    /// by `λ^{−α}Φₙ(r/λ)χ(r)` with the cutoff `χ` of radius 1 (`A = 1/λ`
    /// in renormalized variables).
    pub fn physical_data(&self, state: &EvolutionState, mesh: &PhysicalMesh) -> Result<RadialFunction, DynamicsError> {
        let l = state.lambda;
        if l * self.config.r_max > 1.0 {
            return Err(DynamicsError::Invalid(format!("λR = {} must lie inside the cutoff radius 1", l * self.config.r_max)));
        }
        let inner = self.to_physical(state)?;
        let a = self.params.two_over_pm1;
        let mut r = mesh.nodes.clone();
        r.push(mesh.r_max);
        let vals: Vec<f64> =
            r.iter().map(|&x| if x <= l * self.config.r_max { inner.value(x) } else { l.powf(-a) * self.profile.eval(x / l).0 * cutoff(x) }).collect();
        let d = fd_derivs(&r, &vals);
        Ok(RadialFunction::new(r, vals, d, "u0")?)
    }

    /// A physical mesh whose nodes are `λ0` times the flow nodes on
    /// `[0, λ0 R]`, continued with the same grading to at least `r_max`.
    pub fn matched_mesh(&self, lambda0: f64, r_max: f64) -> Result<PhysicalMesh, DynamicsError> {
        let s = lambda0 * self.mesh_scale;
        let cells = ((r_max / s).asinh() / self.dxi).ceil() as usize;
        let big_r = s * (cells as f64 * self.dxi).sinh();
        PhysicalMesh::new(cells, big_r, 4.0 * s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OuterBc {
    /// `u(R)` held at its initial value.
    Dirichlet,
    /// Zero flux at `R`.
    Neumann,
}

/// Finite-volume discretization of the radial Laplacian (measure `r²dr`).
#[derive(Debug, Clone)]
pub struct PhysicalMesh {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub r_max: f64,
    diag: Vec<f64>,
    off: Vec<f64>,
    right_flux: f64,
}

impl PhysicalMesh {
    /// `scale` is four times the sinh-mesh length scale near the origin.
    pub fn new(cells: usize, r_max: f64, scale: f64) -> Result<Self, DynamicsError> {
        let free = Potential::new("free", scale, 0.0, |_| 0.0);
        let op = build_operator(&free, 0, OperatorKind::H, (0.0, r_max), InnerBc::Regular, cells)?;
        Ok(PhysicalMesh { nodes: op.nodes, weights: op.weights, r_max, diag: op.diag, off: op.off, right_flux: op.right_flux })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn diag_for(&self, bc: OuterBc) -> Vec<f64> {
        let mut d = self.diag.clone();
        if bc == OuterBc::Neumann {
            let n = d.len();
            d[n - 1] -= self.right_flux / self.weights[n - 1];
        }
        d
    }

    /// Discrete energy `∫ |∂u|²/2 − |u|^{p+1}/(p+1)` in the measure `r²dr`.
    pub fn energy(&self, p: f64, u: &[f64], boundary: Option<f64>) -> f64 {
        let n = self.len();
        let mut e = 0.0;
        for i in 0..n - 1 {
            let f = -self.off[i] * (self.weights[i] * self.weights[i + 1]).sqrt();
            e += 0.5 * f * (u[i + 1] - u[i]).powi(2);
        }
        if let Some(ub) = boundary {
            e += 0.5 * self.right_flux * (u[n - 1] - ub).powi(2);
        }
        e - (0..n).map(|i| self.weights[i] * u[i].abs().powf(p + 1.0) / (p + 1.0)).sum::<f64>()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalConfig {
    pub outer: OuterBc,
    /// Step bound `dt · p max|u|^{p−1} ≤ cfl`.
    pub cfl: f64,
    pub dt_max: f64,
    pub max_steps: usize,
    pub output_every: usize,
    /// Stop once `max|u|` exceeds this.
    pub u_stop: f64,
    /// Largest admissible jump of `u` across one cell, relative to `max|u|`.
    pub grad_threshold: f64,
}

impl Default for PhysicalConfig {
    fn default() -> Self {
        PhysicalConfig {
            outer: OuterBc::Dirichlet,
            cfl: 0.02,
            dt_max: 1e-3,
            max_steps: 2_000_000,
            output_every: 10,
            u_stop: f64::INFINITY,
            grad_threshold: 0.5,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PhysicalRun {
    pub times: Vec<f64>,
    pub energy: Vec<f64>,
    pub u_max: Vec<f64>,
    /// Decomposed states at the output times, when a flow was supplied.
    pub trajectory: Option<Trajectory>,
    /// `t + max|u|^{1−p}/(p−1)` at the stop, when `u_stop` was reached.
    pub blowup_estimate: Option<f64>,
    pub steps: usize,
    /// Nodal solution at the last step.
    pub final_u: Vec<f64>,
}

/// Direct method-of-lines solve of `u_t = Δu + |u|^{p−1}u`: implicit
/// diffusion with a linearized reaction, Richardson-extrapolated in time.
pub fn physical_evolve(
    params: &ModelParams,
    mesh: &PhysicalMesh,
    u0: &RadialFunction,
    t_span: f64,
    cfg: &PhysicalConfig,
    flow: Option<(&RenormalizedFlow, f64)>,
) -> Result<PhysicalRun, DynamicsError> {
    let p = params.p;
    let n = mesh.len();
    if u0.r_max() < mesh.r_max * (1.0 - 1e-12) || u0.r_min() > 0.0 {
        return Err(DynamicsError::Invalid(format!("data on [{}, {}] does not cover the mesh [0, {}]", u0.r_min(), u0.r_max(), mesh.r_max)));
    }
    let mut u: Vec<f64> = mesh.nodes.iter().map(|&r| u0.value(r)).collect();
    let ub = u0.value(mesh.r_max.min(u0.r_max()));
    let boundary = (cfg.outer == OuterBc::Dirichlet).then_some(ub);
    let diag = mesh.diag_for(cfg.outer);
    let sw: Vec<f64> = mesh.weights.iter().map(|w| w.sqrt()).collect();
    let src = if cfg.outer == OuterBc::Dirichlet { mesh.right_flux / mesh.weights[n - 1] * ub } else { 0.0 };
    let euler = |u: &[f64], dt: f64| -> Vec<f64> {
        let jac: Vec<f64> = u.iter().map(|v| p * v.abs().powf(p - 1.0)).collect();
        let d: Vec<f64> = (0..n).map(|i| 1.0 + dt * (diag[i] - jac[i])).collect();
        let e: Vec<f64> = mesh.off.iter().map(|o| dt * o).collect();
        let b: Vec<f64> = (0..n)
            .map(|i| {
                let s = if i + 1 == n { src } else { 0.0 };
                (u[i] + dt * (pow_nl(p, u[i]) - jac[i] * u[i] + s)) * sw[i]
            })
            .collect();
        let y = tridiag::solve_shifted(&d, &e, 0.0, &b);
        (0..n).map(|i| y[i] / sw[i]).collect()
    };
    let umax = |u: &[f64]| u.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let check_mesh = |u: &[f64]| -> Result<(), DynamicsError> {
        let m = umax(u);
        for i in 0..n - 1 {
            let jump = (u[i + 1] - u[i]).abs() / m;
            if jump > cfg.grad_threshold {
                return Err(DynamicsError::UnderResolved { r: mesh.nodes[i], jump });
            }
        }
        Ok(())
    };
    check_mesh(&u)?;
    let decompose = |u: &[f64], guess: f64, f: &RenormalizedFlow, s: f64| -> Result<EvolutionState, DynamicsError> {
        let mut r = mesh.nodes.clone();
        r.push(mesh.r_max);
        let mut v = u.to_vec();
        v.push(boundary.unwrap_or(u[n - 1]));
        let d = fd_derivs(&r, &v);
        f.decompose(&RadialFunction::new(r, v, d, "u")?, guess, s)
    };
    let mut run = PhysicalRun {
        times: vec![0.0],
        energy: vec![mesh.energy(p, &u, boundary)],
        u_max: vec![umax(&u)],
        trajectory: None,
        blowup_estimate: None,
        steps: 0,
        final_u: vec![],
    };
    let mut traj = None;
    if let Some((f, guess)) = flow {
        let st = decompose(&u, guess, f, 0.0)?;
        traj = Some(Trajectory { states: vec![st], physical_time: vec![0.0], mod_record: vec![], eps_weighted_max: 0.0, exit: None, steps: 0 });
    }
    let mut t = 0.0;
    for k in 1..=cfg.max_steps {
        let m = umax(&u);
        let dt = (cfg.cfl / (p * m.powf(p - 1.0))).min(cfg.dt_max).min(t_span - t);
        let ua = euler(&u, dt);
        let uh = euler(&u, 0.5 * dt);
        let ubb = euler(&uh, 0.5 * dt);
        u = ua.iter().zip(&ubb).map(|(a, b)| 2.0 * b - a).collect();
        t += dt;
        run.steps = k;
        let m = umax(&u);
        if !m.is_finite() {
            return Err(DynamicsError::NonFinite { s: t });
        }
        let done = t >= t_span * (1.0 - 1e-14) || m > cfg.u_stop;
        if k % cfg.output_every.max(1) == 0 || done {
            check_mesh(&u)?;
            run.times.push(t);
            run.energy.push(mesh.energy(p, &u, boundary));
            run.u_max.push(m);
            if let (Some(tr), Some((f, _))) = (traj.as_mut(), flow) {
                let tr: &mut Trajectory = tr;
                let prev = tr.states.last().expect("initial state");
                let (l0, s0, t0) = (prev.lambda, prev.s, *tr.physical_time.last().expect("initial time"));
                match decompose(&u, l0, f, s0) {
                    Ok(mut st) => {
                        st.s = s0 + (t - t0) / (l0 * st.lambda);
                        tr.states.push(st);
                        tr.physical_time.push(t);
                        tr.steps = k;
                    }
                    Err(DynamicsError::OutsideTube { linf, .. }) => {
                        tr.exit = Some(RegimeExit { s: s0, cause: ExitCause::Tube { linf } });
                        break;
                    }
                    Err(e) => return Err(e),
                }
            }
        }
        if m > cfg.u_stop {
            run.blowup_estimate = Some(t + m.powf(1.0 - p) / (p - 1.0));
        }
        if done {
            break;
        }
    }
    run.trajectory = traj;
    run.final_u = u;
    Ok(run)
}
