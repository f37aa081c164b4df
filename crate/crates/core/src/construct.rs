//! Matched shooting for the excited self-similar profiles: exterior
//! solutions launched from the algebraic tail, interior solutions launched
//! from the origin at scale λ, and the scan for C¹ matching scales.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{phi_star_jet, ModelParams};
use crate::ode::{self, OdeError, Options, RadialFunction, RadialInit};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConstructError {
    #[error("integration failed: {0}")]
    Ode(#[from] OdeError),
    #[error("r = {r} below the asymptotic regime (needs r >= {min})")]
    OutsideRegime { r: f64, min: f64 },
    #[error("invalid parameters: {0}")]
    Invalid(String),
    #[error("exponential mode contaminates exterior solution at r = {r:e}")]
    Contaminated { r: f64 },
    #[error("matching iteration did not converge for lambda = {lambda:e} (last eps = {eps:e})")]
    NoConvergence { lambda: f64, eps: f64 },
    #[error("no matching root in lambda range [{lo:e}, {hi:e}]")]
    NoRoots { lo: f64, hi: f64 },
    #[error("gluing failed: {0}")]
    Gluing(String),
}

/// Integration tolerance used for all profile ODEs.
pub const TOL: f64 = 1e-12;

/// Relative step cap for profiles that are kept as dense functions.
const DENSE_HREL: f64 = 2e-2;

/// Two-term tail `r^{-α}(1 + A/r^2)` of the decaying homogeneous solution of
/// the linearization at `Φ*`, with its derivative.
pub fn psi1_series_tail(params: &ModelParams, r: f64) -> Result<(f64, f64), ConstructError> {
    if r < 10.0 {
        return Err(ConstructError::OutsideRegime { r, min: 10.0 });
    }
    let a = params.two_over_pm1;
    let big_a = psi1_coefficient(params);
    let v = r.powf(-a) * (1.0 + big_a / (r * r));
    let dv = r.powf(-a - 1.0) * (-a - (a + 2.0) * big_a / (r * r));
    Ok((v, dv))
}

/// Correction coefficient `A = -(p-3)/(p-1)` of the linear tail.
pub fn psi1_coefficient(params: &ModelParams) -> f64 {
    -(params.p - 3.0) / (params.p - 1.0)
}

/// Coefficients `c_k` of the formal tail `u = r^{-α} Σ c_k r^{-2k}` of a
/// solution of `Δu − Λu + u^p = 0` with leading coefficient `c`, together
/// with `∂c_k/∂c`.
pub fn tail_coefficients(params: &ModelParams, c: f64, terms: usize) -> (Vec<f64>, Vec<f64>) {
    let a = params.two_over_pm1;
    let p = params.p;
    let mut cs = vec![c];
    let mut dcs = vec![1.0];
    // g = (Σ c_k x^k)^p and its c-derivative, by the power recurrence
    let mut g = vec![c.powf(p)];
    let mut dg = vec![p * c.powf(p - 1.0)];
    for j in 1..terms {
        let beta = -a - 2.0 * (j - 1) as f64;
        let bb = beta * (beta + 1.0);
        let cj = -(bb * cs[j - 1] + g[j - 1]) / (2.0 * j as f64);
        let dcj = -(bb * dcs[j - 1] + dg[j - 1]) / (2.0 * j as f64);
        cs.push(cj);
        dcs.push(dcj);
        // g_k = 1/(k c_0) Σ_{i=1..k} ((p+1) i − k) c_i g_{k−i}
        let k = j;
        let mut s = 0.0;
        let mut ds = 0.0;
        for i in 1..=k {
            let w = (p + 1.0) * i as f64 - k as f64;
            s += w * cs[i] * g[k - i];
            ds += w * (dcs[i] * g[k - i] + cs[i] * dg[k - i]);
        }
        let gk = s / (k as f64 * c);
        let dgk = ds / (k as f64 * c) - gk / c;
        g.push(gk);
        dg.push(dgk);
    }
    (cs, dcs)
}

const TAIL_TERMS: usize = 10;

/// Tail data `(u, u', ∂u/∂ε, ∂u'/∂ε)` for exterior amplitude ε at `r`.
fn tail_data(params: &ModelParams, eps: f64, r: f64) -> [f64; 4] {
    let a = params.two_over_pm1;
    let (cs, dcs) = tail_coefficients(params, params.c_inf + eps, TAIL_TERMS);
    let x = 1.0 / (r * r);
    let mut out = [0.0; 4];
    let mut xk = 1.0;
    for k in 0..TAIL_TERMS {
        let e = -a - 2.0 * k as f64;
        let base = r.powf(-a) * xk;
        out[0] += cs[k] * base;
        out[1] += cs[k] * e * base / r;
        out[2] += dcs[k] * base;
        out[3] += dcs[k] * e * base / r;
        xk *= x;
    }
    out
}

/// Backward solution on `[r0, r_max]` of the profile equation together with
/// its ε-derivative, launched from the tail with amplitude `c_inf + eps`.
fn exterior_with_variation(params: &ModelParams, eps: f64, r0: f64, r_max: f64, hrel: Option<f64>) -> Result<ode::OdeSolution<f64, 4>, ConstructError> {
    let a = params.two_over_pm1;
    let p = params.p;
    let rhs = |r: f64, y: &[f64; 4]| {
        let drift = 2.0 / r - r;
        let up = y[0].abs().powf(p - 1.0);
        [y[1], -drift * y[1] + a * y[0] - up * y[0], y[3], -drift * y[3] + a * y[2] - p * up * y[2]]
    };
    let y0 = tail_data(params, eps, r_max);
    let mut opts = Options::tol(TOL);
    opts.atol = 1e-16;
    opts.hrel = hrel;
    Ok(ode::solve(rhs, r_max, y0, r0, &opts)?)
}

fn validate_exterior(params: &ModelParams, r0: f64, r_max: f64) -> Result<(), ConstructError> {
    if !(r0 > 0.0 && r0 < 1.0) {
        return Err(ConstructError::Invalid(format!("r0 = {r0} must lie in (0, 1)")));
    }
    if r_max < 20.0 {
        return Err(ConstructError::OutsideRegime { r: r_max, min: 20.0 });
    }
    let _ = params;
    Ok(())
}

/// Exterior solution `u = Φ* + εψ₁ + ...` on `[r0, r_max]`.
pub fn exterior_solution(params: &ModelParams, epsilon: f64, r0: f64, r_max: f64) -> Result<RadialFunction, ConstructError> {
    validate_exterior(params, r0, r_max)?;
    let sol = exterior_with_variation(params, epsilon, r0, r_max, Some(DENSE_HREL))?;
    let mut nodes = Vec::with_capacity(sol.xs.len());
    let mut vals = Vec::with_capacity(sol.xs.len());
    let mut ders = Vec::with_capacity(sol.xs.len());
    let mut sec = Vec::with_capacity(sol.xs.len());
    for (x, (y, dy)) in sol.xs.iter().zip(sol.ys.iter().zip(&sol.dys)).rev() {
        let dev = (y[0] - phi_star_jet(params, *x).0).abs();
        if epsilon != 0.0 && dev > 10.0 * epsilon.abs() * x.powf(-0.5).max(x.powf(-params.two_over_pm1)) {
            return Err(ConstructError::Contaminated { r: *x });
        }
        nodes.push(*x);
        vals.push(y[0]);
        ders.push(y[1]);
        sec.push(dy[1]);
    }
    Ok(RadialFunction::new(nodes, vals, ders, "exterior self-similar profile")?.with_second(sec))
}

/// Scale-λ solution regular at the origin, integrated in `x = r/λ`.
/// Returns `U` with `u(r) = λ^{-α} U(r/λ)` on `x ∈ [0, r_end/λ]`.
fn interior_scaled(params: &ModelParams, lambda: f64, r_end: f64, hrel: Option<f64>) -> Result<RadialFunction, ConstructError> {
    let a = params.two_over_pm1;
    let p = params.p;
    let l2 = lambda * lambda;
    let field = |x: f64, u: f64, du: f64| -2.0 * du / x + l2 * (x * du + a * u) - u.abs().powf(p - 1.0) * u;
    let init = RadialInit::Origin { u0: 1.0, u2: (l2 * a - 1.0) / 6.0, r_min: 1e-6 };
    let mut opts = Options::tol(TOL);
    opts.hrel = hrel;
    Ok(ode::integrate_radial_with(field, init, (0.0, r_end / lambda), &opts, "interior profile (scaled)")?)
}

fn unscale(params: &ModelParams, lambda: f64, f: &RadialFunction, meta: &str) -> RadialFunction {
    let a = params.two_over_pm1;
    let s0 = lambda.powf(-a);
    let s1 = s0 / lambda;
    let s2 = s1 / lambda;
    let nodes = f.grid.nodes.iter().map(|x| x * lambda).collect();
    let vals = f.values.iter().map(|v| v * s0).collect();
    let ders = f.derivs.iter().map(|v| v * s1).collect();
    let mut out = RadialFunction::new(nodes, vals, ders, meta).unwrap();
    if let Some(s) = &f.second {
        out = out.with_second(s.iter().map(|v| v * s2).collect());
    }
    out
}

/// Interior solution with `u(0) = λ^{-α}`, `u'(0) = 0` on `[0, r0]`.
pub fn interior_solution(params: &ModelParams, lambda: f64, r0: f64) -> Result<RadialFunction, ConstructError> {
    if !(lambda > 0.0 && lambda <= r0) {
        return Err(ConstructError::Invalid(format!("need 0 < lambda <= r0, got lambda = {lambda}, r0 = {r0}")));
    }
    let f = interior_scaled(params, lambda, r0, Some(DENSE_HREL))?;
    Ok(unscale(params, lambda, &f, "interior self-similar profile"))
}

fn interior_end(params: &ModelParams, lambda: f64, r0: f64) -> Result<(f64, f64), ConstructError> {
    let f = interior_scaled(params, lambda, r0, None)?;
    let a = params.two_over_pm1;
    let n = f.len() - 1;
    Ok((f.values[n] * lambda.powf(-a), f.derivs[n] * lambda.powf(-a - 1.0)))
}

/// Matching data at one scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchSample {
    pub lambda: f64,
    pub epsilon: f64,
    pub g: f64,
}

fn match_at(params: &ModelParams, lambda: f64, r0: f64, r_max: f64) -> Result<MatchSample, ConstructError> {
    let (ui, dui) = interior_end(params, lambda, r0)?;
    let ext = |eps: f64| -> Result<[f64; 4], ConstructError> { Ok(exterior_with_variation(params, eps, r0, r_max, None)?.last()) };
    // past a fold of ε ↦ u_ext(r0) there is no match on the branch through ε = 0
    let (eps, y) = newton_match(params, ui, &ext).ok_or(ConstructError::NoConvergence { lambda, eps: f64::NAN })?;
    Ok(MatchSample { lambda, epsilon: eps, g: y[1] - dui })
}

/// Damped Newton on ε using the variational equation.
fn newton_match(params: &ModelParams, ui: f64, ext: &dyn Fn(f64) -> Result<[f64; 4], ConstructError>) -> Option<(f64, [f64; 4])> {
    let mut eps = 0.0;
    let mut y = ext(eps).ok()?;
    for _ in 0..60 {
        let f = y[0] - ui;
        if f.abs() <= 1e-14 * ui.abs() {
            return Some((eps, y));
        }
        let step = f / y[2];
        let mut t = 1.0;
        let (trial, yt) = loop {
            let e = eps - t * step;
            let yt = if e.abs() < params.c_inf { ext(e).ok() } else { None };
            match yt {
                Some(yt) if (yt[0] - ui).abs() < f.abs() => break (e, yt),
                _ if t < 1.0 / 64.0 => return None,
                _ => t *= 0.5,
            }
        };
        eps = trial;
        y = yt;
        if (t * step).abs() <= 1e-15 * (1.0 + eps.abs()) {
            return Some((eps, y));
        }
    }
    None
}

/// Exterior amplitude ε(λ) matching the interior value at `r0`.
pub fn epsilon_of_lambda(params: &ModelParams, lambda: f64, r0: f64, r_max: f64) -> Result<f64, ConstructError> {
    validate_exterior(params, r0, r_max)?;
    Ok(match_at(params, lambda, r0, r_max)?.epsilon)
}

/// Derivative mismatch `u_ext'(r0) − u_int'(r0)` after value matching.
pub fn derivative_mismatch(params: &ModelParams, lambda: f64, r0: f64, r_max: f64) -> Result<f64, ConstructError> {
    validate_exterior(params, r0, r_max)?;
    Ok(match_at(params, lambda, r0, r_max)?.g)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchingScan {
    pub params: ModelParams,
    pub r0: f64,
    pub r_max: f64,
    pub samples: Vec<MatchSample>,
    pub roots: Vec<f64>,
}

/// Samples G on a log-uniform λ grid, brackets its sign changes and refines
/// them by bisection. Roots are returned in decreasing order.
pub fn scan_matching_scales(params: &ModelParams, r0: f64, lambda_range: (f64, f64), log_step: f64, r_max: f64) -> Result<MatchingScan, ConstructError> {
    let (lo, hi) = lambda_range;
    if !(lo > 0.0 && hi > lo && hi <= r0) {
        return Err(ConstructError::Invalid(format!("lambda range [{lo}, {hi}] must satisfy 0 < lo < hi <= r0")));
    }
    let max_step = std::f64::consts::PI / (4.0 * params.omega);
    if !(log_step > 0.0 && log_step <= max_step) {
        return Err(ConstructError::Invalid(format!("log_step must lie in (0, {max_step:.4}]")));
    }
    validate_exterior(params, r0, r_max)?;
    let n = ((hi / lo).ln() / log_step).ceil() as usize;
    let lambdas: Vec<f64> = (0..=n).map(|i| (hi.ln() - (hi / lo).ln() * i as f64 / n as f64).exp()).collect();
    let evals: Vec<Option<MatchSample>> = lambdas.par_iter().map(|&l| match_at(params, l, r0, r_max).ok()).collect();
    let brackets: Vec<(MatchSample, MatchSample)> = evals
        .windows(2)
        .filter_map(|w| match (w[0], w[1]) {
            (Some(a), Some(b)) if a.g * b.g < 0.0 => Some((a, b)),
            _ => None,
        })
        .collect();
    let samples: Vec<MatchSample> = evals.into_iter().flatten().collect();
    let roots: Vec<f64> = brackets.par_iter().map(|&(a, b)| refine_root(params, a, b, r0, r_max)).collect::<Result<_, _>>()?;
    if roots.is_empty() {
        return Err(ConstructError::NoRoots { lo, hi });
    }
    Ok(MatchingScan { params: *params, r0, r_max, samples, roots })
}

/// Least-squares fit of `λ^{1−s_c} G(λ) ≈ A sin(−ω log λ + phase)` over the
/// scan samples with `λ ≤ lambda_max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GFit {
    pub amplitude: f64,
    pub phase: f64,
    /// rms misfit divided by the amplitude
    pub residual: f64,
    pub samples: usize,
}

/// Default upper end of the G fit, as a fraction of `r0`; the leading
/// law degrades like `(λ/r0)^{s_c−1}`.
pub const G_FIT_FRACTION: f64 = 1e-2;

pub fn fit_g_sinusoid(scan: &MatchingScan, lambda_max: f64) -> Result<GFit, ConstructError> {
    let pm = &scan.params;
    let pts: Vec<(f64, f64)> =
        scan.samples.iter().filter(|s| s.lambda <= lambda_max).map(|s| (-pm.omega * s.lambda.ln(), s.g * s.lambda.powf(1.0 - pm.s_c))).collect();
    if pts.len() < 8 {
        return Err(ConstructError::Invalid(format!("only {} scan samples below λ = {lambda_max:e}", pts.len())));
    }
    let (mut ss, mut sc, mut cc, mut ys, mut yc) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for &(t, y) in &pts {
        let (s, c) = t.sin_cos();
        ss += s * s;
        sc += s * c;
        cc += c * c;
        ys += y * s;
        yc += y * c;
    }
    let det = ss * cc - sc * sc;
    let a = (ys * cc - yc * sc) / det;
    let b = (yc * ss - ys * sc) / det;
    let amplitude = a.hypot(b);
    let sq: f64 = pts.iter().map(|&(t, y)| (y - a * t.sin() - b * t.cos()).powi(2)).sum();
    let residual = (sq / pts.len() as f64).sqrt() / amplitude;
    Ok(GFit { amplitude, phase: b.atan2(a), residual, samples: pts.len() })
}

fn refine_root(params: &ModelParams, a: MatchSample, b: MatchSample, r0: f64, r_max: f64) -> Result<f64, ConstructError> {
    // bisection in log λ
    let (mut xa, mut xb) = (a.lambda.ln(), b.lambda.ln());
    let ga = a.g;
    for _ in 0..200 {
        if (xa - xb).abs() < 1e-10 {
            break;
        }
        let xm = 0.5 * (xa + xb);
        let gm = match_at(params, xm.exp(), r0, r_max)?.g;
        if gm == 0.0 {
            return Ok(xm.exp());
        }
        if (gm > 0.0) == (ga > 0.0) {
            xa = xm;
        } else {
            xb = xm;
        }
    }
    Ok((0.5 * (xa + xb)).exp())
}

/// Convergence diagnostics of an assembled profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileDiagnostics {
    /// `sup_{r >= r0} (1 + r^α) |Φ − Φ*|`.
    pub exterior_sup: f64,
    /// `sup_{r <= r0} |Φ − μ^{-α} Q(r/μ)|`.
    pub interior_sup: f64,
    /// Last zero of `ΛΦ` below `r0`.
    pub last_zero: f64,
    /// `μ` times the last zero of `ΛQ` below `r0/μ`.
    pub scaled_q_zero: f64,
    /// Flag for profiles whose diagnostics suggest they sit outside the
    /// asymptotic regime.
    pub outside_regime: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProfileSolution {
    pub params: ModelParams,
    pub r0: f64,
    pub r_max: f64,
    pub mu: f64,
    pub epsilon: f64,
    pub profile: RadialFunction,
    pub lam_profile: RadialFunction,
    pub index_n: usize,
    pub c1_residual: f64,
    pub ode_residual: f64,
    pub diagnostics: ProfileDiagnostics,
}

impl ProfileSolution {
    /// `(Φ, Φ')` at `r`; beyond the computed range the tail series is used.
    pub fn eval(&self, r: f64) -> (f64, f64) {
        if r <= self.r_max {
            self.profile.eval(r)
        } else {
            let y = tail_data(&self.params, self.epsilon, r);
            (y[0], y[1])
        }
    }

    /// Linearized potential `p Φ^{p-1}` at `r`.
    pub fn potential(&self, r: f64) -> f64 {
        let u = self.eval(r).0;
        self.params.p * u.abs().powf(self.params.p - 1.0)
    }

    /// `ΛΦ` at `r`.
    pub fn lambda_phi(&self, r: f64) -> (f64, f64) {
        if r <= self.r_max {
            self.lam_profile.eval(r)
        } else {
            let (u, du) = self.eval(r);
            let d2 = self.params.self_similar_d2(r, u, du);
            (self.params.lambda_op(r, u, du), (self.params.two_over_pm1 + 1.0) * du + r * d2)
        }
    }
}

fn lambda_of(params: &ModelParams, f: &RadialFunction) -> RadialFunction {
    let a = params.two_over_pm1;
    let p = params.p;
    let sec = f.second.as_ref().unwrap();
    let n = f.len();
    let mut v = Vec::with_capacity(n);
    let mut d = Vec::with_capacity(n);
    let mut s = Vec::with_capacity(n);
    for i in 0..n {
        let (r, u, du, d2) = (f.grid.nodes[i], f.values[i], f.derivs[i], sec[i]);
        // third derivative from differentiating the profile equation
        let d3 = if r > 0.0 { 2.0 * du / (r * r) - (2.0 / r - r) * d2 + du + a * du - p * u.abs().powf(p - 1.0) * du } else { 0.0 };
        v.push(a * u + r * du);
        d.push((a + 1.0) * du + r * d2);
        s.push((a + 2.0) * d2 + r * d3);
    }
    RadialFunction::new(f.grid.nodes.clone(), v, d, "ΛΦ").unwrap().with_second(s)
}

/// Max relative residual of the profile equation at cell midpoints of one
/// smooth piece, skipping cells starting below `r_skip` (the Taylor launch
/// region, where the jets cancel to roundoff).
fn piece_residual(params: &ModelParams, f: &RadialFunction, r_skip: f64) -> f64 {
    let mut worst: f64 = 0.0;
    for w in f.grid.nodes.windows(2).filter(|w| w[0] >= r_skip) {
        let r = 0.5 * (w[0] + w[1]);
        let (u, du, d2) = f.jet(r);
        let res = params.self_similar_residual(r, u, du, d2);
        let scale = d2.abs() + (2.0 / r * du).abs() + params.lambda_op(r, u, du).abs() + params.power(u).abs();
        worst = worst.max(res.abs() / scale);
    }
    worst
}

/// Glues interior and exterior solutions at the `k`-th scan root and
/// computes the zero-count index and convergence diagnostics.
pub fn assemble_profile(
    params: &ModelParams,
    scan: &MatchingScan,
    k: usize,
    r_max: f64,
    gs: &crate::groundstate::GroundState,
) -> Result<ProfileSolution, ConstructError> {
    let mu = *scan.roots.get(k).ok_or_else(|| ConstructError::Invalid(format!("root index {k} out of range ({} roots)", scan.roots.len())))?;
    let r0 = scan.r0;
    let m = match_at(params, mu, r0, scan.r_max)?;
    let inner = interior_solution(params, mu, r0)?;
    let outer = exterior_solution(params, m.epsilon, r0, r_max)?;
    let ni = inner.len();
    let (ui, dui) = (inner.values[ni - 1], inner.derivs[ni - 1]);
    let (uo, duo) = (outer.values[0], outer.derivs[0]);
    let c1_residual = (duo - dui).abs() / dui.abs().max(uo.abs() / r0);
    if (uo - ui).abs() > 1e-10 * ui.abs() {
        return Err(ConstructError::Gluing(format!("value jump {:e} at r0", uo - ui)));
    }
    let mut nodes = inner.grid.nodes.clone();
    let mut vals = inner.values.clone();
    let mut ders = inner.derivs.clone();
    let mut sec = inner.second.clone().unwrap();
    ders[ni - 1] = 0.5 * (dui + duo);
    vals[ni - 1] = 0.5 * (ui + uo);
    sec[ni - 1] = params.self_similar_d2(r0, vals[ni - 1], ders[ni - 1]);
    nodes.extend_from_slice(&outer.grid.nodes[1..]);
    vals.extend_from_slice(&outer.values[1..]);
    ders.extend_from_slice(&outer.derivs[1..]);
    sec.extend_from_slice(&outer.second.as_ref().unwrap()[1..]);
    let profile = RadialFunction::new(nodes, vals, ders, "self-similar profile Φ_n")?.with_second(sec);
    let lam = lambda_of(params, &profile);

    let (index_n, zeros) = ode::count_sign_changes(&lam, (0.0, r_max), 1e-9)?;

    let ode_residual = piece_residual(params, &inner, 0.1 * mu).max(piece_residual(params, &outer, 0.0));

    let a = params.two_over_pm1;
    let mut exterior_sup: f64 = 0.0;
    let mut interior_sup: f64 = 0.0;
    for (i, &r) in profile.grid.nodes.iter().enumerate() {
        if r >= r0 {
            let dev = (profile.values[i] - phi_star_jet(params, r).0).abs();
            exterior_sup = exterior_sup.max((1.0 + r.powf(a)) * dev);
        } else {
            let q = mu.powf(-a) * gs.eval(r / mu).0;
            interior_sup = interior_sup.max((profile.values[i] - q).abs());
        }
    }
    let last_zero = zeros.iter().copied().filter(|&z| z < r0).last().unwrap_or(f64::NAN);
    let scaled_q_zero = crate::groundstate::lambda_q_zero_before(gs, r0 / mu).map(|z| z * mu).unwrap_or(f64::NAN);
    let diagnostics = ProfileDiagnostics { exterior_sup, interior_sup, last_zero, scaled_q_zero, outside_regime: exterior_sup > 0.1 || interior_sup > 0.1 };
    Ok(ProfileSolution { params: *params, r0, r_max, mu, epsilon: m.epsilon, profile, lam_profile: lam, index_n, c1_residual, ode_residual, diagnostics })
}
