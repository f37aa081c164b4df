//! Spectra of the linearized operators `𝓛_{n,m}`, `𝓛_{∞,m}` and `H_m` in
//! the weighted spaces, by a symmetric finite-volume discretization on a
//! sinh-graded mesh, with shooting cross-checks.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::construct::ProfileSolution;
use crate::groundstate::GroundState;
use crate::model::{discriminant, ModelParams};
use crate::ode::{self, OdeError, Options, RadialFunction};
use crate::specfun::{self, SpecError};
use crate::tridiag;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectralError {
    #[error("invalid operator request: {0}")]
    Invalid(String),
    #[error("potential under-resolved near r = {r:e} (relative jump {jump:.2})")]
    UnderResolved { r: f64, jump: f64 },
    #[error("requested {k} eigenpairs from {n} unknowns (limit n/4)")]
    TooMany { k: usize, n: usize },
    #[error("operator unbounded below: m = {m} has discriminant {disc} <= 0 on a domain reaching r = 0")]
    Unbounded { m: u32, disc: f64 },
    #[error("shooting failed: {0}")]
    Ode(#[from] OdeError),
    #[error("special function failure: {0}")]
    Special(#[from] SpecError),
    #[error("{0}")]
    Mismatch(String),
    #[error("positivity of ν_{m} violated at r = {r:e}")]
    Positivity { m: u32, r: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OperatorKind {
    /// `−Δ + Λ − pΦₙ^{p−1}` (drift present).
    Ln,
    /// `−Δ + Λ − pΦ*^{p−1}`.
    LInf,
    /// `−Δ − pQ^{p−1}` (no drift, measure `r² dr`).
    H,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InnerBc {
    /// Regularity at `r = 0`.
    Regular,
    /// `u = 0` at the left end of the domain.
    Dirichlet,
}

/// A radial potential `V(r)` (already carrying its sign) with the length
/// scale on which it varies near the origin.
#[derive(Clone)]
pub struct Potential {
    f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    pub label: String,
    pub scale: f64,
    /// Constant `2/(p−1)` of `Λ`, used when the drift is present.
    pub alpha: f64,
    /// Coefficient `K` when the potential is exactly `−K/r²`.
    pub singular: Option<f64>,
}

impl std::fmt::Debug for Potential {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Potential({}, scale {:e})", self.label, self.scale)
    }
}

impl Potential {
    pub fn new(label: &str, scale: f64, alpha: f64, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Potential { f: Arc::new(f), label: label.into(), scale, alpha, singular: None }
    }

    /// `−pΦₙ^{p−1}`.
    pub fn profile(profile: &ProfileSolution) -> Self {
        let pr = Arc::new(profile.clone());
        let a = profile.params.two_over_pm1;
        Self::new(&format!("profile n={} mu={:.6e}", profile.index_n, profile.mu), profile.mu, a, move |r| -pr.potential(r))
    }

    /// `−pΦ*^{p−1} = −p c∞^{p−1}/r²`.
    pub fn star(params: &ModelParams) -> Self {
        let k = params.k_star();
        let mut v = Self::new("phi_star", 1.0, params.two_over_pm1, move |r| -k / (r * r));
        v.singular = Some(k);
        v
    }

    /// `−pQ^{p−1}`.
    pub fn ground_state(gs: &GroundState) -> Self {
        let g = Arc::new(gs.clone());
        let p = gs.params.p;
        Self::new("ground_state", 1.0, gs.params.two_over_pm1, move |x| -p * g.eval(x).0.abs().powf(p - 1.0))
    }

    pub fn at(&self, r: f64) -> f64 {
        (self.f)(r)
    }
}

/// Symmetric finite-volume discretization of one radial operator.
#[derive(Debug, Clone)]
pub struct DiscreteOperator {
    pub m: u32,
    pub kind: OperatorKind,
    pub includes_drift: bool,
    pub domain: (f64, f64),
    pub inner_bc: InnerBc,
    pub cells: usize,
    pub mesh_scale: f64,
    /// Positions of the unknowns.
    pub nodes: Vec<f64>,
    /// Dual-cell measures `∫ r²ρ dr` (or `∫ r² dr`).
    pub weights: Vec<f64>,
    /// Potential at the unknowns.
    pub potential: RadialFunction,
    /// Symmetrized matrix `W^{1/2} A W^{-1/2}`.
    pub diag: Vec<f64>,
    pub off: Vec<f64>,
    /// Max relative mismatch of the two symmetrized off-diagonals.
    pub symmetry_residual: f64,
    /// Whether the first grid node (`r = 0` or `r_cut`) is a Dirichlet node.
    pub left_dirichlet: bool,
    /// Flux coefficient across the last face, coupling the final unknown to
    /// the (eliminated) boundary value at `R`.
    pub right_flux: f64,
    pot: Potential,
}

fn measure(drift: bool, r: f64) -> f64 {
    if drift {
        r * r * (-0.5 * r * r).exp()
    } else {
        r * r
    }
}

const GL_X: [f64; 4] = [-0.861_136_311_594_052_6, -0.339_981_043_584_856_3, 0.339_981_043_584_856_3, 0.861_136_311_594_052_6];
const GL_W: [f64; 4] = [0.347_854_845_137_453_9, 0.652_145_154_862_546_1, 0.652_145_154_862_546_1, 0.347_854_845_137_453_9];

/// `(∫ w, ∫ w V)` over `[a, b]` by 4-point Gauss–Legendre.
fn cell_integrals(drift: bool, a: f64, b: f64, v: &impl Fn(f64) -> f64) -> (f64, f64) {
    if b <= a {
        return (0.0, 0.0);
    }
    let (c, h) = (0.5 * (a + b), 0.5 * (b - a));
    let mut out = (0.0, 0.0);
    for (x, w) in GL_X.iter().zip(&GL_W) {
        let r = c + h * x;
        let m = w * measure(drift, r) * h;
        out.0 += m;
        out.1 += m * v(r);
    }
    out
}

pub(crate) fn fd_derivs(r: &[f64], u: &[f64]) -> Vec<f64> {
    let n = r.len();
    (0..n)
        .map(|i| {
            if n < 2 {
                0.0
            } else if i == 0 {
                (u[1] - u[0]) / (r[1] - r[0])
            } else if i == n - 1 {
                (u[n - 1] - u[n - 2]) / (r[n - 1] - r[n - 2])
            } else {
                let (h0, h1) = (r[i] - r[i - 1], r[i + 1] - r[i]);
                (u[i + 1] * h0 * h0 - u[i - 1] * h1 * h1 + u[i] * (h1 * h1 - h0 * h0)) / (h0 * h1 * (h0 + h1))
            }
        })
        .collect()
}

/// Default number of cells of the coarse grid.
pub const DEFAULT_CELLS: usize = 4000;
/// Default outer radius for weighted operators.
pub const DEFAULT_R: f64 = 10.0;

pub fn build_operator(
    pot: &Potential,
    m: u32,
    kind: OperatorKind,
    domain: (f64, f64),
    inner_bc: InnerBc,
    cells: usize,
) -> Result<DiscreteOperator, SpectralError> {
    let (a, big_r) = domain;
    if !(a >= 0.0 && big_r > a && cells >= 16) {
        return Err(SpectralError::Invalid(format!("domain [{a}, {big_r}] with {cells} cells")));
    }
    if inner_bc == InnerBc::Regular && a != 0.0 {
        return Err(SpectralError::Invalid("regular inner condition needs r_min = 0".into()));
    }
    if inner_bc == InnerBc::Dirichlet && a == 0.0 && m == 0 && pot.singular.is_some() {
        return Err(SpectralError::Invalid("Dirichlet at r = 0 on a singular potential".into()));
    }
    if a == 0.0 {
        if let Some(k) = pot.singular {
            let disc = 1.0 - 4.0 * k + 4.0 * (m as f64) * (m as f64 + 1.0);
            if disc <= 0.0 {
                return Err(SpectralError::Unbounded { m, disc });
            }
        }
    }
    let drift = kind != OperatorKind::H;
    let s = 0.25 * if a > 0.0 { a } else { pot.scale };
    let xi_max = ((big_r - a) / s).asinh();
    let dxi = xi_max / cells as f64;
    let r_of = |xi: f64| a + s * xi.sinh();
    let grid: Vec<f64> = (0..=cells).map(|j| if j == cells { big_r } else { r_of(j as f64 * dxi) }).collect();
    let half: Vec<f64> = (0..cells).map(|j| r_of((j as f64 + 0.5) * dxi)).collect();
    let left_dirichlet = !(inner_bc == InnerBc::Regular && m == 0);
    let j0 = if left_dirichlet { 1 } else { 0 };
    let mm = (m as f64) * (m as f64 + 1.0);
    // flux coefficient across the face between grid nodes j and j+1
    let flux: Vec<f64> = (0..cells).map(|j| measure(drift, half[j]) / (grid[j + 1] - grid[j])).collect();
    let nodes: Vec<f64> = grid[j0..cells].to_vec();
    let n = nodes.len();
    let mut weights = Vec::with_capacity(n);
    let mut vals = Vec::with_capacity(n);
    let mut diag = Vec::with_capacity(n);
    // potential and centrifugal terms are cell averages against the measure,
    // which keeps `r^m` exact near the origin
    let full = |r: f64| pot.at(r) + if r > 0.0 { mm / (r * r) } else { 0.0 };
    for (i, &r) in nodes.iter().enumerate() {
        let j = i + j0;
        let left = if j == 0 { a } else { half[j - 1] };
        let (w0, v0) = cell_integrals(drift, left, r, &full);
        let (w1, v1) = cell_integrals(drift, r, half[j], &full);
        let w = w0 + w1;
        let v = pot.at(r);
        let vbar = (v0 + v1) / w;
        if !(v.is_finite() && vbar.is_finite()) {
            return Err(SpectralError::Invalid(format!("potential not finite at r = {r:e}")));
        }
        let left_flux = if j == 0 { 0.0 } else { flux[j - 1] };
        let shift = if drift { pot.alpha } else { 0.0 };
        weights.push(w);
        vals.push(v);
        diag.push((left_flux + flux[j]) / w + vbar + shift);
    }
    let mut off = Vec::with_capacity(n.saturating_sub(1));
    let mut symmetry_residual: f64 = 0.0;
    for i in 0..n.saturating_sub(1) {
        let f = flux[i + j0];
        let upper = -f / weights[i] * (weights[i] / weights[i + 1]).sqrt();
        let lower = -f / weights[i + 1] * (weights[i + 1] / weights[i]).sqrt();
        symmetry_residual = symmetry_residual.max((upper - lower).abs() / upper.abs());
        off.push(0.5 * (upper + lower));
    }
    for i in 0..n.saturating_sub(1) {
        let (v0, v1) = (vals[i], vals[i + 1]);
        let big = v0.abs().max(v1.abs());
        // potential variation per cell, ignoring the explicit 1/r² singular form
        if pot.singular.is_none() && big > 1.0 && (v1 - v0).abs() > 0.5 * big {
            return Err(SpectralError::UnderResolved { r: nodes[i], jump: (v1 - v0).abs() / big });
        }
    }
    let derivs = fd_derivs(&nodes, &vals);
    let potential = RadialFunction::new(nodes.clone(), vals, derivs, &pot.label)?;
    Ok(DiscreteOperator {
        m,
        kind,
        includes_drift: drift,
        domain,
        inner_bc,
        cells,
        mesh_scale: s,
        nodes,
        weights,
        potential,
        diag,
        off,
        symmetry_residual,
        left_dirichlet,
        right_flux: flux[cells - 1],
        pot: pot.clone(),
    })
}

impl DiscreteOperator {
    /// The same operator on a grid with twice as many cells.
    pub fn refined(&self) -> Result<DiscreteOperator, SpectralError> {
        build_operator(&self.pot, self.m, self.kind, self.domain, self.inner_bc, 2 * self.cells)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn descriptor(&self) -> String {
        format!(
            "{:?}[{}] m={} domain=[{:.6e}, {}] bc={:?} cells={}",
            self.kind, self.pot.label, self.m, self.domain.0, self.domain.1, self.inner_bc, self.cells
        )
    }

    /// Applies the (unsymmetrized) operator `A` to nodal values `u`.
    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        let n = self.len();
        (0..n)
            .map(|i| {
                let sw = self.weights[i].sqrt();
                let mut y = self.diag[i] * u[i] * sw;
                if i > 0 {
                    y += self.off[i - 1] * u[i - 1] * self.weights[i - 1].sqrt();
                }
                if i + 1 < n {
                    y += self.off[i] * u[i + 1] * self.weights[i + 1].sqrt();
                }
                y / sw
            })
            .collect()
    }

    /// `(u, v)` in the stored discrete measure.
    pub fn inner(&self, u: &[f64], v: &[f64]) -> f64 {
        u.iter().zip(v).zip(&self.weights).map(|((a, b), w)| a * b * w).sum()
    }

    /// Discrete Rayleigh quotient `(Au, u)_w / (u, u)_w`.
    pub fn rayleigh(&self, u: &[f64]) -> f64 {
        self.inner(&self.apply(u), u) / self.inner(u, u)
    }

    /// Number of eigenvalues below `x`.
    pub fn count_below(&self, x: f64) -> usize {
        tridiag::sturm_count(&self.diag, &self.off, x)
    }

    fn lowest(&self, k: usize) -> Vec<f64> {
        let b = tridiag::gershgorin(&self.diag, &self.off);
        (0..k).into_par_iter().map(|i| tridiag::bisect_eigenvalue(&self.diag, &self.off, i, b)).collect()
    }

    /// Nodal eigenfunction (unit discrete norm, positive at the first node)
    /// for an eigenvalue of this grid, with its Rayleigh residual.
    pub fn eigenvector(&self, lambda: f64) -> (Vec<f64>, f64) {
        let y = tridiag::inverse_iteration(&self.diag, &self.off, lambda);
        let rq = tridiag::quadratic_form(&self.diag, &self.off, &y);
        let sign = if y[0] < 0.0 { -1.0 } else { 1.0 };
        let u: Vec<f64> = y.iter().zip(&self.weights).map(|(v, w)| sign * v / w.sqrt()).collect();
        (u, (rq - lambda).abs() / lambda.abs().max(1.0))
    }

    /// Nodal values as a radial function including the Dirichlet end nodes.
    pub fn to_function(&self, u: &[f64], meta: &str) -> RadialFunction {
        let mut r = Vec::with_capacity(u.len() + 2);
        let mut v = Vec::with_capacity(u.len() + 2);
        if self.left_dirichlet {
            r.push(self.domain.0);
            v.push(0.0);
        }
        r.extend_from_slice(&self.nodes);
        v.extend_from_slice(u);
        r.push(self.domain.1);
        v.push(0.0);
        let d = fd_derivs(&r, &v);
        RadialFunction::new(r, v, d, meta).unwrap()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectrumReport {
    pub descriptor: String,
    pub m: u32,
    /// Richardson-extrapolated eigenvalues, ascending.
    pub eigenvalues: Vec<f64>,
    /// Coarse- and fine-grid values.
    pub coarse: Vec<f64>,
    pub fine: Vec<f64>,
    /// `|fine − coarse| / 3` per pair.
    pub error_estimates: Vec<f64>,
    pub neg_count: usize,
    /// Fine-grid eigenfunctions, unit norm in the discrete measure.
    pub eigenfunctions: Vec<RadialFunction>,
    pub rayleigh_residuals: Vec<f64>,
    pub symmetry_residual: f64,
    /// Indices `i` where eigenvalues `i, i+1` are not separated by more
    /// than ten times their error estimates.
    pub unresolved: Vec<usize>,
    pub gap_estimate: f64,
}

fn is_symmetry_mode(kind: OperatorKind, m: u32, lam: f64) -> bool {
    kind == OperatorKind::Ln && ((m == 0 && (lam + 2.0).abs() < 1e-2) || (m == 1 && (lam + 1.0).abs() < 1e-2))
}

/// The `k` lowest eigenpairs of `op`, extrapolated against `op.refined()`.
pub fn eigen_spectrum(op: &DiscreteOperator, k: usize) -> Result<SpectrumReport, SpectralError> {
    Ok(spectrum_with_fine(op, k)?.0)
}

/// Largest coarse grid used by [`eigen_spectrum_adaptive`].
pub const MAX_CELLS: usize = 1 << 19;

/// [`eigen_spectrum`] with grid doubling until every error estimate is
/// below `rel_tol · max(1, |λ|)`. Doubling stops early once the worst
/// estimate no longer halves (roundoff has taken over) or the coarse grid
/// would exceed `max_cells`; the best pair seen so far is returned together
/// with its fine operator.
pub fn eigen_spectrum_adaptive(op: &DiscreteOperator, k: usize, rel_tol: f64, max_cells: usize) -> Result<(SpectrumReport, DiscreteOperator), SpectralError> {
    let worst = |rep: &SpectrumReport| rep.eigenvalues.iter().zip(&rep.error_estimates).map(|(l, e)| e / l.abs().max(1.0)).fold(0.0, f64::max);
    let mut best = spectrum_with_fine(op, k)?;
    let mut best_err = worst(&best.0);
    while best_err > rel_tol && 2 * best.1.cells <= max_cells {
        let next = spectrum_with_fine(&best.1, k)?;
        let err = worst(&next.0);
        if err > 0.5 * best_err {
            break;
        }
        best = next;
        best_err = err;
    }
    Ok(best)
}

fn spectrum_with_fine(op: &DiscreteOperator, k: usize) -> Result<(SpectrumReport, DiscreteOperator), SpectralError> {
    if k == 0 || k > op.len() / 4 {
        return Err(SpectralError::TooMany { k, n: op.len() });
    }
    let fine_op = op.refined()?;
    let (coarse, fine) = rayon::join(|| op.lowest(k), || fine_op.lowest(k));
    let eigenvalues: Vec<f64> = coarse.iter().zip(&fine).map(|(c, f)| (4.0 * f - c) / 3.0).collect();
    let error_estimates: Vec<f64> = coarse.iter().zip(&fine).map(|(c, f)| (f - c).abs() / 3.0).collect();
    let pairs: Vec<(Vec<f64>, f64)> = fine.par_iter().map(|&l| fine_op.eigenvector(l)).collect();
    let mut eigenfunctions = Vec::with_capacity(k);
    let mut rayleigh_residuals = Vec::with_capacity(k);
    for (i, (u, res)) in pairs.into_iter().enumerate() {
        eigenfunctions.push(fine_op.to_function(&u, &format!("eigenfunction {i} of {}", fine_op.descriptor())));
        rayleigh_residuals.push(res);
    }
    let unresolved =
        (0..k.saturating_sub(1)).filter(|&i| eigenvalues[i + 1] - eigenvalues[i] <= 10.0 * error_estimates[i].max(error_estimates[i + 1])).collect();
    let gap_estimate = eigenvalues.iter().filter(|&&l| !is_symmetry_mode(op.kind, op.m, l)).map(|l| l.abs()).fold(f64::INFINITY, f64::min);
    let report = SpectrumReport {
        descriptor: op.descriptor(),
        m: op.m,
        eigenvalues,
        coarse,
        fine,
        error_estimates,
        neg_count: fine_op.count_below(0.0),
        eigenfunctions,
        rayleigh_residuals,
        symmetry_residual: op.symmetry_residual.max(fine_op.symmetry_residual),
        unresolved,
        gap_estimate,
    };
    Ok((report, fine_op))
}

fn shoot_opts() -> Options<f64> {
    let mut o = Options::tol(1e-11);
    o.atol = 1e-300;
    o.hrel = Some(0.05);
    o
}

/// Solution of `𝓛_{n,m}φ = 0` from the origin with `φ ~ r^m`
/// (`φ(0) = 1` for `m = 0`), up to `r_end`.
pub fn zero_energy_solution(profile: &ProfileSolution, m: u32, r_end: f64) -> Result<RadialFunction, SpectralError> {
    let params = profile.params;
    let a = params.two_over_pm1;
    let mm = (m as f64) * (m as f64 + 1.0);
    let v0 = profile.potential(0.0);
    let c = (a + m as f64 - v0) / (4.0 * m as f64 + 6.0);
    let r_min = 1e-6 * profile.mu;
    let mf = m as i32;
    let u = r_min.powi(mf) * (1.0 + c * r_min * r_min);
    let du = if m == 0 { 2.0 * c * r_min } else { mf as f64 * r_min.powi(mf - 1) + (mf as f64 + 2.0) * c * r_min.powi(mf + 1) };
    let field = |r: f64, u: f64, du: f64| -(2.0 / r - r) * du + (a + mm / (r * r) - profile.potential(r)) * u;
    let init = ode::RadialInit::Point { u, du };
    Ok(ode::integrate_radial_with(field, init, (r_min, r_end), &shoot_opts(), &format!("zero-energy solution m={m}"))?)
}

/// Sign changes of `f` between stored nodes, located by bisection.
fn node_zeros(f: &RadialFunction) -> Vec<f64> {
    let n = f.len();
    let mut zeros = Vec::new();
    for i in 0..n - 1 {
        let (u0, u1) = (f.values[i], f.values[i + 1]);
        if u0 == 0.0 || u0.signum() == u1.signum() {
            continue;
        }
        let (mut lo, mut hi) = (f.grid.nodes[i], f.grid.nodes[i + 1]);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if f.value(mid).signum() == u0.signum() {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        zeros.push(0.5 * (lo + hi));
    }
    zeros
}

/// Outer radius for shooting: beyond it the `e^{r²/2}` branch dominates.
pub const SHOOT_R: f64 = 12.0;

/// Zero count of the zero-energy solution of `𝓛_{n,m}` on `(0, SHOOT_R]`.
pub fn oscillation_count(profile: &ProfileSolution, m: u32) -> Result<(usize, Vec<f64>), SpectralError> {
    let phi = zero_energy_solution(profile, m, SHOOT_R)?;
    let zeros = node_zeros(&phi);
    // the last stored slope must carry the sign of the value: monotone growth
    let n = phi.len();
    if phi.values[n - 1] * phi.derivs[n - 1] <= 0.0 {
        return Err(SpectralError::Mismatch(format!("zero-energy solution m={m} not monotone at r = {SHOOT_R}")));
    }
    Ok((zeros.len(), zeros))
}

/// `sup_{r ≤ r0} (1 + r/μ)^{1/2} |φ_{n,0}(r) − (p−1)/2 ΛQ(r/μ)|`.
pub fn phi_n0_vs_lambda_q(profile: &ProfileSolution, gs: &GroundState) -> Result<f64, SpectralError> {
    let phi = zero_energy_solution(profile, 0, profile.r0)?;
    let mu = profile.mu;
    let k = 0.5 * (profile.params.p - 1.0);
    let mut sup: f64 = (1.0 - k * gs.lam_profile.value(0.0)).abs();
    for (i, &r) in phi.grid.nodes.iter().enumerate() {
        let d = (phi.values[i] - k * gs.lam_profile.value(r / mu)).abs();
        sup = sup.max((1.0 + r / mu).sqrt() * d);
    }
    Ok(sup)
}

/// Last zeros below `r0` of `φ_{n,0}` and of `ΛΦₙ`.
pub fn last_zero_pair(profile: &ProfileSolution) -> Result<(f64, f64), SpectralError> {
    let phi = zero_energy_solution(profile, 0, profile.r0)?;
    let r1 = node_zeros(&phi).into_iter().last().ok_or_else(|| SpectralError::Mismatch("φ_{n,0} has no zero below r0".into()))?;
    Ok((r1, profile.diagnostics.last_zero))
}

/// Eigenvalues of `A∞[r_cut]` predicted by the small-`r` phase condition
/// `ω log r_cut − Φ(λ) ≡ π/2 (mod π)`, within `window`.
pub fn dirichlet_spectrum_quantized(params: &ModelParams, r_cut: f64, window: (f64, f64)) -> Result<Vec<f64>, SpectralError> {
    if !(r_cut > 0.0 && r_cut <= 0.3 && window.1 > window.0) {
        return Err(SpectralError::Invalid(format!("r_cut = {r_cut}, window {window:?}")));
    }
    let pi = std::f64::consts::PI;
    let w = params.omega;
    let c = 1.0 / (params.p - 1.0);
    let n = ((window.1 - window.0) / 1e-3).ceil() as usize;
    let lams: Vec<f64> = (0..=n).map(|i| window.0 + (window.1 - window.0) * i as f64 / n as f64).collect();
    let phases = specfun::phase_scan(w, c, &lams)?;
    let g = |phase: f64| (w * r_cut.ln() - phase - 0.5 * pi) / pi;
    let mut out = Vec::new();
    for i in 0..n {
        let (g0, g1) = (g(phases[i]), g(phases[i + 1]));
        if g0.floor() == g1.floor() {
            continue;
        }
        let target = g0.floor().max(g1.floor());
        let reference = phases[i];
        let tracked = |l: f64| -> Result<f64, SpectralError> {
            let raw = specfun::phase_raw(w, c, l)?;
            Ok(raw + 2.0 * pi * ((reference - raw) / (2.0 * pi)).round())
        };
        let (mut lo, mut hi) = (lams[i], lams[i + 1]);
        let s0 = (g0 - target).signum();
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if (g(tracked(mid)?) - target).signum() == s0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        out.push(0.5 * (lo + hi));
    }
    Ok(out)
}

/// Real eigenfunction of `𝓛∞ψ = λψ` decaying polynomially at infinity,
/// `ψ = Re[2^{-a} r^{-γ} U(a, b, r²/2)]`, and its imaginary remainder.
pub fn kummer_eigenfunction(params: &ModelParams, lambda: f64, r: f64) -> Result<(f64, f64), SpectralError> {
    let (a, b) = specfun::kummer_parameters(params.omega, 1.0 / (params.p - 1.0), lambda);
    let gamma = num_complex::Complex64::new(0.5, params.omega);
    let u = specfun::tricomi_u(a, b, 0.5 * r * r)?;
    let psi = (-a * std::f64::consts::LN_2 - gamma * r.ln()).exp() * u;
    Ok((psi.re, psi.im))
}

/// Eigenvalues of `A∞[r_cut]` from the exact condition `ψ_λ(r_cut) = 0`
/// on the Kummer eigenfunction.
pub fn dirichlet_spectrum_kummer(params: &ModelParams, r_cut: f64, window: (f64, f64)) -> Result<Vec<f64>, SpectralError> {
    let n = ((window.1 - window.0) / 2e-3).ceil() as usize;
    let f = |l: f64| kummer_eigenfunction(params, l, r_cut).map(|v| v.0);
    let mut out = Vec::new();
    let mut prev = (window.0, f(window.0)?);
    for i in 1..=n {
        let l = window.0 + (window.1 - window.0) * i as f64 / n as f64;
        let v = f(l)?;
        if v == 0.0 {
            out.push(l);
        } else if prev.1 != 0.0 && v.signum() != prev.1.signum() {
            let (mut lo, mut hi) = (prev.0, l);
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                let fm = f(mid)?;
                if fm == 0.0 {
                    lo = mid;
                    hi = mid;
                    break;
                }
                if fm.signum() == prev.1.signum() {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            out.push(0.5 * (lo + hi));
        }
        prev = (l, v);
    }
    Ok(out)
}

/// Fundamental pair of `H_m u = 0` at the ground state.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Fundamental {
    pub m: u32,
    /// Regular solution, `ν_m ~ r^m` at the origin.
    pub nu: RadialFunction,
    /// Second solution with Wronskian `ν φ' − ν' φ = −1/r²`.
    pub phi: RadialFunction,
    /// Fitted and predicted decay exponents `e` in `ν_m ~ r^{-e}`.
    pub tail_exponents: (f64, f64),
    /// Max relative Wronskian defect, from differences of the interpolants.
    pub wronskian_residual: f64,
    pub min_nu: f64,
    /// m = 1 only: max relative gap between the shot ν₁ and `Q'/Q''(0)` on `r ≤ IVP_CHECK_R`.
    pub ivp_deviation: f64,
}

/// Outer radius of the fundamental solutions.
pub const FUNDAMENTAL_R: f64 = 1e8;
pub const IVP_CHECK_R: f64 = 100.0;

pub fn h_m_fundamental(params: &ModelParams, gs: &GroundState, m: u32) -> Result<Fundamental, SpectralError> {
    if m == 0 {
        return Err(SpectralError::Invalid("h_m_fundamental needs m >= 1".into()));
    }
    let p = params.p;
    let mf = m as f64;
    let mm = mf * (mf + 1.0);
    let pot = |r: f64| p * gs.eval(r).0.abs().powf(p - 1.0);
    let c = -p / (4.0 * mf + 6.0);
    let r_min: f64 = 1e-6;
    let mi = m as i32;
    let u = r_min.powi(mi) * (1.0 + c * r_min * r_min);
    let du = mf * r_min.powi(mi - 1) + (mf + 2.0) * c * r_min.powi(mi + 1);
    let field = |r: f64, u: f64, du: f64| -2.0 * du / r + (mm / (r * r) - pot(r)) * u;
    let mut opts = shoot_opts();
    opts.rtol = 1e-12;
    opts.hrel = Some(0.02);
    let ivp = ode::integrate_radial_with(field, ode::RadialInit::Point { u, du }, (r_min, FUNDAMENTAL_R), &opts, &format!("nu_{m}"))?;
    // forward shooting of the decaying m = 1 branch picks up r^{1/3} growth at
    // large r, so ν₁ is taken from the ground state and the IVP only checked
    let (nu, ivp_deviation) = if m == 1 {
        let q2 = -1.0 / 3.0;
        let nodes = ivp.grid.nodes.clone();
        let vals: Vec<f64> = nodes.iter().map(|&r| gs.eval(r).1 / q2).collect();
        let ders: Vec<f64> = nodes
            .iter()
            .map(|&r| {
                let (q, dq) = gs.eval(r);
                (-2.0 * dq / r - q.abs().powf(p - 1.0) * q) / q2
            })
            .collect();
        let sec: Vec<f64> = (0..nodes.len()).map(|i| field(nodes[i], vals[i], ders[i])).collect();
        let nu = RadialFunction::new(nodes, vals, ders, "nu_1")?.with_second(sec);
        let dev = ivp.grid.nodes.iter().zip(&ivp.values).filter(|(r, _)| **r <= IVP_CHECK_R).map(|(&r, &v)| (v / nu.value(r) - 1.0).abs()).fold(0.0, f64::max);
        (nu, dev)
    } else {
        (ivp, 0.0)
    };
    let min_nu = nu.values.iter().copied().fold(f64::INFINITY, f64::min);
    if m >= 2 {
        if let Some(i) = nu.values.iter().position(|&v| v <= 0.0) {
            return Err(SpectralError::Positivity { m, r: nu.grid.nodes[i] });
        }
    }
    // reduction of order: φ = ν J with J' = −1/(r²ν²)
    let jrhs = |r: f64, _y: &[f64; 1]| {
        let v = nu.value(r);
        [-1.0 / (r * r * v * v)]
    };
    let mut jopts = Options::tol(1e-12);
    jopts.atol = 1e-300;
    jopts.hrel = Some(0.02);
    let nodes = &nu.grid.nodes;
    let mut jv = vec![0.0; nodes.len()];
    if m >= 2 {
        // J(r) = ∫_r^∞, with the power-law tail beyond R
        let big_r = FUNDAMENTAL_R;
        let (vr, dvr) = nu.eval(big_r);
        let kappa = big_r * dvr / vr;
        let tail = 1.0 / (big_r * vr * vr * (2.0 * kappa + 1.0));
        let sol = ode::solve(jrhs, big_r, [tail], nodes[0], &jopts)?;
        for (i, &r) in nodes.iter().enumerate() {
            jv[i] = sol.eval(r)[0];
        }
    } else {
        // J(r) = −∫_1^r, so φ₁ is the growing branch; J starts at zero
        jopts.atol = 1e-13;
        let fwd = ode::solve(jrhs, 1.0, [0.0], FUNDAMENTAL_R, &jopts)?;
        let bwd = ode::solve(jrhs, 1.0, [0.0], nodes[0], &jopts)?;
        for (i, &r) in nodes.iter().enumerate() {
            jv[i] = if r >= 1.0 { fwd.eval(r)[0] } else { bwd.eval(r)[0] };
        }
    }
    let pv: Vec<f64> = nu.values.iter().zip(&jv).map(|(v, j)| v * j).collect();
    let pd: Vec<f64> = (0..nodes.len()).map(|i| nu.derivs[i] * jv[i] - 1.0 / (nodes[i] * nodes[i] * nu.values[i])).collect();
    let ps: Vec<f64> = (0..nodes.len()).map(|i| field(nodes[i], pv[i], pd[i])).collect();
    let phi = RadialFunction::new(nodes.clone(), pv, pd, &format!("phi_{m}"))?.with_second(ps);

    // sampled off the nodes, so this measures the interpolants and not the construction
    let mut wres: f64 = 0.0;
    for k in 0..997 {
        let r = (1e-3f64.ln() + (1e6f64.ln() - 1e-3f64.ln()) * (k as f64 + 0.5) / 997.0).exp();
        let (v, dv) = nu.eval(r);
        let (f, df) = phi.eval(r);
        wres = wres.max(((v * df - dv * f) * r * r + 1.0).abs());
    }
    let fit_window = (FUNDAMENTAL_R / 100.0, FUNDAMENTAL_R);
    let samples: Vec<(f64, f64)> = (0..=400)
        .map(|k| {
            let t = fit_window.0.ln() + (fit_window.1.ln() - fit_window.0.ln()) * k as f64 / 400.0;
            (t, nu.value(t.exp()).abs().ln())
        })
        .collect();
    let slope = ls_slope(&samples);
    let sd = discriminant(params, m).sqrt();
    let predicted = if m == 1 { 0.5 * (1.0 + sd) } else { 0.5 * (1.0 - sd) };
    Ok(Fundamental { m, nu, phi, tail_exponents: (-slope, predicted), wronskian_residual: wres, min_nu, ivp_deviation })
}

fn ls_slope(s: &[(f64, f64)]) -> f64 {
    let n = s.len() as f64;
    let mx = s.iter().map(|p| p.0).sum::<f64>() / n;
    let my = s.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = s.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = s.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

/// Log-log slope of `|f|` on `window`.
pub fn decay_slope(f: &RadialFunction, window: (f64, f64)) -> f64 {
    let samples: Vec<(f64, f64)> = (0..=200)
        .map(|k| {
            let t = window.0.ln() + (window.1.ln() - window.0.ln()) * k as f64 / 200.0;
            (t, f.value(t.exp()).abs().ln())
        })
        .collect();
    ls_slope(&samples)
}

/// Relative `L²_ρ` distance between the nodal function `u` and `target`
/// sampled on the same nodes, after normalization and sign fix. A sup norm
/// would be dominated by the Dirichlet cut at the outer radius, where the
/// weight is `e^{-R²/2}`.
pub fn mode_deviation(op: &DiscreteOperator, u: &[f64], target: impl Fn(f64) -> f64) -> f64 {
    let t: Vec<f64> = op.nodes.iter().map(|&r| target(r)).collect();
    let nt = op.inner(&t, &t).sqrt();
    let nu = op.inner(u, u).sqrt();
    let sign = op.inner(&t, u).signum();
    let d: Vec<f64> = u.iter().zip(&t).map(|(a, b)| sign * a / nu - b / nt).collect();
    op.inner(&d, &d).sqrt()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GapChecks {
    pub mode_minus2_residual: f64,
    pub mode_minus2_eigenfunction: f64,
    pub mode_minus2_rayleigh_trial: f64,
    pub mode_minus1_residual: f64,
    pub mode_minus1_eigenfunction: f64,
    pub mode_minus1_rayleigh_trial: f64,
    pub m1_second: f64,
    pub m2_lowest: f64,
    pub oscillation_match: bool,
    /// `(m, discretized count, shooting count)`.
    pub counts: Vec<(u32, usize, usize)>,
    pub lowest_by_m: Vec<f64>,
    /// `(m, index, fitted slope, predicted slope)` for modes with `−10 ≤ λ < 0`.
    pub decay_slopes: Vec<(u32, usize, f64, f64)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GapReport {
    pub index_n: usize,
    pub spectra: Vec<SpectrumReport>,
    pub checks: GapChecks,
    pub gap_estimate: f64,
    /// Whether the counts, the −2/−1 modes and m = 2 positivity all hold.
    pub consistent: bool,
}

/// Number of eigenpairs computed per harmonic in the gap report, beyond
/// the expected negative ones.
const EXTRA_PAIRS: usize = 4;
/// Relative Richardson error targeted by the gap report.
pub const GAP_REL_TOL: f64 = 1e-4;

pub fn spectral_gap_report(profile: &ProfileSolution) -> Result<GapReport, SpectralError> {
    let pot = Potential::profile(profile);
    let n = profile.index_n;
    let ops: Vec<DiscreteOperator> =
        (0..5u32).map(|m| build_operator(&pot, m, OperatorKind::Ln, (0.0, DEFAULT_R), InnerBc::Regular, DEFAULT_CELLS)).collect::<Result<_, _>>()?;
    let ks = [n + 1 + EXTRA_PAIRS, 1 + EXTRA_PAIRS, EXTRA_PAIRS, 1, 1];
    let solved: Vec<(SpectrumReport, DiscreteOperator)> =
        ops.par_iter().zip(ks).map(|(op, k)| eigen_spectrum_adaptive(op, k, GAP_REL_TOL, MAX_CELLS)).collect::<Result<_, _>>()?;
    let (spectra, fines): (Vec<SpectrumReport>, Vec<DiscreteOperator>) = solved.into_iter().unzip();
    let shots: Vec<(usize, Vec<f64>)> = (0..3u32).into_par_iter().map(|m| oscillation_count(profile, m)).collect::<Result<_, _>>()?;

    let s0 = &spectra[0];
    let top = s0.eigenvalues[n];
    let fine0 = &fines[0];
    let (u2, _) = fine0.eigenvector(s0.fine[n]);
    let lam_phi = |r: f64| profile.lambda_phi(r).0;
    let dev2 = mode_deviation(fine0, &u2, lam_phi);
    let trial2: Vec<f64> = fine0.nodes.iter().map(|&r| lam_phi(r)).collect();
    let s1 = &spectra[1];
    let fine1 = &fines[1];
    let (u1, _) = fine1.eigenvector(s1.fine[0]);
    let dphi = |r: f64| profile.eval(r).1;
    let dev1 = mode_deviation(fine1, &u1, dphi);
    let trial1: Vec<f64> = fine1.nodes.iter().map(|&r| dphi(r)).collect();

    let counts: Vec<(u32, usize, usize)> = (0..3).map(|m| (m as u32, spectra[m].neg_count, shots[m].0)).collect();
    let oscillation_match = counts.iter().all(|c| c.1 == c.2);
    let mut decay_slopes = Vec::new();
    let a = profile.params.two_over_pm1;
    for s in &spectra[..3] {
        for (i, &l) in s.eigenvalues.iter().enumerate() {
            if (-10.0..0.0).contains(&l) {
                let slope = decay_slope(&s.eigenfunctions[i], (4.0, 8.0));
                decay_slopes.push((s.m, i, slope, -a + l));
            }
        }
    }
    let gap_estimate = spectra[..3].iter().flat_map(|s| s.eigenvalues.iter().copied()).filter(|&l| l > 0.0).fold(f64::INFINITY, f64::min);
    let checks = GapChecks {
        mode_minus2_residual: (top + 2.0).abs(),
        mode_minus2_eigenfunction: dev2,
        mode_minus2_rayleigh_trial: (fine0.rayleigh(&trial2) + 2.0).abs(),
        mode_minus1_residual: (s1.eigenvalues[0] + 1.0).abs(),
        mode_minus1_eigenfunction: dev1,
        mode_minus1_rayleigh_trial: (fine1.rayleigh(&trial1) + 1.0).abs(),
        m1_second: s1.eigenvalues[1],
        m2_lowest: spectra[2].eigenvalues[0],
        oscillation_match,
        counts,
        lowest_by_m: spectra.iter().map(|s| s.eigenvalues[0]).collect(),
        decay_slopes,
    };
    let consistent = oscillation_match
        && s0.neg_count == n + 1
        && checks.mode_minus2_residual < 1e-3
        && s1.neg_count == 1
        && checks.mode_minus1_residual < 1e-3
        && checks.m1_second > 0.0
        && checks.m2_lowest > 0.0;
    Ok(GapReport { index_n: n, spectra: spectra.into_iter().take(3).collect(), checks, gap_estimate, consistent })
}
