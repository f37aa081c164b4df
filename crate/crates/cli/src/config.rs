//! Run configuration: a TOML file with one table per module. Command-line
//! flags are applied on top, then the merged config is validated and hashed.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub p: f64,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self { p: 7.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GroundStateSection {
    pub r_max: f64,
    pub tol: f64,
}

impl Default for GroundStateSection {
    fn default() -> Self {
        Self { r_max: 1e12, tol: 1e-12 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConstructSection {
    pub r0: f64,
    pub lambda_min: f64,
    /// Defaults to `r0` when absent.
    pub lambda_max: Option<f64>,
    pub log_step: f64,
    pub r_max: f64,
    pub k: usize,
}

impl Default for ConstructSection {
    fn default() -> Self {
        Self { r0: 0.15, lambda_min: 1e-6, lambda_max: None, log_step: 0.05, r_max: 20.0, k: 0 }
    }
}

impl ConstructSection {
    pub fn lambda_range(&self) -> (f64, f64) {
        (self.lambda_min, self.lambda_max.unwrap_or(self.r0))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectrumSection {
    pub m: Vec<u32>,
    pub num: usize,
}

impl Default for SpectrumSection {
    fn default() -> Self {
        Self { m: vec![0, 1, 2], num: 12 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhaseSection {
    pub lambda_range: (f64, f64),
    pub grid: f64,
}

impl Default for PhaseSection {
    fn default() -> Self {
        Self { lambda_range: (-2.0, 0.5), grid: 0.005 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DynamicsSection {
    pub cells: usize,
    pub r_max: f64,
    pub delta: f64,
    pub ds: f64,
    pub s_max: f64,
    pub lambda0: f64,
    pub record_every: usize,
    /// `j=2:1e-6,j=3:…`; empty for no seeding.
    pub seeds: String,
    /// Stop once the weighted unstable coordinates leave the unit ball.
    pub a_bound: bool,
    /// Stop once the weighted `H²_ρ` norm of ε exceeds this; off when absent.
    pub eps_bound: Option<f64>,
}

impl Default for DynamicsSection {
    fn default() -> Self {
        Self {
            cells: 1200,
            r_max: 10.0,
            delta: 0.1,
            ds: 1e-4,
            s_max: 3.0,
            lambda0: 0.05,
            record_every: 1,
            seeds: String::new(),
            a_bound: true,
            eps_bound: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifySection {
    pub seed: u64,
    pub samples: usize,
}

impl Default for VerifySection {
    fn default() -> Self {
        Self { seed: 7, samples: 100 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSection,
    pub groundstate: GroundStateSection,
    pub construct: ConstructSection,
    pub spectrum: SpectrumSection,
    pub phase: PhaseSection,
    pub dynamics: DynamicsSection,
    pub verify: VerifySection,
}

fn invalid(module: &'static str, param: &str, value: impl std::fmt::Display, rule: &str) -> CliError {
    CliError::validation(module, "config", format!("{param} = {value}: {rule}"))
}

fn require(ok: bool, err: impl FnOnce() -> CliError) -> Result<(), CliError> {
    if ok {
        Ok(())
    } else {
        Err(err())
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = std::fs::read_to_string(path).map_err(|e| CliError::validation("cli", "config", format!("cannot read {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::validation("cli", "config", format!("{}: {e}", path.display())))
    }

    /// Range checks of every knob. The exponent itself is checked where it
    /// is used, since `phase-check` also accepts `p = 5` and `p = inf`.
    pub fn validate(&self) -> Result<(), CliError> {
        let g = &self.groundstate;
        require(g.r_max >= 1e3 && g.r_max <= 1e15, || invalid("groundstate", "r_max", g.r_max, "must lie in [1e3, 1e15]"))?;
        require(g.tol > 0.0 && g.tol <= 1e-6, || invalid("groundstate", "tol", g.tol, "must lie in (0, 1e-6]"))?;

        let c = &self.construct;
        require(c.r0 > 0.0 && c.r0 <= 0.5, || invalid("construct", "r0", c.r0, "must lie in (0, 0.5]"))?;
        let (lo, hi) = c.lambda_range();
        require(lo > 0.0 && lo < hi && hi <= c.r0, || {
            invalid("construct", "lambda range", format!("[{lo}, {hi}]"), "needs 0 < lambda_min < lambda_max <= r0")
        })?;
        require(c.log_step > 0.0 && c.log_step <= 0.5, || invalid("construct", "log_step", c.log_step, "must lie in (0, 0.5]"))?;
        require(c.r_max >= 5.0 && c.r_max <= 200.0, || invalid("construct", "r_max", c.r_max, "must lie in [5, 200]"))?;

        let s = &self.spectrum;
        require(!s.m.is_empty() && s.m.iter().all(|m| *m <= 4), || {
            invalid("spectrum", "m", format!("{:?}", s.m), "harmonics must be a non-empty subset of 0..=4")
        })?;
        require((1..=64).contains(&s.num), || invalid("spectrum", "num", s.num, "must lie in 1..=64"))?;

        let ph = &self.phase;
        require(ph.lambda_range.0 < ph.lambda_range.1 && ph.lambda_range.0.is_finite() && ph.lambda_range.1.is_finite(), || {
            invalid("phase", "lambda_range", format!("{:?}", ph.lambda_range), "needs a finite increasing pair")
        })?;
        require(ph.grid > 0.0 && ph.grid <= 0.5, || invalid("phase", "grid", ph.grid, "must lie in (0, 0.5]"))?;

        let d = &self.dynamics;
        require((100..=20000).contains(&d.cells), || invalid("dynamics", "cells", d.cells, "must lie in 100..=20000"))?;
        require(d.r_max >= 4.0 && d.r_max <= 20.0, || invalid("dynamics", "r_max", d.r_max, "must lie in [4, 20]"))?;
        require(d.delta > 0.0 && d.delta <= 1.0, || invalid("dynamics", "delta", d.delta, "must lie in (0, 1]"))?;
        require(d.ds > 0.0 && d.ds <= 1e-2, || invalid("dynamics", "ds", d.ds, "must lie in (0, 1e-2]"))?;
        require(d.s_max > 0.0 && d.s_max <= 100.0, || invalid("dynamics", "s_max", d.s_max, "must lie in (0, 100]"))?;
        require(d.lambda0 > 0.0 && d.lambda0 < 1.0, || invalid("dynamics", "lambda0", d.lambda0, "must lie in (0, 1)"))?;
        require(d.record_every >= 1, || invalid("dynamics", "record_every", d.record_every, "must be at least 1"))?;
        if let Some(b) = d.eps_bound {
            require(b > 0.0, || invalid("dynamics", "eps_bound", b, "must be positive"))?;
        }
        parse_seeds(&d.seeds)?;

        let v = &self.verify;
        require((1..=10000).contains(&v.samples), || invalid("verify", "samples", v.samples, "must lie in 1..=10000"))?;
        Ok(())
    }

    /// SHA-256 of the canonical JSON form of the merged config.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        Sha256::digest(canonical.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Parses `j=2:1e-6,j=3:-1e-7` into `(j, amplitude)` pairs.
pub fn parse_seeds(spec: &str) -> Result<Vec<(usize, f64)>, CliError> {
    let bad = |item: &str, why: &str| CliError::validation("dynamics", "seed", format!("'{item}': {why}"));
    let mut out: Vec<(usize, f64)> = Vec::new();
    for item in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let rest = item.strip_prefix("j=").ok_or_else(|| bad(item, "expected j=<index>:<amplitude>"))?;
        let (j, a) = rest.split_once(':').ok_or_else(|| bad(item, "expected j=<index>:<amplitude>"))?;
        let j: usize = j.parse().map_err(|_| bad(item, "index is not an integer"))?;
        let a: f64 = a.parse().map_err(|_| bad(item, "amplitude is not a number"))?;
        if j < 2 {
            return Err(bad(item, "unstable coordinates are numbered from j = 2"));
        }
        if !a.is_finite() {
            return Err(bad(item, "amplitude must be finite"));
        }
        if out.iter().any(|(k, _)| *k == j) {
            return Err(bad(item, "index given twice"));
        }
        out.push((j, a));
    }
    Ok(out)
}
