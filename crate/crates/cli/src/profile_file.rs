//! `profile.json`: scalar metadata of a constructed profile plus its
//! `Φₙ` and `ΛΦₙ` tables as embedded CSV blocks.

use std::path::Path;

use selfsim::construct::{ProfileDiagnostics, ProfileSolution};
use selfsim::{ModelParams, RadialFunction};
use serde::{Deserialize, Serialize};

use crate::error::{lift, CliError};
use crate::output::Provenance;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProfileFile {
    #[serde(flatten)]
    pub provenance: Provenance,
    pub params: ModelParams,
    pub r0: f64,
    pub r_max: f64,
    pub k: usize,
    pub mu: f64,
    pub epsilon: f64,
    pub index_n: usize,
    pub c1_residual: f64,
    pub ode_residual: f64,
    pub diagnostics: ProfileDiagnostics,
    pub phi_csv: String,
    pub lambda_phi_csv: String,
}

impl ProfileFile {
    pub fn new(provenance: Provenance, k: usize, p: &ProfileSolution) -> Self {
        Self {
            provenance,
            params: p.params,
            r0: p.r0,
            r_max: p.r_max,
            k,
            mu: p.mu,
            epsilon: p.epsilon,
            index_n: p.index_n,
            c1_residual: p.c1_residual,
            ode_residual: p.ode_residual,
            diagnostics: p.diagnostics,
            phi_csv: p.profile.to_csv(),
            lambda_phi_csv: p.lam_profile.to_csv(),
        }
    }

    pub fn solution(&self) -> Result<ProfileSolution, CliError> {
        let table = |text: &str| RadialFunction::from_csv(text).map_err(lift("construct", "load profile"));
        Ok(ProfileSolution {
            params: self.params,
            r0: self.r0,
            r_max: self.r_max,
            mu: self.mu,
            epsilon: self.epsilon,
            profile: table(&self.phi_csv)?,
            lam_profile: table(&self.lambda_phi_csv)?,
            index_n: self.index_n,
            c1_residual: self.c1_residual,
            ode_residual: self.ode_residual,
            diagnostics: self.diagnostics,
        })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::validation("construct", "load profile", format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::validation("construct", "load profile", format!("{}: {e}", path.display())))
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("profile serializes");
        s.push('\n');
        s
    }
}
