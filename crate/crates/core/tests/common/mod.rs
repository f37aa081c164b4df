#![allow(dead_code)]

use std::sync::OnceLock;

use selfsim::construct::{assemble_profile, scan_matching_scales, MatchingScan, ProfileSolution};
use selfsim::groundstate::{compute_ground_state, GroundState};
use selfsim::model::{derive_params, ModelParams};

pub const R0: f64 = 0.15;
pub const EXT_R: f64 = 20.0;

pub fn p7() -> ModelParams {
    derive_params(7.0).unwrap()
}

pub fn gs7() -> &'static GroundState {
    static GS: OnceLock<GroundState> = OnceLock::new();
    GS.get_or_init(|| compute_ground_state(&p7(), 1e12, 1e-12).unwrap())
}

pub fn scan7() -> &'static MatchingScan {
    static SCAN: OnceLock<MatchingScan> = OnceLock::new();
    SCAN.get_or_init(|| scan_matching_scales(&p7(), R0, (1e-6, R0), 0.05, EXT_R).unwrap())
}

pub fn profiles7() -> &'static [ProfileSolution] {
    static PROFILES: OnceLock<Vec<ProfileSolution>> = OnceLock::new();
    PROFILES.get_or_init(|| {
        let scan = scan7();
        (0..scan.roots.len()).map(|k| assemble_profile(&p7(), scan, k, EXT_R, gs7()).unwrap()).collect()
    })
}
