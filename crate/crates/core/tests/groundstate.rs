mod common;

use common::{gs7, p7};
use proptest::prelude::*;
use selfsim::groundstate::{compute_ground_state, lambda_q_zero_before, GroundStateError};
use selfsim::model::derive_params;
use std::f64::consts::PI;

#[test]
fn origin_normalization() {
    let gs = gs7();
    assert_eq!(gs.profile.values[0], 1.0);
    assert_eq!(gs.profile.derivs[0], 0.0);
    // ΛQ(0) = 2/(p-1)
    assert!((gs.lam_profile.values[0] - 1.0 / 3.0).abs() < 1e-15);
}

#[test]
fn positive_and_decreasing() {
    let gs = gs7();
    for i in 1..gs.profile.len() {
        assert!(gs.profile.values[i] > 0.0);
        assert!(gs.profile.derivs[i] < 0.0);
        assert!(gs.profile.values[i] < gs.profile.values[i - 1]);
    }
}

#[test]
fn approaches_singular_solution() {
    let gs = gs7();
    let c_inf = 0.778_271_716_226_010_5; // (2/9)^(1/6)
    assert!((p7().c_inf - c_inf).abs() < 1e-12);
    let at = |r: f64| r.powf(1.0 / 3.0) * gs.profile.value(r);
    assert!((at(1e8) / c_inf - 1.0).abs() < 0.02);
    // at r = 1e3 the r^{-1/2} oscillation is still ~6% of Φ*, and the fitted tail accounts for it
    let misfit = |r: f64| {
        let tail = gs.tail.amplitude * (p7().omega * r.ln() + gs.tail.phase).sin() * r.powf(-0.5 + 1.0 / 3.0);
        (at(r) - c_inf - tail).abs() / c_inf
    };
    assert!(misfit(1e3) < 0.015);
    assert!(misfit(1e6) < 2e-3);
}

#[test]
fn tail_frequency_and_fit() {
    for p in [7.0, 9.0] {
        let params = derive_params(p).unwrap();
        let gs = compute_ground_state(&params, 1e12, 1e-12).unwrap();
        assert!((gs.tail.frequency / params.omega - 1.0).abs() < 5e-3, "p={p}: {}", gs.tail.frequency);
        assert!(gs.tail.rel_residual < 5e-2, "p={p}: {}", gs.tail.rel_residual);
        assert!(gs.tail.amplitude.abs() > 1e-3);
        let phase_gap = (gs.lam_tail.phase - gs.tail.phase).rem_euclid(PI);
        assert!((phase_gap - gs.predicted_phase_shift()).abs() < 0.05, "p={p}: {phase_gap}");
    }
}

#[test]
fn ladder_spacing() {
    let gs = gs7();
    let ratio = (PI / p7().omega).exp();
    let z = &gs.zero_ladder;
    assert!(z.len() >= 8);
    // the spacing error decays slowly; the sixth zero onward is within 3%
    let err: Vec<f64> = (0..z.len() - 1).map(|q| (z[q] * ratio / z[q + 1] - 1.0).abs()).collect();
    for q in 5..err.len() {
        assert!(err[q] < 0.03, "q={q}: {}", err[q]);
    }
    assert!(err[err.len() - 1] < err[3]);
    // last three rungs: log spacing within 3% of π/ω
    for w in z[z.len() - 4..].windows(2) {
        assert!(((w[1] / w[0]).ln() * p7().omega / PI - 1.0).abs() < 0.03);
    }
}

#[test]
fn quantization_residuals_settle() {
    let res = gs7().quantization_residuals();
    for (_, r) in &res[res.len() - 3..] {
        assert!(r.abs() < 0.1);
    }
    let labels: Vec<i64> = res.iter().map(|x| x.0).collect();
    assert!(labels.windows(2).all(|w| w[1] == w[0] + 1));
}

#[test]
fn zero_selection() {
    let gs = gs7();
    let r1 = gs.zero_ladder[0];
    assert_eq!(lambda_q_zero_before(gs, r1 * 1.001).unwrap(), r1);
    assert!(matches!(lambda_q_zero_before(gs, r1 * 0.999), Err(GroundStateError::NoZeroBelow(_))));
}

#[test]
fn rejects_short_range() {
    assert!(matches!(compute_ground_state(&p7(), 500.0, 1e-10), Err(GroundStateError::RangeTooShort(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]
    #[test]
    fn last_zero_within_three_half_periods(log_r in 3.0f64..25.0) {
        let gs = gs7();
        let r_cut = log_r.exp();
        let z = lambda_q_zero_before(gs, r_cut).unwrap();
        prop_assert!(z < r_cut);
        prop_assert!(z >= (-1.5 * PI / p7().omega).exp() * r_cut);
    }
}
