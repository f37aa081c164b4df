mod common;

use std::sync::OnceLock;

use common::{p7, profiles7};
use selfsim::dynamics::*;
use selfsim::spectral::spectral_gap_report;
use selfsim::RadialFunction;

const LAMBDA0: f64 = 0.05;

fn flow1() -> &'static RenormalizedFlow {
    static F: OnceLock<RenormalizedFlow> = OnceLock::new();
    F.get_or_init(|| RenormalizedFlow::new(&profiles7()[0], FlowConfig::default()).unwrap())
}

/// Extrapolated `m = 0` eigenvalues of the first profile.
fn spectrum1() -> &'static [f64] {
    static S: OnceLock<Vec<f64>> = OnceLock::new();
    S.get_or_init(|| spectral_gap_report(&profiles7()[0]).unwrap().spectra[0].eigenvalues.clone())
}

fn cfg(ds: f64) -> EvolveConfig {
    EvolveConfig { ds, ..Default::default() }
}

fn bump_eps(flow: &RenormalizedFlow, amp: f64) -> Vec<f64> {
    let raw: Vec<f64> = flow.nodes.iter().map(|&y| amp * (-(y - 1.0f64).powi(2)).exp()).collect();
    flow.orthogonalize(&raw)
}

fn fit_rate(points: &[(f64, f64)]) -> f64 {
    let m = points.len() as f64;
    let (mx, my) = points.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0 / m, a.1 + p.1 / m));
    let (sxy, sxx) = points.iter().fold((0.0, 0.0), |a, p| (a.0 + (p.0 - mx) * (p.1 - my), a.1 + (p.0 - mx).powi(2)));
    sxy / sxx
}

#[test]
fn flow_spectrum_matches_extrapolated() {
    let f = flow1();
    assert_eq!(f.index_n, 1);
    assert_eq!(f.modes.len(), 1);
    assert!((f.gauge_eigenvalue + 2.0).abs() < 1e-3, "{}", f.gauge_eigenvalue);
    let ext = spectrum1();
    assert!((f.modes[0].mu + ext[0]).abs() < 1e-3 * ext[0].abs(), "{} vs {}", f.modes[0].mu, ext[0]);
    assert!((f.first_positive - ext[2]).abs() < 1e-3, "{} vs {}", f.first_positive, ext[2]);
    assert!(f.profile_gap < 1e-4, "{}", f.profile_gap);
    assert!(f.gram_cond < 10.0);
    assert!((f.mu - 0.25 * f.first_positive).abs() < 1e-15);
    // eigen-relation of the discrete mode
    let psi = &f.modes[0].psi;
    let lpsi = f.apply_linear(psi);
    let res = lpsi.iter().zip(psi).map(|(a, b)| a + f.modes[0].mu * b).collect::<Vec<_>>();
    assert!(f.norm(&res) < 1e-8 * f.modes[0].mu);
    assert!((f.norm(psi) - 1.0).abs() < 1e-12);
}

#[test]
fn pure_profile_is_fixed() {
    let f = flow1();
    let st = f.seeded(LAMBDA0, &[0.0], None).unwrap();
    let tr = f.evolve(&st, 0.1, &cfg(1e-3)).unwrap();
    assert_eq!(tr.steps, 100);
    assert!(tr.exit.is_none());
    for (m, st) in tr.mod_record.iter().zip(&tr.states) {
        assert!(m.scaling.abs() <= 1e-10);
        assert!(st.diagnostics.l2_rho < 1e-12);
    }
    let last = tr.states.last().unwrap();
    assert!(last.diagnostics.h2_rho < 1e-12);
    assert!((last.lambda / (LAMBDA0 * (-0.1f64).exp()) - 1.0).abs() < 1e-12);
    // λ² = 2(T − t) exactly, T = λ0²/2
    let t = *tr.physical_time.last().unwrap();
    assert!((last.lambda.powi(2) - 2.0 * (0.5 * LAMBDA0 * LAMBDA0 - t)).abs() < 1e-14);
    let (b, rates) = f.modulation_coefficients(&st).unwrap();
    assert_eq!(b, 0.0);
    assert!(rates.iter().all(|r| *r == 0.0));
}

#[test]
fn decompose_exact_profile() {
    let f = flow1();
    let st = f.seeded(LAMBDA0, &[0.0], None).unwrap();
    let u = f.to_physical(&st).unwrap();
    let d = f.decompose(&u, 1.02 * LAMBDA0, 0.0).unwrap();
    assert!((d.lambda / LAMBDA0 - 1.0).abs() < 1e-10);
    assert!(d.a[0].abs() < 1e-10);
    assert!(d.diagnostics.l2_rho < 1e-10);
}

#[test]
fn decompose_linear_in_mode_amplitude() {
    // the deeper mode is sharper in sup norm, so its amplitude is scaled down
    // to stay inside the tube
    for (k, (prof, c)) in profiles7()[..2].iter().zip([1e-4, 1e-6]).enumerate() {
        let f = RenormalizedFlow::new(prof, FlowConfig::default()).unwrap();
        assert_eq!(f.modes.len(), k + 1);
        for j in 0..f.modes.len() {
            let mut a = vec![0.0; f.modes.len()];
            a[j] = c;
            let st = f.seeded(0.02, &a, None).unwrap();
            let u = f.to_physical(&st).unwrap();
            let d = f.decompose(&u, 0.02 * (1.0 + 1e-3), 0.0).unwrap();
            for (i, x) in d.a.iter().enumerate() {
                let want = if i == j { c } else { 0.0 };
                assert!((x - want).abs() < 1e-4 * c, "n={} j={j} a[{i}] = {x:e}", k + 1);
            }
            assert!((d.lambda / 0.02 - 1.0).abs() < 1e-8);
        }
    }
}

#[test]
fn decomposition_is_unique() {
    let f = flow1();
    let st = f.seeded(LAMBDA0, &[2e-6], Some(&bump_eps(f, 1e-4))).unwrap();
    let tr = f.evolve(&st, 0.004, &cfg(1e-4)).unwrap();
    let last = tr.states.last().unwrap();
    let u = f.to_physical(last).unwrap();
    let d = f.decompose(&u, last.lambda * 1.001, last.s).unwrap();
    assert!((d.lambda / last.lambda - 1.0).abs() < 1e-12);
    assert!((d.a[0] - last.a[0]).abs() < 1e-12 * last.a[0].abs().max(1e-6));
    let gap = d.eps.values.iter().zip(&last.eps.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let size = last.eps.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    assert!(gap < 1e-12 * size.max(1e-12), "{gap:e} of {size:e}");
}

#[test]
fn decompose_rejects_outside_tube() {
    let f = flow1();
    let st = f.seeded(LAMBDA0, &[0.0], None).unwrap();
    let u = f.to_physical(&st).unwrap();
    let big = u.map(|_, v, d| (1.3 * v, 1.3 * d), "u");
    assert!(matches!(f.decompose(&big, LAMBDA0, 0.0), Err(DynamicsError::OutsideTube { .. })));
    let far = f.seeded(LAMBDA0, &[0.01], None).unwrap();
    assert!(matches!(f.evolve(&far, 0.1, &cfg(1e-4)), Err(DynamicsError::OutsideTube { .. })));
}

#[test]
fn seeded_mode_rate_at_start() {
    let f = flow1();
    let st = f.seeded(LAMBDA0, &[1e-6], None).unwrap();
    let (b, rates) = f.modulation_coefficients(&st).unwrap();
    let rate = (rates[0] + f.modes[0].mu * st.a[0]) / st.a[0];
    let mu = -spectrum1()[0];
    assert!((rate / mu - 1.0).abs() < 1e-3, "{rate} vs {mu}");
    // quadratic in the amplitude
    let st2 = f.seeded(LAMBDA0, &[5e-7], None).unwrap();
    let (b2, _) = f.modulation_coefficients(&st2).unwrap();
    assert!((b / b2 - 4.0).abs() < 0.05, "{b:e} {b2:e}");
}

#[test]
fn seeded_mode_growth_rate() {
    let f = flow1();
    let st = f.seeded(LAMBDA0, &[1e-6], None).unwrap();
    let tr = f.evolve(&st, 3.0, &cfg(1e-4)).unwrap();
    let exit = tr.exit.expect("seeded run leaves the tube");
    assert!(matches!(exit.cause, ExitCause::Tube { .. }));
    let pts: Vec<(f64, f64)> = tr.states.iter().filter(|s| s.a[0].abs() < 1e-3).map(|s| (s.s, s.a[0].ln())).collect();
    assert!(pts.len() > 20);
    let rate = fit_rate(&pts);
    let mu = -spectrum1()[0];
    assert!((rate / mu - 1.0).abs() < 0.1, "{rate} vs {mu}");
    // scaling law on the last third
    let c = tr.blowup_slope().unwrap();
    assert!((c - 2.0).abs() < 0.05, "{c}");
}

#[test]
fn generic_eps_decays_and_slope() {
    let f = flow1();
    let eps = bump_eps(f, 1e-3);
    let st = f.seeded(LAMBDA0, &[0.0], Some(&eps)).unwrap();
    assert!(st.a[0].abs() < 1e-15);
    let tr = f.evolve(&st, 3.0, &EvolveConfig { ds: 1e-4, ..Default::default() }).unwrap();
    let norms: Vec<f64> = tr.states.iter().map(|s| s.diagnostics.l2_rho).collect();
    // small-data regime; near the exit the growing mode feeds ε quadratically
    let small = tr.states.iter().take_while(|s| s.diagnostics.linf_v < 0.5 * f.config.delta).count();
    assert!(small > 100);
    for w in norms[..small].windows(2) {
        assert!(w[1] < w[0], "{} -> {}", w[0], w[1]);
    }
    let c = tr.blowup_slope().unwrap();
    assert!((c - 2.0).abs() < 0.05, "{c}");
    // weighted stable bound from the start
    let w0 = st.diagnostics.h2_rho;
    assert!(tr.eps_weighted_max <= 2.0 * w0, "{} vs {w0}", tr.eps_weighted_max);
    for s in &tr.states {
        assert!(f.orthogonality_residual(&s.eps.values[..f.len()]) <= 1e-10 * s.diagnostics.l2_rho);
    }
}

#[test]
fn modulation_bound_is_quadratic() {
    let f = flow1();
    let constant = |amp: f64| {
        let st = f.seeded(LAMBDA0, &[amp], Some(&bump_eps(f, 100.0 * amp))).unwrap();
        let tr = f.evolve(&st, 0.004, &cfg(1e-4)).unwrap();
        tr.mod_record
            .iter()
            .zip(&tr.states)
            .map(|(m, s)| {
                let eps = &s.eps.values[..f.len()];
                let q = f.h1_rho(eps).powi(2) + s.diagnostics.delta_v_l2.powi(2) + s.a.iter().map(|a| a * a).sum::<f64>();
                m.scaling.abs() / q
            })
            .fold(0.0, f64::max)
    };
    let (c1, c2) = (constant(1e-6), constant(5e-7));
    assert!(c1.is_finite() && c1 > 0.0);
    assert!((c1 / c2 - 1.0).abs() < 0.1, "{c1:e} {c2:e}");
}

#[test]
fn unstable_sphere_exit_is_outgoing() {
    let f = flow1();
    let r: f64 = 1e-6;
    let s0 = -r.ln() / f.mu;
    let st = f.seeded(LAMBDA0, &[r], None).unwrap();
    let cfg = EvolveConfig { ds: 1e-4, s0, a_bound: true, ..Default::default() };
    let tr = f.evolve(&st, 1.0, &cfg).unwrap();
    match tr.exit.unwrap().cause {
        ExitCause::Unstable { value, rate } => {
            assert!(value > 1.0);
            assert!(rate > 0.0);
        }
        c => panic!("{c:?}"),
    }
    assert_eq!(tr.steps, 1);
}

#[test]
fn orthogonality_does_not_drift() {
    let f = flow1();
    let st = f.seeded(LAMBDA0, &[0.0], Some(&bump_eps(f, 1e-4))).unwrap();
    let tr = f.evolve(&st, 0.01, &EvolveConfig { ds: 1e-6, record_every: 500, ..Default::default() }).unwrap();
    assert_eq!(tr.steps, 10_000);
    for s in &tr.states {
        let r = f.orthogonality_residual(&s.eps.values[..f.len()]);
        assert!(r <= 1e-10 * s.diagnostics.l2_rho, "s = {} residual {r:e}", s.s);
    }
}

#[test]
fn step_halving_changes_lambda_little() {
    let f = flow1();
    let st = f.seeded(LAMBDA0, &[1e-6], Some(&bump_eps(f, 1e-4))).unwrap();
    let l1 = f.evolve(&st, 0.008, &cfg(1e-4)).unwrap().states.last().unwrap().lambda;
    let l2 = f.evolve(&st, 0.008, &cfg(5e-5)).unwrap().states.last().unwrap().lambda;
    assert!((l1 / l2 - 1.0).abs() < 1e-6, "{:e}", l1 / l2 - 1.0);
}

#[test]
fn single_step_matches_evolve() {
    let f = flow1();
    let st = f.seeded(LAMBDA0, &[1e-6], None).unwrap();
    let a = f.step(&st, 1e-4).unwrap();
    let b = f.evolve(&st, 1e-4, &cfg(1e-4)).unwrap();
    let b = b.states.last().unwrap();
    assert!((a.lambda - b.lambda).abs() < 1e-15);
    assert!((a.a[0] - b.a[0]).abs() < 1e-18);
    assert!(a.s > st.s);
}

#[test]
fn constant_data_ode_blowup() {
    let p = p7();
    let mesh = PhysicalMesh::new(32, 1.0, 0.5).unwrap();
    for &c in &[0.5, 1.0, 2.0] {
        let u0 = RadialFunction::from_fn(vec![0.0, 0.5, 1.0], |_| (c, 0.0), "const").unwrap();
        let cfg = PhysicalConfig { outer: OuterBc::Neumann, u_stop: 10.0 * c, dt_max: 1.0, ..Default::default() };
        let run = physical_evolve(&p, &mesh, &u0, 1e9, &cfg, None).unwrap();
        let exact = c.powf(1.0 - p.p) / (p.p - 1.0);
        let t = run.blowup_estimate.unwrap();
        assert!((t / exact - 1.0).abs() < 1e-3, "c = {c}: {t} vs {exact}");
    }
}

#[test]
fn physical_solver_agrees() {
    let f = flow1();
    let p = p7();
    let st = f.seeded(LAMBDA0, &[1e-6], None).unwrap();
    let mesh = f.matched_mesh(LAMBDA0, 2.0).unwrap();
    let u0 = f.physical_data(&st, &mesh).unwrap();
    assert!(u0.value(mesh.r_max).abs() < 1e-30);
    let renorm = f.evolve(&st, 3.0, &cfg(1e-4)).unwrap();
    let run = physical_evolve(&p, &mesh, &u0, 1.0, &PhysicalConfig { output_every: 20, ..Default::default() }, Some((f, LAMBDA0))).unwrap();
    let tr = run.trajectory.as_ref().unwrap();
    assert!(matches!(tr.exit.unwrap().cause, ExitCause::Tube { .. }));
    let mut compared = 0;
    for (s, &t) in tr.states.iter().zip(&tr.physical_time) {
        if let Some(l) = renorm.lambda_at(t) {
            assert!((s.lambda / l - 1.0).abs() < 0.02);
            compared += 1;
        }
    }
    assert!(compared > 20);
    let c = tr.blowup_slope().unwrap();
    assert!((c - 2.0).abs() < 0.1, "{c}");
    for w in run.energy.windows(2) {
        assert!(w[1] <= w[0], "{} -> {}", w[0], w[1]);
    }
    for w in tr.physical_time.windows(2) {
        assert!(w[1] > w[0]);
    }
    for w in tr.states.windows(2) {
        assert!(w[1].s > w[0].s);
    }
}

#[test]
fn physical_mesh_resolution_guard() {
    let p = p7();
    let mesh = PhysicalMesh::new(16, 1.0, 4.0).unwrap();
    let u0 = RadialFunction::from_fn((0..=200).map(|i| i as f64 / 200.0).collect(), |r| ((-(r / 0.01).powi(2)).exp(), 0.0), "spike").unwrap();
    let err = physical_evolve(&p, &mesh, &u0, 1e-3, &PhysicalConfig::default(), None).unwrap_err();
    assert!(matches!(err, DynamicsError::UnderResolved { .. }));
}

#[test]
fn cutoff_shape() {
    assert_eq!(cutoff(0.3), 1.0);
    assert_eq!(cutoff(1.0), 1.0);
    assert_eq!(cutoff(2.0), 0.0);
    assert!((cutoff(1.5) - 0.5).abs() < 1e-15);
    let mut prev = 1.0;
    for i in 1..100 {
        let c = cutoff(1.0 + i as f64 / 100.0);
        assert!(c <= prev);
        if (10..90).contains(&i) {
            assert!(c < prev);
        }
        prev = c;
    }
}
