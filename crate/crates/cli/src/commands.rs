use std::path::Path;

use rayon::prelude::*;
use selfsim::construct::{assemble_profile, scan_matching_scales, MatchingScan, ProfileSolution};
use selfsim::dynamics::{EvolveConfig, ExitCause, FlowConfig, RenormalizedFlow};
use selfsim::groundstate::{compute_ground_state, GroundState};
use selfsim::model::{derive_params, oscillation_frequency};
use selfsim::specfun::{omega_limit, phase_scan};
use selfsim::spectral::{
    build_operator, eigen_spectrum_adaptive, spectral_gap_report, GapChecks, InnerBc, OperatorKind, Potential, DEFAULT_CELLS, DEFAULT_R, GAP_REL_TOL, MAX_CELLS,
};
use selfsim::verify::{verify_all, Lab, VerifySetup};
use selfsim::{ModelParams, RadialFunction};
use serde::Serialize;

use crate::config::{parse_seeds, RunConfig};
use crate::error::{lift, CliError, Kind};
use crate::output::{json_string, sidecar_path, write_json, Csv, Provenance};
use crate::profile_file::ProfileFile;
use crate::{Command, ConstructArgs, ConstructCommand, EvolveArgs};

/// Reference supremum of the phase gap in the `p → ∞` limit and its tolerance.
pub const PHASE_GAP_REFERENCE: f64 = -0.5945;
pub const PHASE_GAP_TOLERANCE: f64 = 0.005;

fn set<T>(slot: &mut T, flag: Option<T>) {
    if let Some(v) = flag {
        *slot = v;
    }
}

/// Validates the merged config and returns its provenance stamp.
fn finalize(cfg: &RunConfig) -> Result<Provenance, CliError> {
    cfg.validate()?;
    Ok(Provenance::new(cfg.hash()))
}

fn params_of(cfg: &RunConfig) -> Result<ModelParams, CliError> {
    derive_params(cfg.model.p).map_err(|e| CliError::validation("model", "derive_params", format!("p: {e}")))
}

pub fn dispatch(mut cfg: RunConfig, command: Command) -> Result<(), CliError> {
    match command {
        Command::Params { p, out } => {
            set(&mut cfg.model.p, p);
            params(&cfg, out.as_deref())
        }
        Command::Groundstate { p, rmax, tol, out } => {
            set(&mut cfg.model.p, p);
            set(&mut cfg.groundstate.r_max, rmax);
            set(&mut cfg.groundstate.tol, tol);
            groundstate(&cfg, &out)
        }
        Command::Construct(ConstructCommand::Scan { common, out }) => {
            apply_construct(&mut cfg, common);
            construct_scan(&cfg, &out)
        }
        Command::Construct(ConstructCommand::Build { common, k, out }) => {
            apply_construct(&mut cfg, common);
            set(&mut cfg.construct.k, k);
            construct_build(&cfg, &out)
        }
        Command::Spectrum { profile, m, num, out } => {
            set(&mut cfg.spectrum.m, m);
            set(&mut cfg.spectrum.num, num);
            spectrum(&cfg, &profile, &out)
        }
        Command::PhaseCheck { p, grid, lambda_min, lambda_max, out } => {
            if let Some(p) = p {
                cfg.model.p = parse_exponent(&p)?;
            }
            set(&mut cfg.phase.grid, grid);
            set(&mut cfg.phase.lambda_range.0, lambda_min);
            set(&mut cfg.phase.lambda_range.1, lambda_max);
            phase_check(&cfg, out.as_deref())
        }
        Command::Evolve(args) => evolve(cfg, args),
        Command::VerifyAll { seed, samples, out } => {
            set(&mut cfg.verify.seed, seed);
            set(&mut cfg.verify.samples, samples);
            verify(&cfg, &out)
        }
    }
}

fn apply_construct(cfg: &mut RunConfig, a: ConstructArgs) {
    set(&mut cfg.model.p, a.p);
    set(&mut cfg.construct.r0, a.r0);
    set(&mut cfg.construct.lambda_min, a.lambda_min);
    if a.lambda_max.is_some() {
        cfg.construct.lambda_max = a.lambda_max;
    }
    set(&mut cfg.construct.log_step, a.log_step);
    set(&mut cfg.construct.r_max, a.rmax);
}

fn parse_exponent(text: &str) -> Result<f64, CliError> {
    match text.trim().to_ascii_lowercase().as_str() {
        "inf" | "infinity" => Ok(f64::INFINITY),
        t => t.parse().map_err(|_| CliError::validation("cli", "phase-check", format!("p = {text}: expected a number or 'inf'"))),
    }
}

fn params(cfg: &RunConfig, out: Option<&Path>) -> Result<(), CliError> {
    let prov = finalize(cfg)?;
    let params = params_of(cfg)?;
    let text = json_string(&prov, params);
    print!("{text}");
    if let Some(path) = out {
        std::fs::write(path, &text).map_err(|e| CliError::io(path, e))?;
    }
    Ok(())
}

fn ground_state_of(cfg: &RunConfig, params: &ModelParams) -> Result<GroundState, CliError> {
    compute_ground_state(params, cfg.groundstate.r_max, cfg.groundstate.tol).map_err(lift("groundstate", "compute_ground_state"))
}

#[derive(Serialize)]
struct GroundStateSidecar<'a> {
    params: &'a ModelParams,
    r_max: f64,
    tail: &'a selfsim::ode::OscillationFit,
    lam_tail: &'a selfsim::ode::OscillationFit,
    predicted_phase_shift: f64,
    zero_ladder: &'a [f64],
    quantization_residuals: Vec<(i64, f64)>,
}

fn groundstate(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let prov = finalize(cfg)?;
    let params = params_of(cfg)?;
    let gs = ground_state_of(cfg, &params)?;
    let mut csv = Csv::with_columns(&prov, &["r", "Q", "dQ", "LambdaQ"]);
    let q = &gs.profile;
    for i in 0..q.len() {
        csv.row(&[q.grid.nodes[i], q.values[i], q.derivs[i], gs.lam_profile.values[i]]);
    }
    csv.write(out)?;
    let side = sidecar_path(out);
    write_json(
        &side,
        &prov,
        GroundStateSidecar {
            params: &params,
            r_max: cfg.groundstate.r_max,
            tail: &gs.tail,
            lam_tail: &gs.lam_tail,
            predicted_phase_shift: gs.predicted_phase_shift(),
            zero_ladder: &gs.zero_ladder,
            quantization_residuals: gs.quantization_residuals(),
        },
    )?;
    println!("ground state: {} nodes, tail amplitude {:.6e}, phase {:.6}", q.len(), gs.tail.amplitude, gs.tail.phase);
    println!("fitted frequency {:.6} (omega {:.6}), {} zeros of LambdaQ", gs.tail.frequency, params.omega, gs.zero_ladder.len());
    Ok(())
}

fn scan_of(cfg: &RunConfig, params: &ModelParams) -> Result<MatchingScan, CliError> {
    let c = &cfg.construct;
    scan_matching_scales(params, c.r0, c.lambda_range(), c.log_step, c.r_max).map_err(lift("construct", "scan_matching_scales"))
}

fn construct_scan(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let prov = finalize(cfg)?;
    let params = params_of(cfg)?;
    let scan = scan_of(cfg, &params)?;
    let mut csv = Csv::with_columns(&prov, &["lambda", "epsilon", "G"]);
    for s in &scan.samples {
        csv.row(&[s.lambda, s.epsilon, s.g]);
    }
    csv.write(out)?;
    for (k, mu) in scan.roots.iter().enumerate() {
        println!("root {k}: mu = {mu:.10e}");
    }
    Ok(())
}

fn build_profile(cfg: &RunConfig) -> Result<ProfileSolution, CliError> {
    let params = params_of(cfg)?;
    let (gs, scan) = rayon::join(|| ground_state_of(cfg, &params), || scan_of(cfg, &params));
    let (gs, scan) = (gs?, scan?);
    assemble_profile(&params, &scan, cfg.construct.k, cfg.construct.r_max, &gs).map_err(lift("construct", "assemble_profile"))
}

fn construct_build(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let prov = finalize(cfg)?;
    let profile = build_profile(cfg)?;
    let file = ProfileFile::new(prov, cfg.construct.k, &profile);
    std::fs::write(out, file.to_json()).map_err(|e| CliError::io(out, e))?;
    let d = &profile.diagnostics;
    println!("profile k = {}: mu = {:.10e}, index n = {}", cfg.construct.k, profile.mu, profile.index_n);
    println!("exterior sup {:.4e}, interior sup {:.4e}, ode residual {:.3e}", d.exterior_sup, d.interior_sup, profile.ode_residual);
    if d.outside_regime {
        println!("warning: diagnostics place this profile outside the asymptotic regime");
    }
    Ok(())
}

fn load_profile(path: &Path) -> Result<(ProfileFile, ProfileSolution), CliError> {
    let file = ProfileFile::load(path)?;
    let sol = file.solution()?;
    Ok((file, sol))
}

#[derive(Serialize)]
struct SpectrumEntry<'a> {
    m: u32,
    eigenvalues: Vec<f64>,
    error_estimates: Vec<f64>,
    neg_count: usize,
    /// Smallest positive eigenvalue among those computed for this `m`.
    gap: Option<f64>,
    checks: &'a GapChecks,
}

#[derive(Serialize)]
struct SpectrumFile<'a> {
    profile_config_hash: &'a str,
    index_n: usize,
    mu: f64,
    /// Smallest positive eigenvalue over m = 0, 1, 2.
    gap: f64,
    consistent: bool,
    spectra: Vec<SpectrumEntry<'a>>,
}

fn spectrum(cfg: &RunConfig, profile: &Path, out: &Path) -> Result<(), CliError> {
    let prov = finalize(cfg)?;
    let (file, sol) = load_profile(profile)?;
    let pot = Potential::profile(&sol);
    let num = cfg.spectrum.num;
    let (reports, gap) = rayon::join(
        || {
            cfg.spectrum
                .m
                .par_iter()
                .map(|&m| {
                    let op = build_operator(&pot, m, OperatorKind::Ln, (0.0, DEFAULT_R), InnerBc::Regular, DEFAULT_CELLS)?;
                    Ok(eigen_spectrum_adaptive(&op, num, GAP_REL_TOL, MAX_CELLS)?.0)
                })
                .collect::<Result<Vec<_>, selfsim::spectral::SpectralError>>()
        },
        || spectral_gap_report(&sol),
    );
    let reports = reports.map_err(lift("spectral", "eigen_spectrum"))?;
    let gap = gap.map_err(lift("spectral", "spectral_gap_report"))?;
    let spectra: Vec<SpectrumEntry> = reports
        .into_iter()
        .map(|r| SpectrumEntry {
            m: r.m,
            gap: r.eigenvalues.iter().copied().filter(|&l| l > 0.0).reduce(f64::min),
            neg_count: r.neg_count,
            eigenvalues: r.eigenvalues,
            error_estimates: r.error_estimates,
            checks: &gap.checks,
        })
        .collect();
    for s in &spectra {
        let low: Vec<String> = s.eigenvalues.iter().take(4).map(|l| format!("{l:.6}")).collect();
        println!("m = {}: {} negative, lowest [{}]", s.m, s.neg_count, low.join(", "));
    }
    println!("gap {:.6}, consistent {}", gap.gap_estimate, gap.consistent);
    write_json(
        out,
        &prov,
        SpectrumFile {
            profile_config_hash: &file.provenance.config_hash,
            index_n: sol.index_n,
            mu: sol.mu,
            gap: gap.gap_estimate,
            consistent: gap.consistent,
            spectra,
        },
    )
}

fn phase_check(cfg: &RunConfig, out: Option<&Path>) -> Result<(), CliError> {
    let prov = finalize(cfg)?;
    let p = cfg.model.p;
    let (omega, inv_pm1) = if p == f64::INFINITY {
        (omega_limit(), 0.0)
    } else if p >= 5.0 {
        (oscillation_frequency(p), 1.0 / (p - 1.0))
    } else {
        return Err(CliError::validation("specfun", "phase_scan", format!("p = {p}: the phase is defined for the p > 5 regime and its endpoint p = 5")));
    };
    let (lo, hi) = cfg.phase.lambda_range;
    let n = ((hi - lo) / cfg.phase.grid).round().max(1.0) as usize;
    let lams: Vec<f64> = (0..=n).map(|i| lo + (hi - lo) * i as f64 / n as f64).collect();
    let phase = phase_scan(omega, inv_pm1, &lams).map_err(lift("specfun", "phase_scan"))?;
    let mut csv = Csv::with_columns(&prov, &["lambda", "Phi", "Phi_minus_ref"]);
    let mut best = (f64::NEG_INFINITY, lo);
    for (&l, &ph) in lams.iter().zip(&phase) {
        let g = ph - phase[0] - std::f64::consts::PI;
        if g > best.0 {
            best = (g, l);
        }
        csv.row(&[l, ph, g]);
    }
    if let Some(path) = out {
        csv.write(path)?;
    }
    let label = if p.is_infinite() { "inf".to_string() } else { format!("{p}") };
    println!(
        "p = {label}: sup over lambda in [{lo}, {hi}] of Phi(lambda) - Phi({lo}) - pi = {:.4} at lambda = {:.4} (reference {PHASE_GAP_REFERENCE} +/- {PHASE_GAP_TOLERANCE} as p -> inf)",
        best.0, best.1
    );
    Ok(())
}

/// Reads ε from a profile-style CSV table or plain `r,eps` rows and
/// samples it at `nodes` (zero beyond the table).
fn read_eps(path: &Path, nodes: &[f64]) -> Result<Vec<f64>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::validation("dynamics", "eps-file", format!("{}: {e}", path.display())))?;
    let bad = |msg: String| CliError::validation("dynamics", "eps-file", format!("{}: {msg}", path.display()));
    if text.trim_start().starts_with('{') {
        let f = RadialFunction::from_csv(&text).map_err(|e| bad(e.to_string()))?;
        return Ok(nodes.iter().map(|&r| if r >= f.r_min() && r <= f.r_max() { f.value(r) } else { 0.0 }).collect());
    }
    let mut pts: Vec<(f64, f64)> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let parsed = (fields.len() >= 2).then(|| Some((fields[0].parse::<f64>().ok()?, fields[1].parse::<f64>().ok()?))).flatten();
        match parsed {
            Some(pt) => pts.push(pt),
            // a column header line
            None if pts.is_empty() => continue,
            None => return Err(bad(format!("line {} is not 'r,eps'", i + 1))),
        }
    }
    if pts.len() < 2 || pts.windows(2).any(|w| w[1].0 <= w[0].0) || pts.iter().any(|p| !(p.0.is_finite() && p.1.is_finite())) {
        return Err(bad("needs at least two finite rows with increasing r".into()));
    }
    Ok(nodes
        .iter()
        .map(|&r| {
            if r < pts[0].0 || r > pts[pts.len() - 1].0 {
                return 0.0;
            }
            let k = pts.partition_point(|p| p.0 <= r).clamp(1, pts.len() - 1);
            let ((r0, e0), (r1, e1)) = (pts[k - 1], pts[k]);
            e0 + (e1 - e0) * (r - r0) / (r1 - r0)
        })
        .collect())
}

fn evolve(mut cfg: RunConfig, args: EvolveArgs) -> Result<(), CliError> {
    let d = &mut cfg.dynamics;
    set(&mut d.seeds, args.seed);
    set(&mut d.s_max, args.s_max);
    set(&mut d.ds, args.ds);
    set(&mut d.lambda0, args.lambda0);
    set(&mut d.delta, args.delta);
    set(&mut d.cells, args.cells);
    set(&mut d.r_max, args.rmax);
    set(&mut d.record_every, args.record_every);
    let prov = finalize(&cfg)?;
    let d = &cfg.dynamics;
    let (_, sol) = load_profile(&args.profile)?;
    let flow = RenormalizedFlow::new(&sol, FlowConfig { cells: d.cells, r_max: d.r_max, delta: d.delta, mu: None }).map_err(lift("dynamics", "flow"))?;

    let modes = flow.modes.len();
    let mut a = vec![0.0; modes];
    for (j, amp) in parse_seeds(&d.seeds)? {
        if j - 2 >= modes {
            return Err(CliError::validation("dynamics", "seed", format!("j = {j}: the profile has unstable coordinates j = 2..={}", modes + 1)));
        }
        a[j - 2] = amp;
    }
    let eps = match args.eps_file.as_str() {
        "none" => None,
        path => Some(flow.orthogonalize(&read_eps(Path::new(path), &flow.nodes)?)),
    };
    let initial = flow.seeded(d.lambda0, &a, eps.as_deref()).map_err(lift("dynamics", "seed"))?;
    let ecfg = EvolveConfig { ds: d.ds, record_every: d.record_every, s0: 0.0, a_bound: d.a_bound, eps_bound: d.eps_bound.unwrap_or(f64::INFINITY) };
    let traj = flow.evolve(&initial, d.s_max, &ecfg).map_err(lift("dynamics", "evolve"))?;

    let mut cols: Vec<String> = ["s", "t", "lambda"].iter().map(|c| c.to_string()).collect();
    cols.extend((0..modes).map(|j| format!("a_{}", j + 2)));
    cols.extend(["eps_L2rho", "eps_H2rho", "deltav_L2", "v_Linf", "exit_flag"].iter().map(|c| c.to_string()));
    let mut csv = Csv::new(&prov, &cols);
    let flag = match traj.exit.map(|e| e.cause) {
        None => 0,
        Some(ExitCause::Tube { .. }) => 1,
        Some(ExitCause::Unstable { .. }) => 2,
        Some(ExitCause::Stable { .. }) => 3,
    };
    let last = traj.states.len() - 1;
    for (i, (st, t)) in traj.states.iter().zip(&traj.physical_time).enumerate() {
        let mut row = vec![st.s, *t, st.lambda];
        row.extend(&st.a);
        let g = &st.diagnostics;
        row.extend([g.l2_rho, g.h2_rho, g.delta_v_l2, g.linf_v]);
        csv.row_with_ints(&row, &[if i == last { flag } else { 0 }]);
    }
    csv.write(&args.out)?;
    let end = &traj.states[last];
    println!("{} steps, s = {:.6}, lambda = {:.6e}, t = {:.6e}", traj.steps, end.s, end.lambda, traj.physical_time[last]);
    if let Some(slope) = traj.blowup_slope() {
        println!("lambda^2 ~ {slope:.4} (T - t) over the last third");
    }
    match traj.exit {
        None => Ok(()),
        Some(e) => Err(CliError::new(Kind::Regime, "dynamics", "evolve", format!("regime exit at s = {:.6}: {:?}", e.s, e.cause))),
    }
}

fn verify(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let prov = finalize(cfg)?;
    if cfg.model.p != 7.0 {
        return Err(CliError::validation("verify", "verify-all", format!("p = {}: the acceptance suite runs at p = 7", cfg.model.p)));
    }
    let c = &cfg.construct;
    let lab =
        Lab::new(VerifySetup { r0: c.r0, r_max: c.r_max, lambda_min: c.lambda_min, log_step: c.log_step, seed: cfg.verify.seed, samples: cfg.verify.samples });
    let report = verify_all(&lab);
    for r in &report.criteria {
        println!("{}", r.line());
    }
    println!("{} passed, {} failed", report.passed, report.failed);
    write_json(out, &prov, &report)?;
    if report.failed > 0 {
        return Err(CliError::numerical("verify", "verify-all", format!("{} of {} criteria failed", report.failed, report.criteria.len())));
    }
    Ok(())
}
