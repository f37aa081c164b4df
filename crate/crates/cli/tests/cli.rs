use std::path::Path;
use std::process::{Command, Output};

fn selfsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_selfsim")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Reads a CSV written by the CLI: provenance hash, column names and rows.
fn read_csv(path: &Path) -> (String, Vec<String>, Vec<Vec<f64>>) {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let head = lines.next().unwrap();
    let hash = head.rsplit(' ').next().unwrap().to_string();
    assert!(head.starts_with("# selfsim "), "{head}");
    let cols = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines.map(|l| l.split(',').map(|x| x.parse().unwrap()).collect()).collect();
    (hash, cols, rows)
}

#[test]
fn params_at_seven() {
    let o = selfsim(&["params", "--p", "7"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!((v["omega"].as_f64().unwrap() - 1.14262).abs() < 1e-4);
    assert_eq!(v["p"], 7.0);
    assert_eq!(v["d"], 3);
    for key in ["two_over_pm1", "c_inf", "s_c", "gamma_re", "kappa"] {
        assert!(v[key].is_f64(), "{key}");
    }
    assert_eq!(v["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(v["config_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn exponent_below_regime_rejected() {
    let o = selfsim(&["params", "--p", "4"]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("p > 5"), "{err}");
    assert!(err.contains("[model derive_params]"), "{err}");
}

#[test]
fn phase_check_limit_matches_reference() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("phase.csv");
    let o = selfsim(&["phase-check", "--p", "inf", "--out", path_str(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let line = stdout(&o);
    let value: f64 = line.split("pi = ").nth(1).unwrap().split_whitespace().next().unwrap().parse().unwrap();
    assert!((value - -0.5945).abs() < 0.005, "{line}");
    assert!(line.contains("-0.5945"), "{line}");

    let (_, cols, rows) = read_csv(&out);
    assert_eq!(cols, ["lambda", "Phi", "Phi_minus_ref"]);
    assert_eq!(rows.len(), 501);
    assert_eq!(rows[0][0], -2.0);
    assert_eq!(rows[500][0], 0.5);
    let sup = rows.iter().map(|r| r[2]).fold(f64::NEG_INFINITY, f64::max);
    assert!((sup - value).abs() < 1e-4);
    assert!((rows[0][2] + std::f64::consts::PI).abs() < 1e-15);
}

#[test]
fn phase_check_accepts_endpoint_and_rejects_below() {
    assert!(selfsim(&["phase-check", "--p", "5"]).status.success());
    let o = selfsim(&["phase-check", "--p", "4.5"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("p > 5"));
    assert_eq!(selfsim(&["phase-check", "--p", "abc"]).status.code(), Some(2));
}

#[test]
fn unknown_config_key_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "[construct]\nr0 = 0.15\nradius = 3.0\n").unwrap();
    let o = selfsim(&["--config", path_str(&cfg), "params"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("radius"), "{}", stderr(&o));

    std::fs::write(&cfg, "[unknown]\nx = 1\n").unwrap();
    assert_eq!(selfsim(&["--config", path_str(&cfg), "params"]).status.code(), Some(2));
}

#[test]
fn out_of_range_knob_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "[dynamics]\nds = 1.0\n").unwrap();
    let o = selfsim(&["--config", path_str(&cfg), "params"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("[dynamics config] ds"), "{}", stderr(&o));
    let o = selfsim(&["construct", "scan", "--r0", "0.1", "--lambda-max", "0.2", "--out", "unused.csv"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!Path::new("unused.csv").exists());
}

#[test]
fn config_file_and_flags_merge_into_hash() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    let hash = |args: &[&str]| -> String {
        let o = selfsim(args);
        assert!(o.status.success(), "{}", stderr(&o));
        let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
        v["config_hash"].as_str().unwrap().to_string()
    };
    let base = hash(&["params"]);
    std::fs::write(&cfg, "[model]\np = 7.0\n").unwrap();
    assert_eq!(hash(&["--config", path_str(&cfg), "params"]), base);
    std::fs::write(&cfg, "[model]\np = 9.0\n").unwrap();
    let nine = hash(&["--config", path_str(&cfg), "params"]);
    assert_ne!(nine, base);
    assert_eq!(hash(&["params", "--p", "9"]), nine);
    // the flag wins over the file
    assert_eq!(hash(&["--config", path_str(&cfg), "params", "--p", "7"]), base);
    // thread count does not enter the hash
    assert_eq!(hash(&["--jobs", "2", "params"]), base);
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| -> (Vec<u8>, Vec<u8>, Vec<u8>) {
        let q = dir.path().join(format!("{name}.csv"));
        let ph = dir.path().join(format!("{name}_phase.csv"));
        assert!(selfsim(&["groundstate", "--p", "9", "--out", path_str(&q)]).status.success());
        assert!(selfsim(&["phase-check", "--p", "7", "--grid", "0.01", "--out", path_str(&ph)]).status.success());
        (std::fs::read(&q).unwrap(), std::fs::read(q.with_extension("json")).unwrap(), std::fs::read(&ph).unwrap())
    };
    let a = run("a");
    let b = run("b");
    assert!(a == b);
    assert!(String::from_utf8(a.1).unwrap().contains("\"config_hash\""));
}

#[test]
fn groundstate_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let q = dir.path().join("q.csv");
    let o = selfsim(&["groundstate", "--p", "7", "--rmax", "1e12", "--out", path_str(&q)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let (hash, cols, rows) = read_csv(&q);
    assert_eq!(cols, ["r", "Q", "dQ", "LambdaQ"]);
    assert_eq!(rows[0][1], 1.0);
    assert!(rows.windows(2).all(|w| w[1][0] > w[0][0] && w[1][1] < w[0][1]));
    let side: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(q.with_extension("json")).unwrap()).unwrap();
    assert_eq!(side["config_hash"], hash.as_str());
    assert!(side["zero_ladder"].as_array().unwrap().len() >= 4);
    let f = side["tail"]["frequency"].as_f64().unwrap();
    assert!((f / 1.1426091 - 1.0).abs() < 5e-3);
    assert!(side["predicted_phase_shift"].is_f64());
}

/// construct -> spectrum -> evolve on the largest-scale profile.
#[test]
fn pipeline_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let scan = dir.path().join("scan.csv");
    let o = selfsim(&["construct", "scan", "--p", "7", "--r0", "0.15", "--lambda-min", "1e-3", "--out", path_str(&scan)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let roots: Vec<f64> = stdout(&o).lines().map(|l| l.rsplit(' ').next().unwrap().parse().unwrap()).collect();
    assert_eq!(roots.len(), 2);
    assert!((roots[0] - 0.0579).abs() < 2e-4);
    let (_, cols, rows) = read_csv(&scan);
    assert_eq!(cols, ["lambda", "epsilon", "G"]);
    assert!(rows.len() > 50);

    let profile = dir.path().join("profile.json");
    let o = selfsim(&["construct", "build", "--k", "0", "--out", path_str(&profile)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let pf: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&profile).unwrap()).unwrap();
    assert_eq!(pf["index_n"], 1);
    assert!(pf["phi_csv"].as_str().unwrap().lines().count() > 100);
    assert!(pf["lambda_phi_csv"].is_string());
    assert_eq!(pf["version"], env!("CARGO_PKG_VERSION"));

    let spec = dir.path().join("spectrum.json");
    let o = selfsim(&["spectrum", "--profile", path_str(&profile), "--m", "0,1,2", "--num", "6", "--out", path_str(&spec)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let s: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&spec).unwrap()).unwrap();
    assert_eq!(s["profile_config_hash"], pf["config_hash"]);
    let entries = s["spectra"].as_array().unwrap();
    assert_eq!(entries.len(), 3);
    let negs: Vec<u64> = entries.iter().map(|e| e["neg_count"].as_u64().unwrap()).collect();
    assert_eq!(negs, [2, 1, 0]);
    for e in entries {
        assert_eq!(e["eigenvalues"].as_array().unwrap().len(), 6);
        assert!(e["checks"]["mode_minus2_residual"].as_f64().unwrap() < 1e-3);
        assert!(e["checks"]["mode_minus1_residual"].as_f64().unwrap() < 1e-3);
        assert_eq!(e["checks"]["oscillation_match"], true);
        assert!(e["gap"].as_f64().unwrap() > 0.0);
    }

    // seeded along the unstable mode the run leaves the tube
    let traj = dir.path().join("traj.csv");
    let o = selfsim(&["evolve", "--profile", path_str(&profile), "--seed", "j=2:1e-6", "--s-max", "0.05", "--out", path_str(&traj)]);
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
    assert!(stderr(&o).contains("[dynamics evolve] regime exit"));
    let (_, cols, rows) = read_csv(&traj);
    let want = ["s", "t", "lambda", "a_2", "eps_L2rho", "eps_H2rho", "deltav_L2", "v_Linf", "exit_flag"];
    assert_eq!(cols, want);
    let last = rows.last().unwrap();
    assert_eq!(last[8], 1.0);
    assert!(last[7] > 0.1);
    assert!(rows[..rows.len() - 1].iter().all(|r| r[8] == 0.0));
    assert!(last[3].abs() > 100.0 * rows[0][3].abs());

    // a short run with an ε file stays inside and exits cleanly
    let eps = dir.path().join("eps.csv");
    let body: String = (0..=200)
        .map(|i| {
            let r = i as f64 * 0.05;
            format!("{r},{}\n", 1e-4 * (-r * r).exp())
        })
        .collect();
    std::fs::write(&eps, format!("r,eps\n{body}")).unwrap();
    let o =
        selfsim(&["evolve", "--profile", path_str(&profile), "--seed", "j=2:1e-7", "--eps-file", path_str(&eps), "--s-max", "0.002", "--out", path_str(&traj)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let (_, _, rows) = read_csv(&traj);
    assert_eq!(rows.len(), 21);
    assert!(rows[0][4] > 0.0);
    assert!(rows.iter().all(|r| r[8] == 0.0));

    let o = selfsim(&["evolve", "--profile", path_str(&profile), "--seed", "j=3:1e-6", "--out", path_str(&traj)]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn verify_all_rejects_other_exponents() {
    // only the validation path is exercised here; the suite itself runs in the acceptance target
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "[model]\np = 9.0\n").unwrap();
    let o = selfsim(&["--config", path_str(&cfg), "verify-all", "--out", path_str(&dir.path().join("r.json"))]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn help_documents_flags() {
    let o = selfsim(&["evolve", "--help"]);
    let h = stdout(&o);
    for flag in ["--profile", "--seed", "--eps-file", "--s-max", "--ds", "--lambda0", "--out", "--config", "--jobs"] {
        assert!(h.contains(flag), "{flag}");
    }
}
