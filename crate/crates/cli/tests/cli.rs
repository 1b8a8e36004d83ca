use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn lobsim(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lobsim"))
        .arg("--out")
        .arg(dir.join("out"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("spawn lobsim")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn summary(dir: &Path, command: &str) -> serde_json::Value {
    let text = fs::read_to_string(dir.join("out").join(format!("{command}_summary.json"))).unwrap();
    serde_json::from_str(&text).unwrap()
}

#[test]
fn simulate_writes_tagged_files_reproducibly() {
    let d = tempfile::tempdir().unwrap();
    let o = lobsim(d.path(), &["simulate", "--n", "20000", "--seeds", "2"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let s = summary(d.path(), "simulate");
    let hash = s["config_hash"].as_str().unwrap().to_string();
    assert_eq!(hash.len(), 64);
    for seed in [1, 2] {
        for kind in ["checkpoints", "occupation", "joint", "top_shape"] {
            let text = fs::read_to_string(d.path().join(format!("out/simulate_s{seed}_{kind}.csv"))).unwrap();
            let first = text.lines().next().unwrap();
            assert_eq!(first, format!("# seed={seed} config={hash}"), "{kind}");
        }
    }
    let before = fs::read(d.path().join("out/simulate_s1_checkpoints.csv")).unwrap();
    assert_eq!(code(&lobsim(d.path(), &["simulate", "--n", "20000", "--seeds", "2"])), 0);
    assert_eq!(fs::read(d.path().join("out/simulate_s1_checkpoints.csv")).unwrap(), before);
}

#[test]
fn empty_run_succeeds() {
    let d = tempfile::tempdir().unwrap();
    let o = lobsim(d.path(), &["simulate", "--n", "0"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(summary(d.path(), "simulate")["results"]["seeds"][0]["estimate"].is_null());
}

#[test]
fn usage_errors_exit_two() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(code(&lobsim(d.path(), &[])), 2);
    assert_eq!(code(&lobsim(d.path(), &["check"])), 2);
    assert_eq!(code(&lobsim(d.path(), &["simulate", "--seed", "1", "--seeds", "3"])), 2);
    assert_eq!(code(&lobsim(d.path(), &["simulate", "--burn-in", "1.5"])), 2);
    assert_eq!(code(&lobsim(d.path(), &["--help"])), 0);
}

#[test]
fn unknown_config_key_is_rejected() {
    let d = tempfile::tempdir().unwrap();
    let cfg = d.path().join("run.toml");
    fs::write(&cfg, "binz = 4\n").unwrap();
    let o = lobsim(d.path(), &["--config", cfg.to_str().unwrap(), "bound3"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("binz"));
}

#[test]
fn flags_override_the_file() {
    let d = tempfile::tempdir().unwrap();
    let cfg = d.path().join("run.toml");
    fs::write(&cfg, "n_events = 5000\nbins = 7\nseeds = [4]\n").unwrap();
    let o = lobsim(d.path(), &["--config", cfg.to_str().unwrap(), "--bins", "9", "simulate"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let s = summary(d.path(), "simulate");
    assert_eq!(s["config"]["bins"], 9);
    assert_eq!(s["config"]["n_events"], 5000);
    assert_eq!(s["config"]["seeds"][0], 4);
    assert!(d.path().join("out/simulate_s4_checkpoints.csv").exists());
}

#[test]
fn json_config_and_arrival_file() {
    let d = tempfile::tempdir().unwrap();
    let cfg = d.path().join("run.json");
    fs::write(&cfg, r#"{"n_events": 3000, "seeds": [2]}"#).unwrap();
    let law = d.path().join("law.toml");
    fs::write(&law, "p_bid = 0.5\n[bid]\nkind = \"piecewise_linear\"\nx = [0.0, 1.0]\ndensity = [1.4, 0.6]\n").unwrap();
    let o = lobsim(d.path(), &["--config", cfg.to_str().unwrap(), "--dist", law.to_str().unwrap(), "simulate"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(summary(d.path(), "simulate")["config"]["n_events"], 3000);
    // exact mode is only defined for uniform arrivals
    assert_eq!(code(&lobsim(d.path(), &["--dist", law.to_str().unwrap(), "kappa", "--mode", "exact"])), 2);
}

#[test]
fn kappa_modes() {
    let d = tempfile::tempdir().unwrap();
    let o = lobsim(d.path(), &["kappa"]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("kappa_b = 0.2178117057"), "{}", stdout(&o));
    let o = lobsim(d.path(), &["kappa", "--mode", "ode"]);
    assert_eq!(code(&o), 0);
    let kb = summary(d.path(), "kappa")["results"]["ode"]["kappa_b"].as_f64().unwrap();
    assert!((kb - 0.2178117057198006).abs() <= 1e-6, "{kb}");
    let o = lobsim(d.path(), &["kappa", "--compare", "--n", "300000", "--seeds", "3"]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    assert_eq!(stdout(&o).matches("PASS").count(), 3);
    let o = lobsim(d.path(), &["kappa", "--compare", "--n", "20000", "--tolerance", "0"]);
    assert_eq!(code(&o), 4);
    assert_eq!(code(&lobsim(d.path(), &["kappa", "--mode", "mc", "--n", "5"])), 3);
}

#[test]
fn check_suites() {
    let d = tempfile::tempdir().unwrap();
    let o = lobsim(d.path(), &["check", "--suite", "coupling", "--n", "20000", "--bins", "20", "--seeds", "2"]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    let text = fs::read_to_string(d.path().join("out/check_coupling.csv")).unwrap();
    assert!(text.starts_with("# seed="));
    assert_eq!(code(&lobsim(d.path(), &["check", "--suite", "lyapunov", "--eps", "0.01"])), 0);
    let o = lobsim(d.path(), &["check", "--suite", "lyapunov", "--eps", "0.04"]);
    assert_eq!(code(&o), 4);
    assert!(stdout(&o).contains("FAIL lyapunov/certificate"));
    assert_eq!(code(&lobsim(d.path(), &["check", "--suite", "bounds", "--n", "20000"])), 0);
}

#[test]
fn remaining_subcommands_run() {
    let d = tempfile::tempdir().unwrap();
    for args in [
        &["ode", "--grid-n", "200"][..],
        &["pi", "--n", "20000", "--bins", "20"],
        &["lyapunov", "--n", "20000"],
        &["bound3"],
        &["couple", "--n", "20000"],
        &["couple", "--experiment", "sandwich", "--n", "20000", "--bins", "10"],
        &["runmax", "--n", "20000"],
    ] {
        let o = lobsim(d.path(), args);
        assert_eq!(code(&o), 0, "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
    for f in ["ode_varpi.csv", "pi.csv", "lyapunov_drifts.csv", "lyapunov_regions.csv", "couple_perturbation.csv", "couple_sandwich.csv", "runmax_series.csv"] {
        let text = fs::read_to_string(d.path().join("out").join(f)).unwrap();
        assert!(text.starts_with("# seed="), "{f}");
    }
    let s = summary(d.path(), "bound3");
    assert_eq!(s["results"]["bound"].as_f64().unwrap(), 0.1);
}
