use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn azema(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_azema"));
    cmd.args(args).env_remove("AZEMA_THREADS");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn write_config(dir: &Path, body: &str) -> String {
    let p = dir.join("cfg.toml");
    fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

const SMALL: &str = "\
[scenario]
dt = 0.01
n_paths = 6

[filter]
n_particles = 200

[hitting]
density_ts = [0.25, 1.0]
density_xs = [0.5, 1.0]

[hitting.mc]
n_bridges = 1000
bridge_steps = 64
";

#[test]
fn nonpositive_dt_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[scenario]\ndt = -0.1\n");
    let out_dir = dir.path().join("out");
    let out = azema(&["verify", "--config", &cfg, "--out", out_dir.to_str().unwrap()], &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("scenario.dt"));
}

#[test]
fn unknown_key_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[scenario]\nstep = 0.1\n");
    let out = azema(
        &["simulate", "--config", &cfg, "--out", dir.path().to_str().unwrap()],
        &[],
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn verify_writes_reports_and_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out_dir = dir.path().join("out");
    let od = out_dir.to_str().unwrap();
    let out = azema(
        &[
            "verify", "--config", &cfg, "--out", od, "--suite", "bounds", "--suite", "coeffs",
        ],
        &[],
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    for f in ["report.json", "report.csv", "timings.csv"] {
        assert!(out_dir.join(f).exists(), "{f} missing");
    }
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["pass"], true);
    assert!(String::from_utf8_lossy(&out.stdout).contains("PASS bounds."));
}

#[test]
fn output_depends_only_on_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let run = |name: &str, seed: &str, threads: &str| {
        let od = dir.path().join(name);
        let args = [
            "verify",
            "--config",
            &cfg,
            "--out",
            od.to_str().unwrap(),
            "--seed",
            seed,
            "--suite",
            "hitting",
        ];
        let out = azema(&args, &[("AZEMA_THREADS", threads)]);
        assert_ne!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
        fs::read(od.join("report.json")).unwrap()
    };
    let a = run("a", "11", "1");
    assert_eq!(a, run("b", "11", "1"));
    assert_eq!(a, run("c", "11", "3"));
    assert_ne!(a, run("d", "12", "1"));
}

#[test]
fn simulate_filter_and_price_produce_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let od = dir.path().join("out");
    let o = od.to_str().unwrap();
    assert!(azema(&["simulate", "--config", &cfg, "--out", o], &[]).status.success());
    assert!(od.join("summary.json").exists());
    assert!(azema(&["filter", "--config", &cfg, "--out", o, "--path", "2"], &[])
        .status
        .success());
    let traj = fs::read_to_string(od.join("trajectory_00002.csv")).unwrap();
    assert_eq!(traj.lines().count(), 102);
    assert!(azema(&["price", "--config", &cfg, "--out", o], &[]).status.success());
    let p: serde_json::Value = serde_json::from_str(&fs::read_to_string(od.join("pricing.json")).unwrap()).unwrap();
    let total = p["total"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&total));
}

#[test]
fn study_rejects_a_single_level() {
    let dir = tempfile::tempdir().unwrap();
    let out = azema(
        &[
            "study",
            "--axis",
            "dt",
            "--levels",
            "0.01",
            "--out",
            dir.path().to_str().unwrap(),
        ],
        &[],
    );
    assert_eq!(out.status.code(), Some(2));
}
