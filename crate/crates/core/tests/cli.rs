//! The `cumgan` binary end to end: exit codes, output files, config
//! precedence and determinism.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn cumgan(args: &[&str]) -> Output {
    cumgan_env(args, None)
}

fn cumgan_env(args: &[&str], seed: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_cumgan"));
    cmd.args(args).env_remove("CUMGAN_SEED");
    if let Some(s) = seed {
        cmd.env("CUMGAN_SEED", s);
    }
    cmd.output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn path(dir: &Path, name: &str) -> String {
    dir.join(name).to_str().unwrap().to_owned()
}

#[test]
fn converge_passes_and_writes_the_trace() {
    let dir = TempDir::new().unwrap();
    let csv = path(dir.path(), "trace.csv");
    let o = cumgan(&[
        "converge", "--d", "1", "--lambda", "0.1", "--beta", "0.5", "--steps", "1000", "--out", &csv,
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).contains("PASS"));
    let text = fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,distance_sq,energy,bound"));
    assert_eq!(lines.count(), 1001);
}

#[test]
fn converge_without_cumulant_coefficient_reports_growth() {
    let o = cumgan(&["converge", "--beta", "0", "--steps", "50"]);
    assert_eq!(o.status.code(), Some(1));
    let s = stdout(&o);
    assert!(s.contains("growth factor 1 + lambda^2 = 1.010000000000"), "{s}");
    assert!(s.contains("no convergence"));
}

#[test]
fn usage_errors_exit_two() {
    for args in [
        &["converge", "--beta", "15", "--lambda", "0.1"][..],
        &["converge", "--steps", "many"],
        &["ring8", "--preset", "nonsense"],
        &["covariance", "--mode", "sideways"],
        &["divcheck", "--tol", "-1"],
        &["frobnicate"],
    ] {
        let o = cumgan(args);
        assert_eq!(o.status.code(), Some(2), "{args:?}");
    }
    assert_eq!(cumgan(&["--help"]).status.code(), Some(0));
}

#[test]
fn flags_override_config_which_overrides_defaults() {
    let dir = TempDir::new().unwrap();
    let cfg = path(dir.path(), "run.cfg");
    fs::write(&cfg, "# converge settings\nsteps = 5\nbeta = 0.9\n").unwrap();
    let rows = |extra: &[&str]| {
        let csv = path(dir.path(), "t.csv");
        let mut args = vec!["--config", &cfg, "converge", "--out", &csv];
        args.extend_from_slice(extra);
        let o = cumgan(&args);
        assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
        (fs::read_to_string(&csv).unwrap().lines().count() - 1, stdout(&o))
    };
    let (n, s) = rows(&[]);
    assert_eq!(n, 6);
    assert!(s.contains("coefficient b = 0.9"), "{s}");
    let (n, _) = rows(&["--steps", "12"]);
    assert_eq!(n, 13);

    fs::write(&cfg, "steps = 5\nsteps = 6\n").unwrap();
    assert_eq!(cumgan(&["--config", &cfg, "converge"]).status.code(), Some(2));
    fs::write(&cfg, "stepz 5\n").unwrap();
    assert_eq!(cumgan(&["--config", &cfg, "converge"]).status.code(), Some(2));
}

fn ring8_files(dir: &Path, seed_flag: Option<&str>, env: Option<&str>) -> Vec<(String, Vec<u8>)> {
    let out = dir.to_str().unwrap();
    let mut args = vec![
        "ring8", "--preset", "kld", "--iters", "20", "--snapshots", "0,10", "--batch", "64",
        "--snapshot-size", "200", "--out-dir", out,
    ];
    if let Some(s) = seed_flag {
        args.extend_from_slice(&["--seed", s]);
    }
    let o = cumgan_env(&args, env);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().into_string().unwrap(), fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

#[test]
fn ring8_outputs_are_byte_identical_for_a_seed() {
    let (a, b, c) = (TempDir::new().unwrap(), TempDir::new().unwrap(), TempDir::new().unwrap());
    let fa = ring8_files(a.path(), Some("7"), None);
    let names: Vec<_> = fa.iter().map(|(n, _)| n.as_str()).collect();
    assert_eq!(
        names,
        ["coverage.jsonl", "snapshot_000000.csv", "snapshot_000010.csv", "snapshot_000020.csv", "trace.jsonl"]
    );
    assert_eq!(fa, ring8_files(b.path(), Some("7"), None));
    assert_ne!(fa, ring8_files(c.path(), Some("8"), None));
}

#[test]
fn seed_falls_back_to_the_environment() {
    let (a, b, c) = (TempDir::new().unwrap(), TempDir::new().unwrap(), TempDir::new().unwrap());
    let from_env = ring8_files(a.path(), None, Some("7"));
    assert_eq!(from_env, ring8_files(b.path(), Some("7"), None));
    // The flag wins over the environment.
    assert_eq!(from_env, ring8_files(c.path(), Some("7"), Some("99")));
}

#[test]
fn divcheck_emits_one_record_per_alpha_and_pair() {
    let o = cumgan(&["divcheck"]);
    assert_eq!(o.status.code(), Some(0));
    let records: Vec<serde_json::Value> = stdout(&o)
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(records.len(), 9);
    for r in &records {
        for key in ["alpha", "pair", "lhs_variational", "rhs_quadrature", "abs_diff", "pass"] {
            assert!(r.get(key).is_some(), "missing {key} in {r}");
        }
        assert!(r["abs_diff"].as_f64().unwrap() <= 1e-6);
        if r["alpha"] == 2.0 {
            let chi2 = r["chi2_form"].as_f64().unwrap();
            assert!((chi2 - r["rhs_quadrature"].as_f64().unwrap()).abs() <= 1e-8);
        }
    }
    // R_2 of a wide generator against a narrow target is infinite.
    let divergent = cumgan(&["divcheck", "--alphas", "2", "--pairs", "0:1/0:3"]);
    assert_eq!(divergent.status.code(), Some(1));
}

#[test]
fn covariance_results_do_not_depend_on_the_pool_size() {
    let dir = TempDir::new().unwrap();
    let run = |workers: &str| {
        let csv = path(dir.path(), &format!("curve_{workers}.csv"));
        let o = cumgan(&[
            "covariance", "--betas", "-2,0", "--gammas", "0,1", "--reps", "3", "--iters", "200",
            "--d", "2", "--seed", "5", "--workers", workers, "--out", &csv,
        ]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        (stdout(&o), fs::read_to_string(&csv).unwrap())
    };
    let (s1, c1) = run("1");
    let (s2, c2) = run("2");
    assert_eq!((&s1, &c1), (&s2, &c2));
    assert!(s1.contains("beta,gamma,mean_error,mean_raw_error,diverged"));
    assert_eq!(c1.lines().next(), Some("beta,gamma,iteration,frobenius_error"));
    // β = γ = 0 has an identically zero loss: the curve is flat.
    let flat: Vec<f64> = c1
        .lines()
        .filter(|l| l.starts_with("0,0,"))
        .map(|l| l.rsplit(',').next().unwrap().parse().unwrap())
        .collect();
    assert!(flat.len() > 1 && flat.iter().all(|e| *e == flat[0]));
}
