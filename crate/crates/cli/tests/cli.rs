use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn powersum(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_powersum"))
        .args(args)
        .current_dir(dir)
        .env_remove("POWERSUM_THREADS")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

const ESTIMATE: [&str; 15] = [
    "estimate", "--dist", "uniform", "--k", "4", "--gamma", "2", "--alpha", "0.5", "--n", "4096", "--estimator",
    "interactive", "--seed", "7",
];

#[test]
fn estimate_json_shape_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let a = powersum(&ESTIMATE, dir.path());
    let b = powersum(&ESTIMATE, dir.path());
    assert_eq!(a.status.code(), Some(0), "{}", stderr(&a));
    assert_eq!(a.stdout, b.stdout);
    let v: serde_json::Value = serde_json::from_slice(&a.stdout).unwrap();
    assert!(v["value"].is_f64());
    assert_eq!(v["diagnostics"]["branch"], "interactive");
    assert!(v["diagnostics"]["z_alpha"].as_f64().unwrap() > 0.0);
}

#[test]
fn gamma_zero_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = ESTIMATE.to_vec();
    args[6] = "0";
    let o = powersum(&args, dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("gamma must be > 0"));
}

#[test]
fn missing_seed_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = powersum(
        &["risk", "--gamma", "2", "--k", "4", "--n", "100", "--alpha", "1", "--estimator", "plug-in", "--trials", "10"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("seed"));
}

#[test]
fn risk_csv_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let o = powersum(
        &[
            "risk", "--gamma", "2", "--k", "4", "--n", "256", "--alpha", "1", "--estimator", "plug-in", "--trials", "50",
            "--seed", "3", "--output", "r.csv",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = fs::read_to_string(dir.path().join("r.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "gamma,K,n,alpha,estimator,trials,seed,true_value,bias,variance,mse,mse_stderr");
    assert_eq!(lines.len(), 2);
    assert!(lines[1].starts_with("2,4,256,1,plug-in,50,3,2.5000000000000000e-1,"));
    let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("r.csv.manifest.json")).unwrap()).unwrap();
    assert_eq!(m["schema_version"], 1);
    assert_eq!(m["subcommand"], "risk");
    assert_eq!(m["seed"], 3);
}

#[test]
fn rate_scan_rows_and_rerun() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "rate-scan", "--gamma", "2", "--k", "16", "--alpha", "0.5", "--estimator", "interactive", "--trials", "40",
        "--seed", "5", "--axis", "n", "--values", "128,256,512,1024,2048,4096", "--output", "a.csv",
    ];
    let o = powersum(&args, dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let a = fs::read_to_string(dir.path().join("a.csv")).unwrap();
    let lines: Vec<&str> = a.lines().collect();
    assert_eq!(lines.len(), 1 + 6 + 1);
    assert!(lines[0].ends_with(",fitted_slope,predicted_slope,r_squared"));
    assert!(lines[7].contains(",*,"));

    let o = powersum(&["rate-scan", "--config", "a.csv.manifest.json", "--output", "b.csv"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(fs::read(dir.path().join("a.csv")).unwrap(), fs::read(dir.path().join("b.csv")).unwrap());
}

#[test]
fn empty_axis_is_rejected_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let o = powersum(
        &[
            "rate-scan", "--gamma", "2", "--k", "4", "--alpha", "1", "--estimator", "plug-in", "--trials", "10", "--seed",
            "1", "--axis", "n", "--values", "", "--output", "x.csv",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 0);
}

#[test]
fn verify_suites() {
    let dir = tempfile::tempdir().unwrap();
    let o = powersum(&["verify", "--suite", "ldp", "--alpha", "0.5", "--gamma", "2"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).lines().filter(|l| l.starts_with("PASS")).count(), 2);

    let o = powersum(&["verify", "--suite", "ldp", "--sigma", "1", "--alpha", "0.5"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).lines().any(|l| l.starts_with("FAIL laplace")));

    let o = powersum(&["verify", "--suite", "separation", "--gamma", "1.5", "--k", "8"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).contains("sign_violations=0"));

    let o = powersum(&["verify", "--suite", "bogus"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("run.conf"),
        "gamma = 2\nK = 4\nn = 200\nalpha = 1\nestimator = plug-in\ntrials = 10\nseed = 9\n",
    )
    .unwrap();
    let a = powersum(&["risk", "--config", "run.conf"], dir.path());
    let b = powersum(&["risk", "--config", "run.conf", "--n", "400"], dir.path());
    assert_eq!(a.status.code(), Some(0), "{}", stderr(&a));
    assert!(stdout(&a).lines().nth(1).unwrap().starts_with("2,4,200,"));
    assert!(stdout(&b).lines().nth(1).unwrap().starts_with("2,4,400,"));

    fs::write(dir.path().join("bad.conf"), "gamma = 2\nunknown_key = 3\n").unwrap();
    let o = powersum(&["risk", "--config", "bad.conf"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn data_file_categories_are_one_based() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("x.txt"), "1 1 2\n3,3,3\n").unwrap();
    let o = powersum(
        &["estimate", "--data", "x.txt", "--gamma", "2", "--alpha", "inf", "--estimator", "plug-in", "--seed", "1"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let expected = (4.0 + 1.0 + 9.0) / 36.0;
    assert!((v["value"].as_f64().unwrap() - expected).abs() < 1e-12);

    fs::write(dir.path().join("zero.txt"), "0 1 2\n").unwrap();
    let o = powersum(
        &["estimate", "--data", "zero.txt", "--gamma", "2", "--alpha", "1", "--estimator", "plug-in", "--seed", "1"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn thread_count_env_does_not_change_output() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "risk", "--gamma", "1.5", "--k", "8", "--n", "300", "--alpha", "1", "--estimator", "thresholded", "--trials",
        "60", "--seed", "2",
    ];
    let one = Command::new(env!("CARGO_BIN_EXE_powersum"))
        .args(args)
        .env("POWERSUM_THREADS", "1")
        .output()
        .unwrap();
    let four = Command::new(env!("CARGO_BIN_EXE_powersum"))
        .args(args)
        .env("POWERSUM_THREADS", "4")
        .output()
        .unwrap();
    assert_eq!(one.status.code(), Some(0));
    assert_eq!(one.stdout, four.stdout);
    let _ = dir;
}

#[test]
fn hard_instance_json() {
    let dir = tempfile::tempdir().unwrap();
    let o = powersum(
        &["hard-instance", "--kind", "two-point", "--k", "4", "--n", "1000", "--alpha", "0.5", "--gamma", "2"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(v["kl_budget"].as_f64().unwrap() <= 0.5);
    assert_eq!(v["kl_condition_met"], true);

    let o = powersum(
        &["hard-instance", "--kind", "perturbation-family", "--k", "5", "--n", "100", "--alpha", "0.5", "--gamma", "1.5"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("odd"));
}
