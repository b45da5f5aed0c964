use std::path::Path;
use std::process::{Command, Output};

use rand_distr::{Distribution, StandardNormal};
use serde_json::Value;
use spectral_mi::models::{bandpass_taps, oracle_mi_gaussian};
use spectral_mi::seed::rng_for;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spectral-mi"))
        .env_remove("SPECTRAL_MI_SEED")
        .args(args)
        .output()
        .unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn path(dir: &Path, name: &str) -> String {
    dir.join(name).to_string_lossy().into_owned()
}

fn read_json(p: impl AsRef<Path>) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

fn write_noise_csv(p: &Path, n: usize, seed: u64) {
    let mut rng = rng_for(seed, &[0xAB]);
    let mut text = String::from("x,y\n");
    for _ in 0..n {
        let a: f64 = StandardNormal.sample(&mut rng);
        let b: f64 = StandardNormal.sample(&mut rng);
        text.push_str(&format!("{a:?},{b:?}\n"));
    }
    std::fs::write(p, text).unwrap();
}

#[test]
fn help_and_usage_errors() {
    assert_eq!(code(&run(&["--help"])), 0);
    assert_eq!(code(&run(&["estimate", "--help"])), 0);
    assert_eq!(code(&run(&["frobnicate"])), 4);
    assert_eq!(code(&run(&["estimate", "in.csv", "--grid", "diagonal"])), 4);
    assert_eq!(code(&run(&["estimate"])), 4);
    assert_eq!(code(&run(&["estimate", "in.csv", "--n-s", "zero"])), 4);
}

#[test]
fn simulate_requires_beta_for_lowpass() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["simulate", "lowpass", "--n", "100", "--out", &path(dir.path(), "a.csv")]);
    assert_eq!(code(&out), 4);
    assert!(String::from_utf8_lossy(&out.stderr).contains("--beta"));
}

#[test]
fn simulate_writes_csv_and_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let a = path(dir.path(), "a.csv");
    let out = run(&["simulate", "lowpass", "--beta", "0.5", "--n", "1000", "--seed", "7", "--out", &a]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&a).unwrap();
    assert_eq!(text.lines().next(), Some("x,y"));
    assert_eq!(text.lines().count(), 1001);
    let sidecar = read_json(dir.path().join("a.json"));
    assert_eq!(sidecar["seed"], 7);
    assert_eq!(sidecar["beta"], 0.5);
    assert_eq!(sidecar["model"], "lowpass");

    // the environment variable is the seed fallback
    let b = path(dir.path(), "b.csv");
    let out = Command::new(env!("CARGO_BIN_EXE_spectral-mi"))
        .env("SPECTRAL_MI_SEED", "7")
        .args(["simulate", "lowpass", "--beta", "0.5", "--n", "1000", "--out", &b])
        .output()
        .unwrap();
    assert_eq!(code(&out), 0);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn oracle_values() {
    let out = run(&["oracle", "lowpass", "--beta", "1"]);
    assert_eq!(code(&out), 0);
    let v: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert!((v["mi_nats"].as_f64().unwrap() - 0.5 * 2f64.ln()).abs() < 1e-8);

    let out = run(&["oracle", "bandpass", "--sigma-w", "2"]);
    let v: Value = serde_json::from_str(&stdout(&out)).unwrap();
    let expected = oracle_mi_gaussian(&bandpass_taps(), 1.0, 2.0).unwrap();
    assert_eq!(v["mi_nats"].as_f64().unwrap(), expected);

    let out = run(&["oracle", "cosine2"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("unsupported"));
}

#[test]
fn estimate_error_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let missing = path(dir.path(), "missing.csv");
    assert_eq!(code(&run(&["estimate", &missing, "--out-dir", &path(dir.path(), "o")])), 3);

    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "x,y\n1,2\n3,abc\n").unwrap();
    assert_eq!(code(&run(&["estimate", bad.to_str().unwrap()])), 3);

    let short = dir.path().join("short.csv");
    std::fs::write(&short, "1,2\n3,4\n5,6\n").unwrap();
    let out = run(&["estimate", short.to_str().unwrap(), "--n-f", "64"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("insufficient"));

    let cfg = dir.path().join("cfg.json");
    std::fs::write(
        &cfg,
        r#"{"input":"a.csv","n_f":8,"n_s":"auto","gap":0,"k":3,"n_p":9,"seed":1,"grid":"half","method":"auto","colour":"red"}"#,
    )
    .unwrap();
    assert_eq!(code(&run(&["estimate", "--config", cfg.to_str().unwrap()])), 4);
}

#[test]
fn estimate_on_independent_noise() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("noise.csv");
    write_noise_csv(&input, 8 * 1000, 3);
    let out_dir = path(dir.path(), "out");
    let out = run(&["estimate", input.to_str().unwrap(), "--n-f", "8", "--n-p", "99", "--seed", "4", "--out-dir", &out_dir]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let line = stdout(&out);
    assert!(line.starts_with("MI = ") && line.contains(" nats (") && line.contains(" bits) via "), "{line}");

    let report = read_json(dir.path().join("out/report.json"));
    let mi = report["report"]["mi_nats"].as_f64().unwrap();
    // a stray false positive can leave a small positive estimate
    assert!(mi >= 0.0 && mi < 0.05, "{mi}");
    if report["significant_pairs"].as_array().unwrap().is_empty() {
        assert_eq!(report["report"]["method"], "zero_no_coupling");
        assert_eq!(mi, 0.0);
    }
    assert_eq!(report["config"]["n_f"], 8);
    assert_eq!(report["config"]["seed"], 4);
    assert_eq!(report["windows"]["n_s"], 1000);

    let mif = std::fs::read_to_string(dir.path().join("out/mif.csv")).unwrap();
    assert_eq!(mif.lines().next(), Some("i\\j,0,1,2,3,4"));
    assert_eq!(mif.lines().count(), 6);
    let mask = std::fs::read_to_string(dir.path().join("out/mask.csv")).unwrap();
    assert_eq!(mask.lines().count(), 6);
    let doc = read_json(dir.path().join("out/mif.json"));
    assert_eq!(doc["mif"]["n_p"], 99);
    assert_eq!(doc["config"], report["config"]);
}

#[test]
fn estimate_method_follows_the_mask() {
    let dir = tempfile::tempdir().unwrap();
    let a = path(dir.path(), "a.csv");
    assert_eq!(code(&run(&["simulate", "lowpass", "--beta", "1", "--n", "16000", "--seed", "2", "--out", &a])), 0);
    let out_dir = path(dir.path(), "out");
    let out = run(&["estimate", &a, "--n-f", "16", "--n-p", "19", "--seed", "2", "--out-dir", &out_dir]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report = read_json(dir.path().join("out/report.json"));
    let pairs = report["significant_pairs"].as_array().unwrap();
    let diagonal_only = pairs.iter().all(|p| p[0] == p[1]);
    let expected = match (pairs.is_empty(), diagonal_only) {
        (true, _) => "zero_no_coupling",
        (false, true) => "linear_shortcut",
        (false, false) => "joint",
    };
    assert_eq!(report["report"]["method"], expected);

    // the shortcut itself recovers the closed form for the identity filter
    let out = run(&["estimate", &a, "--n-f", "16", "--n-p", "19", "--method", "linear", "--out-dir", &out_dir]);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).contains("via linear_shortcut"));
    let report = read_json(dir.path().join("out/report.json"));
    let mi = report["report"]["mi_nats"].as_f64().unwrap();
    assert!((mi - 0.5 * 2f64.ln()).abs() < 0.05, "{mi}");
}

#[test]
fn mif_command_writes_matrix_only() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("noise.csv");
    write_noise_csv(&input, 4 * 300, 5);
    let out_dir = path(dir.path(), "m");
    let out = run(&["mif", input.to_str().unwrap(), "--n-f", "4", "--n-p", "9", "--grid", "full", "--out-dir", &out_dir]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).contains("frequency pairs significant"));
    assert!(!dir.path().join("m/report.json").exists());
    let mif = std::fs::read_to_string(dir.path().join("m/mif.csv")).unwrap();
    assert_eq!(mif.lines().next(), Some("i\\j,0,1,2,3"));
}

#[test]
fn sweep_writes_runs_and_mean_curve() {
    let dir = tempfile::tempdir().unwrap();
    let out = path(dir.path(), "curve.csv");
    let res = run(&[
        "sweep", "lowpass", "--param", "beta", "--values", "0,0.5,1", "--seeds", "2", "--n-f", "8", "--n-s", "400",
        "--method", "linear", "--out", &out, "--jobs", "2",
    ]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    let runs = std::fs::read_to_string(&out).unwrap();
    assert_eq!(runs.lines().next(), Some("param,value,seed,mi_nats,method"));
    assert_eq!(runs.lines().count(), 1 + 3 * 2);
    let curve = std::fs::read_to_string(dir.path().join("curve_mean.csv")).unwrap();
    let rows: Vec<&str> = curve.lines().collect();
    assert_eq!(rows[0], "value,mean_mi_nats,std_mi_nats,n_seeds,oracle_mi_nats");
    assert_eq!(rows.len(), 4);
    let oracle_at_one: f64 = rows[3].split(',').nth(4).unwrap().parse().unwrap();
    assert!((oracle_at_one - 0.5 * 2f64.ln()).abs() < 1e-8);
    let cfg = read_json(dir.path().join("curve.json"));
    assert_eq!(cfg["seeds"], serde_json::json!([0, 1]));

    let res = run(&["sweep", "bandpass", "--param", "beta", "--values", "0.5", "--out", &out]);
    assert_eq!(code(&res), 4);
}
