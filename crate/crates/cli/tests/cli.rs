use std::collections::HashMap;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn mktfx(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mktfx"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn values(out: &Output) -> HashMap<String, String> {
    String::from_utf8_lossy(&out.stdout)
        .lines()
        .filter_map(|l| l.split_once('\t'))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}

fn number(out: &Output, key: &str) -> f64 {
    values(out)[key].parse().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

#[test]
fn mean_field_tech_closed_forms() {
    let out = mktfx(&["mean-field", "--scenario", "tech", "--pi", "0.5"]);
    assert_eq!(code(&out), 0);
    // p* = (12 + 5m)/(1 + m) with m = 1.1; tau_ADE = 0.2 (p* − 5)²/10
    let p = 17.5 / 2.1;
    assert!((number(&out, "p_star") - p).abs() < 1e-6);
    assert!((number(&out, "tau_ade") - 0.2 * (p - 5.0) * (p - 5.0) / 10.0).abs() < 1e-6);

    let out = mktfx(&["mean-field", "--scenario", "tech", "--pi", "0"]);
    assert!((number(&out, "p_star") - 8.5).abs() < 1e-8);
}

#[test]
fn invalid_probability_is_a_usage_error() {
    let out = mktfx(&["mean-field", "--scenario", "tech", "--pi", "1.2"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("pi must lie in [0, 1]"));
    assert_eq!(code(&mktfx(&["mean-field", "--scenario", "nowhere"])), 2);
}

#[test]
fn tuition_example() {
    let out = mktfx(&["tuition-example", "--kappa-s", "1.8", "--kappa-d", "-1.5", "--tau-ade", "4"]);
    assert_eq!(code(&out), 0);
    let aie = 1.8 * 4.0 / (-1.5 - 1.8);
    assert!((number(&out, "tau_aie") - aie).abs() < 1e-4);
    assert!((number(&out, "tau_total") - (4.0 + aie)).abs() < 1e-4);

    let out = mktfx(&["tuition-example", "--kappa-s", "0", "--kappa-d", "-1.5", "--tau-ade", "4"]);
    assert_eq!(number(&out, "tau_aie"), 0.0);

    let out = mktfx(&["tuition-example", "--kappa-s", "1.5", "--kappa-d", "1.5", "--tau-ade", "4"]);
    assert_eq!(code(&out), 2);
}

fn simulate_into(dir: &Path, seed: &str) -> Output {
    mktfx(&[
        "simulate",
        "--scenario",
        "tech",
        "--n",
        "2500",
        "--seed",
        seed,
        "--out",
        dir.to_str().unwrap(),
    ])
}

#[test]
fn simulate_writes_reproducible_outputs() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert_eq!(code(&simulate_into(a.path(), "3")), 0);
    assert_eq!(code(&simulate_into(b.path(), "3")), 0);
    for file in ["dataset.csv", "dataset.meta.json", "report.json"] {
        let x = fs::read(a.path().join(file)).unwrap();
        assert!(!x.is_empty(), "{file}");
        assert_eq!(x, fs::read(b.path().join(file)).unwrap(), "{file}");
    }
    let report: serde_json::Value =
        serde_json::from_slice(&fs::read(a.path().join("report.json")).unwrap()).unwrap();
    for key in [
        "tau_ade_hat",
        "tau_aie_hat",
        "tau_z_ht",
        "delta_y_hat",
        "delta_z_hat",
        "gamma_hat",
        "sigma2_d_hat",
        "sigma2_i_hat",
        "ci_ade",
        "ci_aie",
    ] {
        assert!(report.get(key).is_some(), "{key}");
    }
    assert!(a.path().join("config.json").exists());
}

#[test]
fn simulate_rejects_tiny_samples() {
    let d = tempfile::tempdir().unwrap();
    let out = mktfx(&["simulate", "--n", "1", "--out", d.path().to_str().unwrap()]);
    assert_eq!(code(&out), 2);
}

#[test]
fn replicate_is_independent_of_thread_count() {
    let run = |threads: &str| {
        let d = tempfile::tempdir().unwrap();
        let out = mktfx(&[
            "replicate",
            "--scenario",
            "tech",
            "--n",
            "300",
            "--reps",
            "40",
            "--seed",
            "8",
            "--threads",
            threads,
            "--density",
            "--per-rep",
            "--out",
            d.path().to_str().unwrap(),
        ]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        for f in ["replications.csv", "density_ade.csv", "density_aie.csv"] {
            assert!(d.path().join(f).exists(), "{f}");
        }
        (
            fs::read(d.path().join("summary.csv")).unwrap(),
            fs::read(d.path().join("summary.json")).unwrap(),
        )
    };
    assert_eq!(run("1"), run("3"));
}

#[test]
fn replicate_rejects_zero_reps() {
    let d = tempfile::tempdir().unwrap();
    let out = mktfx(&["replicate", "--reps", "0", "--out", d.path().to_str().unwrap()]);
    assert_eq!(code(&out), 2);
}

#[test]
fn flags_override_config_file() {
    let d = tempfile::tempdir().unwrap();
    let cfg = d.path().join("run.json");
    fs::write(
        &cfg,
        r#"{"scenario": "tech", "n": 300, "seed": 5, "pi": 0.4, "params": {"boost": 0.3}}"#,
    )
    .unwrap();
    let out_dir = d.path().join("out");
    let out = mktfx(&[
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--seed",
        "9",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let echoed: serde_json::Value =
        serde_json::from_slice(&fs::read(out_dir.join("config.json")).unwrap()).unwrap();
    assert_eq!(echoed["n"], 300);
    assert_eq!(echoed["seed"], 9);
    assert_eq!(echoed["pi"], 0.4);
    assert_eq!(echoed["scenario"]["params"]["boost"], 0.3);

    fs::write(&cfg, r#"{"sample_size": 300}"#).unwrap();
    let out = mktfx(&["simulate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
}
