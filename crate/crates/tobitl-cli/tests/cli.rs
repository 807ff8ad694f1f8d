//! CLI integration tests: exit codes, artifact layout, reproducibility.

use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_tobitl"))
}

/// An uncensored dataset with an exact augmented-model representation
/// y = 3 + 0.5 x + 2 w + 0.8 e.
fn write_fixture(dir: &Path) -> (PathBuf, PathBuf) {
    let n = 90;
    let z1: Vec<f64> = (0..n).map(|i| (i as f64 * 0.61803) % 1.0).collect();
    let x: Vec<f64> = (0..n).map(|i| ((i * 17) % 29) as f64 / 29.0 - 0.5).collect();
    let w: Vec<f64> = (0..n)
        .map(|i| 0.9 * z1[i] + 0.7 * (((i * 23) % 31) as f64 / 31.0 - 0.5))
        .collect();

    // first-stage residuals of w on [z | 1 | x]
    use nalgebra::{DMatrix, DVector};
    let mut zm = DMatrix::zeros(n, 3);
    for i in 0..n {
        zm[(i, 0)] = z1[i];
        zm[(i, 1)] = 1.0;
        zm[(i, 2)] = x[i];
    }
    let wv = DVector::from_column_slice(&w);
    let delta = zm.clone().svd(true, true).solve(&wv, 1e-12).unwrap();
    let resid = &wv - &zm * &delta;

    let mut text = String::from("y,x1,w,z\n");
    for i in 0..n {
        let y = 3.0 + 0.5 * x[i] + 2.0 * w[i] + 0.8 * resid[i];
        assert!(y > 0.0);
        text.push_str(&format!("{y},{},{},{}\n", x[i], w[i], z1[i]));
    }
    let data = dir.join("fixture.csv");
    std::fs::write(&data, text).unwrap();
    let schema = dir.join("schema.json");
    std::fs::write(
        &schema,
        r#"{"response":"y","exogenous":["x1"],"endogenous":"w","instrument":"z"}"#,
    )
    .unwrap();
    (data, schema)
}

#[test]
fn fit_recovers_exact_coefficients() {
    let dir = tempfile::tempdir().unwrap();
    let (data, schema) = write_fixture(dir.path());
    let out = dir.path().join("out");
    let status = bin()
        .args(["fit", "--data"])
        .arg(&data)
        .arg("--schema")
        .arg(&schema)
        .args(["--weight", "trimmed:0.15", "--grid", "0.1,9", "--seed", "1", "--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    for f in ["report.json", "process.csv", "estimates.csv", "run_config.json"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    let est = report["weights"][0]["estimate"].as_array().unwrap();
    let expect = [3.0, 0.5, 2.0, 0.8];
    for (got, want) in est.iter().zip(expect.iter()) {
        assert!(
            (got.as_f64().unwrap() - want).abs() < 1e-6,
            "estimate {got} vs {want}"
        );
    }
    // config echo carries the seed and materialized defaults
    let echo: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("run_config.json")).unwrap())
            .unwrap();
    assert_eq!(echo["seed"], 1);
    assert!(echo["bandwidth"].as_f64().unwrap() > 0.0);
    assert!(echo["lag_trunc"].as_u64().unwrap() >= 1);
    assert_eq!(echo["versions"]["tobitl"], env!("CARGO_PKG_VERSION"));
}

#[test]
fn bootstrap_identity_hook_writes_zero_brmse() {
    let dir = tempfile::tempdir().unwrap();
    let (data, schema) = write_fixture(dir.path());
    let out = dir.path().join("out");
    let status = bin()
        .args(["bootstrap", "--data"])
        .arg(&data)
        .arg("--schema")
        .arg(&schema)
        .args([
            "--weight",
            "trimmed:0.15",
            "--grid",
            "0.1,9",
            "--b",
            "1",
            "--scheme",
            "identity",
            "--seed",
            "42",
            "--out",
        ])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let body: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("brmse.json")).unwrap()).unwrap();
    for v in body["brmse"].as_array().unwrap() {
        assert_eq!(v.as_f64().unwrap(), 0.0);
    }
    assert!(out.join("replicates.csv").exists());
}

#[test]
fn simulate_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let run = |out: &Path| {
        let status = bin()
            .args([
                "simulate",
                "--n-list",
                "50,100",
                "--r",
                "10",
                "--grid",
                "0.1,15",
                "--weight",
                "trimmed:0.15",
                "--seed",
                "7",
                "--threads",
                "2",
                "--out",
            ])
            .arg(out)
            .status()
            .unwrap();
        assert!(status.success());
        std::fs::read_to_string(out.join("metrics.csv")).unwrap()
    };
    let a = run(&dir.path().join("a"));
    let b = run(&dir.path().join("b"));
    assert_eq!(a, b, "metrics.csv differs between identical runs");
    assert!(dir.path().join("a/emse_curves.csv").exists());
}

#[test]
fn config_errors_exit_4() {
    let dir = tempfile::tempdir().unwrap();
    let (data, schema) = write_fixture(dir.path());

    // simulate without --seed
    let st = bin()
        .args(["simulate", "--n-list", "50", "--r", "2", "--out"])
        .arg(dir.path().join("x1"))
        .output()
        .unwrap();
    assert_eq!(st.status.code(), Some(4));

    // r = 0
    let st = bin()
        .args(["simulate", "--n-list", "50", "--r", "0", "--seed", "1", "--out"])
        .arg(dir.path().join("x2"))
        .output()
        .unwrap();
    assert_eq!(st.status.code(), Some(4));

    // invalid weight spec
    let st = bin()
        .args(["fit", "--data"])
        .arg(&data)
        .arg("--schema")
        .arg(&schema)
        .args(["--weight", "trimmed:0.7", "--out"])
        .arg(dir.path().join("x3"))
        .output()
        .unwrap();
    assert_eq!(st.status.code(), Some(4));

    // invalid bootstrap scheme string
    let st = bin()
        .args(["bootstrap", "--data"])
        .arg(&data)
        .arg("--schema")
        .arg(&schema)
        .args(["--weight", "trimmed:0.1", "--b", "2", "--scheme", "wild", "--seed", "1", "--out"])
        .arg(dir.path().join("x4"))
        .output()
        .unwrap();
    assert_eq!(st.status.code(), Some(4));

    // schema missing the instrument field
    let bad_schema = dir.path().join("bad_schema.json");
    std::fs::write(&bad_schema, r#"{"response":"y","exogenous":["x1"],"endogenous":"w"}"#)
        .unwrap();
    let st = bin()
        .args(["fit", "--data"])
        .arg(&data)
        .arg("--schema")
        .arg(&bad_schema)
        .args(["--weight", "trimmed:0.1", "--out"])
        .arg(dir.path().join("x5"))
        .output()
        .unwrap();
    assert_eq!(st.status.code(), Some(4));
}

#[test]
fn data_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let (_, schema) = write_fixture(dir.path());

    // negative response value
    let bad = dir.path().join("bad.csv");
    std::fs::write(
        &bad,
        "y,x1,w,z\n1,0.1,0.2,0.3\n-5,0.2,0.1,0.4\n2,0.0,0.5,0.1\n1,0.4,0.2,0.2\n1,0.1,0.3,0.6\n2,0.5,0.2,0.9\n",
    )
    .unwrap();
    let st = bin()
        .args(["fit", "--data"])
        .arg(&bad)
        .arg("--schema")
        .arg(&schema)
        .args(["--weight", "trimmed:0.1", "--out"])
        .arg(dir.path().join("y1"))
        .output()
        .unwrap();
    assert_eq!(st.status.code(), Some(2));
    let err = String::from_utf8_lossy(&st.stderr);
    assert!(err.contains("negative response at row 1"), "stderr: {err}");

    // missing data file
    let st = bin()
        .args(["fit", "--data"])
        .arg(dir.path().join("absent.csv"))
        .arg("--schema")
        .arg(&schema)
        .args(["--weight", "trimmed:0.1", "--out"])
        .arg(dir.path().join("y2"))
        .output()
        .unwrap();
    assert_eq!(st.status.code(), Some(2));
}
