use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use cuspwind::config::preset_config;
use cuspwind_cli::parse_csv;
use serde_json::Value;

fn cuspwind(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cuspwind"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn error_object(out: &Output) -> Value {
    serde_json::from_str(String::from_utf8_lossy(&out.stderr).trim()).expect("stderr holds one JSON object")
}

#[test]
fn code_prints_periodic_blocks() {
    let dir = tempfile::tempdir().unwrap();
    let out = cuspwind(&["code", "--point", "2.41421356", "--blocks", "6", "--out", "o"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(String::from_utf8_lossy(&out.stdout).lines().next(), Some("A B A B A B"));
    let v = json(&dir.path().join("o/code.json"));
    assert_eq!(v["data"]["windings"], serde_json::json!([0, 0, 0, 0, 0, 0]));
    assert_eq!(v["data"]["rows"].as_array().unwrap().len(), 6);
    assert_eq!(v["meta"]["command"], "code");
}

#[test]
fn validate_reports_every_check() {
    let dir = tempfile::tempdir().unwrap();
    let out = cuspwind(&["validate", "--preset", "one-cusp-one-hyperbolic", "--samples", "40", "--out", "o"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let v = json(&dir.path().join("o/validate.json"));
    let rows = v["data"]["rows"].as_array().unwrap();
    assert!(rows.len() >= 8);
    assert!(rows.iter().all(|r| r["passed"] == true), "{rows:?}");
    assert_eq!(v["data"]["group"]["accidental_cusps"], 0);
}

#[test]
fn delta_brackets_the_critical_exponent() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("gamma2.toml");
    fs::write(&cfg, preset_config("gamma2-type").unwrap().to_toml()).unwrap();
    let out = cuspwind(&["delta", "--config", "gamma2.toml", "--radius", "11", "--out", "o"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&dir.path().join("o/delta.json"));
    let d = v["data"]["delta"].as_f64().unwrap();
    let dc = v["data"]["delta_c"].as_f64().unwrap();
    assert!((d - 1.0).abs() <= 0.05, "{d}");
    assert!(dc < d);
    let probe = &v["data"]["orbit_count"];
    assert!((probe["exponent"].as_f64().unwrap() - d).abs() <= 0.05);
}

#[test]
fn spectrum_is_concave_and_figure_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let args = |o: &'static str| {
        vec![
            "spectrum", "--preset", "one-cusp-one-hyperbolic", "--cap", "100", "--beta-min", "-4", "--beta-max", "4",
            "--beta-steps", "17", "--out", o,
        ]
    };
    for o in ["a", "b"] {
        let out = cuspwind(&args(o), dir.path());
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let svg = fs::read(dir.path().join("a/spectrum.svg")).unwrap();
    assert_eq!(svg, fs::read(dir.path().join("b/spectrum.svg")).unwrap());
    let text = String::from_utf8(svg).unwrap();
    assert!(text.contains("t = 1/2 − β") && text.contains("(0, δ_c)") && text.contains("(1, 1/2)"));

    let table = parse_csv(&fs::read_to_string(dir.path().join("a/spectrum.csv")).unwrap()).unwrap();
    assert_eq!(table.columns, ["alpha", "f", "beta_source", "residual"]);
    let (a, f) = (table.column("alpha").unwrap(), table.column("f").unwrap());
    for k in 1..a.len() - 1 {
        if a[k + 1] - a[k - 1] > 1e-9 {
            let chord = ((a[k + 1] - a[k]) * f[k - 1] + (a[k] - a[k - 1]) * f[k + 1]) / (a[k + 1] - a[k - 1]);
            assert!(f[k] >= chord - 1e-6, "dip at alpha = {}", a[k]);
        }
    }
}

#[test]
fn csv_and_json_agree_to_the_last_bit() {
    let dir = tempfile::tempdir().unwrap();
    let base = ["free-energy", "--preset", "one-cusp-one-hyperbolic", "--cap", "50", "--beta-min", "-1", "--beta-max", "1", "--beta-steps", "5"];
    for (fmt, o) in [("csv", "c"), ("json", "j")] {
        let mut args = base.to_vec();
        args.extend(["--format", fmt, "--out", o]);
        assert_eq!(cuspwind(&args, dir.path()).status.code(), Some(0));
    }
    let table = parse_csv(&fs::read_to_string(dir.path().join("c/free-energy.csv")).unwrap()).unwrap();
    let v = json(&dir.path().join("j/free-energy.json"));
    let rows = v["data"].as_array().unwrap();
    let t = table.column("t").unwrap();
    assert_eq!(t.len(), rows.len());
    for (x, r) in t.iter().zip(rows) {
        assert_eq!(*x, r["t"].as_f64().unwrap());
    }
}

#[test]
fn pressure_grid_marks_divergence() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "pressure", "--preset", "gamma2-type", "--cap", "50", "--beta-min", "0", "--beta-max", "1", "--beta-steps", "3",
        "--t-min", "0.25", "--t-max", "1.25", "--t-steps", "3", "--out", "o",
    ];
    assert_eq!(cuspwind(&args, dir.path()).status.code(), Some(0));
    let table = parse_csv(&fs::read_to_string(dir.path().join("o/pressure.csv")).unwrap()).unwrap();
    assert_eq!(table.rows.len(), 9);
    let (t, b, p) = (table.column("t").unwrap(), table.column("beta").unwrap(), table.column("pressure").unwrap());
    for k in 0..t.len() {
        assert_eq!(p[k].is_infinite(), t[k] + b[k] <= 0.5, "t = {}, beta = {}", t[k], b[k]);
    }
}

#[test]
fn config_errors_exit_two_with_field_path() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = preset_config("gamma2-type").unwrap();
    cfg.generators[1].matrix = vec![1.0, 0.0, 2.0, 1.5];
    fs::write(dir.path().join("bad.toml"), cfg.to_toml()).unwrap();
    let out = cuspwind(&["delta", "--config", "bad.toml"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let e = error_object(&out);
    assert_eq!(e["error"]["kind"], "config");
    assert!(e["error"]["message"].as_str().unwrap().contains("generator[1].matrix"));

    let mut cfg = preset_config("one-cusp-one-hyperbolic").unwrap();
    cfg.generators.retain(|g| g.label != "A");
    fs::write(dir.path().join("none.toml"), cfg.to_toml()).unwrap();
    let out = cuspwind(&["validate", "--config", "none.toml"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(error_object(&out)["error"]["message"].as_str().unwrap().contains("no parabolic generator"));

    fs::write(dir.path().join("broken.toml"), "seed = \n").unwrap();
    let out = cuspwind(&["validate", "--config", "broken.toml"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(error_object(&out)["error"]["message"].as_str().unwrap().contains("line 1"));

    let out = cuspwind(&["spectrum", "--preset", "nope"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn computational_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    // an endpoint of the coding intervals has no code
    let out = cuspwind(&["code", "--point", "1", "--blocks", "3"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_object(&out)["error"]["kind"], "coding");
}
