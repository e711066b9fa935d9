use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fractdim"))
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run(config: &Path, out: &Path, extra: &[&str]) -> Output {
    bin()
        .arg("run")
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(extra)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

const SPECTRUM: &str = r#"{
  "version": 1,
  "seed": 5,
  "experiment": { "spectrum": {} },
  "ifs": { "maps": [
    { "ratio": 0.3333333333333333, "translation": [0.0] },
    { "ratio": 0.3333333333333333, "translation": [0.6666666666666666] }
  ] },
  "measure": { "bernoulli": [0.25, 0.75] },
  "assertions": [ { "metric": "t_at_1", "expected": 0.0, "tolerance": 1e-12 } ]
}"#;

#[test]
fn spectrum_curve_has_zero_at_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "s.json", SPECTRUM);
    let out = dir.path().join("out");
    let o = run(&cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));

    let csv = fs::read_to_string(out.join("spectrum.csv")).unwrap();
    assert!(csv.starts_with("q,T,alpha,f,endpoint\n"));
    let t1 = csv
        .lines()
        .skip(1)
        .map(|l| {
            l.split(',')
                .map(|c| c.parse::<f64>().unwrap())
                .collect::<Vec<_>>()
        })
        .find(|r| (r[0] - 1.0).abs() < 1e-9)
        .expect("grid contains q = 1");
    assert!(t1[1].abs() <= 1e-12, "T(1) = {}", t1[1]);

    let summary = json(&out.join("summary.json"));
    assert_eq!(summary["pass"], true);
    let manifest = json(&out.join("manifest.json"));
    assert_eq!(manifest["seed"], 5);
    assert_eq!(manifest["config"]["measure"]["bernoulli"][1], 0.75);
    assert!(manifest["versions"]["fractdim"].is_string());
    assert!(manifest["wall_seconds"].as_f64().unwrap() >= 0.0);
}

#[test]
fn cantor_ede_passes_at_every_depth() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&configs().join("ede_cantor.json"), dir.path(), &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = fs::read_to_string(dir.path().join("ede.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 23 * 20);
    assert!(rows.iter().all(|r| r.ends_with(",1")));
}

#[test]
fn bad_ratio_is_a_precondition_violation() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "bad.json",
        &SPECTRUM.replacen("\"ratio\": 0.3333333333333333", "\"ratio\": 1.2", 1),
    );
    let o = run(&cfg, &dir.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(3));
    let msg = stderr(&o);
    assert!(msg.contains("λ_0") && msg.contains("(0,1)"), "{msg}");
}

#[test]
fn unknown_key_is_a_schema_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "typo.json",
        &SPECTRUM.replace("\"translation\": [0.0]", "\"translaton\": [0.0]"),
    );
    let o = run(&cfg, &dir.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(2));
    let msg = stderr(&o);
    assert!(
        msg.contains("ifs.maps[0]") && msg.contains("translaton"),
        "{msg}"
    );
    assert!(msg.contains("line"), "{msg}");
}

#[test]
fn missing_seed_is_a_schema_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "noseed.json",
        &SPECTRUM.replace("\"seed\": 5,", ""),
    );
    let o = run(&cfg, &dir.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("seed"));
}

#[test]
fn unknown_metric_is_a_schema_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "m.json", &SPECTRUM.replace("t_at_1", "t_at_9"));
    let o = run(&cfg, &dir.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("assertions[0].metric"));
}

#[test]
fn failed_assertion_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "f.json",
        &SPECTRUM.replace(
            "\"assertions\": [",
            "\"assertions\": [ { \"metric\": \"s0\", \"max\": 0.5 },",
        ),
    );
    let out = dir.path().join("out");
    let o = run(&cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(1));
    let summary = json(&out.join("summary.json"));
    assert_eq!(summary["pass"], false);
    assert_eq!(summary["assertions"][0]["pass"], false);
    assert_eq!(summary["assertions"][1]["pass"], true);
}

#[test]
fn outputs_do_not_depend_on_workers() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("dimension_cantor.json");
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(run(&cfg, &a, &["--workers", "1"]).status.code(), Some(0));
    assert_eq!(run(&cfg, &b, &["--workers", "3"]).status.code(), Some(0));
    for f in ["dimension.csv", "scales.csv", "coarse.csv"] {
        assert_eq!(
            fs::read(a.join(f)).unwrap(),
            fs::read(b.join(f)).unwrap(),
            "{f} differs"
        );
    }
}

#[test]
fn seed_override_is_recorded() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("transversality.json");
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    run(&cfg, &a, &[]);
    let o = run(&cfg, &b, &["--seed-override", "99"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(json(&b.join("manifest.json"))["seed"], 99);
    assert_eq!(json(&b.join("manifest.json"))["seed_overridden"], true);
    assert_ne!(
        fs::read(a.join("transversality.csv")).unwrap(),
        fs::read(b.join("transversality.csv")).unwrap()
    );
}

#[test]
fn shipped_configs_pass() {
    for entry in fs::read_dir(configs()).unwrap() {
        let path = entry.unwrap().path();
        let dir = tempfile::tempdir().unwrap();
        let o = run(&path, dir.path(), &[]);
        assert_eq!(
            o.status.code(),
            Some(0),
            "{}: {}{}",
            path.display(),
            String::from_utf8_lossy(&o.stdout),
            stderr(&o)
        );
    }
}

#[test]
fn verify_closed_form_passes() {
    let o = bin().args(["verify", "closed-form"]).output().unwrap();
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stdout)
    );
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("expected") && text.contains("tolerance") && text.contains("verdict"));
    assert!(text.contains("3 of 3 criteria passed"));
}

#[test]
fn verify_unknown_suite_exits_two() {
    let o = bin().args(["verify", "no-such-suite"]).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}
