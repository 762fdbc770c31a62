use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

const BIN: &str = env!("CARGO_BIN_EXE_blstab");

fn workspace() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn blstab(args: &[&str], out: &Path) -> Output {
    Command::new(BIN)
        .args(args)
        .arg("--output-dir")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, v: &Value) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, v.to_string()).unwrap();
    p
}

fn stdout_json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout)
        .unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&o.stdout)))
}

fn run_dir(out: &Path) -> PathBuf {
    let dirs: Vec<PathBuf> = fs::read_dir(out)
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    assert_eq!(dirs.len(), 1, "{dirs:?}");
    dirs.into_iter().next().unwrap()
}

fn header(path: &Path) -> Vec<String> {
    let text = fs::read_to_string(path).unwrap();
    text.lines()
        .next()
        .unwrap()
        .split(',')
        .map(str::to_string)
        .collect()
}

/// Documented columns of `file`, with `D_0 … D_{m-1}` expanded.
fn documented_columns(file: &str, m: usize) -> Vec<String> {
    let doc = fs::read_to_string(workspace().join("docs/csv.md")).unwrap();
    let row = doc
        .lines()
        .find(|l| l.starts_with(&format!("| `{file}`")))
        .unwrap_or_else(|| panic!("{file} is not documented"));
    let cell = row.split('|').nth(3).unwrap();
    let cols = cell.split('`').nth(1).unwrap();
    let mut out = Vec::new();
    for c in cols.split(", ") {
        if c == "D_0 … D_{m-1}" {
            out.extend((0..m).map(|j| format!("D_{j}")));
        } else {
            out.push(c.to_string());
        }
    }
    out
}

fn check_summary_schema(summary: &Value) {
    let schema: Value = serde_json::from_str(
        &fs::read_to_string(workspace().join("docs/schemas/summary.schema.json")).unwrap(),
    )
    .unwrap();
    let obj = summary.as_object().unwrap();
    let required: Vec<&str> = schema["required"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_str().unwrap())
        .collect();
    let mut keys: Vec<&str> = obj.keys().map(String::as_str).collect();
    keys.sort();
    let mut want = required.clone();
    want.sort();
    assert_eq!(keys, want);
    let statuses = schema["properties"]["status"]["enum"].as_array().unwrap();
    assert!(statuses.contains(&summary["status"]));
    let flags = schema["properties"]["flags"]["items"]["enum"]
        .as_array()
        .unwrap();
    for f in summary["flags"].as_array().unwrap() {
        assert!(flags.contains(f), "undocumented flag {f}");
    }
    let hash = summary["config_hash"].as_str().unwrap();
    assert!(hash.len() == 16 && hash.chars().all(|c| c.is_ascii_hexdigit()));
}

#[test]
fn check_loomis_whitney() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = workspace().join("configs/lw.json");
    let o = blstab(&["check", "--config", cfg.to_str().unwrap()], tmp.path());
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let s = stdout_json(&o);
    check_summary_schema(&s);
    assert_eq!(s["result"]["simplicity"]["tag"], "NotSimpleWithWitness");
    assert!(s["result"]["finiteness"]["tag"].is_string());
    let dir = run_dir(tmp.path());
    for f in ["config.json", "summary.json", "record.json"] {
        assert!(dir.join(f).is_file(), "{f}");
    }
    assert!(!dir.join(".lock").exists());
}

#[test]
fn constant_of_frame_is_one() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = workspace().join("configs/frame120.json");
    let o = blstab(
        &[
            "constant",
            "--config",
            cfg.to_str().unwrap(),
            "--restarts",
            "8",
            "--seed",
            "7",
        ],
        tmp.path(),
    );
    assert_eq!(o.status.code(), Some(0));
    let s = stdout_json(&o);
    check_summary_schema(&s);
    assert!((s["result"]["value"].as_f64().unwrap() - 1.0).abs() <= 1e-6);
    let dir = run_dir(tmp.path());
    assert_eq!(
        header(&dir.join("trace.csv")),
        documented_columns("trace.csv", 0)
    );
    let cfg: Value =
        serde_json::from_str(&fs::read_to_string(dir.join("config.json")).unwrap()).unwrap();
    assert_eq!(cfg["optimizer"]["restarts"], 8);
    assert_eq!(cfg["seed"], 7);
}

#[test]
fn opt2_slope_from_the_command_line() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = workspace().join("configs/holder31.json");
    let o = blstab(
        &[
            "experiment",
            "opt2",
            "--config",
            cfg.to_str().unwrap(),
            "--deltas",
            "1e-1..1e-3",
        ],
        tmp.path(),
    );
    assert_eq!(o.status.code(), Some(0));
    let s = stdout_json(&o);
    check_summary_schema(&s);
    assert!((s["result"]["fit"]["slope"].as_f64().unwrap() - 3.0).abs() <= 0.15);
    assert_eq!(s["pass"], true);
    let csv = run_dir(tmp.path()).join("opt2.csv");
    assert_eq!(header(&csv), documented_columns("opt2.csv", 2));
    let rows = fs::read_to_string(&csv).unwrap().lines().count() - 1;
    assert_eq!(rows, 8);
}

#[test]
fn experiment_csv_headers_match_docs() {
    let tmp = tempfile::tempdir().unwrap();
    let runs: [(&str, Value, &[&str]); 4] = [
        (
            "sweep",
            json!({"datum": "frame-120", "bl_const": 1.0, "experiment": {"trials": 6}}),
            &["sweep.csv"],
        ),
        (
            "tuple",
            json!({"datum": "frame-120", "experiment": {"samples": 10}}),
            &["tuple.csv", "modulus.csv"],
        ),
        ("holder", json!({}), &["holder.csv"]),
        (
            "complex",
            json!({"experiment": {"vectors": [[1.0], [-1.0]]}, "distance": {"starts": 2}}),
            &["complex.csv"],
        ),
    ];
    for (k, (name, cfg, files)) in runs.iter().enumerate() {
        let path = write_config(tmp.path(), &format!("{name}.json"), cfg);
        let out = tmp.path().join(format!("out{k}"));
        let o = blstab(
            &["experiment", name, "--config", path.to_str().unwrap()],
            &out,
        );
        assert_eq!(
            o.status.code(),
            Some(0),
            "{name}: {}",
            String::from_utf8_lossy(&o.stderr)
        );
        check_summary_schema(&stdout_json(&o));
        let dir = run_dir(&out);
        for f in *files {
            assert_eq!(header(&dir.join(f)), documented_columns(f, 3), "{f}");
        }
    }
}

#[test]
fn validation_errors_exit_2_and_name_the_field() {
    let tmp = tempfile::tempdir().unwrap();
    let cases = [
        (
            json!({"datum": {"d": 1, "factors": [{"matrix": [[1.0]], "p": 0.5}]}}),
            "datum.factors[0].p",
        ),
        (json!({"datum": "frame-120", "restarts": 3}), "restarts"),
        (
            json!({"datum": "frame-120", "quadrature": {"points_per_axis": 0}}),
            "quadrature",
        ),
        (json!({"datum": "missing.json"}), "datum"),
        (
            json!({"datum": "frame-120", "optimizer": {"grad_tol": -1.0}}),
            "optimizer.grad_tol",
        ),
    ];
    for (k, (cfg, field)) in cases.iter().enumerate() {
        let path = write_config(tmp.path(), &format!("bad{k}.json"), cfg);
        let o = blstab(
            &["check", "--config", path.to_str().unwrap()],
            &tmp.path().join("out"),
        );
        assert_eq!(o.status.code(), Some(2), "{cfg}");
        let err = String::from_utf8_lossy(&o.stderr);
        assert!(err.contains(field), "{err}");
    }
    let o = blstab(
        &["check", "--config", "/nonexistent/config.json"],
        tmp.path(),
    );
    assert_eq!(o.status.code(), Some(2));
    let o = Command::new(BIN).args(["frobnicate"]).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn divergence_exits_3() {
    let tmp = tempfile::tempdir().unwrap();
    let path = write_config(
        tmp.path(),
        "sc.json",
        &json!({"datum": "supercritical-line"}),
    );
    let o = blstab(
        &["constant", "--config", path.to_str().unwrap()],
        &tmp.path().join("out"),
    );
    assert_eq!(o.status.code(), Some(3));
    let s = stdout_json(&o);
    assert_eq!(s["status"], "numerical-failure");
    assert!(s["flags"]
        .as_array()
        .unwrap()
        .contains(&json!("divergence")));
    let record: Value = serde_json::from_str(
        &fs::read_to_string(run_dir(&tmp.path().join("out")).join("record.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(record["exit_code"], 3);
}

#[test]
fn locked_run_directory_is_refused() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = workspace().join("configs/lw.json");
    let out = tmp.path().join("out");
    let o = blstab(&["check", "--config", cfg.to_str().unwrap()], &out);
    assert_eq!(o.status.code(), Some(0));
    let dir = run_dir(&out);
    fs::write(dir.join(".lock"), "1\n").unwrap();
    let o = blstab(&["check", "--config", cfg.to_str().unwrap()], &out);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("locked"));
}

#[test]
fn hash_ignores_key_order_and_output_dir() {
    let tmp = tempfile::tempdir().unwrap();
    let a = write_config(
        tmp.path(),
        "a.json",
        &json!({"seed": 3, "datum": "frame-120", "optimizer": {"restarts": 2, "tol": 1e-13}}),
    );
    fs::write(
        tmp.path().join("b.json"),
        r#"{"optimizer": {"tol": 1e-13, "restarts": 2}, "output_dir": "elsewhere", "datum": "frame-120", "seed": 3}"#,
    )
    .unwrap();
    let b = tmp.path().join("b.json");
    let echo = |p: &Path| {
        let o = Command::new(BIN)
            .args(["validate", "--config", p.to_str().unwrap()])
            .output()
            .unwrap();
        assert_eq!(o.status.code(), Some(0));
        o.stdout
    };
    assert_eq!(echo(&a), echo(&b));
    let h = |p: &Path, out: &str| {
        let o = blstab(
            &["check", "--config", p.to_str().unwrap()],
            &tmp.path().join(out),
        );
        stdout_json(&o)["config_hash"].clone()
    };
    assert_eq!(h(&a, "x"), h(&b, "y"));
}

#[test]
fn thread_cap_is_validated() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = workspace().join("configs/lw.json");
    let run = |threads: &str| {
        Command::new(BIN)
            .env("BLSTAB_THREADS", threads)
            .args(["check", "--config", cfg.to_str().unwrap(), "--output-dir"])
            .arg(tmp.path())
            .output()
            .unwrap()
            .status
            .code()
    };
    assert_eq!(run("zero"), Some(2));
    assert_eq!(run("1"), Some(0));
}

#[test]
fn validate_fills_defaults() {
    let tmp = tempfile::tempdir().unwrap();
    let p = write_config(tmp.path(), "min.json", &json!({"datum": "holder-2-2"}));
    let o = Command::new(BIN)
        .args(["validate", "--config", p.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    let v = stdout_json(&o);
    assert_eq!(v["seed"], 0);
    assert!(v["quadrature"]["points_per_axis"].is_number());
    assert!(v["optimizer"]["restarts"].is_number());
    assert_eq!(v["datum"]["factors"].as_array().unwrap().len(), 2);
}
