//! End-to-end checks of the `hsq` binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn hsq(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hsq"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr_json(o: &Output) -> Value {
    serde_json::from_slice(&o.stderr)
        .unwrap_or_else(|_| panic!("stderr is not JSON: {:?}", String::from_utf8_lossy(&o.stderr)))
}

const CONFIG: &str = r#"{
  "schema_version": 1,
  "problem": {"kind": "quadratic", "dim": 16, "samples": 200, "noise": 0.1, "seed": 1},
  "fed": {"num_clients": 20, "clients_per_round": 5, "rounds": 40, "local_batch": 4,
          "lr": {"kind": "constant", "eta": 0.05},
          "scheme": {"kind": "hsq", "variant": "unbiased", "segment_dim": 4, "codeword_count": 8,
                     "levels": 7, "codebook": "random_gaussian", "codebook_seed": 2},
          "seed": 1}
}"#;

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("cfg.json");
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn ratio_matches_table() {
    for (args, want) in [
        (
            vec!["--scheme", "hsq", "--dprime", "8", "--m", "256", "--s", "63"],
            "18.3",
        ),
        (
            vec!["--scheme", "hsq", "--dprime", "16", "--m", "256", "--s", "63"],
            "36.6",
        ),
        (
            vec!["--scheme", "hsq", "--dprime", "64", "--m", "256", "--s", "63"],
            "146.3",
        ),
        (vec!["--scheme", "terngrad"], "20.2"),
        (vec!["--scheme", "signsgd"], "32.0"),
        (vec!["--scheme", "qsgd", "--s", "7"], "8.0"),
        (vec!["--scheme", "sgd"], "1.0"),
    ] {
        let mut full = vec!["ratio"];
        full.extend(args);
        let o = hsq(&full);
        assert!(o.status.success());
        assert_eq!(stdout(&o).trim(), want, "{full:?}");
    }
}

#[test]
fn ratio_grid_lists_every_scheme() {
    let o = hsq(&["ratio", "--grid"]);
    let text = stdout(&o);
    assert_eq!(text.lines().count(), 9);
    assert!(text.contains("hsq d'=16 m=256 s=63\t917504\t36.6"));
}

#[test]
fn unknown_scheme_is_a_json_error() {
    let o = hsq(&["ratio", "--scheme", "gradiveq"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(stderr_json(&o)["error"], "usage");
}

#[test]
fn extreme_preset_costs_32_plus_log_d() {
    let o = hsq(&["preset", "extreme", "--d", "1024"]);
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["bits_per_gradient"], 42);
    assert_eq!(v["scheme"]["segment_dim"], 1024);
    assert_eq!(v["scheme"]["codeword_count"], 1024);
    let o = hsq(&["preset", "compact", "--d", "1024"]);
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    // 32 segments of 32 coordinates: 32·(5 + 32) bits.
    assert_eq!(v["bits_per_gradient"], 32 * 37);
    let o = hsq(&["preset", "high-precision", "--d", "1024"]);
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["scheme"]["segment_dim"], 4);
    assert_eq!(v["variance_blowup"], 4);
}

#[test]
fn simulate_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), CONFIG);
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let s = dir.path().join("s.json");
    for out in [&a, &b] {
        let o = hsq(&[
            "simulate",
            "--config",
            &cfg,
            "--csv",
            out.to_str().unwrap(),
            "--summary",
            s.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let text = fs::read_to_string(&a).unwrap();
    assert_eq!(text, fs::read_to_string(&b).unwrap());
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "round,loss,grad_norm_sq,uplink_bits,downlink_bits,cumulative_bits"
    );
    assert_eq!(lines.count(), 40);
    let summary: Value = serde_json::from_str(&fs::read_to_string(&s).unwrap()).unwrap();
    assert_eq!(summary["config"]["fed"]["seed"], 1);
    assert_eq!(summary["uplink_bits_per_client"], 4 * (3 + 3));
    assert!(summary["final_loss"].as_f64().unwrap() < summary["initial_loss"].as_f64().unwrap());
}

#[test]
fn simulate_flags_override_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), CONFIG);
    let o = hsq(&["simulate", "--config", &cfg, "--rounds", "6", "--eval-every", "3"]);
    assert!(o.status.success());
    let rows: Vec<String> = stdout(&o)
        .lines()
        .skip(1)
        .map(|l| l.split(',').next().unwrap().to_string())
        .collect();
    assert_eq!(rows, ["3", "6"]);
}

#[test]
fn bad_config_lists_each_field() {
    let dir = tempfile::tempdir().unwrap();
    let bad = CONFIG
        .replace("\"rounds\": 40", "\"rounds\": 0")
        .replace("\"clients_per_round\": 5", "\"clients_per_round\": 50");
    let cfg = write_config(dir.path(), &bad);
    let o = hsq(&["simulate", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr_json(&o);
    assert_eq!(err["error"], "config");
    let v: Vec<&str> = err["violations"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_str().unwrap())
        .collect();
    assert!(v.iter().any(|m| m.starts_with("fed.clients_per_round")), "{v:?}");
    assert!(v.iter().any(|m| m.starts_with("fed.rounds")), "{v:?}");
}

#[test]
fn quantize_then_decode() {
    let dir = tempfile::tempdir().unwrap();
    let grad = dir.path().join("g.json");
    let frame = dir.path().join("g.hsq");
    let back = dir.path().join("back.json");
    // Orthonormal basis, one codeword per segment is exact for axis-aligned segments.
    fs::write(&grad, "[0.0, 2.5, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0]").unwrap();
    let o = hsq(&[
        "quantize",
        "--input",
        grad.to_str().unwrap(),
        "--out",
        frame.to_str().unwrap(),
        "--dprime",
        "4",
        "--m",
        "4",
        "--s",
        "0",
        "--variant",
        "greedy",
        "--method",
        "sob",
        "--seed",
        "1",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let info: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(info["payload_bits"], 2 * (2 + 32));
    assert_eq!(fs::read(&frame).unwrap().len(), 31 + 9);
    let o = hsq(&[
        "decode",
        "--input",
        frame.to_str().unwrap(),
        "--out",
        back.to_str().unwrap(),
        "--method",
        "sob",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let g: Vec<f64> = serde_json::from_str(&fs::read_to_string(&back).unwrap()).unwrap();
    assert_eq!(g, vec![0.0, 2.5, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0]);
}

#[test]
fn codebook_file_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cb.bin");
    let p = path.to_str().unwrap();
    let o = hsq(&[
        "codebook", "gen", "--method", "gaussian", "--dim", "8", "--count", "32", "--seed", "5", "--out", p,
    ]);
    assert!(o.status.success());
    let gen: Value = serde_json::from_str(&stdout(&o)).unwrap();
    let o = hsq(&["codebook", "info", "--input", p]);
    let info: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(gen, info);
    assert_eq!(fs::read(&path).unwrap().len(), 23 + 8 * 8 * 32);
}

#[test]
fn roundtrip_self_check_passes() {
    let o = hsq(&["roundtrip", "--trials", "200", "--seed", "3"]);
    assert!(o.status.success());
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["failures"], 0);
}

#[test]
fn missing_file_is_an_io_error() {
    let o = hsq(&["codebook", "info", "--input", "/nonexistent/cb.bin"]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(stderr_json(&o)["error"], "io");
}
