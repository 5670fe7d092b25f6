use std::fs;
use std::process::{Command, Output};

use serde_json::Value;

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_manifold-fit")).args(args).output().expect("binary runs")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

#[test]
fn e1_check_prints_a_winding_verdict() {
    let out = cli(&["check", "--generator", "E1", "--d", "3", "--m", "1"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["verdict"], "NO");
    assert_eq!(v["mechanism"], "loop winding 1");
    assert_eq!(v["input"]["n"], 4);
}

#[test]
fn malformed_cloud_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cloud.json");
    fs::write(&path, r#"{"schema": "manifold-fit/cloud", "points": [[0.0, 1.0], [2.0]]}"#).unwrap();
    let out = cli(&["check", "--input", path.to_str().unwrap(), "--d", "1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());

    let missing = dir.path().join("absent.json");
    assert_eq!(cli(&["check", "--input", missing.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(cli(&[]).status.code(), Some(2));
    assert_eq!(cli(&["check", "--generator", "no_such_set", "--d", "1"]).status.code(), Some(2));
}

#[test]
fn generated_cloud_round_trips_through_check() {
    let dir = tempfile::tempdir().unwrap();
    let gen = cli(&["gen", "--generator", "circle", "--density", "count=80", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(gen.status.code(), Some(0));
    let cloud = dir.path().join("cloud.json");
    assert!(cloud.exists());
    let out = cli(&["check", "--input", cloud.to_str().unwrap(), "--d", "1", "--m", "2"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["verdict"], "YES");
    assert_eq!(v["caveat"], "UNCONDITIONAL");
}

#[test]
fn monodromy_and_paste_write_their_documents() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let mono = cli(&["monodromy", "--generator", "E2", "--out", d]);
    assert_eq!(mono.status.code(), Some(0));
    let doc: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("monodromy.json")).unwrap()).unwrap();
    assert_eq!(doc["schema"], "manifold-fit/monodromy");
    assert_eq!(doc["loops"][0]["mechanism"]["winding"], 2);

    let paste = cli(&["paste", "--generator", "two_lines", "--format", "csv", "--out", d]);
    assert_eq!(paste.status.code(), Some(0));
    let text = fs::read_to_string(dir.path().join("pasted.csv")).unwrap();
    assert!(text.starts_with("schema_version,"));
    assert!(text.lines().count() > 100);
}
