use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const FIXTURE: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/fourteen_turns.json");

fn reflexa(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_reflexa"))
        .args(args)
        .current_dir(cwd)
        .env_remove("REFLEXA_API_KEY")
        .env_remove("REFLEXA_MOCK")
        .output()
        .unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn run_is_deterministic_and_replays() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let a = reflexa(&["run", FIXTURE, "--mock", "--out", "a.json"], d);
    assert_eq!(code(&a), 0, "{}", String::from_utf8_lossy(&a.stderr));
    let b = reflexa(&["run", FIXTURE, "--mock", "--out", "b.json"], d);
    assert_eq!(code(&b), 0);
    let (fa, fb) = (std::fs::read(d.join("a.json")).unwrap(), std::fs::read(d.join("b.json")).unwrap());
    assert_eq!(fa, fb);
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(String::from_utf8_lossy(&a.stdout).lines().count(), 18);

    let r = reflexa(&["replay", "a.json", "--out", "c.json"], d);
    assert_eq!(code(&r), 0, "{}", String::from_utf8_lossy(&r.stdout));
    let report: Value = serde_json::from_slice(&r.stdout).unwrap();
    assert_eq!(report["checked"], 14);
    assert_eq!(report["canonical"], true);
    assert_eq!(std::fs::read(d.join("c.json")).unwrap(), fa);
}

#[test]
fn default_output_name_uses_session_id() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "s.json", "[]");
    let out = reflexa(&["run", "s.json", "--mock"], dir.path());
    assert_eq!(code(&out), 0);
    let names: Vec<String> = std::fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n.starts_with("mock-"))
        .collect();
    assert_eq!(names.len(), 1);
    let doc: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join(&names[0])).unwrap()).unwrap();
    assert_eq!(doc["nodes"].as_array().unwrap().len(), 1);
}

#[test]
fn engine_error_exits_2_and_keeps_partial_session() {
    let dir = tempfile::tempdir().unwrap();
    write(
        dir.path(),
        "s.json",
        r#"[{"op":"collect","code":"x","title":"x"},{"op":"merge","a":"1","b":"7","instruction":""}]"#,
    );
    let out = reflexa(&["run", "s.json", "--mock", "--out", "o.json"], dir.path());
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown node"));
    let doc: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("o.json")).unwrap()).unwrap();
    assert_eq!(doc["nodes"].as_array().unwrap().len(), 2);
}

#[test]
fn usage_and_io_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(code(&reflexa(&["frobnicate"], d)), 1);
    assert_eq!(code(&reflexa(&["export", "x.json"], d)), 1);
    write(d, "bad.json", r#"[{"op":"teleport"}]"#);
    assert_eq!(code(&reflexa(&["run", "bad.json", "--mock"], d)), 1);
    assert_eq!(code(&reflexa(&["run", "missing.json", "--mock"], d)), 3);
    assert_eq!(code(&reflexa(&["export", "missing.json", "--format", "dot"], d)), 3);
    write(d, "corrupt.json", "{\"schema_version\": 1, \"nodes\": 5}");
    assert_eq!(code(&reflexa(&["replay", "corrupt.json"], d)), 3);
    write(d, "future.json", "{\"schema_version\": 999}");
    let out = reflexa(&["export", "future.json", "--format", "json"], d);
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("schema_version"));
}

#[test]
fn non_mock_run_without_key_is_an_engine_error() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "s.json", "[]");
    assert_eq!(code(&reflexa(&["run", "s.json"], dir.path())), 2);
}

#[test]
fn replay_flags_edited_files() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(code(&reflexa(&["run", FIXTURE, "--mock", "--out", "a.json"], d)), 0);
    let text = std::fs::read_to_string(d.join("a.json")).unwrap();
    let edited = text.replacen("slow the drops down", "speed the drops up", 1);
    assert_ne!(edited, text);
    write(d, "e.json", &edited);
    let out = reflexa(&["replay", "e.json"], d);
    assert_eq!(code(&out), 2);
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(!report["divergences"].as_array().unwrap().is_empty());
}

#[test]
fn export_formats() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(code(&reflexa(&["run", FIXTURE, "--mock", "--out", "a.json"], d)), 0);
    let dot = reflexa(&["export", "a.json", "--format", "dot"], d);
    assert_eq!(code(&dot), 0);
    let dot = String::from_utf8(dot.stdout).unwrap();
    assert!(dot.starts_with("digraph"));
    let edges: Vec<&str> = dot.lines().filter(|l| l.contains("->")).collect();
    let into_four = edges.iter().filter(|l| l.trim_end().ends_with("-> \"4\";")).count();
    assert_eq!(into_four, 2);

    let json = reflexa(&["export", "a.json", "--format", "json"], d);
    let v: Value = serde_json::from_slice(&json.stdout).unwrap();
    let session: Value = serde_json::from_str(&std::fs::read_to_string(d.join("a.json")).unwrap()).unwrap();
    let mut from_file = Vec::new();
    for n in session["nodes"].as_array().unwrap() {
        for p in n["parent_ids"].as_array().unwrap() {
            from_file.push((p.as_str().unwrap().to_string(), n["id"].as_str().unwrap().to_string()));
        }
    }
    let exported: Vec<(String, String)> = v["graph"]["edges"]
        .as_array()
        .unwrap()
        .iter()
        .map(|e| (e[0].as_str().unwrap().to_string(), e[1].as_str().unwrap().to_string()))
        .collect();
    assert_eq!(exported, from_file);
}

#[test]
fn rice_command() {
    let dir = tempfile::tempdir().unwrap();
    let out = reflexa(&["rice", "7", "7", "7", "1", "1", "1", "7", "7", "1"], dir.path());
    assert_eq!(code(&out), 0);
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v, serde_json::json!({"total": 5.0, "cp": 7.0, "se": 1.0, "ex": 7.0}));
    let out = reflexa(&["rice", "3", "3", "3", "3", "3", "3", "3", "3", "1", "--scale", "1", "5"], dir.path());
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["ex"], 11.0 / 3.0);
    assert_eq!(code(&reflexa(&["rice", "1", "2"], dir.path())), 1);
    assert_eq!(code(&reflexa(&["rice", "1", "2", "3", "4", "5", "6", "7", "8", "9"], dir.path())), 1);
}

#[test]
fn new_writes_a_root_only_session() {
    let dir = tempfile::tempdir().unwrap();
    let out = reflexa(&["new", "--mock", "--out", "n.json"], dir.path());
    assert_eq!(code(&out), 0);
    let doc: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("n.json")).unwrap()).unwrap();
    assert_eq!(doc["schema_version"], 1);
    assert_eq!(doc["settings"]["mock"], true);
    assert_eq!(doc["nodes"][0]["kind"], "root");
}
