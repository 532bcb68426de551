use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_vulnscape");
const SUBCOMMANDS: [&str; 12] = [
    "ingest", "embed", "cluster", "validate", "screen", "stability", "retention", "link", "serve", "run", "replay",
    "synth",
];

fn vulnscape(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .current_dir(dir)
        .env_remove("VULNSCAPE_DATA_DIR")
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = vulnscape(dir, args);
    assert_eq!(out.status.code(), Some(0), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn fixture() -> tempfile::TempDir {
    let tmp = tempfile::tempdir().unwrap();
    ok(tmp.path(), &["synth", "--seed", "11", "--out-dir", "."]);
    tmp
}

#[test]
fn help_lists_every_flag_with_its_default() {
    let tmp = tempfile::tempdir().unwrap();
    for cmd in SUBCOMMANDS {
        let out = ok(tmp.path(), &[cmd, "--help"]);
        let text = String::from_utf8(out.stdout).unwrap();
        let usage = text.lines().find(|l| l.starts_with("Usage:")).unwrap();
        // Each entry is a flag line, optionally followed by its description.
        let mut entries: Vec<String> = Vec::new();
        for line in text.lines().skip_while(|l| !l.starts_with("Options:")).skip(1) {
            let t = line.trim_start();
            if t.starts_with('-') {
                entries.push(t.to_string());
            } else if let Some(last) = entries.last_mut() {
                last.push(' ');
                last.push_str(t);
            }
        }
        assert!(entries.len() > 2, "{cmd}");
        for entry in entries.iter().filter(|e| e.starts_with("--")) {
            let flag = entry.split_whitespace().next().unwrap();
            let takes_value = entry.split_whitespace().nth(1).is_some_and(|w| w.starts_with('<'));
            let required = usage.contains(&format!("{flag} <"));
            assert!(
                !takes_value || required || entry.contains("[default"),
                "{cmd}: `{entry}` has no default"
            );
        }
    }
}

#[test]
fn embed_example_writes_file() {
    let tmp = fixture();
    ok(tmp.path(), &["embed", "--method", "tsne", "--wave", "6", "--seed", "42", "--edi", "edi.csv", "--out", "emb.csv"]);
    let text = std::fs::read_to_string(tmp.path().join("emb.csv")).unwrap();
    assert_eq!(text.lines().count(), 25);
}

#[test]
fn exit_codes() {
    let tmp = fixture();
    let dir = tmp.path();

    let out = vulnscape(dir, &["cluster", "--k", "0", "--seed", "1", "--edi", "edi.csv"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("k = 0 must be between 1 and the number of points"), "{}", stderr(&out));

    let out = vulnscape(dir, &["embed", "--seed", "1", "--frobnicate"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("Usage: vulnscape embed"));

    let out = vulnscape(dir, &["validate", "--edi", "edi.csv"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("--seed"));

    let out = vulnscape(dir, &["embed", "--seed", "1", "--wave", "9"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("invalid_wave"));

    let out = vulnscape(dir, &["retention", "--facet", "shoe_size"]);
    assert_eq!(out.status.code(), Some(1));

    // A missing file is a runtime failure.
    let out = vulnscape(dir, &["embed", "--seed", "1", "--edi", "nowhere.csv"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("io_error"));

    let out = vulnscape(dir, &["replay", "--manifest", "missing.json", "--out-dir", "r"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn data_dir_from_environment_and_stdout_carries_data() {
    let tmp = fixture();
    let elsewhere = tempfile::tempdir().unwrap();
    let out = Command::new(BIN)
        .args(["cluster", "--seed", "3", "--wave", "5"])
        .current_dir(elsewhere.path())
        .env("VULNSCAPE_DATA_DIR", tmp.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let text = String::from_utf8_lossy(&out.stdout).into_owned();
    assert!(text.starts_with("key,wave,x,y,label"), "{text}");
    assert_eq!(text.lines().count(), 25);
    assert!(!stderr(&out).contains("key,wave"));
}

fn read(p: impl AsRef<Path>) -> Vec<u8> {
    std::fs::read(p.as_ref()).unwrap_or_else(|e| panic!("{}: {e}", p.as_ref().display()))
}

#[test]
fn subcommands_reproduce_the_run_directory() {
    let tmp = fixture();
    let dir = tmp.path();
    let fast = ["--restarts", "10"];
    let mut args = vec!["run", "--seed", "5", "--out-dir", "run", "--repeats", "20"];
    args.extend(fast);
    ok(dir, &args);

    let stage = |cmd: &str, extra: &[&str], out: &str| {
        let mut a = vec![cmd, "--seed", "5", "--out", out];
        a.extend(fast);
        a.extend(extra);
        ok(dir, &a);
    };
    let embed = ["embed", "--seed", "5", "--wave", "6", "--out", "e.csv"];
    ok(dir, &embed);
    assert_eq!(read(dir.join("e.csv")), read(dir.join("run/wave6/embedding.csv")));
    stage("cluster", &["--wave", "6"], "c.csv");
    assert_eq!(read(dir.join("c.csv")), read(dir.join("run/wave6/clusters.csv")));
    stage("cluster", &["--all-waves"], "ca.csv");
    assert_eq!(read(dir.join("ca.csv")), read(dir.join("run/all/clusters.csv")));
    stage("validate", &["--wave", "3", "--repeats", "20"], "h.csv");
    assert_eq!(read(dir.join("h.csv")), read(dir.join("run/wave3/hopkins.csv")));
    stage("stability", &[], "s.csv");
    assert_eq!(read(dir.join("s.csv")), read(dir.join("run/stability.csv")));
    stage("screen", &["--suggestions", "sug.txt"], "sc.csv");
    assert_eq!(read(dir.join("sc.csv")), read(dir.join("run/screening.csv")));

    let out = ok(dir, &["replay", "--manifest", "run/manifest.json", "--out-dir", "again"]);
    assert!(stderr(&out).contains("replay matches"));
}

#[test]
fn retention_and_link() {
    let tmp = fixture();
    let dir = tmp.path();
    let out = ok(dir, &["retention", "--facet", "exit_age", "--out-dir", "bu"]);
    let table = String::from_utf8(out.stdout).unwrap();
    assert!(table.starts_with("facet,exit_age,count,proportion"));
    assert_eq!(read(dir.join("bu/facets/exit_age.csv")), table.as_bytes());
    assert!(dir.join("bu/manifest.json").exists());

    let out = ok(dir, &["link", "--enrollment", "rates.csv"]);
    let link = String::from_utf8(out.stdout).unwrap();
    assert_eq!(link.lines().count(), 8);
    assert_eq!(read(dir.join("rates.csv")).iter().filter(|&&b| b == b'\n').count(), 25);

    let out = vulnscape(dir, &["link", "--group", "Underwater Basketry"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn ingest_with_da_geometry_accounts_for_every_da() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    ok(dir, &["synth", "--seed", "2", "--out-dir", ".", "--das", "200"]);
    let out = ok(dir, &["ingest", "--out", "profiles.csv"]);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["das"], 200);
    assert_eq!(v["assigned"].as_u64().unwrap() + v["unassigned"].as_u64().unwrap(), 200);
    assert!(v["unassigned"].as_u64().unwrap() > 0);
    let text = std::fs::read_to_string(dir.join("profiles.csv")).unwrap();
    assert!(text.starts_with("da_id,"));
}
