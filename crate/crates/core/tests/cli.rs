use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serp_consensus::ingest::RawSnapshotRecord;
use serp_consensus::report::BUNDLE_FILES;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_serp-consensus"))
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn run(cmd: &mut Command) -> Output {
    cmd.env("RUST_LOG", "error").output().expect("binary runs")
}

fn write_corpus(path: &Path, engines: &[&str], keywords: usize) {
    let mut body = String::new();
    for k in 0..keywords {
        for (j, e) in engines.iter().enumerate() {
            let results = (0..10)
                .map(|p| format!("https://site{}.example/q{k}", (p + j) % 12))
                .collect();
            let record = RawSnapshotRecord {
                engine: e.to_string(),
                keyword: format!("query {k}"),
                captured_at: None,
                results,
            };
            body.push_str(&record.to_json_line());
            body.push('\n');
        }
    }
    fs::write(path, body).unwrap();
}

#[test]
fn report_writes_the_full_bundle() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("report");
    let output = run(bin()
        .arg("report")
        .arg("--config")
        .arg(fixture("nine_engine.json"))
        .arg("--out")
        .arg(&out));
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    for name in BUNDLE_FILES {
        assert!(out.join(name).is_file(), "{name} missing");
    }

    // 9 engines plus the consensus: 45 pairwise p-values.
    let pvalues = fs::read_to_string(out.join("pvalues.csv")).unwrap();
    let cells = pvalues
        .lines()
        .skip(1)
        .flat_map(|l| l.split(',').skip(1))
        .filter(|c| !c.is_empty())
        .count();
    assert_eq!(cells, 45);
    assert_eq!(pvalues.lines().count(), 10);

    let scores = fs::read_to_string(out.join("scores.csv")).unwrap();
    assert_eq!(scores.lines().next(), Some("engine,mean,ci_half_width"));
    assert!(scores.lines().last().unwrap().starts_with("consensus,"));
    let overlap = fs::read_to_string(out.join("overlap.csv")).unwrap();
    assert_eq!(overlap.lines().count(), 11);
    for line in overlap.lines().skip(1) {
        assert_eq!(line.rsplit(',').next(), Some("100.000"));
    }
}

#[test]
fn single_engine_matches_its_consensus() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("solo.jsonl");
    write_corpus(&corpus, &["solo"], 4);
    let out = dir.path().join("out");
    let output = run(bin().arg("report").arg("--corpus").arg(&corpus).arg("--out").arg(&out));
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    let relative = fs::read_to_string(out.join("relative.csv")).unwrap();
    assert_eq!(relative, "rank,solo\n1,1.00000\n2,1.00000\n3,1.00000\n4,1.00000\n");
}

#[test]
fn score_prints_means() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("c.jsonl");
    write_corpus(&corpus, &["a", "b", "c"], 5);
    let output = run(bin().arg("score").arg("--corpus").arg(&corpus));
    assert!(output.status.success());
    let stdout = String::from_utf8(output.stdout).unwrap();
    let labels: Vec<&str> = stdout.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(labels, ["a", "b", "c", "consensus"]);
}

#[test]
fn ingest_writes_canonical_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let raw = dir.path().join("raw.jsonl");
    let record = RawSnapshotRecord {
        engine: "Bing".into(),
        keyword: "maps".into(),
        captured_at: None,
        results: vec![
            "http://www.maps.com/FunFacts.aspx?nav=FF".into(),
            "http://www.maps.com/funfacts.aspx".into(),
            "https://other.example/?utm_source=x".into(),
        ],
    };
    fs::write(&raw, record.to_json_line() + "\n").unwrap();
    let out = dir.path().join("canonical.jsonl");
    let output = run(bin().arg("ingest").arg("--corpus").arg(&raw).arg("--out").arg(&out));
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    let line = fs::read_to_string(&out).unwrap();
    let got: RawSnapshotRecord = serde_json::from_str(line.trim()).unwrap();
    assert_eq!(got.engine, "bing");
    assert_eq!(got.results, ["https://maps.com/funfacts", "https://other.example/"]);
}

#[test]
fn failures_exit_with_code_one() {
    let dir = tempfile::tempdir().unwrap();
    let output = run(bin()
        .arg("report")
        .arg("--corpus")
        .arg(dir.path().join("absent.jsonl"))
        .arg("--out")
        .arg(dir.path().join("out")));
    assert_eq!(output.status.code(), Some(1));
    assert!(!dir.path().join("out").exists());

    let bad = dir.path().join("bad.jsonl");
    fs::write(&bad, "{\"engine\": \"a\"}\n").unwrap();
    let output = run(bin().arg("score").arg("--corpus").arg(&bad));
    assert_eq!(output.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&output.stderr).contains("line 1"));
}

#[test]
fn failed_write_removes_partial_bundle() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("c.jsonl");
    write_corpus(&corpus, &["a", "b"], 3);
    let out = dir.path().join("out");
    // A directory squatting on a bundle file name makes that write fail.
    fs::create_dir_all(out.join("overlap.csv")).unwrap();
    let output = run(bin().arg("report").arg("--corpus").arg(&corpus).arg("--out").arg(&out));
    assert_eq!(output.status.code(), Some(1));
    for name in BUNDLE_FILES {
        assert!(!out.join(name).is_file(), "{name} left behind");
    }
}

#[test]
fn synth_is_seeded() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.jsonl");
    let b = dir.path().join("b.jsonl");
    for path in [&a, &b] {
        let output = run(bin()
            .args(["synth", "--preset", "random", "--seed", "7", "--engines", "3", "--keyword-count", "4", "--out"])
            .arg(path));
        assert!(output.status.success());
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert_eq!(fs::read_to_string(&a).unwrap().lines().count(), 12);
}

#[test]
fn fetch_replays_fixtures() {
    let dir = tempfile::tempdir().unwrap();
    let fixtures = dir.path().join("fixtures");
    let adapter = serp_consensus::ingest::ReplayAdapter::new(&fixtures);
    for engine in ["a", "b"] {
        adapter
            .store(&RawSnapshotRecord {
                engine: engine.into(),
                keyword: "cheap flights".into(),
                captured_at: None,
                results: vec!["https://x.example/".into()],
            })
            .unwrap();
    }
    let out = dir.path().join("fetched.jsonl");
    let output = run(bin()
        .arg("fetch")
        .arg("--fixtures")
        .arg(&fixtures)
        .args(["--engine", "a", "--engine", "b", "--keyword", "cheap flights", "--out"])
        .arg(&out));
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    assert_eq!(fs::read_to_string(&out).unwrap().lines().count(), 2);

    let output = run(bin()
        .arg("fetch")
        .arg("--fixtures")
        .arg(&fixtures)
        .args(["--engine", "zzz", "--keyword", "cheap flights", "--out"])
        .arg(&out));
    assert_eq!(output.status.code(), Some(1));
}
