use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SYNTH: &str = r#"
seed = 11
communities = { count = 20, size = 15 }
p_within = 0.5
p_between = 0.002
advantage_months = 5.0
"#;

const PIPELINE: &str = r#"
output_dir = "out"

[input]
patents = "data/patents.tsv"
inventors = "data/inventors.tsv"
citations = "data/citations.tsv"

[cohort]
classes = ["257"]
first_year = 1996
last_year = 2000

[seeds]
detection = 1
subsample = 2
control = 3

[detection]
algorithms = ["louvain", "infomap"]
ari_runs = 2

[subsample]
k = 50
reps = 20
"#;

fn coinvent(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_coinvent"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn ok(out: Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}\nstderr: {}",
        out.status,
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn workspace() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("synth.toml"), SYNTH).unwrap();
    fs::write(dir.path().join("pipeline.toml"), PIPELINE).unwrap();
    ok(coinvent(&["synth", "--config", "synth.toml", "--out", "data"], dir.path()));
    dir
}

#[test]
fn synth_writes_tables() {
    let dir = workspace();
    for f in ["patents.tsv", "inventors.tsv", "citations.tsv", "planted.tsv", "planted_citations.csv"] {
        assert!(dir.path().join("data").join(f).is_file(), "{f}");
    }
}

#[test]
fn run_writes_report_and_manifest() {
    let dir = workspace();
    ok(coinvent(&["run", "--config", "pipeline.toml"], dir.path()));
    let out = dir.path().join("out");
    for f in [
        "manifest.json",
        "report/table2.json",
        "report/table3.json",
        "report/table4.json",
        "report/table5.json",
        "report/control.json",
        "partitions/louvain.tsv",
        "partitions/infomap.graphml",
        "citations/louvain.csv",
        "stats/infomap_in_community.csv",
    ] {
        assert!(out.join(f).is_file(), "{f}");
    }
    assert!(!out.join("FAILED").exists());
    let table4: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("report/table4.json")).unwrap()).unwrap();
    assert_eq!(table4.as_array().unwrap().len(), 2);
}

#[test]
fn stages_run_one_at_a_time() {
    let dir = workspace();
    let cfg = ["--config", "pipeline.toml"];
    for stage in ["ingest", "project", "detect", "classify", "stats", "report"] {
        let stdout = ok(coinvent(&[&[stage][..], &cfg[..]].concat(), dir.path()));
        serde_json::from_str::<serde_json::Value>(&stdout).unwrap_or_else(|e| panic!("{stage}: {e}"));
    }
    let stdout = ok(coinvent(&["control", "--config", "pipeline.toml", "--algorithm", "louvain"], dir.path()));
    let report: serde_json::Value = serde_json::from_str(&stdout).unwrap();
    assert_eq!(report["algorithm"], "louvain");
    assert!(dir.path().join("out/control/louvain.json").is_file());
}

#[test]
fn reruns_are_byte_identical() {
    let dir = workspace();
    ok(coinvent(&["run", "--config", "pipeline.toml"], dir.path()));
    let first = fs::read(dir.path().join("out/report/table4.json")).unwrap();
    ok(coinvent(&["run", "--config", "pipeline.toml"], dir.path()));
    assert_eq!(first, fs::read(dir.path().join("out/report/table4.json")).unwrap());
}

#[test]
fn flags_and_overrides_reach_the_config() {
    let dir = workspace();
    ok(coinvent(
        &[
            "run",
            "--config",
            "pipeline.toml",
            "--algorithms",
            "greedy",
            "--output-dir",
            "alt",
            "--set",
            "analysis.window_months=60",
        ],
        dir.path(),
    ));
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("alt/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["analysis"]["window_months"], 60.0);
    assert_eq!(manifest["config"]["detection"]["algorithms"], serde_json::json!(["greedy"]));
}

#[test]
fn unknown_detector_is_rejected() {
    let dir = workspace();
    let out = coinvent(&["run", "--config", "pipeline.toml", "--set", "detection.algorithms=[\"spectral\"]"], dir.path());
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("spectral"));
}

#[test]
fn missing_seed_is_rejected() {
    let dir = workspace();
    let text = PIPELINE.replace("control = 3\n", "");
    fs::write(dir.path().join("noseed.toml"), text).unwrap();
    let out = coinvent(&["run", "--config", "noseed.toml"], dir.path());
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("control"));
}

#[test]
fn stage_failure_leaves_marker() {
    let dir = workspace();
    fs::remove_file(dir.path().join("data/citations.tsv")).unwrap();
    let out = coinvent(&["ingest", "--config", "pipeline.toml"], dir.path());
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("ingest"));
    assert!(dir.path().join("out/FAILED").is_file());
}
