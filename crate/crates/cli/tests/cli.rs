use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn ultratree(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ultratree"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&o.stdout)))
}

const GOOD: &str = "1,0.5,0.2\n0.5,1,0.2\n0.2,0.2,1\n";
const THREE_POINT: &str = "1,0.5,0.2\n0.5,1,0.6\n0.2,0.6,1\n";

const RUN: &str = r#"
seed = 4
[model]
p = 3
[sampler]
algo = "mh"
iterations = 1500
burn_in = 500
thin = 5
[io]
data = "data.csv"
output = "post.jsonl"
"#;

fn setup() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("m.csv"), GOOD).unwrap();
    fs::write(dir.path().join("bad.csv"), THREE_POINT).unwrap();
    fs::write(dir.path().join("t.nwk"), "(0:0.2,(1:0.5,2:0.5):0.3,3:0.8);\n").unwrap();
    dir
}

#[test]
fn validate_exit_codes() {
    let dir = setup();
    let ok = ultratree(dir.path(), &["validate", "m.csv"]);
    assert_eq!(code(&ok), 0);
    assert_eq!(json(&ok)["valid"], true);

    let bad = ultratree(dir.path(), &["validate", "bad.csv"]);
    assert_eq!(code(&bad), 1);
    let v = json(&bad);
    assert_eq!(v["valid"], false);
    assert_eq!(v["violations"][0]["clause"], "three_point");

    fs::write(dir.path().join("ragged.csv"), "1,0\n").unwrap();
    assert_eq!(code(&ultratree(dir.path(), &["validate", "ragged.csv"])), 2);
    assert_eq!(code(&ultratree(dir.path(), &["validate", "missing.csv"])), 2);
    assert_eq!(code(&ultratree(dir.path(), &["validate"])), 2);
}

#[test]
fn convert_round_trips() {
    let dir = setup();
    let o = ultratree(dir.path(), &["convert", "m.csv", "--to", "newick"]);
    assert_eq!(code(&o), 0);
    assert_eq!(String::from_utf8(o.stdout).unwrap().trim(), "(0:0.2,(1:0.5,2:0.5):0.3,3:0.8);");

    let o = ultratree(dir.path(), &["convert", "t.nwk", "--to", "matrix", "-o", "back.csv"]);
    assert_eq!(code(&o), 0);
    assert_eq!(fs::read_to_string(dir.path().join("back.csv")).unwrap(), "1.0,0.5,0.2\n0.5,1.0,0.2\n0.2,0.2,1.0\n");

    fs::write(dir.path().join("star.csv"), "2,1,1\n1,2,1\n1,1,2\n").unwrap();
    let o = ultratree(dir.path(), &["convert", "star.csv", "--to", "newick"]);
    assert_eq!(String::from_utf8(o.stdout).unwrap().trim(), "(0:1.0,1:1.0,2:1.0,3:1.0);");

    let o = ultratree(dir.path(), &["convert", "bad.csv", "--to", "newick"]);
    assert_eq!(code(&o), 1);
    assert_eq!(json(&o)["violations"][0]["clause"], "three_point");
}

#[test]
fn distances() {
    let dir = setup();
    let o = ultratree(dir.path(), &["distance", "m.csv", "t.nwk"]);
    assert_eq!(code(&o), 0);
    let v = json(&o);
    assert_eq!(v["d_bhv"], 0.0);
    assert_eq!(v["d_tree"], 0.0);

    // Trees with incompatible splits meet at the cone point.
    fs::write(dir.path().join("a.nwk"), "(0:1,(1:1,2:1):0.3,3:1.3);").unwrap();
    fs::write(dir.path().join("b.nwk"), "(0:1,(1:1.5,3:1.5):0.5,2:2);").unwrap();
    let v = json(&ultratree(dir.path(), &["distance", "a.nwk", "b.nwk"]));
    assert!((v["d_bhv"].as_f64().unwrap() - 0.8).abs() < 1e-12, "{v}");
    let sum = v["d_tree"].as_f64().unwrap();
    let l2 = json(&ultratree(dir.path(), &["distance", "a.nwk", "b.nwk", "--metric", "l2"]))["d_tree"]
        .as_f64()
        .unwrap();
    assert!(l2 <= sum && l2 >= 0.8);

    fs::write(dir.path().join("four.nwk"), "(0:1,1:1,2:1,3:1,4:1);").unwrap();
    assert_eq!(code(&ultratree(dir.path(), &["distance", "a.nwk", "four.nwk"])), 1);
}

#[test]
fn sampling_is_reproducible_and_summaries_score_truth() {
    let dir = setup();
    let o = ultratree(dir.path(), &["generate", "--truth", "t.nwk", "--n", "60", "--seed", "3", "-o", "data.csv"]);
    assert_eq!(code(&o), 0);
    fs::write(dir.path().join("run.toml"), RUN).unwrap();

    let first = ultratree(dir.path(), &["sample", "run.toml"]);
    assert_eq!(code(&first), 0, "{}", String::from_utf8_lossy(&first.stderr));
    let a = fs::read(dir.path().join("post.jsonl")).unwrap();
    let ta = fs::read(dir.path().join("post.trace.csv")).unwrap();
    assert_eq!(json(&first)[0]["records"], 200);

    let second = ultratree(dir.path(), &["--threads", "1", "sample", "run.toml"]);
    assert_eq!(code(&second), 0);
    assert_eq!(a, fs::read(dir.path().join("post.jsonl")).unwrap());
    assert_eq!(ta, fs::read(dir.path().join("post.trace.csv")).unwrap());

    let two = ultratree(dir.path(), &["sample", "run.toml", "--chains", "2", "-o", "two.jsonl"]);
    assert_eq!(code(&two), 0);
    for k in 0..2 {
        assert!(dir.path().join(format!("two.chain{k}.jsonl")).exists());
        assert!(dir.path().join(format!("two.chain{k}.trace.csv")).exists());
    }
    assert_ne!(
        fs::read(dir.path().join("two.chain0.trace.csv")).unwrap(),
        fs::read(dir.path().join("two.chain1.trace.csv")).unwrap()
    );

    let plain = json(&ultratree(dir.path(), &["summarize", "post.jsonl"]));
    assert!(plain.get("coverage").is_none());
    let o = ultratree(dir.path(), &["summarize", "post.jsonl", "--truth", "t.nwk", "--splits-csv", "splits.csv"]);
    assert_eq!(code(&o), 0);
    let scored = json(&o);
    assert!(scored["coverage"]["rate"].as_f64().is_some());
    assert_eq!(scored["recovery"][0]["split"], serde_json::json!([1, 2]));
    let csv = fs::read_to_string(dir.path().join("splits.csv")).unwrap();
    assert!(csv.starts_with("split,frequency\n"));

    let m = json(&ultratree(dir.path(), &["mean", "post.jsonl", "--passes", "2"]));
    assert!(m["newick"].as_str().unwrap().starts_with('('));
    assert_eq!(m["matrix"].as_array().unwrap().len(), 3);
}

#[test]
fn init_trees_set_the_chain_count() {
    let dir = setup();
    fs::write(dir.path().join("run.toml"), RUN.replace("data = \"data.csv\"\n", "")).unwrap();
    fs::write(dir.path().join("b.nwk"), "(0:0.1,(1:0.4,3:0.4):0.2,2:0.6);").unwrap();
    let o = ultratree(dir.path(), &["sample", "run.toml", "--inits", "t.nwk,b.nwk"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(json(&o).as_array().unwrap().len(), 2);
    let o = ultratree(dir.path(), &["sample", "run.toml", "--inits", "t.nwk,b.nwk", "--chains", "3"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn bad_configs_exit_with_two() {
    let dir = setup();
    fs::write(dir.path().join("unknown.toml"), "seed = 1\nbogus = 2\n[model]\np = 3\n").unwrap();
    fs::write(dir.path().join("misplaced.toml"), "[model]\np = 3\n[sampler]\nalgo = \"mh\"\nepsilon = 0.1\n").unwrap();
    fs::write(dir.path().join("nodata.toml"), "[model]\np = 3\n[io]\ndata = \"absent.csv\"\n").unwrap();
    for f in ["unknown.toml", "misplaced.toml", "nodata.toml", "absent.toml"] {
        let o = ultratree(dir.path(), &["sample", f]);
        assert_eq!(code(&o), 2, "{f}: {}", String::from_utf8_lossy(&o.stderr));
    }
}

#[test]
fn small_simulation_writes_report_and_table() {
    let dir = setup();
    let cfg = "seed = 2\n[model]\np = 4\n[sampler]\niterations = 300\nburn_in = 100\n\
               [scenario]\nsample_multipliers = [3]\nfamilies = [\"normal\"]\nreplicates = 2\nmean_passes = 2\n\
               [io]\nreport = \"rep.json\"\ntable = \"tab.csv\"\n";
    fs::write(dir.path().join("sim.toml"), cfg).unwrap();
    let o = ultratree(dir.path(), &["simulate", "sim.toml"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rep: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("rep.json")).unwrap()).unwrap();
    assert_eq!(rep["scenario"]["p"], 4);
    let table = fs::read_to_string(dir.path().join("tab.csv")).unwrap();
    assert_eq!(table.lines().count(), 2);
}
