use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const EXAMPLE_CSV: &str = "a1,a2,a3,a4,label\n\
0,0,0,0,pos\n1,1,1,1,pos\n1,0,1,0,pos\n1,1,0,0,pos\n\
0,0,1,0,neg\n0,1,0,0,neg\n1,1,1,0,neg\n1,0,0,0,neg\n";

fn plkb(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_plkb")).args(args).output().expect("binary runs")
}

fn ok_json(args: &[&str]) -> Value {
    let out = plkb(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn fails_with_one_line(args: &[&str]) -> String {
    let out = plkb(args);
    assert!(!out.status.success(), "{args:?} should fail");
    let err = String::from_utf8(out.stderr).unwrap();
    assert_eq!(err.trim_end().lines().count(), 1, "diagnostic: {err:?}");
    err
}

fn setup() -> TempDir {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("ex.csv"), EXAMPLE_CSV).unwrap();
    dir
}

fn p(dir: &TempDir, name: &str) -> String {
    dir.path().join(name).to_str().unwrap().to_string()
}

#[test]
fn train_tree_then_classify() {
    let dir = setup();
    let v = ok_json(&["train", "--method", "tree", "--input", &p(&dir, "ex.csv"), "--out", &p(&dir, "t.plkb"), "--tree-dump", &p(&dir, "t.txt")]);
    assert_eq!(v["clauses"], 8);
    assert!(fs::read_to_string(dir.path().join("t.txt")).unwrap().starts_with("root [4/8]"));

    let v = ok_json(&["classify", "--kb", &p(&dir, "t.plkb"), "--domains", &p(&dir, "ex.csv"), "--query", "a1=0,a2=1,a3=0,a4=1", "--lp-dump", &p(&dir, "q.lp")]);
    for key in ["label", "p_lower", "p_upper", "p_avg", "objective_min"] {
        assert!(!v[key].is_null(), "missing {key}");
    }
    let lo = v["p_lower"].as_f64().unwrap();
    let hi = v["p_upper"].as_f64().unwrap();
    assert!(lo <= hi);
    assert!(fs::read_to_string(dir.path().join("q.lp")).unwrap().contains("Subject To"));
}

#[test]
fn direct_relevant_explanation() {
    let dir = setup();
    let v = ok_json(&["train", "--method", "direct", "--input", &p(&dir, "ex.csv"), "--out", &p(&dir, "d.plkb")]);
    // distinct non-empty value subsets observed in the eight rows
    assert_eq!(v["clauses"], 59);

    let v = ok_json(&["explain", "--kb", &p(&dir, "d.plkb"), "--domains", &p(&dir, "ex.csv"), "--query", "a1=0,a2=1,a3=0,a4=1", "-k", "1", "--relevant"]);
    assert_eq!(v["classification"]["label"], false);
    assert_eq!(v["explanation"], "a1=0");
    assert_eq!(v["masked"], "0---");
    assert_eq!(v["direction"], "min");
    let scores: Vec<f64> = v["scores"].as_array().unwrap().iter().map(|s| s["p_avg"].as_f64().unwrap()).collect();
    for (got, want) in scores.iter().zip([1.0 / 3.0, 0.5, 0.5, 1.0]) {
        assert!((got - want).abs() < 1e-3, "{scores:?}");
    }
}

#[test]
fn synth_eval_and_knowledge() {
    let dir = setup();
    let out = p(&dir, "syn");
    let v = ok_json(&["synth", "--length", "6", "--alphabet", "3", "--match", "3", "--n", "120", "--rng-seed", "4", "--out", &out]);
    assert_eq!(v["n"], 120);
    assert_eq!(v["positives"], 60);
    let data = format!("{out}/data.csv");
    let seed = format!("{out}/seed.txt");
    assert!(Path::new(&seed).exists());

    let csv = p(&dir, "runs.csv");
    let a = ok_json(&["eval", "--method", "tree", "--input", &data, "--rng-seed", "1", "--runs", "2", "--out", &csv]);
    let b = ok_json(&["eval", "--method", "tree", "--input", &data, "--rng-seed", "1", "--runs", "2"]);
    assert_eq!(a, b);
    assert_eq!(fs::read_to_string(&csv).unwrap().lines().count(), 3);

    let k = ok_json(&["knowledge-exp", "--method", "tree", "--input", &data, "--seed-file", &seed, "--rng-seed", "1", "--runs", "2"]);
    assert_eq!(k["mean_f1"], a["mean_f1"]);

    let e = ok_json(&["expl-eval", "--method", "direct", "--input", &data, "--seed-file", &seed, "-k", "1", "-k", "2"]);
    assert_eq!(e["results"].as_array().unwrap().len(), 2);
}

#[test]
fn inject_and_bench() {
    let dir = setup();
    fs::write(dir.path().join("base.plkb"), "0.5 pos | !a1=0\n0.2 pos | !a2=1\n").unwrap();
    fs::write(dir.path().join("extra.plkb"), "0.9 pos | !a1=0\n0.4 pos | !a3=1\n").unwrap();
    let v = ok_json(&["inject", "--kb", &p(&dir, "base.plkb"), "--knowledge", &p(&dir, "extra.plkb"), "--out", &p(&dir, "m.plkb")]);
    assert_eq!(v["clauses"], 3);
    assert_eq!(v["overridden"], 1);
    assert!(fs::read_to_string(dir.path().join("m.plkb")).unwrap().contains("0.9"));

    let csv = p(&dir, "bench.csv");
    for seed in ["0", "1"] {
        let v = ok_json(&["bench-lp", "--vars", "10", "--clauses", "10", "--rng-seed", seed, "--csv", &csv]);
        assert!(v["seconds"].as_f64().unwrap() > 0.0);
    }
    assert_eq!(fs::read_to_string(&csv).unwrap().lines().count(), 3);
}

#[test]
fn errors_are_single_line() {
    let dir = setup();
    fs::write(dir.path().join("bad.plkb"), "1.5 pos | !a1=0\n").unwrap();
    fs::write(dir.path().join("ragged.csv"), "a1,label\n0\n").unwrap();
    fails_with_one_line(&["classify", "--kb", &p(&dir, "missing.plkb"), "--query", "a1=0"]);
    fails_with_one_line(&["classify", "--kb", &p(&dir, "bad.plkb"), "--query", "a1=0"]);
    fails_with_one_line(&["train", "--input", &p(&dir, "ragged.csv"), "--out", &p(&dir, "x.plkb")]);
    fails_with_one_line(&["train", "--input", &p(&dir, "ex.csv"), "--label-col", "class", "--out", &p(&dir, "x.plkb")]);
    fs::write(dir.path().join("ok.plkb"), "0.5 pos | !a1=0\n").unwrap();
    fails_with_one_line(&["explain", "--kb", &p(&dir, "ok.plkb"), "--query", "a1=0", "-k", "2"]);
    fails_with_one_line(&["eval", "--input", &p(&dir, "ex.csv"), "--runs", "0"]);
    fails_with_one_line(&["synth", "--length", "4", "--alphabet", "12", "--match", "2", "--n", "10", "--out", &p(&dir, "s")]);
}
