use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use fex_cli::checkpoint::{Checkpoint, ModelKind};
use fex_core::{Activation, MlpNetwork};
use serde_json::Value;

fn fex(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fex"))
        .current_dir(dir)
        .args(args)
        .env_remove("FEX_THREADS")
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = fex(dir, args);
    assert!(
        out.status.success(),
        "fex {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn json_file(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn floats(v: &Value) -> Vec<f64> {
    v.as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect()
}

fn save(dir: &Path, name: &str, kind: ModelKind, net: &MlpNetwork, n_classes: usize) {
    Checkpoint::new(kind, net, n_classes, Value::Null, 0).save(&dir.join(name)).unwrap();
}

#[test]
fn oracle_on_constant_predictor() {
    let dir = tempfile::tempdir().unwrap();
    let net = MlpNetwork::zeros(&[2, 3, 1], Activation::Softmax).unwrap();
    save(dir.path(), "p.ckpt", ModelKind::Predictor, &net, 1);
    fs::write(dir.path().join("sample.json"), r#"{"features": [0.3, 0.8]}"#).unwrap();
    ok(dir.path(), &["oracle", "--predictor", "p.ckpt", "--input", "sample.json", "--class", "0", "--out", "o.json"]);
    let report = &json_file(&dir.path().join("o.json"))["reports"][0];
    assert_eq!(floats(&report["phi"]), vec![1.5, 1.5]);
    assert_eq!(report["normalization"].as_f64(), Some(2.5));
    assert_eq!(report["n_masks_evaluated"].as_u64(), Some(3));
}

#[test]
fn oracle_through_bridge() {
    let dir = tempfile::tempdir().unwrap();
    let script = r#"
import json, sys
print(json.dumps({"fex_bridge": 1, "n_features": 2, "n_classes": 1}), flush=True)
for line in sys.stdin:
    req = json.loads(line)
    print(json.dumps({"id": req["id"], "probs": [1.0]}), flush=True)
"#;
    fs::write(dir.path().join("model.py"), script).unwrap();
    fs::write(dir.path().join("sample.json"), "[0.3, 0.8]").unwrap();
    let text = ok(dir.path(), &["oracle", "--bridge", "python3 model.py", "--input", "sample.json", "--class", "0"]);
    let doc: Value = serde_json::from_str(&text).unwrap();
    assert_eq!(floats(&doc["reports"][0]["phi"]), vec![1.5, 1.5]);
}

#[test]
fn zero_weight_explainer_gives_one_half() {
    let dir = tempfile::tempdir().unwrap();
    let net = MlpNetwork::zeros(&[3, 4, 6], Activation::Sigmoid).unwrap();
    save(dir.path(), "g.ckpt", ModelKind::Explainer, &net, 2);
    fs::write(dir.path().join("x.json"), "[[0.1, 0.2, 0.3], [0.9, 0.8, 0.7]]").unwrap();
    let text = ok(dir.path(), &["explain", "--explainer", "g.ckpt", "--input", "x.json", "--class", "1"]);
    let doc: Value = serde_json::from_str(&text).unwrap();
    let rows = doc["explanations"].as_array().unwrap();
    assert_eq!(rows.len(), 2);
    for row in rows {
        assert_eq!(floats(&row["attribution"]), vec![0.5; 3]);
    }
}

fn pipeline(dir: &Path, threads: &str) {
    let t = ["--seed", "5", "--threads", threads];
    let run = |args: &[&str]| ok(dir, &[args, &t[..]].concat());
    run(&["gen-data", "--task", "planted", "--n-samples", "2100", "--n-features", "10", "--out", "data.csv"]);
    run(&["train-predictor", "--data", "data.csv", "--out", "p.ckpt"]);
    run(&["train-explainer", "--data", "data.csv", "--predictor", "p.ckpt", "--out", "g.ckpt", "--log", "log.ndjson"]);
    run(&[
        "eval", "--data", "data.csv", "--predictor", "p.ckpt", "--explainer", "g.ckpt", "--only-class", "1",
        "--limit", "100", "--out", "eval.json",
    ]);
}

#[test]
fn end_to_end_planted_recovery_and_determinism() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    pipeline(a.path(), "1");
    pipeline(b.path(), "4");

    let report = json_file(&a.path().join("eval.json"));
    let recovery = report["recovery_precision"].as_f64().unwrap();
    assert!(recovery >= 0.9, "recovery {recovery}");
    assert_eq!(report["n_samples"].as_u64(), Some(100));

    for f in ["data.csv", "data.csv.meta.json", "p.ckpt", "g.ckpt", "g.ckpt.value", "log.ndjson", "eval.json"] {
        let (x, y) = (fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap());
        assert!(x == y, "{f} differs between thread counts");
    }
}

#[test]
fn checkpoint_round_trip_through_explain() {
    let dir = tempfile::tempdir().unwrap();
    let net = MlpNetwork::xavier(&[3, 5, 6], Activation::Sigmoid, &mut fex_core::rng::seeded(4)).unwrap();
    save(dir.path(), "g.ckpt", ModelKind::Explainer, &net, 2);
    let x = [0.25, -0.5, 0.75];
    fs::write(dir.path().join("x.json"), serde_json::to_string(&x).unwrap()).unwrap();
    let text = ok(dir.path(), &["explain", "--explainer", "g.ckpt", "--input", "x.json", "--class", "0"]);
    let doc: Value = serde_json::from_str(&text).unwrap();
    let got = floats(&doc["explanations"][0]["attribution"]);
    let g = fex_core::ExplainerModel::from_network(net, 2).unwrap();
    let want = g.explain(&x, 0).unwrap().into_values();
    assert!(got.iter().zip(&want).all(|(a, b)| a.to_bits() == b.to_bits()));
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn errors_are_one_line_with_category() {
    let dir = tempfile::tempdir().unwrap();
    let missing = fex(dir.path(), &["oracle", "--predictor", "nope.ckpt", "--input", "x.json"]);
    assert_eq!(missing.status.code(), Some(1));
    assert!(stderr_of(&missing).starts_with("error: io: "), "{}", stderr_of(&missing));
    assert_eq!(stderr_of(&missing).lines().count(), 1);

    let unknown = fex(dir.path(), &["explain", "--bogus"]);
    assert_eq!(unknown.status.code(), Some(2));
    assert!(stderr_of(&unknown).starts_with("error: usage: "));

    // explainer over 3 features against a 10-feature dataset
    ok(dir.path(), &["gen-data", "--n-samples", "20", "--out", "d.csv"]);
    let net = MlpNetwork::zeros(&[3, 4, 6], Activation::Sigmoid).unwrap();
    save(dir.path(), "g.ckpt", ModelKind::Explainer, &net, 2);
    let mismatch = fex(dir.path(), &["explain", "--explainer", "g.ckpt", "--data", "d.csv", "--class", "0"]);
    assert_eq!(mismatch.status.code(), Some(1));
    assert!(stderr_of(&mismatch).starts_with("error: dimension: "), "{}", stderr_of(&mismatch));

    fs::write(dir.path().join("bad.csv"), "f0,f1,label\n\n").unwrap();
    let parse = fex(dir.path(), &["train-predictor", "--data", "bad.csv", "--out", "p.ckpt"]);
    assert!(stderr_of(&parse).starts_with("error: parse: "), "{}", stderr_of(&parse));
}

#[test]
fn config_file_and_flag_precedence() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["gen-data", "--n-samples", "64", "--n-features", "4", "--out", "d.csv"]);
    ok(dir.path(), &["train-predictor", "--data", "d.csv", "--out", "p.ckpt", "--epochs", "2"]);
    fs::write(
        dir.path().join("cfg.json"),
        r#"{"seed": 9, "explainer": {"epochs": 1, "batch_size": 32, "hidden": [8]}}"#,
    )
    .unwrap();
    let train = |extra: &[&str]| {
        let base = ["train-explainer", "--data", "d.csv", "--predictor", "p.ckpt", "--out", "g.ckpt", "--config", "cfg.json"];
        ok(dir.path(), &[&base[..], extra].concat());
        json_file(&dir.path().join("g.ckpt"))
    };
    let from_file = train(&[]);
    assert_eq!(from_file["config"]["epochs"].as_u64(), Some(1));
    assert_eq!(from_file["seed"].as_u64(), Some(9));
    assert_eq!(from_file["architecture"]["layer_sizes"], serde_json::json!([4, 8, 8]));

    let flagged = train(&["--epochs", "2", "--seed", "3"]);
    assert_eq!(flagged["config"]["epochs"].as_u64(), Some(2));
    assert_eq!(flagged["config"]["batch_size"].as_u64(), Some(32));
    assert_eq!(flagged["seed"].as_u64(), Some(3));

    fs::write(dir.path().join("bad.json"), r#"{"explainer": {"epoch": 1}}"#).unwrap();
    let out = fex(dir.path(), &["train-explainer", "--data", "d.csv", "--predictor", "p.ckpt", "--out", "g.ckpt", "--config", "bad.json"]);
    assert!(stderr_of(&out).starts_with("error: usage: "), "{}", stderr_of(&out));
}

#[test]
fn threads_env_fallback_is_validated() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_fex"))
        .current_dir(dir.path())
        .args(["gen-data", "--n-samples", "5", "--out", "d.csv"])
        .env("FEX_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_of(&out).contains("FEX_THREADS"));

    let out = Command::new(env!("CARGO_BIN_EXE_fex"))
        .current_dir(dir.path())
        .args(["gen-data", "--n-samples", "5", "--out", "d.csv"])
        .env("FEX_THREADS", "2")
        .output()
        .unwrap();
    assert!(out.status.success());
}

#[test]
fn eval_methods_and_curves() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["gen-data", "--n-samples", "600", "--n-features", "6", "--out", "d.csv", "--seed", "2"]);
    ok(dir.path(), &["train-predictor", "--data", "d.csv", "--out", "p.ckpt", "--seed", "2"]);
    let auc = |method: &str| {
        let text = ok(
            dir.path(),
            &["eval", "--data", "d.csv", "--predictor", "p.ckpt", "--method", method, "--limit", "100", "--curves", "c"],
        );
        serde_json::from_str::<Value>(&text).unwrap()["positive_auc"].as_f64().unwrap()
    };
    let (oracle, random) = (auc("oracle"), auc("random"));
    assert!(oracle < random, "oracle {oracle} random {random}");
    let mc = auc("monte-carlo");
    assert!(mc < random, "monte carlo {mc} random {random}");
    let csv = fs::read_to_string(dir.path().join("c.positive.csv")).unwrap();
    assert!(csv.starts_with("fraction,score\n0,"));
    assert_eq!(csv.lines().count(), 1 + 7);
    assert!(dir.path().join("c.negative.csv").exists());

    let out = fex(dir.path(), &["eval", "--data", "d.csv", "--predictor", "p.ckpt"]);
    assert!(stderr_of(&out).starts_with("error: usage: "));
}

#[test]
fn bench_reports_query_counts() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["gen-data", "--n-samples", "50", "--n-features", "5", "--out", "d.csv"]);
    ok(dir.path(), &["train-predictor", "--data", "d.csv", "--out", "p.ckpt", "--epochs", "1"]);
    let net = MlpNetwork::zeros(&[5, 4, 10], Activation::Sigmoid).unwrap();
    save(dir.path(), "g.ckpt", ModelKind::Explainer, &net, 2);
    let text = ok(
        dir.path(),
        &["bench", "--predictor", "p.ckpt", "--explainer", "g.ckpt", "--data", "d.csv", "--n-explanations", "120"],
    );
    let report = &serde_json::from_str::<Value>(&text).unwrap()["report"];
    assert_eq!(report["n_explanations"].as_u64(), Some(120));
    assert_eq!(report["explainer_queries_per_explanation"].as_f64(), Some(0.0));
    assert_eq!(report["mc_queries_per_explanation"].as_f64(), Some(100.0));
}
