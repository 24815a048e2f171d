use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};
use std::sync::OnceLock;

use serde_json::Value;

fn run_in(dir: &Path, args: &[&str], stdin: Option<&str>) -> Output {
    let mut child = Command::new(env!("CARGO_BIN_EXE_ademiner"))
        .args(args)
        .current_dir(dir)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut pipe = child.stdin.take().unwrap();
    pipe.write_all(stdin.unwrap_or("").as_bytes()).unwrap();
    drop(pipe);
    child.wait_with_output().unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = run_in(dir, args, None);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{args:?}\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn json_file(path: impl AsRef<Path>) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

/// Synthetic corpora, vectors and three trained bundles composed into a
/// pipeline, built once for all tests.
fn workspace() -> &'static Path {
    static DIR: OnceLock<PathBuf> = OnceLock::new();
    DIR.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap().keep();
        std::fs::write(
            dir.join("fast.conf"),
            "# short runs\nepochs = 4\nlearning_rate = 0.01\n",
        )
        .unwrap();
        let d = dir.as_path();
        ok(
            d,
            &[
                "synth",
                "classify",
                "--n",
                "40",
                "--out",
                "cls.jsonl",
                "--vectors",
                "vec.txt",
                "--dim",
                "16",
            ],
        );
        ok(d, &["synth", "ner", "--n", "20", "--out", "ner.jsonl"]);
        ok(d, &["synth", "re", "--n", "30", "--out", "re.jsonl"]);
        ok(d, &["synth", "examples", "--out", "examples.jsonl"]);
        let common = ["--embeddings", "vec.txt", "--config", "fast.conf"];
        for (stage, data) in [("classifier", "cls.jsonl"), ("ner", "ner.jsonl"), ("re", "re.jsonl")] {
            let mut args = vec!["train", stage, "--data", data];
            args.extend(common);
            ok(d, &args);
        }
        ok(
            d,
            &[
                "compose",
                "--classifier",
                "classifier.bundle",
                "--ner",
                "ner.bundle",
                "--re",
                "re.bundle",
                "--out",
                "pipeline.json",
            ],
        );
        dir
    })
}

#[test]
fn training_writes_bundles_and_metrics() {
    let d = workspace();
    for stage in ["classifier", "ner", "re"] {
        assert!(d.join(format!("{stage}.bundle")).exists());
        let m = json_file(d.join(format!("{stage}.metrics.json")));
        assert_eq!(m["stage"], stage);
        assert_eq!(m["config"]["train"]["epochs"], 4);
        assert_eq!(m["report"]["epochs"].as_array().unwrap().len(), 4);
    }
    let manifest = json_file(d.join("pipeline.json"));
    assert_eq!(manifest["ner"], "ner.bundle");
    assert_eq!(manifest["embedding_dim"], 16);
}

#[test]
fn predict_batch_and_stream_agree() {
    let d = workspace();
    let batch = ok(
        d,
        &[
            "predict",
            "--pipeline",
            "pipeline.json",
            "--embeddings",
            "vec.txt",
            "--input",
            "examples.jsonl",
            "--workers",
            "2",
        ],
    );
    let lines: Vec<Value> = String::from_utf8(batch.stdout.clone())
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 3);
    for (i, l) in lines.iter().enumerate() {
        assert_eq!(l["doc_id"], format!("example-{}", i + 1));
        assert!(l["entities"].is_array() && l["relations"].is_array());
        if l["class"]["label"] == "NEG" {
            assert!(l["entities"].as_array().unwrap().is_empty());
        }
    }
    let input = std::fs::read_to_string(d.join("examples.jsonl")).unwrap();
    let stream = run_in(
        d,
        &[
            "predict",
            "--ner",
            "ner.bundle",
            "--re",
            "re.bundle",
            "--classifier",
            "classifier.bundle",
            "--embeddings",
            "vec.txt",
            "--stream",
            "--flush-each",
        ],
        Some(&input),
    );
    assert_eq!(stream.status.code(), Some(0));
    assert_eq!(stream.stdout, batch.stdout);

    let empty = run_in(
        d,
        &[
            "predict",
            "--pipeline",
            "pipeline.json",
            "--embeddings",
            "vec.txt",
            "--stream",
        ],
        Some(""),
    );
    assert_eq!(empty.status.code(), Some(0));
    assert!(empty.stdout.is_empty());
}

#[test]
fn malformed_input_yields_an_error_record_and_exit_one() {
    let d = workspace();
    let input = format!(
        "{}not json\n",
        std::fs::read_to_string(d.join("examples.jsonl")).unwrap()
    );
    let out = run_in(
        d,
        &["predict", "--pipeline", "pipeline.json", "--embeddings", "vec.txt"],
        Some(&input),
    );
    assert_eq!(out.status.code(), Some(1));
    let text = String::from_utf8(out.stdout).unwrap();
    let last: Value = serde_json::from_str(text.lines().last().unwrap()).unwrap();
    assert_eq!(text.lines().count(), 4);
    assert_eq!(last["line"], 4);
    assert_eq!(last["raw"], "not json");
    assert!(last["error"].is_string());
}

#[test]
fn eval_reports_requested_modes_with_config() {
    let d = workspace();
    ok(
        d,
        &[
            "eval",
            "ner",
            "--data",
            "ner.jsonl",
            "--bundle",
            "ner.bundle",
            "--embeddings",
            "vec.txt",
            "--mode",
            "strict,relax",
            "--report",
            "ner-eval.json",
        ],
    );
    let r = json_file(d.join("ner-eval.json"));
    assert!(r["strict"]["micro"]["f1"].is_number());
    assert!(r["relax"]["micro"]["f1"].is_number());
    assert!(r.get("overlap_any").is_none());
    assert_eq!(r["config"]["config"]["train"]["epochs"], 4);

    let out = ok(
        d,
        &[
            "eval",
            "ner",
            "--data",
            "ner.jsonl",
            "--bundle",
            "ner.bundle",
            "--embeddings",
            "vec.txt",
            "--mode",
            "overlap-any",
        ],
    );
    let r: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(r["overlap_any"]["micro"]["f1"].is_number());
    assert!(r.get("strict").is_none());

    let out = ok(
        d,
        &[
            "eval",
            "classifier",
            "--data",
            "cls.jsonl",
            "--bundle",
            "classifier.bundle",
            "--embeddings",
            "vec.txt",
        ],
    );
    let r: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(r["classification"]["accuracy"].is_number());
}

#[test]
fn cross_validation_report_and_csv() {
    let d = workspace();
    ok(
        d,
        &[
            "eval",
            "classifier",
            "--data",
            "cls.jsonl",
            "--cv",
            "2",
            "--embeddings",
            "vec.txt",
            "--config",
            "fast.conf",
            "--report",
            "cv.json",
            "--csv",
            "cv.csv",
            "--workers",
            "2",
        ],
    );
    let r = json_file(d.join("cv.json"));
    assert_eq!(r["k"], 2);
    assert_eq!(r["folds"].as_array().unwrap().len(), 2);
    assert_eq!(r["config"]["task"], "classify");
    let csv = std::fs::read_to_string(d.join("cv.csv")).unwrap();
    assert!(csv.starts_with("block,average,fold,precision,recall,f1\n"));
    assert!(csv.contains(",mean,") && csv.contains(",stdev,"));
}

#[test]
fn benchmark_and_stats() {
    let d = workspace();
    let out = ok(
        d,
        &[
            "benchmark",
            "classifier",
            "--data",
            "cls.jsonl",
            "--embeddings",
            "vec.txt",
            "--config",
            "fast.conf",
            "--report",
            "bench.json",
        ],
    );
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("stage"));
    assert!(text.contains("ratio to linear"));
    let r = json_file(d.join("bench.json"));
    assert!(r["timing"]["train_seconds"].is_number());
    assert!(r["timing"]["hardware"].is_string());
    assert_eq!(r["linearity"]["factor"], 4);

    let out = ok(d, &["stats", "--data", "ner.jsonl"]);
    let s: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(s["n_sentences"], 20);
    assert_eq!(s["entities"]["Drug"], 20);
}

#[test]
fn usage_errors_exit_two() {
    let d = workspace();
    for args in [
        vec![],
        vec!["train"],
        vec!["predict", "--pipeline", "pipeline.json", "--ner", "ner.bundle"],
        vec!["predict", "--ner", "ner.bundle"],
        vec!["eval", "ner", "--data", "ner.jsonl"],
        vec![
            "eval",
            "classifier",
            "--data",
            "cls.jsonl",
            "--bundle",
            "classifier.bundle",
            "--mode",
            "strict",
        ],
        vec![
            "eval",
            "ner",
            "--data",
            "ner.jsonl",
            "--bundle",
            "ner.bundle",
            "--mode",
            "fuzzy",
            "--embeddings",
            "vec.txt",
        ],
        vec!["train", "re", "--conll", "x.conll", "--embeddings", "vec.txt"],
        vec![
            "predict",
            "--pipeline",
            "pipeline.json",
            "--workers",
            "0",
            "--embeddings",
            "vec.txt",
        ],
        vec!["train", "ner", "--data", "ner.jsonl"],
    ] {
        let out = run_in(d, &args, None);
        assert_eq!(
            out.status.code(),
            Some(2),
            "{args:?}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
}

#[test]
fn runtime_errors_exit_one() {
    let d = workspace();
    for args in [
        vec!["train", "ner", "--data", "missing.jsonl", "--embeddings", "vec.txt"],
        vec![
            "eval",
            "ner",
            "--data",
            "ner.jsonl",
            "--bundle",
            "re.bundle",
            "--embeddings",
            "vec.txt",
        ],
        vec![
            "compose",
            "--ner",
            "re.bundle",
            "--re",
            "re.bundle",
            "--out",
            "bad.json",
        ],
        vec!["stats", "--data", "vec.txt"],
    ] {
        let out = run_in(d, &args, None);
        assert_eq!(
            out.status.code(),
            Some(1),
            "{args:?}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
}

#[test]
fn unknown_config_keys_are_rejected() {
    let d = workspace();
    std::fs::write(d.join("bad.conf"), "epochs = 2\nmomentum = 0.9\n").unwrap();
    let out = run_in(
        d,
        &[
            "train",
            "classifier",
            "--data",
            "cls.jsonl",
            "--embeddings",
            "vec.txt",
            "--config",
            "bad.conf",
            "--out",
            "x.bundle",
        ],
        None,
    );
    assert_ne!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stderr).contains("momentum"));
}
