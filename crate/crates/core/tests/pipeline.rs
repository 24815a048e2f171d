mod common;

use std::io::{BufRead, Write};
use std::sync::{Arc, OnceLock};

use ademiner::bundle::{ModelBundle, StageModel};
use ademiner::classifier::{train_classifier, ClassifierConfig};
use ademiner::corpus::{doc_to_json, DocClass, Document, EntityLabel, RelationLabel};
use ademiner::ner::{train_ner, NerConfig};
use ademiner::pipeline::{run_batch, run_pipeline, run_stream, ExecOptions, Pipeline, PipelineConfigs, PipelineOutput};
use ademiner::relation::{relation_examples, train_re, ReConfig};
use ademiner::{synth, Error};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const DIM: usize = 50;

fn trained() -> &'static Pipeline {
    static PIPELINE: OnceLock<Pipeline> = OnceLock::new();
    PIPELINE.get_or_init(|| {
        let store = Arc::new(synth::embeddings(DIM, 42).unwrap());
        let docs = synth::pipeline_corpus(120, 1);
        let (classifier, _) = train_classifier(&docs, &[], &store, &ClassifierConfig::default()).unwrap();
        let (ner, _) = train_ner(&docs, &[], &store, &NerConfig::default()).unwrap();
        let (re, _) = train_re(&relation_examples(&docs).unwrap(), &[], &store, &ReConfig::default()).unwrap();
        Pipeline::new(store, Some(classifier), ner, re).unwrap()
    })
}

fn summary(
    out: &PipelineOutput,
) -> (
    Option<DocClass>,
    Vec<(String, EntityLabel)>,
    Vec<(String, String, RelationLabel)>,
) {
    (
        out.class.as_ref().map(|c| c.label),
        out.entities.iter().map(|e| (e.text.clone(), e.label)).collect(),
        out.relations
            .iter()
            .map(|r| (r.ade.text.clone(), r.drug.text.clone(), r.label))
            .collect(),
    )
}

#[test]
fn first_example_yields_both_reactions_of_insulin() {
    let doc = &synth::example_documents()[0];
    let out = run_pipeline(trained(), doc).unwrap();
    let (class, entities, relations) = summary(&out);
    assert_eq!(class, Some(DocClass::Ade));
    assert_eq!(
        entities,
        vec![
            ("drowsy".to_string(), EntityLabel::Ade),
            ("blurred vision".to_string(), EntityLabel::Ade),
            ("insulin".to_string(), EntityLabel::Drug),
        ]
    );
    assert_eq!(
        relations,
        vec![
            ("drowsy".to_string(), "insulin".to_string(), RelationLabel::Positive),
            (
                "blurred vision".to_string(),
                "insulin".to_string(),
                RelationLabel::Positive
            ),
        ]
    );
    let p = out.class.unwrap().probability;
    assert!((0.5..=1.0).contains(&p));
}

#[test]
fn negative_example_stops_at_the_gate() {
    let doc = &synth::example_documents()[2];
    let out = run_pipeline(trained(), doc).unwrap();
    assert_eq!(out.class.as_ref().unwrap().label, DocClass::Neg);
    assert!(out.entities.is_empty());
    assert!(out.relations.is_empty());
}

#[test]
fn reaction_without_drug_has_no_relations() {
    let doc = Document::from_text("no-drug", "I feel a bit drowsy & have a little blurred vision .");
    let out = run_pipeline(trained(), &doc).unwrap();
    assert_eq!(out.class.as_ref().unwrap().label, DocClass::Ade);
    assert!(out
        .entities
        .iter()
        .any(|e| e.text == "drowsy" && e.label == EntityLabel::Ade));
    assert!(out.entities.iter().all(|e| e.label == EntityLabel::Ade));
    assert!(out.relations.is_empty());
}

#[test]
fn without_a_classifier_every_document_is_tagged() {
    let p = trained();
    let bare = Pipeline::new(Arc::new(p.store().clone()), None, p.ner().clone(), p.re().clone()).unwrap();
    let out = run_pipeline(&bare, &synth::example_documents()[0]).unwrap();
    assert!(out.class.is_none());
    assert_eq!(out.entities.len(), 3);
}

#[test]
fn entity_offsets_point_into_the_text() {
    let doc = Document::from_text(
        "x",
        "  I feel a bit drowsy & have a little blurred vision after taking insulin.",
    );
    let out = run_pipeline(trained(), &doc).unwrap();
    let chars: Vec<char> = doc.text.chars().collect();
    for e in &out.entities {
        assert_eq!(chars[e.char_start..e.char_end].iter().collect::<String>(), e.text);
    }
    for r in &out.relations {
        assert!(out.entities.contains(&r.ade) && out.entities.contains(&r.drug));
    }
}

fn corpus_lines(n: usize, seed: u64) -> String {
    let mut s = String::new();
    for d in synth::pipeline_corpus(n, seed) {
        let mut v = doc_to_json(&d);
        v.as_object_mut().unwrap().remove("spans");
        s.push_str(&serde_json::to_string(&v).unwrap());
        s.push('\n');
    }
    s
}

fn run(input: &str, workers: usize) -> (Vec<u8>, ademiner::pipeline::RunSummary) {
    let mut out = Vec::new();
    let summary = run_batch(trained(), input.as_bytes(), &mut out, ExecOptions::batch(workers)).unwrap();
    (out, summary)
}

#[test]
fn batch_output_is_independent_of_worker_count() {
    let input = corpus_lines(300, 5);
    let (reference, summary) = run(&input, 1);
    assert_eq!(summary.records, 300);
    assert_eq!(summary.errors, 0);
    for workers in [2, 4, 8] {
        assert_eq!(run(&input, workers).0, reference, "workers = {workers}");
    }
    let ids: Vec<String> = reference
        .lines()
        .map(|l| serde_json::from_str::<PipelineOutput>(&l.unwrap()).unwrap().doc_id)
        .collect();
    let expected: Vec<String> = (0..300).map(|i| format!("pipe-{i}")).collect();
    assert_eq!(ids, expected);
}

#[test]
fn malformed_lines_become_error_records() {
    let mut input = corpus_lines(20, 6);
    let lines: Vec<&str> = input.lines().collect();
    let mut mixed = String::new();
    for (i, l) in lines.iter().enumerate() {
        if i == 7 {
            mixed.push_str("{\"text\": 42}\n");
        }
        mixed.push_str(l);
        mixed.push('\n');
    }
    input = mixed;
    let (out, summary) = run(&input, 3);
    assert_eq!(summary.records, 21);
    assert_eq!(summary.errors, 1);
    let records: Vec<serde_json::Value> = out
        .lines()
        .map(|l| serde_json::from_str(&l.unwrap()).unwrap())
        .collect();
    assert_eq!(records.len(), 21);
    let err = &records[7];
    assert_eq!(err["line"], 8);
    assert_eq!(err["raw"], "{\"text\": 42}");
    assert!(err["error"].as_str().unwrap().contains("line 8"));
    assert_eq!(records[8]["doc_id"], "pipe-7");
}

#[test]
fn stream_preserves_order_and_handles_empty_input() {
    let input = corpus_lines(10, 8);
    let mut out = Vec::new();
    let s = run_stream(trained(), input.as_bytes(), &mut out, 4, true).unwrap();
    assert_eq!(s.records, 10);
    let ids: Vec<String> = out
        .lines()
        .map(|l| serde_json::from_str::<PipelineOutput>(&l.unwrap()).unwrap().doc_id)
        .collect();
    assert_eq!(ids, (0..10).map(|i| format!("pipe-{i}")).collect::<Vec<_>>());

    let mut out = Vec::new();
    let s = run_stream(trained(), &b""[..], &mut out, 2, false).unwrap();
    assert_eq!((s.records, s.errors), (0, 0));
    assert!(out.is_empty());
}

/// Counts flushes so the micro-batch policy is observable.
struct FlushCounter {
    data: Vec<u8>,
    flushes: usize,
}

impl Write for FlushCounter {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        self.data.extend_from_slice(buf);
        Ok(buf.len())
    }

    fn flush(&mut self) -> std::io::Result<()> {
        self.flushes += 1;
        Ok(())
    }
}

#[test]
fn flush_policies() {
    let input = corpus_lines(130, 9);
    let mut each = FlushCounter {
        data: Vec::new(),
        flushes: 0,
    };
    run_stream(trained(), input.as_bytes(), &mut each, 2, true).unwrap();
    assert_eq!(each.flushes, 131);
    let mut micro = FlushCounter {
        data: Vec::new(),
        flushes: 0,
    };
    run_stream(trained(), input.as_bytes(), &mut micro, 2, false).unwrap();
    assert_eq!(micro.flushes, 3);
    assert_eq!(each.data, micro.data);
}

#[test]
fn blank_lines_are_skipped_and_zero_workers_rejected() {
    let input = format!("\n{}   \n", corpus_lines(2, 10));
    let (out, s) = run(&input, 2);
    assert_eq!(s.records, 2);
    assert_eq!(out.lines().count(), 2);
    let err = run_batch(trained(), &b""[..], &mut Vec::new(), ExecOptions::batch(0)).unwrap_err();
    assert!(matches!(err, Error::Config(_)));
}

fn fuzz_doc(rng: &mut ChaCha8Rng, vocab: &[String], i: usize) -> String {
    let n = rng.gen_range(0..25);
    let words: Vec<String> = (0..n)
        .map(|_| match rng.gen_range(0..10) {
            0 => (0..rng.gen_range(1..6))
                .map(|_| rng.gen_range('!'..'\u{2FF}'))
                .collect(),
            _ => vocab.choose(rng).unwrap().clone(),
        })
        .collect();
    let mut doc = Document::from_text(format!("fuzz-{i}"), words.join(" "));
    if rng.gen_bool(0.3) {
        doc.dep_heads = Some(common::random_forest(rng, doc.len()));
    }
    serde_json::to_string(&doc_to_json(&doc)).unwrap()
}

#[test]
fn gate_holds_on_fuzzed_documents() {
    let vocab = synth::vocabulary();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let input: String = (0..1000).map(|i| fuzz_doc(&mut rng, &vocab, i) + "\n").collect();
    let (out, s) = run(&input, 2);
    assert_eq!(s.records, 1000);
    let mut classes = [0usize; 2];
    for line in out.lines() {
        let line = line.unwrap();
        let o: PipelineOutput = serde_json::from_str(&line).unwrap_or_else(|_| panic!("{line}"));
        let c = o.class.as_ref().unwrap().label;
        classes[c.index()] += 1;
        if c == DocClass::Neg {
            assert!(o.entities.is_empty() && o.relations.is_empty(), "{o:?}");
        }
    }
    assert!(classes[0] > 0 && classes[1] > 0, "{classes:?}");
}

#[test]
fn saved_pipeline_reloads_with_identical_output() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dir.path().join("pipeline.json");
    let p = trained();
    p.save(&manifest, &PipelineConfigs::default()).unwrap();
    let store = Arc::new(p.store().clone());
    let loaded = Pipeline::load(&manifest, store).unwrap();
    let input = corpus_lines(40, 12);
    let (a, _) = run(&input, 2);
    let mut b = Vec::new();
    run_batch(&loaded, input.as_bytes(), &mut b, ExecOptions::batch(2)).unwrap();
    assert_eq!(a, b);

    let small = Arc::new(synth::embeddings(DIM / 2, 42).unwrap());
    assert!(matches!(Pipeline::load(&manifest, small), Err(Error::Config(_))));
}

#[test]
fn stages_must_share_the_store_dimension() {
    let p = trained();
    let other = synth::embeddings(DIM + 1, 1).unwrap();
    let err = Pipeline::new(
        Arc::new(other),
        p.classifier().cloned(),
        p.ner().clone(),
        p.re().clone(),
    )
    .unwrap_err();
    assert!(matches!(err, Error::Config(_)), "{err}");

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ner.bundle");
    ModelBundle::new(&StageModel::Ner(p.ner().clone()), &serde_json::Value::Null)
        .unwrap()
        .save(&path)
        .unwrap();
    let err = Pipeline::from_bundle_paths(None, &path, &path, Arc::new(p.store().clone())).unwrap_err();
    assert!(matches!(err, Error::Config(_)), "{err}");
}

#[test]
fn four_workers_are_not_slower_than_one() {
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
    if cores < 4 {
        eprintln!("skipped: {cores} logical cores");
        return;
    }
    let input = corpus_lines(800, 13);
    let time = |workers| {
        (0..3)
            .map(|_| {
                let t = std::time::Instant::now();
                run(&input, workers);
                t.elapsed()
            })
            .min()
            .unwrap()
    };
    let (one, four) = (time(1), time(4));
    assert!(four <= one, "1 worker {one:?}, 4 workers {four:?}");
}
