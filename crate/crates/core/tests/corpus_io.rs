use std::io::Write;

use ademiner::corpus::{
    corpus_stats, labeled_candidates, parse_jsonl_docs, read_conll, read_jsonl_docs, write_conll, write_jsonl_docs,
    DocClass, EntityLabel, EntitySpan, RelationLabel, TagScheme,
};
use ademiner::{load_vectors, open_vectors, synth, EmbeddingStore, Error, OovPolicy};

const FIXTURE: &str = r#"{"doc_id": "a", "text": "Aspirin gave me hives and a headache.", "label": "ADE", "spans": [[0, 7, "Drug"], [16, 21, "ADE"], [28, 36, "ADE"]], "relations": [{"ade": [16, 21], "drug": [0, 7]}, {"ade": [28, 36], "drug": [0, 7], "label": "Positive"}]}
{"doc_id": "b", "text": "Took ibuprofen and Tylenol, got a rash.", "label": "ADE", "spans": [[5, 14, "Drug"], [19, 26, "Drug"], [34, 38, "ADE"]], "relations": [{"ade": [34, 38], "drug": [5, 14]}]}

{"doc_id": "c", "text": "I feel fine.", "label": "NEG"}
"#;

#[test]
fn fixture_counts_by_hand() {
    let docs = parse_jsonl_docs(FIXTURE.as_bytes()).unwrap();
    assert_eq!(docs.len(), 3);
    let s = corpus_stats(&docs).unwrap();
    assert_eq!(s.n_sentences, 3);
    assert_eq!(s.n_tokens, 8 + 9 + 4);
    assert_eq!(s.entity_count(EntityLabel::Ade), 3);
    assert_eq!(s.entity_count(EntityLabel::Drug), 3);
    assert_eq!(s.tag_count(EntityLabel::Ade), 3);
    assert_eq!((s.n_ade_docs, s.n_neg_docs), (2, 1));
    assert_eq!((s.n_positive_relations, s.n_negative_relations), (3, 1));

    let b = &docs[1];
    assert_eq!(
        b.words().collect::<Vec<_>>(),
        ["Took", "ibuprofen", "and", "Tylenol", ",", "got", "a", "rash", "."]
    );
    let cands = labeled_candidates(b).unwrap();
    let labeled: Vec<_> = cands.iter().map(|c| (c.drug.start, c.label)).collect();
    assert_eq!(labeled, [(1, RelationLabel::Positive), (3, RelationLabel::Negative)]);
    assert_eq!(docs[2].gold_class, Some(DocClass::Neg));
}

#[test]
fn jsonl_file_round_trip() {
    let docs = parse_jsonl_docs(FIXTURE.as_bytes()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("docs.jsonl");
    let mut f = std::fs::File::create(&path).unwrap();
    write_jsonl_docs(&docs, &mut f).unwrap();
    drop(f);
    assert_eq!(read_jsonl_docs(&path).unwrap(), docs);
}

#[test]
fn jsonl_errors_carry_line_numbers() {
    let bad_label = "{\"text\": \"a b\"}\n{\"text\": \"a b\", \"label\": \"maybe\"}\n";
    assert!(matches!(
        parse_jsonl_docs(bad_label.as_bytes()),
        Err(Error::Format { line: 2, .. })
    ));
    let off_boundary = r#"{"doc_id": "z", "text": "insulin hurts", "spans": [[0, 5, "Drug"]]}"#;
    let err = parse_jsonl_docs(off_boundary.as_bytes()).unwrap_err();
    assert!(
        matches!(&err, Error::Alignment { doc_id, .. } if doc_id == "z"),
        "{err}"
    );
    let overlap = r#"{"text": "blurred vision now", "spans": [[0, 14, "ADE"], [8, 14, "ADE"]]}"#;
    let nested = parse_jsonl_docs(overlap.as_bytes()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let err = write_conll(&nested, dir.path().join("x.conll"), TagScheme::Iob).unwrap_err();
    assert!(matches!(err, Error::Overlap(_)), "{err}");
    assert!(matches!(
        read_jsonl_docs("/nonexistent/docs.jsonl"),
        Err(Error::Io { .. })
    ));
}

#[test]
fn conll_file_round_trip_in_both_schemes() {
    let docs = synth::ner_corpus(12);
    let dir = tempfile::tempdir().unwrap();
    for scheme in [TagScheme::Iob, TagScheme::Bioes] {
        let path = dir.path().join("ner.conll");
        write_conll(&docs, &path, scheme).unwrap();
        let back = read_conll(&path, scheme).unwrap();
        assert_eq!(back.repaired_tags, 0);
        assert_eq!(back.docs.len(), docs.len());
        for (a, b) in docs.iter().zip(&back.docs) {
            assert_eq!(a.words().collect::<Vec<_>>(), b.words().collect::<Vec<_>>());
            assert_eq!(a.gold_spans, b.gold_spans);
        }
    }
}

#[test]
fn conll_statistics() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("small.conll");
    std::fs::write(
        &path,
        "-DOCSTART-\tO\n\nAspirin\tB-Drug\ngave\tO\nme\tO\nbad\tB-ADE\nhives\tI-ADE\n\nfine\tO\n\nrash\tI-ADE\n",
    )
    .unwrap();
    let c = read_conll(&path, TagScheme::Iob).unwrap();
    assert_eq!(c.repaired_tags, 1);
    let s = corpus_stats(&c.docs).unwrap();
    assert_eq!((s.n_sentences, s.n_tokens), (3, 7));
    assert_eq!(s.tag_count(EntityLabel::Ade), 3);
    assert_eq!(s.tag_count(EntityLabel::Drug), 1);
    assert_eq!(s.entity_count(EntityLabel::Ade), 2);
    assert_eq!(
        c.docs[2].gold_spans.as_deref().unwrap(),
        &[EntitySpan::new(0, 1, EntityLabel::Ade)]
    );
}

#[test]
fn vectors_from_text_and_cache_agree() {
    let dir = tempfile::tempdir().unwrap();
    let text = dir.path().join("vectors.txt");
    let mut f = std::fs::File::create(&text).unwrap();
    writeln!(f, "3 2").unwrap();
    writeln!(f, "insulin 0.5 -1").unwrap();
    writeln!(f, "drowsy 0.25 2").unwrap();
    writeln!(f, "insulin 9 9").unwrap();
    drop(f);
    let store = load_vectors(&text, Some(2)).unwrap();
    assert_eq!((store.len(), store.dim(), store.duplicates()), (2, 2, 1));
    assert_eq!(store.lookup("insulin"), &[0.5, -1.0]);
    assert_eq!(store.lookup("unseen"), &[0.0, 0.0]);
    assert!(matches!(load_vectors(&text, Some(3)), Err(Error::Dimension { .. })));

    let cache = dir.path().join("vectors.bin");
    store.save_cache(&cache).unwrap();
    assert_eq!(EmbeddingStore::load_cache(&cache).unwrap(), store);
    assert_eq!(open_vectors(&cache).unwrap(), store);
    assert_eq!(open_vectors(&text).unwrap(), store);

    let bytes = std::fs::read(&cache).unwrap();
    std::fs::write(&cache, &bytes[..bytes.len() - 3]).unwrap();
    assert!(EmbeddingStore::load_cache(&cache).is_err());
}

#[test]
fn hashed_oov_vectors_are_stable_and_distinct() {
    let store = synth::embeddings(16, 3)
        .unwrap()
        .with_oov(OovPolicy::hashed(64))
        .unwrap();
    let a = store.lookup("zzxq-not-a-word").to_vec();
    assert_eq!(store.lookup("zzxq-not-a-word"), a.as_slice());
    assert!(a.iter().any(|v| *v != 0.0));
    assert_eq!(
        store.lookup("insulin"),
        synth::embeddings(16, 3).unwrap().lookup("insulin")
    );
}
