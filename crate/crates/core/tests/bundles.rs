use ademiner::bundle::{load_bundle, save_bundle, ModelBundle, StageKind, StageModel};
use ademiner::classifier::{train_classifier, ClassifierConfig};
use ademiner::corpus::{labeled_candidates, Document};
use ademiner::ner::{train_ner, NerConfig};
use ademiner::relation::{relation_examples, train_re, ReConfig};
use ademiner::{synth, EmbeddingStore, Error};

fn models(store: &EmbeddingStore) -> (Vec<Document>, Vec<StageModel>) {
    let docs = synth::pipeline_corpus(16, 2);
    let mut c = ClassifierConfig::default();
    c.train.epochs = 2;
    let mut n = NerConfig::default();
    n.train.epochs = 1;
    n.train_word_embeddings = true;
    let mut r = ReConfig::default();
    r.train.epochs = 2;
    let classifier = train_classifier(&docs, &[], store, &c).unwrap().0;
    let ner = train_ner(&docs, &[], store, &n).unwrap().0;
    let re = train_re(&relation_examples(&docs).unwrap(), &[], store, &r).unwrap().0;
    (
        docs,
        vec![
            StageModel::Classifier(classifier),
            StageModel::Ner(ner),
            StageModel::Re(re),
        ],
    )
}

fn predictions(model: &StageModel, docs: &[Document], store: &EmbeddingStore) -> Vec<String> {
    docs.iter()
        .map(|d| match model {
            StageModel::Classifier(m) => format!("{:?}", m.classify(d, store).unwrap()),
            StageModel::Ner(m) => format!("{:?}", m.predict_entities(d, store).unwrap()),
            StageModel::Re(m) => {
                let cands = labeled_candidates(d).unwrap();
                format!("{:?}", m.classify_all(d, &cands, store).unwrap())
            }
        })
        .collect()
}

#[test]
fn save_load_save_is_bitwise_identical() {
    let store = synth::embeddings(24, 7).unwrap();
    let (docs, models) = models(&store);
    let dir = tempfile::tempdir().unwrap();
    for model in &models {
        let config = serde_json::json!({ "stage": model.kind().as_str() });
        let first = dir.path().join(format!("{}.bundle", model.kind().as_str()));
        save_bundle(model, &config, &first).unwrap();
        let (manifest, loaded) = load_bundle(&first).unwrap();
        assert_eq!(manifest.stage, model.kind());
        assert_eq!(manifest.embedding_dim, 24);
        assert_eq!(manifest.config, config);
        assert_eq!(&loaded, model);
        let second = dir.path().join("again.bundle");
        save_bundle(&loaded, &manifest.config, &second).unwrap();
        assert_eq!(std::fs::read(&first).unwrap(), std::fs::read(&second).unwrap());
        assert_eq!(predictions(model, &docs, &store), predictions(&loaded, &docs, &store));
    }
}

#[test]
fn labels_follow_the_stage() {
    let store = synth::embeddings(8, 7).unwrap();
    let (_, models) = models(&store);
    let labels: Vec<Vec<String>> = models
        .iter()
        .map(|m| ModelBundle::new(m, &()).unwrap().manifest.labels)
        .collect();
    assert_eq!(labels[0], ["NEG", "ADE"]);
    assert_eq!(labels[1], ["O", "B-ADE", "I-ADE", "B-Drug", "I-Drug"]);
    assert_eq!(labels[2], ["Negative", "Positive"]);
    assert_eq!(
        models.iter().map(StageModel::kind).collect::<Vec<_>>(),
        [StageKind::Classifier, StageKind::Ner, StageKind::Re]
    );
}

#[test]
fn damaged_files_are_corruption_errors() {
    let store = synth::embeddings(8, 7).unwrap();
    let (_, models) = models(&store);
    let bytes = ModelBundle::new(&models[1], &()).unwrap().to_bytes().unwrap();
    for cut in [0, 7, 20, bytes.len() / 2, bytes.len() - 1] {
        let err = ModelBundle::from_bytes(&bytes[..cut]).unwrap_err();
        assert!(matches!(err, Error::Corruption(_)), "cut {cut}: {err}");
    }
    for pos in [12, bytes.len() / 3, bytes.len() - 5] {
        let mut flipped = bytes.clone();
        flipped[pos] ^= 0x10;
        assert!(matches!(ModelBundle::from_bytes(&flipped), Err(Error::Corruption(_))));
    }
    let mut extended = bytes.clone();
    extended.push(0);
    assert!(matches!(ModelBundle::from_bytes(&extended), Err(Error::Corruption(_))));

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cut.bundle");
    std::fs::write(&path, &bytes[..bytes.len() - 40]).unwrap();
    assert!(matches!(load_bundle(&path), Err(Error::Corruption(_))));
    assert!(matches!(load_bundle(dir.path().join("missing")), Err(Error::Io { .. })));
}

#[test]
fn bundles_refuse_a_store_of_another_dimension() {
    let big = synth::embeddings(200, 7).unwrap();
    let small = synth::embeddings(100, 7).unwrap();
    let (docs, models) = models(&big);
    for model in &models {
        let bundle = ModelBundle::new(model, &()).unwrap();
        bundle.check_store(&big).unwrap();
        let err = bundle.check_store(&small).unwrap_err();
        assert!(
            matches!(
                err,
                Error::Dimension {
                    expected: 200,
                    actual: 100,
                    ..
                }
            ),
            "{err}"
        );
    }
    let doc = &docs[0];
    let StageModel::Classifier(c) = &models[0] else {
        unreachable!()
    };
    assert!(matches!(c.classify(doc, &small), Err(Error::Dimension { .. })));
    let StageModel::Ner(n) = &models[1] else { unreachable!() };
    assert!(matches!(n.predict_entities(doc, &small), Err(Error::Dimension { .. })));
}
