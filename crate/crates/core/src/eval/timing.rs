//! Wall-clock training and inference timing.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::bundle::StageModel;
use crate::classifier::{evaluate_classifier, train_classifier};
use crate::corpus::{labeled_candidates, Document};
use crate::embed::EmbeddingStore;
use crate::error::{Error, Result};
use crate::ner::{evaluate_ner, train_ner};
use crate::relation::{evaluate_re, relation_examples, train_re};

use super::cv::{Task, TaskConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimingReport {
    pub stage: Task,
    pub train_seconds: f64,
    pub infer_seconds: f64,
    /// Strict micro F1 for entities, macro F1 for the classifiers.
    pub f1: f64,
    pub hardware: String,
    pub n_docs: usize,
    pub epochs: usize,
    pub config: TaskConfig,
}

/// CPU model, logical core count, OS and architecture.
pub fn hardware_descriptor() -> String {
    let model = std::fs::read_to_string("/proc/cpuinfo")
        .ok()
        .and_then(|s| {
            s.lines()
                .find(|l| l.starts_with("model name"))
                .and_then(|l| l.split_once(':'))
                .map(|(_, v)| v.trim().to_string())
        })
        .unwrap_or_else(|| "unknown cpu".into());
    let cores = std::thread::available_parallelism().map_or(1, usize::from);
    format!(
        "{model}, {cores} logical cores, {} {}",
        std::env::consts::OS,
        std::env::consts::ARCH
    )
}

/// One prediction pass of `model` over `docs`, in seconds. Relation models
/// classify every ADE×Drug pair of the gold entities.
pub fn time_inference(model: &StageModel, docs: &[Document], store: &EmbeddingStore) -> Result<f64> {
    let start = Instant::now();
    match model {
        StageModel::Classifier(m) => {
            for d in docs {
                std::hint::black_box(m.classify(d, store)?);
            }
        }
        StageModel::Ner(m) => {
            for d in docs {
                std::hint::black_box(m.predict_entities(d, store)?);
            }
        }
        StageModel::Re(m) => {
            for d in docs {
                let candidates = labeled_candidates(d)?;
                if !candidates.is_empty() {
                    std::hint::black_box(m.classify_all(d, &candidates, store)?);
                }
            }
        }
    }
    Ok(start.elapsed().as_secs_f64())
}

/// Trains for the configured epoch count on `docs` without a dev set, then
/// times one inference pass over the same documents and scores it.
pub fn benchmark_timing(
    docs: &[Document],
    config: &TaskConfig,
    store: &EmbeddingStore,
) -> Result<(TimingReport, StageModel)> {
    if docs.is_empty() {
        return Err(Error::Config("benchmark corpus is empty".into()));
    }
    let start = Instant::now();
    let (model, epochs) = match config {
        TaskConfig::Classify(cfg) => (
            StageModel::Classifier(train_classifier(docs, &[], store, cfg)?.0),
            cfg.train.epochs,
        ),
        TaskConfig::Ner { config, .. } => (
            StageModel::Ner(train_ner(docs, &[], store, config)?.0),
            config.train.epochs,
        ),
        TaskConfig::Re(cfg) => (
            StageModel::Re(train_re(&relation_examples(docs)?, &[], store, cfg)?.0),
            cfg.train.epochs,
        ),
    };
    let train_seconds = start.elapsed().as_secs_f64();
    let infer_seconds = time_inference(&model, docs, store)?;
    let f1 = match (&model, config) {
        (StageModel::Classifier(m), _) => evaluate_classifier(m, docs, store)?.macro_avg.f1,
        (StageModel::Ner(m), TaskConfig::Ner { relax_mode, .. }) => {
            evaluate_ner(m, docs, store, *relax_mode)?.strict.micro_avg.f1
        }
        (StageModel::Re(m), _) => evaluate_re(m, &relation_examples(docs)?, store)?.macro_avg.f1,
        _ => unreachable!("model matches its config"),
    };
    let report = TimingReport {
        stage: config.task(),
        train_seconds,
        infer_seconds,
        f1,
        hardware: hardware_descriptor(),
        n_docs: docs.len(),
        epochs,
        config: config.clone(),
    };
    Ok((report, model))
}

impl TimingReport {
    /// Fixed-width text row under `TABLE_HEADER`.
    pub fn table_row(&self) -> String {
        format!(
            "{:<10} {:>10.3} {:>10.3} {:>8.4}  {}",
            self.stage.as_str(),
            self.train_seconds,
            self.infer_seconds,
            self.f1,
            self.hardware
        )
    }

    pub const TABLE_HEADER: &'static str = "stage        train (s)  infer (s)       F1  hardware";
}
