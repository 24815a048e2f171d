//! The end-to-end pipeline: classify, drop NEG documents, tag entities,
//! pair them and classify each pair.

mod executor;

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use executor::{run_batch, run_stream, ExecOptions, FlushPolicy, RunSummary};

use crate::bundle::{BundleManifest, ModelBundle, PipelineManifest, StageModel, BUNDLE_VERSION};
use crate::classifier::ClassifierModel;
use crate::corpus::{candidates_from_spans, DocClass, Document, EntityLabel, EntitySpan, RelationLabel};
use crate::embed::EmbeddingStore;
use crate::error::{Error, Result};
use crate::ner::NerModel;
use crate::relation::ReModel;

#[derive(Clone, Debug)]
pub struct Pipeline {
    store: Arc<EmbeddingStore>,
    classifier: Option<ClassifierModel>,
    ner: NerModel,
    re: ReModel,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassOutput {
    pub label: DocClass,
    pub probability: f32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntityOutput {
    pub text: String,
    /// Token span `[start, end)`.
    pub start: usize,
    pub end: usize,
    /// Character span in the document text.
    pub char_start: usize,
    pub char_end: usize,
    pub label: EntityLabel,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelationOutput {
    pub ade: EntityOutput,
    pub drug: EntityOutput,
    pub label: RelationLabel,
    pub probability: f32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineOutput {
    pub doc_id: String,
    /// Absent when the pipeline has no classifier.
    pub class: Option<ClassOutput>,
    pub entities: Vec<EntityOutput>,
    pub relations: Vec<RelationOutput>,
}

fn entity_output(doc: &Document, span: &EntitySpan) -> EntityOutput {
    EntityOutput {
        text: doc.span_text(span),
        start: span.start,
        end: span.end,
        char_start: doc.tokens[span.start].start,
        char_end: doc.tokens[span.end - 1].end,
        label: span.label,
    }
}

impl Pipeline {
    /// All stages must use the store's dimension.
    pub fn new(
        store: Arc<EmbeddingStore>,
        classifier: Option<ClassifierModel>,
        ner: NerModel,
        re: ReModel,
    ) -> Result<Self> {
        let dim = store.dim();
        let stages = [
            ("classifier", classifier.as_ref().map(ClassifierModel::dim)),
            ("ner", Some(ner.spec().word_dim)),
            ("re", Some(re.dim())),
        ];
        for (name, d) in stages {
            if let Some(d) = d.filter(|&d| d != dim) {
                return Err(Error::Config(format!(
                    "{name} stage expects embedding dim {d}, store has {dim}"
                )));
            }
        }
        Ok(Self {
            store,
            classifier,
            ner,
            re,
        })
    }

    /// Loads the bundles referenced by a pipeline manifest.
    pub fn load(manifest_path: &Path, store: Arc<EmbeddingStore>) -> Result<Self> {
        let manifest = PipelineManifest::load(manifest_path)?;
        if manifest.embedding_dim != store.dim() {
            return Err(Error::Config(format!(
                "pipeline expects embedding dim {}, store has {}",
                manifest.embedding_dim,
                store.dim()
            )));
        }
        let (cls, ner, re) = manifest.resolve(manifest_path);
        Self::from_bundle_paths(cls.as_deref(), &ner, &re, store)
    }

    pub fn from_bundle_paths(
        classifier: Option<&Path>,
        ner: &Path,
        re: &Path,
        store: Arc<EmbeddingStore>,
    ) -> Result<Self> {
        let classifier = match classifier {
            Some(p) => match load_stage(p, &store)? {
                StageModel::Classifier(m) => Some(m),
                other => return Err(wrong_stage(p, "classifier", &other)),
            },
            None => None,
        };
        let ner = match load_stage(ner, &store)? {
            StageModel::Ner(m) => m,
            other => return Err(wrong_stage(ner, "ner", &other)),
        };
        let re = match load_stage(re, &store)? {
            StageModel::Re(m) => m,
            other => return Err(wrong_stage(re, "re", &other)),
        };
        Self::new(store, classifier, ner, re)
    }

    /// Writes one bundle per stage next to `manifest_path` and the manifest
    /// referencing them.
    pub fn save(&self, manifest_path: &Path, configs: &PipelineConfigs) -> Result<()> {
        let dir = manifest_path.parent().unwrap_or(Path::new(""));
        let write = |name: &str, model: StageModel, config: &serde_json::Value| -> Result<std::path::PathBuf> {
            let file = std::path::PathBuf::from(format!("{name}.bundle"));
            ModelBundle::new(&model, config)?.save(dir.join(&file))?;
            Ok(file)
        };
        let classifier = match &self.classifier {
            Some(c) => Some(write(
                "classifier",
                StageModel::Classifier(c.clone()),
                &configs.classifier,
            )?),
            None => None,
        };
        let ner = write("ner", StageModel::Ner(self.ner.clone()), &configs.ner)?;
        let re = write("re", StageModel::Re(self.re.clone()), &configs.re)?;
        PipelineManifest {
            format_version: BUNDLE_VERSION,
            embedding_dim: self.store.dim(),
            classifier,
            ner,
            re,
        }
        .save(manifest_path)
    }

    pub fn store(&self) -> &EmbeddingStore {
        &self.store
    }

    pub fn classifier(&self) -> Option<&ClassifierModel> {
        self.classifier.as_ref()
    }

    pub fn ner(&self) -> &NerModel {
        &self.ner
    }

    pub fn re(&self) -> &ReModel {
        &self.re
    }

    /// Runs the stages in order. A document classified NEG stops after the
    /// classifier with no entities or relations.
    pub fn run(&self, doc: &Document) -> Result<PipelineOutput> {
        let store = &*self.store;
        let mut out = PipelineOutput {
            doc_id: doc.doc_id.clone(),
            class: None,
            entities: Vec::new(),
            relations: Vec::new(),
        };
        if let Some(c) = &self.classifier {
            let r = c.classify(doc, store)?;
            out.class = Some(ClassOutput {
                label: r.label,
                probability: r.probabilities[r.label.index()],
            });
            if r.label == DocClass::Neg {
                return Ok(out);
            }
        }
        let spans = self.ner.predict_entities(doc, store)?;
        out.entities = spans.iter().map(|s| entity_output(doc, s)).collect();
        let candidates = candidates_from_spans(&doc.doc_id, &spans);
        if !candidates.is_empty() {
            let preds = self.re.classify_all(doc, &candidates, store)?;
            out.relations = candidates
                .iter()
                .zip(preds)
                .map(|(c, p)| RelationOutput {
                    ade: entity_output(doc, &c.ade),
                    drug: entity_output(doc, &c.drug),
                    label: p.label,
                    probability: p.probabilities[p.label.index().expect("trained label")],
                })
                .collect();
        }
        Ok(out)
    }
}

pub fn run_pipeline(pipeline: &Pipeline, doc: &Document) -> Result<PipelineOutput> {
    pipeline.run(doc)
}

/// Stage configurations echoed into the bundles.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfigs {
    pub classifier: serde_json::Value,
    pub ner: serde_json::Value,
    pub re: serde_json::Value,
}

fn load_stage(path: &Path, store: &EmbeddingStore) -> Result<StageModel> {
    let bundle = ModelBundle::load(path)?;
    bundle.check_store(store)?;
    bundle.model()
}

fn wrong_stage(path: &Path, expected: &str, found: &StageModel) -> Error {
    Error::Config(format!(
        "{} holds a {} stage, expected {expected}",
        path.display(),
        found.kind().as_str()
    ))
}

/// Manifest of a loaded bundle, for reporting.
pub fn bundle_manifest(path: &Path) -> Result<BundleManifest> {
    Ok(ModelBundle::load(path)?.manifest)
}
