//! Drug-reaction relation classifier over crafted pair features.

mod features;

use ademiner_nn::TrainConfig;
use serde::{Deserialize, Serialize};

pub use features::{
    boundary_distance, build_features, semantic_similarity, span_embedding, syntactic_distance, tree_distance,
    FeatureLayout, HeadToken,
};

use crate::corpus::{labeled_candidates, Document, RelationCandidate, RelationLabel};
use crate::embed::EmbeddingStore;
use crate::error::{Error, Result};
use crate::eval::{classification_report, ClassificationReport};
use crate::fcnn::{Dataset, Fcnn, FcnnLayout};
use crate::train::{argmax, TrainReport};

pub const RELATION_NAMES: [&str; 2] = ["Negative", "Positive"];

/// Minority/majority class ratio below which training logs a warning.
pub const IMBALANCE_WARNING_RATIO: f64 = 0.1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReConfig {
    pub window: usize,
    pub head: HeadToken,
    pub pad_multiple: usize,
    pub hidden: Vec<usize>,
    pub leaky_slope: f64,
    pub class_weighting: bool,
    pub train: TrainConfig,
}

impl Default for ReConfig {
    fn default() -> Self {
        Self {
            window: 25,
            head: HeadToken::Last,
            pad_multiple: 16,
            hidden: vec![256, 64],
            leaky_slope: 0.01,
            class_weighting: false,
            train: TrainConfig::re_defaults(),
        }
    }
}

impl ReConfig {
    pub fn layout(&self, dim: usize) -> FeatureLayout {
        FeatureLayout {
            dim,
            window: self.window,
            head: self.head,
            pad_multiple: self.pad_multiple,
        }
    }
}

/// A candidate together with the document it comes from.
#[derive(Clone, Debug)]
pub struct RelationExample<'a> {
    pub doc: &'a Document,
    pub candidate: RelationCandidate,
}

/// Annotated positives and sampled negatives of every document that has
/// gold relations.
pub fn relation_examples(docs: &[Document]) -> Result<Vec<RelationExample<'_>>> {
    let mut out = Vec::new();
    for doc in docs.iter().filter(|d| d.gold_relations.is_some()) {
        for candidate in labeled_candidates(doc)? {
            out.push(RelationExample { doc, candidate });
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelationPrediction {
    pub label: RelationLabel,
    /// Indexed like [`RELATION_NAMES`].
    pub probabilities: [f32; 2],
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReModel {
    net: Fcnn,
    features: FeatureLayout,
}

impl ReModel {
    pub fn new(features: FeatureLayout, config: &ReConfig) -> Result<Self> {
        let net = Fcnn::new(
            FcnnLayout {
                input_dim: features.len(),
                hidden: config.hidden.clone(),
                classes: 2,
                leaky_slope: config.leaky_slope,
            },
            config.train.seed,
        )?;
        Ok(Self { net, features })
    }

    pub fn from_parts(net: Fcnn, features: FeatureLayout) -> Result<Self> {
        if net.layout().input_dim != features.len() || net.layout().classes != 2 {
            return Err(Error::Config(format!(
                "network input {} does not match feature length {}",
                net.layout().input_dim,
                features.len()
            )));
        }
        Ok(Self { net, features })
    }

    pub fn network(&self) -> &Fcnn {
        &self.net
    }

    pub fn network_mut(&mut self) -> &mut Fcnn {
        &mut self.net
    }

    pub fn feature_layout(&self) -> &FeatureLayout {
        &self.features
    }

    pub fn dim(&self) -> usize {
        self.features.dim
    }

    /// Argmax label; equal probabilities resolve to Negative.
    pub fn classify_relation(
        &self,
        doc: &Document,
        candidate: &RelationCandidate,
        store: &EmbeddingStore,
    ) -> Result<RelationPrediction> {
        let x = build_features(doc, candidate, store, &self.features)?;
        let p = self.net.predict_proba(&x)?;
        Ok(RelationPrediction {
            label: RelationLabel::from_index(argmax(&p)),
            probabilities: [p[0], p[1]],
        })
    }

    /// Predictions for many candidates of one document in a single pass.
    pub fn classify_all(
        &self,
        doc: &Document,
        candidates: &[RelationCandidate],
        store: &EmbeddingStore,
    ) -> Result<Vec<RelationPrediction>> {
        let feats = candidates
            .iter()
            .map(|c| build_features(doc, c, store, &self.features))
            .collect::<Result<Vec<_>>>()?;
        Ok(self
            .net
            .predict_proba_batch(&feats)?
            .into_iter()
            .map(|p| RelationPrediction {
                label: RelationLabel::from_index(argmax(&p)),
                probabilities: [p[0], p[1]],
            })
            .collect())
    }
}

fn dataset(examples: &[RelationExample<'_>], store: &EmbeddingStore, layout: &FeatureLayout) -> Result<Dataset> {
    let mut data = Dataset::default();
    for ex in examples {
        let label = ex
            .candidate
            .label
            .index()
            .ok_or_else(|| Error::Training(format!("unlabeled relation candidate in {}", ex.doc.doc_id)))?;
        data.features
            .push(build_features(ex.doc, &ex.candidate, store, layout)?);
        data.labels.push(label);
    }
    Ok(data)
}

/// Trains on labeled candidates; with a non-empty `dev` set the epoch with
/// the best dev macro-F1 is kept.
pub fn train_re(
    train: &[RelationExample<'_>],
    dev: &[RelationExample<'_>],
    store: &EmbeddingStore,
    config: &ReConfig,
) -> Result<(ReModel, TrainReport)> {
    let layout = config.layout(store.dim());
    let data = dataset(train, store, &layout)?;
    let counts = data.class_counts(2);
    if counts.iter().any(|c| *c == 0) {
        return Err(Error::Training(format!(
            "both relation labels are required, found Negative={} Positive={}",
            counts[0], counts[1]
        )));
    }
    let dev_data = dataset(dev, store, &layout)?;
    let weights: Option<Vec<f32>> = config.class_weighting.then(|| {
        let n = data.len() as f32;
        counts.iter().map(|&c| n / (2.0 * c as f32)).collect()
    });
    let mut model = ReModel::new(layout, config)?;
    let mut report = model
        .net
        .fit(&data, Some(&dev_data), &config.train, weights.as_deref(), &|net, d| {
            let pred = net.predict(&d.features)?;
            Ok(classification_report(&d.labels, &pred, &RELATION_NAMES).macro_avg.f1)
        })?;
    let (lo, hi) = (counts[0].min(counts[1]), counts[0].max(counts[1]));
    if (lo as f64) / (hi as f64) < IMBALANCE_WARNING_RATIO {
        report.warn(format!(
            "relation labels are imbalanced: Negative={} Positive={}",
            counts[0], counts[1]
        ));
    }
    Ok((model, report))
}

/// Per-label and macro/micro scores; macro is the headline figure.
pub fn evaluate_re(
    model: &ReModel,
    examples: &[RelationExample<'_>],
    store: &EmbeddingStore,
) -> Result<ClassificationReport> {
    if examples.is_empty() {
        return Err(Error::Evaluation("no relation candidates".into()));
    }
    let data = dataset(examples, store, model.feature_layout()).map_err(|e| match e {
        Error::Training(m) => Error::Evaluation(m),
        other => other,
    })?;
    let pred = model.network().predict(&data.features)?;
    Ok(classification_report(&data.labels, &pred, &RELATION_NAMES))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth;

    #[test]
    fn zero_head_ties_to_negative() {
        let store = synth::embeddings(4, 0).unwrap();
        let docs = synth::relation_corpus(1, 5, 0);
        let ex = relation_examples(&docs).unwrap();
        let mut m = ReModel::new(FeatureLayout::new(4), &ReConfig::default()).unwrap();
        for name in ["out.w", "out.b"] {
            m.network_mut().params_mut().get_mut(name).unwrap().data_mut().fill(0.0);
        }
        let p = m.classify_relation(ex[0].doc, &ex[0].candidate, &store).unwrap();
        assert_eq!(p.probabilities, [0.5, 0.5]);
        assert_eq!(p.label, RelationLabel::Negative);
    }

    #[test]
    fn single_class_is_rejected() {
        let store = synth::embeddings(4, 0).unwrap();
        let docs = synth::relation_corpus(4, 5, 0);
        let ex: Vec<_> = relation_examples(&docs)
            .unwrap()
            .into_iter()
            .filter(|e| e.candidate.label == RelationLabel::Positive)
            .collect();
        assert!(matches!(
            train_re(&ex, &[], &store, &ReConfig::default()),
            Err(Error::Training(_))
        ));
    }

    #[test]
    fn imbalance_is_accepted_with_warning() {
        let store = synth::embeddings(4, 0).unwrap();
        let docs = synth::relation_corpus(30, 5, 0);
        let all = relation_examples(&docs).unwrap();
        let mut ex: Vec<_> = all
            .iter()
            .filter(|e| e.candidate.label == RelationLabel::Positive)
            .cloned()
            .collect();
        ex.extend(
            all.iter()
                .filter(|e| e.candidate.label == RelationLabel::Negative)
                .take(2)
                .cloned(),
        );
        let cfg = ReConfig {
            train: TrainConfig {
                epochs: 1,
                ..TrainConfig::re_defaults()
            },
            ..ReConfig::default()
        };
        let (_, report) = train_re(&ex, &[], &store, &cfg).unwrap();
        assert_eq!(report.warnings.len(), 1);
    }
}
