//! ADE/NEG document classifier over the mean word vector of a document.

use ademiner_nn::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::corpus::{DocClass, Document};
use crate::embed::EmbeddingStore;
use crate::error::{Error, Result};
use crate::eval::{classification_report, ClassificationReport};
use crate::fcnn::{Dataset, Fcnn, FcnnLayout};
use crate::train::{argmax, TrainReport};

pub const CLASS_NAMES: [&str; 2] = ["NEG", "ADE"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifierConfig {
    pub hidden: Vec<usize>,
    pub leaky_slope: f64,
    /// Weight the loss by inverse class frequency.
    pub class_weighting: bool,
    pub train: TrainConfig,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            hidden: vec![128, 64],
            leaky_slope: 0.01,
            class_weighting: false,
            train: TrainConfig::classifier_defaults(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassifierModel {
    net: Fcnn,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub label: DocClass,
    /// Indexed like [`CLASS_NAMES`].
    pub probabilities: [f32; 2],
}

fn features(doc: &Document, store: &EmbeddingStore) -> Vec<f32> {
    store.embed_document(doc.words())
}

fn dataset(docs: &[Document], store: &EmbeddingStore) -> Result<Dataset> {
    let mut data = Dataset::default();
    for doc in docs {
        let class = doc
            .gold_class
            .ok_or_else(|| Error::Training(format!("{} has no gold class", doc.doc_id)))?;
        data.features.push(features(doc, store));
        data.labels.push(class.index());
    }
    Ok(data)
}

impl ClassifierModel {
    pub fn new(dim: usize, config: &ClassifierConfig) -> Result<Self> {
        Ok(Self {
            net: Fcnn::new(
                FcnnLayout {
                    input_dim: dim,
                    hidden: config.hidden.clone(),
                    classes: 2,
                    leaky_slope: config.leaky_slope,
                },
                config.train.seed,
            )?,
        })
    }

    pub fn from_network(net: Fcnn) -> Result<Self> {
        if net.layout().classes != 2 {
            return Err(Error::Config("classifier needs exactly two classes".into()));
        }
        Ok(Self { net })
    }

    pub fn network(&self) -> &Fcnn {
        &self.net
    }

    pub fn network_mut(&mut self) -> &mut Fcnn {
        &mut self.net
    }

    pub fn dim(&self) -> usize {
        self.net.layout().input_dim
    }

    fn check_store(&self, store: &EmbeddingStore) -> Result<()> {
        if store.dim() != self.dim() {
            return Err(Error::Dimension {
                expected: self.dim(),
                actual: store.dim(),
                context: "classifier embedding store".into(),
            });
        }
        Ok(())
    }

    /// Argmax class; equal probabilities resolve to NEG.
    pub fn classify(&self, doc: &Document, store: &EmbeddingStore) -> Result<Classification> {
        self.check_store(store)?;
        let p = self.net.predict_proba(&features(doc, store))?;
        Ok(Classification {
            label: DocClass::from_index(argmax(&p)),
            probabilities: [p[0], p[1]],
        })
    }

    pub fn evaluate(&self, docs: &[Document], store: &EmbeddingStore) -> Result<ClassificationReport> {
        evaluate_classifier(self, docs, store)
    }
}

/// Trains on `train`; with a non-empty `dev` set the epoch with the best dev
/// accuracy is kept.
pub fn train_classifier(
    train: &[Document],
    dev: &[Document],
    store: &EmbeddingStore,
    config: &ClassifierConfig,
) -> Result<(ClassifierModel, TrainReport)> {
    if train.is_empty() {
        return Err(Error::Training("empty training corpus".into()));
    }
    let data = dataset(train, store)?;
    let counts = data.class_counts(2);
    if counts.iter().any(|c| *c == 0) {
        return Err(Error::Training(format!(
            "both classes are required, found NEG={} ADE={}",
            counts[0], counts[1]
        )));
    }
    let dev_data = dataset(dev, store)?;
    let weights: Option<Vec<f32>> = config.class_weighting.then(|| {
        let n = data.len() as f32;
        counts.iter().map(|&c| n / (2.0 * c as f32)).collect()
    });
    let mut model = ClassifierModel::new(store.dim(), config)?;
    let report = model
        .net
        .fit(&data, Some(&dev_data), &config.train, weights.as_deref(), &|net, d| {
            let pred = net.predict(&d.features)?;
            Ok(classification_report(&d.labels, &pred, &CLASS_NAMES).accuracy)
        })?;
    Ok((model, report))
}

pub fn evaluate_classifier(
    model: &ClassifierModel,
    docs: &[Document],
    store: &EmbeddingStore,
) -> Result<ClassificationReport> {
    model.check_store(store)?;
    let gold: Vec<usize> = docs
        .iter()
        .map(|d| {
            d.gold_class
                .map(DocClass::index)
                .ok_or_else(|| Error::Evaluation(format!("{} has no gold class", d.doc_id)))
        })
        .collect::<Result<_>>()?;
    if gold.is_empty() {
        return Err(Error::Evaluation("no labeled documents".into()));
    }
    let feats: Vec<Vec<f32>> = docs.iter().map(|d| features(d, store)).collect();
    let pred = model.network().predict(&feats)?;
    Ok(classification_report(&gold, &pred, &CLASS_NAMES))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store() -> EmbeddingStore {
        EmbeddingStore::from_rows(2, [("good", vec![1.0, 0.0]), ("bad", vec![0.0, 1.0])]).unwrap()
    }

    fn doc(id: usize, text: &str, class: DocClass) -> Document {
        let mut d = Document::from_text(format!("d{id}"), text);
        d.gold_class = Some(class);
        d
    }

    #[test]
    fn zero_head_ties_to_neg() {
        let mut m = ClassifierModel::new(2, &ClassifierConfig::default()).unwrap();
        for name in ["out.w", "out.b"] {
            m.network_mut().params_mut().get_mut(name).unwrap().data_mut().fill(0.0);
        }
        let c = m.classify(&Document::from_text("x", "bad bad"), &store()).unwrap();
        assert_eq!(c.probabilities, [0.5, 0.5]);
        assert_eq!(c.label, DocClass::Neg);
    }

    #[test]
    fn training_errors() {
        let cfg = ClassifierConfig::default();
        assert!(matches!(
            train_classifier(&[], &[], &store(), &cfg),
            Err(Error::Training(_))
        ));
        let one_class = [doc(0, "good", DocClass::Ade), doc(1, "good good", DocClass::Ade)];
        assert!(matches!(
            train_classifier(&one_class, &[], &store(), &cfg),
            Err(Error::Training(_))
        ));
    }

    #[test]
    fn store_dim_mismatch() {
        let m = ClassifierModel::new(3, &ClassifierConfig::default()).unwrap();
        assert!(matches!(
            m.classify(&Document::from_text("x", "good"), &store()),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn evaluation_needs_gold() {
        let m = ClassifierModel::new(2, &ClassifierConfig::default()).unwrap();
        let unlabeled = [Document::from_text("x", "good")];
        assert!(matches!(
            evaluate_classifier(&m, &unlabeled, &store()),
            Err(Error::Evaluation(_))
        ));
    }
}
