use serde::{Deserialize, Serialize};

use super::metrics::{aggregate, Average, Counts, Scores};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub class: String,
    pub counts: Counts,
    pub scores: Scores,
}

/// Single-label classification scores. Micro F1 equals accuracy here.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub per_class: Vec<ClassScores>,
    #[serde(rename = "macro")]
    pub macro_avg: Scores,
    #[serde(rename = "micro")]
    pub micro_avg: Scores,
    pub accuracy: f64,
    pub n: usize,
}

/// One-vs-rest counts for every class in `names` (indexed like the labels).
pub fn classification_report(gold: &[usize], pred: &[usize], names: &[&str]) -> ClassificationReport {
    assert_eq!(gold.len(), pred.len(), "gold and predicted label counts differ");
    let mut counts = vec![Counts::default(); names.len()];
    let mut correct = 0;
    for (&g, &p) in gold.iter().zip(pred) {
        if g == p {
            counts[g].tp += 1;
            correct += 1;
        } else {
            counts[p].fp += 1;
            counts[g].fn_ += 1;
        }
    }
    ClassificationReport {
        per_class: names
            .iter()
            .zip(&counts)
            .map(|(n, c)| ClassScores {
                class: n.to_string(),
                counts: *c,
                scores: c.scores(),
            })
            .collect(),
        macro_avg: aggregate(&counts, Average::Macro),
        micro_avg: aggregate(&counts, Average::Micro),
        accuracy: if gold.is_empty() {
            0.0
        } else {
            correct as f64 / gold.len() as f64
        },
        n: gold.len(),
    }
}
