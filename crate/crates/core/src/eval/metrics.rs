use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Counts {
    pub fn new(tp: usize, fp: usize, fn_: usize) -> Self {
        Self { tp, fp, fn_ }
    }

    pub fn scores(&self) -> Scores {
        prf(self.tp, self.fp, self.fn_)
    }
}

impl std::ops::AddAssign for Counts {
    fn add_assign(&mut self, o: Counts) {
        self.tp += o.tp;
        self.fp += o.fp;
        self.fn_ += o.fn_;
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Average {
    Macro,
    Micro,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Precision, recall and F1; a zero denominator yields 0.
pub fn prf(tp: usize, fp: usize, fn_: usize) -> Scores {
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Scores { precision, recall, f1 }
}

/// Macro: unweighted mean of per-label scores. Micro: scores of the summed
/// counts. An empty slice scores 0.
pub fn aggregate(per_label: &[Counts], average: Average) -> Scores {
    if per_label.is_empty() {
        return Scores::default();
    }
    match average {
        Average::Macro => {
            let n = per_label.len() as f64;
            let mut s = Scores::default();
            for c in per_label {
                let x = c.scores();
                s.precision += x.precision;
                s.recall += x.recall;
                s.f1 += x.f1;
            }
            Scores {
                precision: s.precision / n,
                recall: s.recall / n,
                f1: s.f1 / n,
            }
        }
        Average::Micro => {
            let mut total = Counts::default();
            for c in per_label {
                total += *c;
            }
            total.scores()
        }
    }
}
