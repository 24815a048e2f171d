//! k-fold experiment driver.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::{evaluate_classifier, train_classifier, ClassifierConfig};
use crate::corpus::{kfold_split, Document};
use crate::embed::EmbeddingStore;
use crate::error::{Error, Result};
use crate::ner::{evaluate_ner, train_ner, NerConfig};
use crate::relation::{evaluate_re, relation_examples, train_re, ReConfig};

use super::entities::MatchMode;
use super::metrics::Scores;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Classify,
    Ner,
    Re,
}

impl Task {
    pub fn as_str(self) -> &'static str {
        match self {
            Task::Classify => "classify",
            Task::Ner => "ner",
            Task::Re => "re",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "classify" | "classifier" => Some(Task::Classify),
            "ner" => Some(Task::Ner),
            "re" => Some(Task::Re),
            _ => None,
        }
    }
}

/// Configuration of the stage under test.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "task", rename_all = "lowercase")]
pub enum TaskConfig {
    Classify(ClassifierConfig),
    Ner { config: NerConfig, relax_mode: MatchMode },
    Re(ReConfig),
}

impl TaskConfig {
    pub fn task(&self) -> Task {
        match self {
            TaskConfig::Classify(_) => Task::Classify,
            TaskConfig::Ner { .. } => Task::Ner,
            TaskConfig::Re(_) => Task::Re,
        }
    }

    pub fn defaults(task: Task) -> Self {
        match task {
            Task::Classify => TaskConfig::Classify(ClassifierConfig::default()),
            Task::Ner => TaskConfig::Ner {
                config: NerConfig::default(),
                relax_mode: MatchMode::Relax,
            },
            Task::Re => TaskConfig::Re(ReConfig::default()),
        }
    }
}

/// A scoring block at one averaging.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    /// `strict` / `relax` for entities, `classification` otherwise.
    pub block: String,
    pub average: String,
    pub scores: Scores,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub n_train: usize,
    pub n_dev: usize,
    pub n_test: usize,
    pub selected_epoch: usize,
    pub rows: Vec<ScoreRow>,
    /// The stage's full evaluation report.
    pub detail: serde_json::Value,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub block: String,
    pub average: String,
    pub mean: Scores,
    /// Population standard deviation across folds.
    pub stdev: Scores,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub task: Task,
    pub k: usize,
    pub seed: u64,
    pub n_docs: usize,
    pub config: TaskConfig,
    pub folds: Vec<FoldResult>,
    pub summary: Vec<SummaryRow>,
}

fn rows_from(block: &str, macro_avg: Scores, micro_avg: Scores) -> [ScoreRow; 2] {
    [
        ScoreRow {
            block: block.into(),
            average: "macro".into(),
            scores: macro_avg,
        },
        ScoreRow {
            block: block.into(),
            average: "micro".into(),
            scores: micro_avg,
        },
    ]
}

/// Folds are formed over distinct `doc_id`s so documents sharing an id stay
/// on the same side of every split.
fn grouped_folds(docs: &[Document], k: usize, seed: u64) -> Result<Vec<(Vec<usize>, Vec<usize>, Vec<usize>)>> {
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut index: BTreeMap<&str, usize> = BTreeMap::new();
    for (i, d) in docs.iter().enumerate() {
        let g = *index.entry(d.doc_id.as_str()).or_insert_with(|| {
            groups.push(Vec::new());
            groups.len() - 1
        });
        groups[g].push(i);
    }
    let expand = |ids: &[usize]| {
        let mut v: Vec<usize> = ids.iter().flat_map(|&g| groups[g].iter().copied()).collect();
        v.sort_unstable();
        v
    };
    Ok(kfold_split(groups.len(), k, seed)?
        .iter()
        .map(|f| (expand(&f.train), expand(&f.dev), expand(&f.test)))
        .collect())
}

fn check_leakage(fold: usize, docs: &[Document], train: &[usize], dev: &[usize], test: &[usize]) -> Result<()> {
    let seen: HashSet<&str> = train.iter().chain(dev).map(|&i| docs[i].doc_id.as_str()).collect();
    if let Some(&i) = test.iter().find(|&&i| seen.contains(docs[i].doc_id.as_str())) {
        return Err(Error::Fold {
            fold,
            source: Box::new(Error::Consistency(format!(
                "doc_id {} is in both train and test",
                docs[i].doc_id
            ))),
        });
    }
    Ok(())
}

fn run_fold(
    config: &TaskConfig,
    docs: &[Document],
    store: &EmbeddingStore,
    split: &(Vec<usize>, Vec<usize>, Vec<usize>),
) -> Result<(usize, Vec<ScoreRow>, serde_json::Value)> {
    let pick = |ids: &[usize]| ids.iter().map(|&i| docs[i].clone()).collect::<Vec<_>>();
    let (train, dev, test) = (pick(&split.0), pick(&split.1), pick(&split.2));
    match config {
        TaskConfig::Classify(cfg) => {
            let (model, report) = train_classifier(&train, &dev, store, cfg)?;
            let r = evaluate_classifier(&model, &test, store)?;
            let rows = rows_from("classification", r.macro_avg, r.micro_avg).to_vec();
            Ok((report.selected_epoch, rows, serde_json::to_value(&r)?))
        }
        TaskConfig::Ner { config, relax_mode } => {
            let (model, report) = train_ner(&train, &dev, store, config)?;
            let r = evaluate_ner(&model, &test, store, *relax_mode)?;
            let mut rows = rows_from("strict", r.strict.macro_avg, r.strict.micro_avg).to_vec();
            rows.extend(rows_from(r.relax.mode.as_str(), r.relax.macro_avg, r.relax.micro_avg));
            Ok((report.selected_epoch, rows, serde_json::to_value(&r)?))
        }
        TaskConfig::Re(cfg) => {
            let (tr, dv, te) = (
                relation_examples(&train)?,
                relation_examples(&dev)?,
                relation_examples(&test)?,
            );
            let (model, report) = train_re(&tr, &dv, store, cfg)?;
            let r = evaluate_re(&model, &te, store)?;
            let rows = rows_from("classification", r.macro_avg, r.micro_avg).to_vec();
            Ok((report.selected_epoch, rows, serde_json::to_value(&r)?))
        }
    }
}

fn mean_stdev(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn summarize(folds: &[FoldResult]) -> Vec<SummaryRow> {
    let Some(first) = folds.first() else {
        return Vec::new();
    };
    first
        .rows
        .iter()
        .enumerate()
        .map(|(r, row)| {
            let col =
                |f: fn(&Scores) -> f64| mean_stdev(&folds.iter().map(|fr| f(&fr.rows[r].scores)).collect::<Vec<_>>());
            let (p, r_, f) = (col(|s| s.precision), col(|s| s.recall), col(|s| s.f1));
            SummaryRow {
                block: row.block.clone(),
                average: row.average.clone(),
                mean: Scores {
                    precision: p.0,
                    recall: r_.0,
                    f1: f.0,
                },
                stdev: Scores {
                    precision: p.1,
                    recall: r_.1,
                    f1: f.1,
                },
            }
        })
        .collect()
}

/// Trains and evaluates one model per fold. Folds run in parallel; each
/// fold trains single-threaded, so the report depends only on the inputs.
pub fn run_cv_experiment(
    docs: &[Document],
    k: usize,
    seed: u64,
    config: &TaskConfig,
    store: &EmbeddingStore,
) -> Result<CvReport> {
    let splits = grouped_folds(docs, k, seed)?;
    for (i, (train, dev, test)) in splits.iter().enumerate() {
        check_leakage(i, docs, train, dev, test)?;
    }
    let results: Vec<Result<FoldResult>> = splits
        .par_iter()
        .enumerate()
        .map(|(fold, split)| {
            let (selected_epoch, rows, detail) = run_fold(config, docs, store, split).map_err(|e| Error::Fold {
                fold,
                source: Box::new(e),
            })?;
            Ok(FoldResult {
                fold,
                n_train: split.0.len(),
                n_dev: split.1.len(),
                n_test: split.2.len(),
                selected_epoch,
                rows,
                detail,
            })
        })
        .collect();
    let folds = results.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(CvReport {
        task: config.task(),
        k,
        seed,
        n_docs: docs.len(),
        config: config.clone(),
        summary: summarize(&folds),
        folds,
    })
}

impl CvReport {
    /// One line per fold and block/average, then mean and stdev lines.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("block,average,fold,precision,recall,f1\n");
        let mut line = |block: &str, avg: &str, fold: &str, s: &Scores| {
            let _ = writeln!(
                out,
                "{block},{avg},{fold},{:.6},{:.6},{:.6}",
                s.precision, s.recall, s.f1
            );
        };
        for f in &self.folds {
            for r in &f.rows {
                line(&r.block, &r.average, &f.fold.to_string(), &r.scores);
            }
        }
        for s in &self.summary {
            line(&s.block, &s.average, "mean", &s.mean);
            line(&s.block, &s.average, "stdev", &s.stdev);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn population_stdev() {
        assert_eq!(mean_stdev(&[1.0, 1.0]), (1.0, 0.0));
        let (m, s) = mean_stdev(&[2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0]);
        assert_eq!((m, s), (5.0, 2.0));
    }

    #[test]
    fn shared_ids_stay_together() {
        let docs: Vec<Document> = (0..30)
            .map(|i| Document::from_tokens(format!("pmid-{}", i / 3), &["x"]))
            .collect();
        let splits = grouped_folds(&docs, 5, 1).unwrap();
        for (i, (tr, dv, te)) in splits.iter().enumerate() {
            check_leakage(i, &docs, tr, dv, te).unwrap();
            assert_eq!(tr.len() + dv.len() + te.len(), 30);
            assert_eq!(te.len(), 6);
        }
    }
}
