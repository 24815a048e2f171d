//! Entity matching under strict and relax criteria.
//!
//! Strict: same label and identical boundaries. Relax: same label and any
//! token overlap, paired one-to-one greedily in textual order. OverlapAny:
//! a prediction is correct if it overlaps any gold span of its label and a
//! gold span is found if any prediction overlaps it; counts are then not
//! one-to-one, and `tp` counts found gold spans.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpus::{EntityLabel, EntitySpan};
use crate::error::{Error, Result};

use super::metrics::{aggregate, Average, Counts, Scores};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchMode {
    Strict,
    Relax,
    OverlapAny,
}

impl MatchMode {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "strict" => Some(MatchMode::Strict),
            "relax" => Some(MatchMode::Relax),
            "overlap-any" | "overlap_any" => Some(MatchMode::OverlapAny),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            MatchMode::Strict => "strict",
            MatchMode::Relax => "relax",
            MatchMode::OverlapAny => "overlap_any",
        }
    }

    fn accepts(self, gold: &EntitySpan, pred: &EntitySpan) -> bool {
        gold.label == pred.label
            && match self {
                MatchMode::Strict => gold.start == pred.start && gold.end == pred.end,
                MatchMode::Relax | MatchMode::OverlapAny => gold.overlaps(pred),
            }
    }
}

/// Counts per entity label; both labels are always present.
pub type LabelCounts = BTreeMap<EntityLabel, Counts>;

fn empty_counts() -> LabelCounts {
    EntityLabel::ALL.iter().map(|l| (*l, Counts::default())).collect()
}

fn check(spans: &[EntitySpan]) -> Result<()> {
    match spans.iter().find(|s| s.is_empty()) {
        Some(s) => Err(Error::Span(format!("({}, {}, {}) is empty", s.start, s.end, s.label))),
        None => Ok(()),
    }
}

fn sorted(spans: &[EntitySpan]) -> Vec<EntitySpan> {
    let mut v = spans.to_vec();
    v.sort_by_key(|s| (s.start, s.end, s.label));
    v
}

/// Per-label counts for one document.
pub fn match_entities(gold: &[EntitySpan], pred: &[EntitySpan], mode: MatchMode) -> Result<LabelCounts> {
    check(gold)?;
    check(pred)?;
    let gold = sorted(gold);
    let pred = sorted(pred);
    let mut counts = empty_counts();
    match mode {
        MatchMode::Strict | MatchMode::Relax => {
            let mut used = vec![false; gold.len()];
            for p in &pred {
                let hit = (0..gold.len()).find(|&i| !used[i] && mode.accepts(&gold[i], p));
                let c = counts.get_mut(&p.label).unwrap();
                match hit {
                    Some(i) => {
                        used[i] = true;
                        c.tp += 1;
                    }
                    None => c.fp += 1,
                }
            }
            for (g, u) in gold.iter().zip(&used) {
                if !u {
                    counts.get_mut(&g.label).unwrap().fn_ += 1;
                }
            }
        }
        MatchMode::OverlapAny => {
            for p in &pred {
                if !gold.iter().any(|g| mode.accepts(g, p)) {
                    counts.get_mut(&p.label).unwrap().fp += 1;
                }
            }
            for g in &gold {
                let c = counts.get_mut(&g.label).unwrap();
                if pred.iter().any(|p| mode.accepts(g, p)) {
                    c.tp += 1;
                } else {
                    c.fn_ += 1;
                }
            }
        }
    }
    Ok(counts)
}

/// Size of a maximum one-to-one matching between `gold` and `pred` under
/// `mode`'s pairing rule.
pub fn optimal_matches(gold: &[EntitySpan], pred: &[EntitySpan], mode: MatchMode) -> usize {
    fn augment(p: usize, adj: &[Vec<usize>], seen: &mut [bool], owner: &mut [Option<usize>]) -> bool {
        for &g in &adj[p] {
            if seen[g] {
                continue;
            }
            seen[g] = true;
            if owner[g].map_or(true, |q| augment(q, adj, seen, owner)) {
                owner[g] = Some(p);
                return true;
            }
        }
        false
    }
    let adj: Vec<Vec<usize>> = pred
        .iter()
        .map(|p| (0..gold.len()).filter(|&g| mode.accepts(&gold[g], p)).collect())
        .collect();
    let mut owner = vec![None; gold.len()];
    (0..pred.len())
        .filter(|&p| augment(p, &adj, &mut vec![false; gold.len()], &mut owner))
        .count()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelScores {
    pub counts: Counts,
    pub scores: Scores,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeReport {
    pub mode: MatchMode,
    pub per_label: BTreeMap<EntityLabel, LabelScores>,
    #[serde(rename = "macro")]
    pub macro_avg: Scores,
    #[serde(rename = "micro")]
    pub micro_avg: Scores,
}

/// Strict and relax blocks accumulated over a document set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntityMatchReport {
    pub strict: ModeReport,
    pub relax: ModeReport,
    /// Relax true positives a maximum one-to-one matching would add over
    /// the greedy pairing, summed over documents.
    pub relax_greedy_deficit: usize,
}

#[derive(Clone, Debug)]
pub struct EntityEvaluator {
    relax_mode: MatchMode,
    strict: LabelCounts,
    relax: LabelCounts,
    deficit: usize,
}

impl Default for EntityEvaluator {
    fn default() -> Self {
        Self::new(MatchMode::Relax)
    }
}

impl EntityEvaluator {
    /// `relax_mode` is [`MatchMode::Relax`] or [`MatchMode::OverlapAny`].
    pub fn new(relax_mode: MatchMode) -> Self {
        Self {
            relax_mode,
            strict: empty_counts(),
            relax: empty_counts(),
            deficit: 0,
        }
    }

    pub fn add(&mut self, gold: &[EntitySpan], pred: &[EntitySpan]) -> Result<()> {
        let strict = match_entities(gold, pred, MatchMode::Strict)?;
        let relax = match_entities(gold, pred, self.relax_mode)?;
        if self.relax_mode == MatchMode::Relax {
            let greedy: usize = relax.values().map(|c| c.tp).sum();
            self.deficit += optimal_matches(gold, pred, MatchMode::Relax) - greedy;
        }
        for (l, c) in strict {
            *self.strict.get_mut(&l).unwrap() += c;
        }
        for (l, c) in relax {
            *self.relax.get_mut(&l).unwrap() += c;
        }
        Ok(())
    }

    pub fn report(&self) -> EntityMatchReport {
        EntityMatchReport {
            strict: mode_report(MatchMode::Strict, &self.strict),
            relax: mode_report(self.relax_mode, &self.relax),
            relax_greedy_deficit: self.deficit,
        }
    }
}

pub fn mode_report(mode: MatchMode, counts: &LabelCounts) -> ModeReport {
    let all: Vec<Counts> = counts.values().copied().collect();
    ModeReport {
        mode,
        per_label: counts
            .iter()
            .map(|(l, c)| {
                (
                    *l,
                    LabelScores {
                        counts: *c,
                        scores: c.scores(),
                    },
                )
            })
            .collect(),
        macro_avg: aggregate(&all, Average::Macro),
        micro_avg: aggregate(&all, Average::Micro),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use EntityLabel::*;

    fn s(a: usize, b: usize, l: EntityLabel) -> EntitySpan {
        EntitySpan::new(a, b, l)
    }

    #[test]
    fn exact_match() {
        for mode in [MatchMode::Strict, MatchMode::Relax] {
            let c = match_entities(&[s(0, 2, Ade)], &[s(0, 2, Ade)], mode).unwrap();
            assert_eq!(c[&Ade], Counts::new(1, 0, 0));
        }
    }

    #[test]
    fn partial_overlap() {
        let strict = match_entities(&[s(0, 2, Ade)], &[s(0, 1, Ade)], MatchMode::Strict).unwrap();
        assert_eq!(strict[&Ade], Counts::new(0, 1, 1));
        let relax = match_entities(&[s(0, 2, Ade)], &[s(0, 1, Ade)], MatchMode::Relax).unwrap();
        assert_eq!(relax[&Ade], Counts::new(1, 0, 0));
    }

    #[test]
    fn label_mismatch() {
        for mode in [MatchMode::Strict, MatchMode::Relax] {
            let c = match_entities(&[s(0, 2, Ade)], &[s(0, 2, Drug)], mode).unwrap();
            assert_eq!(c[&Ade], Counts::new(0, 0, 1));
            assert_eq!(c[&Drug], Counts::new(0, 1, 0));
        }
    }

    #[test]
    fn relax_is_one_to_one_but_overlap_any_is_not() {
        let gold = [s(0, 4, Ade)];
        let pred = [s(0, 1, Ade), s(2, 3, Ade)];
        assert_eq!(
            match_entities(&gold, &pred, MatchMode::Relax).unwrap()[&Ade],
            Counts::new(1, 1, 0)
        );
        assert_eq!(
            match_entities(&gold, &pred, MatchMode::OverlapAny).unwrap()[&Ade],
            Counts::new(1, 0, 0)
        );
    }

    #[test]
    fn greedy_deficit_is_reported() {
        // Greedy pairs pred (0,3) with gold (0,2), leaving gold (2,3) unmatched
        // although pred (1,2) could take (0,2).
        let gold = [s(0, 2, Ade), s(2, 3, Ade)];
        let pred = [s(0, 3, Ade), s(1, 2, Ade)];
        let mut ev = EntityEvaluator::default();
        ev.add(&gold, &pred).unwrap();
        let r = ev.report();
        assert_eq!(optimal_matches(&gold, &pred, MatchMode::Relax), 2);
        assert_eq!(r.relax.per_label[&Ade].counts.tp, 1);
        assert_eq!(r.relax_greedy_deficit, 1);
    }

    #[test]
    fn empty_span_is_rejected() {
        assert!(matches!(
            match_entities(&[s(2, 2, Ade)], &[], MatchMode::Strict),
            Err(Error::Span(_))
        ));
    }
}
