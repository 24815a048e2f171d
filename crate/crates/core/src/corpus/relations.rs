//! Relation candidates: every (ADE, Drug) pair of a document, with
//! negatives taken as the candidates that are not annotated positive.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::document::{Document, EntityLabel, EntitySpan, RelationLabel};

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RelationCandidate {
    pub doc_id: String,
    pub ade: EntitySpan,
    pub drug: EntitySpan,
    pub label: RelationLabel,
}

impl RelationCandidate {
    pub fn pair(&self) -> (EntitySpan, EntitySpan) {
        (self.ade, self.drug)
    }
}

/// ADE × Drug over `spans`, ADE-major in the order given, all unlabeled.
pub fn candidates_from_spans(doc_id: &str, spans: &[EntitySpan]) -> Vec<RelationCandidate> {
    let ades = spans.iter().filter(|s| s.label == EntityLabel::Ade);
    let drugs: Vec<_> = spans.iter().filter(|s| s.label == EntityLabel::Drug).collect();
    ades.flat_map(|a| {
        drugs.iter().map(move |d| RelationCandidate {
            doc_id: doc_id.to_string(),
            ade: *a,
            drug: **d,
            label: RelationLabel::Unlabeled,
        })
    })
    .collect()
}

/// Candidates over the document's gold spans; empty when it has none.
pub fn generate_relation_candidates(doc: &Document) -> Vec<RelationCandidate> {
    candidates_from_spans(&doc.doc_id, doc.gold_spans.as_deref().unwrap_or(&[]))
}

/// Candidates of `doc` not in `positives`, labeled negative.
///
/// Every positive pair must be a candidate of the document.
pub fn sample_negative_relations(
    doc: &Document,
    positives: &[(EntitySpan, EntitySpan)],
) -> Result<Vec<RelationCandidate>> {
    negatives_among(generate_relation_candidates(doc), positives, &doc.doc_id)
}

fn negatives_among(
    candidates: Vec<RelationCandidate>,
    positives: &[(EntitySpan, EntitySpan)],
    doc_id: &str,
) -> Result<Vec<RelationCandidate>> {
    let all: BTreeSet<_> = candidates.iter().map(RelationCandidate::pair).collect();
    for (ade, drug) in positives {
        if !all.contains(&(*ade, *drug)) {
            return Err(Error::Consistency(format!(
                "positive pair ({ade:?}, {drug:?}) is not an ADE x Drug candidate of {doc_id}"
            )));
        }
    }
    let positives: BTreeSet<_> = positives.iter().copied().collect();
    Ok(candidates
        .into_iter()
        .filter(|c| !positives.contains(&c.pair()))
        .map(|c| RelationCandidate {
            label: RelationLabel::Negative,
            ..c
        })
        .collect())
}

/// Labeled training candidates: annotated positive pairs plus sampled
/// negatives. Entities are the gold spans together with any span named in
/// a gold relation. Duplicate annotations collapse to one candidate.
pub fn labeled_candidates(doc: &Document) -> Result<Vec<RelationCandidate>> {
    let mut spans: Vec<EntitySpan> = doc.gold_spans.clone().unwrap_or_default();
    for rel in doc.gold_relations.iter().flatten() {
        for s in [rel.ade, rel.drug] {
            if !spans.contains(&s) {
                spans.push(s);
            }
        }
    }
    let candidates = candidates_from_spans(&doc.doc_id, &spans);
    let mut positives = Vec::new();
    for rel in doc.gold_relations.iter().flatten() {
        if rel.ade.label != EntityLabel::Ade || rel.drug.label != EntityLabel::Drug {
            return Err(Error::Consistency(format!(
                "relation in {} must pair an ADE span with a Drug span",
                doc.doc_id
            )));
        }
        if rel.label == RelationLabel::Positive && !positives.contains(&(rel.ade, rel.drug)) {
            positives.push((rel.ade, rel.drug));
        }
    }
    let mut out: Vec<RelationCandidate> = positives
        .iter()
        .map(|&(ade, drug)| RelationCandidate {
            doc_id: doc.doc_id.clone(),
            ade,
            drug,
            label: RelationLabel::Positive,
        })
        .collect();
    out.extend(negatives_among(candidates, &positives, &doc.doc_id)?);
    Ok(out)
}
