use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::Result;

use super::document::{DocClass, Document, EntityLabel, RelationLabel};
use super::relations::labeled_candidates;

/// Corpus counts. `entities` counts spans per label; `entity_tags` counts
/// the tokens those spans cover (B and I tags).
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub n_sentences: usize,
    pub n_tokens: usize,
    pub entities: BTreeMap<String, usize>,
    pub entity_tags: BTreeMap<String, usize>,
    pub n_ade_docs: usize,
    pub n_neg_docs: usize,
    pub n_positive_relations: usize,
    pub n_negative_relations: usize,
}

impl CorpusStats {
    pub fn entity_count(&self, label: EntityLabel) -> usize {
        self.entities.get(label.as_str()).copied().unwrap_or(0)
    }

    pub fn tag_count(&self, label: EntityLabel) -> usize {
        self.entity_tags.get(label.as_str()).copied().unwrap_or(0)
    }

    pub fn total_entities(&self) -> usize {
        self.entities.values().sum()
    }
}

/// Relation counts come from [`labeled_candidates`] for documents that
/// carry gold relations.
pub fn corpus_stats(docs: &[Document]) -> Result<CorpusStats> {
    let mut stats = CorpusStats::default();
    for label in EntityLabel::ALL {
        stats.entities.insert(label.to_string(), 0);
        stats.entity_tags.insert(label.to_string(), 0);
    }
    for doc in docs {
        stats.n_sentences += 1;
        stats.n_tokens += doc.len();
        match doc.gold_class {
            Some(DocClass::Ade) => stats.n_ade_docs += 1,
            Some(DocClass::Neg) => stats.n_neg_docs += 1,
            None => {}
        }
        for span in doc.gold_spans.iter().flatten() {
            *stats.entities.get_mut(span.label.as_str()).unwrap() += 1;
            *stats.entity_tags.get_mut(span.label.as_str()).unwrap() += span.len();
        }
        if doc.gold_relations.is_some() {
            for c in labeled_candidates(doc)? {
                match c.label {
                    RelationLabel::Positive => stats.n_positive_relations += 1,
                    RelationLabel::Negative => stats.n_negative_relations += 1,
                    RelationLabel::Unlabeled => {}
                }
            }
        }
    }
    Ok(stats)
}
