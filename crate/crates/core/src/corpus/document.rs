use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Entity types of the two-entity scheme.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EntityLabel {
    #[serde(rename = "ADE")]
    Ade,
    #[serde(rename = "Drug")]
    Drug,
}

impl EntityLabel {
    pub const ALL: [EntityLabel; 2] = [EntityLabel::Ade, EntityLabel::Drug];

    pub fn as_str(self) -> &'static str {
        match self {
            EntityLabel::Ade => "ADE",
            EntityLabel::Drug => "Drug",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "ADE" => Some(EntityLabel::Ade),
            "Drug" => Some(EntityLabel::Drug),
            _ => None,
        }
    }
}

impl fmt::Display for EntityLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Token span `[start, end)` with an entity label.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EntitySpan {
    pub start: usize,
    pub end: usize,
    pub label: EntityLabel,
}

impl EntitySpan {
    pub fn new(start: usize, end: usize, label: EntityLabel) -> Self {
        Self { start, end, label }
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn overlaps(&self, other: &EntitySpan) -> bool {
        self.start < other.end && other.start < self.end
    }

    pub fn check(&self, n_tokens: usize) -> Result<()> {
        if self.start >= self.end || self.end > n_tokens {
            return Err(Error::Span(format!(
                "({}, {}, {}) outside 0..{n_tokens} or empty",
                self.start, self.end, self.label
            )));
        }
        Ok(())
    }
}

/// Document-level class; the index order is fixed (NEG = 0, ADE = 1).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DocClass {
    #[serde(rename = "NEG")]
    Neg,
    #[serde(rename = "ADE")]
    Ade,
}

impl DocClass {
    pub const ALL: [DocClass; 2] = [DocClass::Neg, DocClass::Ade];

    pub fn index(self) -> usize {
        match self {
            DocClass::Neg => 0,
            DocClass::Ade => 1,
        }
    }

    pub fn from_index(i: usize) -> Self {
        Self::ALL[i]
    }

    pub fn as_str(self) -> &'static str {
        match self {
            DocClass::Neg => "NEG",
            DocClass::Ade => "ADE",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "NEG" => Some(DocClass::Neg),
            "ADE" => Some(DocClass::Ade),
            _ => None,
        }
    }
}

/// Relation label; the index order of the two trainable labels is fixed
/// (Negative = 0, Positive = 1).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RelationLabel {
    Negative,
    Positive,
    Unlabeled,
}

impl RelationLabel {
    pub const TRAINABLE: [RelationLabel; 2] = [RelationLabel::Negative, RelationLabel::Positive];

    pub fn index(self) -> Option<usize> {
        match self {
            RelationLabel::Negative => Some(0),
            RelationLabel::Positive => Some(1),
            RelationLabel::Unlabeled => None,
        }
    }

    pub fn from_index(i: usize) -> Self {
        Self::TRAINABLE[i]
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub text: String,
    /// Unicode scalar offset of the first character.
    pub start: usize,
    /// Unicode scalar offset one past the last character.
    pub end: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldRelation {
    pub ade: EntitySpan,
    pub drug: EntitySpan,
    pub label: RelationLabel,
}

#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub text: String,
    pub tokens: Vec<Token>,
    pub gold_class: Option<DocClass>,
    pub gold_spans: Option<Vec<EntitySpan>>,
    pub gold_relations: Option<Vec<GoldRelation>>,
    /// Parent token index per token, `-1` for a root.
    pub dep_heads: Option<Vec<i64>>,
}

impl Document {
    /// Tokenizes `text` with [`crate::corpus::tokenize`].
    pub fn from_text(doc_id: impl Into<String>, text: impl Into<String>) -> Self {
        let text = text.into();
        let tokens = super::tokenize(&text);
        Self {
            doc_id: doc_id.into(),
            text,
            tokens,
            ..Default::default()
        }
    }

    /// Builds a document from pre-split tokens joined by single spaces.
    pub fn from_tokens<S: AsRef<str>>(doc_id: impl Into<String>, words: &[S]) -> Self {
        let mut text = String::new();
        let mut tokens = Vec::with_capacity(words.len());
        let mut offset = 0;
        for (i, w) in words.iter().enumerate() {
            if i > 0 {
                text.push(' ');
                offset += 1;
            }
            let w = w.as_ref();
            let n = w.chars().count();
            text.push_str(w);
            tokens.push(Token {
                text: w.to_string(),
                start: offset,
                end: offset + n,
            });
            offset += n;
        }
        Self {
            doc_id: doc_id.into(),
            text,
            tokens,
            ..Default::default()
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.tokens.iter().map(|t| t.text.as_str())
    }

    /// Surface text covered by a token span.
    pub fn span_text(&self, span: &EntitySpan) -> String {
        let (Some(first), Some(last)) = (self.tokens.get(span.start), self.tokens.get(span.end.saturating_sub(1)))
        else {
            return String::new();
        };
        self.text
            .chars()
            .skip(first.start)
            .take(last.end - first.start)
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.tokens.len();
        for span in self.gold_spans.iter().flatten() {
            span.check(n)?;
        }
        for rel in self.gold_relations.iter().flatten() {
            rel.ade.check(n)?;
            rel.drug.check(n)?;
        }
        if let Some(heads) = &self.dep_heads {
            check_heads(heads, n)?;
        }
        Ok(())
    }
}

/// Heads must be in range and acyclic.
pub fn check_heads(heads: &[i64], n_tokens: usize) -> Result<()> {
    if heads.len() != n_tokens {
        return Err(Error::Dependency(format!(
            "{} heads for {n_tokens} tokens",
            heads.len()
        )));
    }
    for (i, &h) in heads.iter().enumerate() {
        if h < -1 || h >= n_tokens as i64 || h == i as i64 {
            return Err(Error::Dependency(format!("token {i} has invalid head {h}")));
        }
    }
    // 0 = unvisited, 1 = on current path, 2 = reaches a root
    let mut state = vec![0u8; n_tokens];
    for start in 0..n_tokens {
        let mut path = Vec::new();
        let mut node = start as i64;
        while node >= 0 {
            let u = node as usize;
            match state[u] {
                2 => break,
                1 => {
                    return Err(Error::Dependency(format!("cycle through token {u}")));
                }
                _ => {
                    state[u] = 1;
                    path.push(u);
                    node = heads[u];
                }
            }
        }
        for u in path {
            state[u] = 2;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn span_text_uses_char_offsets() {
        let doc = Document::from_text("d", "café gave me hives");
        let span = EntitySpan::new(3, 4, EntityLabel::Ade);
        assert_eq!(doc.span_text(&span), "hives");
        assert_eq!(doc.span_text(&EntitySpan::new(0, 2, EntityLabel::Drug)), "café gave");
    }

    #[test]
    fn heads_detect_cycles() {
        assert!(check_heads(&[-1, 0, 1], 3).is_ok());
        assert!(check_heads(&[-1, -1], 2).is_ok());
        assert!(matches!(check_heads(&[1, 0], 2), Err(Error::Dependency(_))));
        assert!(matches!(check_heads(&[-1, 2, 1], 3), Err(Error::Dependency(_))));
        assert!(check_heads(&[0], 1).is_err());
        assert!(check_heads(&[-1, 5], 2).is_err());
    }

    #[test]
    fn span_bounds() {
        assert!(EntitySpan::new(0, 1, EntityLabel::Ade).check(1).is_ok());
        assert!(EntitySpan::new(1, 1, EntityLabel::Ade).check(2).is_err());
        assert!(EntitySpan::new(0, 3, EntityLabel::Ade).check(2).is_err());
    }
}
