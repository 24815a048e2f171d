//! Pair features:
//!
//! ```text
//! [ ADE span vector | Drug span vector | cosine | signed distance
//!   | syntactic distance | dependency flag | ADE left context | ADE right context
//!   | Drug left context | Drug right context | zero padding ]
//! ```
//!
//! Span and context vectors are means of word vectors. The signed distance
//! is `(drug.start - ade.start) / doc length`. Context windows hold up to
//! `window` tokens on each side of each entity.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::corpus::{check_heads, Document, EntitySpan, RelationCandidate};
use crate::embed::EmbeddingStore;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum HeadToken {
    First,
    #[default]
    Last,
}

impl HeadToken {
    pub fn of(self, span: &EntitySpan) -> usize {
        match self {
            HeadToken::First => span.start,
            HeadToken::Last => span.end - 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureLayout {
    pub dim: usize,
    pub window: usize,
    pub head: HeadToken,
    /// The vector is zero-padded to a multiple of this.
    pub pad_multiple: usize,
}

impl FeatureLayout {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            window: 25,
            head: HeadToken::Last,
            pad_multiple: 16,
        }
    }

    /// Length before padding, `6 * dim + 4`.
    pub fn used_len(&self) -> usize {
        6 * self.dim + 4
    }

    pub fn len(&self) -> usize {
        let m = self.pad_multiple.max(1);
        self.used_len().div_ceil(m) * m
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

fn mean_vector<'a>(store: &EmbeddingStore, words: impl Iterator<Item = &'a str>, out: &mut [f32]) {
    let mut sum = vec![0.0f64; store.dim()];
    let mut n = 0usize;
    for w in words {
        for (s, v) in sum.iter_mut().zip(store.lookup(w)) {
            *s += f64::from(*v);
        }
        n += 1;
    }
    for (o, s) in out.iter_mut().zip(sum) {
        *o = if n == 0 { 0.0 } else { (s / n as f64) as f32 };
    }
}

fn words_in<'a>(doc: &'a Document, start: usize, end: usize) -> impl Iterator<Item = &'a str> {
    doc.tokens[start..end].iter().map(|t| t.text.as_str())
}

/// Mean vector of the span's tokens.
pub fn span_embedding(doc: &Document, span: &EntitySpan, store: &EmbeddingStore) -> Result<Vec<f32>> {
    span.check(doc.len())?;
    let mut out = vec![0.0; store.dim()];
    mean_vector(store, words_in(doc, span.start, span.end), &mut out);
    Ok(out)
}

/// Cosine similarity; 0 when either vector is zero.
pub fn semantic_similarity(a: &[f32], b: &[f32]) -> f32 {
    assert_eq!(a.len(), b.len(), "vectors of different dimension");
    let (mut dot, mut na, mut nb) = (0.0f64, 0.0f64, 0.0f64);
    for (x, y) in a.iter().zip(b) {
        let (x, y) = (f64::from(*x), f64::from(*y));
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0) as f32
}

/// Token gap between two spans; 0 when they touch or overlap.
pub fn boundary_distance(a: &EntitySpan, b: &EntitySpan) -> usize {
    if a.end <= b.start {
        b.start - a.end
    } else if b.end <= a.start {
        a.start - b.end
    } else {
        0
    }
}

/// Path length between the spans' head tokens in the dependency tree, with
/// flag `true`. Without dependency heads, or when the heads lie in
/// different trees, the boundary distance with flag `false`.
pub fn syntactic_distance(doc: &Document, a: &EntitySpan, b: &EntitySpan, head: HeadToken) -> Result<(usize, bool)> {
    a.check(doc.len())?;
    b.check(doc.len())?;
    let Some(heads) = &doc.dep_heads else {
        return Ok((boundary_distance(a, b), false));
    };
    check_heads(heads, doc.len())?;
    match tree_distance(heads, head.of(a), head.of(b)) {
        Some(d) => Ok((d, true)),
        None => Ok((boundary_distance(a, b), false)),
    }
}

/// Breadth-first search over the undirected tree edges.
pub fn tree_distance(heads: &[i64], from: usize, to: usize) -> Option<usize> {
    let n = heads.len();
    let mut adj = vec![Vec::new(); n];
    for (i, &h) in heads.iter().enumerate() {
        if h >= 0 {
            adj[i].push(h as usize);
            adj[h as usize].push(i);
        }
    }
    let mut dist = vec![usize::MAX; n];
    dist[from] = 0;
    let mut queue = VecDeque::from([from]);
    while let Some(u) = queue.pop_front() {
        if u == to {
            return Some(dist[u]);
        }
        for &v in &adj[u] {
            if dist[v] == usize::MAX {
                dist[v] = dist[u] + 1;
                queue.push_back(v);
            }
        }
    }
    None
}

pub fn build_features(
    doc: &Document,
    candidate: &RelationCandidate,
    store: &EmbeddingStore,
    layout: &FeatureLayout,
) -> Result<Vec<f32>> {
    if store.dim() != layout.dim {
        return Err(Error::Dimension {
            expected: layout.dim,
            actual: store.dim(),
            context: "relation features".into(),
        });
    }
    let (ade, drug) = (&candidate.ade, &candidate.drug);
    let d = layout.dim;
    let n = doc.len();
    let mut v = vec![0.0f32; layout.len()];

    let ade_vec = span_embedding(doc, ade, store)?;
    let drug_vec = span_embedding(doc, drug, store)?;
    v[..d].copy_from_slice(&ade_vec);
    v[d..2 * d].copy_from_slice(&drug_vec);
    let (syn, dep) = syntactic_distance(doc, ade, drug, layout.head)?;
    v[2 * d] = semantic_similarity(&ade_vec, &drug_vec);
    v[2 * d + 1] = (drug.start as f32 - ade.start as f32) / n as f32;
    v[2 * d + 2] = syn as f32;
    v[2 * d + 3] = if dep { 1.0 } else { 0.0 };

    let w = layout.window;
    let mut at = 2 * d + 4;
    for span in [ade, drug] {
        mean_vector(
            store,
            words_in(doc, span.start.saturating_sub(w), span.start),
            &mut v[at..at + d],
        );
        at += d;
        mean_vector(
            store,
            words_in(doc, span.end, (span.end + w).min(n)),
            &mut v[at..at + d],
        );
        at += d;
    }
    Ok(v)
}
