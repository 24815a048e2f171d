//! Generators and brute-force oracles shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeSet;

use ademiner::corpus::{Document, EntityLabel, EntitySpan, GoldRelation, RelationLabel, Tag};
use rand::seq::SliceRandom;
use rand::Rng;

pub const LABELS: [EntityLabel; 2] = [EntityLabel::Ade, EntityLabel::Drug];

/// Non-overlapping spans over `n` tokens, sorted.
pub fn random_valid_spans(rng: &mut impl Rng, n: usize) -> Vec<EntitySpan> {
    let mut spans = Vec::new();
    let mut i = 0;
    while i < n {
        if rng.gen_bool(0.4) {
            let len = rng.gen_range(1..=(n - i).min(4));
            spans.push(EntitySpan::new(i, i + len, *LABELS.choose(rng).unwrap()));
            i += len;
        } else {
            i += 1;
        }
    }
    spans
}

/// Any spans (possibly overlapping, no duplicates) over `n` tokens.
pub fn random_spans(rng: &mut impl Rng, n: usize, max: usize) -> Vec<EntitySpan> {
    let k = rng.gen_range(0..=max);
    let mut set = BTreeSet::new();
    for _ in 0..k {
        let s = rng.gen_range(0..n);
        let e = rng.gen_range(s + 1..=n);
        set.insert(EntitySpan::new(s, e, *LABELS.choose(rng).unwrap()));
    }
    set.into_iter().collect()
}

pub fn random_tag(rng: &mut impl Rng, bioes: bool) -> Tag {
    let l = *LABELS.choose(rng).unwrap();
    match rng.gen_range(0..if bioes { 5 } else { 3 }) {
        0 => Tag::O,
        1 => Tag::B(l),
        2 => Tag::I(l),
        3 => Tag::E(l),
        _ => Tag::S(l),
    }
}

/// Sorted, non-empty, in range and pairwise disjoint.
pub fn spans_are_valid(spans: &[EntitySpan], n: usize) -> bool {
    spans.iter().all(|s| s.start < s.end && s.end <= n) && spans.windows(2).all(|w| w[0].end <= w[1].start)
}

/// Every set of pairwise one-to-one matches, maximised by enumeration.
pub fn brute_force_matches(
    gold: &[EntitySpan],
    pred: &[EntitySpan],
    accepts: &dyn Fn(&EntitySpan, &EntitySpan) -> bool,
) -> usize {
    fn go(
        i: usize,
        gold: &[EntitySpan],
        pred: &[EntitySpan],
        used: &mut Vec<bool>,
        accepts: &dyn Fn(&EntitySpan, &EntitySpan) -> bool,
    ) -> usize {
        if i == gold.len() {
            return 0;
        }
        let mut best = go(i + 1, gold, pred, used, accepts);
        for j in 0..pred.len() {
            if !used[j] && accepts(&gold[i], &pred[j]) {
                used[j] = true;
                best = best.max(1 + go(i + 1, gold, pred, used, accepts));
                used[j] = false;
            }
        }
        best
    }
    go(0, gold, pred, &mut vec![false; pred.len()], accepts)
}

pub fn strict_accepts(g: &EntitySpan, p: &EntitySpan) -> bool {
    g == p
}

pub fn relax_accepts(g: &EntitySpan, p: &EntitySpan) -> bool {
    g.label == p.label && g.start < p.end && p.start < g.end
}

/// A document with random ADE and Drug spans and a random subset of the
/// ADE x Drug pairs annotated positive (duplicates included).
pub fn random_relation_doc(rng: &mut impl Rng, id: usize) -> Document {
    let n = rng.gen_range(1..=20);
    let words: Vec<String> = (0..n).map(|i| format!("w{i}")).collect();
    let mut doc = Document::from_tokens(format!("doc-{id}"), &words);
    let spans = random_valid_spans(rng, n);
    let ades: Vec<_> = spans.iter().filter(|s| s.label == EntityLabel::Ade).copied().collect();
    let drugs: Vec<_> = spans.iter().filter(|s| s.label == EntityLabel::Drug).copied().collect();
    let mut relations = Vec::new();
    for a in &ades {
        for d in &drugs {
            if rng.gen_bool(0.3) {
                for _ in 0..rng.gen_range(1..=2) {
                    relations.push(GoldRelation {
                        ade: *a,
                        drug: *d,
                        label: RelationLabel::Positive,
                    });
                }
            }
        }
    }
    relations.shuffle(rng);
    doc.gold_spans = Some(spans);
    doc.gold_relations = Some(relations);
    doc
}

/// Random parent array forming a forest (each node's head has a lower
/// position in a random order, so there are no cycles).
pub fn random_forest(rng: &mut impl Rng, n: usize) -> Vec<i64> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut heads = vec![-1i64; n];
    for k in 1..n {
        if rng.gen_bool(0.9) {
            heads[order[k]] = order[rng.gen_range(0..k)] as i64;
        }
    }
    heads
}

/// Tree distance through the lowest common ancestor.
pub fn lca_distance(heads: &[i64], a: usize, b: usize) -> Option<usize> {
    let ancestors = |mut u: usize| {
        let mut path = vec![u];
        while heads[u] >= 0 {
            u = heads[u] as usize;
            path.push(u);
        }
        path
    };
    let (pa, pb) = (ancestors(a), ancestors(b));
    pa.iter()
        .enumerate()
        .find_map(|(i, u)| pb.iter().position(|v| v == u).map(|j| i + j))
}
