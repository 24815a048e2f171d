//! Synthetic corpora and word vectors for tests, benchmarks and smoke runs.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{DocClass, Document, EntityLabel, EntitySpan, GoldRelation, RelationLabel};
use crate::embed::EmbeddingStore;
use crate::error::Result;

pub const DRUGS: [&str; 12] = [
    "insulin",
    "advil",
    "lipitor",
    "fluvastatin",
    "aspirin",
    "metformin",
    "warfarin",
    "ibuprofen",
    "prozac",
    "zoloft",
    "tylenol",
    "lisinopril",
];

pub const ADES: [&[&str]; 12] = [
    &["drowsy"],
    &["blurred", "vision"],
    &["cramps"],
    &["nausea"],
    &["headache"],
    &["rash"],
    &["dizziness"],
    &["muscle", "pain"],
    &["insomnia"],
    &["fatigue"],
    &["hair", "loss"],
    &["dry", "mouth"],
];

/// Sentence templates; `D` and `A` mark the drug and reaction slots.
const TEMPLATES: [&[&str]; 6] = [
    &["D", "caused", "A"],
    &["D", "gave", "me", "A"],
    &["A", "after", "taking", "D"],
    &["I", "feel", "A", "since", "D"],
    &["the", "D", "left", "me", "with", "A"],
    &["started", "D", "and", "now", "A"],
];

const FILLER: [&str; 24] = [
    "the", "a", "and", "was", "is", "my", "of", "it", "to", "so", "day", "week", "then", "but", "doctor", "said",
    "been", "for", "on", "with", "that", "just", "this", "today",
];

const NEG_WORDS: [&str; 16] = [
    "fine", "great", "good", "well", "happy", "calm", "normal", "healthy", "better", "relief", "okay", "steady",
    "smooth", "helped", "works", "improved",
];

/// The three example sentences used throughout the pipeline tests, with
/// their gold class, spans (as token texts) and relations.
pub const EXAMPLE_SENTENCES: [&str; 3] = [
    "I feel a bit drowsy & have a little blurred vision after taking insulin.",
    "@yho fluvastatin gave me cramps, but lipitor suits me!",
    "I just took advil and haven't had any gastric problems so far.",
];

/// Pipeline templates modelled on the example sentences. `A` is a reaction,
/// `D` the drug that caused it and `X` a drug unrelated to the reaction.
const ADE_TEMPLATES: [&[&str]; 7] = [
    &[
        "I", "feel", "a", "bit", "A", "&", "have", "a", "little", "A", "after", "taking", "D", ".",
    ],
    &["D", "gave", "me", "A", ",", "and", "A", "too", "."],
    &["after", "taking", "D", "I", "feel", "A", "."],
    &["I", "have", "A", "since", "starting", "D", "."],
    &["D", "left", "me", "with", "A", "and", "a", "little", "A", "."],
    &["D", "gave", "me", "A", ",", "but", "X", "suits", "me", "!"],
    &[
        "I", "feel", "A", "&", "have", "A", "after", "taking", "D", ",", "but", "X", "is", "fine", ".",
    ],
];

const NEG_TEMPLATES: [&[&str]; 6] = [
    &[
        "I", "just", "took", "D", "and", "haven't", "had", "any", "problems", "so", "far", ".",
    ],
    &[
        "I", "just", "took", "D", "and", "haven't", "had", "any", "gastric", "problems", "so", "far", ".",
    ],
    &["D", "works", "well", "for", "me", "!"],
    &["took", "D", "today", ",", "feeling", "fine", "."],
    &["no", "problems", "with", "D", "so", "far", "."],
    &["I", "feel", "great", "since", "taking", "D", "."],
];

/// Every word the generators can emit, plus the example sentences' tokens.
pub fn vocabulary() -> Vec<String> {
    let mut words: Vec<String> = DRUGS.iter().map(|s| s.to_string()).collect();
    words.extend(ADES.iter().flat_map(|a| a.iter().map(|s| s.to_string())));
    words.extend(TEMPLATES.iter().flat_map(|t| t.iter().map(|s| s.to_string())));
    words.extend(FILLER.iter().chain(&NEG_WORDS).map(|s| s.to_string()));
    for s in EXAMPLE_SENTENCES {
        words.extend(crate::corpus::tokenize(s).into_iter().map(|t| t.text));
    }
    words.extend(
        ADE_TEMPLATES
            .iter()
            .chain(&NEG_TEMPLATES)
            .flat_map(|t| t.iter().map(|s| s.to_string())),
    );
    let mut seen = std::collections::HashSet::new();
    words.retain(|w| !matches!(w.as_str(), "D" | "A" | "X") && seen.insert(w.clone()));
    words
}

/// Random vectors, uniform in `[-0.5, 0.5)`, for [`vocabulary`] words.
pub fn embeddings(dim: usize, seed: u64) -> Result<EmbeddingStore> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    EmbeddingStore::from_rows(
        dim,
        vocabulary()
            .into_iter()
            .map(|w| (w, (0..dim).map(|_| rng.gen_range(-0.5..0.5)).collect::<Vec<f32>>())),
    )
}

/// Template sentences with one drug and one reaction each. Every word has a
/// single tag across the corpus.
pub fn ner_corpus(n: usize) -> Vec<Document> {
    (0..n)
        .map(|i| {
            let drug = DRUGS[i % DRUGS.len()];
            let ade = ADES[(i * 5 + i / DRUGS.len()) % ADES.len()];
            let template = TEMPLATES[i % TEMPLATES.len()];
            let mut words = Vec::new();
            let mut spans = Vec::new();
            let mut drug_span = None;
            let mut ade_span = None;
            for slot in template {
                match *slot {
                    "D" => {
                        let s = EntitySpan::new(words.len(), words.len() + 1, EntityLabel::Drug);
                        drug_span = Some(s);
                        spans.push(s);
                        words.push(drug);
                    }
                    "A" => {
                        let s = EntitySpan::new(words.len(), words.len() + ade.len(), EntityLabel::Ade);
                        ade_span = Some(s);
                        spans.push(s);
                        words.extend_from_slice(ade);
                    }
                    w => words.push(w),
                }
            }
            let mut doc = Document::from_tokens(format!("ner-{i}"), &words);
            doc.gold_class = Some(DocClass::Ade);
            doc.gold_spans = Some(spans);
            doc.gold_relations = Some(vec![GoldRelation {
                ade: ade_span.unwrap(),
                drug: drug_span.unwrap(),
                label: RelationLabel::Positive,
            }]);
            doc
        })
        .collect()
}

/// Documents of 4 to 9 words drawn from reaction-and-drug words (ADE class)
/// or calm filler words (NEG class), alternating.
pub fn classification_corpus(n: usize, seed: u64) -> Vec<Document> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ade_words: Vec<&str> = DRUGS
        .iter()
        .copied()
        .chain(ADES.iter().flat_map(|a| a.iter().copied()))
        .collect();
    (0..n)
        .map(|i| {
            let class = if i % 2 == 0 { DocClass::Ade } else { DocClass::Neg };
            let pool: &[&str] = match class {
                DocClass::Ade => &ade_words,
                DocClass::Neg => &NEG_WORDS,
            };
            let len = rng.gen_range(4..10);
            let words: Vec<&str> = (0..len).map(|_| *pool.choose(&mut rng).unwrap()).collect();
            let mut doc = Document::from_tokens(format!("cls-{i}"), &words);
            doc.gold_class = Some(class);
            doc
        })
        .collect()
}

/// Relation documents: filler text with one reaction and two drugs. The
/// positive pair is the drug whose boundary gap to the reaction is below
/// `threshold`; the other drug sits at least `threshold` tokens away.
pub fn relation_corpus(n: usize, threshold: usize, seed: u64) -> Vec<Document> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let near_gap = rng.gen_range(0..threshold);
            let far_gap = rng.gen_range(threshold..threshold + 10);
            let lead = rng.gen_range(0..4);
            let tail = rng.gen_range(0..4);
            let ade = ADES[rng.gen_range(0..ADES.len())];
            let mut drugs: Vec<&str> = DRUGS.choose_multiple(&mut rng, 2).copied().collect();
            drugs.shuffle(&mut rng);
            let near_left = rng.gen_bool(0.5);
            let filler = |rng: &mut ChaCha8Rng, k: usize| -> Vec<&'static str> {
                (0..k).map(|_| *FILLER.choose(rng).unwrap()).collect()
            };

            let mut words: Vec<&str> = filler(&mut rng, lead);
            let (left_gap, right_gap) = if near_left {
                (near_gap, far_gap)
            } else {
                (far_gap, near_gap)
            };
            let left = EntitySpan::new(words.len(), words.len() + 1, EntityLabel::Drug);
            words.push(drugs[0]);
            words.extend(filler(&mut rng, left_gap));
            let ade_span = EntitySpan::new(words.len(), words.len() + ade.len(), EntityLabel::Ade);
            words.extend_from_slice(ade);
            words.extend(filler(&mut rng, right_gap));
            let right = EntitySpan::new(words.len(), words.len() + 1, EntityLabel::Drug);
            words.push(drugs[1]);
            words.extend(filler(&mut rng, tail));

            let positive = if near_left { left } else { right };
            let mut doc = Document::from_tokens(format!("rel-{i}"), &words);
            doc.gold_class = Some(DocClass::Ade);
            doc.gold_spans = Some(vec![left, ade_span, right]);
            doc.gold_relations = Some(vec![GoldRelation {
                ade: ade_span,
                drug: positive,
                label: RelationLabel::Positive,
            }]);
            doc
        })
        .collect()
}

/// Mixed-class corpus for training all three stages, built from templates
/// shaped like the example sentences. Classes alternate (ADE first). A
/// generated document identical to an example sentence is replaced by the
/// next draw, so the examples stay unseen.
pub fn pipeline_corpus(n: usize, seed: u64) -> Vec<Document> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let examples: Vec<Vec<String>> = EXAMPLE_SENTENCES
        .iter()
        .map(|s| crate::corpus::tokenize(s).into_iter().map(|t| t.text).collect())
        .collect();
    let mut docs = Vec::with_capacity(n);
    while docs.len() < n {
        let i = docs.len();
        let class = if i % 2 == 0 { DocClass::Ade } else { DocClass::Neg };
        let template = match class {
            DocClass::Ade => ADE_TEMPLATES[rng.gen_range(0..ADE_TEMPLATES.len())],
            DocClass::Neg => NEG_TEMPLATES[rng.gen_range(0..NEG_TEMPLATES.len())],
        };
        let pair: Vec<&str> = DRUGS.choose_multiple(&mut rng, 2).copied().collect();
        let mut words: Vec<&str> = Vec::new();
        let mut spans = Vec::new();
        let (mut ades, mut drug) = (Vec::new(), None);
        for slot in template {
            let start = words.len();
            match *slot {
                "A" => {
                    let mut a = ADES[rng.gen_range(0..ADES.len())];
                    while ades.iter().any(|s: &EntitySpan| words[s.start..s.end] == *a) {
                        a = ADES[rng.gen_range(0..ADES.len())];
                    }
                    words.extend_from_slice(a);
                    let s = EntitySpan::new(start, words.len(), EntityLabel::Ade);
                    ades.push(s);
                    spans.push(s);
                }
                "D" | "X" => {
                    words.push(if *slot == "D" { pair[0] } else { pair[1] });
                    let s = EntitySpan::new(start, start + 1, EntityLabel::Drug);
                    if *slot == "D" {
                        drug = Some(s);
                    }
                    spans.push(s);
                }
                w => words.push(w),
            }
        }
        if examples
            .iter()
            .any(|e| e.iter().map(String::as_str).eq(words.iter().copied()))
        {
            continue;
        }
        let mut doc = Document::from_tokens(format!("pipe-{i}"), &words);
        doc.gold_class = Some(class);
        doc.gold_relations = Some(
            ades.iter()
                .map(|&ade| GoldRelation {
                    ade,
                    drug: drug.expect("every template has a drug"),
                    label: RelationLabel::Positive,
                })
                .collect(),
        );
        doc.gold_spans = Some(spans);
        docs.push(doc);
    }
    docs
}

/// Labeled versions of the three example sentences.
pub fn example_documents() -> Vec<Document> {
    let spans_of = |doc: &Document, items: &[(&str, EntityLabel)]| -> Vec<EntitySpan> {
        let words: Vec<&str> = doc.words().collect();
        items
            .iter()
            .map(|(phrase, label)| {
                let parts: Vec<&str> = phrase.split(' ').collect();
                let start = (0..words.len())
                    .find(|&i| words[i..].starts_with(&parts))
                    .unwrap_or_else(|| panic!("{phrase} not in {}", doc.text));
                EntitySpan::new(start, start + parts.len(), *label)
            })
            .collect()
    };
    use EntityLabel::{Ade, Drug};

    let mut first = Document::from_text("example-1", EXAMPLE_SENTENCES[0]);
    let s = spans_of(&first, &[("drowsy", Ade), ("blurred vision", Ade), ("insulin", Drug)]);
    first.gold_class = Some(DocClass::Ade);
    first.gold_relations = Some(vec![
        GoldRelation {
            ade: s[0],
            drug: s[2],
            label: RelationLabel::Positive,
        },
        GoldRelation {
            ade: s[1],
            drug: s[2],
            label: RelationLabel::Positive,
        },
    ]);
    first.gold_spans = Some(s);

    let mut second = Document::from_text("example-2", EXAMPLE_SENTENCES[1]);
    let s = spans_of(&second, &[("fluvastatin", Drug), ("cramps", Ade), ("lipitor", Drug)]);
    second.gold_class = Some(DocClass::Ade);
    second.gold_relations = Some(vec![GoldRelation {
        ade: s[1],
        drug: s[0],
        label: RelationLabel::Positive,
    }]);
    second.gold_spans = Some(s);

    let mut third = Document::from_text("example-3", EXAMPLE_SENTENCES[2]);
    third.gold_class = Some(DocClass::Neg);
    third.gold_spans = Some(Vec::new());
    third.gold_relations = Some(Vec::new());

    vec![first, second, third]
}
