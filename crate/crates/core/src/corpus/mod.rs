//! Documents, tokenization, tag schemes and corpus readers.

mod conll;
mod document;
mod jsonl;
mod kfold;
mod relations;
mod stats;
pub mod tags;
mod tokenize;

pub use conll::{format_conll, parse_conll, read_conll, write_conll, write_sentence, ConllCorpus};
pub use document::{check_heads, DocClass, Document, EntityLabel, EntitySpan, GoldRelation, RelationLabel, Token};
pub use jsonl::{
    doc_to_json, parse_candidates, parse_doc_line, parse_jsonl_docs, read_jsonl_docs, write_candidates,
    write_jsonl_docs, CandidateRecord,
};
pub use kfold::{kfold_split, Fold, DEV_FRACTION_DENOM};
pub use relations::{
    candidates_from_spans, generate_relation_candidates, labeled_candidates, sample_negative_relations,
    RelationCandidate,
};
pub use stats::{corpus_stats, CorpusStats};
pub use tags::{Tag, TagScheme};
pub use tokenize::tokenize;
