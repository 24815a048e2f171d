//! JSON-lines documents.
//!
//! ```text
//! {"doc_id": "d1", "text": "insulin gave me drowsiness", "label": "ADE",
//!  "spans": [[0, 7, "Drug"], [16, 26, "ADE"]],
//!  "relations": [{"ade": [16, 26], "drug": [0, 7], "label": "Positive"}],
//!  "dep_heads": [1, -1, 1, 1]}
//! ```
//!
//! Span and relation offsets are Unicode scalar offsets into `text` and must
//! fall on token boundaries. Relations without a label are positive.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{io_err, Error, Result};

use super::document::{DocClass, Document, EntityLabel, EntitySpan, GoldRelation, RelationLabel};
use super::relations::RelationCandidate;

#[derive(Debug, Deserialize, Serialize)]
struct RawDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    doc_id: Option<String>,
    text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    spans: Option<Vec<(usize, usize, String)>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    relations: Option<Vec<RawRelation>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    dep_heads: Option<Vec<i64>>,
}

#[derive(Debug, Deserialize, Serialize)]
struct RawRelation {
    ade: (usize, usize),
    drug: (usize, usize),
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label: Option<RelationLabel>,
}

pub fn read_jsonl_docs(path: impl AsRef<Path>) -> Result<Vec<Document>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(io_err(path))?;
    parse_jsonl_docs(BufReader::new(file))
}

pub fn parse_jsonl_docs(reader: impl BufRead) -> Result<Vec<Document>> {
    let mut docs = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        docs.push(parse_doc_line(&line, idx + 1)?);
    }
    Ok(docs)
}

/// Parses one JSONL record; `line_no` is 1-based and used for errors and
/// the default `doc_id`.
pub fn parse_doc_line(line: &str, line_no: usize) -> Result<Document> {
    let raw: RawDoc = serde_json::from_str(line).map_err(|e| Error::Format {
        line: line_no,
        message: e.to_string(),
    })?;
    let format = |message: String| Error::Format { line: line_no, message };
    let doc_id = raw.doc_id.unwrap_or_else(|| format!("line-{line_no}"));
    let mut doc = Document::from_text(doc_id, raw.text);

    if let Some(label) = raw.label {
        doc.gold_class = Some(DocClass::parse(&label).ok_or_else(|| format(format!("unknown label {label:?}")))?);
    }

    let aligner = Aligner::new(&doc);
    if let Some(spans) = raw.spans {
        let mut out = Vec::with_capacity(spans.len());
        for (s, e, label) in spans {
            let label = EntityLabel::parse(&label).ok_or_else(|| format(format!("unknown entity label {label:?}")))?;
            out.push(aligner.align(&doc.doc_id, s, e, label)?);
        }
        doc.gold_spans = Some(out);
    }

    if let Some(relations) = raw.relations {
        let mut out = Vec::with_capacity(relations.len());
        for rel in relations {
            out.push(GoldRelation {
                ade: aligner.align(&doc.doc_id, rel.ade.0, rel.ade.1, EntityLabel::Ade)?,
                drug: aligner.align(&doc.doc_id, rel.drug.0, rel.drug.1, EntityLabel::Drug)?,
                label: rel.label.unwrap_or(RelationLabel::Positive),
            });
        }
        doc.gold_relations = Some(out);
    }

    if let Some(heads) = raw.dep_heads {
        if heads.len() != doc.len() {
            return Err(format(format!(
                "dep_heads has {} entries for {} tokens",
                heads.len(),
                doc.len()
            )));
        }
        doc.dep_heads = Some(heads);
    }
    Ok(doc)
}

struct Aligner {
    by_start: HashMap<usize, usize>,
    by_end: HashMap<usize, usize>,
}

impl Aligner {
    fn new(doc: &Document) -> Self {
        Self {
            by_start: doc.tokens.iter().enumerate().map(|(i, t)| (t.start, i)).collect(),
            by_end: doc.tokens.iter().enumerate().map(|(i, t)| (t.end, i)).collect(),
        }
    }

    fn align(&self, doc_id: &str, start: usize, end: usize, label: EntityLabel) -> Result<EntitySpan> {
        match (self.by_start.get(&start), self.by_end.get(&end)) {
            (Some(&s), Some(&e)) if s <= e => Ok(EntitySpan::new(s, e + 1, label)),
            _ => Err(Error::Alignment {
                doc_id: doc_id.to_string(),
                span: (start, end, label.to_string()),
            }),
        }
    }
}

fn char_span(doc: &Document, span: &EntitySpan) -> (usize, usize) {
    (doc.tokens[span.start].start, doc.tokens[span.end - 1].end)
}

/// Serializes a document in the input format (offsets from its tokens).
pub fn doc_to_json(doc: &Document) -> serde_json::Value {
    let raw = RawDoc {
        doc_id: Some(doc.doc_id.clone()),
        text: doc.text.clone(),
        label: doc.gold_class.map(|c| c.as_str().to_string()),
        spans: doc.gold_spans.as_ref().map(|spans| {
            spans
                .iter()
                .map(|s| {
                    let (a, b) = char_span(doc, s);
                    (a, b, s.label.to_string())
                })
                .collect()
        }),
        relations: doc.gold_relations.as_ref().map(|rels| {
            rels.iter()
                .map(|r| RawRelation {
                    ade: char_span(doc, &r.ade),
                    drug: char_span(doc, &r.drug),
                    label: Some(r.label),
                })
                .collect()
        }),
        dep_heads: doc.dep_heads.clone(),
    };
    serde_json::to_value(raw).expect("serializable")
}

pub fn write_jsonl_docs(docs: &[Document], w: &mut impl Write) -> Result<()> {
    for doc in docs {
        serde_json::to_writer(&mut *w, &doc_to_json(doc))?;
        writeln!(w)?;
    }
    Ok(())
}

/// Relation candidate record with token spans.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateRecord {
    pub doc_id: String,
    pub ade: (usize, usize),
    pub drug: (usize, usize),
    pub label: RelationLabel,
}

impl From<&RelationCandidate> for CandidateRecord {
    fn from(c: &RelationCandidate) -> Self {
        Self {
            doc_id: c.doc_id.clone(),
            ade: (c.ade.start, c.ade.end),
            drug: (c.drug.start, c.drug.end),
            label: c.label,
        }
    }
}

impl From<CandidateRecord> for RelationCandidate {
    fn from(r: CandidateRecord) -> Self {
        RelationCandidate {
            doc_id: r.doc_id,
            ade: EntitySpan::new(r.ade.0, r.ade.1, EntityLabel::Ade),
            drug: EntitySpan::new(r.drug.0, r.drug.1, EntityLabel::Drug),
            label: r.label,
        }
    }
}

pub fn write_candidates(candidates: &[RelationCandidate], w: &mut impl Write) -> Result<()> {
    for c in candidates {
        serde_json::to_writer(&mut *w, &CandidateRecord::from(c))?;
        writeln!(w)?;
    }
    Ok(())
}

pub fn parse_candidates(reader: impl BufRead) -> Result<Vec<RelationCandidate>> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: CandidateRecord = serde_json::from_str(&line).map_err(|e| Error::Format {
            line: idx + 1,
            message: e.to_string(),
        })?;
        out.push(rec.into());
    }
    Ok(out)
}
