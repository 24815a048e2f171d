//! CoNLL files: one `token<TAB>tag` per line, blank lines between
//! sentences. Extra middle columns are ignored; the tag is the last column.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{io_err, Error, Result};

use super::document::{Document, EntitySpan};
use super::tags::{self, Tag, TagScheme};

/// Documents read from a CoNLL file and the number of repaired tags.
#[derive(Clone, Debug, Default)]
pub struct ConllCorpus {
    pub docs: Vec<Document>,
    pub repaired_tags: usize,
}

pub fn read_conll(path: impl AsRef<Path>, scheme: TagScheme) -> Result<ConllCorpus> {
    let path = path.as_ref();
    let file = File::open(path).map_err(io_err(path))?;
    parse_conll(BufReader::new(file), scheme)
}

pub fn parse_conll(reader: impl BufRead, scheme: TagScheme) -> Result<ConllCorpus> {
    let mut corpus = ConllCorpus::default();
    let mut words: Vec<String> = Vec::new();
    let mut sentence_tags: Vec<Tag> = Vec::new();

    let flush = |words: &mut Vec<String>, sentence_tags: &mut Vec<Tag>, corpus: &mut ConllCorpus| {
        if words.is_empty() {
            return;
        }
        let mut doc = Document::from_tokens(format!("sent-{}", corpus.docs.len()), words);
        let decoded = tags::decode(sentence_tags, scheme);
        corpus.repaired_tags += decoded.repairs;
        doc.gold_spans = Some(decoded.spans);
        corpus.docs.push(doc);
        words.clear();
        sentence_tags.clear();
    };

    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            flush(&mut words, &mut sentence_tags, &mut corpus);
            continue;
        }
        if trimmed.starts_with("-DOCSTART-") {
            continue;
        }
        let cols: Vec<&str> = trimmed.split(['\t', ' ']).filter(|c| !c.is_empty()).collect();
        if cols.len() < 2 {
            return Err(Error::Format {
                line: line_no,
                message: format!("missing tag column in {trimmed:?}"),
            });
        }
        let tag_str = cols[cols.len() - 1];
        let tag = Tag::parse(tag_str, scheme).ok_or_else(|| Error::Format {
            line: line_no,
            message: format!("unknown tag {tag_str:?}"),
        })?;
        words.push(cols[0].to_string());
        sentence_tags.push(tag);
    }
    flush(&mut words, &mut sentence_tags, &mut corpus);
    if corpus.repaired_tags > 0 {
        log::warn!("repaired {} malformed tags", corpus.repaired_tags);
    }
    Ok(corpus)
}

/// Writes `docs` with their gold spans (absent spans mean all `O`).
pub fn write_conll(docs: &[Document], path: impl AsRef<Path>, scheme: TagScheme) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    format_conll(docs, &mut w, scheme)?;
    w.flush().map_err(io_err(path))
}

pub fn format_conll(docs: &[Document], w: &mut impl Write, scheme: TagScheme) -> Result<()> {
    for (i, doc) in docs.iter().enumerate() {
        let spans = doc.gold_spans.as_deref().unwrap_or(&[]);
        if i > 0 {
            writeln!(w)?;
        }
        write_sentence(doc, spans, w, scheme)?;
    }
    Ok(())
}

/// One sentence block for `spans` (gold or predicted).
pub fn write_sentence(doc: &Document, spans: &[EntitySpan], w: &mut impl Write, scheme: TagScheme) -> Result<()> {
    let tags = tags::encode(doc.len(), spans, scheme).map_err(|e| annotate(e, &doc.doc_id))?;
    for (tok, tag) in doc.tokens.iter().zip(tags) {
        writeln!(w, "{}\t{}", tok.text, tag)?;
    }
    Ok(())
}

fn annotate(e: Error, doc_id: &str) -> Error {
    match e {
        Error::Overlap(msg) => Error::Overlap(format!("{doc_id}: {msg}")),
        other => other,
    }
}
