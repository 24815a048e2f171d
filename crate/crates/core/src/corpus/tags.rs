//! IOB and BIOES tag sequences and their conversion to entity spans.

use std::fmt;

use crate::error::{Error, Result};

use super::document::{EntityLabel, EntitySpan};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum TagScheme {
    #[default]
    Iob,
    Bioes,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Tag {
    O,
    B(EntityLabel),
    I(EntityLabel),
    E(EntityLabel),
    S(EntityLabel),
}

impl Tag {
    /// The tagset predicted by the entity tagger, in output-index order.
    pub const IOB_TAGSET: [Tag; 5] = [
        Tag::O,
        Tag::B(EntityLabel::Ade),
        Tag::I(EntityLabel::Ade),
        Tag::B(EntityLabel::Drug),
        Tag::I(EntityLabel::Drug),
    ];

    pub fn iob_index(self) -> Option<usize> {
        Self::IOB_TAGSET.iter().position(|&t| t == self)
    }

    pub fn parse(s: &str, scheme: TagScheme) -> Option<Tag> {
        if s == "O" {
            return Some(Tag::O);
        }
        let (prefix, label) = s.split_once('-')?;
        let label = EntityLabel::parse(label)?;
        match (prefix, scheme) {
            ("B", _) => Some(Tag::B(label)),
            ("I", _) => Some(Tag::I(label)),
            ("E", TagScheme::Bioes) => Some(Tag::E(label)),
            ("S", TagScheme::Bioes) => Some(Tag::S(label)),
            _ => None,
        }
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tag::O => f.write_str("O"),
            Tag::B(l) => write!(f, "B-{l}"),
            Tag::I(l) => write!(f, "I-{l}"),
            Tag::E(l) => write!(f, "E-{l}"),
            Tag::S(l) => write!(f, "S-{l}"),
        }
    }
}

fn check_no_overlap(n: usize, spans: &[EntitySpan]) -> Result<Vec<EntitySpan>> {
    let mut sorted = spans.to_vec();
    sorted.sort();
    for s in &sorted {
        s.check(n)?;
    }
    for w in sorted.windows(2) {
        if w[0].overlaps(&w[1]) {
            return Err(Error::Overlap(format!("{:?} and {:?}", w[0], w[1])));
        }
    }
    Ok(sorted)
}

pub fn encode(n: usize, spans: &[EntitySpan], scheme: TagScheme) -> Result<Vec<Tag>> {
    let mut tags = vec![Tag::O; n];
    for s in check_no_overlap(n, spans)? {
        match scheme {
            TagScheme::Iob => {
                tags[s.start] = Tag::B(s.label);
                for t in &mut tags[s.start + 1..s.end] {
                    *t = Tag::I(s.label);
                }
            }
            TagScheme::Bioes => {
                if s.len() == 1 {
                    tags[s.start] = Tag::S(s.label);
                } else {
                    tags[s.start] = Tag::B(s.label);
                    for t in &mut tags[s.start + 1..s.end - 1] {
                        *t = Tag::I(s.label);
                    }
                    tags[s.end - 1] = Tag::E(s.label);
                }
            }
        }
    }
    Ok(tags)
}

/// Result of decoding a tag sequence.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct Decoded {
    pub spans: Vec<EntitySpan>,
    /// Tags that had to be reinterpreted to form valid chunks.
    pub repairs: usize,
}

/// IOB decoding. An `I-X` that does not continue an open `X` chunk (after
/// `O`, at position 0, or after a chunk of another label) starts a new
/// chunk as if it were `B-X`.
pub fn decode_iob(tags: &[Tag]) -> Decoded {
    let mut out = Decoded::default();
    let mut open: Option<(usize, EntityLabel)> = None;
    for (i, &tag) in tags.iter().enumerate() {
        match tag {
            Tag::I(l) if matches!(open, Some((_, ol)) if ol == l) => {}
            Tag::B(l) | Tag::I(l) | Tag::E(l) | Tag::S(l) => {
                if !matches!(tag, Tag::B(_)) {
                    out.repairs += 1;
                }
                if let Some((s, ol)) = open.take() {
                    out.spans.push(EntitySpan::new(s, i, ol));
                }
                open = Some((i, l));
            }
            Tag::O => {
                if let Some((s, ol)) = open.take() {
                    out.spans.push(EntitySpan::new(s, i, ol));
                }
            }
        }
    }
    if let Some((s, l)) = open {
        out.spans.push(EntitySpan::new(s, tags.len(), l));
    }
    out
}

/// BIOES decoding. Chunks are closed by `E`/`S`; ill-formed sequences
/// (an unterminated `B`, a stray `I`/`E`) are repaired to the nearest chunk
/// and counted.
pub fn decode_bioes(tags: &[Tag]) -> Decoded {
    let mut out = Decoded::default();
    let mut open: Option<(usize, EntityLabel)> = None;
    let close = |open: &mut Option<(usize, EntityLabel)>, end: usize, out: &mut Decoded| {
        if let Some((s, l)) = open.take() {
            out.spans.push(EntitySpan::new(s, end, l));
        }
    };
    for (i, &tag) in tags.iter().enumerate() {
        let continues = |l| matches!(open, Some((_, ol)) if ol == l);
        match tag {
            Tag::O => {
                if open.is_some() {
                    out.repairs += 1;
                }
                close(&mut open, i, &mut out);
            }
            Tag::B(l) => {
                if open.is_some() {
                    out.repairs += 1;
                }
                close(&mut open, i, &mut out);
                open = Some((i, l));
            }
            Tag::I(l) => {
                if !continues(l) {
                    out.repairs += 1;
                    close(&mut open, i, &mut out);
                    open = Some((i, l));
                }
            }
            Tag::E(l) => {
                if !continues(l) {
                    out.repairs += 1;
                    close(&mut open, i, &mut out);
                    open = Some((i, l));
                }
                close(&mut open, i + 1, &mut out);
            }
            Tag::S(l) => {
                if open.is_some() {
                    out.repairs += 1;
                }
                close(&mut open, i, &mut out);
                out.spans.push(EntitySpan::new(i, i + 1, l));
            }
        }
    }
    if open.is_some() {
        out.repairs += 1;
    }
    close(&mut open, tags.len(), &mut out);
    out
}

pub fn decode(tags: &[Tag], scheme: TagScheme) -> Decoded {
    match scheme {
        TagScheme::Iob => decode_iob(tags),
        TagScheme::Bioes => decode_bioes(tags),
    }
}

/// Rewrites an IOB sequence as BIOES (after IOB repair).
pub fn iob_to_bioes(tags: &[Tag]) -> Vec<Tag> {
    let spans = decode_iob(tags).spans;
    encode(tags.len(), &spans, TagScheme::Bioes).expect("decoded spans never overlap")
}

#[cfg(test)]
mod tests {
    use super::*;
    use EntityLabel::{Ade, Drug};

    #[test]
    fn iob_continuation_and_repair() {
        let d = decode_iob(&[Tag::B(Ade), Tag::I(Ade)]);
        assert_eq!(d.spans, vec![EntitySpan::new(0, 2, Ade)]);
        assert_eq!(d.repairs, 0);

        let d = decode_iob(&[Tag::O, Tag::I(Ade)]);
        assert_eq!(d.spans, vec![EntitySpan::new(1, 2, Ade)]);
        assert_eq!(d.repairs, 1);

        let d = decode_iob(&[Tag::B(Drug), Tag::I(Ade), Tag::I(Ade)]);
        assert_eq!(d.spans, vec![EntitySpan::new(0, 1, Drug), EntitySpan::new(1, 3, Ade)]);
        assert_eq!(d.repairs, 1);
    }

    #[test]
    fn adjacent_b_tags_split() {
        let d = decode_iob(&[Tag::B(Ade), Tag::B(Ade), Tag::O, Tag::B(Drug)]);
        assert_eq!(
            d.spans,
            vec![
                EntitySpan::new(0, 1, Ade),
                EntitySpan::new(1, 2, Ade),
                EntitySpan::new(3, 4, Drug)
            ]
        );
    }

    #[test]
    fn encode_rejects_overlap() {
        let spans = [EntitySpan::new(0, 1, Drug), EntitySpan::new(0, 2, Ade)];
        assert!(matches!(encode(3, &spans, TagScheme::Iob), Err(Error::Overlap(_))));
    }

    #[test]
    fn bioes_conversion() {
        let iob = [Tag::B(Ade), Tag::I(Ade), Tag::I(Ade), Tag::O, Tag::B(Drug)];
        let bioes = iob_to_bioes(&iob);
        assert_eq!(bioes, vec![Tag::B(Ade), Tag::I(Ade), Tag::E(Ade), Tag::O, Tag::S(Drug)]);
        assert_eq!(decode_bioes(&bioes).spans, decode_iob(&iob).spans);
        assert_eq!(decode_bioes(&bioes).repairs, 0);
    }

    #[test]
    fn tag_parsing() {
        assert_eq!(Tag::parse("B-ADE", TagScheme::Iob), Some(Tag::B(Ade)));
        assert_eq!(Tag::parse("I-Drug", TagScheme::Iob), Some(Tag::I(Drug)));
        assert_eq!(Tag::parse("S-Drug", TagScheme::Iob), None);
        assert_eq!(Tag::parse("S-Drug", TagScheme::Bioes), Some(Tag::S(Drug)));
        assert_eq!(Tag::parse("B-Disease", TagScheme::Iob), None);
        assert_eq!(Tag::IOB_TAGSET[0], Tag::O);
    }
}
