use super::document::Token;

/// Characters split off the edges of whitespace-delimited chunks. `@` and
/// `#` are kept so mentions and hashtags stay whole.
fn is_edge_punct(c: char) -> bool {
    !c.is_alphanumeric() && !c.is_whitespace() && c != '@' && c != '#'
}

/// Whitespace tokenizer that splits leading and trailing punctuation into
/// one-character tokens. Inner symbols stay attached ("haven't").
///
/// Offsets are Unicode scalar positions in `text`.
pub fn tokenize(text: &str) -> Vec<Token> {
    let chars: Vec<char> = text.chars().collect();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        if chars[i].is_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        while i < chars.len() && !chars[i].is_whitespace() {
            i += 1;
        }
        split_chunk(&chars, start, i, &mut tokens);
    }
    tokens
}

fn split_chunk(chars: &[char], start: usize, end: usize, out: &mut Vec<Token>) {
    let mut lo = start;
    while lo < end && is_edge_punct(chars[lo]) {
        out.push(token(chars, lo, lo + 1));
        lo += 1;
    }
    if lo == end {
        return;
    }
    let mut hi = end;
    while hi > lo && is_edge_punct(chars[hi - 1]) {
        hi -= 1;
    }
    out.push(token(chars, lo, hi));
    for p in hi..end {
        out.push(token(chars, p, p + 1));
    }
}

fn token(chars: &[char], start: usize, end: usize) -> Token {
    Token {
        text: chars[start..end].iter().collect(),
        start,
        end,
    }
}
