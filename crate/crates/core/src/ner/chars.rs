use std::collections::HashMap;

/// Character ids for the char CNN. Id 0 is the unknown character; known
/// characters follow in first-seen order. Case is preserved.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct CharVocab {
    chars: Vec<char>,
    index: HashMap<char, usize>,
}

impl CharVocab {
    pub const UNKNOWN: usize = 0;

    pub fn from_chars(chars: impl IntoIterator<Item = char>) -> Self {
        let mut v = Self::default();
        for c in chars {
            if !v.index.contains_key(&c) {
                v.index.insert(c, v.chars.len() + 1);
                v.chars.push(c);
            }
        }
        v
    }

    pub fn from_tokens<'a>(tokens: impl IntoIterator<Item = &'a str>) -> Self {
        Self::from_chars(tokens.into_iter().flat_map(str::chars))
    }

    /// Number of ids including the unknown id.
    pub fn size(&self) -> usize {
        self.chars.len() + 1
    }

    pub fn id(&self, c: char) -> usize {
        self.index.get(&c).copied().unwrap_or(Self::UNKNOWN)
    }

    pub fn ids(&self, token: &str) -> Vec<usize> {
        token.chars().map(|c| self.id(c)).collect()
    }

    /// Known characters in id order, for serialization.
    pub fn as_string(&self) -> String {
        self.chars.iter().collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids_are_dense_and_total() {
        let v = CharVocab::from_tokens(["Advil", "advil"]);
        assert_eq!(v.size(), 7);
        assert_ne!(v.id('A'), v.id('a'));
        assert_eq!(v.id('z'), CharVocab::UNKNOWN);
        assert_eq!(CharVocab::from_chars(v.as_string().chars()), v);
    }
}
