//! Pretrained word vectors.
//!
//! Text format: one `token v1 ... vD` line per word, whitespace separated,
//! with an optional `V D` header line. Lookup tries the exact token, then
//! its lowercase form, then the OOV policy.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use ademiner_nn::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{io_err, Error, Result};

const CACHE_MAGIC: &[u8; 8] = b"ADEVEC\0\0";
const CACHE_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OovPolicy {
    /// Unknown tokens map to the zero vector.
    #[default]
    Zeros,
    /// Unknown tokens map to one of `buckets` fixed random vectors chosen by
    /// a hash of the token.
    HashedBuckets { buckets: usize, seed: u64 },
}

impl OovPolicy {
    pub fn hashed(buckets: usize) -> Self {
        OovPolicy::HashedBuckets { buckets, seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingStore {
    dim: usize,
    vocab: HashMap<String, usize>,
    words: Vec<String>,
    /// `V × dim`, row-major.
    matrix: Vec<f32>,
    oov: OovPolicy,
    /// Bucket rows after a single zero row.
    oov_rows: Vec<f32>,
    duplicates: usize,
}

#[derive(Serialize, Deserialize)]
struct CacheManifest {
    dim: usize,
    vocab_size: usize,
    duplicates: usize,
}

impl EmbeddingStore {
    /// Builds a store from `(token, vector)` rows; the first occurrence of a
    /// repeated token wins.
    pub fn from_rows<S: Into<String>>(dim: usize, rows: impl IntoIterator<Item = (S, Vec<f32>)>) -> Result<Self> {
        let mut store = Self::empty(dim)?;
        for (token, vector) in rows {
            if vector.len() != dim {
                return Err(Error::Dimension {
                    expected: dim,
                    actual: vector.len(),
                    context: "embedding row".into(),
                });
            }
            store.push(token.into(), &vector);
        }
        Ok(store)
    }

    pub fn empty(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("embedding dim must be positive".into()));
        }
        Ok(Self {
            dim,
            vocab: HashMap::new(),
            words: Vec::new(),
            matrix: Vec::new(),
            oov: OovPolicy::Zeros,
            oov_rows: vec![0.0; dim],
            duplicates: 0,
        })
    }

    fn push(&mut self, token: String, vector: &[f32]) {
        if self.vocab.contains_key(&token) {
            self.duplicates += 1;
            return;
        }
        self.vocab.insert(token.clone(), self.words.len());
        self.words.push(token);
        self.matrix.extend_from_slice(vector);
    }

    pub fn with_oov(mut self, policy: OovPolicy) -> Result<Self> {
        let mut rows = vec![0.0; self.dim];
        if let OovPolicy::HashedBuckets { buckets, seed } = policy {
            if buckets == 0 {
                return Err(Error::Config("hashed OOV policy needs at least one bucket".into()));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let limit = (3.0 / self.dim as f32).sqrt();
            rows.extend((0..buckets * self.dim).map(|_| rng.gen_range(-limit..limit)));
        }
        self.oov = policy;
        self.oov_rows = rows;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn oov_policy(&self) -> OovPolicy {
        self.oov
    }

    /// Repeated tokens skipped while loading.
    pub fn duplicates(&self) -> usize {
        self.duplicates
    }

    /// Row index of `token` after the case fallback.
    pub fn index_of(&self, token: &str) -> Option<usize> {
        self.vocab.get(token).copied().or_else(|| {
            let lower = token.to_lowercase();
            (lower != token).then(|| self.vocab.get(&lower).copied()).flatten()
        })
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index_of(token).is_some()
    }

    pub fn lookup(&self, token: &str) -> &[f32] {
        match self.index_of(token) {
            Some(i) => &self.matrix[i * self.dim..(i + 1) * self.dim],
            None => self.oov_row(token),
        }
    }

    fn oov_row(&self, token: &str) -> &[f32] {
        let row = match self.oov {
            OovPolicy::Zeros => 0,
            OovPolicy::HashedBuckets { buckets, .. } => 1 + (fnv1a(token.as_bytes()) % buckets as u64) as usize,
        };
        &self.oov_rows[row * self.dim..(row + 1) * self.dim]
    }

    /// Token vectors stacked into an `L × dim` tensor; `None` for no tokens.
    pub fn embed_tokens<'a>(&self, tokens: impl IntoIterator<Item = &'a str>) -> Option<Tensor> {
        let mut data = Vec::new();
        let mut rows = 0;
        for t in tokens {
            data.extend_from_slice(self.lookup(t));
            rows += 1;
        }
        (rows > 0).then(|| Tensor::new(vec![rows, self.dim], data).expect("rows > 0"))
    }

    /// Mean of the token vectors; zeros for an empty document.
    pub fn embed_document<'a>(&self, tokens: impl IntoIterator<Item = &'a str>) -> Vec<f32> {
        let mut sum = vec![0.0f64; self.dim];
        let mut n = 0usize;
        for t in tokens {
            for (s, v) in sum.iter_mut().zip(self.lookup(t)) {
                *s += f64::from(*v);
            }
            n += 1;
        }
        if n == 0 {
            return vec![0.0; self.dim];
        }
        sum.into_iter().map(|s| (s / n as f64) as f32).collect()
    }

    /// Text format with a `V D` header, one word per line.
    pub fn write_text(&self, w: &mut impl Write) -> Result<()> {
        writeln!(w, "{} {}", self.words.len(), self.dim)?;
        for (word, row) in self.words.iter().zip(self.matrix.chunks_exact(self.dim)) {
            w.write_all(word.as_bytes())?;
            for v in row {
                write!(w, " {v}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn save_cache(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(io_err(path))?;
        let mut w = BufWriter::new(file);
        self.write_cache(&mut w)?;
        w.flush().map_err(io_err(path))
    }

    /// Binary cache: magic, version, JSON manifest, the token list and the
    /// little-endian `f32` matrix. The OOV policy is not stored.
    pub fn write_cache(&self, w: &mut impl Write) -> Result<()> {
        let manifest = serde_json::to_vec(&CacheManifest {
            dim: self.dim,
            vocab_size: self.words.len(),
            duplicates: self.duplicates,
        })?;
        w.write_all(CACHE_MAGIC)?;
        w.write_all(&CACHE_VERSION.to_le_bytes())?;
        w.write_all(&(manifest.len() as u64).to_le_bytes())?;
        w.write_all(&manifest)?;
        for word in &self.words {
            w.write_all(&(word.len() as u32).to_le_bytes())?;
            w.write_all(word.as_bytes())?;
        }
        for v in &self.matrix {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn load_cache(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(io_err(path))?;
        Self::read_cache(&mut BufReader::new(file))
    }

    pub fn read_cache(r: &mut impl Read) -> Result<Self> {
        let truncated = |e: std::io::Error| Error::Corruption(format!("embedding cache: {e}"));
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(truncated)?;
        if &magic != CACHE_MAGIC {
            return Err(Error::Corruption("not an embedding cache".into()));
        }
        let mut u32b = [0u8; 4];
        let mut u64b = [0u8; 8];
        r.read_exact(&mut u32b).map_err(truncated)?;
        let version = u32::from_le_bytes(u32b);
        if version != CACHE_VERSION {
            return Err(Error::Version {
                found: version,
                expected: CACHE_VERSION,
            });
        }
        r.read_exact(&mut u64b).map_err(truncated)?;
        let mut manifest = vec![0u8; u64::from_le_bytes(u64b) as usize];
        r.read_exact(&mut manifest).map_err(truncated)?;
        let manifest: CacheManifest = serde_json::from_slice(&manifest)?;
        let mut store = Self::empty(manifest.dim)?;
        let mut words = Vec::with_capacity(manifest.vocab_size);
        for _ in 0..manifest.vocab_size {
            r.read_exact(&mut u32b).map_err(truncated)?;
            let mut bytes = vec![0u8; u32::from_le_bytes(u32b) as usize];
            r.read_exact(&mut bytes).map_err(truncated)?;
            words.push(String::from_utf8(bytes).map_err(|e| Error::Corruption(e.to_string()))?);
        }
        let mut raw = vec![0u8; manifest.vocab_size * manifest.dim * 4];
        r.read_exact(&mut raw).map_err(truncated)?;
        let matrix: Vec<f32> = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        for (i, word) in words.into_iter().enumerate() {
            store.push(word, &matrix[i * manifest.dim..(i + 1) * manifest.dim]);
        }
        store.duplicates = manifest.duplicates;
        Ok(store)
    }
}

/// Reads a binary cache or a text vector file, whichever `path` holds.
pub fn open_vectors(path: impl AsRef<Path>) -> Result<EmbeddingStore> {
    let path = path.as_ref();
    let mut magic = [0u8; 8];
    let is_cache = File::open(path)
        .and_then(|mut f| f.read_exact(&mut magic))
        .map(|()| &magic == CACHE_MAGIC)
        .unwrap_or(false);
    if is_cache {
        EmbeddingStore::load_cache(path)
    } else {
        load_vectors(path, None)
    }
}

/// Reads a text vector file. `expected_dim` is checked against the data and
/// supplies the dimension of an empty file.
pub fn load_vectors(path: impl AsRef<Path>, expected_dim: Option<usize>) -> Result<EmbeddingStore> {
    let path = path.as_ref();
    let file = File::open(path).map_err(io_err(path))?;
    parse_vectors(BufReader::new(file), expected_dim)
}

pub fn parse_vectors(reader: impl BufRead, expected_dim: Option<usize>) -> Result<EmbeddingStore> {
    let mut store: Option<EmbeddingStore> = None;
    let mut header_dim = None;
    let mut row = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let mut fields = line.split_whitespace();
        let Some(token) = fields.next() else {
            continue;
        };
        row.clear();
        for f in fields {
            let v: f32 = f.parse().map_err(|_| Error::Format {
                line: line_no,
                message: format!("invalid number {f:?}"),
            })?;
            if !v.is_finite() {
                return Err(Error::Format {
                    line: line_no,
                    message: format!("non-finite value {f:?}"),
                });
            }
            row.push(v);
        }
        if store.is_none() && header_dim.is_none() && row.len() == 1 {
            if let (Ok(_), Ok(d)) = (
                token.parse::<usize>(),
                line.split_whitespace().nth(1).unwrap().parse::<usize>(),
            ) {
                header_dim = Some(d);
                continue;
            }
        }
        let store = match &mut store {
            Some(s) => s,
            None => {
                let dim = header_dim.unwrap_or(row.len());
                if let Some(expected) = expected_dim {
                    if expected != dim {
                        return Err(Error::Dimension {
                            expected,
                            actual: dim,
                            context: format!("vector file line {line_no}"),
                        });
                    }
                }
                store.insert(EmbeddingStore::empty(dim).map_err(|_| Error::Format {
                    line: line_no,
                    message: "vector has no values".into(),
                })?)
            }
        };
        if row.len() != store.dim {
            return Err(Error::Format {
                line: line_no,
                message: format!("expected {} values, found {}", store.dim, row.len()),
            });
        }
        store.push(token.to_string(), &row);
    }
    let store = match store {
        Some(s) => s,
        None => {
            let dim = match (header_dim, expected_dim) {
                (Some(h), Some(e)) if h != e => {
                    return Err(Error::Dimension {
                        expected: e,
                        actual: h,
                        context: "vector file header".into(),
                    })
                }
                (Some(d), _) | (None, Some(d)) => d,
                (None, None) => return Err(Error::Config("empty vector file needs an expected dimension".into())),
            };
            EmbeddingStore::empty(dim)?
        }
    };
    if store.duplicates > 0 {
        log::warn!(
            "{} duplicate tokens in vector file, kept first occurrence",
            store.duplicates
        );
    }
    Ok(store)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(*b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}
