use std::collections::HashMap;

use ademiner_nn::layers::{self, Activation, LstmWeights, Mode};
use ademiner_nn::{uniform, xavier_uniform, Bound, Graph, ParamSet, Scalar, Tensor, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{tags, Document, EntitySpan, Tag};
use crate::embed::EmbeddingStore;
use crate::error::{Error, Result};
use crate::train::argmax;

use super::chars::CharVocab;
use super::NerConfig;

pub const NUM_TAGS: usize = Tag::IOB_TAGSET.len();

/// Architecture hyperparameters stored with a trained tagger.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NerSpec {
    pub word_dim: usize,
    pub char_dim: usize,
    pub char_filters: usize,
    pub char_kernel: usize,
    pub hidden: usize,
    pub dropout_embeddings: bool,
    pub dropout_lstm: bool,
    /// Learn a per-word correction added to the pretrained vectors of
    /// training-vocabulary words.
    pub train_word_embeddings: bool,
}

impl NerSpec {
    pub fn from_config(word_dim: usize, c: &NerConfig) -> Self {
        Self {
            word_dim,
            char_dim: c.char_dim,
            char_filters: c.char_filters,
            char_kernel: c.char_kernel,
            hidden: c.hidden,
            dropout_embeddings: c.dropout_embeddings,
            dropout_lstm: c.dropout_lstm,
            train_word_embeddings: c.train_word_embeddings,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.char_kernel % 2 == 0 {
            return Err(Error::Config(format!(
                "char kernel size must be odd, got {}",
                self.char_kernel
            )));
        }
        if self.word_dim == 0 || self.char_dim == 0 || self.char_filters == 0 {
            return Err(Error::Config("tagger dimensions must be positive".into()));
        }
        ademiner_nn::layers::check_lstm_dims(self.word_dim + self.char_filters, self.hidden)?;
        Ok(())
    }

    fn input_dim(&self) -> usize {
        self.word_dim + self.char_filters
    }

    pub fn tensor_shapes(&self, n_chars: usize, n_words: Option<usize>) -> Vec<(String, Vec<usize>)> {
        let (d, h) = (self.input_dim(), self.hidden);
        let mut v = vec![
            ("char.emb".to_string(), vec![n_chars, self.char_dim]),
            (
                "char.conv_w".into(),
                vec![self.char_kernel, self.char_dim, self.char_filters],
            ),
            ("char.conv_b".into(), vec![1, self.char_filters]),
            ("out.w".into(), vec![2 * h, NUM_TAGS]),
            ("out.b".into(), vec![1, NUM_TAGS]),
        ];
        for dir in ["fw", "bw"] {
            v.push((format!("lstm.{dir}.wx"), vec![d, 4 * h]));
            v.push((format!("lstm.{dir}.wh"), vec![h, 4 * h]));
            v.push((format!("lstm.{dir}.b"), vec![1, 4 * h]));
        }
        if let Some(n) = n_words {
            v.push(("word.delta".into(), vec![n + 1, self.word_dim]));
        }
        v
    }
}

/// Training-vocabulary words with a learned vector correction; id 0 is
/// every other word.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct WordVocab {
    words: Vec<String>,
    index: HashMap<String, usize>,
}

impl WordVocab {
    pub fn from_words(words: impl IntoIterator<Item = String>) -> Self {
        let mut v = Self::default();
        for w in words {
            if !v.index.contains_key(&w) {
                v.index.insert(w.clone(), v.words.len() + 1);
                v.words.push(w);
            }
        }
        v
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn id(&self, w: &str) -> usize {
        self.index.get(w).copied().unwrap_or(0)
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }
}

/// Precomputed model input for one sentence.
#[derive(Clone, Debug)]
pub(crate) struct SentenceInput {
    pub words: Tensor,
    pub chars: Vec<Vec<usize>>,
    pub word_ids: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NerModel {
    spec: NerSpec,
    chars: CharVocab,
    words: Option<WordVocab>,
    params: ParamSet,
}

impl NerModel {
    pub fn new(spec: NerSpec, chars: CharVocab, words: Option<WordVocab>, seed: u64) -> Result<Self> {
        spec.validate()?;
        if spec.train_word_embeddings != words.is_some() {
            return Err(Error::Config("word vocabulary must match train_word_embeddings".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = spec.hidden;
        let mut params = ParamSet::new();
        for (name, shape) in spec.tensor_shapes(chars.size(), words.as_ref().map(WordVocab::len)) {
            let t = match name.as_str() {
                "char.emb" => uniform(&mut rng, &shape, (3.0 / spec.char_dim as f64).sqrt()),
                "char.conv_w" => xavier_uniform(&mut rng, &shape, spec.char_kernel * spec.char_dim, spec.char_filters),
                n if n.ends_with(".wx") || n.ends_with(".wh") => xavier_uniform(&mut rng, &shape, shape[0], h),
                "out.w" => xavier_uniform(&mut rng, &shape, shape[0], shape[1]),
                n if n.starts_with("lstm.") && n.ends_with(".b") => {
                    // forget-gate bias starts at one
                    Tensor::from_fn(&shape, |i| if (h..2 * h).contains(&i) { 1.0 } else { 0.0 })
                }
                _ => Tensor::zeros(&shape),
            };
            params.insert(name, t);
        }
        Ok(Self {
            spec,
            chars,
            words,
            params,
        })
    }

    pub fn from_parts(spec: NerSpec, chars: CharVocab, words: Option<WordVocab>, params: ParamSet) -> Result<Self> {
        spec.validate()?;
        if spec.train_word_embeddings != words.is_some() {
            return Err(Error::Config("word vocabulary must match train_word_embeddings".into()));
        }
        let shapes = spec.tensor_shapes(chars.size(), words.as_ref().map(WordVocab::len));
        if params.len() != shapes.len() {
            return Err(Error::Config(format!(
                "expected {} tagger tensors, found {}",
                shapes.len(),
                params.len()
            )));
        }
        params.expect_shapes(shapes.iter().map(|(n, s)| (n.as_str(), s.clone())))?;
        Ok(Self {
            spec,
            chars,
            words,
            params,
        })
    }

    pub fn spec(&self) -> &NerSpec {
        &self.spec
    }

    pub fn char_vocab(&self) -> &CharVocab {
        &self.chars
    }

    pub fn word_vocab(&self) -> Option<&WordVocab> {
        self.words.as_ref()
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    pub(crate) fn set_params(&mut self, params: ParamSet) {
        self.params = params;
    }

    pub fn check_store(&self, store: &EmbeddingStore) -> Result<()> {
        if store.dim() != self.spec.word_dim {
            return Err(Error::Dimension {
                expected: self.spec.word_dim,
                actual: store.dim(),
                context: "tagger embedding store".into(),
            });
        }
        Ok(())
    }

    pub(crate) fn input(&self, doc: &Document, store: &EmbeddingStore) -> Result<SentenceInput> {
        let words = store
            .embed_tokens(doc.words())
            .ok_or(ademiner_nn::NnError::EmptySequence("tag_logits"))?;
        let mut chars = Vec::with_capacity(doc.len());
        for t in doc.words() {
            if t.is_empty() {
                return Err(Error::Config("empty token".into()));
            }
            chars.push(self.chars.ids(t));
        }
        let word_ids = match &self.words {
            Some(v) => doc.words().map(|w| v.id(w)).collect(),
            None => Vec::new(),
        };
        Ok(SentenceInput { words, chars, word_ids })
    }

    /// Char CNN feature of one token: embeddings, convolution, max over time.
    pub fn char_features(&self, token: &str) -> Result<Vec<f32>> {
        if token.is_empty() {
            return Err(Error::Config("empty token".into()));
        }
        let mut g = Graph::new();
        let b = self.params.bind(&mut g);
        let v = char_feature(&mut g, &b, &self.chars.ids(token))?;
        Ok(g.value(v).data().to_vec())
    }

    /// Per-token scores over the tagset, `L × 5`.
    pub fn tag_logits(&self, doc: &Document, store: &EmbeddingStore) -> Result<Tensor> {
        self.check_store(store)?;
        let input = self.input(doc, store)?;
        let mut g = Graph::new();
        let b = self.params.bind(&mut g);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let logits = forward(&mut g, &b, &self.spec, &input, Mode::Infer, 0.0, &mut rng)?;
        Ok(g.value(logits).clone())
    }

    pub fn predict_entities(&self, doc: &Document, store: &EmbeddingStore) -> Result<Vec<EntitySpan>> {
        if doc.is_empty() {
            self.check_store(store)?;
            return Ok(Vec::new());
        }
        Ok(decode_tags(&self.tag_logits(doc, store)?))
    }
}

fn char_feature<T: Scalar>(g: &mut Graph<T>, b: &Bound, ids: &[usize]) -> Result<Var> {
    let e = g.gather_rows(b.get("char.emb"), ids)?;
    let c = g.conv1d(e, b.get("char.conv_w"))?;
    let c = g.add_row(c, b.get("char.conv_b"))?;
    Ok(g.max_pool_rows(c)?)
}

/// Sentence logits. `dropout` applies at the sites enabled in `spec`.
pub(crate) fn forward<T: Scalar>(
    g: &mut Graph<T>,
    b: &Bound,
    spec: &NerSpec,
    input: &SentenceInput,
    mode: Mode,
    dropout: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Var> {
    let mut words = g.constant(input.words.cast());
    if spec.train_word_embeddings {
        let delta = g.gather_rows(b.get("word.delta"), &input.word_ids)?;
        words = g.add(words, delta)?;
    }
    let mut feats = Vec::with_capacity(input.chars.len());
    for ids in &input.chars {
        feats.push(char_feature(g, b, ids)?);
    }
    let chars = g.concat_rows(&feats)?;
    let mut x = g.concat_cols(&[words, chars])?;
    if spec.dropout_embeddings {
        x = layers::dropout(g, x, dropout, mode, rng)?;
    }
    let fw = LstmWeights::new(g, b.get("lstm.fw.wx"), b.get("lstm.fw.wh"), b.get("lstm.fw.b"))?;
    let bw = LstmWeights::new(g, b.get("lstm.bw.wx"), b.get("lstm.bw.wh"), b.get("lstm.bw.b"))?;
    let mut h = layers::bilstm(g, x, &fw, &bw)?;
    if spec.dropout_lstm {
        h = layers::dropout(g, h, dropout, mode, rng)?;
    }
    Ok(layers::dense(g, h, b.get("out.w"), b.get("out.b"), Activation::Linear)?)
}

/// Greedy decoding: per-token argmax (ties to the lowest tag index, so a
/// uniform row is `O`), then IOB repair and chunking.
pub fn decode_tags(logits: &Tensor) -> Vec<EntitySpan> {
    let tags: Vec<Tag> = logits
        .data()
        .chunks(NUM_TAGS)
        .map(|row| Tag::IOB_TAGSET[argmax(row)])
        .collect();
    tags::decode_iob(&tags).spans
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::EntityLabel;

    fn row(hot: usize) -> Vec<f32> {
        (0..NUM_TAGS).map(|i| if i == hot { 1.0 } else { 0.0 }).collect()
    }

    fn logits(hots: &[usize]) -> Tensor {
        Tensor::new(vec![hots.len(), NUM_TAGS], hots.iter().flat_map(|h| row(*h)).collect()).unwrap()
    }

    #[test]
    fn decodes_argmax_tags() {
        assert_eq!(
            decode_tags(&logits(&[1, 2, 0, 3])),
            vec![
                EntitySpan::new(0, 2, EntityLabel::Ade),
                EntitySpan::new(3, 4, EntityLabel::Drug)
            ]
        );
        assert_eq!(
            decode_tags(&logits(&[0, 2])),
            vec![EntitySpan::new(1, 2, EntityLabel::Ade)]
        );
        assert!(decode_tags(&logits(&[0, 0, 0])).is_empty());
        assert!(decode_tags(&Tensor::zeros(&[4, NUM_TAGS])).is_empty());
    }
}
