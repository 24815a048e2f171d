//! BiLSTM tagger over word vectors and character CNN features, predicting
//! IOB tags for ADE and Drug mentions.

mod chars;
mod model;
mod train;

use ademiner_nn::TrainConfig;
use serde::{Deserialize, Serialize};

pub use chars::CharVocab;
pub use model::{decode_tags, NerModel, NerSpec, WordVocab, NUM_TAGS};
pub use train::{evaluate_ner, train_ner};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NerConfig {
    pub char_dim: usize,
    pub char_filters: usize,
    pub char_kernel: usize,
    pub hidden: usize,
    pub dropout_embeddings: bool,
    pub dropout_lstm: bool,
    pub train_word_embeddings: bool,
    pub train: TrainConfig,
}

impl Default for NerConfig {
    fn default() -> Self {
        Self {
            char_dim: 16,
            char_filters: 25,
            char_kernel: 3,
            hidden: 200,
            dropout_embeddings: true,
            dropout_lstm: true,
            train_word_embeddings: false,
            train: TrainConfig::ner_defaults(),
        }
    }
}
