//! `key = value` configuration files.
//!
//! Keys follow the hyperparameter names used in the training write-up:
//! case and spaces are ignored, so `Learning rate = 0.001` and
//! `learning_rate=0.001` are the same key. `#` starts a comment.

use std::path::Path;
use std::str::FromStr;

use ademiner_nn::TrainConfig;

use crate::classifier::ClassifierConfig;
use crate::embed::OovPolicy;
use crate::error::{io_err, Error, Result};
use crate::ner::NerConfig;
use crate::relation::{HeadToken, ReConfig};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Entry {
    pub line: usize,
    pub key: String,
    pub value: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ConfigFile {
    pub entries: Vec<Entry>,
}

fn normalize_key(key: &str) -> String {
    key.trim()
        .to_lowercase()
        .split(|c: char| c.is_whitespace() || c == '-' || c == '_')
        .filter(|s| !s.is_empty())
        .collect::<Vec<_>>()
        .join("_")
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .or_else(|| content.split_once(':'))
                .ok_or_else(|| Error::Format {
                    line,
                    message: format!("expected key = value, got {content:?}"),
                })?;
            let key = normalize_key(key);
            if key.is_empty() {
                return Err(Error::Format {
                    line,
                    message: "empty key".into(),
                });
            }
            if entries.iter().any(|e: &Entry| e.key == key) {
                return Err(Error::Format {
                    line,
                    message: format!("duplicate key {key}"),
                });
            }
            entries.push(Entry {
                line,
                key,
                value: value.trim().to_string(),
            });
        }
        Ok(Self { entries })
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        Self::parse(&text)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        let key = normalize_key(key);
        self.entries.iter().find(|e| e.key == key).map(|e| e.value.as_str())
    }

    /// The OOV policy named by `oov` (`zeros` or `hashed[:buckets]`).
    pub fn oov_policy(&self) -> Result<Option<OovPolicy>> {
        self.entries
            .iter()
            .find(|e| e.key == "oov")
            .map(|e| parse_oov(&e.value).map_err(|m| format_err(e, m)))
            .transpose()
    }

    pub fn apply_classifier(&self, cfg: &mut ClassifierConfig) -> Result<()> {
        for e in &self.entries {
            let handled = apply_train(&mut cfg.train, e)?
                || apply_fcnn(&mut cfg.hidden, &mut cfg.leaky_slope, &mut cfg.class_weighting, e)?
                || is_shared(e)?;
            if !handled {
                return Err(unknown(e, "classifier"));
            }
        }
        cfg.train.validate()?;
        Ok(())
    }

    pub fn apply_ner(&self, cfg: &mut NerConfig) -> Result<()> {
        for e in &self.entries {
            if apply_train(&mut cfg.train, e)? || is_shared(e)? {
                continue;
            }
            match e.key.as_str() {
                "lstm_state_size" | "hidden" | "hidden_size" => cfg.hidden = value(e)?,
                "char_dim" | "char_embedding_dim" => cfg.char_dim = value(e)?,
                "char_filters" | "filters" => cfg.char_filters = value(e)?,
                "char_kernel" | "kernel_size" => cfg.char_kernel = value(e)?,
                "dropout_embeddings" => cfg.dropout_embeddings = flag(e)?,
                "dropout_lstm" => cfg.dropout_lstm = flag(e)?,
                "train_word_embeddings" => cfg.train_word_embeddings = flag(e)?,
                _ => return Err(unknown(e, "ner")),
            }
        }
        cfg.train.validate()?;
        Ok(())
    }

    pub fn apply_re(&self, cfg: &mut ReConfig) -> Result<()> {
        for e in &self.entries {
            if apply_train(&mut cfg.train, e)?
                || apply_fcnn(&mut cfg.hidden, &mut cfg.leaky_slope, &mut cfg.class_weighting, e)?
                || is_shared(e)?
            {
                continue;
            }
            match e.key.as_str() {
                "window" | "vicinity" => cfg.window = value(e)?,
                "pad_multiple" => cfg.pad_multiple = value(e)?,
                "head" | "head_token" => {
                    cfg.head = match e.value.to_lowercase().as_str() {
                        "first" => HeadToken::First,
                        "last" => HeadToken::Last,
                        other => return Err(format_err(e, format!("head must be first or last, got {other:?}"))),
                    }
                }
                _ => return Err(unknown(e, "re")),
            }
        }
        cfg.train.validate()?;
        Ok(())
    }
}

fn format_err(e: &Entry, message: impl Into<String>) -> Error {
    Error::Format {
        line: e.line,
        message: format!("{}: {}", e.key, message.into()),
    }
}

fn unknown(e: &Entry, stage: &str) -> Error {
    format_err(e, format!("unknown key for the {stage} stage"))
}

fn value<T: FromStr>(e: &Entry) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    e.value
        .parse()
        .map_err(|err: T::Err| format_err(e, format!("{err} ({:?})", e.value)))
}

fn flag(e: &Entry) -> Result<bool> {
    match e.value.to_lowercase().as_str() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(format_err(e, format!("expected a boolean, got {:?}", e.value))),
    }
}

fn apply_train(cfg: &mut TrainConfig, e: &Entry) -> Result<bool> {
    match e.key.as_str() {
        "learning_rate" | "lr" => cfg.learning_rate = value(e)?,
        "po" | "decay_po" | "learning_rate_decay_coefficient" => cfg.decay_po = value(e)?,
        "batch_size" => cfg.batch_size = value(e)?,
        "epochs" | "epoch" => cfg.epochs = value(e)?,
        "dropout_rate" | "dropout" => cfg.dropout_rate = value(e)?,
        "seed" => cfg.seed = value(e)?,
        _ => return Ok(false),
    }
    Ok(true)
}

fn apply_fcnn(hidden: &mut Vec<usize>, slope: &mut f64, weighting: &mut bool, e: &Entry) -> Result<bool> {
    match e.key.as_str() {
        "hidden_layers" => {
            *hidden = e
                .value
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| s.parse().map_err(|err| format_err(e, format!("{err} ({s:?})"))))
                .collect::<Result<_>>()?
        }
        "leaky_slope" | "leaky_relu_slope" => *slope = value(e)?,
        "class_weighting" => *weighting = flag(e)?,
        _ => return Ok(false),
    }
    Ok(true)
}

/// Keys read elsewhere or fixed by the implementation.
fn is_shared(e: &Entry) -> Result<bool> {
    match e.key.as_str() {
        "oov" => parse_oov(&e.value).map(|_| true).map_err(|m| format_err(e, m)),
        "optimizer" if e.value.eq_ignore_ascii_case("adam") => Ok(true),
        "optimizer" => Err(format_err(e, "only Adam is supported")),
        _ => Ok(false),
    }
}

fn parse_oov(v: &str) -> std::result::Result<OovPolicy, String> {
    let v = v.trim().to_lowercase();
    match v.split_once(':') {
        None if v == "zeros" || v == "zero" => Ok(OovPolicy::Zeros),
        None if v == "hashed" => Ok(OovPolicy::hashed(DEFAULT_OOV_BUCKETS)),
        Some(("hashed", n)) => match n.trim().parse::<usize>() {
            Ok(b) if b > 0 => Ok(OovPolicy::hashed(b)),
            _ => Err(format!("bad bucket count {n:?}")),
        },
        _ => Err(format!("unknown oov policy {v:?}")),
    }
}

pub const DEFAULT_OOV_BUCKETS: usize = 64;
