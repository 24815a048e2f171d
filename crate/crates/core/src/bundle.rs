//! Model bundles: one file per trained stage.
//!
//! ```text
//! magic "ADEBNDL\0" | u32 version | u64 manifest length | manifest JSON
//! | u32 tensor count | per tensor: u32 name length, name, u8 trainable,
//!   u32 rank, u64 dims..., f32 payload | sha256 of everything before
//! ```
//!
//! Integers and floats are little-endian. Tensors are written in name
//! order and the manifest has no timestamps, so saving a loaded bundle
//! reproduces the file byte for byte.

use std::fs;
use std::path::{Path, PathBuf};

use ademiner_nn::{ParamSet, Tensor};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::classifier::{ClassifierModel, CLASS_NAMES};
use crate::corpus::Tag;
use crate::embed::EmbeddingStore;
use crate::error::{io_err, Error, Result};
use crate::fcnn::{Fcnn, FcnnLayout};
use crate::ner::{CharVocab, NerModel, NerSpec, WordVocab};
use crate::relation::{FeatureLayout, ReModel, RELATION_NAMES};

pub const BUNDLE_MAGIC: &[u8; 8] = b"ADEBNDL\0";
pub const BUNDLE_VERSION: u32 = 1;
const CHECKSUM_LEN: usize = 32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StageKind {
    Classifier,
    Ner,
    Re,
}

impl StageKind {
    pub fn as_str(self) -> &'static str {
        match self {
            StageKind::Classifier => "classifier",
            StageKind::Ner => "ner",
            StageKind::Re => "re",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "classifier" | "classify" => Some(StageKind::Classifier),
            "ner" => Some(StageKind::Ner),
            "re" => Some(StageKind::Re),
            _ => None,
        }
    }
}

/// Architecture needed to rebuild a stage from its tensors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum StageSpec {
    Classifier {
        network: FcnnLayout,
    },
    Ner {
        spec: NerSpec,
        chars: String,
        words: Option<Vec<String>>,
    },
    Re {
        network: FcnnLayout,
        features: FeatureLayout,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BundleManifest {
    pub format_version: u32,
    pub stage: StageKind,
    pub embedding_dim: usize,
    pub labels: Vec<String>,
    /// Training configuration used, as given.
    pub config: serde_json::Value,
    pub spec: StageSpec,
    pub created_by: String,
}

#[derive(Clone, Debug, PartialEq)]
pub enum StageModel {
    Classifier(ClassifierModel),
    Ner(NerModel),
    Re(ReModel),
}

impl StageModel {
    pub fn kind(&self) -> StageKind {
        match self {
            StageModel::Classifier(_) => StageKind::Classifier,
            StageModel::Ner(_) => StageKind::Ner,
            StageModel::Re(_) => StageKind::Re,
        }
    }

    pub fn embedding_dim(&self) -> usize {
        match self {
            StageModel::Classifier(m) => m.dim(),
            StageModel::Ner(m) => m.spec().word_dim,
            StageModel::Re(m) => m.dim(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelBundle {
    pub manifest: BundleManifest,
    pub tensors: ParamSet,
}

fn created_by() -> String {
    format!("ademiner {}", env!("CARGO_PKG_VERSION"))
}

impl ModelBundle {
    pub fn new(model: &StageModel, config: &impl Serialize) -> Result<Self> {
        let (spec, labels, tensors) = match model {
            StageModel::Classifier(m) => (
                StageSpec::Classifier {
                    network: m.network().layout().clone(),
                },
                CLASS_NAMES.iter().map(|s| s.to_string()).collect(),
                m.network().params().clone(),
            ),
            StageModel::Ner(m) => (
                StageSpec::Ner {
                    spec: m.spec().clone(),
                    chars: m.char_vocab().as_string(),
                    words: m.word_vocab().map(|v| v.words().to_vec()),
                },
                Tag::IOB_TAGSET.iter().map(Tag::to_string).collect(),
                m.params().clone(),
            ),
            StageModel::Re(m) => (
                StageSpec::Re {
                    network: m.network().layout().clone(),
                    features: *m.feature_layout(),
                },
                RELATION_NAMES.iter().map(|s| s.to_string()).collect(),
                m.network().params().clone(),
            ),
        };
        Ok(Self {
            manifest: BundleManifest {
                format_version: BUNDLE_VERSION,
                stage: model.kind(),
                embedding_dim: model.embedding_dim(),
                labels,
                config: serde_json::to_value(config)?,
                spec,
                created_by: created_by(),
            },
            tensors,
        })
    }

    /// Rebuilds the stage model, checking every tensor against the spec.
    pub fn model(&self) -> Result<StageModel> {
        let m = &self.manifest;
        let model = match (&m.stage, &m.spec) {
            (StageKind::Classifier, StageSpec::Classifier { network }) => StageModel::Classifier(
                ClassifierModel::from_network(Fcnn::from_params(network.clone(), self.tensors.clone())?)?,
            ),
            (StageKind::Ner, StageSpec::Ner { spec, chars, words }) => StageModel::Ner(NerModel::from_parts(
                spec.clone(),
                CharVocab::from_chars(chars.chars()),
                words.clone().map(WordVocab::from_words),
                self.tensors.clone(),
            )?),
            (StageKind::Re, StageSpec::Re { network, features }) => StageModel::Re(ReModel::from_parts(
                Fcnn::from_params(network.clone(), self.tensors.clone())?,
                *features,
            )?),
            (stage, _) => {
                return Err(Error::Format {
                    line: 0,
                    message: format!("bundle spec does not describe a {} stage", stage.as_str()),
                })
            }
        };
        if model.embedding_dim() != m.embedding_dim {
            return Err(Error::Config(format!(
                "bundle declares embedding dim {} but its tensors use {}",
                m.embedding_dim,
                model.embedding_dim()
            )));
        }
        Ok(model)
    }

    pub fn check_store(&self, store: &EmbeddingStore) -> Result<()> {
        if store.dim() != self.manifest.embedding_dim {
            return Err(Error::Dimension {
                expected: self.manifest.embedding_dim,
                actual: store.dim(),
                context: format!("{} bundle embedding store", self.manifest.stage.as_str()),
            });
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let manifest = serde_json::to_vec(&self.manifest)?;
        let mut out = Vec::new();
        out.extend_from_slice(BUNDLE_MAGIC);
        out.extend_from_slice(&BUNDLE_VERSION.to_le_bytes());
        out.extend_from_slice(&(manifest.len() as u64).to_le_bytes());
        out.extend_from_slice(&manifest);
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for (name, tensor) in self.tensors.iter() {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(u8::from(self.tensors.is_trainable(name)));
            out.extend_from_slice(&(tensor.shape().len() as u32).to_le_bytes());
            for d in tensor.shape() {
                out.extend_from_slice(&(*d as u64).to_le_bytes());
            }
            for v in tensor.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let digest = Sha256::digest(&out);
        out.extend_from_slice(&digest);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < BUNDLE_MAGIC.len() + 4 + CHECKSUM_LEN || &bytes[..8] != BUNDLE_MAGIC {
            return Err(Error::Corruption("not a model bundle".into()));
        }
        let (body, digest) = bytes.split_at(bytes.len() - CHECKSUM_LEN);
        if Sha256::digest(body).as_slice() != digest {
            return Err(Error::Corruption("checksum mismatch".into()));
        }
        let mut r = Reader { buf: body, pos: 8 };
        let version = r.u32()?;
        if version != BUNDLE_VERSION {
            return Err(Error::Version {
                found: version,
                expected: BUNDLE_VERSION,
            });
        }
        let manifest_len = r.u64()? as usize;
        let manifest: BundleManifest = serde_json::from_slice(r.take(manifest_len)?).map_err(|e| Error::Format {
            line: 0,
            message: format!("bundle manifest: {e}"),
        })?;
        let mut tensors = ParamSet::new();
        for _ in 0..r.u32()? {
            let name_len = r.u32()? as usize;
            let name = String::from_utf8(r.take(name_len)?.to_vec()).map_err(|e| Error::Corruption(e.to_string()))?;
            let trainable = r.take(1)?[0] != 0;
            let rank = r.u32()? as usize;
            let shape = (0..rank)
                .map(|_| r.u64().map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            let n: usize = shape.iter().product();
            let data = r
                .take(n * 4)?
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            let tensor = Tensor::new(shape, data).map_err(|e| Error::Corruption(e.to_string()))?;
            if tensors.get(&name).is_some() {
                return Err(Error::Corruption(format!("tensor {name} appears twice")));
            }
            if trainable {
                tensors.insert(name, tensor);
            } else {
                tensors.insert_buffer(name, tensor);
            }
        }
        if r.pos != body.len() {
            return Err(Error::Corruption("trailing bytes after tensors".into()));
        }
        Ok(Self { manifest, tensors })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()?).map_err(io_err(path))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_bytes(&fs::read(path).map_err(io_err(path))?)
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Corruption(format!("truncated at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn save_bundle(model: &StageModel, config: &impl Serialize, path: impl AsRef<Path>) -> Result<()> {
    ModelBundle::new(model, config)?.save(path)
}

pub fn load_bundle(path: impl AsRef<Path>) -> Result<(BundleManifest, StageModel)> {
    let bundle = ModelBundle::load(path)?;
    let model = bundle.model()?;
    Ok((bundle.manifest, model))
}

/// References to the stage bundles of one pipeline. Relative paths are
/// resolved against the manifest's directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineManifest {
    pub format_version: u32,
    pub embedding_dim: usize,
    pub classifier: Option<PathBuf>,
    pub ner: PathBuf,
    pub re: PathBuf,
}

impl PipelineManifest {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(path, text).map_err(io_err(path))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        let m: Self = serde_json::from_str(&text)?;
        if m.format_version != BUNDLE_VERSION {
            return Err(Error::Version {
                found: m.format_version,
                expected: BUNDLE_VERSION,
            });
        }
        Ok(m)
    }

    pub fn resolve(&self, manifest_path: &Path) -> (Option<PathBuf>, PathBuf, PathBuf) {
        let base = manifest_path.parent().unwrap_or(Path::new(""));
        let abs = |p: &PathBuf| if p.is_absolute() { p.clone() } else { base.join(p) };
        (self.classifier.as_ref().map(abs), abs(&self.ner), abs(&self.re))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::ClassifierConfig;

    fn classifier_bundle() -> ModelBundle {
        let m = ClassifierModel::new(6, &ClassifierConfig::default()).unwrap();
        ModelBundle::new(&StageModel::Classifier(m), &ClassifierConfig::default()).unwrap()
    }

    #[test]
    fn bytes_round_trip() {
        let b = classifier_bundle();
        let bytes = b.to_bytes().unwrap();
        let back = ModelBundle::from_bytes(&bytes).unwrap();
        assert_eq!(back, b);
        assert_eq!(back.to_bytes().unwrap(), bytes);
        assert_eq!(back.model().unwrap(), b.model().unwrap());
    }

    #[test]
    fn damaged_bytes_are_rejected() {
        let bytes = classifier_bundle().to_bytes().unwrap();
        assert!(matches!(
            ModelBundle::from_bytes(&bytes[..bytes.len() / 2]),
            Err(Error::Corruption(_))
        ));
        let mut flipped = bytes.clone();
        flipped[100] ^= 1;
        assert!(matches!(ModelBundle::from_bytes(&flipped), Err(Error::Corruption(_))));
    }

    #[test]
    fn version_mismatch_is_refused() {
        let mut bytes = classifier_bundle().to_bytes().unwrap();
        bytes[8..12].copy_from_slice(&7u32.to_le_bytes());
        let n = bytes.len() - CHECKSUM_LEN;
        let digest = Sha256::digest(&bytes[..n]);
        bytes[n..].copy_from_slice(&digest);
        assert!(matches!(
            ModelBundle::from_bytes(&bytes),
            Err(Error::Version { found: 7, .. })
        ));
    }

    #[test]
    fn store_dim_is_enforced() {
        let b = classifier_bundle();
        assert!(b.check_store(&EmbeddingStore::empty(6).unwrap()).is_ok());
        assert!(matches!(
            b.check_store(&EmbeddingStore::empty(5).unwrap()),
            Err(Error::Dimension { .. })
        ));
    }
}
