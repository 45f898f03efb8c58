//! Versioned JSON checkpoints.
//!
//! A checkpoint is one JSON object:
//!
//! ```text
//! {
//!   "format_version": 1,
//!   "kind": "mtm",                      // model kind tag
//!   "config": { ...ModelConfig... },
//!   "aspect_names": ["appearance", ...],
//!   "vocabulary": ["<pad>", "<unk>", ...],
//!   "params": [{"name": "embedding", "shape": [V, d], "data": [...]}, ...],
//!   "source": { ...checkpoint... }      // mtm-c only: the frozen masker
//! }
//! ```
//!
//! Floats are written in shortest round-trip form, so a reload reproduces the
//! saved weights bit for bit.

use std::path::Path;

use mtm_autodiff::Tensor;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::io::{read_to_string, write_atomic};
use crate::model::{Model, ModelConfig, ModelKind};
use crate::text::Vocabulary;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format_version: u32,
    pub kind: ModelKind,
    pub config: ModelConfig,
    pub aspect_names: Vec<String>,
    pub vocabulary: Vec<String>,
    pub params: Vec<NamedTensor>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<Box<Checkpoint>>,
}

impl Checkpoint {
    pub fn from_model(model: &Model, vocab: &Vocabulary, aspect_names: &[String]) -> Self {
        Checkpoint {
            format_version: FORMAT_VERSION,
            kind: model.kind,
            config: model.config.clone(),
            aspect_names: aspect_names.to_vec(),
            vocabulary: vocab.words().to_vec(),
            params: model
                .params
                .iter()
                .map(|p| NamedTensor {
                    name: p.name.clone(),
                    shape: p.tensor.shape.clone(),
                    data: p.tensor.data.clone(),
                })
                .collect(),
            source: model
                .source
                .as_deref()
                .map(|s| Box::new(Checkpoint::from_model(s, vocab, aspect_names))),
        }
    }

    /// Rebuilds the model skeleton from kind and config, then loads weights.
    pub fn to_model(&self) -> Result<(Model, Vocabulary)> {
        if self.format_version != FORMAT_VERSION {
            return Err(CoreError::Checkpoint(format!(
                "unsupported format version {} (expected {FORMAT_VERSION})",
                self.format_version
            )));
        }
        if self.aspect_names.len() != self.config.num_targets {
            return Err(CoreError::Checkpoint(format!(
                "{} aspect names for {} targets",
                self.aspect_names.len(),
                self.config.num_targets
            )));
        }
        let vocab = Vocabulary::from_words(self.vocabulary.clone())?;
        let emb = Tensor::zeros(&[vocab.len(), self.config.embed_dim]);
        let mut model = match (self.kind, &self.source) {
            (ModelKind::MtmC, Some(src)) => {
                let (source, _) = src.to_model()?;
                Model::contextualized(self.config.clone(), emb, source, 0)?
            }
            (ModelKind::MtmC, None) => {
                return Err(CoreError::Checkpoint("mtm-c checkpoint without its source masker".into()))
            }
            (kind, _) => Model::new(kind, self.config.clone(), emb, 0)?,
        };
        model
            .params
            .load(self.params.iter().map(|p| (p.name.as_str(), p.shape.as_slice(), p.data.as_slice())))?;
        Ok((model, vocab))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoints serialize")
    }

    pub fn from_json(source: &str, content: &str) -> Result<Self> {
        serde_json::from_str(content).map_err(|e| CoreError::Checkpoint(format!("{source}: {e}")))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_atomic(path, self.to_json().as_bytes())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Checkpoint::from_json(&path.display().to_string(), &read_to_string(path)?)
    }
}
