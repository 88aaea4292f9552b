use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::params::{Parameters, Tensor};
use super::ModelConfig;

pub const CHECKPOINT_VERSION: &str = "dsrl-checkpoint/1";

/// One evaluation point recorded during training.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct HistoryRecord {
    pub step: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dev_xent: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f_bert: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rouge_l: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct NamedTensor {
    name: String,
    shape: [usize; 2],
    data: Vec<f64>,
}

/// JSON container for model weights plus training metadata.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: String,
    pub config: ModelConfig,
    pub vocab_hash: String,
    pub step: u64,
    pub history: Vec<HistoryRecord>,
    tensors: Vec<NamedTensor>,
}

impl Checkpoint {
    pub fn new(
        params: &Parameters,
        vocab_hash: &str,
        step: u64,
        history: Vec<HistoryRecord>,
    ) -> Self {
        Checkpoint {
            version: CHECKPOINT_VERSION.to_string(),
            config: params.config().clone(),
            vocab_hash: vocab_hash.to_string(),
            step,
            history,
            tensors: params
                .named()
                .map(|(name, t)| NamedTensor {
                    name: name.to_string(),
                    shape: [t.rows, t.cols],
                    data: t.data.clone(),
                })
                .collect(),
        }
    }

    pub fn params(&self) -> Result<Parameters> {
        if self.version != CHECKPOINT_VERSION {
            return Err(Error::ConfigMismatch(format!(
                "checkpoint version {:?}, expected {CHECKPOINT_VERSION:?}",
                self.version
            )));
        }
        let named = self
            .tensors
            .iter()
            .map(|t| {
                (
                    t.name.clone(),
                    Tensor {
                        rows: t.shape[0],
                        cols: t.shape[1],
                        data: t.data.clone(),
                    },
                )
            })
            .collect();
        Parameters::from_tensors(&self.config, named).map_err(Error::ConfigMismatch)
    }

    /// Rejects checkpoints whose model config or vocabulary differ from the
    /// expected ones.
    pub fn check_compatible(&self, config: &ModelConfig, vocab_hash: &str) -> Result<()> {
        let mut ours = self.config.clone();
        let mut theirs = config.clone();
        // The init seed does not affect shapes.
        ours.seed = 0;
        theirs.seed = 0;
        if ours != theirs {
            return Err(Error::ConfigMismatch(format!(
                "checkpoint config {:?} differs from {:?}",
                self.config, config
            )));
        }
        if self.vocab_hash != vocab_hash {
            return Err(Error::ConfigMismatch(
                "checkpoint was trained with a different vocabulary".into(),
            ));
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self)?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| Error::ConfigMismatch(format!("{}: {e}", path.display())))
    }
}
