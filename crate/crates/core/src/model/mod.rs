//! Attention pointer-generator encoder–decoder with exact reverse-mode
//! gradients for the teacher-forced and self-critical losses.

mod checkpoint;
mod decode;
mod gradcheck;
mod loss;
mod network;
mod params;
mod tape;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use checkpoint::{Checkpoint, HistoryRecord, CHECKPOINT_VERSION};
pub use decode::{argmax, greedy_decode, sample_decode, DecodeMode, Trajectory};
pub use gradcheck::{finite_diff_check, GradCheckReport, MIN_CHECKED_COORDS};
pub(crate) use loss::scst_logprob_and_grad;
pub use loss::{
    scst_loss, scst_loss_and_grad, teacher_forced_logprobs, xent_loss, xent_loss_and_grad,
};
pub use network::{decode_step, encode, EncoderStates, StepOutput};
pub use params::{FlatParams, Gradients, Parameters, Tensor, INIT_RANGE};
pub use tape::mix_distribution;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub max_src: usize,
    pub max_tgt: usize,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            vocab_size: 50_000,
            embed_dim: 128,
            hidden_dim: 256,
            max_src: crate::corpus::DEFAULT_MAX_SRC,
            max_tgt: crate::corpus::DEFAULT_MAX_TGT,
            seed: 1,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("vocab_size", self.vocab_size),
            ("embed_dim", self.embed_dim),
            ("hidden_dim", self.hidden_dim),
            ("max_src", self.max_src),
            ("max_tgt", self.max_tgt),
        ];
        for (name, v) in dims {
            if v == 0 {
                return Err(Error::InvalidArgument(format!("{name} must be at least 1")));
            }
        }
        if self.vocab_size <= crate::corpus::NUM_RESERVED {
            return Err(Error::InvalidArgument(
                "vocab_size must exceed the reserved ids".into(),
            ));
        }
        Ok(())
    }
}

pub fn init_params(config: &ModelConfig) -> Result<Parameters> {
    config.validate()?;
    Ok(Parameters::init(config))
}
