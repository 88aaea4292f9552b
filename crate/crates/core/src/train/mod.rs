//! Cross-entropy pretraining and self-critical fine-tuning under mixed
//! lexical/semantic reward objectives.

mod batch;
mod evaluate;
mod finetune;
mod objective;
mod optim;
mod pretrain;
mod reward;
mod rl;

use serde::{Deserialize, Serialize};

use crate::embed::EmbeddingProvider;
use crate::error::{Error, Result};
use crate::model::{HistoryRecord, Parameters};

pub use batch::{example_seed, BatchSampler};
pub use evaluate::{decode_corpus, evaluate};
pub use finetune::{rl_finetune, FinetuneOutcome};
pub use objective::{Dataset, Objective, TermWeights};
pub use optim::{Adam, AdamConfig};
pub use pretrain::{dev_xent, pretrain, PretrainOutcome};
pub use reward::{reward, RewardKind};
pub use rl::{rl_step, RlStepOutput, TermLosses};

pub const DEFAULT_CLIP_NORM: f64 = 2.0;
pub const DEFAULT_PRETRAIN_LR: f64 = 1e-3;
pub const DEFAULT_RL_LR: f64 = 1e-5;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub objective: Objective,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub steps: u64,
    pub eval_interval: u64,
    pub seed: u64,
    pub provider: EmbeddingProvider,
    pub ngram: usize,
    pub clip_norm: f64,
    pub adam: AdamConfig,
}

impl TrainConfig {
    pub fn pretrain_default() -> Self {
        TrainConfig {
            objective: Objective::Xent,
            learning_rate: DEFAULT_PRETRAIN_LR,
            batch_size: 16,
            steps: 2000,
            eval_interval: 100,
            seed: 1,
            provider: EmbeddingProvider::default(),
            ngram: 1,
            clip_norm: DEFAULT_CLIP_NORM,
            adam: AdamConfig::default(),
        }
    }

    pub fn rl_default(objective: Objective) -> Self {
        TrainConfig {
            objective,
            learning_rate: DEFAULT_RL_LR,
            ..TrainConfig::pretrain_default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate {} must be positive",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 || self.steps == 0 || self.eval_interval == 0 {
            return Err(Error::Config(
                "batch size, steps and eval interval must be positive".into(),
            ));
        }
        if self.eval_interval > self.steps {
            return Err(Error::Config(format!(
                "eval interval {} exceeds the step budget {}",
                self.eval_interval, self.steps
            )));
        }
        if self.ngram == 0 {
            return Err(Error::Config("n-gram size must be at least 1".into()));
        }
        if self.clip_norm.is_nan() || self.clip_norm <= 0.0 {
            return Err(Error::Config("clip norm must be positive".into()));
        }
        self.objective.validate()
    }
}

/// Hooks for logging and checkpointing while training runs.
pub trait TrainMonitor {
    fn on_step(&mut self, _log: &StepLog) -> Result<()> {
        Ok(())
    }

    fn on_eval(&mut self, _record: &HistoryRecord, _params: &Parameters) -> Result<()> {
        Ok(())
    }
}

pub struct NoMonitor;

impl TrainMonitor for NoMonitor {}

/// Batch-mean losses for one optimizer step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepLog {
    pub step: u64,
    pub total: f64,
    pub terms: TermLosses,
    pub mean_advantage: Option<f64>,
    pub learning_rate: f64,
    pub grad_norm: f64,
}

impl std::fmt::Display for StepLog {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "step={} loss={:.6}", self.step, self.total)?;
        let terms = [
            ("dsr", self.terms.dsr),
            ("rouge", self.terms.rouge),
            ("xent", self.terms.xent),
        ];
        for (name, v) in terms {
            if let Some(v) = v {
                write!(f, " {name}={v:.6}")?;
            }
        }
        if let Some(a) = self.mean_advantage {
            write!(f, " adv={a:.6}")?;
        }
        write!(
            f,
            " grad_norm={:.6} lr={:e}",
            self.grad_norm, self.learning_rate
        )
    }
}

/// Pretraining and fine-tuning report dev metrics in this row shape.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DevMetrics {
    pub f_bert: f64,
    pub rouge_l: f64,
}
