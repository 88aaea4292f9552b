//! Distributional semantic rewards for self-critical summarization training.
//!
//! The crate is organized bottom-up:
//!
//! * [`corpus`]: tokenization, vocabulary, pointer-extended encoding.
//! * [`embed`]: unit-norm contextual token embeddings (built-in hash provider
//!   or precomputed files).
//! * [`metrics`]: ROUGE-L, the greedy-matching semantic score, repetition and
//!   novelty rates, corpus reports.
//! * [`model`]: a GRU pointer-generator with a reverse-mode gradient tape.
//! * [`train`]: cross-entropy pretraining and self-critical fine-tuning under
//!   mixed objectives.

pub mod corpus;
pub mod embed;
mod error;
pub mod metrics;
pub mod model;
pub mod train;

pub use corpus::{ArticleSummaryPair, EncodedPair, Token, TokenSequence, Vocabulary};
pub use embed::{ContextualEmbeddings, EmbeddingProvider, Side};
pub use error::{Error, Result};
pub use metrics::{MetricReport, ScoreTriple};
pub use model::{Checkpoint, Gradients, ModelConfig, Parameters, Trajectory};
pub use train::{Objective, RewardKind, TrainConfig};
