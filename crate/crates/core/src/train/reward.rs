use serde::{Deserialize, Serialize};

use crate::corpus::{strip_separators, Token};
use crate::embed::{EmbeddingProvider, Side};
use crate::error::{Error, Result};
use crate::metrics::{rouge_l, semantic_score, Scored, SemanticOptions};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum RewardKind {
    RougeLF,
    FBert,
}

/// Sentence-level reward in `[0, 1]`. Separators are removed first; an
/// empty candidate earns 0. The semantic reward uses uniform token weights.
pub fn reward(
    id: &str,
    candidate: &[Token],
    reference: &[Token],
    kind: RewardKind,
    provider: &EmbeddingProvider,
) -> Result<f64> {
    let reference = strip_separators(reference);
    if reference.is_empty() {
        return Err(Error::Empty("reference"));
    }
    let candidate = strip_separators(candidate);
    if candidate.is_empty() {
        return Ok(0.0);
    }
    let r = match kind {
        RewardKind::RougeLF => rouge_l(&candidate, &reference).f,
        RewardKind::FBert => {
            let ce = provider.embed(id, Side::Candidate, &candidate)?;
            let re = provider.embed(id, Side::Reference, &reference)?;
            semantic_score(
                Scored {
                    tokens: &candidate,
                    embeddings: &ce,
                },
                Scored {
                    tokens: &reference,
                    embeddings: &re,
                },
                SemanticOptions::default(),
            )?
            .f
        }
    };
    Ok(r.clamp(0.0, 1.0))
}
