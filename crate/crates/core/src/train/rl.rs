use crate::corpus::{EncodedPair, Vocabulary};
use crate::embed::EmbeddingProvider;
use crate::error::{Error, Result};
use crate::model::{
    greedy_decode, sample_decode, scst_logprob_and_grad, xent_loss_and_grad, Gradients, Parameters,
    Trajectory,
};

use super::reward::{reward, RewardKind};
use super::Objective;

/// Unweighted per-term losses; `None` for terms the objective leaves out
/// (or weights by zero).
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct TermLosses {
    pub dsr: Option<f64>,
    pub rouge: Option<f64>,
    pub xent: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct RlStepOutput {
    pub terms: TermLosses,
    /// Weighted sum of `terms`.
    pub total: f64,
    /// `r(greedy) - r(sampled)` for each reward in play.
    pub advantages: Vec<(RewardKind, f64)>,
    pub gradients: Gradients,
    pub greedy: Option<Trajectory>,
    pub sampled: Option<Trajectory>,
}

impl RlStepOutput {
    /// Mixing-weighted advantage, i.e. the factor on the sampled
    /// sequence's log-probability.
    pub fn combined_advantage(&self, objective: &Objective) -> Option<f64> {
        if self.advantages.is_empty() {
            return None;
        }
        let w = objective.weights();
        Some(
            self.advantages
                .iter()
                .map(|(k, a)| match k {
                    RewardKind::FBert => w.dsr * a,
                    RewardKind::RougeLF => w.rouge * a,
                })
                .sum(),
        )
    }
}

/// Loss terms and gradients of `objective` on one example. The greedy
/// decode supplies the baseline for the sampled one; both self-critical
/// terms share that single pair. Zero-weight terms are skipped entirely.
pub fn rl_step(
    params: &Parameters,
    pair: &EncodedPair,
    vocab: &Vocabulary,
    objective: &Objective,
    provider: &EmbeddingProvider,
    sample_seed: u64,
) -> Result<RlStepOutput> {
    let w = objective.weights();
    let mut terms = TermLosses::default();
    let mut total = 0.0;
    let mut grads: Option<Gradients> = None;
    let mut advantages = Vec::new();
    let (mut greedy, mut sampled) = (None, None);

    if w.needs_sampling() {
        let baseline = greedy_decode(params, pair)?;
        let sample = sample_decode(params, pair, sample_seed)?;
        let base_tokens = pair.surface(&baseline.tokens, vocab);
        let sample_tokens = pair.surface(&sample.tokens, vocab);
        let mut coef = 0.0;
        for (kind, weight) in objective.reward_kinds() {
            let rb = reward(&pair.id, &base_tokens, &pair.summary, kind, provider)?;
            let rs = reward(&pair.id, &sample_tokens, &pair.summary, kind, provider)?;
            let adv = rb - rs;
            advantages.push((kind, adv));
            coef += weight * adv;
        }
        let (logprob, g) = scst_logprob_and_grad(params, pair, &sample, coef)?;
        for (&(kind, adv), (_, weight)) in advantages.iter().zip(objective.reward_kinds()) {
            let term = if adv == 0.0 { 0.0 } else { adv * logprob };
            total += weight * term;
            match kind {
                RewardKind::FBert => terms.dsr = Some(term),
                RewardKind::RougeLF => terms.rouge = Some(term),
            }
        }
        grads = Some(g);
        greedy = Some(baseline);
        sampled = Some(sample);
    }

    if w.xent != 0.0 {
        let (loss, g) = xent_loss_and_grad(params, pair)?;
        terms.xent = Some(loss);
        total += w.xent * loss;
        match grads.as_mut() {
            Some(acc) => acc.add_scaled(&g, w.xent),
            None => {
                let mut g = g;
                g.scale(w.xent);
                grads = Some(g);
            }
        }
    }

    if !total.is_finite() {
        return Err(Error::Divergence(format!(
            "example {}: non-finite loss {total} (terms {terms:?})",
            pair.id
        )));
    }
    Ok(RlStepOutput {
        terms,
        total,
        advantages,
        gradients: grads.expect("every objective has at least one term"),
        greedy,
        sampled,
    })
}
