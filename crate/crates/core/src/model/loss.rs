use crate::corpus::{EncodedPair, BOS};
use crate::error::{Error, Result};

use super::decode::{DecodeMode, Trajectory};
use super::network::{encode_graph, step_graph, validate_source};
use super::params::{Gradients, Parameters};
use super::tape::Tape;

/// Teacher-forced pass: feeds `inputs[t]` and scores `outputs[t]`. Returns
/// the summed log-probability, the per-step terms, and, when `seed` is
/// given, the gradient of `seed * sum`.
fn forced(
    params: &Parameters,
    pair: &EncodedPair,
    inputs: &[u32],
    outputs: &[u32],
    seed: Option<f64>,
) -> Result<(f64, Vec<f64>, Option<Gradients>)> {
    validate_source(params, &pair.source_ids)?;
    debug_assert_eq!(inputs.len(), outputs.len());
    if outputs.is_empty() {
        return Err(Error::Empty("target"));
    }
    let ext_size = pair.extended_size(params.config.vocab_size);
    if let Some(&bad) = outputs.iter().find(|&&o| o as usize >= ext_size) {
        return Err(Error::InvalidArgument(format!(
            "target id {bad} outside extended vocabulary of {ext_size}"
        )));
    }
    let mut tape = Tape::new(params);
    let enc = encode_graph(&mut tape, &pair.source_ids, &pair.source_ext_ids, ext_size);
    let mut state = enc.init;
    let mut terms = Vec::with_capacity(outputs.len());
    for (&inp, &out) in inputs.iter().zip(outputs) {
        let step = step_graph(&mut tape, &enc, state, inp);
        terms.push(tape.log_at(step.dist, out as usize));
        state = step.state;
    }
    let total = tape.sum(&terms);
    let logprob = tape.scalar(total);
    let steps: Vec<f64> = terms.iter().map(|&t| tape.scalar(t)).collect();
    let grads = seed.map(|s| {
        let mut g = Gradients::zeros_like(params);
        tape.backward(total, s, &mut g);
        g
    });
    Ok((logprob, steps, grads))
}

fn xent_io(pair: &EncodedPair) -> (&[u32], &[u32]) {
    let n = pair.target_ids.len();
    (&pair.target_ids[..n - 1], &pair.target_ext_ids[1..])
}

/// Per-step `log P(outputs[t] | inputs[..=t], x)` under teacher forcing.
pub fn teacher_forced_logprobs(
    params: &Parameters,
    pair: &EncodedPair,
    inputs: &[u32],
    outputs: &[u32],
) -> Result<Vec<f64>> {
    if inputs.len() != outputs.len() {
        return Err(Error::InvalidArgument(
            "inputs and outputs differ in length".into(),
        ));
    }
    forced(params, pair, inputs, outputs, None).map(|r| r.1)
}

fn finite(loss: f64, what: &str) -> Result<f64> {
    if loss.is_finite() {
        Ok(loss)
    } else {
        Err(Error::Divergence(format!("{what} loss is {loss}")))
    }
}

/// `-sum_t log P(y_t | y_<t, x)` with the reference fed as decoder input.
pub fn xent_loss(params: &Parameters, pair: &EncodedPair) -> Result<f64> {
    let (inp, out) = xent_io(pair);
    let (lp, _, _) = forced(params, pair, inp, out, None)?;
    finite(-lp, "xent")
}

pub fn xent_loss_and_grad(params: &Parameters, pair: &EncodedPair) -> Result<(f64, Gradients)> {
    let (inp, out) = xent_io(pair);
    let (lp, _, grads) = forced(params, pair, inp, out, Some(-1.0))?;
    let loss = finite(-lp, "xent")?;
    let grads = grads.expect("seeded");
    if !grads.is_finite() {
        return Err(Error::Divergence("xent gradient is non-finite".into()));
    }
    Ok((loss, grads))
}

fn scst_io(sampled: &Trajectory) -> Result<(Vec<u32>, &[u32])> {
    if sampled.mode != DecodeMode::Sampled {
        return Err(Error::InvalidArgument(
            "self-critical loss needs a sampled trajectory".into(),
        ));
    }
    if sampled.tokens.is_empty() {
        return Err(Error::Empty("trajectory"));
    }
    let mut inputs = Vec::with_capacity(sampled.tokens.len());
    inputs.push(BOS);
    inputs.extend_from_slice(&sampled.tokens[..sampled.tokens.len() - 1]);
    Ok((inputs, &sampled.tokens))
}

/// `advantage * sum_t log P(ŷ_t | ŷ_<t, x)` recomputed with the sampled
/// prefix as decoder input.
pub fn scst_loss(
    params: &Parameters,
    pair: &EncodedPair,
    sampled: &Trajectory,
    advantage: f64,
) -> Result<f64> {
    let (inp, out) = scst_io(sampled)?;
    let (lp, _, _) = forced(params, pair, &inp, out, None)?;
    finite(advantage * lp, "self-critical")
}

/// Gradient flows only through the log-probabilities; `advantage` is a
/// constant. A zero advantage yields exactly zero gradients.
pub fn scst_loss_and_grad(
    params: &Parameters,
    pair: &EncodedPair,
    sampled: &Trajectory,
    advantage: f64,
) -> Result<(f64, Gradients)> {
    let (lp, grads) = scst_logprob_and_grad(params, pair, sampled, advantage)?;
    let loss = if advantage == 0.0 {
        0.0
    } else {
        advantage * lp
    };
    Ok((finite(loss, "self-critical")?, grads))
}

/// Recomputed `sum_t log P(ŷ_t | ŷ_<t, x)` and the gradient of
/// `coef * sum`.
pub(crate) fn scst_logprob_and_grad(
    params: &Parameters,
    pair: &EncodedPair,
    sampled: &Trajectory,
    coef: f64,
) -> Result<(f64, Gradients)> {
    if !coef.is_finite() {
        return Err(Error::Divergence(format!("advantage is {coef}")));
    }
    let (inp, out) = scst_io(sampled)?;
    if coef == 0.0 {
        let (lp, _, _) = forced(params, pair, &inp, out, None)?;
        return Ok((finite(lp, "self-critical")?, Gradients::zeros_like(params)));
    }
    let (lp, _, grads) = forced(params, pair, &inp, out, Some(coef))?;
    let lp = finite(lp, "self-critical")?;
    let grads = grads.expect("seeded");
    if !grads.is_finite() {
        return Err(Error::Divergence(
            "self-critical gradient is non-finite".into(),
        ));
    }
    Ok((lp, grads))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{build_vocab, encode_pair, ArticleSummaryPair};
    use crate::model::{decode_step, encode, greedy_decode, sample_decode, ModelConfig};

    fn fixture(summary: &str) -> (Parameters, EncodedPair) {
        let pairs = [ArticleSummaryPair::from_text("0", "a b c d e zzz", summary)];
        let vocab =
            build_vocab(&[ArticleSummaryPair::from_text("v", "a b c d e", "a")], 10).unwrap();
        let pair = encode_pair(&pairs[0], &vocab, 10, 6).unwrap();
        let params = Parameters::init(&ModelConfig {
            vocab_size: vocab.len(),
            embed_dim: 5,
            hidden_dim: 4,
            max_src: 10,
            max_tgt: 6,
            seed: 2,
        });
        (params, pair)
    }

    #[test]
    fn single_token_target_loss_is_neg_log_p() {
        // Empty summary: the only target is EOS.
        let (p, pair) = fixture("");
        assert_eq!(pair.target_len(), 1);
        let enc = encode(&p, &pair.source_ids).unwrap();
        let ext = pair.extended_size(p.config().vocab_size);
        let out = decode_step(&p, &enc.decoder_init, BOS, &enc, &pair.source_ext_ids, ext);
        let want = -out.distribution[crate::corpus::EOS as usize].ln();
        let (loss, _) = xent_loss_and_grad(&p, &pair).unwrap();
        assert!((loss - want).abs() < 1e-12);
        assert!(loss >= 0.0);
    }

    #[test]
    fn sequence_logprob_decomposes() {
        let (p, pair) = fixture("b zzz d");
        let (inp, out) = xent_io(&pair);
        let steps = teacher_forced_logprobs(&p, &pair, inp, out).unwrap();
        let loss = xent_loss(&p, &pair).unwrap();
        assert!((steps.iter().sum::<f64>() + loss).abs() < 1e-12);
        assert!(steps.iter().all(|&s| s <= 0.0));
    }

    #[test]
    fn scst_matches_sampled_logprob() {
        let (p, pair) = fixture("b d");
        let traj = sample_decode(&p, &pair, 4).unwrap();
        let loss = scst_loss(&p, &pair, &traj, 0.5).unwrap();
        assert!((loss - 0.5 * traj.logprob()).abs() < 1e-12);
    }

    #[test]
    fn zero_advantage_zero_gradient() {
        let (p, pair) = fixture("b d");
        let traj = sample_decode(&p, &pair, 4).unwrap();
        let (loss, g) = scst_loss_and_grad(&p, &pair, &traj, 0.0).unwrap();
        assert_eq!(loss, 0.0);
        assert!(g.is_zero());
    }

    #[test]
    fn scst_rejects_greedy_trajectory() {
        let (p, pair) = fixture("b d");
        let traj = greedy_decode(&p, &pair).unwrap();
        assert!(scst_loss_and_grad(&p, &pair, &traj, 0.3).is_err());
    }
}
