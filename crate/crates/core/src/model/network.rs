//! Bidirectional GRU encoder, GRU decoder with additive attention, and the
//! pointer-generator output mixture, expressed as tape builders.

use std::rc::Rc;

use crate::corpus::{PAD, UNK};
use crate::error::{Error, Result};

use super::params::{GruIds, Parameters};
use super::tape::{NodeId, Tape};

pub(crate) struct EncoderGraph {
    pub states: Rc<[NodeId]>,
    /// Attention key projections of `states`.
    pub keys: Rc<[NodeId]>,
    pub init: NodeId,
    pub source_ext: Rc<[u32]>,
    pub ext_size: usize,
}

pub(crate) struct StepNodes {
    pub dist: NodeId,
    pub state: NodeId,
    pub attn: NodeId,
    pub gate: NodeId,
}

fn gru(tape: &mut Tape<'_>, g: &GruIds, x: NodeId, h: NodeId) -> NodeId {
    let gate = |tape: &mut Tape<'_>, w, u, b, h_in| {
        let wx = tape.linear(w, x);
        let uh = tape.linear(u, h_in);
        let bias = tape.param(b);
        tape.sum(&[wx, uh, bias])
    };
    let z_pre = gate(tape, g.wz, g.uz, g.bz, h);
    let z = tape.sigmoid(z_pre);
    let r_pre = gate(tape, g.wr, g.ur, g.br, h);
    let r = tape.sigmoid(r_pre);
    let rh = tape.mul(r, h);
    let n_pre = gate(tape, g.wn, g.un, g.bn, rh);
    let n = tape.tanh(n_pre);
    tape.lerp(z, n, h)
}

fn input_embedding(tape: &mut Tape<'_>, id: u32) -> NodeId {
    let ids = tape.params().ids;
    let v = tape.params().config.vocab_size as u32;
    let row = if id >= v { UNK } else { id };
    tape.embed_row(ids.embedding, row as usize)
}

pub(crate) fn validate_source(params: &Parameters, source_ids: &[u32]) -> Result<()> {
    let c = &params.config;
    if source_ids.is_empty() {
        return Err(Error::Empty("source"));
    }
    if source_ids.len() > c.max_src {
        return Err(Error::InvalidArgument(format!(
            "source length {} exceeds max_src {}",
            source_ids.len(),
            c.max_src
        )));
    }
    if source_ids.iter().all(|&i| i == PAD) {
        return Err(Error::InvalidArgument("source is all padding".into()));
    }
    if let Some(&bad) = source_ids.iter().find(|&&i| i as usize >= c.vocab_size) {
        return Err(Error::InvalidArgument(format!(
            "source id {bad} outside vocabulary of {}",
            c.vocab_size
        )));
    }
    Ok(())
}

pub(crate) fn encode_graph(
    tape: &mut Tape<'_>,
    source_ids: &[u32],
    source_ext: &[u32],
    ext_size: usize,
) -> EncoderGraph {
    let params = tape.params();
    let ids = params.ids;
    let h = params.config.hidden_dim;
    let len = source_ids.len();
    let xs: Vec<NodeId> = source_ids
        .iter()
        .map(|&i| input_embedding(tape, i))
        .collect();

    let zero = tape.constant(vec![0.0; h]);
    let mut fwd = Vec::with_capacity(len);
    let mut state = zero;
    for &x in &xs {
        state = gru(tape, &ids.enc_fwd, x, state);
        fwd.push(state);
    }
    let mut bwd = vec![zero; len];
    let mut state = zero;
    for i in (0..len).rev() {
        state = gru(tape, &ids.enc_bwd, xs[i], state);
        bwd[i] = state;
    }
    let states: Vec<NodeId> = fwd
        .iter()
        .zip(&bwd)
        .map(|(&f, &b)| tape.concat(&[f, b]))
        .collect();
    let keys: Vec<NodeId> = states
        .iter()
        .map(|&s| tape.linear(ids.attn_enc, s))
        .collect();

    let last = tape.concat(&[fwd[len - 1], bwd[0]]);
    let proj = tape.linear(ids.bridge_w, last);
    let bias = tape.param(ids.bridge_b);
    let pre = tape.sum(&[proj, bias]);
    let init = tape.tanh(pre);

    EncoderGraph {
        states: states.into(),
        keys: keys.into(),
        init,
        source_ext: source_ext.into(),
        ext_size,
    }
}

pub(crate) fn step_graph(
    tape: &mut Tape<'_>,
    enc: &EncoderGraph,
    state: NodeId,
    prev_id: u32,
) -> StepNodes {
    let ids = tape.params().ids;
    let x = input_embedding(tape, prev_id);
    let s = gru(tape, &ids.dec, x, state);

    let q_lin = tape.linear(ids.attn_dec, s);
    let q_bias = tape.param(ids.attn_b);
    let query = tape.sum(&[q_lin, q_bias]);
    let scores = tape.additive_scores(enc.keys.clone(), query, ids.attn_v);
    let attn = tape.softmax(scores);
    let ctx = tape.weighted_sum(attn, enc.states.clone());

    let out_in = tape.concat(&[s, ctx]);
    let logits_lin = tape.linear(ids.out_w, out_in);
    let out_b = tape.param(ids.out_b);
    let logits = tape.sum(&[logits_lin, out_b]);
    let p_vocab = tape.softmax(logits);

    let gate_in = tape.concat(&[ctx, s, x]);
    let gate_lin = tape.linear(ids.gate_w, gate_in);
    let gate_b = tape.param(ids.gate_b);
    let gate_pre = tape.sum(&[gate_lin, gate_b]);
    let gate = tape.sigmoid(gate_pre);

    let dist = tape.pointer_mix(gate, p_vocab, attn, enc.source_ext.clone(), enc.ext_size);
    StepNodes {
        dist,
        state: s,
        attn,
        gate,
    }
}

/// Per-position encoder states (`forward ‖ backward`, width `2 * hidden`)
/// and the projected decoder initial state.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderStates {
    pub states: Vec<Vec<f64>>,
    pub decoder_init: Vec<f64>,
}

pub fn encode(params: &Parameters, source_ids: &[u32]) -> Result<EncoderStates> {
    validate_source(params, source_ids)?;
    let mut tape = Tape::new(params);
    let g = encode_graph(&mut tape, source_ids, source_ids, params.config.vocab_size);
    Ok(EncoderStates {
        states: g.states.iter().map(|&s| tape.value(s).to_vec()).collect(),
        decoder_init: tape.value(g.init).to_vec(),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepOutput {
    /// Over the extended vocabulary.
    pub distribution: Vec<f64>,
    pub state: Vec<f64>,
    pub attention: Vec<f64>,
    pub gate: f64,
}

/// One decoder step from explicit states. `prev_id` may be an extended id;
/// those are fed back as UNK.
pub fn decode_step(
    params: &Parameters,
    state: &[f64],
    prev_id: u32,
    enc: &EncoderStates,
    source_ext_ids: &[u32],
    ext_size: usize,
) -> StepOutput {
    let mut tape = Tape::new(params);
    let states: Vec<NodeId> = enc
        .states
        .iter()
        .map(|s| tape.constant(s.clone()))
        .collect();
    let ids = params.ids;
    let keys: Vec<NodeId> = states
        .iter()
        .map(|&s| tape.linear(ids.attn_enc, s))
        .collect();
    let init = tape.constant(state.to_vec());
    let g = EncoderGraph {
        states: states.into(),
        keys: keys.into(),
        init,
        source_ext: source_ext_ids.into(),
        ext_size,
    };
    let step = step_graph(&mut tape, &g, g.init, prev_id);
    StepOutput {
        distribution: tape.value(step.dist).to_vec(),
        state: tape.value(step.state).to_vec(),
        attention: tape.value(step.attn).to_vec(),
        gate: tape.scalar(step.gate),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{BOS, EOS};
    use crate::model::ModelConfig;

    fn params() -> Parameters {
        Parameters::init(&ModelConfig {
            vocab_size: 12,
            embed_dim: 6,
            hidden_dim: 5,
            max_src: 8,
            max_tgt: 5,
            seed: 11,
        })
    }

    #[test]
    fn encode_shapes_and_determinism() {
        let p = params();
        let src = [4, 5, 6, 1];
        let e = encode(&p, &src).unwrap();
        assert_eq!(e.states.len(), 4);
        assert!(e.states.iter().all(|s| s.len() == 10));
        assert_eq!(e.decoder_init.len(), 5);
        assert_eq!(e, encode(&p, &src).unwrap());
    }

    #[test]
    fn encode_rejects_bad_sources() {
        let p = params();
        assert!(encode(&p, &[]).is_err());
        assert!(encode(&p, &[PAD, PAD]).is_err());
        assert!(encode(&p, &[4; 9]).is_err());
        assert!(encode(&p, &[40]).is_err());
    }

    #[test]
    fn step_distribution_is_normalized() {
        let p = params();
        let src = [4, 1, 6, 1];
        let ext = [4, 12, 6, 13];
        let e = encode(&p, &src).unwrap();
        let mut state = e.decoder_init.clone();
        for prev in [BOS, 13, 7, EOS] {
            let out = decode_step(&p, &state, prev, &e, &ext, 14);
            assert_eq!(out.distribution.len(), 14);
            assert!(out.distribution.iter().all(|&x| x >= 0.0));
            assert!((out.distribution.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!((out.attention.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(out.gate > 0.0 && out.gate < 1.0);
            state = out.state;
        }
    }

    #[test]
    fn extended_ids_share_unk_embedding() {
        let p = params();
        let src = [4, 1];
        let e = encode(&p, &src).unwrap();
        let a = decode_step(&p, &e.decoder_init, 12, &e, &[4, 12], 13);
        let b = decode_step(&p, &e.decoder_init, UNK, &e, &[4, 12], 13);
        assert_eq!(a, b);
    }
}
