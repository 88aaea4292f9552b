//! Vector-valued reverse-mode tape.
//!
//! Nodes hold dense `f64` vectors (scalars are length 1). Parameter tensors
//! are never copied onto the tape except for small bias vectors; matrix ops
//! refer to them by id and write their gradients straight into a
//! [`Gradients`] buffer during the backward sweep.

use std::rc::Rc;

use super::params::{Gradients, ParamId, Parameters};

pub(crate) type NodeId = usize;

enum Op {
    Const,
    Param(ParamId),
    EmbedRow(ParamId, usize),
    /// `W x`
    Linear(ParamId, NodeId),
    Sum(Vec<NodeId>),
    Mul(NodeId, NodeId),
    /// `(1 - z) * a + z * b`
    Lerp {
        z: NodeId,
        a: NodeId,
        b: NodeId,
    },
    Sigmoid(NodeId),
    Tanh(NodeId),
    Concat(Vec<NodeId>),
    Softmax(NodeId),
    /// `e_i = v . tanh(keys_i + query)`; `aux` keeps the tanh activations.
    AdditiveScores {
        keys: Rc<[NodeId]>,
        query: NodeId,
        v: ParamId,
    },
    /// `sum_i w_i x_i`
    WeightedSum {
        weights: NodeId,
        items: Rc<[NodeId]>,
    },
    /// `g * p_vocab` on the first `|p_vocab|` slots plus `(1 - g)` times the
    /// attention mass scattered onto `source_ext`.
    PointerMix {
        gate: NodeId,
        vocab: NodeId,
        attn: NodeId,
        source_ext: Rc<[u32]>,
    },
    Log(NodeId, usize),
}

struct Node {
    value: Vec<f64>,
    aux: Vec<f64>,
    op: Op,
}

pub(crate) struct Tape<'p> {
    params: &'p Parameters,
    nodes: Vec<Node>,
    param_nodes: Vec<Option<NodeId>>,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn softmax(x: &[f64]) -> Vec<f64> {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = x.iter().map(|v| (v - max).exp()).collect();
    let s: f64 = out.iter().sum();
    out.iter_mut().for_each(|v| *v /= s);
    out
}

/// Mixes generation and copy distributions over the extended vocabulary.
pub fn mix_distribution(
    gate: f64,
    p_vocab: &[f64],
    attention: &[f64],
    source_ext: &[u32],
    ext_size: usize,
) -> Vec<f64> {
    let mut out = vec![0.0; ext_size];
    for (o, p) in out.iter_mut().zip(p_vocab) {
        *o = gate * p;
    }
    for (a, &k) in attention.iter().zip(source_ext) {
        out[k as usize] += (1.0 - gate) * a;
    }
    out
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p Parameters) -> Self {
        Tape {
            params,
            nodes: Vec::with_capacity(256),
            param_nodes: vec![None; params.tensors.len()],
        }
    }

    pub fn params(&self) -> &'p Parameters {
        self.params
    }

    fn push(&mut self, value: Vec<f64>, op: Op) -> NodeId {
        self.nodes.push(Node {
            value,
            aux: Vec::new(),
            op,
        });
        self.nodes.len() - 1
    }

    pub fn value(&self, id: NodeId) -> &[f64] {
        &self.nodes[id].value
    }

    pub fn scalar(&self, id: NodeId) -> f64 {
        self.nodes[id].value[0]
    }

    pub fn constant(&mut self, value: Vec<f64>) -> NodeId {
        self.push(value, Op::Const)
    }

    /// Whole parameter tensor as a vector node; memoized per tape.
    pub fn param(&mut self, id: ParamId) -> NodeId {
        if let Some(n) = self.param_nodes[id.0] {
            return n;
        }
        let v = self.params.tensor(id).data.clone();
        let n = self.push(v, Op::Param(id));
        self.param_nodes[id.0] = Some(n);
        n
    }

    pub fn embed_row(&mut self, table: ParamId, row: usize) -> NodeId {
        let v = self.params.tensor(table).row(row).to_vec();
        self.push(v, Op::EmbedRow(table, row))
    }

    pub fn linear(&mut self, w: ParamId, x: NodeId) -> NodeId {
        let t = self.params.tensor(w);
        let xv = &self.nodes[x].value;
        debug_assert_eq!(t.cols, xv.len());
        let out = (0..t.rows)
            .map(|r| t.row(r).iter().zip(xv).map(|(a, b)| a * b).sum())
            .collect();
        self.push(out, Op::Linear(w, x))
    }

    pub fn sum(&mut self, xs: &[NodeId]) -> NodeId {
        let mut out = self.nodes[xs[0]].value.clone();
        for &x in &xs[1..] {
            out.iter_mut()
                .zip(&self.nodes[x].value)
                .for_each(|(o, v)| *o += v);
        }
        self.push(out, Op::Sum(xs.to_vec()))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let out = self.nodes[a]
            .value
            .iter()
            .zip(&self.nodes[b].value)
            .map(|(x, y)| x * y)
            .collect();
        self.push(out, Op::Mul(a, b))
    }

    pub fn lerp(&mut self, z: NodeId, a: NodeId, b: NodeId) -> NodeId {
        let (zv, av, bv) = (
            &self.nodes[z].value,
            &self.nodes[a].value,
            &self.nodes[b].value,
        );
        let out = zv
            .iter()
            .zip(av.iter().zip(bv))
            .map(|(z, (a, b))| (1.0 - z) * a + z * b)
            .collect();
        self.push(out, Op::Lerp { z, a, b })
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        let out = self.nodes[x].value.iter().map(|&v| sigmoid(v)).collect();
        self.push(out, Op::Sigmoid(x))
    }

    pub fn tanh(&mut self, x: NodeId) -> NodeId {
        let out = self.nodes[x].value.iter().map(|v| v.tanh()).collect();
        self.push(out, Op::Tanh(x))
    }

    pub fn concat(&mut self, xs: &[NodeId]) -> NodeId {
        let out = xs
            .iter()
            .flat_map(|&x| self.nodes[x].value.iter().copied())
            .collect();
        self.push(out, Op::Concat(xs.to_vec()))
    }

    pub fn softmax(&mut self, x: NodeId) -> NodeId {
        let out = softmax(&self.nodes[x].value);
        self.push(out, Op::Softmax(x))
    }

    pub fn additive_scores(&mut self, keys: Rc<[NodeId]>, query: NodeId, v: ParamId) -> NodeId {
        let vv = &self.params.tensor(v).data;
        let q = &self.nodes[query].value;
        let mut aux = Vec::with_capacity(keys.len() * q.len());
        let mut out = Vec::with_capacity(keys.len());
        for &k in keys.iter() {
            let mut e = 0.0;
            for ((kv, qv), w) in self.nodes[k].value.iter().zip(q).zip(vv) {
                let t = (kv + qv).tanh();
                aux.push(t);
                e += w * t;
            }
            out.push(e);
        }
        let id = self.push(out, Op::AdditiveScores { keys, query, v });
        self.nodes[id].aux = aux;
        id
    }

    pub fn weighted_sum(&mut self, weights: NodeId, items: Rc<[NodeId]>) -> NodeId {
        let w = &self.nodes[weights].value;
        let mut out = vec![0.0; self.nodes[items[0]].value.len()];
        for (wi, &x) in w.iter().zip(items.iter()) {
            out.iter_mut()
                .zip(&self.nodes[x].value)
                .for_each(|(o, v)| *o += wi * v);
        }
        self.push(out, Op::WeightedSum { weights, items })
    }

    pub fn pointer_mix(
        &mut self,
        gate: NodeId,
        vocab: NodeId,
        attn: NodeId,
        source_ext: Rc<[u32]>,
        ext_size: usize,
    ) -> NodeId {
        let out = mix_distribution(
            self.nodes[gate].value[0],
            &self.nodes[vocab].value,
            &self.nodes[attn].value,
            &source_ext,
            ext_size,
        );
        self.push(
            out,
            Op::PointerMix {
                gate,
                vocab,
                attn,
                source_ext,
            },
        )
    }

    pub fn log_at(&mut self, x: NodeId, index: usize) -> NodeId {
        let v = self.nodes[x].value[index].ln();
        self.push(vec![v], Op::Log(x, index))
    }

    /// Propagates `seed * d(root)` back through the tape, accumulating
    /// parameter gradients into `grads`.
    pub fn backward(&self, root: NodeId, seed: f64, grads: &mut Gradients) {
        let mut adj: Vec<Vec<f64>> = (0..=root).map(|_| Vec::new()).collect();
        adj[root] = vec![seed; self.nodes[root].value.len()];

        fn acc(adj: &mut [Vec<f64>], id: NodeId, len: usize) -> &mut Vec<f64> {
            let slot = &mut adj[id];
            if slot.is_empty() {
                slot.resize(len, 0.0);
            }
            slot
        }

        for id in (0..=root).rev() {
            if adj[id].is_empty() {
                continue;
            }
            let dy = std::mem::take(&mut adj[id]);
            let node = &self.nodes[id];
            match &node.op {
                Op::Const => {}
                Op::Param(p) => {
                    let g = grads.slot(*p);
                    g.data.iter_mut().zip(&dy).for_each(|(a, d)| *a += d);
                }
                Op::EmbedRow(p, row) => {
                    let g = grads.slot(*p);
                    let cols = g.cols;
                    g.data[row * cols..(row + 1) * cols]
                        .iter_mut()
                        .zip(&dy)
                        .for_each(|(a, d)| *a += d);
                }
                Op::Linear(w, x) => {
                    let t = self.params.tensor(*w);
                    let xv = &self.nodes[*x].value;
                    let g = grads.slot(*w);
                    for (r, d) in dy.iter().enumerate() {
                        if *d != 0.0 {
                            g.data[r * t.cols..(r + 1) * t.cols]
                                .iter_mut()
                                .zip(xv)
                                .for_each(|(a, xv)| *a += d * xv);
                        }
                    }
                    let dx = acc(&mut adj, *x, t.cols);
                    for (r, d) in dy.iter().enumerate() {
                        if *d != 0.0 {
                            dx.iter_mut().zip(t.row(r)).for_each(|(a, w)| *a += d * w);
                        }
                    }
                }
                Op::Sum(xs) => {
                    for &x in xs {
                        let dx = acc(&mut adj, x, dy.len());
                        dx.iter_mut().zip(&dy).for_each(|(a, d)| *a += d);
                    }
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (&self.nodes[*a].value, &self.nodes[*b].value);
                    let da = acc(&mut adj, *a, av.len());
                    da.iter_mut()
                        .zip(dy.iter().zip(bv))
                        .for_each(|(g, (d, b))| *g += d * b);
                    let db = acc(&mut adj, *b, bv.len());
                    db.iter_mut()
                        .zip(dy.iter().zip(av))
                        .for_each(|(g, (d, a))| *g += d * a);
                }
                Op::Lerp { z, a, b } => {
                    let (zv, av, bv) = (
                        &self.nodes[*z].value,
                        &self.nodes[*a].value,
                        &self.nodes[*b].value,
                    );
                    let n = dy.len();
                    let dz = acc(&mut adj, *z, n);
                    for i in 0..n {
                        dz[i] += dy[i] * (bv[i] - av[i]);
                    }
                    let da = acc(&mut adj, *a, n);
                    for i in 0..n {
                        da[i] += dy[i] * (1.0 - zv[i]);
                    }
                    let db = acc(&mut adj, *b, n);
                    for i in 0..n {
                        db[i] += dy[i] * zv[i];
                    }
                }
                Op::Sigmoid(x) => {
                    let y = &node.value;
                    let dx = acc(&mut adj, *x, y.len());
                    for i in 0..y.len() {
                        dx[i] += dy[i] * y[i] * (1.0 - y[i]);
                    }
                }
                Op::Tanh(x) => {
                    let y = &node.value;
                    let dx = acc(&mut adj, *x, y.len());
                    for i in 0..y.len() {
                        dx[i] += dy[i] * (1.0 - y[i] * y[i]);
                    }
                }
                Op::Concat(xs) => {
                    let mut off = 0;
                    for &x in xs {
                        let len = self.nodes[x].value.len();
                        let dx = acc(&mut adj, x, len);
                        dx.iter_mut()
                            .zip(&dy[off..off + len])
                            .for_each(|(a, d)| *a += d);
                        off += len;
                    }
                }
                Op::Softmax(x) => {
                    let y = &node.value;
                    let dot: f64 = dy.iter().zip(y).map(|(d, y)| d * y).sum();
                    let dx = acc(&mut adj, *x, y.len());
                    for i in 0..y.len() {
                        dx[i] += y[i] * (dy[i] - dot);
                    }
                }
                Op::AdditiveScores { keys, query, v } => {
                    let vv = &self.params.tensor(*v).data;
                    let d = vv.len();
                    let mut dq = vec![0.0; d];
                    let mut dv = vec![0.0; d];
                    for (i, &k) in keys.iter().enumerate() {
                        let t = &node.aux[i * d..(i + 1) * d];
                        let de = dy[i];
                        let dk = acc(&mut adj, k, d);
                        for j in 0..d {
                            dv[j] += de * t[j];
                            let dpre = de * vv[j] * (1.0 - t[j] * t[j]);
                            dk[j] += dpre;
                            dq[j] += dpre;
                        }
                    }
                    let g = grads.slot(*v);
                    g.data.iter_mut().zip(&dv).for_each(|(a, b)| *a += b);
                    let dqa = acc(&mut adj, *query, d);
                    dqa.iter_mut().zip(&dq).for_each(|(a, b)| *a += b);
                }
                Op::WeightedSum { weights, items } => {
                    let w = &self.nodes[*weights].value;
                    let mut dw = vec![0.0; w.len()];
                    for (i, &x) in items.iter().enumerate() {
                        let xv = &self.nodes[x].value;
                        dw[i] = dy.iter().zip(xv).map(|(d, x)| d * x).sum();
                        let dx = acc(&mut adj, x, xv.len());
                        dx.iter_mut().zip(&dy).for_each(|(a, d)| *a += w[i] * d);
                    }
                    let dwa = acc(&mut adj, *weights, w.len());
                    dwa.iter_mut().zip(&dw).for_each(|(a, b)| *a += b);
                }
                Op::PointerMix {
                    gate,
                    vocab,
                    attn,
                    source_ext,
                } => {
                    let g = self.nodes[*gate].value[0];
                    let pv = &self.nodes[*vocab].value;
                    let av = &self.nodes[*attn].value;
                    let mut dg: f64 = pv.iter().zip(&dy).map(|(p, d)| p * d).sum();
                    let mut da = vec![0.0; av.len()];
                    for (i, &k) in source_ext.iter().enumerate() {
                        let d = dy[k as usize];
                        dg -= av[i] * d;
                        da[i] = (1.0 - g) * d;
                    }
                    acc(&mut adj, *gate, 1)[0] += dg;
                    let dpv = acc(&mut adj, *vocab, pv.len());
                    dpv.iter_mut().zip(&dy).for_each(|(a, d)| *a += g * d);
                    let daa = acc(&mut adj, *attn, av.len());
                    daa.iter_mut().zip(&da).for_each(|(a, b)| *a += b);
                }
                Op::Log(x, index) => {
                    let xv = &self.nodes[*x].value;
                    let dx = acc(&mut adj, *x, xv.len());
                    dx[*index] += dy[0] / xv[*index];
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;

    #[test]
    fn softmax_is_stable() {
        let p = softmax(&[1000.0, 1000.0]);
        assert_eq!(p, vec![0.5, 0.5]);
        let q = softmax(&[-1e4, 0.0]);
        assert_eq!(q[1], 1.0);
    }

    #[test]
    fn mix_limits() {
        let pv = [0.25, 0.25, 0.5];
        let attn = [0.0, 1.0];
        let src = [0, 3];
        let gen = mix_distribution(1.0, &pv, &attn, &src, 4);
        assert_eq!(gen, vec![0.25, 0.25, 0.5, 0.0]);
        let copy = mix_distribution(0.0, &pv, &attn, &src, 4);
        assert_eq!(copy, vec![0.0, 0.0, 0.0, 1.0]);
        let half = mix_distribution(0.5, &pv, &[0.5, 0.5], &src, 4);
        assert!((half.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert_eq!(half[3], 0.25);
    }

    #[test]
    fn linear_and_sum_gradients() {
        let config = ModelConfig {
            vocab_size: 6,
            embed_dim: 3,
            hidden_dim: 2,
            max_src: 4,
            max_tgt: 4,
            seed: 0,
        };
        let params = crate::model::Parameters::init(&config);
        let mut tape = Tape::new(&params);
        let x = tape.constant(vec![1.0, 2.0, 3.0]);
        let w = params.ids.dec.wz;
        let y = tape.linear(w, x);
        let s = tape.concat(&[y]);
        let g = tape.softmax(s);
        let l = tape.log_at(g, 0);
        let mut grads = Gradients::zeros_like(&params);
        tape.backward(l, 1.0, &mut grads);
        // d log softmax_0 / d y = e_0 - p; dW = outer(dy, x).
        let p = tape.value(g).to_vec();
        let dy = [1.0 - p[0], -p[1]];
        let gw = &grads.tensors()[w.0];
        for (r, d) in dy.iter().enumerate() {
            for c in 0..3 {
                let want = d * [1.0, 2.0, 3.0][c];
                assert!((gw.data[r * 3 + c] - want).abs() < 1e-14);
            }
        }
    }
}
