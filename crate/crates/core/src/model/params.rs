use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ModelConfig;

pub const INIT_RANGE: f64 = 0.1;

/// Dense row-major matrix; vectors are stored as `n x 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

/// Weights of one gated recurrent cell.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct GruIds {
    pub wz: ParamId,
    pub uz: ParamId,
    pub bz: ParamId,
    pub wr: ParamId,
    pub ur: ParamId,
    pub br: ParamId,
    pub wn: ParamId,
    pub un: ParamId,
    pub bn: ParamId,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct Layout {
    pub embedding: ParamId,
    pub enc_fwd: GruIds,
    pub enc_bwd: GruIds,
    pub bridge_w: ParamId,
    pub bridge_b: ParamId,
    pub dec: GruIds,
    pub attn_enc: ParamId,
    pub attn_dec: ParamId,
    pub attn_b: ParamId,
    pub attn_v: ParamId,
    pub gate_w: ParamId,
    pub gate_b: ParamId,
    pub out_w: ParamId,
    pub out_b: ParamId,
}

struct LayoutBuilder {
    specs: Vec<(String, usize, usize)>,
}

impl LayoutBuilder {
    fn add(&mut self, name: impl Into<String>, rows: usize, cols: usize) -> ParamId {
        self.specs.push((name.into(), rows, cols));
        ParamId(self.specs.len() - 1)
    }

    fn gru(&mut self, prefix: &str, input: usize, hidden: usize) -> GruIds {
        let mut gate = |g: &str| {
            (
                self.add(format!("{prefix}.w_{g}"), hidden, input),
                self.add(format!("{prefix}.u_{g}"), hidden, hidden),
                self.add(format!("{prefix}.b_{g}"), hidden, 1),
            )
        };
        let (wz, uz, bz) = gate("z");
        let (wr, ur, br) = gate("r");
        let (wn, un, bn) = gate("n");
        GruIds {
            wz,
            uz,
            bz,
            wr,
            ur,
            br,
            wn,
            un,
            bn,
        }
    }
}

/// Tensor names and shapes in storage order, plus typed handles into them.
pub(crate) fn layout(config: &ModelConfig) -> (Layout, Vec<(String, usize, usize)>) {
    let (v, e, h) = (config.vocab_size, config.embed_dim, config.hidden_dim);
    let mut b = LayoutBuilder { specs: Vec::new() };
    let embedding = b.add("embedding", v, e);
    let enc_fwd = b.gru("enc_fwd", e, h);
    let enc_bwd = b.gru("enc_bwd", e, h);
    let bridge_w = b.add("bridge.w", h, 2 * h);
    let bridge_b = b.add("bridge.b", h, 1);
    let dec = b.gru("dec", e, h);
    let attn_enc = b.add("attn.w_enc", h, 2 * h);
    let attn_dec = b.add("attn.w_dec", h, h);
    let attn_b = b.add("attn.b", h, 1);
    let attn_v = b.add("attn.v", h, 1);
    let gate_w = b.add("gate.w", 1, 3 * h + e);
    let gate_b = b.add("gate.b", 1, 1);
    let out_w = b.add("out.w", v, 3 * h);
    let out_b = b.add("out.b", v, 1);
    let ids = Layout {
        embedding,
        enc_fwd,
        enc_bwd,
        bridge_w,
        bridge_b,
        dec,
        attn_enc,
        attn_dec,
        attn_b,
        attn_v,
        gate_w,
        gate_b,
        out_w,
        out_b,
    };
    (ids, b.specs)
}

/// Model weights. Shapes are fixed by the [`ModelConfig`].
#[derive(Clone, Debug, PartialEq)]
pub struct Parameters {
    pub(crate) config: ModelConfig,
    pub(crate) names: Vec<String>,
    pub(crate) tensors: Vec<Tensor>,
    pub(crate) ids: Layout,
}

impl Parameters {
    /// Uniform draws from `[-0.1, 0.1]`, seeded by `config.seed`.
    pub fn init(config: &ModelConfig) -> Self {
        let (ids, specs) = layout(config);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut names = Vec::with_capacity(specs.len());
        let tensors = specs
            .into_iter()
            .map(|(name, rows, cols)| {
                names.push(name);
                Tensor {
                    rows,
                    cols,
                    data: (0..rows * cols)
                        .map(|_| rng.random_range(-INIT_RANGE..=INIT_RANGE))
                        .collect(),
                }
            })
            .collect();
        Parameters {
            config: config.clone(),
            names,
            tensors,
            ids,
        }
    }

    pub(crate) fn from_tensors(
        config: &ModelConfig,
        named: Vec<(String, Tensor)>,
    ) -> Result<Self, String> {
        let (ids, specs) = layout(config);
        if named.len() != specs.len() {
            return Err(format!(
                "expected {} tensors, found {}",
                specs.len(),
                named.len()
            ));
        }
        let mut names = Vec::with_capacity(specs.len());
        let mut tensors = Vec::with_capacity(specs.len());
        for ((name, t), (want, rows, cols)) in named.into_iter().zip(specs) {
            if name != want || t.rows != rows || t.cols != cols || t.data.len() != rows * cols {
                return Err(format!(
                    "tensor {name} {}x{} does not match expected {want} {rows}x{cols}",
                    t.rows, t.cols
                ));
            }
            if t.data.iter().any(|x| !x.is_finite()) {
                return Err(format!("tensor {name} has non-finite entries"));
            }
            names.push(name);
            tensors.push(t);
        }
        Ok(Parameters {
            config: config.clone(),
            names,
            tensors,
            ids,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn named(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| &self.tensors[i])
    }

    pub(crate) fn tensor(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(|t| t.data.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors
            .iter()
            .all(|t| t.data.iter().all(|x| x.is_finite()))
    }

    pub fn apply(&mut self, mut update: impl FnMut(usize, &mut [f64])) {
        for (i, t) in self.tensors.iter_mut().enumerate() {
            update(i, &mut t.data);
        }
    }
}

/// Same shapes as [`Parameters`].
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub(crate) tensors: Vec<Tensor>,
}

impl Gradients {
    pub fn zeros_like(params: &Parameters) -> Self {
        Gradients {
            tensors: params
                .tensors
                .iter()
                .map(|t| Tensor::zeros(t.rows, t.cols))
                .collect(),
        }
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub(crate) fn slot(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.tensors.iter().flat_map(|t| t.data.iter().copied())
    }

    pub fn is_finite(&self) -> bool {
        self.iter().all(f64::is_finite)
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.iter().collect()
    }

    pub fn is_zero(&self) -> bool {
        self.iter().all(|x| x == 0.0)
    }

    pub fn scale(&mut self, c: f64) {
        for t in &mut self.tensors {
            t.data.iter_mut().for_each(|x| *x *= c);
        }
    }

    /// `self += c * other`
    pub fn add_scaled(&mut self, other: &Gradients, c: f64) {
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            a.data
                .iter_mut()
                .zip(&b.data)
                .for_each(|(x, y)| *x += c * y);
        }
    }

    pub fn global_norm(&self) -> f64 {
        self.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// Rescales so the global L2 norm is at most `max_norm`; returns the
    /// norm before clipping.
    pub fn clip_global_norm(&mut self, max_norm: f64) -> f64 {
        let norm = self.global_norm();
        if norm > max_norm {
            self.scale(max_norm / norm);
        }
        norm
    }

    pub fn zero(&mut self) {
        for t in &mut self.tensors {
            t.data.iter_mut().for_each(|x| *x = 0.0);
        }
    }
}

/// Coordinate access over a flattened parameter vector.
pub trait FlatParams {
    fn len(&self) -> usize;
    fn get(&self, i: usize) -> f64;
    fn set(&mut self, i: usize, value: f64);
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl FlatParams for Vec<f64> {
    fn len(&self) -> usize {
        <[f64]>::len(self)
    }

    fn get(&self, i: usize) -> f64 {
        self[i]
    }

    fn set(&mut self, i: usize, value: f64) {
        self[i] = value;
    }
}

fn locate(tensors: &[Tensor], mut i: usize) -> (usize, usize) {
    for (k, t) in tensors.iter().enumerate() {
        if i < t.data.len() {
            return (k, i);
        }
        i -= t.data.len();
    }
    panic!("flat index out of range");
}

impl FlatParams for Parameters {
    fn len(&self) -> usize {
        self.num_scalars()
    }

    fn get(&self, i: usize) -> f64 {
        let (k, j) = locate(&self.tensors, i);
        self.tensors[k].data[j]
    }

    fn set(&mut self, i: usize, value: f64) {
        let (k, j) = locate(&self.tensors, i);
        self.tensors[k].data[j] = value;
    }
}

impl Gradients {
    pub fn flat(&self, i: usize) -> f64 {
        let (k, j) = locate(&self.tensors, i);
        self.tensors[k].data[j]
    }
}
