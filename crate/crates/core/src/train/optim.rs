use crate::model::{Gradients, Parameters};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias-corrected moment estimates.
#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    cfg: AdamConfig,
    t: i32,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(params: &Parameters, lr: f64, cfg: AdamConfig) -> Self {
        let zeros: Vec<Vec<f64>> = params
            .named()
            .map(|(_, t)| vec![0.0; t.data.len()])
            .collect();
        Adam {
            lr,
            cfg,
            t: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn step(&mut self, params: &mut Parameters, grads: &Gradients) {
        self.t += 1;
        let AdamConfig { beta1, beta2, eps } = self.cfg;
        let c1 = 1.0 - beta1.powi(self.t);
        let c2 = 1.0 - beta2.powi(self.t);
        let lr = self.lr;
        let (m, v) = (&mut self.m, &mut self.v);
        params.apply(|k, data| {
            let g = &grads.tensors()[k].data;
            for i in 0..data.len() {
                m[k][i] = beta1 * m[k][i] + (1.0 - beta1) * g[i];
                v[k][i] = beta2 * v[k][i] + (1.0 - beta2) * g[i] * g[i];
                let mh = m[k][i] / c1;
                let vh = v[k][i] / c2;
                data[i] -= lr * mh / (vh.sqrt() + eps);
            }
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;

    #[test]
    fn first_step_moves_by_lr_against_gradient_sign() {
        let config = ModelConfig {
            vocab_size: 6,
            embed_dim: 2,
            hidden_dim: 2,
            max_src: 3,
            max_tgt: 3,
            seed: 0,
        };
        let mut p = Parameters::init(&config);
        let before = p.clone();
        let mut g = Gradients::zeros_like(&p);
        let n = g.to_flat().len();
        let flat: Vec<f64> = (0..n)
            .map(|i| if i % 2 == 0 { 0.5 } else { -2.0 })
            .collect();
        let mut k = 0;
        for t in g.tensors.iter_mut() {
            for x in t.data.iter_mut() {
                *x = flat[k];
                k += 1;
            }
        }
        let mut adam = Adam::new(&p, 0.01, AdamConfig::default());
        adam.step(&mut p, &g);
        use crate::model::FlatParams;
        for (i, g) in flat.iter().enumerate().take(n) {
            let delta = FlatParams::get(&p, i) - FlatParams::get(&before, i);
            let want = -0.01 * g.signum();
            assert!((delta - want).abs() < 1e-9, "{i}: {delta}");
        }
    }
}
