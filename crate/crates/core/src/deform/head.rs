use rand::Rng;
use rand_distr::{Distribution, Uniform};

use crate::error::{Error, Result};
use crate::math::Real;

/// Fully connected layer, `y = W x + b` with `W` row-major `out × in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T> {
    pub inputs: usize,
    pub outputs: usize,
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Real> Dense<T> {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weight: vec![T::zero(); inputs * outputs],
            bias: vec![T::zero(); outputs],
        }
    }

    /// Weights uniform in `±1/√inputs`, zero bias.
    pub fn random(inputs: usize, outputs: usize, rng: &mut impl Rng) -> Self {
        let k = 1.0 / (inputs as f64).sqrt();
        let dist = Uniform::new_inclusive(-k, k).expect("valid range");
        let mut layer = Self::zeros(inputs, outputs);
        for w in layer.weight.iter_mut() {
            *w = T::lit(dist.sample(rng));
        }
        layer
    }

    pub fn forward(&self, x: &[T]) -> Vec<T> {
        let mut y = self.bias.clone();
        for (o, yo) in y.iter_mut().enumerate() {
            let row = &self.weight[o * self.inputs..(o + 1) * self.inputs];
            for (w, xi) in row.iter().zip(x) {
                *yo += *w * *xi;
            }
        }
        y
    }

    /// Accumulates parameter gradients and returns `dL/dx`.
    pub fn backward(&self, x: &[T], g_y: &[T], grads: &mut Self) -> Vec<T> {
        let mut g_x = vec![T::zero(); self.inputs];
        for (o, &g) in g_y.iter().enumerate() {
            if g == T::zero() {
                continue;
            }
            grads.bias[o] += g;
            let row = o * self.inputs;
            for i in 0..self.inputs {
                grads.weight[row + i] += g * x[i];
                g_x[i] += g * self.weight[row + i];
            }
        }
        g_x
    }

    fn zeros_like(&self) -> Self {
        Self::zeros(self.inputs, self.outputs)
    }
}

/// Attribute deltas produced for one primitive.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DeformationDelta<T> {
    pub position: [T; 3],
    pub rotation: [T; 4],
    pub log_scale: [T; 3],
}

impl<T: Real> DeformationDelta<T> {
    pub fn is_finite(&self) -> bool {
        self.position.iter().chain(&self.rotation).chain(&self.log_scale).all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeadConfig {
    pub hidden_layers: usize,
    pub hidden_width: usize,
}

impl Default for HeadConfig {
    fn default() -> Self {
        Self {
            hidden_layers: 2,
            hidden_width: 64,
        }
    }
}

/// ReLU trunk followed by three linear heads for `Δμ`, `Δr`, `Δs`.
#[derive(Debug, Clone, PartialEq)]
pub struct DeformationHead<T> {
    pub hidden: Vec<Dense<T>>,
    pub heads: [Dense<T>; 3],
}

/// Activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct HeadTrace<T> {
    /// Input followed by each hidden layer's post-ReLU output.
    acts: Vec<Vec<T>>,
}

const HEAD_WIDTHS: [usize; 3] = [3, 4, 3];

impl<T: Real> DeformationHead<T> {
    /// Random trunk, zero heads: the initial deltas are exactly zero.
    pub fn new(latent_dim: usize, config: &HeadConfig, rng: &mut impl Rng) -> Result<Self> {
        if config.hidden_width == 0 || latent_dim == 0 {
            return Err(Error::InvalidConfig("deformation head needs positive widths".into()));
        }
        let mut hidden = Vec::with_capacity(config.hidden_layers);
        let mut width = latent_dim;
        for _ in 0..config.hidden_layers {
            hidden.push(Dense::random(width, config.hidden_width, rng));
            width = config.hidden_width;
        }
        let heads = HEAD_WIDTHS.map(|w| Dense::zeros(width, w));
        Ok(Self { hidden, heads })
    }

    pub fn latent_dim(&self) -> usize {
        self.hidden.first().map_or(self.heads[0].inputs, |l| l.inputs)
    }

    pub fn forward(&self, latent: &[T]) -> (DeformationDelta<T>, HeadTrace<T>) {
        let mut acts = vec![latent.to_vec()];
        for layer in &self.hidden {
            let mut y = layer.forward(acts.last().expect("non-empty"));
            for v in y.iter_mut() {
                if !(*v > T::zero()) {
                    *v = T::zero();
                }
            }
            acts.push(y);
        }
        let top = acts.last().expect("non-empty");
        let mut delta = DeformationDelta::default();
        delta.position.copy_from_slice(&self.heads[0].forward(top));
        delta.rotation.copy_from_slice(&self.heads[1].forward(top));
        delta.log_scale.copy_from_slice(&self.heads[2].forward(top));
        (delta, HeadTrace { acts })
    }

    pub fn deform(&self, latent: &[T]) -> DeformationDelta<T> {
        self.forward(latent).0
    }

    /// Accumulates parameter gradients and returns `dL/dlatent`.
    pub fn backward(&self, trace: &HeadTrace<T>, g: &DeformationDelta<T>, grads: &mut Self) -> Vec<T> {
        let top = trace.acts.last().expect("non-empty");
        let mut g_top = vec![T::zero(); top.len()];
        let head_grads: [&[T]; 3] = [&g.position, &g.rotation, &g.log_scale];
        for ((head, hg), gy) in self.heads.iter().zip(grads.heads.iter_mut()).zip(head_grads) {
            for (a, b) in g_top.iter_mut().zip(head.backward(top, gy, hg)) {
                *a += b;
            }
        }
        let mut g_cur = g_top;
        for (l, layer) in self.hidden.iter().enumerate().rev() {
            let out = &trace.acts[l + 1];
            for (gv, &o) in g_cur.iter_mut().zip(out) {
                if !(o > T::zero()) {
                    *gv = T::zero();
                }
            }
            g_cur = layer.backward(&trace.acts[l], &g_cur, &mut grads.hidden[l]);
        }
        g_cur
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            hidden: self.hidden.iter().map(Dense::zeros_like).collect(),
            heads: std::array::from_fn(|i| self.heads[i].zeros_like()),
        }
    }

    pub fn layers(&self) -> impl Iterator<Item = &Dense<T>> {
        self.hidden.iter().chain(self.heads.iter())
    }

    pub fn layers_mut(&mut self) -> impl Iterator<Item = &mut Dense<T>> {
        self.hidden.iter_mut().chain(self.heads.iter_mut())
    }

    pub fn param_count(&self) -> usize {
        self.layers().map(|l| l.weight.len() + l.bias.len()).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_heads_give_zero_deltas() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let head = DeformationHead::<f64>::new(32, &HeadConfig::default(), &mut rng).unwrap();
        let latent: Vec<f64> = (0..32).map(|i| (i as f64 * 0.37).sin()).collect();
        assert_eq!(head.deform(&latent), DeformationDelta::default());
    }

    #[test]
    fn single_layer_identity_head() {
        // One hidden layer with identity weights on a non-negative latent.
        let mut hidden = Dense::<f64>::zeros(3, 3);
        for i in 0..3 {
            hidden.weight[i * 3 + i] = 1.0;
        }
        let mut heads = HEAD_WIDTHS.map(|w| Dense::zeros(3, w));
        heads[0].weight = vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
        heads[0].bias = vec![0.0, 0.0, 1.0];
        heads[1].weight[0] = 2.0;
        heads[2].bias = vec![-1.0, -1.0, -1.0];
        let head = DeformationHead { hidden: vec![hidden], heads };
        let d = head.deform(&[0.5, 2.0, 0.25]);
        assert_eq!(d.position, [0.5, 2.0, 1.25]);
        assert_eq!(d.rotation, [1.0, 0.0, 0.0, 0.0]);
        assert_eq!(d.log_scale, [-1.0, -1.0, -1.0]);
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cfg = HeadConfig {
            hidden_layers: 2,
            hidden_width: 8,
        };
        let mut head = DeformationHead::<f64>::new(6, &cfg, &mut rng).unwrap();
        for l in head.layers_mut() {
            for w in l.weight.iter_mut().chain(l.bias.iter_mut()) {
                *w = rng.random_range(-0.5..0.5);
            }
        }
        let latent: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
        let g = DeformationDelta {
            position: [0.3, -1.0, 0.5],
            rotation: [0.2, 0.1, -0.7, 0.4],
            log_scale: [1.0, -0.2, 0.6],
        };
        let loss = |h: &DeformationHead<f64>, x: &[f64]| {
            let d = h.deform(x);
            let a: f64 = d.position.iter().zip(&g.position).map(|(a, b)| a * b).sum();
            let b: f64 = d.rotation.iter().zip(&g.rotation).map(|(a, b)| a * b).sum();
            let c: f64 = d.log_scale.iter().zip(&g.log_scale).map(|(a, b)| a * b).sum();
            a + b + c
        };
        let (_, trace) = head.forward(&latent);
        let mut grads = head.zeros_like();
        let g_latent = head.backward(&trace, &g, &mut grads);
        let h = 1e-6;
        for i in 0..latent.len() {
            let mut p = latent.clone();
            p[i] += h;
            let mut m = latent.clone();
            m[i] -= h;
            let fd = (loss(&head, &p) - loss(&head, &m)) / (2.0 * h);
            assert!((fd - g_latent[i]).abs() < 1e-7, "latent {i}: {fd} vs {}", g_latent[i]);
        }
        let n_layers = head.layers().count();
        for li in 0..n_layers {
            let count = head.layers().nth(li).unwrap().weight.len();
            for wi in 0..count {
                let mut p = head.clone();
                p.layers_mut().nth(li).unwrap().weight[wi] += h;
                let mut m = head.clone();
                m.layers_mut().nth(li).unwrap().weight[wi] -= h;
                let fd = (loss(&p, &latent) - loss(&m, &latent)) / (2.0 * h);
                let an = grads.layers().nth(li).unwrap().weight[wi];
                assert!((fd - an).abs() < 1e-7, "layer {li} weight {wi}: {fd} vs {an}");
            }
        }
    }
}
