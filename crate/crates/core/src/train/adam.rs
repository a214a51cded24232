use crate::math::Real;

use super::config::AdamConfig;

/// Adam over one flat parameter group.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam<T> {
    pub config: AdamConfig,
    pub step: u64,
    pub m: Vec<T>,
    pub v: Vec<T>,
}

impl<T: Real> Adam<T> {
    pub fn new(config: AdamConfig, len: usize) -> Self {
        Self {
            config,
            step: 0,
            m: vec![T::zero(); len],
            v: vec![T::zero(); len],
        }
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }

    pub fn update(&mut self, params: &mut [T], grads: &[T]) {
        assert_eq!(params.len(), self.m.len(), "parameter count changed without resizing Adam state");
        assert_eq!(grads.len(), self.m.len(), "gradient count differs from parameter count");
        self.step += 1;
        let c = self.config;
        let (b1, b2) = (T::lit(c.beta1), T::lit(c.beta2));
        let bc1 = T::lit(1.0 - c.beta1.powi(self.step as i32));
        let bc2 = T::lit(1.0 - c.beta2.powi(self.step as i32));
        let lr = T::lit(c.lr);
        let eps = T::lit(c.eps);
        let one = T::one();
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = b1 * self.m[i] + (one - b1) * g;
            self.v[i] = b2 * self.v[i] + (one - b2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }

    /// Rebuilds the moments for a resized group made of `block`-wide
    /// blocks: `sources[j] = Some(i)` copies old block `i`, `None` starts at
    /// zero.
    pub fn remap_blocks(&mut self, block: usize, sources: &[Option<usize>]) {
        let mut m = Vec::with_capacity(sources.len() * block);
        let mut v = Vec::with_capacity(sources.len() * block);
        for s in sources {
            match s {
                Some(i) => {
                    m.extend_from_slice(&self.m[i * block..(i + 1) * block]);
                    v.extend_from_slice(&self.v[i * block..(i + 1) * block]);
                }
                None => {
                    m.extend(std::iter::repeat_n(T::zero(), block));
                    v.extend(std::iter::repeat_n(T::zero(), block));
                }
            }
        }
        self.m = m;
        self.v = v;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut opt = Adam::<f64>::new(AdamConfig::default(), 3);
        let mut p = vec![1.0, -2.0, 0.5];
        opt.update(&mut p, &[0.3, -4.0, 0.0]);
        // m̂ = g, v̂ = g², so the step is lr·sign(g).
        assert!((p[0] - (1.0 - 1.6e-3)).abs() < 1e-12);
        assert!((p[1] - (-2.0 + 1.6e-3)).abs() < 1e-12);
        assert_eq!(p[2], 0.5);
    }

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let mut opt = Adam::<f32>::new(AdamConfig::default(), 2);
        let mut p = vec![0.25f32, 7.0];
        for _ in 0..5 {
            opt.update(&mut p, &[0.0, 0.0]);
        }
        assert_eq!(p, vec![0.25, 7.0]);
    }

    #[test]
    fn minimizes_a_quadratic() {
        let mut opt = Adam::<f64>::new(
            AdamConfig {
                lr: 0.05,
                ..AdamConfig::default()
            },
            2,
        );
        let mut p = vec![3.0, -1.0];
        for _ in 0..2000 {
            let g = [2.0 * (p[0] - 1.0), 2.0 * (p[1] + 2.0)];
            opt.update(&mut p, &g);
        }
        assert!((p[0] - 1.0).abs() < 1e-3 && (p[1] + 2.0).abs() < 1e-3);
    }

    #[test]
    fn remap_copies_and_zeroes_blocks() {
        let mut opt = Adam::<f64>::new(AdamConfig::default(), 4);
        opt.m = vec![1.0, 2.0, 3.0, 4.0];
        opt.v = vec![5.0, 6.0, 7.0, 8.0];
        opt.remap_blocks(2, &[Some(1), None, Some(0)]);
        assert_eq!(opt.m, vec![3.0, 4.0, 0.0, 0.0, 1.0, 2.0]);
        assert_eq!(opt.v, vec![7.0, 8.0, 0.0, 0.0, 5.0, 6.0]);
    }
}
