//! Time-conditioned deformation of the canonical cloud: a plane-decomposed
//! 4D feature grid decoded by a small MLP into `{Δμ, Δr, Δs}`.

mod encoding;
mod head;

pub use encoding::{EncodingConfig, EncodingField, FeaturePlane, PLANE_NAMES};
pub use head::{DeformationDelta, DeformationHead, Dense, HeadConfig, HeadTrace};

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::math::{Real, Vec3};
use crate::scene::{CloudGrads, GaussianCloud};

/// Primitives per work unit; fixed so reductions do not depend on the
/// worker count.
const CHUNK: usize = 64;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DeformationConfig {
    pub encoding: EncodingConfig,
    pub head: HeadConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeformationField<T> {
    pub encoding: EncodingField<T>,
    pub head: DeformationHead<T>,
}

impl<T: Real> DeformationField<T> {
    pub fn new(config: &DeformationConfig, bounds_min: Vec3<f64>, bounds_max: Vec3<f64>, rng: &mut impl Rng) -> Result<Self> {
        let encoding = EncodingField::new(&config.encoding, bounds_min, bounds_max, rng)?;
        let head = DeformationHead::new(encoding.output_dim(), &config.head, rng)?;
        Ok(Self { encoding, head })
    }

    pub fn delta(&self, mu: Vec3<T>, tau: T) -> DeformationDelta<T> {
        self.head.deform(&self.encoding.encode(mu, tau))
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            encoding: self.encoding.zeros_like(),
            head: self.head.zeros_like(),
        }
    }

    pub fn param_count(&self) -> usize {
        self.encoding.param_count() + self.head.param_count()
    }

    /// Named parameter tensors in a fixed order: planes by level, then layer
    /// weights and biases.
    pub fn tensors(&self) -> Vec<(String, Vec<usize>, &[T])> {
        let mut out = Vec::new();
        for (l, level) in self.encoding.levels.iter().enumerate() {
            for (p, plane) in level.iter().enumerate() {
                out.push((
                    format!("deform.level{l}.{}", PLANE_NAMES[p]),
                    vec![plane.res, plane.res, plane.dim],
                    plane.data.as_slice(),
                ));
            }
        }
        for (i, layer) in self.head.layers().enumerate() {
            out.push((format!("deform.layer{i}.weight"), vec![layer.outputs, layer.inputs], layer.weight.as_slice()));
            out.push((format!("deform.layer{i}.bias"), vec![layer.outputs], layer.bias.as_slice()));
        }
        out
    }

    /// Mutable views of the tensors, same order as [`Self::tensors`].
    pub fn tensors_mut(&mut self) -> Vec<&mut [T]> {
        let mut out: Vec<&mut [T]> = Vec::new();
        for plane in self.encoding.planes_mut() {
            out.push(plane.data.as_mut_slice());
        }
        for layer in self.head.layers_mut() {
            out.push(layer.weight.as_mut_slice());
            out.push(layer.bias.as_mut_slice());
        }
        out
    }

    pub fn flatten(&self) -> Vec<T> {
        let mut v = Vec::with_capacity(self.param_count());
        for (_, _, t) in self.tensors() {
            v.extend_from_slice(t);
        }
        v
    }

    pub fn load_flat(&mut self, flat: &[T]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::Shape(format!(
                "deformation expects {} parameters, got {}",
                self.param_count(),
                flat.len()
            )));
        }
        let mut at = 0;
        for t in self.tensors_mut() {
            t.copy_from_slice(&flat[at..at + t.len()]);
            at += t.len();
        }
        Ok(())
    }

    pub fn cast<U: Real>(&self) -> DeformationField<U> {
        let c = |v: &[T]| v.iter().map(|x| x.cast()).collect::<Vec<U>>();
        let cast_layer = |l: &Dense<T>| Dense {
            inputs: l.inputs,
            outputs: l.outputs,
            weight: c(&l.weight),
            bias: c(&l.bias),
        };
        DeformationField {
            encoding: EncodingField {
                levels: self
                    .encoding
                    .levels
                    .iter()
                    .map(|lvl| {
                        std::array::from_fn(|p| FeaturePlane {
                            res: lvl[p].res,
                            dim: lvl[p].dim,
                            data: c(&lvl[p].data),
                        })
                    })
                    .collect(),
                feature_dim: self.encoding.feature_dim,
                bounds_min: self.encoding.bounds_min,
                bounds_max: self.encoding.bounds_max,
            },
            head: DeformationHead {
                hidden: self.head.hidden.iter().map(cast_layer).collect(),
                heads: std::array::from_fn(|i| cast_layer(&self.head.heads[i])),
            },
        }
    }
}

/// Per-primitive activations from [`apply_deformation_traced`].
#[derive(Debug, Clone)]
pub struct DeformTrace<T> {
    pub tau: T,
    traces: Vec<HeadTrace<T>>,
}

/// Deformed copy of `cloud` at time `tau`: `μ+Δμ`, `r+Δr`, `s+Δs` (log
/// space). Opacity and SH are copied untouched; the rotation is renormalized
/// where it is used.
pub fn apply_deformation<T: Real>(cloud: &GaussianCloud<T>, field: &DeformationField<T>, tau: T) -> GaussianCloud<T> {
    let mut out = cloud.clone();
    out.primitives.par_iter_mut().for_each(|p| {
        let d = field.delta(p.position, tau);
        add_delta(p, &d);
    });
    out
}

pub fn apply_deformation_traced<T: Real>(
    cloud: &GaussianCloud<T>,
    field: &DeformationField<T>,
    tau: T,
) -> (GaussianCloud<T>, DeformTrace<T>) {
    let mut out = cloud.clone();
    let traces: Vec<HeadTrace<T>> = out
        .primitives
        .par_iter_mut()
        .map(|p| {
            let latent = field.encoding.encode(p.position, tau);
            let (d, trace) = field.head.forward(&latent);
            add_delta(p, &d);
            trace
        })
        .collect();
    (out, DeformTrace { tau, traces })
}

fn add_delta<T: Real>(p: &mut crate::scene::GaussianPrimitive<T>, d: &DeformationDelta<T>) {
    for a in 0..3 {
        p.position[a] += d.position[a];
        p.log_scale[a] += d.log_scale[a];
    }
    for a in 0..4 {
        p.rotation[a] += d.rotation[a];
    }
}

/// Maps gradients w.r.t. the deformed cloud back to the canonical cloud and
/// the field parameters.
pub fn deformation_backward<T: Real>(
    cloud: &GaussianCloud<T>,
    field: &DeformationField<T>,
    trace: &DeformTrace<T>,
    deformed_grads: &CloudGrads<T>,
) -> Result<(CloudGrads<T>, DeformationField<T>)> {
    if trace.traces.len() != cloud.len() || deformed_grads.len() != cloud.len() {
        return Err(Error::Shape("deformation trace does not match the cloud".into()));
    }
    let n = cloud.len();
    let chunks: Vec<(DeformationHead<T>, Vec<Vec<T>>)> = (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut head_grads = field.head.zeros_like();
            let latents = (c * CHUNK..((c + 1) * CHUNK).min(n))
                .map(|i| {
                    let g = &deformed_grads.primitives[i];
                    let gd = DeformationDelta {
                        position: g.position,
                        rotation: g.rotation,
                        log_scale: g.log_scale,
                    };
                    field.head.backward(&trace.traces[i], &gd, &mut head_grads)
                })
                .collect();
            (head_grads, latents)
        })
        .collect();

    let mut field_grads = field.zeros_like();
    let mut canonical = deformed_grads.clone();
    for (c, (head_grads, latents)) in chunks.into_iter().enumerate() {
        for (dst, src) in field_grads.head.layers_mut().zip(head_grads.layers()) {
            for (a, b) in dst.weight.iter_mut().zip(&src.weight) {
                *a += *b;
            }
            for (a, b) in dst.bias.iter_mut().zip(&src.bias) {
                *a += *b;
            }
        }
        for (k, g_latent) in latents.iter().enumerate() {
            let i = c * CHUNK + k;
            let mu = cloud.primitives[i].position;
            let g_mu = field.encoding.encode_backward(mu, trace.tau, g_latent, &mut field_grads.encoding);
            for a in 0..3 {
                canonical.primitives[i].position[a] += g_mu[a];
            }
        }
    }
    Ok((canonical, field_grads))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_config() -> DeformationConfig {
        DeformationConfig {
            encoding: EncodingConfig {
                resolutions: vec![4, 8],
                feature_dim: 4,
            },
            head: HeadConfig {
                hidden_layers: 2,
                hidden_width: 8,
            },
        }
    }

    fn cloud(n: usize) -> GaussianCloud<f64> {
        let mut c = GaussianCloud::new(1);
        for i in 0..n {
            let x = i as f64 * 0.1 - 0.3;
            c.push_activated([x, -x, 0.2 * x], [0.1, 0.2, 0.3], [1.0, 0.1, 0.0, 0.0], 0.6, [0.2, 0.5, 0.8]);
        }
        c
    }

    #[test]
    fn identity_start_is_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let field = DeformationField::<f64>::new(&DeformationConfig::default(), [-1.0; 3], [1.0; 3], &mut rng).unwrap();
        let c = cloud(7);
        for tau in [0.0, 0.3, 1.0] {
            assert_eq!(apply_deformation(&c, &field, tau), c);
        }
    }

    #[test]
    fn planted_position_delta_is_additive() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut field = DeformationField::<f64>::new(&small_config(), [-1.0; 3], [1.0; 3], &mut rng).unwrap();
        field.head.heads[0].bias = vec![0.0, 0.0, 1.0];
        let c = cloud(1);
        let d = apply_deformation(&c, &field, 0.5);
        let p0 = c.primitives[0].position;
        assert_eq!(d.primitives[0].position, [p0[0], p0[1], p0[2] + 1.0]);
        assert_eq!(d.primitives[0].opacity_logit, c.primitives[0].opacity_logit);
        assert_eq!(d.primitives[0].sh, c.primitives[0].sh);
    }

    #[test]
    fn flat_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let field = DeformationField::<f64>::new(&small_config(), [-1.0; 3], [1.0; 3], &mut rng).unwrap();
        let flat = field.flatten();
        assert_eq!(flat.len(), field.param_count());
        let mut other = field.zeros_like();
        other.load_flat(&flat).unwrap();
        assert_eq!(other, field);
        assert!(other.load_flat(&flat[1..]).is_err());
    }
}
