//! Binary checkpoints: `ESCK1`, a length-prefixed JSON header, then named
//! little-endian `f32` tensors.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::deform::DeformationField;
use crate::error::{Error, Result};
use crate::eval::SceneModel;
use crate::math::Vec3;
use crate::scene::{GaussianCloud, GaussianPrimitive};
use crate::train::TrainConfig;

pub const CHECKPOINT_MAGIC: &[u8; 5] = b"ESCK1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    /// Completed training steps.
    pub iter: usize,
    pub sh_degree: usize,
    pub bounds_min: Vec3<f64>,
    pub bounds_max: Vec3<f64>,
    pub has_field: bool,
    pub config: TrainConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub dims: Vec<usize>,
    pub data: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub tensors: Vec<Tensor>,
}

const CLOUD_TENSORS: [&str; 5] = [
    "gaussians.position",
    "gaussians.rotation",
    "gaussians.log_scale",
    "gaussians.opacity_logit",
    "gaussians.sh",
];

impl Checkpoint {
    pub fn from_model(model: &SceneModel<f32>, meta: CheckpointMeta) -> Self {
        let c = &model.cloud;
        let n = c.len();
        let k = c.sh_count();
        let ps = &c.primitives;
        let mut tensors = vec![
            Tensor {
                name: CLOUD_TENSORS[0].into(),
                dims: vec![n, 3],
                data: ps.iter().flat_map(|p| p.position).collect(),
            },
            Tensor {
                name: CLOUD_TENSORS[1].into(),
                dims: vec![n, 4],
                data: ps.iter().flat_map(|p| p.rotation).collect(),
            },
            Tensor {
                name: CLOUD_TENSORS[2].into(),
                dims: vec![n, 3],
                data: ps.iter().flat_map(|p| p.log_scale).collect(),
            },
            Tensor {
                name: CLOUD_TENSORS[3].into(),
                dims: vec![n],
                data: ps.iter().map(|p| p.opacity_logit).collect(),
            },
            Tensor {
                name: CLOUD_TENSORS[4].into(),
                dims: vec![n, k, 3],
                data: ps.iter().flat_map(|p| p.sh.iter().flatten().copied()).collect(),
            },
        ];
        if let Some(f) = &model.field {
            for (name, dims, data) in f.tensors() {
                tensors.push(Tensor {
                    name,
                    dims,
                    data: data.to_vec(),
                });
            }
        }
        Self {
            meta: CheckpointMeta {
                sh_degree: c.sh_degree,
                has_field: model.field.is_some(),
                ..meta
            },
            tensors,
        }
    }

    fn tensor(&self, name: &str) -> Result<&Tensor> {
        self.tensors
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| Error::InvalidInput(format!("checkpoint lacks tensor {name}")))
    }

    pub fn to_model(&self) -> Result<SceneModel<f32>> {
        let k = crate::scene::sh::coeff_count(self.meta.sh_degree);
        let t: Vec<&Tensor> = CLOUD_TENSORS.iter().map(|n| self.tensor(n)).collect::<Result<_>>()?;
        let n = t[3].data.len();
        let expect = [n * 3, n * 4, n * 3, n, n * k * 3];
        for (tensor, len) in t.iter().zip(expect) {
            if tensor.data.len() != len {
                return Err(Error::Shape(format!("tensor {} has {} values, expected {len}", tensor.name, tensor.data.len())));
            }
        }
        let mut cloud = GaussianCloud::new(self.meta.sh_degree);
        for i in 0..n {
            let mut p = GaussianPrimitive::zeroed(k);
            p.position.copy_from_slice(&t[0].data[i * 3..i * 3 + 3]);
            p.rotation.copy_from_slice(&t[1].data[i * 4..i * 4 + 4]);
            p.log_scale.copy_from_slice(&t[2].data[i * 3..i * 3 + 3]);
            p.opacity_logit = t[3].data[i];
            for (j, row) in p.sh.iter_mut().enumerate() {
                row.copy_from_slice(&t[4].data[(i * k + j) * 3..(i * k + j) * 3 + 3]);
            }
            cloud.primitives.push(p);
        }
        let field = if self.meta.has_field {
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            let mut f = DeformationField::<f32>::new(
                &self.meta.config.deformation(),
                self.meta.bounds_min,
                self.meta.bounds_max,
                &mut rng,
            )?;
            let layout: Vec<(String, Vec<usize>)> = f.tensors().into_iter().map(|(n, d, _)| (n, d)).collect();
            for ((name, dims), dst) in layout.iter().zip(f.tensors_mut()) {
                let src = self.tensor(name)?;
                if &src.dims != dims {
                    return Err(Error::Shape(format!("tensor {name} has dims {:?}, expected {dims:?}", src.dims)));
                }
                dst.copy_from_slice(&src.data);
            }
            Some(f)
        } else {
            None
        };
        Ok(SceneModel { cloud, field })
    }
}

fn put_u32(out: &mut Vec<u8>, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::InvalidInput(format!("{v} does not fit a u32 field")))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

pub fn encode_checkpoint(ck: &Checkpoint) -> Result<Vec<u8>> {
    let mut out = CHECKPOINT_MAGIC.to_vec();
    let meta = serde_json::to_vec(&ck.meta)?;
    put_u32(&mut out, meta.len())?;
    out.extend_from_slice(&meta);
    put_u32(&mut out, ck.tensors.len())?;
    for t in &ck.tensors {
        if t.dims.iter().product::<usize>() != t.data.len() {
            return Err(Error::Shape(format!("tensor {} dims {:?} disagree with its data", t.name, t.dims)));
        }
        put_u32(&mut out, t.name.len())?;
        out.extend_from_slice(t.name.as_bytes());
        put_u32(&mut out, t.dims.len())?;
        for &d in &t.dims {
            put_u32(&mut out, d)?;
        }
        for v in &t.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::InvalidInput("checkpoint is truncated".into()))?;
        let s = &self.bytes[self.at..end];
        self.at = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    if bytes.len() < CHECKPOINT_MAGIC.len() || &bytes[..CHECKPOINT_MAGIC.len()] != CHECKPOINT_MAGIC {
        return Err(Error::VersionMismatch("not an ESCK1 checkpoint".into()));
    }
    let mut c = Cursor {
        bytes,
        at: CHECKPOINT_MAGIC.len(),
    };
    let meta_len = c.u32()?;
    let meta: CheckpointMeta = serde_json::from_slice(c.take(meta_len)?)?;
    let count = c.u32()?;
    let mut tensors = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        let name_len = c.u32()?;
        let name = String::from_utf8(c.take(name_len)?.to_vec())
            .map_err(|_| Error::InvalidInput("tensor name is not UTF-8".into()))?;
        let ndim = c.u32()?;
        let dims = (0..ndim).map(|_| c.u32()).collect::<Result<Vec<_>>>()?;
        let len = dims
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .ok_or_else(|| Error::InvalidInput(format!("tensor {name} is too large")))?;
        let raw = c.take(len.checked_mul(4).ok_or_else(|| Error::InvalidInput("tensor too large".into()))?)?;
        let data = raw.chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]])).collect();
        tensors.push(Tensor { name, dims, data });
    }
    if c.at != bytes.len() {
        return Err(Error::InvalidInput("trailing bytes after checkpoint".into()));
    }
    Ok(Checkpoint { meta, tensors })
}

pub fn save_checkpoint(path: &Path, ck: &Checkpoint) -> Result<()> {
    let bytes = encode_checkpoint(ck)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}
