use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::dataio::pfm::read_pfm;
use crate::error::{Error, Result};
use crate::imaging::Image;

use super::diffusion::NoiseDraw;

/// Input to a noise-prediction model.
#[derive(Debug, Clone, Copy)]
pub struct DenoiseRequest<'a> {
    pub view_id: &'a str,
    /// The noised image `C̃_t`.
    pub noised: &'a Image<f64>,
    pub t: usize,
    pub alpha_bar: f64,
    /// Opaque payload forwarded to external models.
    pub conditioning: &'a [u8],
    /// The injected noise; only analytic providers may look at it.
    pub draw: &'a NoiseDraw,
}

pub trait Denoiser: Send {
    fn kind(&self) -> &'static str;
    /// Noise prediction `ε̂`, shaped like the request image.
    fn predict(&mut self, req: &DenoiseRequest<'_>) -> Result<Image<f64>>;
}

#[derive(Debug, Clone, Copy)]
pub struct DepthRequest<'a> {
    pub view_id: &'a str,
    /// RGB image the depth is predicted from.
    pub image: &'a Image<f32>,
}

pub trait DepthProvider: Send {
    fn kind(&self) -> &'static str;
    /// Single-channel depth at the request image's resolution.
    fn predict(&mut self, req: &DepthRequest<'_>) -> Result<Image<f32>>;
}

/// Returns the injected noise exactly.
#[derive(Debug, Default, Clone, Copy)]
pub struct OracleDenoiser;

impl Denoiser for OracleDenoiser {
    fn kind(&self) -> &'static str {
        "oracle"
    }

    fn predict(&mut self, req: &DenoiseRequest<'_>) -> Result<Image<f64>> {
        Ok(req.draw.eps.clone())
    }
}

/// Predicts zero noise everywhere.
#[derive(Debug, Default, Clone, Copy)]
pub struct ZeroDenoiser;

impl Denoiser for ZeroDenoiser {
    fn kind(&self) -> &'static str {
        "zero"
    }

    fn predict(&mut self, req: &DenoiseRequest<'_>) -> Result<Image<f64>> {
        Ok(Image::zeros(req.noised.width, req.noised.height, req.noised.channels))
    }
}

/// Precomputed per-view maps, from memory or `<dir>/<view_id>.pfm`.
#[derive(Debug, Clone, Default)]
pub struct MapStore {
    dir: Option<PathBuf>,
    maps: HashMap<String, Image<f32>>,
}

impl MapStore {
    pub fn from_dir(dir: impl Into<PathBuf>) -> Self {
        Self {
            dir: Some(dir.into()),
            maps: HashMap::new(),
        }
    }

    pub fn from_maps(maps: HashMap<String, Image<f32>>) -> Self {
        Self { dir: None, maps }
    }

    pub fn path_for(&self, view_id: &str) -> Option<PathBuf> {
        self.dir.as_ref().map(|d| d.join(format!("{view_id}.pfm")))
    }

    pub fn contains(&self, view_id: &str) -> bool {
        self.maps.contains_key(view_id) || self.path_for(view_id).is_some_and(|p| p.is_file())
    }

    fn get(&mut self, view_id: &str, width: usize, height: usize, channels: usize) -> Result<Image<f32>> {
        if !self.maps.contains_key(view_id) {
            let Some(path) = self.path_for(view_id) else {
                return Err(Error::MissingFile {
                    path: PathBuf::from(format!("{view_id}.pfm")),
                });
            };
            let map = read_pfm(&path)?;
            self.maps.insert(view_id.to_string(), map);
        }
        let map = &self.maps[view_id];
        if (map.width, map.height) != (width, height) {
            return Err(Error::ResolutionMismatch {
                what: format!("prior map for view {view_id}"),
                expected: (width, height),
                found: (map.width, map.height),
            });
        }
        if map.channels != channels {
            return Err(Error::Shape(format!(
                "prior map for view {view_id} has {} channels, expected {channels}",
                map.channels
            )));
        }
        Ok(map.clone())
    }
}

/// Noise predictions read from per-view 3-channel maps.
#[derive(Debug, Clone)]
pub struct FileDenoiser {
    pub store: MapStore,
}

impl Denoiser for FileDenoiser {
    fn kind(&self) -> &'static str {
        "file"
    }

    fn predict(&mut self, req: &DenoiseRequest<'_>) -> Result<Image<f64>> {
        let n = req.noised;
        Ok(self.store.get(req.view_id, n.width, n.height, n.channels)?.cast())
    }
}

/// Depth from per-view maps on disk.
#[derive(Debug, Clone)]
pub struct FileDepth {
    pub store: MapStore,
}

impl DepthProvider for FileDepth {
    fn kind(&self) -> &'static str {
        "file"
    }

    fn predict(&mut self, req: &DepthRequest<'_>) -> Result<Image<f32>> {
        self.store.get(req.view_id, req.image.width, req.image.height, 1)
    }
}

/// Ground-truth depth of a synthetic scene, optionally warped by
/// `scale · d + shift` to mimic a relative-depth predictor.
#[derive(Debug, Clone)]
pub struct OracleDepth {
    maps: HashMap<String, Image<f32>>,
    pub scale: f32,
    pub shift: f32,
}

impl OracleDepth {
    pub fn new(maps: HashMap<String, Image<f32>>) -> Self {
        Self {
            maps,
            scale: 1.0,
            shift: 0.0,
        }
    }

    pub fn with_affine(mut self, scale: f32, shift: f32) -> Self {
        self.scale = scale;
        self.shift = shift;
        self
    }
}

impl DepthProvider for OracleDepth {
    fn kind(&self) -> &'static str {
        "oracle"
    }

    fn predict(&mut self, req: &DepthRequest<'_>) -> Result<Image<f32>> {
        let map = self
            .maps
            .get(req.view_id)
            .ok_or_else(|| Error::PriorUnavailable(format!("no ground-truth depth for view {}", req.view_id)))?;
        if (map.width, map.height) != (req.image.width, req.image.height) {
            return Err(Error::ResolutionMismatch {
                what: format!("oracle depth for view {}", req.view_id),
                expected: (req.image.width, req.image.height),
                found: (map.width, map.height),
            });
        }
        if self.scale == 1.0 && self.shift == 0.0 {
            return Ok(map.clone());
        }
        Ok(map.map(|d| self.scale * d + self.shift))
    }
}

/// Provider selection as written in configuration: `oracle`, `zero`,
/// `file:<dir>` or `subprocess:<command line>`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ProviderSpec {
    Oracle,
    Zero,
    File(PathBuf),
    Subprocess(String),
}

impl FromStr for ProviderSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "oracle" => Ok(Self::Oracle),
            "zero" => Ok(Self::Zero),
            _ => {
                if let Some(dir) = s.strip_prefix("file:").filter(|d| !d.is_empty()) {
                    Ok(Self::File(PathBuf::from(dir)))
                } else if let Some(cmd) = s.strip_prefix("subprocess:").filter(|c| !c.trim().is_empty()) {
                    Ok(Self::Subprocess(cmd.to_string()))
                } else {
                    Err(Error::InvalidConfig(format!(
                        "unknown provider {s:?}; expected oracle, zero, file:<dir> or subprocess:<cmd>"
                    )))
                }
            }
        }
    }
}

impl std::fmt::Display for ProviderSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Oracle => f.write_str("oracle"),
            Self::Zero => f.write_str("zero"),
            Self::File(d) => write!(f, "file:{}", d.display()),
            Self::Subprocess(c) => write!(f, "subprocess:{c}"),
        }
    }
}

pub fn make_denoiser(spec: &ProviderSpec) -> Result<Box<dyn Denoiser>> {
    Ok(match spec {
        ProviderSpec::Oracle => Box::new(OracleDenoiser),
        ProviderSpec::Zero => Box::new(ZeroDenoiser),
        ProviderSpec::File(dir) => Box::new(FileDenoiser {
            store: MapStore::from_dir(dir),
        }),
        ProviderSpec::Subprocess(cmd) => Box::new(super::subprocess::SubprocessProvider::from_command_line(cmd)?),
    })
}

/// `oracle_maps` backs the oracle kind (ground-truth depth per view id).
pub fn make_depth_provider(spec: &ProviderSpec, oracle_maps: impl FnOnce() -> HashMap<String, Image<f32>>) -> Result<Box<dyn DepthProvider>> {
    Ok(match spec {
        ProviderSpec::Oracle => Box::new(OracleDepth::new(oracle_maps())),
        ProviderSpec::Zero => {
            return Err(Error::InvalidConfig("depth prior has no zero provider".into()));
        }
        ProviderSpec::File(dir) => Box::new(FileDepth {
            store: MapStore::from_dir(dir),
        }),
        ProviderSpec::Subprocess(cmd) => Box::new(super::subprocess::SubprocessProvider::from_command_line(cmd)?),
    })
}

/// Checks a file-backed store covers every view id; used at load time.
pub fn check_store_covers<'a>(dir: &Path, ids: impl IntoIterator<Item = &'a str>) -> Result<()> {
    let store = MapStore::from_dir(dir);
    for id in ids {
        if !store.contains(id) {
            return Err(Error::InvalidDataset(format!(
                "view {id}: depth prior map {} not found",
                store.path_for(id).expect("dir set").display()
            )));
        }
    }
    Ok(())
}
