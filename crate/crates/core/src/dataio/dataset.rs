//! `manifest.json` datasets: per-view float images, depths, tool masks and
//! calibrated cameras.

use std::collections::{HashMap, HashSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::Image;
use crate::math::{Mat3, Vec3};
use crate::priors::{check_store_covers, ProviderSpec};
use crate::scene::{CameraView, Intrinsics};
use crate::train::InitPoint;

use super::pfm::read_pfm;
use super::png::read_mask_png;

pub const MANIFEST_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    #[default]
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewEntry {
    pub id: String,
    #[serde(default)]
    pub split: Split,
    /// Float RGB image (PFM), relative to the dataset root.
    pub image: String,
    /// 8-bit copy for viewing.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_png: Option<String>,
    /// Single-channel float depth (PFM).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth: Option<String>,
    /// Tool mask PNG; white marks tool pixels.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<String>,
    pub intrinsics: Intrinsics,
    /// Row-major world-to-camera transform, right-handed, +z forward.
    pub world_to_camera: [[f64; 4]; 4],
    pub time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub version: u32,
    pub width: usize,
    pub height: usize,
    pub near: f64,
    pub bounds_min: Vec3<f64>,
    pub bounds_max: Vec3<f64>,
    /// JSON list of colored points used to seed the cloud.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init_points: Option<String>,
    /// Ground-truth cloud checkpoint of a synthetic scene.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<String>,
    pub views: Vec<ViewEntry>,
}

pub fn extrinsics_to_matrix(rotation: &Mat3<f64>, translation: Vec3<f64>) -> [[f64; 4]; 4] {
    let mut m = [[0.0; 4]; 4];
    for i in 0..3 {
        m[i][..3].copy_from_slice(&rotation[i]);
        m[i][3] = translation[i];
    }
    m[3][3] = 1.0;
    m
}

pub fn matrix_to_extrinsics(m: &[[f64; 4]; 4]) -> Result<(Mat3<f64>, Vec3<f64>)> {
    if m[3] != [0.0, 0.0, 0.0, 1.0] {
        return Err(Error::InvalidDataset("world_to_camera last row must be 0 0 0 1".into()));
    }
    let rotation = [
        [m[0][0], m[0][1], m[0][2]],
        [m[1][0], m[1][1], m[1][2]],
        [m[2][0], m[2][1], m[2][2]],
    ];
    Ok((rotation, [m[0][3], m[1][3], m[2][3]]))
}

impl DatasetManifest {
    pub fn read(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let value: serde_json::Value = serde_json::from_slice(&bytes)?;
        let version = value.get("version").and_then(|v| v.as_u64());
        if version != Some(MANIFEST_VERSION as u64) {
            return Err(Error::VersionMismatch(format!(
                "manifest version {version:?}, expected {MANIFEST_VERSION}"
            )));
        }
        Ok(serde_json::from_value(value)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let s = serde_json::to_string_pretty(self)?;
        std::fs::write(path, s + "\n").map_err(|e| Error::io(path, e))
    }

    /// Structural checks that need no file access.
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidDataset("empty resolution".into()));
        }
        if !(self.near > 0.0) {
            return Err(Error::InvalidDataset("near plane must be positive".into()));
        }
        if (0..3).any(|a| !(self.bounds_min[a] < self.bounds_max[a])) {
            return Err(Error::InvalidDataset("scene bounds are empty".into()));
        }
        if self.views.is_empty() {
            return Err(Error::InvalidDataset("manifest lists no views".into()));
        }
        let mut ids = HashSet::new();
        for v in &self.views {
            if !ids.insert(v.id.as_str()) {
                return Err(Error::InvalidDataset(format!("duplicate view id {}", v.id)));
            }
        }
        if self.views.windows(2).any(|w| w[1].time < w[0].time) {
            return Err(Error::InvalidDataset("view times must be non-decreasing".into()));
        }
        Ok(())
    }
}

/// `k` evenly strided indices out of `0..n`: `⌊i·n/k⌋`.
pub fn strided_subset(n: usize, k: usize) -> Result<Vec<usize>> {
    if k == 0 || k > n {
        return Err(Error::InvalidConfig(format!("cannot pick {k} views out of {n}")));
    }
    Ok((0..k).map(|i| i * n / k).collect())
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub root: PathBuf,
    pub manifest: DatasetManifest,
    /// All views in manifest order with their payloads loaded.
    pub views: Vec<CameraView>,
    pub splits: Vec<Split>,
    pub init_points: Vec<InitPoint>,
}

impl Dataset {
    /// Loads `path` (a dataset directory or its manifest file) and checks
    /// every referenced file against the declared resolution.
    pub fn load(path: &Path) -> Result<Self> {
        let manifest_path = if path.is_dir() { path.join(MANIFEST_FILE) } else { path.to_path_buf() };
        let root = manifest_path.parent().map(Path::to_path_buf).unwrap_or_default();
        let manifest = DatasetManifest::read(&manifest_path)?;
        manifest.validate()?;
        let (w, h) = (manifest.width, manifest.height);
        let mut views = Vec::with_capacity(manifest.views.len());
        for e in &manifest.views {
            let (rotation, translation) = matrix_to_extrinsics(&e.world_to_camera)
                .map_err(|err| Error::InvalidDataset(format!("view {}: {err}", e.id)))?;
            let mut view = CameraView::new(e.id.clone(), e.intrinsics, rotation, translation, w, h, e.time);
            let image = read_pfm(&root.join(&e.image))?;
            if image.channels != 3 {
                return Err(Error::InvalidDataset(format!("view {}: image must have 3 channels", e.id)));
            }
            view.gt_image = Some(image);
            if let Some(d) = &e.depth {
                let depth = read_pfm(&root.join(d))?;
                if depth.channels != 1 {
                    return Err(Error::InvalidDataset(format!("view {}: depth must have 1 channel", e.id)));
                }
                view.gt_depth = Some(depth);
            }
            if let Some(m) = &e.mask {
                view.mask = Some(read_mask_png(&root.join(m))?);
            }
            view.validate()?;
            views.push(view);
        }
        let init_points = match &manifest.init_points {
            Some(p) => {
                let path = root.join(p);
                let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
                serde_json::from_slice(&bytes)?
            }
            None => Vec::new(),
        };
        Ok(Self {
            root,
            splits: manifest.views.iter().map(|v| v.split).collect(),
            manifest,
            views,
            init_points,
        })
    }

    pub fn split_views(&self, split: Split) -> Vec<CameraView> {
        self.views
            .iter()
            .zip(&self.splits)
            .filter(|(_, s)| **s == split)
            .map(|(v, _)| v.clone())
            .collect()
    }

    /// Training budget of `k` views, evenly strided over the training split.
    pub fn train_views(&self, k: usize) -> Result<Vec<CameraView>> {
        let all = self.split_views(Split::Train);
        Ok(strided_subset(all.len(), k)?.into_iter().map(|i| all[i].clone()).collect())
    }

    pub fn view(&self, id: &str) -> Result<&CameraView> {
        self.views
            .iter()
            .find(|v| v.id == id)
            .ok_or_else(|| Error::InvalidInput(format!("no view {id:?} in the dataset")))
    }

    /// Dataset depth maps by view id, backing the oracle depth provider.
    pub fn depth_maps(&self) -> HashMap<String, Image<f32>> {
        self.views
            .iter()
            .filter_map(|v| v.gt_depth.clone().map(|d| (v.id.clone(), d)))
            .collect()
    }

    /// Resolves a file provider directory against the dataset root.
    pub fn resolve_spec(&self, spec: &ProviderSpec) -> ProviderSpec {
        match spec {
            ProviderSpec::File(d) if d.is_relative() => ProviderSpec::File(self.root.join(d)),
            other => other.clone(),
        }
    }

    /// Checks a depth prior can serve every view in `views`.
    pub fn check_depth_prior(&self, spec: &ProviderSpec, views: &[CameraView]) -> Result<()> {
        match self.resolve_spec(spec) {
            ProviderSpec::File(dir) => check_store_covers(&dir, views.iter().map(|v| v.id.as_str())),
            ProviderSpec::Oracle => match views.iter().find(|v| v.gt_depth.is_none()) {
                Some(v) => Err(Error::InvalidDataset(format!(
                    "view {}: oracle depth prior needs a depth map in the manifest",
                    v.id
                ))),
                None => Ok(()),
            },
            _ => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strided_subsets() {
        assert_eq!(strided_subset(12, 3).unwrap(), vec![0, 4, 8]);
        assert_eq!(strided_subset(12, 12).unwrap(), (0..12).collect::<Vec<_>>());
        assert_eq!(strided_subset(3, 3).unwrap(), vec![0, 1, 2]);
        assert_eq!(strided_subset(10, 4).unwrap(), vec![0, 2, 5, 7]);
        assert!(strided_subset(3, 4).is_err());
        assert!(strided_subset(3, 0).is_err());
    }

    #[test]
    fn extrinsics_matrix_roundtrip() {
        let r = [[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]];
        let t = [0.5, -2.0, 3.0];
        let m = extrinsics_to_matrix(&r, t);
        assert_eq!(m[0], [0.0, -1.0, 0.0, 0.5]);
        assert_eq!(matrix_to_extrinsics(&m).unwrap(), (r, t));
        let mut bad = m;
        bad[3][0] = 1.0;
        assert!(matrix_to_extrinsics(&bad).is_err());
    }
}
