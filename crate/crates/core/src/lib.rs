//! Differentiable Gaussian splatting for sparse-view reconstruction of
//! deformable tissue.

pub mod dataio;
pub mod deform;
pub mod error;
pub mod eval;
pub mod imaging;
pub mod math;
pub mod priors;
pub mod raster;
pub mod scene;
pub mod train;

pub use error::{Error, Result};
pub use imaging::{Image, Mask};
pub use raster::{render, render_backward, render_with, RenderGrads, RenderOutput, RenderSettings};
pub use scene::{CameraView, CloudGrads, GaussianCloud, GaussianPrimitive, Intrinsics};
