//! Foundation-model priors: a diffusion denoiser driving score distillation
//! and a monocular depth predictor driving a correlation loss, each behind a
//! provider interface.

mod depth;
mod diffusion;
mod providers;
pub mod subprocess;
pub mod wire;

pub use depth::{geo_loss, pearson_corr, GeoLoss, CORR_EPS};
pub use diffusion::{add_noise, add_noise_with, sds_residual, DiffusionSchedule, NoiseDraw, SdsOutput};
pub use providers::{
    check_store_covers, make_denoiser, make_depth_provider, DenoiseRequest, Denoiser, DepthProvider, DepthRequest, FileDenoiser,
    FileDepth, MapStore, OracleDenoiser, OracleDepth, ProviderSpec, ZeroDenoiser,
};
pub use subprocess::SubprocessProvider;
