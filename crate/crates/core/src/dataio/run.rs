//! Training and evaluation runs over a loaded dataset.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::deform::DeformationField;
use crate::error::{Error, Result};
use crate::eval::SceneModel;
use crate::priors::{make_denoiser, make_depth_provider, ProviderSpec};
use crate::scene::CameraView;
use crate::train::{init_cloud, run_schedule, LogRecord, Providers, TrainConfig, TrainObserver, TrainState};

use super::checkpoint::{save_checkpoint, Checkpoint, CheckpointMeta};
use super::dataset::Dataset;

/// Stream offset separating the field initialization from the step RNG.
const FIELD_SEED_OFFSET: u64 = 0x5eed_f1e1d;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PriorSpecs {
    pub denoiser: ProviderSpec,
    pub depth: ProviderSpec,
}

impl Default for PriorSpecs {
    fn default() -> Self {
        Self {
            denoiser: ProviderSpec::Oracle,
            depth: ProviderSpec::Oracle,
        }
    }
}

/// Providers for the enabled prior terms.
pub fn build_providers(ds: &Dataset, views: &[CameraView], config: &TrainConfig, specs: &PriorSpecs) -> Result<Providers> {
    let mut p = Providers::default();
    if config.prior_diff {
        p.denoiser = Some(make_denoiser(&ds.resolve_spec(&specs.denoiser))?);
    }
    if config.prior_geo {
        ds.check_depth_prior(&specs.depth, views)?;
        p.depth = Some(make_depth_provider(&ds.resolve_spec(&specs.depth), || ds.depth_maps())?);
    }
    Ok(p)
}

/// Cloud seeded from the dataset's init points and an identity field over
/// the scene bounds.
pub fn initial_state(ds: &Dataset, views: &[CameraView], config: &TrainConfig) -> Result<TrainState<f32>> {
    if ds.init_points.is_empty() {
        return Err(Error::InvalidDataset("dataset provides no init points".into()));
    }
    let cloud = init_cloud::<f32>(&ds.init_points, config.sh_degree, config.init_opacity);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(FIELD_SEED_OFFSET));
    let field = DeformationField::new(&config.deformation(), ds.manifest.bounds_min, ds.manifest.bounds_max, &mut rng)?;
    Ok(TrainState::new(cloud, field, views, config))
}

pub fn state_model(state: &TrainState<f32>) -> SceneModel<f32> {
    SceneModel {
        cloud: state.cloud.clone(),
        field: Some(state.field.clone()),
    }
}

pub fn state_checkpoint(state: &TrainState<f32>, config: &TrainConfig) -> Checkpoint {
    Checkpoint::from_model(
        &state_model(state),
        CheckpointMeta {
            iter: state.iter,
            sh_degree: state.cloud.sh_degree,
            bounds_min: state.field.encoding.bounds_min,
            bounds_max: state.field.encoding.bounds_max,
            has_field: true,
            config: config.clone(),
        },
    )
}

/// Writes `log.jsonl` and `ckpt_<iter>.esck` files under a run directory.
pub struct FileObserver {
    dir: PathBuf,
    config: TrainConfig,
    log: BufWriter<File>,
    pub checkpoints: Vec<PathBuf>,
}

impl FileObserver {
    pub fn new(dir: &Path, config: &TrainConfig) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join("log.jsonl");
        let log = File::create(&path).map_err(|e| Error::io(&path, e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            config: config.clone(),
            log: BufWriter::new(log),
            checkpoints: Vec::new(),
        })
    }
}

impl TrainObserver<f32> for FileObserver {
    fn on_step(&mut self, record: &LogRecord) -> Result<()> {
        let line = serde_json::to_string(record)?;
        writeln!(self.log, "{line}").map_err(|e| Error::io(self.dir.join("log.jsonl"), e))
    }

    fn on_checkpoint(&mut self, state: &TrainState<f32>) -> Result<()> {
        let path = self.dir.join(format!("ckpt_{:06}.esck", state.iter));
        save_checkpoint(&path, &state_checkpoint(state, &self.config))?;
        self.log.flush().map_err(|e| Error::io(self.dir.join("log.jsonl"), e))?;
        self.checkpoints.push(path);
        Ok(())
    }
}

pub struct TrainRun {
    pub state: TrainState<f32>,
    pub log: Vec<LogRecord>,
    pub train_views: Vec<CameraView>,
}

/// Full two-stage run on `config.views` strided training views. With `out`
/// set, logs and checkpoints go there and the last checkpoint is copied to
/// `final.esck`.
pub fn train_dataset(ds: &Dataset, config: &TrainConfig, specs: &PriorSpecs, out: Option<&Path>) -> Result<TrainRun> {
    config.validate()?;
    let views = ds.train_views(config.views)?;
    let mut providers = build_providers(ds, &views, config, specs)?;
    let mut state = initial_state(ds, &views, config)?;
    let log = match out {
        Some(dir) => {
            let mut obs = FileObserver::new(dir, config)?;
            let log = run_schedule(&mut state, &views, &mut providers, config, &mut obs)?;
            save_checkpoint(&dir.join("final.esck"), &state_checkpoint(&state, config))?;
            log
        }
        None => run_schedule(&mut state, &views, &mut providers, config, &mut crate::train::NoObserver)?,
    };
    Ok(TrainRun {
        state,
        log,
        train_views: views,
    })
}
