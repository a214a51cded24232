//! Dataset, checkpoint and image formats, the synthetic scene generator and
//! run orchestration.

pub mod checkpoint;
pub mod dataset;
pub mod pfm;
pub mod png;
pub mod run;
pub mod synth;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointMeta, Tensor, CHECKPOINT_MAGIC};
pub use dataset::{strided_subset, Dataset, DatasetManifest, Split, ViewEntry, MANIFEST_FILE, MANIFEST_VERSION};
pub use pfm::{read_pfm, write_pfm};
pub use run::{build_providers, initial_state, state_checkpoint, state_model, train_dataset, FileObserver, PriorSpecs, TrainRun};
pub use synth::{synth_generate, SynthParams, SyntheticScene};
