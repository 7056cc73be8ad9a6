//! Meta-learning of SOEL-adapting spiking networks: the outer loop trains
//! shadow weights so that the on-chip learning program adapts well from a
//! few examples, and the deployment path evaluates the quantized result.

pub mod adam;
pub mod checkpoint;
pub mod config;
pub mod deploy;
pub mod error;
pub mod model;
pub mod outer;
pub mod settings;
pub mod train;

pub use adam::{adam_step, AdamState};
pub use checkpoint::{export_json, import_json, load_checkpoint, save_checkpoint, Checkpoint, TrainingCheckpoint};
pub use config::{InitConfig, InnerLoopConfig, ModelConfig, OuterLoopConfig};
pub use deploy::{meta_test, readout, run_episode, DeployedNetwork, EpisodeResult, EvalSettings, Prediction, TrialSummary};
pub use error::{Error, Result};
pub use model::{MetaModel, Provenance};
pub use outer::{argmax, outer_loss, record_task, BatchGradient, TaskRecord, TaskRounding};
pub use settings::Settings;
pub use train::{BestSnapshot, MetricsRow, TrainState, Trainer};

/// Stream ids of the random sources used by training and evaluation.
pub mod streams {
    pub const INIT: u64 = 0x1001;
    pub const ROUNDING: u64 = 0x1002;
    pub const TRAIN: u64 = 0x1003;
    pub const VAL: u64 = 0x1004;
    pub const TEST: u64 = 0x1005;
    pub const TRAIN_EVAL: u64 = 0x1006;
}
