//! Per-lesion training: BCE loss, Adam, early stopping on validation loss,
//! epoch logs and loss curves.

pub mod config;
pub mod early_stop;
pub mod loss;
pub mod plot;
pub mod samples;
pub mod trainer;

pub use config::{ModelSection, TrainConfig};
pub use early_stop::{stop_position, Decision, EarlyStopState};
pub use loss::{binary_cross_entropy, BCE_EPSILON};
pub use plot::{render_loss_curve, write_loss_curve};
pub use samples::{InMemorySamples, ManifestSamples, SampleSource};
pub use trainer::{evaluate_loss, read_epoch_log, train, train_on_manifest, EpochLog, TrainOutcome, TrainOutputs};
