//! DeepLabv3+ with an EfficientNet encoder, binary inference and checkpoints.

pub mod checkpoint;
pub mod config;
pub mod deeplab;
pub mod efficientnet;
pub mod mask;

pub use checkpoint::{load_checkpoint, load_checkpoint_expecting, save_checkpoint, Checkpoint, CheckpointMeta};
pub use config::{Backbone, ModelConfig};
pub use deeplab::{
    build_model, images_to_batch, masks_to_targets, BranchSummary, ForwardOptions, ModelSummary, SegmentationModel,
    TrainPass,
};
pub use mask::{binarize, ProbabilityMap, DEFAULT_THRESHOLD};
