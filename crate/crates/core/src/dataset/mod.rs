//! Lesion manifests, leakage-free splitting and paired augmentation.

pub mod augment;
pub mod layout;
pub mod lesion;
pub mod manifest;
pub mod split;
pub mod synthetic;

pub use augment::{augment_pair, build_training_set, AugmentTransform};
pub use layout::{load_manifest, LoadedRecords};
pub use lesion::LesionClass;
pub use manifest::{Provenance, SampleRecord, SplitManifest, SplitName};
pub use split::{split, SplitRatios};
