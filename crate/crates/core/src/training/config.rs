//! Training configuration. The file format is TOML with flat keys named after
//! the training hyperparameter table, plus optional `[model]` and `[clahe]` tables:
//!
//! ```toml
//! image_size = 512
//! batch_size = 4
//! epoch = 30
//! number_of_classes = 1
//! loss_function = "BinaryCrossentropy"
//! activation_function = "sigmoid"
//! optimizer = "Adam"
//! learning_rate = 0.0001
//! early_stopping_monitor = "val_loss"
//! early_stopping_patience = 5
//! seed = 0
//!
//! [model]
//! backbone = "efficientnet-b0"
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, IoContext, Result};
use crate::imaging::{ClaheParams, PreprocessSettings};
use crate::model::{Backbone, ModelConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LossFunction {
    #[serde(alias = "binary_crossentropy", alias = "bce")]
    BinaryCrossentropy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Optimizer {
    #[serde(alias = "adam")]
    Adam,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    #[serde(rename = "sigmoid")]
    Sigmoid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Monitor {
    #[serde(rename = "val_loss")]
    ValLoss,
}

/// Network settings that are not fixed by the image size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub backbone: Backbone,
    pub output_stride: usize,
    pub aspp_rates: Vec<usize>,
    pub aspp_channels: usize,
    pub decoder_low_level_channels: usize,
    pub init_seed: u64,
    pub freeze_backbone: bool,
}

impl Default for ModelSection {
    fn default() -> Self {
        let m = ModelConfig::default();
        ModelSection {
            backbone: m.backbone,
            output_stride: m.output_stride,
            aspp_rates: m.aspp_rates,
            aspp_channels: m.aspp_channels,
            decoder_low_level_channels: m.decoder_low_level_channels,
            init_seed: m.init_seed,
            freeze_backbone: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub image_size: usize,
    pub batch_size: usize,
    #[serde(rename = "epoch")]
    pub max_epochs: usize,
    pub number_of_classes: usize,
    pub loss_function: LossFunction,
    pub activation_function: Activation,
    pub optimizer: Optimizer,
    pub learning_rate: f64,
    pub early_stopping_monitor: Monitor,
    pub early_stopping_patience: usize,
    pub seed: u64,
    /// Batches decoded ahead on a loader thread; 0 loads inline.
    pub prefetch_batches: usize,
    pub model: ModelSection,
    pub clahe: ClaheParams,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            image_size: 512,
            batch_size: 4,
            max_epochs: 30,
            number_of_classes: 1,
            loss_function: LossFunction::BinaryCrossentropy,
            activation_function: Activation::Sigmoid,
            optimizer: Optimizer::Adam,
            learning_rate: 1e-4,
            early_stopping_monitor: Monitor::ValLoss,
            early_stopping_patience: 5,
            seed: 0,
            prefetch_batches: 0,
            model: ModelSection::default(),
            clahe: ClaheParams::default(),
        }
    }
}

impl TrainConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: TrainConfig = toml::from_str(text).map_err(|e| Error::Config(format!("training config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_path(path)?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if self.number_of_classes != 1 {
            return Err(Error::Config(format!(
                "number_of_classes must be 1 (one binary model per lesion), got {}",
                self.number_of_classes
            )));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::Config(format!("learning_rate {} is invalid", self.learning_rate)));
        }
        self.model_config().validate()?;
        self.clahe.validate_params()?;
        Ok(())
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            input_side: self.image_size,
            backbone: self.model.backbone,
            output_stride: self.model.output_stride,
            aspp_rates: self.model.aspp_rates.clone(),
            aspp_channels: self.model.aspp_channels,
            decoder_low_level_channels: self.model.decoder_low_level_channels,
            num_output_channels: self.number_of_classes,
            init_seed: self.model.init_seed,
        }
    }

    pub fn preprocess(&self) -> PreprocessSettings {
        PreprocessSettings {
            clahe: self.clahe,
            image_side: self.image_size,
        }
    }
}
