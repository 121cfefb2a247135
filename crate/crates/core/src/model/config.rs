use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// EfficientNet family member used as the encoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Backbone {
    /// B0..=B7 with the standard compound scaling coefficients.
    EfficientNet(u8),
    /// Width 0.25 and depth 0.25 of B0; for tests and smoke runs.
    EfficientNetNano,
}

impl Backbone {
    pub const B0: Backbone = Backbone::EfficientNet(0);

    /// (width, depth) multipliers.
    pub fn scaling(self) -> (f64, f64) {
        match self {
            Backbone::EfficientNet(0) => (1.0, 1.0),
            Backbone::EfficientNet(1) => (1.0, 1.1),
            Backbone::EfficientNet(2) => (1.1, 1.2),
            Backbone::EfficientNet(3) => (1.2, 1.4),
            Backbone::EfficientNet(4) => (1.4, 1.8),
            Backbone::EfficientNet(5) => (1.6, 2.2),
            Backbone::EfficientNet(6) => (1.8, 2.6),
            Backbone::EfficientNet(7) => (2.0, 3.1),
            Backbone::EfficientNet(v) => unreachable!("no EfficientNet-B{v}"),
            Backbone::EfficientNetNano => (0.25, 0.25),
        }
    }
}

impl fmt::Display for Backbone {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Backbone::EfficientNet(v) => write!(f, "efficientnet-b{v}"),
            Backbone::EfficientNetNano => f.write_str("efficientnet-nano"),
        }
    }
}

impl FromStr for Backbone {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        let rest = lower.strip_prefix("efficientnet-").or_else(|| lower.strip_prefix("efficientnet_"));
        match rest {
            Some("nano") => Ok(Backbone::EfficientNetNano),
            Some(v) if v.len() == 2 && v.starts_with('b') => match v[1..].parse::<u8>() {
                Ok(n) if n <= 7 => Ok(Backbone::EfficientNet(n)),
                _ => Err(Error::Config(format!("unknown backbone {s:?}"))),
            },
            _ => Err(Error::Config(format!(
                "unknown backbone {s:?} (expected efficientnet-b0..b7 or efficientnet-nano)"
            ))),
        }
    }
}

impl TryFrom<String> for Backbone {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Backbone> for String {
    fn from(b: Backbone) -> String {
        b.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub input_side: usize,
    pub backbone: Backbone,
    pub output_stride: usize,
    pub aspp_rates: Vec<usize>,
    pub aspp_channels: usize,
    pub decoder_low_level_channels: usize,
    pub num_output_channels: usize,
    /// Seed for the random initialisation of every parameter.
    pub init_seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            input_side: 512,
            backbone: Backbone::B0,
            output_stride: 16,
            aspp_rates: vec![6, 12, 18],
            aspp_channels: 256,
            decoder_low_level_channels: 48,
            num_output_channels: 1,
            init_seed: 0,
        }
    }
}

impl ModelConfig {
    /// Reduced network for tests: nano backbone, narrow ASPP and decoder.
    pub fn tiny(input_side: usize) -> Self {
        ModelConfig {
            input_side,
            backbone: Backbone::EfficientNetNano,
            aspp_channels: 16,
            decoder_low_level_channels: 8,
            ..ModelConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !matches!(self.output_stride, 8 | 16) {
            return Err(Error::Config(format!("output_stride must be 8 or 16, got {}", self.output_stride)));
        }
        if self.input_side == 0 || !self.input_side.is_multiple_of(self.output_stride) {
            return Err(Error::Config(format!(
                "input_side {} is not a positive multiple of output_stride {}",
                self.input_side, self.output_stride
            )));
        }
        if self.num_output_channels != 1 {
            return Err(Error::Config(format!(
                "num_output_channels must be 1 for binary segmentation, got {}",
                self.num_output_channels
            )));
        }
        if self.aspp_rates.is_empty() || self.aspp_rates[0] == 0 || self.aspp_rates.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(format!(
                "aspp_rates must be strictly increasing positive integers, got {:?}",
                self.aspp_rates
            )));
        }
        if self.aspp_channels == 0 || self.decoder_low_level_channels == 0 {
            return Err(Error::Config("channel counts must be positive".into()));
        }
        Ok(())
    }
}
