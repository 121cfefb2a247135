use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// The four annotated diabetic retinopathy lesion types.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LesionClass {
    /// Hard exudates.
    EX,
    /// Hemorrhages.
    HE,
    /// Microaneurysms.
    MA,
    /// Soft exudates.
    SE,
}

impl LesionClass {
    pub const ALL: [LesionClass; 4] = [LesionClass::EX, LesionClass::HE, LesionClass::MA, LesionClass::SE];

    pub fn as_str(self) -> &'static str {
        match self {
            LesionClass::EX => "EX",
            LesionClass::HE => "HE",
            LesionClass::MA => "MA",
            LesionClass::SE => "SE",
        }
    }

    /// Bit position in the composite label encoding.
    pub fn bit(self) -> u8 {
        match self {
            LesionClass::EX => 0,
            LesionClass::HE => 1,
            LesionClass::MA => 2,
            LesionClass::SE => 3,
        }
    }

    pub fn index(self) -> usize {
        self.bit() as usize
    }

    pub fn from_index(i: usize) -> Option<LesionClass> {
        LesionClass::ALL.get(i).copied()
    }
}

impl fmt::Display for LesionClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LesionClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "EX" => Ok(LesionClass::EX),
            "HE" => Ok(LesionClass::HE),
            "MA" => Ok(LesionClass::MA),
            "SE" => Ok(LesionClass::SE),
            other => Err(Error::Config(format!("unknown lesion class '{other}' (expected EX, HE, MA or SE)"))),
        }
    }
}
