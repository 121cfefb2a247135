//! Sample records and the tab-separated manifest file.
//!
//! ```text
//! # lesion=EX seed=7
//! train\timages/IDRiD_01.png\tmasks/EX/IDRiD_01.png\tEX\toriginal\t7
//! train\taug/images/IDRiD_01_aug0.png\taug/masks/IDRiD_01_aug0.png\tEX\taugmented(IDRiD_01;angle=-3.25;flip=1)\t912837
//! validation\t...
//! ```
//!
//! Columns: split, image path, mask path, lesion, provenance, seed. Lines
//! starting with `#` are comments; the first comment carries the lesion and the
//! split seed. Paths are written as given (usually absolute).

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::augment::AugmentTransform;
use crate::dataset::lesion::LesionClass;
use crate::error::{Error, IoContext, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Provenance {
    Original,
    Augmented {
        parent: String,
        seed: u64,
        transform: AugmentTransform,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    /// Image identity (file stem); augmented records get a derived id.
    pub id: String,
    pub image_path: PathBuf,
    pub mask_path: PathBuf,
    pub lesion: LesionClass,
    pub provenance: Provenance,
}

impl SampleRecord {
    pub fn original(id: impl Into<String>, image_path: PathBuf, mask_path: PathBuf, lesion: LesionClass) -> Self {
        SampleRecord {
            id: id.into(),
            image_path,
            mask_path,
            lesion,
            provenance: Provenance::Original,
        }
    }

    pub fn is_augmented(&self) -> bool {
        matches!(self.provenance, Provenance::Augmented { .. })
    }

    /// The original image this record derives from (itself for originals).
    pub fn source_id(&self) -> &str {
        match &self.provenance {
            Provenance::Original => &self.id,
            Provenance::Augmented { parent, .. } => parent,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SplitName {
    Train,
    Validation,
    Test,
}

impl SplitName {
    pub fn as_str(self) -> &'static str {
        match self {
            SplitName::Train => "train",
            SplitName::Validation => "validation",
            SplitName::Test => "test",
        }
    }

    fn parse(s: &str) -> Option<SplitName> {
        match s {
            "train" => Some(SplitName::Train),
            "validation" => Some(SplitName::Validation),
            "test" => Some(SplitName::Test),
            _ => None,
        }
    }
}

/// Train/validation/test membership for one lesion class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub lesion: LesionClass,
    pub seed: u64,
    pub train: Vec<SampleRecord>,
    pub validation: Vec<SampleRecord>,
    pub test: Vec<SampleRecord>,
}

impl SplitManifest {
    pub fn counts(&self) -> (usize, usize, usize) {
        (self.train.len(), self.validation.len(), self.test.len())
    }

    pub fn originals_in_train(&self) -> impl Iterator<Item = &SampleRecord> {
        self.train.iter().filter(|r| !r.is_augmented())
    }

    pub fn augmented_count(&self) -> usize {
        self.train.iter().filter(|r| r.is_augmented()).count()
    }

    pub fn split(&self, name: SplitName) -> &[SampleRecord] {
        match name {
            SplitName::Train => &self.train,
            SplitName::Validation => &self.validation,
            SplitName::Test => &self.test,
        }
    }

    /// Checks disjointness and that augmented records only extend the train split.
    pub fn validate(&self) -> Result<()> {
        use std::collections::HashMap;
        let mut owner: HashMap<&str, SplitName> = HashMap::new();
        for name in [SplitName::Train, SplitName::Validation, SplitName::Test] {
            for record in self.split(name) {
                if record.lesion != self.lesion {
                    return Err(Error::Contract(format!(
                        "record {} is labelled {} in a {} manifest",
                        record.id, record.lesion, self.lesion
                    )));
                }
                if record.is_augmented() {
                    if name != SplitName::Train {
                        return Err(Error::Contract(format!(
                            "augmented record {} appears in the {} split",
                            record.id,
                            name.as_str()
                        )));
                    }
                    continue;
                }
                if let Some(prev) = owner.insert(&record.id, name) {
                    return Err(Error::Contract(format!(
                        "image {} appears in both {} and {}",
                        record.id,
                        prev.as_str(),
                        name.as_str()
                    )));
                }
            }
        }
        for record in self.train.iter().filter(|r| r.is_augmented()) {
            if owner.get(record.source_id()) != Some(&SplitName::Train) {
                return Err(Error::Contract(format!(
                    "augmented record {} derives from {}, which is not a training original",
                    record.id,
                    record.source_id()
                )));
            }
        }
        Ok(())
    }

    pub fn to_tsv(&self) -> String {
        let mut out = format!("# lesion={} seed={}\n", self.lesion, self.seed);
        for name in [SplitName::Train, SplitName::Validation, SplitName::Test] {
            for r in self.split(name) {
                let (provenance, seed) = match &r.provenance {
                    Provenance::Original => ("original".to_string(), self.seed),
                    Provenance::Augmented { parent, seed, transform } => (
                        format!(
                            "augmented({parent};angle={:?};flip={})",
                            transform.angle_deg,
                            u8::from(transform.flip)
                        ),
                        *seed,
                    ),
                };
                let _ = writeln!(
                    out,
                    "{}\t{}\t{}\t{}\t{}\t{}",
                    name.as_str(),
                    r.image_path.display(),
                    r.mask_path.display(),
                    r.lesion,
                    provenance,
                    seed
                );
            }
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).with_path(parent)?;
        }
        std::fs::write(path, self.to_tsv()).with_path(path)
    }

    pub fn read(path: &Path) -> Result<SplitManifest> {
        let text = std::fs::read_to_string(path).with_path(path)?;
        Self::parse(&text, path)
    }

    pub fn parse(text: &str, path: &Path) -> Result<SplitManifest> {
        let err = |line: usize, message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        let mut lesion = None;
        let mut seed = None;
        let (mut train, mut validation, mut test) = (Vec::new(), Vec::new(), Vec::new());
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.trim_end_matches('\r');
            if line.trim().is_empty() {
                continue;
            }
            if let Some(comment) = line.strip_prefix('#') {
                for token in comment.split_whitespace() {
                    if let Some(v) = token.strip_prefix("lesion=") {
                        lesion = Some(v.parse::<LesionClass>().map_err(|e| err(line_no, e.to_string()))?);
                    } else if let Some(v) = token.strip_prefix("seed=") {
                        seed = Some(v.parse::<u64>().map_err(|e| err(line_no, format!("bad seed: {e}")))?);
                    }
                }
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 6 {
                return Err(err(line_no, format!("expected 6 tab-separated columns, found {}", cols.len())));
            }
            let split = SplitName::parse(cols[0]).ok_or_else(|| err(line_no, format!("unknown split '{}'", cols[0])))?;
            let record_lesion: LesionClass = cols[3].parse().map_err(|e: Error| err(line_no, e.to_string()))?;
            let record_seed: u64 = cols[5].parse().map_err(|e| err(line_no, format!("bad seed: {e}")))?;
            let image_path = PathBuf::from(cols[1]);
            let mask_path = PathBuf::from(cols[2]);
            let id = image_path
                .file_stem()
                .and_then(|s| s.to_str())
                .ok_or_else(|| err(line_no, "image path has no file stem".into()))?
                .to_string();
            let provenance = if cols[4] == "original" {
                Provenance::Original
            } else {
                parse_augmented(cols[4], record_seed).ok_or_else(|| err(line_no, format!("bad provenance '{}'", cols[4])))?
            };
            let record = SampleRecord {
                id,
                image_path,
                mask_path,
                lesion: record_lesion,
                provenance,
            };
            match split {
                SplitName::Train => train.push(record),
                SplitName::Validation => validation.push(record),
                SplitName::Test => test.push(record),
            }
        }
        let lesion = lesion
            .or_else(|| train.first().map(|r: &SampleRecord| r.lesion))
            .ok_or_else(|| err(1, "manifest names no lesion class".into()))?;
        let manifest = SplitManifest {
            lesion,
            seed: seed.unwrap_or(0),
            train,
            validation,
            test,
        };
        manifest.validate()?;
        Ok(manifest)
    }
}

fn parse_augmented(field: &str, seed: u64) -> Option<Provenance> {
    let inner = field.strip_prefix("augmented(")?.strip_suffix(')')?;
    let mut parts = inner.split(';');
    let parent = parts.next()?.to_string();
    let mut angle = None;
    let mut flip = None;
    for part in parts {
        if let Some(v) = part.strip_prefix("angle=") {
            angle = v.parse::<f64>().ok();
        } else if let Some(v) = part.strip_prefix("flip=") {
            flip = match v {
                "0" => Some(false),
                "1" => Some(true),
                _ => None,
            };
        }
    }
    Some(Provenance::Augmented {
        parent,
        seed,
        transform: AugmentTransform {
            angle_deg: angle?,
            flip: flip?,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: &str) -> SampleRecord {
        SampleRecord::original(
            id,
            PathBuf::from(format!("/d/images/{id}.png")),
            PathBuf::from(format!("/d/masks/EX/{id}.png")),
            LesionClass::EX,
        )
    }

    fn sample_manifest() -> SplitManifest {
        let mut aug = rec("a_aug0");
        aug.provenance = Provenance::Augmented {
            parent: "a".into(),
            seed: 99,
            transform: AugmentTransform { angle_deg: -7.123456789012345, flip: true },
        };
        SplitManifest {
            lesion: LesionClass::EX,
            seed: 7,
            train: vec![rec("a"), rec("b"), aug],
            validation: vec![rec("c")],
            test: vec![rec("d")],
        }
    }

    #[test]
    fn tsv_round_trip() {
        let m = sample_manifest();
        let text = m.to_tsv();
        assert!(text.starts_with("# lesion=EX seed=7\n"));
        let back = SplitManifest::parse(&text, Path::new("m.tsv")).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn overlapping_splits_are_rejected() {
        let mut m = sample_manifest();
        m.test.push(rec("a"));
        assert!(m.validate().is_err());
    }

    #[test]
    fn augmented_outside_train_is_rejected() {
        let mut m = sample_manifest();
        let aug = m.train.pop().unwrap();
        m.validation.push(aug);
        assert!(m.validate().is_err());
    }

    #[test]
    fn orphan_augmented_record_is_rejected() {
        let mut m = sample_manifest();
        m.train.remove(0);
        assert!(m.validate().is_err());
    }

    #[test]
    fn malformed_lines_report_position() {
        let text = "# lesion=EX seed=1\ntrain\tonly-two\n";
        match SplitManifest::parse(text, Path::new("x.tsv")) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }
}
