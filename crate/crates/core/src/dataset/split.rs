use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::manifest::{SampleRecord, SplitManifest};
use crate::error::{Error, Result};

/// Train/validation/test fractions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitRatios {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        SplitRatios {
            train: 0.7,
            validation: 0.2,
            test: 0.1,
        }
    }
}

fn round_half_up(x: f64) -> usize {
    // The small bias absorbs representation error, e.g. 0.7 * 5 = 3.4999999999999996.
    (x + 0.5 + 1e-9).floor() as usize
}

impl SplitRatios {
    fn validate(&self) -> Result<()> {
        let parts = [self.train, self.validation, self.test];
        if parts.iter().any(|r| !(0.0..=1.0).contains(r)) {
            return Err(Error::Config(format!("split ratios must lie in [0, 1]: {self:?}")));
        }
        if (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("split ratios must sum to 1: {self:?}")));
        }
        Ok(())
    }

    /// Train and validation sizes round half up; test takes the remainder.
    pub fn counts(&self, n: usize) -> Result<(usize, usize, usize)> {
        self.validate()?;
        let train = round_half_up(self.train * n as f64).min(n);
        let validation = round_half_up(self.validation * n as f64).min(n - train);
        let test = n - train - validation;
        if train == 0 || validation == 0 || test == 0 {
            return Err(Error::Split(format!(
                "{n} records cannot fill three non-empty splits ({train}/{validation}/{test})"
            )));
        }
        Ok((train, validation, test))
    }
}

/// Shuffles original records with a seeded ChaCha8 stream and cuts them into
/// three disjoint splits. Records are ordered by id first, so the result only
/// depends on the record set and the seed.
pub fn split(records: &[SampleRecord], ratios: SplitRatios, seed: u64) -> Result<SplitManifest> {
    let Some(first) = records.first() else {
        return Err(Error::Split("cannot split an empty record list".into()));
    };
    let lesion = first.lesion;
    if records.iter().any(|r| r.is_augmented()) {
        return Err(Error::Split("split operates on original records, before augmentation".into()));
    }
    if records.iter().any(|r| r.lesion != lesion) {
        return Err(Error::Split("all records must share one lesion class".into()));
    }
    let (n_train, n_val, _) = ratios.counts(records.len())?;

    let mut ordered: Vec<SampleRecord> = records.to_vec();
    ordered.sort_by(|a, b| a.id.cmp(&b.id));
    if ordered.windows(2).any(|w| w[0].id == w[1].id) {
        return Err(Error::Split("duplicate image identities in record list".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ordered.shuffle(&mut rng);

    let test = ordered.split_off(n_train + n_val);
    let validation = ordered.split_off(n_train);
    let manifest = SplitManifest {
        lesion,
        seed,
        train: ordered,
        validation,
        test,
    };
    manifest.validate()?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::lesion::LesionClass;
    use std::path::PathBuf;

    fn records(n: usize) -> Vec<SampleRecord> {
        (0..n)
            .map(|i| {
                SampleRecord::original(
                    format!("img{i:03}"),
                    PathBuf::from(format!("images/img{i:03}.jpg")),
                    PathBuf::from(format!("masks/EX/img{i:03}.png")),
                    LesionClass::EX,
                )
            })
            .collect()
    }

    #[test]
    fn idrid_counts() {
        let ratios = SplitRatios::default();
        assert_eq!(ratios.counts(81).unwrap(), (57, 16, 8));
        assert_eq!(ratios.counts(80).unwrap(), (56, 16, 8));
        assert_eq!(ratios.counts(40).unwrap(), (28, 8, 4));
    }

    #[test]
    fn same_seed_same_split() {
        let recs = records(30);
        let a = split(&recs, SplitRatios::default(), 11).unwrap();
        let b = split(&recs, SplitRatios::default(), 11).unwrap();
        assert_eq!(a, b);
        let mut reversed = recs.clone();
        reversed.reverse();
        assert_eq!(split(&reversed, SplitRatios::default(), 11).unwrap(), a);
        let c = split(&recs, SplitRatios::default(), 12).unwrap();
        assert_ne!(a.train, c.train);
    }

    #[test]
    fn too_few_records() {
        assert!(matches!(split(&records(2), SplitRatios::default(), 0), Err(Error::Split(_))));
        assert!(split(&[], SplitRatios::default(), 0).is_err());
    }

    #[test]
    fn bad_ratios() {
        let ratios = SplitRatios { train: 0.7, validation: 0.2, test: 0.2 };
        assert!(matches!(split(&records(10), ratios, 0), Err(Error::Config(_))));
    }
}
