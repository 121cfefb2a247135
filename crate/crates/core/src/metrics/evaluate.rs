use serde::{Deserialize, Serialize};

use crate::dataset::{LesionClass, SampleRecord};
use crate::error::{Error, Result};
use crate::imaging::{PreprocessSettings, RasterImage};
use crate::metrics::confusion::{confusion, ConfusionCounts};
use crate::metrics::ratios::{ratio_metrics, DegenerateFlags};
use crate::metrics::report::{MetricReport, DEFINITIONS_VERSION};
use crate::metrics::roc::{roc_auc, RocCurve};
use crate::model::{binarize, images_to_batch, Checkpoint, ProbabilityMap, SegmentationModel, DEFAULT_THRESHOLD};
use crate::training::{ManifestSamples, SampleSource};

/// One test sample as handed to a [`Segmenter`]. Real models only read the
/// image; reference segmenters may read the truth.
pub struct EvalSample<'a> {
    pub id: &'a str,
    pub image: &'a RasterImage,
    pub truth: &'a RasterImage,
}

/// Anything that maps a sample to a probability map of the same size.
pub trait Segmenter {
    fn predict(&self, sample: &EvalSample<'_>) -> Result<ProbabilityMap>;
}

impl Segmenter for SegmentationModel {
    fn predict(&self, sample: &EvalSample<'_>) -> Result<ProbabilityMap> {
        let out = self.forward(&images_to_batch(&[sample.image])?)?;
        let mut maps = ProbabilityMap::from_batch(&out)?;
        Ok(maps.remove(0))
    }
}

/// Returns the ground truth as probabilities 0 and 1.
#[derive(Debug, Clone, Copy, Default)]
pub struct OracleSegmenter;

/// Returns `1 - truth`.
#[derive(Debug, Clone, Copy, Default)]
pub struct AntiOracleSegmenter;

fn truth_map(truth: &RasterImage, invert: bool) -> Result<ProbabilityMap> {
    let values = truth
        .data()
        .iter()
        .map(|&v| if (v > 0) != invert { 1.0 } else { 0.0 })
        .collect();
    ProbabilityMap::new(truth.height(), truth.width(), values)
}

impl Segmenter for OracleSegmenter {
    fn predict(&self, sample: &EvalSample<'_>) -> Result<ProbabilityMap> {
        truth_map(sample.truth, false)
    }
}

impl Segmenter for AntiOracleSegmenter {
    fn predict(&self, sample: &EvalSample<'_>) -> Result<ProbabilityMap> {
        truth_map(sample.truth, true)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    /// Pixel counts pooled over all images before taking ratios.
    #[default]
    Micro,
    /// Ratios per image, then averaged.
    Macro,
}

#[derive(Debug, Clone, Copy)]
pub struct EvalOptions {
    pub threshold: f64,
    pub aggregation: Aggregation,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            threshold: DEFAULT_THRESHOLD,
            aggregation: Aggregation::Micro,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub report: MetricReport,
    /// Pooled over every test pixel; `None` when the truth has a single class.
    pub roc: Option<RocCurve>,
    pub per_image: Vec<(String, ConfusionCounts)>,
}

/// Scores every sample and reduces to one report.
pub fn evaluate_class(
    segmenter: &dyn Segmenter,
    samples: &dyn SampleSource,
    lesion: LesionClass,
    opts: &EvalOptions,
) -> Result<Evaluation> {
    if samples.is_empty() {
        return Err(Error::Config("the test set is empty".into()));
    }
    let mut per_image = Vec::with_capacity(samples.len());
    let mut scores: Vec<f64> = Vec::new();
    let mut labels: Vec<bool> = Vec::new();
    let (mut abs_sum, mut sq_sum) = (0.0, 0.0);
    let mut macro_sums = [0.0f64; 8];
    let mut degenerate = DegenerateFlags::default();
    for i in 0..samples.len() {
        let (image, truth) = samples.load(i)?;
        let id = samples.id(i);
        let probs = segmenter.predict(&EvalSample {
            id,
            image: &image,
            truth: &truth,
        })?;
        if (probs.height, probs.width) != truth.dims() {
            return Err(Error::Contract(format!(
                "{id}: prediction is {}x{}, truth is {:?}",
                probs.height,
                probs.width,
                truth.dims()
            )));
        }
        let pred = binarize(&probs, opts.threshold)?;
        let truth01 = RasterImage::from_fn_gray(truth.height(), truth.width(), |y, x| u8::from(truth.pixel(y, x)[0] > 0));
        let counts = confusion(&pred, &truth01)?;
        let (mut img_abs, mut img_sq) = (0.0, 0.0);
        for (&p, &t) in probs.values.iter().zip(truth01.data()) {
            let d = t as f64 - p;
            img_abs += d.abs();
            img_sq += d * d;
            scores.push(p);
            labels.push(t == 1);
        }
        abs_sum += img_abs;
        sq_sum += img_sq;
        if opts.aggregation == Aggregation::Macro {
            let r = ratio_metrics(&counts)?;
            let n = counts.total() as f64;
            for (acc, v) in macro_sums.iter_mut().zip([
                r.accuracy,
                r.specificity,
                r.sensitivity,
                r.precision,
                r.f1,
                r.iou,
                img_abs / n,
                img_sq / n,
            ]) {
                *acc += v;
            }
            let d = r.degenerate;
            degenerate.specificity |= d.specificity;
            degenerate.sensitivity |= d.sensitivity;
            degenerate.precision |= d.precision;
            degenerate.f1 |= d.f1;
            degenerate.iou |= d.iou;
        }
        per_image.push((id.to_string(), counts));
    }
    let counts: ConfusionCounts = per_image.iter().map(|(_, c)| *c).sum();
    let pixels = counts.total();
    let roc = match roc_auc(&scores, &labels) {
        Ok(c) => Some(c),
        Err(Error::UndefinedAuc(msg)) => {
            log::warn!("{lesion}: AUC undefined: {msg}");
            None
        }
        Err(e) => return Err(e),
    };
    let pooled = ratio_metrics(&counts)?;
    let k = samples.len() as f64;
    let [accuracy, specificity, sensitivity, precision, f1, iou, mae, mse] = match opts.aggregation {
        Aggregation::Micro => {
            degenerate = pooled.degenerate;
            [
                pooled.accuracy,
                pooled.specificity,
                pooled.sensitivity,
                pooled.precision,
                pooled.f1,
                pooled.iou,
                abs_sum / pixels as f64,
                sq_sum / pixels as f64,
            ]
        }
        Aggregation::Macro => macro_sums.map(|s| s / k),
    };
    let report = MetricReport {
        definitions_version: DEFINITIONS_VERSION.to_string(),
        lesion,
        aggregation: opts.aggregation,
        threshold: opts.threshold,
        images: samples.len(),
        pixels,
        counts,
        accuracy,
        specificity,
        sensitivity,
        precision,
        f1,
        iou,
        mae,
        mse,
        auc: roc.as_ref().map(|c| c.auc),
        degenerate,
    };
    Ok(Evaluation { report, roc, per_image })
}

/// Evaluates a checkpoint on manifest records, refusing to run when the
/// requested preprocessing differs from the one the checkpoint was trained with.
pub fn evaluate_checkpoint(
    ckpt: &Checkpoint,
    records: &[SampleRecord],
    lesion: LesionClass,
    requested: Option<&PreprocessSettings>,
    opts: &EvalOptions,
) -> Result<Evaluation> {
    if let Some(req) = requested {
        if req != &ckpt.preprocess {
            return Err(Error::ConfigMismatch(format!(
                "requested preprocessing {req:?} differs from the checkpoint's {:?}",
                ckpt.preprocess
            )));
        }
    }
    let samples = ManifestSamples::new(records, ckpt.preprocess);
    evaluate_class(&ckpt.model, &samples, lesion, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::synthetic::synthesize;
    use crate::training::InMemorySamples;

    fn fixture() -> InMemorySamples {
        let mut s = InMemorySamples::new();
        for i in 0..3 {
            let syn = synthesize(32, 40 + i);
            s.push(format!("img{i}"), syn.image, syn.masks[LesionClass::HE.index()].clone()).unwrap();
        }
        s
    }

    #[test]
    fn oracle_is_perfect_and_anti_oracle_is_worst() {
        let s = fixture();
        let e = evaluate_class(&OracleSegmenter, &s, LesionClass::HE, &EvalOptions::default()).unwrap();
        let r = &e.report;
        assert_eq!((r.accuracy, r.iou, r.mae, r.mse), (1.0, 1.0, 0.0, 0.0));
        assert_eq!(r.auc, Some(1.0));
        assert_eq!(r.pixels, 3 * 32 * 32);
        let anti = evaluate_class(&AntiOracleSegmenter, &s, LesionClass::HE, &EvalOptions::default()).unwrap();
        assert_eq!((anti.report.sensitivity, anti.report.specificity), (0.0, 0.0));
        assert_eq!(anti.report.auc, Some(0.0));
    }

    #[test]
    fn micro_counts_are_sums_of_image_counts() {
        let s = fixture();
        let e = evaluate_class(&AntiOracleSegmenter, &s, LesionClass::HE, &EvalOptions::default()).unwrap();
        let sum: ConfusionCounts = e.per_image.iter().map(|(_, c)| *c).sum();
        assert_eq!(sum, e.report.counts);
        let m = evaluate_class(
            &OracleSegmenter,
            &s,
            LesionClass::HE,
            &EvalOptions {
                aggregation: Aggregation::Macro,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(m.report.accuracy, 1.0);
        assert_eq!(m.report.aggregation, Aggregation::Macro);
    }

    #[test]
    fn empty_test_set_is_rejected() {
        let err = evaluate_class(&OracleSegmenter, &InMemorySamples::new(), LesionClass::EX, &EvalOptions::default());
        assert!(matches!(err, Err(Error::Config(_))));
    }
}
