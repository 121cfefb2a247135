//! C interface to `lesionseg`.
//!
//! Every function returns an [`LsegStatus`]; on failure a message for the
//! calling thread is available from [`lseg_last_error`]. Models are opaque
//! [`LsegModel`] handles released with [`lseg_model_free`]. Images are
//! row-major interleaved RGB bytes; masks are row-major bytes holding 0 or 1.
//! Panics never cross the boundary; they surface as `LSEG_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use lesionseg::dataset::LesionClass;
use lesionseg::fusion::fuse;
use lesionseg::imaging::{ColorSpace, PreprocessSettings, RasterImage};
use lesionseg::metrics::{confusion_from_slices, ratio_metrics, roc_auc};
use lesionseg::model::{binarize, build_model, images_to_batch, load_checkpoint, ModelConfig, ProbabilityMap, SegmentationModel};
use lesionseg::Error;

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LsegStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Checkpoint = 4,
    Config = 5,
    Contract = 6,
    Inference = 7,
    UndefinedAuc = 8,
    Panic = 9,
    Other = 10,
}

/// A loaded or freshly built model together with its preprocessing.
pub struct LsegModel {
    model: SegmentationModel,
    preprocess: PreprocessSettings,
}

/// Pixel metrics of one prediction/truth pair.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LsegMetrics {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    pub fn_: u64,
    pub accuracy: f64,
    pub specificity: f64,
    pub sensitivity: f64,
    pub precision: f64,
    pub f1: f64,
    pub iou: f64,
    /// Non-zero when any ratio had a zero denominator.
    pub degenerate: u8,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).expect("interior nul removed"));
}

fn status_of(err: &Error) -> LsegStatus {
    match err {
        Error::Io { .. } | Error::Image { .. } => LsegStatus::Io,
        Error::Checkpoint(_) | Error::ConfigMismatch(_) => LsegStatus::Checkpoint,
        Error::Config(_) | Error::Json(_) => LsegStatus::Config,
        Error::Contract(_) | Error::InvalidColorSpace { .. } => LsegStatus::Contract,
        Error::Inference(_) => LsegStatus::Inference,
        Error::UndefinedAuc(_) => LsegStatus::UndefinedAuc,
        _ => LsegStatus::Other,
    }
}

struct Fail(LsegStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(LsegStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> Fail {
    Fail(LsegStatus::InvalidArgument, msg.into())
}

/// Runs `f`, recording any failure for [`lseg_last_error`].
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> LsegStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            LsegStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            LsegStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| invalid(format!("{what} is not valid UTF-8")))
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut_arg<'a, T>(p: *mut T, len: usize, what: &str) -> Result<&'a mut [T], Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

/// The message of the last failed call on this thread, or an empty string.
/// The pointer stays valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn lseg_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn lseg_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads a checkpoint file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn lseg_model_load(path: *const c_char, out: *mut *mut LsegModel) -> LsegStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let path = str_arg(path, "path")?;
        let ckpt = load_checkpoint(Path::new(path))?;
        *out = Box::into_raw(Box::new(LsegModel {
            model: ckpt.model,
            preprocess: ckpt.preprocess,
        }));
        Ok(())
    })
}

/// Builds a randomly initialised model from a JSON model configuration
/// (keys as in the training config's `[model]` table plus `input_side`);
/// an empty object gives the defaults.
///
/// # Safety
/// `config_json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn lseg_model_build(config_json: *const c_char, out: *mut *mut LsegModel) -> LsegStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let cfg: ModelConfig = serde_json::from_str(str_arg(config_json, "config_json")?).map_err(Error::from)?;
        let model = build_model(&cfg)?;
        let preprocess = PreprocessSettings {
            image_side: cfg.input_side,
            ..PreprocessSettings::default()
        };
        *out = Box::into_raw(Box::new(LsegModel { model, preprocess }));
        Ok(())
    })
}

/// Releases a model. Null is ignored.
///
/// # Safety
/// `model` must come from this library and must not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn lseg_model_free(model: *mut LsegModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Side length of the square probability map produced by [`lseg_model_predict`].
///
/// # Safety
/// `model` must be a live handle or null (which yields 0).
#[no_mangle]
pub unsafe extern "C" fn lseg_model_input_side(model: *const LsegModel) -> usize {
    model.as_ref().map_or(0, |m| m.preprocess.image_side)
}

/// Number of scalar parameters, or 0 for a null handle.
///
/// # Safety
/// `model` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn lseg_model_parameter_count(model: *const LsegModel) -> usize {
    model.as_ref().map_or(0, |m| m.model.parameter_count())
}

/// Preprocesses an RGB image (contrast enhancement and resize to the model
/// side) and writes per-pixel lesion probabilities into `probs`, which must
/// hold `side * side` values.
///
/// # Safety
/// `rgb` must point to `height * width * 3` bytes and `probs` to `probs_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn lseg_model_predict(
    model: *const LsegModel,
    rgb: *const u8,
    height: usize,
    width: usize,
    probs: *mut f64,
    probs_len: usize,
) -> LsegStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        let len = height.checked_mul(width).and_then(|n| n.checked_mul(3)).ok_or_else(|| invalid("image size overflows"))?;
        let data = slice_arg(rgb, len, "rgb")?;
        let side = m.preprocess.image_side;
        if probs_len != side * side {
            return Err(invalid(format!("probs holds {probs_len} values, need {}", side * side)));
        }
        let out = slice_mut_arg(probs, probs_len, "probs")?;
        let img = RasterImage::new(height, width, ColorSpace::Rgb, data.to_vec())?;
        let (input, _) = m.preprocess.apply(&img, None)?;
        let pred = m.model.forward(&images_to_batch(&[&input])?)?;
        let map = ProbabilityMap::from_batch(&pred)?.remove(0);
        out.copy_from_slice(&map.values);
        Ok(())
    })
}

/// Writes 1 where `probs >= threshold`, else 0.
///
/// # Safety
/// `probs` must point to `len` doubles and `mask` to `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn lseg_binarize(probs: *const f64, len: usize, threshold: f64, mask: *mut u8) -> LsegStatus {
    guard(|| {
        let p = slice_arg(probs, len, "probs")?;
        let m = slice_mut_arg(mask, len, "mask")?;
        let map = ProbabilityMap::new(1, len, p.to_vec())?;
        m.copy_from_slice(binarize(&map, threshold)?.data());
        Ok(())
    })
}

/// Fuses up to four binary masks (EX, HE, MA, SE order; null entries are
/// absent classes) into a bitmask label image: bit 0 EX, bit 1 HE, bit 2 MA,
/// bit 3 SE.
///
/// # Safety
/// `masks` must point to four pointers, each null or to `height * width`
/// bytes; `labels` must point to `height * width` bytes.
#[no_mangle]
pub unsafe extern "C" fn lseg_fuse(masks: *const *const u8, height: usize, width: usize, labels: *mut u8) -> LsegStatus {
    guard(|| {
        let ptrs = slice_arg(masks, 4, "masks")?;
        let n = height.checked_mul(width).ok_or_else(|| invalid("mask size overflows"))?;
        let mut map = std::collections::BTreeMap::new();
        for (lesion, &p) in LesionClass::ALL.into_iter().zip(ptrs) {
            if !p.is_null() {
                let data = std::slice::from_raw_parts(p, n).to_vec();
                map.insert(lesion, RasterImage::new(height, width, ColorSpace::Gray, data)?);
            }
        }
        let out = slice_mut_arg(labels, n, "labels")?;
        if map.is_empty() {
            out.fill(0);
            return Ok(());
        }
        out.copy_from_slice(fuse(&map)?.labels());
        Ok(())
    })
}

/// Confusion counts and ratio metrics of a binary prediction against the truth.
///
/// # Safety
/// `pred` and `truth` must point to `len` bytes and `out` to one [`LsegMetrics`].
#[no_mangle]
pub unsafe extern "C" fn lseg_metrics(pred: *const u8, truth: *const u8, len: usize, out: *mut LsegMetrics) -> LsegStatus {
    guard(|| {
        let c = confusion_from_slices(slice_arg(pred, len, "pred")?, slice_arg(truth, len, "truth")?)?;
        let r = ratio_metrics(&c)?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = LsegMetrics {
            tp: c.tp,
            tn: c.tn,
            fp: c.fp,
            fn_: c.fn_,
            accuracy: r.accuracy,
            specificity: r.specificity,
            sensitivity: r.sensitivity,
            precision: r.precision,
            f1: r.f1,
            iou: r.iou,
            degenerate: u8::from(r.degenerate.any()),
        };
        Ok(())
    })
}

/// Area under the ROC curve of `scores` against 0/1 `labels`.
///
/// # Safety
/// `scores` must point to `len` doubles, `labels` to `len` bytes and `auc` to one double.
#[no_mangle]
pub unsafe extern "C" fn lseg_roc_auc(scores: *const f64, labels: *const u8, len: usize, auc: *mut f64) -> LsegStatus {
    guard(|| {
        let s = slice_arg(scores, len, "scores")?;
        let l: Vec<bool> = slice_arg(labels, len, "labels")?.iter().map(|&v| v != 0).collect();
        let curve = roc_auc(s, &l)?;
        *auc.as_mut().ok_or_else(|| null("auc"))? = curve.auc;
        Ok(())
    })
}
