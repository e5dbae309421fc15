//! C ABI over `noiseaware`.
//!
//! Every fallible function returns a [`NaStatus`]; on failure a description is
//! available from [`na_last_error_message`] on the same thread. Models are
//! opaque [`NaModel`] handles released with [`na_model_free`]. Masks are
//! row-major `uint8_t` arrays where any non-zero byte is foreground; images
//! and tensors are row-major `double` arrays.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;
use std::slice;

use noiseaware::image::{Image, Mask};
use noiseaware::metrics;
use noiseaware::models::{HeadMode, Model};
use noiseaware::ndgrad::Tensor;
use noiseaware::{checkpoint, Error, RngState};

/// Result codes. Values are stable.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NaStatus {
    Ok = 0,
    InvalidArgument = 1,
    InvalidState = 2,
    Io = 3,
    Parse = 4,
    Checksum = 5,
    Format = 6,
    Diverged = 7,
    OutputExists = 8,
    NullPointer = 9,
    Panic = 10,
}

/// Opaque model handle.
pub struct NaModel {
    model: Model,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior nul removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> NaStatus {
    match e {
        Error::InvalidArgument(_) => NaStatus::InvalidArgument,
        Error::InvalidState(_) => NaStatus::InvalidState,
        Error::Io { .. } => NaStatus::Io,
        Error::Parse { .. } => NaStatus::Parse,
        Error::Checksum { .. } => NaStatus::Checksum,
        Error::Format { .. } => NaStatus::Format,
        Error::Diverged { .. } => NaStatus::Diverged,
        Error::OutputExists(_) => NaStatus::OutputExists,
    }
}

struct Fail(NaStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(NaStatus::NullPointer, format!("{what} is null"))
}

fn bad(msg: impl Into<String>) -> Fail {
    Fail(NaStatus::InvalidArgument, msg.into())
}

/// Runs `f`, converting errors and panics into a status plus last-error message.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> NaStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            NaStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            NaStatus::Panic
        }
    }
}

/// # Safety
/// `p` must be null or valid for `len` reads.
unsafe fn input<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts(p, len))
}

/// # Safety
/// `p` must be null or valid for `len` writes.
unsafe fn output<'a, T>(p: *mut T, len: usize, what: &str) -> Result<&'a mut [T], Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts_mut(p, len))
}

unsafe fn mask(p: *const u8, height: usize, width: usize, what: &str) -> Result<Mask, Fail> {
    let data = input(p, height * width, what)?;
    Ok(Mask::new(height, width, data.iter().map(|&b| b != 0).collect())?)
}

unsafe fn image(p: *const f64, height: usize, width: usize, what: &str) -> Result<Image, Fail> {
    Ok(Image::new(height, width, input(p, height * width, what)?.to_vec())?)
}

unsafe fn write_scalar<T>(p: *mut T, v: T, what: &str) -> Result<(), Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    *p = v;
    Ok(())
}

/// Message describing the last failure on this thread, or null. The pointer
/// stays valid until the next call into this library from the same thread.
#[no_mangle]
pub extern "C" fn na_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static nul-terminated string.
#[no_mangle]
pub extern "C" fn na_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads a checkpoint. On success `*out` owns a new handle.
///
/// # Safety
/// `path` must be a nul-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn na_model_load(path: *const c_char, out: *mut *mut NaModel) -> NaStatus {
    guard(|| {
        if path.is_null() {
            return Err(null("path"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let path = CStr::from_ptr(path).to_str().map_err(|_| bad("path is not UTF-8"))?;
        let model = checkpoint::load(Path::new(path))?;
        *out = Box::into_raw(Box::new(NaModel { model }));
        Ok(())
    })
}

/// Releases a handle from [`na_model_load`]. Null is ignored.
///
/// # Safety
/// `model` must be null or a live handle not freed before.
#[no_mangle]
pub unsafe extern "C" fn na_model_free(model: *mut NaModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

unsafe fn model_ref<'a>(m: *const NaModel) -> Result<&'a Model, Fail> {
    m.as_ref().map(|h| &h.model).ok_or_else(|| null("model"))
}

/// Writes the expected input height and width.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn na_model_input_size(model: *const NaModel, height: *mut usize, width: *mut usize) -> NaStatus {
    guard(|| {
        let (h, w) = model_ref(model)?.config().input_size;
        write_scalar(height, h, "height")?;
        write_scalar(width, w, "width")
    })
}

/// Channels of the prediction: 2 logits for segmentation, 1 for reconstruction.
/// `*has_log_variance` is 1 for dual-head models.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn na_model_outputs(
    model: *const NaModel,
    channels: *mut usize,
    has_log_variance: *mut i32,
) -> NaStatus {
    guard(|| {
        let m = model_ref(model)?;
        write_scalar(channels, m.config().output_channels(), "channels")?;
        write_scalar(has_log_variance, (m.config().head_mode == HeadMode::Dual) as i32, "has_log_variance")
    })
}

fn check_len(len: usize, need: usize, what: &str) -> Result<(), Fail> {
    if len != need {
        return Err(bad(format!("{what} holds {len} values, expected {need}")));
    }
    Ok(())
}

/// Deterministic forward pass on `n` images of the model's input size.
/// `prediction` receives `n·C·H·W` values; `log_variance` receives `n·H·W`
/// values and may be null (it must be null for single-head models).
///
/// # Safety
/// Buffers must be valid for the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn na_model_forward(
    model: *const NaModel,
    input_ptr: *const f64,
    n: usize,
    prediction: *mut f64,
    prediction_len: usize,
    log_variance: *mut f64,
    log_variance_len: usize,
) -> NaStatus {
    guard(|| {
        let m = model_ref(model)?;
        let (h, w) = m.config().input_size;
        let x = Tensor::new(&[n, 1, h, w], input(input_ptr, n * h * w, "input")?.to_vec())?;
        let out = m.forward(&x, false, &mut RngState::new(0))?;
        check_len(prediction_len, out.prediction.numel(), "prediction")?;
        output(prediction, prediction_len, "prediction")?.copy_from_slice(out.prediction.data());
        match (out.log_variance, log_variance.is_null()) {
            (_, true) => {}
            (Some(s), false) => {
                check_len(log_variance_len, s.numel(), "log_variance")?;
                output(log_variance, log_variance_len, "log_variance")?.copy_from_slice(s.data());
            }
            (None, false) => {
                return Err(Fail(NaStatus::InvalidState, "single-head model has no log-variance output".into()))
            }
        }
        Ok(())
    })
}

/// `samples` dropout passes. `mean` receives `n·C·H·W` mean softmax
/// probabilities (or values); `variance` receives `n·H·W` unbiased variances.
///
/// # Safety
/// Buffers must be valid for the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn na_model_mc_dropout(
    model: *const NaModel,
    input_ptr: *const f64,
    n: usize,
    samples: usize,
    seed: u64,
    mean: *mut f64,
    mean_len: usize,
    variance: *mut f64,
    variance_len: usize,
) -> NaStatus {
    guard(|| {
        let m = model_ref(model)?;
        let (h, w) = m.config().input_size;
        let x = Tensor::new(&[n, 1, h, w], input(input_ptr, n * h * w, "input")?.to_vec())?;
        let r = m.forward_mc_dropout(&x, samples, &RngState::new(seed))?;
        check_len(mean_len, r.mean_prediction.numel(), "mean")?;
        check_len(variance_len, r.model_uncertainty.numel(), "variance")?;
        output(mean, mean_len, "mean")?.copy_from_slice(r.mean_prediction.data());
        output(variance, variance_len, "variance")?.copy_from_slice(r.model_uncertainty.data());
        Ok(())
    })
}

/// Dice coefficient of two masks.
///
/// # Safety
/// Masks must hold `height·width` bytes; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn na_dice(pred: *const u8, gt: *const u8, height: usize, width: usize, out: *mut f64) -> NaStatus {
    guard(|| {
        let v = metrics::dice(&mask(pred, height, width, "pred")?, &mask(gt, height, width, "gt")?)?;
        write_scalar(out, v, "out")
    })
}

/// Jaccard index of two masks.
///
/// # Safety
/// Masks must hold `height·width` bytes; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn na_jaccard(
    pred: *const u8,
    gt: *const u8,
    height: usize,
    width: usize,
    out: *mut f64,
) -> NaStatus {
    guard(|| {
        let v = metrics::jaccard(&mask(pred, height, width, "pred")?, &mask(gt, height, width, "gt")?)?;
        write_scalar(out, v, "out")
    })
}

/// Fraction of `patch × patch` blocks whose majority labels differ.
///
/// # Safety
/// Masks must hold `height·width` bytes; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn na_patch_err(
    pred: *const u8,
    gt: *const u8,
    height: usize,
    width: usize,
    patch: usize,
    out: *mut f64,
) -> NaStatus {
    guard(|| {
        let v = metrics::patch_err(&mask(pred, height, width, "pred")?, &mask(gt, height, width, "gt")?, patch)?;
        write_scalar(out, v, "out")
    })
}

/// Hit and mistake coefficients relative to the ground-truth area.
///
/// # Safety
/// Masks must hold `height·width` bytes; outputs must be valid.
#[no_mangle]
pub unsafe extern "C" fn na_hit_mistake(
    pred: *const u8,
    gt: *const u8,
    height: usize,
    width: usize,
    hc: *mut f64,
    mc: *mut f64,
) -> NaStatus {
    guard(|| {
        let (h, m) = metrics::hit_mistake(&mask(pred, height, width, "pred")?, &mask(gt, height, width, "gt")?)?;
        write_scalar(hc, h, "hc")?;
        write_scalar(mc, m, "mc")
    })
}

/// PSNR in dB; identical images give `+INFINITY`.
///
/// # Safety
/// Images must hold `height·width` values; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn na_psnr(
    a: *const f64,
    b: *const f64,
    height: usize,
    width: usize,
    max_val: f64,
    out: *mut f64,
) -> NaStatus {
    guard(|| {
        let v = metrics::psnr(&image(a, height, width, "a")?, &image(b, height, width, "b")?, max_val)?;
        write_scalar(out, v.as_f64(), "out")
    })
}

/// Mean variance over foreground, background, correct and incorrect pixels,
/// written to `means[0..4]` in that order; an empty partition yields NaN.
///
/// # Safety
/// Inputs must hold `height·width` elements; `means` must hold 4 doubles.
#[no_mangle]
pub unsafe extern "C" fn na_uncertainty_stats(
    variance: *const f64,
    gt: *const u8,
    pred: *const u8,
    height: usize,
    width: usize,
    means: *mut f64,
) -> NaStatus {
    guard(|| {
        let u = metrics::uncertainty_stats(
            &image(variance, height, width, "variance")?,
            &mask(gt, height, width, "gt")?,
            &mask(pred, height, width, "pred")?,
        )?;
        let out = output(means, 4, "means")?;
        for (o, v) in out.iter_mut().zip([
            u.mean_var_foreground,
            u.mean_var_background,
            u.mean_var_correct,
            u.mean_var_incorrect,
        ]) {
            *o = v.unwrap_or(f64::NAN);
        }
        Ok(())
    })
}
