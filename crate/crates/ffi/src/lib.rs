//! C interface to `tnp-core`.
//!
//! Images and configurations cross the boundary as opaque handles created
//! and released by this library. Every fallible call returns a [`TnpStatus`];
//! on failure [`tnp_last_error`] describes the cause. Pixel buffers are
//! planar `double` arrays, `data[c*h*w + row*w + col]`, with values in
//! `[0, 1]`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use tnp_core::cli::RunConfig;
use tnp_core::image::ImageGrid;
use tnp_core::io::{read_png, write_png};
use tnp_core::metrics::{MetricReport, PairRole};
use tnp_core::tnp::{self as core_tnp, putt_reconstruct};
use tnp_core::TnpError;

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TnpStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument = 1,
    /// Shapes, lengths or values that the call cannot accept.
    InvalidArgument = 2,
    /// Configuration text that does not parse or validate.
    Config = 3,
    /// File or image codec failure.
    Io = 4,
    /// Divergence or a non-finite value during optimization.
    Numeric = 5,
    /// A Rust panic was caught at the boundary.
    Panic = 6,
}

/// Image handle.
pub struct TnpImage(ImageGrid);

/// Run configuration handle: the `fit` and `purify` sections of a `tnp`
/// TOML file, with the master seed applied.
pub struct TnpConfig(RunConfig);

/// Quality of an image against a reference. `psnr` is `INFINITY` for
/// identical images.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TnpMetrics {
    pub nrmse: f64,
    pub ssim: f64,
    pub psnr: f64,
}

struct Failure(TnpStatus, String);

impl From<TnpError> for Failure {
    fn from(e: TnpError) -> Self {
        let status = match e {
            TnpError::Config(_) => TnpStatus::Config,
            TnpError::Io(_) | TnpError::Codec(_) => TnpStatus::Io,
            TnpError::Divergence { .. } | TnpError::NonFinite(_) => TnpStatus::Numeric,
            _ => TnpStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let text = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = text);
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> TnpStatus {
    let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|payload| {
        let msg = payload
            .downcast_ref::<&str>()
            .map(|s| s.to_string())
            .or_else(|| payload.downcast_ref::<String>().cloned())
            .unwrap_or_else(|| "panic".into());
        Err(Failure(TnpStatus::Panic, msg))
    });
    match outcome {
        Ok(()) => {
            set_error("");
            TnpStatus::Ok
        }
        Err(Failure(status, msg)) => {
            set_error(&msg);
            status
        }
    }
}

fn null(name: &str) -> Failure {
    Failure(TnpStatus::NullArgument, format!("`{name}` is null"))
}

unsafe fn borrow<'a, T>(p: *const T, name: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(name))
}

unsafe fn c_str<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(name));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(TnpStatus::InvalidArgument, format!("`{name}` is not UTF-8")))
}

unsafe fn emit<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("out"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

/// Library version, a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn tnp_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, empty after a success.
/// The pointer stays valid until the next call into the library on the
/// same thread.
#[no_mangle]
pub extern "C" fn tnp_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Copies `len` planar values into a new image.
///
/// # Safety
/// `data` must point to `len` readable doubles and `out` to a writable
/// handle slot.
#[no_mangle]
pub unsafe extern "C" fn tnp_image_new(
    height: usize,
    width: usize,
    channels: usize,
    data: *const f64,
    len: usize,
    out: *mut *mut TnpImage,
) -> TnpStatus {
    guard(|| {
        if data.is_null() {
            return Err(null("data"));
        }
        let values = std::slice::from_raw_parts(data, len).to_vec();
        let img = ImageGrid::new(height, width, channels, values)?;
        emit(out, TnpImage(img))
    })
}

/// Reads an 8-bit PNG.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a writable handle slot.
#[no_mangle]
pub unsafe extern "C" fn tnp_image_read_png(path: *const c_char, out: *mut *mut TnpImage) -> TnpStatus {
    guard(|| {
        let path = PathBuf::from(c_str(path, "path")?);
        emit(out, TnpImage(read_png(&path)?))
    })
}

/// Writes an image as an 8-bit PNG, replacing the file atomically.
///
/// # Safety
/// `img` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn tnp_image_write_png(img: *const TnpImage, path: *const c_char) -> TnpStatus {
    guard(|| {
        let img = borrow(img, "img")?;
        let path = PathBuf::from(c_str(path, "path")?);
        Ok(write_png(&path, &img.0)?)
    })
}

/// Image dimensions. Any of the output pointers may be null.
///
/// # Safety
/// `img` must be a live handle; non-null outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn tnp_image_shape(
    img: *const TnpImage,
    height: *mut usize,
    width: *mut usize,
    channels: *mut usize,
) -> TnpStatus {
    guard(|| {
        let img = &borrow(img, "img")?.0;
        for (dst, v) in [(height, img.height()), (width, img.width()), (channels, img.channels())] {
            if !dst.is_null() {
                *dst = v;
            }
        }
        Ok(())
    })
}

/// Copies the planar pixel values out; `len` must equal
/// `height * width * channels`.
///
/// # Safety
/// `img` must be a live handle and `out` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn tnp_image_copy_data(img: *const TnpImage, out: *mut f64, len: usize) -> TnpStatus {
    guard(|| {
        let data = borrow(img, "img")?.0.data();
        if out.is_null() {
            return Err(null("out"));
        }
        if len != data.len() {
            return Err(Failure(
                TnpStatus::InvalidArgument,
                format!("buffer holds {len} values, image has {}", data.len()),
            ));
        }
        ptr::copy_nonoverlapping(data.as_ptr(), out, len);
        Ok(())
    })
}

/// Releases an image; null is ignored.
///
/// # Safety
/// `img` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tnp_image_free(img: *mut TnpImage) {
    if !img.is_null() {
        drop(Box::from_raw(img));
    }
}

/// Default configuration.
///
/// # Safety
/// `out` must be a writable handle slot.
#[no_mangle]
pub unsafe extern "C" fn tnp_config_new(out: *mut *mut TnpConfig) -> TnpStatus {
    guard(|| emit(out, TnpConfig(RunConfig::default().resolve()?)))
}

/// Configuration from the text of a `tnp` TOML file. Unknown keys and
/// invalid values are rejected.
///
/// # Safety
/// `text` must be a NUL-terminated string and `out` a writable handle slot.
#[no_mangle]
pub unsafe extern "C" fn tnp_config_from_toml(text: *const c_char, out: *mut *mut TnpConfig) -> TnpStatus {
    guard(|| {
        let cfg = RunConfig::from_toml(c_str(text, "text")?)?.resolve()?;
        emit(out, TnpConfig(cfg))
    })
}

/// Replaces the master seed of every section.
///
/// # Safety
/// `cfg` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn tnp_config_set_seed(cfg: *mut TnpConfig, seed: u64) -> TnpStatus {
    guard(|| {
        let cfg = cfg.as_mut().ok_or_else(|| null("cfg"))?;
        let mut next = cfg.0.clone();
        next.seed = seed;
        cfg.0 = next.resolve()?;
        Ok(())
    })
}

/// Releases a configuration; null is ignored.
///
/// # Safety
/// `cfg` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tnp_config_free(cfg: *mut TnpConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Coarse-to-fine reconstruction under the `fit` section, at the input's
/// size and clamped to `[0, 1]`.
///
/// # Safety
/// `img` and `cfg` must be live handles and `out` a writable handle slot.
#[no_mangle]
pub unsafe extern "C" fn tnp_fit(img: *const TnpImage, cfg: *const TnpConfig, out: *mut *mut TnpImage) -> TnpStatus {
    guard(|| {
        let img = &borrow(img, "img")?.0;
        let cfg = &borrow(cfg, "cfg")?.0;
        let (rec, _, _) = putt_reconstruct(img, &cfg.fit)?;
        emit(out, TnpImage(rec))
    })
}

/// Purification under the `purify` section, at the input's size and
/// clamped to `[0, 1]`.
///
/// # Safety
/// `img` and `cfg` must be live handles and `out` a writable handle slot.
#[no_mangle]
pub unsafe extern "C" fn tnp_purify(img: *const TnpImage, cfg: *const TnpConfig, out: *mut *mut TnpImage) -> TnpStatus {
    guard(|| {
        let img = &borrow(img, "img")?.0;
        let cfg = &borrow(cfg, "cfg")?.0;
        emit(out, TnpImage(core_tnp::tnp_purify(img, &cfg.purify)?.image))
    })
}

/// NRMSE, SSIM and PSNR of `other` against `reference`.
///
/// # Safety
/// Both images must be live handles and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tnp_metrics(
    reference: *const TnpImage,
    other: *const TnpImage,
    out: *mut TnpMetrics,
) -> TnpStatus {
    guard(|| {
        let a = &borrow(reference, "reference")?.0;
        let b = &borrow(other, "other")?.0;
        if out.is_null() {
            return Err(null("out"));
        }
        let r = MetricReport::compute(PairRole::Cln, a, b)?;
        *out = TnpMetrics {
            nrmse: r.nrmse,
            ssim: r.ssim,
            psnr: r.psnr,
        };
        Ok(())
    })
}
