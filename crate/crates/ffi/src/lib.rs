//! C ABI over `specrecon`.
//!
//! Objects cross the boundary as opaque handles created by `sr_*_new` /
//! `sr_*_from_*` style calls and released with the matching `sr_*_free`.
//! Every fallible call returns an [`SrStatus`]; on failure the message is
//! available from [`sr_last_error`] on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use specrecon::geometry::Projector;
use specrecon::image::SpectralImageStack;
use specrecon::io::{self, RunConfig};
use specrecon::metrics::{blur_fraction, psnr, BlurParams, Psnr, Roi};
use specrecon::phantom::{make_phantom, simulate_counts, SpectralSinogram};
use specrecon::recon::{reconstruct, Algorithm};
use specrecon::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SrStatus {
    Ok = 0,
    InvalidArgument = 1,
    Config = 2,
    Numeric = 3,
    Io = 4,
    Integrity = 5,
    Shape = 6,
    NullPointer = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SrAlgorithm {
    Sirt = 0,
    Tvm = 1,
    N2nPost = 2,
    S2s = 3,
}

impl From<SrAlgorithm> for Algorithm {
    fn from(a: SrAlgorithm) -> Self {
        match a {
            SrAlgorithm::Sirt => Algorithm::Sirt,
            SrAlgorithm::Tvm => Algorithm::Tvm,
            SrAlgorithm::N2nPost => Algorithm::N2nPost,
            SrAlgorithm::S2s => Algorithm::S2s,
        }
    }
}

/// Run configuration.
pub struct SrConfig(RunConfig);

/// Per-bin square images.
pub struct SrStack(SpectralImageStack);

/// Simulated scan: sinograms plus ground truth.
pub struct SrSimulation {
    sinogram: SpectralSinogram,
    truth: SpectralImageStack,
    projector: Projector,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> SrStatus {
    match e {
        Error::Shape { .. } => SrStatus::Shape,
        Error::InvalidArgument(_) => SrStatus::InvalidArgument,
        Error::Config { .. } | Error::ConfigParse(_) => SrStatus::Config,
        Error::Numeric(_) => SrStatus::Numeric,
        Error::Integrity(_) => SrStatus::Integrity,
        Error::Io { .. } | Error::Csv(_) | Error::Png(_) => SrStatus::Io,
    }
}

enum Fail {
    Null(&'static str),
    Lib(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Lib(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> SrStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SrStatus::Ok,
        Ok(Err(Fail::Null(what))) => {
            set_error(format!("null pointer passed as `{what}`"));
            SrStatus::NullPointer
        }
        Ok(Err(Fail::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(p) => {
            let msg = p.downcast_ref::<&str>().map(|s| s.to_string()).or_else(|| p.downcast_ref::<String>().cloned());
            set_error(format!("internal panic: {}", msg.unwrap_or_default()));
            SrStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or(Fail::Null(what))
}

unsafe fn c_str<'a>(p: *const c_char, what: &'static str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Fail::Lib(Error::InvalidArgument(format!("`{what}` is not valid UTF-8"))))
}

unsafe fn put<T>(out: *mut *mut T, value: T, what: &'static str) -> Result<(), Fail> {
    if out.is_null() {
        return Err(Fail::Null(what));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

/// Message of the last failed call on this thread, or NULL. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn sr_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn sr_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Release a string returned by this library.
///
/// # Safety
/// `s` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn sr_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Built-in default configuration.
#[no_mangle]
pub extern "C" fn sr_config_default() -> *mut SrConfig {
    Box::into_raw(Box::new(SrConfig(RunConfig::default())))
}

/// Parse and validate a JSON run config.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn sr_config_from_json(json: *const c_char, out: *mut *mut SrConfig) -> SrStatus {
    guard(|| {
        let text = c_str(json, "json")?;
        put(out, SrConfig(RunConfig::from_json(text)?), "out")
    })
}

/// Canonical JSON of `config`; free with `sr_string_free`.
///
/// # Safety
/// `config` must be a live handle; `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn sr_config_to_json(config: *const SrConfig, out: *mut *mut c_char) -> SrStatus {
    guard(|| {
        let c = deref(config, "config")?;
        if out.is_null() {
            return Err(Fail::Null("out"));
        }
        *out = CString::new(c.0.canonical_json()).expect("json has no NUL").into_raw();
        Ok(())
    })
}

/// # Safety
/// `config` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn sr_config_set_seed(config: *mut SrConfig, seed: u64) -> SrStatus {
    guard(|| {
        config.as_mut().ok_or(Fail::Null("config"))?.0.seed = seed;
        Ok(())
    })
}

/// # Safety
/// `config` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn sr_config_free(config: *mut SrConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

/// Build the phantom and simulate its noisy spectral scan in memory.
///
/// # Safety
/// `config` must be a live handle; `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn sr_simulate(config: *const SrConfig, out: *mut *mut SrSimulation) -> SrStatus {
    guard(|| {
        let c = &deref(config, "config")?.0;
        c.validate()?;
        let geom = c.geometry.build()?;
        let projector = Projector::new(&geom)?;
        let bins = c.noise.bins();
        let phantom = make_phantom(&c.phantom, &geom, bins.num_bins())?;
        let sinogram = simulate_counts(&phantom, &projector, &bins, c.noise.mode, c.seeds().noise)?;
        put(out, SrSimulation { sinogram, truth: phantom.truth, projector }, "out")
    })
}

/// # Safety
/// `sim` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn sr_simulation_free(sim: *mut SrSimulation) {
    if !sim.is_null() {
        drop(Box::from_raw(sim));
    }
}

/// Copy of the ground-truth images.
///
/// # Safety
/// `sim` must be a live handle; `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn sr_simulation_truth(sim: *const SrSimulation, out: *mut *mut SrStack) -> SrStatus {
    guard(|| put(out, SrStack(deref(sim, "sim")?.truth.clone()), "out"))
}

/// Views and detectors per sinogram bin.
///
/// # Safety
/// `sim` must be a live handle; `views` and `detectors` writable.
#[no_mangle]
pub unsafe extern "C" fn sr_simulation_sinogram_shape(sim: *const SrSimulation, views: *mut usize, detectors: *mut usize) -> SrStatus {
    guard(|| {
        let s = deref(sim, "sim")?;
        if views.is_null() || detectors.is_null() {
            return Err(Fail::Null("views/detectors"));
        }
        *views = s.sinogram.views;
        *detectors = s.sinogram.detectors;
        Ok(())
    })
}

/// Copy sinogram bin `bin` (views * detectors values) into `dst`.
///
/// # Safety
/// `dst` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn sr_simulation_copy_sinogram(sim: *const SrSimulation, bin: usize, dst: *mut f64, len: usize) -> SrStatus {
    guard(|| {
        let s = deref(sim, "sim")?;
        copy_out(s.sinogram.bins.get(bin).map(|v| v.as_slice()), bin, dst, len)
    })
}

unsafe fn copy_out(src: Option<&[f64]>, bin: usize, dst: *mut f64, len: usize) -> Result<(), Fail> {
    let src = src.ok_or_else(|| Fail::Lib(Error::InvalidArgument(format!("bin {bin} out of range"))))?;
    if dst.is_null() {
        return Err(Fail::Null("dst"));
    }
    if len != src.len() {
        return Err(Fail::Lib(Error::InvalidArgument(format!("buffer holds {len} values, bin has {}", src.len()))));
    }
    ptr::copy_nonoverlapping(src.as_ptr(), dst, len);
    Ok(())
}

/// Reconstruct a simulation with `algorithm`, using the recon and train
/// blocks (and derived seeds) of `config`.
///
/// # Safety
/// `config` and `sim` must be live handles; `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn sr_reconstruct(config: *const SrConfig, sim: *const SrSimulation, algorithm: SrAlgorithm, out: *mut *mut SrStack) -> SrStatus {
    guard(|| {
        let c = &deref(config, "config")?.0;
        let s = deref(sim, "sim")?;
        let rec = reconstruct(algorithm.into(), &s.sinogram, &s.projector, &c.recon, &c.train_config())?;
        put(out, SrStack(rec.images), "out")
    })
}

/// # Safety
/// `stack` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn sr_stack_num_bins(stack: *const SrStack) -> usize {
    stack.as_ref().map_or(0, |s| s.0.num_bins())
}

/// Pixels per side.
///
/// # Safety
/// `stack` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn sr_stack_size(stack: *const SrStack) -> usize {
    stack.as_ref().map_or(0, |s| s.0.size)
}

/// Copy bin `bin` (size * size values, row-major) into `dst`.
///
/// # Safety
/// `dst` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn sr_stack_copy_bin(stack: *const SrStack, bin: usize, dst: *mut f64, len: usize) -> SrStatus {
    guard(|| {
        let s = deref(stack, "stack")?;
        copy_out(s.0.bins.get(bin).map(|v| v.as_slice()), bin, dst, len)
    })
}

/// # Safety
/// `stack` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn sr_stack_free(stack: *mut SrStack) {
    if !stack.is_null() {
        drop(Box::from_raw(stack));
    }
}

/// PSNR in dB of `a` against `b` (`len` values each); identical inputs give +inf.
///
/// # Safety
/// `a` and `b` must hold `len` doubles; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sr_psnr(a: *const f64, b: *const f64, len: usize, data_range: f64, out: *mut f64) -> SrStatus {
    guard(|| {
        if a.is_null() || b.is_null() || out.is_null() {
            return Err(Fail::Null("a/b/out"));
        }
        let (a, b) = (std::slice::from_raw_parts(a, len), std::slice::from_raw_parts(b, len));
        *out = match psnr(a, b, data_range)? {
            Psnr::Finite(v) => v,
            Psnr::Infinite => f64::INFINITY,
        };
        Ok(())
    })
}

/// Blur fraction of a whole `size x size` image with default parameters.
/// `*defined` is false when the image has no edges.
///
/// # Safety
/// `image` must hold `size * size` doubles; `out` and `defined` writable.
#[no_mangle]
pub unsafe extern "C" fn sr_blur_fraction(image: *const f64, size: usize, out: *mut f64, defined: *mut bool) -> SrStatus {
    guard(|| {
        if image.is_null() || out.is_null() || defined.is_null() {
            return Err(Fail::Null("image/out/defined"));
        }
        let img = std::slice::from_raw_parts(image, size * size);
        let v = blur_fraction(img, size, Roi::full(size), &BlurParams::default())?;
        *defined = v.is_some();
        *out = v.unwrap_or(f64::NAN);
        Ok(())
    })
}

/// File-based simulate command: sinograms, truth and manifest under `out_dir`.
///
/// # Safety
/// `config` must be a live handle; `out_dir` a NUL-terminated path.
#[no_mangle]
pub unsafe extern "C" fn sr_cmd_simulate(config: *const SrConfig, out_dir: *const c_char) -> SrStatus {
    guard(|| {
        let c = &deref(config, "config")?.0;
        io::cmd_simulate(c, &PathBuf::from(c_str(out_dir, "out_dir")?))?;
        Ok(())
    })
}

/// File-based reconstruct command reading `input_dir` and writing `out_dir`.
///
/// # Safety
/// `config` must be a live handle; the paths NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn sr_cmd_reconstruct(config: *const SrConfig, algorithm: SrAlgorithm, input_dir: *const c_char, out_dir: *const c_char) -> SrStatus {
    guard(|| {
        let mut c = deref(config, "config")?.0.clone();
        c.recon.algorithm = algorithm.into();
        let input = PathBuf::from(c_str(input_dir, "input_dir")?);
        io::cmd_reconstruct(&c, &input, &PathBuf::from(c_str(out_dir, "out_dir")?))?;
        Ok(())
    })
}
