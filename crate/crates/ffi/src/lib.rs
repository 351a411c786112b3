//! C interface to `plenoptic_bounds`.
//!
//! Scenes and images cross the boundary as opaque handles owned by the
//! caller, who releases them with the matching `pb_*_free`. Every fallible
//! function returns a [`PbStatus`]; on failure the message is available from
//! [`pb_last_error`] on the same thread. Panics never unwind into C.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use plenoptic_bounds::bounds::{hcr_functional, lambda_gaussian, lambda_poisson};
use plenoptic_bounds::io::{read_pfm, write_pfm};
use plenoptic_bounds::render::{render, RenderConfig};
use plenoptic_bounds::render_error::{estimate_lambda, LambdaObservation};
use plenoptic_bounds::scene::{parse_scene, ParameterPoint, SceneDescription};
use plenoptic_bounds::{Error, RadianceImage};

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PbStatus {
    Ok = 0,
    /// A required pointer was null or a string was not UTF-8.
    InvalidInput = 1,
    /// Document or config did not match its schema.
    Schema = 2,
    /// A domain invariant or argument check failed.
    Invalid = 3,
    /// Rendering or a numerical routine failed.
    Runtime = 4,
    Io = 5,
    /// Internal panic, caught at the boundary.
    Panic = 6,
}

/// Parsed scene.
pub struct PbScene(SceneDescription);

/// Radiance image.
pub struct PbImage(RadianceImage);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> PbStatus {
    match err.root() {
        Error::Schema { .. } | Error::Config { .. } => PbStatus::Schema,
        Error::Io(_) | Error::Pfm(_) | Error::Manifest(_) | Error::Csv(_) => PbStatus::Io,
        Error::Invariant(_)
        | Error::UnresolvedTarget(_)
        | Error::OutOfBounds { .. }
        | Error::DimensionMismatch { .. }
        | Error::InvalidArgument(_)
        | Error::Insufficient(_) => PbStatus::Invalid,
        _ => PbStatus::Runtime,
    }
}

struct Fail(PbStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(PbStatus::InvalidInput, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> PbStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => PbStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {msg}"));
            PbStatus::Panic
        }
    }
}

unsafe fn text<'a>(s: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if s.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|_| Fail(PbStatus::InvalidInput, format!("{what} is not UTF-8")))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn image<'a>(p: *const PbImage, what: &str) -> Result<&'a RadianceImage, Fail> {
    p.as_ref().map(|i| &i.0).ok_or_else(|| null(what))
}

/// Message of the last failure on this thread, or null. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn pb_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Parses and validates a JSON scene document.
///
/// # Safety
/// `document` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pb_scene_parse(document: *const c_char, out_scene: *mut *mut PbScene) -> PbStatus {
    guard(|| {
        let slot = out(out_scene, "out_scene")?;
        let scene = parse_scene(text(document, "document")?)?;
        *slot = Box::into_raw(Box::new(PbScene(scene)));
        Ok(())
    })
}

/// # Safety
/// `scene` must be null or a handle from [`pb_scene_parse`], freed once.
#[no_mangle]
pub unsafe extern "C" fn pb_scene_free(scene: *mut PbScene) {
    if !scene.is_null() {
        drop(Box::from_raw(scene));
    }
}

/// Number of θ components the scene's parameter space declares.
///
/// # Safety
/// `scene` must be a live handle; `out_dim` writable.
#[no_mangle]
pub unsafe extern "C" fn pb_scene_parameter_dim(scene: *const PbScene, out_dim: *mut usize) -> PbStatus {
    guard(|| {
        let s = scene.as_ref().ok_or_else(|| null("scene"))?;
        *out(out_dim, "out_dim")? = s.0.space()?.dim();
        Ok(())
    })
}

/// Binds θ and renders with `spp` samples per pixel from `seed`, tracing
/// paths of at most `depth` bounces (0 selects the default).
///
/// # Safety
/// `theta` must point to `theta_len` doubles; `out_image` writable.
#[no_mangle]
pub unsafe extern "C" fn pb_scene_render(
    scene: *const PbScene,
    theta: *const f64,
    theta_len: usize,
    spp: u32,
    seed: u64,
    depth: u32,
    out_image: *mut *mut PbImage,
) -> PbStatus {
    guard(|| {
        let slot = out(out_image, "out_image")?;
        let s = &scene.as_ref().ok_or_else(|| null("scene"))?.0;
        let t = slice(theta, theta_len, "theta")?;
        let point = ParameterPoint::new(t.to_vec(), s.space()?.clone())?;
        let bound = s.apply_parameters(&point)?;
        let mut cfg = RenderConfig::new(spp, seed);
        if depth > 0 {
            cfg = cfg.with_depth(depth);
        }
        let mut img = render(&bound, &cfg)?;
        img.meta.theta = t.to_vec();
        *slot = Box::into_raw(Box::new(PbImage(img)));
        Ok(())
    })
}

/// Image from row-major, channel-interleaved values.
///
/// # Safety
/// `data` must point to `width * height * channels` doubles.
#[no_mangle]
pub unsafe extern "C" fn pb_image_new(
    width: usize,
    height: usize,
    channels: usize,
    data: *const f64,
    out_image: *mut *mut PbImage,
) -> PbStatus {
    guard(|| {
        let slot = out(out_image, "out_image")?;
        let n = width
            .checked_mul(height)
            .and_then(|v| v.checked_mul(channels))
            .ok_or_else(|| Fail(PbStatus::Invalid, "image size overflows".into()))?;
        let values = slice(data, n, "data")?;
        *slot = Box::into_raw(Box::new(PbImage(RadianceImage::new(width, height, channels, values.to_vec())?)));
        Ok(())
    })
}

/// # Safety
/// `image` must be null or a live handle, freed once.
#[no_mangle]
pub unsafe extern "C" fn pb_image_free(image: *mut PbImage) {
    if !image.is_null() {
        drop(Box::from_raw(image));
    }
}

/// Writes width, height and channel count.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn pb_image_shape(
    image: *const PbImage,
    width: *mut usize,
    height: *mut usize,
    channels: *mut usize,
) -> PbStatus {
    guard(|| {
        let (w, h, c) = self::image(image, "image")?.shape();
        *out(width, "width")? = w;
        *out(height, "height")? = h;
        *out(channels, "channels")? = c;
        Ok(())
    })
}

/// Copies the image values into `buffer`, which must hold exactly
/// width·height·channels doubles.
///
/// # Safety
/// `buffer` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn pb_image_copy_data(image: *const PbImage, buffer: *mut f64, len: usize) -> PbStatus {
    guard(|| {
        let img = self::image(image, "image")?;
        if len != img.len() {
            return Err(Fail(
                PbStatus::Invalid,
                format!("buffer holds {len} values, image has {}", img.len()),
            ));
        }
        if buffer.is_null() {
            return Err(null("buffer"));
        }
        std::slice::from_raw_parts_mut(buffer, len).copy_from_slice(img.data());
        Ok(())
    })
}

/// # Safety
/// `path` must be a NUL-terminated UTF-8 string; `out_image` writable.
#[no_mangle]
pub unsafe extern "C" fn pb_pfm_read(path: *const c_char, out_image: *mut *mut PbImage) -> PbStatus {
    guard(|| {
        let slot = out(out_image, "out_image")?;
        let img = read_pfm(text(path, "path")?)?;
        *slot = Box::into_raw(Box::new(PbImage(img)));
        Ok(())
    })
}

/// Values must be representable in single precision.
///
/// # Safety
/// `image` must be live; `path` a NUL-terminated UTF-8 string.
#[no_mangle]
pub unsafe extern "C" fn pb_pfm_write(image: *const PbImage, path: *const c_char) -> PbStatus {
    guard(|| {
        write_pfm(self::image(image, "image")?, text(path, "path")?)?;
        Ok(())
    })
}

/// Poisson divergence exponent between two rate images.
///
/// # Safety
/// Handles must be live; `out_lambda` writable.
#[no_mangle]
pub unsafe extern "C" fn pb_lambda_poisson(a: *const PbImage, b: *const PbImage, out_lambda: *mut f64) -> PbStatus {
    guard(|| {
        *out(out_lambda, "out_lambda")? = lambda_poisson(image(a, "a")?, image(b, "b")?)?;
        Ok(())
    })
}

/// Gaussian divergence exponent with noise standard deviation `sigma`.
///
/// # Safety
/// Handles must be live; `out_lambda` writable.
#[no_mangle]
pub unsafe extern "C" fn pb_lambda_gaussian(
    a: *const PbImage,
    b: *const PbImage,
    sigma: f64,
    out_lambda: *mut f64,
) -> PbStatus {
    guard(|| {
        *out(out_lambda, "out_lambda")? = lambda_gaussian(image(a, "a")?, image(b, "b")?, sigma)?;
        Ok(())
    })
}

/// Δ² / (e^λ − 1); `+INFINITY` when λ = 0.
///
/// # Safety
/// `out_value` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pb_hcr_functional(lambda: f64, delta: f64, out_value: *mut f64) -> PbStatus {
    guard(|| {
        *out(out_value, "out_value")? = hcr_functional(lambda, delta)?.to_f64();
        Ok(())
    })
}

/// Least-squares fit of λ̃_i = λ + C/N_i with weights N_i. Writes the
/// clamped intercept, the slope, and whether clamping occurred.
///
/// # Safety
/// `spp` and `lambda_tilde` must point to `len` values; outputs writable.
#[no_mangle]
pub unsafe extern "C" fn pb_estimate_lambda(
    spp: *const u32,
    lambda_tilde: *const f64,
    len: usize,
    out_lambda: *mut f64,
    out_slope: *mut f64,
    out_clamped: *mut bool,
) -> PbStatus {
    guard(|| {
        let n = slice(spp, len, "spp")?;
        let l = slice(lambda_tilde, len, "lambda_tilde")?;
        let obs: Vec<LambdaObservation> = n
            .iter()
            .zip(l)
            .map(|(n, l)| LambdaObservation {
                spp: *n,
                lambda_tilde: *l,
            })
            .collect();
        let est = estimate_lambda(&obs, None)?;
        *out(out_lambda, "out_lambda")? = est.lambda;
        *out(out_slope, "out_slope")? = est.c;
        *out(out_clamped, "out_clamped")? = est.clamped;
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn null_pointers_are_reported() {
        let status = unsafe { pb_scene_parse(ptr::null(), ptr::null_mut()) };
        assert_eq!(status, PbStatus::InvalidInput);
        let msg = unsafe { CStr::from_ptr(pb_last_error()) };
        assert!(msg.to_str().unwrap().contains("null"));
    }

    #[test]
    fn functional_values() {
        let mut v = 0.0;
        assert_eq!(unsafe { pb_hcr_functional(0.0, 0.1, &mut v) }, PbStatus::Ok);
        assert!(v.is_infinite());
        assert_eq!(unsafe { pb_hcr_functional(-1.0, 0.1, &mut v) }, PbStatus::Runtime);
        assert_eq!(unsafe { pb_hcr_functional(1.0, 0.0, &mut v) }, PbStatus::Invalid);
    }
}
