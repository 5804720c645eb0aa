//! C ABI over a trained checkpoint and the covariance kernels.
//!
//! Every function returns a [`ShsStatus`]; on failure the message is kept per thread and read
//! back with [`shs_last_error`]. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use shearsplat::checkpoint::Checkpoint;
use shearsplat::linalg::{conditional_moments, congruence_shear, schur_tt, Mat4, Sym4};
use shearsplat::render::{quantize, render, Frame};
use shearsplat::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ShsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    BufferTooSmall = 3,
    Parse = 4,
    Io = 5,
    Config = 6,
    Degenerate = 7,
    Panic = 8,
}

/// A loaded checkpoint. Create with `shs_model_load` or `shs_model_load_bytes`, release with `shs_model_free`.
pub struct ShsModel {
    ck: Checkpoint,
}

/// One Gaussian conditioned on a time. `cov` is row-major 3×3.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ShsSlice {
    pub mean: [f64; 3],
    pub cov: [f64; 9],
    pub opacity: f64,
    pub rgb: [f64; 3],
    pub temporal_weight: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(ShsStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::InvalidParameter(_) => ShsStatus::InvalidArgument,
            Error::DegenerateTemporal(_) => ShsStatus::Degenerate,
            Error::Config(_) | Error::Diverged { .. } => ShsStatus::Config,
            Error::Parse { .. } => ShsStatus::Parse,
            Error::Io { .. } => ShsStatus::Io,
        };
        Failure(code, e.to_string())
    }
}

fn fail<T>(code: ShsStatus, msg: impl Into<String>) -> Result<T, Failure> {
    Err(Failure(code, msg.into()))
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> ShsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            ShsStatus::Ok
        }
        Ok(Err(Failure(code, msg))) => {
            set_last_error(msg);
            code
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("internal panic: {msg}"));
            ShsStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| Failure(ShsStatus::NullPointer, format!("{what} is null")))
}

unsafe fn slice_in<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Failure> {
    if p.is_null() {
        return fail(ShsStatus::NullPointer, format!("{what} is null"));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_out<'a, T>(p: *mut T, len: usize, what: &str) -> Result<&'a mut [T], Failure> {
    if p.is_null() {
        return fail(ShsStatus::NullPointer, format!("{what} is null"));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn write<T>(p: *mut T, v: T, what: &str) -> Result<(), Failure> {
    if p.is_null() {
        return fail(ShsStatus::NullPointer, format!("{what} is null"));
    }
    p.write(v);
    Ok(())
}

/// Message of the last failed call on this thread, or null after a success.
/// Valid until the next call into this library from the same thread.
#[no_mangle]
pub extern "C" fn shs_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn shs_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads a checkpoint file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn shs_model_load(path: *const c_char, out: *mut *mut ShsModel) -> ShsStatus {
    guard(|| {
        if path.is_null() {
            return fail(ShsStatus::NullPointer, "path is null");
        }
        let path = CStr::from_ptr(path)
            .to_str()
            .map_err(|_| Failure(ShsStatus::InvalidArgument, "path is not UTF-8".into()))?;
        let ck = Checkpoint::load(path)?;
        write(out, Box::into_raw(Box::new(ShsModel { ck })), "out")
    })
}

/// Loads a checkpoint from memory.
///
/// # Safety
/// `data` must point to `len` readable bytes; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn shs_model_load_bytes(data: *const u8, len: usize, out: *mut *mut ShsModel) -> ShsStatus {
    guard(|| {
        if data.is_null() {
            return fail(ShsStatus::NullPointer, "data is null");
        }
        let ck = Checkpoint::from_bytes(std::slice::from_raw_parts(data, len))?;
        write(out, Box::into_raw(Box::new(ShsModel { ck })), "out")
    })
}

/// Releases a model. Null is ignored.
///
/// # Safety
/// `model` must come from a load function and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn shs_model_free(model: *mut ShsModel) {
    if !model.is_null() {
        let _ = catch_unwind(AssertUnwindSafe(|| drop(Box::from_raw(model))));
    }
}

/// # Safety
/// `model` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn shs_model_gaussian_count(model: *const ShsModel, out: *mut usize) -> ShsStatus {
    guard(|| {
        let m = deref(model, "model")?;
        write(out, m.ck.state.model.gaussians.len(), "out")
    })
}

/// # Safety
/// `model` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn shs_model_camera_count(model: *const ShsModel, out: *mut usize) -> ShsStatus {
    guard(|| {
        let m = deref(model, "model")?;
        write(out, m.ck.rig.cameras.len(), "out")
    })
}

/// Image size of one of the checkpoint's cameras.
///
/// # Safety
/// `model` must be a live handle; `width` and `height` must be writable.
#[no_mangle]
pub unsafe extern "C" fn shs_model_image_size(
    model: *const ShsModel,
    camera: usize,
    width: *mut usize,
    height: *mut usize,
) -> ShsStatus {
    guard(|| {
        let m = deref(model, "model")?;
        let cam = camera_of(m, camera)?;
        write(width, cam.width, "width")?;
        write(height, cam.height, "height")
    })
}

fn camera_of(m: &ShsModel, camera: usize) -> Result<&shearsplat::render::Camera, Failure> {
    m.ck.rig.cameras.get(camera).ok_or_else(|| {
        Failure(
            ShsStatus::InvalidArgument,
            format!("camera {camera} out of range ({} cameras)", m.ck.rig.cameras.len()),
        )
    })
}

fn render_frame(m: &ShsModel, camera: usize, t: f64, len: usize) -> Result<Frame, Failure> {
    if !t.is_finite() {
        return fail(ShsStatus::InvalidArgument, "time is not finite");
    }
    let cam = camera_of(m, camera)?;
    let need = cam.width * cam.height * 3;
    if len < need {
        return fail(ShsStatus::BufferTooSmall, format!("buffer holds {len} values, frame needs {need}"));
    }
    Ok(render(&m.ck.state.model, cam, t)?)
}

/// Renders camera `camera` at time `t` into `rgb` as row-major RGB doubles in [0, 1].
///
/// # Safety
/// `model` must be a live handle; `rgb` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn shs_model_render(
    model: *const ShsModel,
    camera: usize,
    t: f64,
    rgb: *mut f64,
    len: usize,
) -> ShsStatus {
    guard(|| {
        let m = deref(model, "model")?;
        let out = slice_out(rgb, len, "rgb")?;
        let f = render_frame(m, camera, t, len)?;
        out[..f.data.len()].copy_from_slice(&f.data);
        Ok(())
    })
}

/// Like `shs_model_render` but quantized to bytes exactly as the PPM writer does.
///
/// # Safety
/// `model` must be a live handle; `rgb` must hold `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn shs_model_render_rgb8(
    model: *const ShsModel,
    camera: usize,
    t: f64,
    rgb: *mut u8,
    len: usize,
) -> ShsStatus {
    guard(|| {
        let m = deref(model, "model")?;
        let out = slice_out(rgb, len, "rgb")?;
        let f = render_frame(m, camera, t, len)?;
        for (o, v) in out.iter_mut().zip(&f.data) {
            *o = quantize(*v);
        }
        Ok(())
    })
}

/// Slices Gaussian `index` at `t`. `*visible` is 0 when it is culled, and `out` is then left untouched.
///
/// # Safety
/// `model` must be a live handle; `out` and `visible` must be writable.
#[no_mangle]
pub unsafe extern "C" fn shs_model_slice(
    model: *const ShsModel,
    index: usize,
    t: f64,
    out: *mut ShsSlice,
    visible: *mut u8,
) -> ShsStatus {
    guard(|| {
        let m = deref(model, "model")?;
        let n = m.ck.state.model.gaussians.len();
        if index >= n {
            return fail(ShsStatus::InvalidArgument, format!("Gaussian {index} out of range ({n} Gaussians)"));
        }
        if out.is_null() {
            return fail(ShsStatus::NullPointer, "out is null");
        }
        match m.ck.state.model.slice(index, t)? {
            Some(s) => {
                let c = s.cov3.0;
                let slice = ShsSlice {
                    mean: s.mean3,
                    cov: std::array::from_fn(|k| c[k / 3][k % 3]),
                    opacity: s.opacity,
                    rgb: s.rgb,
                    temporal_weight: s.temporal_weight,
                };
                write(visible, 1, "visible")?;
                out.write(slice);
                Ok(())
            }
            None => write(visible, 0, "visible"),
        }
    })
}

unsafe fn read_cov4(cov: *const f64) -> Result<Sym4, Failure> {
    let v = slice_in(cov, 16, "cov")?;
    if v.iter().any(|x| !x.is_finite()) {
        return fail(ShsStatus::InvalidArgument, "covariance has non-finite entries");
    }
    Ok(Sym4::from_upper(&Mat4(std::array::from_fn(|i| std::array::from_fn(|j| v[4 * i + j])))))
}

/// Temporal Schur complement of a 4×4 covariance (row-major; the upper triangle is read) into `out` (3×3 row-major).
///
/// # Safety
/// `cov` must hold 16 doubles and `out` 9.
#[no_mangle]
pub unsafe extern "C" fn shs_schur_tt(cov: *const f64, out: *mut f64) -> ShsStatus {
    guard(|| {
        let s = schur_tt(&read_cov4(cov)?)?;
        let o = slice_out(out, 9, "out")?;
        for k in 0..9 {
            o[k] = s.0[k / 3][k % 3];
        }
        Ok(())
    })
}

/// `V Σ Vᵀ` for the Galilean shear with velocity `v` (3 doubles), written as a full 4×4 row-major matrix.
///
/// # Safety
/// `cov` must hold 16 doubles, `v` 3 and `out` 16.
#[no_mangle]
pub unsafe extern "C" fn shs_congruence_shear(cov: *const f64, v: *const f64, out: *mut f64) -> ShsStatus {
    guard(|| {
        let c = read_cov4(cov)?;
        let v = slice_in(v, 3, "v")?;
        let m = congruence_shear(&c, [v[0], v[1], v[2]]).to_mat4();
        let o = slice_out(out, 16, "out")?;
        for k in 0..16 {
            o[k] = m.0[k / 4][k % 4];
        }
        Ok(())
    })
}

/// Mean (3) and covariance (3×3 row-major) of the 4D Gaussian `(mean, cov)` conditioned on time `t`.
///
/// # Safety
/// `mean` must hold 4 doubles, `cov` 16, `mean_out` 3 and `cov_out` 9.
#[no_mangle]
pub unsafe extern "C" fn shs_conditional_moments(
    mean: *const f64,
    cov: *const f64,
    t: f64,
    mean_out: *mut f64,
    cov_out: *mut f64,
) -> ShsStatus {
    guard(|| {
        let mu = slice_in(mean, 4, "mean")?;
        let c = read_cov4(cov)?;
        let (m, s) = conditional_moments([mu[0], mu[1], mu[2], mu[3]], &c, t)?;
        slice_out(mean_out, 3, "mean_out")?.copy_from_slice(&m);
        let o = slice_out(cov_out, 9, "cov_out")?;
        for k in 0..9 {
            o[k] = s.0[k / 3][k % 3];
        }
        Ok(())
    })
}
