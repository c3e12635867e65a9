//! C ABI for the stochastic Stokes solver.
//!
//! Handles are opaque pointers created and destroyed by the library;
//! functions return [`SsStatus`] codes and the last error message is kept in
//! thread-local storage, retrievable with [`ss_last_error`]. The generated
//! header lives at `include/sstokes.h`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::sync::Arc;

use sstokes::config::RunSettings;
use sstokes::error::Error;
use sstokes::experiments::{
    fit_rate, run_convergence_study, write_results, write_slopes, StudyKind,
};
use sstokes::mesh::Mesh;
use sstokes::noise::eval_b;

/// Status codes returned by every fallible function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SsStatus {
    Ok = 0,
    InvalidArgument = 1,
    OutOfDomain = 2,
    Config = 3,
    Singular = 4,
    NonFinite = 5,
    Io = 6,
    Parse = 7,
    Panic = 8,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_error(msg: &str) {
    let clean: String = msg.chars().filter(|&c| c != '\0').collect();
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(clean).unwrap_or_default();
    });
}

fn status_of(err: &Error) -> SsStatus {
    match err {
        Error::InvalidArgument(_) => SsStatus::InvalidArgument,
        Error::OutOfDomain { .. } => SsStatus::OutOfDomain,
        Error::NonNested { .. } => SsStatus::InvalidArgument,
        Error::Singular(_) => SsStatus::Singular,
        Error::NonFinite(_) => SsStatus::NonFinite,
        Error::Config(_) => SsStatus::Config,
        Error::Parse { .. } => SsStatus::Parse,
        Error::Io(_) => SsStatus::Io,
    }
}

fn guard(f: impl FnOnce() -> SsStatus + std::panic::UnwindSafe) -> SsStatus {
    match catch_unwind(f) {
        Ok(status) => status,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic in sstokes".to_string());
            set_error(&msg);
            SsStatus::Panic
        }
    }
}

/// Opaque mesh handle.
pub struct SsMesh {
    inner: Arc<Mesh>,
}

/// Library version as a static C string.
#[no_mangle]
pub extern "C" fn ss_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Copies the last error message into `buf` (truncated to `cap - 1` bytes)
/// and returns the full message length.
///
/// # Safety
/// `buf` must point to `cap` writable bytes, or be null (then only the
/// length is returned).
#[no_mangle]
pub unsafe extern "C" fn ss_last_error(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|slot| {
        let msg = slot.borrow();
        let bytes = msg.as_bytes_with_nul();
        if !buf.is_null() && cap > 0 {
            let n = bytes.len().min(cap - 1);
            std::ptr::copy_nonoverlapping(bytes.as_ptr() as *const c_char, buf, n);
            *buf.add(n) = 0;
        }
        bytes.len() - 1
    })
}

/// Builds the uniform triangulation with `n` cells per side.
///
/// # Safety
/// `out` must be a valid pointer to an `SsMesh*` slot.
#[no_mangle]
pub unsafe extern "C" fn ss_mesh_new(n: usize, out: *mut *mut SsMesh) -> SsStatus {
    guard(AssertUnwindSafe(|| {
        if out.is_null() {
            set_error("out pointer is null");
            return SsStatus::InvalidArgument;
        }
        match Mesh::uniform(n) {
            Ok(mesh) => {
                *out = Box::into_raw(Box::new(SsMesh {
                    inner: Arc::new(mesh),
                }));
                SsStatus::Ok
            }
            Err(e) => {
                set_error(&e.to_string());
                status_of(&e)
            }
        }
    }))
}

/// Releases a mesh handle. Null is ignored.
///
/// # Safety
/// `mesh` must have been produced by [`ss_mesh_new`] and not freed before.
#[no_mangle]
pub unsafe extern "C" fn ss_mesh_free(mesh: *mut SsMesh) {
    if !mesh.is_null() {
        drop(Box::from_raw(mesh));
    }
}

/// Reports vertex count, triangle count, and the mesh size `h = 1/n`.
///
/// # Safety
/// All pointers must be valid or null (null outputs are skipped).
#[no_mangle]
pub unsafe extern "C" fn ss_mesh_info(
    mesh: *const SsMesh,
    out_vertices: *mut usize,
    out_triangles: *mut usize,
    out_h: *mut f64,
) -> SsStatus {
    guard(AssertUnwindSafe(|| {
        let Some(m) = mesh.as_ref() else {
            set_error("mesh handle is null");
            return SsStatus::InvalidArgument;
        };
        if !out_vertices.is_null() {
            *out_vertices = m.inner.num_vertices();
        }
        if !out_triangles.is_null() {
            *out_triangles = m.inner.num_triangles();
        }
        if !out_h.is_null() {
            *out_h = m.inner.h();
        }
        SsStatus::Ok
    }))
}

/// Locates `(x, y)` on the mesh: writes the containing triangle index and the
/// three barycentric coordinates.
///
/// # Safety
/// `out_bary` must point to three writable doubles; other pointers must be
/// valid.
#[no_mangle]
pub unsafe extern "C" fn ss_mesh_locate(
    mesh: *const SsMesh,
    x: f64,
    y: f64,
    out_triangle: *mut usize,
    out_bary: *mut f64,
) -> SsStatus {
    guard(AssertUnwindSafe(|| {
        let Some(m) = mesh.as_ref() else {
            set_error("mesh handle is null");
            return SsStatus::InvalidArgument;
        };
        if out_triangle.is_null() || out_bary.is_null() {
            set_error("output pointer is null");
            return SsStatus::InvalidArgument;
        }
        match m.inner.locate([x, y]) {
            Ok((t, lam)) => {
                *out_triangle = t;
                for (i, l) in lam.iter().enumerate() {
                    *out_bary.add(i) = *l;
                }
                SsStatus::Ok
            }
            Err(e) => {
                set_error(&e.to_string());
                status_of(&e)
            }
        }
    }))
}

/// Evaluates the pointwise diffusion matrix `B(u)`; writes 4 doubles in
/// row-major order.
///
/// # Safety
/// `out` must point to four writable doubles.
#[no_mangle]
pub unsafe extern "C" fn ss_eval_b(u1: f64, u2: f64, out: *mut f64) -> SsStatus {
    guard(AssertUnwindSafe(|| {
        if out.is_null() {
            set_error("out pointer is null");
            return SsStatus::InvalidArgument;
        }
        let b = eval_b([u1, u2]);
        *out.add(0) = b[0][0];
        *out.add(1) = b[0][1];
        *out.add(2) = b[1][0];
        *out.add(3) = b[1][1];
        SsStatus::Ok
    }))
}

/// Least-squares slope of `log2(errors)` against `log2(scales)`.
///
/// # Safety
/// `errors` and `scales` must point to `len` doubles; outputs must be valid.
#[no_mangle]
pub unsafe extern "C" fn ss_fit_rate(
    errors: *const f64,
    scales: *const f64,
    len: usize,
    out_slope: *mut f64,
    out_residual: *mut f64,
) -> SsStatus {
    guard(AssertUnwindSafe(|| {
        if errors.is_null() || scales.is_null() || out_slope.is_null() || out_residual.is_null() {
            set_error("null pointer");
            return SsStatus::InvalidArgument;
        }
        let errors = std::slice::from_raw_parts(errors, len);
        let scales = std::slice::from_raw_parts(scales, len);
        match fit_rate(errors, scales) {
            Ok((slope, residual)) => {
                *out_slope = slope;
                *out_residual = residual;
                SsStatus::Ok
            }
            Err(e) => {
                set_error(&e.to_string());
                status_of(&e)
            }
        }
    }))
}

/// Study axis selector for [`ss_run_study`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SsStudyKind {
    Time = 0,
    Space = 1,
}

/// Runs a convergence study configured by flat `key=value` text (same keys
/// as the CLI config file), writes the results/samples/slopes files into the
/// configured output directory, and reports the fitted slopes.
///
/// Either output pointer may be null. Slopes are NaN when fewer than three
/// levels were run.
///
/// # Safety
/// `config_text` must be a valid NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn ss_run_study(
    kind: SsStudyKind,
    config_text: *const c_char,
    out_velocity_slope: *mut f64,
    out_pressure_slope: *mut f64,
) -> SsStatus {
    guard(AssertUnwindSafe(|| {
        if config_text.is_null() {
            set_error("config text is null");
            return SsStatus::InvalidArgument;
        }
        let text = match CStr::from_ptr(config_text).to_str() {
            Ok(t) => t,
            Err(_) => {
                set_error("config text is not valid UTF-8");
                return SsStatus::InvalidArgument;
            }
        };
        let study = match kind {
            SsStudyKind::Time => StudyKind::Time,
            SsStudyKind::Space => StudyKind::Space,
        };
        let mut settings = match study {
            StudyKind::Time => RunSettings::time_defaults(),
            StudyKind::Space => RunSettings::space_defaults(),
        };
        for (i, raw) in text.lines().enumerate() {
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let Some((key, value)) = trimmed.split_once('=') else {
                set_error(&format!("line {}: expected key=value", i + 1));
                return SsStatus::Parse;
            };
            if let Err(e) = settings.apply(key.trim(), value.trim(), i + 1) {
                set_error(&e.to_string());
                return status_of(&e);
            }
        }
        let run = || -> Result<(f64, f64), Error> {
            let cfg = settings.to_experiment(study, false)?;
            let table = run_convergence_study(&cfg)?;
            let tag = cfg.tag();
            let out: PathBuf = cfg.out_dir.clone();
            write_results(&out.join(format!("results_{tag}.csv")), &table.rows)?;
            write_slopes(&out.join(format!("slopes_{tag}.csv")), &table.slopes)?;
            let find = |prefix: &str| {
                table
                    .slopes
                    .iter()
                    .find(|s| s.quantity.starts_with(prefix))
                    .map_or(f64::NAN, |s| s.slope)
            };
            Ok((find("velocity"), find("pressure_integral")))
        };
        match run() {
            Ok((vu, vp)) => {
                if !out_velocity_slope.is_null() {
                    *out_velocity_slope = vu;
                }
                if !out_pressure_slope.is_null() {
                    *out_pressure_slope = vp;
                }
                SsStatus::Ok
            }
            Err(e) => {
                set_error(&e.to_string());
                status_of(&e)
            }
        }
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn version_is_nul_terminated() {
        let v = unsafe { CStr::from_ptr(ss_version()) };
        assert!(!v.to_str().unwrap().is_empty());
    }

    #[test]
    fn mesh_lifecycle_and_locate() {
        let mut handle: *mut SsMesh = std::ptr::null_mut();
        assert_eq!(unsafe { ss_mesh_new(4, &mut handle) }, SsStatus::Ok);
        let (mut nv, mut nt, mut h) = (0usize, 0usize, 0f64);
        assert_eq!(
            unsafe { ss_mesh_info(handle, &mut nv, &mut nt, &mut h) },
            SsStatus::Ok
        );
        assert_eq!((nv, nt), (25, 32));
        assert_eq!(h, 0.25);
        let mut tri = 0usize;
        let mut bary = [0.0f64; 3];
        assert_eq!(
            unsafe { ss_mesh_locate(handle, 0.1, 0.05, &mut tri, bary.as_mut_ptr()) },
            SsStatus::Ok
        );
        assert!((bary.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        // out-of-domain sets an error message
        assert_eq!(
            unsafe { ss_mesh_locate(handle, 2.0, 0.0, &mut tri, bary.as_mut_ptr()) },
            SsStatus::OutOfDomain
        );
        let mut buf = [0 as c_char; 128];
        let len = unsafe { ss_last_error(buf.as_mut_ptr(), buf.len()) };
        assert!(len > 0);
        unsafe { ss_mesh_free(handle) };
    }

    #[test]
    fn zero_subdivisions_is_invalid() {
        let mut handle: *mut SsMesh = std::ptr::null_mut();
        assert_eq!(
            unsafe { ss_mesh_new(0, &mut handle) },
            SsStatus::InvalidArgument
        );
        assert!(handle.is_null());
    }

    #[test]
    fn eval_b_through_the_c_surface() {
        let mut out = [0.0f64; 4];
        assert_eq!(unsafe { ss_eval_b(0.0, 0.0, out.as_mut_ptr()) }, SsStatus::Ok);
        assert_eq!(out, [0.5, 0.5, 0.5, 0.5]);
    }

    #[test]
    fn fit_rate_through_the_c_surface() {
        let errors = [1.0, 0.25, 0.0625];
        let scales = [1.0, 0.5, 0.25];
        let (mut slope, mut residual) = (0.0f64, -1.0f64);
        assert_eq!(
            unsafe {
                ss_fit_rate(
                    errors.as_ptr(),
                    scales.as_ptr(),
                    3,
                    &mut slope,
                    &mut residual,
                )
            },
            SsStatus::Ok
        );
        assert_eq!(slope, 2.0);
        assert_eq!(residual, 0.0);
        // invalid input surfaces as a status code plus message
        let bad = [1.0, -1.0, 0.5];
        assert_eq!(
            unsafe { ss_fit_rate(bad.as_ptr(), scales.as_ptr(), 3, &mut slope, &mut residual) },
            SsStatus::InvalidArgument
        );
    }

    #[test]
    fn study_runs_from_config_text() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = format!(
            "n_list=2,4,8\nref_n=16\ntau_list=2^-3\nref_tau=2^-3\nsamples=2\nL=4\nout_dir={}\n",
            dir.path().display()
        );
        let c_cfg = CString::new(cfg).unwrap();
        let (mut vu, mut vp) = (f64::NAN, f64::NAN);
        let status = unsafe {
            ss_run_study(SsStudyKind::Space, c_cfg.as_ptr(), &mut vu, &mut vp)
        };
        assert_eq!(status, SsStatus::Ok);
        assert!(vu.is_finite() && vp.is_finite());
        assert!(dir.path().join("results_space_I.csv").exists());
        assert!(dir.path().join("slopes_space_I.csv").exists());
        // unknown keys are rejected through the same path as the CLI
        let bad = CString::new("nope=1\n").unwrap();
        let status = unsafe {
            ss_run_study(SsStudyKind::Space, bad.as_ptr(), &mut vu, &mut vp)
        };
        assert_eq!(status, SsStatus::Parse);
    }
}
