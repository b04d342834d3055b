//! C ABI over the moldflux library.
//!
//! Objects cross the boundary as opaque handles created by `mf_case_*`,
//! `mf_offline_build` or `mf_artifact_load` and released with the matching `*_free`. Every fallible call
//! returns an [`MfStatus`]; on failure the message is kept per thread and can be
//! copied out with [`mf_last_error_message`]. Output arrays are caller-allocated:
//! pass the capacity and the call fails with `MF_BUFFER_TOO_SMALL` if it is short.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use moldflux::alifanov::CostMode;
use moldflux::benchmarks::{AnalyticalCase, IndustrialCase, InverseSetup};
use moldflux::rbf_param::{
    build_offline, load_artifact, online_solve, reconstruct_flux, save_artifact, OfflineArtifact, RbfBasis,
    Regularization,
};
use moldflux::{Error, StructuredGrid};

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MfStatus {
    MfOk = 0,
    MfInvalidArgument = 1,
    MfNullPointer = 2,
    MfBufferTooSmall = 3,
    MfOutOfDomain = 4,
    MfNoConvergence = 5,
    MfSingular = 6,
    MfNotSpd = 7,
    MfStagnation = 8,
    MfIntegrity = 9,
    MfUnsupportedVersion = 10,
    MfIo = 11,
    MfConfig = 12,
    MfPanic = 13,
}

/// An inverse problem: grid, physics, sensors, clean readings and true flux.
pub struct MfCase {
    setup: InverseSetup,
}

/// A precomputed parameterization for one case.
pub struct MfArtifact {
    inner: OfflineArtifact,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(e: &Error) -> MfStatus {
    match e {
        Error::InvalidArgument(_) | Error::ZeroReference { .. } => MfStatus::MfInvalidArgument,
        Error::OutOfDomain { .. } => MfStatus::MfOutOfDomain,
        Error::NotSpd(_) => MfStatus::MfNotSpd,
        Error::NoConvergence { .. } => MfStatus::MfNoConvergence,
        Error::Singular { .. } => MfStatus::MfSingular,
        Error::Stagnation => MfStatus::MfStagnation,
        Error::Integrity(_) => MfStatus::MfIntegrity,
        Error::UnsupportedVersion { .. } => MfStatus::MfUnsupportedVersion,
        Error::Io { .. } => MfStatus::MfIo,
        Error::Config(_) | Error::Csv(_) | Error::Json(_) => MfStatus::MfConfig,
    }
}

/// Failure raised inside the wrapper itself.
struct Fail(MfStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> MfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error(String::new());
            MfStatus::MfOk
        }
        Ok(Err(Fail(code, msg))) => {
            set_error(msg);
            code
        }
        Err(_) => {
            set_error("internal panic".into());
            MfStatus::MfPanic
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(MfStatus::MfNullPointer, format!("{what} is null"))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn copy_out(src: &[f64], dst: *mut f64, cap: usize) -> Result<(), Fail> {
    if cap < src.len() {
        return Err(Fail(
            MfStatus::MfBufferTooSmall,
            format!("buffer holds {cap} values, {} needed", src.len()),
        ));
    }
    if src.is_empty() {
        return Ok(());
    }
    if dst.is_null() {
        return Err(null("output buffer"));
    }
    std::ptr::copy_nonoverlapping(src.as_ptr(), dst, src.len());
    Ok(())
}

unsafe fn path(p: *const c_char) -> Result<PathBuf, Fail> {
    if p.is_null() {
        return Err(null("path"));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(MfStatus::MfInvalidArgument, "path is not UTF-8".into()))?;
    Ok(PathBuf::from(s))
}

unsafe fn put<T>(out: *mut *mut T, v: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("output handle"));
    }
    *out = Box::into_raw(Box::new(v));
    Ok(())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn mf_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies the calling thread's last error message into `buf` (NUL-terminated,
/// truncated to `cap`). Returns the full message length without the NUL.
///
/// # Safety
/// `buf` must be null or point to `cap` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn mf_last_error_message(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && cap > 0 {
            let n = msg.len().min(cap - 1);
            std::ptr::copy_nonoverlapping(msg.as_ptr().cast(), buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Analytical benchmark on an `nx × ny × nz` grid with `sensors_per_side²`
/// sensors on the plane `y = 0.2`.
///
/// # Safety
/// `out` must be a valid pointer to a handle slot.
#[no_mangle]
pub unsafe extern "C" fn mf_case_analytical(
    nx: usize,
    ny: usize,
    nz: usize,
    sensors_per_side: usize,
    out: *mut *mut MfCase,
) -> MfStatus {
    guard(|| {
        let setup = AnalyticalCase::default().inverse_setup([nx, ny, nz], sensors_per_side * sensors_per_side)?;
        put(out, MfCase { setup })
    })
}

/// Industrial benchmark at desk resolution, or full resolution when `full != 0`.
/// Readings are synthesized by a direct solve.
///
/// # Safety
/// `out` must be a valid pointer to a handle slot.
#[no_mangle]
pub unsafe extern "C" fn mf_case_industrial(full: i32, out: *mut *mut MfCase) -> MfStatus {
    guard(|| {
        let ind = if full != 0 { IndustrialCase::full() } else { IndustrialCase::desk() };
        put(out, MfCase { setup: ind.inverse_setup(None)? })
    })
}

/// # Safety
/// `case` must be null or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mf_case_free(case: *mut MfCase) {
    if !case.is_null() {
        drop(Box::from_raw(case));
    }
}

/// Number of faces on the hot face, i.e. the length of a flux vector.
///
/// # Safety
/// `case` must be null or a valid handle.
#[no_mangle]
pub unsafe extern "C" fn mf_case_flux_len(case: *const MfCase) -> usize {
    case.as_ref().map_or(0, |c| c.setup.case.flux_len())
}

/// # Safety
/// `case` must be null or a valid handle.
#[no_mangle]
pub unsafe extern "C" fn mf_case_sensor_count(case: *const MfCase) -> usize {
    case.as_ref().map_or(0, |c| c.setup.sensors.len())
}

/// Sensor coordinates as `x0 y0 z0 x1 ...` (`3 × count` values).
///
/// # Safety
/// `case` must be a valid handle; `xyz` must hold `cap` doubles.
#[no_mangle]
pub unsafe extern "C" fn mf_case_sensors(case: *const MfCase, xyz: *mut f64, cap: usize) -> MfStatus {
    guard(|| {
        let c = handle(case, "case")?;
        let flat: Vec<f64> = c.setup.sensors.iter().flatten().copied().collect();
        copy_out(&flat, xyz, cap)
    })
}

/// Noise-free sensor readings of the benchmark.
///
/// # Safety
/// `case` must be a valid handle; `out` must hold `cap` doubles.
#[no_mangle]
pub unsafe extern "C" fn mf_case_clean_readings(case: *const MfCase, out: *mut f64, cap: usize) -> MfStatus {
    guard(|| copy_out(&handle(case, "case")?.setup.clean, out, cap))
}

/// True flux of the benchmark on the hot-face faces.
///
/// # Safety
/// `case` must be a valid handle; `out` must hold `cap` doubles.
#[no_mangle]
pub unsafe extern "C" fn mf_case_reference_flux(case: *const MfCase, out: *mut f64, cap: usize) -> MfStatus {
    guard(|| copy_out(&handle(case, "case")?.setup.reference, out, cap))
}

/// Offline stage: one Gaussian basis function per sensor with shape `eta`.
///
/// # Safety
/// `case` must be a valid handle; `out` a valid handle slot.
#[no_mangle]
pub unsafe extern "C" fn mf_offline_build(case: *const MfCase, eta: f64, out: *mut *mut MfArtifact) -> MfStatus {
    guard(|| {
        let s = &handle(case, "case")?.setup;
        let basis = RbfBasis::from_sensors(s.case.grid(), &s.sensors, eta)?;
        put(out, MfArtifact { inner: build_offline(&s.case, &basis, &s.sensors)? })
    })
}

/// # Safety
/// `artifact` must be null or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mf_artifact_free(artifact: *mut MfArtifact) {
    if !artifact.is_null() {
        drop(Box::from_raw(artifact));
    }
}

/// # Safety
/// `artifact` must be a valid handle; `path` a NUL-terminated UTF-8 string.
#[no_mangle]
pub unsafe extern "C" fn mf_artifact_save(artifact: *const MfArtifact, path: *const c_char) -> MfStatus {
    guard(|| Ok(save_artifact(&handle(artifact, "artifact")?.inner, &self::path(path)?)?))
}

/// Loads an artifact, checking its format version and checksum.
///
/// # Safety
/// `path` must be a NUL-terminated UTF-8 string; `out` a valid handle slot.
#[no_mangle]
pub unsafe extern "C" fn mf_artifact_load(path: *const c_char, out: *mut *mut MfArtifact) -> MfStatus {
    guard(|| put(out, MfArtifact { inner: load_artifact(&self::path(path)?)? }))
}

/// `MF_INTEGRITY` unless the artifact was built for exactly this case.
///
/// # Safety
/// Both handles must be valid.
#[no_mangle]
pub unsafe extern "C" fn mf_artifact_verify(artifact: *const MfArtifact, case: *const MfCase) -> MfStatus {
    guard(|| {
        let a = &handle(artifact, "artifact")?.inner;
        let s = &handle(case, "case")?.setup;
        let basis = RbfBasis::from_sensors(s.case.grid(), &s.sensors, a.metadata.eta)?;
        Ok(a.verify_against(&s.case, &basis, &s.sensors)?)
    })
}

/// Number of basis functions (weights).
///
/// # Safety
/// `artifact` must be null or a valid handle.
#[no_mangle]
pub unsafe extern "C" fn mf_artifact_basis_len(artifact: *const MfArtifact) -> usize {
    artifact.as_ref().map_or(0, |a| a.inner.theta.ncols())
}

/// Number of hot-face faces of the artifact's grid.
///
/// # Safety
/// `artifact` must be null or a valid handle.
#[no_mangle]
pub unsafe extern "C" fn mf_artifact_flux_len(artifact: *const MfArtifact) -> usize {
    artifact.as_ref().map_or(0, |a| {
        let [nx, _, nz] = a.inner.metadata.cells;
        nx * nz
    })
}

/// Online stage: weights from `n` readings.
///
/// `tsvd_alpha == 0` selects the plain LU solve, otherwise truncated SVD keeping
/// that many singular values. `p_g > 0` adds the total-heat term with measured
/// total heat `g_hat`.
///
/// # Safety
/// `artifact` must be valid; `t_hat` must hold `n` doubles, `w_out` `w_cap` doubles.
#[no_mangle]
pub unsafe extern "C" fn mf_online_solve(
    artifact: *const MfArtifact,
    t_hat: *const f64,
    n: usize,
    tsvd_alpha: usize,
    p_g: f64,
    g_hat: f64,
    w_out: *mut f64,
    w_cap: usize,
) -> MfStatus {
    guard(|| {
        let a = &handle(artifact, "artifact")?.inner;
        let t_hat = slice(t_hat, n, "readings")?;
        let reg = match tsvd_alpha {
            0 => Regularization::Lu,
            k => Regularization::Tsvd(k),
        };
        let mode = if p_g > 0.0 { CostMode::J2 { p_g, g_hat } } else { CostMode::J1 };
        copy_out(&online_solve(a, t_hat, reg, &mode)?, w_out, w_cap)
    })
}

/// Flux on the hot-face faces for weights `w`.
///
/// # Safety
/// `artifact` must be valid; `w` must hold `m` doubles, `g_out` `g_cap` doubles.
#[no_mangle]
pub unsafe extern "C" fn mf_reconstruct(
    artifact: *const MfArtifact,
    w: *const f64,
    m: usize,
    g_out: *mut f64,
    g_cap: usize,
) -> MfStatus {
    guard(|| {
        let a = &handle(artifact, "artifact")?.inner;
        let meta = &a.metadata;
        let [nx, ny, nz] = meta.cells;
        let [lx, ly, lz] = meta.lengths;
        let grid = StructuredGrid::new(nx, ny, nz, lx, ly, lz)?;
        let g = reconstruct_flux(&a.basis(), &grid, slice(w, m, "weights")?)?;
        copy_out(&g, g_out, g_cap)
    })
}

/// Relative L² and L∞ error of `g` against the case's true flux.
///
/// # Safety
/// `case` must be valid; `g` must hold `n` doubles; `l2` and `linf` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mf_case_flux_error(
    case: *const MfCase,
    g: *const f64,
    n: usize,
    l2: *mut f64,
    linf: *mut f64,
) -> MfStatus {
    guard(|| {
        let s = &handle(case, "case")?.setup;
        let (a, b) = moldflux::benchmarks::relative_error_norms(s.case.grid(), slice(g, n, "flux")?, &s.reference)?;
        if l2.is_null() || linf.is_null() {
            return Err(null("error output"));
        }
        *l2 = a;
        *linf = b;
        Ok(())
    })
}
