//! C interface to the iterproj solver.
//!
//! Configurations and spectrum reports are opaque heap handles created and
//! destroyed by this library; every fallible call returns a status code and
//! records a message retrievable with `iterproj_last_error`. The build
//! script generates `include/iterproj.h` from these declarations.

use std::cell::RefCell;
use std::ffi::CStr;
use std::panic::{catch_unwind, AssertUnwindSafe};

use libc::{c_char, size_t};

use iterproj::config::RunConfig;
use iterproj::driver::{cmd_run, cmd_spectrum, SpectrumArtifacts};
use iterproj::Error;

/// Outcome of a fallible call.
#[repr(C)]
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum IterprojStatus {
    /// The call succeeded.
    Ok = 0,
    /// Rejected configuration: unknown key, unparsable value, or a value
    /// outside its validity range.
    ConfigError = 1,
    /// A solver failed: momentum or potential solve stalled, or a matrix
    /// factorization broke down.
    SolverError = 2,
    /// A runtime guarantee was violated (for example the energy check in
    /// abort mode).
    AssertionError = 3,
    /// The API was misused: null handle, non-UTF-8 string, or an argument
    /// outside its domain.
    UsageError = 4,
}

thread_local! {
    static LAST_ERROR: RefCell<Vec<u8>> = const { RefCell::new(Vec::new()) };
}

fn set_last_error(msg: &str) {
    LAST_ERROR.with(|slot| {
        let mut bytes = msg.as_bytes().to_vec();
        for b in &mut bytes {
            if *b == 0 {
                *b = b' ';
            }
        }
        *slot.borrow_mut() = bytes;
    });
}

fn status_of(e: &Error) -> IterprojStatus {
    match e {
        Error::Config(_) => IterprojStatus::ConfigError,
        Error::AssertionFailed(_) => IterprojStatus::AssertionError,
        _ => IterprojStatus::SolverError,
    }
}

fn fail(e: &Error) -> IterprojStatus {
    set_last_error(&e.to_string());
    status_of(e)
}

fn usage(msg: &str) -> IterprojStatus {
    set_last_error(msg);
    IterprojStatus::UsageError
}

/// Reads a required C string argument; records a usage error when it is
/// null or not UTF-8.
unsafe fn read_str<'a>(ptr: *const c_char, what: &str) -> Result<&'a str, IterprojStatus> {
    if ptr.is_null() {
        return Err(usage(&format!("{what} must not be null")));
    }
    CStr::from_ptr(ptr)
        .to_str()
        .map_err(|_| usage(&format!("{what} must be valid UTF-8")))
}

/// Copies the message of the most recent error on this thread into `buf`
/// (NUL-terminated, truncated to `cap` bytes) and returns the full message
/// length in bytes, excluding the terminator. Call with a null `buf` or
/// zero `cap` to query the length alone.
#[no_mangle]
pub unsafe extern "C" fn iterproj_last_error(buf: *mut c_char, cap: size_t) -> size_t {
    LAST_ERROR.with(|slot| {
        let msg = slot.borrow();
        if !buf.is_null() && cap > 0 {
            let n = msg.len().min(cap - 1);
            std::ptr::copy_nonoverlapping(msg.as_ptr(), buf as *mut u8, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn iterproj_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Opaque run configuration.
pub struct IterprojConfig {
    inner: RunConfig,
}

/// Creates a configuration holding the built-in defaults. Free with
/// `iterproj_config_free`.
#[no_mangle]
pub extern "C" fn iterproj_config_new() -> *mut IterprojConfig {
    Box::into_raw(Box::new(IterprojConfig {
        inner: RunConfig::default(),
    }))
}

/// Parses a configuration from `key = value` text (`#` comments). Returns
/// null and records the error when the text is rejected.
#[no_mangle]
pub unsafe extern "C" fn iterproj_config_parse(text: *const c_char) -> *mut IterprojConfig {
    let Ok(text) = read_str(text, "config text") else {
        return std::ptr::null_mut();
    };
    match RunConfig::from_str(text) {
        Ok(inner) => Box::into_raw(Box::new(IterprojConfig { inner })),
        Err(e) => {
            fail(&e);
            std::ptr::null_mut()
        }
    }
}

/// Applies one `key`, `value` pair to the configuration.
#[no_mangle]
pub unsafe extern "C" fn iterproj_config_set(
    cfg: *mut IterprojConfig,
    key: *const c_char,
    value: *const c_char,
) -> IterprojStatus {
    let Some(cfg) = cfg.as_mut() else {
        return usage("config handle must not be null");
    };
    let (key, value) = match (read_str(key, "key"), read_str(value, "value")) {
        (Ok(k), Ok(v)) => (k, v),
        (Err(s), _) | (_, Err(s)) => return s,
    };
    match cfg.inner.set(key, value) {
        Ok(()) => IterprojStatus::Ok,
        Err(e) => fail(&e),
    }
}

/// Serializes the configuration into `buf` (NUL-terminated, truncated to
/// `cap` bytes) and returns the full text length in bytes, excluding the
/// terminator. A null handle returns 0.
#[no_mangle]
pub unsafe extern "C" fn iterproj_config_serialize(
    cfg: *const IterprojConfig,
    buf: *mut c_char,
    cap: size_t,
) -> size_t {
    let Some(cfg) = cfg.as_ref() else {
        usage("config handle must not be null");
        return 0;
    };
    let text = cfg.inner.serialize();
    if !buf.is_null() && cap > 0 {
        let n = text.len().min(cap - 1);
        std::ptr::copy_nonoverlapping(text.as_ptr(), buf as *mut u8, n);
        *buf.add(n) = 0;
    }
    text.len()
}

/// Releases a configuration handle. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn iterproj_config_free(cfg: *mut IterprojConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Runs the configured simulation and writes its artifacts (per-step CSV,
/// per-pass CSV, summary CSV, final-field VTK) into the configured output
/// directory.
#[no_mangle]
pub unsafe extern "C" fn iterproj_run(cfg: *const IterprojConfig) -> IterprojStatus {
    let Some(cfg) = cfg.as_ref() else {
        return usage("config handle must not be null");
    };
    let outcome = catch_unwind(AssertUnwindSafe(|| cmd_run(&cfg.inner)));
    match outcome {
        Ok(Ok(_)) => IterprojStatus::Ok,
        Ok(Err(e)) => fail(&e),
        Err(_) => {
            set_last_error("internal panic during the run");
            IterprojStatus::SolverError
        }
    }
}

/// Opaque spectrum report: dense eigenvalues of the pressure-iteration
/// operator plus predicted and measured contraction rates.
pub struct IterprojSpectrum {
    inner: SpectrumArtifacts,
}

/// Computes the iteration spectrum for the configured problem and mesh.
/// The measured rate is fitted over passes `fit_from..fit_to` of an actual
/// solve. Returns null and records the error on failure (for example when
/// the pressure space exceeds the dense-analysis limit).
#[no_mangle]
pub unsafe extern "C" fn iterproj_spectrum_compute(
    cfg: *const IterprojConfig,
    fit_from: size_t,
    fit_to: size_t,
) -> *mut IterprojSpectrum {
    let Some(cfg) = cfg.as_ref() else {
        usage("config handle must not be null");
        return std::ptr::null_mut();
    };
    let outcome = catch_unwind(AssertUnwindSafe(|| {
        cmd_spectrum(&cfg.inner, (fit_from, fit_to))
    }));
    match outcome {
        Ok(Ok(inner)) => Box::into_raw(Box::new(IterprojSpectrum { inner })),
        Ok(Err(e)) => {
            fail(&e);
            std::ptr::null_mut()
        }
        Err(_) => {
            set_last_error("internal panic during spectrum analysis");
            std::ptr::null_mut()
        }
    }
}

/// Number of eigenvalues in the report; 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn iterproj_spectrum_eigenvalue_count(
    spectrum: *const IterprojSpectrum,
) -> size_t {
    spectrum
        .as_ref()
        .map_or(0, |s| s.inner.report.eigenvalues.len())
}

/// Copies up to `cap` ascending eigenvalues into `out` and returns the
/// number copied.
#[no_mangle]
pub unsafe extern "C" fn iterproj_spectrum_eigenvalues(
    spectrum: *const IterprojSpectrum,
    out: *mut f64,
    cap: size_t,
) -> size_t {
    let Some(s) = spectrum.as_ref() else {
        usage("spectrum handle must not be null");
        return 0;
    };
    if out.is_null() {
        usage("output buffer must not be null");
        return 0;
    }
    let n = s.inner.report.eigenvalues.len().min(cap);
    std::ptr::copy_nonoverlapping(s.inner.report.eigenvalues.as_ptr(), out, n);
    n
}

/// Largest eigenvalue of the iteration operator; NaN for a null handle.
#[no_mangle]
pub unsafe extern "C" fn iterproj_spectrum_lambda_max(
    spectrum: *const IterprojSpectrum,
) -> f64 {
    spectrum.as_ref().map_or(f64::NAN, |s| s.inner.report.lambda_max)
}

/// Closed-form bound `max(alpha/1.5, rho/nu)` on the largest eigenvalue.
#[no_mangle]
pub unsafe extern "C" fn iterproj_spectrum_bound(spectrum: *const IterprojSpectrum) -> f64 {
    spectrum.as_ref().map_or(f64::NAN, |s| s.inner.report.bound)
}

/// Predicted asymptotic contraction rate of the pressure iteration.
#[no_mangle]
pub unsafe extern "C" fn iterproj_spectrum_predicted_rate(
    spectrum: *const IterprojSpectrum,
) -> f64 {
    spectrum.as_ref().map_or(f64::NAN, |s| s.inner.predicted_rate)
}

/// Contraction rate fitted from an actual solve on the same mesh.
#[no_mangle]
pub unsafe extern "C" fn iterproj_spectrum_measured_rate(
    spectrum: *const IterprojSpectrum,
) -> f64 {
    spectrum.as_ref().map_or(f64::NAN, |s| s.inner.measured_rate)
}

/// True when the update parameters guarantee convergence
/// (`max(alpha/1.5, rho/nu) < 2`); false for a null handle.
#[no_mangle]
pub unsafe extern "C" fn iterproj_spectrum_guaranteed(
    spectrum: *const IterprojSpectrum,
) -> bool {
    spectrum.as_ref().is_some_and(|s| s.inner.guaranteed)
}

/// Releases a spectrum handle. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn iterproj_spectrum_free(spectrum: *mut IterprojSpectrum) {
    if !spectrum.is_null() {
        drop(Box::from_raw(spectrum));
    }
}

/// Amplification constant of the implicit pressure update for one Fourier
/// mode with squared frequency `xi_sq`.
#[no_mangle]
pub extern "C" fn iterproj_normal_mode_constant(
    alpha: f64,
    rho: f64,
    nu: f64,
    k: f64,
    xi_sq: f64,
) -> f64 {
    iterproj::modes::normal_mode_constant(alpha, rho, nu, k, xi_sq)
}

/// Amplification constant of the divergence-only update in terms of
/// `z = k nu xi_sq` and the ratio `rho/nu`.
#[no_mangle]
pub extern "C" fn iterproj_uzawa_constant(z: f64, rho_over_nu: f64) -> f64 {
    iterproj::modes::uzawa_constant(z, rho_over_nu)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::ffi::CString;

    fn cstr(s: &str) -> CString {
        CString::new(s).unwrap()
    }

    #[test]
    fn config_roundtrip_through_the_c_surface() {
        unsafe {
            let cfg = iterproj_config_new();
            assert!(!cfg.is_null());
            assert_eq!(
                iterproj_config_set(cfg, cstr("n").as_ptr(), cstr("3").as_ptr()),
                IterprojStatus::Ok
            );
            assert_eq!(
                iterproj_config_set(cfg, cstr("eps").as_ptr(), cstr("1e-4").as_ptr()),
                IterprojStatus::Ok
            );
            let needed = iterproj_config_serialize(cfg, std::ptr::null_mut(), 0);
            assert!(needed > 0);
            let mut buf = vec![0u8; needed + 1];
            let written =
                iterproj_config_serialize(cfg, buf.as_mut_ptr() as *mut c_char, buf.len());
            assert_eq!(written, needed);
            let text = CStr::from_bytes_until_nul(&buf).unwrap().to_str().unwrap();
            assert!(text.contains("n = 3"));
            assert!(text.contains("eps = 0.0001"));

            let reparsed = iterproj_config_parse(cstr(text).as_ptr());
            assert!(!reparsed.is_null());
            iterproj_config_free(reparsed);
            iterproj_config_free(cfg);
        }
    }

    #[test]
    fn bad_keys_report_config_errors_with_messages() {
        unsafe {
            let cfg = iterproj_config_new();
            let status =
                iterproj_config_set(cfg, cstr("bogus").as_ptr(), cstr("1").as_ptr());
            assert_eq!(status, IterprojStatus::ConfigError);
            let needed = iterproj_last_error(std::ptr::null_mut(), 0);
            assert!(needed > 0);
            let mut buf = vec![0u8; needed + 1];
            iterproj_last_error(buf.as_mut_ptr() as *mut c_char, buf.len());
            let msg = CStr::from_bytes_until_nul(&buf).unwrap().to_str().unwrap();
            assert!(msg.contains("bogus"), "message was '{msg}'");

            // Truncation keeps the terminator.
            let mut tiny = [0u8; 4];
            iterproj_last_error(tiny.as_mut_ptr() as *mut c_char, tiny.len());
            assert_eq!(tiny[3], 0);
            iterproj_config_free(cfg);
        }
    }

    #[test]
    fn null_handles_are_usage_errors_not_crashes() {
        unsafe {
            assert_eq!(
                iterproj_config_set(
                    std::ptr::null_mut(),
                    cstr("n").as_ptr(),
                    cstr("2").as_ptr()
                ),
                IterprojStatus::UsageError
            );
            assert_eq!(iterproj_run(std::ptr::null()), IterprojStatus::UsageError);
            assert!(iterproj_spectrum_lambda_max(std::ptr::null()).is_nan());
            assert_eq!(iterproj_spectrum_eigenvalue_count(std::ptr::null()), 0);
            iterproj_config_free(std::ptr::null_mut());
            iterproj_spectrum_free(std::ptr::null_mut());
        }
    }

    #[test]
    fn run_writes_artifacts() {
        unsafe {
            let out = std::env::temp_dir().join(format!("ffi-run-{}", std::process::id()));
            let cfg = iterproj_config_new();
            for (k, v) in [
                ("n", "2"),
                ("k", "0.01"),
                ("t_final", "0.03"),
                ("eps", "1e-2"),
                ("iter_max", "300"),
                ("out", out.to_str().unwrap()),
            ] {
                assert_eq!(
                    iterproj_config_set(cfg, cstr(k).as_ptr(), cstr(v).as_ptr()),
                    IterprojStatus::Ok
                );
            }
            assert_eq!(iterproj_run(cfg), IterprojStatus::Ok);
            assert!(out.join("steps.csv").exists());
            assert!(out.join("final.vtk").exists());
            iterproj_config_free(cfg);
            std::fs::remove_dir_all(&out).ok();
        }
    }

    #[test]
    fn spectrum_handle_exposes_the_report() {
        unsafe {
            let cfg = iterproj_config_new();
            iterproj_config_set(cfg, cstr("n").as_ptr(), cstr("2").as_ptr());
            let spec = iterproj_spectrum_compute(cfg, 5, 12);
            assert!(!spec.is_null());
            let count = iterproj_spectrum_eigenvalue_count(spec);
            assert!(count > 0);
            let mut evs = vec![0.0f64; count];
            assert_eq!(iterproj_spectrum_eigenvalues(spec, evs.as_mut_ptr(), count), count);
            assert!(evs.iter().all(|&l| l > 0.0));
            let lmax = iterproj_spectrum_lambda_max(spec);
            assert!((lmax - evs.last().unwrap()).abs() < 1e-12);
            assert!(iterproj_spectrum_bound(spec) >= lmax - 1e-10);
            assert!(iterproj_spectrum_guaranteed(spec));
            let pred = iterproj_spectrum_predicted_rate(spec);
            let meas = iterproj_spectrum_measured_rate(spec);
            assert!(pred > 0.0 && pred < 1.0);
            assert!(meas > 0.0 && meas < 1.0);
            iterproj_spectrum_free(spec);
            iterproj_config_free(cfg);
        }
    }

    #[test]
    fn pure_constants_match_the_library() {
        let c = iterproj_normal_mode_constant(1.5, 1.0, 1.0, 1e-3, 1e4);
        assert_eq!(c, 0.0);
        let cu = iterproj_uzawa_constant(0.0, 2.0);
        assert!((cu - 1.0).abs() < 1e-15);
    }

    #[test]
    fn version_is_a_nul_terminated_semver() {
        unsafe {
            let v = CStr::from_ptr(iterproj_version()).to_str().unwrap();
            assert_eq!(v, env!("CARGO_PKG_VERSION"));
        }
    }
}
