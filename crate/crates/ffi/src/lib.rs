//! C ABI for the shrinkage-estimation toolkit: opaque handles, integer
//! error codes, and a JSON bridge for fitted rules, so other languages can
//! bind without knowing the Rust types.
//!
//! Conventions:
//! - every function returns a [`SureshrinkStatus`]; outputs go through
//!   pointers and are written only on `Ok`;
//! - handles are created and released by this library only
//!   (`*_new` / `*_free` pairs); passing a handle after `free` is undefined;
//! - strings returned by the library are released with
//!   [`sureshrink_string_free`];
//! - all entry points catch panics and report them as `Panic` instead of
//!   unwinding across the boundary.

use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use sureshrink::estimators::{
    fit_bg, fit_constrained_pwl, fit_jz_npmle, fit_linear_sure, fit_monotone_pwc, fit_tv_pwc,
    NpmleConfig, PwcFitConfig, PwlFitConfig, TauSelector,
};
use sureshrink::rules::{Rule, SeparableRule};
use sureshrink::{Error, FitReport, SampleSet};

/// Status codes returned by every entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SureshrinkStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    ConfigError = 3,
    SolverError = 4,
    /// The fit finished but the solver flagged non-convergence; the handle
    /// is still valid.
    NotConverged = 5,
    Utf8Error = 6,
    JsonError = 7,
    Panic = 8,
}

/// Estimation methods selectable through the ABI.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SureshrinkMethod {
    LinearSure = 0,
    PwlUpperBound = 1,
    PwlPlugin = 2,
    PwlCv = 3,
    PwcMonotone = 4,
    PwcTv = 5,
    Bg = 6,
    JzNpmle = 7,
}

/// Opaque sample handle.
pub struct SureshrinkSample {
    inner: SampleSet,
}

/// Opaque fitted-rule handle.
pub struct SureshrinkRule {
    report: FitReport,
}

fn status_of(err: &Error) -> SureshrinkStatus {
    match err {
        Error::InvalidInput(_) | Error::LengthMismatch { .. } | Error::NonFinite(_) => {
            SureshrinkStatus::InvalidInput
        }
        Error::Config(_) => SureshrinkStatus::ConfigError,
        Error::Solver(_) => SureshrinkStatus::SolverError,
        Error::Json(_) => SureshrinkStatus::JsonError,
        _ => SureshrinkStatus::InvalidInput,
    }
}

fn guarded<F: FnOnce() -> SureshrinkStatus>(f: F) -> SureshrinkStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => SureshrinkStatus::Panic,
    }
}

/// Library version as a static C string.
#[no_mangle]
pub extern "C" fn sureshrink_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Create a sample from `len` observations with known noise scale `sigma`.
///
/// # Safety
/// `values` must point to `len` readable doubles and `out` to a writable
/// handle slot.
#[no_mangle]
pub unsafe extern "C" fn sureshrink_sample_new(
    values: *const f64,
    len: usize,
    sigma: f64,
    out: *mut *mut SureshrinkSample,
) -> SureshrinkStatus {
    if values.is_null() || out.is_null() {
        return SureshrinkStatus::NullPointer;
    }
    let slice = std::slice::from_raw_parts(values, len);
    guarded(|| match SampleSet::new(slice.to_vec(), sigma) {
        Ok(inner) => {
            *out = Box::into_raw(Box::new(SureshrinkSample { inner }));
            SureshrinkStatus::Ok
        }
        Err(e) => status_of(&e),
    })
}

/// Release a sample handle. Null is a no-op.
///
/// # Safety
/// `sample` must be a live handle from [`sureshrink_sample_new`] or null.
#[no_mangle]
pub unsafe extern "C" fn sureshrink_sample_free(sample: *mut SureshrinkSample) {
    if !sample.is_null() {
        drop(Box::from_raw(sample));
    }
}

/// Fit a rule to the sample. On `Ok` or `NotConverged` a rule handle is
/// written to `out`.
///
/// # Safety
/// `sample` must be a live sample handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sureshrink_fit(
    sample: *const SureshrinkSample,
    method: SureshrinkMethod,
    seed: u64,
    out: *mut *mut SureshrinkRule,
) -> SureshrinkStatus {
    if sample.is_null() || out.is_null() {
        return SureshrinkStatus::NullPointer;
    }
    let sample = &(*sample).inner;
    guarded(|| {
        let fitted = match method {
            SureshrinkMethod::LinearSure => fit_linear_sure(sample),
            SureshrinkMethod::PwlUpperBound => fit_constrained_pwl(
                sample,
                &PwlFitConfig { tau_selector: TauSelector::UpperBound, seed, ..Default::default() },
            ),
            SureshrinkMethod::PwlPlugin => fit_constrained_pwl(
                sample,
                &PwlFitConfig { tau_selector: TauSelector::Plugin, seed, ..Default::default() },
            ),
            SureshrinkMethod::PwlCv => fit_constrained_pwl(
                sample,
                &PwlFitConfig {
                    tau_selector: TauSelector::Cv { k: 5, grid_size: 20 },
                    seed,
                    ..Default::default()
                },
            ),
            SureshrinkMethod::PwcMonotone => fit_monotone_pwc(sample, &PwcFitConfig::default()),
            SureshrinkMethod::PwcTv => fit_tv_pwc(sample, &PwcFitConfig::default()),
            SureshrinkMethod::Bg => fit_bg(sample, None),
            SureshrinkMethod::JzNpmle => fit_jz_npmle(sample, &NpmleConfig::default(), seed),
        };
        match fitted {
            Ok(report) => {
                let converged = report.diagnostics.converged;
                *out = Box::into_raw(Box::new(SureshrinkRule { report }));
                if converged {
                    SureshrinkStatus::Ok
                } else {
                    SureshrinkStatus::NotConverged
                }
            }
            Err(e) => status_of(&e),
        }
    })
}

/// Release a rule handle. Null is a no-op.
///
/// # Safety
/// `rule` must be a live handle from [`sureshrink_fit`] /
/// [`sureshrink_rule_from_json`] or null.
#[no_mangle]
pub unsafe extern "C" fn sureshrink_rule_free(rule: *mut SureshrinkRule) {
    if !rule.is_null() {
        drop(Box::from_raw(rule));
    }
}

/// Evaluate the rule at one point.
///
/// # Safety
/// `rule` must be live; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sureshrink_rule_evaluate(
    rule: *const SureshrinkRule,
    x: f64,
    out: *mut f64,
) -> SureshrinkStatus {
    if rule.is_null() || out.is_null() {
        return SureshrinkStatus::NullPointer;
    }
    if !x.is_finite() {
        return SureshrinkStatus::InvalidInput;
    }
    let r = &(*rule).report.rule;
    guarded(|| {
        *out = r.evaluate(x);
        SureshrinkStatus::Ok
    })
}

/// Evaluate the rule over `len` points into a caller-provided buffer.
///
/// # Safety
/// `xs` must point to `len` readable doubles, `out` to `len` writable ones.
#[no_mangle]
pub unsafe extern "C" fn sureshrink_rule_evaluate_many(
    rule: *const SureshrinkRule,
    xs: *const f64,
    len: usize,
    out: *mut f64,
) -> SureshrinkStatus {
    if rule.is_null() || xs.is_null() || out.is_null() {
        return SureshrinkStatus::NullPointer;
    }
    let xs = std::slice::from_raw_parts(xs, len);
    let out = std::slice::from_raw_parts_mut(out, len);
    if xs.iter().any(|v| !v.is_finite()) {
        return SureshrinkStatus::InvalidInput;
    }
    let r = &(*rule).report.rule;
    guarded(|| {
        for (o, &x) in out.iter_mut().zip(xs) {
            *o = r.evaluate(x);
        }
        SureshrinkStatus::Ok
    })
}

/// Almost-everywhere derivative of the rule at one point.
///
/// # Safety
/// `rule` must be live; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sureshrink_rule_derivative(
    rule: *const SureshrinkRule,
    x: f64,
    out: *mut f64,
) -> SureshrinkStatus {
    if rule.is_null() || out.is_null() {
        return SureshrinkStatus::NullPointer;
    }
    if !x.is_finite() {
        return SureshrinkStatus::InvalidInput;
    }
    let r = &(*rule).report.rule;
    guarded(|| {
        *out = r.derivative(x);
        SureshrinkStatus::Ok
    })
}

/// Achieved risk estimate of the fit.
///
/// # Safety
/// `rule` must be live; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sureshrink_rule_risk_estimate(
    rule: *const SureshrinkRule,
    out: *mut f64,
) -> SureshrinkStatus {
    if rule.is_null() || out.is_null() {
        return SureshrinkStatus::NullPointer;
    }
    *out = (*rule).report.risk_estimate;
    SureshrinkStatus::Ok
}

/// Whether the underlying solver converged (1) or was flagged (0).
///
/// # Safety
/// `rule` must be live; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sureshrink_rule_converged(
    rule: *const SureshrinkRule,
    out: *mut i32,
) -> SureshrinkStatus {
    if rule.is_null() || out.is_null() {
        return SureshrinkStatus::NullPointer;
    }
    *out = (*rule).report.diagnostics.converged as i32;
    SureshrinkStatus::Ok
}

/// Serialize the fitted rule to JSON. The returned string is released with
/// [`sureshrink_string_free`].
///
/// # Safety
/// `rule` must be live; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sureshrink_rule_to_json(
    rule: *const SureshrinkRule,
    out: *mut *mut c_char,
) -> SureshrinkStatus {
    if rule.is_null() || out.is_null() {
        return SureshrinkStatus::NullPointer;
    }
    guarded(|| match serde_json::to_string(&(*rule).report.rule) {
        Ok(s) => match CString::new(s) {
            Ok(c) => {
                *out = c.into_raw();
                SureshrinkStatus::Ok
            }
            Err(_) => SureshrinkStatus::Utf8Error,
        },
        Err(_) => SureshrinkStatus::JsonError,
    })
}

/// Rebuild a rule handle from its JSON form. The handle reports a NaN risk
/// estimate (no sample is attached).
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sureshrink_rule_from_json(
    json: *const c_char,
    out: *mut *mut SureshrinkRule,
) -> SureshrinkStatus {
    if json.is_null() || out.is_null() {
        return SureshrinkStatus::NullPointer;
    }
    let Ok(text) = CStr::from_ptr(json).to_str() else {
        return SureshrinkStatus::Utf8Error;
    };
    guarded(|| match serde_json::from_str::<Rule>(text) {
        Ok(rule) => {
            let report = FitReport::new(rule, f64::NAN, Default::default());
            *out = Box::into_raw(Box::new(SureshrinkRule { report }));
            SureshrinkStatus::Ok
        }
        Err(_) => SureshrinkStatus::JsonError,
    })
}

/// Release a string returned by this library. Null is a no-op.
///
/// # Safety
/// `s` must come from [`sureshrink_rule_to_json`] or be null.
#[no_mangle]
pub unsafe extern "C" fn sureshrink_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::ptr;

    unsafe fn make_sample(values: &[f64], sigma: f64) -> *mut SureshrinkSample {
        let mut handle: *mut SureshrinkSample = ptr::null_mut();
        let st = sureshrink_sample_new(values.as_ptr(), values.len(), sigma, &mut handle);
        assert_eq!(st, SureshrinkStatus::Ok);
        handle
    }

    #[test]
    fn sample_validation_through_the_abi() {
        unsafe {
            let mut handle: *mut SureshrinkSample = ptr::null_mut();
            let bad = [f64::NAN];
            let st = sureshrink_sample_new(bad.as_ptr(), 1, 1.0, &mut handle);
            assert_eq!(st, SureshrinkStatus::InvalidInput);
            let vals = [1.0, 2.0];
            let st = sureshrink_sample_new(vals.as_ptr(), 2, -1.0, &mut handle);
            assert_eq!(st, SureshrinkStatus::InvalidInput);
            let st = sureshrink_sample_new(ptr::null(), 0, 1.0, &mut handle);
            assert_eq!(st, SureshrinkStatus::NullPointer);
        }
    }

    #[test]
    fn fit_evaluate_round_trip() {
        unsafe {
            let values: Vec<f64> = (0..50).map(|i| (i as f64 * 0.7).sin() * 2.0).collect();
            let sample = make_sample(&values, 1.0);
            for method in [
                SureshrinkMethod::LinearSure,
                SureshrinkMethod::PwlPlugin,
                SureshrinkMethod::PwcMonotone,
                SureshrinkMethod::Bg,
                SureshrinkMethod::JzNpmle,
            ] {
                let mut rule: *mut SureshrinkRule = ptr::null_mut();
                let st = sureshrink_fit(sample, method, 7, &mut rule);
                // EM may flag the iteration cap on tiny samples; the handle
                // is still usable
                assert!(
                    st == SureshrinkStatus::Ok
                        || (method == SureshrinkMethod::JzNpmle
                            && st == SureshrinkStatus::NotConverged),
                    "{method:?}: {st:?}"
                );
                let mut v = f64::NAN;
                assert_eq!(sureshrink_rule_evaluate(rule, 0.5, &mut v), SureshrinkStatus::Ok);
                assert!(v.is_finite());
                let mut risk = f64::NAN;
                assert_eq!(
                    sureshrink_rule_risk_estimate(rule, &mut risk),
                    SureshrinkStatus::Ok
                );
                assert!(risk.is_finite());
                let mut conv = 0;
                assert_eq!(sureshrink_rule_converged(rule, &mut conv), SureshrinkStatus::Ok);
                assert_eq!(conv, (st == SureshrinkStatus::Ok) as i32);
                sureshrink_rule_free(rule);
            }
            sureshrink_sample_free(sample);
        }
    }

    #[test]
    fn json_bridge_round_trips_exactly() {
        unsafe {
            let values = [0.0, 1.0, -0.5, 2.5, 0.1];
            let sample = make_sample(&values, 1.0);
            let mut rule: *mut SureshrinkRule = ptr::null_mut();
            assert_eq!(
                sureshrink_fit(sample, SureshrinkMethod::PwcMonotone, 0, &mut rule),
                SureshrinkStatus::Ok
            );
            let mut json: *mut c_char = ptr::null_mut();
            assert_eq!(sureshrink_rule_to_json(rule, &mut json), SureshrinkStatus::Ok);
            let mut back: *mut SureshrinkRule = ptr::null_mut();
            assert_eq!(sureshrink_rule_from_json(json, &mut back), SureshrinkStatus::Ok);
            for x in [-1.0, 0.2, 0.77, 3.0] {
                let mut a = 0.0;
                let mut b = 0.0;
                sureshrink_rule_evaluate(rule, x, &mut a);
                sureshrink_rule_evaluate(back, x, &mut b);
                assert_eq!(a, b);
            }
            sureshrink_string_free(json);
            sureshrink_rule_free(back);
            sureshrink_rule_free(rule);
            sureshrink_sample_free(sample);
        }
    }

    #[test]
    fn evaluate_many_and_error_paths() {
        unsafe {
            let values = [0.0, 1.0, 2.0, 3.0];
            let sample = make_sample(&values, 1.0);
            let mut rule: *mut SureshrinkRule = ptr::null_mut();
            assert_eq!(
                sureshrink_fit(sample, SureshrinkMethod::LinearSure, 0, &mut rule),
                SureshrinkStatus::Ok
            );
            let xs = [0.0, 1.5, 9.0];
            let mut out = [0.0; 3];
            assert_eq!(
                sureshrink_rule_evaluate_many(rule, xs.as_ptr(), 3, out.as_mut_ptr()),
                SureshrinkStatus::Ok
            );
            let bad = [f64::INFINITY];
            assert_eq!(
                sureshrink_rule_evaluate_many(rule, bad.as_ptr(), 1, out.as_mut_ptr()),
                SureshrinkStatus::InvalidInput
            );
            let mut v = 0.0;
            assert_eq!(
                sureshrink_rule_evaluate(rule, f64::NAN, &mut v),
                SureshrinkStatus::InvalidInput
            );
            assert_eq!(
                sureshrink_rule_evaluate(ptr::null(), 1.0, &mut v),
                SureshrinkStatus::NullPointer
            );
            let mut from_bad: *mut SureshrinkRule = ptr::null_mut();
            let junk = std::ffi::CString::new("{not json").unwrap();
            assert_eq!(
                sureshrink_rule_from_json(junk.as_ptr(), &mut from_bad),
                SureshrinkStatus::JsonError
            );
            sureshrink_rule_free(rule);
            sureshrink_sample_free(sample);
            // frees tolerate null
            sureshrink_rule_free(ptr::null_mut());
            sureshrink_sample_free(ptr::null_mut());
            sureshrink_string_free(ptr::null_mut());
        }
    }

    #[test]
    fn version_is_a_c_string() {
        let p = sureshrink_version();
        let s = unsafe { CStr::from_ptr(p) }.to_str().unwrap();
        assert!(!s.is_empty());
    }
}
