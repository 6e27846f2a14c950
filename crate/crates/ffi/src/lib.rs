//! C interface to the cogrelay engines.
//!
//! Scenarios live behind an opaque `CgrScenario` handle. Every fallible call
//! returns a `CgrStatus`; on failure a message is available from
//! `cgr_last_error_message` on the same thread until the next failing call.
//! Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use cogrelay::closed_form::{self, ClosedFormError, Validity};
use cogrelay::mc_sim::{self, Combine, McConfig, SinrModel};
use cogrelay::quad_oracle::{self, QuadConfig, QuadMode};
use cogrelay::scenario::{self, power_budget, Binding, ScenarioParams};

/// Combining mode: direct link plus best relay.
pub const CGR_COMBINE_MRC_WITH_DIRECT: u32 = 0;
/// Combining mode: best relay alone.
pub const CGR_COMBINE_RELAY_ONLY: u32 = 1;
/// Combining mode: direct link alone (Monte Carlo only).
pub const CGR_COMBINE_DIRECT_ONLY: u32 = 2;

/// Relay path SINR `min(g1, g2)`.
pub const CGR_MODEL_MAX_MIN_BOUND: u32 = 0;
/// Relay path SINR `g1 g2 / (1 + g1 + g2)`.
pub const CGR_MODEL_EXACT_HARMONIC: u32 = 1;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CgrStatus {
    Ok = 0,
    NullPointer = 1,
    Config = 2,
    OutsideValidity = 3,
    Numerical = 5,
    InvalidArgument = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CgrBinding {
    Peak = 0,
    PrimaryOutage = 1,
    Zero = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CgrValidity {
    Valid = 0,
    OutsideValidityRegion = 1,
    DegenerateFallback = 2,
}

/// Opaque scenario handle.
pub struct CgrScenario {
    params: ScenarioParams,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgrPowerBudget {
    pub p_st: f64,
    pub p_sr: f64,
    pub p_u_st: f64,
    pub p_u_sr: f64,
    pub st_binding: CgrBinding,
    pub sr_binding: CgrBinding,
}

/// `i2` and `i3` are NaN when `validity` is `DEGENERATE_FALLBACK`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgrClosedForm {
    pub i1: f64,
    pub i2: f64,
    pub i3: f64,
    pub outage_mrc: f64,
    pub outage_relay_only: f64,
    pub validity: CgrValidity,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgrEstimate {
    pub p_hat: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub samples: u64,
    pub seed: u64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn fail(status: CgrStatus, message: impl Into<String>) -> CgrStatus {
    set_error(message.into());
    status
}

fn guard(body: impl FnOnce() -> CgrStatus) -> CgrStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(payload) => {
            let what = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".to_string());
            fail(CgrStatus::Panic, format!("panic: {what}"))
        }
    }
}

fn binding(b: Binding) -> CgrBinding {
    match b {
        Binding::Peak => CgrBinding::Peak,
        Binding::PrimaryOutage => CgrBinding::PrimaryOutage,
        Binding::Zero => CgrBinding::Zero,
    }
}

fn store<T>(out: *mut *mut T, value: T) {
    // SAFETY: callers checked `out` for null.
    unsafe { *out = Box::into_raw(Box::new(value)) };
}

/// Parse a scenario from NUL-terminated `key = value` text.
///
/// # Safety
/// `text` must be a valid C string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn cgr_scenario_parse(text: *const c_char, out: *mut *mut CgrScenario) -> CgrStatus {
    guard(|| {
        if text.is_null() || out.is_null() {
            return fail(CgrStatus::NullPointer, "null argument");
        }
        let Ok(text) = CStr::from_ptr(text).to_str() else {
            return fail(CgrStatus::Config, "scenario text is not UTF-8");
        };
        match scenario::parse_scenario(text) {
            Ok(params) => {
                store(out, CgrScenario { params });
                CgrStatus::Ok
            }
            Err(e) => fail(CgrStatus::Config, e.to_string()),
        }
    })
}

/// Build the reference channel set at the given powers (dB over `N0`).
///
/// # Safety
/// `out` must be a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn cgr_scenario_reference(
    p_pt_db: f64,
    p_pk_db: f64,
    lambda_p: f64,
    n_relays: u32,
    out: *mut *mut CgrScenario,
) -> CgrStatus {
    guard(|| {
        if out.is_null() {
            return fail(CgrStatus::NullPointer, "null argument");
        }
        let params = ScenarioParams::reference(p_pt_db, p_pk_db, lambda_p, n_relays);
        if let Err(e) = params.validate() {
            return fail(CgrStatus::Config, e.to_string());
        }
        store(out, CgrScenario { params });
        CgrStatus::Ok
    })
}

/// Release a handle. Null is ignored.
///
/// # Safety
/// `scenario` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn cgr_scenario_free(scenario: *mut CgrScenario) {
    if !scenario.is_null() {
        drop(Box::from_raw(scenario));
    }
}

/// # Safety
/// Pointers must be valid or null.
#[no_mangle]
pub unsafe extern "C" fn cgr_power_budget(scenario: *const CgrScenario, out: *mut CgrPowerBudget) -> CgrStatus {
    guard(|| {
        let (Some(s), false) = (scenario.as_ref(), out.is_null()) else {
            return fail(CgrStatus::NullPointer, "null argument");
        };
        let b = power_budget(&s.params);
        *out = CgrPowerBudget {
            p_st: b.p_st,
            p_sr: b.p_sr,
            p_u_st: b.p_u_st,
            p_u_sr: b.p_u_sr,
            st_binding: binding(b.st_binding),
            sr_binding: binding(b.sr_binding),
        };
        CgrStatus::Ok
    })
}

/// Closed-form outage. Returns `OUTSIDE_VALIDITY` when the reduction does
/// not apply to the scenario.
///
/// # Safety
/// Pointers must be valid or null.
#[no_mangle]
pub unsafe extern "C" fn cgr_closed_form(scenario: *const CgrScenario, out: *mut CgrClosedForm) -> CgrStatus {
    guard(|| {
        let (Some(s), false) = (scenario.as_ref(), out.is_null()) else {
            return fail(CgrStatus::NullPointer, "null argument");
        };
        match closed_form::secondary_outage_mrc(&s.params) {
            Ok(r) => {
                *out = CgrClosedForm {
                    i1: r.i1,
                    i2: r.i2,
                    i3: r.i3,
                    outage_mrc: r.outage_mrc,
                    outage_relay_only: r.outage_relay_only,
                    validity: match r.validity {
                        Validity::Valid => CgrValidity::Valid,
                        Validity::OutsideValidityRegion => CgrValidity::OutsideValidityRegion,
                        Validity::DegenerateFallback => CgrValidity::DegenerateFallback,
                    },
                };
                CgrStatus::Ok
            }
            Err(e @ ClosedFormError::OutsideValidityRegion { .. }) => {
                fail(CgrStatus::OutsideValidity, e.to_string())
            }
            Err(e @ ClosedFormError::TooManyRelays(_)) => fail(CgrStatus::InvalidArgument, e.to_string()),
            Err(e) => fail(CgrStatus::Numerical, e.to_string()),
        }
    })
}

/// Outage by nested quadrature. `combine` is `CGR_COMBINE_MRC_WITH_DIRECT`
/// or `CGR_COMBINE_RELAY_ONLY`; `abs_error` may be null.
///
/// # Safety
/// Pointers must be valid or null (`abs_error` optional).
#[no_mangle]
pub unsafe extern "C" fn cgr_quadrature(
    scenario: *const CgrScenario,
    combine: u32,
    value: *mut f64,
    abs_error: *mut f64,
) -> CgrStatus {
    guard(|| {
        let (Some(s), false) = (scenario.as_ref(), value.is_null()) else {
            return fail(CgrStatus::NullPointer, "null argument");
        };
        let mode = match combine {
            CGR_COMBINE_MRC_WITH_DIRECT => QuadMode::MrcWithDirect,
            CGR_COMBINE_RELAY_ONLY => QuadMode::RelayOnly,
            other => return fail(CgrStatus::InvalidArgument, format!("unsupported combine mode {other}")),
        };
        match quad_oracle::outage_by_quadrature(&s.params, mode, &QuadConfig::default()) {
            Ok(q) => {
                *value = q.value;
                if !abs_error.is_null() {
                    *abs_error = q.abs_error;
                }
                CgrStatus::Ok
            }
            Err(e) => fail(CgrStatus::Numerical, e.to_string()),
        }
    })
}

/// Monte Carlo outage estimate with a 95% Wilson interval. Relays are
/// selected by the chosen model's own score.
///
/// # Safety
/// Pointers must be valid or null.
#[no_mangle]
pub unsafe extern "C" fn cgr_monte_carlo(
    scenario: *const CgrScenario,
    samples: u64,
    seed: u64,
    model: u32,
    combine: u32,
    out: *mut CgrEstimate,
) -> CgrStatus {
    guard(|| {
        let (Some(s), false) = (scenario.as_ref(), out.is_null()) else {
            return fail(CgrStatus::NullPointer, "null argument");
        };
        let model = match model {
            CGR_MODEL_MAX_MIN_BOUND => SinrModel::MaxMinBound,
            CGR_MODEL_EXACT_HARMONIC => SinrModel::ExactHarmonic,
            other => return fail(CgrStatus::InvalidArgument, format!("unknown SINR model {other}")),
        };
        let combine = match combine {
            CGR_COMBINE_MRC_WITH_DIRECT => Combine::MrcWithDirect,
            CGR_COMBINE_RELAY_ONLY => Combine::RelayOnly,
            CGR_COMBINE_DIRECT_ONLY => Combine::DirectOnly,
            other => return fail(CgrStatus::InvalidArgument, format!("unknown combine mode {other}")),
        };
        let mc = McConfig::new(samples, seed, model, combine);
        match mc_sim::estimate_secondary_outage(&s.params, &mc) {
            Ok(e) => {
                *out = CgrEstimate {
                    p_hat: e.p_hat,
                    ci_low: e.ci_low,
                    ci_high: e.ci_high,
                    samples: e.samples,
                    seed: e.seed,
                };
                CgrStatus::Ok
            }
            Err(e) => fail(CgrStatus::InvalidArgument, e.to_string()),
        }
    })
}

/// Message for the last failure on this thread, or null. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn cgr_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static C string.
#[no_mangle]
pub extern "C" fn cgr_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
