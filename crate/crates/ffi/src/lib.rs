//! C ABI over the plugin-mdp toolkit.
//!
//! The surface follows the usual opaque-handle pattern: every MDP lives
//! behind a `PmdpMdp*` created by one of the constructors and released with
//! [`pmdp_mdp_free`]. Fallible calls return a [`PmdpStatus`]; results come
//! back through caller-allocated out-parameters whose lengths are fixed by
//! the handle's state and action counts. All functions are safe to call
//! from any thread as long as a handle is not freed while in use.
//!
//! The matching header is generated into `include/plugin_mdp.h` at build
//! time.

use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use plugin_mdp::bounds::{self, BoundParams};
use plugin_mdp::error::Error;
use plugin_mdp::generative::{build_empirical_model, empirical_mdp};
use plugin_mdp::harness::{plan, Planner};
use plugin_mdp::mdp::{policy_value_exact, Policy, TabularMdp};
use plugin_mdp::{io, RngSeed};

/// Result of a fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PmdpStatus {
    Ok = 0,
    /// Malformed input: bad dimensions, out-of-range parameters, rows that
    /// do not sum to one.
    InvalidInput = 1,
    /// An MDP file could not be parsed.
    ParseError = 2,
    IoError = 3,
    /// The requested bound is vacuous at this sample size.
    VacuousBound = 4,
    /// A required pointer argument was null.
    NullPointer = 5,
    /// Internal invariant failure; indicates a bug.
    InternalError = 6,
}

fn status_of(e: &Error) -> PmdpStatus {
    match e {
        Error::InvalidInput(_) => PmdpStatus::InvalidInput,
        Error::Parse { .. } => PmdpStatus::ParseError,
        Error::Io(_) => PmdpStatus::IoError,
        Error::BoundVacuous { .. } => PmdpStatus::VacuousBound,
        Error::Internal(_) => PmdpStatus::InternalError,
    }
}

/// Static name of a status code.
#[no_mangle]
pub extern "C" fn pmdp_status_name(status: PmdpStatus) -> *const c_char {
    let name: &'static [u8] = match status {
        PmdpStatus::Ok => b"ok\0",
        PmdpStatus::InvalidInput => b"invalid input\0",
        PmdpStatus::ParseError => b"parse error\0",
        PmdpStatus::IoError => b"i/o error\0",
        PmdpStatus::VacuousBound => b"vacuous bound\0",
        PmdpStatus::NullPointer => b"null pointer\0",
        PmdpStatus::InternalError => b"internal error\0",
    };
    name.as_ptr() as *const c_char
}

/// Opaque MDP handle.
pub struct PmdpMdp {
    inner: TabularMdp,
}

/// Planner selector for [`pmdp_plan`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PmdpPlanner {
    ValueIteration = 0,
    PolicyIteration = 1,
}

/// Closed-form bound inputs, mirroring the library's parameter struct.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct PmdpBoundParams {
    pub n_states: usize,
    pub n_actions: usize,
    pub discount: f64,
    pub delta: f64,
    pub n: u64,
    pub c: f64,
}

impl PmdpBoundParams {
    fn to_params(self) -> Result<BoundParams, Error> {
        BoundParams::new(
            self.n_states,
            self.n_actions,
            self.discount,
            self.delta,
            self.n,
            self.c,
        )
    }
}

fn guarded(body: impl FnOnce() -> PmdpStatus) -> PmdpStatus {
    catch_unwind(AssertUnwindSafe(body)).unwrap_or(PmdpStatus::InternalError)
}

unsafe fn write_handle(out: *mut *mut PmdpMdp, m: TabularMdp) -> PmdpStatus {
    *out = Box::into_raw(Box::new(PmdpMdp { inner: m }));
    PmdpStatus::Ok
}

/// Build an MDP from dense row-major arrays.
///
/// `reward` has `n_states * n_actions` entries ordered `(s, a)`;
/// `transition` has `n_states * n_actions * n_states` entries ordered
/// `(s, a, s2)`. Rows must sum to one.
///
/// # Safety
/// `reward` and `transition` must point to arrays of the stated lengths and
/// `out` must be a valid location to store the new handle.
#[no_mangle]
pub unsafe extern "C" fn pmdp_mdp_new(
    n_states: usize,
    n_actions: usize,
    discount: f64,
    reward: *const f64,
    transition: *const f64,
    out: *mut *mut PmdpMdp,
) -> PmdpStatus {
    if reward.is_null() || transition.is_null() || out.is_null() {
        return PmdpStatus::NullPointer;
    }
    guarded(|| {
        let pairs = match n_states.checked_mul(n_actions) {
            Some(p) if p > 0 => p,
            _ => return PmdpStatus::InvalidInput,
        };
        let Some(entries) = pairs.checked_mul(n_states) else {
            return PmdpStatus::InvalidInput;
        };
        let reward = std::slice::from_raw_parts(reward, pairs).to_vec();
        let transition = std::slice::from_raw_parts(transition, entries).to_vec();
        match TabularMdp::new(n_states, n_actions, discount, reward, transition) {
            Ok(m) => write_handle(out, m),
            Err(e) => status_of(&e),
        }
    })
}

/// Load an MDP from a text-format file.
///
/// # Safety
/// `path` must be a valid NUL-terminated string and `out` a valid location
/// to store the new handle.
#[no_mangle]
pub unsafe extern "C" fn pmdp_mdp_load(path: *const c_char, out: *mut *mut PmdpMdp) -> PmdpStatus {
    if path.is_null() || out.is_null() {
        return PmdpStatus::NullPointer;
    }
    guarded(|| {
        let Ok(path) = CStr::from_ptr(path).to_str() else {
            return PmdpStatus::InvalidInput;
        };
        match io::load_mdp(Path::new(path)) {
            Ok(m) => write_handle(out, m),
            Err(e) => status_of(&e),
        }
    })
}

/// Write an MDP to a text-format file.
///
/// # Safety
/// `m` must be a live handle and `path` a valid NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn pmdp_mdp_save(m: *const PmdpMdp, path: *const c_char) -> PmdpStatus {
    if m.is_null() || path.is_null() {
        return PmdpStatus::NullPointer;
    }
    guarded(|| {
        let Ok(path) = CStr::from_ptr(path).to_str() else {
            return PmdpStatus::InvalidInput;
        };
        match io::save_mdp(&(*m).inner, Path::new(path)) {
            Ok(()) => PmdpStatus::Ok,
            Err(e) => status_of(&e),
        }
    })
}

/// Release a handle. Null is a no-op.
///
/// # Safety
/// `m` must have come from this library and not been freed before.
#[no_mangle]
pub unsafe extern "C" fn pmdp_mdp_free(m: *mut PmdpMdp) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// Number of states, or 0 for a null handle.
///
/// # Safety
/// `m` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn pmdp_mdp_n_states(m: *const PmdpMdp) -> usize {
    if m.is_null() {
        return 0;
    }
    (*m).inner.n_states()
}

/// Number of actions, or 0 for a null handle.
///
/// # Safety
/// `m` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn pmdp_mdp_n_actions(m: *const PmdpMdp) -> usize {
    if m.is_null() {
        return 0;
    }
    (*m).inner.n_actions()
}

/// Discount factor, or NaN for a null handle.
///
/// # Safety
/// `m` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn pmdp_mdp_discount(m: *const PmdpMdp) -> f64 {
    if m.is_null() {
        return f64::NAN;
    }
    (*m).inner.discount()
}

/// Plan an `eps_opt`-optimal policy.
///
/// `actions_out` receives `n_states` entries. `q_out` is optional; when
/// non-null it receives the planner's `n_states * n_actions` action values
/// in `(s, a)` order.
///
/// # Safety
/// `m` must be a live handle; out-pointers must be null or sized as stated.
#[no_mangle]
pub unsafe extern "C" fn pmdp_plan(
    m: *const PmdpMdp,
    planner: PmdpPlanner,
    eps_opt: f64,
    actions_out: *mut usize,
    q_out: *mut f64,
) -> PmdpStatus {
    if m.is_null() || actions_out.is_null() {
        return PmdpStatus::NullPointer;
    }
    guarded(|| {
        let m = &(*m).inner;
        let planner = match planner {
            PmdpPlanner::ValueIteration => Planner::ValueIteration,
            PmdpPlanner::PolicyIteration => Planner::PolicyIteration,
        };
        match plan(m, planner, eps_opt) {
            Ok((pi, q)) => {
                std::slice::from_raw_parts_mut(actions_out, m.n_states())
                    .copy_from_slice(pi.actions());
                if !q_out.is_null() {
                    std::slice::from_raw_parts_mut(q_out, m.n_pairs())
                        .copy_from_slice(q.as_vector().as_slice());
                }
                PmdpStatus::Ok
            }
            Err(e) => status_of(&e),
        }
    })
}

/// Evaluate a deterministic policy exactly.
///
/// `actions` holds `n_states` action indices. `v_out` (length `n_states`)
/// and `q_out` (length `n_states * n_actions`) are each optional.
///
/// # Safety
/// `m` must be a live handle; `actions` must hold `n_states` entries;
/// out-pointers must be null or sized as stated.
#[no_mangle]
pub unsafe extern "C" fn pmdp_policy_value(
    m: *const PmdpMdp,
    actions: *const usize,
    v_out: *mut f64,
    q_out: *mut f64,
) -> PmdpStatus {
    if m.is_null() || actions.is_null() {
        return PmdpStatus::NullPointer;
    }
    guarded(|| {
        let m = &(*m).inner;
        let pi = Policy::new(std::slice::from_raw_parts(actions, m.n_states()).to_vec());
        match policy_value_exact(m, &pi) {
            Ok((v, q)) => {
                if !v_out.is_null() {
                    std::slice::from_raw_parts_mut(v_out, m.n_states())
                        .copy_from_slice(v.as_vector().as_slice());
                }
                if !q_out.is_null() {
                    std::slice::from_raw_parts_mut(q_out, m.n_pairs())
                        .copy_from_slice(q.as_vector().as_slice());
                }
                PmdpStatus::Ok
            }
            Err(e) => status_of(&e),
        }
    })
}

/// Draw `n` generative-model samples per pair and return the plug-in MDP
/// as a new handle. Deterministic in `(seed, stream)`.
///
/// # Safety
/// `m` must be a live handle and `out` a valid location for the new handle.
#[no_mangle]
pub unsafe extern "C" fn pmdp_sample_empirical(
    m: *const PmdpMdp,
    n: u64,
    seed: u64,
    stream: u64,
    out: *mut *mut PmdpMdp,
) -> PmdpStatus {
    if m.is_null() || out.is_null() {
        return PmdpStatus::NullPointer;
    }
    guarded(|| {
        let m = &(*m).inner;
        let result = build_empirical_model(m, n, RngSeed::new(seed, stream))
            .and_then(|e| empirical_mdp(m, &e));
        match result {
            Ok(m_hat) => write_handle(out, m_hat),
            Err(e) => status_of(&e),
        }
    })
}

unsafe fn bound_value(
    params: PmdpBoundParams,
    out: *mut f64,
    f: impl Fn(&BoundParams) -> f64,
) -> PmdpStatus {
    if out.is_null() {
        return PmdpStatus::NullPointer;
    }
    match params.to_params() {
        Ok(p) => {
            *out = f(&p);
            PmdpStatus::Ok
        }
        Err(e) => status_of(&e),
    }
}

/// Crude Hoeffding value bound.
///
/// # Safety
/// `out` must be a valid f64 location.
#[no_mangle]
pub unsafe extern "C" fn pmdp_crude_delta(params: PmdpBoundParams, out: *mut f64) -> PmdpStatus {
    guarded(|| bound_value(params, out, bounds::crude_delta))
}

/// Contraction factor `alpha`.
///
/// # Safety
/// `out` must be a valid f64 location.
#[no_mangle]
pub unsafe extern "C" fn pmdp_alpha(params: PmdpBoundParams, out: *mut f64) -> PmdpStatus {
    guarded(|| bound_value(params, out, bounds::alpha))
}

/// Discretization residual `delta_prime`.
///
/// # Safety
/// `out` must be a valid f64 location.
#[no_mangle]
pub unsafe extern "C" fn pmdp_delta_prime(params: PmdpBoundParams, out: *mut f64) -> PmdpStatus {
    guarded(|| bound_value(params, out, bounds::delta_prime))
}

/// Sample size per pair that the main guarantee requires at accuracy
/// `epsilon`. The `n` field of `params` is ignored.
///
/// # Safety
/// `out` must be a valid u64 location.
#[no_mangle]
pub unsafe extern "C" fn pmdp_required_n(
    params: PmdpBoundParams,
    epsilon: f64,
    out: *mut u64,
) -> PmdpStatus {
    if out.is_null() {
        return PmdpStatus::NullPointer;
    }
    guarded(|| {
        let p = PmdpBoundParams { n: 1, ..params };
        match p.to_params().and_then(|p| bounds::required_n(epsilon, &p)) {
            Ok(n) => {
                *out = n;
                PmdpStatus::Ok
            }
            Err(e) => status_of(&e),
        }
    })
}

/// The two final value-error bounds: `rhs_planned` for the planned policy,
/// `rhs_optimal` for the true optimal policy evaluated in the empirical
/// model. Fails with `VACUOUS_BOUND` when `alpha >= 1`.
///
/// # Safety
/// `rhs_planned` and `rhs_optimal` must be valid f64 locations.
#[no_mangle]
pub unsafe extern "C" fn pmdp_final_bound(
    params: PmdpBoundParams,
    eps_opt: f64,
    rhs_planned: *mut f64,
    rhs_optimal: *mut f64,
) -> PmdpStatus {
    if rhs_planned.is_null() || rhs_optimal.is_null() {
        return PmdpStatus::NullPointer;
    }
    guarded(|| {
        match params
            .to_params()
            .and_then(|p| bounds::final_bound_rhs(&p, eps_opt))
        {
            Ok((planned, optimal)) => {
                *rhs_planned = planned;
                *rhs_optimal = optimal;
                PmdpStatus::Ok
            }
            Err(e) => status_of(&e),
        }
    })
}
