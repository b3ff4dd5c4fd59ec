//! Closed-form sample-complexity quantities.
//!
//! These are the finite-sample expressions the verifier tests coverage
//! against: the crude Hoeffding-style value bound, the Bernstein right-hand
//! side with its grid union, the discretization residual, the contraction
//! factor `alpha`, the final value-error bounds, and the sample size the
//! main theorem requires. Logarithms are natural throughout; the absolute
//! constant `c` is configurable and defaults to [`DEFAULT_C`].

use crate::error::{Error, Result};

/// Default absolute constant: covers the explicit 8s in the union-bound
/// expressions. Empirical coverage calibrates the effective constant anyway.
pub const DEFAULT_C: f64 = 8.0;

/// Everything the closed-form bounds depend on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundParams {
    pub n_states: usize,
    pub n_actions: usize,
    pub discount: f64,
    /// Failure probability.
    pub delta: f64,
    /// Samples per state-action pair.
    pub n: u64,
    /// Absolute constant.
    pub c: f64,
}

impl BoundParams {
    /// Validating constructor. The fields stay public so callers with
    /// unusual needs (e.g. a normalization test at `delta > 1`) can build
    /// the struct directly.
    pub fn new(
        n_states: usize,
        n_actions: usize,
        discount: f64,
        delta: f64,
        n: u64,
        c: f64,
    ) -> Result<Self> {
        if n_states == 0 || n_actions == 0 {
            return Err(Error::invalid("state and action counts must be positive"));
        }
        if !(discount > 0.0 && discount < 1.0) {
            return Err(Error::invalid(format!(
                "discount must lie in (0, 1), got {discount}"
            )));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::invalid(format!(
                "delta must lie in (0, 1), got {delta}"
            )));
        }
        if n == 0 {
            return Err(Error::invalid("N must be at least 1"));
        }
        if !(c > 0.0) {
            return Err(Error::invalid(format!("c must be positive, got {c}")));
        }
        Ok(BoundParams {
            n_states,
            n_actions,
            discount,
            delta,
            n,
            c,
        })
    }

    fn sa(&self) -> f64 {
        (self.n_states * self.n_actions) as f64
    }

    fn horizon(&self) -> f64 {
        1.0 / (1.0 - self.discount)
    }

    /// `log(c |S||A| / ((1-gamma) delta))`, the log factor shared by the
    /// refined bounds.
    pub fn log_term(&self) -> f64 {
        (self.c * self.sa() * self.horizon() / self.delta).ln()
    }
}

/// Crude Hoeffding value bound:
/// `gamma / (1-gamma)^2 * sqrt(2 log(2 |S||A| / delta) / N)`.
pub fn crude_delta(p: &BoundParams) -> f64 {
    let log = (2.0 * p.sa() / p.delta).ln();
    p.discount * p.horizon().powi(2) * (2.0 * log / p.n as f64).sqrt()
}

/// Contraction factor of the self-bounding step:
/// `gamma / (1-gamma) * sqrt(8 log(8 |S||A| / ((1-gamma) delta)) / N)`.
pub fn alpha(p: &BoundParams) -> f64 {
    let log = (8.0 * p.sa() * p.horizon() / p.delta).ln();
    p.discount * p.horizon() * (8.0 * log / p.n as f64).sqrt()
}

/// Discretization residual:
/// `sqrt(c L / N) + c L / ((1-gamma) N)` with `L = log_term()`.
pub fn delta_prime(p: &BoundParams) -> f64 {
    let l = p.log_term();
    (p.c * l / p.n as f64).sqrt() + p.c * l * p.horizon() / p.n as f64
}

/// Per-pair Bernstein bound over a value grid of `grid_size` points:
/// `sqrt(2 log(4 |U|/delta) / N) sqrt(variance) + 2 log(4 |U|/delta) / ((1-gamma) 3N)`.
pub fn bernstein_rhs(p: &BoundParams, grid_size: usize, variance: f64) -> f64 {
    debug_assert!(variance >= 0.0);
    let log = (4.0 * grid_size as f64 / p.delta).ln();
    (2.0 * log / p.n as f64).sqrt() * variance.sqrt()
        + 2.0 * log * p.horizon() / (3.0 * p.n as f64)
}

/// Raw (un-ceiled) sample size the main theorem requires:
/// `c gamma log(c |S||A| (1-gamma)^{-1} delta^{-1}) / ((1-gamma)^3 eps^2)`.
fn required_n_raw(epsilon: f64, p: &BoundParams) -> f64 {
    p.c * p.discount * p.log_term() / ((1.0 - p.discount).powi(3) * epsilon * epsilon)
}

/// Ceiling of [`required_n_raw`]; `epsilon` must lie in
/// `(0, (1-gamma)^{-1/2}]`.
pub fn required_n(epsilon: f64, p: &BoundParams) -> Result<u64> {
    let top = 1.0 / (1.0 - p.discount).sqrt();
    if !(epsilon > 0.0 && epsilon <= top) {
        return Err(Error::invalid(format!(
            "epsilon must lie in (0, {top:.6}], got {epsilon}"
        )));
    }
    Ok(required_n_raw(epsilon, p).ceil() as u64)
}

/// The two final value-error bounds, for the planned policy and for the
/// true optimal policy respectively:
///
/// ```text
/// ||Q^pihat - Qhat^pihat||  <=  T + 2 gamma eps_opt / ((1-alpha)(1-gamma)) (1 + sqrt(L/N))
/// ||Q* - Qhat^{pi*}||       <=  T
/// T = gamma/(1-alpha) ( sqrt(c L / ((1-gamma)^3 N)) + c L / ((1-gamma)^2 N) )
/// ```
///
/// Errors with [`Error::BoundVacuous`] when `alpha >= 1`.
pub fn final_bound_rhs(p: &BoundParams, eps_opt: f64) -> Result<(f64, f64)> {
    let a = alpha(p);
    if a >= 1.0 {
        return Err(Error::BoundVacuous { alpha: a });
    }
    let l = p.log_term();
    let nf = p.n as f64;
    let h = p.horizon();
    let base = p.discount / (1.0 - a)
        * ((p.c * l * h.powi(3) / nf).sqrt() + p.c * l * h.powi(2) / nf);
    let opt_term =
        1.0 / (1.0 - a) * (2.0 * p.discount * eps_opt * h) * (1.0 + (l / nf).sqrt());
    Ok((base + opt_term, base))
}
