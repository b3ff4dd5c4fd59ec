//! The s-absorbing auxiliary MDP and its value grid.
//!
//! `make_absorbing(m, (s, u))` pins state `s` to itself with per-step reward
//! `(1 - gamma) u`, so every policy's value at `s` equals `u` while the rest
//! of the model is untouched. Evaluating these auxiliary MDPs at a grid of
//! `u` values decouples empirical value functions from the sample draws of
//! state `s`, which is what makes the Bernstein-style checks in `verify`
//! legitimate. The construction exists for verification only; planners never
//! see it.

use crate::error::{Error, Result};
use crate::mdp::TabularMdp;

/// Parameters `(s, u)` of the absorbing construction. `u` is intended to
/// range over a neighborhood of `V*(s)`; at small sample sizes that
/// neighborhood can reach below zero, so only finiteness is enforced here.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AbsorbingSpec {
    pub state: usize,
    pub value: f64,
}

impl AbsorbingSpec {
    pub fn new(state: usize, value: f64) -> Self {
        AbsorbingSpec { state, value }
    }
}

/// An evenly spaced grid of candidate values around a center.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueGrid {
    center: f64,
    half_width: f64,
    points: Vec<f64>,
}

impl ValueGrid {
    pub fn center(&self) -> f64 {
        self.center
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Worst-case distance from any point of the interval to the grid.
    pub fn covering_radius(&self) -> f64 {
        if self.points.len() < 2 {
            return f64::INFINITY;
        }
        2.0 * self.half_width / (self.points.len() - 1) as f64
    }

    /// A one-point grid, the degenerate case in which the union bound
    /// reduces to a single Bernstein inequality.
    pub fn singleton(value: f64) -> Self {
        ValueGrid {
            center: value,
            half_width: 0.0,
            points: vec![value],
        }
    }
}

/// Make state `spec.state` absorbing with per-step reward `(1-gamma) u`.
/// The output carries the absorbing-derived flag, which relaxes the
/// `[0, 1]` reward-range validation.
pub fn make_absorbing(m: &TabularMdp, spec: &AbsorbingSpec) -> Result<TabularMdp> {
    if spec.state >= m.n_states() {
        return Err(Error::invalid(format!(
            "absorbing state {} out of range (S = {})",
            spec.state,
            m.n_states()
        )));
    }
    if !spec.value.is_finite() {
        return Err(Error::invalid("absorbing value must be finite"));
    }
    let mut transition = m.transition_matrix().clone();
    let mut reward = m.reward_vector().clone();
    let r_abs = (1.0 - m.discount()) * spec.value;
    for a in 0..m.n_actions() {
        let i = m.pair_index(spec.state, a);
        reward[i] = r_abs;
        for s2 in 0..m.n_states() {
            transition[(i, s2)] = if s2 == spec.state { 1.0 } else { 0.0 };
        }
    }
    TabularMdp::from_parts(
        m.n_states(),
        m.n_actions(),
        m.discount(),
        reward,
        transition,
        true,
    )
}

/// `n_points` evenly spaced values spanning
/// `[center - half_width, center + half_width]`.
pub fn build_value_grid(center: f64, half_width: f64, n_points: usize) -> Result<ValueGrid> {
    if !(half_width > 0.0) {
        return Err(Error::invalid(format!(
            "half_width must be positive, got {half_width}"
        )));
    }
    if n_points < 2 {
        return Err(Error::invalid(format!(
            "need at least 2 grid points, got {n_points}"
        )));
    }
    let lo = center - half_width;
    let step = 2.0 * half_width / (n_points - 1) as f64;
    let mut points: Vec<f64> = (0..n_points).map(|i| lo + i as f64 * step).collect();
    // Pin the last point to the exact upper endpoint.
    points[n_points - 1] = center + half_width;
    Ok(ValueGrid {
        center,
        half_width,
        points,
    })
}

/// Default grid size `min(ceil(1/(1-gamma)^2), cap)`. The uncapped size is
/// the analysis choice; the cap keeps it usable near `gamma = 1`.
pub fn default_grid_size(gamma: f64, cap: usize) -> usize {
    let x = 1.0 / (1.0 - gamma).powi(2);
    // Snap to the intended integer when floating point lands a hair above it
    // (1/(1-0.9)^2 evaluates to 100.00000000000004).
    let raw = if (x - x.round()).abs() < 1e-9 * x {
        x.round()
    } else {
        x.ceil()
    };
    if raw >= cap as f64 {
        cap
    } else {
        (raw as usize).max(2)
    }
}

/// The grid point closest to `x`; lowest index wins ties, and points outside
/// the interval snap to the nearest endpoint.
pub fn nearest_grid_value(g: &ValueGrid, x: f64) -> f64 {
    let mut best = g.points[0];
    let mut best_dist = (x - best).abs();
    for &u in &g.points[1..] {
        let d = (x - u).abs();
        if d < best_dist {
            best = u;
            best_dist = d;
        }
    }
    best
}
