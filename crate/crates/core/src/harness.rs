//! Experiment harness: MDP families, Monte-Carlo sample-size sweeps, and
//! scaling-law fits.
//!
//! A sweep draws an empirical MDP at each sample size `n`, plans in it,
//! evaluates the planned policy exactly in the true MDP, and records the
//! true suboptimality. Fitting `log(median error)` against `log n` then
//! reproduces the square-root sample-complexity rate at desk scale.

use std::str::FromStr;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Gamma};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::generative::{build_empirical_model, empirical_mdp};
use crate::mdp::{
    inf_dist, policy_iteration, policy_value_exact, value_iteration, Policy, QFn, TabularMdp,
    ValueFn,
};
use crate::stream::{derive_stream, RngSeed};

/// Random-MDP families the harness can generate. The spread is deliberate:
/// two stochastic families, a deterministic null case, and a near-tie
/// stress instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MdpFamily {
    /// Each transition row drawn from a symmetric Dirichlet; rewards
    /// uniform on `[0, 1]`.
    Dirichlet,
    /// Each row puts mass `1/branching` on a random support; rewards
    /// uniform on `[0, 1]`.
    Garnet,
    /// The deterministic two-state chain: state 0 moves to state 1 with
    /// reward 0, state 1 self-loops with reward 1.
    Chain,
    /// A 2-state, 2-action stress instance whose optimal action at state 0
    /// wins by a margin of order `(1 - gamma)`, so small kernel errors can
    /// flip the planned policy. Not a construction from the literature,
    /// just a hard case for the sweep.
    TwoStateHard,
}

impl MdpFamily {
    pub fn name(&self) -> &'static str {
        match self {
            MdpFamily::Dirichlet => "dirichlet",
            MdpFamily::Garnet => "garnet",
            MdpFamily::Chain => "chain",
            MdpFamily::TwoStateHard => "twostate-hard",
        }
    }
}

impl FromStr for MdpFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dirichlet" => Ok(MdpFamily::Dirichlet),
            "garnet" => Ok(MdpFamily::Garnet),
            "chain" => Ok(MdpFamily::Chain),
            "twostate-hard" => Ok(MdpFamily::TwoStateHard),
            other => Err(Error::invalid(format!(
                "unknown family '{other}' (expected dirichlet, garnet, chain, twostate-hard)"
            ))),
        }
    }
}

/// Parameters of one generated MDP. Generation is a pure function of this
/// struct: same spec, same MDP.
#[derive(Debug, Clone, PartialEq)]
pub struct MdpFamilySpec {
    pub family: MdpFamily,
    pub n_states: usize,
    pub n_actions: usize,
    pub discount: f64,
    /// Garnet only: support size of each transition row.
    pub branching: Option<usize>,
    /// Dirichlet only: symmetric concentration parameter.
    pub concentration: f64,
    pub seed: u64,
}

impl MdpFamilySpec {
    pub fn dirichlet(n_states: usize, n_actions: usize, discount: f64, seed: u64) -> Self {
        MdpFamilySpec {
            family: MdpFamily::Dirichlet,
            n_states,
            n_actions,
            discount,
            branching: None,
            concentration: 1.0,
            seed,
        }
    }
}

const FAMILY_TAG: u64 = 0x11;
const SWEEP_TAG: u64 = 0x22;

/// Generate the MDP a family spec describes.
pub fn generate_mdp(spec: &MdpFamilySpec) -> Result<TabularMdp> {
    let mut rng = RngSeed::new(spec.seed, derive_stream(FAMILY_TAG, 0)).rng();
    let (ns, na) = (spec.n_states, spec.n_actions);
    match spec.family {
        MdpFamily::Dirichlet => {
            if !(spec.concentration > 0.0) {
                return Err(Error::invalid("concentration must be positive"));
            }
            let gamma_dist = Gamma::new(spec.concentration, 1.0)
                .map_err(|e| Error::invalid(format!("bad concentration: {e}")))?;
            let mut transition = Vec::with_capacity(ns * na * ns);
            let mut reward = Vec::with_capacity(ns * na);
            for _ in 0..ns * na {
                reward.push(rng.random::<f64>());
                let mut row: Vec<f64> = (0..ns).map(|_| gamma_dist.sample(&mut rng)).collect();
                let sum: f64 = row.iter().sum();
                if !(sum > 0.0) {
                    return Err(Error::internal("degenerate Dirichlet row"));
                }
                for x in &mut row {
                    *x /= sum;
                }
                transition.extend_from_slice(&row);
            }
            TabularMdp::new(ns, na, spec.discount, reward, transition)
        }
        MdpFamily::Garnet => {
            let b = spec
                .branching
                .ok_or_else(|| Error::invalid("garnet requires a branching factor"))?;
            if b == 0 || b > ns {
                return Err(Error::invalid(format!(
                    "branching {b} out of range 1..={ns}"
                )));
            }
            let mut transition = Vec::with_capacity(ns * na * ns);
            let mut reward = Vec::with_capacity(ns * na);
            let mut states: Vec<usize> = (0..ns).collect();
            for _ in 0..ns * na {
                reward.push(rng.random::<f64>());
                let (support, _) = states.partial_shuffle(&mut rng, b);
                let mut row = vec![0.0; ns];
                for &s2 in support.iter() {
                    row[s2] = 1.0 / b as f64;
                }
                transition.extend_from_slice(&row);
            }
            TabularMdp::new(ns, na, spec.discount, reward, transition)
        }
        MdpFamily::Chain => {
            if ns != 2 || na != 1 {
                return Err(Error::invalid("chain family is 2 states, 1 action"));
            }
            TabularMdp::new(
                2,
                1,
                spec.discount,
                vec![0.0, 1.0],
                vec![0.0, 1.0, 0.0, 1.0],
            )
        }
        MdpFamily::TwoStateHard => {
            if ns != 2 || na != 2 {
                return Err(Error::invalid("twostate-hard family is 2 states, 2 actions"));
            }
            // Action 0 at state 0 reaches the rewarding state slightly more
            // often than action 1; the Q gap works out to O(1 - gamma).
            let g = 0.05 * (1.0 - spec.discount);
            let transition = vec![
                0.5 - g,
                0.5 + g, // (s0, a0)
                0.5,
                0.5, // (s0, a1)
                0.0,
                1.0, // (s1, a0)
                0.0,
                1.0, // (s1, a1)
            ];
            TabularMdp::new(
                2,
                2,
                spec.discount,
                vec![0.0, 0.0, 1.0, 1.0],
                transition,
            )
        }
    }
}

/// Which optimization oracle plans in the empirical MDP.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Planner {
    ValueIteration,
    PolicyIteration,
}

impl Planner {
    pub fn name(&self) -> &'static str {
        match self {
            Planner::ValueIteration => "vi",
            Planner::PolicyIteration => "pi",
        }
    }
}

impl FromStr for Planner {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vi" => Ok(Planner::ValueIteration),
            "pi" => Ok(Planner::PolicyIteration),
            other => Err(Error::invalid(format!(
                "unknown planner '{other}' (expected vi or pi)"
            ))),
        }
    }
}

/// Run the chosen planner. Policy iteration is exact and ignores `eps_opt`.
pub fn plan(m: &TabularMdp, planner: Planner, eps_opt: f64) -> Result<(Policy, QFn)> {
    match planner {
        Planner::ValueIteration => value_iteration(m, eps_opt),
        Planner::PolicyIteration => policy_iteration(m),
    }
}

/// Configuration of one Monte-Carlo sweep over sample sizes.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub family: MdpFamilySpec,
    /// Strictly increasing sample sizes.
    pub n_grid: Vec<u64>,
    pub trials_per_n: u32,
    pub eps_opt: f64,
    pub planner: Planner,
    pub delta: f64,
    pub seed: u64,
    /// Record real wall time per trial. Off by default so that repeated
    /// runs produce byte-identical output; turn it on for the qualitative
    /// runtime report.
    pub measure_wall_time: bool,
}

/// One trial's measurement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRecord {
    pub n: u64,
    pub trial: u32,
    /// The sub-stream that produced this trial's samples.
    pub seed: u64,
    /// `||Q* - Q^pihat||_inf` in the true MDP.
    pub q_error: f64,
    /// `||V* - V^pihat||_inf` in the true MDP.
    pub v_error: f64,
    /// `||Qhat^pihat - Qhat*||_inf` in the empirical MDP — the optimization
    /// error the oracle contract promises to keep below `eps_opt`.
    pub qhat_gap: f64,
    pub wall_time_s: f64,
}

/// Error measurements for a fixed policy: suboptimality is always taken in
/// the true MDP, never in the empirical one.
pub(crate) fn measure_policy(
    m_true: &TabularMdp,
    q_star: &QFn,
    v_star: &ValueFn,
    pi_hat: &Policy,
) -> Result<(f64, f64)> {
    let (v_pi, q_pi) = policy_value_exact(m_true, pi_hat)?;
    Ok((
        inf_dist(q_star.as_vector(), q_pi.as_vector()),
        inf_dist(v_star.as_vector(), v_pi.as_vector()),
    ))
}

fn run_trial(
    m_true: &TabularMdp,
    q_star: &QFn,
    v_star: &ValueFn,
    cfg: &SweepConfig,
    n: u64,
    trial: u32,
    stream: u64,
) -> Result<SweepRecord> {
    let start = Instant::now();
    let model = build_empirical_model(m_true, n, RngSeed::new(cfg.seed, stream))?;
    let m_hat = empirical_mdp(m_true, &model)?;
    let (pi_hat, _) = plan(&m_hat, cfg.planner, cfg.eps_opt)?;
    let (q_error, v_error) = measure_policy(m_true, q_star, v_star, &pi_hat)?;
    let (_, qhat_star) = policy_iteration(&m_hat)?;
    let (_, qhat_pi) = policy_value_exact(&m_hat, &pi_hat)?;
    let qhat_gap = inf_dist(qhat_star.as_vector(), qhat_pi.as_vector());
    let wall_time_s = if cfg.measure_wall_time {
        start.elapsed().as_secs_f64()
    } else {
        0.0
    };
    Ok(SweepRecord {
        n,
        trial,
        seed: stream,
        q_error,
        v_error,
        qhat_gap,
        wall_time_s,
    })
}

/// Run the full sweep. Trials fan out over the rayon pool; each `(n, trial)`
/// owns its sub-stream and records are returned in `(n, trial)` order, so
/// the output does not depend on the worker count.
pub fn run_sweep(cfg: &SweepConfig) -> Result<Vec<SweepRecord>> {
    if cfg.n_grid.is_empty() {
        return Err(Error::invalid("n_grid must be non-empty"));
    }
    if !cfg.n_grid.windows(2).all(|w| w[0] < w[1]) {
        return Err(Error::invalid("n_grid must be strictly increasing"));
    }
    if cfg.trials_per_n == 0 {
        return Err(Error::invalid("trials_per_n must be at least 1"));
    }
    if !(cfg.eps_opt > 0.0) {
        return Err(Error::invalid("eps_opt must be positive"));
    }
    let m_true = generate_mdp(&cfg.family)?;
    let (_, q_star) = policy_iteration(&m_true)?;
    let v_star = ValueFn::new(q_star.max_over_actions());

    let jobs: Vec<(usize, u64, u32)> = cfg
        .n_grid
        .iter()
        .enumerate()
        .flat_map(|(i, &n)| (0..cfg.trials_per_n).map(move |t| (i, n, t)))
        .collect();
    jobs.par_iter()
        .map(|&(n_idx, n, trial)| {
            let stream = derive_stream(SWEEP_TAG, ((n_idx as u64) << 32) | trial as u64);
            run_trial(&m_true, &q_star, &v_star, cfg, n, trial, stream).map_err(|e| {
                Error::internal(format!("trial (n={n}, trial={trial}) failed: {e}"))
            })
        })
        .collect()
}

/// Median of a slice; the midpoint average for even lengths.
pub(crate) fn median(xs: &[f64]) -> f64 {
    debug_assert!(!xs.is_empty());
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let k = v.len();
    if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

/// Per-`n` medians of the recorded errors, in grid order.
pub fn per_n_medians(records: &[SweepRecord]) -> Vec<(u64, f64, f64)> {
    let mut ns: Vec<u64> = records.iter().map(|r| r.n).collect();
    ns.sort_unstable();
    ns.dedup();
    ns.into_iter()
        .map(|n| {
            let q: Vec<f64> = records
                .iter()
                .filter(|r| r.n == n)
                .map(|r| r.q_error)
                .collect();
            let v: Vec<f64> = records
                .iter()
                .filter(|r| r.n == n)
                .map(|r| r.v_error)
                .collect();
            (n, median(&q), median(&v))
        })
        .collect()
}

/// Least-squares fit of `log(median q_error)` against `log n`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct ScalingFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// Set when some median error is zero, which makes the log fit
    /// undefined; the numeric fields are zeroed in that case.
    pub degenerate: bool,
}

pub fn fit_scaling(records: &[SweepRecord]) -> Result<ScalingFit> {
    let medians = per_n_medians(records);
    if medians.len() < 3 {
        return Err(Error::invalid(format!(
            "need at least 3 distinct n values, got {}",
            medians.len()
        )));
    }
    if medians.iter().any(|&(_, q, _)| q <= 0.0) {
        return Ok(ScalingFit {
            slope: 0.0,
            intercept: 0.0,
            r_squared: 0.0,
            degenerate: true,
        });
    }
    let pts: Vec<(f64, f64)> = medians
        .iter()
        .map(|&(n, q, _)| ((n as f64).ln(), q.ln()))
        .collect();
    let k = pts.len() as f64;
    let mean_x = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let mean_y = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mean_x).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mean_x) * (p.1 - mean_y)).sum();
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let ss_res: f64 = pts
        .iter()
        .map(|p| (p.1 - (intercept + slope * p.0)).powi(2))
        .sum();
    let ss_tot: f64 = pts.iter().map(|p| (p.1 - mean_y).powi(2)).sum();
    let r_squared = if ss_tot <= f64::EPSILON * k {
        1.0
    } else {
        1.0 - ss_res / ss_tot
    };
    Ok(ScalingFit {
        slope,
        intercept,
        r_squared,
        degenerate: false,
    })
}

/// Median errors at two discounts with everything else held fixed.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct HorizonComparison {
    pub gamma_low: f64,
    pub gamma_high: f64,
    pub median_low: f64,
    pub median_high: f64,
    /// Either median exceeds half the value range, so the comparison sits
    /// in the saturated regime and says nothing about the horizon rate.
    pub saturated: bool,
    /// Both medians are zero (deterministic family); comparison skipped.
    pub skipped: bool,
    /// Unasserted estimate of the horizon exponent
    /// `log(err_hi/err_lo) / log(h_hi/h_lo)`; reported for inspection only.
    pub horizon_exponent: Option<f64>,
}

/// Compare median true error at two discount factors, same family seed and
/// matched trial sub-streams, at a fixed sample size.
pub fn horizon_comparison(
    family: &MdpFamilySpec,
    gamma_low: f64,
    gamma_high: f64,
    n: u64,
    trials: u32,
    eps_opt: f64,
    planner: Planner,
    seed: u64,
) -> Result<HorizonComparison> {
    if !(gamma_low < gamma_high) {
        return Err(Error::invalid("gamma_low must be below gamma_high"));
    }
    let run = |gamma: f64| -> Result<Vec<SweepRecord>> {
        let cfg = SweepConfig {
            family: MdpFamilySpec {
                discount: gamma,
                ..family.clone()
            },
            n_grid: vec![n],
            trials_per_n: trials,
            eps_opt,
            planner,
            delta: 0.1,
            seed,
            measure_wall_time: false,
        };
        run_sweep(&cfg)
    };
    let lo = run(gamma_low)?;
    let hi = run(gamma_high)?;
    let median_low = median(&lo.iter().map(|r| r.q_error).collect::<Vec<_>>());
    let median_high = median(&hi.iter().map(|r| r.q_error).collect::<Vec<_>>());
    let saturated = median_low > 0.5 / (1.0 - gamma_low) || median_high > 0.5 / (1.0 - gamma_high);
    let skipped = median_low == 0.0 && median_high == 0.0;
    let horizon_exponent = if median_low > 0.0 && median_high > 0.0 {
        let h_ratio = ((1.0 - gamma_low) / (1.0 - gamma_high)).ln();
        Some((median_high / median_low).ln() / h_ratio)
    } else {
        None
    };
    Ok(HorizonComparison {
        gamma_low,
        gamma_high,
        median_low,
        median_high,
        saturated,
        skipped,
        horizon_exponent,
    })
}
