//! Numerical certification of the bounds behind plug-in planning.
//!
//! Two kinds of checks live here. Deterministic checks test algebraic
//! identities and inequalities that must hold on every instance: the
//! componentwise error identity, the sandwich bound, resolvent and variance
//! bounds, and the fixed-point and Lipschitz properties of the absorbing
//! construction. Probabilistic checks estimate the coverage of the
//! concentration bounds by Monte-Carlo: a bound promised to hold with
//! probability `1 - delta` must empirically hold in at least a
//! `1 - delta - 3 sigma` fraction of independent trials, the `3 sigma`
//! binomial margin accounting for the finite trial count.

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::absorbing::{make_absorbing, AbsorbingSpec, ValueGrid};
use crate::bounds::{self, BoundParams};
use crate::error::{Error, Result};
use crate::generative::{build_empirical_model, empirical_mdp, sample_row_counts};
use crate::harness::{generate_mdp, plan, MdpFamilySpec, Planner};
use crate::mdp::{
    apply_resolvent, inf_dist, inf_norm, policy_iteration, policy_value_exact, variance_of_value,
    Policy, TabularMdp, ValueFn,
};
use crate::stream::{derive_stream, RngSeed};
use rand::Rng;

/// Residual tolerance for identities that pass through one linear solve.
pub const IDENTITY_TOL: f64 = 1e-8;
/// Slack tolerance for deterministic inequalities.
pub const INEQUALITY_TOL: f64 = 1e-9;

/// Outcome of one lemma check, serialized as a JSON line by the CLI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LemmaReport {
    pub lemma_id: String,
    pub passed: bool,
    /// Residual for identity checks, signed slack for inequality checks
    /// (negative means violated beyond tolerance), and coverage slack over
    /// the binomial threshold for probabilistic checks.
    pub residual_or_slack: f64,
    pub trials: u64,
    #[serde(rename = "S")]
    pub n_states: usize,
    #[serde(rename = "A")]
    pub n_actions: usize,
    pub gamma: f64,
    #[serde(rename = "N")]
    pub n: u64,
    pub delta: f64,
    pub seed: u64,
}

/// Minimum empirical coverage a `1 - delta` bound must show over
/// `trials` independent trials: `1 - delta - 3 sqrt(delta (1-delta) / trials)`.
pub fn coverage_threshold(delta: f64, trials: u64) -> f64 {
    1.0 - delta - 3.0 * (delta * (1.0 - delta) / trials as f64).sqrt()
}

fn check_same_shape(m: &TabularMdp, m_hat: &TabularMdp) -> Result<()> {
    if m.n_states() != m_hat.n_states() || m.n_actions() != m_hat.n_actions() {
        return Err(Error::invalid("MDPs differ in shape"));
    }
    if m.discount() != m_hat.discount() {
        return Err(Error::invalid("MDPs differ in discount"));
    }
    if m.reward_vector() != m_hat.reward_vector() {
        return Err(Error::invalid("MDPs differ in rewards"));
    }
    Ok(())
}

/// Residual of the exact error identity
/// `Q^pi - Qhat^pi = gamma (I - gamma P^pi)^{-1} (P - Phat) Vhat^pi`,
/// where the resolvent is taken in the true MDP. Zero up to solver error.
pub fn check_componentwise_identity(
    m: &TabularMdp,
    m_hat: &TabularMdp,
    pi: &Policy,
) -> Result<f64> {
    check_same_shape(m, m_hat)?;
    let (_, q_true) = policy_value_exact(m, pi)?;
    let (v_hat, q_hat) = policy_value_exact(m_hat, pi)?;
    let lhs = q_true.as_vector() - q_hat.as_vector();
    let diff = m.transition_matrix() * v_hat.as_vector()
        - m_hat.transition_matrix() * v_hat.as_vector();
    let rhs = apply_resolvent(m, pi, &diff)? * m.discount();
    Ok(inf_dist(&lhs, &rhs))
}

/// Worst-case slack of the sandwich bound
/// `Q^pi >= Q* - ||Q^pi - Qhat^pi|| - ||Qhat^pi - Qhat*|| - ||Qhat^{pi*} - Q*||`
/// and its V analogue, evaluated componentwise. Nonnegative up to solver
/// error for every policy, good or bad.
pub fn check_sandwich_bound(m: &TabularMdp, m_hat: &TabularMdp, pi_hat: &Policy) -> Result<f64> {
    check_same_shape(m, m_hat)?;
    let (pi_star, q_star) = policy_iteration(m)?;
    let v_star = q_star.max_over_actions();
    let (v_pi, q_pi) = policy_value_exact(m, pi_hat)?;
    let (vh_pi, qh_pi) = policy_value_exact(m_hat, pi_hat)?;
    let (_, qh_star) = policy_iteration(m_hat)?;
    let vh_star = qh_star.max_over_actions();
    let (_, qh_pistar) = policy_value_exact(m_hat, &pi_star)?;

    let t_model = inf_dist(q_pi.as_vector(), qh_pi.as_vector());
    let t_opt_q = inf_dist(qh_pi.as_vector(), qh_star.as_vector());
    let t_opt_v = inf_dist(vh_pi.as_vector(), &vh_star);
    let t_star = inf_dist(qh_pistar.as_vector(), q_star.as_vector());

    let slack_q = (q_pi.as_vector() - q_star.as_vector())
        .add_scalar(t_model + t_opt_q + t_star)
        .min();
    let slack_v = (v_pi.as_vector() - &v_star)
        .add_scalar(t_model + t_opt_v + t_star)
        .min();
    Ok(slack_q.min(slack_v))
}

/// Slack of the resolvent norm bound
/// `||(I - gamma P^pi)^{-1} v|| <= ||v|| / (1 - gamma)`.
pub fn check_resolvent_bound(m: &TabularMdp, pi: &Policy, v: &DVector<f64>) -> Result<f64> {
    let out = apply_resolvent(m, pi, v)?;
    Ok(inf_norm(v) / (1.0 - m.discount()) - inf_norm(&out))
}

/// Slack of the variance accumulation bound
/// `||(I - gamma P^pi)^{-1} sqrt(Var_P(V^pi))|| <= sqrt(2 / (1-gamma)^3)`.
pub fn check_variance_resolvent(m: &TabularMdp, pi: &Policy) -> Result<f64> {
    let (v, _) = policy_value_exact(m, pi)?;
    let var = variance_of_value(m, &v)?;
    let out = apply_resolvent(m, pi, &var.map(f64::sqrt))?;
    Ok((2.0 / (1.0 - m.discount()).powi(3)).sqrt() - inf_norm(&out))
}

/// Slack of the return-variance range bound
/// `||Sigma^pi|| <= gamma^2 / (1-gamma)^2`.
pub fn check_sigma_range(m: &TabularMdp, pi: &Policy) -> Result<f64> {
    let sigma = crate::mdp::discounted_return_variance(m, pi)?;
    Ok((m.discount() / (1.0 - m.discount())).powi(2) - inf_norm(&sigma))
}

/// Worst residual of the absorbing fixed-point property: pinning any state
/// `s` at its own optimal value leaves `V*` unchanged, and pinning it at a
/// policy's value leaves that policy's `V` unchanged. Checks every state
/// with `n_policies` random policies on top of the optimal branch.
pub fn check_cover1(m: &TabularMdp, n_policies: usize, seed: u64) -> Result<f64> {
    let (_, q_star) = policy_iteration(m)?;
    let v_star = q_star.max_over_actions();
    let mut worst = 0.0f64;
    for s in 0..m.n_states() {
        let abs = make_absorbing(m, &AbsorbingSpec::new(s, v_star[s]))?;
        let (_, q_abs) = policy_iteration(&abs)?;
        worst = worst.max(inf_dist(&q_abs.max_over_actions(), &v_star));
    }
    let mut rng = RngSeed::new(seed, derive_stream(0x31, 0)).rng();
    for _ in 0..n_policies {
        let pi = Policy::new(
            (0..m.n_states())
                .map(|_| rng.random_range(0..m.n_actions()))
                .collect(),
        );
        let (v_pi, _) = policy_value_exact(m, &pi)?;
        for s in 0..m.n_states() {
            let abs = make_absorbing(m, &AbsorbingSpec::new(s, v_pi.value(s)))?;
            let (v_abs, _) = policy_value_exact(&abs, &pi)?;
            worst = worst.max(inf_dist(v_abs.as_vector(), v_pi.as_vector()));
        }
    }
    Ok(worst)
}

/// Worst slack of the absorbing Lipschitz property
/// `||Q*_{s,u} - Q*_{s,u'}|| <= |u - u'|` (and the same for fixed
/// policies), over `n_samples` random `(s, u, u')` draws.
pub fn check_cover2(m: &TabularMdp, n_samples: usize, seed: u64) -> Result<f64> {
    let mut rng = RngSeed::new(seed, derive_stream(0x32, 0)).rng();
    let range = m.value_range();
    let mut worst = f64::INFINITY;
    for _ in 0..n_samples {
        let s = rng.random_range(0..m.n_states());
        let u = rng.random::<f64>() * range;
        let u2 = rng.random::<f64>() * range;
        let m_u = make_absorbing(m, &AbsorbingSpec::new(s, u))?;
        let m_u2 = make_absorbing(m, &AbsorbingSpec::new(s, u2))?;
        let (_, q_u) = policy_iteration(&m_u)?;
        let (_, q_u2) = policy_iteration(&m_u2)?;
        worst = worst.min((u - u2).abs() - inf_dist(q_u.as_vector(), q_u2.as_vector()));
        let pi = Policy::new(
            (0..m.n_states())
                .map(|_| rng.random_range(0..m.n_actions()))
                .collect(),
        );
        let (_, qp_u) = policy_value_exact(&m_u, &pi)?;
        let (_, qp_u2) = policy_value_exact(&m_u2, &pi)?;
        worst = worst.min((u - u2).abs() - inf_dist(qp_u.as_vector(), qp_u2.as_vector()));
    }
    Ok(worst)
}

/// Empirical coverage of the crude Hoeffding value bounds: the fraction of
/// independent sample draws in which both `||Q* - Qhat^{pi*}||` and
/// `||Q* - Qhat*||` stay below the crude bound.
pub fn check_crude_bounds(
    m: &TabularMdp,
    n: u64,
    delta: f64,
    trials: u64,
    seed: u64,
) -> Result<f64> {
    let p = BoundParams::new(
        m.n_states(),
        m.n_actions(),
        m.discount(),
        delta,
        n,
        bounds::DEFAULT_C,
    )?;
    let bound = bounds::crude_delta(&p);
    let (pi_star, q_star) = policy_iteration(m)?;
    let covered: Vec<bool> = (0..trials)
        .into_par_iter()
        .map(|trial| -> Result<bool> {
            let model =
                build_empirical_model(m, n, RngSeed::new(seed, derive_stream(0x41, trial)))?;
            let m_hat = empirical_mdp(m, &model)?;
            let (_, qh_star) = policy_iteration(&m_hat)?;
            let (_, qh_pistar) = policy_value_exact(&m_hat, &pi_star)?;
            Ok(
                inf_dist(q_star.as_vector(), qh_pistar.as_vector()) <= bound
                    && inf_dist(q_star.as_vector(), qh_star.as_vector()) <= bound,
            )
        })
        .collect::<Result<_>>()?;
    Ok(covered.iter().filter(|&&c| c).count() as f64 / trials as f64)
}

/// Empirical coverage of the Bernstein union bound over a value grid.
///
/// The decoupling is structural: the grid value functions come from
/// empirical absorbing MDPs whose `(s, .)` rows are overwritten by the
/// absorbing transition, so they are independent of the `(s, a)` draws by
/// construction. Each trial then resamples only the `(s, a)` row and tests
/// `|(P_{s,a} - Phat_{s,a}) . Vhat*_{s,u}|` against the Bernstein
/// right-hand side for every `u` in the grid simultaneously.
pub fn check_bernstein_lemma(
    m: &TabularMdp,
    s: usize,
    a: usize,
    grid: &ValueGrid,
    n: u64,
    delta: f64,
    trials: u64,
    seed: u64,
) -> Result<f64> {
    m.check_pair(s, a)?;
    let p = BoundParams::new(
        m.n_states(),
        m.n_actions(),
        m.discount(),
        delta,
        n,
        bounds::DEFAULT_C,
    )?;
    let idx = m.pair_index(s, a);
    let true_row = m.transition_matrix().row(idx).transpose();

    // One base draw fixes the off-row samples for the whole check.
    let base = build_empirical_model(m, n, RngSeed::new(seed, derive_stream(0x42, 0)))?;
    let m_hat = empirical_mdp(m, &base)?;
    let per_u: Vec<(DVector<f64>, f64, f64)> = grid
        .points()
        .iter()
        .map(|&u| -> Result<_> {
            let abs = make_absorbing(&m_hat, &AbsorbingSpec::new(s, u))?;
            let (_, q_abs) = policy_iteration(&abs)?;
            let v_abs = q_abs.max_over_actions();
            let var = variance_of_value(m, &ValueFn::new(v_abs.clone()))?[idx];
            let rhs = bounds::bernstein_rhs(&p, grid.len(), var);
            let true_dot = true_row.dot(&v_abs);
            Ok((v_abs, rhs, true_dot))
        })
        .collect::<Result<_>>()?;

    let covered: Vec<bool> = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let row = sample_row_counts(m, s, a, n, RngSeed::new(seed, derive_stream(0x43, trial + 1)));
            let p_hat = DVector::from_iterator(
                m.n_states(),
                row.iter().map(|&c| c as f64 / n as f64),
            );
            per_u.iter().all(|(v_abs, rhs, true_dot)| {
                (true_dot - p_hat.dot(v_abs)).abs() <= *rhs
            })
        })
        .collect();
    Ok(covered.iter().filter(|&&c| c).count() as f64 / trials as f64)
}

/// Empirical coverage of the discretized concentration bound
/// `|(P - Phat) Vhat*| <= sqrt(8 L / N) sqrt(Var_P(Vhat*)) + Delta'`,
/// tested componentwise for both the empirical optimal value and the
/// empirical value of the true optimal policy.
pub fn check_cover4(
    m: &TabularMdp,
    n: u64,
    delta: f64,
    trials: u64,
    seed: u64,
    c: f64,
) -> Result<f64> {
    let p = BoundParams::new(m.n_states(), m.n_actions(), m.discount(), delta, n, c)?;
    let sa = (m.n_states() * m.n_actions()) as f64;
    let log8 = (8.0 * sa / ((1.0 - m.discount()) * delta)).ln();
    let sqrt_term = (8.0 * log8 / n as f64).sqrt();
    let dprime = bounds::delta_prime(&p);
    let (pi_star, _) = policy_iteration(m)?;

    let covered: Vec<bool> = (0..trials)
        .into_par_iter()
        .map(|trial| -> Result<bool> {
            let model =
                build_empirical_model(m, n, RngSeed::new(seed, derive_stream(0x44, trial)))?;
            let m_hat = empirical_mdp(m, &model)?;
            let (_, qh_star) = policy_iteration(&m_hat)?;
            let vh_star = qh_star.max_over_actions();
            let (vh_pistar, _) = policy_value_exact(&m_hat, &pi_star)?;
            for v in [&vh_star, vh_pistar.as_vector()] {
                let lhs = m.transition_matrix() * v - m_hat.transition_matrix() * v;
                let var = variance_of_value(m, &ValueFn::new(v.clone()))?;
                for i in 0..m.n_pairs() {
                    if lhs[i].abs() > sqrt_term * var[i].sqrt() + dprime {
                        return Ok(false);
                    }
                }
            }
            Ok(true)
        })
        .collect::<Result<_>>()?;
    Ok(covered.iter().filter(|&&c| c).count() as f64 / trials as f64)
}

/// Empirical coverage of the final value-error bounds: per trial, plan an
/// `eps_opt`-optimal policy in the empirical MDP and test
/// `||Q^pihat - Qhat^pihat||` and `||Q* - Qhat^{pi*}||` against the two
/// right-hand sides. Errors with a vacuous-bound error when `alpha >= 1`.
pub fn check_final_bound(
    m: &TabularMdp,
    n: u64,
    delta: f64,
    eps_opt: f64,
    trials: u64,
    seed: u64,
    c: f64,
    planner: Planner,
) -> Result<f64> {
    let p = BoundParams::new(m.n_states(), m.n_actions(), m.discount(), delta, n, c)?;
    let (rhs_pihat, rhs_pistar) = bounds::final_bound_rhs(&p, eps_opt)?;
    let (pi_star, q_star) = policy_iteration(m)?;

    let covered: Vec<bool> = (0..trials)
        .into_par_iter()
        .map(|trial| -> Result<bool> {
            let model =
                build_empirical_model(m, n, RngSeed::new(seed, derive_stream(0x45, trial)))?;
            let m_hat = empirical_mdp(m, &model)?;
            let (pi_hat, _) = plan(&m_hat, planner, eps_opt)?;
            let (_, qh_pihat) = policy_value_exact(&m_hat, &pi_hat)?;
            let (_, q_pihat) = policy_value_exact(m, &pi_hat)?;
            let (_, qh_pistar) = policy_value_exact(&m_hat, &pi_star)?;
            Ok(
                inf_dist(q_pihat.as_vector(), qh_pihat.as_vector()) <= rhs_pihat
                    && inf_dist(q_star.as_vector(), qh_pistar.as_vector()) <= rhs_pistar,
            )
        })
        .collect::<Result<_>>()?;
    Ok(covered.iter().filter(|&&c| c).count() as f64 / trials as f64)
}

/// Empirical coverage of the main sample-complexity guarantee: with
/// `N = required_n(epsilon)` samples per pair, the policy planned in the
/// empirical MDP must satisfy `Q^pihat >= Q* - epsilon - 9 eps_opt/(1-gamma)`
/// (and the V analogue) componentwise in the true MDP.
#[allow(clippy::too_many_arguments)]
pub fn check_theorem(
    m: &TabularMdp,
    epsilon: f64,
    delta: f64,
    eps_opt: f64,
    trials: u64,
    seed: u64,
    c: f64,
    planner: Planner,
    enforce_gamma_half: bool,
) -> Result<f64> {
    if m.discount() < 0.5 {
        if enforce_gamma_half {
            return Err(Error::invalid(format!(
                "the guarantee assumes gamma >= 1/2, got {}",
                m.discount()
            )));
        }
        eprintln!(
            "warning: gamma = {} is below 1/2, outside the guarantee's stated range",
            m.discount()
        );
    }
    let p = BoundParams::new(m.n_states(), m.n_actions(), m.discount(), delta, 1, c)?;
    let n = bounds::required_n(epsilon, &p)?;
    let (_, q_star) = policy_iteration(m)?;
    let v_star = q_star.max_over_actions();
    let allowed = epsilon + 9.0 * eps_opt / (1.0 - m.discount());

    let covered: Vec<bool> = (0..trials)
        .into_par_iter()
        .map(|trial| -> Result<bool> {
            let model =
                build_empirical_model(m, n, RngSeed::new(seed, derive_stream(0x46, trial)))?;
            let m_hat = empirical_mdp(m, &model)?;
            let (pi_hat, _) = plan(&m_hat, planner, eps_opt)?;
            let (v_pihat, q_pihat) = policy_value_exact(m, &pi_hat)?;
            let q_ok = q_pihat
                .as_vector()
                .iter()
                .zip(q_star.as_vector().iter())
                .all(|(got, star)| *got >= star - allowed);
            let v_ok = v_pihat
                .as_vector()
                .iter()
                .zip(v_star.iter())
                .all(|(got, star)| *got >= star - allowed);
            Ok(q_ok && v_ok)
        })
        .collect::<Result<_>>()?;
    Ok(covered.iter().filter(|&&c| c).count() as f64 / trials as f64)
}

/// Configuration of the full verification battery.
#[derive(Debug, Clone, PartialEq)]
pub struct VerifyConfig {
    pub family: MdpFamilySpec,
    /// Samples per pair for the sample-based checks.
    pub n: u64,
    pub delta: f64,
    pub eps_opt: f64,
    /// Accuracy target for the end-to-end guarantee check.
    pub epsilon: f64,
    pub trials: u64,
    pub seed: u64,
    pub c: f64,
    pub planner: Planner,
    /// Cap on the value-grid size for the union-bound check.
    pub grid_cap: usize,
    /// Reject discounts below 1/2 instead of warning.
    pub enforce_gamma_half: bool,
}

impl VerifyConfig {
    /// Defaults sized so that every check is non-vacuous on the stock
    /// 5x3, gamma = 0.9 family: the final-bound check needs
    /// `alpha < 1`, which at that shape requires roughly `N > 6100`.
    pub fn new(family: MdpFamilySpec) -> Self {
        VerifyConfig {
            family,
            n: 8192,
            delta: 0.1,
            eps_opt: 1e-6,
            epsilon: 0.5,
            trials: 500,
            seed: 0,
            c: bounds::DEFAULT_C,
            planner: Planner::ValueIteration,
            grid_cap: 4096,
            enforce_gamma_half: false,
        }
    }
}

fn report(
    cfg: &VerifyConfig,
    lemma_id: &str,
    value: f64,
    passed: bool,
    trials: u64,
    n: u64,
) -> LemmaReport {
    LemmaReport {
        lemma_id: lemma_id.to_string(),
        passed,
        residual_or_slack: value,
        trials,
        n_states: cfg.family.n_states,
        n_actions: cfg.family.n_actions,
        gamma: cfg.family.discount,
        n,
        delta: cfg.delta,
        seed: cfg.seed,
    }
}

/// Run the whole battery on the configured family instance and return one
/// report per lemma, in a fixed order. Deterministic given the config.
pub fn run_suite(cfg: &VerifyConfig) -> Result<Vec<LemmaReport>> {
    let m = generate_mdp(&cfg.family)?;
    let mut rng = RngSeed::new(cfg.seed, derive_stream(0x50, 0)).rng();
    let mut reports = Vec::new();

    // Deterministic identities and inequalities, on a handful of draws.
    let policies: Vec<Policy> = (0..3)
        .map(|_| {
            Policy::new(
                (0..m.n_states())
                    .map(|_| rng.random_range(0..m.n_actions()))
                    .collect(),
            )
        })
        .collect();
    let model = build_empirical_model(&m, cfg.n, RngSeed::new(cfg.seed, derive_stream(0x51, 0)))?;
    let m_hat = empirical_mdp(&m, &model)?;

    let mut worst_identity = 0.0f64;
    let mut worst_sandwich = f64::INFINITY;
    let mut worst_resolvent = f64::INFINITY;
    let mut worst_var_res = f64::INFINITY;
    let mut worst_sigma = f64::INFINITY;
    for pi in &policies {
        worst_identity = worst_identity.max(check_componentwise_identity(&m, &m_hat, pi)?);
        worst_sandwich = worst_sandwich.min(check_sandwich_bound(&m, &m_hat, pi)?);
        let v = DVector::from_fn(m.n_pairs(), |_, _| rng.random::<f64>() * 2.0 - 1.0);
        worst_resolvent = worst_resolvent.min(check_resolvent_bound(&m, pi, &v)?);
        worst_var_res = worst_var_res.min(check_variance_resolvent(&m, pi)?);
        worst_sigma = worst_sigma.min(check_sigma_range(&m, pi)?);
    }
    let k = policies.len() as u64;
    reports.push(report(
        cfg,
        "componentwise-identity",
        worst_identity,
        worst_identity <= IDENTITY_TOL,
        k,
        cfg.n,
    ));
    reports.push(report(
        cfg,
        "sandwich",
        worst_sandwich,
        worst_sandwich >= -INEQUALITY_TOL,
        k,
        cfg.n,
    ));
    reports.push(report(
        cfg,
        "resolvent",
        worst_resolvent,
        worst_resolvent >= -INEQUALITY_TOL,
        k,
        cfg.n,
    ));
    reports.push(report(
        cfg,
        "variance-resolvent",
        worst_var_res,
        worst_var_res >= -INEQUALITY_TOL,
        k,
        cfg.n,
    ));
    reports.push(report(
        cfg,
        "sigma-range",
        worst_sigma,
        worst_sigma >= -INEQUALITY_TOL,
        k,
        cfg.n,
    ));

    let cover1 = check_cover1(&m, 5, cfg.seed)?;
    reports.push(report(
        cfg,
        "cover1-fixed-point",
        cover1,
        cover1 <= IDENTITY_TOL,
        (m.n_states() * 6) as u64,
        cfg.n,
    ));
    let cover2 = check_cover2(&m, 20, cfg.seed)?;
    reports.push(report(
        cfg,
        "cover2-lipschitz",
        cover2,
        cover2 >= -INEQUALITY_TOL,
        20,
        cfg.n,
    ));

    // Probabilistic coverage checks; slack over the binomial threshold.
    let threshold = coverage_threshold(cfg.delta, cfg.trials);
    let push_coverage = |reports: &mut Vec<LemmaReport>, id: &str, coverage: f64, n: u64| {
        reports.push(report(
            cfg,
            id,
            coverage - threshold,
            coverage >= threshold,
            cfg.trials,
            n,
        ));
    };

    let crude = check_crude_bounds(&m, cfg.n, cfg.delta, cfg.trials, cfg.seed)?;
    push_coverage(&mut reports, "crude-value-bounds", crude, cfg.n);

    let (_, q_star) = policy_iteration(&m)?;
    let v_star = q_star.max_over_actions();
    let half_delta = BoundParams::new(
        m.n_states(),
        m.n_actions(),
        m.discount(),
        cfg.delta / 2.0,
        cfg.n,
        cfg.c,
    )?;
    let grid = crate::absorbing::build_value_grid(
        v_star[0],
        bounds::crude_delta(&half_delta),
        crate::absorbing::default_grid_size(m.discount(), cfg.grid_cap),
    )?;
    let bern = check_bernstein_lemma(&m, 0, 0, &grid, cfg.n, cfg.delta, cfg.trials, cfg.seed)?;
    push_coverage(&mut reports, "bernstein-union", bern, cfg.n);

    let cov4 = check_cover4(&m, cfg.n, cfg.delta, cfg.trials, cfg.seed, cfg.c)?;
    push_coverage(&mut reports, "cover4", cov4, cfg.n);

    let fin = check_final_bound(
        &m,
        cfg.n,
        cfg.delta,
        cfg.eps_opt,
        cfg.trials,
        cfg.seed,
        cfg.c,
        cfg.planner,
    )?;
    push_coverage(&mut reports, "final-bound", fin, cfg.n);

    let theorem_n = bounds::required_n(
        cfg.epsilon,
        &BoundParams::new(
            m.n_states(),
            m.n_actions(),
            m.discount(),
            cfg.delta,
            1,
            cfg.c,
        )?,
    )?;
    let thm = check_theorem(
        &m,
        cfg.epsilon,
        cfg.delta,
        cfg.eps_opt,
        cfg.trials,
        cfg.seed,
        cfg.c,
        cfg.planner,
        cfg.enforce_gamma_half,
    )?;
    push_coverage(&mut reports, "theorem", thm, theorem_n);

    Ok(reports)
}

/// Exit code the CLI maps a report set onto: 0 when everything passed,
/// 2 when any lemma check failed.
pub fn reports_exit_code(reports: &[LemmaReport]) -> i32 {
    if reports.iter().all(|r| r.passed) {
        0
    } else {
        2
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generative::build_empirical_model;
    use crate::harness::MdpFamily;

    fn dirichlet(ns: usize, na: usize, gamma: f64, seed: u64) -> TabularMdp {
        generate_mdp(&MdpFamilySpec {
            family: MdpFamily::Dirichlet,
            n_states: ns,
            n_actions: na,
            discount: gamma,
            branching: None,
            concentration: 1.0,
            seed,
        })
        .unwrap()
    }

    fn chain() -> TabularMdp {
        TabularMdp::new(2, 1, 0.5, vec![0.0, 1.0], vec![0.0, 1.0, 0.0, 1.0]).unwrap()
    }

    fn random_policy(m: &TabularMdp, seed: u64) -> Policy {
        let mut rng = RngSeed::new(seed, 9).rng();
        Policy::new(
            (0..m.n_states())
                .map(|_| rng.random_range(0..m.n_actions()))
                .collect(),
        )
    }

    #[test]
    fn identity_zero_when_models_equal() {
        let m = dirichlet(5, 3, 0.9, 1);
        let pi = random_policy(&m, 1);
        let r = check_componentwise_identity(&m, &m, &pi).unwrap();
        assert!(r <= 1e-12, "residual {r}");
    }

    #[test]
    fn identity_zero_for_single_state() {
        // One state forces Phat = P regardless of the draws.
        let m = TabularMdp::new(1, 2, 0.9, vec![0.3, 0.7], vec![1.0, 1.0]).unwrap();
        let e = build_empirical_model(&m, 5, RngSeed::new(3, 0)).unwrap();
        let m_hat = empirical_mdp(&m, &e).unwrap();
        let r = check_componentwise_identity(&m, &m_hat, &Policy::new(vec![1])).unwrap();
        assert!(r <= 1e-12);
    }

    #[test]
    fn identity_holds_at_tiny_sample_size() {
        let m = dirichlet(6, 2, 0.9, 2);
        let e = build_empirical_model(&m, 5, RngSeed::new(4, 0)).unwrap();
        let m_hat = empirical_mdp(&m, &e).unwrap();
        for seed in 0..5 {
            let pi = random_policy(&m, seed);
            let r = check_componentwise_identity(&m, &m_hat, &pi).unwrap();
            assert!(r <= IDENTITY_TOL, "residual {r}");
        }
    }

    #[test]
    fn identity_rejects_mismatched_rewards() {
        let m = dirichlet(4, 2, 0.9, 3);
        let other = dirichlet(4, 2, 0.9, 5); // different rewards
        let pi = random_policy(&m, 0);
        assert!(check_componentwise_identity(&m, &other, &pi).is_err());
    }

    #[test]
    fn sandwich_nonnegative_with_equal_models() {
        let m = dirichlet(5, 3, 0.9, 7);
        let (pi_star, _) = policy_iteration(&m).unwrap();
        let s = check_sandwich_bound(&m, &m, &pi_star).unwrap();
        assert!(s >= -1e-12, "slack {s}");
    }

    #[test]
    fn sandwich_holds_for_bad_policies() {
        let m = dirichlet(5, 3, 0.9, 8);
        let e = build_empirical_model(&m, 10, RngSeed::new(5, 0)).unwrap();
        let m_hat = empirical_mdp(&m, &e).unwrap();
        for seed in 0..10 {
            let pi = random_policy(&m, 100 + seed);
            let s = check_sandwich_bound(&m, &m_hat, &pi).unwrap();
            assert!(s >= -INEQUALITY_TOL, "slack {s}");
        }
    }

    #[test]
    fn cover1_and_cover2_on_random_mdp() {
        let m = dirichlet(6, 3, 0.9, 9);
        assert!(check_cover1(&m, 20, 1).unwrap() <= IDENTITY_TOL);
        assert!(check_cover2(&m, 20, 1).unwrap() >= -INEQUALITY_TOL);
    }

    #[test]
    fn crude_coverage_is_one_on_deterministic_mdp() {
        let c = chain();
        let cov = check_crude_bounds(&c, 7, 0.1, 50, 3).unwrap();
        assert_eq!(cov, 1.0);
    }

    #[test]
    fn crude_coverage_is_one_at_huge_n() {
        let m = dirichlet(3, 2, 0.9, 10);
        let cov = check_crude_bounds(&m, 1_000_000, 0.1, 20, 4).unwrap();
        assert_eq!(cov, 1.0);
    }

    #[test]
    fn bernstein_deterministic_row_always_covered() {
        let c = chain();
        let grid = crate::absorbing::build_value_grid(1.0, 0.5, 5).unwrap();
        let cov = check_bernstein_lemma(&c, 0, 0, &grid, 20, 0.1, 50, 5).unwrap();
        assert_eq!(cov, 1.0);
    }

    #[test]
    fn bernstein_singleton_grid_is_plain_bernstein() {
        let m = dirichlet(5, 3, 0.9, 11);
        let grid = ValueGrid::singleton(5.0);
        let cov = check_bernstein_lemma(&m, 1, 2, &grid, 200, 0.1, 200, 6).unwrap();
        assert!(cov >= coverage_threshold(0.1, 200), "coverage {cov}");
    }

    #[test]
    fn final_bound_vacuous_at_tiny_n() {
        let m = dirichlet(5, 3, 0.9, 12);
        let e = check_final_bound(&m, 2, 0.1, 1e-6, 10, 7, bounds::DEFAULT_C, Planner::ValueIteration);
        assert!(matches!(e, Err(Error::BoundVacuous { .. })));
    }

    #[test]
    fn theorem_rejects_out_of_range_epsilon() {
        let m = dirichlet(3, 2, 0.9, 13);
        let e = check_theorem(
            &m,
            10.0,
            0.1,
            1e-6,
            10,
            8,
            bounds::DEFAULT_C,
            Planner::ValueIteration,
            false,
        );
        assert!(e.is_err());
    }

    #[test]
    fn theorem_enforces_gamma_range_when_asked() {
        let m = dirichlet(3, 2, 0.4, 14);
        let e = check_theorem(
            &m,
            0.5,
            0.1,
            1e-6,
            1,
            9,
            bounds::DEFAULT_C,
            Planner::ValueIteration,
            true,
        );
        assert!(e.is_err());
    }

    #[test]
    fn reports_serialize_losslessly_and_in_order() {
        let r = LemmaReport {
            lemma_id: "demo".into(),
            passed: true,
            residual_or_slack: 0.1 + 0.2,
            trials: 3,
            n_states: 5,
            n_actions: 3,
            gamma: 0.9,
            n: 100,
            delta: 0.1,
            seed: 42,
        };
        let line = serde_json::to_string(&r).unwrap();
        assert!(line.starts_with("{\"lemma_id\":\"demo\",\"passed\":true"));
        assert!(line.contains("\"S\":5") && line.contains("\"N\":100"));
        let back: LemmaReport = serde_json::from_str(&line).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn exit_code_reflects_failures() {
        let mut r = LemmaReport {
            lemma_id: "demo".into(),
            passed: true,
            residual_or_slack: 0.0,
            trials: 1,
            n_states: 1,
            n_actions: 1,
            gamma: 0.5,
            n: 1,
            delta: 0.1,
            seed: 0,
        };
        assert_eq!(reports_exit_code(&[r.clone()]), 0);
        r.passed = false;
        assert_eq!(reports_exit_code(&[r]), 2);
        assert_eq!(reports_exit_code(&[]), 0);
    }

    #[test]
    fn suite_is_deterministic() {
        // gamma = 0.5 keeps every check non-vacuous at a small N, so the
        // whole battery runs in well under a second.
        let mut cfg = VerifyConfig::new(MdpFamilySpec::dirichlet(3, 2, 0.5, 21));
        cfg.n = 100;
        cfg.trials = 30;
        cfg.epsilon = 1.0;
        cfg.seed = 17;
        let a = run_suite(&cfg).unwrap();
        let b = run_suite(&cfg).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|r| r.passed), "{a:#?}");
    }
}
