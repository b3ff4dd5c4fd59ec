//! Tabular MDPs and exact dynamic programming.
//!
//! A [`TabularMdp`] stores the transition kernel as an `(S*A) x S` matrix
//! whose row `s * n_actions + a` is the next-state distribution of the pair
//! `(s, a)`. Action-value functions and other per-pair quantities use the
//! same pair ordering. Everything here is a pure function of immutable
//! inputs; linear systems are solved by dense LU with partial pivoting,
//! which is exact enough for the few-hundred-state instances this crate
//! targets.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Tolerance for "this row must sum to one".
pub const ROW_SUM_TOL: f64 = 1e-12;
/// Residual tolerance for exact policy evaluation.
pub const EVAL_RESIDUAL_TOL: f64 = 1e-10;
/// Bellman-optimality residual tolerance for policy iteration.
pub const PI_RESIDUAL_TOL: f64 = 1e-9;

/// A finite discounted MDP with known deterministic rewards.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularMdp {
    n_states: usize,
    n_actions: usize,
    /// `(S*A) x S`; row `s * n_actions + a` is `P(. | s, a)`.
    transition: DMatrix<f64>,
    /// Length `S*A`, same pair ordering.
    reward: DVector<f64>,
    discount: f64,
    /// Set on MDPs produced by the absorbing construction, whose rewards
    /// may legitimately leave `[0, 1]`.
    absorbing_derived: bool,
}

impl TabularMdp {
    /// Build and validate an MDP from flat row-major data.
    ///
    /// `transition[(s * n_actions + a) * n_states + s2] = P(s2 | s, a)`,
    /// `reward[s * n_actions + a] = r(s, a)`.
    pub fn new(
        n_states: usize,
        n_actions: usize,
        discount: f64,
        reward: Vec<f64>,
        transition: Vec<f64>,
    ) -> Result<Self> {
        if n_states == 0 || n_actions == 0 {
            return Err(Error::invalid("n_states and n_actions must be positive"));
        }
        if reward.len() != n_states * n_actions {
            return Err(Error::invalid(format!(
                "reward has {} entries, expected {}",
                reward.len(),
                n_states * n_actions
            )));
        }
        if transition.len() != n_states * n_actions * n_states {
            return Err(Error::invalid(format!(
                "transition has {} entries, expected {}",
                transition.len(),
                n_states * n_actions * n_states
            )));
        }
        let transition = DMatrix::from_row_slice(n_states * n_actions, n_states, &transition);
        let reward = DVector::from_vec(reward);
        Self::from_parts(n_states, n_actions, discount, reward, transition, false)
    }

    /// Internal constructor; validation depends on the absorbing flag.
    pub(crate) fn from_parts(
        n_states: usize,
        n_actions: usize,
        discount: f64,
        reward: DVector<f64>,
        transition: DMatrix<f64>,
        absorbing_derived: bool,
    ) -> Result<Self> {
        if !(discount > 0.0 && discount < 1.0) {
            return Err(Error::invalid(format!(
                "discount must lie in (0, 1), got {discount}"
            )));
        }
        let m = TabularMdp {
            n_states,
            n_actions,
            transition,
            reward,
            discount,
            absorbing_derived,
        };
        m.validate()?;
        Ok(m)
    }

    fn validate(&self) -> Result<()> {
        for s in 0..self.n_states {
            for a in 0..self.n_actions {
                let i = self.pair_index(s, a);
                let r = self.reward[i];
                if !r.is_finite() {
                    return Err(Error::invalid(format!("reward({s},{a}) is not finite")));
                }
                if !self.absorbing_derived && !(-ROW_SUM_TOL..=1.0 + ROW_SUM_TOL).contains(&r) {
                    return Err(Error::invalid(format!(
                        "reward({s},{a}) = {r} outside [0, 1]"
                    )));
                }
                let mut sum = 0.0;
                for s2 in 0..self.n_states {
                    let p = self.transition[(i, s2)];
                    if !(p >= 0.0) {
                        return Err(Error::invalid(format!(
                            "transition({s},{a},{s2}) = {p} is negative or NaN"
                        )));
                    }
                    sum += p;
                }
                if (sum - 1.0).abs() > ROW_SUM_TOL {
                    return Err(Error::invalid(format!(
                        "transition row ({s},{a}) sums to {sum}, expected 1"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn n_pairs(&self) -> usize {
        self.n_states * self.n_actions
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn is_absorbing_derived(&self) -> bool {
        self.absorbing_derived
    }

    /// Row index of the pair `(s, a)` in pair-ordered vectors and matrices.
    pub fn pair_index(&self, s: usize, a: usize) -> usize {
        debug_assert!(s < self.n_states && a < self.n_actions);
        s * self.n_actions + a
    }

    pub fn transition_prob(&self, s: usize, a: usize, s2: usize) -> f64 {
        self.transition[(self.pair_index(s, a), s2)]
    }

    /// The `(S*A) x S` kernel matrix.
    pub fn transition_matrix(&self) -> &DMatrix<f64> {
        &self.transition
    }

    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.reward[self.pair_index(s, a)]
    }

    /// Rewards as a pair-ordered vector.
    pub fn reward_vector(&self) -> &DVector<f64> {
        &self.reward
    }

    /// Upper end of the value range for rewards in `[0, 1]`.
    pub fn value_range(&self) -> f64 {
        1.0 / (1.0 - self.discount)
    }

    pub(crate) fn check_policy(&self, pi: &Policy) -> Result<()> {
        if pi.len() != self.n_states {
            return Err(Error::invalid(format!(
                "policy has {} entries, expected {}",
                pi.len(),
                self.n_states
            )));
        }
        for (s, &a) in pi.actions().iter().enumerate() {
            if a >= self.n_actions {
                return Err(Error::invalid(format!(
                    "policy action {a} at state {s} out of range (A = {})",
                    self.n_actions
                )));
            }
        }
        Ok(())
    }

    pub(crate) fn check_pair(&self, s: usize, a: usize) -> Result<()> {
        if s >= self.n_states || a >= self.n_actions {
            return Err(Error::invalid(format!(
                "state-action ({s},{a}) out of range ({}x{})",
                self.n_states, self.n_actions
            )));
        }
        Ok(())
    }
}

/// A deterministic stationary policy.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Policy {
    actions: Vec<usize>,
}

impl Policy {
    pub fn new(actions: Vec<usize>) -> Self {
        Policy { actions }
    }

    pub fn action(&self, s: usize) -> usize {
        self.actions[s]
    }

    pub fn actions(&self) -> &[usize] {
        &self.actions
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

/// A state-value function.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueFn {
    values: DVector<f64>,
}

impl ValueFn {
    pub fn new(values: DVector<f64>) -> Self {
        ValueFn { values }
    }

    pub fn value(&self, s: usize) -> f64 {
        self.values[s]
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.len() == 0
    }
}

/// An action-value function, stored pair-ordered.
#[derive(Debug, Clone, PartialEq)]
pub struct QFn {
    n_states: usize,
    n_actions: usize,
    values: DVector<f64>,
}

impl QFn {
    pub fn new(n_states: usize, n_actions: usize, values: DVector<f64>) -> Result<Self> {
        if values.len() != n_states * n_actions {
            return Err(Error::invalid(format!(
                "Q has {} entries, expected {}",
                values.len(),
                n_states * n_actions
            )));
        }
        Ok(QFn {
            n_states,
            n_actions,
            values,
        })
    }

    pub fn zeros(n_states: usize, n_actions: usize) -> Self {
        QFn {
            n_states,
            n_actions,
            values: DVector::zeros(n_states * n_actions),
        }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn value(&self, s: usize, a: usize) -> f64 {
        self.values[s * self.n_actions + a]
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.values
    }

    /// `max_a Q(s, a)` for every state.
    pub fn max_over_actions(&self) -> DVector<f64> {
        DVector::from_fn(self.n_states, |s, _| {
            (0..self.n_actions)
                .map(|a| self.value(s, a))
                .fold(f64::NEG_INFINITY, f64::max)
        })
    }

    fn matches(&self, m: &TabularMdp) -> Result<()> {
        if self.n_states != m.n_states() || self.n_actions != m.n_actions() {
            return Err(Error::invalid(format!(
                "Q is {}x{}, MDP is {}x{}",
                self.n_states,
                self.n_actions,
                m.n_states(),
                m.n_actions()
            )));
        }
        Ok(())
    }
}

/// Sup norm of a vector.
pub fn inf_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0, |acc, x| acc.max(x.abs()))
}

/// Sup-norm distance between two pair-ordered vectors.
pub fn inf_dist(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b.iter())
        .fold(0.0, |acc, (x, y)| acc.max((x - y).abs()))
}

/// The state-to-state and pair-to-pair transition matrices of a policy.
///
/// The state matrix has row `s` equal to `P(. | s, pi(s))`. The pair matrix
/// sends `(s, a)` to `(s2, pi(s2))` with probability `P(s2 | s, a)` and to
/// every other pair with probability zero. Both are row-stochastic.
pub fn policy_transition_matrix(
    m: &TabularMdp,
    pi: &Policy,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    m.check_policy(pi)?;
    let (ns, na) = (m.n_states(), m.n_actions());
    let state = DMatrix::from_fn(ns, ns, |s, s2| m.transition_prob(s, pi.action(s), s2));
    let mut pair = DMatrix::zeros(ns * na, ns * na);
    for s in 0..ns {
        for a in 0..na {
            let i = m.pair_index(s, a);
            for s2 in 0..ns {
                pair[(i, m.pair_index(s2, pi.action(s2)))] = m.transition_prob(s, a, s2);
            }
        }
    }
    Ok((state, pair))
}

/// `I - gamma * P^pi`, the system matrix of exact policy evaluation.
fn evaluation_system(m: &TabularMdp, pi: &Policy) -> Result<DMatrix<f64>> {
    let (_, p_pi) = policy_transition_matrix(m, pi)?;
    let n = m.n_pairs();
    let mut sys = p_pi * (-m.discount());
    for i in 0..n {
        sys[(i, i)] += 1.0;
    }
    Ok(sys)
}

fn solve_dense(sys: &DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    sys.clone()
        .lu()
        .solve(rhs)
        .ok_or_else(|| Error::internal("resolvent system is singular"))
}

/// Exact policy evaluation: solves `(I - gamma P^pi) Q = r` and reads off
/// `V(s) = Q(s, pi(s))`. Fails with an internal error if the solve residual
/// exceeds [`EVAL_RESIDUAL_TOL`], which cannot happen for a valid MDP.
pub fn policy_value_exact(m: &TabularMdp, pi: &Policy) -> Result<(ValueFn, QFn)> {
    let sys = evaluation_system(m, pi)?;
    let q = solve_dense(&sys, m.reward_vector())?;
    let residual = inf_norm(&(&sys * &q - m.reward_vector()));
    if residual > EVAL_RESIDUAL_TOL {
        return Err(Error::internal(format!(
            "policy evaluation residual {residual} exceeds {EVAL_RESIDUAL_TOL}"
        )));
    }
    let v = DVector::from_fn(m.n_states(), |s, _| q[m.pair_index(s, pi.action(s))]);
    Ok((
        ValueFn::new(v),
        QFn::new(m.n_states(), m.n_actions(), q).expect("dimensions match by construction"),
    ))
}

/// One application of the Bellman optimality operator:
/// `(T q)(s,a) = r(s,a) + gamma * sum_s2 P(s2|s,a) max_a2 q(s2,a2)`.
pub fn bellman_optimality_operator(m: &TabularMdp, q: &QFn) -> Result<QFn> {
    q.matches(m)?;
    let vmax = q.max_over_actions();
    let out = m.reward_vector() + m.transition_matrix() * vmax * m.discount();
    QFn::new(m.n_states(), m.n_actions(), out)
}

/// Greedy policy of an action-value function; ties go to the lowest action
/// index, so planning is deterministic.
pub fn greedy_policy(m: &TabularMdp, q: &QFn) -> Result<Policy> {
    q.matches(m)?;
    let actions = (0..m.n_states())
        .map(|s| {
            let mut best = 0;
            let mut best_val = q.value(s, 0);
            for a in 1..m.n_actions() {
                let val = q.value(s, a);
                if val > best_val {
                    best = a;
                    best_val = val;
                }
            }
            best
        })
        .collect();
    Ok(Policy::new(actions))
}

/// Value iteration from `Q = 0`, stopping when successive iterates are within
/// `eps_opt (1-gamma)^2 / (2 gamma)` in sup norm. The greedy policy of the
/// final iterate then satisfies the optimization-oracle contract:
/// `||Q^pi - Q*||_inf <= eps_opt` and `||V^pi - V*||_inf <= eps_opt`.
pub fn value_iteration(m: &TabularMdp, eps_opt: f64) -> Result<(Policy, QFn)> {
    if !(eps_opt > 0.0) {
        return Err(Error::invalid(format!(
            "eps_opt must be positive, got {eps_opt}"
        )));
    }
    let gamma = m.discount();
    let threshold = eps_opt * (1.0 - gamma).powi(2) / (2.0 * gamma);
    // Iterations needed to close the gap from ||Q_1 - Q_0|| <= 1 down to the
    // threshold, plus slack; exceeding this means the contraction broke.
    let cap = if threshold >= 1.0 {
        1
    } else {
        ((threshold.ln() / gamma.ln()).ceil() as usize).saturating_add(16)
    };
    let mut q = QFn::zeros(m.n_states(), m.n_actions());
    for _ in 0..=cap {
        let next = bellman_optimality_operator(m, &q)?;
        let delta = inf_dist(next.as_vector(), q.as_vector());
        q = next;
        if delta <= threshold {
            let pi = greedy_policy(m, &q)?;
            return Ok((pi, q));
        }
    }
    Err(Error::internal(format!(
        "value iteration failed to contract within {cap} iterations"
    )))
}

/// Tie window of the policy-improvement step. Actions whose Q values sit
/// within this window of the row maximum count as tied, and the lowest
/// index wins. Solver noise (~1e-12 at a few hundred states) would
/// otherwise flip exact ties back and forth between rounds and cycle the
/// iteration; the window costs at most `gamma * PI_TIE_TOL` of Bellman
/// residual, within [`PI_RESIDUAL_TOL`].
const PI_TIE_TOL: f64 = 1e-10;

fn improved_policy(m: &TabularMdp, q: &QFn) -> Policy {
    let actions = (0..m.n_states())
        .map(|s| {
            let best = (0..m.n_actions())
                .map(|a| q.value(s, a))
                .fold(f64::NEG_INFINITY, f64::max);
            (0..m.n_actions())
                .find(|&a| q.value(s, a) >= best - PI_TIE_TOL)
                .expect("some action attains the row maximum")
        })
        .collect();
    Policy::new(actions)
}

/// Howard policy iteration with exact evaluation; terminates when one more
/// improvement step changes no action. Returns the exact optimal policy and
/// its Q, whose Bellman-optimality residual is below [`PI_RESIDUAL_TOL`].
pub fn policy_iteration(m: &TabularMdp) -> Result<(Policy, QFn)> {
    let cap = m.n_states() * m.n_actions() + 100;
    let mut pi = Policy::new(vec![0; m.n_states()]);
    for _ in 0..cap {
        let (_, q) = policy_value_exact(m, &pi)?;
        let improved = improved_policy(m, &q);
        if improved == pi {
            let residual = inf_dist(
                bellman_optimality_operator(m, &q)?.as_vector(),
                q.as_vector(),
            );
            if residual > PI_RESIDUAL_TOL {
                return Err(Error::internal(format!(
                    "policy iteration fixed point has Bellman residual {residual}"
                )));
            }
            return Ok((pi, q));
        }
        pi = improved;
    }
    Err(Error::internal(format!(
        "policy iteration exceeded the {cap}-round cap"
    )))
}

/// Per-pair one-step variance of a state function:
/// `Var(s,a) = P(.|s,a) v^2 - (P(.|s,a) v)^2`, clamped at zero since
/// floating-point cancellation can leave a tiny negative.
pub fn variance_of_value(m: &TabularMdp, v: &ValueFn) -> Result<DVector<f64>> {
    if v.len() != m.n_states() {
        return Err(Error::invalid(format!(
            "value has {} entries, expected {}",
            v.len(),
            m.n_states()
        )));
    }
    let v2 = v.as_vector().map(|x| x * x);
    let mean_sq = m.transition_matrix() * v2;
    let mean = m.transition_matrix() * v.as_vector();
    let mut out = mean_sq - mean.map(|x| x * x);
    for x in out.iter_mut() {
        debug_assert!(*x >= -1e-12, "variance fell below -1e-12: {x}");
        if *x < 0.0 {
            *x = 0.0;
        }
    }
    Ok(out)
}

/// Variance of the discounted return of a policy, the pair-indexed solution
/// of `Sigma = gamma^2 Var_P(V^pi) + gamma^2 P^pi Sigma`.
pub fn discounted_return_variance(m: &TabularMdp, pi: &Policy) -> Result<DVector<f64>> {
    let (v, _) = policy_value_exact(m, pi)?;
    let var = variance_of_value(m, &v)?;
    let g2 = m.discount() * m.discount();
    let (_, p_pi) = policy_transition_matrix(m, pi)?;
    let n = m.n_pairs();
    let mut sys = p_pi * (-g2);
    for i in 0..n {
        sys[(i, i)] += 1.0;
    }
    solve_dense(&sys, &(var * g2))
}

/// Apply the resolvent `(I - gamma P^pi)^{-1}` to a pair-indexed vector.
pub fn apply_resolvent(m: &TabularMdp, pi: &Policy, v: &DVector<f64>) -> Result<DVector<f64>> {
    if v.len() != m.n_pairs() {
        return Err(Error::invalid(format!(
            "vector has {} entries, expected {}",
            v.len(),
            m.n_pairs()
        )));
    }
    let sys = evaluation_system(m, pi)?;
    solve_dense(&sys, v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{generate_mdp, MdpFamily, MdpFamilySpec};
    use crate::stream::RngSeed;
    use proptest::prelude::*;
    use rand::Rng;

    pub(crate) fn dirichlet(ns: usize, na: usize, gamma: f64, seed: u64) -> TabularMdp {
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

    pub(crate) fn chain(gamma: f64) -> TabularMdp {
        TabularMdp::new(2, 1, gamma, vec![0.0, 1.0], vec![0.0, 1.0, 0.0, 1.0]).unwrap()
    }

    fn random_policy(m: &TabularMdp, seed: u64) -> Policy {
        let mut rng = RngSeed::new(seed, 0).rng();
        Policy::new(
            (0..m.n_states())
                .map(|_| rng.random_range(0..m.n_actions()))
                .collect(),
        )
    }

    #[test]
    fn rejects_bad_rows_and_rewards() {
        // Row sums to 0.9.
        let e = TabularMdp::new(2, 1, 0.5, vec![0.0, 1.0], vec![0.0, 0.9, 0.0, 1.0]);
        assert!(matches!(e, Err(crate::error::Error::InvalidInput(_))));
        // Reward out of range.
        let e = TabularMdp::new(2, 1, 0.5, vec![0.0, 1.5], vec![0.0, 1.0, 0.0, 1.0]);
        assert!(e.is_err());
        // Discount at the boundary.
        let e = TabularMdp::new(2, 1, 1.0, vec![0.0, 1.0], vec![0.0, 1.0, 0.0, 1.0]);
        assert!(e.is_err());
        // Negative probability.
        let e = TabularMdp::new(2, 1, 0.5, vec![0.0, 1.0], vec![-0.1, 1.1, 0.0, 1.0]);
        assert!(e.is_err());
    }

    #[test]
    fn transition_matrices_single_state() {
        let m = TabularMdp::new(1, 1, 0.9, vec![1.0], vec![1.0]).unwrap();
        let pi = Policy::new(vec![0]);
        let (state, pair) = policy_transition_matrix(&m, &pi).unwrap();
        assert_eq!(state[(0, 0)], 1.0);
        assert_eq!(pair[(0, 0)], 1.0);
    }

    #[test]
    fn transition_matrices_chain() {
        let m = chain(0.5);
        let pi = Policy::new(vec![0, 0]);
        let (state, _) = policy_transition_matrix(&m, &pi).unwrap();
        assert_eq!(
            (state[(0, 0)], state[(0, 1)], state[(1, 0)], state[(1, 1)]),
            (0.0, 1.0, 0.0, 1.0)
        );
    }

    #[test]
    fn transition_matrices_are_row_stochastic() {
        let m = dirichlet(5, 3, 0.9, 42);
        let pi = random_policy(&m, 7);
        let (state, pair) = policy_transition_matrix(&m, &pi).unwrap();
        for s in 0..5 {
            assert!((state.row(s).sum() - 1.0).abs() <= 1e-12);
        }
        for i in 0..15 {
            assert!((pair.row(i).sum() - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn transition_matrices_reject_mismatched_policy() {
        let m = dirichlet(5, 3, 0.9, 42);
        assert!(policy_transition_matrix(&m, &Policy::new(vec![0, 1])).is_err());
        assert!(policy_transition_matrix(&m, &Policy::new(vec![3; 5])).is_err());
    }

    #[test]
    fn single_pair_geometric_series() {
        let m = TabularMdp::new(1, 1, 0.9, vec![1.0], vec![1.0]).unwrap();
        let (v, q) = policy_value_exact(&m, &Policy::new(vec![0])).unwrap();
        assert!((v.value(0) - 10.0).abs() <= 1e-10);
        assert!((q.value(0, 0) - 10.0).abs() <= 1e-10);
    }

    #[test]
    fn chain_values() {
        let (v, _) = policy_value_exact(&chain(0.5), &Policy::new(vec![0, 0])).unwrap();
        assert!((v.value(0) - 1.0).abs() <= 1e-12);
        assert!((v.value(1) - 2.0).abs() <= 1e-12);
    }

    #[test]
    fn evaluation_matches_fixed_point_iteration() {
        // Oracle: iterate the evaluation operator 10,000 times from zero.
        let m = dirichlet(10, 4, 0.9, 3);
        let pi = random_policy(&m, 5);
        let (_, q) = policy_value_exact(&m, &pi).unwrap();
        let mut iter = DVector::zeros(m.n_pairs());
        for _ in 0..10_000 {
            let v_pi = DVector::from_fn(m.n_states(), |s, _| iter[m.pair_index(s, pi.action(s))]);
            iter = m.reward_vector() + m.transition_matrix() * v_pi * m.discount();
        }
        assert!(inf_dist(q.as_vector(), &iter) <= 1e-8);
    }

    #[test]
    fn evaluation_fixed_point_residual() {
        let m = dirichlet(8, 3, 0.99, 11);
        let pi = random_policy(&m, 2);
        let (_, q) = policy_value_exact(&m, &pi).unwrap();
        let v_pi = DVector::from_fn(m.n_states(), |s, _| q.value(s, pi.action(s)));
        let rhs = m.reward_vector() + m.transition_matrix() * v_pi * m.discount();
        assert!(inf_dist(q.as_vector(), &rhs) <= 1e-10);
    }

    #[test]
    fn bellman_on_zero_gives_rewards() {
        let m = dirichlet(6, 2, 0.8, 9);
        let out = bellman_optimality_operator(&m, &QFn::zeros(6, 2)).unwrap();
        assert!(inf_dist(out.as_vector(), m.reward_vector()) == 0.0);
    }

    #[test]
    fn optimal_q_is_bellman_fixed_point() {
        let m = dirichlet(6, 3, 0.9, 17);
        let (_, q_star) = policy_iteration(&m).unwrap();
        let t_q = bellman_optimality_operator(&m, &q_star).unwrap();
        assert!(inf_dist(t_q.as_vector(), q_star.as_vector()) <= 1e-10);
    }

    #[test]
    fn greedy_rules() {
        // Strict maxima are picked; exact ties go to the lowest action.
        let m = dirichlet(3, 3, 0.5, 1);
        let q = QFn::new(
            3,
            3,
            DVector::from_vec(vec![0.0, 2.0, 1.0, 5.0, 5.0, 4.0, 1.0, 1.0, 1.0]),
        )
        .unwrap();
        let pi = greedy_policy(&m, &q).unwrap();
        assert_eq!(pi.actions(), &[1, 0, 0]);
    }

    #[test]
    fn value_iteration_on_chain() {
        let m = chain(0.5);
        let (pi, q) = value_iteration(&m, 1e-6).unwrap();
        assert_eq!(pi.actions(), &[0, 0]);
        assert!((q.value(0, 0) - 1.0).abs() <= 1e-6);
    }

    #[test]
    fn value_iteration_meets_oracle_contract() {
        for seed in 0..5 {
            let m = dirichlet(10, 4, 0.9, 100 + seed);
            let (_, q_star) = policy_iteration(&m).unwrap();
            let (pi, _) = value_iteration(&m, 1e-8).unwrap();
            let (_, q_pi) = policy_value_exact(&m, &pi).unwrap();
            assert!(inf_dist(q_pi.as_vector(), q_star.as_vector()) <= 1e-8);
        }
    }

    #[test]
    fn value_iteration_vacuous_accuracy_still_valid() {
        let m = dirichlet(5, 2, 0.9, 23);
        let eps = m.value_range();
        let (pi, _) = value_iteration(&m, eps).unwrap();
        let (_, q_star) = policy_iteration(&m).unwrap();
        let (_, q_pi) = policy_value_exact(&m, &pi).unwrap();
        assert!(inf_dist(q_pi.as_vector(), q_star.as_vector()) <= eps);
    }

    #[test]
    fn value_iteration_rejects_nonpositive_eps() {
        let m = chain(0.5);
        assert!(value_iteration(&m, 0.0).is_err());
        assert!(value_iteration(&m, -1.0).is_err());
    }

    #[test]
    fn policy_iteration_agrees_with_value_iteration() {
        let m = dirichlet(8, 4, 0.9, 51);
        let (_, q_pi) = policy_iteration(&m).unwrap();
        let (_, q_vi) = value_iteration(&m, 1e-10).unwrap();
        // VI's iterate approximates Q*; PI's is exact up to solver error.
        assert!(inf_dist(q_pi.as_vector(), q_vi.as_vector()) <= 1e-8);
    }

    #[test]
    fn duplicated_actions_break_ties_low() {
        // Two identical actions everywhere: the optimal policy must pick
        // action 0 at every state.
        let base = dirichlet(4, 1, 0.9, 77);
        let mut transition = Vec::new();
        let mut reward = Vec::new();
        for s in 0..4 {
            for _ in 0..2 {
                reward.push(base.reward(s, 0));
                for s2 in 0..4 {
                    transition.push(base.transition_prob(s, 0, s2));
                }
            }
        }
        let m = TabularMdp::new(4, 2, 0.9, reward, transition).unwrap();
        let (pi, _) = policy_iteration(&m).unwrap();
        assert_eq!(pi.actions(), &[0, 0, 0, 0]);
    }

    #[test]
    fn optimal_value_dominates_random_policies() {
        let m = dirichlet(6, 3, 0.9, 29);
        let (_, q_star) = policy_iteration(&m).unwrap();
        let v_star = q_star.max_over_actions();
        for seed in 0..100 {
            let pi = random_policy(&m, 1000 + seed);
            let (v, _) = policy_value_exact(&m, &pi).unwrap();
            for s in 0..m.n_states() {
                assert!(v_star[s] >= v.value(s) - 1e-9);
            }
        }
    }

    #[test]
    fn variance_two_point_row() {
        let m = TabularMdp::new(
            2,
            1,
            0.5,
            vec![0.0, 0.0],
            vec![0.5, 0.5, 0.5, 0.5],
        )
        .unwrap();
        let v = ValueFn::new(DVector::from_vec(vec![0.0, 2.0]));
        let var = variance_of_value(&m, &v).unwrap();
        assert!((var[0] - 1.0).abs() <= 1e-15);
    }

    #[test]
    fn variance_zero_for_deterministic_kernel() {
        let m = chain(0.7);
        let v = ValueFn::new(DVector::from_vec(vec![0.3, 1.9]));
        let var = variance_of_value(&m, &v).unwrap();
        assert!(inf_norm(&var) == 0.0);
    }

    #[test]
    fn variance_matches_enumeration() {
        // Oracle: explicit two-pass enumeration of each row's variance.
        let m = dirichlet(7, 3, 0.9, 31);
        let mut rng = RngSeed::new(4, 0).rng();
        let v = ValueFn::new(DVector::from_fn(7, |_, _| rng.random::<f64>() * 10.0));
        let var = variance_of_value(&m, &v).unwrap();
        for s in 0..7 {
            for a in 0..3 {
                let mean: f64 = (0..7).map(|s2| m.transition_prob(s, a, s2) * v.value(s2)).sum();
                let exp: f64 = (0..7)
                    .map(|s2| m.transition_prob(s, a, s2) * (v.value(s2) - mean).powi(2))
                    .sum();
                assert!((var[m.pair_index(s, a)] - exp).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn return_variance_zero_for_deterministic_mdp() {
        let m = chain(0.5);
        let sigma = discounted_return_variance(&m, &Policy::new(vec![0, 0])).unwrap();
        assert!(inf_norm(&sigma) <= 1e-12);
    }

    #[test]
    fn return_variance_matches_rollouts() {
        // Oracle: Monte-Carlo variance of the truncated discounted return.
        let m = dirichlet(6, 2, 0.9, 111);
        let pi = random_policy(&m, 6);
        let sigma = discounted_return_variance(&m, &pi).unwrap();
        let horizon = ((1e-6f64).ln() / m.discount().ln()).ceil() as usize;
        let rollouts = 200_000;
        let mut rng = RngSeed::new(5150, 0).rng();
        let (s0, a0) = (2, 1);
        let mut returns = Vec::with_capacity(rollouts);
        for _ in 0..rollouts {
            let mut g = 0.0;
            let mut disc = 1.0;
            let (mut s, mut a) = (s0, a0);
            for _ in 0..horizon {
                g += disc * m.reward(s, a);
                disc *= m.discount();
                s = crate::generative::sample_next_state(&m, s, a, &mut rng);
                a = pi.action(s);
            }
            returns.push(g);
        }
        let mean = returns.iter().sum::<f64>() / rollouts as f64;
        let m2 = returns.iter().map(|g| (g - mean).powi(2)).sum::<f64>() / rollouts as f64;
        let m4 = returns.iter().map(|g| (g - mean).powi(4)).sum::<f64>() / rollouts as f64;
        let se = ((m4 - m2 * m2).max(0.0) / rollouts as f64).sqrt();
        let got = sigma[m.pair_index(s0, a0)];
        assert!(
            (got - m2).abs() <= 3.0 * se + 1e-12,
            "analytic {got} vs rollout {m2} (se {se})"
        );
    }

    #[test]
    fn return_variance_within_range_bound() {
        for seed in 0..10 {
            let m = dirichlet(5, 3, 0.9, 200 + seed);
            let pi = random_policy(&m, seed);
            let sigma = discounted_return_variance(&m, &pi).unwrap();
            let bound = (m.discount() / (1.0 - m.discount())).powi(2);
            assert!(inf_norm(&sigma) <= bound + 1e-9);
        }
    }

    #[test]
    fn resolvent_of_zero_and_ones() {
        let m = dirichlet(5, 2, 0.8, 303);
        let pi = random_policy(&m, 1);
        let zero = apply_resolvent(&m, &pi, &DVector::zeros(10)).unwrap();
        assert!(inf_norm(&zero) == 0.0);
        let ones = apply_resolvent(&m, &pi, &DVector::from_element(10, 1.0)).unwrap();
        for x in ones.iter() {
            assert!((x - 5.0).abs() <= 1e-9);
        }
    }

    #[test]
    fn resolvent_matches_neumann_series() {
        // Oracle: truncated Neumann series sum_i gamma^i (P^pi)^i v.
        let m = dirichlet(5, 2, 0.9, 404);
        let pi = random_policy(&m, 8);
        let mut rng = RngSeed::new(9, 0).rng();
        let v = DVector::from_fn(10, |_, _| rng.random::<f64>() * 2.0 - 1.0);
        let got = apply_resolvent(&m, &pi, &v).unwrap();
        let (_, p_pi) = policy_transition_matrix(&m, &pi).unwrap();
        let mut acc = v.clone();
        let mut term = v.clone();
        for _ in 0..10_000 {
            term = &p_pi * term * m.discount();
            acc += &term;
        }
        assert!(inf_dist(&got, &acc) <= 1e-8);
    }

    #[test]
    fn resolvent_norm_bound_on_random_triples() {
        for seed in 0..100u64 {
            let gamma = [0.5, 0.9, 0.99][(seed % 3) as usize];
            let m = dirichlet(4, 2, gamma, 500 + seed);
            let pi = random_policy(&m, seed);
            let mut rng = RngSeed::new(seed, 3).rng();
            let v = DVector::from_fn(8, |_, _| rng.random::<f64>() * 4.0 - 2.0);
            let out = apply_resolvent(&m, &pi, &v).unwrap();
            assert!(inf_norm(&out) <= inf_norm(&v) / (1.0 - gamma) + 1e-9);
        }
    }

    #[test]
    fn variance_resolvent_bound() {
        for seed in 0..20u64 {
            let gamma = [0.5, 0.9, 0.99][(seed % 3) as usize];
            let m = dirichlet(6, 2, gamma, 700 + seed);
            let pi = random_policy(&m, seed);
            let (v, _) = policy_value_exact(&m, &pi).unwrap();
            let var = variance_of_value(&m, &v).unwrap();
            let out = apply_resolvent(&m, &pi, &var.map(f64::sqrt)).unwrap();
            let bound = (2.0 / (1.0 - gamma).powi(3)).sqrt();
            assert!(inf_norm(&out) <= bound + 1e-9);
        }
    }

    #[test]
    fn values_stay_in_range() {
        for seed in 0..20u64 {
            let gamma = [0.5, 0.9, 0.99][(seed % 3) as usize];
            let m = dirichlet(5, 3, gamma, 900 + seed);
            let pi = random_policy(&m, seed);
            let (v, q) = policy_value_exact(&m, &pi).unwrap();
            let hi = m.value_range();
            for s in 0..5 {
                assert!(v.value(s) >= -1e-12 && v.value(s) <= hi + 1e-9);
            }
            for x in q.as_vector().iter() {
                assert!(*x >= -1e-12 && *x <= hi + 1e-9);
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn bellman_operator_contracts(
            seed in 0u64..1000,
            gamma in 0.3f64..0.95,
            scale in 0.1f64..10.0,
        ) {
            let m = dirichlet(4, 2, gamma, seed);
            let mut rng = RngSeed::new(seed, 1).rng();
            let q1 = QFn::new(4, 2, DVector::from_fn(8, |_, _| rng.random::<f64>() * scale)).unwrap();
            let q2 = QFn::new(4, 2, DVector::from_fn(8, |_, _| rng.random::<f64>() * scale)).unwrap();
            let t1 = bellman_optimality_operator(&m, &q1).unwrap();
            let t2 = bellman_optimality_operator(&m, &q2).unwrap();
            let lhs = inf_dist(t1.as_vector(), t2.as_vector());
            let rhs = gamma * inf_dist(q1.as_vector(), q2.as_vector());
            prop_assert!(lhs <= rhs + 1e-12);
        }

        #[test]
        fn greedy_is_deterministic(seed in 0u64..1000) {
            let m = dirichlet(5, 3, 0.9, seed);
            let (_, q) = policy_iteration(&m).unwrap();
            let a = greedy_policy(&m, &q).unwrap();
            let b = greedy_policy(&m, &q).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
