//! Generative-model sampling and the maximum-likelihood plug-in MDP.
//!
//! The sampler draws i.i.d. next states for any state-action pair. Calling
//! it `N` times per pair yields an [`EmpiricalModel`] of counts, and
//! [`empirical_mdp`] turns those counts into the plug-in MDP that shares
//! rewards and discount with the true model but uses `counts / N` as its
//! kernel. Distinct pairs draw from independent sub-streams, so sampling
//! parallelizes without losing reproducibility.

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mdp::TabularMdp;
use crate::stream::{pair_stream, RngSeed};

/// Per-pair sample counts from the generative model.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EmpiricalModel {
    n_states: usize,
    n_actions: usize,
    /// `(S*A) x S`; row `s * n_actions + a` tallies the draws of `(s, a)`.
    counts: DMatrix<u64>,
    samples_per_pair: u64,
}

impl EmpiricalModel {
    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn samples_per_pair(&self) -> u64 {
        self.samples_per_pair
    }

    pub fn count(&self, s: usize, a: usize, s2: usize) -> u64 {
        self.counts[(s * self.n_actions + a, s2)]
    }

    pub fn counts(&self) -> &DMatrix<u64> {
        &self.counts
    }

    /// Replace the counts of one pair's row. Used by the verifier to
    /// resample a single row while holding everything else fixed.
    pub fn with_row(&self, s: usize, a: usize, row: Vec<u64>) -> Result<Self> {
        if row.len() != self.n_states {
            return Err(Error::invalid("row length mismatch"));
        }
        if row.iter().sum::<u64>() != self.samples_per_pair {
            return Err(Error::invalid("row counts must sum to N"));
        }
        let mut counts = self.counts.clone();
        for (s2, &c) in row.iter().enumerate() {
            counts[(s * self.n_actions + a, s2)] = c;
        }
        Ok(EmpiricalModel { counts, ..*self })
    }
}

/// Cumulative distribution of one transition row, for inverse-CDF sampling.
/// The final bin absorbs whatever residual mass floating point leaves over,
/// so no draw can fall off the end of the row.
struct RowCdf {
    cum: Vec<f64>,
}

impl RowCdf {
    fn new(m: &TabularMdp, s: usize, a: usize) -> Self {
        let mut cum = Vec::with_capacity(m.n_states());
        let mut acc = 0.0;
        for s2 in 0..m.n_states() {
            acc += m.transition_prob(s, a, s2);
            cum.push(acc);
        }
        RowCdf { cum }
    }

    fn draw(&self, rng: &mut impl Rng) -> usize {
        let u: f64 = rng.random();
        for (s2, &c) in self.cum.iter().enumerate() {
            if u < c {
                return s2;
            }
        }
        self.cum.len() - 1
    }
}

/// Draw one next state from `P(. | s, a)`.
pub fn sample_next_state(m: &TabularMdp, s: usize, a: usize, rng: &mut impl Rng) -> usize {
    RowCdf::new(m, s, a).draw(rng)
}

/// Tally `n` draws from the row of `(s, a)` on its own sub-stream.
pub(crate) fn sample_row_counts(
    m: &TabularMdp,
    s: usize,
    a: usize,
    n: u64,
    seed: RngSeed,
) -> Vec<u64> {
    let mut rng = RngSeed::new(seed.seed, pair_stream(seed.stream, s, a, m.n_actions())).rng();
    let cdf = RowCdf::new(m, s, a);
    let mut row = vec![0u64; m.n_states()];
    for _ in 0..n {
        row[cdf.draw(&mut rng)] += 1;
    }
    row
}

/// Call the sampler `n` times at every state-action pair.
pub fn build_empirical_model(m: &TabularMdp, n: u64, seed: RngSeed) -> Result<EmpiricalModel> {
    if n == 0 {
        return Err(Error::invalid("need at least one sample per pair"));
    }
    let pairs: Vec<(usize, usize)> = (0..m.n_states())
        .flat_map(|s| (0..m.n_actions()).map(move |a| (s, a)))
        .collect();
    let rows: Vec<Vec<u64>> = pairs
        .par_iter()
        .map(|&(s, a)| sample_row_counts(m, s, a, n, seed))
        .collect();
    let mut counts = DMatrix::zeros(m.n_pairs(), m.n_states());
    for (&(s, a), row) in pairs.iter().zip(rows.iter()) {
        for (s2, &c) in row.iter().enumerate() {
            counts[(m.pair_index(s, a), s2)] = c;
        }
    }
    Ok(EmpiricalModel {
        n_states: m.n_states(),
        n_actions: m.n_actions(),
        counts,
        samples_per_pair: n,
    })
}

/// The plug-in MDP: identical to `m` except that its kernel is `counts / N`.
pub fn empirical_mdp(m: &TabularMdp, e: &EmpiricalModel) -> Result<TabularMdp> {
    if e.n_states != m.n_states() || e.n_actions != m.n_actions() {
        return Err(Error::invalid(format!(
            "empirical model is {}x{}, MDP is {}x{}",
            e.n_states,
            e.n_actions,
            m.n_states(),
            m.n_actions()
        )));
    }
    let n = e.samples_per_pair as f64;
    let kernel = e.counts.map(|c| c as f64 / n);
    TabularMdp::from_parts(
        m.n_states(),
        m.n_actions(),
        m.discount(),
        m.reward_vector().clone(),
        kernel,
        m.is_absorbing_derived(),
    )
}

/// Entrywise `max |P_hat - P|` between an empirical model and the truth.
pub fn max_kernel_error(m: &TabularMdp, e: &EmpiricalModel) -> Result<f64> {
    let m_hat = empirical_mdp(m, e)?;
    let mut worst = 0.0f64;
    for i in 0..m.n_pairs() {
        for s2 in 0..m.n_states() {
            worst = worst
                .max((m_hat.transition_matrix()[(i, s2)] - m.transition_matrix()[(i, s2)]).abs());
        }
    }
    Ok(worst)
}
