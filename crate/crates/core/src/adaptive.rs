//! Exact simulation of the N-mode adaptive decoder and of the equivalent
//! classical feedback picture.
//!
//! An adaptive decoder interleaves outcome-conditioned interferometers with
//! destructive single-mode measurements. Because the post-channel state is a
//! product of displaced thermal modes with one common occupation, the
//! simulation only rearranges the vector of complex means and branches on
//! measurement outcomes, which is exact.
//!
//! The same decoder can be rewritten as feedback to the encoder: the sender
//! applies the interferometers to the codeword amplitudes before
//! transmission and sends one mode per channel use. `compile_policy_to_encoder`
//! performs that rewriting; `simulate_classical_picture` runs the resulting
//! per-use programmable channel. The two pictures must agree entrywise.

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::gaussian::{ChannelParams, DisplacedThermal, PassiveUnitary};
use crate::math::xlnx;
use crate::measurement::{programmable_channel_prob, Povm};
use crate::scalar::{Cplx, Scalar};

/// A finite codebook of N-mode coherent sequences with message priors and an
/// average energy budget per mode.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CodebookSequence<S: Scalar> {
    n_modes: usize,
    messages: Vec<Vec<Cplx<S>>>,
    priors: Vec<S>,
    energy_budget: S,
}

impl<S: Scalar> CodebookSequence<S> {
    pub fn new(messages: Vec<Vec<Cplx<S>>>, priors: Vec<S>, energy_budget: S) -> Result<Self> {
        if messages.is_empty() {
            return Err(CoreError::InvalidDistribution(
                "codebook must contain at least one message".into(),
            ));
        }
        let n_modes = messages[0].len();
        if n_modes == 0 {
            return Err(CoreError::Domain("codewords must span at least one mode".into()));
        }
        if messages.iter().any(|m| m.len() != n_modes) {
            return Err(CoreError::DimensionMismatch {
                expected: n_modes,
                got: messages.iter().map(Vec::len).find(|&l| l != n_modes).unwrap_or(0),
            });
        }
        if priors.len() != messages.len() {
            return Err(CoreError::DimensionMismatch {
                expected: messages.len(),
                got: priors.len(),
            });
        }
        let mut total = S::zero();
        for &p in &priors {
            if !p.is_finite() || p < S::zero() {
                return Err(CoreError::InvalidDistribution(format!(
                    "message priors must be finite and nonnegative (got {p})"
                )));
            }
            total += p;
        }
        if (total - S::one()).abs() > S::of(1e-12) {
            return Err(CoreError::InvalidDistribution(format!(
                "message priors must sum to 1 within 1e-12 (got {total})"
            )));
        }
        let book = Self {
            n_modes,
            messages,
            priors,
            energy_budget,
        };
        let used = book.energy_per_mode();
        if used > energy_budget + S::of(1e-9) {
            return Err(CoreError::InvalidDistribution(format!(
                "average energy per mode {used} exceeds the budget {energy_budget}"
            )));
        }
        Ok(book)
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn len(&self) -> usize {
        self.messages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.messages.is_empty()
    }

    pub fn priors(&self) -> &[S] {
        &self.priors
    }

    pub fn amplitudes(&self, message: usize) -> &[Cplx<S>] {
        &self.messages[message]
    }

    /// Total energy of one codeword.
    pub fn message_energy(&self, message: usize) -> S {
        self.messages[message].iter().map(|a| a.norm_sqr()).sum()
    }

    /// Prior-averaged energy per mode.
    pub fn energy_per_mode(&self) -> S {
        let total: S = self
            .priors
            .iter()
            .enumerate()
            .map(|(w, &p)| p * self.message_energy(w))
            .sum();
        total / S::of(self.n_modes as f64)
    }

    pub fn energy_budget(&self) -> S {
        self.energy_budget
    }
}

/// One node of the decoding tree: the interferometer applied to the
/// remaining modes and the measurement for the first of them, selected by
/// the outcome history.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PolicyBranch<S: Scalar> {
    pub history: Vec<usize>,
    pub unitary: PassiveUnitary<S>,
    pub povm: Povm<S>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PolicyStep<S: Scalar> {
    pub branches: Vec<PolicyBranch<S>>,
}

/// Outcome-history-indexed tree of (interferometer, measurement) choices.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AdaptivePolicy<S: Scalar> {
    n_modes: usize,
    steps: Vec<PolicyStep<S>>,
}

impl<S: Scalar> AdaptivePolicy<S> {
    pub fn new(n_modes: usize, steps: Vec<PolicyStep<S>>) -> Result<Self> {
        let policy = Self { n_modes, steps };
        policy.resolve()?;
        Ok(policy)
    }

    /// Builds a policy in canonical history order by calling `choose` for
    /// every (step, history) pair. `outcome_counts` gives the measurement
    /// arity of every step.
    #[allow(clippy::needless_range_loop)]
    pub fn from_fn(
        n_modes: usize,
        outcome_counts: &[usize],
        mut choose: impl FnMut(usize, &[usize]) -> (PassiveUnitary<S>, Povm<S>),
    ) -> Result<Self> {
        if outcome_counts.len() != n_modes {
            return Err(CoreError::DimensionMismatch {
                expected: n_modes,
                got: outcome_counts.len(),
            });
        }
        let mut steps = Vec::with_capacity(n_modes);
        let mut histories: Vec<Vec<usize>> = vec![Vec::new()];
        for j in 0..n_modes {
            let mut branches = Vec::with_capacity(histories.len());
            for history in &histories {
                let (unitary, povm) = choose(j, history);
                branches.push(PolicyBranch {
                    history: history.clone(),
                    unitary,
                    povm,
                });
            }
            steps.push(PolicyStep { branches });
            if j + 1 < n_modes {
                let mut next = Vec::with_capacity(histories.len() * outcome_counts[j]);
                for history in &histories {
                    for y in 0..outcome_counts[j] {
                        let mut h = history.clone();
                        h.push(y);
                        next.push(h);
                    }
                }
                histories = next;
            }
        }
        Self::new(n_modes, steps)
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn steps(&self) -> &[PolicyStep<S>] {
        &self.steps
    }

    /// Validates dimensions, measurement arities, and tree completeness.
    pub fn validate(&self) -> Result<()> {
        self.resolve().map(|_| ())
    }

    /// Checks the tree eagerly and returns the canonical-order view used by
    /// the simulators.
    fn resolve(&self) -> Result<ResolvedPolicy<'_, S>> {
        if self.steps.len() != self.n_modes || self.n_modes == 0 {
            return Err(CoreError::DimensionMismatch {
                expected: self.n_modes,
                got: self.steps.len(),
            });
        }
        let mut resolved = Vec::with_capacity(self.n_modes);
        let mut expected_histories: Vec<Vec<usize>> = vec![Vec::new()];
        let mut outcome_counts = Vec::with_capacity(self.n_modes);
        for (j, step) in self.steps.iter().enumerate() {
            let dim = self.n_modes - j;
            let mut by_history: std::collections::BTreeMap<&[usize], &PolicyBranch<S>> =
                std::collections::BTreeMap::new();
            let mut arity: Option<usize> = None;
            for branch in &step.branches {
                if branch.unitary.dim() != dim {
                    return Err(CoreError::DimensionMismatch {
                        expected: dim,
                        got: branch.unitary.dim(),
                    });
                }
                branch.povm.validate()?;
                let count = branch.povm.outcome_count();
                match arity {
                    None => arity = Some(count),
                    Some(a) if a != count => {
                        return Err(CoreError::InvalidDistribution(format!(
                            "step {j} mixes measurement arities {a} and {count}"
                        )))
                    }
                    _ => {}
                }
                by_history.insert(branch.history.as_slice(), branch);
            }
            let mut ordered = Vec::with_capacity(expected_histories.len());
            for history in &expected_histories {
                match by_history.get(history.as_slice()) {
                    Some(branch) => ordered.push(*branch),
                    None => {
                        return Err(CoreError::MissingBranch {
                            step: j,
                            history: history.clone(),
                        })
                    }
                }
            }
            let count = arity.ok_or_else(|| CoreError::MissingBranch {
                step: j,
                history: Vec::new(),
            })?;
            outcome_counts.push(count);
            resolved.push(ResolvedStep { branches: ordered });
            if j + 1 < self.n_modes {
                let mut next = Vec::with_capacity(expected_histories.len() * count);
                for history in &expected_histories {
                    for y in 0..count {
                        let mut h = history.clone();
                        h.push(y);
                        next.push(h);
                    }
                }
                expected_histories = next;
            }
        }
        Ok(ResolvedPolicy {
            steps: resolved,
            outcome_counts,
        })
    }

    /// Measurement arity of every step.
    pub fn outcome_counts(&self) -> Result<Vec<usize>> {
        Ok(self.resolve()?.outcome_counts)
    }

    /// Extracts the per-step measurement choices keyed by history, for the
    /// classical picture.
    pub fn schedule(&self) -> Result<PovmSchedule<S>> {
        let resolved = self.resolve()?;
        let povms = resolved
            .steps
            .iter()
            .map(|step| step.branches.iter().map(|b| b.povm.clone()).collect())
            .collect();
        Ok(PovmSchedule {
            n_modes: self.n_modes,
            outcome_counts: resolved.outcome_counts,
            povms,
        })
    }
}

struct ResolvedStep<'a, S: Scalar> {
    /// Branches in canonical (lexicographic-history) order.
    branches: Vec<&'a PolicyBranch<S>>,
}

struct ResolvedPolicy<'a, S: Scalar> {
    steps: Vec<ResolvedStep<'a, S>>,
    outcome_counts: Vec<usize>,
}

/// Per-use measurement choices of the classical picture, indexed like the
/// policy tree.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PovmSchedule<S: Scalar> {
    n_modes: usize,
    outcome_counts: Vec<usize>,
    /// `povms[j][h]` with `h` the canonical history index at step `j`.
    povms: Vec<Vec<Povm<S>>>,
}

impl<S: Scalar> PovmSchedule<S> {
    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn outcome_counts(&self) -> &[usize] {
        &self.outcome_counts
    }

    pub fn povm(&self, step: usize, history_index: usize) -> &Povm<S> {
        &self.povms[step][history_index]
    }
}

/// Feedback encoder: one transmitted amplitude per (message, step, history).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FeedbackEncoder<S: Scalar> {
    n_modes: usize,
    outcome_counts: Vec<usize>,
    /// `amplitudes[w][j][h]` with `h` the canonical history index.
    amplitudes: Vec<Vec<Vec<Cplx<S>>>>,
}

impl<S: Scalar> FeedbackEncoder<S> {
    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn outcome_counts(&self) -> &[usize] {
        &self.outcome_counts
    }

    pub fn amplitude(&self, message: usize, step: usize, history_index: usize) -> Cplx<S> {
        self.amplitudes[message][step][history_index]
    }

    /// Largest deviation between the per-path transmitted energy and the
    /// original codeword energy; the interferometer rewriting must preserve
    /// it exactly.
    pub fn energy_audit(&self, codebook: &CodebookSequence<S>) -> S {
        let n = self.n_modes;
        let leaves: usize = self.outcome_counts[..n - 1].iter().product();
        let mut worst = S::zero();
        for w in 0..self.amplitudes.len() {
            let target = codebook.message_energy(w);
            for leaf in 0..leaves {
                let mut acc = S::zero();
                for j in 0..n {
                    // canonical index of the path prefix seen at step j
                    let divisor: usize = self.outcome_counts[j..n - 1].iter().product();
                    let prefix = leaf / divisor;
                    acc += self.amplitudes[w][j][prefix].norm_sqr();
                }
                let dev = (acc - target).abs();
                if dev > worst {
                    worst = dev;
                }
            }
        }
        worst
    }
}

/// Joint conditional outcome table `P(y_1..y_N | message)`. Outcomes are
/// flattened in lexicographic order of their index tuples.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConditionalTable<S: Scalar> {
    outcome_counts: Vec<usize>,
    rows: Vec<Vec<S>>,
}

impl<S: Scalar> ConditionalTable<S> {
    pub fn outcome_counts(&self) -> &[usize] {
        &self.outcome_counts
    }

    pub fn n_outcomes(&self) -> usize {
        self.outcome_counts.iter().product()
    }

    pub fn rows(&self) -> &[Vec<S>] {
        &self.rows
    }

    /// Dash-joined outcome indices for the flattened column `flat`.
    pub fn outcome_label(&self, flat: usize) -> String {
        let mut digits = vec![0usize; self.outcome_counts.len()];
        let mut rest = flat;
        for (slot, &count) in self.outcome_counts.iter().enumerate().rev() {
            digits[slot] = rest % count;
            rest /= count;
        }
        digits
            .iter()
            .map(|d| d.to_string())
            .collect::<Vec<_>>()
            .join("-")
    }

    pub fn max_abs_diff(&self, other: &Self) -> S {
        let mut worst = S::zero();
        for (a, b) in self.rows.iter().zip(&other.rows) {
            for (x, y) in a.iter().zip(b) {
                let dev = (*x - *y).abs();
                if dev > worst {
                    worst = dev;
                }
            }
        }
        worst
    }

    /// Largest deviation of any row sum from one.
    pub fn row_sum_deviation(&self) -> S {
        let mut worst = S::zero();
        for row in &self.rows {
            let sum: S = row.iter().copied().sum();
            let dev = (sum - S::one()).abs();
            if dev > worst {
                worst = dev;
            }
        }
        worst
    }
}

/// Running product of branch probabilities. Switches to log accumulation if
/// the linear product would underflow, so deep trees stay meaningful.
#[derive(Clone, Copy)]
enum PathProb<S: Scalar> {
    Linear(S),
    Log(S),
}

impl<S: Scalar> PathProb<S> {
    fn one() -> Self {
        PathProb::Linear(S::one())
    }

    fn times(self, p: S) -> Self {
        match self {
            PathProb::Linear(v) => {
                if v > S::zero() && p > S::zero() {
                    let w = v * p;
                    if w < S::of(1e-300) {
                        // the linear product is about to underflow
                        PathProb::Log(v.ln() + p.ln())
                    } else {
                        PathProb::Linear(w)
                    }
                } else {
                    PathProb::Linear(S::zero())
                }
            }
            PathProb::Log(l) => {
                if p > S::zero() {
                    PathProb::Log(l + p.ln())
                } else {
                    PathProb::Linear(S::zero())
                }
            }
        }
    }

    fn value(self) -> S {
        match self {
            PathProb::Linear(v) => v,
            PathProb::Log(l) => l.exp(),
        }
    }
}

/// Runs the adaptive decoder exactly: apply the history's interferometer to
/// the remaining means, measure the leading mode, branch on every outcome.
pub fn simulate_ad<S: Scalar>(
    codebook: &CodebookSequence<S>,
    params: &ChannelParams<S>,
    policy: &AdaptivePolicy<S>,
) -> Result<ConditionalTable<S>> {
    if policy.n_modes() != codebook.n_modes() {
        return Err(CoreError::DimensionMismatch {
            expected: codebook.n_modes(),
            got: policy.n_modes(),
        });
    }
    let resolved = policy.resolve()?;
    let counts = resolved.outcome_counts.clone();
    let total: usize = counts.iter().product();
    let nbar = params.nbar();

    let mut rows = Vec::with_capacity(codebook.len());
    for w in 0..codebook.len() {
        let means: Vec<Cplx<S>> = codebook
            .amplitudes(w)
            .iter()
            .map(|a| *a * params.mu1())
            .collect();
        let mut row = vec![S::zero(); total];
        descend_ad(&resolved, &counts, nbar, means, 0, 0, PathProb::one(), &mut row)?;
        rows.push(row);
    }
    Ok(ConditionalTable {
        outcome_counts: counts,
        rows,
    })
}

#[allow(clippy::too_many_arguments)]
fn descend_ad<S: Scalar>(
    policy: &ResolvedPolicy<'_, S>,
    counts: &[usize],
    nbar: S,
    means: Vec<Cplx<S>>,
    step: usize,
    history_index: usize,
    acc: PathProb<S>,
    row: &mut [S],
) -> Result<()> {
    let branch = policy.steps[step].branches[history_index];
    let rotated = branch.unitary.apply(&means)?;
    let head = DisplacedThermal {
        mean: rotated[0],
        nbar,
    };
    let dist = branch.povm.outcome_distribution(&head)?;
    let last = step + 1 == counts.len();
    for (y, &p) in dist.iter().enumerate() {
        let next_acc = acc.times(p);
        let next_index = history_index * counts[step] + y;
        if last {
            row[next_index] = next_acc.value();
        } else {
            descend_ad(
                policy,
                counts,
                nbar,
                rotated[1..].to_vec(),
                step + 1,
                next_index,
                next_acc,
                row,
            )?;
        }
    }
    Ok(())
}

/// Rewrites a decoding policy as feedback to the encoder: the cumulative
/// interferometer action is applied to the codeword amplitudes and the next
/// transmitted amplitude is read off per history.
pub fn compile_policy_to_encoder<S: Scalar>(
    codebook: &CodebookSequence<S>,
    policy: &AdaptivePolicy<S>,
) -> Result<FeedbackEncoder<S>> {
    if policy.n_modes() != codebook.n_modes() {
        return Err(CoreError::DimensionMismatch {
            expected: codebook.n_modes(),
            got: policy.n_modes(),
        });
    }
    let resolved = policy.resolve()?;
    let counts = resolved.outcome_counts.clone();
    let n = codebook.n_modes();

    let mut amplitudes = Vec::with_capacity(codebook.len());
    for w in 0..codebook.len() {
        let mut levels: Vec<Vec<Cplx<S>>> = (0..n)
            .map(|j| {
                let histories: usize = counts[..j].iter().product();
                vec![Complex::new(S::zero(), S::zero()); histories]
            })
            .collect();
        descend_compile(
            &resolved,
            &counts,
            codebook.amplitudes(w).to_vec(),
            0,
            0,
            &mut levels,
        )?;
        amplitudes.push(levels);
    }
    let encoder = FeedbackEncoder {
        n_modes: n,
        outcome_counts: counts,
        amplitudes,
    };
    let audit = encoder.energy_audit(codebook);
    if audit > S::of(1e-9) {
        return Err(CoreError::Numeric(format!(
            "compiled encoder broke the per-message energy audit by {audit}"
        )));
    }
    Ok(encoder)
}

fn descend_compile<S: Scalar>(
    policy: &ResolvedPolicy<'_, S>,
    counts: &[usize],
    pending: Vec<Cplx<S>>,
    step: usize,
    history_index: usize,
    levels: &mut [Vec<Cplx<S>>],
) -> Result<()> {
    let branch = policy.steps[step].branches[history_index];
    let rotated = branch.unitary.apply(&pending)?;
    levels[step][history_index] = rotated[0];
    if step + 1 < counts.len() {
        for y in 0..counts[step] {
            descend_compile(
                policy,
                counts,
                rotated[1..].to_vec(),
                step + 1,
                history_index * counts[step] + y,
                levels,
            )?;
        }
    }
    Ok(())
}

/// Runs the classical feedback picture: one programmable-channel use per
/// step, with the transmitted amplitude drawn from the encoder tree.
pub fn simulate_classical_picture<S: Scalar>(
    codebook: &CodebookSequence<S>,
    params: &ChannelParams<S>,
    encoder: &FeedbackEncoder<S>,
    schedule: &PovmSchedule<S>,
) -> Result<ConditionalTable<S>> {
    let n = codebook.n_modes();
    if encoder.n_modes != n || schedule.n_modes != n {
        return Err(CoreError::DimensionMismatch {
            expected: n,
            got: encoder.n_modes.min(schedule.n_modes),
        });
    }
    if encoder.amplitudes.len() != codebook.len() {
        return Err(CoreError::DimensionMismatch {
            expected: codebook.len(),
            got: encoder.amplitudes.len(),
        });
    }
    if encoder.outcome_counts != schedule.outcome_counts {
        return Err(CoreError::InvalidDistribution(
            "encoder and schedule disagree on outcome arities".into(),
        ));
    }
    let counts = schedule.outcome_counts.clone();
    let total: usize = counts.iter().product();

    let mut rows = Vec::with_capacity(codebook.len());
    for w in 0..codebook.len() {
        let mut row = vec![S::zero(); total];
        descend_classical(
            params, encoder, schedule, &counts, w, 0, 0, PathProb::one(), &mut row,
        )?;
        rows.push(row);
    }
    Ok(ConditionalTable {
        outcome_counts: counts,
        rows,
    })
}

#[allow(clippy::too_many_arguments)]
fn descend_classical<S: Scalar>(
    params: &ChannelParams<S>,
    encoder: &FeedbackEncoder<S>,
    schedule: &PovmSchedule<S>,
    counts: &[usize],
    message: usize,
    step: usize,
    history_index: usize,
    acc: PathProb<S>,
    row: &mut [S],
) -> Result<()> {
    let beta = encoder.amplitude(message, step, history_index);
    let dist = programmable_channel_prob(beta, params, schedule.povm(step, history_index))?;
    let last = step + 1 == counts.len();
    for (y, &p) in dist.iter().enumerate() {
        let next_acc = acc.times(p);
        let next_index = history_index * counts[step] + y;
        if last {
            row[next_index] = next_acc.value();
        } else {
            descend_classical(
                params, encoder, schedule, counts, message, step + 1, next_index, next_acc, row,
            )?;
        }
    }
    Ok(())
}

/// Mutual information `H(Y) - H(Y|X)` in nats for a prior and a conditional
/// table, with the `0 ln 0 = 0` convention.
pub fn mutual_information<S: Scalar>(prior: &[S], rows: &[Vec<S>]) -> Result<S> {
    if prior.len() != rows.len() || rows.is_empty() {
        return Err(CoreError::DimensionMismatch {
            expected: prior.len(),
            got: rows.len(),
        });
    }
    let width = rows[0].len();
    let mut prior_sum = S::zero();
    for &p in prior {
        if !p.is_finite() || p < S::zero() {
            return Err(CoreError::InvalidDistribution(format!(
                "prior entries must be finite and nonnegative (got {p})"
            )));
        }
        prior_sum += p;
    }
    if (prior_sum - S::one()).abs() > S::of(1e-12) {
        return Err(CoreError::InvalidDistribution(format!(
            "prior must sum to 1 within 1e-12 (got {prior_sum})"
        )));
    }
    for row in rows {
        if row.len() != width {
            return Err(CoreError::DimensionMismatch {
                expected: width,
                got: row.len(),
            });
        }
        let mut sum = S::zero();
        for &p in row {
            if !p.is_finite() || p < -S::of(1e-15) {
                return Err(CoreError::InvalidDistribution(
                    "conditional rows must be nonnegative".into(),
                ));
            }
            sum += p;
        }
        if (sum - S::one()).abs() > S::of(1e-10) {
            return Err(CoreError::InvalidDistribution(format!(
                "conditional rows must sum to 1 within 1e-10 (got {sum})"
            )));
        }
    }

    let mut marginal = vec![S::zero(); width];
    for (row, &p) in rows.iter().zip(prior) {
        for (m, &q) in marginal.iter_mut().zip(row) {
            *m += p * q;
        }
    }
    let h_y: S = -marginal.iter().map(|&q| xlnx(q)).sum::<S>();
    let h_y_given_x: S = -prior
        .iter()
        .zip(rows)
        .map(|(&p, row)| p * row.iter().map(|&q| xlnx(q)).sum::<S>())
        .sum::<S>();
    Ok((h_y - h_y_given_x).max(S::zero()))
}

/// Mutual information between messages and the joint outcome table.
pub fn mutual_information_of_table<S: Scalar>(
    prior: &[S],
    table: &ConditionalTable<S>,
) -> Result<S> {
    mutual_information(prior, table.rows())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measurement::kennedy_off_probability;
    use num_complex::Complex64;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn kennedy(lambda: Complex64) -> Povm<f64> {
        Povm::Kennedy { displacement: lambda }
    }

    fn identity_kennedy_policy(n: usize, lambda: Complex64) -> AdaptivePolicy<f64> {
        AdaptivePolicy::from_fn(n, &vec![2; n], |j, _| {
            (PassiveUnitary::identity(n - j), kennedy(lambda))
        })
        .unwrap()
    }

    #[test]
    fn single_mode_reduces_to_programmable_channel() {
        let alpha = c(0.9, 0.0);
        let book = CodebookSequence::new(
            vec![vec![c(0.0, 0.0)], vec![alpha]],
            vec![0.5, 0.5],
            0.5,
        )
        .unwrap();
        let params = ChannelParams::identity();
        let policy = identity_kennedy_policy(1, c(0.0, 0.0));
        let table = simulate_ad(&book, &params, &policy).unwrap();
        assert!((table.rows()[0][0] - 1.0).abs() < 1e-15);
        assert!((table.rows()[1][0] - (-alpha.norm_sqr()).exp()).abs() < 1e-15);
    }

    #[test]
    fn identity_policy_factorizes() {
        let book = CodebookSequence::new(
            vec![
                vec![c(0.2, 0.1), c(-0.4, 0.0)],
                vec![c(0.5, -0.3), c(0.1, 0.2)],
            ],
            vec![0.4, 0.6],
            1.0,
        )
        .unwrap();
        let params = ChannelParams::pure_loss(0.7).unwrap();
        let policy = identity_kennedy_policy(2, c(0.1, 0.0));
        let table = simulate_ad(&book, &params, &policy).unwrap();

        for w in 0..2 {
            let per_mode: Vec<[f64; 2]> = (0..2)
                .map(|j| {
                    let out = crate::gaussian::apply_channel(&params, book.amplitudes(w)[j]);
                    let off = kennedy_off_probability(&out, c(0.1, 0.0));
                    [off, 1.0 - off]
                })
                .collect();
            for y0 in 0..2 {
                for y1 in 0..2 {
                    let expected = per_mode[0][y0] * per_mode[1][y1];
                    let got = table.rows()[w][y0 * 2 + y1];
                    assert!((got - expected).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn mixer_concentrates_energy_on_first_mode() {
        let alpha = c(0.6, 0.2);
        let book =
            CodebookSequence::new(vec![vec![alpha, alpha]], vec![1.0], alpha.norm_sqr()).unwrap();
        let params = ChannelParams::pure_loss(0.9).unwrap();
        let policy = AdaptivePolicy::from_fn(2, &[2, 2], |j, _| {
            let u = if j == 0 {
                PassiveUnitary::balanced_mixer()
            } else {
                PassiveUnitary::identity(1)
            };
            (u, kennedy(c(0.0, 0.0)))
        })
        .unwrap();
        let table = simulate_ad(&book, &params, &policy).unwrap();

        let bright = alpha * params.mu1() * 2.0f64.sqrt();
        let p_off_1 = (-bright.norm_sqr()).exp();
        // second mode carries zero mean, so it never clicks
        assert!((table.rows()[0][0] - p_off_1).abs() < 1e-14); // off,off
        assert!(table.rows()[0][1].abs() < 1e-14); // off,click
        assert!((table.rows()[0][2] - (1.0 - p_off_1)).abs() < 1e-14); // click,off
        assert!(table.rows()[0][3].abs() < 1e-14);
    }

    #[test]
    fn compiled_random_policies_preserve_path_energy() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(31);
        for _ in 0..20 {
            let book = crate::sampling::random_codebook(&mut rng, 3, 3, 0.3).unwrap();
            let policy = crate::sampling::random_kennedy_policy(&mut rng, 3, 0.5).unwrap();
            let encoder = compile_policy_to_encoder(&book, &policy).unwrap();
            let audit = encoder.energy_audit(&book);
            assert!(audit < 1e-12, "per-path energy drifted by {audit}");
        }
    }

    #[test]
    fn compile_identity_policy_returns_codewords() {
        let book = CodebookSequence::new(
            vec![vec![c(0.3, 0.0), c(-0.2, 0.5)]],
            vec![1.0],
            1.0,
        )
        .unwrap();
        let policy = identity_kennedy_policy(2, c(0.0, 0.0));
        let encoder = compile_policy_to_encoder(&book, &policy).unwrap();
        assert_eq!(encoder.amplitude(0, 0, 0), c(0.3, 0.0));
        for h in 0..2 {
            assert_eq!(encoder.amplitude(0, 1, h), c(-0.2, 0.5));
        }
    }

    #[test]
    fn compile_mixer_extracts_rows() {
        let a1 = c(0.4, 0.1);
        let a2 = c(-0.3, 0.2);
        let book = CodebookSequence::new(vec![vec![a1, a2]], vec![1.0], 1.0).unwrap();
        let policy = AdaptivePolicy::from_fn(2, &[2, 2], |j, _| {
            let u = if j == 0 {
                PassiveUnitary::balanced_mixer()
            } else {
                PassiveUnitary::identity(1)
            };
            (u, kennedy(c(0.0, 0.0)))
        })
        .unwrap();
        let encoder = compile_policy_to_encoder(&book, &policy).unwrap();
        let r = 0.5f64.sqrt();
        assert!((encoder.amplitude(0, 0, 0) - (a1 + a2) * r).norm() < 1e-15);
        for h in 0..2 {
            assert!((encoder.amplitude(0, 1, h) - (a1 - a2) * r).norm() < 1e-15);
        }
        assert!(encoder.energy_audit(&book) < 1e-15);
    }

    #[test]
    fn pictures_agree_on_interfering_policy() {
        let book = CodebookSequence::new(
            vec![
                vec![c(0.5, 0.0), c(0.5, 0.0)],
                vec![c(-0.5, 0.0), c(0.5, 0.0)],
            ],
            vec![0.5, 0.5],
            0.5,
        )
        .unwrap();
        let params = ChannelParams::pure_loss(0.8).unwrap();
        let policy = AdaptivePolicy::from_fn(2, &[2, 2], |j, history| {
            let u = if j == 0 {
                PassiveUnitary::balanced_mixer()
            } else {
                PassiveUnitary::identity(1)
            };
            let lambda = if history.first() == Some(&1) {
                c(0.3, 0.0)
            } else {
                c(-0.1, 0.1)
            };
            (u, kennedy(lambda))
        })
        .unwrap();

        let direct = simulate_ad(&book, &params, &policy).unwrap();
        let encoder = compile_policy_to_encoder(&book, &policy).unwrap();
        let schedule = policy.schedule().unwrap();
        let classical = simulate_classical_picture(&book, &params, &encoder, &schedule).unwrap();
        assert!(direct.max_abs_diff(&classical) < 1e-12);
        assert!(direct.row_sum_deviation() < 1e-10);
    }

    #[test]
    fn constant_encoder_yields_product_rows() {
        // identity policy on a constant codeword: every use transmits beta
        let beta = c(0.4, -0.2);
        let book = CodebookSequence::new(vec![vec![beta, beta, beta]], vec![1.0], 1.0).unwrap();
        let params = ChannelParams::identity();
        let policy = identity_kennedy_policy(3, c(0.0, 0.0));
        let encoder = compile_policy_to_encoder(&book, &policy).unwrap();
        let schedule = policy.schedule().unwrap();
        let table = simulate_classical_picture(&book, &params, &encoder, &schedule).unwrap();
        let off = (-beta.norm_sqr()).exp();
        assert!((table.rows()[0][0] - off.powi(3)).abs() < 1e-14);
    }

    #[test]
    fn missing_branch_is_reported() {
        let mut policy = identity_kennedy_policy(2, c(0.0, 0.0));
        // drop one second-step branch
        let steps = policy.steps.clone();
        let mut broken = steps;
        broken[1].branches.pop();
        policy.steps = broken;
        match simulate_ad(
            &CodebookSequence::new(vec![vec![c(0.0, 0.0), c(0.0, 0.0)]], vec![1.0], 0.0).unwrap(),
            &ChannelParams::identity(),
            &policy,
        ) {
            Err(CoreError::MissingBranch { step: 1, history }) => assert_eq!(history, vec![1]),
            other => panic!("expected MissingBranch, got {other:?}"),
        }
    }

    #[test]
    fn codebook_energy_budget_enforced() {
        let err = CodebookSequence::new(vec![vec![c(1.0, 0.0)]], vec![1.0], 0.5);
        assert!(err.is_err());
    }

    #[test]
    fn mutual_information_reference_points() {
        // noiseless binary channel
        let i = mutual_information(&[0.5, 0.5], &[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert!((i - std::f64::consts::LN_2).abs() < 1e-15);

        // output independent of input
        let i: f64 =
            mutual_information(&[0.3, 0.7], &[vec![0.2, 0.8], vec![0.2, 0.8]]).unwrap();
        assert!(i.abs() < 1e-15);

        // binary symmetric channel,0.11 flip, against a direct entropy oracle
        let eps = 0.11f64;
        let i = mutual_information(
            &[0.5, 0.5],
            &[vec![1.0 - eps, eps], vec![eps, 1.0 - eps]],
        )
        .unwrap();
        let h = -(eps * eps.ln() + (1.0 - eps) * (1.0 - eps).ln());
        let oracle = std::f64::consts::LN_2 - h;
        assert!((i - oracle).abs() < 1e-12, "i={i} oracle={oracle}");
    }

    #[test]
    fn mutual_information_validates_rows() {
        assert!(mutual_information(&[1.0], &[vec![0.7, 0.7]]).is_err());
        assert!(mutual_information(&[0.6, 0.6], &[vec![1.0, 0.0], vec![0.0, 1.0]]).is_err());
    }

    #[test]
    fn policy_serde_round_trip_validates() {
        let policy = identity_kennedy_policy(2, c(0.3, -0.1));
        let json = serde_json::to_string(&policy).unwrap();
        let back: AdaptivePolicy<f64> = serde_json::from_str(&json).unwrap();
        back.validate().unwrap();
        assert_eq!(back.outcome_counts().unwrap(), vec![2, 2]);
    }

    #[test]
    fn path_prob_switches_to_log_space() {
        let tiny = 1e-200f64;
        let p = PathProb::one().times(tiny).times(tiny).times(tiny);
        // linear math would have underflowed to zero after two factors
        let v = p.value();
        assert_eq!(v, 0.0); // below f64 range, but reached through the log path
        let p = PathProb::one().times(tiny).times(tiny);
        assert!(matches!(p, PathProb::Log(_)));
        let log_value = match p {
            PathProb::Log(l) => l,
            _ => unreachable!(),
        };
        assert!((log_value - 2.0 * tiny.ln()).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn prop_mi_respects_alphabet_bounds(
            p in 0.01..0.99f64,
            a in 0.0..1.0f64,
            b in 0.0..1.0f64,
        ) {
            let rows = vec![vec![a, 1.0 - a], vec![b, 1.0 - b]];
            let i = mutual_information(&[p, 1.0 - p], &rows).unwrap();
            prop_assert!(i >= 0.0);
            prop_assert!(i <= std::f64::consts::LN_2 + 1e-12);
        }
    }
}
