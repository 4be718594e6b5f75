//! Adaptive-decoder rate search at small mode counts.
//!
//! The optimizer alternates between the message prior (inner constrained
//! Blahut-Arimoto on the exact joint outcome table) and the policy
//! parameters (coordinate ascent over beam-splitter angles and measurement
//! parameters on shrinking grids). Everything is deterministic; the result
//! is a lower bound with the full incumbent trace recorded.

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use super::{
    ba_constrained, optimize_sd_rate, AxisSpec, BaOptions, DiscreteChannel, LambdaSearch,
    PovmFamily, RateDiagnostics, RateResult,
};
use crate::adaptive::{simulate_ad, AdaptivePolicy, CodebookSequence};
use crate::error::{CoreError, Result};
use crate::gaussian::{compile_elements, ChannelParams, Element, PassiveUnitary};
use crate::scalar::{Cplx, Scalar};

/// Search space for the adaptive optimizer.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AdSearch<S: Scalar> {
    /// Number of channel uses; supported range is 1..=3.
    pub n_modes: usize,
    /// Per-mode letter alphabet; codewords are all letter tuples.
    pub letters: Vec<Cplx<S>>,
    /// Beam-splitter mixing-angle grid.
    pub theta: AxisSpec<S>,
    /// Beam-splitter phase grid.
    pub phi: AxisSpec<S>,
    /// Measurement-parameter search, shared by every history branch.
    pub lambda: LambdaSearch<S>,
    /// Coordinate-ascent sweeps per refinement round.
    pub sweeps: usize,
    /// Refinement rounds after the coarse scan.
    pub rounds: usize,
}

/// Result of the adaptive search: per-mode rate, the achieving policy and
/// codebook, the single-mode reference it was seeded from, and the trace of
/// incumbent rates.
#[derive(Clone, Debug, Serialize)]
pub struct AdRateOutcome<S: Scalar> {
    pub result: RateResult<S>,
    pub policy: AdaptivePolicy<S>,
    pub codebook: CodebookSequence<S>,
    pub sd_reference: RateResult<S>,
    pub trace: Vec<S>,
}

#[derive(Clone)]
struct BranchParams<S: Scalar> {
    /// (theta, phi) per beam splitter in the fixed chain for this step.
    bs: Vec<(S, S)>,
    lambda: Cplx<S>,
}

type ParamTree<S> = Vec<Vec<BranchParams<S>>>;

const MAX_LEAVES: usize = 1_000_000;
const MAX_CODEWORDS: usize = 4096;

fn chain_pairs(dim: usize) -> Vec<(usize, usize)> {
    // last splitter touches mode 0 so energy can be steered into the
    // measured mode
    (0..dim.saturating_sub(1))
        .rev()
        .map(|a| (a, a + 1))
        .collect()
}

fn build_unitary<S: Scalar>(dim: usize, bs: &[(S, S)]) -> Result<PassiveUnitary<S>> {
    if dim == 1 {
        return Ok(PassiveUnitary::identity(1));
    }
    let elements: Vec<Element<S>> = chain_pairs(dim)
        .into_iter()
        .zip(bs)
        .map(|((a, b), &(theta, phi))| Element::BeamSplitter { a, b, theta, phi })
        .collect();
    compile_elements(dim, &elements)
}

fn build_policy<S: Scalar>(
    search: &AdSearch<S>,
    counts: &[usize],
    tree: &ParamTree<S>,
    family: &PovmFamily<S>,
) -> Result<AdaptivePolicy<S>> {
    let n = search.n_modes;
    let mut error: Option<CoreError> = None;
    let policy = AdaptivePolicy::from_fn(n, counts, |j, history| {
        // canonical history index: digits weighted by earlier steps' arities
        let mut idx = 0usize;
        for (i, &y) in history.iter().enumerate() {
            idx = idx * counts[i] + y;
        }
        let branch = &tree[j][idx];
        let unitary = match build_unitary(n - j, &branch.bs) {
            Ok(u) => u,
            Err(e) => {
                error = Some(e);
                PassiveUnitary::identity(n - j)
            }
        };
        (unitary, family.instantiate(branch.lambda))
    })?;
    if let Some(e) = error {
        return Err(e);
    }
    Ok(policy)
}

struct Evaluation<S: Scalar> {
    rate_per_mode: S,
    prior: Vec<S>,
    energy_per_mode: S,
    multiplier: S,
    gap: S,
    iterations: usize,
    worst_ascent: S,
}

#[allow(clippy::too_many_arguments)]
fn evaluate<S: Scalar>(
    search: &AdSearch<S>,
    counts: &[usize],
    tree: &ParamTree<S>,
    family: &PovmFamily<S>,
    params: &ChannelParams<S>,
    codebook: &CodebookSequence<S>,
    energy_budget: S,
    opts: &BaOptions<S>,
) -> Result<Evaluation<S>> {
    let policy = build_policy(search, counts, tree, family)?;
    let table = simulate_ad(codebook, params, &policy)?;
    let n = S::of(search.n_modes as f64);
    let energies: Vec<S> = (0..codebook.len())
        .map(|w| codebook.message_energy(w) / n)
        .collect();
    let channel = DiscreteChannel::new(table.rows().to_vec(), energies)?;
    let solution = ba_constrained(&channel, energy_budget, opts)?;
    Ok(Evaluation {
        rate_per_mode: solution.rate / n,
        prior: solution.prior,
        energy_per_mode: solution.energy,
        multiplier: solution.multiplier,
        gap: solution.gap / n,
        iterations: solution.iterations,
        worst_ascent: solution.worst_ascent_step,
    })
}

/// Maximizes the per-mode rate of an adaptive decoder over codebook priors
/// and policy parameters.
pub fn optimize_ad_rate<S: Scalar>(
    search: &AdSearch<S>,
    params: &ChannelParams<S>,
    family: &PovmFamily<S>,
    energy_budget: S,
    opts: &BaOptions<S>,
) -> Result<AdRateOutcome<S>> {
    if search.n_modes == 0 || search.n_modes > 3 {
        return Err(CoreError::Domain(format!(
            "adaptive search supports 1..=3 modes (got {})",
            search.n_modes
        )));
    }
    if search.letters.is_empty() {
        return Err(CoreError::Domain("letter alphabet is empty".into()));
    }
    let outcome_count = family.instantiate(Complex::new(S::zero(), S::zero())).outcome_count();
    let leaves = outcome_count
        .checked_pow(search.n_modes as u32)
        .unwrap_or(usize::MAX);
    if leaves > MAX_LEAVES {
        return Err(CoreError::SearchSpaceTooLarge(format!(
            "{leaves} outcome leaves exceed the limit {MAX_LEAVES}"
        )));
    }
    let n_codewords = search.letters.len().checked_pow(search.n_modes as u32).unwrap_or(usize::MAX);
    if n_codewords > MAX_CODEWORDS {
        return Err(CoreError::SearchSpaceTooLarge(format!(
            "{n_codewords} codewords exceed the limit {MAX_CODEWORDS}"
        )));
    }

    // Seed from the single-mode optimum so ascent starts at the separable
    // baseline.
    let sd_reference = optimize_sd_rate(
        &search.letters,
        &search.lambda,
        params,
        family,
        energy_budget,
        opts,
    )?;
    let lambda0 = sd_reference.lambda.unwrap_or_else(|| Complex::new(S::zero(), S::zero()));

    let n = search.n_modes;
    let counts = vec![outcome_count; n];
    // uniform-prior codebook over all letter tuples; only the table matters
    let messages: Vec<Vec<Cplx<S>>> = (0..n_codewords)
        .map(|idx| {
            let mut word = Vec::with_capacity(n);
            let mut rest = idx;
            for _ in 0..n {
                word.push(search.letters[rest % search.letters.len()]);
                rest /= search.letters.len();
            }
            word
        })
        .collect();
    let max_letter_energy = search
        .letters
        .iter()
        .map(|a| a.norm_sqr())
        .fold(S::zero(), |a, b| a.max(b));
    let uniform = vec![S::one() / S::of(n_codewords as f64); n_codewords];
    let table_book = CodebookSequence::new(messages.clone(), uniform, max_letter_energy)?;

    let mut tree: ParamTree<S> = (0..n)
        .map(|j| {
            let histories: usize = counts[..j].iter().product();
            let bs_len = (n - j).saturating_sub(1);
            vec![
                BranchParams {
                    bs: vec![(S::zero(), S::zero()); bs_len],
                    lambda: lambda0,
                };
                histories
            ]
        })
        .collect();

    let mut best = evaluate(
        search, &counts, &tree, family, params, &table_book, energy_budget, opts,
    )?;
    let mut trace = vec![best.rate_per_mode];
    let mut iterations = best.iterations;
    let mut worst_ascent = best.worst_ascent;
    let mut rate_before_last_round = best.rate_per_mode;

    for round in 0..=search.rounds {
        if round == search.rounds {
            rate_before_last_round = best.rate_per_mode;
        }
        for _sweep in 0..search.sweeps.max(1) {
            for j in 0..n {
                for h in 0..tree[j].len() {
                    // beam-splitter angles
                    for slot in 0..tree[j][h].bs.len() {
                        for angle_slot in 0..2 {
                            let incumbent = if angle_slot == 0 {
                                tree[j][h].bs[slot].0
                            } else {
                                tree[j][h].bs[slot].1
                            };
                            let axis = if angle_slot == 0 { &search.theta } else { &search.phi };
                            let candidates = axis_candidates(axis, search.lambda.shrink, round, incumbent);
                            for cand in candidates {
                                let mut trial = tree.clone();
                                if angle_slot == 0 {
                                    trial[j][h].bs[slot].0 = cand;
                                } else {
                                    trial[j][h].bs[slot].1 = cand;
                                }
                                let eval = evaluate(
                                    search, &counts, &trial, family, params, &table_book,
                                    energy_budget, opts,
                                )?;
                                iterations += eval.iterations;
                                worst_ascent = worst_ascent.min(eval.worst_ascent);
                                if eval.rate_per_mode > best.rate_per_mode {
                                    best = eval;
                                    tree = trial;
                                    trace.push(best.rate_per_mode);
                                }
                            }
                        }
                    }
                    // measurement parameter
                    let incumbent = tree[j][h].lambda;
                    for cand in search.lambda.round_candidates(round, &[incumbent]) {
                        let mut trial = tree.clone();
                        trial[j][h].lambda = cand;
                        let eval = evaluate(
                            search, &counts, &trial, family, params, &table_book, energy_budget,
                            opts,
                        )?;
                        iterations += eval.iterations;
                        worst_ascent = worst_ascent.min(eval.worst_ascent);
                        if eval.rate_per_mode > best.rate_per_mode {
                            best = eval;
                            tree = trial;
                            trace.push(best.rate_per_mode);
                        }
                    }
                }
            }
        }
    }

    let policy = build_policy(search, &counts, &tree, family)?;
    let codebook = CodebookSequence::new(messages, best.prior.clone(), energy_budget)?;
    let lambda = if n == 1 { Some(tree[0][0].lambda) } else { None };
    let result = RateResult {
        rate: best.rate_per_mode,
        prior: best.prior.clone(),
        constellation: None,
        lambda,
        diagnostics: RateDiagnostics {
            iterations,
            gap: best.gap,
            energy_used: best.energy_per_mode,
            multiplier: best.multiplier,
            refinement_residual: (best.rate_per_mode - rate_before_last_round).max(S::zero()),
            worst_ascent_step: worst_ascent,
        },
    };
    Ok(AdRateOutcome {
        result,
        policy,
        codebook,
        sd_reference,
        trace,
    })
}

fn axis_candidates<S: Scalar>(axis: &AxisSpec<S>, shrink: S, round: usize, incumbent: S) -> Vec<S> {
    if round == 0 {
        axis.values()
    } else {
        let factor = shrink.powi(round as i32);
        let span = axis.span() * factor;
        let mut values = AxisSpec {
            min: incumbent - span * S::of(0.5),
            max: incumbent + span * S::of(0.5),
            count: axis.count,
        }
        .values();
        values.push(incumbent);
        values
    }
}
