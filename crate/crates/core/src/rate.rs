//! Rate optimization and verification.
//!
//! The working horse is an energy-constrained Blahut-Arimoto solver: the
//! energy constraint enters through a Lagrange multiplier found by bisection,
//! and every returned rate is the mutual information of an explicit feasible
//! prior, hence a certified lower bound. Searches over measurement
//! parameters and decoder policies wrap that solver with deterministic
//! grid-plus-refinement loops, so all reported optima are lower bounds with
//! a recorded refinement residual.
//!
//! `theorem_check` is the verification harness: it takes explicit adaptive
//! decoding instances, decomposes their mutual information along the chain
//! rule in the classical feedback picture, bounds every per-use term by a
//! single-use capacity at the branch energy, and compares the per-mode rate
//! against the single-mode optimum.

pub mod ad;
pub mod harness;

pub use ad::{optimize_ad_rate, AdRateOutcome, AdSearch};
pub use harness::{
    replica_instance, seed_letters, theorem_check, InstanceCheck, NegativeControl,
    TheoremCheckConfig, TheoremInstance, TheoremReport,
};

use num_complex::Complex;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::gaussian::{ChannelParams, Constellation};
use crate::measurement::{programmable_channel_prob, Povm};
use crate::scalar::{Cplx, Scalar};

/// A finite classical channel with a per-symbol cost, the input to the
/// constrained Blahut-Arimoto solver.
#[derive(Clone, Debug)]
pub struct DiscreteChannel<S: Scalar> {
    rows: Vec<Vec<S>>,
    energies: Vec<S>,
}

impl<S: Scalar> DiscreteChannel<S> {
    pub fn new(rows: Vec<Vec<S>>, energies: Vec<S>) -> Result<Self> {
        if rows.is_empty() {
            return Err(CoreError::Domain("channel needs at least one input row".into()));
        }
        if rows.len() != energies.len() {
            return Err(CoreError::DimensionMismatch {
                expected: rows.len(),
                got: energies.len(),
            });
        }
        let width = rows[0].len();
        if width == 0 {
            return Err(CoreError::Domain("channel needs at least one outcome".into()));
        }
        for row in &rows {
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
                        "channel rows must be nonnegative".into(),
                    ));
                }
                sum += p;
            }
            if (sum - S::one()).abs() > S::of(1e-10) {
                return Err(CoreError::InvalidDistribution(format!(
                    "channel rows must sum to 1 within 1e-10 (got {sum})"
                )));
            }
        }
        for &e in &energies {
            if !e.is_finite() || e < S::zero() {
                return Err(CoreError::Domain(format!(
                    "symbol energies must be finite and nonnegative (got {e})"
                )));
            }
        }
        Ok(Self { rows, energies })
    }

    pub fn n_inputs(&self) -> usize {
        self.rows.len()
    }

    pub fn rows(&self) -> &[Vec<S>] {
        &self.rows
    }

    pub fn energies(&self) -> &[S] {
        &self.energies
    }
}

/// Solver knobs. The defaults implement the documented behavior: iteration
/// stops once the objective moves by less than `rate_tol`, and the energy
/// multiplier is bisected inside `[0, multiplier_bracket]`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct BaOptions<S: Scalar> {
    pub rate_tol: S,
    /// Extra stopping requirement on the dual optimality gap, so returned
    /// rates are tight lower bounds and not early stops.
    pub gap_tol: S,
    pub max_iterations: usize,
    pub multiplier_bracket: S,
    pub bisection_iterations: usize,
    pub energy_slack: S,
}

impl<S: Scalar> Default for BaOptions<S> {
    fn default() -> Self {
        Self {
            rate_tol: S::of(1e-10),
            gap_tol: S::of(1e-11),
            max_iterations: 10_000,
            multiplier_bracket: S::of(1e3),
            bisection_iterations: 200,
            energy_slack: S::of(1e-12),
        }
    }
}

/// Output of the constrained solver: an explicit feasible prior and its
/// exact mutual information.
#[derive(Clone, Debug)]
pub struct BaSolution<S: Scalar> {
    pub prior: Vec<S>,
    pub rate: S,
    pub energy: S,
    pub multiplier: S,
    pub iterations: usize,
    pub gap: S,
    /// Most negative objective step observed; the update is an ascent, so
    /// this should never drop below roundoff.
    pub worst_ascent_step: S,
}

struct FixedRun<S: Scalar> {
    prior: Vec<S>,
    info: S,
    energy: S,
    iterations: usize,
    worst_ascent_step: S,
}

struct IterRun<S: Scalar> {
    prior: Vec<S>,
    info: S,
    energy: S,
    iterations: usize,
    worst_ascent_step: S,
    gap: S,
}

/// Plain multiplicative ascent on the index subset `idx`, normalized in log
/// space, with dust pruning. Stops on the joint (step, gap) criterion, on a
/// floating-point stall, or at `max_iterations`.
fn ba_iterate<S: Scalar>(
    channel: &DiscreteChannel<S>,
    idx: &[usize],
    start: Option<&[S]>,
    multiplier: S,
    max_iterations: usize,
    opts: &BaOptions<S>,
) -> IterRun<S> {
    let n = idx.len();
    let width = channel.rows[0].len();
    let uniform = S::one() / S::of(n as f64);
    // starts are blended with the uniform prior so no symbol begins dead
    let mut prior: Vec<S> = match start {
        Some(p) if p.len() == n => p
            .iter()
            .map(|&x| x * S::of(0.9) + uniform * S::of(0.1))
            .collect(),
        _ => vec![uniform; n],
    };
    let mut marginal = vec![S::zero(); width];
    let mut kl = vec![S::zero(); n];
    let dust = S::of(1e-18);

    let mut info;
    let mut energy;
    let mut gap_now;
    let mut objective_prev = S::zero();
    let mut gap_prev = S::infinity();
    let mut have_prev = false;
    let mut worst_ascent = S::zero();
    let mut iterations = 0usize;

    loop {
        iterations += 1;
        for m in marginal.iter_mut() {
            *m = S::zero();
        }
        for (k, &i) in idx.iter().enumerate() {
            let p = prior[k];
            if p > S::zero() {
                for (m, &q) in marginal.iter_mut().zip(&channel.rows[i]) {
                    *m += p * q;
                }
            }
        }
        info = S::zero();
        energy = S::zero();
        let mut dual = S::neg_infinity();
        for (k, &i) in idx.iter().enumerate() {
            if prior[k] == S::zero() {
                kl[k] = S::zero();
                continue;
            }
            let mut d = S::zero();
            for (&q, &m) in channel.rows[i].iter().zip(&marginal) {
                if q > S::zero() && m > S::zero() {
                    d += q * (q / m).ln();
                }
            }
            kl[k] = d;
            info += prior[k] * d;
            energy += prior[k] * channel.energies[i];
            let score = d - multiplier * channel.energies[i];
            if score > dual {
                dual = score;
            }
        }
        let objective = info - multiplier * energy;
        gap_now = dual - objective;
        if have_prev {
            let step = objective - objective_prev;
            if step < worst_ascent {
                worst_ascent = step;
            }
            let tight = step.abs() < opts.rate_tol && gap_now < opts.gap_tol;
            // neither the objective nor the gap makes representable progress
            let floor = objective.abs().max(S::one()) * S::epsilon() * S::of(4.0);
            let stalled = step.abs() < floor && gap_prev - gap_now < floor;
            if tight || stalled || iterations >= max_iterations {
                break;
            }
        }
        objective_prev = objective;
        gap_prev = gap_now;
        have_prev = true;

        // multiplicative update, normalized in log space
        let mut best = S::neg_infinity();
        let mut weights = vec![S::neg_infinity(); n];
        for (k, &i) in idx.iter().enumerate() {
            if prior[k] > S::zero() {
                let w = prior[k].ln() + kl[k] - multiplier * channel.energies[i];
                weights[k] = w;
                if w > best {
                    best = w;
                }
            }
        }
        let mut z = S::zero();
        for (p, &lw) in prior.iter_mut().zip(&weights) {
            *p = if lw.is_finite() { (lw - best).exp() } else { S::zero() };
            if *p < dust {
                *p = S::zero();
            }
            z += *p;
        }
        for p in prior.iter_mut() {
            *p /= z;
        }
    }

    IterRun {
        prior,
        info,
        energy,
        iterations,
        worst_ascent_step: worst_ascent,
        gap: gap_now,
    }
}

/// Exact objective, divergences, and energy of a prior on `idx`.
fn lagrangian_stats<S: Scalar>(
    channel: &DiscreteChannel<S>,
    idx: &[usize],
    prior: &[S],
) -> (S, S, Vec<S>) {
    let width = channel.rows[0].len();
    let mut marginal = vec![S::zero(); width];
    for (k, &i) in idx.iter().enumerate() {
        if prior[k] > S::zero() {
            for (m, &q) in marginal.iter_mut().zip(&channel.rows[i]) {
                *m += prior[k] * q;
            }
        }
    }
    let mut info = S::zero();
    let mut energy = S::zero();
    let mut kl = vec![S::zero(); idx.len()];
    for (k, &i) in idx.iter().enumerate() {
        let mut d = S::zero();
        for (&q, &m) in channel.rows[i].iter().zip(&marginal) {
            if q > S::zero() && m > S::zero() {
                d += q * (q / m).ln();
            }
        }
        kl[k] = d;
        info += prior[k] * d;
        energy += prior[k] * channel.energies[i];
    }
    (info, energy, kl)
}

/// Solves a small dense symmetric system by Gaussian elimination with
/// partial pivoting. Returns false when the matrix is numerically singular.
fn solve_dense<S: Scalar>(a: &mut [S], b: &mut [S], m: usize) -> bool {
    for col in 0..m {
        let mut pivot = col;
        for row in (col + 1)..m {
            if a[row * m + col].abs() > a[pivot * m + col].abs() {
                pivot = row;
            }
        }
        if a[pivot * m + col].abs() < S::of(1e-300) {
            return false;
        }
        if pivot != col {
            for k in 0..m {
                a.swap(col * m + k, pivot * m + k);
            }
            b.swap(col, pivot);
        }
        let inv = a[col * m + col].recip();
        for row in (col + 1)..m {
            let f = a[row * m + col] * inv;
            if f != S::zero() {
                for k in col..m {
                    a[row * m + k] -= f * a[col * m + k];
                }
                b[row] -= f * b[col];
            }
        }
    }
    for col in (0..m).rev() {
        let mut acc = b[col];
        for k in (col + 1)..m {
            acc -= a[col * m + k] * b[k];
        }
        b[col] = acc / a[col * m + col];
    }
    true
}

/// Damped-Newton ascent on the simplex for the Lagrangian objective,
/// used to tighten the multiplicative iterate. The line search only accepts
/// non-decreasing steps, so the ascent invariant survives.
#[allow(clippy::needless_range_loop)]
fn newton_polish<S: Scalar>(
    channel: &DiscreteChannel<S>,
    idx: &[usize],
    prior: &mut Vec<S>,
    multiplier: S,
    opts: &BaOptions<S>,
) -> usize {
    let n = idx.len();
    if n < 2 {
        return 0;
    }
    let width = channel.rows[0].len();
    let mut iterations = 0usize;
    for _ in 0..40 {
        iterations += 1;
        let (info, energy, kl) = lagrangian_stats(channel, idx, prior);
        let objective = info - multiplier * energy;
        let mut dual = S::neg_infinity();
        for (k, &i) in idx.iter().enumerate() {
            let score = kl[k] - multiplier * channel.energies[i];
            if score > dual {
                dual = score;
            }
        }
        if dual - objective < opts.gap_tol * S::of(0.1) {
            break;
        }

        // marginal for the Gram matrix
        let mut marginal = vec![S::zero(); width];
        for (k, &i) in idx.iter().enumerate() {
            for (m, &q) in marginal.iter_mut().zip(&channel.rows[i]) {
                *m += prior[k] * q;
            }
        }
        let gram = |a: usize, b: usize| -> S {
            let (ia, ib) = (idx[a], idx[b]);
            let mut acc = S::zero();
            for y in 0..width {
                let m = marginal[y];
                if m > S::zero() {
                    acc += channel.rows[ia][y] * channel.rows[ib][y] / m;
                }
            }
            acc
        };

        // reduced coordinates eliminate p_0 through normalization
        let m = n - 1;
        let score0 = kl[0] - multiplier * channel.energies[idx[0]];
        let mut grad = vec![S::zero(); m];
        for k in 0..m {
            grad[k] = kl[k + 1] - multiplier * channel.energies[idx[k + 1]] - score0;
        }
        let g00 = gram(0, 0);
        let mut hess = vec![S::zero(); m * m];
        let mut trace = S::zero();
        for r in 0..m {
            for c in 0..m {
                let v = gram(r + 1, c + 1) - gram(r + 1, 0) - gram(0, c + 1) + g00;
                hess[r * m + c] = v;
                if r == c {
                    trace += v;
                }
            }
        }
        // Levenberg damping keeps duplicate-symbol directions solvable
        let damping = trace.max(S::one()) * S::of(1e-13);
        for r in 0..m {
            hess[r * m + r] += damping;
        }
        let mut step = grad.clone();
        if !solve_dense(&mut hess, &mut step, m) {
            break;
        }

        // expand to the full simplex direction
        let mut direction = vec![S::zero(); n];
        let mut head = S::zero();
        for k in 0..m {
            direction[k + 1] = step[k];
            head -= step[k];
        }
        direction[0] = head;

        // largest step that keeps the prior nonnegative
        let mut alpha = S::one();
        for k in 0..n {
            if direction[k] < S::zero() {
                let cap = -prior[k] / direction[k];
                if cap < alpha {
                    alpha = cap;
                }
            }
        }
        if alpha <= S::zero() {
            break;
        }
        let mut improved = false;
        for _ in 0..40 {
            let mut trial: Vec<S> = prior
                .iter()
                .zip(&direction)
                .map(|(&p, &d)| (p + alpha * d).max(S::zero()))
                .collect();
            let z: S = trial.iter().copied().sum();
            for t in trial.iter_mut() {
                *t /= z;
            }
            let (t_info, t_energy, _) = lagrangian_stats(channel, idx, &trial);
            if t_info - multiplier * t_energy >= objective {
                *prior = trial;
                improved = true;
                break;
            }
            alpha *= S::of(0.5);
        }
        if !improved {
            break;
        }
    }
    iterations
}

/// Newton ascent of the mutual information under the two equality
/// constraints `sum p = 1` and `sum p e = budget`, used to polish mixtures
/// produced at multiplier kinks, where no fixed-multiplier optimum attains
/// the budget. Directions live in the constraint null space; the line search
/// only accepts non-decreasing steps.
#[allow(clippy::needless_range_loop)]
fn newton_polish_energy_constrained<S: Scalar>(
    channel: &DiscreteChannel<S>,
    active: &[usize],
    prior: &mut Vec<S>,
    budget: S,
) -> usize {
    let width = channel.rows[0].len();
    let mut iterations = 0usize;
    // project the start onto the constraint manifold through the extreme
    // energy pair, so the ascent baseline is feasible
    {
        let support: Vec<usize> = (0..active.len())
            .filter(|&k| prior[k] > S::of(1e-15))
            .collect();
        if support.len() >= 2 {
            let energy_of = |k: usize| channel.energies[active[k]];
            let mut a = support[0];
            let mut b = support[0];
            for &k in &support {
                if energy_of(k) < energy_of(a) {
                    a = k;
                }
                if energy_of(k) > energy_of(b) {
                    b = k;
                }
            }
            let det = energy_of(b) - energy_of(a);
            if det > S::of(1e-12) {
                let z: S = prior.iter().copied().sum();
                let te: S = prior
                    .iter()
                    .enumerate()
                    .map(|(k, &p)| p * energy_of(k))
                    .sum();
                let d1 = S::one() - z;
                let d2 = budget - te;
                let da = (energy_of(b) * d1 - d2) / det;
                let db = (d2 - energy_of(a) * d1) / det;
                if prior[a] + da >= S::zero() && prior[b] + db >= S::zero() {
                    prior[a] += da;
                    prior[b] += db;
                }
            }
        }
    }
    'outer: for _ in 0..30 {
        iterations += 1;
        // working support
        let support: Vec<usize> = (0..active.len())
            .filter(|&k| prior[k] > S::of(1e-15))
            .collect();
        let n = support.len();
        if n < 3 {
            break;
        }
        // reference pair for constraint elimination: maximal energy spread
        let energy_of = |k: usize| channel.energies[active[k]];
        let mut a = support[0];
        let mut b = support[0];
        for &k in &support {
            if energy_of(k) < energy_of(a) {
                a = k;
            }
            if energy_of(k) > energy_of(b) {
                b = k;
            }
        }
        if energy_of(b) - energy_of(a) < S::of(1e-12) {
            break;
        }
        let free: Vec<usize> = support.iter().copied().filter(|&k| k != a && k != b).collect();
        let m = free.len();
        if m == 0 {
            break;
        }

        let (info, _energy, kl) = lagrangian_stats(channel, active, prior);
        let mut marginal = vec![S::zero(); width];
        for (k, &i) in active.iter().enumerate() {
            if prior[k] > S::zero() {
                for (mm, &q) in marginal.iter_mut().zip(&channel.rows[i]) {
                    *mm += prior[k] * q;
                }
            }
        }
        let gram = |x: usize, y: usize| -> S {
            let (ix, iy) = (active[x], active[y]);
            let mut acc = S::zero();
            for yy in 0..width {
                let mq = marginal[yy];
                if mq > S::zero() {
                    acc += channel.rows[ix][yy] * channel.rows[iy][yy] / mq;
                }
            }
            acc
        };

        // basis vector for free coordinate k: unit_k + ca(k) unit_a + cb(k) unit_b
        let ea = energy_of(a);
        let eb = energy_of(b);
        let det = eb - ea;
        let coef = |k: usize| -> (S, S) {
            let ek = energy_of(k);
            ((ek - eb) / det, (ea - ek) / det)
        };
        let mut grad = vec![S::zero(); m];
        for (slot, &k) in free.iter().enumerate() {
            let (ca, cb) = coef(k);
            grad[slot] = kl[k] + ca * kl[a] + cb * kl[b];
        }
        let gnorm = grad.iter().fold(S::zero(), |acc, &g| acc.max(g.abs()));
        if gnorm < S::of(1e-13) {
            break;
        }
        let mut hess = vec![S::zero(); m * m];
        let mut trace = S::zero();
        for r in 0..m {
            let (car, cbr) = coef(free[r]);
            for c in 0..m {
                let (cac, cbc) = coef(free[c]);
                // v_r^T G v_c
                let v = gram(free[r], free[c])
                    + cac * gram(free[r], a)
                    + cbc * gram(free[r], b)
                    + car * (gram(a, free[c]) + cac * gram(a, a) + cbc * gram(a, b))
                    + cbr * (gram(b, free[c]) + cac * gram(b, a) + cbc * gram(b, b));
                hess[r * m + c] = v;
                if r == c {
                    trace += v;
                }
            }
        }
        let damping = trace.max(S::one()) * S::of(1e-13);
        for r in 0..m {
            hess[r * m + r] += damping;
        }
        let mut step = grad.clone();
        if !solve_dense(&mut hess, &mut step, m) {
            break;
        }
        let mut direction = vec![S::zero(); active.len()];
        for (slot, &k) in free.iter().enumerate() {
            let (ca, cb) = coef(k);
            direction[k] += step[slot];
            direction[a] += ca * step[slot];
            direction[b] += cb * step[slot];
        }
        let mut alpha = S::one();
        for k in 0..active.len() {
            if direction[k] < S::zero() {
                let cap = -prior[k] / direction[k];
                if cap < alpha {
                    alpha = cap;
                }
            }
        }
        if alpha <= S::zero() {
            break;
        }
        for _ in 0..40 {
            let mut trial: Vec<S> = prior
                .iter()
                .zip(&direction)
                .map(|(&p, &d)| (p + alpha * d).max(S::zero()))
                .collect();
            // restore the two equality constraints exactly through (a, b)
            let z: S = trial.iter().copied().sum();
            let te: S = trial
                .iter()
                .enumerate()
                .map(|(k, &p)| p * energy_of(k))
                .sum();
            let d1 = S::one() - z;
            let d2 = budget - te;
            let da = (d1 * eb - d2) / det;
            let db = (d2 - d1 * ea) / det;
            trial[a] += da;
            trial[b] += db;
            if trial[a] < S::zero() || trial[b] < S::zero() {
                alpha *= S::of(0.5);
                continue;
            }
            let (t_info, _, _) = lagrangian_stats(channel, active, &trial);
            if t_info >= info {
                *prior = trial;
                if t_info - info < S::of(1e-15) {
                    break 'outer;
                }
                break;
            }
            alpha *= S::of(0.5);
            if alpha < S::of(1e-12) {
                break 'outer;
            }
        }
    }
    iterations
}

/// Solves the fixed-multiplier problem on `active`. A coarse full-grid scan
/// identifies the achieving support (at most the outcome count plus slack),
/// a tight polish runs on that support, and a full-grid dual sweep escalates
/// any symbol the support missed. This sidesteps the sublinear mass
/// consolidation of plain ascent on dense amplitude grids.
fn ba_fixed_multiplier<S: Scalar>(
    channel: &DiscreteChannel<S>,
    active: &[usize],
    multiplier: S,
    warm_start: Option<&[S]>,
    opts: &BaOptions<S>,
) -> FixedRun<S> {
    let width = channel.rows[0].len();
    let mut iterations = 0usize;
    let mut worst_ascent = S::zero();

    // A warm start already carries the support structure; a cold start earns
    // it through a coarse full-grid scan.
    let seed: Vec<S> = match warm_start {
        Some(w) if w.len() == active.len() => w.to_vec(),
        _ => {
            let coarse_cap = 800usize.min(opts.max_iterations.max(1));
            let coarse = ba_iterate(channel, active, None, multiplier, coarse_cap, opts);
            iterations += coarse.iterations;
            worst_ascent = worst_ascent.min(coarse.worst_ascent_step);
            if coarse.gap < opts.gap_tol {
                return FixedRun {
                    prior: coarse.prior,
                    info: coarse.info,
                    energy: coarse.energy,
                    iterations,
                    worst_ascent_step: worst_ascent,
                };
            }
            coarse.prior
        }
    };

    if active.len() <= width + 3 {
        let run = ba_iterate(
            channel,
            active,
            Some(&seed),
            multiplier,
            opts.max_iterations.min(1500),
            opts,
        );
        iterations += run.iterations;
        worst_ascent = worst_ascent.min(run.worst_ascent_step);
        let mut prior = run.prior;
        iterations += newton_polish(channel, active, &mut prior, multiplier, opts);
        let (info, energy, _) = lagrangian_stats(channel, active, &prior);
        return FixedRun {
            prior,
            info,
            energy,
            iterations,
            worst_ascent_step: worst_ascent,
        };
    }

    // support selection by seed mass, deterministic tie-break on index
    let support_cap = (width + 3).max(6).min(active.len());
    let mut order: Vec<usize> = (0..active.len()).collect();
    order.sort_by(|&a, &b| {
        seed[b]
            .partial_cmp(&seed[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut support: Vec<usize> = Vec::new();
    let mut cum = S::zero();
    for &k in &order {
        if support.len() >= support_cap {
            break;
        }
        support.push(k);
        cum += seed[k];
        if cum >= S::one() - S::of(1e-10) && support.len() >= 2 {
            break;
        }
    }
    support.sort_unstable();

    let mut best: Option<(Vec<S>, S, S)> = None;
    for _round in 0..6 {
        let sub_idx: Vec<usize> = support.iter().map(|&k| active[k]).collect();
        let restricted: Vec<S> = {
            let total: S = support.iter().map(|&k| seed[k]).sum();
            if total > S::zero() {
                support.iter().map(|&k| seed[k] / total).collect()
            } else {
                vec![S::one() / S::of(support.len() as f64); support.len()]
            }
        };
        let polish = ba_iterate(
            channel,
            &sub_idx,
            Some(&restricted),
            multiplier,
            opts.max_iterations.min(1500),
            opts,
        );
        iterations += polish.iterations;
        worst_ascent = worst_ascent.min(polish.worst_ascent_step);
        let mut polished_prior = polish.prior;
        iterations += newton_polish(channel, &sub_idx, &mut polished_prior, multiplier, opts);

        let mut embedded = vec![S::zero(); active.len()];
        for (slot, &k) in support.iter().enumerate() {
            embedded[k] = polished_prior[slot];
        }
        let (info, energy, kl_full) = stats_of_prior(channel, active, &embedded);
        let objective = info - multiplier * energy;
        let mut violators: Vec<(S, usize)> = Vec::new();
        for (k, (&d, &i)) in kl_full.iter().zip(active).enumerate() {
            if support.binary_search(&k).is_ok() {
                continue;
            }
            let score = d - multiplier * channel.energies[i];
            if score > objective + opts.gap_tol {
                violators.push((score, k));
            }
        }
        best = Some((embedded, info, energy));
        if violators.is_empty() || support.len() == active.len() {
            break;
        }
        violators.sort_by(|a, b| {
            b.0.partial_cmp(&a.0)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.1.cmp(&b.1))
        });
        for &(_, k) in violators.iter().take(2) {
            support.push(k);
        }
        support.sort_unstable();
        support.dedup();
    }

    let (prior, info, energy) = best.expect("at least one polish round runs");
    FixedRun {
        prior,
        info,
        energy,
        iterations,
        worst_ascent_step: worst_ascent,
    }
}

fn stats_of_prior<S: Scalar>(
    channel: &DiscreteChannel<S>,
    active: &[usize],
    prior: &[S],
) -> (S, S, Vec<S>) {
    let width = channel.rows[0].len();
    let mut marginal = vec![S::zero(); width];
    for (k, &i) in active.iter().enumerate() {
        if prior[k] > S::zero() {
            for (m, &q) in marginal.iter_mut().zip(&channel.rows[i]) {
                *m += prior[k] * q;
            }
        }
    }
    let mut info = S::zero();
    let mut energy = S::zero();
    let mut kl = vec![S::zero(); active.len()];
    for (k, &i) in active.iter().enumerate() {
        let mut d = S::zero();
        for (&q, &m) in channel.rows[i].iter().zip(&marginal) {
            if q > S::zero() {
                if m > S::zero() {
                    d += q * (q / m).ln();
                } else {
                    d = S::infinity();
                    break;
                }
            }
        }
        kl[k] = d;
        if prior[k] > S::zero() {
            info += prior[k] * d;
            energy += prior[k] * channel.energies[i];
        }
    }
    (info, energy, kl)
}

/// Maximizes mutual information over priors subject to
/// `sum_i p_i e_i <= energy_budget`.
///
/// The returned rate is the exact mutual information of the returned prior,
/// so it is always an achievable lower bound; `gap` is a dual upper-bound
/// residual at the final iterate.
pub fn ba_constrained<S: Scalar>(
    channel: &DiscreteChannel<S>,
    energy_budget: S,
    opts: &BaOptions<S>,
) -> Result<BaSolution<S>> {
    if !energy_budget.is_finite() || energy_budget < S::zero() {
        return Err(CoreError::Domain(format!(
            "energy budget must be finite and nonnegative (got {energy_budget})"
        )));
    }
    let n = channel.n_inputs();
    let e_min = channel
        .energies
        .iter()
        .fold(S::infinity(), |a, &b| a.min(b));
    if energy_budget < e_min - S::of(1e-12) {
        return Err(CoreError::Domain(format!(
            "energy budget {energy_budget} is below the cheapest symbol energy {e_min}"
        )));
    }

    // Degenerate budget: only minimum-energy symbols are usable.
    if energy_budget <= e_min + S::of(1e-15) {
        let active: Vec<usize> = (0..n)
            .filter(|&i| channel.energies[i] <= e_min + S::of(1e-15))
            .collect();
        let run = ba_fixed_multiplier(channel, &active, S::zero(), None, opts);
        let (info, energy, kl) = stats_of_prior(channel, &active, &run.prior);
        let gap = kl.iter().fold(S::neg_infinity(), |a, &b| a.max(b)) - info;
        let mut prior = vec![S::zero(); n];
        for (k, &i) in active.iter().enumerate() {
            prior[i] = run.prior[k];
        }
        return Ok(BaSolution {
            prior,
            rate: info.max(S::zero()),
            energy,
            multiplier: S::zero(),
            iterations: run.iterations,
            gap,
            worst_ascent_step: run.worst_ascent_step,
        });
    }

    let active: Vec<usize> = (0..n).collect();
    let mut total_iterations = 0usize;
    let mut worst_ascent = S::zero();

    let run0 = ba_fixed_multiplier(channel, &active, S::zero(), None, opts);
    total_iterations += run0.iterations;
    worst_ascent = worst_ascent.min(run0.worst_ascent_step);

    let (final_prior, multiplier) = if run0.energy <= energy_budget + opts.energy_slack {
        (run0.prior, S::zero())
    } else {
        // The unconstrained optimum overspends: bisect the multiplier,
        // warm-starting each run from the most recent prior.
        let mut lo = S::zero();
        let mut hi = opts.multiplier_bracket;
        let run_hi = ba_fixed_multiplier(channel, &active, hi, Some(&run0.prior), opts);
        total_iterations += run_hi.iterations;
        worst_ascent = worst_ascent.min(run_hi.worst_ascent_step);
        if run_hi.energy > energy_budget + opts.energy_slack {
            return Err(CoreError::Numeric(format!(
                "multiplier bracket [0, {hi}] cannot reach the energy budget {energy_budget}"
            )));
        }
        let mut feasible = run_hi;
        let mut infeasible = run0;
        for _ in 0..opts.bisection_iterations {
            if hi - lo <= S::of(1e-13) * hi.max(S::one()) {
                break;
            }
            if energy_budget - feasible.energy
                <= S::of(1e-11) * energy_budget.max(S::one())
            {
                break;
            }
            let mid = (lo + hi) * S::of(0.5);
            let run = ba_fixed_multiplier(channel, &active, mid, Some(&feasible.prior), opts);
            total_iterations += run.iterations;
            worst_ascent = worst_ascent.min(run.worst_ascent_step);
            if run.energy > energy_budget + opts.energy_slack {
                lo = mid;
                infeasible = run;
            } else {
                hi = mid;
                feasible = run;
            }
        }
        // If the achieving support jumped during bisection, time-share the
        // two extreme priors to land exactly on the budget, then polish the
        // candidates under the energy-equality constraint and keep the best
        // feasible one.
        let short = energy_budget - feasible.energy;
        if short > S::of(1e-11) * energy_budget.max(S::one())
            && infeasible.energy > feasible.energy
        {
            let t = (short / (infeasible.energy - feasible.energy)).min(S::one());
            let mixed: Vec<S> = feasible
                .prior
                .iter()
                .zip(&infeasible.prior)
                .map(|(&a, &b)| (S::one() - t) * a + t * b)
                .collect();
            let mut winner = (feasible.info, feasible.prior.clone());
            for seed in [mixed, feasible.prior.clone()] {
                let mut candidate = seed;
                total_iterations += newton_polish_energy_constrained(
                    channel,
                    &active,
                    &mut candidate,
                    energy_budget,
                );
                let (info, energy, _) = stats_of_prior(channel, &active, &candidate);
                if energy <= energy_budget + opts.energy_slack && info > winner.0 {
                    winner = (info, candidate);
                }
            }
            (winner.1, hi)
        } else {
            (feasible.prior, hi)
        }
    };

    let (info, energy, kl) = stats_of_prior(channel, &active, &final_prior);
    // every s >= 0 yields a valid dual bound; also try the KKT multiplier
    // implied by the achieving support, which is tighter at budget kinks
    let mut candidates = vec![multiplier];
    let mut lo_e = (S::infinity(), S::zero());
    let mut hi_e = (S::neg_infinity(), S::zero());
    for (k, &p) in final_prior.iter().enumerate() {
        if p > S::of(1e-12) {
            let e = channel.energies[k];
            if e < lo_e.0 {
                lo_e = (e, kl[k]);
            }
            if e > hi_e.0 {
                hi_e = (e, kl[k]);
            }
        }
    }
    if hi_e.0 - lo_e.0 > S::of(1e-9) {
        let kkt = ((hi_e.1 - lo_e.1) / (hi_e.0 - lo_e.0)).max(S::zero());
        candidates.push(kkt);
    }
    let gap = candidates
        .into_iter()
        .map(|s| {
            let dual = kl
                .iter()
                .zip(&channel.energies)
                .fold(S::neg_infinity(), |a, (&d, &e)| a.max(d - s * e));
            dual + s * energy_budget - info
        })
        .fold(S::infinity(), |a, b| a.min(b));
    Ok(BaSolution {
        prior: final_prior,
        rate: info.max(S::zero()),
        energy,
        multiplier,
        iterations: total_iterations,
        gap,
        worst_ascent_step: worst_ascent,
    })
}

/// Diagnostics attached to every optimizer result.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RateDiagnostics<S: Scalar> {
    pub iterations: usize,
    pub gap: S,
    pub energy_used: S,
    pub multiplier: S,
    pub refinement_residual: S,
    pub worst_ascent_step: S,
}

/// A rate value together with the ensemble and parameters achieving it.
/// Rates are in nats per mode and are lower bounds obtained on finite grids.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RateResult<S: Scalar> {
    pub rate: S,
    pub prior: Vec<S>,
    pub constellation: Option<Constellation<S>>,
    pub lambda: Option<Cplx<S>>,
    pub diagnostics: RateDiagnostics<S>,
}

impl<S: Scalar> RateResult<S> {
    fn from_grid_solution(
        points: &[Cplx<S>],
        lambda: Option<Cplx<S>>,
        solution: BaSolution<S>,
        energy_budget: S,
        refinement_residual: S,
    ) -> Result<Self> {
        if solution.energy > energy_budget + S::of(1e-9) {
            return Err(CoreError::Numeric(format!(
                "achieved energy {} exceeds the budget {energy_budget}",
                solution.energy
            )));
        }
        let constellation = Constellation::new(points.to_vec(), solution.prior.clone())?;
        Ok(Self {
            rate: solution.rate,
            prior: solution.prior,
            constellation: Some(constellation),
            lambda,
            diagnostics: RateDiagnostics {
                iterations: solution.iterations,
                gap: solution.gap,
                energy_used: solution.energy,
                multiplier: solution.multiplier,
                refinement_residual,
                worst_ascent_step: solution.worst_ascent_step,
            },
        })
    }

    pub fn rate_bits(&self) -> S {
        self.rate / S::of(std::f64::consts::LN_2)
    }
}

/// Measurement family searched by the single-mode optimizer. The search
/// parameter is a complex number whose meaning is family-specific.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum PovmFamily<S: Scalar> {
    /// Displaced on/off detection; the parameter is the displacement.
    Kennedy,
    /// Displaced photon counting with truncation; the parameter is the
    /// displacement.
    Pnr { n_max: usize },
    /// Binned homodyne; the parameter's real part is the quadrature phase.
    Homodyne { edges: Vec<S> },
    /// Optimal binary measurement for the symmetric pair `(-lambda, lambda)`
    /// at the given hypothesis priors.
    HelstromBinary { priors: [S; 2] },
}

impl<S: Scalar> PovmFamily<S> {
    pub fn instantiate(&self, lambda: Cplx<S>) -> Povm<S> {
        match self {
            PovmFamily::Kennedy => Povm::Kennedy { displacement: lambda },
            PovmFamily::Pnr { n_max } => Povm::Pnr {
                displacement: lambda,
                n_max: *n_max,
            },
            PovmFamily::Homodyne { edges } => Povm::Homodyne {
                phase: lambda.re,
                edges: edges.clone(),
            },
            PovmFamily::HelstromBinary { priors } => Povm::HelstromBinary {
                candidates: [-lambda, lambda],
                priors: *priors,
            },
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            PovmFamily::Kennedy => "kennedy",
            PovmFamily::Pnr { .. } => "pnr",
            PovmFamily::Homodyne { .. } => "homodyne",
            PovmFamily::HelstromBinary { .. } => "helstrom-binary",
        }
    }
}

/// Uniform grid on one real axis.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct AxisSpec<S: Scalar> {
    pub min: S,
    pub max: S,
    pub count: usize,
}

impl<S: Scalar> AxisSpec<S> {
    pub fn fixed(value: S) -> Self {
        Self {
            min: value,
            max: value,
            count: 1,
        }
    }

    pub fn values(&self) -> Vec<S> {
        match self.count {
            0 => Vec::new(),
            1 => vec![(self.min + self.max) * S::of(0.5)],
            n => (0..n)
                .map(|i| {
                    let t = S::of(i as f64) / S::of((n - 1) as f64);
                    self.min + (self.max - self.min) * t
                })
                .collect(),
        }
    }

    fn centered(&self, center: S, span: S) -> Self {
        Self {
            min: center - span * S::of(0.5),
            max: center + span * S::of(0.5),
            count: self.count,
        }
    }

    pub fn span(&self) -> S {
        self.max - self.min
    }
}

/// Grid-plus-local-refinement search over the measurement parameter.
/// Refinement tracks the best few coarse candidates, so basins that cross
/// near the optimum are all resolved.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LambdaSearch<S: Scalar> {
    pub re: AxisSpec<S>,
    pub im: AxisSpec<S>,
    /// Number of refinement rounds after the coarse scan (default 3).
    pub rounds: usize,
    /// Span contraction per round (default 0.2).
    pub shrink: S,
    /// How many leading candidates seed each refinement round (default 3).
    pub refine_top: usize,
    /// Extra candidates injected into the coarse scan.
    pub extra: Vec<Cplx<S>>,
}

impl<S: Scalar> LambdaSearch<S> {
    pub fn real_line(min: S, max: S, count: usize) -> Self {
        Self {
            re: AxisSpec { min, max, count },
            im: AxisSpec::fixed(S::zero()),
            rounds: 3,
            shrink: S::of(0.2),
            refine_top: 3,
            extra: Vec::new(),
        }
    }

    pub fn fixed(lambda: Cplx<S>) -> Self {
        Self {
            re: AxisSpec::fixed(lambda.re),
            im: AxisSpec::fixed(lambda.im),
            rounds: 0,
            shrink: S::of(0.2),
            refine_top: 1,
            extra: Vec::new(),
        }
    }

    fn round_candidates(&self, round: usize, incumbents: &[Cplx<S>]) -> Vec<Cplx<S>> {
        let mut out = Vec::new();
        if round == 0 {
            for &re in &self.re.values() {
                for &im in &self.im.values() {
                    out.push(Complex::new(re, im));
                }
            }
            out.extend(self.extra.iter().copied());
        } else {
            let factor = self.shrink.powi(round as i32);
            for &center in incumbents {
                let re_axis = self.re.centered(center.re, self.re.span() * factor);
                let im_axis = self.im.centered(center.im, self.im.span() * factor);
                for &re in &re_axis.values() {
                    for &im in &im_axis.values() {
                        out.push(Complex::new(re, im));
                    }
                }
                out.push(center);
            }
        }
        out
    }
}

/// Prefer higher rate; break exact ties toward smaller `|lambda|`, then
/// lexicographically on `(re, im)`.
fn better_candidate<S: Scalar>(a: (S, Cplx<S>), b: (S, Cplx<S>)) -> bool {
    if a.0 != b.0 {
        return a.0 > b.0;
    }
    let (na, nb) = (a.1.norm_sqr(), b.1.norm_sqr());
    if na != nb {
        return na < nb;
    }
    if a.1.re != b.1.re {
        return a.1.re < b.1.re;
    }
    a.1.im < b.1.im
}

/// Energy-constrained capacity of the programmable channel on a fixed
/// amplitude grid and a fixed measurement.
pub fn blahut_arimoto_constrained<S: Scalar>(
    points: &[Cplx<S>],
    params: &ChannelParams<S>,
    povm: &Povm<S>,
    energy_budget: S,
    opts: &BaOptions<S>,
) -> Result<RateResult<S>> {
    if points.is_empty() {
        return Err(CoreError::Domain("amplitude grid is empty".into()));
    }
    let rows: Result<Vec<Vec<S>>> = points
        .iter()
        .map(|&p| programmable_channel_prob(p, params, povm))
        .collect();
    let energies: Vec<S> = points.iter().map(|p| p.norm_sqr()).collect();
    let channel = DiscreteChannel::new(rows?, energies)?;
    let solution = ba_constrained(&channel, energy_budget, opts)?;
    RateResult::from_grid_solution(points, None, solution, energy_budget, S::zero())
}

/// Single-mode decoder optimum: outer search over the measurement parameter
/// (coarse grid plus local refinement), inner constrained Blahut-Arimoto.
pub fn optimize_sd_rate<S: Scalar>(
    points: &[Cplx<S>],
    search: &LambdaSearch<S>,
    params: &ChannelParams<S>,
    family: &PovmFamily<S>,
    energy_budget: S,
    opts: &BaOptions<S>,
) -> Result<RateResult<S>> {
    if points.is_empty() {
        return Err(CoreError::Domain("amplitude grid is empty".into()));
    }
    let energies: Vec<S> = points.iter().map(|p| p.norm_sqr()).collect();

    let mut leaderboard: Vec<(S, Cplx<S>, BaSolution<S>)> = Vec::new();
    let mut rate_before_last_round = S::zero();
    let mut iterations = 0usize;
    let mut worst_ascent = S::zero();

    for round in 0..=search.rounds {
        let incumbents: Vec<Cplx<S>> = leaderboard.iter().map(|(_, l, _)| *l).collect();
        let candidates = search.round_candidates(round, &incumbents);
        if candidates.is_empty() {
            continue;
        }
        let evaluated: Result<Vec<(Cplx<S>, BaSolution<S>)>> = candidates
            .par_iter()
            .map(|&lambda| {
                let povm = family.instantiate(lambda);
                povm.validate()?;
                let rows: Result<Vec<Vec<S>>> = points
                    .iter()
                    .map(|&p| programmable_channel_prob(p, params, &povm))
                    .collect();
                let channel = DiscreteChannel::new(rows?, energies.clone())?;
                let solution = ba_constrained(&channel, energy_budget, opts)?;
                Ok((lambda, solution))
            })
            .collect();
        if round == search.rounds {
            rate_before_last_round = leaderboard.first().map(|(r, _, _)| *r).unwrap_or(S::zero());
        }
        for (lambda, solution) in evaluated? {
            iterations += solution.iterations;
            worst_ascent = worst_ascent.min(solution.worst_ascent_step);
            leaderboard.push((solution.rate, lambda, solution));
        }
        leaderboard.sort_by(|a, b| {
            if better_candidate((a.0, a.1), (b.0, b.1)) {
                std::cmp::Ordering::Less
            } else if better_candidate((b.0, b.1), (a.0, a.1)) {
                std::cmp::Ordering::Greater
            } else {
                std::cmp::Ordering::Equal
            }
        });
        leaderboard.truncate(search.refine_top.max(1));
    }

    let (rate, lambda, solution) = leaderboard
        .into_iter()
        .next()
        .ok_or_else(|| CoreError::Domain("measurement parameter grid is empty".into()))?;
    let residual = (rate - rate_before_last_round).max(S::zero());
    let mut result =
        RateResult::from_grid_solution(points, Some(lambda), solution, energy_budget, residual)?;
    result.diagnostics.iterations = iterations;
    result.diagnostics.worst_ascent_step = worst_ascent;
    Ok(result)
}

/// Numerical concavity certificate for the single-use capacity as a function
/// of the energy budget.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConcavityCertificate<S: Scalar> {
    pub energies: Vec<S>,
    pub rates: Vec<S>,
    /// Most negative `C(mid) - (C(lo) + C(hi)) / 2` over grid pairs whose
    /// midpoint lies on the grid.
    pub worst_midpoint_violation: S,
    /// Most negative forward difference `C(e_{i+1}) - C(e_i)`.
    pub worst_monotonicity_violation: S,
}

impl<S: Scalar> ConcavityCertificate<S> {
    pub fn passes(&self) -> bool {
        self.worst_midpoint_violation >= -S::of(1e-6)
    }

    pub fn monotone(&self) -> bool {
        self.worst_monotonicity_violation >= -S::of(1e-9)
    }
}

/// Evaluates the single-mode optimum over an energy grid and scans midpoint
/// concavity and monotonicity.
pub fn concavity_certificate<S: Scalar>(
    points: &[Cplx<S>],
    search: &LambdaSearch<S>,
    params: &ChannelParams<S>,
    family: &PovmFamily<S>,
    energy_grid: &[S],
    opts: &BaOptions<S>,
) -> Result<ConcavityCertificate<S>> {
    if energy_grid.len() < 5 {
        return Err(CoreError::Domain(format!(
            "energy grid needs at least 5 points (got {})",
            energy_grid.len()
        )));
    }
    let rates: Result<Vec<S>> = energy_grid
        .par_iter()
        .map(|&e| optimize_sd_rate(points, search, params, family, e, opts).map(|r| r.rate))
        .collect();
    let rates = rates?;

    let mut worst_mid = S::infinity();
    for i in 0..rates.len() {
        for k in (i + 2)..rates.len() {
            if (k - i) % 2 != 0 {
                continue;
            }
            let mid = (i + k) / 2;
            let violation = rates[mid] - (rates[i] + rates[k]) * S::of(0.5);
            if violation < worst_mid {
                worst_mid = violation;
            }
        }
    }
    let mut worst_mono = S::infinity();
    for pair in rates.windows(2) {
        let diff = pair[1] - pair[0];
        if diff < worst_mono {
            worst_mono = diff;
        }
    }
    Ok(ConcavityCertificate {
        energies: energy_grid.to_vec(),
        rates,
        worst_midpoint_violation: if worst_mid.is_finite() { worst_mid } else { S::zero() },
        worst_monotonicity_violation: if worst_mono.is_finite() { worst_mono } else { S::zero() },
    })
}

/// One row of the low-energy scaling study for displaced on/off detection.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScalingRow<S: Scalar> {
    pub energy: S,
    pub rate_nats: S,
    pub rate_bits: S,
    /// Leading-order low-energy reference `E ln(1/E) - E ln ln(1/E)`.
    pub reference_nats: S,
    /// `rate / (E ln(1/E))`.
    pub ratio: S,
    /// False when the energy lies outside the low-energy regime `(0, 0.2]`.
    pub in_regime: bool,
}

/// Search sizes for the scaling study grids.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScalingStudyConfig<S: Scalar> {
    /// Positive-amplitude grid size for the bright symbol.
    pub bright_count: usize,
    /// Log-spaced candidate magnitudes for the dim (near-vacuum) symbol.
    pub dim_count: usize,
    /// Measurement-parameter grid size (real axis).
    pub lambda_count: usize,
    /// Amplitude-grid refinement rounds around the achieving support.
    pub refine_rounds: usize,
    pub marker: std::marker::PhantomData<S>,
}

impl<S: Scalar> Default for ScalingStudyConfig<S> {
    fn default() -> Self {
        Self {
            bright_count: 16,
            dim_count: 8,
            lambda_count: 13,
            refine_rounds: 3,
            marker: std::marker::PhantomData,
        }
    }
}

/// Optimizes the displaced on/off rate over binary-structured amplitude
/// grids for each energy and reports it against the low-energy expansion.
pub fn kennedy_scaling_study<S: Scalar>(
    params: &ChannelParams<S>,
    energies: &[S],
    study: &ScalingStudyConfig<S>,
    opts: &BaOptions<S>,
) -> Result<Vec<ScalingRow<S>>> {
    let rows: Result<Vec<ScalingRow<S>>> = energies
        .par_iter()
        .map(|&energy| scaling_row(params, energy, study, opts))
        .collect();
    rows
}

fn scaling_row<S: Scalar>(
    params: &ChannelParams<S>,
    energy: S,
    study: &ScalingStudyConfig<S>,
    opts: &BaOptions<S>,
) -> Result<ScalingRow<S>> {
    if energy <= S::zero() || energy >= S::one() {
        return Err(CoreError::Domain(format!(
            "scaling study energies must lie in (0, 1) (got {energy})"
        )));
    }
    let log_term = energy.recip().ln();
    let a_ref = log_term.sqrt() / params.mu1().max(S::of(1e-6));

    // Bright symbol candidates around sqrt(ln(1/E)), dim symbol candidates
    // log-spaced toward zero (the optimizer exploits small negative offsets).
    let mut points: Vec<Cplx<S>> = vec![Complex::new(S::zero(), S::zero())];
    for i in 0..study.dim_count {
        let t = S::of(i as f64 / (study.dim_count.max(2) - 1) as f64);
        let mag = a_ref * S::of(1e-4) * (a_ref * S::of(0.3) / (a_ref * S::of(1e-4))).powf(t);
        points.push(Complex::new(-mag, S::zero()));
    }
    for i in 0..study.bright_count {
        let t = S::of(i as f64 / (study.bright_count.max(2) - 1) as f64);
        let a = a_ref * (S::of(0.3) + S::of(1.5) * t);
        points.push(Complex::new(a, S::zero()));
    }

    let lambda_span = a_ref * params.mu1() * S::of(0.6);
    let mut search = LambdaSearch::real_line(-lambda_span, lambda_span, study.lambda_count);

    let mut best = optimize_sd_rate(points.as_slice(), &search, params, &PovmFamily::Kennedy, energy, opts)?;
    for round in 1..=study.refine_rounds {
        // refine the amplitude grid around the achieving support
        let constellation = best
            .constellation
            .as_ref()
            .expect("grid optimizer always returns a constellation");
        let mut support: Vec<(S, Cplx<S>)> = constellation
            .points()
            .iter()
            .zip(constellation.priors())
            .filter(|(_, &p)| p > S::of(1e-8))
            .map(|(&a, &p)| (p, a))
            .collect();
        support.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(std::cmp::Ordering::Equal));
        support.truncate(4);

        let width = a_ref * S::of(0.15) * S::of(0.25f64.powi(round as i32));
        let mut refined: Vec<Cplx<S>> = support.iter().map(|&(_, a)| a).collect();
        for &(_, a) in &support {
            for k in 0..7 {
                let t = S::of(k as f64 / 6.0) * S::of(2.0) - S::one();
                refined.push(Complex::new(a.re + width * t, a.im));
            }
        }
        if let Some(lambda) = best.lambda {
            search.extra = vec![lambda];
        }
        let candidate = optimize_sd_rate(
            refined.as_slice(),
            &search,
            params,
            &PovmFamily::Kennedy,
            energy,
            opts,
        )?;
        if candidate.rate > best.rate {
            best = candidate;
        }
    }

    let one = S::one();
    let reference = if log_term > one {
        energy * log_term - energy * log_term.ln()
    } else {
        S::nan()
    };
    Ok(ScalingRow {
        energy,
        rate_nats: best.rate,
        rate_bits: best.rate_bits(),
        reference_nats: reference,
        ratio: best.rate / (energy * log_term),
        in_regime: energy <= S::of(0.2),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adaptive::mutual_information;
    use num_complex::Complex64;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn z_channel_capacity_closed_form(eps: f64) -> f64 {
        (1.0 + (1.0 - eps) * eps.powf(eps / (1.0 - eps))).ln()
    }

    fn z_channel_capacity_grid_search(eps: f64) -> f64 {
        // exhaustive prior search at 1e-6 resolution
        let rows = [vec![1.0, 0.0], vec![eps, 1.0 - eps]];
        let mut best = 0.0f64;
        let mut p = 0.0;
        while p <= 1.0 {
            let i = mutual_information(&[1.0 - p, p], rows.as_ref()).unwrap();
            if i > best {
                best = i;
            }
            p += 1e-6;
        }
        best
    }

    #[test]
    fn z_channel_benchmark_unit() {
        let eps = (-1.0f64).exp();
        let points = vec![c(0.0, 0.0), c(1.0, 0.0)];
        let povm = Povm::Kennedy { displacement: c(0.0, 0.0) };
        let params = ChannelParams::identity();
        let result =
            blahut_arimoto_constrained(&points, &params, &povm, 1.0, &BaOptions::default())
                .unwrap();
        let closed = z_channel_capacity_closed_form(eps);
        assert!(
            (result.rate - closed).abs() < 1e-6,
            "rate {} vs closed form {closed}",
            result.rate
        );
        assert!(result.diagnostics.worst_ascent_step >= -1e-12);
        assert!(result.diagnostics.gap < 1e-9, "gap {}", result.diagnostics.gap);
    }

    #[test]
    fn z_channel_closed_form_matches_grid_search() {
        let eps = (-1.0f64).exp();
        let grid = z_channel_capacity_grid_search(eps);
        let closed = z_channel_capacity_closed_form(eps);
        assert!((grid - closed).abs() < 1e-9, "grid {grid} closed {closed}");
    }

    #[test]
    fn zero_budget_sits_on_the_vacuum() {
        let points = vec![c(0.0, 0.0), c(1.0, 0.0)];
        let povm = Povm::Kennedy { displacement: c(0.0, 0.0) };
        let params = ChannelParams::identity();
        let result =
            blahut_arimoto_constrained(&points, &params, &povm, 0.0, &BaOptions::default())
                .unwrap();
        assert_eq!(result.rate, 0.0);
        assert!((result.prior[0] - 1.0).abs() < 1e-12);
        assert!(result.prior[1].abs() < 1e-12);
    }

    #[test]
    fn infeasible_budget_is_rejected() {
        let rows = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let channel = DiscreteChannel::new(rows, vec![1.0, 2.0]).unwrap();
        assert!(matches!(
            ba_constrained(&channel, 0.5, &BaOptions::default()),
            Err(CoreError::Domain(_))
        ));
    }

    #[test]
    fn energy_constraint_binds_and_is_respected() {
        let points = vec![c(0.0, 0.0), c(1.0, 0.0)];
        let povm = Povm::Kennedy { displacement: c(0.0, 0.0) };
        let params = ChannelParams::identity();
        let budget = 0.05;
        let result =
            blahut_arimoto_constrained(&points, &params, &povm, budget, &BaOptions::default())
                .unwrap();
        assert!(result.diagnostics.energy_used <= budget + 1e-9);
        assert!(result.diagnostics.energy_used > budget - 1e-6);
        assert!(result.diagnostics.multiplier > 0.0);
    }

    #[test]
    fn symmetric_helstrom_prior_converges_to_uniform() {
        let a = 0.4;
        let points = vec![c(-a, 0.0), c(a, 0.0)];
        let params = ChannelParams::identity();
        let povm = PovmFamily::HelstromBinary { priors: [0.5, 0.5] }.instantiate(c(a, 0.0));
        let result =
            blahut_arimoto_constrained(&points, &params, &povm, 1.0, &BaOptions::default())
                .unwrap();
        assert!((result.prior[0] - 0.5).abs() < 1e-6);
        assert!((result.prior[1] - 0.5).abs() < 1e-6);
    }

    #[test]
    fn sd_ties_break_lexicographically() {
        // symmetric setup: both displacement signs give the same rate
        let points = vec![c(-0.5, 0.0), c(0.5, 0.0)];
        let params = ChannelParams::identity();
        let search = LambdaSearch {
            re: AxisSpec { min: -0.3, max: 0.3, count: 2 },
            im: AxisSpec::fixed(0.0),
            rounds: 0,
            shrink: 0.2,
            refine_top: 1,
            extra: vec![],
        };
        let result = optimize_sd_rate(
            &points,
            &search,
            &params,
            &PovmFamily::Kennedy,
            1.0,
            &BaOptions::default(),
        )
        .unwrap();
        assert_eq!(result.lambda.unwrap().re, -0.3);
    }

    #[test]
    fn sd_rate_monotone_in_energy() {
        let points: Vec<Complex64> = (0..13).map(|i| c(-1.2 + 0.2 * i as f64, 0.0)).collect();
        let search = LambdaSearch::real_line(-0.6, 0.6, 7);
        let params = ChannelParams::pure_loss(0.8).unwrap();
        let opts = BaOptions::default();
        let mut last = 0.0;
        for &e in &[0.02f64, 0.1, 0.3] {
            let r = optimize_sd_rate(&points, &search, &params, &PovmFamily::Kennedy, e, &opts)
                .unwrap()
                .rate;
            assert!(r >= last - 1e-9, "rate {r} fell below {last} at E={e}");
            last = r;
        }
    }

    #[test]
    fn constant_channel_capacity_is_zero_and_concave() {
        // mu1 = 0 erases the input, so the output ignores the symbol
        let params = ChannelParams::new(0.0, 1.0).unwrap();
        let points = vec![c(0.0, 0.0), c(0.7, 0.0), c(-0.4, 0.3)];
        let search = LambdaSearch::real_line(-0.5, 0.5, 5);
        let grid: Vec<f64> = (0..6).map(|i| 0.1 * i as f64).collect();
        let cert = concavity_certificate(
            &points,
            &search,
            &params,
            &PovmFamily::Kennedy,
            &grid,
            &BaOptions::default(),
        )
        .unwrap();
        assert!(cert.rates.iter().all(|&r| r.abs() < 1e-12));
        assert!(cert.passes());
        assert!(cert.monotone());
    }

    #[test]
    fn displacement_search_never_hurts_low_energy_on_off() {
        // the measurement-parameter search must dominate the lambda = 0 slice
        let params = ChannelParams::pure_loss(0.9).unwrap();
        let opts = BaOptions::default();
        let energy = 1e-3;
        let a = (1.0f64 / energy).ln().sqrt();
        let points = vec![c(0.0, 0.0), c(a, 0.0)];
        let fixed = optimize_sd_rate(
            &points,
            &LambdaSearch::fixed(c(0.0, 0.0)),
            &params,
            &PovmFamily::Kennedy,
            energy,
            &opts,
        )
        .unwrap();
        let searched = optimize_sd_rate(
            &points,
            &LambdaSearch::real_line(-0.2, 0.2, 9),
            &params,
            &PovmFamily::Kennedy,
            energy,
            &opts,
        )
        .unwrap();
        assert!(
            searched.rate - fixed.rate >= -1e-12,
            "searched {} vs fixed {}",
            searched.rate,
            fixed.rate
        );
        // at this energy the optimum sits next to the undisplaced receiver
        assert!(searched.lambda.unwrap().norm() < 0.1);
    }

    #[test]
    fn homodyne_rate_is_finite_and_increasing() {
        let params = ChannelParams::identity();
        let opts = BaOptions::default();
        let points: Vec<Complex64> = (0..9).map(|i| c(-1.0 + 0.25 * i as f64, 0.0)).collect();
        let edges = crate::measurement::uniform_bin_edges(4.0, 24);
        let family = PovmFamily::Homodyne { edges };
        let search = LambdaSearch::fixed(c(0.0, 0.0));
        let mut last = 0.0;
        for &e in &[0.05f64, 0.2, 0.6] {
            let r = optimize_sd_rate(&points, &search, &params, &family, e, &opts).unwrap();
            assert!(r.rate.is_finite() && r.rate > 0.0);
            assert!(r.rate >= last - 1e-9, "homodyne rate fell: {} after {last}", r.rate);
            last = r.rate;
        }
    }

    #[test]
    fn scaling_study_endpoint_stays_positive() {
        // even deep in the low-energy regime the optimizer keeps a
        // distinguishable pair, so the rate never collapses to zero
        let rows = kennedy_scaling_study(
            &ChannelParams::identity(),
            &[1e-4],
            &ScalingStudyConfig::default(),
            &BaOptions::default(),
        )
        .unwrap();
        assert!(rows[0].rate_nats > 0.0);
        assert!(rows[0].in_regime);
        assert!(kennedy_scaling_study(
            &ChannelParams::identity(),
            &[1.5],
            &ScalingStudyConfig::default(),
            &BaOptions::default(),
        )
        .is_err());
    }

    #[test]
    fn generic_scalar_smoke_f32() {
        // the solver stack is generic over the scalar; f32 runs end to end
        // at loose tolerances
        let params = ChannelParams::<f32>::new(1.0, 0.0).unwrap();
        let povm = Povm::Kennedy { displacement: Complex::new(0.0f32, 0.0) };
        let opts = BaOptions::<f32> {
            rate_tol: 1e-6,
            gap_tol: 1e-5,
            ..Default::default()
        };
        let points = vec![Complex::new(0.0f32, 0.0), Complex::new(1.0f32, 0.0)];
        let result = blahut_arimoto_constrained(&points, &params, &povm, 1.0f32, &opts).unwrap();
        let closed = z_channel_capacity_closed_form((-1.0f64).exp()) as f32;
        assert!((result.rate - closed).abs() < 1e-3);
    }

    #[test]
    fn refinement_on_superset_grids_never_loses_rate() {
        let params = ChannelParams::identity();
        let povm = Povm::Kennedy { displacement: c(0.0, 0.0) };
        let opts = BaOptions::default();
        let coarse = vec![c(0.0, 0.0), c(1.0, 0.0)];
        let fine = vec![c(0.0, 0.0), c(1.0, 0.0), c(0.5, 0.0), c(1.5, 0.0)];
        let r1 = blahut_arimoto_constrained(&coarse, &params, &povm, 0.3, &opts)
            .unwrap()
            .rate;
        let r2 = blahut_arimoto_constrained(&fine, &params, &povm, 0.3, &opts)
            .unwrap()
            .rate;
        assert!(r2 >= r1 - 1e-12, "refined {r2} vs coarse {r1}");
    }
}
