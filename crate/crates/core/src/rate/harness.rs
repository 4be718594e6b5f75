//! Verification harness for adaptive decoding instances.
//!
//! For every (codebook, policy) instance the harness
//!
//! 1. computes the joint mutual information exactly,
//! 2. cross-checks the classical feedback picture entrywise,
//! 3. decomposes the information along the chain rule, one term per
//!    (use, outcome-history) branch,
//! 4. bounds every branch term by the single-use constrained capacity at the
//!    branch's conditional energy,
//! 5. audits the average energy per mode, and
//! 6. compares the per-mode rate against the single-mode optimum.
//!
//! A deliberately corrupted bound (the single-mode optimum evaluated at a
//! reduced budget) is re-checked as a negative control, so a silent
//! harness failure cannot pass unnoticed.

use rayon::prelude::*;
use serde::Serialize;

use super::{
    blahut_arimoto_constrained, concavity_certificate, optimize_sd_rate, BaOptions,
    ConcavityCertificate, LambdaSearch, PovmFamily, RateResult,
};
use crate::adaptive::{
    compile_policy_to_encoder, mutual_information, simulate_ad, simulate_classical_picture,
    AdaptivePolicy, CodebookSequence,
};
use crate::error::Result;
use crate::gaussian::ChannelParams;
use crate::measurement::programmable_channel_prob;
use crate::scalar::{Cplx, Scalar};

/// One decoding instance to verify.
#[derive(Clone, Debug)]
pub struct TheoremInstance<S: Scalar> {
    pub label: String,
    pub codebook: CodebookSequence<S>,
    pub policy: AdaptivePolicy<S>,
}

/// Harness configuration: channel, measurement family, energy budget, the
/// grids for the single-mode reference, and the per-step tolerances.
#[derive(Clone, Debug)]
pub struct TheoremCheckConfig<S: Scalar> {
    pub params: ChannelParams<S>,
    pub family: PovmFamily<S>,
    pub energy: S,
    pub sd_points: Vec<Cplx<S>>,
    pub sd_lambda: LambdaSearch<S>,
    pub certificate_energies: Vec<S>,
    pub chain_tolerance: S,
    pub bound_tolerance: S,
    pub branch_tolerance: S,
    pub energy_tolerance: S,
    pub equivalence_tolerance: S,
    /// When set, the bound is re-evaluated at `scale * energy` and at least
    /// one instance must trip it.
    pub negative_control_scale: Option<S>,
    pub ba: BaOptions<S>,
}

impl<S: Scalar> TheoremCheckConfig<S> {
    pub fn new(
        params: ChannelParams<S>,
        family: PovmFamily<S>,
        energy: S,
        sd_points: Vec<Cplx<S>>,
        sd_lambda: LambdaSearch<S>,
    ) -> Self {
        // the certificate scans up to well past the working budget; finite
        // amplitude grids scallop the capacity curve at fine energy spacing,
        // so the grid stays coarse relative to the budget
        let top = (energy * S::of(1.2)).max(S::of(0.5));
        let certificate_energies = (0..11)
            .map(|i| top * S::of(i as f64 / 10.0))
            .collect();
        Self {
            params,
            family,
            energy,
            sd_points,
            sd_lambda,
            certificate_energies,
            chain_tolerance: S::of(1e-9),
            bound_tolerance: S::of(1e-6),
            branch_tolerance: S::of(1e-9),
            energy_tolerance: S::of(1e-9),
            equivalence_tolerance: S::of(1e-12),
            negative_control_scale: Some(S::of(0.5)),
            ba: BaOptions::default(),
        }
    }
}

/// Per-instance verification record.
#[derive(Clone, Debug, Serialize)]
pub struct InstanceCheck<S: Scalar> {
    pub label: String,
    pub mi_per_mode: S,
    pub equivalence_deviation: S,
    pub chain_residual: S,
    /// Largest `I_branch - C1(E_branch)` over all (use, history) branches.
    pub worst_branch_slack: S,
    pub energy_per_mode: S,
    /// `mi_per_mode - sd_rate`; must stay below the bound tolerance.
    pub bound_slack: S,
    pub equivalence_ok: bool,
    pub chain_ok: bool,
    pub branches_ok: bool,
    pub energy_ok: bool,
    pub bound_ok: bool,
    pub passed: bool,
}

/// Result of re-checking every instance against a corrupted (reduced-budget)
/// bound; a healthy harness must flag at least one violation.
#[derive(Clone, Debug, Serialize)]
pub struct NegativeControl<S: Scalar> {
    pub scaled_energy: S,
    pub sd_rate: S,
    pub violations: usize,
    pub flagged: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct TheoremReport<S: Scalar> {
    pub sd: RateResult<S>,
    pub certificate: ConcavityCertificate<S>,
    pub instances: Vec<InstanceCheck<S>>,
    pub violations: usize,
    pub negative_control: Option<NegativeControl<S>>,
    pub passed: bool,
}

/// Runs every check on every instance and aggregates a pass/fail report.
pub fn theorem_check<S: Scalar>(
    config: &TheoremCheckConfig<S>,
    instances: &[TheoremInstance<S>],
) -> Result<TheoremReport<S>> {
    let sd = optimize_sd_rate(
        &config.sd_points,
        &config.sd_lambda,
        &config.params,
        &config.family,
        config.energy,
        &config.ba,
    )?;
    let certificate = concavity_certificate(
        &config.sd_points,
        &config.sd_lambda,
        &config.params,
        &config.family,
        &config.certificate_energies,
        &config.ba,
    )?;

    let checks: Result<Vec<InstanceCheck<S>>> = instances
        .par_iter()
        .map(|instance| check_instance(config, sd.rate, instance))
        .collect();
    let instances_checked = checks?;
    let violations = instances_checked.iter().filter(|c| !c.passed).count();

    let negative_control = match config.negative_control_scale {
        None => None,
        Some(scale) => {
            let corrupted = optimize_sd_rate(
                &config.sd_points,
                &config.sd_lambda,
                &config.params,
                &config.family,
                config.energy * scale,
                &config.ba,
            )?;
            let tripped = instances_checked
                .iter()
                .filter(|c| c.mi_per_mode > corrupted.rate + config.bound_tolerance)
                .count();
            Some(NegativeControl {
                scaled_energy: config.energy * scale,
                sd_rate: corrupted.rate,
                violations: tripped,
                flagged: tripped > 0,
            })
        }
    };

    let control_ok = negative_control.as_ref().map(|nc| nc.flagged).unwrap_or(true);
    let passed =
        violations == 0 && certificate.passes() && certificate.monotone() && control_ok;
    Ok(TheoremReport {
        sd,
        certificate,
        instances: instances_checked,
        violations,
        negative_control,
        passed,
    })
}

/// Builds the non-adaptive replica of a single-mode optimum: the achieving
/// constellation (trimmed to its support) replicated as a product codebook,
/// decoded by the same fixed measurement on every mode.
pub fn replica_instance<S: Scalar>(
    sd: &RateResult<S>,
    family: &PovmFamily<S>,
    n_modes: usize,
    energy: S,
) -> Result<TheoremInstance<S>> {
    let full = sd
        .constellation
        .as_ref()
        .ok_or_else(|| crate::error::CoreError::Domain(
            "single-mode result carries no constellation".into(),
        ))?;
    let mut points = Vec::new();
    let mut priors = Vec::new();
    for (&a, &p) in full.points().iter().zip(full.priors()) {
        if p > S::of(1e-12) {
            points.push(a);
            priors.push(p);
        }
    }
    let total: S = priors.iter().copied().sum();
    for p in priors.iter_mut() {
        *p /= total;
    }
    let constellation = crate::gaussian::Constellation::new(points, priors)?;
    let codebook = crate::sampling::product_codebook(&constellation, n_modes, energy)?;
    let lambda = sd.lambda.unwrap_or_else(|| num_complex::Complex::new(S::zero(), S::zero()));
    let policy = crate::sampling::nonadaptive_policy(n_modes, family.instantiate(lambda))?;
    Ok(TheoremInstance {
        label: "nonadaptive-sd".into(),
        codebook,
        policy,
    })
}

/// Letter alphabet for adaptive searches, seeded from a single-mode optimum:
/// the support points, their negatives, and interferometer-image scalings.
pub fn seed_letters<S: Scalar>(sd: &RateResult<S>) -> Vec<Cplx<S>> {
    let mut letters: Vec<Cplx<S>> = vec![num_complex::Complex::new(S::zero(), S::zero())];
    if let Some(constellation) = &sd.constellation {
        for (&a, &p) in constellation.points().iter().zip(constellation.priors()) {
            if p > S::of(1e-6) {
                let root2 = S::of(std::f64::consts::SQRT_2);
                for scale in [S::one(), root2, root2.recip()] {
                    letters.push(a * scale);
                    letters.push(-a * scale);
                }
            }
        }
    }
    letters.sort_by(|x, y| {
        x.re.partial_cmp(&y.re)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(x.im.partial_cmp(&y.im).unwrap_or(std::cmp::Ordering::Equal))
    });
    letters.dedup();
    letters
}

fn check_instance<S: Scalar>(
    config: &TheoremCheckConfig<S>,
    sd_rate: S,
    instance: &TheoremInstance<S>,
) -> Result<InstanceCheck<S>> {
    let n = instance.codebook.n_modes();
    let n_s = S::of(n as f64);
    let table = simulate_ad(&instance.codebook, &config.params, &instance.policy)?;
    let mi = mutual_information(instance.codebook.priors(), table.rows())?;
    let mi_per_mode = mi / n_s;

    let encoder = compile_policy_to_encoder(&instance.codebook, &instance.policy)?;
    let schedule = instance.policy.schedule()?;
    let classical =
        simulate_classical_picture(&instance.codebook, &config.params, &encoder, &schedule)?;
    let equivalence_deviation = table.max_abs_diff(&classical);

    // chain-rule decomposition over (use, history) branches
    let counts = schedule.outcome_counts().to_vec();
    let m = instance.codebook.len();
    let mut level: Vec<Vec<S>> = vec![instance.codebook.priors().to_vec()];
    let mut chain_sum = S::zero();
    let mut avg_energy_total = S::zero();
    let mut worst_branch_slack = S::neg_infinity();

    for j in 0..n {
        let expand = j + 1 < n;
        let mut next_level: Vec<Vec<S>> = if expand {
            vec![vec![S::zero(); m]; level.len() * counts[j]]
        } else {
            Vec::new()
        };
        for (h, weights) in level.iter().enumerate() {
            let povm = schedule.povm(j, h);
            let betas: Vec<Cplx<S>> = (0..m).map(|w| encoder.amplitude(w, j, h)).collect();
            let rows: Result<Vec<Vec<S>>> = betas
                .iter()
                .map(|&b| programmable_channel_prob(b, &config.params, povm))
                .collect();
            let rows = rows?;
            let p_h: S = weights.iter().copied().sum();
            if p_h > S::of(1e-300) {
                let mut posterior: Vec<S> = weights.iter().map(|&x| x / p_h).collect();
                let norm: S = posterior.iter().copied().sum();
                for p in posterior.iter_mut() {
                    *p /= norm;
                }
                let i_branch = mutual_information(&posterior, &rows)?;
                chain_sum += p_h * i_branch;
                let e_branch: S = posterior
                    .iter()
                    .zip(&betas)
                    .map(|(&p, b)| p * b.norm_sqr())
                    .sum();
                avg_energy_total += p_h * e_branch;

                // single-use capacity at the branch energy with the branch's
                // own measurement bounds the term
                let mut grid = betas.clone();
                grid.sort_by(|a, b| {
                    a.re.partial_cmp(&b.re)
                        .unwrap_or(std::cmp::Ordering::Equal)
                        .then(a.im.partial_cmp(&b.im).unwrap_or(std::cmp::Ordering::Equal))
                });
                grid.dedup();
                let branch_cap = blahut_arimoto_constrained(
                    &grid,
                    &config.params,
                    povm,
                    e_branch,
                    &config.ba,
                )?;
                // the dual gap turns the achievable rate into a certified
                // upper bound on the branch capacity
                let upper = branch_cap.rate + branch_cap.diagnostics.gap.max(S::zero());
                let slack = i_branch - upper;
                if slack > worst_branch_slack {
                    worst_branch_slack = slack;
                }
            }
            if expand {
                for w in 0..m {
                    for (y, row_val) in rows[w].iter().enumerate() {
                        next_level[h * counts[j] + y][w] = weights[w] * *row_val;
                    }
                }
            }
        }
        if expand {
            level = next_level;
        }
    }

    let chain_residual = (mi - chain_sum).abs();
    let energy_per_mode = avg_energy_total / n_s;
    if !worst_branch_slack.is_finite() {
        worst_branch_slack = S::zero();
    }

    let equivalence_ok = equivalence_deviation <= config.equivalence_tolerance;
    let chain_ok = chain_residual <= config.chain_tolerance;
    let branches_ok = worst_branch_slack <= config.branch_tolerance;
    let energy_ok = energy_per_mode <= config.energy + config.energy_tolerance;
    let bound_slack = mi_per_mode - sd_rate;
    let bound_ok = bound_slack <= config.bound_tolerance;
    Ok(InstanceCheck {
        label: instance.label.clone(),
        mi_per_mode,
        equivalence_deviation,
        chain_residual,
        worst_branch_slack,
        energy_per_mode,
        bound_slack,
        equivalence_ok,
        chain_ok,
        branches_ok,
        energy_ok,
        bound_ok,
        passed: equivalence_ok && chain_ok && branches_ok && energy_ok && bound_ok,
    })
}
