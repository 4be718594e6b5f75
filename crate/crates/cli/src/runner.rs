//! Experiment execution and artifact emission.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde_json::json;

use adrate_core::adaptive::{
    compile_policy_to_encoder, simulate_ad, simulate_classical_picture,
};
use adrate_core::rate::{
    kennedy_scaling_study, optimize_ad_rate, optimize_sd_rate, replica_instance, seed_letters,
    theorem_check, AdSearch, AxisSpec, BaOptions, ScalingStudyConfig, TheoremCheckConfig,
    TheoremInstance,
};
use adrate_core::sampling::{random_codebook, random_kennedy_policy};

use crate::config::{ExperimentConfig, ExperimentKind};
use crate::emit::{write_json, CsvWriter};

pub struct RunOutcome {
    pub science_ok: bool,
    pub outputs: Vec<PathBuf>,
    pub summary: serde_json::Value,
}

pub fn run(config: &ExperimentConfig, seed: u64, out_dir: &Path) -> Result<RunOutcome> {
    std::fs::create_dir_all(out_dir)
        .with_context(|| format!("cannot create output directory {}", out_dir.display()))?;
    match config.kind {
        ExperimentKind::ChannelInfo => channel_info(config, out_dir),
        ExperimentKind::RateSd => rate_sd(config, out_dir),
        ExperimentKind::RateAd => rate_ad(config, out_dir),
        ExperimentKind::TheoremCheck => theorem_check_run(config, seed, out_dir),
        ExperimentKind::KennedyScaling => kennedy_scaling(config, out_dir),
        ExperimentKind::PictureEquivalence => picture_equivalence(config, seed, out_dir),
    }
}

fn channel_info(config: &ExperimentConfig, out_dir: &Path) -> Result<RunOutcome> {
    let params = config.channel_params()?;
    let mut csv = CsvWriter::create(
        out_dir,
        "channel_info.csv",
        &["mu1", "mu2", "nbar", "classification", "amplifier"],
    )?;
    csv.row(&[
        params.mu1().into(),
        params.mu2().into(),
        params.nbar().into(),
        params.classification().into(),
        params.is_amplifying().into(),
    ])?;
    let path = csv.finish()?;
    Ok(RunOutcome {
        science_ok: true,
        outputs: vec![path],
        summary: json!({
            "nbar": params.nbar(),
            "classification": params.classification(),
            "amplifier": params.is_amplifying(),
        }),
    })
}

fn rate_sd(config: &ExperimentConfig, out_dir: &Path) -> Result<RunOutcome> {
    let params = config.channel_params()?;
    let family = config.povm_family()?;
    let points = config.amplitude_points()?;
    let search = config.lambda_search()?;
    let opts = BaOptions::default();

    let mut rate_csv = CsvWriter::create(
        out_dir,
        "rate_sd.csv",
        &[
            "energy",
            "rate_nats",
            "rate_bits",
            "lambda_re",
            "lambda_im",
            "energy_used",
            "multiplier",
            "gap",
            "iterations",
            "refinement_residual",
        ],
    )?;
    let mut prior_csv = CsvWriter::create(
        out_dir,
        "rate_sd_prior.csv",
        &["energy", "point_re", "point_im", "prior"],
    )?;
    let mut results = Vec::new();
    for energy in config.energies()? {
        let r = optimize_sd_rate(&points, &search, &params, &family, energy, &opts)?;
        let lambda = r.lambda.unwrap_or(Complex64::new(0.0, 0.0));
        rate_csv.row(&[
            energy.into(),
            r.rate.into(),
            r.rate_bits().into(),
            lambda.re.into(),
            lambda.im.into(),
            r.diagnostics.energy_used.into(),
            r.diagnostics.multiplier.into(),
            r.diagnostics.gap.into(),
            r.diagnostics.iterations.into(),
            r.diagnostics.refinement_residual.into(),
        ])?;
        if let Some(constellation) = &r.constellation {
            for (&a, &p) in constellation.points().iter().zip(constellation.priors()) {
                prior_csv.row(&[energy.into(), a.re.into(), a.im.into(), p.into()])?;
            }
        }
        results.push((energy, r));
    }
    let mut outputs = vec![rate_csv.finish()?, prior_csv.finish()?];
    outputs.push(write_json(
        out_dir,
        "rate_sd.json",
        &results.iter().map(|(e, r)| json!({ "energy": e, "result": r })).collect::<Vec<_>>(),
    )?);
    let best = results.iter().map(|(_, r)| r.rate).fold(0.0, f64::max);
    Ok(RunOutcome {
        science_ok: true,
        outputs,
        summary: json!({ "energies": results.len(), "max_rate_nats": best }),
    })
}

fn ad_search_from_config(
    config: &ExperimentConfig,
    letters: Vec<Complex64>,
) -> Result<AdSearch<f64>> {
    let ad = config.adaptive.clone().unwrap_or_default();
    let theta = ad
        .theta
        .map(|t| t.to_axis())
        .unwrap_or(AxisSpec { min: 0.0, max: std::f64::consts::FRAC_PI_2, count: 7 });
    let phi = ad.phi.map(|t| t.to_axis()).unwrap_or(AxisSpec::fixed(0.0));
    Ok(AdSearch {
        n_modes: ad.n_modes,
        letters,
        theta,
        phi,
        lambda: config.lambda_search()?,
        sweeps: ad.sweeps,
        rounds: ad.rounds,
    })
}

fn rate_ad(config: &ExperimentConfig, out_dir: &Path) -> Result<RunOutcome> {
    let params = config.channel_params()?;
    let family = config.povm_family()?;
    let points = config.amplitude_points()?;
    let search = config.lambda_search()?;
    let opts = BaOptions::default();

    let mut csv = CsvWriter::create(
        out_dir,
        "rate_ad.csv",
        &[
            "energy",
            "rate_nats",
            "rate_bits",
            "sd_reference_nats",
            "gap",
            "energy_used",
            "refinement_residual",
        ],
    )?;
    let mut trace_csv =
        CsvWriter::create(out_dir, "rate_ad_trace.csv", &["energy", "step", "rate_nats"])?;
    let mut outputs = Vec::new();
    let mut best = 0.0f64;
    for (idx, energy) in config.energies()?.into_iter().enumerate() {
        // seed the letter alphabet from the single-mode optimum
        let sd = optimize_sd_rate(&points, &search, &params, &family, energy, &opts)?;
        let ad_search = ad_search_from_config(config, seed_letters(&sd))?;
        let outcome = optimize_ad_rate(&ad_search, &params, &family, energy, &opts)?;
        csv.row(&[
            energy.into(),
            outcome.result.rate.into(),
            outcome.result.rate_bits().into(),
            outcome.sd_reference.rate.into(),
            outcome.result.diagnostics.gap.into(),
            outcome.result.diagnostics.energy_used.into(),
            outcome.result.diagnostics.refinement_residual.into(),
        ])?;
        for (step, rate) in outcome.trace.iter().enumerate() {
            trace_csv.row(&[energy.into(), step.into(), (*rate).into()])?;
        }
        outputs.push(write_json(out_dir, &format!("rate_ad_policy_{idx}.json"), &outcome.policy)?);
        outputs.push(write_json(
            out_dir,
            &format!("rate_ad_codebook_{idx}.json"),
            &outcome.codebook,
        )?);
        best = best.max(outcome.result.rate);
    }
    outputs.insert(0, csv.finish()?);
    outputs.insert(1, trace_csv.finish()?);
    Ok(RunOutcome {
        science_ok: true,
        outputs,
        summary: json!({ "max_rate_nats": best }),
    })
}

fn theorem_check_run(config: &ExperimentConfig, seed: u64, out_dir: &Path) -> Result<RunOutcome> {
    let params = config.channel_params()?;
    let family = config.povm_family()?;
    let points = config.amplitude_points()?;
    let search = config.lambda_search()?;
    let ad = config.adaptive.clone().unwrap_or_default();
    let theorem = config.theorem.clone().unwrap_or_default();
    let opts = BaOptions::default();

    let mut report_csv = CsvWriter::create(
        out_dir,
        "theorem_report.csv",
        &[
            "energy",
            "label",
            "mi_per_mode_nats",
            "bound_slack",
            "chain_residual",
            "worst_branch_slack",
            "energy_per_mode",
            "equivalence_deviation",
            "passed",
        ],
    )?;
    let mut cert_csv = CsvWriter::create(
        out_dir,
        "theorem_certificate.csv",
        &["energy_budget", "grid_energy", "rate_nats"],
    )?;
    let mut summaries = Vec::new();
    let mut all_ok = true;
    let mut reports_json = Vec::new();

    for energy in config.energies()? {
        let mut check_config =
            TheoremCheckConfig::new(params, family.clone(), energy, points.clone(), search.clone());
        check_config.bound_tolerance = theorem.bound_tolerance;
        check_config.chain_tolerance = theorem.chain_tolerance;
        check_config.negative_control_scale = if theorem.negative_control_scale > 0.0 {
            Some(theorem.negative_control_scale)
        } else {
            None
        };
        if let Some(grid) = &theorem.certificate {
            check_config.certificate_energies = grid.to_axis().values();
        }

        let sd = optimize_sd_rate(&points, &search, &params, &family, energy, &opts)?;
        let mut instances = vec![replica_instance(&sd, &family, ad.n_modes, energy)?];
        let letters = seed_letters(&sd);
        for k in 0..ad.optimized_policies {
            let mut ad_search = ad_search_from_config(config, letters.clone())?;
            if k % 2 == 1 {
                ad_search.theta = AxisSpec::fixed(0.0);
            }
            let outcome = optimize_ad_rate(&ad_search, &params, &family, energy, &opts)?;
            instances.push(TheoremInstance {
                label: format!("optimized-{k}"),
                codebook: outcome.codebook,
                policy: outcome.policy,
            });
        }
        let mut rng = ChaCha12Rng::seed_from_u64(seed ^ (energy.to_bits().rotate_left(17)));
        for k in 0..ad.random_policies {
            let codebook = random_codebook(&mut rng, ad.n_modes, ad.messages, energy)?;
            let policy = random_kennedy_policy(&mut rng, ad.n_modes, ad.lambda_scale)?;
            instances.push(TheoremInstance {
                label: format!("random-{k}"),
                codebook,
                policy,
            });
        }

        let report = theorem_check(&check_config, &instances)?;
        for inst in &report.instances {
            report_csv.row(&[
                energy.into(),
                inst.label.clone().into(),
                inst.mi_per_mode.into(),
                inst.bound_slack.into(),
                inst.chain_residual.into(),
                inst.worst_branch_slack.into(),
                inst.energy_per_mode.into(),
                inst.equivalence_deviation.into(),
                inst.passed.into(),
            ])?;
        }
        for (e, r) in report
            .certificate
            .energies
            .iter()
            .zip(&report.certificate.rates)
        {
            cert_csv.row(&[energy.into(), (*e).into(), (*r).into()])?;
        }
        all_ok &= report.passed;
        summaries.push(json!({
            "energy": energy,
            "sd_rate_nats": report.sd.rate,
            "violations": report.violations,
            "certificate_passes": report.certificate.passes(),
            "certificate_monotone": report.certificate.monotone(),
            "negative_control_flagged":
                report.negative_control.as_ref().map(|nc| nc.flagged),
            "passed": report.passed,
        }));
        reports_json.push(report);
    }
    let outputs = vec![
        report_csv.finish()?,
        cert_csv.finish()?,
        write_json(out_dir, "theorem_report.json", &reports_json)?,
    ];
    Ok(RunOutcome {
        science_ok: all_ok,
        outputs,
        summary: json!({ "per_energy": summaries }),
    })
}

fn kennedy_scaling(config: &ExperimentConfig, out_dir: &Path) -> Result<RunOutcome> {
    let params = config.channel_params()?;
    let scaling = config
        .scaling
        .as_ref()
        .context("scaling: section required")?;
    let study = ScalingStudyConfig {
        bright_count: scaling.bright_count,
        dim_count: scaling.dim_count,
        lambda_count: scaling.lambda_count,
        refine_rounds: scaling.refine_rounds,
        marker: std::marker::PhantomData,
    };
    let rows = kennedy_scaling_study(&params, &scaling.energies, &study, &BaOptions::default())?;
    let mut csv = CsvWriter::create(
        out_dir,
        "kennedy_scaling.csv",
        &["E", "rate_nats", "rate_bits", "reference_nats", "ratio", "in_regime"],
    )?;
    for row in &rows {
        csv.row(&[
            row.energy.into(),
            row.rate_nats.into(),
            row.rate_bits.into(),
            row.reference_nats.into(),
            row.ratio.into(),
            row.in_regime.into(),
        ])?;
    }
    let outputs = vec![csv.finish()?, write_json(out_dir, "kennedy_scaling.json", &rows)?];
    let out_of_regime = rows.iter().filter(|r| !r.in_regime).count();
    Ok(RunOutcome {
        science_ok: true,
        outputs,
        summary: json!({ "rows": rows.len(), "out_of_regime": out_of_regime }),
    })
}

fn picture_equivalence(
    config: &ExperimentConfig,
    seed: u64,
    out_dir: &Path,
) -> Result<RunOutcome> {
    let params = config.channel_params()?;
    let eq = config.equivalence.clone().unwrap_or_default();
    let energies = config.energies()?;
    let energy = energies[0];
    let ad = config.adaptive.clone().unwrap_or_default();

    let mut csv = CsvWriter::create(
        out_dir,
        "picture_equivalence.csv",
        &["instance", "n_modes", "max_abs_diff", "row_sum_deviation", "passed"],
    )?;
    let mut outputs = Vec::new();
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    let mut failures = 0usize;
    for i in 0..eq.instances {
        let n_modes = eq.n_modes[i % eq.n_modes.len()];
        let codebook = random_codebook(&mut rng, n_modes, ad.messages, energy)?;
        let policy = random_kennedy_policy(&mut rng, n_modes, ad.lambda_scale)?;
        let direct = simulate_ad(&codebook, &params, &policy)?;
        let encoder = compile_policy_to_encoder(&codebook, &policy)?;
        let schedule = policy.schedule()?;
        let classical = simulate_classical_picture(&codebook, &params, &encoder, &schedule)?;
        let diff = direct.max_abs_diff(&classical);
        let row_dev = direct.row_sum_deviation();
        let passed = diff <= eq.tolerance && row_dev <= 1e-10;
        worst = worst.max(diff);
        failures += usize::from(!passed);
        csv.row(&[
            i.into(),
            n_modes.into(),
            diff.into(),
            row_dev.into(),
            passed.into(),
        ])?;
        if eq.dump_tables {
            let mut table_csv = CsvWriter::create(
                out_dir,
                &format!("table_{i}.csv"),
                &["message_id", "outcome", "probability"],
            )?;
            for (w, row) in direct.rows().iter().enumerate() {
                for (flat, &p) in row.iter().enumerate() {
                    table_csv.row(&[w.into(), direct.outcome_label(flat).into(), p.into()])?;
                }
            }
            outputs.push(table_csv.finish()?);
        }
    }
    outputs.insert(0, csv.finish()?);
    Ok(RunOutcome {
        science_ok: failures == 0,
        outputs,
        summary: json!({
            "instances": eq.instances,
            "worst_deviation": worst,
            "failures": failures,
        }),
    })
}
