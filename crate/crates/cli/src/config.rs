//! Experiment configuration: schema, loading, and validation.
//!
//! Configs are TOML (key/value with nested sections); the same schema is
//! accepted as JSON. A run manifest embeds the resolved config under the
//! `config` key, and such a manifest can be passed back as the config file
//! to reproduce the run.

use std::path::Path;

use anyhow::{bail, Context, Result};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use adrate_core::gaussian::ChannelParams;
use adrate_core::measurement::{default_homodyne_edges, uniform_bin_edges};
use adrate_core::rate::{AxisSpec, LambdaSearch, PovmFamily};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    ChannelInfo,
    RateSd,
    RateAd,
    TheoremCheck,
    KennedyScaling,
    PictureEquivalence,
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::ChannelInfo => "channel-info",
            ExperimentKind::RateSd => "rate-sd",
            ExperimentKind::RateAd => "rate-ad",
            ExperimentKind::TheoremCheck => "theorem-check",
            ExperimentKind::KennedyScaling => "kennedy-scaling",
            ExperimentKind::PictureEquivalence => "picture-equivalence",
        }
    }

    pub fn randomized(&self) -> bool {
        matches!(
            self,
            ExperimentKind::TheoremCheck | ExperimentKind::PictureEquivalence
        )
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ChannelSection {
    pub mu1: Option<f64>,
    pub mu2: Option<f64>,
    /// Pure-loss shorthand; mutually exclusive with `mu1`/`mu2`.
    pub eta: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AxisSection {
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl AxisSection {
    pub fn to_axis(&self) -> AxisSpec<f64> {
        AxisSpec { min: self.min, max: self.max, count: self.count }
    }

    fn fixed_zero() -> Self {
        Self { min: 0.0, max: 0.0, count: 1 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PovmSection {
    pub family: String,
    pub n_max: Option<usize>,
    /// Homodyne binning: either explicit edges or a uniform description.
    pub edges: Option<Vec<f64>>,
    pub uniform_bins: Option<UniformBins>,
    pub priors: Option<[f64; 2]>,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct UniformBins {
    pub half_width: Option<f64>,
    pub count: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EnergySection {
    pub value: Option<f64>,
    pub values: Option<Vec<f64>>,
    pub grid: Option<AxisSection>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AmplitudeSection {
    pub re: AxisSection,
    #[serde(default = "AxisSection::fixed_zero")]
    pub im: AxisSection,
    #[serde(default)]
    pub include: Vec<[f64; 2]>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LambdaSection {
    pub re: AxisSection,
    #[serde(default = "AxisSection::fixed_zero")]
    pub im: AxisSection,
    #[serde(default = "default_rounds")]
    pub rounds: usize,
    #[serde(default = "default_shrink")]
    pub shrink: f64,
    #[serde(default = "default_refine_top")]
    pub refine_top: usize,
}

fn default_rounds() -> usize {
    3
}

fn default_shrink() -> f64 {
    0.2
}

fn default_refine_top() -> usize {
    3
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AdaptiveSection {
    #[serde(default = "default_n_modes")]
    pub n_modes: usize,
    #[serde(default = "default_random_policies")]
    pub random_policies: usize,
    #[serde(default = "default_optimized_policies")]
    pub optimized_policies: usize,
    #[serde(default = "default_messages")]
    pub messages: usize,
    #[serde(default = "default_lambda_scale")]
    pub lambda_scale: f64,
    pub theta: Option<AxisSection>,
    pub phi: Option<AxisSection>,
    #[serde(default = "default_sweeps")]
    pub sweeps: usize,
    #[serde(default = "default_ad_rounds")]
    pub rounds: usize,
}

fn default_n_modes() -> usize {
    2
}
fn default_random_policies() -> usize {
    200
}
fn default_optimized_policies() -> usize {
    2
}
fn default_messages() -> usize {
    3
}
fn default_lambda_scale() -> f64 {
    0.5
}
fn default_sweeps() -> usize {
    2
}
fn default_ad_rounds() -> usize {
    2
}

impl Default for AdaptiveSection {
    fn default() -> Self {
        Self {
            n_modes: default_n_modes(),
            random_policies: default_random_policies(),
            optimized_policies: default_optimized_policies(),
            messages: default_messages(),
            lambda_scale: default_lambda_scale(),
            theta: None,
            phi: None,
            sweeps: default_sweeps(),
            rounds: default_ad_rounds(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScalingSection {
    pub energies: Vec<f64>,
    #[serde(default = "default_bright_count")]
    pub bright_count: usize,
    #[serde(default = "default_dim_count")]
    pub dim_count: usize,
    #[serde(default = "default_lambda_count")]
    pub lambda_count: usize,
    #[serde(default = "default_refine_rounds")]
    pub refine_rounds: usize,
}

fn default_bright_count() -> usize {
    16
}
fn default_dim_count() -> usize {
    8
}
fn default_lambda_count() -> usize {
    13
}
fn default_refine_rounds() -> usize {
    3
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EquivalenceSection {
    #[serde(default = "default_instances")]
    pub instances: usize,
    #[serde(default = "default_eq_modes")]
    pub n_modes: Vec<usize>,
    #[serde(default = "default_eq_tolerance")]
    pub tolerance: f64,
    #[serde(default)]
    pub dump_tables: bool,
}

fn default_instances() -> usize {
    100
}
fn default_eq_modes() -> Vec<usize> {
    vec![2, 3]
}
fn default_eq_tolerance() -> f64 {
    1e-12
}

impl Default for EquivalenceSection {
    fn default() -> Self {
        Self {
            instances: default_instances(),
            n_modes: default_eq_modes(),
            tolerance: default_eq_tolerance(),
            dump_tables: false,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TheoremSection {
    #[serde(default = "default_bound_tol")]
    pub bound_tolerance: f64,
    #[serde(default = "default_chain_tol")]
    pub chain_tolerance: f64,
    #[serde(default = "default_negative_scale")]
    pub negative_control_scale: f64,
    pub certificate: Option<AxisSection>,
}

fn default_bound_tol() -> f64 {
    1e-6
}
fn default_chain_tol() -> f64 {
    1e-9
}
fn default_negative_scale() -> f64 {
    0.5
}

impl Default for TheoremSection {
    fn default() -> Self {
        Self {
            bound_tolerance: default_bound_tol(),
            chain_tolerance: default_chain_tol(),
            negative_control_scale: default_negative_scale(),
            certificate: None,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OutputSection {
    pub dir: Option<String>,
}

/// The full experiment description.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub seed: Option<u64>,
    pub channel: ChannelSection,
    pub povm: Option<PovmSection>,
    pub energy: Option<EnergySection>,
    pub amplitudes: Option<AmplitudeSection>,
    pub lambda: Option<LambdaSection>,
    #[serde(default)]
    pub adaptive: Option<AdaptiveSection>,
    pub scaling: Option<ScalingSection>,
    #[serde(default)]
    pub equivalence: Option<EquivalenceSection>,
    #[serde(default)]
    pub theorem: Option<TheoremSection>,
    pub output: Option<OutputSection>,
}

/// Wrapper used when the config file is actually an emitted run manifest.
#[derive(Deserialize)]
struct ManifestEnvelope {
    config: ExperimentConfig,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config file {}", path.display()))?;
        let is_json = path
            .extension()
            .map(|e| e.eq_ignore_ascii_case("json"))
            .unwrap_or(false)
            || text.trim_start().starts_with('{');
        if is_json {
            if let Ok(envelope) = serde_json::from_str::<ManifestEnvelope>(&text) {
                return Ok(envelope.config);
            }
            serde_json::from_str(&text).context("config JSON does not match the schema")
        } else {
            toml::from_str(&text).context("config TOML does not match the schema")
        }
    }

    /// Schema and invariant checks without running; returns every violation.
    pub fn validate(&self) -> Vec<String> {
        let mut violations = Vec::new();
        if self.channel_params().is_err() {
            violations.push(self.channel_violation());
        }
        if self.kind.randomized() && self.seed.is_none() {
            violations.push("seed: required for randomized experiments".into());
        }
        match self.kind {
            ExperimentKind::ChannelInfo => {}
            ExperimentKind::RateSd | ExperimentKind::RateAd | ExperimentKind::TheoremCheck => {
                if let Err(e) = self.povm_family() {
                    violations.push(format!("povm: {e}"));
                }
                if let Err(e) = self.energies() {
                    violations.push(format!("energy: {e}"));
                }
                if let Err(e) = self.amplitude_points() {
                    violations.push(format!("amplitudes: {e}"));
                }
                if let Err(e) = self.lambda_search() {
                    violations.push(format!("lambda: {e}"));
                }
            }
            ExperimentKind::KennedyScaling => match &self.scaling {
                None => violations.push("scaling: section required".into()),
                Some(s) => {
                    if s.energies.is_empty() {
                        violations.push("scaling.energies: must be non-empty".into());
                    }
                    if s.energies.iter().any(|&e| e <= 0.0 || e >= 1.0) {
                        violations.push("scaling.energies: values must lie in (0, 1)".into());
                    }
                }
            },
            ExperimentKind::PictureEquivalence => {
                let eq = self.equivalence.clone().unwrap_or_default();
                if eq.instances == 0 {
                    violations.push("equivalence.instances: must be positive".into());
                }
                if eq.n_modes.iter().any(|&n| n == 0 || n > 3) {
                    violations.push("equivalence.n_modes: entries must lie in 1..=3".into());
                }
                if let Err(e) = self.energies() {
                    violations.push(format!("energy: {e}"));
                }
            }
        }
        if self.kind == ExperimentKind::RateAd || self.kind == ExperimentKind::TheoremCheck {
            let ad = self.adaptive.clone().unwrap_or_default();
            if ad.n_modes == 0 || ad.n_modes > 3 {
                violations.push("adaptive.n_modes: must lie in 1..=3".into());
            }
            if ad.messages == 0 {
                violations.push("adaptive.messages: must be positive".into());
            }
        }
        violations
    }

    fn channel_violation(&self) -> String {
        match (&self.channel.eta, &self.channel.mu1, &self.channel.mu2) {
            (Some(_), Some(_), _) | (Some(_), _, Some(_)) => {
                "channel: give either eta or (mu1, mu2), not both".into()
            }
            (Some(eta), None, None) => {
                format!("channel.eta: transmissivity {eta} must lie in [0, 1]")
            }
            (None, Some(mu1), Some(mu2)) => format!(
                "channel.mu2: parameters (mu1={mu1}, mu2={mu2}) must satisfy mu1, mu2 >= 0 and \
                 mu2 >= |1 - mu1^2|"
            ),
            _ => "channel: needs eta or (mu1, mu2)".into(),
        }
    }

    pub fn channel_params(&self) -> Result<ChannelParams<f64>> {
        match (self.channel.eta, self.channel.mu1, self.channel.mu2) {
            (Some(_), Some(_), _) | (Some(_), _, Some(_)) => {
                bail!("channel: give either eta or (mu1, mu2), not both")
            }
            (Some(eta), None, None) => Ok(ChannelParams::pure_loss(eta)?),
            (None, Some(mu1), Some(mu2)) => Ok(ChannelParams::new(mu1, mu2)?),
            _ => bail!("channel: needs eta or (mu1, mu2)"),
        }
    }

    pub fn povm_family(&self) -> Result<PovmFamily<f64>> {
        let section = self
            .povm
            .as_ref()
            .context("povm: section required for this experiment")?;
        match section.family.as_str() {
            "kennedy" => Ok(PovmFamily::Kennedy),
            "pnr" => Ok(PovmFamily::Pnr {
                n_max: section.n_max.context("povm.n_max: required for pnr")?,
            }),
            "homodyne" => {
                let edges = if let Some(edges) = &section.edges {
                    edges.clone()
                } else if let Some(u) = &section.uniform_bins {
                    match u.half_width {
                        Some(h) => uniform_bin_edges(h, u.count),
                        None => {
                            let nbar = self.channel_params()?.nbar();
                            default_homodyne_edges(nbar)
                        }
                    }
                } else {
                    let nbar = self.channel_params()?.nbar();
                    default_homodyne_edges(nbar)
                };
                Ok(PovmFamily::Homodyne { edges })
            }
            "helstrom-binary" => Ok(PovmFamily::HelstromBinary {
                priors: section.priors.unwrap_or([0.5, 0.5]),
            }),
            other => bail!("povm.family: unknown family '{other}'"),
        }
    }

    pub fn energies(&self) -> Result<Vec<f64>> {
        let section = self.energy.as_ref().context("section required")?;
        let mut out = Vec::new();
        if let Some(v) = section.value {
            out.push(v);
        }
        if let Some(vs) = &section.values {
            out.extend_from_slice(vs);
        }
        if let Some(grid) = &section.grid {
            out.extend(grid.to_axis().values());
        }
        if out.is_empty() {
            bail!("needs value, values, or grid");
        }
        if out.iter().any(|&e| !e.is_finite() || e < 0.0) {
            bail!("energies must be finite and nonnegative");
        }
        Ok(out)
    }

    pub fn amplitude_points(&self) -> Result<Vec<Complex64>> {
        let section = self.amplitudes.as_ref().context("section required")?;
        let mut points = Vec::new();
        for &re in &section.re.to_axis().values() {
            for &im in &section.im.to_axis().values() {
                points.push(Complex64::new(re, im));
            }
        }
        for pair in &section.include {
            points.push(Complex64::new(pair[0], pair[1]));
        }
        if points.is_empty() {
            bail!("grid is empty");
        }
        Ok(points)
    }

    pub fn lambda_search(&self) -> Result<LambdaSearch<f64>> {
        let section = self.lambda.as_ref().context("section required")?;
        if section.re.count == 0 {
            bail!("re.count must be positive");
        }
        Ok(LambdaSearch {
            re: section.re.to_axis(),
            im: section.im.to_axis(),
            rounds: section.rounds,
            shrink: section.shrink,
            refine_top: section.refine_top,
            extra: Vec::new(),
        })
    }
}
