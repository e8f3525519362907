//! Run configuration: JSON file form, flag overrides and resolution.

use std::path::PathBuf;

use sde_contractivity::{builtin_problem, MuRule, Scheme};
use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::presets::FigurePreset;

/// Environment variable holding the default output directory.
pub const OUT_DIR_ENV: &str = "SDECONTRACT_OUT_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ConstantsSource {
    #[default]
    #[serde(alias = "paper-preset")]
    #[value(alias = "paper-preset")]
    Preset,
    Estimated,
    File,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
}

/// Explicit constant values that replace the selected source's values.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstantOverrides {
    #[serde(rename = "L", default, skip_serializing_if = "Option::is_none")]
    pub lipschitz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    #[serde(rename = "M", default, skip_serializing_if = "Option::is_none")]
    pub drift_moment: Option<f64>,
    #[serde(rename = "M_tilde", default, skip_serializing_if = "Option::is_none")]
    pub milstein_moment: Option<f64>,
}

impl ConstantOverrides {
    fn merge(self, over: ConstantOverrides) -> Self {
        Self {
            lipschitz: over.lipschitz.or(self.lipschitz),
            mu: over.mu.or(self.mu),
            drift_moment: over.drift_moment.or(self.drift_moment),
            milstein_moment: over.milstein_moment.or(self.milstein_moment),
        }
    }

    pub fn is_empty(&self) -> bool {
        *self == Self::default()
    }
}

/// Configuration file layout; every key is optional and unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub problem: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scheme: Option<Scheme>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub paths: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pairs: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constants: Option<ConstantsSource>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constants_file: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub overrides: Option<ConstantOverrides>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu_rule: Option<MuRule>,
    /// Estimation box `[lo, hi]ⁿ`; the trajectory bounding box when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_box: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<StabilityGrid>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub formats: Option<Vec<OutputFormat>>,
}

/// Raster over `(x, y) = (Δt·λ, Δt·σ²)` for the linear stability map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StabilityGrid {
    pub x: [f64; 2],
    pub y: [f64; 2],
    pub nx: usize,
    pub ny: usize,
}

impl Default for StabilityGrid {
    fn default() -> Self {
        Self {
            x: [-10.0, 0.0],
            y: [0.0, 10.0],
            nx: 101,
            ny: 101,
        }
    }
}

impl StabilityGrid {
    fn validate(&self) -> Result<(), CliError> {
        let ok = |r: [f64; 2]| r[0].is_finite() && r[1].is_finite() && r[0] <= r[1];
        if !ok(self.x) || !ok(self.y) || self.nx < 1 || self.ny < 1 {
            return Err(CliError::Usage(
                "grid needs finite ordered ranges and at least one point per axis".into(),
            ));
        }
        if self.y[0] < 0.0 {
            return Err(CliError::Usage(
                "the y axis is dt*sigma^2 and must be nonnegative".into(),
            ));
        }
        Ok(())
    }

    /// `n` evenly spaced points on `[lo, hi]`; the midpoint when `n = 1`.
    pub fn axis(range: [f64; 2], n: usize) -> Vec<f64> {
        if n == 1 {
            return vec![0.5 * (range[0] + range[1])];
        }
        (0..n)
            .map(|k| range[0] + (range[1] - range[0]) * k as f64 / (n - 1) as f64)
            .collect()
    }
}

impl ExperimentConfig {
    /// Layers `over` on top of `self`.
    pub fn merge(self, over: ExperimentConfig) -> Self {
        let overrides = match (self.overrides, over.overrides) {
            (Some(a), Some(b)) => Some(a.merge(b)),
            (a, b) => b.or(a),
        };
        Self {
            preset: over.preset.or(self.preset),
            problem: over.problem.or(self.problem),
            scheme: over.scheme.or(self.scheme),
            theta: over.theta.or(self.theta),
            dt: over.dt.or(self.dt),
            paths: over.paths.or(self.paths),
            pairs: over.pairs.or(self.pairs),
            seed: over.seed.or(self.seed),
            horizon: over.horizon.or(self.horizon),
            constants: over.constants.or(self.constants),
            constants_file: over.constants_file.or(self.constants_file),
            overrides,
            mu_rule: over.mu_rule.or(self.mu_rule),
            sample_box: over.sample_box.or(self.sample_box),
            grid: over.grid.or(self.grid),
            output_dir: over.output_dir.or(self.output_dir),
            formats: over.formats.or(self.formats),
        }
    }
}

/// Fully resolved and validated settings.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedConfig {
    pub preset: Option<String>,
    pub problem: String,
    pub scheme: Scheme,
    pub theta: f64,
    pub dt: Vec<f64>,
    pub paths: usize,
    pub pairs: usize,
    pub seed: u64,
    pub horizon: f64,
    pub constants: ConstantsSource,
    pub constants_file: Option<PathBuf>,
    pub overrides: ConstantOverrides,
    pub mu_rule: MuRule,
    pub sample_box: Option<[f64; 2]>,
    pub grid: StabilityGrid,
    pub output_dir: PathBuf,
    pub formats: Vec<OutputFormat>,
}

pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_PATHS: usize = 2000;
pub const DEFAULT_PAIRS: usize = 10_000;
pub const DEFAULT_THETA: f64 = 0.5;
pub const DEFAULT_DT: f64 = 0.25;

impl ResolvedConfig {
    /// Resolves `defaults < preset < file < flags` and validates the result.
    pub fn resolve(file: Option<ExperimentConfig>, flags: ExperimentConfig) -> Result<Self, CliError> {
        let layered = file.unwrap_or_default().merge(flags);
        let preset = match &layered.preset {
            Some(name) => Some(FigurePreset::by_name(name)?),
            None => None,
        };
        let base = preset.as_ref().map(FigurePreset::as_config).unwrap_or_default();
        let c = base.merge(layered);

        let problem = c.problem.unwrap_or_else(|| "problem1".to_string());
        let model = builtin_problem(&problem).map_err(|e| CliError::Usage(e.to_string()))?;
        let theta = c.theta.unwrap_or(DEFAULT_THETA);
        if !(0.0..=1.0).contains(&theta) {
            return Err(CliError::Usage(format!("theta must lie in [0,1], got {theta}")));
        }
        let dt = c.dt.unwrap_or_else(|| vec![DEFAULT_DT]);
        if dt.is_empty() || dt.iter().any(|d| !(d.is_finite() && *d > 0.0)) {
            return Err(CliError::Usage(format!("every dt must be positive, got {dt:?}")));
        }
        let horizon = c.horizon.unwrap_or(model.horizon());
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(CliError::Usage(format!("horizon must be positive, got {horizon}")));
        }
        let paths = c.paths.unwrap_or(DEFAULT_PATHS);
        let pairs = c.pairs.unwrap_or(DEFAULT_PAIRS);
        if paths < 2 || pairs < 1 {
            return Err(CliError::Usage("paths must be at least 2 and pairs at least 1".into()));
        }
        let constants = c.constants.unwrap_or_default();
        if constants == ConstantsSource::File && c.constants_file.is_none() {
            return Err(CliError::Usage("constants source `file` needs --constants-file".into()));
        }
        if let Some([lo, hi]) = c.sample_box {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(CliError::Usage(format!(
                    "sample box [{lo}, {hi}] is not an ordered finite interval"
                )));
            }
        }
        let grid = c.grid.unwrap_or_default();
        grid.validate()?;
        let output_dir = c
            .output_dir
            .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("."));
        Ok(Self {
            preset: c.preset,
            problem,
            scheme: c.scheme.unwrap_or(Scheme::Maruyama),
            theta,
            dt,
            paths,
            pairs,
            seed: c.seed.unwrap_or(DEFAULT_SEED),
            horizon,
            constants,
            constants_file: c.constants_file,
            overrides: c.overrides.unwrap_or_default(),
            mu_rule: c.mu_rule.unwrap_or_default(),
            sample_box: c.sample_box,
            grid,
            output_dir,
            formats: c.formats.unwrap_or_else(|| vec![OutputFormat::Csv, OutputFormat::Json]),
        })
    }

    /// The result-determining settings in config-file form. Output location
    /// and worker count are left out so that reruns reproduce files byte for byte.
    pub fn embedded(&self) -> ExperimentConfig {
        ExperimentConfig {
            preset: self.preset.clone(),
            problem: Some(self.problem.clone()),
            scheme: Some(self.scheme),
            theta: Some(self.theta),
            dt: Some(self.dt.clone()),
            paths: Some(self.paths),
            pairs: Some(self.pairs),
            seed: Some(self.seed),
            horizon: Some(self.horizon),
            constants: Some(self.constants),
            constants_file: self.constants_file.clone(),
            overrides: (!self.overrides.is_empty()).then_some(self.overrides),
            mu_rule: Some(self.mu_rule),
            sample_box: self.sample_box,
            grid: Some(self.grid),
            output_dir: None,
            formats: Some(self.formats.clone()),
        }
    }

    pub fn wants(&self, format: OutputFormat) -> bool {
        self.formats.contains(&format)
    }
}
