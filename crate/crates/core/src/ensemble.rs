//! Coupled-path Monte Carlo ensembles and exponential slope fits.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use nalgebra::DVector;

use crate::contractivity::{self, Region};
use crate::error::{Error, Result};
use crate::integrators::{step, MethodConfig, Scheme};
use crate::model::{ProblemConstants, SdeProblem};
use crate::numeric::{ls_slope, mean, pairwise_sum};
use crate::wiener::NoiseGrid;

/// Fraction of leading steps left out of the slope fit.
pub const FIT_SKIP_FRACTION: f64 = 0.05;
/// Fits stop once `D_n < FLOOR_RATIO · D_0`.
pub const FLOOR_RATIO: f64 = 1e-24;

/// Half-open index range `[start, end)` used by the slope fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FitWindow {
    pub start: usize,
    pub end: usize,
}

impl FitWindow {
    pub fn len(&self) -> usize {
        self.end.saturating_sub(self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EnsembleResult {
    pub times: Vec<f64>,
    /// `D_n = (1/P) Σ_j |X_n^{(j)} − Y_n^{(j)}|²`.
    pub msd: Vec<f64>,
    /// Standard error of each `D_n` across paths.
    pub std_err: Vec<f64>,
    pub paths: usize,
    pub master_seed: u64,
    pub config: MethodConfig,
    pub fitted_slope: Option<f64>,
    pub fit_window: Option<FitWindow>,
    /// Why no slope was fitted, when applicable.
    pub fit_note: Option<String>,
    /// `ν` or `ε` from the attached constants, when defined.
    pub theoretical_exponent: Option<f64>,
}

impl EnsembleResult {
    /// `D_0 e^{r t_n}` for the theoretical exponent `r`.
    pub fn theoretical_bound(&self) -> Option<Vec<f64>> {
        let r = self.theoretical_exponent?;
        let d0 = self.msd[0];
        Some(self.times.iter().map(|t| d0 * libm::exp(r * t)).collect())
    }

    /// Indices in the fit window where `D_n` exceeds `D_0 e^{r t_n}` by more
    /// than `sigmas` standard errors.
    pub fn bound_violations(&self, exponent: f64, sigmas: f64) -> Vec<usize> {
        let d0 = self.msd[0];
        let window = self.fit_window.unwrap_or(FitWindow {
            start: 0,
            end: self.msd.len(),
        });
        (window.start..window.end)
            .filter(|&n| self.msd[n] > d0 * libm::exp(exponent * self.times[n]) + sigmas * self.std_err[n])
            .collect()
    }

    /// Steps in the fit window where `D_{n+1}` is not below `D_n` up to
    /// `sigmas` standard errors of `D_{n+1}`.
    pub fn monotonicity_violations(&self, sigmas: f64) -> Vec<usize> {
        let window = self.fit_window.unwrap_or(FitWindow {
            start: 0,
            end: self.msd.len(),
        });
        (window.start..window.end.saturating_sub(1))
            .filter(|&n| self.msd[n + 1] >= self.msd[n] + sigmas * self.std_err[n + 1])
            .collect()
    }
}

/// Squared deviation `|X_n − Y_n|²` along one coupled path pair.
pub fn path_deviation(
    problem: &SdeProblem,
    config: &MethodConfig,
    x0: &DVector<f64>,
    y0: &DVector<f64>,
    master_seed: u64,
    path_index: u64,
) -> Result<Vec<f64>> {
    let steps = config.steps_for(problem.horizon());
    let grid = NoiseGrid::new(config.dt, steps, problem.noise_dim(), master_seed, path_index)?;
    let mut x = x0.clone();
    let mut y = y0.clone();
    let mut out = Vec::with_capacity(steps + 1);
    out.push((&x - &y).norm_squared());
    for (n, dw) in grid.increments().iter().enumerate() {
        x = step(problem, config, &x, dw).map_err(|e| e.at_step(path_index, n))?;
        y = step(problem, config, &y, dw).map_err(|e| e.at_step(path_index, n))?;
        out.push((&x - &y).norm_squared());
    }
    Ok(out)
}

/// Theoretical exponent for the problem's attached constants, if defined.
pub fn theoretical_exponent(problem: &SdeProblem, config: &MethodConfig) -> Option<f64> {
    let c = problem.constants()?;
    contractivity::exponent(config.scheme, c, config.theta, config.dt).ok()
}

/// Reduces per-path deviation series (indexed by path) into an
/// [`EnsembleResult`] and fits its slope. The reduction runs in fixed path
/// order, so the outcome does not depend on how the series were computed.
pub fn assemble(
    config: &MethodConfig,
    master_seed: u64,
    per_path: &[Vec<f64>],
    theoretical_exponent: Option<f64>,
) -> Result<EnsembleResult> {
    let paths = per_path.len();
    if paths < 2 {
        return Err(Error::InvalidArgument("an ensemble needs at least two paths".into()));
    }
    let len = per_path[0].len();
    if per_path.iter().any(|p| p.len() != len) {
        return Err(Error::InvalidArgument("deviation series differ in length".into()));
    }
    let mut msd = Vec::with_capacity(len);
    let mut std_err = Vec::with_capacity(len);
    let mut column = Vec::with_capacity(paths);
    for n in 0..len {
        column.clear();
        column.extend(per_path.iter().map(|p| p[n]));
        let m = mean(&column);
        let squares: Vec<f64> = column.iter().map(|v| (v - m) * (v - m)).collect();
        let var = pairwise_sum(&squares) / (paths - 1) as f64;
        msd.push(m);
        std_err.push(libm::sqrt(var / paths as f64));
    }
    let mut result = EnsembleResult {
        times: (0..len).map(|n| n as f64 * config.dt).collect(),
        msd,
        std_err,
        paths,
        master_seed,
        config: *config,
        fitted_slope: None,
        fit_window: None,
        fit_note: None,
        theoretical_exponent,
    };
    match fit_slope(&result) {
        Ok((slope, window)) => {
            result.fitted_slope = Some(slope);
            result.fit_window = Some(window);
        }
        Err(e) => result.fit_note = Some(e.to_string()),
    }
    Ok(result)
}

/// Runs `paths` coupled pairs from `(x0, y0)` sequentially.
pub fn run_ensemble(
    problem: &SdeProblem,
    config: &MethodConfig,
    x0: &DVector<f64>,
    y0: &DVector<f64>,
    paths: usize,
    master_seed: u64,
) -> Result<EnsembleResult> {
    config.validate()?;
    let per_path = (0..paths as u64)
        .map(|k| path_deviation(problem, config, x0, y0, master_seed, k))
        .collect::<Result<Vec<_>>>()?;
    assemble(config, master_seed, &per_path, theoretical_exponent(problem, config))
}

/// Fit window for a deviation series: skip the leading 5% of steps, stop at
/// the first value below `FLOOR_RATIO · D_0` or that is not positive and finite.
pub fn fit_window(msd: &[f64]) -> FitWindow {
    let steps = msd.len().saturating_sub(1);
    let start = libm::floor(FIT_SKIP_FRACTION * steps as f64) as usize;
    let floor = FLOOR_RATIO * msd.first().copied().unwrap_or(0.0);
    let mut end = start;
    while end < msd.len() {
        let d = msd[end];
        if !(d.is_finite() && d > 0.0 && d >= floor) {
            break;
        }
        end += 1;
    }
    FitWindow { start, end }
}

/// Least-squares slope of `ln D_n` against `t_n` over [`fit_window`].
pub fn fit_slope(result: &EnsembleResult) -> Result<(f64, FitWindow)> {
    let window = fit_window(&result.msd);
    if window.len() < 3 {
        let reason = if result.msd.first().is_some_and(|d| *d == 0.0) {
            "initial deviation is zero"
        } else {
            "fewer than 3 usable points"
        };
        return Err(Error::Fit(reason.to_string()));
    }
    let ts = &result.times[window.start..window.end];
    let logs: Vec<f64> = result.msd[window.start..window.end]
        .iter()
        .map(|d| libm::log(*d))
        .collect();
    Ok((ls_slope(ts, &logs), window))
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ExperimentRow {
    pub dt: f64,
    pub inside_region: bool,
    pub theoretical_exponent: Option<f64>,
    pub fitted_slope: Option<f64>,
    pub note: Option<String>,
    #[cfg_attr(feature = "serde", serde(skip))]
    pub result: Option<EnsembleResult>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ExperimentTable {
    pub problem: String,
    pub scheme: Scheme,
    pub theta: f64,
    pub constants: ProblemConstants,
    /// `None` when the constants cannot produce a region (e.g. no `M̃`).
    pub region: Option<Region>,
    pub paths: usize,
    pub master_seed: u64,
    pub fit_method: String,
    pub rows: Vec<ExperimentRow>,
}

/// Signature of an ensemble runner: problem, method, `x0`, `y0`, paths, seed.
pub type EnsembleRunner<'a> =
    dyn FnMut(&SdeProblem, &MethodConfig, &DVector<f64>, &DVector<f64>, usize, u64) -> Result<EnsembleResult> + 'a;

/// One ensemble per stepsize, with region membership and theoretical exponent.
///
/// Rows that fail keep their error message; the remaining rows still run.
#[allow(clippy::too_many_arguments)]
pub fn contractivity_experiment_with(
    problem: &SdeProblem,
    constants: &ProblemConstants,
    scheme: Scheme,
    theta: f64,
    dt_list: &[f64],
    paths: usize,
    master_seed: u64,
    runner: &mut EnsembleRunner<'_>,
) -> Result<ExperimentTable> {
    if dt_list.is_empty() {
        return Err(Error::InvalidArgument("the stepsize list is empty".into()));
    }
    let region = contractivity::region(scheme, constants, theta).ok();
    let problem = problem.clone().with_constants(constants.clone());
    let (x0, y0) = problem.initial_pair();
    let mut rows = Vec::with_capacity(dt_list.len());
    for &dt in dt_list {
        let exponent = contractivity::exponent(scheme, constants, theta, dt).ok();
        let inside = region.is_some_and(|r| r.contains(dt));
        let outcome = MethodConfig::new(scheme, theta, dt)
            .and_then(|config| runner(&problem, &config, x0, y0, paths, master_seed));
        let row = match outcome {
            Ok(result) => ExperimentRow {
                dt,
                inside_region: inside,
                theoretical_exponent: exponent,
                fitted_slope: result.fitted_slope,
                note: result.fit_note.clone(),
                result: Some(result),
            },
            Err(e) => ExperimentRow {
                dt,
                inside_region: inside,
                theoretical_exponent: exponent,
                fitted_slope: None,
                note: Some(e.to_string()),
                result: None,
            },
        };
        rows.push(row);
    }
    Ok(ExperimentTable {
        problem: problem.label().to_string(),
        scheme,
        theta,
        constants: constants.clone(),
        region,
        paths,
        master_seed,
        fit_method: "least-squares slope of ln(msd) vs t, skipping the first 5% of steps, \
                     truncated below 1e-24*msd[0]"
            .to_string(),
        rows,
    })
}

/// [`contractivity_experiment_with`] using the sequential [`run_ensemble`].
pub fn contractivity_experiment(
    problem: &SdeProblem,
    constants: &ProblemConstants,
    scheme: Scheme,
    theta: f64,
    dt_list: &[f64],
    paths: usize,
    master_seed: u64,
) -> Result<ExperimentTable> {
    contractivity_experiment_with(
        problem,
        constants,
        scheme,
        theta,
        dt_list,
        paths,
        master_seed,
        &mut run_ensemble,
    )
}
