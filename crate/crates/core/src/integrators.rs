//! θ-Maruyama and θ-Milstein one-step maps and trajectory integration.

use alloc::vec::Vec;
use core::fmt;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::SdeProblem;
use crate::wiener::{milstein_products, NoiseGrid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Scheme {
    Maruyama,
    Milstein,
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::Maruyama => "maruyama",
            Scheme::Milstein => "milstein",
        })
    }
}

impl core::str::FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "maruyama" => Ok(Scheme::Maruyama),
            "milstein" => Ok(Scheme::Milstein),
            _ => Err(Error::InvalidArgument(alloc::format!(
                "unknown scheme `{s}` (expected maruyama or milstein)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MethodConfig {
    pub scheme: Scheme,
    pub theta: f64,
    pub dt: f64,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
}

impl MethodConfig {
    pub fn new(scheme: Scheme, theta: f64, dt: f64) -> Result<Self> {
        let config = Self {
            scheme,
            theta,
            dt,
            newton_tol: 1e-12,
            newton_max_iter: 50,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.theta) {
            return Err(Error::InvalidArgument(alloc::format!(
                "theta must lie in [0,1], got {}",
                self.theta
            )));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::InvalidArgument(alloc::format!(
                "dt must be positive, got {}",
                self.dt
            )));
        }
        if !(self.newton_tol > 0.0) || self.newton_max_iter == 0 {
            return Err(Error::InvalidArgument(
                "Newton tolerance and iteration limit must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Number of steps covering `[0, horizon]`, at least one.
    pub fn steps_for(&self, horizon: f64) -> usize {
        (libm::round(horizon / self.dt) as usize).max(1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
    pub config: MethodConfig,
    pub path_index: u64,
}

/// Solves `a − h f(a) = b` by damped Newton iteration from `a₀ = b`.
///
/// The residual test is scaled by `1 + |b| + h|f(a)|` so that large states do
/// not demand sub-ulp accuracy.
pub fn implicit_solve(
    problem: &SdeProblem,
    h: f64,
    b: &DVector<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<DVector<f64>> {
    implicit_solve_from(problem, h, b, b, tol, max_iter)
}

/// [`implicit_solve`] started from an arbitrary initial guess.
///
/// When the equation has several roots, Newton settles on one near the guess.
pub fn implicit_solve_from(
    problem: &SdeProblem,
    h: f64,
    b: &DVector<f64>,
    guess: &DVector<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<DVector<f64>> {
    if !(h > 0.0) {
        return Err(Error::InvalidArgument(alloc::format!(
            "implicit weight h must be positive, got {h}"
        )));
    }
    let residual = |a: &DVector<f64>| -> (DVector<f64>, f64) {
        let fa = problem.drift(a);
        let scale = 1.0 + b.norm() + h * fa.norm();
        let r = a - fa * h - b;
        (r, scale)
    };
    let mut a = guess.clone();
    let (mut r, mut scale) = residual(&a);
    let mut rnorm = r.norm();
    let id = DMatrix::<f64>::identity(b.len(), b.len());
    for _ in 0..max_iter {
        if rnorm <= tol * scale {
            return Ok(a);
        }
        if !rnorm.is_finite() {
            break;
        }
        let jac = &id - problem.drift_jacobian(&a)? * h;
        let step = jac.lu().solve(&(-&r)).ok_or(Error::SingularMatrix)?;
        let mut lambda = 1.0;
        loop {
            let trial = &a + &step * lambda;
            let (tr, ts) = residual(&trial);
            let tn = tr.norm();
            if tn < rnorm || lambda < 1e-10 {
                a = trial;
                r = tr;
                scale = ts;
                rnorm = tn;
                break;
            }
            lambda *= 0.5;
        }
    }
    if rnorm <= tol * scale {
        return Ok(a);
    }
    Err(Error::NonConvergence {
        iterations: max_iter,
        residual: rnorm,
    })
}

/// Explicit part of a θ-Maruyama step: `x + (1−θ)Δt f(x) + g(x)ΔW`.
fn maruyama_explicit(problem: &SdeProblem, config: &MethodConfig, x: &DVector<f64>, dw: &DVector<f64>) -> DVector<f64> {
    let mut b = x + problem.diffusion(x) * dw;
    if config.theta < 1.0 {
        b += problem.drift(x) * ((1.0 - config.theta) * config.dt);
    }
    b
}

/// Implicit stage of a step from `x`: Newton starts at the current state so
/// that, when the stage equation has several roots, the one continuing the
/// path is taken. A start from `b` is the fallback.
fn finish_implicit(
    problem: &SdeProblem,
    config: &MethodConfig,
    x: &DVector<f64>,
    b: DVector<f64>,
) -> Result<DVector<f64>> {
    if config.theta == 0.0 {
        return Ok(b);
    }
    let h = config.theta * config.dt;
    implicit_solve_from(problem, h, &b, x, config.newton_tol, config.newton_max_iter)
        .or_else(|_| implicit_solve(problem, h, &b, config.newton_tol, config.newton_max_iter))
}

pub fn maruyama_step(
    problem: &SdeProblem,
    config: &MethodConfig,
    x: &DVector<f64>,
    dw: &DVector<f64>,
) -> Result<DVector<f64>> {
    let b = maruyama_explicit(problem, config, x, dw);
    finish_implicit(problem, config, x, b)
}

pub fn milstein_step(
    problem: &SdeProblem,
    config: &MethodConfig,
    x: &DVector<f64>,
    dw: &DVector<f64>,
) -> Result<DVector<f64>> {
    let corrections = problem.levy_free_correction(x)?;
    let products = milstein_products(dw, config.dt);
    let mut b = maruyama_explicit(problem, config, x, dw);
    let m = problem.noise_dim();
    for j1 in 0..m {
        for j2 in 0..m {
            b += corrections.get(j1, j2) * (0.5 * products[(j1, j2)]);
        }
    }
    finish_implicit(problem, config, x, b)
}

pub fn step(problem: &SdeProblem, config: &MethodConfig, x: &DVector<f64>, dw: &DVector<f64>) -> Result<DVector<f64>> {
    match config.scheme {
        Scheme::Maruyama => maruyama_step(problem, config, x, dw),
        Scheme::Milstein => milstein_step(problem, config, x, dw),
    }
}

fn check_grid(problem: &SdeProblem, config: &MethodConfig, grid: &NoiseGrid) -> Result<()> {
    config.validate()?;
    if grid.noise_dim != problem.noise_dim() {
        return Err(Error::InvalidArgument(
            "noise grid dimension does not match problem".into(),
        ));
    }
    if grid.dt != config.dt {
        return Err(Error::InvalidArgument("noise grid dt does not match method dt".into()));
    }
    if config.scheme == Scheme::Milstein && !problem.commutative_noise() {
        return Err(Error::Unsupported(alloc::format!(
            "Milstein scheme needs commutative noise; `{}` is not commutative",
            problem.label()
        )));
    }
    Ok(())
}

fn times(config: &MethodConfig, steps: usize) -> Vec<f64> {
    (0..=steps).map(|n| n as f64 * config.dt).collect()
}

/// Integrates a single path from `x0` over the grid.
pub fn integrate(
    problem: &SdeProblem,
    config: &MethodConfig,
    x0: &DVector<f64>,
    grid: &NoiseGrid,
) -> Result<Trajectory> {
    check_grid(problem, config, grid)?;
    let mut states = Vec::with_capacity(grid.steps + 1);
    states.push(x0.clone());
    for (n, dw) in grid.increments().iter().enumerate() {
        let next = step(problem, config, &states[n], dw).map_err(|e| e.at_step(grid.path_index, n))?;
        states.push(next);
    }
    Ok(Trajectory {
        times: times(config, grid.steps),
        states,
        config: *config,
        path_index: grid.path_index,
    })
}

/// Integrates two solutions driven by the same Wiener increments.
pub fn integrate_pair(
    problem: &SdeProblem,
    config: &MethodConfig,
    x0: &DVector<f64>,
    y0: &DVector<f64>,
    grid: &NoiseGrid,
) -> Result<(Trajectory, Trajectory)> {
    check_grid(problem, config, grid)?;
    let mut xs = Vec::with_capacity(grid.steps + 1);
    let mut ys = Vec::with_capacity(grid.steps + 1);
    xs.push(x0.clone());
    ys.push(y0.clone());
    for (n, dw) in grid.increments().iter().enumerate() {
        let x = step(problem, config, &xs[n], dw).map_err(|e| e.at_step(grid.path_index, n))?;
        let y = step(problem, config, &ys[n], dw).map_err(|e| e.at_step(grid.path_index, n))?;
        xs.push(x);
        ys.push(y);
    }
    let t = times(config, grid.steps);
    Ok((
        Trajectory {
            times: t.clone(),
            states: xs,
            config: *config,
            path_index: grid.path_index,
        },
        Trajectory {
            times: t,
            states: ys,
            config: *config,
            path_index: grid.path_index,
        },
    ))
}
