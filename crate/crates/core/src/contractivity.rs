//! Closed-form mean-square contractivity quantities for θ-methods.
//!
//! For a problem with constants `(L, μ, M, M̃)` and `α = 2μ + L`, the
//! deviation of two numerical solutions obeys
//! `E|X_n − Y_n|² ≤ E|X_0 − Y_0|² exp(r·t_n)` with `r = ln(β)/Δt`
//! (θ-Maruyama) or `r = ln(γ)/Δt` (θ-Milstein), where
//!
//! ```text
//! β(θ,Δt) = 1 + Δt (α + (1−θ)² M Δt) / (1 − 2θμΔt)
//! γ(θ,Δt) = β(θ,Δt) + 3 M̃ Δt² / (4 (1 − 2θμΔt))
//! ```
//!
//! The stepsize region is where this exponent is negative. The module also
//! carries the mean-square stability factors of both schemes on the linear
//! test equation `dX = λX dt + σX dW`, used to check that the nonlinear
//! stepsize restrictions are compatible with linear stability.

use alloc::vec::Vec;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::integrators::Scheme;
use crate::model::ProblemConstants;

fn check_inputs(theta: f64, dt: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&theta) {
        return Err(Error::InvalidArgument(alloc::format!(
            "theta must lie in [0,1], got {theta}"
        )));
    }
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::InvalidArgument(alloc::format!("dt must be positive, got {dt}")));
    }
    Ok(())
}

fn implicit_denominator(c: &ProblemConstants, theta: f64, dt: f64) -> Result<f64> {
    check_inputs(theta, dt)?;
    let d = 1.0 - 2.0 * theta * c.one_sided() * dt;
    if d <= 0.0 {
        return Err(Error::Domain(alloc::format!(
            "1 - 2*theta*mu*dt = {d} is not positive (theta = {theta}, dt = {dt})"
        )));
    }
    Ok(d)
}

fn milstein_moment(c: &ProblemConstants) -> Result<f64> {
    c.milstein_moment()
        .ok_or_else(|| Error::Capability("the Milstein analysis needs M_tilde; estimate or supply it".into()))
}

pub fn beta_maruyama(c: &ProblemConstants, theta: f64, dt: f64) -> Result<f64> {
    let d = implicit_denominator(c, theta, dt)?;
    let w = 1.0 - theta;
    Ok(1.0 + (c.alpha() + w * w * c.drift_moment() * dt) / d * dt)
}

pub fn gamma_milstein(c: &ProblemConstants, theta: f64, dt: f64) -> Result<f64> {
    let mt = milstein_moment(c)?;
    let d = implicit_denominator(c, theta, dt)?;
    Ok(beta_maruyama(c, theta, dt)? + 3.0 * mt * dt * dt / (4.0 * d))
}

fn log_rate(factor: f64, dt: f64) -> Result<f64> {
    if factor <= 0.0 {
        return Err(Error::Domain(alloc::format!(
            "growth factor {factor} is not positive; exponent undefined (non-contractive)"
        )));
    }
    Ok(libm::log(factor) / dt)
}

/// `ν(θ,Δt) = ln β / Δt`.
pub fn nu_maruyama(c: &ProblemConstants, theta: f64, dt: f64) -> Result<f64> {
    log_rate(beta_maruyama(c, theta, dt)?, dt)
}

/// `ε(θ,Δt) = ln γ / Δt`.
pub fn eps_milstein(c: &ProblemConstants, theta: f64, dt: f64) -> Result<f64> {
    log_rate(gamma_milstein(c, theta, dt)?, dt)
}

/// `β` for Maruyama, `γ` for Milstein.
pub fn growth_factor(scheme: Scheme, c: &ProblemConstants, theta: f64, dt: f64) -> Result<f64> {
    match scheme {
        Scheme::Maruyama => beta_maruyama(c, theta, dt),
        Scheme::Milstein => gamma_milstein(c, theta, dt),
    }
}

/// `ν` for Maruyama, `ε` for Milstein.
pub fn exponent(scheme: Scheme, c: &ProblemConstants, theta: f64, dt: f64) -> Result<f64> {
    log_rate(growth_factor(scheme, c, theta, dt)?, dt)
}

/// Stepsize region `(0, sup)` on which the contractivity exponent is negative.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Region {
    /// `α ≥ 0`: the problem itself is not mean-square contractive.
    Empty,
    Bounded(f64),
    Unbounded,
}

impl Region {
    pub fn sup(&self) -> f64 {
        match self {
            Region::Empty => 0.0,
            Region::Bounded(s) => *s,
            Region::Unbounded => f64::INFINITY,
        }
    }

    pub fn contains(&self, dt: f64) -> bool {
        dt > 0.0 && dt < self.sup()
    }

    pub fn is_unconditional(&self) -> bool {
        matches!(self, Region::Unbounded)
    }

    /// `count` evenly spaced interior points `sup·k/(count+1)`; for an
    /// unbounded region the points `1, 2, …, count`.
    pub fn interior_samples(&self, count: usize) -> Vec<f64> {
        match self {
            Region::Empty => Vec::new(),
            Region::Bounded(s) => (1..=count).map(|k| s * k as f64 / (count + 1) as f64).collect(),
            Region::Unbounded => (1..=count).map(|k| k as f64).collect(),
        }
    }
}

pub fn region(scheme: Scheme, c: &ProblemConstants, theta: f64) -> Result<Region> {
    if !(0.0..=1.0).contains(&theta) {
        return Err(Error::InvalidArgument(alloc::format!(
            "theta must lie in [0,1], got {theta}"
        )));
    }
    let alpha = c.alpha();
    let w = 1.0 - theta;
    let denominator = match scheme {
        Scheme::Maruyama => w * w * c.drift_moment(),
        Scheme::Milstein => 4.0 * w * w * c.drift_moment() + 3.0 * milstein_moment(c)?,
    };
    if alpha >= 0.0 {
        return Ok(Region::Empty);
    }
    if denominator == 0.0 {
        return Ok(Region::Unbounded);
    }
    let numerator = match scheme {
        Scheme::Maruyama => -alpha,
        Scheme::Milstein => -4.0 * alpha,
    };
    Ok(Region::Bounded(numerator / denominator))
}

/// First-order coefficient `c₁` in `exponent(Δt) = α + c₁Δt + O(Δt²)`:
/// `2αμθ + (1−θ)²M − α²/2`, plus `3M̃/4` for Milstein.
pub fn expansion_coefficient(scheme: Scheme, c: &ProblemConstants, theta: f64) -> Result<f64> {
    let alpha = c.alpha();
    let w = 1.0 - theta;
    let base = 2.0 * alpha * c.one_sided() * theta + w * w * c.drift_moment() - alpha * alpha / 2.0;
    match scheme {
        Scheme::Maruyama => Ok(base),
        Scheme::Milstein => Ok(base + 0.75 * milstein_moment(c)?),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LinearStability {
    /// Mean-square amplification factor per step.
    pub factor: f64,
    pub stable: bool,
}

/// Mean-square amplification of the θ-method on `dX = λX dt + σX dW`.
///
/// Maruyama: `(|1 + (1−θ)Δtλ|² + Δt|σ|²) / |1 − θΔtλ|²`.
/// Milstein: `|b² + bσ²Δt/D + (σ²Δt + ¾σ⁴Δt²)/D²|` with `D = 1 − θΔtλ` and
/// `b = (1 + (1−θ)Δtλ − ½σ²Δt)/D`.
pub fn linear_ms_stable(
    scheme: Scheme,
    theta: f64,
    dt: f64,
    lambda: Complex64,
    sigma: Complex64,
) -> Result<LinearStability> {
    check_inputs(theta, dt)?;
    let one = Complex64::new(1.0, 0.0);
    let d = one - lambda * (theta * dt);
    if d.norm_sqr() == 0.0 {
        return Err(Error::Domain("1 - theta*dt*lambda vanishes".into()));
    }
    let explicit = one + lambda * ((1.0 - theta) * dt);
    let factor = match scheme {
        Scheme::Maruyama => (explicit.norm_sqr() + dt * sigma.norm_sqr()) / d.norm_sqr(),
        Scheme::Milstein => {
            let s2 = sigma * sigma;
            let b = (explicit - s2 * (0.5 * dt)) / d;
            (b * b + b * s2 * dt / d + (s2 * dt + s2 * s2 * (0.75 * dt * dt)) / (d * d)).norm()
        }
    };
    Ok(LinearStability {
        factor,
        stable: factor < 1.0,
    })
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CompatibilityViolation {
    pub dt: f64,
    pub factor: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CompatibilityReport {
    pub checked: usize,
    /// Samples outside the contractivity region, not evaluated.
    pub skipped: usize,
    pub violations: Vec<CompatibilityViolation>,
}

impl CompatibilityReport {
    pub fn compatible(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks linear mean-square stability of the surrogate `(λ, σ)` at every
/// sampled stepsize that lies inside the nonlinear contractivity region.
pub fn compatibility_check(
    scheme: Scheme,
    c: &ProblemConstants,
    theta: f64,
    dt_samples: &[f64],
    lambda: Complex64,
    sigma: Complex64,
) -> Result<CompatibilityReport> {
    let r = region(scheme, c, theta)?;
    let mut report = CompatibilityReport {
        checked: 0,
        skipped: 0,
        violations: Vec::new(),
    };
    for &dt in dt_samples {
        if !r.contains(dt) {
            report.skipped += 1;
            continue;
        }
        report.checked += 1;
        let s = linear_ms_stable(scheme, theta, dt, lambda, sigma)?;
        if !s.stable {
            report.violations.push(CompatibilityViolation { dt, factor: s.factor });
        }
    }
    Ok(report)
}

/// Everything known about one `(scheme, θ, Δt)` choice for a constant set.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ContractivityReport {
    pub scheme: Scheme,
    pub theta: f64,
    pub dt: f64,
    pub constants: ProblemConstants,
    /// `β` (Maruyama) or `γ` (Milstein).
    pub growth_factor: f64,
    /// `ν` or `ε`; `None` when the growth factor is not positive.
    pub exponent: Option<f64>,
    pub region: Region,
    pub contractive: bool,
    pub unconditional: bool,
    pub linear_compatible: Option<bool>,
}

/// Builds a [`ContractivityReport`]; `surrogate` is an optional linear test
/// equation `(λ, σ)` whose stability at `dt` is recorded.
pub fn analyze(
    scheme: Scheme,
    c: &ProblemConstants,
    theta: f64,
    dt: f64,
    surrogate: Option<(Complex64, Complex64)>,
) -> Result<ContractivityReport> {
    let growth = growth_factor(scheme, c, theta, dt)?;
    let exponent = log_rate(growth, dt).ok();
    let region = region(scheme, c, theta)?;
    let linear_compatible = match surrogate {
        Some((lambda, sigma)) => Some(linear_ms_stable(scheme, theta, dt, lambda, sigma)?.stable),
        None => None,
    };
    Ok(ContractivityReport {
        scheme,
        theta,
        dt,
        constants: c.clone(),
        growth_factor: growth,
        exponent,
        region,
        contractive: growth > 0.0 && growth < 1.0,
        unconditional: region.is_unconditional(),
        linear_compatible,
    })
}
