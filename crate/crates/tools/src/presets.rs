//! Named experiment presets reproducing the published figure setups.

use sde_contractivity::{builtin_problem, contractivity, Scheme};

use crate::config::ExperimentConfig;
use crate::error::CliError;

/// Stepsizes tried when a figure does not list its own.
pub const DEFAULT_SWEEP: [f64; 5] = [2.0, 1.0, 0.5, 0.25, 0.125];

#[derive(Debug, Clone, PartialEq)]
pub struct FigurePreset {
    pub name: &'static str,
    pub problem: &'static str,
    pub scheme: Scheme,
    pub theta: f64,
    pub description: &'static str,
}

pub const PRESETS: [FigurePreset; 8] = [
    FigurePreset {
        name: "fig1",
        problem: "problem1",
        scheme: Scheme::Maruyama,
        theta: 0.5,
        description: "stochastic trapezoidal method, problem1",
    },
    FigurePreset {
        name: "fig2",
        problem: "problem1",
        scheme: Scheme::Maruyama,
        theta: 1.0,
        description: "implicit Euler-Maruyama, problem1",
    },
    FigurePreset {
        name: "fig3",
        problem: "problem1",
        scheme: Scheme::Milstein,
        theta: 0.5,
        description: "theta-Milstein theta=1/2, problem1",
    },
    FigurePreset {
        name: "fig4",
        problem: "problem2",
        scheme: Scheme::Maruyama,
        theta: 0.5,
        description: "stochastic trapezoidal method, problem2",
    },
    FigurePreset {
        name: "fig5",
        problem: "problem2",
        scheme: Scheme::Maruyama,
        theta: 0.65,
        description: "theta-Maruyama theta=13/20, problem2",
    },
    FigurePreset {
        name: "fig6",
        problem: "problem3",
        scheme: Scheme::Maruyama,
        theta: 0.5,
        description: "stochastic trapezoidal method, problem3",
    },
    FigurePreset {
        name: "fig7",
        problem: "problem3",
        scheme: Scheme::Maruyama,
        theta: 1.0,
        description: "implicit Euler-Maruyama, problem3",
    },
    FigurePreset {
        name: "problem2-milstein",
        problem: "problem2",
        scheme: Scheme::Milstein,
        theta: 0.65,
        description: "theta-Milstein theta=13/20, problem2",
    },
];

impl FigurePreset {
    pub fn by_name(name: &str) -> Result<Self, CliError> {
        PRESETS.iter().find(|p| p.name == name).cloned().ok_or_else(|| {
            let names: Vec<&str> = PRESETS.iter().map(|p| p.name).collect();
            CliError::Usage(format!("unknown preset `{name}` (valid: {})", names.join(", ")))
        })
    }

    /// [`DEFAULT_SWEEP`] restricted to `dt ≤ 2·sup` of the preset region.
    pub fn dt_sweep(&self) -> Vec<f64> {
        let sup = builtin_problem(self.problem)
            .ok()
            .and_then(|p| p.constants().cloned())
            .and_then(|c| contractivity::region(self.scheme, &c, self.theta).ok())
            .map_or(f64::INFINITY, |r| r.sup());
        DEFAULT_SWEEP.iter().copied().filter(|dt| *dt <= 2.0 * sup).collect()
    }

    pub fn as_config(&self) -> ExperimentConfig {
        ExperimentConfig {
            problem: Some(self.problem.to_string()),
            scheme: Some(self.scheme),
            theta: Some(self.theta),
            dt: Some(self.dt_sweep()),
            ..Default::default()
        }
    }
}
