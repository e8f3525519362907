//! Rayon-backed ensemble runners.
//!
//! Each path is an independent work unit seeded by its own substream, and
//! the per-path results are reduced in path order by the core crate, so the
//! worker count never changes the output.

use rayon::prelude::*;
use rayon::ThreadPool;
use sde_contractivity::ensemble::{assemble, path_deviation, theoretical_exponent};
use sde_contractivity::integrators::{integrate, integrate_pair};
use sde_contractivity::{DVector, EnsembleResult, MethodConfig, NoiseGrid, Result, SdeProblem, Trajectory};

pub fn pool(workers: usize) -> ThreadPool {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .expect("thread pool")
}

pub fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

/// Parallel counterpart of `sde_contractivity::ensemble::run_ensemble`.
pub fn run_ensemble(
    problem: &SdeProblem,
    config: &MethodConfig,
    x0: &DVector<f64>,
    y0: &DVector<f64>,
    paths: usize,
    master_seed: u64,
    workers: usize,
) -> Result<EnsembleResult> {
    config.validate()?;
    let per_path = pool(workers).install(|| {
        (0..paths as u64)
            .into_par_iter()
            .map(|k| path_deviation(problem, config, x0, y0, master_seed, k))
            .collect::<Result<Vec<_>>>()
    })?;
    assemble(config, master_seed, &per_path, theoretical_exponent(problem, config))
}

fn grid(problem: &SdeProblem, config: &MethodConfig, seed: u64, path: u64) -> Result<NoiseGrid> {
    NoiseGrid::new(
        config.dt,
        config.steps_for(problem.horizon()),
        problem.noise_dim(),
        seed,
        path,
    )
}

/// `paths` single trajectories from `x0`.
pub fn simulate_paths(
    problem: &SdeProblem,
    config: &MethodConfig,
    x0: &DVector<f64>,
    paths: usize,
    seed: u64,
    workers: usize,
) -> Result<Vec<Trajectory>> {
    pool(workers).install(|| {
        (0..paths as u64)
            .into_par_iter()
            .map(|k| integrate(problem, config, x0, &grid(problem, config, seed, k)?))
            .collect()
    })
}

/// `paths` coupled pairs from `(x0, y0)`.
pub fn simulate_pairs(
    problem: &SdeProblem,
    config: &MethodConfig,
    x0: &DVector<f64>,
    y0: &DVector<f64>,
    paths: usize,
    seed: u64,
    workers: usize,
) -> Result<Vec<(Trajectory, Trajectory)>> {
    pool(workers).install(|| {
        (0..paths as u64)
            .into_par_iter()
            .map(|k| integrate_pair(problem, config, x0, y0, &grid(problem, config, seed, k)?))
            .collect()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use sde_contractivity::ensemble;
    use sde_contractivity::model::problem1;
    use sde_contractivity::Scheme;

    #[test]
    fn matches_sequential_runner_bit_for_bit() {
        let p = problem1();
        let c = MethodConfig::new(Scheme::Maruyama, 0.5, 0.25).unwrap();
        let (x0, y0) = p.initial_pair();
        let seq = ensemble::run_ensemble(&p, &c, x0, y0, 64, 42).unwrap();
        for workers in [1, 3, 8] {
            assert_eq!(run_ensemble(&p, &c, x0, y0, 64, 42, workers).unwrap(), seq);
        }
    }
}
