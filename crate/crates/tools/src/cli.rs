//! Argument parsing and the `sdecontract` subcommands.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::json;

use sde_contractivity::contractivity::{self, linear_ms_stable, Region};
use sde_contractivity::ensemble::{contractivity_experiment_with, ExperimentTable};
use sde_contractivity::estimation::{estimate_constants, ConstantEstimates, SampleBox};
use sde_contractivity::{
    builtin_problem, Complex64, EstimationConfig, FitWindow, MethodConfig, MuRule, NoiseGrid, ProblemConstants,
    Provenance, Scheme, SdeProblem,
};

use crate::config::{
    ConstantOverrides, ConstantsSource, ExperimentConfig, OutputFormat, ResolvedConfig, StabilityGrid,
};
use crate::error::CliError;
use crate::output::{self, num, opt_num, tag};
use crate::parallel;
use crate::rational::{format_exact, parse_number};

/// Method used to generate the trajectories behind estimated constants.
pub const ESTIMATION_THETA: f64 = 1.0;
pub const ESTIMATION_DT: f64 = 0.25;

#[derive(Debug, Parser)]
#[command(
    name = "sdecontract",
    version,
    about = "Mean-square contractivity of stochastic theta-methods"
)]
pub struct Cli {
    /// Master seed of every random stream [default: 42]
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; affects wall time only [default: all cores]
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// JSON configuration, or a CSV written by this tool
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory [default: $SDECONTRACT_OUT_DIR, else the working directory]
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate one coupled path pair and write it as CSV
    Simulate(RunArgs),
    /// Print the stepsize region of mean-square contractivity
    Region {
        #[command(flatten)]
        run: RunArgs,
        /// Print a JSON report instead of text
        #[arg(long)]
        json: bool,
    },
    /// Run coupled-path ensembles over a stepsize sweep
    Experiment(RunArgs),
    /// Estimate L, mu, M (and M_tilde for milstein) from simulated paths
    Estimate(RunArgs),
    /// Rasterize linear mean-square stability over (dt*lambda, dt*sigma^2)
    LinearStability {
        #[command(flatten)]
        run: RunArgs,
        /// Range of dt*lambda, as `lo,hi`
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, value_parser = number)]
        x_range: Option<Vec<f64>>,
        /// Range of dt*sigma^2, as `lo,hi`
        #[arg(long, value_delimiter = ',', value_parser = number)]
        y_range: Option<Vec<f64>>,
        #[arg(long)]
        nx: Option<usize>,
        #[arg(long)]
        ny: Option<usize>,
    },
}

/// Options shared by all subcommands. Numbers accept fractions such as `13/20`.
#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// Named figure setup (fig1 … fig7, problem2-milstein)
    #[arg(long)]
    pub preset: Option<String>,
    /// problem1, problem2, problem3 or linear
    #[arg(long)]
    pub problem: Option<String>,
    /// maruyama or milstein
    #[arg(long, value_parser = scheme)]
    pub scheme: Option<Scheme>,
    /// Implicitness parameter in [0,1] [default: 1/2]
    #[arg(long, allow_hyphen_values = true, value_parser = number)]
    pub theta: Option<f64>,
    /// Stepsizes, comma separated
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, value_parser = number)]
    pub dt: Option<Vec<f64>>,
    /// Number of paths [default: 2000]
    #[arg(long)]
    pub paths: Option<usize>,
    /// Number of sampled point pairs for L and mu [default: 10000]
    #[arg(long)]
    pub pairs: Option<usize>,
    /// Final time
    #[arg(long, allow_hyphen_values = true, value_parser = number)]
    pub horizon: Option<f64>,
    /// Where the constants come from [default: preset]
    #[arg(long, value_enum)]
    pub constants: Option<ConstantsSource>,
    /// JSON file with L, mu, M and optionally M_tilde
    #[arg(long)]
    pub constants_file: Option<PathBuf>,
    /// Override L
    #[arg(long, allow_hyphen_values = true, value_parser = number)]
    pub lipschitz: Option<f64>,
    /// Override mu
    #[arg(long, allow_hyphen_values = true, value_parser = number)]
    pub mu: Option<f64>,
    /// Override M
    #[arg(long = "m", allow_hyphen_values = true, value_parser = number)]
    pub drift_moment: Option<f64>,
    /// Override M_tilde
    #[arg(long = "mtilde", allow_hyphen_values = true, value_parser = number)]
    pub milstein_moment: Option<f64>,
    /// Reduction of the one-sided quotients: max or min [default: max]
    #[arg(long, value_parser = mu_rule)]
    pub mu_rule: Option<MuRule>,
    /// Estimation box `lo,hi` applied to every coordinate
    #[arg(long = "box", value_delimiter = ',', allow_hyphen_values = true, value_parser = number)]
    pub sample_box: Option<Vec<f64>>,
    /// Output formats, comma separated: csv, json
    #[arg(long, value_delimiter = ',', value_enum)]
    pub format: Option<Vec<OutputFormat>>,
}

fn number(s: &str) -> Result<f64, String> {
    parse_number(s)
}

fn scheme(s: &str) -> Result<Scheme, String> {
    s.parse().map_err(|e: sde_contractivity::Error| e.to_string())
}

fn mu_rule(s: &str) -> Result<MuRule, String> {
    s.parse().map_err(|e: sde_contractivity::Error| e.to_string())
}

fn pair(flag: &str, v: &Option<Vec<f64>>) -> Result<Option<[f64; 2]>, CliError> {
    match v.as_deref() {
        None => Ok(None),
        Some(&[lo, hi]) => Ok(Some([lo, hi])),
        Some(_) => Err(CliError::Usage(format!(
            "{flag} takes two comma-separated numbers `lo,hi`"
        ))),
    }
}

impl RunArgs {
    fn to_config(&self) -> Result<ExperimentConfig, CliError> {
        let overrides = ConstantOverrides {
            lipschitz: self.lipschitz,
            mu: self.mu,
            drift_moment: self.drift_moment,
            milstein_moment: self.milstein_moment,
        };
        Ok(ExperimentConfig {
            preset: self.preset.clone(),
            problem: self.problem.clone(),
            scheme: self.scheme,
            theta: self.theta,
            dt: self.dt.clone(),
            paths: self.paths,
            pairs: self.pairs,
            horizon: self.horizon,
            constants: self.constants,
            constants_file: self.constants_file.clone(),
            overrides: (!overrides.is_empty()).then_some(overrides),
            mu_rule: self.mu_rule,
            sample_box: pair("--box", &self.sample_box)?,
            formats: self.format.clone(),
            ..Default::default()
        })
    }
}

impl Cli {
    fn resolve(&self, run: &RunArgs, grid: Option<StabilityGrid>) -> Result<ResolvedConfig, CliError> {
        let file = self.config.as_deref().map(output::read_config).transpose()?;
        let mut flags = run.to_config()?;
        flags.seed = self.seed;
        flags.output_dir = self.out_dir.clone();
        if let Some(g) = grid {
            let base = file.as_ref().and_then(|f| f.grid).unwrap_or_default();
            flags.grid = Some(merge_grid(base, g));
        }
        ResolvedConfig::resolve(file, flags)
    }

    fn workers(&self) -> Result<usize, CliError> {
        match self.workers {
            Some(0) => Err(CliError::Usage("--workers must be at least 1".into())),
            Some(w) => Ok(w),
            None => Ok(parallel::default_workers()),
        }
    }
}

/// Grid flags arrive as a partial grid: NaN bounds and zero counts mean "unset".
fn merge_grid(base: StabilityGrid, flags: StabilityGrid) -> StabilityGrid {
    StabilityGrid {
        x: if flags.x[0].is_nan() { base.x } else { flags.x },
        y: if flags.y[0].is_nan() { base.y } else { flags.y },
        nx: if flags.nx == 0 { base.nx } else { flags.nx },
        ny: if flags.ny == 0 { base.ny } else { flags.ny },
    }
}

/// Runs a parsed command line, writing human-readable output to stdout.
pub fn run(cli: &Cli) -> Result<(), CliError> {
    let workers = cli.workers()?;
    match &cli.command {
        Command::Simulate(run) => cmd_simulate(&cli.resolve(run, None)?),
        Command::Region { run, json } => cmd_region(&cli.resolve(run, None)?, *json, workers),
        Command::Experiment(run) => cmd_experiment(&cli.resolve(run, None)?, workers).map(|_| ()),
        Command::Estimate(run) => cmd_estimate(&cli.resolve(run, None)?, workers),
        Command::LinearStability {
            run,
            x_range,
            y_range,
            nx,
            ny,
        } => {
            let (x, y) = (pair("--x-range", x_range)?, pair("--y-range", y_range)?);
            let any = x_range.is_some() || y_range.is_some() || nx.is_some() || ny.is_some();
            let grid = any.then(|| StabilityGrid {
                x: x.unwrap_or([f64::NAN; 2]),
                y: y.unwrap_or([f64::NAN; 2]),
                nx: nx.unwrap_or(0),
                ny: ny.unwrap_or(0),
            });
            if *nx == Some(0) || *ny == Some(0) {
                return Err(CliError::Usage("--nx and --ny must be at least 1".into()));
            }
            cmd_linear_stability(&cli.resolve(run, grid)?)
        }
    }
}

pub fn problem_for(config: &ResolvedConfig) -> Result<SdeProblem, CliError> {
    Ok(builtin_problem(&config.problem)?.with_horizon(config.horizon)?)
}

/// Constants file layout; extra keys (such as the output of `estimate`) are ignored.
#[derive(Deserialize)]
struct ConstantsFile {
    #[serde(rename = "L")]
    lipschitz: f64,
    mu: f64,
    #[serde(rename = "M")]
    drift_moment: f64,
    #[serde(rename = "M_tilde", default)]
    milstein_moment: Option<f64>,
}

fn load_constants(path: &Path) -> Result<ProblemConstants, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Runtime(format!("cannot read constants {}: {e}", path.display())))?;
    let f: ConstantsFile = serde_json::from_str(&text)
        .map_err(|e| CliError::Runtime(format!("invalid constants {}: {e}", path.display())))?;
    Ok(ProblemConstants::new(
        f.lipschitz,
        f.mu,
        f.drift_moment,
        f.milstein_moment,
        Provenance::UserSupplied,
    )?)
}

/// Simulates the estimation ensemble and runs the estimators. `M̃` is only
/// estimated for the Milstein scheme.
pub fn estimate(config: &ResolvedConfig, problem: &SdeProblem, workers: usize) -> Result<ConstantEstimates, CliError> {
    let method = MethodConfig::new(Scheme::Maruyama, ESTIMATION_THETA, ESTIMATION_DT)?;
    let (x0, y0) = problem.initial_pair();
    let paths = parallel::simulate_paths(problem, &method, x0, config.paths, config.seed, workers)?;
    let pairs = match config.scheme {
        Scheme::Milstein => Some(parallel::simulate_pairs(
            problem,
            &method,
            x0,
            y0,
            config.paths,
            config.seed,
            workers,
        )?),
        Scheme::Maruyama => None,
    };
    let sample_box = config
        .sample_box
        .map(|[lo, hi]| SampleBox::cube(problem.dim(), lo, hi))
        .transpose()?;
    let est = EstimationConfig {
        paths: config.paths,
        pairs: config.pairs,
        seed: config.seed,
        mu_rule: config.mu_rule,
        ..EstimationConfig::default()
    };
    Ok(estimate_constants(problem, &paths, pairs.as_deref(), sample_box, &est)?)
}

/// Constants from the configured source with explicit overrides applied.
pub fn resolve_constants(
    config: &ResolvedConfig,
    problem: &SdeProblem,
    workers: usize,
) -> Result<ProblemConstants, CliError> {
    let mut c = match config.constants {
        ConstantsSource::Preset => problem
            .constants()
            .cloned()
            .ok_or_else(|| CliError::Runtime(format!("{} has no preset constants", config.problem)))?,
        ConstantsSource::Estimated => estimate(config, problem, workers)?.to_constants()?,
        ConstantsSource::File => load_constants(config.constants_file.as_deref().expect("checked at resolve"))?,
    };
    let o = config.overrides;
    let user = Provenance::UserSupplied;
    if let Some(v) = o.lipschitz {
        c.set_lipschitz(v, user)?;
    }
    if let Some(v) = o.mu {
        c.set_one_sided(v, user)?;
    }
    if let Some(v) = o.drift_moment {
        c.set_drift_moment(v, user)?;
    }
    if let Some(v) = o.milstein_moment {
        c.set_milstein_moment(v, user)?;
    }
    Ok(c)
}

fn single_dt(config: &ResolvedConfig) -> Result<f64, CliError> {
    match config.dt.as_slice() {
        [dt] => Ok(*dt),
        _ => Err(CliError::Usage("this command takes exactly one dt".into())),
    }
}

fn stem(config: &ResolvedConfig) -> String {
    config
        .preset
        .clone()
        .unwrap_or_else(|| format!("{}_{}_theta{}", config.problem, config.scheme, tag(config.theta)))
}

fn cmd_simulate(config: &ResolvedConfig) -> Result<(), CliError> {
    let problem = problem_for(config)?;
    let dt = single_dt(config)?;
    let method = MethodConfig::new(config.scheme, config.theta, dt)?;
    let grid = NoiseGrid::new(
        dt,
        method.steps_for(problem.horizon()),
        problem.noise_dim(),
        config.seed,
        0,
    )?;
    let (x0, y0) = problem.initial_pair();
    let (x, y) = sde_contractivity::integrators::integrate_pair(&problem, &method, x0, y0, &grid)?;

    let n = problem.dim();
    let mut header = vec!["t".to_string()];
    header.extend((1..=n).map(|i| format!("x_{i}")));
    header.extend((1..=n).map(|i| format!("y_{i}")));
    let rows = (0..x.times.len()).map(|k| {
        let mut row = vec![num(x.times[k])];
        row.extend(x.states[k].iter().map(|v| num(*v)));
        row.extend(y.states[k].iter().map(|v| num(*v)));
        row
    });
    let path = output::in_dir(config, format!("simulate_{}_dt{}.csv", stem(config), tag(dt)));
    output::write_csv(&path, config, &header, rows)?;
    println!("{}", path.display());
    Ok(())
}

pub fn region_text(region: &Region) -> String {
    match region {
        Region::Bounded(s) => format!("R = (0, {})", format_exact(*s)),
        Region::Unbounded => "R = (0, ∞), unconditional".to_string(),
        Region::Empty => "R = ∅, not mean-square contractive".to_string(),
    }
}

fn cmd_region(config: &ResolvedConfig, as_json: bool, workers: usize) -> Result<(), CliError> {
    let problem = problem_for(config)?;
    let c = resolve_constants(config, &problem, workers)?;
    let region = contractivity::region(config.scheme, &c, config.theta)?;
    if as_json {
        let report = json!({
            "config": config.embedded(),
            "problem": config.problem,
            "scheme": config.scheme,
            "theta": config.theta,
            "constants": c,
            "region": region,
            "sup": region.sup().is_finite().then(|| region.sup()),
            "sup_exact": format_exact(region.sup()),
            "unconditional": region.is_unconditional(),
            "contractive_problem": !matches!(region, Region::Empty),
            "text": region_text(&region),
        });
        println!("{}", serde_json::to_string_pretty(&report)?);
        return Ok(());
    }
    let p = c.provenance();
    let mt = c.milstein_moment().map_or("unset".to_string(), format_exact);
    println!(
        "{} {} theta = {}",
        config.problem,
        config.scheme,
        format_exact(config.theta)
    );
    println!(
        "L = {} ({}), mu = {} ({}), M = {} ({}), M_tilde = {} ({})",
        format_exact(c.lipschitz()),
        p.lipschitz,
        format_exact(c.one_sided()),
        p.one_sided,
        format_exact(c.drift_moment()),
        p.drift_moment,
        mt,
        p.milstein_moment
    );
    println!("alpha = {}", format_exact(c.alpha()));
    println!("{}", region_text(&region));
    Ok(())
}

#[derive(Debug, Serialize)]
struct ManifestRow {
    dt: f64,
    inside_region: bool,
    theoretical_exponent: Option<f64>,
    fitted_slope: Option<f64>,
    fit_window: Option<FitWindow>,
    note: Option<String>,
    csv: Option<String>,
}

/// Output of [`cmd_experiment`]: the table plus the files written.
pub struct ExperimentOutput {
    pub table: ExperimentTable,
    pub files: Vec<PathBuf>,
}

pub fn cmd_experiment(config: &ResolvedConfig, workers: usize) -> Result<ExperimentOutput, CliError> {
    let problem = problem_for(config)?;
    let constants = resolve_constants(config, &problem, workers)?;
    let mut runner = |p: &SdeProblem, m: &MethodConfig, x0: &_, y0: &_, paths: usize, seed: u64| {
        parallel::run_ensemble(p, m, x0, y0, paths, seed, workers)
    };
    let table = contractivity_experiment_with(
        &problem,
        &constants,
        config.scheme,
        config.theta,
        &config.dt,
        config.paths,
        config.seed,
        &mut runner,
    )?;

    let stem = stem(config);
    let mut files = Vec::new();
    let mut rows = Vec::new();
    for row in &table.rows {
        let mut csv = None;
        if let (Some(result), true) = (&row.result, config.wants(OutputFormat::Csv)) {
            let name = format!("{stem}_dt{}.csv", tag(row.dt));
            let path = output::in_dir(config, name.clone());
            let bound = result.theoretical_bound();
            let header: Vec<String> = ["t", "msd", "log_msd", "theoretical_bound", "std_err"]
                .map(String::from)
                .to_vec();
            let lines = (0..result.times.len()).map(|n| {
                vec![
                    num(result.times[n]),
                    num(result.msd[n]),
                    num(result.msd[n].ln()),
                    opt_num(bound.as_ref().map(|b| b[n])),
                    num(result.std_err[n]),
                ]
            });
            output::write_csv(&path, config, &header, lines)?;
            files.push(path);
            csv = Some(name);
        }
        rows.push(ManifestRow {
            dt: row.dt,
            inside_region: row.inside_region,
            theoretical_exponent: row.theoretical_exponent,
            fitted_slope: row.fitted_slope,
            fit_window: row.result.as_ref().and_then(|r| r.fit_window),
            note: row.note.clone(),
            csv,
        });
    }
    if config.wants(OutputFormat::Json) {
        let manifest = json!({
            "config": config.embedded(),
            "problem": table.problem,
            "scheme": table.scheme,
            "theta": table.theta,
            "constants": table.constants,
            "region": table.region,
            "region_text": table.region.as_ref().map(region_text),
            "paths": table.paths,
            "master_seed": table.master_seed,
            "fit_method": table.fit_method,
            "rows": rows,
        });
        let path = output::in_dir(config, format!("{stem}_manifest.json"));
        output::write_json(&path, &manifest)?;
        files.push(path);
    }

    println!(
        "{} {} theta = {}",
        table.problem,
        table.scheme,
        format_exact(table.theta)
    );
    if let Some(r) = &table.region {
        println!("{}", region_text(r));
    }
    println!(
        "{:>10} {:>7} {:>14} {:>14}  note",
        "dt", "inside", "exponent", "fitted slope"
    );
    for r in &rows {
        println!(
            "{:>10} {:>7} {:>14} {:>14}  {}",
            r.dt,
            r.inside_region,
            r.theoretical_exponent.map_or("-".into(), |v| format!("{v:.6}")),
            r.fitted_slope.map_or("-".into(), |v| format!("{v:.6}")),
            r.note.as_deref().unwrap_or("")
        );
    }
    for f in &files {
        println!("wrote {}", f.display());
    }
    Ok(ExperimentOutput { table, files })
}

fn cmd_estimate(config: &ResolvedConfig, workers: usize) -> Result<(), CliError> {
    let problem = problem_for(config)?;
    let e = estimate(config, &problem, workers)?;
    let report = json!({
        "L": e.lipschitz,
        "mu": e.one_sided,
        "M": e.drift_moment,
        "M_tilde": e.milstein_moment,
        "box": e.sample_box,
        "config": config.embedded(),
        "provenance": Provenance::Estimated,
    });
    println!("{}", serde_json::to_string_pretty(&report)?);
    if config.wants(OutputFormat::Json) {
        let path = output::in_dir(config, format!("estimate_{}_{}.json", config.problem, config.scheme));
        output::write_json(&path, &report)?;
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}

fn cmd_linear_stability(config: &ResolvedConfig) -> Result<(), CliError> {
    let g = config.grid;
    let xs = StabilityGrid::axis(g.x, g.nx);
    let ys = StabilityGrid::axis(g.y, g.ny);
    let mut stable = 0usize;
    let mut lines = Vec::with_capacity(xs.len() * ys.len());
    for &y in &ys {
        for &x in &xs {
            // The factor depends on dt only through dt*lambda and dt*sigma^2.
            let s = linear_ms_stable(
                config.scheme,
                config.theta,
                1.0,
                Complex64::new(x, 0.0),
                Complex64::new(y.sqrt(), 0.0),
            );
            let (factor, ok) = s.map_or((f64::INFINITY, false), |s| (s.factor, s.stable));
            stable += usize::from(ok);
            lines.push(vec![num(x), num(y), num(factor), ok.to_string()]);
        }
    }
    let header = ["x", "y", "factor", "stable"].map(String::from).to_vec();
    let name = format!("linear_stability_{}_theta{}.csv", config.scheme, tag(config.theta));
    let path = output::in_dir(config, name);
    output::write_csv(&path, config, &header, lines)?;
    println!("{stable} of {} cells mean-square stable", xs.len() * ys.len());
    println!("wrote {}", path.display());
    Ok(())
}
