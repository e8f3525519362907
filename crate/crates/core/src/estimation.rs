//! Sampling estimators for the problem constants `L`, `μ`, `M` and `M̃`.
//!
//! `L` and `μ` are the largest (or, for `μ`, optionally smallest) difference
//! quotients over `Q` uniform point pairs drawn from the box spanned by a
//! simulated ensemble. `M` and `M̃` are ensemble moments along the paths.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};
use crate::integrators::Trajectory;
use crate::model::{ProblemConstants, Provenance, SdeProblem};
use crate::numeric::mean;
use crate::wiener::path_rng;

/// Substream reserved for pair sampling, disjoint from the path streams.
const PAIR_STREAM: u64 = u64::MAX;
const MAX_RESAMPLES: usize = 10_000;
const MIN_DENOMINATOR: f64 = 1e-300;

/// Componentwise bounds `[a_i, b_i]`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SampleBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl SampleBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(Error::InvalidArgument(
                "box bounds must be nonempty and of equal length".into(),
            ));
        }
        if lower
            .iter()
            .zip(&upper)
            .any(|(a, b)| !(a <= b) || !a.is_finite() || !b.is_finite())
        {
            return Err(Error::InvalidArgument(
                "box bounds must be finite with lower <= upper".into(),
            ));
        }
        Ok(Self { lower, upper })
    }

    /// `[lo, hi]ⁿ`.
    pub fn cube(n: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![lo; n], vec![hi; n])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn is_degenerate(&self) -> bool {
        self.lower.iter().zip(&self.upper).all(|(a, b)| a == b)
    }

    pub fn contains(&self, x: &DVector<f64>) -> bool {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(v, (a, b))| *a <= *v && *v <= *b)
    }

    fn sample(&self, rng: &mut ChaCha12Rng) -> DVector<f64> {
        DVector::from_iterator(
            self.dim(),
            self.lower.iter().zip(&self.upper).map(|(a, b)| {
                let u: f64 = rng.random();
                a + (b - a) * u
            }),
        )
    }
}

/// Componentwise min/max over every state of every trajectory.
pub fn sample_box<'a>(trajectories: impl IntoIterator<Item = &'a Trajectory>) -> Result<SampleBox> {
    let mut bounds: Option<(Vec<f64>, Vec<f64>)> = None;
    for t in trajectories {
        for x in &t.states {
            let (lo, hi) = bounds.get_or_insert_with(|| (x.iter().copied().collect(), x.iter().copied().collect()));
            if x.len() != lo.len() {
                return Err(Error::InvalidArgument(
                    "trajectories have inconsistent dimension".into(),
                ));
            }
            for (i, v) in x.iter().enumerate() {
                lo[i] = lo[i].min(*v);
                hi[i] = hi[i].max(*v);
            }
        }
    }
    let (lo, hi) = bounds.ok_or_else(|| Error::InvalidArgument("no trajectory states to bound".into()))?;
    SampleBox::new(lo, hi)
}

/// Reduction applied to the one-sided quotients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum MuRule {
    /// Supremum of the quotients: an upper bound in the sense of the one-sided condition.
    #[default]
    Max,
    /// Smallest quotient.
    Min,
}

impl fmt::Display for MuRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MuRule::Max => "max",
            MuRule::Min => "min",
        })
    }
}

impl core::str::FromStr for MuRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "max" => Ok(MuRule::Max),
            "min" => Ok(MuRule::Min),
            _ => Err(Error::InvalidArgument(alloc::format!(
                "unknown mu rule `{s}` (expected min or max)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EstimationConfig {
    /// Number of simulated paths `P`.
    pub paths: usize,
    /// Number of point pairs `Q`.
    pub pairs: usize,
    pub seed: u64,
    pub degeneracy_eps: f64,
    pub mu_rule: MuRule,
}

impl Default for EstimationConfig {
    fn default() -> Self {
        Self {
            paths: 2000,
            pairs: 10_000,
            seed: 42,
            degeneracy_eps: 1e-12,
            mu_rule: MuRule::Max,
        }
    }
}

impl EstimationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.paths == 0 || self.pairs == 0 {
            return Err(Error::InvalidArgument("P and Q must be at least 1".into()));
        }
        if !(self.degeneracy_eps > 0.0) {
            return Err(Error::InvalidArgument("degeneracy threshold must be positive".into()));
        }
        Ok(())
    }
}

/// Draws `Q` pairs with `|x − y| ≥ eps` and folds `quotient(x, y, |x−y|²)`.
fn fold_pairs<F>(bx: &SampleBox, config: &EstimationConfig, mut visit: F) -> Result<()>
where
    F: FnMut(&DVector<f64>, &DVector<f64>, f64),
{
    config.validate()?;
    if bx.is_degenerate() {
        return Err(Error::Estimation("sample box is degenerate in every component".into()));
    }
    let mut rng = path_rng(config.seed, PAIR_STREAM);
    let eps2 = config.degeneracy_eps * config.degeneracy_eps;
    for _ in 0..config.pairs {
        let mut attempts = 0;
        loop {
            let x = bx.sample(&mut rng);
            let y = bx.sample(&mut rng);
            let d2 = (&x - &y).norm_squared();
            if d2 >= eps2 {
                visit(&x, &y, d2);
                break;
            }
            attempts += 1;
            if attempts >= MAX_RESAMPLES {
                return Err(Error::Estimation("could not draw a non-degenerate pair".into()));
            }
        }
    }
    Ok(())
}

/// Largest `|g(x) − g(y)|² / |x − y|²` over the sampled pairs (Frobenius norm).
pub fn estimate_lipschitz(problem: &SdeProblem, bx: &SampleBox, config: &EstimationConfig) -> Result<f64> {
    check_box_dim(problem, bx)?;
    let mut best: f64 = 0.0;
    fold_pairs(bx, config, |x, y, d2| {
        let q = (problem.diffusion(x) - problem.diffusion(y)).norm_squared() / d2;
        best = best.max(q);
    })?;
    Ok(best)
}

/// `⟨x − y, f(x) − f(y)⟩ / |x − y|²` reduced with `config.mu_rule`.
pub fn estimate_one_sided(problem: &SdeProblem, bx: &SampleBox, config: &EstimationConfig) -> Result<f64> {
    check_box_dim(problem, bx)?;
    let mut best = match config.mu_rule {
        MuRule::Max => f64::NEG_INFINITY,
        MuRule::Min => f64::INFINITY,
    };
    fold_pairs(bx, config, |x, y, d2| {
        let q = (x - y).dot(&(problem.drift(x) - problem.drift(y))) / d2;
        best = match config.mu_rule {
            MuRule::Max => best.max(q),
            MuRule::Min => best.min(q),
        };
    })?;
    Ok(best)
}

fn check_box_dim(problem: &SdeProblem, bx: &SampleBox) -> Result<()> {
    if bx.dim() != problem.dim() {
        return Err(Error::InvalidArgument("box dimension does not match problem".into()));
    }
    Ok(())
}

fn check_aligned(lengths: impl Iterator<Item = usize>) -> Result<usize> {
    let mut steps = None;
    for len in lengths {
        match steps {
            None => steps = Some(len),
            Some(s) if s != len => return Err(Error::InvalidArgument("trajectories must share one time grid".into())),
            _ => {}
        }
    }
    steps.ok_or_else(|| Error::InvalidArgument("no trajectories supplied".into()))
}

/// `max_n mean_paths |f′(X_n)|²` with the Frobenius norm.
pub fn estimate_drift_moment(problem: &SdeProblem, trajectories: &[Trajectory]) -> Result<f64> {
    if !problem.has_drift_jacobian() {
        return Err(Error::Capability(alloc::format!(
            "problem `{}` has no drift Jacobian",
            problem.label()
        )));
    }
    let len = check_aligned(trajectories.iter().map(|t| t.states.len()))?;
    let mut best: f64 = 0.0;
    let mut column = Vec::with_capacity(trajectories.len());
    for n in 0..len {
        column.clear();
        for t in trajectories {
            column.push(problem.drift_jacobian(&t.states[n])?.norm_squared());
        }
        best = best.max(mean(&column));
    }
    Ok(best)
}

/// `T_{k,i,j}(x) = g^{k,i}(x) ∂g^j/∂x^k`, flattened over `(k, i, j)`.
fn milstein_terms(problem: &SdeProblem, x: &DVector<f64>) -> Result<Vec<DVector<f64>>> {
    let (n, m) = (problem.dim(), problem.noise_dim());
    let g = problem.diffusion(x);
    let jac: Vec<DMatrix<f64>> = (0..m)
        .map(|j| problem.diffusion_column_jacobian(x, j))
        .collect::<Result<_>>()?;
    let mut out = Vec::with_capacity(n * m * m);
    for k in 0..n {
        for i in 0..m {
            for jj in &jac {
                out.push(jj.column(k) * g[(k, i)]);
            }
        }
    }
    Ok(out)
}

/// `M̃ = Σ_{i,j,k,l} sup_n E h^{k,l}_{i,j}(X_n, Y_n) / E|X_n − Y_n|²` over coupled pairs.
pub fn estimate_milstein_moment(problem: &SdeProblem, pairs: &[(Trajectory, Trajectory)]) -> Result<f64> {
    let len = check_aligned(pairs.iter().flat_map(|(x, y)| [x.states.len(), y.states.len()]))?;
    let (n, m) = (problem.dim(), problem.noise_dim());
    let terms = n * m * m;
    let index = |k: usize, i: usize, j: usize| (k * m + i) * m + j;
    let mut sup = vec![f64::NEG_INFINITY; n * n * m * m];
    let mut any_time = false;
    let mut deviations = Vec::with_capacity(pairs.len());
    // h values per path for one (i, j, k, l), laid out path-major.
    let mut h_values = vec![Vec::with_capacity(pairs.len()); n * n * m * m];
    for step in 0..len {
        deviations.clear();
        h_values.iter_mut().for_each(Vec::clear);
        for (xs, ys) in pairs {
            let (x, y) = (&xs.states[step], &ys.states[step]);
            deviations.push((x - y).norm_squared());
            let tx = milstein_terms(problem, x)?;
            let ty = milstein_terms(problem, y)?;
            let diff: Vec<DVector<f64>> = tx.iter().zip(&ty).map(|(a, b)| a - b).collect();
            debug_assert_eq!(diff.len(), terms);
            for i in 0..m {
                for j in 0..m {
                    for k in 0..n {
                        for l in 0..n {
                            let h = diff[index(k, i, j)].dot(&diff[index(l, i, j)]);
                            h_values[((i * m + j) * n + k) * n + l].push(h);
                        }
                    }
                }
            }
        }
        let denominator = mean(&deviations);
        if !(denominator >= MIN_DENOMINATOR) {
            continue;
        }
        any_time = true;
        for (s, values) in sup.iter_mut().zip(&h_values) {
            *s = s.max(mean(values) / denominator);
        }
    }
    if !any_time {
        return Err(Error::Estimation("mean-square deviation vanished at every time".into()));
    }
    Ok(sup.iter().sum::<f64>().max(0.0))
}

/// Output of the full estimation pipeline.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ConstantEstimates {
    #[cfg_attr(feature = "serde", serde(rename = "L"))]
    pub lipschitz: f64,
    #[cfg_attr(feature = "serde", serde(rename = "mu"))]
    pub one_sided: f64,
    #[cfg_attr(feature = "serde", serde(rename = "M"))]
    pub drift_moment: f64,
    #[cfg_attr(feature = "serde", serde(rename = "M_tilde"))]
    pub milstein_moment: Option<f64>,
    #[cfg_attr(feature = "serde", serde(rename = "box"))]
    pub sample_box: SampleBox,
}

impl ConstantEstimates {
    pub fn to_constants(&self) -> Result<ProblemConstants> {
        ProblemConstants::new(
            self.lipschitz,
            self.one_sided,
            self.drift_moment,
            self.milstein_moment,
            Provenance::Estimated,
        )
    }
}

/// Runs the estimators on a simulated ensemble. `coupled` supplies the pairs
/// for `M̃`; without them `M̃` is left unset.
///
/// The box comes from `sample_box` unless `box_override` is given.
pub fn estimate_constants(
    problem: &SdeProblem,
    trajectories: &[Trajectory],
    coupled: Option<&[(Trajectory, Trajectory)]>,
    box_override: Option<SampleBox>,
    config: &EstimationConfig,
) -> Result<ConstantEstimates> {
    let bx = match box_override {
        Some(b) => b,
        None => sample_box(trajectories)?,
    };
    Ok(ConstantEstimates {
        lipschitz: estimate_lipschitz(problem, &bx, config)?,
        one_sided: estimate_one_sided(problem, &bx, config)?,
        drift_moment: estimate_drift_moment(problem, trajectories)?,
        milstein_moment: coupled.map(|c| estimate_milstein_moment(problem, c)).transpose()?,
        sample_box: bx,
    })
}
