//! SDE problem abstraction `dX = f(X) dt + g(X) dW` and the built-in test problems.

use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::numeric::fd_jacobian;

pub type VectorField = Arc<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>;
pub type MatrixField = Arc<dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync>;
/// `(x, j) -> ∂g^j/∂x`, the `n×n` Jacobian of the `j`-th diffusion column.
pub type ColumnJacobian = Arc<dyn Fn(&DVector<f64>, usize) -> DMatrix<f64> + Send + Sync>;

pub const BUILTIN_NAMES: &str = "problem1, problem2, problem3, linear";

/// Where a constant came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum Provenance {
    UserSupplied,
    Estimated,
    /// Shipped with a built-in problem.
    #[cfg_attr(feature = "serde", serde(alias = "paper-preset"))]
    Preset,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Provenance::UserSupplied => "user-supplied",
            Provenance::Estimated => "estimated",
            Provenance::Preset => "preset",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ConstantsProvenance {
    #[cfg_attr(feature = "serde", serde(rename = "L"))]
    pub lipschitz: Provenance,
    #[cfg_attr(feature = "serde", serde(rename = "mu"))]
    pub one_sided: Provenance,
    #[cfg_attr(feature = "serde", serde(rename = "M"))]
    pub drift_moment: Provenance,
    #[cfg_attr(feature = "serde", serde(rename = "M_tilde"))]
    pub milstein_moment: Provenance,
}

impl ConstantsProvenance {
    pub fn all(p: Provenance) -> Self {
        Self {
            lipschitz: p,
            one_sided: p,
            drift_moment: p,
            milstein_moment: p,
        }
    }
}

/// The constants `L`, `μ`, `M`, `M̃` that drive the contractivity analysis.
///
/// `α = 2μ + L` is always recomputed from the stored `μ` and `L`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(into = "ConstantsRecord", try_from = "ConstantsRecord"))]
pub struct ProblemConstants {
    lipschitz: f64,
    one_sided: f64,
    drift_moment: f64,
    milstein_moment: Option<f64>,
    provenance: ConstantsProvenance,
}

fn check_nonnegative(name: &str, value: f64) -> Result<()> {
    if value.is_nan() || value < 0.0 {
        return Err(Error::InvalidArgument(alloc::format!(
            "{name} must be nonnegative, got {value}"
        )));
    }
    Ok(())
}

impl ProblemConstants {
    pub fn new(
        lipschitz: f64,
        one_sided: f64,
        drift_moment: f64,
        milstein_moment: Option<f64>,
        provenance: Provenance,
    ) -> Result<Self> {
        check_nonnegative("L", lipschitz)?;
        check_nonnegative("M", drift_moment)?;
        if let Some(mt) = milstein_moment {
            check_nonnegative("M_tilde", mt)?;
        }
        if !one_sided.is_finite() {
            return Err(Error::InvalidArgument(alloc::format!(
                "mu must be finite, got {one_sided}"
            )));
        }
        Ok(Self {
            lipschitz,
            one_sided,
            drift_moment,
            milstein_moment,
            provenance: ConstantsProvenance::all(provenance),
        })
    }

    /// Lipschitz constant `L` of the diffusion (squared-norm form).
    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    /// One-sided Lipschitz constant `μ` of the drift.
    pub fn one_sided(&self) -> f64 {
        self.one_sided
    }

    /// `M`, the second-moment bound of the drift Jacobian.
    pub fn drift_moment(&self) -> f64 {
        self.drift_moment
    }

    /// `M̃`, only needed for the Milstein analysis.
    pub fn milstein_moment(&self) -> Option<f64> {
        self.milstein_moment
    }

    pub fn alpha(&self) -> f64 {
        2.0 * self.one_sided + self.lipschitz
    }

    pub fn provenance(&self) -> ConstantsProvenance {
        self.provenance
    }

    pub fn set_lipschitz(&mut self, value: f64, provenance: Provenance) -> Result<()> {
        check_nonnegative("L", value)?;
        self.lipschitz = value;
        self.provenance.lipschitz = provenance;
        Ok(())
    }

    pub fn set_one_sided(&mut self, value: f64, provenance: Provenance) -> Result<()> {
        if !value.is_finite() {
            return Err(Error::InvalidArgument(alloc::format!("mu must be finite, got {value}")));
        }
        self.one_sided = value;
        self.provenance.one_sided = provenance;
        Ok(())
    }

    pub fn set_drift_moment(&mut self, value: f64, provenance: Provenance) -> Result<()> {
        check_nonnegative("M", value)?;
        self.drift_moment = value;
        self.provenance.drift_moment = provenance;
        Ok(())
    }

    pub fn set_milstein_moment(&mut self, value: f64, provenance: Provenance) -> Result<()> {
        check_nonnegative("M_tilde", value)?;
        self.milstein_moment = Some(value);
        self.provenance.milstein_moment = provenance;
        Ok(())
    }
}

/// Serialized form of [`ProblemConstants`]; `alpha` is written for readers
/// and ignored on input.
#[cfg(feature = "serde")]
#[derive(serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
struct ConstantsRecord {
    #[serde(rename = "L")]
    lipschitz: f64,
    mu: f64,
    #[serde(rename = "M")]
    drift_moment: f64,
    #[serde(rename = "M_tilde", default)]
    milstein_moment: Option<f64>,
    #[serde(default)]
    alpha: Option<f64>,
    #[serde(default)]
    provenance: Option<ConstantsProvenance>,
}

#[cfg(feature = "serde")]
impl From<ProblemConstants> for ConstantsRecord {
    fn from(c: ProblemConstants) -> Self {
        Self {
            lipschitz: c.lipschitz,
            mu: c.one_sided,
            drift_moment: c.drift_moment,
            milstein_moment: c.milstein_moment,
            alpha: Some(c.alpha()),
            provenance: Some(c.provenance),
        }
    }
}

#[cfg(feature = "serde")]
impl TryFrom<ConstantsRecord> for ProblemConstants {
    type Error = Error;

    fn try_from(r: ConstantsRecord) -> Result<Self> {
        let mut c = ProblemConstants::new(
            r.lipschitz,
            r.mu,
            r.drift_moment,
            r.milstein_moment,
            Provenance::UserSupplied,
        )?;
        if let Some(p) = r.provenance {
            c.provenance = p;
        }
        Ok(c)
    }
}

/// An autonomous Itô SDE with drift `f: Rⁿ → Rⁿ` and diffusion `g: Rⁿ → Rⁿˣᵐ`.
///
/// Immutable once built; clones share the callbacks.
#[derive(Clone)]
pub struct SdeProblem {
    label: String,
    dim: usize,
    noise_dim: usize,
    drift: VectorField,
    diffusion: MatrixField,
    drift_jacobian: Option<MatrixField>,
    column_jacobian: Option<ColumnJacobian>,
    fd_fallback: bool,
    commutative_noise: bool,
    horizon: f64,
    initial_pair: (DVector<f64>, DVector<f64>),
    constants: Option<ProblemConstants>,
}

impl fmt::Debug for SdeProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SdeProblem")
            .field("label", &self.label)
            .field("n", &self.dim)
            .field("m", &self.noise_dim)
            .field("commutative_noise", &self.commutative_noise)
            .field("horizon", &self.horizon)
            .field("constants", &self.constants)
            .finish_non_exhaustive()
    }
}

pub struct SdeProblemBuilder {
    label: String,
    dim: usize,
    noise_dim: usize,
    drift: Option<VectorField>,
    diffusion: Option<MatrixField>,
    drift_jacobian: Option<MatrixField>,
    column_jacobian: Option<ColumnJacobian>,
    fd_fallback: bool,
    commutative_noise: Option<bool>,
    horizon: f64,
    initial_pair: Option<(DVector<f64>, DVector<f64>)>,
    constants: Option<ProblemConstants>,
}

impl SdeProblemBuilder {
    pub fn drift(mut self, f: impl Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static) -> Self {
        self.drift = Some(Arc::new(f));
        self
    }

    pub fn diffusion(mut self, g: impl Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static) -> Self {
        self.diffusion = Some(Arc::new(g));
        self
    }

    pub fn drift_jacobian(mut self, df: impl Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static) -> Self {
        self.drift_jacobian = Some(Arc::new(df));
        self
    }

    pub fn diffusion_column_jacobian(
        mut self,
        dg: impl Fn(&DVector<f64>, usize) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> Self {
        self.column_jacobian = Some(Arc::new(dg));
        self
    }

    /// Allow central finite differences (step `1e-6·(1+|x|)`) wherever an
    /// analytic derivative was not supplied.
    pub fn finite_difference_fallback(mut self, enabled: bool) -> Self {
        self.fd_fallback = enabled;
        self
    }

    /// Declares whether `L^{j1} g^{j2} = L^{j2} g^{j1}` holds. Defaults to `m == 1`.
    pub fn commutative_noise(mut self, commutative: bool) -> Self {
        self.commutative_noise = Some(commutative);
        self
    }

    pub fn horizon(mut self, horizon: f64) -> Self {
        self.horizon = horizon;
        self
    }

    pub fn initial_pair(mut self, x0: DVector<f64>, y0: DVector<f64>) -> Self {
        self.initial_pair = Some((x0, y0));
        self
    }

    pub fn constants(mut self, constants: ProblemConstants) -> Self {
        self.constants = Some(constants);
        self
    }

    pub fn build(self) -> Result<SdeProblem> {
        if self.dim == 0 || self.noise_dim == 0 {
            return Err(Error::InvalidArgument(
                "dimensions n and m must be positive".to_string(),
            ));
        }
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(Error::InvalidArgument(alloc::format!(
                "horizon must be positive, got {}",
                self.horizon
            )));
        }
        let drift = self
            .drift
            .ok_or_else(|| Error::InvalidArgument("drift is required".to_string()))?;
        let diffusion = self
            .diffusion
            .ok_or_else(|| Error::InvalidArgument("diffusion is required".to_string()))?;
        let initial_pair = self
            .initial_pair
            .unwrap_or_else(|| (DVector::from_element(self.dim, 1.0), DVector::zeros(self.dim)));
        if initial_pair.0.len() != self.dim || initial_pair.1.len() != self.dim {
            return Err(Error::InvalidArgument("initial data must have dimension n".to_string()));
        }
        Ok(SdeProblem {
            label: self.label,
            dim: self.dim,
            noise_dim: self.noise_dim,
            drift,
            diffusion,
            drift_jacobian: self.drift_jacobian,
            column_jacobian: self.column_jacobian,
            fd_fallback: self.fd_fallback,
            commutative_noise: self.commutative_noise.unwrap_or(self.noise_dim == 1),
            horizon: self.horizon,
            initial_pair,
            constants: self.constants,
        })
    }
}

/// `L^{j1} g^{j2}(x)` for every ordered pair of noise indices.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseCorrections {
    noise_dim: usize,
    entries: Vec<DVector<f64>>,
}

impl NoiseCorrections {
    pub fn noise_dim(&self) -> usize {
        self.noise_dim
    }

    /// `L^{j1} g^{j2}`.
    pub fn get(&self, j1: usize, j2: usize) -> &DVector<f64> {
        &self.entries[j1 * self.noise_dim + j2]
    }
}

impl SdeProblem {
    pub fn builder(label: impl Into<String>, n: usize, m: usize) -> SdeProblemBuilder {
        SdeProblemBuilder {
            label: label.into(),
            dim: n,
            noise_dim: m,
            drift: None,
            diffusion: None,
            drift_jacobian: None,
            column_jacobian: None,
            fd_fallback: false,
            commutative_noise: None,
            horizon: 10.0,
            initial_pair: None,
            constants: None,
        }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn noise_dim(&self) -> usize {
        self.noise_dim
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn commutative_noise(&self) -> bool {
        self.commutative_noise
    }

    pub fn initial_pair(&self) -> (&DVector<f64>, &DVector<f64>) {
        (&self.initial_pair.0, &self.initial_pair.1)
    }

    /// Constants attached at construction (the presets for built-ins).
    pub fn constants(&self) -> Option<&ProblemConstants> {
        self.constants.as_ref()
    }

    pub fn with_constants(mut self, constants: ProblemConstants) -> Self {
        self.constants = Some(constants);
        self
    }

    pub fn with_horizon(mut self, horizon: f64) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::InvalidArgument(alloc::format!(
                "horizon must be positive, got {horizon}"
            )));
        }
        self.horizon = horizon;
        Ok(self)
    }

    pub fn with_initial_pair(mut self, x0: DVector<f64>, y0: DVector<f64>) -> Result<Self> {
        if x0.len() != self.dim || y0.len() != self.dim {
            return Err(Error::InvalidArgument("initial data must have dimension n".to_string()));
        }
        self.initial_pair = (x0, y0);
        Ok(self)
    }

    pub fn drift(&self, x: &DVector<f64>) -> DVector<f64> {
        (self.drift)(x)
    }

    pub fn diffusion(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let g = (self.diffusion)(x);
        debug_assert_eq!(g.shape(), (self.dim, self.noise_dim), "diffusion shape");
        g
    }

    pub fn has_drift_jacobian(&self) -> bool {
        self.drift_jacobian.is_some() || self.fd_fallback
    }

    pub fn drift_jacobian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        match &self.drift_jacobian {
            Some(df) => Ok(df(x)),
            None if self.fd_fallback => Ok(fd_jacobian(|y| (self.drift)(y), x)),
            None => Err(Error::Capability(alloc::format!(
                "problem `{}` has no drift Jacobian",
                self.label
            ))),
        }
    }

    /// Jacobian of the `j`-th diffusion column, entry `(r, k) = ∂g^{r,j}/∂x^k`.
    pub fn diffusion_column_jacobian(&self, x: &DVector<f64>, j: usize) -> Result<DMatrix<f64>> {
        match &self.column_jacobian {
            Some(dg) => Ok(dg(x, j)),
            None if self.fd_fallback => Ok(fd_jacobian(|y| (self.diffusion)(y).column(j).into_owned(), x)),
            None => Err(Error::Capability(alloc::format!(
                "problem `{}` has no diffusion column derivative",
                self.label
            ))),
        }
    }

    /// `L^{j1} g^{j2}(x) = Σ_k g^{k,j1}(x) ∂g^{j2}/∂x^k` for all pairs, without
    /// checking commutativity.
    pub fn diffusion_cross_terms(&self, x: &DVector<f64>) -> Result<NoiseCorrections> {
        let g = self.diffusion(x);
        let m = self.noise_dim;
        let jacobians = (0..m)
            .map(|j| self.diffusion_column_jacobian(x, j))
            .collect::<Result<Vec<_>>>()?;
        let mut entries = Vec::with_capacity(m * m);
        for j1 in 0..m {
            let column = g.column(j1);
            for jac in &jacobians {
                entries.push(jac * column);
            }
        }
        Ok(NoiseCorrections { noise_dim: m, entries })
    }

    /// The Milstein correction terms `L^{j1} g^{j2}(x)`; requires commutative noise.
    pub fn levy_free_correction(&self, x: &DVector<f64>) -> Result<NoiseCorrections> {
        if !self.commutative_noise {
            return Err(Error::Unsupported(alloc::format!(
                "problem `{}` has non-commutative noise; Levy areas are not simulated",
                self.label
            )));
        }
        self.diffusion_cross_terms(x)
    }

    /// Largest relative violation of `L^{j1} g^{j2} = L^{j2} g^{j1}` at `x`.
    pub fn commutator_residual(&self, x: &DVector<f64>) -> Result<f64> {
        let terms = self.diffusion_cross_terms(x)?;
        let mut worst: f64 = 0.0;
        for j1 in 0..self.noise_dim {
            for j2 in (j1 + 1)..self.noise_dim {
                let (a, b) = (terms.get(j1, j2), terms.get(j2, j1));
                let scale = a.norm().max(b.norm()).max(f64::MIN_POSITIVE);
                worst = worst.max((a - b).norm() / scale);
            }
        }
        Ok(worst)
    }
}

fn scalar(v: f64) -> DVector<f64> {
    DVector::from_element(1, v)
}

fn scalar_matrix(v: f64) -> DMatrix<f64> {
    DMatrix::from_element(1, 1, v)
}

fn preset(l: f64, mu: f64, m: f64, mt: Option<f64>) -> ProblemConstants {
    ProblemConstants::new(l, mu, m, mt, Provenance::Preset).expect("preset constants are valid")
}

/// `f(x) = −4x − x³`, `g(x) = x`.
pub fn problem1() -> SdeProblem {
    SdeProblem::builder("problem1", 1, 1)
        .drift(|x| scalar(-4.0 * x[0] - x[0] * x[0] * x[0]))
        .drift_jacobian(|x| scalar_matrix(-4.0 - 3.0 * x[0] * x[0]))
        .diffusion(|x| scalar_matrix(x[0]))
        .diffusion_column_jacobian(|_, _| scalar_matrix(1.0))
        .horizon(10.0)
        .initial_pair(scalar(1.0), scalar(0.0))
        .constants(preset(1.0, -4.0, 16.0, Some(1.0)))
        .build()
        .expect("problem1 is well formed")
}

/// `f(x) = −5x`, `g(x) = sin x`.
pub fn problem2() -> SdeProblem {
    SdeProblem::builder("problem2", 1, 1)
        .drift(|x| scalar(-5.0 * x[0]))
        .drift_jacobian(|_| scalar_matrix(-5.0))
        .diffusion(|x| scalar_matrix(libm::sin(x[0])))
        .diffusion_column_jacobian(|x, _| scalar_matrix(libm::cos(x[0])))
        .horizon(10.0)
        .initial_pair(scalar(1.0), scalar(0.0))
        .constants(preset(1.0, -5.0, 25.0, Some(1.0)))
        .build()
        .expect("problem2 is well formed")
}

/// Two-dimensional system with `f = −4 (sin x₁, sin x₂)` and linear,
/// non-commutative two-column diffusion. No `M̃` preset is attached.
pub fn problem3() -> SdeProblem {
    const S: f64 = 1.0 / 7.0;
    SdeProblem::builder("problem3", 2, 2)
        .drift(|x| DVector::from_vec(alloc::vec![-4.0 * libm::sin(x[0]), -4.0 * libm::sin(x[1])]))
        .drift_jacobian(|x| DMatrix::from_row_slice(2, 2, &[-4.0 * libm::cos(x[0]), 0.0, 0.0, -4.0 * libm::cos(x[1])]))
        .diffusion(|x| DMatrix::from_row_slice(2, 2, &[S * x[0], S * 1.5 * x[1], S * 2.5 * x[0], -S * 0.5 * x[1]]))
        .diffusion_column_jacobian(|_, j| match j {
            0 => DMatrix::from_row_slice(2, 2, &[S, 0.0, S * 2.5, 0.0]),
            _ => DMatrix::from_row_slice(2, 2, &[0.0, S * 1.5, 0.0, -S * 0.5]),
        })
        .commutative_noise(false)
        .horizon(10.0)
        .initial_pair(DVector::from_element(2, 1.0), DVector::zeros(2))
        .constants(preset(0.148, -3.56, 16.0, None))
        .build()
        .expect("problem3 is well formed")
}

/// Scalar linear test equation `dX = λX dt + σX dW`.
///
/// Attached constants are exact: `L = σ²`, `μ = λ`, `M = λ²`, `M̃ = σ⁴`.
pub fn linear_problem(lambda: f64, sigma: f64) -> SdeProblem {
    SdeProblem::builder("linear", 1, 1)
        .drift(move |x| scalar(lambda * x[0]))
        .drift_jacobian(move |_| scalar_matrix(lambda))
        .diffusion(move |x| scalar_matrix(sigma * x[0]))
        .diffusion_column_jacobian(move |_, _| scalar_matrix(sigma))
        .horizon(10.0)
        .initial_pair(scalar(1.0), scalar(0.0))
        .constants(preset(
            sigma * sigma,
            lambda,
            lambda * lambda,
            Some(sigma * sigma * sigma * sigma),
        ))
        .build()
        .expect("linear problem is well formed")
}

/// Looks up a built-in problem by name. `linear` uses `λ = −4`, `σ = 1`.
pub fn builtin_problem(name: &str) -> Result<SdeProblem> {
    match name {
        "problem1" => Ok(problem1()),
        "problem2" => Ok(problem2()),
        "problem3" => Ok(problem3()),
        "linear" => Ok(linear_problem(-4.0, 1.0)),
        _ => Err(Error::UnknownProblem {
            name: name.to_string(),
            valid: BUILTIN_NAMES,
        }),
    }
}
