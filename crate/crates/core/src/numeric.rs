//! Small numeric helpers shared by the integrators, estimators and ensembles.

use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector};

const PAIRWISE_BLOCK: usize = 8;

/// Pairwise (cascade) summation in fixed index order.
///
/// The reduction tree depends only on `values.len()`, so the result is
/// reproducible regardless of how the inputs were produced.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    if values.len() <= PAIRWISE_BLOCK {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    pairwise_sum(values) / values.len() as f64
}

/// Central-difference step used for derivative fallbacks.
#[inline]
pub fn fd_step(x: f64) -> f64 {
    1e-6 * (1.0 + x.abs())
}

/// Central-difference Jacobian of a vector field, columns indexed by the
/// perturbed coordinate.
pub fn fd_jacobian<F>(field: F, x: &DVector<f64>) -> DMatrix<f64>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let n = x.len();
    let mut columns: Vec<DVector<f64>> = Vec::with_capacity(n);
    let mut probe = x.clone();
    for k in 0..n {
        let h = fd_step(x[k]);
        probe[k] = x[k] + h;
        let plus = field(&probe);
        probe[k] = x[k] - h;
        let minus = field(&probe);
        probe[k] = x[k];
        columns.push((plus - minus) / (2.0 * h));
    }
    let rows = columns.first().map_or(0, |c| c.len());
    DMatrix::from_fn(rows, n, |r, c| columns[c][r])
}

/// Ordinary least-squares slope of `ys` against `xs`.
pub fn ls_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
    }
    sxy / sxx
}
