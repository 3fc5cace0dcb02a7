//! Modified Gram–Schmidt in a weighted empirical inner product.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};

/// Residual norm (relative to `max(1, ‖h_m‖)`) below which a learner is
/// treated as dependent on its predecessors.
pub const DROP_TOL: f64 = 1e-8;

/// Result of orthogonalizing `M` learner columns into `r ≤ M` orthonormal
/// components.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrthoDecomposition {
    /// Learner indices that produced a component, in order.
    pub retained: Vec<usize>,
    /// Learner indices found to be (numerically) dependent.
    pub dropped: Vec<usize>,
    /// `r × M`: component `j` equals `Σ_m T[j, m] h_m`; lower triangular in
    /// the retained ordering.
    pub change_of_basis: DMatrix<f64>,
    /// `M × r`: learner `m` equals `Σ_j R[m, j] q_j` (up to the drop tolerance).
    pub reconstruction: DMatrix<f64>,
    /// `Var(q_j(X))` under the inner-product measure.
    pub component_variances: Vec<f64>,
    /// Component values at the inner-product nodes, one `Vec` per component.
    pub components: Vec<Vec<f64>>,
}

impl OrthoDecomposition {
    pub fn rank(&self) -> usize {
        self.retained.len()
    }

    /// Largest component variance, the uniform variance-control diagnostic.
    pub fn max_component_variance(&self) -> f64 {
        self.component_variances.iter().copied().fold(0.0, f64::max)
    }

    /// Gram matrix of the stored components under `weights`.
    pub fn gram(&self, weights: &[f64]) -> DMatrix<f64> {
        let r = self.rank();
        DMatrix::from_fn(r, r, |i, j| weighted_inner(weights, &self.components[i], &self.components[j]))
    }
}

fn weighted_inner(w: &[f64], a: &[f64], b: &[f64]) -> f64 {
    w.iter().zip(a).zip(b).map(|((w, x), y)| w * x * y).sum()
}

/// Orthonormalizes the columns (learner values at the nodes) with two passes
/// of modified Gram–Schmidt. `weights` are rescaled to a probability measure.
pub fn gram_schmidt(columns: &[Vec<f64>], weights: &[f64]) -> Result<OrthoDecomposition> {
    let m = columns.len();
    let g = weights.len();
    if m == 0 {
        return Err(Error::DegenerateDictionary);
    }
    for c in columns {
        Error::check_len(g, c.len())?;
        if c.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("learner values on the grid".into()));
        }
    }
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) || weights.iter().any(|w| *w < 0.0 || !w.is_finite()) {
        return Err(Error::InvalidParameter("quadrature weights must be nonnegative with positive sum".into()));
    }
    let w: Vec<f64> = weights.iter().map(|x| x / total).collect();

    let mut components: Vec<Vec<f64>> = Vec::new();
    let mut transforms: Vec<Vec<f64>> = Vec::new();
    let mut retained = Vec::new();
    let mut dropped = Vec::new();
    let mut reconstruction = DMatrix::zeros(m, m);

    for (idx, col) in columns.iter().enumerate() {
        let original_norm = weighted_inner(&w, col, col).sqrt();
        let mut v = col.clone();
        let mut t = vec![0.0; m];
        t[idx] = 1.0;
        for _pass in 0..2 {
            for (j, (q, tq)) in components.iter().zip(&transforms).enumerate() {
                let r = weighted_inner(&w, &v, q);
                for (vi, qi) in v.iter_mut().zip(q) {
                    *vi -= r * qi;
                }
                for (ti, tqi) in t.iter_mut().zip(tq) {
                    *ti -= r * tqi;
                }
                reconstruction[(idx, j)] += r;
            }
        }
        let norm = weighted_inner(&w, &v, &v).sqrt();
        if norm < DROP_TOL * original_norm.max(1.0) {
            dropped.push(idx);
            continue;
        }
        let col_idx = components.len();
        reconstruction[(idx, col_idx)] = norm;
        components.push(v.into_iter().map(|x| x / norm).collect());
        transforms.push(t.into_iter().map(|x| x / norm).collect());
        retained.push(idx);
    }
    if components.is_empty() {
        return Err(Error::DegenerateDictionary);
    }
    let r = components.len();
    let change_of_basis = DMatrix::from_fn(r, m, |j, k| transforms[j][k]);
    let reconstruction = reconstruction.columns(0, r).into_owned();
    let component_variances = components
        .iter()
        .map(|q| {
            let mean: f64 = w.iter().zip(q).map(|(a, b)| a * b).sum();
            (weighted_inner(&w, q, q) - mean * mean).max(0.0)
        })
        .collect();
    Ok(OrthoDecomposition { retained, dropped, change_of_basis, reconstruction, component_variances, components })
}
