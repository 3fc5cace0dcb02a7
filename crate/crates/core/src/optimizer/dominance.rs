//! Checker for the structured-weighting dominance conditions.

use nalgebra::DMatrix;
use serde::Serialize;

use super::combine;
use crate::dictionary::{gram_schmidt, Dictionary};
use crate::error::{Error, Result};
use crate::experiment::fmt_real;
use crate::quadrature::Quadrature;
use crate::spectral::OrthoBasis;
use crate::weights::l2_norm_sq;

/// Margin below which a "strict" improvement is not counted.
const STRICT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DominanceRow {
    pub condition: &'static str,
    pub interpretation: &'static str,
    /// Value for `w*`.
    pub lhs: f64,
    /// Value for the uniform weights (or the bound being compared against).
    pub rhs: f64,
    /// `None` for informational rows and for conclusions whose premises fail.
    pub holds: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DominanceReport {
    pub rows: Vec<DominanceRow>,
    pub c1_support: bool,
    pub c1_point_bias: bool,
    pub c2: bool,
    /// Monte Carlo risk of `w*` strictly below that of uniform weights.
    pub risk_improves: bool,
}

impl DominanceReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("condition,interpretation,lhs,rhs,holds\n");
        for r in &self.rows {
            let holds = match r.holds {
                Some(true) => "true",
                Some(false) => "false",
                None => "na",
            };
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.condition,
                r.interpretation,
                fmt_real(r.lhs),
                fmt_real(r.rhs),
                holds
            ));
        }
        out
    }
}

/// Dominance check on replicate dictionaries, evaluated at the quadrature
/// nodes of `basis`.
pub fn dominance_check<F: Fn(f64) -> f64>(
    replicates: &[Dictionary],
    w_star: &[f64],
    f_star: F,
    basis: &OrthoBasis,
) -> Result<DominanceReport> {
    let quad = basis.quadrature();
    let values: Vec<DMatrix<f64>> = replicates.iter().map(|d| d.predict_matrix(quad.nodes())).collect();
    let truth: Vec<f64> = quad.nodes().iter().map(|&x| f_star(x)).collect();
    if let Some(i) = truth.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFiniteFunction(quad.nodes()[i]));
    }
    dominance_check_values(&values, w_star, &truth, quad)
}

/// Dominance check from `G × M` replicate prediction matrices at the nodes
/// of `quad` and the target values there.
///
/// * C1 (support): residual of projecting `f*` on the orthogonalized mean
///   learners in the support of `w`, for `w*` versus uniform.
/// * C1 (point bias): `‖Σ w_m h̄_m − f*‖²`, for `w*` versus uniform.
/// * C2: `‖w*‖² ≤ 1/M`.
/// * Risk: Monte Carlo `E‖f̂_w − f*‖²` over the replicates.
pub fn dominance_check_values(
    replicates: &[DMatrix<f64>],
    w_star: &[f64],
    truth: &[f64],
    quad: &Quadrature,
) -> Result<DominanceReport> {
    let Some(first) = replicates.first() else {
        return Err(Error::InsufficientReplicates { need: 1, got: 0 });
    };
    let (g, m) = first.shape();
    Error::check_len(quad.len(), g)?;
    Error::check_len(g, truth.len())?;
    Error::check_len(m, w_star.len())?;
    for h in replicates {
        Error::check_len(g, h.nrows())?;
        Error::check_len(m, h.ncols())?;
    }
    let q = quad.weights();
    let uniform = vec![1.0 / m as f64; m];
    let sq_dist = |a: &[f64], b: &[f64]| a.iter().zip(b).zip(q).map(|((x, y), w)| w * (x - y) * (x - y)).sum::<f64>();

    let mut mean = DMatrix::zeros(g, m);
    for h in replicates {
        mean += h;
    }
    mean /= replicates.len() as f64;

    let columns: Vec<Vec<f64>> = mean.column_iter().map(|c| c.iter().copied().collect()).collect();
    let ortho = gram_schmidt(&columns, q)?;
    let energy = quad.inner(truth, truth);
    let coeffs: Vec<f64> = ortho.components.iter().map(|c| quad.inner(truth, c)).collect();
    let support_projection = |w: &[f64]| -> Vec<f64> {
        let mut p = vec![0.0; g];
        for ((&learner, comp), c) in ortho.retained.iter().zip(&ortho.components).zip(&coeffs) {
            if w[learner] > 0.0 {
                p.iter_mut().zip(comp).for_each(|(p, v)| *p += c * v);
            }
        }
        p
    };
    let support_residual = |w: &[f64]| {
        let captured: f64 = ortho
            .retained
            .iter()
            .zip(&coeffs)
            .filter(|(&l, _)| w[l] > 0.0)
            .map(|(_, c)| c * c)
            .sum();
        (energy - captured).max(0.0)
    };
    let mean_fit = |w: &[f64]| combine(&mean, w);
    let point_bias = |w: &[f64]| sq_dist(&mean_fit(w), truth);
    let risk = |w: &[f64]| {
        replicates.iter().map(|h| sq_dist(&combine(h, w), truth)).sum::<f64>() / replicates.len() as f64
    };
    let estimation_bias_support = |w: &[f64]| sq_dist(&mean_fit(w), &support_projection(w));
    let estimation_bias_line = |w: &[f64]| {
        let fit = mean_fit(w);
        let norm = quad.inner(&fit, &fit);
        let proj: Vec<f64> = if norm > 0.0 {
            let s = quad.inner(truth, &fit) / norm;
            fit.iter().map(|v| s * v).collect()
        } else {
            vec![0.0; g]
        };
        sq_dist(&fit, &proj)
    };

    let strictly_less = |a: f64, b: f64| a < b - STRICT_TOL * b.abs().max(1.0);
    let (sup_l, sup_r) = (support_residual(w_star), support_residual(&uniform));
    let (pb_l, pb_r) = (point_bias(w_star), point_bias(&uniform));
    let (n_l, n_r) = (l2_norm_sq(w_star), 1.0 / m as f64);
    let (risk_l, risk_r) = (risk(w_star), risk(&uniform));
    let c1_support = strictly_less(sup_l, sup_r);
    let c1_point_bias = strictly_less(pb_l, pb_r);
    let c2 = n_l <= n_r + STRICT_TOL;
    let risk_improves = strictly_less(risk_l, risk_r);

    let row = |condition, interpretation, lhs, rhs, holds| DominanceRow { condition, interpretation, lhs, rhs, holds };
    let rows = vec![
        row("C1", "support", sup_l, sup_r, Some(c1_support)),
        row("C1", "point_bias", pb_l, pb_r, Some(c1_point_bias)),
        row("C2", "l2_norm", n_l, n_r, Some(c2)),
        row("risk", "monte_carlo", risk_l, risk_r, Some(risk_improves)),
        row("estimation_bias", "support", estimation_bias_support(w_star), estimation_bias_support(&uniform), None),
        row("estimation_bias", "point_bias", estimation_bias_line(w_star), estimation_bias_line(&uniform), None),
        row("conclusion", "support", risk_l, risk_r, (c1_support && c2).then_some(risk_improves)),
        row("conclusion", "point_bias", risk_l, risk_r, (c1_point_bias && c2).then_some(risk_improves)),
    ];
    Ok(DominanceReport { rows, c1_support, c1_point_bias, c2, risk_improves })
}
