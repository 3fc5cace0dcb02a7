//! Optimal structured weights: prediction covariance, the constrained QP,
//! dominance checks and the synthetic sequence model.

mod dominance;
mod frank_wolfe;
mod sequence;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::dictionary::{build_dictionary, Dataset, Dictionary, DictionaryFamily, DictionaryParams};
use crate::error::{Error, Result};
use crate::weights::{AdmissibilityConstraints, WeightVector};

pub use dominance::{dominance_check, dominance_check_values, DominanceReport, DominanceRow};
pub use frank_wolfe::{atom, SolveDiagnostics, SolveOptions};
pub use sequence::{sequence_model_risk, sweep_rho, SequenceModel, SequenceRisk, SweepRow, SweepTable, SweepTarget};

/// `f̂_w(x) = Σ_m w_m h_m(x)`.
pub fn ensemble_predict(dict: &Dictionary, w: &[f64], x: &[f64]) -> Result<Vec<f64>> {
    Error::check_len(dict.len(), w.len())?;
    Ok(combine(&dict.predict_matrix(x), w))
}

/// Row-wise `H w` for a `G × M` prediction matrix.
pub fn combine(predictions: &DMatrix<f64>, w: &[f64]) -> Vec<f64> {
    (predictions * DVector::from_column_slice(w)).iter().copied().collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Centering {
    /// Each learner's predictions are centered at their mean over the grid.
    PerLearnerMean,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PredictionCovariance {
    pub sigma: DMatrix<f64>,
    pub centering: Centering,
    pub eval_points: usize,
}

/// Covariance across evaluation points of the learner predictions, divisor `G`.
pub fn empirical_covariance(dict: &Dictionary, eval_points: &[f64]) -> Result<PredictionCovariance> {
    covariance_of_predictions(&dict.predict_matrix(eval_points))
}

/// [`empirical_covariance`] from a precomputed `G × M` prediction matrix.
pub fn covariance_of_predictions(h: &DMatrix<f64>) -> Result<PredictionCovariance> {
    let g = h.nrows();
    if g < 2 {
        return Err(Error::InsufficientPoints { need: 2, got: g });
    }
    let mut centered = h.clone();
    for mut col in centered.column_iter_mut() {
        let mean = col.sum() / g as f64;
        col.add_scalar_mut(-mean);
    }
    let mut sigma = centered.transpose() * &centered / g as f64;
    // exact symmetry regardless of summation order
    let m = sigma.nrows();
    for i in 0..m {
        for j in 0..i {
            let v = 0.5 * (sigma[(i, j)] + sigma[(j, i)]);
            sigma[(i, j)] = v;
            sigma[(j, i)] = v;
        }
    }
    Ok(PredictionCovariance { sigma, centering: Centering::PerLearnerMean, eval_points: g })
}

/// `min αᵀQα + cᵀα + λ‖α‖²` over a feasible weight set.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QpProblem {
    pub quadratic: DMatrix<f64>,
    pub linear: DVector<f64>,
    pub ridge: f64,
    pub feasible_set: AdmissibilityConstraints,
}

/// Relative tolerance on `Q`'s asymmetry and negative eigenvalues.
const PSD_TOL: f64 = 1e-10;

impl QpProblem {
    pub fn new(
        quadratic: DMatrix<f64>,
        linear: DVector<f64>,
        ridge: f64,
        feasible_set: AdmissibilityConstraints,
    ) -> Result<Self> {
        let m = quadratic.nrows();
        if m == 0 {
            return Err(Error::InvalidParameter("empty quadratic form".into()));
        }
        Error::check_len(m, quadratic.ncols())?;
        Error::check_len(m, linear.len())?;
        if quadratic.iter().chain(linear.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("QP data".into()));
        }
        if !(ridge.is_finite() && ridge >= 0.0) {
            return Err(Error::Range(format!("ridge must be nonnegative, got {ridge}")));
        }
        let scale = quadratic.amax().max(1.0);
        if (&quadratic - quadratic.transpose()).amax() > 1e-12 * scale {
            return Err(Error::InvalidParameter("quadratic form is not symmetric".into()));
        }
        let sym = 0.5 * (&quadratic + quadratic.transpose());
        let min_eig = sym.clone().symmetric_eigenvalues().min();
        if min_eig < -PSD_TOL * scale {
            return Err(Error::InvalidParameter(format!("quadratic form is not PSD (eigenvalue {min_eig})")));
        }
        Ok(QpProblem { quadratic: sym, linear, ridge, feasible_set })
    }

    /// The variance-only objective `αᵀΣα + λ‖α‖²`.
    pub fn variance(cov: &PredictionCovariance, ridge: f64, constraints: AdmissibilityConstraints) -> Result<Self> {
        let m = cov.sigma.nrows();
        Self::new(cov.sigma.clone(), DVector::zeros(m), ridge, constraints)
    }

    /// The empirical risk objective `(1/n)‖y − Hα‖² + λ‖α‖²` minus the
    /// constant `‖y‖²/n`.
    pub fn risk(h: &DMatrix<f64>, y: &[f64], ridge: f64, constraints: AdmissibilityConstraints) -> Result<Self> {
        let n = h.nrows();
        Error::check_len(n, y.len())?;
        if n == 0 {
            return Err(Error::InsufficientData("risk objective needs at least one point".into()));
        }
        let y = DVector::from_column_slice(y);
        let q = h.transpose() * h / n as f64;
        let c = h.transpose() * y * (-2.0 / n as f64);
        Self::new(q, c, ridge, constraints)
    }

    pub fn dim(&self) -> usize {
        self.linear.len()
    }

    pub fn objective(&self, alpha: &[f64]) -> Result<f64> {
        Error::check_len(self.dim(), alpha.len())?;
        let a = DVector::from_column_slice(alpha);
        Ok(a.dot(&(&self.quadratic * &a)) + self.linear.dot(&a) + self.ridge * a.norm_squared())
    }
}

/// Minimizes `problem` by away-step Frank–Wolfe on the atoms of the
/// (monotone) simplex, starting from the uniform vector.
///
/// An ℓ₂ bound is enforced by adding the smallest ridge that meets it; the
/// ridge is reported as `l2_multiplier`. A gap above `tol` after `max_iter`
/// iterations yields [`Error::NotConverged`] carrying the last iterate.
pub fn solve_weights(problem: &QpProblem, options: &SolveOptions) -> Result<(WeightVector, SolveDiagnostics)> {
    frank_wolfe::solve(problem, options)
}

/// Weights minimizing `αᵀΣα + λ‖α‖²` with `Σ` the prediction covariance.
pub fn optimal_weights_variance(
    dict: &Dictionary,
    eval_points: &[f64],
    ridge: f64,
    constraints: AdmissibilityConstraints,
    options: &SolveOptions,
) -> Result<(WeightVector, SolveDiagnostics)> {
    let cov = empirical_covariance(dict, eval_points)?;
    solve_weights(&QpProblem::variance(&cov, ridge, constraints)?, options)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RiskSolution {
    pub weights: WeightVector,
    pub diagnostics: SolveDiagnostics,
    /// `(1/n)‖y − Hw‖² + λ‖w‖²` at the solution.
    pub objective: f64,
}

/// `(1/n)‖y − Hw‖² + λ‖w‖²`.
pub fn risk_objective(h: &DMatrix<f64>, y: &[f64], w: &[f64], ridge: f64) -> Result<f64> {
    Error::check_len(h.nrows(), y.len())?;
    Error::check_len(h.ncols(), w.len())?;
    let fitted = combine(h, w);
    let sse: f64 = y.iter().zip(&fitted).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(sse / y.len() as f64 + ridge * w.iter().map(|v| v * v).sum::<f64>())
}

/// Risk-optimal weights for a precomputed `n × M` prediction matrix.
pub fn optimal_weights_risk_from_predictions(
    h: &DMatrix<f64>,
    y: &[f64],
    ridge: f64,
    constraints: AdmissibilityConstraints,
    options: &SolveOptions,
) -> Result<RiskSolution> {
    let problem = QpProblem::risk(h, y, ridge, constraints)?;
    let (weights, diagnostics) = solve_weights(&problem, options)?;
    let objective = risk_objective(h, y, weights.values(), ridge)?;
    Ok(RiskSolution { weights, diagnostics, objective })
}

/// Risk-optimal weights using in-sample predictions of `dict` on `data`.
pub fn optimal_weights_risk(
    dict: &Dictionary,
    data: &Dataset,
    ridge: f64,
    constraints: AdmissibilityConstraints,
    options: &SolveOptions,
) -> Result<RiskSolution> {
    optimal_weights_risk_from_predictions(&dict.predict_matrix(data.x()), data.y(), ridge, constraints, options)
}

/// `n × M` out-of-fold prediction matrix: point `i` is predicted by a
/// dictionary refit without fold `i mod folds`. `folds < 2` returns the
/// in-sample predictions of a dictionary fit on all of `data`.
pub fn cross_fitted_predictions(
    family: DictionaryFamily,
    m: usize,
    data: &Dataset,
    params: &DictionaryParams,
    folds: usize,
) -> Result<DMatrix<f64>> {
    let n = data.len();
    if folds < 2 {
        return Ok(build_dictionary(family, m, data, params)?.predict_matrix(data.x()));
    }
    if folds > n {
        return Err(Error::InsufficientData(format!("{folds} folds need at least {folds} points, got {n}")));
    }
    let mut h = DMatrix::zeros(n, m);
    for fold in 0..folds {
        let (held, kept): (Vec<usize>, Vec<usize>) = (0..n).partition(|i| i % folds == fold);
        let dict = build_dictionary(family, m, &data.subset(&kept)?, params)?;
        let x_held: Vec<f64> = held.iter().map(|&i| data.x()[i]).collect();
        let pred = dict.predict_matrix(&x_held);
        for (row, &i) in held.iter().enumerate() {
            h.set_row(i, &pred.row(row));
        }
    }
    Ok(h)
}
