//! Synthetic sequence-model testbed and geometric-law sweeps.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use super::combine;
use crate::dictionary::build_dictionary;
use crate::error::{Error, Result};
use crate::experiment::{fmt_real, gen_data, ExperimentConfig};
use crate::quadrature::Quadrature;
use crate::weights::{make_weights, WeightLawSpec};

/// Target coefficients `θ_k = C k^{-α}`, `k = 1…K`, and `M` nested learners:
/// learner `m` estimates modes `1…m`, each with independent `N(0, τ²)` error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SequenceModel {
    pub alpha: f64,
    pub c: f64,
    pub m: usize,
    pub k: usize,
    pub tau: f64,
}

impl SequenceModel {
    pub fn new(alpha: f64, c: f64, m: usize, k: usize, tau: f64) -> Result<Self> {
        if !(alpha.is_finite() && alpha > 0.5) {
            return Err(Error::Range(format!("alpha must exceed 1/2, got {alpha}")));
        }
        if !(c.is_finite() && c > 0.0) {
            return Err(Error::Range(format!("C must be positive, got {c}")));
        }
        if m == 0 || k == 0 {
            return Err(Error::Range("M and K must be positive".into()));
        }
        if k < m {
            return Err(Error::Range(format!("K ({k}) must be at least M ({m})")));
        }
        if !(tau.is_finite() && tau >= 0.0) {
            return Err(Error::Range(format!("tau must be nonnegative, got {tau}")));
        }
        Ok(SequenceModel { alpha, c, m, k, tau })
    }

    pub fn theta(&self) -> Vec<f64> {
        (1..=self.k).map(|k| self.c * (k as f64).powf(-self.alpha)).collect()
    }

    /// Noise-free `M × K` learner coefficients `a_{m,k} = θ_k 1{k ≤ m}`.
    pub fn coefficient_matrix(&self) -> DMatrix<f64> {
        let theta = self.theta();
        DMatrix::from_fn(self.m, self.k, |m, k| if k <= m { theta[k] } else { 0.0 })
    }

    /// One draw of the noisy learner coefficients.
    pub fn sample_coefficients<R: Rng + ?Sized>(&self, rng: &mut R) -> DMatrix<f64> {
        let mut a = self.coefficient_matrix();
        for m in 0..self.m {
            for k in 0..=m {
                let xi: f64 = rng.sample(StandardNormal);
                a[(m, k)] += self.tau * xi;
            }
        }
        a
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SequenceRisk {
    pub approximation: f64,
    pub variance: f64,
    pub total: f64,
}

/// Closed-form risk: `A = Σ_k θ_k² (1 − Σ_{m≥k} w_m)²`, `V = τ² Σ_m m w_m²`.
pub fn sequence_model_risk(model: &SequenceModel, w: &[f64]) -> Result<SequenceRisk> {
    Error::check_len(model.m, w.len())?;
    let theta = model.theta();
    let mut tail = 0.0;
    let mut tails = vec![0.0; model.k];
    for k in (0..model.m).rev() {
        tail += w[k];
        tails[k] = tail;
    }
    let approximation = theta.iter().zip(&tails).map(|(t, s)| t * t * (1.0 - s) * (1.0 - s)).sum();
    let variance =
        model.tau * model.tau * w.iter().enumerate().map(|(m, v)| (m + 1) as f64 * v * v).sum::<f64>();
    Ok(SequenceRisk { approximation, variance, total: approximation + variance })
}

/// What a ρ-sweep evaluates: the closed-form sequence model, or Monte Carlo
/// integrated risk of geometric ensembles on the simulation protocol.
#[derive(Debug, Clone)]
pub enum SweepTarget {
    Model(SequenceModel),
    Protocol(Box<ExperimentConfig>),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepRow {
    pub rho: f64,
    pub risk_a: f64,
    pub risk_v: f64,
    pub risk_total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
    /// Index into `rows` of the smallest total risk (first on ties).
    pub argmin: usize,
}

impl SweepTable {
    pub fn argmin_rho(&self) -> f64 {
        self.rows[self.argmin].rho
    }

    pub fn min_risk(&self) -> f64 {
        self.rows[self.argmin].risk_total
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("rho,risk_A,risk_V,risk_total\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{}\n",
                fmt_real(r.rho),
                fmt_real(r.risk_a),
                fmt_real(r.risk_v),
                fmt_real(r.risk_total)
            ));
        }
        out
    }
}

/// Risk of geometric weights `w_m ∝ ρ^m` for every `ρ` in `grid`.
///
/// On the protocol the split is integrated squared bias and integrated
/// variance (divisor `R`) over the standard quadrature, so `A + V` is the
/// Monte Carlo integrated risk.
pub fn sweep_rho(target: &SweepTarget, grid: &[f64]) -> Result<SweepTable> {
    if grid.is_empty() {
        return Err(Error::InvalidParameter("rho grid is empty".into()));
    }
    let specs: Vec<WeightLawSpec> = grid.iter().map(|&rho| WeightLawSpec::geometric(rho)).collect::<Result<_>>()?;
    let rows: Vec<SweepRow> = match target {
        SweepTarget::Model(model) => specs
            .iter()
            .zip(grid)
            .map(|(spec, &rho)| {
                let w = make_weights(*spec, model.m)?;
                let r = sequence_model_risk(model, w.values())?;
                Ok(SweepRow { rho, risk_a: r.approximation, risk_v: r.variance, risk_total: r.total })
            })
            .collect::<Result<_>>()?,
        SweepTarget::Protocol(config) => {
            config.validate()?;
            let quad = Quadrature::standard(config.domain);
            let truth: Vec<f64> = quad.nodes().iter().map(|&x| config.target.eval(x)).collect();
            let preds: Vec<DMatrix<f64>> = (0..config.replicates)
                .into_par_iter()
                .map(|r| {
                    let data = gen_data(config, r)?;
                    let dict = build_dictionary(config.dictionary.family, config.dictionary.m, &data, &config.dictionary.params)?;
                    Ok(dict.predict_matrix(quad.nodes()))
                })
                .collect::<Result<_>>()?;
            specs
                .iter()
                .zip(grid)
                .map(|(spec, &rho)| {
                    let w = make_weights(*spec, config.dictionary.m)?;
                    let fits: Vec<Vec<f64>> = preds.iter().map(|h| combine(h, w.values())).collect();
                    let (bias, var) = integrated_bias_variance(&fits, &truth, quad.weights());
                    Ok(SweepRow { rho, risk_a: bias, risk_v: var, risk_total: bias + var })
                })
                .collect::<Result<_>>()?
        }
    };
    let argmin = rows
        .iter()
        .enumerate()
        .fold(0, |best, (i, r)| if r.risk_total < rows[best].risk_total { i } else { best });
    Ok(SweepTable { rows, argmin })
}

fn integrated_bias_variance(fits: &[Vec<f64>], truth: &[f64], q: &[f64]) -> (f64, f64) {
    let r = fits.len() as f64;
    let mut bias = 0.0;
    let mut var = 0.0;
    for g in 0..truth.len() {
        let mean = fits.iter().map(|f| f[g]).sum::<f64>() / r;
        bias += q[g] * (mean - truth[g]) * (mean - truth[g]);
        var += q[g] * fits.iter().map(|f| (f[g] - mean) * (f[g] - mean)).sum::<f64>() / r;
    }
    (bias, var)
}
