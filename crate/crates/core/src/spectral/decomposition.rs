//! Monte Carlo approximation / variance / smoothing decomposition.

use std::fmt::Write as _;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use super::{approximation_from_coeffs, effective_cutoff, smoothing_from_coeffs, variance_term, BasisKind, OrthoBasis};
use crate::dictionary::build_dictionary;
use crate::domain::Interval;
use crate::error::{Error, Result};
use crate::experiment::{fmt_real, gen_data, mean_se, noise_variance, ExperimentConfig};
use crate::optimizer::{combine, SequenceModel};
use crate::rng::{stream_rng, streams};

/// Synthetic dictionary whose learners are known in coefficient space:
/// `f* = Σ_k θ_k φ_k` and learner `m` has noisy coefficients on modes `1…m`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Testbed {
    pub model: SequenceModel,
    pub noise_sd: f64,
    pub basis: BasisKind,
    pub domain: Interval,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub enum DecompositionSetup {
    /// Refit the configured dictionary on fresh protocol datasets; `modes`
    /// defaults to `4M`.
    Protocol { config: Box<ExperimentConfig>, basis: BasisKind, modes: Option<usize> },
    Testbed(Testbed),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecompositionReport {
    /// `Σ_k (b̄_k − θ_k)²` from the replicate-mean coefficients.
    pub approximation: f64,
    /// `Σ_k Var(b_k)`, divisor `R − 1`.
    pub variance_term: f64,
    /// `Σ_k (θ_k² − b̄_k²)`, a diagnostic.
    pub smoothing: f64,
    pub sigma_sq: f64,
    /// Mean over replicates of the squared error against fresh noisy responses
    /// at the quadrature nodes.
    pub mc_mse: f64,
    pub mc_mse_se: f64,
    /// `mc_mse − (A + V + σ²)`.
    pub identity_residual: f64,
    /// `‖f̄ − f*‖²` in function space.
    pub bias_sq: f64,
    /// `E‖f̂ − f̄‖²` in function space, divisor `R − 1`.
    pub variance: f64,
    pub effective_cutoff: usize,
    pub truncation_tail: f64,
    pub modes: usize,
    pub replicates: usize,
    pub theta: Vec<f64>,
    pub mean_coeffs: Vec<f64>,
}

impl DecompositionReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("term,value,std_error\n");
        let se = fmt_real(self.mc_mse_se);
        let rows: [(&str, String, &str); 10] = [
            ("A", fmt_real(self.approximation), ""),
            ("V", fmt_real(self.variance_term), ""),
            ("S", fmt_real(self.smoothing), ""),
            ("sigma_sq", fmt_real(self.sigma_sq), ""),
            ("mc_mse", fmt_real(self.mc_mse), &se),
            ("identity_residual", fmt_real(self.identity_residual), &se),
            ("effective_cutoff", self.effective_cutoff.to_string(), ""),
            ("truncation_tail", fmt_real(self.truncation_tail), ""),
            ("bias_sq", fmt_real(self.bias_sq), ""),
            ("variance", fmt_real(self.variance), ""),
        ];
        for (term, value, err) in rows {
            let _ = writeln!(out, "{term},{value},{err}");
        }
        out
    }

    /// Whether `|residual| ≤ k·se + truncation tail`.
    pub fn identity_holds(&self, k: f64) -> bool {
        self.identity_residual.abs() <= k * self.mc_mse_se + self.truncation_tail.max(0.0)
    }
}

struct Replicate {
    coeffs: Vec<f64>,
    fit: Vec<f64>,
    mse: f64,
}

/// Fresh noisy response vectors averaged per replicate in `mc_mse`.
pub const FRESH_NOISE_DRAWS: usize = 16;

fn fresh_noise_mse(seed: u64, r: usize, sd: f64, truth: &[f64], fit: &[f64], q: &[f64]) -> f64 {
    let mut rng = stream_rng(seed, r as u64, streams::FRESH_NOISE);
    let mut total = 0.0;
    for _ in 0..FRESH_NOISE_DRAWS {
        total += truth
            .iter()
            .zip(fit)
            .zip(q)
            .map(|((t, f), w)| {
                let e: f64 = rng.sample(StandardNormal);
                let d = t + sd * e - f;
                w * d * d
            })
            .sum::<f64>();
    }
    total / FRESH_NOISE_DRAWS as f64
}

/// Refits on `replicates` independent draws and reports the decomposition
/// terms for the fixed weights `w`.
pub fn decomposition_report(setup: &DecompositionSetup, w: &[f64], replicates: usize) -> Result<DecompositionReport> {
    if replicates < 2 {
        return Err(Error::InsufficientReplicates { need: 2, got: replicates });
    }
    let (basis, truth, sigma_sq, reps) = match setup {
        DecompositionSetup::Protocol { config, basis, modes } => {
            config.validate()?;
            let m = config.dictionary.m;
            Error::check_len(m, w.len())?;
            let basis = OrthoBasis::new(*basis, modes.unwrap_or(4 * m), config.domain)?;
            let nodes = basis.quadrature().nodes().to_vec();
            let truth: Vec<f64> = nodes.iter().map(|&x| config.target.eval(x)).collect();
            let sigma_sq = noise_variance(config);
            let sd = sigma_sq.sqrt();
            let reps: Vec<Replicate> = (0..replicates)
                .into_par_iter()
                .map(|r| {
                    let data = gen_data(config, r)?;
                    let dc = &config.dictionary;
                    let dict = build_dictionary(dc.family, dc.m, &data, &dc.params)?;
                    let fit = combine(&dict.predict_matrix(&nodes), w);
                    let coeffs = basis.expand_values(&fit)?;
                    let mse = fresh_noise_mse(config.base_seed, r, sd, &truth, &fit, basis.quadrature().weights());
                    Ok(Replicate { coeffs, fit, mse })
                })
                .collect::<Result<_>>()?;
            (basis, truth, sigma_sq, reps)
        }
        DecompositionSetup::Testbed(tb) => {
            let model = tb.model;
            Error::check_len(model.m, w.len())?;
            if !(tb.noise_sd.is_finite() && tb.noise_sd >= 0.0) {
                return Err(Error::Range(format!("noise sd must be nonnegative, got {}", tb.noise_sd)));
            }
            let basis = OrthoBasis::new(tb.basis, model.k, tb.domain)?;
            let truth = basis.synthesize_at_nodes(&model.theta())?;
            let wv = nalgebra::DVector::from_column_slice(w);
            let reps: Vec<Replicate> = (0..replicates)
                .into_par_iter()
                .map(|r| {
                    let mut rng = stream_rng(tb.seed, r as u64, streams::TESTBED);
                    let a = model.sample_coefficients(&mut rng);
                    let coeffs: Vec<f64> = (a.transpose() * &wv).iter().copied().collect();
                    let fit = basis.synthesize_at_nodes(&coeffs)?;
                    let mse = fresh_noise_mse(tb.seed, r, tb.noise_sd, &truth, &fit, basis.quadrature().weights());
                    Ok(Replicate { coeffs, fit, mse })
                })
                .collect::<Result<_>>()?;
            (basis, truth, tb.noise_sd * tb.noise_sd, reps)
        }
    };

    let quad = basis.quadrature();
    let k = basis.modes();
    let rf = replicates as f64;
    let theta = basis.expand_values(&truth)?;
    let energy = quad.inner(&truth, &truth);
    let mean_coeffs: Vec<f64> = (0..k).map(|j| reps.iter().map(|r| r.coeffs[j]).sum::<f64>() / rf).collect();
    let rows: Vec<Vec<f64>> = reps.iter().map(|r| r.coeffs.clone()).collect();
    let approximation = approximation_from_coeffs(&theta, &mean_coeffs)?;
    let variance_term = variance_term(&rows)?;
    let smoothing = smoothing_from_coeffs(&theta, &mean_coeffs)?;
    let (mc_mse, se) = mean_se(&reps.iter().map(|r| r.mse).collect::<Vec<_>>());

    let g = truth.len();
    let mean_fit: Vec<f64> = (0..g).map(|i| reps.iter().map(|r| r.fit[i]).sum::<f64>() / rf).collect();
    let bias_sq = quad.weights().iter().enumerate().map(|(i, q)| q * (mean_fit[i] - truth[i]).powi(2)).sum();
    let variance = reps
        .iter()
        .map(|r| quad.weights().iter().enumerate().map(|(i, q)| q * (r.fit[i] - mean_fit[i]).powi(2)).sum::<f64>())
        .sum::<f64>()
        / (rf - 1.0);

    Ok(DecompositionReport {
        approximation,
        variance_term,
        smoothing,
        sigma_sq,
        mc_mse,
        mc_mse_se: se.unwrap_or(0.0),
        identity_residual: mc_mse - (approximation + variance_term + sigma_sq),
        bias_sq,
        variance,
        effective_cutoff: effective_cutoff(&mean_coeffs),
        truncation_tail: energy - theta.iter().map(|t| t * t).sum::<f64>(),
        modes: k,
        replicates,
        theta,
        mean_coeffs,
    })
}
