//! The simulation protocol: data generation, metrics, Monte Carlo
//! bias/variance and result files.

mod config;
mod output;
mod stats;

use std::fs;
use std::path::PathBuf;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::dictionary::{build_dictionary, Dataset, Dictionary};
use crate::error::{Error, Result};
use crate::optimizer::{
    combine, cross_fitted_predictions, optimal_weights_risk_from_predictions, optimal_weights_variance,
    risk_objective, SolveOptions,
};
use crate::quadrature::{simpson, Quadrature};
use crate::rng::{stream_rng, streams};
use crate::weights::{make_weights, WeightLawSpec};

pub use config::{
    DictionaryConfig, ExperimentConfig, OptimizerConfig, Scheme, Target, DEFAULT_FIGURE_GRID, DEFAULT_ISE_GRID,
    DEFAULT_M, DEFAULT_N_TEST, DEFAULT_N_TRAIN, DEFAULT_REPLICATES, DEFAULT_SEED, DEFAULT_SNR, PRESETS,
};
pub use output::{config_hash, fmt_real, scheme_set_name};
pub use stats::{mean_se, sign_test, SignTest};

/// `f_0(x)` for the protocol targets.
pub fn target_eval(target: Target, x: f64) -> f64 {
    target.eval(x)
}

/// `σ² = Var(f_0(X)) / snr` with `X ~ Uniform(domain)`, by 512-node quadrature.
pub fn noise_variance(config: &ExperimentConfig) -> f64 {
    let var = Quadrature::standard(config.domain).variance(|x| config.target.eval(x));
    var / config.snr
}

fn sample(config: &ExperimentConfig, n: usize, replicate: usize, stream: u64) -> Result<Dataset> {
    let sd = noise_variance(config).sqrt();
    let mut rng = stream_rng(config.base_seed, replicate as u64, stream);
    let (lo, len) = (config.domain.lo(), config.domain.length());
    let x: Vec<f64> = (0..n).map(|_| lo + len * rng.random::<f64>()).collect();
    let y = x
        .iter()
        .map(|&xi| {
            let e: f64 = rng.sample(StandardNormal);
            config.target.eval(xi) + sd * e
        })
        .collect();
    Dataset::new(x, y, config.domain, sd, config.target.id())
}

/// Training sample of replicate `replicate`: `x ~ Uniform(domain)`,
/// `y = f_0(x) + N(0, σ²)`.
pub fn gen_data(config: &ExperimentConfig, replicate: usize) -> Result<Dataset> {
    sample(config, config.n_train, replicate, streams::TRAIN)
}

/// Independent test sample of replicate `replicate`.
pub fn gen_test_data(config: &ExperimentConfig, replicate: usize) -> Result<Dataset> {
    sample(config, config.n_test, replicate, streams::TEST)
}

/// Mean squared error of `predictions` against noisy responses.
pub fn test_mse(predictions: &[f64], test: &Dataset) -> Result<f64> {
    Error::check_len(test.len(), predictions.len())?;
    Ok(test.y().iter().zip(predictions).map(|(y, p)| (y - p) * (y - p)).sum::<f64>() / test.len() as f64)
}

/// `∫ (f̂ − f_0)²` over `target`'s domain by composite Simpson on
/// `grid_size` equally spaced points.
pub fn ise<P: Fn(f64) -> f64, F: Fn(f64) -> f64>(
    predictor: P,
    target: F,
    domain: crate::domain::Interval,
    grid_size: usize,
) -> Result<f64> {
    let values: Vec<f64> = domain
        .linspace(grid_size)
        .into_iter()
        .map(|x| {
            let d = predictor(x) - target(x);
            d * d
        })
        .collect();
    simpson(domain, &values)
}

/// Pointwise Monte Carlo bias/variance over replicate predictions.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BiasVariance {
    pub mean: Vec<f64>,
    pub bias_sq: Vec<f64>,
    /// Divisor `R − 1`; `None` when `R = 1`.
    pub variance_unbiased: Option<Vec<f64>>,
    /// Divisor `R`.
    pub variance_mle: Vec<f64>,
    /// Mean squared deviation from the truth, divisor `R`.
    pub mse: Vec<f64>,
    /// `max |mse − (bias² + variance_mle)|`.
    pub max_identity_residual: f64,
    pub integrated_bias_sq: f64,
    pub integrated_variance_unbiased: Option<f64>,
    pub integrated_variance_mle: f64,
    pub integrated_mse: f64,
}

/// Pointwise curves from `R` prediction vectors on a uniform odd-sized grid
/// over `domain`; integrated values use composite Simpson.
pub fn bias_variance_from_replicates(
    predictions: &[Vec<f64>],
    truth: &[f64],
    domain: crate::domain::Interval,
) -> Result<BiasVariance> {
    let r = predictions.len();
    if r == 0 {
        return Err(Error::InsufficientReplicates { need: 1, got: 0 });
    }
    let g = truth.len();
    for p in predictions {
        Error::check_len(g, p.len())?;
    }
    let mut mean = vec![0.0; g];
    let mut bias_sq = vec![0.0; g];
    let mut ss = vec![0.0; g];
    let mut mse = vec![0.0; g];
    for i in 0..g {
        mean[i] = predictions.iter().map(|p| p[i]).sum::<f64>() / r as f64;
        bias_sq[i] = (mean[i] - truth[i]) * (mean[i] - truth[i]);
        ss[i] = predictions.iter().map(|p| (p[i] - mean[i]) * (p[i] - mean[i])).sum::<f64>();
        mse[i] = predictions.iter().map(|p| (p[i] - truth[i]) * (p[i] - truth[i])).sum::<f64>() / r as f64;
    }
    let variance_mle: Vec<f64> = ss.iter().map(|s| s / r as f64).collect();
    let variance_unbiased = (r >= 2).then(|| ss.iter().map(|s| s / (r - 1) as f64).collect::<Vec<_>>());
    let max_identity_residual = (0..g).map(|i| (mse[i] - bias_sq[i] - variance_mle[i]).abs()).fold(0.0, f64::max);
    Ok(BiasVariance {
        integrated_bias_sq: simpson(domain, &bias_sq)?,
        integrated_variance_unbiased: variance_unbiased.as_ref().map(|v| simpson(domain, v)).transpose()?,
        integrated_variance_mle: simpson(domain, &variance_mle)?,
        integrated_mse: simpson(domain, &mse)?,
        mean,
        bias_sq,
        variance_unbiased,
        variance_mle,
        mse,
        max_identity_residual,
    })
}

/// Result of one scheme on one replicate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SchemeOutcome {
    pub weights: Vec<f64>,
    pub test_mse: f64,
    pub ise: f64,
    /// `(1/n)‖y − Hw‖² + λ‖w‖²` on the risk-objective prediction matrix;
    /// present when the configuration includes the risk-optimal scheme.
    pub risk_objective: Option<f64>,
    /// Predictions on the evaluation grid.
    pub curve: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicateOutcome {
    pub replicate: usize,
    /// Same order as `ExperimentConfig::weight_schemes`.
    pub schemes: Vec<SchemeOutcome>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SchemeSummary {
    pub scheme: Scheme,
    pub label: String,
    pub mse_mean: f64,
    pub mse_se: Option<f64>,
    pub ise_mean: f64,
    pub ise_se: Option<f64>,
    /// Paired sign test of this scheme's ISE against uniform weights.
    pub sign_test_vs_uniform: Option<SignTest>,
    /// Mean of the per-replicate weights.
    pub mean_weights: Vec<f64>,
    pub bias_variance: BiasVariance,
    /// Prediction of replicate 0 on the evaluation grid.
    pub figure_prediction: Vec<f64>,
}

/// A qualitative claim checked with a paired sign test over replicates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClaimTest {
    pub claim: String,
    pub test: SignTest,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentResult {
    pub config_id: String,
    pub config_hash: String,
    pub base_seed: u64,
    pub sigma_sq: f64,
    pub eval_grid: Vec<f64>,
    pub truth: Vec<f64>,
    pub schemes: Vec<SchemeSummary>,
    pub replicates: Vec<ReplicateOutcome>,
    pub claims: Vec<ClaimTest>,
    /// Training sample of replicate 0, shown in figures.
    pub figure_train: (Vec<f64>, Vec<f64>),
    /// Files written by [`run_experiment`]; empty for [`simulate`].
    pub files: Vec<PathBuf>,
}

impl ExperimentResult {
    pub fn scheme(&self, scheme: &Scheme) -> Option<&SchemeSummary> {
        self.schemes.iter().find(|s| &s.scheme == scheme)
    }

    fn scheme_index(&self, scheme: &Scheme) -> Option<usize> {
        self.schemes.iter().position(|s| &s.scheme == scheme)
    }

    /// Per-replicate values of `f` for one scheme.
    pub fn per_replicate<F: Fn(&SchemeOutcome) -> f64>(&self, scheme: &Scheme, f: F) -> Option<Vec<f64>> {
        let i = self.scheme_index(scheme)?;
        Some(self.replicates.iter().map(|r| f(&r.schemes[i])).collect())
    }
}

fn run_replicate(config: &ExperimentConfig, replicate: usize, grid: &[f64]) -> Result<(ReplicateOutcome, Dataset)> {
    let train = gen_data(config, replicate)?;
    let test = gen_test_data(config, replicate)?;
    let dc = &config.dictionary;
    let dict: Dictionary = build_dictionary(dc.family, dc.m, &train, &dc.params)?;
    let opt = &config.optimizer;
    let constraints = opt.constraints()?;
    let options = SolveOptions { tol: opt.tol, max_iter: opt.max_iter };

    let needs_risk = config.weight_schemes.contains(&Scheme::OptimalRisk);
    let risk_h: Option<DMatrix<f64>> = if needs_risk {
        Some(cross_fitted_predictions(dc.family, dc.m, &train, &dc.params, opt.risk_folds)?)
    } else {
        None
    };

    let h_test = dict.predict_matrix(test.x());
    let ise_x = config.domain.linspace(config.ise_grid);
    let h_ise = dict.predict_matrix(&ise_x);
    let truth_ise: Vec<f64> = ise_x.iter().map(|&x| config.target.eval(x)).collect();
    let h_grid = dict.predict_matrix(grid);

    let mut outcomes = Vec::with_capacity(config.weight_schemes.len());
    for scheme in &config.weight_schemes {
        let weights = match scheme {
            Scheme::Law(spec) => make_weights(*spec, dc.m)?,
            Scheme::OptimalRisk => {
                let h = risk_h.as_ref().expect("risk matrix computed");
                optimal_weights_risk_from_predictions(h, train.y(), opt.lambda, constraints, &options)?.weights
            }
            Scheme::OptimalVariance => {
                optimal_weights_variance(&dict, train.x(), opt.lambda, constraints, &options)?.0
            }
        };
        let w = weights.values();
        let mse = test_mse(&combine(&h_test, w), &test)?;
        let err: Vec<f64> = combine(&h_ise, w).iter().zip(&truth_ise).map(|(p, t)| (p - t) * (p - t)).collect();
        let ise = simpson(config.domain, &err)?;
        let risk_objective = match &risk_h {
            Some(h) => Some(risk_objective(h, train.y(), w, opt.lambda)?),
            None => None,
        };
        if !(mse.is_finite() && ise.is_finite()) {
            return Err(Error::NonFinite(format!("metrics of scheme {scheme} on replicate {replicate}")));
        }
        outcomes.push(SchemeOutcome { weights: w.to_vec(), test_mse: mse, ise, risk_objective, curve: combine(&h_grid, w) });
    }
    Ok((ReplicateOutcome { replicate, schemes: outcomes }, train))
}

/// Runs every replicate and aggregates, without writing files.
///
/// Replicates run in parallel on the current rayon pool; results are
/// collected in replicate order so the output does not depend on scheduling.
pub fn simulate(config: &ExperimentConfig) -> Result<ExperimentResult> {
    config.validate()?;
    let grid = config.domain.linspace(config.figure_grid);
    let truth: Vec<f64> = grid.iter().map(|&x| config.target.eval(x)).collect();
    let runs: Vec<(ReplicateOutcome, Dataset)> = (0..config.replicates)
        .into_par_iter()
        .map(|r| run_replicate(config, r, &grid))
        .collect::<Result<_>>()?;
    let figure_train = (runs[0].1.x().to_vec(), runs[0].1.y().to_vec());
    let replicates: Vec<ReplicateOutcome> = runs.into_iter().map(|(o, _)| o).collect();

    let uniform_idx = config.weight_schemes.iter().position(|s| *s == Scheme::Law(WeightLawSpec::Uniform));
    let column = |i: usize, f: fn(&SchemeOutcome) -> f64| -> Vec<f64> { replicates.iter().map(|r| f(&r.schemes[i])).collect() };

    let mut schemes = Vec::with_capacity(config.weight_schemes.len());
    for (i, scheme) in config.weight_schemes.iter().enumerate() {
        let mse = column(i, |o| o.test_mse);
        let ise_v = column(i, |o| o.ise);
        let (mse_mean, mse_se) = mean_se(&mse);
        let (ise_mean, ise_se) = mean_se(&ise_v);
        let sign = match uniform_idx {
            Some(u) if u != i => Some(sign_test(&ise_v, &column(u, |o| o.ise))),
            _ => None,
        };
        let m = config.dictionary.m;
        let mean_weights: Vec<f64> = (0..m)
            .map(|k| replicates.iter().map(|r| r.schemes[i].weights[k]).sum::<f64>() / replicates.len() as f64)
            .collect();
        let curves: Vec<Vec<f64>> = replicates.iter().map(|r| r.schemes[i].curve.clone()).collect();
        let bias_variance = bias_variance_from_replicates(&curves, &truth, config.domain)?;
        schemes.push(SchemeSummary {
            scheme: *scheme,
            label: scheme.label(),
            mse_mean,
            mse_se,
            ise_mean,
            ise_se,
            sign_test_vs_uniform: sign,
            mean_weights,
            bias_variance,
            figure_prediction: replicates[0].schemes[i].curve.clone(),
        });
    }

    let mut claims = Vec::new();
    let idx = |s: Scheme| config.weight_schemes.iter().position(|x| *x == s);
    let fib = idx(Scheme::Law(WeightLawSpec::Fibonacci));
    if let (Some(f), Some(u)) = (fib, uniform_idx) {
        claims.push(ClaimTest {
            claim: "ise_fibonacci_lt_uniform".into(),
            test: sign_test(&column(f, |o| o.ise), &column(u, |o| o.ise)),
        });
    }
    for (name, s) in [("ise_optimal_risk_le_fibonacci", Scheme::OptimalRisk), ("ise_optimal_variance_le_fibonacci", Scheme::OptimalVariance)] {
        if let (Some(o), Some(f)) = (idx(s), fib) {
            claims.push(ClaimTest { claim: name.into(), test: sign_test(&column(o, |o| o.ise), &column(f, |o| o.ise)) });
        }
    }

    Ok(ExperimentResult {
        config_id: config.config_id.clone(),
        config_hash: config_hash(config),
        base_seed: config.base_seed,
        sigma_sq: noise_variance(config),
        eval_grid: grid,
        truth,
        schemes,
        replicates,
        claims,
        figure_train,
        files: Vec::new(),
    })
}

/// Full protocol run writing provenance, CSV and SVG outputs to
/// `config.output_dir`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult> {
    run_experiment_with_overrides(config, &[])
}

/// [`run_experiment`], echoing the command-line overrides into provenance.
///
/// Provenance is written before any computation; on failure an
/// `<id>_error.txt` file records the error next to it.
pub fn run_experiment_with_overrides(config: &ExperimentConfig, overrides: &[String]) -> Result<ExperimentResult> {
    config.validate()?;
    let dir = &config.output_dir;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let prov = dir.join(format!("{}_provenance.json", config.config_id));
    output::write_file(&prov, &output::provenance_json(config, overrides))?;
    let error_path = dir.join(format!("{}_error.txt", config.config_id));
    let outcome = simulate(config).and_then(|mut result| {
        let mut files = vec![prov.clone()];
        files.extend(output::write_all(&result, dir)?);
        result.files = files;
        Ok(result)
    });
    match outcome {
        Ok(result) => {
            if error_path.exists() {
                fs::remove_file(&error_path).map_err(|e| Error::io(&error_path, e))?;
            }
            Ok(result)
        }
        Err(e) => {
            let _ = fs::write(&error_path, format!("{e}\n"));
            Err(e)
        }
    }
}

/// Pointwise bias/variance of a single scheme under `config`.
pub fn mc_bias_variance(config: &ExperimentConfig, scheme: Scheme) -> Result<BiasVariance> {
    if config.replicates < 2 {
        return Err(Error::InsufficientReplicates { need: 2, got: config.replicates });
    }
    let mut single = config.clone();
    single.weight_schemes = vec![scheme];
    let result = simulate(&single)?;
    Ok(result.schemes.into_iter().next().expect("one scheme").bias_variance)
}
