use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dictionary::{DictionaryFamily, DictionaryParams, TargetId};
use crate::domain::Interval;
use crate::error::{Error, Result};
use crate::weights::{AdmissibilityConstraints, Orientation, WeightLawSpec};

/// Regression functions of the simulation protocol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Target {
    /// `sin(2πx)`.
    Sin,
    /// `sin(πx)/(πx)`, equal to 1 at 0.
    Sinc,
}

impl Target {
    pub fn eval(self, x: f64) -> f64 {
        match self {
            Target::Sin => (std::f64::consts::TAU * x).sin(),
            Target::Sinc => {
                let t = std::f64::consts::PI * x;
                if x.abs() < 1e-8 {
                    1.0 - t * t / 6.0
                } else {
                    t.sin() / t
                }
            }
        }
    }

    /// `[0, 1]` for sin, `[-5, 5]` for sinc.
    pub fn default_domain(self) -> Interval {
        match self {
            Target::Sin => Interval::unit(),
            Target::Sinc => Interval::new(-5.0, 5.0).expect("valid interval"),
        }
    }

    pub fn id(self) -> TargetId {
        match self {
            Target::Sin => TargetId::Sin,
            Target::Sinc => TargetId::Sinc,
        }
    }
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Target::Sin => "sin",
            Target::Sinc => "sinc",
        })
    }
}

impl FromStr for Target {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "sin" => Ok(Target::Sin),
            "sinc" => Ok(Target::Sinc),
            other => Err(Error::Parse { input: other.into(), reason: "unknown target (expected sin or sinc)".into() }),
        }
    }
}

/// A weighting scheme compared in an experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Scheme {
    /// A fixed weighting law.
    Law(WeightLawSpec),
    /// Minimizer of the empirical risk `(1/n)‖y − Hw‖² + λ‖w‖²`.
    OptimalRisk,
    /// Minimizer of `wᵀΣw + λ‖w‖²`, `Σ` the prediction covariance.
    OptimalVariance,
}

impl Scheme {
    /// Name safe for CSV headers: the text form with commas replaced by `;`.
    pub fn label(&self) -> String {
        self.to_string().replace(',', ";")
    }

    pub fn is_data_dependent(&self) -> bool {
        !matches!(self, Scheme::Law(_))
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scheme::Law(spec) => spec.fmt(f),
            Scheme::OptimalRisk => f.write_str("optimal-risk"),
            Scheme::OptimalVariance => f.write_str("optimal-variance"),
        }
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "optimal-risk" | "optimal" => Ok(Scheme::OptimalRisk),
            "optimal-variance" => Ok(Scheme::OptimalVariance),
            _ => Ok(Scheme::Law(s.replace(';', ",").parse()?)),
        }
    }
}

impl TryFrom<String> for Scheme {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Scheme> for String {
    fn from(s: Scheme) -> String {
        s.to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DictionaryConfig {
    pub family: DictionaryFamily,
    pub m: usize,
    pub params: DictionaryParams,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub lambda: f64,
    pub orientation: Orientation,
    pub l2_bound: Option<f64>,
    pub tol: f64,
    pub max_iter: usize,
    /// Folds for the out-of-fold prediction matrix of the risk objective;
    /// values below 2 use in-sample predictions.
    pub risk_folds: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            lambda: 1e-4,
            orientation: Orientation::NonDecreasing,
            l2_bound: None,
            tol: 1e-8,
            max_iter: 50_000,
            risk_folds: 5,
        }
    }
}

impl OptimizerConfig {
    pub fn constraints(&self) -> Result<AdmissibilityConstraints> {
        let c = AdmissibilityConstraints::monotone(self.orientation);
        match self.l2_bound {
            Some(b) => c.with_l2_bound(b),
            None => Ok(c),
        }
    }
}

pub const DEFAULT_N_TRAIN: usize = 400;
pub const DEFAULT_N_TEST: usize = 1000;
pub const DEFAULT_SNR: f64 = 5.0;
pub const DEFAULT_REPLICATES: usize = 50;
pub const DEFAULT_M: usize = 8;
pub const DEFAULT_SEED: u64 = 20_240_601;
pub const DEFAULT_ISE_GRID: usize = 2001;
pub const DEFAULT_FIGURE_GRID: usize = 201;

/// Names of the built-in configurations.
pub const PRESETS: [&str; 4] = ["sin_poly", "sinc_poly", "sinc_rff", "sin_spline"];

/// Declarative description of one simulation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub config_id: String,
    pub target: Target,
    pub domain: Interval,
    pub n_train: usize,
    pub n_test: usize,
    pub snr: f64,
    pub replicates: usize,
    pub dictionary: DictionaryConfig,
    pub weight_schemes: Vec<Scheme>,
    pub optimizer: OptimizerConfig,
    pub base_seed: u64,
    /// Points of the composite Simpson rule used for the ISE (odd).
    pub ise_grid: usize,
    /// Points of the evaluation grid for figures and bias/variance curves (odd).
    pub figure_grid: usize,
    pub output_dir: PathBuf,
}

impl ExperimentConfig {
    /// Protocol defaults for `target` with a `family` dictionary.
    pub fn new(target: Target, family: DictionaryFamily) -> Self {
        let domain = target.default_domain();
        ExperimentConfig {
            config_id: format!("{target}_{family}"),
            target,
            domain,
            n_train: DEFAULT_N_TRAIN,
            n_test: DEFAULT_N_TEST,
            snr: DEFAULT_SNR,
            replicates: DEFAULT_REPLICATES,
            dictionary: DictionaryConfig { family, m: DEFAULT_M, params: DictionaryParams::for_domain(domain) },
            weight_schemes: vec![Scheme::Law(WeightLawSpec::Uniform), Scheme::Law(WeightLawSpec::Fibonacci), Scheme::OptimalRisk],
            optimizer: OptimizerConfig::default(),
            base_seed: DEFAULT_SEED,
            ise_grid: DEFAULT_ISE_GRID,
            figure_grid: DEFAULT_FIGURE_GRID,
            output_dir: PathBuf::from("results"),
        }
    }

    /// One of [`PRESETS`].
    pub fn preset(name: &str) -> Result<Self> {
        let (target, family) = match name {
            "sin_poly" => (Target::Sin, DictionaryFamily::Poly),
            "sinc_poly" => (Target::Sinc, DictionaryFamily::Poly),
            "sinc_rff" => (Target::Sinc, DictionaryFamily::Rff),
            "sin_spline" => (Target::Sin, DictionaryFamily::Spline),
            other => {
                return Err(Error::UnknownKey { key: other.into(), context: "preset".into() });
            }
        };
        Ok(Self::new(target, family))
    }

    /// Changes the domain and rescales the domain-dependent dictionary defaults.
    pub fn with_domain(mut self, domain: Interval) -> Self {
        self.domain = domain;
        self.dictionary.params = DictionaryParams::for_domain(domain);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let id_ok = !self.config_id.is_empty()
            && self.config_id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'));
        if !id_ok {
            return Err(Error::InvalidParameter(format!(
                "config_id `{}` must be non-empty and use only [A-Za-z0-9_.-]",
                self.config_id
            )));
        }
        if self.n_train < 2 || self.n_test < 2 {
            return Err(Error::Range("n_train and n_test must be at least 2".into()));
        }
        if !(self.snr.is_finite() && self.snr > 0.0) {
            return Err(Error::Range(format!("snr must be positive, got {}", self.snr)));
        }
        if self.replicates == 0 {
            return Err(Error::Range("R must be at least 1".into()));
        }
        for (name, n) in [("ise_grid", self.ise_grid), ("figure_grid", self.figure_grid)] {
            if n < 3 || n % 2 == 0 {
                return Err(Error::Range(format!("{name} must be odd and at least 3, got {n}")));
            }
        }
        if self.weight_schemes.is_empty() {
            return Err(Error::InvalidParameter("weight_schemes is empty".into()));
        }
        if self.dictionary.m == 0 {
            return Err(Error::Range("dictionary M must be at least 1".into()));
        }
        let o = &self.optimizer;
        if !(o.lambda.is_finite() && o.lambda >= 0.0) {
            return Err(Error::Range(format!("optimizer lambda must be nonnegative, got {}", o.lambda)));
        }
        if !(o.tol.is_finite() && o.tol > 0.0) || o.max_iter == 0 {
            return Err(Error::Range("optimizer tol must be positive and max_iter at least 1".into()));
        }
        if o.risk_folds > self.n_train {
            return Err(Error::Range(format!("risk_folds ({}) exceeds n_train ({})", o.risk_folds, self.n_train)));
        }
        o.constraints()?.check_feasible(self.dictionary.m)?;
        crate::dictionary::ladder(self.dictionary.family, self.dictionary.m, &self.dictionary.params)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn target_values() {
        assert_eq!(Target::Sinc.eval(0.0), 1.0);
        assert!((Target::Sin.eval(0.25) - 1.0).abs() < 1e-15);
        assert!(Target::Sinc.eval(1.0).abs() < 1e-15);
        assert!((Target::Sinc.eval(1e-9) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn scheme_text_round_trip() {
        for s in ["uniform", "fibonacci", "optimal-risk", "optimal-variance", "subexp:c=0.5,beta=0.5"] {
            let parsed: Scheme = s.parse().unwrap();
            assert_eq!(parsed.to_string().parse::<Scheme>().unwrap(), parsed);
            assert_eq!(parsed.label().parse::<Scheme>().unwrap(), parsed);
        }
        assert!(!Scheme::OptimalRisk.label().contains(','));
    }

    #[test]
    fn presets_validate() {
        for p in PRESETS {
            let c = ExperimentConfig::preset(p).unwrap();
            assert_eq!(c.config_id, p);
            c.validate().unwrap();
        }
        assert!(ExperimentConfig::preset("nope").is_err());
    }
}
