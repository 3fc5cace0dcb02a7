//! Base learners and complexity-ordered dictionaries.

mod bspline;
mod learner;
mod ortho;

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::domain::Interval;
use crate::error::{Error, Result};

pub use learner::{
    draw_fourier_features, fit, BasisMeta, FittedLearner, LearnerSpec, DEFAULT_KRR_RIDGE, DEFAULT_RFF_RIDGE,
    DEFAULT_SPLINE_RIDGE,
};
pub use ortho::{gram_schmidt, OrthoDecomposition, DROP_TOL};

/// Which regression function generated a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TargetId {
    Sin,
    Sinc,
    Custom,
}

/// Univariate regression sample on a known domain.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: Vec<f64>,
    y: Vec<f64>,
    domain: Interval,
    noise_sd: f64,
    target: TargetId,
}

impl Dataset {
    pub fn new(x: Vec<f64>, y: Vec<f64>, domain: Interval, noise_sd: f64, target: TargetId) -> Result<Self> {
        Error::check_len(x.len(), y.len())?;
        if x.is_empty() {
            return Err(Error::InsufficientData("dataset must contain at least one point".into()));
        }
        if x.iter().chain(&y).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("dataset values".into()));
        }
        if let Some(v) = x.iter().find(|&&v| !domain.contains(v)) {
            return Err(Error::Range(format!("x = {v} lies outside {domain}")));
        }
        if !(noise_sd.is_finite() && noise_sd >= 0.0) {
            return Err(Error::Range(format!("noise sd must be nonnegative, got {noise_sd}")));
        }
        Ok(Dataset { x, y, domain, noise_sd, target })
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn domain(&self) -> Interval {
        self.domain
    }

    pub fn noise_sd(&self) -> f64 {
        self.noise_sd
    }

    pub fn target(&self) -> TargetId {
        self.target
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// The sub-sample at `indices`, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        Dataset::new(
            indices.iter().map(|&i| self.x[i]).collect(),
            indices.iter().map(|&i| self.y[i]).collect(),
            self.domain,
            self.noise_sd,
            self.target,
        )
    }
}

/// Learner family of an ordered dictionary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DictionaryFamily {
    Krr,
    Spline,
    Poly,
    Rff,
}

impl fmt::Display for DictionaryFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Krr => "krr",
            Self::Spline => "spline",
            Self::Poly => "poly",
            Self::Rff => "rff",
        })
    }
}

impl FromStr for DictionaryFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "krr" => Ok(Self::Krr),
            "spline" => Ok(Self::Spline),
            "poly" => Ok(Self::Poly),
            "rff" => Ok(Self::Rff),
            other => Err(Error::Parse { input: other.into(), reason: "unknown dictionary family".into() }),
        }
    }
}

/// Hyperparameters of the complexity ladders.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DictionaryParams {
    pub krr_gamma_max: f64,
    pub krr_gamma_min: f64,
    pub krr_lambda: f64,
    pub spline_lambda: f64,
    pub rff_max_features: usize,
    pub rff_gamma: f64,
    pub rff_seed: u64,
    pub rff_lambda: f64,
}

impl DictionaryParams {
    /// Defaults scaled to the domain length `L`: kernel bandwidths from `L/2`
    /// down to `L/50`, Fourier bandwidth `L/20`.
    pub fn for_domain(domain: Interval) -> Self {
        let l = domain.length();
        DictionaryParams {
            krr_gamma_max: 0.5 * l,
            krr_gamma_min: 0.02 * l,
            krr_lambda: DEFAULT_KRR_RIDGE,
            spline_lambda: 1e-6,
            rff_max_features: 200,
            rff_gamma: 0.05 * l,
            rff_seed: 7,
            rff_lambda: DEFAULT_RFF_RIDGE,
        }
    }
}

/// Largest dictionary size for the spline doubling ladder (2^20 knots).
pub const MAX_SPLINE_LADDER: usize = 20;

/// Learner specs of the `m`-step ladder for `family`, lowest complexity first.
pub fn ladder(family: DictionaryFamily, m: usize, params: &DictionaryParams) -> Result<Vec<LearnerSpec>> {
    if m == 0 {
        return Err(Error::InvalidParameter("dictionary size M must be >= 1".into()));
    }
    let specs: Vec<LearnerSpec> = match family {
        DictionaryFamily::Poly => (1..=m).map(|d| LearnerSpec::Polynomial { degree: d }).collect(),
        DictionaryFamily::Spline => {
            if m > MAX_SPLINE_LADDER {
                return Err(Error::Range(format!("spline ladder supports M <= {MAX_SPLINE_LADDER}, got {m}")));
            }
            (1..=m)
                .map(|i| LearnerSpec::CubicSpline { interior_knots: 1usize << i, ridge: params.spline_lambda })
                .collect()
        }
        DictionaryFamily::Krr => {
            if params.krr_gamma_min > params.krr_gamma_max {
                return Err(Error::Range("krr_gamma_min must not exceed krr_gamma_max".into()));
            }
            let ratio = params.krr_gamma_min / params.krr_gamma_max;
            (0..m)
                .map(|i| {
                    let frac = if m == 1 { 0.0 } else { i as f64 / (m - 1) as f64 };
                    LearnerSpec::KernelRidge { bandwidth: params.krr_gamma_max * ratio.powf(frac), ridge: params.krr_lambda }
                })
                .collect()
        }
        DictionaryFamily::Rff => {
            if params.rff_max_features < m {
                return Err(Error::Range(format!(
                    "rff_max_features ({}) must be at least M ({m})",
                    params.rff_max_features
                )));
            }
            (1..=m)
                .map(|i| LearnerSpec::RandomFourier {
                    features: (i * params.rff_max_features).div_ceil(m),
                    bandwidth: params.rff_gamma,
                    seed: params.rff_seed,
                    ridge: params.rff_lambda,
                })
                .collect()
        }
    };
    specs.into_iter().map(LearnerSpec::validated).collect()
}

/// An ordered collection of fitted learners; index order is complexity order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Dictionary {
    learners: Vec<FittedLearner>,
    ordering_note: String,
    ortho: Option<OrthoDecomposition>,
}

impl Dictionary {
    pub fn new(learners: Vec<FittedLearner>, ordering_note: impl Into<String>) -> Result<Self> {
        if learners.is_empty() {
            return Err(Error::InvalidParameter("dictionary needs at least one learner".into()));
        }
        Ok(Dictionary { learners, ordering_note: ordering_note.into(), ortho: None })
    }

    pub fn learners(&self) -> &[FittedLearner] {
        &self.learners
    }

    pub fn len(&self) -> usize {
        self.learners.len()
    }

    pub fn is_empty(&self) -> bool {
        self.learners.is_empty()
    }

    pub fn ordering_note(&self) -> &str {
        &self.ordering_note
    }

    pub fn ortho(&self) -> Option<&OrthoDecomposition> {
        self.ortho.as_ref()
    }

    /// `G × M` matrix of learner predictions at `x`.
    pub fn predict_matrix(&self, x: &[f64]) -> DMatrix<f64> {
        let cols: Vec<Vec<f64>> = self.learners.iter().map(|h| h.predict(x)).collect();
        DMatrix::from_fn(x.len(), self.len(), |i, j| cols[j][i])
    }
}

/// Fits an `m`-learner dictionary with complexity increasing in the index.
pub fn build_dictionary(
    family: DictionaryFamily,
    m: usize,
    data: &Dataset,
    params: &DictionaryParams,
) -> Result<Dictionary> {
    let specs = ladder(family, m, params)?;
    let learners = match family {
        DictionaryFamily::Rff => {
            // one shared draw, learner m keeps its lowest-|ω| prefix
            let (freqs, phases) = draw_fourier_features(params.rff_max_features, params.rff_gamma, params.rff_seed);
            specs
                .iter()
                .map(|spec| {
                    let LearnerSpec::RandomFourier { features, ridge, .. } = *spec else { unreachable!() };
                    learner::fit_fourier(*spec, data, freqs[..features].to_vec(), phases[..features].to_vec(), ridge)
                })
                .collect::<Result<Vec<_>>>()?
        }
        _ => specs.iter().map(|s| fit(s, data)).collect::<Result<Vec<_>>>()?,
    };
    let note = match family {
        DictionaryFamily::Poly => format!("polynomial degree 1..{m} (Chebyshev basis)"),
        DictionaryFamily::Spline => format!("cubic spline interior knots 2..{} (doubling)", 1usize << m),
        DictionaryFamily::Krr => format!(
            "Gaussian KRR bandwidth {}..{} (geometric, decreasing)",
            params.krr_gamma_max, params.krr_gamma_min
        ),
        DictionaryFamily::Rff => format!(
            "random Fourier prefixes of {} features sorted by |omega|",
            params.rff_max_features
        ),
    };
    Dictionary::new(learners, note)
}

/// Orthogonalizes `dict` in the empirical `L²` inner product defined by the
/// quadrature nodes `grid` and `weights`.
pub fn orthogonalize(dict: &Dictionary, grid: &[f64], weights: &[f64]) -> Result<Dictionary> {
    Error::check_len(grid.len(), weights.len())?;
    let need = 4 * dict.len();
    if grid.len() < need {
        return Err(Error::InsufficientPoints { need, got: grid.len() });
    }
    let columns: Vec<Vec<f64>> = dict.learners.iter().map(|h| h.predict(grid)).collect();
    let ortho = gram_schmidt(&columns, weights)?;
    Ok(Dictionary { ortho: Some(ortho), ..dict.clone() })
}
