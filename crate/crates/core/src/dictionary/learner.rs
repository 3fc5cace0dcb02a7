use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::bspline;
use super::Dataset;
use crate::domain::Interval;
use crate::error::{Error, Result};
use crate::linalg::{ridge_least_squares, spd_solve};
use crate::weights::{split_text_form, Params};

/// A base-learner family with its hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum LearnerSpec {
    /// Gaussian-kernel ridge regression, system `(K + n λ I) c = y`.
    KernelRidge { bandwidth: f64, ridge: f64 },
    /// Least squares on a cubic B-spline basis with equally spaced interior knots.
    CubicSpline { interior_knots: usize, ridge: f64 },
    /// Least squares on a Chebyshev basis of the given degree.
    Polynomial { degree: usize },
    /// Ridge regression on `√(2/D) cos(ω x + b)` features, `ω ~ N(0, 1/γ²)`.
    RandomFourier { features: usize, bandwidth: f64, seed: u64, ridge: f64 },
}

pub const DEFAULT_KRR_RIDGE: f64 = 1e-3;
pub const DEFAULT_SPLINE_RIDGE: f64 = 0.0;
pub const DEFAULT_RFF_RIDGE: f64 = 1e-4;

impl LearnerSpec {
    pub fn validated(self) -> Result<Self> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::Range(format!("{name} must be positive, got {v}")))
            }
        };
        match self {
            Self::KernelRidge { bandwidth, ridge } => {
                positive("bandwidth", bandwidth)?;
                positive("ridge", ridge)?;
            }
            Self::CubicSpline { interior_knots, ridge } => {
                if interior_knots == 0 {
                    return Err(Error::Range("spline needs at least one interior knot".into()));
                }
                if !(ridge.is_finite() && ridge >= 0.0) {
                    return Err(Error::Range(format!("ridge must be nonnegative, got {ridge}")));
                }
            }
            Self::Polynomial { .. } => {}
            Self::RandomFourier { features, bandwidth, ridge, .. } => {
                if features == 0 {
                    return Err(Error::Range("random Fourier learner needs D >= 1".into()));
                }
                positive("bandwidth", bandwidth)?;
                positive("ridge", ridge)?;
            }
        }
        Ok(self)
    }

    pub fn family_name(&self) -> &'static str {
        match self {
            Self::KernelRidge { .. } => "krr",
            Self::CubicSpline { .. } => "spline",
            Self::Polynomial { .. } => "poly",
            Self::RandomFourier { .. } => "rff",
        }
    }
}

impl fmt::Display for LearnerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Self::KernelRidge { bandwidth, ridge } => write!(f, "krr:gamma={bandwidth},lambda={ridge}"),
            Self::CubicSpline { interior_knots, ridge } => write!(f, "spline:knots={interior_knots},lambda={ridge}"),
            Self::Polynomial { degree } => write!(f, "poly:degree={degree}"),
            Self::RandomFourier { features, bandwidth, seed, ridge } => {
                write!(f, "rff:D={features},gamma={bandwidth},seed={seed},lambda={ridge}")
            }
        }
    }
}

impl FromStr for LearnerSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (name, pairs) = split_text_form(s)?;
        let mut p = Params::new(s, pairs);
        let spec = match name.as_str() {
            "krr" => Self::KernelRidge {
                bandwidth: p.f64("gamma")?,
                ridge: p.f64_opt("lambda")?.unwrap_or(DEFAULT_KRR_RIDGE),
            },
            "spline" => Self::CubicSpline {
                interior_knots: p.u64("knots")? as usize,
                ridge: p.f64_opt("lambda")?.unwrap_or(DEFAULT_SPLINE_RIDGE),
            },
            "poly" => Self::Polynomial { degree: p.u64("degree")? as usize },
            "rff" => Self::RandomFourier {
                features: p.u64("d")? as usize,
                bandwidth: p.f64("gamma")?,
                seed: p.u64_opt("seed")?.unwrap_or(0),
                ridge: p.f64_opt("lambda")?.unwrap_or(DEFAULT_RFF_RIDGE),
            },
            other => return Err(Error::Parse { input: s.into(), reason: format!("unknown learner `{other}`") }),
        };
        p.finish()?;
        spec.validated()
    }
}

impl TryFrom<String> for LearnerSpec {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<LearnerSpec> for String {
    fn from(spec: LearnerSpec) -> String {
        spec.to_string()
    }
}

/// Everything needed to evaluate a fitted learner besides its coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum BasisMeta {
    Kernel { centers: Vec<f64>, bandwidth: f64 },
    Spline { knots: Vec<f64> },
    Chebyshev,
    Fourier { frequencies: Vec<f64>, phases: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedLearner {
    spec: LearnerSpec,
    domain: Interval,
    coefficients: Vec<f64>,
    basis: BasisMeta,
}

impl FittedLearner {
    /// A polynomial given directly by Chebyshev coefficients on `domain`.
    pub fn from_chebyshev(domain: Interval, coefficients: Vec<f64>) -> Result<Self> {
        if coefficients.is_empty() {
            return Err(Error::InvalidParameter("need at least one Chebyshev coefficient".into()));
        }
        if coefficients.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite("Chebyshev coefficients".into()));
        }
        Ok(FittedLearner {
            spec: LearnerSpec::Polynomial { degree: coefficients.len() - 1 },
            domain,
            coefficients,
            basis: BasisMeta::Chebyshev,
        })
    }

    pub fn spec(&self) -> &LearnerSpec {
        &self.spec
    }

    pub fn domain(&self) -> Interval {
        self.domain
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn basis(&self) -> &BasisMeta {
        &self.basis
    }

    pub fn predict_one(&self, x: f64) -> f64 {
        match &self.basis {
            BasisMeta::Kernel { centers, bandwidth } => {
                let scale = -0.5 / (bandwidth * bandwidth);
                centers
                    .iter()
                    .zip(&self.coefficients)
                    .map(|(c, a)| a * (scale * (x - c) * (x - c)).exp())
                    .sum()
            }
            BasisMeta::Spline { knots } => {
                let (first, vals) = bspline::eval_nonzero(knots, x);
                vals.iter().zip(&self.coefficients[first..first + bspline::ORDER]).map(|(b, c)| b * c).sum()
            }
            BasisMeta::Chebyshev => chebyshev_sum(&self.coefficients, self.domain.to_symmetric(x)),
            BasisMeta::Fourier { frequencies, phases } => {
                let scale = (2.0 / frequencies.len() as f64).sqrt();
                frequencies
                    .iter()
                    .zip(phases)
                    .zip(&self.coefficients)
                    .map(|((w, b), c)| c * scale * (w * x + b).cos())
                    .sum()
            }
        }
    }

    /// Pointwise evaluation; points outside the domain are extrapolated
    /// (see [`FittedLearner::out_of_domain`]).
    pub fn predict(&self, x: &[f64]) -> Vec<f64> {
        x.iter().map(|&v| self.predict_one(v)).collect()
    }

    /// Number of evaluation points lying outside the training domain.
    pub fn out_of_domain(&self, x: &[f64]) -> usize {
        x.iter().filter(|&&v| !self.domain.contains(v)).count()
    }
}

/// Clenshaw summation of `Σ_k c_k T_k(t)`.
fn chebyshev_sum(c: &[f64], t: f64) -> f64 {
    let mut b1 = 0.0;
    let mut b2 = 0.0;
    for &ck in c.iter().skip(1).rev() {
        let b0 = 2.0 * t * b1 - b2 + ck;
        b2 = b1;
        b1 = b0;
    }
    c[0] + t * b1 - b2
}

fn chebyshev_design(x: &[f64], domain: Interval, degree: usize) -> DMatrix<f64> {
    let mut a = DMatrix::zeros(x.len(), degree + 1);
    for (i, &xi) in x.iter().enumerate() {
        let t = domain.to_symmetric(xi);
        a[(i, 0)] = 1.0;
        if degree >= 1 {
            a[(i, 1)] = t;
        }
        for k in 2..=degree {
            a[(i, k)] = 2.0 * t * a[(i, k - 1)] - a[(i, k - 2)];
        }
    }
    a
}

/// Draws `d` random Fourier features for bandwidth `γ`, sorted by `|ω|`.
pub fn draw_fourier_features(d: usize, bandwidth: f64, seed: u64) -> (Vec<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0 / bandwidth).expect("bandwidth validated positive");
    let mut pairs: Vec<(f64, f64)> = (0..d)
        .map(|_| {
            let w = normal.sample(&mut rng);
            let b = rng.random_range(0.0..std::f64::consts::TAU);
            (w, b)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.abs().total_cmp(&b.0.abs()));
    pairs.into_iter().unzip()
}

pub(crate) fn fit_fourier(
    spec: LearnerSpec,
    data: &Dataset,
    frequencies: Vec<f64>,
    phases: Vec<f64>,
    ridge: f64,
) -> Result<FittedLearner> {
    let d = frequencies.len();
    let n = data.len();
    let scale = (2.0 / d as f64).sqrt();
    let design = DMatrix::from_fn(n, d, |i, j| scale * (frequencies[j] * data.x()[i] + phases[j]).cos());
    let y = DVector::from_column_slice(data.y());
    let beta = ridge_least_squares(&design, &y, n as f64 * ridge)?;
    Ok(FittedLearner {
        spec,
        domain: data.domain(),
        coefficients: beta.iter().copied().collect(),
        basis: BasisMeta::Fourier { frequencies, phases },
    })
}

/// Fits one base learner to `data`.
pub fn fit(spec: &LearnerSpec, data: &Dataset) -> Result<FittedLearner> {
    let spec = spec.validated()?;
    let n = data.len();
    let domain = data.domain();
    let learner = match spec {
        LearnerSpec::KernelRidge { bandwidth, ridge } => {
            let x = data.x();
            let scale = -0.5 / (bandwidth * bandwidth);
            let mut k = DMatrix::from_fn(n, n, |i, j| (scale * (x[i] - x[j]) * (x[i] - x[j])).exp());
            for i in 0..n {
                k[(i, i)] += n as f64 * ridge;
            }
            let c = spd_solve(k, &DVector::from_column_slice(data.y()))?;
            FittedLearner {
                spec,
                domain,
                coefficients: c.iter().copied().collect(),
                basis: BasisMeta::Kernel { centers: x.to_vec(), bandwidth },
            }
        }
        LearnerSpec::CubicSpline { interior_knots, ridge } => {
            if n < interior_knots + bspline::ORDER {
                return Err(Error::InsufficientData(format!(
                    "{n} points for a cubic spline with {interior_knots} interior knots (need {})",
                    interior_knots + bspline::ORDER
                )));
            }
            let knots = bspline::clamped_knots(domain, interior_knots);
            let p = bspline::basis_len(&knots);
            let mut design = DMatrix::zeros(n, p);
            for (i, &xi) in data.x().iter().enumerate() {
                let (first, vals) = bspline::eval_nonzero(&knots, xi);
                for (j, v) in vals.iter().enumerate() {
                    design[(i, first + j)] = *v;
                }
            }
            let beta = ridge_least_squares(&design, &DVector::from_column_slice(data.y()), n as f64 * ridge)?;
            FittedLearner {
                spec,
                domain,
                coefficients: beta.iter().copied().collect(),
                basis: BasisMeta::Spline { knots },
            }
        }
        LearnerSpec::Polynomial { degree } => {
            if n < degree + 1 {
                return Err(Error::InsufficientData(format!("{n} points for a degree-{degree} polynomial")));
            }
            let design = chebyshev_design(data.x(), domain, degree);
            let beta = ridge_least_squares(&design, &DVector::from_column_slice(data.y()), 0.0)?;
            FittedLearner { spec, domain, coefficients: beta.iter().copied().collect(), basis: BasisMeta::Chebyshev }
        }
        LearnerSpec::RandomFourier { features, bandwidth, seed, ridge } => {
            let (freqs, phases) = draw_fourier_features(features, bandwidth, seed);
            fit_fourier(spec, data, freqs, phases, ridge)?
        }
    };
    if learner.coefficients.iter().any(|c| !c.is_finite()) {
        return Err(Error::SingularSystem(format!("non-finite coefficients fitting {spec}")));
    }
    Ok(learner)
}
