//! Weighting laws, admissibility checks and the monotone-simplex projection.

mod law;
mod projection;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use law::WeightLawSpec;
pub(crate) use law::{split_text_form, Params};
pub use projection::{pav, project_monotone_simplex, project_simplex};

/// The golden ratio `(1 + √5) / 2`.
pub const GOLDEN_RATIO: f64 = 1.618_033_988_749_895;

/// Absolute tolerance on `|Σ w - 1|`.
pub const NORMALIZATION_TOL: f64 = 1e-12;

/// Absolute slack allowed on orientation comparisons and the ℓ₂ bound.
pub const ORDER_TOL: f64 = 1e-12;

/// Largest `M` whose Fibonacci numbers fit in a `u64` (`F_92 < 2^63`).
pub const FIBONACCI_EXACT_MAX: usize = 92;

/// A nonnegative, normalized weight vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightVector {
    values: Vec<f64>,
    family: Option<WeightLawSpec>,
}

impl WeightVector {
    /// Wraps a custom vector, enforcing nonnegativity and normalization.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        Self::checked(values, None)
    }

    fn checked(values: Vec<f64>, family: Option<WeightLawSpec>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidParameter("weight vector must have M >= 1".into()));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("weight {v}")));
        }
        if let Some(v) = values.iter().find(|&&v| v < 0.0) {
            return Err(Error::InvalidParameter(format!("negative weight {v}")));
        }
        let sum: f64 = values.iter().sum();
        if (sum - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::InvalidParameter(format!("weights sum to {sum}, not 1")));
        }
        Ok(WeightVector { values, family })
    }

    pub fn uniform(m: usize) -> Result<Self> {
        make_weights(WeightLawSpec::Uniform, m)
    }

    /// Unit mass on index `index` (0-based).
    pub fn one_hot(m: usize, index: usize) -> Result<Self> {
        if index >= m {
            return Err(Error::InvalidParameter(format!("one-hot index {index} out of range for M = {m}")));
        }
        let mut values = vec![0.0; m];
        values[index] = 1.0;
        Self::new(values)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// The law that produced this vector, `None` for custom vectors.
    pub fn family(&self) -> Option<WeightLawSpec> {
        self.family
    }

    pub fn l2_norm_sq(&self) -> f64 {
        l2_norm_sq(&self.values)
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

impl AsRef<[f64]> for WeightVector {
    fn as_ref(&self) -> &[f64] {
        &self.values
    }
}

/// `Σ_m w_m²`.
pub fn l2_norm_sq(w: &[f64]) -> f64 {
    w.iter().map(|v| v * v).sum()
}

/// `F_1, …, F_M` with `F_1 = F_2 = 1`, exact in 64-bit integers.
pub fn fibonacci_sequence(m: usize) -> Result<Vec<u64>> {
    if m == 0 {
        return Err(Error::InvalidParameter("Fibonacci sequence needs M >= 1".into()));
    }
    if m > FIBONACCI_EXACT_MAX {
        return Err(Error::OverflowExactMode(m));
    }
    let mut seq = Vec::with_capacity(m);
    let (mut a, mut b) = (1u64, 1u64);
    for _ in 0..m {
        seq.push(a);
        // F_{M+2} may exceed u64 at the exact-mode limit; it is never used
        let next = a.wrapping_add(b);
        a = b;
        b = next;
    }
    Ok(seq)
}

/// Log-Fibonacci numbers for arbitrary `M` via the ratio recursion
/// `r_m = 1 + 1/r_{m-1}`, `log F_m = log F_{m-1} + log r_m`.
fn log_fibonacci(m: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(m);
    let mut log_f = 0.0;
    let mut ratio: f64 = 1.0;
    for i in 0..m {
        if i >= 2 {
            ratio = 1.0 + 1.0 / ratio;
            log_f += ratio.ln();
        }
        out.push(log_f);
    }
    out
}

/// Normalizes log-weights with the log-sum-exp shift.
fn normalize_log(log_w: &[f64]) -> Result<Vec<f64>> {
    let max = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::Overflow("log-weights are not finite".into()));
    }
    let raw: Vec<f64> = log_w.iter().map(|l| (l - max).exp()).collect();
    normalize(raw)
}

fn normalize(raw: Vec<f64>) -> Result<Vec<f64>> {
    let total: f64 = raw.iter().sum();
    if !total.is_finite() || total <= 0.0 {
        return Err(Error::Overflow(format!("normalizing constant is {total}")));
    }
    Ok(raw.into_iter().map(|v| v / total).collect())
}

/// Builds the normalized weight vector of `spec` for a dictionary of size `m`.
pub fn make_weights(spec: WeightLawSpec, m: usize) -> Result<WeightVector> {
    if m == 0 {
        return Err(Error::InvalidParameter("weight vector must have M >= 1".into()));
    }
    let spec = spec.validated()?;
    let values = match spec {
        WeightLawSpec::Uniform => vec![1.0 / m as f64; m],
        WeightLawSpec::Fibonacci if m <= FIBONACCI_EXACT_MAX => {
            let seq = fibonacci_sequence(m)?;
            // Σ_{j≤M} F_j = F_{M+2} - 1 overflows u64 at M = 92; sum in u128.
            let total: u128 = seq.iter().map(|&f| f as u128).sum();
            let total = total as f64;
            seq.iter().map(|&f| f as f64 / total).collect()
        }
        WeightLawSpec::Fibonacci => normalize_log(&log_fibonacci(m))?,
        _ => {
            let logs: Vec<f64> = (1..=m).map(|i| spec.log_weight(i)).collect();
            normalize_log(&logs)?
        }
    };
    WeightVector::checked(values, Some(spec))
}

/// Required ordering of the weights along the dictionary index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Orientation {
    /// `w_1 ≥ w_2 ≥ … ≥ w_M`.
    NonIncreasing,
    /// `w_1 ≤ w_2 ≤ … ≤ w_M`.
    NonDecreasing,
    /// No ordering constraint.
    None,
}

impl fmt::Display for Orientation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Orientation::NonIncreasing => "nonincreasing",
            Orientation::NonDecreasing => "nondecreasing",
            Orientation::None => "none",
        })
    }
}

impl FromStr for Orientation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "nonincreasing" | "decreasing" => Ok(Orientation::NonIncreasing),
            "nondecreasing" | "increasing" => Ok(Orientation::NonDecreasing),
            "none" | "free" => Ok(Orientation::None),
            _ => Err(Error::Parse { input: s.into(), reason: "unknown orientation".into() }),
        }
    }
}

/// The constraint set a weight vector is validated (or optimized) against.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdmissibilityConstraints {
    pub require_normalized: bool,
    pub orientation: Orientation,
    /// Upper bound `C_w` on `‖w‖₂²`.
    pub l2_bound: Option<f64>,
}

impl Default for AdmissibilityConstraints {
    fn default() -> Self {
        Self::simplex()
    }
}

impl AdmissibilityConstraints {
    /// The probability simplex.
    pub fn simplex() -> Self {
        AdmissibilityConstraints { require_normalized: true, orientation: Orientation::None, l2_bound: None }
    }

    /// The probability simplex intersected with a monotonicity order.
    pub fn monotone(orientation: Orientation) -> Self {
        AdmissibilityConstraints { require_normalized: true, orientation, l2_bound: None }
    }

    pub fn with_l2_bound(mut self, bound: f64) -> Result<Self> {
        if !(bound.is_finite() && bound > 0.0) {
            return Err(Error::Range(format!("l2 bound must be positive and finite, got {bound}")));
        }
        self.l2_bound = Some(bound);
        Ok(self)
    }

    /// `C_w ≥ 1/M` is needed for any normalized vector to satisfy the bound.
    pub fn check_feasible(&self, m: usize) -> Result<()> {
        if m == 0 {
            return Err(Error::Infeasible("empty weight vector".into()));
        }
        if let Some(c) = self.l2_bound {
            if self.require_normalized && c < 1.0 / m as f64 - ORDER_TOL {
                return Err(Error::Infeasible(format!(
                    "l2 bound {c} is below the simplex minimum 1/M = {}",
                    1.0 / m as f64
                )));
            }
        }
        Ok(())
    }
}

/// Outcome of one admissibility condition. `slack ≥ 0` means satisfied.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConditionCheck {
    pub passed: bool,
    pub slack: f64,
}

impl ConditionCheck {
    fn from_slack(slack: f64, tol: f64) -> Self {
        ConditionCheck { passed: slack >= -tol, slack }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdmissibilityReport {
    pub nonnegativity: ConditionCheck,
    /// `None` when normalization was not requested.
    pub normalization: Option<ConditionCheck>,
    pub orientation: Option<ConditionCheck>,
    pub l2_bound: Option<ConditionCheck>,
    pub l2_norm_sq: f64,
}

impl AdmissibilityReport {
    pub fn passed(&self) -> bool {
        self.nonnegativity.passed
            && [self.normalization, self.orientation, self.l2_bound].iter().flatten().all(|c| c.passed)
    }

    /// `(name, check)` rows in a fixed order.
    pub fn rows(&self) -> Vec<(&'static str, ConditionCheck)> {
        let mut rows = vec![("nonnegativity", self.nonnegativity)];
        if let Some(c) = self.normalization {
            rows.push(("normalization", c));
        }
        if let Some(c) = self.orientation {
            rows.push(("orientation", c));
        }
        if let Some(c) = self.l2_bound {
            rows.push(("l2_bound", c));
        }
        rows
    }
}

/// Checks nonnegativity, normalization, orientation and the ℓ₂ bound.
///
/// Never fails: empty or non-finite vectors simply fail the first conditions.
pub fn validate_admissible(w: &[f64], constraints: &AdmissibilityConstraints) -> AdmissibilityReport {
    let finite = !w.is_empty() && w.iter().all(|v| v.is_finite());
    let min = w.iter().copied().fold(f64::INFINITY, f64::min);
    let nonnegativity = if finite {
        ConditionCheck { passed: min >= 0.0, slack: min }
    } else {
        ConditionCheck { passed: false, slack: f64::NEG_INFINITY }
    };
    let normalization = constraints.require_normalized.then(|| {
        let sum: f64 = w.iter().sum();
        let slack = if finite && !w.is_empty() { NORMALIZATION_TOL - (sum - 1.0).abs() } else { f64::NEG_INFINITY };
        ConditionCheck { passed: slack >= 0.0, slack }
    });
    let orientation = match constraints.orientation {
        Orientation::None => None,
        o => {
            let slack = w
                .windows(2)
                .map(|p| match o {
                    Orientation::NonIncreasing => p[0] - p[1],
                    _ => p[1] - p[0],
                })
                .fold(f64::INFINITY, f64::min);
            let slack = if !finite { f64::NEG_INFINITY } else if w.len() < 2 { 0.0 } else { slack };
            Some(ConditionCheck::from_slack(slack, ORDER_TOL))
        }
    };
    let norm = l2_norm_sq(w);
    let l2_bound = constraints.l2_bound.map(|c| ConditionCheck::from_slack(c - norm, ORDER_TOL));
    AdmissibilityReport { nonnegativity, normalization, orientation, l2_bound, l2_norm_sq: norm }
}
