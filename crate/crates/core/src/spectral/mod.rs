//! Orthonormal expansions and the approximation / variance / smoothing terms
//! of the ensemble risk.

mod decomposition;

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dictionary::Dictionary;
use crate::domain::Interval;
use crate::error::{Error, Result};
use crate::quadrature::Quadrature;

pub use decomposition::{decomposition_report, DecompositionReport, DecompositionSetup, Testbed, FRESH_NOISE_DRAWS};

/// Slack allowed on `Σ θ_k² ≤ ‖f‖²`.
pub const PARSEVAL_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BasisKind {
    /// Orthonormal Legendre polynomials under the uniform measure.
    #[serde(alias = "shiftedlegendre")]
    Legendre,
    /// `1, √2 cos(2πjt), √2 sin(2πjt)` on the unit-normalized domain.
    Fourier,
}

impl fmt::Display for BasisKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BasisKind::Legendre => "legendre",
            BasisKind::Fourier => "fourier",
        })
    }
}

impl FromStr for BasisKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "legendre" | "shiftedlegendre" => Ok(BasisKind::Legendre),
            "fourier" => Ok(BasisKind::Fourier),
            other => Err(Error::Parse { input: other.into(), reason: "unknown basis kind".into() }),
        }
    }
}

/// First `K` modes of an orthonormal basis of `L²(Uniform(domain))`, ordered
/// by increasing complexity, together with the quadrature used for inner
/// products.
#[derive(Debug, Clone, PartialEq)]
pub struct OrthoBasis {
    kind: BasisKind,
    modes: usize,
    quadrature: Quadrature,
    /// `G × K` mode values at the quadrature nodes.
    node_values: DMatrix<f64>,
}

impl OrthoBasis {
    /// Basis on `domain` with the standard 512-node quadrature.
    pub fn new(kind: BasisKind, modes: usize, domain: Interval) -> Result<Self> {
        Self::with_quadrature(kind, modes, Quadrature::standard(domain))
    }

    pub fn with_quadrature(kind: BasisKind, modes: usize, quadrature: Quadrature) -> Result<Self> {
        if modes == 0 {
            return Err(Error::InvalidParameter("basis needs K >= 1 modes".into()));
        }
        let domain = quadrature.domain();
        let rows: Vec<Vec<f64>> = quadrature.nodes().iter().map(|&x| eval_modes(kind, modes, domain, x)).collect();
        let node_values = DMatrix::from_fn(rows.len(), modes, |g, k| rows[g][k]);
        Ok(OrthoBasis { kind, modes, quadrature, node_values })
    }

    pub fn kind(&self) -> BasisKind {
        self.kind
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn domain(&self) -> Interval {
        self.quadrature.domain()
    }

    pub fn quadrature(&self) -> &Quadrature {
        &self.quadrature
    }

    /// `G × K` matrix of mode values at the quadrature nodes.
    pub fn node_values(&self) -> &DMatrix<f64> {
        &self.node_values
    }

    /// `(φ_1(x), …, φ_K(x))`.
    pub fn eval_all(&self, x: f64) -> Vec<f64> {
        eval_modes(self.kind, self.modes, self.domain(), x)
    }

    /// Gram matrix `⟨φ_j, φ_k⟩` under an arbitrary quadrature on the same domain.
    pub fn gram_with(&self, quad: &Quadrature) -> DMatrix<f64> {
        let rows: Vec<Vec<f64>> = quad.nodes().iter().map(|&x| self.eval_all(x)).collect();
        DMatrix::from_fn(self.modes, self.modes, |j, k| {
            quad.weights().iter().zip(&rows).map(|(w, r)| w * r[j] * r[k]).sum()
        })
    }

    /// Gram matrix under the stored quadrature.
    pub fn gram(&self) -> DMatrix<f64> {
        let w = DVector::from_column_slice(self.quadrature.weights());
        let weighted = DMatrix::from_fn(self.node_values.nrows(), self.modes, |g, k| w[g] * self.node_values[(g, k)]);
        self.node_values.transpose() * weighted
    }

    /// Coefficients of a function given by its values at the quadrature nodes.
    pub fn expand_values(&self, values: &[f64]) -> Result<Vec<f64>> {
        Error::check_len(self.quadrature.len(), values.len())?;
        let w = self.quadrature.weights();
        Ok((0..self.modes)
            .map(|k| (0..values.len()).map(|g| w[g] * values[g] * self.node_values[(g, k)]).sum())
            .collect())
    }

    /// Evaluates `Σ_k c_k φ_k` at the quadrature nodes.
    pub fn synthesize_at_nodes(&self, coeffs: &[f64]) -> Result<Vec<f64>> {
        Error::check_len(self.modes, coeffs.len())?;
        Ok((self.node_values.clone() * DVector::from_column_slice(coeffs)).iter().copied().collect())
    }
}

fn eval_modes(kind: BasisKind, modes: usize, domain: Interval, x: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(modes);
    match kind {
        BasisKind::Legendre => {
            let t = domain.to_symmetric(x);
            let (mut p0, mut p1) = (1.0, t);
            for k in 0..modes {
                let p = match k {
                    0 => 1.0,
                    1 => t,
                    _ => {
                        let kf = k as f64;
                        let p2 = ((2.0 * kf - 1.0) * t * p1 - (kf - 1.0) * p0) / kf;
                        p0 = p1;
                        p1 = p2;
                        p2
                    }
                };
                out.push((2.0 * k as f64 + 1.0).sqrt() * p);
            }
        }
        BasisKind::Fourier => {
            let u = domain.to_unit(x);
            let s2 = std::f64::consts::SQRT_2;
            for k in 0..modes {
                if k == 0 {
                    out.push(1.0);
                } else {
                    let j = k.div_ceil(2) as f64;
                    let arg = std::f64::consts::TAU * j * u;
                    out.push(if k % 2 == 1 { s2 * arg.cos() } else { s2 * arg.sin() });
                }
            }
        }
    }
    out
}

/// `θ_k = ⟨f, φ_k⟩` under the basis quadrature.
pub fn expand<F: Fn(f64) -> f64>(f: F, basis: &OrthoBasis) -> Result<Vec<f64>> {
    let values = eval_finite(&f, basis.quadrature().nodes())?;
    basis.expand_values(&values)
}

fn eval_finite<F: Fn(f64) -> f64>(f: &F, nodes: &[f64]) -> Result<Vec<f64>> {
    nodes
        .iter()
        .map(|&x| {
            let v = f(x);
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::NonFiniteFunction(x))
            }
        })
        .collect()
}

/// Target and learner coefficients in a common basis.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralExpansion {
    basis: OrthoBasis,
    theta: Vec<f64>,
    /// `M × K`; row `m` holds the coefficients `a_{m,k}` of learner `m`.
    learner_coeffs: DMatrix<f64>,
    /// `‖f*‖²` by quadrature.
    target_energy: f64,
}

impl SpectralExpansion {
    pub fn new(basis: OrthoBasis, theta: Vec<f64>, learner_coeffs: DMatrix<f64>, target_energy: f64) -> Result<Self> {
        Error::check_len(basis.modes(), theta.len())?;
        Error::check_len(basis.modes(), learner_coeffs.ncols())?;
        if learner_coeffs.nrows() == 0 {
            return Err(Error::InvalidParameter("expansion needs at least one learner".into()));
        }
        if theta.iter().chain(learner_coeffs.iter()).any(|v| !v.is_finite()) || !target_energy.is_finite() {
            return Err(Error::NonFinite("expansion coefficients".into()));
        }
        let captured: f64 = theta.iter().map(|t| t * t).sum();
        if captured > target_energy + PARSEVAL_TOL {
            return Err(Error::InvalidParameter(format!(
                "Parseval violated: Σθ² = {captured} exceeds ‖f‖² = {target_energy}"
            )));
        }
        Ok(SpectralExpansion { basis, theta, learner_coeffs, target_energy })
    }

    /// Expands `f_star` and every learner of `dict` in `basis`.
    pub fn from_dictionary<F: Fn(f64) -> f64>(dict: &Dictionary, f_star: F, basis: &OrthoBasis) -> Result<Self> {
        let nodes = basis.quadrature().nodes();
        let f_vals = eval_finite(&f_star, nodes)?;
        let theta = basis.expand_values(&f_vals)?;
        let energy = basis.quadrature().inner(&f_vals, &f_vals);
        let rows: Vec<Vec<f64>> = dict
            .learners()
            .iter()
            .map(|h| basis.expand_values(&h.predict(nodes)))
            .collect::<Result<_>>()?;
        let a = DMatrix::from_fn(rows.len(), basis.modes(), |m, k| rows[m][k]);
        Self::new(basis.clone(), theta, a, energy)
    }

    pub fn basis(&self) -> &OrthoBasis {
        &self.basis
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn learner_coeffs(&self) -> &DMatrix<f64> {
        &self.learner_coeffs
    }

    pub fn n_learners(&self) -> usize {
        self.learner_coeffs.nrows()
    }

    pub fn target_energy(&self) -> f64 {
        self.target_energy
    }

    /// `‖f*‖² - Σ_{k≤K} θ_k²`, the target energy the retained modes miss.
    pub fn truncation_tail(&self) -> f64 {
        self.target_energy - self.theta.iter().map(|t| t * t).sum::<f64>()
    }
}

/// `b_k(w) = Σ_m w_m a_{m,k}`.
pub fn effective_coeffs(expansion: &SpectralExpansion, w: &[f64]) -> Result<Vec<f64>> {
    Error::check_len(expansion.n_learners(), w.len())?;
    let b = expansion.learner_coeffs.transpose() * DVector::from_column_slice(w);
    Ok(b.iter().copied().collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ApproximationTerm {
    /// `Σ_{k≤K} (b_k - θ_k)²`.
    pub value: f64,
    /// `‖f*‖² - Σ_{k≤K} θ_k²`.
    pub truncation_tail: f64,
}

pub fn approximation_from_coeffs(theta: &[f64], b: &[f64]) -> Result<f64> {
    Error::check_len(theta.len(), b.len())?;
    Ok(theta.iter().zip(b).map(|(t, b)| (b - t) * (b - t)).sum())
}

/// `Σ_k (θ_k² - b_k²)`; negative when the ensemble inflates spectral energy.
pub fn smoothing_from_coeffs(theta: &[f64], b: &[f64]) -> Result<f64> {
    Error::check_len(theta.len(), b.len())?;
    Ok(theta.iter().zip(b).map(|(t, b)| t * t - b * b).sum())
}

pub fn approximation_term(expansion: &SpectralExpansion, w: &[f64]) -> Result<ApproximationTerm> {
    let b = effective_coeffs(expansion, w)?;
    Ok(ApproximationTerm {
        value: approximation_from_coeffs(&expansion.theta, &b)?,
        truncation_tail: expansion.truncation_tail(),
    })
}

pub fn smoothing_term(expansion: &SpectralExpansion, w: &[f64]) -> Result<f64> {
    let b = effective_coeffs(expansion, w)?;
    smoothing_from_coeffs(&expansion.theta, &b)
}

/// `Σ_k` sample variance (divisor `R - 1`) of per-replicate coefficients.
pub fn variance_term(replicated: &[Vec<f64>]) -> Result<f64> {
    let r = replicated.len();
    if r < 2 {
        return Err(Error::InsufficientReplicates { need: 2, got: r });
    }
    let k = replicated[0].len();
    for row in replicated {
        Error::check_len(k, row.len())?;
    }
    let mut total = 0.0;
    for j in 0..k {
        let mean = replicated.iter().map(|row| row[j]).sum::<f64>() / r as f64;
        let ss: f64 = replicated.iter().map(|row| (row[j] - mean) * (row[j] - mean)).sum();
        total += ss / (r - 1) as f64;
    }
    Ok(total)
}

/// Smallest 1-based `k` with `|b_k| < 0.01 max_j |b_j|`; `K + 1` when no
/// retained mode falls below the threshold.
pub fn effective_cutoff(b: &[f64]) -> usize {
    let max = b.iter().map(|v| v.abs()).fold(0.0, f64::max);
    b.iter().position(|v| v.abs() < 0.01 * max).map_or(b.len() + 1, |i| i + 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_low_modes() {
        let basis = OrthoBasis::new(BasisKind::Legendre, 2, Interval::unit()).unwrap();
        for x in [0.0, 0.2, 0.7, 1.0] {
            let v = basis.eval_all(x);
            assert!((v[0] - 1.0).abs() < 1e-15);
            assert!((v[1] - 3f64.sqrt() * (2.0 * x - 1.0)).abs() < 1e-14);
        }
    }

    #[test]
    fn fourier_mode_order() {
        let basis = OrthoBasis::new(BasisKind::Fourier, 5, Interval::unit()).unwrap();
        let v = basis.eval_all(0.125);
        let s2 = std::f64::consts::SQRT_2;
        let a = std::f64::consts::TAU * 0.125;
        let expected = [1.0, s2 * a.cos(), s2 * a.sin(), s2 * (2.0 * a).cos(), s2 * (2.0 * a).sin()];
        for (x, e) in v.iter().zip(expected) {
            assert!((x - e).abs() < 1e-14);
        }
        let gram = basis.gram();
        assert!((gram - DMatrix::<f64>::identity(5, 5)).amax() < 1e-12);
    }

    #[test]
    fn expanding_a_mode_gives_a_unit_vector() {
        let basis = OrthoBasis::new(BasisKind::Legendre, 6, Interval::unit()).unwrap();
        let theta = expand(|x| 3f64.sqrt() * (2.0 * x - 1.0), &basis).unwrap();
        for (k, t) in theta.iter().enumerate() {
            let e = if k == 1 { 1.0 } else { 0.0 };
            assert!((t - e).abs() < 1e-10);
        }
    }

    #[test]
    fn non_finite_function_is_reported() {
        let basis = OrthoBasis::new(BasisKind::Legendre, 3, Interval::unit()).unwrap();
        assert!(matches!(expand(|x| 1.0 / (x - x), &basis), Err(Error::NonFiniteFunction(_))));
    }

    #[test]
    fn smoothing_examples() {
        assert_eq!(smoothing_from_coeffs(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(smoothing_from_coeffs(&[1.0, 2.0], &[0.0, 0.0]).unwrap(), 5.0);
        assert_eq!(smoothing_from_coeffs(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert!(smoothing_from_coeffs(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn approximation_examples() {
        assert_eq!(approximation_from_coeffs(&[0.3, -0.2], &[0.3, -0.2]).unwrap(), 0.0);
        assert_eq!(approximation_from_coeffs(&[1.0, 0.0], &[0.0, 0.0]).unwrap(), 1.0);
    }

    #[test]
    fn variance_examples() {
        assert_eq!(variance_term(&[vec![1.0, 2.0], vec![1.0, 2.0]]).unwrap(), 0.0);
        assert_eq!(variance_term(&[vec![0.0], vec![2.0]]).unwrap(), 2.0);
        assert!(matches!(variance_term(&[vec![0.0]]), Err(Error::InsufficientReplicates { .. })));
    }

    #[test]
    fn cutoff_diagnostic() {
        assert_eq!(effective_cutoff(&[1.0, 0.5, 0.001, 0.3]), 3);
        assert_eq!(effective_cutoff(&[1.0, 0.5]), 3);
    }
}
