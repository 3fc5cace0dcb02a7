//! Gauss–Legendre and Simpson quadrature on an interval.

use std::f64::consts::PI;

use crate::domain::Interval;
use crate::error::{Error, Result};

/// Default composite rule: 16 panels of 32 nodes, 512 nodes in total. Each
/// panel integrates polynomials of degree 63 exactly.
pub const DEFAULT_PANELS: usize = 16;
pub const DEFAULT_NODES_PER_PANEL: usize = 32;

/// Nodes and weights of the `n`-point Gauss–Legendre rule on `[-1, 1]`.
///
/// Roots of `P_n` are found by Newton iteration from the Chebyshev-type
/// initial guess `cos(π(i - 1/4)/(n + 1/2))`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "Gauss-Legendre rule needs at least one node");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

/// `(P_n(x), P_n'(x))` by the three-term recurrence.
fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let nf = n as f64;
    let dp = nf * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// A quadrature rule for the uniform probability measure on `domain`.
///
/// `weights` sum to one, so `Σ w_g f(x_g)` approximates `E[f(X)]` for
/// `X ~ Uniform(domain)`; multiply by the domain length to integrate `dx`.
#[derive(Debug, Clone, PartialEq)]
pub struct Quadrature {
    domain: Interval,
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl Quadrature {
    pub fn composite_gauss_legendre(domain: Interval, panels: usize, per_panel: usize) -> Self {
        assert!(panels >= 1 && per_panel >= 1);
        let (ref_nodes, ref_weights) = gauss_legendre(per_panel);
        let h = domain.length() / panels as f64;
        let mut nodes = Vec::with_capacity(panels * per_panel);
        let mut weights = Vec::with_capacity(panels * per_panel);
        for p in 0..panels {
            let lo = domain.lo() + p as f64 * h;
            let mid = lo + 0.5 * h;
            for (t, w) in ref_nodes.iter().zip(&ref_weights) {
                nodes.push(mid + 0.5 * h * t);
                // reference weights sum to 2, each panel carries 1/panels of the mass
                weights.push(w / (2.0 * panels as f64));
            }
        }
        Quadrature { domain, nodes, weights }
    }

    /// The 512-node rule used for empirical inner products.
    pub fn standard(domain: Interval) -> Self {
        Self::composite_gauss_legendre(domain, DEFAULT_PANELS, DEFAULT_NODES_PER_PANEL)
    }

    /// Wraps user-supplied nodes and weights; weights are rescaled to sum to one.
    pub fn from_parts(domain: Interval, nodes: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        Error::check_len(nodes.len(), weights.len())?;
        if nodes.is_empty() {
            return Err(Error::InsufficientPoints { need: 1, got: 0 });
        }
        if nodes.iter().chain(&weights).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("quadrature nodes or weights".into()));
        }
        if weights.iter().any(|&w| w < 0.0) {
            return Err(Error::InvalidParameter("negative quadrature weight".into()));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::InvalidParameter("quadrature weights sum to zero".into()));
        }
        let weights = weights.into_iter().map(|w| w / total).collect();
        Ok(Quadrature { domain, nodes, weights })
    }

    pub fn domain(&self) -> Interval {
        self.domain
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// `E[f(X)]` under the uniform measure.
    pub fn mean<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }

    /// `Σ_g w_g a_g b_g` for values already evaluated at the nodes.
    pub fn inner(&self, a: &[f64], b: &[f64]) -> f64 {
        self.weights.iter().zip(a).zip(b).map(|((w, x), y)| w * x * y).sum()
    }

    /// `Var(f(X))` for `X ~ Uniform(domain)`.
    pub fn variance<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        let vals: Vec<f64> = self.nodes.iter().map(|&x| f(x)).collect();
        let m = self.inner(&vals, &vec![1.0; vals.len()]);
        self.weights.iter().zip(&vals).map(|(w, v)| w * (v - m) * (v - m)).sum()
    }
}

/// Composite Simpson rule for `∫ values dx` on a uniform grid spanning `domain`.
///
/// `values.len()` must be odd and at least 3.
pub fn simpson(domain: Interval, values: &[f64]) -> Result<f64> {
    let n = values.len();
    if n < 3 || n % 2 == 0 {
        return Err(Error::InvalidParameter(format!(
            "Simpson rule needs an odd grid of at least 3 points, got {n}"
        )));
    }
    let h = domain.length() / (n - 1) as f64;
    let mut acc = values[0] + values[n - 1];
    for (i, v) in values.iter().enumerate().take(n - 1).skip(1) {
        acc += if i % 2 == 1 { 4.0 * v } else { 2.0 * v };
    }
    Ok(acc * h / 3.0)
}
