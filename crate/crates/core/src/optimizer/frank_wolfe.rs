//! Away-step Frank–Wolfe over the (monotone) probability simplex.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::QpProblem;
use crate::error::{Error, Result};
use crate::weights::{Orientation, WeightVector};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolveOptions {
    /// Stop once the Frank–Wolfe duality gap falls to this value.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions { tol: 1e-8, max_iter: 50_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveDiagnostics {
    pub iterations: usize,
    /// Final duality gap; an upper bound on `objective - optimum`.
    pub gap: f64,
    pub objective: f64,
    /// 1-based indices `k` of the atoms `u_k` carrying mass at the solution.
    pub active_atoms: Vec<usize>,
    /// Objective after each iteration, starting with the initial point.
    pub objective_trace: Vec<f64>,
    /// Ridge added to enforce the ℓ₂ bound (`None` when no bound was active).
    pub l2_multiplier: Option<f64>,
}

/// Atom `u_k` (1-based `k`) of the feasible polytope.
///
/// * `NonIncreasing`: mass `1/k` on the first `k` coordinates.
/// * `NonDecreasing`: mass `1/k` on the last `k` coordinates.
/// * `None`: the vertex `e_k`.
pub fn atom(orientation: Orientation, m: usize, k: usize) -> Vec<f64> {
    let mut u = vec![0.0; m];
    match orientation {
        Orientation::None => u[k - 1] = 1.0,
        Orientation::NonIncreasing => u[..k].iter_mut().for_each(|v| *v = 1.0 / k as f64),
        Orientation::NonDecreasing => u[m - k..].iter_mut().for_each(|v| *v = 1.0 / k as f64),
    }
    u
}

/// `⟨g, u_k⟩` for every atom.
fn atom_scores(orientation: Orientation, g: &[f64]) -> Vec<f64> {
    let m = g.len();
    match orientation {
        Orientation::None => g.to_vec(),
        Orientation::NonIncreasing => {
            let mut acc = 0.0;
            (1..=m)
                .map(|k| {
                    acc += g[k - 1];
                    acc / k as f64
                })
                .collect()
        }
        Orientation::NonDecreasing => {
            let mut acc = 0.0;
            (1..=m)
                .map(|k| {
                    acc += g[m - k];
                    acc / k as f64
                })
                .collect()
        }
    }
}

/// Point `Σ_k λ_k u_k` from atom masses.
fn point(orientation: Orientation, lambda: &[f64]) -> Vec<f64> {
    let m = lambda.len();
    match orientation {
        Orientation::None => lambda.to_vec(),
        Orientation::NonIncreasing => {
            let mut out = vec![0.0; m];
            let mut acc = 0.0;
            for i in (0..m).rev() {
                acc += lambda[i] / (i + 1) as f64;
                out[i] = acc;
            }
            out
        }
        Orientation::NonDecreasing => {
            let mut out = vec![0.0; m];
            let mut acc = 0.0;
            for i in 0..m {
                // atom k covers index i when k >= m - i
                let k = m - i;
                acc += lambda[k - 1] / k as f64;
                out[i] = acc;
            }
            out
        }
    }
}

/// Minimizes `αᵀ(Q + μI)α + cᵀα` over the atoms' convex hull, starting from
/// the uniform point.
pub(crate) fn minimize(
    quadratic: &DMatrix<f64>,
    linear: &DVector<f64>,
    orientation: Orientation,
    options: &SolveOptions,
) -> Result<(WeightVector, SolveDiagnostics)> {
    let m = linear.len();
    let mut lambda = vec![0.0; m];
    match orientation {
        Orientation::None => lambda.iter_mut().for_each(|l| *l = 1.0 / m as f64),
        _ => lambda[m - 1] = 1.0,
    }
    let objective = |a: &DVector<f64>| a.dot(&(quadratic * a)) + linear.dot(a);

    let mut alpha = DVector::from_vec(point(orientation, &lambda));
    let mut trace = vec![objective(&alpha)];
    let mut gap = f64::INFINITY;
    let mut iterations = 0;

    while iterations < options.max_iter {
        let grad = 2.0 * (quadratic * &alpha) + linear;
        let scores = atom_scores(orientation, grad.as_slice());
        let g_alpha = grad.dot(&alpha);
        let (fw, fw_score) = argmin(&scores);
        gap = g_alpha - fw_score;
        if gap <= options.tol {
            break;
        }
        iterations += 1;

        let (away, away_score) = lambda
            .iter()
            .enumerate()
            .filter(|(_, &l)| l > 0.0)
            .map(|(k, _)| (k, scores[k]))
            .fold((usize::MAX, f64::NEG_INFINITY), |best, c| if c.1 > best.1 { c } else { best });
        let away_gap = away_score - g_alpha;

        let fw_step = gap >= away_gap || away == usize::MAX;
        let (direction, gamma_max) = if fw_step {
            let u = DVector::from_vec(atom(orientation, m, fw + 1));
            (u - &alpha, 1.0)
        } else {
            let u = DVector::from_vec(atom(orientation, m, away + 1));
            let la = lambda[away];
            let gmax = if la < 1.0 { la / (1.0 - la) } else { f64::INFINITY };
            (&alpha - u, gmax)
        };

        let slope = grad.dot(&direction);
        let curvature = direction.dot(&(quadratic * &direction));
        let gamma = if curvature > 0.0 { (-slope / (2.0 * curvature)).clamp(0.0, gamma_max) } else { gamma_max };
        if !gamma.is_finite() {
            return Err(Error::NonFinite("line search step".into()));
        }

        if fw_step {
            lambda.iter_mut().for_each(|l| *l *= 1.0 - gamma);
            lambda[fw] += gamma;
        } else {
            lambda.iter_mut().for_each(|l| *l *= 1.0 + gamma);
            lambda[away] -= gamma;
            if gamma >= gamma_max || lambda[away] < 0.0 {
                lambda[away] = 0.0;
            }
        }
        let total: f64 = lambda.iter().sum();
        lambda.iter_mut().for_each(|l| *l /= total);
        alpha = DVector::from_vec(point(orientation, &lambda));
        trace.push(objective(&alpha));
    }

    let diagnostics = SolveDiagnostics {
        iterations,
        gap,
        objective: *trace.last().expect("trace starts non-empty"),
        active_atoms: lambda.iter().enumerate().filter(|(_, &l)| l > 0.0).map(|(k, _)| k + 1).collect(),
        objective_trace: trace,
        l2_multiplier: None,
    };
    let weights = finalize(alpha.as_slice())?;
    if gap > options.tol {
        return Err(Error::NotConverged { weights: Box::new(weights), diagnostics: Box::new(diagnostics) });
    }
    Ok((weights, diagnostics))
}

fn argmin(v: &[f64]) -> (usize, f64) {
    v.iter().copied().enumerate().fold((0, f64::INFINITY), |best, c| if c.1 < best.1 { c } else { best })
}

fn finalize(alpha: &[f64]) -> Result<WeightVector> {
    let clipped: Vec<f64> = alpha.iter().map(|v| v.max(0.0)).collect();
    let total: f64 = clipped.iter().sum();
    WeightVector::new(clipped.into_iter().map(|v| v / total).collect())
}

/// Solves `problem` with the default ℓ₂ handling; see [`super::solve_weights`].
pub(crate) fn solve(problem: &QpProblem, options: &SolveOptions) -> Result<(WeightVector, SolveDiagnostics)> {
    let m = problem.dim();
    let constraints = problem.feasible_set;
    if !constraints.require_normalized {
        return Err(Error::InvalidParameter("the solver works on normalized weights only".into()));
    }
    constraints.check_feasible(m)?;
    if !(options.tol > 0.0 && options.tol.is_finite()) {
        return Err(Error::Range(format!("tolerance must be positive, got {}", options.tol)));
    }
    let orientation = constraints.orientation;
    let with_ridge = |mu: f64| {
        let q = &problem.quadratic + DMatrix::identity(m, m) * (problem.ridge + mu);
        minimize(&q, &problem.linear, orientation, options)
    };

    let Some(bound) = constraints.l2_bound else {
        return with_ridge(0.0);
    };
    let floor = 1.0 / m as f64;
    if bound <= floor * (1.0 + 1e-12) {
        // only the uniform vector is feasible
        let w = WeightVector::uniform(m)?;
        let obj = problem.objective(w.values())?;
        let diagnostics = SolveDiagnostics {
            iterations: 0,
            gap: 0.0,
            objective: obj,
            active_atoms: match orientation {
                Orientation::None => (1..=m).collect(),
                _ => vec![m],
            },
            objective_trace: vec![obj],
            l2_multiplier: None,
        };
        return Ok((w, diagnostics));
    }

    let (w0, d0) = with_ridge(0.0)?;
    if w0.l2_norm_sq() <= bound {
        return Ok((w0, d0));
    }
    // ‖w(μ)‖² is nonincreasing in the added ridge μ; bisect for the multiplier.
    let scale = problem.quadratic.diagonal().iter().map(|v| v.abs()).sum::<f64>() / m as f64 + problem.ridge;
    let mut hi = scale.max(1.0);
    let mut best = with_ridge(hi)?;
    let mut expansions = 0;
    while best.0.l2_norm_sq() > bound {
        hi *= 4.0;
        expansions += 1;
        if expansions > 200 {
            return Err(Error::Infeasible(format!("could not reach l2 bound {bound}")));
        }
        best = with_ridge(hi)?;
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        if hi - lo <= 1e-12 * hi {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let candidate = with_ridge(mid)?;
        if candidate.0.l2_norm_sq() > bound {
            lo = mid;
        } else {
            hi = mid;
            best = candidate;
        }
    }
    let (w, mut diagnostics) = best;
    diagnostics.objective = problem.objective(w.values())?;
    diagnostics.l2_multiplier = Some(hi);
    Ok((w, diagnostics))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atoms_are_step_vectors() {
        assert_eq!(atom(Orientation::NonIncreasing, 4, 2), vec![0.5, 0.5, 0.0, 0.0]);
        assert_eq!(atom(Orientation::NonDecreasing, 4, 1), vec![0.0, 0.0, 0.0, 1.0]);
        assert_eq!(atom(Orientation::None, 3, 2), vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn point_matches_explicit_combination() {
        let lambda = [0.1, 0.2, 0.3, 0.4];
        for o in [Orientation::NonIncreasing, Orientation::NonDecreasing, Orientation::None] {
            let p = point(o, &lambda);
            let mut expected = vec![0.0; 4];
            for (k, l) in lambda.iter().enumerate() {
                for (e, u) in expected.iter_mut().zip(atom(o, 4, k + 1)) {
                    *e += l * u;
                }
            }
            for (a, b) in p.iter().zip(&expected) {
                assert!((a - b).abs() < 1e-15);
            }
            let g = [0.3, -1.0, 2.0, 0.5];
            let scores = atom_scores(o, &g);
            for k in 0..4 {
                let u = atom(o, 4, k + 1);
                let s: f64 = u.iter().zip(&g).map(|(a, b)| a * b).sum();
                assert!((scores[k] - s).abs() < 1e-15);
            }
        }
    }
}
