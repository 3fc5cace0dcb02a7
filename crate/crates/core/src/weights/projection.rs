use super::{Orientation, WeightVector};
use crate::error::{Error, Result};

const DYKSTRA_TOL: f64 = 1e-10;
const DYKSTRA_MAX_ITER: usize = 200_000;

/// Least-squares isotonic fit by pool-adjacent-violators.
///
/// `Orientation::None` returns the input unchanged. The output has the same
/// sum as the input.
pub fn pav(v: &[f64], orientation: Orientation) -> Vec<f64> {
    let sign = match orientation {
        Orientation::None => return v.to_vec(),
        Orientation::NonDecreasing => 1.0,
        Orientation::NonIncreasing => -1.0,
    };
    // blocks of (mean, count), kept nondecreasing in `sign * value`
    let mut blocks: Vec<(f64, usize)> = Vec::with_capacity(v.len());
    for &x in v {
        let mut mean = sign * x;
        let mut count = 1usize;
        while let Some(&(prev, n)) = blocks.last() {
            if prev <= mean {
                break;
            }
            blocks.pop();
            mean = (prev * n as f64 + mean * count as f64) / (n + count) as f64;
            count += n;
        }
        blocks.push((mean, count));
    }
    blocks
        .into_iter()
        .flat_map(|(mean, n)| std::iter::repeat_n(sign * mean, n))
        .collect()
}

/// Euclidean projection onto the probability simplex (sort-and-threshold).
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (i, &u) in sorted.iter().enumerate() {
        cumsum += u;
        let t = (cumsum - 1.0) / (i + 1) as f64;
        if u - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|x| (x - theta).max(0.0)).collect()
}

/// Projection onto `{w : monotone, Σ w = 1}`: isotonic regression preserves
/// the sum and commutes with constant shifts, so shift then pool.
fn project_monotone_affine(v: &[f64], orientation: Orientation) -> Vec<f64> {
    let shift = (1.0 - v.iter().sum::<f64>()) / v.len() as f64;
    let shifted: Vec<f64> = v.iter().map(|x| x + shift).collect();
    pav(&shifted, orientation)
}

fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Euclidean projection of `v` onto `{w ≥ 0, Σ w = 1, monotone per orientation}`.
///
/// Dykstra's alternating projections between the monotone hyperplane section
/// (shifted pool-adjacent-violators) and the simplex, run until successive
/// iterates move less than `1e-10`. A final pooling pass makes the ordering
/// exact without breaking nonnegativity or the unit sum.
pub fn project_monotone_simplex(v: &[f64], orientation: Orientation) -> Result<WeightVector> {
    if v.is_empty() {
        return Err(Error::InvalidParameter("cannot project an empty vector".into()));
    }
    if let Some(x) = v.iter().find(|x| !x.is_finite()) {
        return Err(Error::NonFinite(format!("projection input contains {x}")));
    }
    let out = if orientation == Orientation::None {
        project_simplex(v)
    } else {
        let m = v.len();
        let mut x = v.to_vec();
        let mut p = vec![0.0; m];
        let mut q = vec![0.0; m];
        let mut converged = false;
        for _ in 0..DYKSTRA_MAX_ITER {
            let xp: Vec<f64> = x.iter().zip(&p).map(|(a, b)| a + b).collect();
            let y = project_monotone_affine(&xp, orientation);
            for i in 0..m {
                p[i] = xp[i] - y[i];
            }
            let yq: Vec<f64> = y.iter().zip(&q).map(|(a, b)| a + b).collect();
            let next = project_simplex(&yq);
            for i in 0..m {
                q[i] = yq[i] - next[i];
            }
            let moved = dist_sq(&next, &x).sqrt();
            let apart = dist_sq(&next, &y).sqrt();
            x = next;
            if moved < DYKSTRA_TOL && apart < DYKSTRA_TOL {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::Infeasible("monotone simplex projection did not converge".into()));
        }
        pav(&x, orientation)
    };
    finalize(out)
}

/// Absorbs rounding so the result passes `WeightVector` validation exactly.
fn finalize(mut w: Vec<f64>) -> Result<WeightVector> {
    for x in w.iter_mut() {
        if *x < 0.0 {
            *x = 0.0;
        }
    }
    let total: f64 = w.iter().sum();
    if total <= 0.0 {
        return Err(Error::Infeasible("projection collapsed to zero".into()));
    }
    if (total - 1.0).abs() > 1e-15 {
        for x in w.iter_mut() {
            *x /= total;
        }
    }
    WeightVector::new(w)
}
