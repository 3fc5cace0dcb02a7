//! Cubic B-spline basis on equally spaced interior knots.

use crate::domain::Interval;

pub const ORDER: usize = 4;
const DEGREE: usize = ORDER - 1;

/// Clamped knot vector: each end repeated `ORDER` times, `interior` equally
/// spaced knots in between.
pub fn clamped_knots(domain: Interval, interior: usize) -> Vec<f64> {
    let mut knots = Vec::with_capacity(interior + 2 * ORDER);
    knots.extend(std::iter::repeat_n(domain.lo(), ORDER));
    let h = domain.length() / (interior + 1) as f64;
    knots.extend((1..=interior).map(|i| domain.lo() + i as f64 * h));
    knots.extend(std::iter::repeat_n(domain.hi(), ORDER));
    knots
}

pub fn basis_len(knots: &[f64]) -> usize {
    knots.len() - ORDER
}

/// Index `i` of the knot span `[t_i, t_{i+1})` containing `x`, clamped to the
/// first and last nonempty spans so points outside the domain extrapolate.
fn find_span(knots: &[f64], x: f64) -> usize {
    let n = basis_len(knots);
    if x >= knots[n] {
        return n - 1;
    }
    if x <= knots[DEGREE] {
        return DEGREE;
    }
    // knots[DEGREE..=n] is sorted; find last t_i <= x
    let slice = &knots[DEGREE..=n];
    let pos = slice.partition_point(|&t| t <= x);
    (DEGREE + pos - 1).min(n - 1)
}

/// Nonzero basis values at `x`: returns the first index and the four values
/// `B_{first}(x), …, B_{first+3}(x)` (Cox–de Boor triangle).
pub fn eval_nonzero(knots: &[f64], x: f64) -> (usize, [f64; ORDER]) {
    let span = find_span(knots, x);
    let mut values = [0.0; ORDER];
    let mut left = [0.0; ORDER];
    let mut right = [0.0; ORDER];
    values[0] = 1.0;
    for j in 1..=DEGREE {
        left[j] = x - knots[span + 1 - j];
        right[j] = knots[span + j] - x;
        let mut saved = 0.0;
        for r in 0..j {
            let denom = right[r + 1] + left[j - r];
            let temp = if denom != 0.0 { values[r] / denom } else { 0.0 };
            values[r] = saved + right[r + 1] * temp;
            saved = left[j - r] * temp;
        }
        values[j] = saved;
    }
    (span - DEGREE, values)
}
