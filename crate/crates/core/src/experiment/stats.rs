//! Replicate summaries and the exact sign test.

use serde::Serialize;

/// Mean and standard error (sample sd with divisor `n − 1`, over `√n`).
/// The standard error is `None` for fewer than two values.
pub fn mean_se(values: &[f64]) -> (f64, Option<f64>) {
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, None);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, Some((var / n as f64).sqrt()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SignTest {
    /// Pairs with `a < b`.
    pub wins: usize,
    /// Pairs with `a > b`.
    pub losses: usize,
    pub ties: usize,
    /// Exact two-sided binomial p-value over the non-tied pairs.
    pub p_value: f64,
}

/// Paired sign test of `a` against `b`; ties are discarded.
pub fn sign_test(a: &[f64], b: &[f64]) -> SignTest {
    let (mut wins, mut losses, mut ties) = (0, 0, 0);
    for (x, y) in a.iter().zip(b) {
        if x < y {
            wins += 1;
        } else if x > y {
            losses += 1;
        } else {
            ties += 1;
        }
    }
    let n = wins + losses;
    let k = wins.min(losses);
    let tail: f64 = (0..=k).map(|i| binomial_pmf_half(n, i)).sum();
    SignTest { wins, losses, ties, p_value: (2.0 * tail).min(1.0) }
}

/// `C(n, k) / 2ⁿ`, evaluated in logs.
fn binomial_pmf_half(n: usize, k: usize) -> f64 {
    let ln_choose: f64 = (0..k).map(|i| ((n - i) as f64).ln() - ((i + 1) as f64).ln()).sum();
    (ln_choose - n as f64 * std::f64::consts::LN_2).exp()
}
