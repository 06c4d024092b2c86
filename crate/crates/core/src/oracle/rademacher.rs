use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Largest sample size [`exact_rademacher`] enumerates.
pub const EXACT_RADEMACHER_LIMIT: usize = 24;

fn sup_correlation(values: &Matrix, signs: &[f64]) -> f64 {
    let n = values.cols() as f64;
    (0..values.rows())
        .map(|h| {
            values
                .row(h)
                .iter()
                .zip(signs)
                .map(|(v, e)| v * e)
                .sum::<f64>()
                / n
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Monte-Carlo estimate of `E_σ sup_h (1/n) Σ_i σ_i·h(x_i)`.
///
/// `values` holds one hypothesis per row and one instance per column. Trial
/// `t` draws its signs from the ChaCha stream `t` of `seed`, so any subset
/// of trials can be recomputed independently.
pub fn monte_carlo_rademacher(values: &Matrix, trials: usize, seed: u64) -> Result<f64> {
    if trials == 0 {
        return Err(Error::Param("need at least one trial".into()));
    }
    // an empty hypothesis list cannot be represented by a Matrix
    let n = values.cols();
    let mut signs = vec![0.0; n];
    let mut total = 0.0;
    for t in 0..trials {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(t as u64);
        for e in signs.iter_mut() {
            *e = if rng.random::<bool>() { 1.0 } else { -1.0 };
        }
        total += sup_correlation(values, &signs);
    }
    Ok(total / trials as f64)
}

/// Exact value by enumerating all `2^n` sign patterns.
pub fn exact_rademacher(values: &Matrix) -> Result<f64> {
    let n = values.cols();
    if n > EXACT_RADEMACHER_LIMIT {
        return Err(Error::Size(format!(
            "exact enumeration supports at most {EXACT_RADEMACHER_LIMIT} instances, got {n}"
        )));
    }
    let patterns = 1u64 << n;
    let mut signs = vec![0.0; n];
    let mut total = 0.0;
    for mask in 0..patterns {
        for (i, e) in signs.iter_mut().enumerate() {
            *e = if mask & (1 << i) != 0 { 1.0 } else { -1.0 };
        }
        total += sup_correlation(values, &signs);
    }
    Ok(total / patterns as f64)
}
