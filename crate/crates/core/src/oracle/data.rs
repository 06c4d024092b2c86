use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::eval::LabeledDataset;
use crate::linalg::Matrix;

/// `k` Gaussian blobs with standard deviation `spread` around distinct
/// corners of the `[−1, 1]^{n₀}` hypercube. Class `c` (1-based) sits at the
/// corner whose coordinate `j` is `+1` when bit `j` of `c − 1` is set.
/// Instance `i` gets label `i mod k + 1`, so classes are balanced.
pub fn make_blobs(n: usize, n0: usize, k: usize, spread: f64, seed: u64) -> Result<LabeledDataset> {
    if n == 0 || n0 == 0 || k == 0 {
        return Err(Error::Param(format!(
            "blob sizes must be positive, got n={n}, n0={n0}, k={k}"
        )));
    }
    if n0 < usize::BITS as usize && k > 1usize << n0 {
        return Err(Error::Param(format!(
            "{k} classes do not fit on the corners of a {n0}-cube"
        )));
    }
    if !(spread >= 0.0 && spread.is_finite()) {
        return Err(Error::Param(format!(
            "spread must be nonnegative, got {spread}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = Vec::with_capacity(n * n0);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % k;
        labels.push(c + 1);
        for j in 0..n0 {
            let corner = if j < 64 && (c >> j) & 1 == 1 {
                1.0
            } else {
                -1.0
            };
            let noise: f64 = rng.sample(StandardNormal);
            data.push(corner + spread * noise);
        }
    }
    LabeledDataset::new(Matrix::from_vec(n, n0, data)?, labels, k)
}
