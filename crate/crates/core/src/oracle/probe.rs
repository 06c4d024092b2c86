use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::eval::{predict, WeightSet};
use crate::graph::StemVineNetwork;
use crate::linalg::Matrix;

/// Largest observed `‖F(x) − F(x′)‖ / ‖x − x′‖` over seeded random pairs.
///
/// Each pair is a Gaussian point and a Gaussian perturbation of it whose
/// scale is drawn log-uniformly from `[10⁻³, 10]`, so both local slopes and
/// long chords are sampled.
pub fn lipschitz_probe(
    net: &StemVineNetwork,
    weights: &WeightSet,
    trials: usize,
    seed: u64,
) -> Result<f64> {
    if trials == 0 {
        return Err(Error::Param("need at least one probe pair".into()));
    }
    let d = net.input_dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut a = Vec::with_capacity(trials * d);
    let mut b = Vec::with_capacity(trials * d);
    for _ in 0..trials {
        let scale = 10f64.powf(rng.random_range(-3.0..1.0));
        for _ in 0..d {
            let x: f64 = rng.sample(StandardNormal);
            let dx: f64 = rng.sample(StandardNormal);
            a.push(x);
            b.push(x + scale * dx);
        }
    }
    let xa = Matrix::from_vec(trials, d, a)?;
    let xb = Matrix::from_vec(trials, d, b)?;
    let fa = predict(net, weights, &xa)?;
    let fb = predict(net, weights, &xb)?;
    let norm = |u: &[f64], v: &[f64]| {
        u.iter()
            .zip(v)
            .map(|(p, q)| (p - q) * (p - q))
            .sum::<f64>()
            .sqrt()
    };
    let mut best: f64 = 0.0;
    for i in 0..trials {
        let dx = norm(xa.row(i), xb.row(i));
        if dx > 0.0 {
            best = best.max(norm(fa.row(i), fb.row(i)) / dx);
        }
    }
    Ok(best)
}
