//! Fixtures shared by the benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stemvine::graph::{resnet34_template, ResNetProfiles, ResNetWidths};
use stemvine::oracle::PointCloud;
use stemvine::{Matrix, StemVineNetwork};

pub fn random_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..rows * cols)
        .map(|_| rng.random_range(-1.0..1.0))
        .collect();
    Matrix::from_vec(rows, cols, data).expect("finite entries")
}

pub fn resnet(width: usize) -> StemVineNetwork {
    resnet34_template(
        &ResNetProfiles::uniform(1.2, 0.5),
        &ResNetWidths::uniform(width),
    )
    .expect("uniform template")
}

pub fn random_cloud(points: usize, seed: u64) -> PointCloud {
    PointCloud::new(
        (0..points)
            .map(|i| random_matrix(4, 3, seed + i as u64))
            .collect(),
    )
    .expect("uniform shapes")
}
