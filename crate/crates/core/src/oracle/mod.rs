//! Independent checking machinery: brute-force ε-nets over discretized
//! hypothesis classes, Monte-Carlo Rademacher estimates, Lipschitz probes,
//! synthetic data and a small SGD trainer.
//!
//! Everything here is deterministic given its seed.

mod cover;
mod data;
mod probe;
mod rademacher;
mod train;

pub use cover::{
    composed_grid_class, exact_cover, greedy_cover, greedy_cover_farthest, grid_matrices,
    grid_single_matrix_class, ComposedClass, Cover, GridStage, PointCloud, EXACT_COVER_LIMIT,
    GRID_MAX_ENTRIES, GRID_MAX_POINTS,
};
pub use data::make_blobs;
pub use probe::lipschitz_probe;
pub use rademacher::{exact_rademacher, monte_carlo_rademacher, EXACT_RADEMACHER_LIMIT};
pub use train::{
    init_weights, loss_and_gradients, train_tiny, TrainConfig, TrainedModel, TRAIN_MAX_DIM,
    TRAIN_MAX_WEIGHTS,
};
