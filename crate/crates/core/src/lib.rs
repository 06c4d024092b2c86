//! Covering-number and margin-based generalization certificates for
//! feed-forward networks with residual connections.
//!
//! A network is described as a *stem* (an alternating chain of weight
//! matrices and nonlinearities) plus any number of *vines* (residual
//! branches) that read a post-nonlinearity feature of the stem and add
//! their output back onto a later post-nonlinearity feature.
//!
//! The crate is organised bottom-up:
//!
//! - [`linalg`]: dense matrices and the three norms the bounds consume.
//! - [`graph`]: the stem-vine architecture model, validation, the
//!   34-layer residual template and the `stemvine/1` text format.
//! - [`eval`]: forward evaluation, margins, ramp loss and risks.
//! - [`bounds`]: single-matrix covering bounds, norm and radius
//!   propagation, per-matrix covering terms and the aggregate `R`.
//! - [`cert`]: entropy-integral and generalization bounds, certificates.
//! - [`oracle`]: brute-force covers, Monte-Carlo Rademacher estimates,
//!   Lipschitz probes, synthetic data and a tiny trainer used to check
//!   every bound at desk scale.

pub mod bounds;
pub mod cert;
pub mod error;
pub mod eval;
pub mod graph;
pub mod linalg;
pub mod oracle;

pub use bounds::{LayerTerm, PropagationTable};
pub use cert::{certify, BoundReport};
pub use error::{Error, Result};
pub use eval::{LabeledDataset, VertexTrace, WeightSet};
pub use graph::{
    Nonlinearity, NormProfile, SlotId, StemElement, StemVineNetwork, Vine, VineBody, Violation,
};
pub use linalg::Matrix;

/// Version string embedded in emitted reports.
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
