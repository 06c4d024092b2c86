use std::fmt;

use thiserror::Error;

use crate::graph::{SlotId, Violation};

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Which declared bound a concrete weight broke.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProfileBound {
    Spectral,
    ReferenceDistance,
}

impl fmt::Display for ProfileBound {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProfileBound::Spectral => f.write_str("spectral bound s"),
            ProfileBound::ReferenceDistance => f.write_str("reference-distance bound b"),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("power iteration did not converge in {iterations} iterations (last estimate {last})")]
    Convergence { iterations: usize, last: f64 },

    #[error("invalid parameter: {0}")]
    Param(String),

    #[error("label {label} out of range 1..={classes}")]
    Label { label: usize, classes: usize },

    #[error("evaluation error: {0}")]
    Eval(String),

    #[error("template error: {0}")]
    Template(String),

    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("invalid network: {}", join_violations(.0))]
    Semantic(Vec<Violation>),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("weight {slot} violates its {bound}: measured {measured}, declared {declared}")]
    ProfileViolation {
        slot: SlotId,
        bound: ProfileBound,
        measured: f64,
        declared: f64,
    },

    #[error("instance too large: {0}")]
    Size(String),

    #[error("training failed: {0}")]
    Train(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn join_violations(v: &[Violation]) -> String {
    v.iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}
