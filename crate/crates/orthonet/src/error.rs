//! Error type shared by every module of the crate.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Everything that can go wrong while building grids, systems, or transforms.
#[derive(Debug, Error)]
pub enum Error {
    /// Grid construction parameters violate an invariant (n ≥ 5, b > a, …).
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    /// An axis argument was not 0, 1 or 2.
    #[error("axis {0} out of range (expected 0, 1 or 2)")]
    AxisOutOfRange(usize),

    /// A node index lies outside the grid.
    #[error("node {node:?} outside grid of size {n:?}")]
    NodeOutOfRange { node: [usize; 3], n: [usize; 3] },

    /// Two fields that must share a grid do not.
    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    /// The Jacobian of a parametrization degenerates at a node.
    #[error("degenerate Jacobian at node {node:?} (det = {det:e})")]
    DegenerateJacobian { node: [usize; 3], det: f64 },

    /// A quantity that must stay away from zero fell below its threshold.
    #[error("{what} below threshold at node {node:?} (|value| = {value:e})")]
    SmallDivisor {
        what: &'static str,
        node: [usize; 3],
        value: f64,
    },

    /// A documented precondition of a transform or check does not hold.
    #[error("precondition failed: {0}")]
    Precondition(String),

    /// A chart name not present in the catalog.
    #[error("unknown chart {0:?}")]
    UnknownChart(String),

    /// Chart parameters or the requested grid leave the chart's validity domain.
    #[error("domain violation: {0}")]
    Domain(String),

    /// Forwarded I/O failure from exports.
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
