//! Modular toric surface-code Monte-Carlo engine: lattice construction,
//! four-sub-round scheduling, superoperator-table sampling with the cut-off
//! reuse policy, weighted Union-Find decoding over the space-time syndrome
//! graph and logical-failure detection.

mod lattice;
mod sampler;
mod uf;

pub use lattice::{LatticeError, SubRound, ToricLattice};
pub use sampler::{
    logical_error_rate, CompiledTable, QecConfig, QecRunner, SampledRow, ShotOutcome,
    TimeLayering,
};
pub use uf::{syndrome_of, union_find_decode, DecodingGraph, EdgeKind, GraphEdge};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum QecError {
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error("table not normalized for basis {0}: sum {1}")]
    BadTable(&'static str, f64),
    #[error("rounds must be at least 1")]
    BadRounds,
}
