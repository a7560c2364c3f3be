//! Simulation toolkit for fully distributed surface codes driven by
//! emission-based multipartite entanglement generation.
//!
//! The crate is organized in layers:
//!
//! - [`qstate`]: dense complex linear algebra over labeled qubit/mode registers
//!   (density matrices, pure states, Pauli algebra).
//! - [`optics`]: the 4x4 beam-splitter network and all detection POVM elements
//!   (W, GHZ and Bell families) with pairwise photon visibilities, for
//!   photon-number-resolving and threshold detectors.
//! - [`noise`]: error channels (depolarizing, amplitude/phase damping,
//!   preparation dephasing, photon loss) plus hardware and timing parameter
//!   sets with a bundled registry.
//! - [`protocols`]: the ten entanglement-generation protocols (elementary,
//!   memory distillation, optical distillation) with exact branch analytics,
//!   repeat-until-success sampling and closed-form oracles.
//! - [`superop`]: noisy distributed stabilizer-measurement simulation, Choi /
//!   Kraus extraction, Pauli twirling and the tabular superoperator format.
//! - [`qec`]: modular toric-lattice Monte-Carlo engine with a weighted
//!   Union-Find decoder over the space-time syndrome graph.
//! - [`fit`]: finite-size-scaling regression (Gauss-Newton) for threshold
//!   extraction and the cut-off percentile scan.

pub mod fit;
pub mod noise;
pub mod optics;
pub mod pauli;
pub mod protocols;
pub mod qec;
pub mod qstate;
pub mod seeding;
pub mod superop;

pub use num_complex::Complex64 as C64;

/// Crate-wide schema version stamped into exported CSV/JSON artifacts.
pub const SCHEMA_VERSION: &str = "emqec-v1";
