//! Entanglement-generation protocols: elementary Bell/W/GHZ heralding,
//! memory-assisted distillation and optical (double-click) distillation,
//! with exact branch analytics, repeat-until-success sampling and
//! closed-form oracles for the noiseless limits.

mod elementary;
mod emission;
mod frames;
mod gen_time;
mod memory;
mod optical;
mod oracle;

pub use elementary::{run_bell_dc, run_bell_sc, run_raw_ghz, run_w};
pub use emission::{comm_label, emit_joint_state, herald, mem_label, photon_label, MODULES};
pub use frames::{best_pauli_correction, ghz_phi4_plus, w4_state};
pub use gen_time::{cutoff_to_time, GenerationModel, TimeAtom};
pub use memory::{run_distill, MemoryVariant};
pub use optical::{run_dc_ghz, run_dc_w};
pub use oracle::{table_i_oracle, OracleValue};

use crate::noise::{HardwareParams, NoiseError, TimingParams};
use crate::qstate::{DensityMatrix, QstateError};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("unknown protocol `{0}`")]
    UnknownProtocol(String),
    #[error("no closed form for `{0}`; memory rows are simulation-defined")]
    NoClosedForm(String),
    #[error("protocol `{0}` does not produce a four-qubit GHZ resource")]
    NotGhzProducing(String),
    #[error(transparent)]
    State(#[from] QstateError),
    #[error(transparent)]
    Noise(#[from] NoiseError),
    #[error("optics failure: {0}")]
    Optics(#[from] crate::optics::OpticsError),
    #[error("empty generation-time distribution")]
    EmptyTimeDistribution,
    #[error("repeat-until-success exceeded {0} attempts")]
    Timeout(u64),
}

/// Acceptance convention for the second heralding round of the double-click
/// GHZ protocol with threshold detectors.
///
/// `WithBunching` additionally accepts the two-photon same-detector events
/// (summed over two or more registered photons, so a lost photon cannot fake
/// the pattern); this is the convention under which the noiseless success
/// rate matches the closed form with both detector types. `PairsOnly`
/// restricts a threshold detector to the six two-detector coincidences.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum DcRound2 {
    #[default]
    WithBunching,
    PairsOnly,
}

/// Everything a protocol run needs to know about the environment.
#[derive(Clone, Debug)]
pub struct SimEnv {
    pub hw: HardwareParams,
    pub timing: TimingParams,
    /// Circuit-level gate error probability p_g.
    pub p: f64,
    /// Measurement outcome-flip probability; defaults to p_g.
    pub p_meas: f64,
    pub dc_round2: DcRound2,
}

impl SimEnv {
    pub fn new(hw: HardwareParams, timing: TimingParams, p: f64) -> Self {
        SimEnv {
            hw,
            timing,
            p,
            p_meas: p,
            dc_round2: DcRound2::default(),
        }
    }

    /// Noiseless hardware: ideal parameters, zero circuit error and
    /// infinite coherence times.
    pub fn ideal(alpha: f64, pnr: bool) -> Self {
        SimEnv::new(
            HardwareParams::ideal().with_alpha(alpha).with_pnr(pnr),
            TimingParams::default().with_coherence(f64::INFINITY),
            0.0,
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ProtocolId {
    BellSc,
    BellDc,
    W,
    RawGhz,
    DcGhz,
    DcW,
    DistilBellSc,
    DistilBellDc,
    DistilWGhz,
    DistilWW,
    DistilGhzGhz,
}

impl ProtocolId {
    pub const ALL: [ProtocolId; 11] = [
        ProtocolId::BellSc,
        ProtocolId::BellDc,
        ProtocolId::W,
        ProtocolId::RawGhz,
        ProtocolId::DcGhz,
        ProtocolId::DcW,
        ProtocolId::DistilBellSc,
        ProtocolId::DistilBellDc,
        ProtocolId::DistilWGhz,
        ProtocolId::DistilWW,
        ProtocolId::DistilGhzGhz,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ProtocolId::BellSc => "bell_sc",
            ProtocolId::BellDc => "bell_dc",
            ProtocolId::W => "w",
            ProtocolId::RawGhz => "raw_ghz",
            ProtocolId::DcGhz => "dc_ghz",
            ProtocolId::DcW => "dc_w",
            ProtocolId::DistilBellSc => "distil_bell_sc",
            ProtocolId::DistilBellDc => "distil_bell_dc",
            ProtocolId::DistilWGhz => "distil_w_ghz",
            ProtocolId::DistilWW => "distil_w_w",
            ProtocolId::DistilGhzGhz => "distil_ghz_ghz",
        }
    }

    pub fn from_name(name: &str) -> Result<ProtocolId, ProtocolError> {
        Self::ALL
            .iter()
            .find(|p| p.name() == name)
            .copied()
            .ok_or_else(|| ProtocolError::UnknownProtocol(name.to_string()))
    }

    pub fn is_memory_distillation(&self) -> bool {
        matches!(
            self,
            ProtocolId::DistilBellSc
                | ProtocolId::DistilBellDc
                | ProtocolId::DistilWGhz
                | ProtocolId::DistilWW
                | ProtocolId::DistilGhzGhz
        )
    }

    /// Protocols whose output is a four-module GHZ resource usable for
    /// distributed stabilizer measurements.
    pub fn produces_ghz(&self) -> bool {
        !matches!(self, ProtocolId::BellSc | ProtocolId::BellDc | ProtocolId::W)
    }
}

/// Summary of the repeat-until-success attempt distribution of a run.
#[derive(Clone, Debug, Serialize, Deserialize, Default)]
pub struct AttemptStats {
    pub mean: f64,
    pub std: f64,
    pub max: f64,
}

#[derive(Clone, Debug)]
pub struct ProtocolResult {
    /// Per-attempt success probability for elementary protocols, full
    /// two-round success probability for optical distillation, and the
    /// per-shot attempt-weighted rate for memory distillation.
    pub success_prob: f64,
    /// Square-root fidelity against the protocol target state.
    pub fidelity: f64,
    pub attempts: AttemptStats,
    /// Normalized, frame-corrected output state.
    pub output_state: DensityMatrix,
    /// Mean elapsed generation time in t_link units.
    pub ghz_time: f64,
}

/// Dispatch a protocol by id. Memory-distillation protocols are sampled
/// over `n_shots` with seeds derived from `master_seed`; the others are
/// computed by exact branch analysis and ignore the shot plan.
pub fn run_protocol(
    id: ProtocolId,
    env: &SimEnv,
    n_shots: u64,
    master_seed: u64,
) -> Result<ProtocolResult, ProtocolError> {
    match id {
        ProtocolId::BellSc => run_bell_sc(env),
        ProtocolId::BellDc => run_bell_dc(env),
        ProtocolId::W => run_w(env),
        ProtocolId::RawGhz => run_raw_ghz(env),
        ProtocolId::DcGhz => run_dc_ghz(env),
        ProtocolId::DcW => run_dc_w(env),
        ProtocolId::DistilBellSc => {
            run_distill(MemoryVariant::BellToGhz { double_click: false }, env, n_shots, master_seed)
        }
        ProtocolId::DistilBellDc => {
            run_distill(MemoryVariant::BellToGhz { double_click: true }, env, n_shots, master_seed)
        }
        ProtocolId::DistilWGhz => run_distill(MemoryVariant::WToGhz, env, n_shots, master_seed),
        ProtocolId::DistilWW => run_distill(MemoryVariant::WToW, env, n_shots, master_seed),
        ProtocolId::DistilGhzGhz => {
            run_distill(MemoryVariant::GhzToGhz, env, n_shots, master_seed)
        }
    }
}

/// Generation-time and conditional-state model used by the superoperator
/// builder and the cut-off machinery.
pub fn generation_model(
    id: ProtocolId,
    env: &SimEnv,
    seed: u64,
) -> Result<GenerationModel, ProtocolError> {
    if !id.produces_ghz() {
        return Err(ProtocolError::NotGhzProducing(id.name().to_string()));
    }
    gen_time::build_model(id, env, seed)
}
