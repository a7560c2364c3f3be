//! Noisy distributed stabilizer measurement, conditioned Choi matrices,
//! Kraus extraction, Pauli twirling and the tabular superoperator consumed
//! by the surface-code sampler.
//!
//! The stabilizer cycle couples a (generally noisy) four-qubit GHZ resource
//! on the communication register to the four data qubits of one stabilizer
//! unit cell, measures the communication qubits and reports the parity.
//! Per branch (GHZ success/failure, reported parity) the cycle is a linear
//! map on the data register; its Choi matrix is assembled from matrix-unit
//! inputs and decomposed against the stabilizer-projected Pauli basis
//! E_e (I +- S)/2, which yields rows (pauli, ghz flag, outcome flip).

use crate::noise::{
    decohere_all, decoherence_pauli_weights, depolarizing_mixture, Regime,
};
use crate::pauli::{PauliOp, PauliString};
use crate::protocols::{
    comm_label, cutoff_to_time, generation_model, GenerationModel, ProtocolError, ProtocolId,
    SimEnv,
};
use crate::qstate::{gates, hermitian_eigen, DensityMatrix, Label};
use crate::C64;
use serde::{Deserialize, Serialize};
use std::io::Write as _;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TableError {
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    State(#[from] crate::qstate::QstateError),
    #[error(transparent)]
    Noise(#[from] crate::noise::NoiseError),
    #[error("choi matrix has a significantly negative eigenvalue {0:.3e}")]
    InvalidMap(f64),
    #[error("table io: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed table row {0}: {1}")]
    MalformedRow(usize, String),
    #[error("table probabilities sum to {0}, outside [1-1e-6, 1+1e-6]")]
    BadNormalization(f64),
    #[error("unsupported schema `{0}`")]
    BadSchema(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StabBasis {
    X,
    Z,
}

impl StabBasis {
    pub fn stabilizer(&self) -> PauliString {
        match self {
            StabBasis::X => PauliString::from_str("XXXX").unwrap(),
            StabBasis::Z => PauliString::from_str("ZZZZ").unwrap(),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            StabBasis::X => "X",
            StabBasis::Z => "Z",
        }
    }

    pub fn from_str_sym(s: &str) -> Option<StabBasis> {
        match s {
            "X" => Some(StabBasis::X),
            "Z" => Some(StabBasis::Z),
            _ => None,
        }
    }
}

pub fn data_label(i: usize) -> Label {
    Label::new(format!("{}.d", crate::protocols::MODULES[i]))
}

/// A conditioned Choi matrix for one (ghz flag, reported outcome) branch.
#[derive(Clone, Debug)]
pub struct ConditionedMap {
    pub ghz_success: bool,
    /// Reported parity: true = +1 (even), false = -1 (odd).
    pub outcome_plus: bool,
    /// Unnormalized Choi matrix on data_out (x) data_in, dimension 256.
    pub choi: Vec<C64>,
}

impl ConditionedMap {
    pub fn trace(&self) -> f64 {
        (0..256).map(|i| self.choi[i * 256 + i].re).sum()
    }
}

/// One run of the stabilizer-cycle circuit on an arbitrary data-register
/// matrix (not necessarily a state). Returns the unnormalized output data
/// matrices conditioned on even and odd reported parity.
fn run_cycle_on_matrix(
    env: &SimEnv,
    basis: StabBasis,
    ghz_comm: &DensityMatrix,
    data_matrix: &[C64],
    data_window: f64,
) -> Result<[Vec<C64>; 2], TableError> {
    let datas: Vec<Label> = (0..4).map(data_label).collect();
    let comms: Vec<Label> = (0..4).map(comm_label).collect();
    let data_dm = DensityMatrix::qubits_from_matrix(&datas, data_matrix.to_vec(), false)?;
    let mut joint = ghz_comm.tensor(&data_dm)?;
    // data qubits idle through the generation window
    joint = decohere_all(&joint, &datas, data_window, Regime::Linking, &env.timing);
    let depol2 = depolarizing_mixture(env.p, 2)?;
    let depol1 = depolarizing_mixture(env.p, 1)?;
    // parity extraction by local two-qubit gates: CZ for the Z stabilizer,
    // communication-controlled CNOT for the X stabilizer, then X-basis
    // readout of the communication qubits
    for m in 0..4 {
        let pair = [comm_label(m), data_label(m)];
        let gate = match basis {
            StabBasis::Z => gates::cz(),
            StabBasis::X => gates::cnot(),
        };
        joint = joint.apply_unitary(&gate, &pair)?;
        if env.p > 0.0 {
            joint = joint.apply_pauli_mixture(&depol2, &pair)?;
        }
    }
    let all: Vec<Label> = comms.iter().chain(datas.iter()).cloned().collect();
    joint = decohere_all(&joint, &all, env.timing.t_two_qubit, Regime::Idle, &env.timing);
    for l in &comms {
        joint = joint.apply_unitary(&gates::h(), std::slice::from_ref(l))?;
        if env.p > 0.0 {
            joint = joint.apply_pauli_mixture(&depol1, std::slice::from_ref(l))?;
        }
    }
    joint = decohere_all(&joint, &all, env.timing.t_pauli_comm, Regime::Idle, &env.timing);
    joint = decohere_all(&joint, &datas, env.timing.t_meas, Regime::Idle, &env.timing);
    let branches = joint.measure_z_all(&comms, env.p_meas)?;
    let mut even = vec![C64::ZERO; 256];
    let mut odd = vec![C64::ZERO; 256];
    for (pattern, _, dm) in branches {
        let target = if pattern.count_ones() % 2 == 0 {
            &mut even
        } else {
            &mut odd
        };
        for (t, v) in target.iter_mut().zip(dm.data().iter()) {
            *t += v;
        }
    }
    Ok([even, odd])
}

/// Circuit duration of one stabilizer cycle (excluding the generation
/// window).
pub fn cycle_circuit_time(env: &SimEnv, _basis: StabBasis) -> f64 {
    env.timing.t_two_qubit + env.timing.t_pauli_comm + env.timing.t_meas
}

/// Simulate the distributed stabilizer-measurement circuit fed by a GHZ
/// resource and return the success-branch conditioned Choi matrices.
pub fn simulate_stabilizer_cycle(
    ghz_comm: &DensityMatrix,
    basis: StabBasis,
    env: &SimEnv,
    data_window: f64,
) -> Result<Vec<ConditionedMap>, TableError> {
    assert_eq!(ghz_comm.dim(), 16, "four-qubit GHZ resource required");
    use rayon::prelude::*;
    let blocks: Vec<(usize, usize, [Vec<C64>; 2])> = (0..256usize)
        .into_par_iter()
        .map(|ij| {
            let (i, j) = (ij / 16, ij % 16);
            let mut unit = vec![C64::ZERO; 256];
            unit[i * 16 + j] = C64::new(1.0, 0.0);
            let out = run_cycle_on_matrix(env, basis, ghz_comm, &unit, data_window)
                .expect("cycle on matrix unit");
            (i, j, out)
        })
        .collect();
    let mut even = vec![C64::ZERO; 256 * 256];
    let mut odd = vec![C64::ZERO; 256 * 256];
    for (i, j, out) in blocks {
        for r in 0..16 {
            for c in 0..16 {
                even[(r * 16 + i) * 256 + (c * 16 + j)] = out[0][r * 16 + c];
                odd[(r * 16 + i) * 256 + (c * 16 + j)] = out[1][r * 16 + c];
            }
        }
    }
    Ok(vec![
        ConditionedMap {
            ghz_success: true,
            outcome_plus: true,
            choi: even,
        },
        ConditionedMap {
            ghz_success: true,
            outcome_plus: false,
            choi: odd,
        },
    ])
}

/// Kraus operators from an (unnormalized) Choi matrix: eigenpairs above the
/// 1e-12 clamp reshaped into operators. A significantly negative eigenvalue
/// invalidates the map.
pub fn kraus_from_choi(choi: &[C64]) -> Result<Vec<Vec<C64>>, TableError> {
    let dim2 = choi.len();
    let dim = (dim2 as f64).sqrt() as usize;
    assert_eq!(dim * dim, dim2);
    let w = (dim as f64).log2() as usize / 2;
    let op_dim = 1usize << w;
    assert_eq!(op_dim * op_dim, dim);
    let (vals, vecs) = hermitian_eigen(choi, dim);
    let mut kraus = Vec::new();
    for (k, &lambda) in vals.iter().enumerate() {
        if lambda < -1e-8 {
            return Err(TableError::InvalidMap(lambda));
        }
        if lambda <= 1e-12 {
            continue;
        }
        let s = lambda.sqrt();
        let v = &vecs[k];
        let mut op = vec![C64::ZERO; dim];
        for (idx, a) in v.iter().enumerate() {
            op[idx] = a * s;
        }
        kraus.push(op);
    }
    Ok(kraus)
}

/// Plain Pauli twirl: probability weights q_e = sum_j |Tr(E_e^dag K_j)|^2 / 4^w
/// over all Pauli strings. When `normalized` is set, the weights are divided
/// by their sum (the conditional trace).
pub fn pauli_twirl(kraus: &[Vec<C64>], w: usize, normalized: bool) -> Vec<(PauliString, f64)> {
    let denom = 4f64.powi(w as i32);
    let mut out: Vec<(PauliString, f64)> = PauliString::enumerate(w)
        .map(|e| {
            let q: f64 = kraus
                .iter()
                .map(|k| {
                    let c = e.hs_coefficient(k) / C64::new(2f64.powi(w as i32), 0.0);
                    c.norm_sqr()
                })
                .sum::<f64>()
                * (4f64.powi(w as i32) / denom); // q_e = sum |c|^2 with c = Tr/2^w
            (e, q)
        })
        .collect();
    if normalized {
        let total: f64 = out.iter().map(|(_, q)| q).sum();
        if total > 0.0 {
            for (_, q) in &mut out {
                *q /= total;
            }
        }
    }
    out
}

/// Sparse vectorization of E_e (I + mu S)/2 for the quadratic-form
/// extraction of instrument-twirl weights.
fn projected_pauli_vec(e: &PauliString, s: &PauliString, mu_plus: bool) -> Vec<(usize, C64)> {
    let dim = 1usize << e.len();
    let mut entries: Vec<(usize, C64)> = Vec::with_capacity(2 * dim);
    // B = (E + mu E S)/2; (E S)[r, c]: S|c> = ph_s |c'>, E|c'> = ph_e |r>
    let sign = if mu_plus { 1.0 } else { -1.0 };
    for c in 0..dim {
        // E part
        let (r1, ph1) = e.apply_basis(c);
        entries.push((r1 * dim + c, ph1 * C64::new(0.5, 0.0)));
        // E S part
        let (cs, phs) = s.apply_basis(c);
        let (r2, ph2) = e.apply_basis(cs);
        entries.push((r2 * dim + c, ph2 * phs * C64::new(0.5 * sign, 0.0)));
    }
    entries
}

fn quadratic_form(choi: &[C64], dim: usize, vec: &[(usize, C64)]) -> f64 {
    let mut acc = C64::ZERO;
    for &(i, vi) in vec {
        for &(j, vj) in vec {
            acc += vi.conj() * choi[i * dim + j] * vj;
        }
    }
    acc.re
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct SuperRow {
    pub basis: StabBasis,
    pub pauli: PauliString,
    pub ghz_success: bool,
    pub meas_error: bool,
    pub probability: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TableMeta {
    pub schema: String,
    pub protocol: String,
    pub p: f64,
    pub cutoff_percentile: f64,
    pub t_cut: f64,
    pub p_ghz_within_cutoff: f64,
    pub ghz_fidelity: f64,
    pub attempt_success_prob: f64,
    pub seed: u64,
    pub params_digest: String,
}

#[derive(Clone, Debug)]
pub struct SuperoperatorTable {
    pub rows: Vec<SuperRow>,
    pub meta: TableMeta,
}

impl SuperoperatorTable {
    pub fn rows_for(&self, basis: StabBasis) -> impl Iterator<Item = &SuperRow> {
        self.rows.iter().filter(move |r| r.basis == basis)
    }

    pub fn basis_sum(&self, basis: StabBasis) -> f64 {
        self.rows_for(basis).map(|r| r.probability).sum()
    }

    /// Marginal probability that a sampled row flips the reported outcome.
    pub fn flip_marginal(&self, basis: StabBasis) -> f64 {
        self.rows_for(basis)
            .filter(|r| r.meas_error)
            .map(|r| r.probability)
            .sum()
    }

    /// Marginal probability that a sampled row deposits, on a given data
    /// slot, a Pauli component anticommuting with `check`.
    pub fn slot_marginal(&self, basis: StabBasis, check: PauliOp) -> f64 {
        let mut acc = 0.0;
        for r in self.rows_for(basis) {
            let hits = r
                .pauli
                .ops
                .iter()
                .filter(|op| op.anticommutes(check))
                .count();
            acc += r.probability * hits as f64 / 4.0;
        }
        acc
    }

    pub fn fail_prior(&self, basis: StabBasis) -> f64 {
        self.rows_for(basis)
            .filter(|r| !r.ghz_success)
            .map(|r| r.probability)
            .sum()
    }
}

/// Decompose a conditioned success-branch Choi against the projected Pauli
/// basis; returns ((pauli coset rep, input parity mu), weight).
fn instrument_weights(
    choi: &[C64],
    basis: StabBasis,
) -> Vec<((PauliString, bool), f64)> {
    let s = basis.stabilizer();
    let mut out = Vec::new();
    for e in PauliString::enumerate(4) {
        // coset representative of {e, e*S}
        let es = e.compose_up_to_phase(&s);
        if es.code() < e.code() {
            continue;
        }
        for mu_plus in [true, false] {
            let v = projected_pauli_vec(&e, &s, mu_plus);
            let q = quadratic_form(choi, 256, &v) / 64.0;
            if q > 1e-15 {
                out.push(((e.clone(), mu_plus), q));
            }
        }
    }
    out
}

/// Build the full tabular superoperator for a GHZ-producing protocol at
/// cut-off percentile `x`.
pub fn build_table(
    protocol: ProtocolId,
    env: &SimEnv,
    x: f64,
    seed: u64,
) -> Result<SuperoperatorTable, TableError> {
    let model = generation_model(protocol, env, seed)?;
    build_table_from_model(protocol, env, &model, x, seed)
}

pub fn build_table_from_model(
    protocol: ProtocolId,
    env: &SimEnv,
    model: &GenerationModel,
    x: f64,
    seed: u64,
) -> Result<SuperoperatorTable, TableError> {
    let t_cut = cutoff_to_time(model, x)?;
    let p_within = model.prob_within(t_cut);
    let comms: Vec<Label> = (0..4).map(comm_label).collect();

    // success-branch GHZ state averaged over generation times, each aged by
    // the synchronous-window remainder
    let cut_milli = (t_cut * 1000.0).round() as u64;
    let mut averaged: Option<DensityMatrix> = None;
    for atom in model.atoms.iter().filter(|a| a.time_milli <= cut_milli) {
        let wait = (cut_milli - atom.time_milli) as f64 * 1e-3;
        let aged = decohere_all(
            &model.states[atom.state_idx],
            &comms,
            wait,
            Regime::Linking,
            &env.timing,
        )
        .scale(atom.prob);
        averaged = Some(match averaged {
            None => aged,
            Some(acc) => acc.add(&aged)?,
        });
    }
    let ghz = averaged
        .ok_or(ProtocolError::EmptyTimeDistribution)?
        .normalize()?;
    let ghz_fidelity = ghz.sqrt_fidelity(&crate::protocols::ghz_phi4_plus(&comms))?;

    let mut rows = Vec::new();
    for basis in [StabBasis::Z, StabBasis::X] {
        let maps = simulate_stabilizer_cycle(&ghz, basis, env, t_cut)?;
        // success rows: merge (mu, m) into the flip flag, average over the
        // two input parities
        let mut merged: std::collections::HashMap<(usize, bool), f64> =
            std::collections::HashMap::new();
        for map in &maps {
            let weights = instrument_weights(&map.choi, basis);
            for ((e, mu_plus), q) in weights {
                let flip = mu_plus != map.outcome_plus;
                *merged.entry((e.code(), flip)).or_insert(0.0) += 0.5 * q;
            }
        }
        let mut keys: Vec<(usize, bool)> = merged.keys().copied().collect();
        keys.sort_unstable();
        for (code, flip) in keys {
            rows.push(SuperRow {
                basis,
                pauli: PauliString::from_code(code, 4),
                ghz_success: true,
                meas_error: flip,
                probability: p_within * merged[&(code, flip)],
            });
        }
        // failure rows: the stabilizer is aborted, the data qubits only
        // decohere through the full window
        let window = t_cut;
        let circuit = cycle_circuit_time(env, basis);
        let w_link = decoherence_pauli_weights(window, env.timing.t_link_coherence);
        let w_idle = decoherence_pauli_weights(circuit, env.timing.t_idle_coherence);
        let per_qubit = compose_pauli_weights(&w_link, &w_idle);
        for code in 0..256usize {
            let pauli = PauliString::from_code(code, 4);
            let mut w = 1.0;
            for op in &pauli.ops {
                w *= per_qubit[pauli_index(*op)];
            }
            if w * (1.0 - p_within) > 1e-300 {
                rows.push(SuperRow {
                    basis,
                    pauli,
                    ghz_success: false,
                    meas_error: false,
                    probability: (1.0 - p_within) * w,
                });
            }
        }
    }
    let meta = TableMeta {
        schema: crate::SCHEMA_VERSION.to_string(),
        protocol: protocol.name().to_string(),
        p: env.p,
        cutoff_percentile: x,
        t_cut,
        p_ghz_within_cutoff: p_within,
        ghz_fidelity,
        attempt_success_prob: 1.0 / model.attempt_mean.max(1e-300),
        seed,
        params_digest: params_digest(env),
    };
    Ok(SuperoperatorTable { rows, meta })
}

fn pauli_index(op: PauliOp) -> usize {
    match op {
        PauliOp::I => 0,
        PauliOp::X => 1,
        PauliOp::Y => 2,
        PauliOp::Z => 3,
    }
}

/// Convolve two single-qubit Pauli-channel weight vectors (I,X,Y,Z order).
fn compose_pauli_weights(a: &[f64; 4], b: &[f64; 4]) -> [f64; 4] {
    // composition table of single-qubit Paulis modulo phases
    const MUL: [[usize; 4]; 4] = [[0, 1, 2, 3], [1, 0, 3, 2], [2, 3, 0, 1], [3, 2, 1, 0]];
    let mut out = [0.0; 4];
    for i in 0..4 {
        for j in 0..4 {
            out[MUL[i][j]] += a[i] * b[j];
        }
    }
    out
}

fn params_digest(env: &SimEnv) -> String {
    // order-stable digest of the physical configuration
    format!(
        "a={};ab={};ad={};eta={};mu={};fprep={};pde={};pnr={};p={};T=({},{});t=({},{},{},{},{},{})",
        env.hw.alpha,
        env.hw.alpha_base,
        env.hw.alpha_distil,
        env.hw.eta_ph,
        env.hw.mu_intensity,
        env.hw.f_prep,
        env.hw.p_de,
        env.hw.pnr,
        env.p,
        env.timing.t_link_coherence,
        env.timing.t_idle_coherence,
        env.timing.t_link,
        env.timing.t_meas,
        env.timing.t_pauli_comm,
        env.timing.t_pauli_mem,
        env.timing.t_two_qubit,
        env.timing.t_swap,
    )
}

/// Write the table as CSV (`basis,pauli,ghz_success,meas_error,probability`)
/// plus a JSON metadata sidecar at `<path>.meta.json`.
pub fn export_table(table: &SuperoperatorTable, path: &Path) -> Result<(), TableError> {
    let mut f = std::fs::File::create(path)?;
    writeln!(f, "basis,pauli,ghz_success,meas_error,probability")?;
    for r in &table.rows {
        writeln!(
            f,
            "{},{},{},{},{}",
            r.basis.as_str(),
            r.pauli.to_string_ixyz(),
            r.ghz_success,
            r.meas_error,
            r.probability
        )?;
    }
    let meta_path = path.with_extension("meta.json");
    let meta = serde_json::to_string_pretty(&table.meta).expect("meta serializes");
    std::fs::write(meta_path, meta)?;
    Ok(())
}

/// Load and validate a table CSV; the sidecar is read when present.
pub fn import_table(path: &Path) -> Result<SuperoperatorTable, TableError> {
    let mut rdr = csv::ReaderBuilder::new().from_path(path)?;
    let mut rows = Vec::new();
    for (idx, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let bad = |m: &str| TableError::MalformedRow(idx + 1, m.to_string());
        let basis = StabBasis::from_str_sym(rec.get(0).ok_or_else(|| bad("missing basis"))?)
            .ok_or_else(|| bad("bad basis"))?;
        let pauli_s = rec.get(1).ok_or_else(|| bad("missing pauli"))?;
        if pauli_s.len() != 4 {
            return Err(bad("pauli must have 4 sites"));
        }
        let pauli = PauliString::from_str(pauli_s).ok_or_else(|| bad("bad pauli"))?;
        let ghz_success = rec
            .get(2)
            .and_then(|s| s.parse::<bool>().ok())
            .ok_or_else(|| bad("bad ghz_success"))?;
        let meas_error = rec
            .get(3)
            .and_then(|s| s.parse::<bool>().ok())
            .ok_or_else(|| bad("bad meas_error"))?;
        let probability = rec
            .get(4)
            .and_then(|s| s.parse::<f64>().ok())
            .ok_or_else(|| bad("bad probability"))?;
        if !(0.0..=1.0 + 1e-9).contains(&probability) {
            return Err(bad("probability outside [0,1]"));
        }
        rows.push(SuperRow {
            basis,
            pauli,
            ghz_success,
            meas_error,
            probability,
        });
    }
    let table = SuperoperatorTable {
        rows,
        meta: read_meta(path),
    };
    for basis in [StabBasis::Z, StabBasis::X] {
        let sum = table.basis_sum(basis);
        if (sum - 1.0).abs() > 1e-6 {
            return Err(TableError::BadNormalization(sum));
        }
    }
    Ok(table)
}

fn read_meta(path: &Path) -> TableMeta {
    let meta_path = path.with_extension("meta.json");
    std::fs::read_to_string(meta_path)
        .ok()
        .and_then(|s| serde_json::from_str(&s).ok())
        .unwrap_or_else(|| TableMeta {
            schema: crate::SCHEMA_VERSION.to_string(),
            protocol: "unknown".to_string(),
            p: f64::NAN,
            cutoff_percentile: f64::NAN,
            t_cut: f64::NAN,
            p_ghz_within_cutoff: f64::NAN,
            ghz_fidelity: f64::NAN,
            attempt_success_prob: f64::NAN,
            seed: 0,
            params_digest: String::new(),
        })
}

/// Direct instrument twirl of the stabilizer cycle applied to a data state:
/// group-average over Pauli conjugations with outcome relabeling. Used as
/// the independent route of the table round-trip check.
pub fn twirled_cycle_apply(
    env: &SimEnv,
    basis: StabBasis,
    ghz: &DensityMatrix,
    rho_data: &DensityMatrix,
    data_window: f64,
) -> Result<[DensityMatrix; 2], TableError> {
    let datas: Vec<Label> = (0..4).map(data_label).collect();
    let s = basis.stabilizer();
    let dim = 16;
    let mut even = vec![C64::ZERO; dim * dim];
    let mut odd = vec![C64::ZERO; dim * dim];
    for p in PauliString::enumerate(4) {
        let pre = rho_data.apply_pauli(&p, &datas)?;
        let out = run_cycle_on_matrix(env, basis, ghz, pre.data(), data_window)?;
        let flips = p.anticommutes_with(&s);
        for (slot, m_out) in out.iter().enumerate() {
            // conjugate back and relabel the outcome when P flips S
            let dm = DensityMatrix::qubits_from_matrix(&datas, m_out.clone(), false)?;
            let back = dm.apply_pauli(&p, &datas)?;
            let target_even = (slot == 0) != flips;
            let target = if target_even { &mut even } else { &mut odd };
            for (t, v) in target.iter_mut().zip(back.data().iter()) {
                *t += *v / C64::new(256.0, 0.0);
            }
        }
    }
    Ok([
        DensityMatrix::qubits_from_matrix(&datas, even, false)?,
        DensityMatrix::qubits_from_matrix(&datas, odd, false)?,
    ])
}

/// Recombine success-branch table rows into the conditioned twirled map
/// applied to a data state: sum_rows q E_e P_mu rho P_mu E_e per reported
/// outcome, with mu = m xor flip.
pub fn table_recombine_apply(
    table: &SuperoperatorTable,
    basis: StabBasis,
    rho_data: &DensityMatrix,
    outcome_plus: bool,
) -> Result<DensityMatrix, TableError> {
    let datas: Vec<Label> = (0..4).map(data_label).collect();
    let s = basis.stabilizer();
    let p_within: f64 = table
        .rows_for(basis)
        .filter(|r| r.ghz_success)
        .map(|r| r.probability)
        .sum();
    let mut acc = vec![C64::ZERO; 256];
    for row in table.rows_for(basis).filter(|r| r.ghz_success) {
        let mu_plus = outcome_plus == !row.meas_error;
        // project onto the mu eigenspace, then apply the Pauli
        let projected = project_stabilizer(rho_data, &s, mu_plus, &datas)?;
        let rotated = projected.apply_pauli(&row.pauli, &datas)?;
        // rows were averaged over the two input parities; undo the 1/2
        let w = 2.0 * row.probability / p_within.max(1e-300);
        for (a, v) in acc.iter_mut().zip(rotated.data().iter()) {
            *a += *v * C64::new(w, 0.0);
        }
    }
    Ok(DensityMatrix::qubits_from_matrix(&datas, acc, false)?)
}

fn project_stabilizer(
    rho: &DensityMatrix,
    s: &PauliString,
    plus: bool,
    labels: &[Label],
) -> Result<DensityMatrix, TableError> {
    let srho = rho.apply_pauli_side(s, labels, true)?;
    let rhos = rho.apply_pauli_side(s, labels, false)?;
    let ssrho = srho.apply_pauli_side(s, labels, false)?;
    let sign = if plus { 1.0 } else { -1.0 };
    // (rho + s S rho + s rho S + S rho S)/4
    let mut out = rho.scale(0.25);
    out = out.add(&srho.scale(0.25 * sign))?;
    out = out.add(&rhos.scale(0.25 * sign))?;
    out = out.add(&ssrho.scale(0.25))?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocols::ghz_phi4_plus;
    use approx::assert_abs_diff_eq;
    use rand::Rng;
    use rand::SeedableRng;

    fn perfect_ghz() -> DensityMatrix {
        let comms: Vec<Label> = (0..4).map(comm_label).collect();
        ghz_phi4_plus(&comms).to_density()
    }

    #[test]
    fn noiseless_cycle_is_ideal_projector() {
        let env = SimEnv::ideal(0.5, true);
        let ghz = perfect_ghz();
        for basis in [StabBasis::Z, StabBasis::X] {
            let maps = simulate_stabilizer_cycle(&ghz, basis, &env, 0.0).unwrap();
            // weights: identity coset on each parity branch with q = 1
            for map in &maps {
                let weights = instrument_weights(&map.choi, basis);
                let mut total = 0.0;
                for ((e, mu), q) in &weights {
                    if e.is_identity() && *mu == map.outcome_plus {
                        assert_abs_diff_eq!(*q, 1.0, epsilon = 1e-9);
                    } else {
                        assert!(*q < 1e-9, "unexpected weight {q} at {e} mu={mu}");
                    }
                    total += q;
                }
                assert_abs_diff_eq!(total, 1.0, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn parity_correctness_all_computational_states() {
        // with zero noise and a perfect GHZ the measured parity equals the
        // stabilizer eigenvalue for all 16 computational configurations
        let env = SimEnv::ideal(0.5, true);
        let ghz = perfect_ghz();
        for basis in [StabBasis::Z, StabBasis::X] {
            for b in 0..16usize {
                // computational states in the measured basis
                let mut amps = vec![C64::ZERO; 16];
                amps[b] = C64::new(1.0, 0.0);
                let datas: Vec<Label> = (0..4).map(data_label).collect();
                let mut rho = crate::qstate::PureState::from_amplitudes(&datas, &amps)
                    .unwrap()
                    .to_density();
                if basis == StabBasis::X {
                    for l in &datas {
                        rho = rho.apply_unitary(&gates::h(), std::slice::from_ref(l)).unwrap();
                    }
                }
                let out = run_cycle_on_matrix(&env, basis, &ghz, rho.data(), 0.0).unwrap();
                let parity_even = b.count_ones() % 2 == 0;
                let p_even: f64 = (0..16).map(|i| out[0][i * 16 + i].re).sum();
                let p_odd: f64 = (0..16).map(|i| out[1][i * 16 + i].re).sum();
                if parity_even {
                    assert_abs_diff_eq!(p_even, 1.0, epsilon = 1e-10);
                    assert_abs_diff_eq!(p_odd, 0.0, epsilon = 1e-10);
                } else {
                    assert_abs_diff_eq!(p_odd, 1.0, epsilon = 1e-10);
                    assert_abs_diff_eq!(p_even, 0.0, epsilon = 1e-10);
                }
            }
        }
    }

    #[test]
    fn measurement_flip_only_noise() {
        // p_m-only: outcome flip weight equals the four-bit parity-flip
        // probability, with no data-qubit Pauli weight
        let mut env = SimEnv::ideal(0.5, true);
        env.p_meas = 0.01;
        let ghz = perfect_ghz();
        let maps = simulate_stabilizer_cycle(&ghz, StabBasis::Z, &env, 0.0).unwrap();
        let mut flip_weight = 0.0;
        let mut pauli_weight = 0.0;
        let mut total = 0.0;
        for map in &maps {
            for ((e, mu), q) in instrument_weights(&map.choi, StabBasis::Z) {
                if mu != map.outcome_plus {
                    flip_weight += 0.5 * q;
                }
                if !e.is_identity() {
                    pauli_weight += 0.5 * q;
                }
                total += 0.5 * q;
            }
        }
        let expect = (1.0 - (1.0 - 2.0 * env.p_meas).powi(4)) / 2.0;
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(flip_weight, expect, epsilon = 1e-9);
        assert_abs_diff_eq!(pauli_weight, 0.0, epsilon = 1e-9);
    }

    #[test]
    fn single_pauli_on_ghz_propagates_deterministically() {
        // a Z on one GHZ qubit flips the reported outcome and deposits no
        // data error; an X on one GHZ qubit propagates through the local
        // gate onto its data qubit without flipping the readout
        let env = SimEnv::ideal(0.5, true);
        let comms: Vec<Label> = (0..4).map(comm_label).collect();

        let ghz_z = perfect_ghz()
            .apply_pauli(&PauliString::from_str("ZIII").unwrap(), &comms)
            .unwrap();
        for basis in [StabBasis::Z, StabBasis::X] {
            let maps = simulate_stabilizer_cycle(&ghz_z, basis, &env, 0.0).unwrap();
            let mut flip_weight = 0.0;
            let mut pauli_weight = 0.0;
            for map in &maps {
                for ((e, mu), q) in instrument_weights(&map.choi, basis) {
                    if mu != map.outcome_plus {
                        flip_weight += 0.5 * q;
                    }
                    if !e.is_identity() {
                        pauli_weight += 0.5 * q;
                    }
                }
            }
            assert_abs_diff_eq!(flip_weight, 1.0, epsilon = 1e-9);
            assert_abs_diff_eq!(pauli_weight, 0.0, epsilon = 1e-9);
        }

        let ghz_x = perfect_ghz()
            .apply_pauli(&PauliString::from_str("XIII").unwrap(), &comms)
            .unwrap();
        // Z basis: CZ maps the communication X into a data Z
        let maps = simulate_stabilizer_cycle(&ghz_x, StabBasis::Z, &env, 0.0).unwrap();
        let mut z1_weight = 0.0;
        let mut flip_weight = 0.0;
        for map in &maps {
            for ((e, mu), q) in instrument_weights(&map.choi, StabBasis::Z) {
                if mu != map.outcome_plus {
                    flip_weight += 0.5 * q;
                }
                let ziii = PauliString::from_str("ZIII").unwrap();
                let alt = ziii.compose_up_to_phase(&StabBasis::Z.stabilizer());
                if e == ziii || e == alt {
                    z1_weight += 0.5 * q;
                }
            }
        }
        assert_abs_diff_eq!(z1_weight, 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(flip_weight, 0.0, epsilon = 1e-9);
        // X basis: the communication-controlled CNOT copies it as a data X
        let maps = simulate_stabilizer_cycle(&ghz_x, StabBasis::X, &env, 0.0).unwrap();
        let mut x1_weight = 0.0;
        for map in &maps {
            for ((e, _), q) in instrument_weights(&map.choi, StabBasis::X) {
                let xiii = PauliString::from_str("XIII").unwrap();
                let alt = xiii.compose_up_to_phase(&StabBasis::X.stabilizer());
                if e == xiii || e == alt {
                    x1_weight += 0.5 * q;
                }
            }
        }
        assert_abs_diff_eq!(x1_weight, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn kraus_from_choi_identity_channel() {
        // unnormalized identity-channel Choi: single Kraus prop to I
        let mut choi = vec![C64::ZERO; 16];
        // 1-qubit: J[(r,i),(c,j)] = delta_ri delta_cj
        for r in 0..2 {
            for c in 0..2 {
                choi[(r * 2 + r) * 4 + (c * 2 + c)] = C64::new(1.0, 0.0);
            }
        }
        let kraus = kraus_from_choi(&choi).unwrap();
        assert_eq!(kraus.len(), 1);
        let k = &kraus[0];
        assert_abs_diff_eq!((k[0] - k[3]).norm(), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(k[0].norm(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(k[1].norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn kraus_from_choi_rejects_negative() {
        let mut choi = vec![C64::ZERO; 16];
        choi[0] = C64::new(-1.0, 0.0);
        assert!(matches!(
            kraus_from_choi(&choi),
            Err(TableError::InvalidMap(_))
        ));
    }

    #[test]
    fn pauli_twirl_examples() {
        // identity channel
        let id = vec![vec![
            C64::new(1.0, 0.0),
            C64::ZERO,
            C64::ZERO,
            C64::new(1.0, 0.0),
        ]];
        let weights = pauli_twirl(&id, 1, false);
        assert_abs_diff_eq!(weights[0].1, 1.0, epsilon = 1e-12);
        for (_, q) in &weights[1..] {
            assert_abs_diff_eq!(*q, 0.0, epsilon = 1e-12);
        }
        // X rotation: {I: cos^2, X: sin^2}
        let theta = 0.7f64;
        let (c, s) = ((theta / 2.0).cos(), (theta / 2.0).sin());
        let rot = vec![vec![
            C64::new(c, 0.0),
            C64::new(0.0, -s),
            C64::new(0.0, -s),
            C64::new(c, 0.0),
        ]];
        let weights = pauli_twirl(&rot, 1, false);
        assert_abs_diff_eq!(weights[0].1, c * c, epsilon = 1e-12);
        assert_abs_diff_eq!(weights[1].1, s * s, epsilon = 1e-12);
        // depolarizing already a Pauli channel: twirl is idempotent
        let depol = crate::noise::depolarizing(1e-3, 2).unwrap();
        let weights = pauli_twirl(&depol.kraus, 2, false);
        assert_abs_diff_eq!(weights[0].1, 1.0 - 1e-3, epsilon = 1e-12);
        for (_, q) in &weights[1..] {
            assert_abs_diff_eq!(*q, 1e-3 / 15.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn twirl_diagonal_matches_double_expansion() {
        // q_e equals the diagonal alpha_ee of the Pauli-basis double
        // expansion for random 2-qubit channels
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..3 {
            // random CPTP map from a random isometry-ish set of 3 Kraus ops,
            // normalized by completeness correction through twirl sums
            let mut kraus: Vec<Vec<C64>> = (0..3)
                .map(|_| {
                    (0..16)
                        .map(|_| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
                        .collect()
                })
                .collect();
            // crude normalization: scale so sum K^dag K has trace 4
            let tr: f64 = kraus
                .iter()
                .flat_map(|k| k.iter())
                .map(|v| v.norm_sqr())
                .sum();
            let scale = (4.0 / tr).sqrt();
            for k in &mut kraus {
                for v in k.iter_mut() {
                    *v *= scale;
                }
            }
            let weights = pauli_twirl(&kraus, 2, false);
            // alpha_{e,e} = sum_j |c_{j,e}|^2 computed independently via the
            // double expansion coefficients alpha_{e,e'} = sum_j c_je c_je'^*
            for (e, q) in weights.iter().take(8) {
                let alpha_ee: f64 = kraus
                    .iter()
                    .map(|k| {
                        let c = e.hs_coefficient(k) / C64::new(4.0, 0.0);
                        (c * c.conj()).re
                    })
                    .sum();
                assert_abs_diff_eq!(*q, alpha_ee, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn table_roundtrip_bitexact() {
        let env = SimEnv::ideal(0.5, true);
        let table = build_table(ProtocolId::RawGhz, &env, 0.99, 7).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("table.csv");
        export_table(&table, &path).unwrap();
        let loaded = import_table(&path).unwrap();
        assert_eq!(table.rows.len(), loaded.rows.len());
        for (a, b) in table.rows.iter().zip(loaded.rows.iter()) {
            assert_eq!(a, b, "rows must round-trip bit-exactly");
        }
    }

    #[test]
    fn import_rejects_bad_normalization() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(
            &path,
            "basis,pauli,ghz_success,meas_error,probability\nZ,IIII,true,false,0.8\nX,IIII,true,false,0.8\n",
        )
        .unwrap();
        assert!(matches!(
            import_table(&path),
            Err(TableError::BadNormalization(_))
        ));
    }

    #[test]
    fn noiseless_table_is_identity_success() {
        let env = SimEnv::ideal(0.5, true);
        let table = build_table(ProtocolId::RawGhz, &env, 1.0, 3).unwrap();
        for basis in [StabBasis::Z, StabBasis::X] {
            assert_abs_diff_eq!(table.basis_sum(basis), 1.0, epsilon = 1e-8);
            for row in table.rows_for(basis) {
                if row.ghz_success && row.probability > 1e-9 {
                    assert!(row.pauli.is_identity());
                    assert!(!row.meas_error);
                }
            }
        }
    }
}
