//! Emitter-photon state preparation and heralding primitives shared by all
//! protocols.

use super::{ProtocolError, SimEnv};
use crate::noise::{
    depolarizing_mixture, double_excitation_dephasing, photon_loss, prep_dephasing,
};
use crate::optics::PovmElement;
use crate::qstate::{DensityMatrix, Label, PureState, QstateError};
use crate::C64;

pub const MODULES: [&str; 4] = ["A", "B", "C", "D"];

pub fn comm_label(i: usize) -> Label {
    Label::new(format!("{}.c", MODULES[i]))
}

pub fn photon_label(i: usize) -> Label {
    Label::new(format!("{}.ph", MODULES[i]))
}

pub fn mem_label(i: usize) -> Label {
    Label::new(format!("{}.m", MODULES[i]))
}

fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

/// Append a photonic occupancy mode correlated with the emitter:
/// |0>_c -> |0>_c |0>_ph and |1>_c -> |1>_c |1>_ph.
pub fn emit_photon(
    rho: &DensityMatrix,
    comm: &Label,
    photon: Label,
) -> Result<DensityMatrix, QstateError> {
    let pos = rho
        .labels()
        .iter()
        .position(|l| l == comm)
        .ok_or_else(|| QstateError::UnknownLabel(comm.0.clone()))?;
    let n = rho.labels().len();
    let dim = rho.dim();
    let new_dim = dim * 2;
    let mut data = vec![C64::ZERO; new_dim * new_dim];
    let shift = n - 1 - pos; // comm bit position from the LSB side
    for r in 0..dim {
        let rb = (r >> shift) & 1;
        let nr = r * 2 + rb;
        for col in 0..dim {
            let v = rho.entry(r, col);
            if v == C64::ZERO {
                continue;
            }
            let cb = (col >> shift) & 1;
            data[nr * new_dim + col * 2 + cb] = v;
        }
    }
    let mut labels = rho.labels().to_vec();
    labels.push(photon);
    DensityMatrix::qubits_from_matrix(&labels, data, rho.is_normalized_flag())
}

/// Fresh emitter-photon state of one module: noisy preparation of the
/// bright-state superposition, emission, double-excitation dephasing on the
/// emitter and photon loss on the mode.
pub fn emit_module(env: &SimEnv, module: usize, alpha: f64) -> Result<DensityMatrix, ProtocolError> {
    let cl = comm_label(module);
    let prep = PureState::from_amplitudes(
        std::slice::from_ref(&cl),
        &[c((1.0 - alpha).sqrt()), c(alpha.sqrt())],
    )
    .expect("bright-state amplitudes are normalized")
    .to_density();
    let mut rho = prep;
    if env.p > 0.0 {
        let depol = depolarizing_mixture(env.p, 1)?;
        rho = rho.apply_pauli_mixture(&depol, std::slice::from_ref(&cl))?;
    }
    if env.hw.f_prep < 1.0 {
        rho = prep_dephasing(env.hw.f_prep)?.apply(&rho, std::slice::from_ref(&cl));
    }
    let phl = photon_label(module);
    let mut rho = emit_photon(&rho, &cl, phl.clone())?;
    if env.hw.p_de > 0.0 {
        rho = double_excitation_dephasing(env.hw.p_de)?.apply(&rho, std::slice::from_ref(&cl));
    }
    if env.hw.eta_ph < 1.0 {
        rho = photon_loss(env.hw.eta_ph)?.apply(&rho, std::slice::from_ref(&phl));
    }
    Ok(rho)
}

/// Joint emitter-photon state over the first `n_modules` modules.
pub fn emit_joint_state(
    env: &SimEnv,
    n_modules: usize,
    alpha: f64,
) -> Result<DensityMatrix, ProtocolError> {
    assert!(n_modules == 2 || n_modules == 4, "two- or four-module routing");
    let mut rho = emit_module(env, 0, alpha)?;
    for m in 1..n_modules {
        rho = rho.tensor(&emit_module(env, m, alpha)?)?;
    }
    Ok(rho)
}

/// Re-emission from an existing emitter register (second double-click
/// round): every communication qubit in `modules` emits a fresh photon,
/// subject to the same per-module noise.
pub fn reemit(
    env: &SimEnv,
    rho: &DensityMatrix,
    modules: &[usize],
) -> Result<DensityMatrix, ProtocolError> {
    let mut out = rho.clone();
    for &m in modules {
        let cl = comm_label(m);
        let phl = photon_label(m);
        out = emit_photon(&out, &cl, phl.clone())?;
        if env.hw.p_de > 0.0 {
            out = double_excitation_dephasing(env.hw.p_de)?
                .apply(&out, std::slice::from_ref(&cl));
        }
        if env.hw.eta_ph < 1.0 {
            out = photon_loss(env.hw.eta_ph)?.apply(&out, std::slice::from_ref(&phl));
        }
    }
    Ok(out)
}

/// Condition on a detection POVM element over the listed photon labels and
/// trace the photons out. Returns the heralding weight and the unnormalized
/// conditional state.
pub fn herald(
    state: &DensityMatrix,
    povm: &PovmElement,
    photons: &[Label],
) -> Result<(f64, DensityMatrix), ProtocolError> {
    let (p, cond) = state.condition_on(povm.matrix(), photons)?;
    Ok((p, cond))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optics::{bell_povm_set, VisibilityMatrix};
    use crate::protocols::SimEnv;
    use approx::assert_abs_diff_eq;

    #[test]
    fn emit_extremes() {
        let env = SimEnv::ideal(0.0, true);
        let rho = emit_joint_state(&env, 2, 0.0).unwrap();
        // everything in |0 0_ph>^2
        assert_abs_diff_eq!(rho.entry(0, 0).re, 1.0, epsilon = 1e-14);
        let env = SimEnv::ideal(1.0, true);
        let rho = emit_joint_state(&env, 2, 1.0).unwrap();
        assert_abs_diff_eq!(rho.entry(15, 15).re, 1.0, epsilon = 1e-14);
    }

    #[test]
    fn two_module_half_alpha_uniform_branches() {
        let env = SimEnv::ideal(0.5, true);
        let rho = emit_joint_state(&env, 2, 0.5).unwrap();
        // four equal-weight branches |00,00>, |01,01>, |10,10>, |11,11>
        // in (cA, phA, cB, phB) ordering the emitter and photon bits agree
        let diag: Vec<f64> = (0..16).map(|i| rho.entry(i, i).re).collect();
        let expect_idx = [0b0000, 0b0011, 0b1100, 0b1111];
        for (i, d) in diag.iter().enumerate() {
            if expect_idx.contains(&i) {
                assert_abs_diff_eq!(*d, 0.25, epsilon = 1e-12);
            } else {
                assert_abs_diff_eq!(*d, 0.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn herald_zero_overlap_pattern() {
        let env = SimEnv::ideal(0.0, true);
        // alpha = 0 emits nothing; a single-click element has zero weight
        let rho = emit_joint_state(&env, 2, 0.0).unwrap();
        let set = bell_povm_set(1.0).unwrap();
        let (p, _) = herald(&rho, &set[1], &[photon_label(0), photon_label(1)]).unwrap();
        assert_abs_diff_eq!(p, 0.0, epsilon = 1e-14);
        let _ = VisibilityMatrix::uniform(2, 1.0);
    }
}
