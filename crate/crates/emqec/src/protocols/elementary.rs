//! Elementary entanglement links: single- and double-click Bell pairs,
//! four-partite W states and raw GHZ states, heralded behind the
//! beam-splitter network.

use super::emission::{comm_label, emit_joint_state, herald, photon_label, reemit};
use super::frames::{bell_phi_plus, best_pauli_correction, ghz_phi4_plus, w4_state};
use super::{AttemptStats, ProtocolError, ProtocolResult, SimEnv};
use crate::noise::{decohere_all, depolarizing_mixture, Regime};
use crate::optics::{
    bell_povm_set, ghz_pair_click_sum, ghz_povm, w_click_sum, w_povm, PovmElement,
    VisibilityMatrix, DETECTOR_PAIRS,
};
use crate::pauli::PauliString;
use crate::qstate::{gates, DensityMatrix, Label};
use std::collections::HashMap;
use std::sync::OnceLock;

/// One heralded branch: detection-pattern key, unnormalized weight and the
/// normalized (uncorrected) conditional emitter state.
#[derive(Clone, Debug)]
pub(super) struct HeraldBranch {
    pub key: usize,
    pub prob: f64,
    pub state: DensityMatrix,
}

fn amplitude_visibility(env: &SimEnv, ports: usize) -> VisibilityMatrix {
    VisibilityMatrix::from_intensity(ports, env.hw.mu_intensity)
        .expect("hardware parameters validated on construction")
}

/// Single-click Bell elements for the two detectors of one bank.
fn bell_click_elements(env: &SimEnv) -> Result<Vec<PovmElement>, ProtocolError> {
    let mu = crate::optics::intensity_to_amplitude_visibility(env.hw.mu_intensity)?;
    let set = bell_povm_set(mu)?;
    // set = [E00, E10, E01, E11, E20, E02]
    if env.hw.pnr {
        Ok(vec![set[1].clone(), set[2].clone()])
    } else {
        Ok(vec![set[1].add(&set[4]), set[2].add(&set[5])])
    }
}

/// One Bell-pair heralding attempt between the two modules of `bank`.
pub(super) fn bell_branches(
    env: &SimEnv,
    bank: (usize, usize),
    alpha: f64,
) -> Result<Vec<HeraldBranch>, ProtocolError> {
    let joint = {
        let a = super::emission::emit_module(env, bank.0, alpha)?;
        let b = super::emission::emit_module(env, bank.1, alpha)?;
        a.tensor(&b)?
    };
    let photons = [photon_label(bank.0), photon_label(bank.1)];
    let mut out = Vec::new();
    for (k, el) in bell_click_elements(env)?.iter().enumerate() {
        let (p, cond) = herald(&joint, el, &photons)?;
        if p > 1e-15 {
            out.push(HeraldBranch {
                key: k,
                prob: p,
                state: cond.normalize()?,
            });
        }
    }
    Ok(out)
}

fn bell_corrections() -> &'static HashMap<usize, PauliString> {
    static CACHE: OnceLock<HashMap<usize, PauliString>> = OnceLock::new();
    CACHE.get_or_init(|| {
        let env = SimEnv::ideal(0.3, true);
        let labels = [comm_label(0), comm_label(1)];
        let target = bell_phi_plus(&labels);
        let mut map = HashMap::new();
        for b in bell_branches(&env, (0, 1), 0.3).expect("ideal bell branches") {
            let (p, f) = best_pauli_correction(&b.state, &target, &labels);
            assert!(f > 1.0 - 1e-9, "ideal Bell branch must be frame-equivalent");
            map.insert(b.key, p);
        }
        map
    })
}

/// Apply the per-pattern correction for a Bell branch on the given bank.
pub(super) fn correct_bell(
    branch: &HeraldBranch,
    bank: (usize, usize),
) -> Result<DensityMatrix, ProtocolError> {
    let corr = &bell_corrections()[&branch.key];
    let labels = [comm_label(bank.0), comm_label(bank.1)];
    Ok(branch.state.apply_pauli(corr, &labels)?)
}

fn geometric_stats(q: f64) -> AttemptStats {
    if q <= 0.0 {
        return AttemptStats {
            mean: f64::INFINITY,
            std: f64::INFINITY,
            max: f64::INFINITY,
        };
    }
    AttemptStats {
        mean: 1.0 / q,
        std: (1.0 - q).sqrt() / q,
        max: ((1e-3f64).ln() / (1.0 - q).ln()).ceil(),
    }
}

fn degenerate_result(labels: &[Label]) -> ProtocolResult {
    ProtocolResult {
        success_prob: 0.0,
        fidelity: f64::NAN,
        attempts: geometric_stats(0.0),
        output_state: DensityMatrix::maximally_mixed(labels),
        ghz_time: f64::INFINITY,
    }
}

/// Single-click Bell protocol on modules A-B.
pub fn run_bell_sc(env: &SimEnv) -> Result<ProtocolResult, ProtocolError> {
    let bank = (0usize, 1usize);
    let labels = [comm_label(bank.0), comm_label(bank.1)];
    let branches = bell_branches(env, bank, env.hw.alpha)?;
    let q: f64 = branches.iter().map(|b| b.prob).sum();
    if q <= 1e-300 {
        return Ok(degenerate_result(&labels));
    }
    let mut mix: Option<DensityMatrix> = None;
    for b in &branches {
        let corrected = correct_bell(b, bank)?.scale(b.prob / q);
        mix = Some(match mix {
            None => corrected,
            Some(acc) => acc.add(&corrected)?,
        });
    }
    let output = mix.unwrap().normalize()?;
    let fidelity = output.sqrt_fidelity(&bell_phi_plus(&labels))?;
    Ok(ProtocolResult {
        success_prob: q,
        fidelity,
        attempts: geometric_stats(q),
        output_state: output,
        ghz_time: env.timing.t_link / q,
    })
}

/// Exact joint branches of the double-click Bell protocol on one bank.
/// Branch states are normalized and frame-corrected to |Phi^+>.
pub(super) fn dc_bell_joint(
    env: &SimEnv,
    bank: (usize, usize),
    alpha: f64,
) -> Result<(f64, Vec<((usize, usize), f64, DensityMatrix)>), ProtocolError> {
    let labels = [comm_label(bank.0), comm_label(bank.1)];
    let round1 = bell_branches(env, bank, alpha)?;
    let q1: f64 = round1.iter().map(|b| b.prob).sum();
    if q1 <= 1e-300 {
        return Ok((0.0, Vec::new()));
    }
    let clicks = bell_click_elements(env)?;
    let photons = [photon_label(bank.0), photon_label(bank.1)];
    let depol = depolarizing_mixture(env.p, 1)?;
    let corrections = bell_dc_corrections();

    let mut joint: Vec<((usize, usize), f64, DensityMatrix)> = Vec::new();
    for b in &round1 {
        // physical bit flips, then the emitters hold through the second
        // emission attempt
        let mut rho = b.state.clone();
        for l in &labels {
            rho = rho.apply_unitary(&gates::x(), std::slice::from_ref(l))?;
            if env.p > 0.0 {
                rho = rho.apply_pauli_mixture(&depol, std::slice::from_ref(l))?;
            }
        }
        rho = decohere_all(&rho, &labels, env.timing.t_pauli_comm, Regime::Idle, &env.timing);
        rho = decohere_all(&rho, &labels, env.timing.t_link, Regime::Linking, &env.timing);
        rho = reemit(env, &rho, &[bank.0, bank.1])?;
        for (k2, el) in clicks.iter().enumerate() {
            let (p2, cond) = herald(&rho, el, &photons)?;
            if p2 > 1e-15 {
                let corrected = cond
                    .normalize()?
                    .apply_pauli(&corrections[&(b.key, k2)], &labels)?;
                joint.push(((b.key, k2), b.prob * p2, corrected));
            }
        }
    }
    Ok((q1, joint))
}

/// Double-click Bell protocol: bit-flip both emitters after a first click
/// and accept a second single click.
pub fn run_bell_dc(env: &SimEnv) -> Result<ProtocolResult, ProtocolError> {
    let bank = (0usize, 1usize);
    let labels = [comm_label(bank.0), comm_label(bank.1)];
    let (q1, joint) = dc_bell_joint(env, bank, env.hw.alpha)?;
    let q: f64 = joint.iter().map(|(_, p, _)| *p).sum();
    if q <= 1e-300 {
        return Ok(degenerate_result(&labels));
    }

    let target = bell_phi_plus(&labels);
    let mut mix: Option<DensityMatrix> = None;
    for (_, p, state) in &joint {
        let corrected = state.scale(p / q);
        mix = Some(match mix {
            None => corrected,
            Some(acc) => acc.add(&corrected)?,
        });
    }
    let output = mix.unwrap().normalize()?;
    let fidelity = output.sqrt_fidelity(&target)?;

    // compound repeat-until-success: a trial is geometric round-1 plus one
    // second round, repeated until the second click lands
    let s = q / q1;
    let mean_attempts = (1.0 / q1 + 1.0) / s;
    let trial_time = env.timing.t_link / q1 + env.timing.t_pauli_comm + env.timing.t_link;
    Ok(ProtocolResult {
        success_prob: q,
        fidelity,
        attempts: AttemptStats {
            mean: mean_attempts,
            std: mean_attempts * (1.0 - s).sqrt().max((1.0 - q1).sqrt()),
            max: f64::INFINITY,
        },
        output_state: output,
        ghz_time: trial_time / s,
    })
}

fn bell_dc_corrections() -> &'static HashMap<(usize, usize), PauliString> {
    static CACHE: OnceLock<HashMap<(usize, usize), PauliString>> = OnceLock::new();
    CACHE.get_or_init(|| {
        let env = SimEnv::ideal(0.3, true);
        let bank = (0usize, 1usize);
        let labels = [comm_label(0), comm_label(1)];
        let target = bell_phi_plus(&labels);
        let photons = [photon_label(0), photon_label(1)];
        let clicks = bell_click_elements(&env).unwrap();
        let mut map = HashMap::new();
        for b in bell_branches(&env, bank, 0.3).unwrap() {
            let mut rho = b.state.clone();
            for l in &labels {
                rho = rho.apply_unitary(&gates::x(), std::slice::from_ref(l)).unwrap();
            }
            let rho = reemit(&env, &rho, &[bank.0, bank.1]).unwrap();
            for (k2, el) in clicks.iter().enumerate() {
                let (p2, cond) = herald(&rho, el, &photons).unwrap();
                if p2 > 1e-15 {
                    let (corr, f) =
                        best_pauli_correction(&cond.normalize().unwrap(), &target, &labels);
                    assert!(f > 1.0 - 1e-9, "ideal DC Bell branch must be perfect");
                    map.insert((b.key, k2), corr);
                }
            }
        }
        map
    })
}

/// One four-module W heralding attempt: a click at a single detector.
pub(super) fn w_branches(
    env: &SimEnv,
    alpha: f64,
) -> Result<Vec<HeraldBranch>, ProtocolError> {
    let joint = emit_joint_state(env, 4, alpha)?;
    let photons: Vec<Label> = (0..4).map(photon_label).collect();
    let mu = amplitude_visibility(env, 4);
    let mut out = Vec::new();
    for k in 0..4 {
        let el = if env.hw.pnr {
            w_povm(k, 1, &mu)?
        } else {
            w_click_sum(k, &mu)?
        };
        let (p, cond) = herald(&joint, &el, &photons)?;
        if p > 1e-15 {
            out.push(HeraldBranch {
                key: k,
                prob: p,
                state: cond.normalize()?,
            });
        }
    }
    Ok(out)
}

fn w_corrections() -> &'static HashMap<usize, PauliString> {
    static CACHE: OnceLock<HashMap<usize, PauliString>> = OnceLock::new();
    CACHE.get_or_init(|| {
        let env = SimEnv::ideal(0.3, true);
        let labels: Vec<Label> = (0..4).map(comm_label).collect();
        let target = w4_state(&labels);
        let mut map = HashMap::new();
        for b in w_branches(&env, 0.3).expect("ideal W branches") {
            let (p, f) = best_pauli_correction(&b.state, &target, &labels);
            assert!(f > 1.0 - 1e-9, "ideal W branch must be frame-equivalent");
            map.insert(b.key, p);
        }
        map
    })
}

pub(super) fn correct_w(branch: &HeraldBranch) -> Result<DensityMatrix, ProtocolError> {
    let labels: Vec<Label> = (0..4).map(comm_label).collect();
    Ok(branch.state.apply_pauli(&w_corrections()[&branch.key], &labels)?)
}

/// W-state generation with post-detection rotations to the canonical form.
pub fn run_w(env: &SimEnv) -> Result<ProtocolResult, ProtocolError> {
    let labels: Vec<Label> = (0..4).map(comm_label).collect();
    let branches = w_branches(env, env.hw.alpha)?;
    let q: f64 = branches.iter().map(|b| b.prob).sum();
    if q <= 1e-300 {
        return Ok(degenerate_result(&labels));
    }
    let mut mix: Option<DensityMatrix> = None;
    for b in &branches {
        let corrected = correct_w(b)?.scale(b.prob / q);
        mix = Some(match mix {
            None => corrected,
            Some(acc) => acc.add(&corrected)?,
        });
    }
    let output = mix.unwrap().normalize()?;
    let fidelity = output.sqrt_fidelity(&w4_state(&labels))?;
    Ok(ProtocolResult {
        success_prob: q,
        fidelity,
        attempts: geometric_stats(q),
        output_state: output,
        ghz_time: env.timing.t_link / q,
    })
}

/// One raw-GHZ heralding attempt: coincidence clicks at one of the six
/// detector pairs. Branch key indexes [`DETECTOR_PAIRS`].
pub(super) fn raw_ghz_branches(
    env: &SimEnv,
    alpha: f64,
) -> Result<Vec<HeraldBranch>, ProtocolError> {
    let joint = emit_joint_state(env, 4, alpha)?;
    let photons: Vec<Label> = (0..4).map(photon_label).collect();
    let mu = amplitude_visibility(env, 4);
    let mut out = Vec::new();
    for (idx, &pair) in DETECTOR_PAIRS.iter().enumerate() {
        let el = if env.hw.pnr {
            ghz_povm(pair, (1, 1), &mu)?
        } else {
            ghz_pair_click_sum(pair, &mu)?
        };
        let (p, cond) = herald(&joint, &el, &photons)?;
        if p > 1e-15 {
            out.push(HeraldBranch {
                key: idx,
                prob: p,
                state: cond.normalize()?,
            });
        }
    }
    Ok(out)
}

fn raw_ghz_corrections() -> &'static HashMap<usize, PauliString> {
    static CACHE: OnceLock<HashMap<usize, PauliString>> = OnceLock::new();
    CACHE.get_or_init(|| {
        let env = SimEnv::ideal(0.3, true);
        let labels: Vec<Label> = (0..4).map(comm_label).collect();
        let target = ghz_phi4_plus(&labels);
        let mut map = HashMap::new();
        for b in raw_ghz_branches(&env, 0.3).expect("ideal GHZ branches") {
            let (p, f) = best_pauli_correction(&b.state, &target, &labels);
            assert!(f > 1.0 - 1e-9, "ideal GHZ branch must be frame-equivalent");
            map.insert(b.key, p);
        }
        map
    })
}

pub(super) fn correct_raw_ghz(branch: &HeraldBranch) -> Result<DensityMatrix, ProtocolError> {
    let labels: Vec<Label> = (0..4).map(comm_label).collect();
    Ok(branch
        .state
        .apply_pauli(&raw_ghz_corrections()[&branch.key], &labels)?)
}

/// Raw GHZ generation: accept the six two-detector patterns and rotate to
/// the |Phi_4^+> frame.
pub fn run_raw_ghz(env: &SimEnv) -> Result<ProtocolResult, ProtocolError> {
    let labels: Vec<Label> = (0..4).map(comm_label).collect();
    let branches = raw_ghz_branches(env, env.hw.alpha)?;
    let q: f64 = branches.iter().map(|b| b.prob).sum();
    if q <= 1e-300 {
        return Ok(degenerate_result(&labels));
    }
    let mut mix: Option<DensityMatrix> = None;
    for b in &branches {
        let corrected = correct_raw_ghz(b)?.scale(b.prob / q);
        mix = Some(match mix {
            None => corrected,
            Some(acc) => acc.add(&corrected)?,
        });
    }
    let output = mix.unwrap().normalize()?;
    let fidelity = output.sqrt_fidelity(&ghz_phi4_plus(&labels))?;
    Ok(ProtocolResult {
        success_prob: q,
        fidelity,
        attempts: geometric_stats(q),
        output_state: output,
        ghz_time: env.timing.t_link / q,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn bell_sc_table_values() {
        // PNR at alpha = 0.5
        let env = SimEnv::ideal(0.5, true);
        let r = run_bell_sc(&env).unwrap();
        assert_abs_diff_eq!(r.success_prob, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(r.fidelity, 1.0, epsilon = 1e-12);
        // threshold detectors at alpha = 0.1
        let env = SimEnv::ideal(0.1, false);
        let r = run_bell_sc(&env).unwrap();
        assert_abs_diff_eq!(r.success_prob, 0.19, epsilon = 1e-12);
        assert_abs_diff_eq!(r.fidelity, (2.0 * 0.9f64 / 1.9).sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn bell_sc_non_pnr_conditional_state() {
        // heralded branch proportional to 2(1-a)|Psi+><Psi+| + a|11><11|
        let alpha = 0.1;
        let env = SimEnv::ideal(alpha, false);
        let branches = bell_branches(&env, (0, 1), alpha).unwrap();
        // detector 0 heralds the symmetric combination
        let b = &branches[0];
        let s = 1.0 / 2.0f64.sqrt();
        let labels = [comm_label(0), comm_label(1)];
        let psi_plus = crate::qstate::PureState::from_amplitudes(
            &labels,
            &[
                crate::C64::ZERO,
                crate::C64::new(s, 0.0),
                crate::C64::new(s, 0.0),
                crate::C64::ZERO,
            ],
        )
        .unwrap();
        let w_plus = b.state.overlap(&psi_plus).unwrap();
        let w_11 = b.state.entry(3, 3).re;
        assert_abs_diff_eq!(
            w_plus,
            2.0 * (1.0 - alpha) / (2.0 - alpha),
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(w_11, alpha / (2.0 - alpha), epsilon = 1e-12);
    }

    #[test]
    fn bell_dc_perfect_both_detector_types() {
        for pnr in [true, false] {
            let env = SimEnv::ideal(0.5, pnr);
            let r = run_bell_dc(&env).unwrap();
            assert_abs_diff_eq!(r.success_prob, 0.5, epsilon = 1e-12);
            assert_abs_diff_eq!(r.fidelity, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn w_pnr_table_values() {
        let env = SimEnv::ideal(0.25, true);
        let r = run_w(&env).unwrap();
        assert_abs_diff_eq!(r.success_prob, 4.0 * 0.25 * 0.75f64.powi(3), epsilon = 1e-12);
        assert_abs_diff_eq!(r.fidelity, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn raw_ghz_pnr_table_values() {
        let env = SimEnv::ideal(0.5, true);
        let r = run_raw_ghz(&env).unwrap();
        assert_abs_diff_eq!(r.success_prob, 0.1875, epsilon = 1e-12);
        assert_abs_diff_eq!(r.fidelity, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn raw_ghz_pnr_heralds_table_states() {
        // detector pair (0,1) heralds (|1010>-|0101>)/sqrt2 up to global
        // phase; all six pairs are Pauli-equivalent to |Phi_4^+>
        let env = SimEnv::ideal(0.3, true);
        let branches = raw_ghz_branches(&env, 0.3).unwrap();
        assert_eq!(branches.len(), 6);
        let labels: Vec<Label> = (0..4).map(comm_label).collect();
        let expected: [(usize, usize); 6] = [
            (0b1010, 0b0101),
            (0b1100, 0b0011),
            (0b1001, 0b0110),
            (0b1001, 0b0110),
            (0b1100, 0b0011),
            (0b1010, 0b0101),
        ];
        for (b, (hi, lo)) in branches.iter().zip(expected.iter()) {
            let s = 1.0 / 2.0f64.sqrt();
            let mut amps = vec![crate::C64::ZERO; 16];
            amps[*hi] = crate::C64::new(s, 0.0);
            amps[*lo] = crate::C64::new(-s, 0.0);
            let target = crate::qstate::PureState::from_amplitudes(&labels, &amps).unwrap();
            assert_abs_diff_eq!(b.state.sqrt_fidelity(&target).unwrap(), 1.0, epsilon = 1e-10);
            // per-pattern weight alpha^2 (1-alpha)^2 / 2
            assert_abs_diff_eq!(
                b.prob,
                0.3f64.powi(2) * 0.7f64.powi(2) / 2.0,
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn frame_corrected_branches_equivalent() {
        // all six pairs reach the same fidelity after correction
        let env = SimEnv::ideal(0.2, false);
        let branches = raw_ghz_branches(&env, 0.2).unwrap();
        let labels: Vec<Label> = (0..4).map(comm_label).collect();
        let target = ghz_phi4_plus(&labels);
        let f0 = correct_raw_ghz(&branches[0])
            .unwrap()
            .normalize()
            .unwrap()
            .sqrt_fidelity(&target)
            .unwrap();
        for b in &branches[1..] {
            let f = correct_raw_ghz(b)
                .unwrap()
                .normalize()
                .unwrap()
                .sqrt_fidelity(&target)
                .unwrap();
            assert_abs_diff_eq!(f, f0, epsilon = 1e-12);
        }
    }

    #[test]
    fn non_pnr_infidelity_monotone_in_alpha() {
        let grid: Vec<f64> = (1..=10).map(|i| 0.05 * i as f64).collect();
        let mut last_w = 0.0;
        let mut last_g = 0.0;
        for (i, &a) in grid.iter().enumerate() {
            let env = SimEnv::ideal(a, false);
            let w = 1.0 - run_w(&env).unwrap().fidelity;
            let g = 1.0 - run_raw_ghz(&env).unwrap().fidelity;
            if i > 0 {
                assert!(w >= last_w - 1e-12, "W infidelity must not decrease");
                assert!(g >= last_g - 1e-12, "GHZ infidelity must not decrease");
            }
            last_w = w;
            last_g = g;
        }
    }
}
