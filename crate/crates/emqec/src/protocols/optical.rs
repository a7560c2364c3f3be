//! Optical distillation: the double-click GHZ and double-click W protocols.
//! Two successive emission-and-detection rounds filter the target GHZ state
//! without any memory-qubit gate.

use super::elementary::{correct_w, raw_ghz_branches, w_branches, HeraldBranch};
use super::emission::{comm_label, herald, photon_label, reemit};
use super::frames::{best_pauli_correction, ghz_phi4_plus};
use super::{AttemptStats, DcRound2, ProtocolError, ProtocolResult, SimEnv};
use crate::noise::{decohere_all, depolarizing_mixture, Regime};
use crate::optics::{
    bunched_click_sum, ghz_pair_click_sum, ghz_povm, w_povm, PovmElement, VisibilityMatrix,
    DETECTOR_PAIRS,
};
use crate::pauli::PauliString;
use crate::qstate::{gates, DensityMatrix, Label};
use std::collections::HashMap;
use std::sync::OnceLock;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub(super) enum Round2Key {
    Pair(usize),
    Bunch(usize),
}

/// Acceptance elements for the second double-click round. Only the detector
/// pairs compatible with the surviving GHZ component are accepted
/// (`pair_indices`); other pairs can only fire on noise.
fn dc_round2_elements(
    env: &SimEnv,
    pair_indices: &[usize],
    with_bunching: bool,
) -> Result<Vec<(Round2Key, PovmElement)>, ProtocolError> {
    let mu = VisibilityMatrix::from_intensity(4, env.hw.mu_intensity)?;
    let mut out = Vec::new();
    for &idx in pair_indices {
        let pair = DETECTOR_PAIRS[idx];
        let el = if env.hw.pnr {
            ghz_povm(pair, (1, 1), &mu)?
        } else {
            ghz_pair_click_sum(pair, &mu)?
        };
        out.push((Round2Key::Pair(idx), el));
    }
    if with_bunching {
        for k in 0..4 {
            let el = if env.hw.pnr {
                w_povm(k, 2, &mu)?
            } else {
                bunched_click_sum(k, &mu)?
            };
            out.push((Round2Key::Bunch(k), el));
        }
    }
    Ok(out)
}

/// Complementary detector pair: a two-excitation GHZ variant re-emits into
/// its heralding pair or the complementary one.
fn partner_pair(idx: usize) -> usize {
    5 - idx
}

/// The same-detector two-photon patterns double the theoretical success of
/// the second GHZ round; with threshold detectors their inclusion is a
/// modeling convention selected by `env.dc_round2`.
fn dc_ghz_bunching(env: &SimEnv) -> bool {
    env.hw.pnr || env.dc_round2 == DcRound2::WithBunching
}

/// Uniform noisy single-qubit rotation layer over all four communication
/// qubits: the stated unitaries plus one depolarizing slot per qubit and
/// one gate duration of idling decoherence.
fn rotation_layer(
    env: &SimEnv,
    rho: &DensityMatrix,
    unitaries: &[(usize, Vec<crate::C64>)],
) -> Result<DensityMatrix, ProtocolError> {
    let labels: Vec<Label> = (0..4).map(comm_label).collect();
    let mut out = rho.clone();
    for (m, u) in unitaries {
        out = out.apply_unitary(u, std::slice::from_ref(&labels[*m]))?;
    }
    if env.p > 0.0 {
        let depol = depolarizing_mixture(env.p, 1)?;
        for l in &labels {
            out = out.apply_pauli_mixture(&depol, std::slice::from_ref(l))?;
        }
    }
    Ok(decohere_all(
        &out,
        &labels,
        env.timing.t_pauli_comm,
        Regime::Idle,
        &env.timing,
    ))
}

fn all_x_layer(env: &SimEnv, rho: &DensityMatrix) -> Result<DensityMatrix, ProtocolError> {
    let us: Vec<(usize, Vec<crate::C64>)> = (0..4).map(|m| (m, gates::x())).collect();
    rotation_layer(env, rho, &us)
}

struct JointBranch {
    key: (usize, Round2Key),
    prob: f64,
    state: DensityMatrix,
}

fn dc_ghz_joint_branches(env: &SimEnv, alpha: f64) -> Result<(f64, Vec<JointBranch>), ProtocolError> {
    let round1 = raw_ghz_branches(env, alpha)?;
    let q1: f64 = round1.iter().map(|b| b.prob).sum();
    let photons: Vec<Label> = (0..4).map(photon_label).collect();
    let comms: Vec<Label> = (0..4).map(comm_label).collect();
    let mut joint = Vec::new();
    for b in &round1 {
        let elements =
            dc_round2_elements(env, &[b.key, partner_pair(b.key)], dc_ghz_bunching(env))?;
        let mut rho = all_x_layer(env, &b.state)?;
        rho = decohere_all(&rho, &comms, env.timing.t_link, Regime::Linking, &env.timing);
        rho = reemit(env, &rho, &[0, 1, 2, 3])?;
        for (key2, el) in &elements {
            let (p2, cond) = herald(&rho, el, &photons)?;
            if p2 > 1e-15 {
                joint.push(JointBranch {
                    key: (b.key, *key2),
                    prob: b.prob * p2,
                    state: cond.normalize()?,
                });
            }
        }
    }
    Ok((q1, joint))
}

fn dc_ghz_corrections() -> &'static HashMap<(usize, Round2Key), PauliString> {
    static CACHE: OnceLock<HashMap<(usize, Round2Key), PauliString>> = OnceLock::new();
    CACHE.get_or_init(|| {
        let labels: Vec<Label> = (0..4).map(comm_label).collect();
        let target = ghz_phi4_plus(&labels);
        let mut map = HashMap::new();
        // patterns reachable at ideal hardware herald perfect GHZ variants
        let env = SimEnv::ideal(0.3, true);
        let (_, joint) = dc_ghz_joint_branches(&env, 0.3).expect("ideal DC GHZ branches");
        for b in joint {
            let (corr, f) = best_pauli_correction(&b.state, &target, &labels);
            assert!(
                f > 1.0 - 1e-9,
                "ideal DC GHZ branch {:?} must be a perfect GHZ variant",
                b.key
            );
            map.insert(b.key, corr);
        }
        // patterns only reachable through imperfect interference take the
        // frame of their dominant GHZ component
        let mut leaky = SimEnv::ideal(0.3, true);
        leaky.hw.mu_intensity = 0.9;
        let (_, joint) = dc_ghz_joint_branches(&leaky, 0.3).expect("leaky DC GHZ branches");
        for b in joint {
            let (corr, _) = best_pauli_correction(&b.state, &target, &labels);
            map.entry(b.key).or_insert(corr);
        }
        map
    })
}

fn compound_stats(q1: f64, s: f64, trial_overhead: f64, t_link: f64) -> (AttemptStats, f64) {
    if q1 <= 0.0 || s <= 0.0 {
        return (
            AttemptStats {
                mean: f64::INFINITY,
                std: f64::INFINITY,
                max: f64::INFINITY,
            },
            f64::INFINITY,
        );
    }
    let attempts_per_trial = 1.0 / q1 + 1.0;
    let mean_attempts = attempts_per_trial / s;
    let trial_time = t_link / q1 + trial_overhead + t_link;
    // variance of a geometric sum of trial durations (Wald)
    let var_trial = (1.0 - q1) / (q1 * q1);
    let var_total = var_trial / s + attempts_per_trial * attempts_per_trial * (1.0 - s) / (s * s);
    (
        AttemptStats {
            mean: mean_attempts,
            std: var_total.sqrt(),
            max: f64::INFINITY,
        },
        trial_time / s,
    )
}

/// Double-click GHZ: raw-GHZ herald, bit-flip all emitters, re-emit and
/// accept the same family of two-photon patterns.
pub fn run_dc_ghz(env: &SimEnv) -> Result<ProtocolResult, ProtocolError> {
    let labels: Vec<Label> = (0..4).map(comm_label).collect();
    let (q1, joint) = dc_ghz_joint_branches(env, env.hw.alpha)?;
    let q: f64 = joint.iter().map(|b| b.prob).sum();
    if q <= 1e-300 {
        return Ok(ProtocolResult {
            success_prob: 0.0,
            fidelity: f64::NAN,
            attempts: AttemptStats::default(),
            output_state: DensityMatrix::maximally_mixed(&labels),
            ghz_time: f64::INFINITY,
        });
    }
    let corrections = dc_ghz_corrections();
    let mut mix: Option<DensityMatrix> = None;
    for b in &joint {
        let corrected = b
            .state
            .apply_pauli(&corrections[&b.key], &labels)?
            .scale(b.prob / q);
        mix = Some(match mix {
            None => corrected,
            Some(acc) => acc.add(&corrected)?,
        });
    }
    let output = mix.unwrap().normalize()?;
    let fidelity = output.sqrt_fidelity(&ghz_phi4_plus(&labels))?;
    let (attempts, ghz_time) = compound_stats(
        q1,
        q / q1,
        env.timing.t_pauli_comm,
        env.timing.t_link,
    );
    Ok(ProtocolResult {
        success_prob: q,
        fidelity,
        attempts,
        output_state: output,
        ghz_time,
    })
}

fn dc_w_joint_branches(env: &SimEnv, alpha: f64) -> Result<(f64, Vec<JointBranch>), ProtocolError> {
    let round1 = w_branches(env, alpha)?;
    let q1: f64 = round1.iter().map(|b| b.prob).sum();
    let photons: Vec<Label> = (0..4).map(photon_label).collect();
    let comms: Vec<Label> = (0..4).map(comm_label).collect();
    // after the canonical-frame rotation the GHZ component re-emits into
    // detector pairs (0,1) or (2,3); number resolution additionally admits
    // the exact two-photon bunched events
    let elements = dc_round2_elements(env, &[0, 5], env.hw.pnr)?;
    let mut joint = Vec::new();
    for b in &round1 {
        // rotate into the canonical frame (classically known pattern), then
        // the phase layer Z on modules B and D followed by Hadamards
        let canonical = HeraldBranch {
            key: b.key,
            prob: b.prob,
            state: correct_w(b)?,
        };
        let mut rho = rotation_layer(env, &canonical.state, &[(1, gates::z()), (3, gates::z())])?;
        let h_layer: Vec<(usize, Vec<crate::C64>)> = (0..4).map(|m| (m, gates::h())).collect();
        rho = rotation_layer(env, &rho, &h_layer)?;
        rho = decohere_all(&rho, &comms, env.timing.t_link, Regime::Linking, &env.timing);
        rho = reemit(env, &rho, &[0, 1, 2, 3])?;
        for (key2, el) in &elements {
            let (p2, cond) = herald(&rho, el, &photons)?;
            if p2 > 1e-15 {
                joint.push(JointBranch {
                    key: (b.key, *key2),
                    prob: b.prob * p2,
                    state: cond.normalize()?,
                });
            }
        }
    }
    Ok((q1, joint))
}

fn dc_w_corrections() -> &'static HashMap<Round2Key, PauliString> {
    static CACHE: OnceLock<HashMap<Round2Key, PauliString>> = OnceLock::new();
    CACHE.get_or_init(|| {
        let labels: Vec<Label> = (0..4).map(comm_label).collect();
        let target = ghz_phi4_plus(&labels);
        let mut map = HashMap::new();
        let env = SimEnv::ideal(0.3, true);
        let (_, joint) = dc_w_joint_branches(&env, 0.3).expect("ideal DC W branches");
        for b in joint {
            let (corr, f) = best_pauli_correction(&b.state, &target, &labels);
            assert!(
                f > 1.0 - 1e-9,
                "ideal DC W branch {:?} must be a perfect GHZ variant",
                b.key
            );
            map.insert(b.key.1, corr);
        }
        let mut leaky = SimEnv::ideal(0.3, true);
        leaky.hw.mu_intensity = 0.9;
        leaky.hw.pnr = false;
        let (_, joint) = dc_w_joint_branches(&leaky, 0.3).expect("leaky DC W branches");
        for b in joint {
            let (corr, _) = best_pauli_correction(&b.state, &target, &labels);
            map.entry(b.key.1).or_insert(corr);
        }
        map
    })
}

/// Double-click W: W herald, local rotations exposing the GHZ component,
/// a second emission round and a two-click herald.
pub fn run_dc_w(env: &SimEnv) -> Result<ProtocolResult, ProtocolError> {
    let labels: Vec<Label> = (0..4).map(comm_label).collect();
    let (q1, joint) = dc_w_joint_branches(env, env.hw.alpha)?;
    let q: f64 = joint.iter().map(|b| b.prob).sum();
    if q <= 1e-300 {
        return Ok(ProtocolResult {
            success_prob: 0.0,
            fidelity: f64::NAN,
            attempts: AttemptStats::default(),
            output_state: DensityMatrix::maximally_mixed(&labels),
            ghz_time: f64::INFINITY,
        });
    }
    let corrections = dc_w_corrections();
    let mut mix: Option<DensityMatrix> = None;
    for b in &joint {
        let corrected = b
            .state
            .apply_pauli(&corrections[&b.key.1], &labels)?
            .scale(b.prob / q);
        mix = Some(match mix {
            None => corrected,
            Some(acc) => acc.add(&corrected)?,
        });
    }
    let output = mix.unwrap().normalize()?;
    let fidelity = output.sqrt_fidelity(&ghz_phi4_plus(&labels))?;
    let (attempts, ghz_time) = compound_stats(
        q1,
        q / q1,
        2.0 * env.timing.t_pauli_comm,
        env.timing.t_link,
    );
    Ok(ProtocolResult {
        success_prob: q,
        fidelity,
        attempts,
        output_state: output,
        ghz_time,
    })
}

/// Exact per-trial structure of a double-click protocol, for time modeling.
pub(super) fn dc_trial_parameters(
    id: super::ProtocolId,
    env: &SimEnv,
) -> Result<(f64, f64, f64), ProtocolError> {
    match id {
        super::ProtocolId::DcGhz => {
            let (q1, joint) = dc_ghz_joint_branches(env, env.hw.alpha)?;
            let q: f64 = joint.iter().map(|b| b.prob).sum();
            Ok((q1, q / q1.max(1e-300), env.timing.t_pauli_comm))
        }
        super::ProtocolId::DcW => {
            let (q1, joint) = dc_w_joint_branches(env, env.hw.alpha)?;
            let q: f64 = joint.iter().map(|b| b.prob).sum();
            Ok((q1, q / q1.max(1e-300), 2.0 * env.timing.t_pauli_comm))
        }
        _ => Err(ProtocolError::UnknownProtocol(id.name().into())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn dc_ghz_ideal_table_values() {
        for pnr in [true, false] {
            let env = SimEnv::ideal(0.5, pnr);
            let r = run_dc_ghz(&env).unwrap();
            assert_abs_diff_eq!(r.success_prob, 0.1875, epsilon = 1e-11);
            assert_abs_diff_eq!(r.fidelity, 1.0, epsilon = 1e-11);
        }
    }

    #[test]
    fn dc_ghz_fidelity_alpha_independent() {
        for alpha in [0.1, 0.3, 0.5, 0.9] {
            for pnr in [true, false] {
                let env = SimEnv::ideal(alpha, pnr);
                let r = run_dc_ghz(&env).unwrap();
                assert_abs_diff_eq!(r.fidelity, 1.0, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn dc_ghz_strict_threshold_acceptance_halves_success() {
        let mut env = SimEnv::ideal(0.5, false);
        env.dc_round2 = DcRound2::PairsOnly;
        let r = run_dc_ghz(&env).unwrap();
        assert_abs_diff_eq!(r.success_prob, 0.1875 / 2.0, epsilon = 1e-11);
        assert_abs_diff_eq!(r.fidelity, 1.0, epsilon = 1e-11);
    }

    #[test]
    fn dc_w_pnr_table_values() {
        let env = SimEnv::ideal(0.5, true);
        let r = run_dc_w(&env).unwrap();
        assert_abs_diff_eq!(r.success_prob, 2.0 * 0.5 * 0.125, epsilon = 1e-11);
        assert_abs_diff_eq!(r.fidelity, 1.0, epsilon = 1e-11);
    }

    #[test]
    fn dc_w_non_pnr_small_alpha_fidelity_limit() {
        // fidelity tends to 8 sqrt(16/1152) as alpha -> 0
        let env = SimEnv::ideal(1e-4, false);
        let r = run_dc_w(&env).unwrap();
        let limit = 8.0 * (16.0f64 / 1152.0).sqrt();
        assert_abs_diff_eq!(r.fidelity, limit, epsilon = 2e-4);
    }
}
