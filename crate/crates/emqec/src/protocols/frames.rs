//! Canonical target states and programmatic Pauli-frame derivation.
//!
//! Every accepted heralding or post-selection branch carries a local Pauli
//! correction mapping it to the canonical target. Corrections are derived
//! from the ideal-hardware branch states rather than transcribed by hand.

use crate::pauli::PauliString;
use crate::qstate::{DensityMatrix, Label, PureState};
use crate::C64;

fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

/// |Phi_4^+> = (|0000> + |1111>)/sqrt2 on the given four labels.
pub fn ghz_phi4_plus(labels: &[Label]) -> PureState {
    let s = 1.0 / 2.0f64.sqrt();
    let mut amps = vec![C64::ZERO; 16];
    amps[0] = c(s);
    amps[15] = c(s);
    PureState::from_amplitudes(labels, &amps).unwrap()
}

/// |W_4> = (|1000> + |0100> + |0010> + |0001>)/2.
pub fn w4_state(labels: &[Label]) -> PureState {
    let mut amps = vec![C64::ZERO; 16];
    for idx in [0b1000, 0b0100, 0b0010, 0b0001] {
        amps[idx] = c(0.5);
    }
    PureState::from_amplitudes(labels, &amps).unwrap()
}

/// |Phi^+> = (|00> + |11>)/sqrt2.
pub fn bell_phi_plus(labels: &[Label]) -> PureState {
    let s = 1.0 / 2.0f64.sqrt();
    PureState::from_amplitudes(labels, &[c(s), C64::ZERO, C64::ZERO, c(s)]).unwrap()
}

/// Find the Pauli string over `targets` maximizing the fidelity of
/// P rho P^dag against `target`. Returns the correction and the achieved
/// square-root fidelity.
pub fn best_pauli_correction(
    rho: &DensityMatrix,
    target: &PureState,
    targets: &[Label],
) -> (PauliString, f64) {
    let w = targets.len();
    let mut best = (PauliString::identity(w), -1.0f64);
    for p in PauliString::enumerate(w) {
        let corrected = rho
            .apply_pauli(&p, targets)
            .expect("frame targets must exist");
        let f = corrected
            .sqrt_fidelity(target)
            .expect("frame target dimensions must match");
        if f > best.1 + 1e-15 {
            best = (p, f);
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qstate::Label;
    use approx::assert_abs_diff_eq;

    #[test]
    fn frame_recovers_ghz_variant() {
        let labels: Vec<Label> = ["a", "b", "c", "d"].iter().map(|s| Label::new(*s)).collect();
        // (|0101> - |1010>)/sqrt2 is Pauli-equivalent to |Phi_4^+>
        let s = 1.0 / 2.0f64.sqrt();
        let mut amps = vec![C64::ZERO; 16];
        amps[0b0101] = c(s);
        amps[0b1010] = c(-s);
        let variant = PureState::from_amplitudes(&labels, &amps).unwrap().to_density();
        let target = ghz_phi4_plus(&labels);
        let (p, f) = best_pauli_correction(&variant, &target, &labels);
        assert_abs_diff_eq!(f, 1.0, epsilon = 1e-12);
        assert!(!p.is_identity());
    }
}
