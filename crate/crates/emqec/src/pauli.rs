//! Pauli strings over qubit registers.

use crate::C64;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PauliOp {
    I,
    X,
    Y,
    Z,
}

impl PauliOp {
    pub fn from_char(ch: char) -> Option<PauliOp> {
        match ch {
            'I' => Some(PauliOp::I),
            'X' => Some(PauliOp::X),
            'Y' => Some(PauliOp::Y),
            'Z' => Some(PauliOp::Z),
            _ => None,
        }
    }

    pub fn to_char(self) -> char {
        match self {
            PauliOp::I => 'I',
            PauliOp::X => 'X',
            PauliOp::Y => 'Y',
            PauliOp::Z => 'Z',
        }
    }

    pub fn anticommutes(self, other: PauliOp) -> bool {
        self != PauliOp::I && other != PauliOp::I && self != other
    }

    fn index(self) -> usize {
        match self {
            PauliOp::I => 0,
            PauliOp::X => 1,
            PauliOp::Y => 2,
            PauliOp::Z => 3,
        }
    }

    fn from_index(i: usize) -> PauliOp {
        match i {
            0 => PauliOp::I,
            1 => PauliOp::X,
            2 => PauliOp::Y,
            _ => PauliOp::Z,
        }
    }
}

/// Ordered Pauli string; site 0 is the most significant qubit of the
/// register it is applied to. Satisfies Tr(P^dag Q) = 2^w delta_{PQ}.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PauliString {
    pub ops: Vec<PauliOp>,
}

impl PauliString {
    pub fn identity(w: usize) -> Self {
        PauliString {
            ops: vec![PauliOp::I; w],
        }
    }

    pub fn from_str(s: &str) -> Option<Self> {
        let ops: Option<Vec<PauliOp>> = s.chars().map(PauliOp::from_char).collect();
        ops.map(|ops| PauliString { ops })
    }

    pub fn single(w: usize, site: usize, op: PauliOp) -> Self {
        let mut ops = vec![PauliOp::I; w];
        ops[site] = op;
        PauliString { ops }
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn is_identity(&self) -> bool {
        self.ops.iter().all(|&o| o == PauliOp::I)
    }

    /// Number of non-identity sites.
    pub fn support(&self) -> usize {
        self.ops.iter().filter(|&&o| o != PauliOp::I).count()
    }

    /// Enumerate all 4^w strings in base-4 order (I<X<Y<Z per site).
    pub fn enumerate(w: usize) -> impl Iterator<Item = PauliString> {
        (0..4usize.pow(w as u32)).map(move |code| Self::from_code(code, w))
    }

    pub fn from_code(code: usize, w: usize) -> PauliString {
        let mut ops = vec![PauliOp::I; w];
        let mut rem = code;
        for i in (0..w).rev() {
            ops[i] = PauliOp::from_index(rem % 4);
            rem /= 4;
        }
        PauliString { ops }
    }

    pub fn code(&self) -> usize {
        self.ops.iter().fold(0, |acc, op| acc * 4 + op.index())
    }

    /// Action on a computational basis state: P|b> = phase * |b'>.
    pub fn apply_basis(&self, b: usize) -> (usize, C64) {
        let w = self.ops.len();
        let mut out = b;
        let mut phase = C64::new(1.0, 0.0);
        for (i, op) in self.ops.iter().enumerate() {
            let bit = (b >> (w - 1 - i)) & 1;
            match op {
                PauliOp::I => {}
                PauliOp::X => out ^= 1 << (w - 1 - i),
                PauliOp::Z => {
                    if bit == 1 {
                        phase = -phase;
                    }
                }
                PauliOp::Y => {
                    out ^= 1 << (w - 1 - i);
                    phase *= if bit == 0 {
                        C64::new(0.0, 1.0)
                    } else {
                        C64::new(0.0, -1.0)
                    };
                }
            }
        }
        (out, phase)
    }

    /// Dense matrix, row-major, dimension 2^w.
    pub fn matrix(&self) -> Vec<C64> {
        let dim = 1 << self.ops.len();
        let mut m = vec![C64::ZERO; dim * dim];
        for b in 0..dim {
            let (nb, ph) = self.apply_basis(b);
            m[nb * dim + b] = ph;
        }
        m
    }

    pub fn anticommutes_with(&self, other: &PauliString) -> bool {
        let count = self
            .ops
            .iter()
            .zip(&other.ops)
            .filter(|(a, b)| a.anticommutes(**b))
            .count();
        count % 2 == 1
    }

    /// Site-wise product up to global phase (Pauli group modulo phases).
    pub fn compose_up_to_phase(&self, other: &PauliString) -> PauliString {
        let ops = self
            .ops
            .iter()
            .zip(&other.ops)
            .map(|(&a, &b)| {
                if a == PauliOp::I {
                    b
                } else if b == PauliOp::I {
                    a
                } else if a == b {
                    PauliOp::I
                } else {
                    // the third non-identity op
                    match (a, b) {
                        (PauliOp::X, PauliOp::Y) | (PauliOp::Y, PauliOp::X) => PauliOp::Z,
                        (PauliOp::X, PauliOp::Z) | (PauliOp::Z, PauliOp::X) => PauliOp::Y,
                        _ => PauliOp::X,
                    }
                }
            })
            .collect();
        PauliString { ops }
    }

    /// Hilbert-Schmidt coefficient Tr(P^dag A) for a dense operator A.
    pub fn hs_coefficient(&self, a: &[C64]) -> C64 {
        let dim = 1 << self.ops.len();
        debug_assert_eq!(a.len(), dim * dim);
        // Tr(P^dag A) = sum_b <b| P^dag A |b> = sum_b phase(b)^* A[b', b]
        let mut acc = C64::ZERO;
        for b in 0..dim {
            let (nb, ph) = self.apply_basis(b);
            acc += ph.conj() * a[nb * dim + b];
        }
        acc
    }

    pub fn to_string_ixyz(&self) -> String {
        self.ops.iter().map(|o| o.to_char()).collect()
    }
}

impl std::fmt::Display for PauliString {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.to_string_ixyz())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn orthogonality_up_to_weight_4() {
        for w in 1..=4usize {
            let dim = 1 << w;
            let all: Vec<PauliString> = PauliString::enumerate(w).collect();
            for (i, p) in all.iter().enumerate() {
                for (j, q) in all.iter().enumerate() {
                    let tr = p.hs_coefficient(&q.matrix());
                    let expect = if i == j { dim as f64 } else { 0.0 };
                    assert_abs_diff_eq!(tr.re, expect, epsilon = 1e-12);
                    assert_abs_diff_eq!(tr.im, 0.0, epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn apply_basis_y() {
        let p = PauliString::from_str("Y").unwrap();
        let (b, ph) = p.apply_basis(0);
        assert_eq!(b, 1);
        assert_abs_diff_eq!(ph.im, 1.0, epsilon = 1e-15);
        let (b, ph) = p.apply_basis(1);
        assert_eq!(b, 0);
        assert_abs_diff_eq!(ph.im, -1.0, epsilon = 1e-15);
    }

    #[test]
    fn anticommutation() {
        let xx = PauliString::from_str("XX").unwrap();
        let zz = PauliString::from_str("ZZ").unwrap();
        let zi = PauliString::from_str("ZI").unwrap();
        assert!(!xx.anticommutes_with(&zz));
        assert!(xx.anticommutes_with(&zi));
    }

    #[test]
    fn compose_and_code_roundtrip() {
        let a = PauliString::from_str("XYZI").unwrap();
        let b = PauliString::from_str("YYIZ").unwrap();
        let c = a.compose_up_to_phase(&b);
        assert_eq!(c.to_string_ixyz(), "ZIZZ");
        let code = a.code();
        assert_eq!(PauliString::from_code(code, 4), a);
    }
}
