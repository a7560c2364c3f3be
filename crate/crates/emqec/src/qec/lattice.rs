//! Modular toric lattice: data qubits on edges, vertex X-stabilizers,
//! plaquette Z-stabilizers, the four-sub-round schedule and the logical
//! operator representatives.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum LatticeError {
    #[error("distance {0} must be even and at least 4")]
    BadDistance(usize),
}

/// One of the four sequential measurement sub-rounds of a full cycle.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SubRound {
    X1,
    X2,
    Z1,
    Z2,
}

pub const SUB_ROUNDS: [SubRound; 4] = [SubRound::X1, SubRound::X2, SubRound::Z1, SubRound::Z2];

#[derive(Clone, Debug)]
pub struct ToricLattice {
    pub d: usize,
    /// 2 d^2 data qubits: horizontal edges first (y*d + x), then vertical.
    pub n_edges: usize,
    /// Per vertex stabilizer: its four data-qubit slots in canonical order.
    pub vertex_edges: Vec<[usize; 4]>,
    pub plaq_edges: Vec<[usize; 4]>,
    /// Sub-round of each vertex / plaquette stabilizer.
    pub vertex_round: Vec<SubRound>,
    pub plaq_round: Vec<SubRound>,
    /// Spatial decoder adjacency: per edge, the two vertices / plaquettes it
    /// connects.
    pub edge_vertices: Vec<[usize; 2]>,
    pub edge_plaqs: Vec<[usize; 2]>,
    /// Logical operator supports (edge sets of length d).
    pub logical_z: [Vec<usize>; 2],
    pub logical_x: [Vec<usize>; 2],
}

impl ToricLattice {
    pub fn new(d: usize) -> Result<ToricLattice, LatticeError> {
        if d < 4 || d % 2 != 0 {
            return Err(LatticeError::BadDistance(d));
        }
        let n = d * d;
        let h = |x: usize, y: usize| (y % d) * d + (x % d);
        let v = |x: usize, y: usize| n + (y % d) * d + (x % d);
        let mut vertex_edges = Vec::with_capacity(n);
        let mut plaq_edges = Vec::with_capacity(n);
        let mut vertex_round = Vec::with_capacity(n);
        let mut plaq_round = Vec::with_capacity(n);
        for y in 0..d {
            for x in 0..d {
                vertex_edges.push([h(x + d - 1, y), h(x, y), v(x, y + d - 1), v(x, y)]);
                plaq_edges.push([h(x, y), h(x, y + 1), v(x, y), v(x + 1, y)]);
                if (x + y) % 2 == 0 {
                    vertex_round.push(SubRound::X1);
                    plaq_round.push(SubRound::Z1);
                } else {
                    vertex_round.push(SubRound::X2);
                    plaq_round.push(SubRound::Z2);
                }
            }
        }
        let mut edge_vertices = vec![[0usize; 2]; 2 * n];
        let mut edge_plaqs = vec![[0usize; 2]; 2 * n];
        for y in 0..d {
            for x in 0..d {
                let s = y * d + x;
                // horizontal edge (x,y)-(x+1,y)
                edge_vertices[h(x, y)] = [s, y * d + (x + 1) % d];
                // vertical edge (x,y)-(x,y+1)
                edge_vertices[v(x, y)] = [s, ((y + 1) % d) * d + x];
                // E_h(x,y) borders plaquettes P(x,y) and P(x,y-1)
                edge_plaqs[h(x, y)] = [s, ((y + d - 1) % d) * d + x];
                // E_v(x,y) borders P(x,y) and P(x-1,y)
                edge_plaqs[v(x, y)] = [s, y * d + (x + d - 1) % d];
            }
        }
        let logical_z = [
            (0..d).map(|y| v(0, y)).collect::<Vec<_>>(),
            (0..d).map(|x| h(x, 0)).collect::<Vec<_>>(),
        ];
        let logical_x = [
            (0..d).map(|y| h(0, y)).collect::<Vec<_>>(),
            (0..d).map(|x| v(x, 0)).collect::<Vec<_>>(),
        ];
        Ok(ToricLattice {
            d,
            n_edges: 2 * n,
            vertex_edges,
            plaq_edges,
            vertex_round,
            plaq_round,
            edge_vertices,
            edge_plaqs,
            logical_z,
            logical_x,
        })
    }

    pub fn n_stabilizers_per_type(&self) -> usize {
        self.d * self.d
    }

    /// X-error homology class: overlap parities with the two logical-Z
    /// representatives.
    pub fn x_class(&self, x_frame: &[bool]) -> [bool; 2] {
        [
            parity(x_frame, &self.logical_z[1]),
            parity(x_frame, &self.logical_z[0]),
        ]
    }

    /// Z-error homology class: overlap parities with the two logical-X
    /// representatives.
    pub fn z_class(&self, z_frame: &[bool]) -> [bool; 2] {
        [
            parity(z_frame, &self.logical_x[0]),
            parity(z_frame, &self.logical_x[1]),
        ]
    }
}

fn parity(frame: &[bool], support: &[usize]) -> bool {
    support.iter().filter(|&&e| frame[e]).count() % 2 == 1
}
