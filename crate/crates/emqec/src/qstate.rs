//! Dense complex linear algebra over labeled multi-qubit / multi-mode
//! registers: tensor products, partial trace, unitary and channel
//! application, POVM conditioning and fidelity.
//!
//! All states are immutable after construction; every operation returns a
//! new value, so states can be shared freely across parallel workers.

use crate::pauli::PauliString;
use crate::C64;
use thiserror::Error;

pub const HERM_TOL: f64 = 1e-10;
pub const PSD_FLOOR: f64 = -1e-9;
pub const UNITARY_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum QstateError {
    #[error("label collision: `{0}` present in both operands")]
    LabelCollision(String),
    #[error("unknown label `{0}`")]
    UnknownLabel(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("operator is not unitary (max deviation {0:.3e})")]
    NonUnitary(f64),
    #[error("matrix is not Hermitian (max deviation {0:.3e})")]
    NonHermitian(f64),
    #[error("state is not normalized (trace {0:.6e})")]
    NotNormalized(f64),
    #[error("heralding probability {0:.3e} below threshold; impossible pattern")]
    ImpossiblePattern(f64),
}

pub type Result<T> = std::result::Result<T, QstateError>;

fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

/// Subsystem identifier. Protocol code addresses registers exclusively
/// through labels, never raw tensor indices.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Label(pub String);

impl Label {
    pub fn new(s: impl Into<String>) -> Self {
        Label(s.into())
    }
}

impl std::fmt::Display for Label {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl From<&str> for Label {
    fn from(s: &str) -> Self {
        Label(s.to_string())
    }
}

/// Pure state over a labeled register, kept at unit norm (1e-12).
#[derive(Clone, Debug)]
pub struct PureState {
    labels: Vec<Label>,
    dims: Vec<usize>,
    amps: Vec<C64>,
}

impl PureState {
    pub fn new(labels: Vec<Label>, dims: Vec<usize>, amps: Vec<C64>) -> Result<Self> {
        let dim: usize = dims.iter().product();
        if amps.len() != dim {
            return Err(QstateError::DimensionMismatch {
                expected: dim,
                got: amps.len(),
            });
        }
        let norm: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
        if (norm - 1.0).abs() > 1e-12 {
            return Err(QstateError::NotNormalized(norm));
        }
        Ok(PureState { labels, dims, amps })
    }

    /// Qubit register initialized to a computational basis state.
    pub fn basis(labels: &[Label], index: usize) -> Self {
        let dim = 1usize << labels.len();
        let mut amps = vec![C64::ZERO; dim];
        amps[index] = c(1.0);
        PureState {
            labels: labels.to_vec(),
            dims: vec![2; labels.len()],
            amps,
        }
    }

    pub fn from_amplitudes(labels: &[Label], amps: &[C64]) -> Result<Self> {
        Self::new(labels.to_vec(), vec![2; labels.len()], amps.to_vec())
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    pub fn tensor(&self, other: &PureState) -> Result<PureState> {
        for l in &other.labels {
            if self.labels.contains(l) {
                return Err(QstateError::LabelCollision(l.0.clone()));
            }
        }
        let mut amps = Vec::with_capacity(self.dim() * other.dim());
        for a in &self.amps {
            for b in &other.amps {
                amps.push(a * b);
            }
        }
        let mut labels = self.labels.clone();
        labels.extend(other.labels.iter().cloned());
        let mut dims = self.dims.clone();
        dims.extend_from_slice(&other.dims);
        Ok(PureState { labels, dims, amps })
    }

    pub fn apply_unitary(&self, u: &[C64], targets: &[Label]) -> Result<PureState> {
        let dm_helper = IndexMap::build(&self.labels, &self.dims, targets)?;
        let m = dm_helper.block;
        check_unitary(u, m)?;
        let mut amps = vec![C64::ZERO; self.amps.len()];
        for rest in 0..dm_helper.rest_offsets.len() {
            let base = dm_helper.rest_offsets[rest];
            for i in 0..m {
                let mut acc = C64::ZERO;
                for a in 0..m {
                    acc += u[i * m + a] * self.amps[base + dm_helper.target_offsets[a]];
                }
                amps[base + dm_helper.target_offsets[i]] = acc;
            }
        }
        Ok(PureState {
            labels: self.labels.clone(),
            dims: self.dims.clone(),
            amps,
        })
    }

    pub fn to_density(&self) -> DensityMatrix {
        let dim = self.dim();
        let mut data = vec![C64::ZERO; dim * dim];
        for r in 0..dim {
            for col in 0..dim {
                data[r * dim + col] = self.amps[r] * self.amps[col].conj();
            }
        }
        DensityMatrix {
            labels: self.labels.clone(),
            dims: self.dims.clone(),
            dim,
            data,
            normalized: true,
        }
    }
}

/// Density matrix over a labeled register.
///
/// Heralded branches are carried unnormalized: `normalized == false` means
/// the trace equals the branch probability rather than one.
#[derive(Clone, Debug)]
pub struct DensityMatrix {
    labels: Vec<Label>,
    dims: Vec<usize>,
    dim: usize,
    data: Vec<C64>,
    normalized: bool,
}

/// Precomputed index decomposition for operations on a subset of subsystems.
struct IndexMap {
    /// Offsets of every basis state with all target subsystems set to zero.
    rest_offsets: Vec<usize>,
    /// Offset contribution of each joint target-subsystem index.
    target_offsets: Vec<usize>,
    /// Joint dimension of the targeted subsystems.
    block: usize,
}

impl IndexMap {
    fn build(labels: &[Label], dims: &[usize], targets: &[Label]) -> Result<IndexMap> {
        let mut positions = Vec::with_capacity(targets.len());
        for t in targets {
            let pos = labels
                .iter()
                .position(|l| l == t)
                .ok_or_else(|| QstateError::UnknownLabel(t.0.clone()))?;
            positions.push(pos);
        }
        let n = labels.len();
        let mut strides = vec![1usize; n];
        for i in (0..n.saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * dims[i + 1];
        }
        let block: usize = positions.iter().map(|&p| dims[p]).product();

        let mut target_offsets = vec![0usize; block];
        for joint in 0..block {
            let mut rem = joint;
            let mut off = 0;
            // targets ordered as given; first target is most significant
            for (k, &p) in positions.iter().enumerate() {
                let later: usize = positions[k + 1..].iter().map(|&q| dims[q]).product();
                let idx = rem / later;
                rem %= later;
                off += idx * strides[p];
            }
            target_offsets[joint] = off;
        }

        let rest_positions: Vec<usize> = (0..n).filter(|p| !positions.contains(p)).collect();
        let rest_dim: usize = rest_positions.iter().map(|&p| dims[p]).product();
        let mut rest_offsets = vec![0usize; rest_dim];
        for rest in 0..rest_dim {
            let mut rem = rest;
            let mut off = 0;
            for (k, &p) in rest_positions.iter().enumerate() {
                let later: usize = rest_positions[k + 1..].iter().map(|&q| dims[q]).product();
                let idx = rem / later;
                rem %= later;
                off += idx * strides[p];
            }
            rest_offsets[rest] = off;
        }
        Ok(IndexMap {
            rest_offsets,
            target_offsets,
            block,
        })
    }
}

fn check_unitary(u: &[C64], m: usize) -> Result<()> {
    if u.len() != m * m {
        return Err(QstateError::DimensionMismatch {
            expected: m * m,
            got: u.len(),
        });
    }
    let mut max_dev = 0.0f64;
    for i in 0..m {
        for j in 0..m {
            let mut acc = C64::ZERO;
            for k in 0..m {
                acc += u[k * m + i].conj() * u[k * m + j];
            }
            let expect = if i == j { c(1.0) } else { C64::ZERO };
            max_dev = max_dev.max((acc - expect).norm());
        }
    }
    if max_dev > UNITARY_TOL {
        return Err(QstateError::NonUnitary(max_dev));
    }
    Ok(())
}

impl DensityMatrix {
    pub fn from_matrix(
        labels: Vec<Label>,
        dims: Vec<usize>,
        data: Vec<C64>,
        normalized: bool,
    ) -> Result<Self> {
        let dim: usize = dims.iter().product();
        if data.len() != dim * dim {
            return Err(QstateError::DimensionMismatch {
                expected: dim * dim,
                got: data.len(),
            });
        }
        Ok(DensityMatrix {
            labels,
            dims,
            dim,
            data,
            normalized,
        })
    }

    pub fn qubits_from_matrix(labels: &[Label], data: Vec<C64>, normalized: bool) -> Result<Self> {
        Self::from_matrix(labels.to_vec(), vec![2; labels.len()], data, normalized)
    }

    /// Single qubit register in |0><0|.
    pub fn qubit_zero(label: Label) -> Self {
        PureState::basis(&[label], 0).to_density()
    }

    pub fn maximally_mixed(labels: &[Label]) -> Self {
        let dim = 1usize << labels.len();
        let mut data = vec![C64::ZERO; dim * dim];
        for i in 0..dim {
            data[i * dim + i] = c(1.0 / dim as f64);
        }
        DensityMatrix {
            labels: labels.to_vec(),
            dims: vec![2; labels.len()],
            dim,
            data,
            normalized: true,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn entry(&self, r: usize, c: usize) -> C64 {
        self.data[r * self.dim + c]
    }

    pub fn is_normalized_flag(&self) -> bool {
        self.normalized
    }

    pub fn trace(&self) -> C64 {
        (0..self.dim).map(|i| self.data[i * self.dim + i]).sum()
    }

    /// Rescale to unit trace and set the normalization flag.
    pub fn normalize(&self) -> Result<DensityMatrix> {
        let t = self.trace().re;
        if t <= 1e-300 {
            return Err(QstateError::ImpossiblePattern(t));
        }
        let mut out = self.clone();
        for v in &mut out.data {
            *v /= t;
        }
        out.normalized = true;
        Ok(out)
    }

    pub fn scale(&self, w: f64) -> DensityMatrix {
        let mut out = self.clone();
        for v in &mut out.data {
            *v *= w;
        }
        out.normalized = false;
        out
    }

    pub fn add(&self, other: &DensityMatrix) -> Result<DensityMatrix> {
        if self.dim != other.dim || self.labels != other.labels {
            return Err(QstateError::DimensionMismatch {
                expected: self.dim,
                got: other.dim,
            });
        }
        let mut out = self.clone();
        for (v, w) in out.data.iter_mut().zip(other.data.iter()) {
            *v += w;
        }
        out.normalized = false;
        Ok(out)
    }

    pub fn max_hermiticity_deviation(&self) -> f64 {
        let mut dev = 0.0f64;
        for r in 0..self.dim {
            for col in r..self.dim {
                let d = (self.data[r * self.dim + col] - self.data[col * self.dim + r].conj())
                    .norm();
                dev = dev.max(d);
            }
        }
        dev
    }

    pub fn check_hermitian(&self) -> Result<()> {
        let dev = self.max_hermiticity_deviation();
        if dev > HERM_TOL {
            return Err(QstateError::NonHermitian(dev));
        }
        Ok(())
    }

    /// Eigenvalues of the (Hermitian) matrix, ascending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        hermitian_eigenvalues(&self.data, self.dim)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues()
            .into_iter()
            .fold(f64::INFINITY, f64::min)
    }

    pub fn tensor(&self, other: &DensityMatrix) -> Result<DensityMatrix> {
        for l in &other.labels {
            if self.labels.contains(l) {
                return Err(QstateError::LabelCollision(l.0.clone()));
            }
        }
        let d1 = self.dim;
        let d2 = other.dim;
        let dim = d1 * d2;
        let mut data = vec![C64::ZERO; dim * dim];
        for r1 in 0..d1 {
            for c1 in 0..d1 {
                let a = self.data[r1 * d1 + c1];
                if a == C64::ZERO {
                    continue;
                }
                for r2 in 0..d2 {
                    for c2 in 0..d2 {
                        data[(r1 * d2 + r2) * dim + (c1 * d2 + c2)] =
                            a * other.data[r2 * d2 + c2];
                    }
                }
            }
        }
        let mut labels = self.labels.clone();
        labels.extend(other.labels.iter().cloned());
        let mut dims = self.dims.clone();
        dims.extend_from_slice(&other.dims);
        Ok(DensityMatrix {
            labels,
            dims,
            dim,
            data,
            normalized: self.normalized && other.normalized,
        })
    }

    /// Trace out every subsystem not listed in `keep`. The result carries the
    /// kept labels in their original register order.
    pub fn partial_trace(&self, keep: &[Label]) -> Result<DensityMatrix> {
        for k in keep {
            if !self.labels.contains(k) {
                return Err(QstateError::UnknownLabel(k.0.clone()));
            }
        }
        let kept: Vec<Label> = self
            .labels
            .iter()
            .filter(|l| keep.contains(l))
            .cloned()
            .collect();
        let traced: Vec<Label> = self
            .labels
            .iter()
            .filter(|l| !keep.contains(l))
            .cloned()
            .collect();
        if traced.is_empty() {
            return Ok(self.clone());
        }
        let map = IndexMap::build(&self.labels, &self.dims, &traced)?;
        let kept_dims: Vec<usize> = self
            .labels
            .iter()
            .zip(&self.dims)
            .filter(|(l, _)| keep.contains(l))
            .map(|(_, d)| *d)
            .collect();
        let out_dim: usize = kept_dims.iter().product();
        let mut data = vec![C64::ZERO; out_dim * out_dim];
        // rest_offsets enumerate the kept subsystems in register order
        for (r_out, &r_off) in map.rest_offsets.iter().enumerate() {
            for (c_out, &c_off) in map.rest_offsets.iter().enumerate() {
                let mut acc = C64::ZERO;
                for &t in &map.target_offsets {
                    acc += self.data[(r_off + t) * self.dim + (c_off + t)];
                }
                data[r_out * out_dim + c_out] = acc;
            }
        }
        Ok(DensityMatrix {
            labels: kept,
            dims: kept_dims,
            dim: out_dim,
            data,
            normalized: self.normalized,
        })
    }

    /// Conjugate by a unitary acting on `targets`.
    pub fn apply_unitary(&self, u: &[C64], targets: &[Label]) -> Result<DensityMatrix> {
        let map = IndexMap::build(&self.labels, &self.dims, targets)?;
        check_unitary(u, map.block)?;
        Ok(self.apply_op_unchecked(u, &map))
    }

    fn apply_op_unchecked(&self, u: &[C64], map: &IndexMap) -> DensityMatrix {
        let m = map.block;
        let dim = self.dim;
        let mut data = vec![C64::ZERO; dim * dim];
        let mut block = vec![C64::ZERO; m * m];
        let mut tmp = vec![C64::ZERO; m * m];
        for &r_off in &map.rest_offsets {
            for &c_off in &map.rest_offsets {
                for i in 0..m {
                    for j in 0..m {
                        block[i * m + j] = self.data
                            [(r_off + map.target_offsets[i]) * dim + c_off + map.target_offsets[j]];
                    }
                }
                // tmp = U * block
                for i in 0..m {
                    for j in 0..m {
                        let mut acc = C64::ZERO;
                        for k in 0..m {
                            acc += u[i * m + k] * block[k * m + j];
                        }
                        tmp[i * m + j] = acc;
                    }
                }
                // out = tmp * U^dag
                for i in 0..m {
                    for j in 0..m {
                        let mut acc = C64::ZERO;
                        for k in 0..m {
                            acc += tmp[i * m + k] * u[j * m + k].conj();
                        }
                        data[(r_off + map.target_offsets[i]) * dim + c_off + map.target_offsets[j]] =
                            acc;
                    }
                }
            }
        }
        DensityMatrix {
            labels: self.labels.clone(),
            dims: self.dims.clone(),
            dim,
            data,
            normalized: self.normalized,
        }
    }

    /// Apply a channel given by Kraus operators acting on `targets`.
    pub fn apply_kraus(&self, kraus: &[Vec<C64>], targets: &[Label]) -> Result<DensityMatrix> {
        let map = IndexMap::build(&self.labels, &self.dims, targets)?;
        let m = map.block;
        let dim = self.dim;
        let mut data = vec![C64::ZERO; dim * dim];
        let mut block = vec![C64::ZERO; m * m];
        let mut tmp = vec![C64::ZERO; m * m];
        for &r_off in &map.rest_offsets {
            for &c_off in &map.rest_offsets {
                for i in 0..m {
                    for j in 0..m {
                        block[i * m + j] = self.data
                            [(r_off + map.target_offsets[i]) * dim + c_off + map.target_offsets[j]];
                    }
                }
                for k_op in kraus {
                    if k_op.len() != m * m {
                        return Err(QstateError::DimensionMismatch {
                            expected: m * m,
                            got: k_op.len(),
                        });
                    }
                    for i in 0..m {
                        for j in 0..m {
                            let mut acc = C64::ZERO;
                            for k in 0..m {
                                acc += k_op[i * m + k] * block[k * m + j];
                            }
                            tmp[i * m + j] = acc;
                        }
                    }
                    for i in 0..m {
                        for j in 0..m {
                            let mut acc = C64::ZERO;
                            for k in 0..m {
                                acc += tmp[i * m + k] * k_op[j * m + k].conj();
                            }
                            data[(r_off + map.target_offsets[i]) * dim
                                + c_off
                                + map.target_offsets[j]] += acc;
                        }
                    }
                }
            }
        }
        Ok(DensityMatrix {
            labels: self.labels.clone(),
            dims: self.dims.clone(),
            dim,
            data,
            normalized: self.normalized,
        })
    }

    /// Conjugate by a Pauli string over qubit `targets` (fast signed
    /// permutation path).
    pub fn apply_pauli(&self, pauli: &PauliString, targets: &[Label]) -> Result<DensityMatrix> {
        let map = IndexMap::build(&self.labels, &self.dims, targets)?;
        if map.block != 1 << pauli.len() {
            return Err(QstateError::DimensionMismatch {
                expected: map.block,
                got: 1 << pauli.len(),
            });
        }
        let m = map.block;
        // P |b> = phase(b) |perm(b)>
        let mut perm = vec![0usize; m];
        let mut phase = vec![C64::ZERO; m];
        for b in 0..m {
            let (pb, ph) = pauli.apply_basis(b);
            perm[b] = pb;
            phase[b] = ph;
        }
        let dim = self.dim;
        let mut data = vec![C64::ZERO; dim * dim];
        for &r_off in &map.rest_offsets {
            for &c_off in &map.rest_offsets {
                for i in 0..m {
                    for j in 0..m {
                        let v = self.data
                            [(r_off + map.target_offsets[i]) * dim + c_off + map.target_offsets[j]];
                        data[(r_off + map.target_offsets[perm[i]]) * dim
                            + c_off
                            + map.target_offsets[perm[j]]] += phase[i] * phase[j].conj() * v;
                    }
                }
            }
        }
        Ok(DensityMatrix {
            labels: self.labels.clone(),
            dims: self.dims.clone(),
            dim,
            data,
            normalized: self.normalized,
        })
    }

    /// One-sided Pauli multiplication: P rho (left) or rho P (right).
    /// The result is generally not Hermitian.
    pub fn apply_pauli_side(
        &self,
        pauli: &PauliString,
        targets: &[Label],
        left: bool,
    ) -> Result<DensityMatrix> {
        let map = IndexMap::build(&self.labels, &self.dims, targets)?;
        let m = map.block;
        if m != 1 << pauli.len() {
            return Err(QstateError::DimensionMismatch {
                expected: m,
                got: 1 << pauli.len(),
            });
        }
        let mut perm = vec![0usize; m];
        let mut phase = vec![C64::ZERO; m];
        for b in 0..m {
            let (pb, ph) = pauli.apply_basis(b);
            perm[b] = pb;
            phase[b] = ph;
        }
        let dim = self.dim;
        let mut data = vec![C64::ZERO; dim * dim];
        for &r_off in &map.rest_offsets {
            for &c_off in &map.rest_offsets {
                for i in 0..m {
                    for j in 0..m {
                        if left {
                            // (P rho)[perm(i), j] = phase(i) rho[i, j]
                            data[(r_off + map.target_offsets[perm[i]]) * dim
                                + c_off
                                + map.target_offsets[j]] = phase[i]
                                * self.data[(r_off + map.target_offsets[i]) * dim
                                    + c_off
                                    + map.target_offsets[j]];
                        } else {
                            // (rho P)[i, j] = rho[i, perm(j)] phase(j)
                            data[(r_off + map.target_offsets[i]) * dim
                                + c_off
                                + map.target_offsets[j]] = self.data
                                [(r_off + map.target_offsets[i]) * dim
                                    + c_off
                                    + map.target_offsets[perm[j]]]
                                * phase[j];
                        }
                    }
                }
            }
        }
        Ok(DensityMatrix {
            labels: self.labels.clone(),
            dims: self.dims.clone(),
            dim,
            data,
            normalized: false,
        })
    }

    /// Apply a probabilistic mixture of Pauli strings (a Pauli channel),
    /// accumulated in a single pass.
    pub fn apply_pauli_mixture(
        &self,
        terms: &[(PauliString, f64)],
        targets: &[Label],
    ) -> Result<DensityMatrix> {
        let map = IndexMap::build(&self.labels, &self.dims, targets)?;
        let m = map.block;
        let dim = self.dim;
        let mut data = vec![C64::ZERO; dim * dim];
        let mut perm = vec![0usize; m];
        let mut phase = vec![C64::ZERO; m];
        for (pauli, w) in terms {
            if *w == 0.0 {
                continue;
            }
            if m != 1 << pauli.len() {
                return Err(QstateError::DimensionMismatch {
                    expected: m,
                    got: 1 << pauli.len(),
                });
            }
            for b in 0..m {
                let (pb, ph) = pauli.apply_basis(b);
                perm[b] = pb;
                phase[b] = ph * C64::new(*w, 0.0);
            }
            for &r_off in &map.rest_offsets {
                for &c_off in &map.rest_offsets {
                    for i in 0..m {
                        let ph_i = phase[i];
                        let dst_r = (r_off + map.target_offsets[perm[i]]) * dim + c_off;
                        let src_r = (r_off + map.target_offsets[i]) * dim + c_off;
                        for j in 0..m {
                            data[dst_r + map.target_offsets[perm[j]]] += ph_i
                                * (phase[j].conj() / C64::new(*w, 0.0))
                                * self.data[src_r + map.target_offsets[j]];
                        }
                    }
                }
            }
        }
        Ok(DensityMatrix {
            labels: self.labels.clone(),
            dims: self.dims.clone(),
            dim,
            data,
            normalized: self.normalized,
        })
    }

    /// Expectation of a (not necessarily positive) operator on `targets`:
    /// `Tr[(I ⊗ E) rho]`.
    pub fn expect_op(&self, e: &[C64], targets: &[Label]) -> Result<C64> {
        let map = IndexMap::build(&self.labels, &self.dims, targets)?;
        let m = map.block;
        if e.len() != m * m {
            return Err(QstateError::DimensionMismatch {
                expected: m * m,
                got: e.len(),
            });
        }
        let mut acc = C64::ZERO;
        for &off in &map.rest_offsets {
            for i in 0..m {
                for j in 0..m {
                    if e[i * m + j] == C64::ZERO {
                        continue;
                    }
                    acc += e[i * m + j]
                        * self.data[(off + map.target_offsets[j]) * self.dim
                            + off
                            + map.target_offsets[i]];
                }
            }
        }
        Ok(acc)
    }

    /// POVM conditioning: returns the outcome weight `Tr[(I ⊗ E) rho]` and
    /// the unnormalized post-measurement state on the remaining subsystems
    /// (the targets are traced out).
    pub fn condition_on(&self, e: &[C64], targets: &[Label]) -> Result<(f64, DensityMatrix)> {
        let map = IndexMap::build(&self.labels, &self.dims, targets)?;
        let m = map.block;
        if e.len() != m * m {
            return Err(QstateError::DimensionMismatch {
                expected: m * m,
                got: e.len(),
            });
        }
        let kept: Vec<Label> = self
            .labels
            .iter()
            .filter(|l| !targets.contains(l))
            .cloned()
            .collect();
        let kept_dims: Vec<usize> = self
            .labels
            .iter()
            .zip(&self.dims)
            .filter(|(l, _)| !targets.contains(l))
            .map(|(_, d)| *d)
            .collect();
        let out_dim: usize = kept_dims.iter().product();
        let mut data = vec![C64::ZERO; out_dim * out_dim];
        for (r_out, &r_off) in map.rest_offsets.iter().enumerate() {
            for (c_out, &c_off) in map.rest_offsets.iter().enumerate() {
                let mut acc = C64::ZERO;
                for i in 0..m {
                    for j in 0..m {
                        if e[i * m + j] == C64::ZERO {
                            continue;
                        }
                        acc += e[i * m + j]
                            * self.data[(r_off + map.target_offsets[j]) * self.dim
                                + c_off
                                + map.target_offsets[i]];
                    }
                }
                data[r_out * out_dim + c_out] = acc;
            }
        }
        let out = DensityMatrix {
            labels: kept,
            dims: kept_dims,
            dim: out_dim,
            data,
            normalized: false,
        };
        let p = out.trace().re;
        Ok((p, out))
    }

    /// Project every listed qubit onto the Z basis, folding in a classical
    /// outcome-flip probability per qubit. Returns one entry per reported
    /// bit pattern (bit i of the pattern corresponds to `targets[i]`, most
    /// significant first) with its probability and the unnormalized
    /// post-measurement state on the remaining subsystems.
    pub fn measure_z_all(
        &self,
        targets: &[Label],
        flip_prob: f64,
    ) -> Result<Vec<(usize, f64, DensityMatrix)>> {
        let map = IndexMap::build(&self.labels, &self.dims, targets)?;
        let m = map.block;
        let kept: Vec<Label> = self
            .labels
            .iter()
            .filter(|l| !targets.contains(l))
            .cloned()
            .collect();
        let kept_dims: Vec<usize> = self
            .labels
            .iter()
            .zip(&self.dims)
            .filter(|(l, _)| !targets.contains(l))
            .map(|(_, d)| *d)
            .collect();
        let out_dim: usize = kept_dims.iter().product();

        // true-outcome branches
        let mut branches = Vec::with_capacity(m);
        for outcome in 0..m {
            let mut data = vec![C64::ZERO; out_dim * out_dim];
            let t = map.target_offsets[outcome];
            for (r_out, &r_off) in map.rest_offsets.iter().enumerate() {
                for (c_out, &c_off) in map.rest_offsets.iter().enumerate() {
                    data[r_out * out_dim + c_out] = self.data[(r_off + t) * self.dim + c_off + t];
                }
            }
            branches.push(data);
        }
        // fold flips: reported pattern r collects true outcomes o with weight
        // flip^|r^o| (1-flip)^(n-|r^o|)
        let n = targets.len();
        let mut out = Vec::with_capacity(m);
        for reported in 0..m {
            let mut data = vec![C64::ZERO; out_dim * out_dim];
            for (o, branch) in branches.iter().enumerate() {
                let nflips = (reported ^ o).count_ones() as i32;
                let w = flip_prob.powi(nflips) * (1.0 - flip_prob).powi(n as i32 - nflips);
                if w == 0.0 {
                    continue;
                }
                for (d, b) in data.iter_mut().zip(branch.iter()) {
                    *d += w * b;
                }
            }
            let dm = DensityMatrix {
                labels: kept.clone(),
                dims: kept_dims.clone(),
                dim: out_dim,
                data,
                normalized: false,
            };
            let p = dm.trace().re;
            out.push((reported, p, dm));
        }
        Ok(out)
    }

    /// Square-root fidelity against a pure target: sqrt(<psi| rho |psi>).
    pub fn sqrt_fidelity(&self, target: &PureState) -> Result<f64> {
        if target.dim() != self.dim {
            return Err(QstateError::DimensionMismatch {
                expected: self.dim,
                got: target.dim(),
            });
        }
        // align label order
        let perm = label_permutation(&self.labels, target.labels())?;
        let mut acc = C64::ZERO;
        let n = self.labels.len();
        let strides_self = strides_of(&self.dims);
        let strides_t = strides_of(&target.dims);
        // iterate over all basis states of self, map to target index
        for r in 0..self.dim {
            let tr = remap_index(r, &strides_self, &strides_t, &perm, n, &self.dims);
            let a_r = target.amps[tr];
            if a_r == C64::ZERO {
                continue;
            }
            for col in 0..self.dim {
                let tc = remap_index(col, &strides_self, &strides_t, &perm, n, &self.dims);
                let a_c = target.amps[tc];
                if a_c == C64::ZERO {
                    continue;
                }
                acc += a_r.conj() * self.data[r * self.dim + col] * a_c;
            }
        }
        let v = acc.re.max(0.0);
        Ok(v.sqrt())
    }

    /// <psi| rho |psi> without the square root.
    pub fn overlap(&self, target: &PureState) -> Result<f64> {
        let f = self.sqrt_fidelity(target)?;
        Ok(f * f)
    }

    /// Reorder subsystems to the given label order (for tests/interop).
    pub fn reordered(&self, order: &[Label]) -> Result<DensityMatrix> {
        let perm = label_permutation(order, &self.labels)?;
        let n = self.labels.len();
        let new_dims: Vec<usize> = perm.iter().map(|&p| self.dims[p]).collect();
        let strides_old = strides_of(&self.dims);
        let strides_new = strides_of(&new_dims);
        let mut data = vec![C64::ZERO; self.dim * self.dim];
        for r in 0..self.dim {
            let nr = permute_index(r, &strides_old, &strides_new, &perm, n, &self.dims);
            for col in 0..self.dim {
                let nc = permute_index(col, &strides_old, &strides_new, &perm, n, &self.dims);
                data[nr * self.dim + nc] = self.data[r * self.dim + col];
            }
        }
        Ok(DensityMatrix {
            labels: order.to_vec(),
            dims: new_dims,
            dim: self.dim,
            data,
            normalized: self.normalized,
        })
    }
}

fn strides_of(dims: &[usize]) -> Vec<usize> {
    let n = dims.len();
    let mut s = vec![1usize; n];
    for i in (0..n.saturating_sub(1)).rev() {
        s[i] = s[i + 1] * dims[i + 1];
    }
    s
}

/// perm[i] = position in `from` of labels_to[i]
fn label_permutation(to: &[Label], from: &[Label]) -> Result<Vec<usize>> {
    if to.len() != from.len() {
        return Err(QstateError::DimensionMismatch {
            expected: to.len(),
            got: from.len(),
        });
    }
    to.iter()
        .map(|l| {
            from.iter()
                .position(|f| f == l)
                .ok_or_else(|| QstateError::UnknownLabel(l.0.clone()))
        })
        .collect()
}

/// Map a basis index of `self` ordering into the target ordering where
/// target label j is self label perm[j].
fn remap_index(
    idx: usize,
    strides_self: &[usize],
    strides_target: &[usize],
    perm: &[usize],
    n: usize,
    dims_self: &[usize],
) -> usize {
    let mut out = 0;
    for (j, &p) in perm.iter().enumerate().take(n) {
        let digit = (idx / strides_self[p]) % dims_self[p];
        out += digit * strides_target[j];
    }
    out
}

fn permute_index(
    idx: usize,
    strides_old: &[usize],
    strides_new: &[usize],
    perm: &[usize],
    n: usize,
    dims_old: &[usize],
) -> usize {
    let mut out = 0;
    for (j, &p) in perm.iter().enumerate().take(n) {
        let digit = (idx / strides_old[p]) % dims_old[p];
        out += digit * strides_new[j];
    }
    out
}

/// Eigenvalues of a Hermitian matrix stored row-major.
pub fn hermitian_eigenvalues(data: &[C64], dim: usize) -> Vec<f64> {
    let m = nalgebra::DMatrix::from_row_slice(dim, dim, data);
    // enforce exact Hermiticity before factorization
    let h = (&m + m.adjoint()) * C64::new(0.5, 0.0);
    let mut ev: Vec<f64> = h.symmetric_eigen().eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ev
}

/// Full Hermitian eigendecomposition; returns (eigenvalues, eigenvectors as
/// row-major columns list).
pub fn hermitian_eigen(data: &[C64], dim: usize) -> (Vec<f64>, Vec<Vec<C64>>) {
    let m = nalgebra::DMatrix::from_row_slice(dim, dim, data);
    let h = (&m + m.adjoint()) * C64::new(0.5, 0.0);
    let se = h.symmetric_eigen();
    let vals: Vec<f64> = se.eigenvalues.iter().copied().collect();
    let vecs: Vec<Vec<C64>> = (0..dim)
        .map(|k| se.eigenvectors.column(k).iter().copied().collect())
        .collect();
    (vals, vecs)
}

/// Common single- and two-qubit gate matrices (row-major).
pub mod gates {
    use super::{c, C64};

    pub fn identity(dim: usize) -> Vec<C64> {
        let mut m = vec![C64::ZERO; dim * dim];
        for i in 0..dim {
            m[i * dim + i] = c(1.0);
        }
        m
    }

    pub fn x() -> Vec<C64> {
        vec![C64::ZERO, c(1.0), c(1.0), C64::ZERO]
    }

    pub fn y() -> Vec<C64> {
        vec![
            C64::ZERO,
            C64::new(0.0, -1.0),
            C64::new(0.0, 1.0),
            C64::ZERO,
        ]
    }

    pub fn z() -> Vec<C64> {
        vec![c(1.0), C64::ZERO, C64::ZERO, c(-1.0)]
    }

    pub fn h() -> Vec<C64> {
        let s = 1.0 / 2.0f64.sqrt();
        vec![c(s), c(s), c(s), c(-s)]
    }

    /// CNOT with the first target label as control, second as target.
    pub fn cnot() -> Vec<C64> {
        let mut m = vec![C64::ZERO; 16];
        m[0] = c(1.0);
        m[5] = c(1.0);
        m[3 * 4 + 2] = c(1.0);
        m[2 * 4 + 3] = c(1.0);
        m
    }

    pub fn cz() -> Vec<C64> {
        let mut m = vec![C64::ZERO; 16];
        m[0] = c(1.0);
        m[5] = c(1.0);
        m[10] = c(1.0);
        m[15] = c(-1.0);
        m
    }

    pub fn swap() -> Vec<C64> {
        let mut m = vec![C64::ZERO; 16];
        m[0] = c(1.0);
        m[1 * 4 + 2] = c(1.0);
        m[2 * 4 + 1] = c(1.0);
        m[15] = c(1.0);
        m
    }
}
