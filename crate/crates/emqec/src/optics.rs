//! Beam-splitter network transformation and detection POVM elements for the
//! W, GHZ and Bell heralding families, parameterized by pairwise photon
//! visibilities, for photon-number-resolving and threshold detectors.
//!
//! Input photonic registers are restricted to binary occupancy per port (at
//! most one photon per emitter), so the four-port space is 16-dimensional
//! and the two-port Bell banks are 4-dimensional.
//!
//! Every element is produced by one generic builder that sums beam-splitter
//! amplitudes over photon-to-detection-slot assignments (an S_N x S_N
//! permanent with visibility factors); the detector-pair sign variants fall
//! out of the beam-splitter columns instead of being transcribed per pair.

use crate::qstate::hermitian_eigenvalues;
use crate::C64;
use std::collections::HashMap;
use std::sync::{Arc, RwLock};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum OpticsError {
    #[error("photon count {0} outside supported range")]
    BadPhotonCount(usize),
    #[error("unsupported detection pattern {0:?}")]
    UnsupportedPattern(Vec<usize>),
    #[error("visibility {0} outside [0,1]")]
    BadVisibility(f64),
    #[error("empty element set")]
    EmptyElementSet,
    #[error("detector pair ({0},{1}) invalid")]
    BadDetectorPair(usize, usize),
}

fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

/// Pairwise amplitude visibilities mu_jj' between photons from input ports
/// j and j'. Unit diagonal, Hermitian, |mu| <= 1.
#[derive(Clone, Debug, PartialEq)]
pub struct VisibilityMatrix {
    ports: usize,
    m: Vec<C64>,
}

impl VisibilityMatrix {
    /// Uniform pairwise amplitude visibility (the default configuration).
    pub fn uniform(ports: usize, mu: f64) -> Self {
        let mut m = vec![C64::ZERO; ports * ports];
        for j in 0..ports {
            for k in 0..ports {
                m[j * ports + k] = if j == k { c(1.0) } else { c(mu) };
            }
        }
        VisibilityMatrix { ports, m }
    }

    /// From the intensity-convention visibility (internally sqrt-converted).
    pub fn from_intensity(ports: usize, mu_intensity: f64) -> Result<Self, OpticsError> {
        Ok(Self::uniform(
            ports,
            intensity_to_amplitude_visibility(mu_intensity)?,
        ))
    }

    /// Build from per-port wavepacket vectors: mu_jj' = <w_j|w_j'>. Always
    /// yields a physical (positive semidefinite) visibility matrix.
    pub fn from_wavepackets(vecs: &[Vec<C64>]) -> Self {
        let ports = vecs.len();
        let mut m = vec![C64::ZERO; ports * ports];
        for j in 0..ports {
            let nj: f64 = vecs[j].iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
            for k in 0..ports {
                let nk: f64 = vecs[k].iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
                let dot: C64 = vecs[j]
                    .iter()
                    .zip(&vecs[k])
                    .map(|(a, b)| a.conj() * b)
                    .sum();
                m[j * ports + k] = dot / c(nj * nk);
            }
        }
        VisibilityMatrix { ports, m }
    }

    pub fn full(ports: usize, entries: Vec<C64>) -> Self {
        assert_eq!(entries.len(), ports * ports);
        VisibilityMatrix { ports, m: entries }
    }

    pub fn ports(&self) -> usize {
        self.ports
    }

    pub fn get(&self, j: usize, k: usize) -> C64 {
        self.m[j * self.ports + k]
    }

    fn cache_key(&self) -> Vec<u64> {
        self.m
            .iter()
            .flat_map(|v| [v.re.to_bits(), v.im.to_bits()])
            .collect()
    }
}

/// Amplitude visibility from the intensity convention: sqrt(mu_I).
pub fn intensity_to_amplitude_visibility(mu_i: f64) -> Result<f64, OpticsError> {
    if !(0.0..=1.0).contains(&mu_i) {
        return Err(OpticsError::BadVisibility(mu_i));
    }
    Ok(mu_i.sqrt())
}

/// The balanced 4x4 network of stage-1 plus stage-2 beam splitters:
/// (1/2) [[1,1,1,1],[1,-1,1,-1],[1,1,-1,-1],[1,-1,-1,1]].
pub fn beamsplitter_4x4() -> Vec<C64> {
    let mut v = vec![C64::ZERO; 16];
    for j in 0..4usize {
        for k in 0..4usize {
            let sign = if (j & k).count_ones() % 2 == 0 {
                0.5
            } else {
                -0.5
            };
            v[j * 4 + k] = c(sign);
        }
    }
    v
}

/// The balanced two-mode beam splitter (1/sqrt 2) [[1,1],[1,-1]].
pub fn beamsplitter_2x2() -> Vec<C64> {
    let s = 1.0 / 2.0f64.sqrt();
    vec![c(s), c(s), c(s), c(-s)]
}

fn bs_entry(ports: usize, j: usize, k: usize) -> f64 {
    let mag = 1.0 / (ports as f64).sqrt();
    if (j & k).count_ones() % 2 == 0 {
        mag
    } else {
        -mag
    }
}

/// Optical-switch position: photons either reach the stage-2 detectors
/// (four-port W/GHZ families) or the per-pair Bell detectors.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Routing {
    Stage2,
    BellPairs,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DetectorConfig {
    pub pnr: bool,
    pub routing: Routing,
}

/// A detection POVM element on the input photonic-occupancy basis.
#[derive(Clone, Debug)]
pub struct PovmElement {
    ports: usize,
    pattern: Vec<usize>,
    matrix: Vec<C64>,
}

impl PovmElement {
    pub fn ports(&self) -> usize {
        self.ports
    }

    pub fn dim(&self) -> usize {
        1 << self.ports
    }

    pub fn pattern(&self) -> &[usize] {
        &self.pattern
    }

    pub fn matrix(&self) -> &[C64] {
        &self.matrix
    }

    pub fn entry(&self, r: usize, col: usize) -> C64 {
        self.matrix[r * self.dim() + col]
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim()).map(|i| self.entry(i, i).re).sum()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        hermitian_eigenvalues(&self.matrix, self.dim())
            .into_iter()
            .fold(f64::INFINITY, f64::min)
    }

    pub fn add(&self, other: &PovmElement) -> PovmElement {
        assert_eq!(self.ports, other.ports);
        let matrix = self
            .matrix
            .iter()
            .zip(&other.matrix)
            .map(|(a, b)| a + b)
            .collect();
        PovmElement {
            ports: self.ports,
            pattern: self.pattern.clone(),
            matrix,
        }
    }

    pub fn zero(ports: usize, pattern: Vec<usize>) -> PovmElement {
        let dim = 1usize << ports;
        PovmElement {
            ports,
            pattern,
            matrix: vec![C64::ZERO; dim * dim],
        }
    }

    pub fn identity(ports: usize) -> PovmElement {
        let dim = 1usize << ports;
        let mut matrix = vec![C64::ZERO; dim * dim];
        for i in 0..dim {
            matrix[i * dim + i] = c(1.0);
        }
        PovmElement {
            ports,
            pattern: vec![],
            matrix,
        }
    }
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    let mut items: Vec<usize> = (0..n).collect();
    let mut out = Vec::new();
    heap_permute(&mut items, n, &mut out);
    out
}

fn heap_permute(items: &mut Vec<usize>, k: usize, out: &mut Vec<Vec<usize>>) {
    if k <= 1 {
        out.push(items.clone());
        return;
    }
    for i in 0..k {
        heap_permute(items, k - 1, out);
        if k % 2 == 0 {
            items.swap(i, k - 1);
        } else {
            items.swap(0, k - 1);
        }
    }
}

/// Occupied ports of a basis index, ascending; port 0 is the most
/// significant bit.
fn occupied_ports(index: usize, ports: usize) -> Vec<usize> {
    (0..ports)
        .filter(|j| (index >> (ports - 1 - j)) & 1 == 1)
        .collect()
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|x| x as f64).product::<f64>().max(1.0)
}

/// Generic POVM element for detecting `pattern[k]` photons at detector `k`
/// behind the balanced `ports`-mode network, with pairwise visibilities.
///
/// The entry between occupancy kets with port tuples j and j' is
///
/// (prod_k 1/n_k!) \* sum over assignments sigma, sigma' in S_N of
///   prod_i V\[j_sigma(i)\]\[d_i\] V\[j'_sigma'(i)\]\[d_i\] mu\[j_sigma(i)\]\[j'_sigma'(i)\]
///
/// where d lists each detector repeated by its photon count.
pub fn povm_element(
    ports: usize,
    pattern: &[usize],
    mu: &VisibilityMatrix,
) -> Result<PovmElement, OpticsError> {
    assert_eq!(pattern.len(), ports);
    assert_eq!(mu.ports(), ports);
    let total: usize = pattern.iter().sum();
    if total > ports {
        // more photons than binary-occupancy ports can supply
        return Ok(PovmElement::zero(ports, pattern.to_vec()));
    }
    if let Some(hit) = cache_lookup(ports, pattern, mu) {
        return Ok(hit);
    }
    let dim = 1usize << ports;
    let mut matrix = vec![C64::ZERO; dim * dim];
    if total == 0 {
        matrix[0] = c(1.0); // vacuum projector (index 0 = all ports empty)
    } else {
        let slots: Vec<usize> = pattern
            .iter()
            .enumerate()
            .flat_map(|(k, &n)| std::iter::repeat(k).take(n))
            .collect();
        let perms = permutations(total);
        let prefactor = pattern.iter().map(|&n| 1.0 / factorial(n)).product::<f64>();
        let inputs: Vec<usize> = (0..dim)
            .filter(|&b| b.count_ones() as usize == total)
            .collect();
        for &bi in &inputs {
            let jt = occupied_ports(bi, ports);
            // amplitude per assignment: m_sigma = prod_i V[j_sigma(i)][d_i]
            let amps: Vec<f64> = perms
                .iter()
                .map(|sigma| {
                    (0..total)
                        .map(|i| bs_entry(ports, jt[sigma[i]], slots[i]))
                        .product()
                })
                .collect();
            for &bj in &inputs {
                let jpt = occupied_ports(bj, ports);
                let amps_p: Vec<f64> = perms
                    .iter()
                    .map(|sigma| {
                        (0..total)
                            .map(|i| bs_entry(ports, jpt[sigma[i]], slots[i]))
                            .product()
                    })
                    .collect();
                let mut acc = C64::ZERO;
                for (si, sigma) in perms.iter().enumerate() {
                    if amps[si] == 0.0 {
                        continue;
                    }
                    for (sj, sigma_p) in perms.iter().enumerate() {
                        if amps_p[sj] == 0.0 {
                            continue;
                        }
                        let mut vis = c(1.0);
                        for i in 0..total {
                            vis *= mu.get(jt[sigma[i]], jpt[sigma_p[i]]);
                        }
                        acc += c(amps[si] * amps_p[sj]) * vis;
                    }
                }
                matrix[bi * dim + bj] = c(prefactor) * acc;
            }
        }
    }
    let el = PovmElement {
        ports,
        pattern: pattern.to_vec(),
        matrix,
    };
    cache_store(ports, pattern, mu, &el);
    Ok(el)
}

type CacheKey = (usize, Vec<usize>, Vec<u64>);

fn cache() -> &'static RwLock<HashMap<CacheKey, Arc<PovmElement>>> {
    use std::sync::OnceLock;
    static CACHE: OnceLock<RwLock<HashMap<CacheKey, Arc<PovmElement>>>> = OnceLock::new();
    CACHE.get_or_init(|| RwLock::new(HashMap::new()))
}

fn cache_lookup(ports: usize, pattern: &[usize], mu: &VisibilityMatrix) -> Option<PovmElement> {
    let key = (ports, pattern.to_vec(), mu.cache_key());
    cache()
        .read()
        .ok()
        .and_then(|c| c.get(&key).map(|e| (**e).clone()))
}

fn cache_store(ports: usize, pattern: &[usize], mu: &VisibilityMatrix, el: &PovmElement) {
    let key = (ports, pattern.to_vec(), mu.cache_key());
    if let Ok(mut c) = cache().write() {
        c.insert(key, Arc::new(el.clone()));
    }
}

/// W-family element: n photons at detector `k`, none elsewhere.
pub fn w_povm(k: usize, n: usize, mu: &VisibilityMatrix) -> Result<PovmElement, OpticsError> {
    if !(1..=4).contains(&n) {
        return Err(OpticsError::BadPhotonCount(n));
    }
    if k >= 4 {
        return Err(OpticsError::UnsupportedPattern(vec![k]));
    }
    let mut pattern = vec![0usize; 4];
    pattern[k] = n;
    povm_element(4, &pattern, mu)
}

/// The six count patterns a detector pair can register with at most four
/// photons in total.
pub const GHZ_PAIR_COUNTS: [(usize, usize); 6] = [(1, 1), (1, 2), (2, 1), (2, 2), (1, 3), (3, 1)];

/// The six detector pairs of the raw-GHZ heralding patterns.
pub const DETECTOR_PAIRS: [(usize, usize); 6] = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];

/// GHZ-family element: `counts.0` photons at detector `pair.0` and
/// `counts.1` at `pair.1`.
pub fn ghz_povm(
    pair: (usize, usize),
    counts: (usize, usize),
    mu: &VisibilityMatrix,
) -> Result<PovmElement, OpticsError> {
    if pair.0 >= 4 || pair.1 >= 4 || pair.0 == pair.1 {
        return Err(OpticsError::BadDetectorPair(pair.0, pair.1));
    }
    if !GHZ_PAIR_COUNTS.contains(&(counts.0, counts.1)) {
        return Err(OpticsError::UnsupportedPattern(vec![counts.0, counts.1]));
    }
    let mut pattern = vec![0usize; 4];
    pattern[pair.0] = counts.0;
    pattern[pair.1] = counts.1;
    povm_element(4, &pattern, mu)
}

/// The six Bell-bank elements {E00, E10, E01, E11, E20, E02} for a scalar
/// pairwise visibility; they sum to the identity on the two-port space.
pub fn bell_povm_set(mu: f64) -> Result<Vec<PovmElement>, OpticsError> {
    if mu.abs() > 1.0 {
        return Err(OpticsError::BadVisibility(mu));
    }
    let vis = VisibilityMatrix::uniform(2, mu);
    let patterns: [[usize; 2]; 6] = [[0, 0], [1, 0], [0, 1], [1, 1], [2, 0], [0, 2]];
    patterns
        .iter()
        .map(|p| povm_element(2, p, &vis))
        .collect()
}

/// Collapse per-count elements into the observed click element: the exact
/// count for PNR detectors, or the sum over all counts for threshold
/// detectors.
pub fn click_povm(elements: &[PovmElement], pnr: bool) -> Result<PovmElement, OpticsError> {
    if elements.is_empty() {
        return Err(OpticsError::EmptyElementSet);
    }
    if pnr {
        Ok(elements[0].clone())
    } else {
        let mut acc = elements[0].clone();
        for e in &elements[1..] {
            acc = acc.add(e);
        }
        Ok(acc)
    }
}

/// Threshold-detector click sum for a single W-family detector: one or more
/// photons at detector `k`, none elsewhere.
pub fn w_click_sum(k: usize, mu: &VisibilityMatrix) -> Result<PovmElement, OpticsError> {
    let els: Vec<PovmElement> = (1..=4)
        .map(|n| w_povm(k, n, mu))
        .collect::<Result<_, _>>()?;
    click_povm(&els, false)
}

/// Threshold-detector click sum for a GHZ detector pair: all six count
/// splittings of up to four photons across the pair.
pub fn ghz_pair_click_sum(
    pair: (usize, usize),
    mu: &VisibilityMatrix,
) -> Result<PovmElement, OpticsError> {
    let els: Vec<PovmElement> = GHZ_PAIR_COUNTS
        .iter()
        .map(|&cts| ghz_povm(pair, cts, mu))
        .collect::<Result<_, _>>()?;
    click_povm(&els, false)
}

/// Two-or-more photons bunched at a single stage-2 detector. Single-photon
/// events are excluded, so a lost photon cannot fake this pattern.
pub fn bunched_click_sum(k: usize, mu: &VisibilityMatrix) -> Result<PovmElement, OpticsError> {
    let els: Vec<PovmElement> = (2..=4)
        .map(|n| w_povm(k, n, mu))
        .collect::<Result<_, _>>()?;
    click_povm(&els, false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::Rng;
    use rand::SeedableRng;

    #[test]
    fn beamsplitter_unitary_and_columns() {
        let v = beamsplitter_4x4();
        // V V^dag = I
        for i in 0..4 {
            for j in 0..4 {
                let mut acc = C64::ZERO;
                for k in 0..4 {
                    acc += v[i * 4 + k] * v[j * 4 + k].conj();
                }
                let expect = if i == j { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(acc.re, expect, epsilon = 1e-15);
                assert_abs_diff_eq!(acc.im, 0.0, epsilon = 1e-15);
            }
        }
        // column 0 all +1/2, column 1 alternating (-1)^j / 2
        for j in 0..4 {
            assert_abs_diff_eq!(v[j * 4].re, 0.5, epsilon = 1e-15);
            let expect = if j % 2 == 0 { 0.5 } else { -0.5 };
            assert_abs_diff_eq!(v[j * 4 + 1].re, expect, epsilon = 1e-15);
        }
    }

    #[test]
    fn w_povm_single_photon_ideal() {
        let mu = VisibilityMatrix::uniform(4, 1.0);
        let e = w_povm(0, 1, &mu).unwrap();
        // trace 1, rank 1 with eigenvector on the symmetric single-photon
        // combination
        assert_abs_diff_eq!(e.trace(), 1.0, epsilon = 1e-12);
        let singles = [0b1000usize, 0b0100, 0b0010, 0b0001];
        for &a in &singles {
            for &b in &singles {
                assert_abs_diff_eq!(e.entry(a, b).re, 0.25, epsilon = 1e-12);
            }
        }
        let ev = hermitian_eigenvalues(e.matrix(), 16);
        assert_abs_diff_eq!(ev[15], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(ev[14], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn w_povm_distinguishable_photons() {
        let mu = VisibilityMatrix::uniform(4, 0.0);
        let e = w_povm(0, 1, &mu).unwrap();
        let singles = [0b1000usize, 0b0100, 0b0010, 0b0001];
        for &a in &singles {
            for &b in &singles {
                let expect = if a == b { 0.25 } else { 0.0 };
                assert_abs_diff_eq!(e.entry(a, b).re, expect, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn w_povm_two_photon_diagonal() {
        // ordered-pair symmetrization: diagonal entry 1/8 at full visibility
        let mu = VisibilityMatrix::uniform(4, 1.0);
        let e = w_povm(0, 2, &mu).unwrap();
        for b in 0..16usize {
            if b.count_ones() == 2 {
                assert_abs_diff_eq!(e.entry(b, b).re, 1.0 / 8.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn w_povm_rejects_bad_count() {
        let mu = VisibilityMatrix::uniform(4, 1.0);
        assert!(w_povm(0, 0, &mu).is_err());
        assert!(w_povm(0, 5, &mu).is_err());
    }

    #[test]
    fn ghz_22_supported_only_on_full_occupancy() {
        let mu = VisibilityMatrix::uniform(4, 0.9);
        let e = ghz_povm((0, 1), (2, 2), &mu).unwrap();
        for r in 0..16 {
            for cc in 0..16 {
                if r != 15 || cc != 15 {
                    assert_abs_diff_eq!(e.entry(r, cc).norm(), 0.0, epsilon = 1e-14);
                }
            }
        }
        assert!(e.entry(15, 15).re > 0.0);
    }

    #[test]
    fn ghz_povm_rejects_unsupported() {
        let mu = VisibilityMatrix::uniform(4, 1.0);
        assert!(ghz_povm((0, 0), (1, 1), &mu).is_err());
        assert!(ghz_povm((0, 1), (4, 1), &mu).is_err());
    }

    #[test]
    fn bell_set_matches_closed_forms() {
        for &mu in &[0.0, 0.5, 0.95, 1.0] {
            let set = bell_povm_set(mu).unwrap();
            let (e00, e10, e01, e11, e20, e02) =
                (&set[0], &set[1], &set[2], &set[3], &set[4], &set[5]);
            // occupancy basis |m0 m1>: index 1 = |01>, 2 = |10>
            assert_abs_diff_eq!(e00.entry(0, 0).re, 1.0, epsilon = 1e-14);
            assert_abs_diff_eq!(e10.entry(2, 2).re, 0.5, epsilon = 1e-14);
            assert_abs_diff_eq!(e10.entry(2, 1).re, 0.5 * mu, epsilon = 1e-14);
            assert_abs_diff_eq!(e01.entry(2, 1).re, -0.5 * mu, epsilon = 1e-14);
            assert_abs_diff_eq!(
                e11.entry(3, 3).re,
                0.5 * (1.0 - mu * mu),
                epsilon = 1e-14
            );
            assert_abs_diff_eq!(
                e20.entry(3, 3).re,
                0.25 * (1.0 + mu * mu),
                epsilon = 1e-14
            );
            assert_abs_diff_eq!(
                e02.entry(3, 3).re,
                0.25 * (1.0 + mu * mu),
                epsilon = 1e-14
            );
            // completeness to 1e-12
            let mut total = PovmElement::zero(2, vec![]);
            for e in &set {
                total = total.add(e);
            }
            for r in 0..4 {
                for cc in 0..4 {
                    let expect = if r == cc { 1.0 } else { 0.0 };
                    assert_abs_diff_eq!(total.entry(r, cc).re, expect, epsilon = 1e-12);
                    assert_abs_diff_eq!(total.entry(r, cc).im, 0.0, epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn single_photon_completeness_random_visibilities() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        for _ in 0..100 {
            let vecs: Vec<Vec<C64>> = (0..4)
                .map(|_| {
                    (0..5)
                        .map(|_| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
                        .collect()
                })
                .collect();
            let mu = VisibilityMatrix::from_wavepackets(&vecs);
            let mut total = PovmElement::zero(4, vec![]);
            for k in 0..4 {
                total = total.add(&w_povm(k, 1, &mu).unwrap());
            }
            for b in 0..16usize {
                if b.count_ones() == 1 {
                    assert_abs_diff_eq!(total.entry(b, b).re, 1.0, epsilon = 1e-12);
                }
            }
            for r in 0..16usize {
                for cc in 0..16usize {
                    if r != cc && r.count_ones() == 1 && cc.count_ones() == 1 {
                        assert_abs_diff_eq!(total.entry(r, cc).norm(), 0.0, epsilon = 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn full_pattern_completeness_every_sector() {
        // over all detection patterns with N photons the elements resolve
        // the identity on the N-photon occupancy sector
        let mu = VisibilityMatrix::uniform(4, 0.83);
        for total in 1..=4usize {
            let mut acc = PovmElement::zero(4, vec![]);
            for n0 in 0..=total {
                for n1 in 0..=(total - n0) {
                    for n2 in 0..=(total - n0 - n1) {
                        let n3 = total - n0 - n1 - n2;
                        let e = povm_element(4, &[n0, n1, n2, n3], &mu).unwrap();
                        acc = acc.add(&e);
                    }
                }
            }
            for r in 0..16usize {
                for cc in 0..16usize {
                    let expect = if r == cc && r.count_ones() as usize == total {
                        1.0
                    } else if r.count_ones() as usize == total
                        && cc.count_ones() as usize == total
                    {
                        0.0
                    } else {
                        continue;
                    };
                    assert_abs_diff_eq!(acc.entry(r, cc).re, expect, epsilon = 1e-11);
                    assert_abs_diff_eq!(acc.entry(r, cc).im, 0.0, epsilon = 1e-11);
                }
            }
        }
    }

    #[test]
    fn all_elements_psd_for_physical_visibilities() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for trial in 0..100 {
            let vecs: Vec<Vec<C64>> = (0..4)
                .map(|_| {
                    (0..4)
                        .map(|_| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
                        .collect()
                })
                .collect();
            let mu = VisibilityMatrix::from_wavepackets(&vecs);
            for k in 0..4 {
                for n in 1..=4 {
                    let e = w_povm(k, n, &mu).unwrap();
                    assert!(
                        e.min_eigenvalue() > -1e-10,
                        "W element ({k},{n}) not PSD in trial {trial}"
                    );
                }
            }
            for &pair in &DETECTOR_PAIRS {
                for &cts in &GHZ_PAIR_COUNTS {
                    let e = ghz_povm(pair, cts, &mu).unwrap();
                    assert!(e.min_eigenvalue() > -1e-10, "GHZ element not PSD");
                }
            }
        }
    }

    #[test]
    fn intensity_conversion() {
        assert_abs_diff_eq!(
            intensity_to_amplitude_visibility(1.0).unwrap(),
            1.0,
            epsilon = 0.0
        );
        assert_abs_diff_eq!(
            intensity_to_amplitude_visibility(0.95).unwrap(),
            0.974679,
            epsilon = 1e-6
        );
        assert_abs_diff_eq!(
            intensity_to_amplitude_visibility(0.9025).unwrap(),
            0.95,
            epsilon = 1e-12
        );
        assert!(intensity_to_amplitude_visibility(1.5).is_err());
    }

    #[test]
    fn click_povm_modes() {
        let mu = VisibilityMatrix::uniform(4, 1.0);
        let els: Vec<PovmElement> = (1..=4).map(|n| w_povm(0, n, &mu).unwrap()).collect();
        let pnr = click_povm(&els, true).unwrap();
        assert_abs_diff_eq!(pnr.trace(), els[0].trace(), epsilon = 1e-14);
        let sum = click_povm(&els, false).unwrap();
        let expect: f64 = els.iter().map(|e| e.trace()).sum();
        assert_abs_diff_eq!(sum.trace(), expect, epsilon = 1e-12);
        assert!(click_povm(&[], true).is_err());
    }

    #[test]
    fn e2200_prefactor_against_formula() {
        // full-occupancy diagonal weight at mu=1 is (sum over S4 pairs of
        // signs)/2^10; the four-photon same-detector case is 576/6144 = 3/32
        let mu = VisibilityMatrix::uniform(4, 1.0);
        let e = w_povm(0, 4, &mu).unwrap();
        assert_abs_diff_eq!(e.entry(15, 15).re, 3.0 / 32.0, epsilon = 1e-13);
    }
}
