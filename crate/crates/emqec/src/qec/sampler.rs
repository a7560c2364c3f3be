//! Chronological sampling of the tabular superoperator over the toric
//! lattice, syndrome assembly and decoding.

use super::lattice::{SubRound, ToricLattice};
use super::uf::{union_find_decode, DecodingGraph, EdgeKind, GraphEdge};
use super::QecError;
use crate::pauli::PauliOp;
use crate::seeding::derive_seed;
use crate::superop::{StabBasis, SuperoperatorTable};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// Mapping of the four sequential sub-rounds onto decoder time layers: one
/// layer per full cycle, or sub-round-resolved space-time (diagonal) edges.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum TimeLayering {
    #[default]
    PerCycle,
    PerSubRound,
}

#[derive(Clone, Copy, Debug)]
pub struct QecConfig {
    pub distance: usize,
    pub rounds: usize,
    pub layering: TimeLayering,
}

impl QecConfig {
    pub fn new(distance: usize) -> Self {
        QecConfig {
            distance,
            rounds: distance,
            layering: TimeLayering::default(),
        }
    }
}

/// One sampled table row in compact form: per-slot X/Z components as bit
/// masks over the four data slots.
#[derive(Clone, Copy, Debug)]
pub struct SampledRow {
    pub xmask: u8,
    pub zmask: u8,
    pub ghz_success: bool,
    pub flip: bool,
}

#[derive(Clone, Debug)]
struct RowDist {
    rows: Vec<SampledRow>,
    cum: Vec<f64>,
}

impl RowDist {
    fn sample(&self, rng: &mut ChaCha8Rng) -> SampledRow {
        let u: f64 = rng.random();
        let idx = match self
            .cum
            .binary_search_by(|c| c.partial_cmp(&u).expect("finite weights"))
        {
            Ok(i) => i + 1,
            Err(i) => i,
        };
        self.rows[idx.min(self.rows.len() - 1)]
    }
}

/// Per-basis row distributions and decoder weights compiled from a table.
#[derive(Clone, Debug)]
pub struct CompiledTable {
    vertex: RowDist,
    plaq: RowDist,
    /// Per-cycle marginal that a data qubit picks up an anticommuting
    /// component, per graph.
    pub p_space_vertex_graph: f64,
    pub p_space_plaq_graph: f64,
    pub p_time_vertex: f64,
    pub p_time_plaq: f64,
}

impl CompiledTable {
    pub fn compile(table: &SuperoperatorTable) -> Result<CompiledTable, QecError> {
        let build = |basis: StabBasis| -> Result<RowDist, QecError> {
            let mut rows = Vec::new();
            let mut cum = Vec::new();
            let mut acc = 0.0;
            for r in table.rows_for(basis) {
                let mut xmask = 0u8;
                let mut zmask = 0u8;
                for (i, op) in r.pauli.ops.iter().enumerate() {
                    match op {
                        PauliOp::X => xmask |= 1 << i,
                        PauliOp::Z => zmask |= 1 << i,
                        PauliOp::Y => {
                            xmask |= 1 << i;
                            zmask |= 1 << i;
                        }
                        PauliOp::I => {}
                    }
                }
                acc += r.probability;
                rows.push(SampledRow {
                    xmask,
                    zmask,
                    ghz_success: r.ghz_success,
                    flip: r.meas_error,
                });
                cum.push(acc);
            }
            if (acc - 1.0).abs() > 1e-6 {
                return Err(QecError::BadTable(basis.as_str(), acc));
            }
            // normalize the cumulative to exactly one
            for c in &mut cum {
                *c /= acc;
            }
            Ok(RowDist { rows, cum })
        };
        let vertex = build(StabBasis::X)?;
        let plaq = build(StabBasis::Z)?;
        // a data qubit is acted on by two vertex rows and two plaquette rows
        // per full cycle
        let m_xv = table.slot_marginal(StabBasis::X, PauliOp::Z); // X-ish comps
        let m_xz = table.slot_marginal(StabBasis::Z, PauliOp::Z);
        let m_zv = table.slot_marginal(StabBasis::X, PauliOp::X); // Z-ish comps
        let m_zz = table.slot_marginal(StabBasis::Z, PauliOp::X);
        let combine =
            |a: f64, b: f64| -> f64 { 1.0 - (1.0 - a) * (1.0 - a) * (1.0 - b) * (1.0 - b) };
        Ok(CompiledTable {
            vertex,
            plaq,
            // plaquette graph detects X components, vertex graph Z components
            p_space_plaq_graph: combine(m_xv, m_xz),
            p_space_vertex_graph: combine(m_zv, m_zz),
            p_time_vertex: table.flip_marginal(StabBasis::X),
            p_time_plaq: table.flip_marginal(StabBasis::Z),
        })
    }
}

fn clamp_p(p: f64) -> f64 {
    p.clamp(1e-12, 0.499)
}

struct GraphSide {
    graph: DecodingGraph,
    weights: Vec<u32>,
    /// incoming time-edge index per node (connecting it to the previous
    /// layer); usize::MAX for the first layer
    time_in: Vec<usize>,
    w_stale: u32,
    d2: usize,
}

pub struct QecRunner {
    pub lat: ToricLattice,
    pub cfg: QecConfig,
    compiled: CompiledTable,
    vertex_side: GraphSide,
    plaq_side: GraphSide,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct ShotOutcome {
    pub failure: bool,
    pub class_x: [bool; 2],
    pub class_z: [bool; 2],
}

impl QecRunner {
    pub fn new(cfg: QecConfig, table: &SuperoperatorTable) -> Result<QecRunner, QecError> {
        if cfg.rounds == 0 {
            return Err(QecError::BadRounds);
        }
        let lat = ToricLattice::new(cfg.distance)?;
        let compiled = CompiledTable::compile(table)?;
        let vertex_side = build_graph(
            &lat,
            cfg,
            compiled.p_space_vertex_graph,
            compiled.p_time_vertex,
            true,
        );
        let plaq_side = build_graph(
            &lat,
            cfg,
            compiled.p_space_plaq_graph,
            compiled.p_time_plaq,
            false,
        );
        Ok(QecRunner {
            lat,
            cfg,
            compiled,
            vertex_side,
            plaq_side,
        })
    }

    pub fn run_shot(&self, rng: &mut ChaCha8Rng) -> ShotOutcome {
        let d2 = self.lat.n_stabilizers_per_type();
        let rounds = self.cfg.rounds;
        let layers = rounds + 1;
        let mut frame_x = vec![false; self.lat.n_edges];
        let mut frame_z = vec![false; self.lat.n_edges];
        let mut prev_vertex = vec![false; d2];
        let mut prev_plaq = vec![false; d2];
        let mut defects_vertex = vec![false; d2 * layers];
        let mut defects_plaq = vec![false; d2 * layers];
        let mut stale_vertex: Vec<(usize, usize)> = Vec::new();
        let mut stale_plaq: Vec<(usize, usize)> = Vec::new();

        for t in 0..rounds {
            for sub in [SubRound::X1, SubRound::X2] {
                for s in 0..d2 {
                    if self.lat.vertex_round[s] != sub {
                        continue;
                    }
                    let row = self.compiled.vertex.sample(rng);
                    let edges = &self.lat.vertex_edges[s];
                    if row.ghz_success {
                        let parity = edges.iter().filter(|&&e| frame_z[e]).count() % 2 == 1;
                        let outcome = parity ^ row.flip;
                        defects_vertex[t * d2 + s] = outcome != prev_vertex[s];
                        prev_vertex[s] = outcome;
                    } else {
                        stale_vertex.push((s, t));
                    }
                    apply_row(&row, edges, &mut frame_x, &mut frame_z);
                }
            }
            for sub in [SubRound::Z1, SubRound::Z2] {
                for s in 0..d2 {
                    if self.lat.plaq_round[s] != sub {
                        continue;
                    }
                    let row = self.compiled.plaq.sample(rng);
                    let edges = &self.lat.plaq_edges[s];
                    if row.ghz_success {
                        let parity = edges.iter().filter(|&&e| frame_x[e]).count() % 2 == 1;
                        let outcome = parity ^ row.flip;
                        defects_plaq[t * d2 + s] = outcome != prev_plaq[s];
                        prev_plaq[s] = outcome;
                    } else {
                        stale_plaq.push((s, t));
                    }
                    apply_row(&row, edges, &mut frame_x, &mut frame_z);
                }
            }
        }
        // closing noiseless readout layer
        for s in 0..d2 {
            let parity = self.lat.vertex_edges[s]
                .iter()
                .filter(|&&e| frame_z[e])
                .count()
                % 2
                == 1;
            defects_vertex[rounds * d2 + s] = parity != prev_vertex[s];
            let parity = self.lat.plaq_edges[s]
                .iter()
                .filter(|&&e| frame_x[e])
                .count()
                % 2
                == 1;
            defects_plaq[rounds * d2 + s] = parity != prev_plaq[s];
        }

        let corr_z = decode_side(&self.vertex_side, &defects_vertex, &stale_vertex);
        let corr_x = decode_side(&self.plaq_side, &defects_plaq, &stale_plaq);
        for e in corr_z {
            frame_z[e] = !frame_z[e];
        }
        for e in corr_x {
            frame_x[e] = !frame_x[e];
        }
        // net frame must now be syndrome-free
        debug_assert!({
            (0..d2).all(|s| {
                self.lat.vertex_edges[s].iter().filter(|&&e| frame_z[e]).count() % 2 == 0
                    && self.lat.plaq_edges[s].iter().filter(|&&e| frame_x[e]).count() % 2 == 0
            })
        });
        let class_x = self.lat.x_class(&frame_x);
        let class_z = self.lat.z_class(&frame_z);
        ShotOutcome {
            failure: class_x[0] || class_x[1] || class_z[0] || class_z[1],
            class_x,
            class_z,
        }
    }
}

fn apply_row(row: &SampledRow, edges: &[usize; 4], frame_x: &mut [bool], frame_z: &mut [bool]) {
    for (i, &e) in edges.iter().enumerate() {
        if row.xmask & (1 << i) != 0 {
            frame_x[e] = !frame_x[e];
        }
        if row.zmask & (1 << i) != 0 {
            frame_z[e] = !frame_z[e];
        }
    }
}

fn build_graph(
    lat: &ToricLattice,
    cfg: QecConfig,
    p_space: f64,
    p_time: f64,
    vertex_graph: bool,
) -> GraphSide {
    let d2 = lat.n_stabilizers_per_type();
    let layers = cfg.rounds + 1;
    let n_nodes = d2 * layers;
    let lp_space = -clamp_p(p_space).ln();
    let lp_time = -clamp_p(p_time).ln();
    // integer scaling: the cheapest edge gets weight >= 8
    let kappa = 8.0 / lp_space.min(lp_time);
    let w_space = (kappa * lp_space).round().max(8.0) as u32;
    let w_time = (kappa * lp_time).round().max(8.0) as u32;
    let w_stale = ((kappa * -(1e-12f64).ln()).round() as u32).max(w_time * 4);

    let incidence: &Vec<[usize; 2]> = if vertex_graph {
        &lat.edge_vertices
    } else {
        &lat.edge_plaqs
    };
    let round_of = |s: usize| -> SubRound {
        if vertex_graph {
            lat.vertex_round[s]
        } else {
            lat.plaq_round[s]
        }
    };
    let is_early = |s: usize| matches!(round_of(s), SubRound::X1 | SubRound::Z1);

    let mut edges = Vec::new();
    for layer in 0..layers {
        for (eid, pair) in incidence.iter().enumerate() {
            match cfg.layering {
                TimeLayering::PerCycle => edges.push(GraphEdge {
                    u: layer * d2 + pair[0],
                    v: layer * d2 + pair[1],
                    kind: EdgeKind::Space(eid),
                }),
                TimeLayering::PerSubRound => {
                    // error before the early half: both stabs see it this
                    // cycle; error between the halves: the early one sees it
                    // only next cycle
                    let (early, late) = if is_early(pair[0]) {
                        (pair[0], pair[1])
                    } else {
                        (pair[1], pair[0])
                    };
                    edges.push(GraphEdge {
                        u: layer * d2 + early,
                        v: layer * d2 + late,
                        kind: EdgeKind::Space(eid),
                    });
                    if layer + 1 < layers {
                        edges.push(GraphEdge {
                            u: layer * d2 + late,
                            v: (layer + 1) * d2 + early,
                            kind: EdgeKind::Space(eid),
                        });
                    }
                }
            }
        }
    }
    let mut time_in = vec![usize::MAX; n_nodes];
    for layer in 0..layers - 1 {
        for s in 0..d2 {
            let idx = edges.len();
            edges.push(GraphEdge {
                u: layer * d2 + s,
                v: (layer + 1) * d2 + s,
                kind: EdgeKind::Time,
            });
            time_in[(layer + 1) * d2 + s] = idx;
        }
    }
    let weights: Vec<u32> = edges
        .iter()
        .map(|e| match e.kind {
            EdgeKind::Space(_) => w_space,
            EdgeKind::Time => w_time,
        })
        .collect();
    GraphSide {
        graph: DecodingGraph::new(n_nodes, edges),
        weights,
        time_in,
        w_stale,
        d2,
    }
}

fn decode_side(side: &GraphSide, defects: &[bool], stale: &[(usize, usize)]) -> Vec<usize> {
    let correction_edges = if stale.is_empty() {
        union_find_decode(&side.graph, defects, &side.weights)
    } else {
        let mut patched = side.weights.clone();
        for &(s, t) in stale {
            // a stale layer carries no fresh syndrome information; its
            // incoming time edge is made expensive
            let node = t * side.d2 + s;
            let ei = side.time_in[node];
            if ei != usize::MAX {
                patched[ei] = side.w_stale;
            }
        }
        union_find_decode(&side.graph, defects, &patched)
    };
    let mut out = Vec::new();
    for ei in correction_edges {
        if let EdgeKind::Space(eid) = side.graph.edges[ei].kind {
            out.push(eid);
        }
    }
    out
}

/// Monte-Carlo logical error rate: failures/n_shots with the binomial
/// standard error, embarrassingly parallel over counter-derived seeds.
pub fn logical_error_rate(
    runner: &QecRunner,
    n_shots: u64,
    master_seed: u64,
) -> (f64, f64, u64) {
    let failures: u64 = (0..n_shots)
        .into_par_iter()
        .map(|shot| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(master_seed, shot));
            runner.run_shot(&mut rng).failure as u64
        })
        .sum();
    let p = failures as f64 / n_shots as f64;
    let sigma = (p * (1.0 - p) / n_shots as f64).sqrt();
    (p, sigma, failures)
}

/// Decode a single perfect-measurement round with uniform weights; returns
/// the data-edge correction. Used for comparisons against minimum-weight
/// oracles at small distances.
pub fn decode_single_layer(
    lat: &ToricLattice,
    vertex_graph: bool,
    defects: &[bool],
) -> Vec<usize> {
    let incidence = if vertex_graph {
        &lat.edge_vertices
    } else {
        &lat.edge_plaqs
    };
    let edges: Vec<GraphEdge> = incidence
        .iter()
        .enumerate()
        .map(|(eid, pair)| GraphEdge {
            u: pair[0],
            v: pair[1],
            kind: EdgeKind::Space(eid),
        })
        .collect();
    let graph = DecodingGraph::new(lat.n_stabilizers_per_type(), edges);
    let weights = vec![8u32; graph.edges.len()];
    union_find_decode(&graph, defects, &weights)
        .into_iter()
        .filter_map(|ei| match graph.edges[ei].kind {
            EdgeKind::Space(eid) => Some(eid),
            EdgeKind::Time => None,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pauli::PauliString;
    use crate::superop::{StabBasis, SuperRow, SuperoperatorTable, TableMeta};

    fn meta() -> TableMeta {
        TableMeta {
            schema: crate::SCHEMA_VERSION.to_string(),
            protocol: "synthetic".to_string(),
            p: 0.0,
            cutoff_percentile: 1.0,
            t_cut: 1.0,
            p_ghz_within_cutoff: 1.0,
            ghz_fidelity: 1.0,
            attempt_success_prob: 1.0,
            seed: 0,
            params_digest: String::new(),
        }
    }

    fn synthetic_table(rows_per_basis: Vec<(&str, bool, bool, f64)>) -> SuperoperatorTable {
        let mut rows = Vec::new();
        for basis in [StabBasis::Z, StabBasis::X] {
            for (pauli, ghz, flip, p) in &rows_per_basis {
                rows.push(SuperRow {
                    basis,
                    pauli: PauliString::from_str(pauli).unwrap(),
                    ghz_success: *ghz,
                    meas_error: *flip,
                    probability: *p,
                });
            }
        }
        SuperoperatorTable { rows, meta: meta() }
    }

    #[test]
    fn noiseless_table_never_fails() {
        let table = synthetic_table(vec![("IIII", true, false, 1.0)]);
        let runner = QecRunner::new(QecConfig::new(4), &table).unwrap();
        let (p_l, sigma, fails) = logical_error_rate(&runner, 500, 11);
        assert_eq!(fails, 0);
        assert_eq!(p_l, 0.0);
        assert_eq!(sigma, 0.0);
    }

    #[test]
    fn sampling_frequencies_match_weights() {
        let table = synthetic_table(vec![
            ("IIII", true, false, 0.7),
            ("XIII", true, false, 0.3),
        ]);
        let compiled = CompiledTable::compile(&table).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 10_000;
        let mut hits = 0;
        for _ in 0..n {
            if compiled.plaq.sample(&mut rng).xmask != 0 {
                hits += 1;
            }
        }
        let freq = hits as f64 / n as f64;
        let sigma = (0.3f64 * 0.7 / n as f64).sqrt();
        assert!((freq - 0.3).abs() < 3.0 * sigma, "freq {freq}");
    }

    #[test]
    fn fail_rows_reuse_previous_outcome() {
        // all-fail table: outcomes never refresh, so apart from the closing
        // layer no defects appear and nothing fails
        let table = synthetic_table(vec![("IIII", false, false, 1.0)]);
        let runner = QecRunner::new(QecConfig::new(4), &table).unwrap();
        let (p_l, _, _) = logical_error_rate(&runner, 200, 3);
        assert_eq!(p_l, 0.0);
    }

    #[test]
    fn pure_measurement_flips_never_corrupt_data() {
        // outcome flips alone leave the data frame clean; the decoder must
        // attribute everything to measurement errors
        let table = synthetic_table(vec![
            ("IIII", true, false, 0.5),
            ("IIII", true, true, 0.5),
        ]);
        let runner = QecRunner::new(QecConfig::new(4), &table).unwrap();
        let (p_l, _, _) = logical_error_rate(&runner, 300, 21);
        assert_eq!(p_l, 0.0);
    }

    #[test]
    fn information_free_syndromes_randomize_classes() {
        // data noise with 50% outcome flips: syndromes carry no usable
        // information and each logical class approaches 1/2
        let table = synthetic_table(vec![
            ("XIII", true, false, 0.2),
            ("XIII", true, true, 0.2),
            ("ZIII", true, false, 0.2),
            ("ZIII", true, true, 0.2),
            ("IIII", true, false, 0.1),
            ("IIII", true, true, 0.1),
        ]);
        let runner = QecRunner::new(QecConfig::new(4), &table).unwrap();
        let n = 2000u64;
        let mut class_counts = [0u64; 4];
        for shot in 0..n {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(17, shot));
            let out = runner.run_shot(&mut rng);
            class_counts[0] += out.class_x[0] as u64;
            class_counts[1] += out.class_x[1] as u64;
            class_counts[2] += out.class_z[0] as u64;
            class_counts[3] += out.class_z[1] as u64;
        }
        for c in class_counts {
            let f = c as f64 / n as f64;
            assert!((f - 0.5).abs() < 0.06, "class rate {f} not near 1/2");
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let table = synthetic_table(vec![
            ("IIII", true, false, 0.93),
            ("XIII", true, false, 0.02),
            ("IZII", true, false, 0.02),
            ("IIII", true, true, 0.02),
            ("IIII", false, false, 0.01),
        ]);
        let runner = QecRunner::new(QecConfig::new(4), &table).unwrap();
        let a: Vec<bool> = (0..200)
            .map(|shot| {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(99, shot));
                runner.run_shot(&mut rng).failure
            })
            .collect();
        let b: Vec<bool> = (0..200)
            .map(|shot| {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(99, shot));
                runner.run_shot(&mut rng).failure
            })
            .collect();
        assert_eq!(a, b);
        let (p1, _, f1) = logical_error_rate(&runner, 500, 42);
        let (p2, _, f2) = logical_error_rate(&runner, 500, 42);
        assert_eq!(f1, f2);
        assert_eq!(p1, p2);
    }

    #[test]
    fn single_data_error_is_corrected() {
        // one X error on one data qubit in a single perfect layer
        let lat = ToricLattice::new(4).unwrap();
        for edge in 0..lat.n_edges {
            let mut defects = vec![false; 16];
            for &p in &lat.edge_plaqs[edge] {
                defects[p] = !defects[p];
            }
            let correction = decode_single_layer(&lat, false, &defects);
            let mut frame = vec![false; lat.n_edges];
            frame[edge] = true;
            for e in correction {
                frame[e] = !frame[e];
            }
            // corrected frame must be a stabilizer cycle of trivial class
            for s in 0..16 {
                let par = lat.plaq_edges[s].iter().filter(|&&e| frame[e]).count() % 2;
                assert_eq!(par, 0);
            }
            let class = lat.x_class(&frame);
            assert!(!class[0] && !class[1], "single error must decode trivially");
        }
    }

    #[test]
    fn sub_threshold_scaling_with_synthetic_noise() {
        let table = synthetic_table(vec![
            ("IIII", true, false, 0.9266),
            ("XIII", true, false, 0.004),
            ("IXII", true, false, 0.004),
            ("IIXI", true, false, 0.004),
            ("IIIX", true, false, 0.004),
            ("ZIII", true, false, 0.004),
            ("IZII", true, false, 0.004),
            ("IIZI", true, false, 0.004),
            ("IIIZ", true, false, 0.004),
            ("IIII", true, true, 0.03),
            ("IIII", false, false, 0.0114),
        ]);
        let shots = 4000u64;
        let mut rates = Vec::new();
        for d in [4usize, 6] {
            let runner = QecRunner::new(QecConfig::new(d), &table).unwrap();
            let (p_l, sigma, _) = logical_error_rate(&runner, shots, 7);
            rates.push((p_l, sigma));
        }
        assert!(
            rates[1].0 < rates[0].0,
            "sub-threshold scaling violated: {rates:?}"
        );
    }
}
