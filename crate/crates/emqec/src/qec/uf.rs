//! Weighted Union-Find decoder over a space-time syndrome graph: weighted
//! cluster growth by half-edge increments followed by a peeling pass inside
//! the grown clusters.

/// What correcting a graph edge means physically.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EdgeKind {
    /// Data-qubit flip on the given lattice edge.
    Space(usize),
    /// Measurement-error attribution (no data action).
    Time,
}

#[derive(Clone, Debug)]
pub struct GraphEdge {
    pub u: usize,
    pub v: usize,
    pub kind: EdgeKind,
}

/// Static structure of a decoding graph; weights are supplied per decode
/// call (stale layers modify time-edge weights shot by shot).
#[derive(Clone, Debug)]
pub struct DecodingGraph {
    pub n_nodes: usize,
    pub edges: Vec<GraphEdge>,
    pub adj: Vec<Vec<usize>>,
}

impl DecodingGraph {
    pub fn new(n_nodes: usize, edges: Vec<GraphEdge>) -> Self {
        let mut adj = vec![Vec::new(); n_nodes];
        for (i, e) in edges.iter().enumerate() {
            adj[e.u].push(i);
            adj[e.v].push(i);
        }
        DecodingGraph {
            n_nodes,
            edges,
            adj,
        }
    }
}

struct UnionFind {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
            rank: vec![0; n],
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) -> usize {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return ra;
        }
        if self.rank[ra] < self.rank[rb] {
            self.parent[ra] = rb;
            rb
        } else if self.rank[ra] > self.rank[rb] {
            self.parent[rb] = ra;
            ra
        } else {
            self.parent[rb] = ra;
            self.rank[ra] += 1;
            ra
        }
    }
}

/// Decode a defect set; returns the indices of the correction edges. The
/// corrected syndrome reproduces the input defects exactly.
pub fn union_find_decode(
    graph: &DecodingGraph,
    defects: &[bool],
    weights: &[u32],
) -> Vec<usize> {
    assert_eq!(defects.len(), graph.n_nodes);
    assert_eq!(weights.len(), graph.edges.len());
    let n_defects = defects.iter().filter(|d| **d).count();
    if n_defects == 0 {
        return Vec::new();
    }
    assert!(n_defects % 2 == 0, "defect multiset must have even parity");

    let mut uf = UnionFind::new(graph.n_nodes);
    let mut parity: Vec<u32> = defects.iter().map(|&d| d as u32).collect();
    // boundary edge lists per root; clusters containing no defect stay
    // dormant until touched
    let mut boundary: Vec<Vec<usize>> = vec![Vec::new(); graph.n_nodes];
    let mut active: Vec<usize> = Vec::new();
    for v in 0..graph.n_nodes {
        if defects[v] {
            boundary[v] = graph.adj[v].clone();
            active.push(v);
        }
    }
    let mut growth = vec![0u32; graph.edges.len()];
    let mut grown = vec![false; graph.edges.len()];

    loop {
        // collect roots of odd clusters
        active = {
            let mut roots: Vec<usize> = active.iter().map(|&v| uf.find(v)).collect();
            roots.sort_unstable();
            roots.dedup();
            roots
        };
        let odd: Vec<usize> = active
            .iter()
            .copied()
            .filter(|&r| parity[r] % 2 == 1)
            .collect();
        if odd.is_empty() {
            break;
        }
        // smallest remaining slack over boundary edges of odd clusters
        let mut delta = u32::MAX;
        for &r in &odd {
            for &ei in &boundary[r] {
                if grown[ei] {
                    continue;
                }
                let e = &graph.edges[ei];
                if uf.find(e.u) == uf.find(e.v) {
                    continue;
                }
                let slack = weights[ei].saturating_sub(growth[ei]);
                // both endpoints odd: the edge grows from both sides
                let u_root = uf.find(e.u);
                let v_root = uf.find(e.v);
                let both = parity[u_root] % 2 == 1 && parity[v_root] % 2 == 1;
                let eff = if both { slack.div_ceil(2) } else { slack };
                delta = delta.min(eff.max(1));
            }
        }
        if delta == u32::MAX {
            unreachable!("odd cluster with no growable boundary");
        }
        // grow
        let mut merges: Vec<usize> = Vec::new();
        for &r in &odd {
            for &ei in &boundary[r] {
                if grown[ei] {
                    continue;
                }
                let e = &graph.edges[ei];
                if uf.find(e.u) == uf.find(e.v) {
                    continue;
                }
                growth[ei] = growth[ei].saturating_add(delta);
                if growth[ei] >= weights[ei] {
                    grown[ei] = true;
                    merges.push(ei);
                }
            }
        }
        for ei in merges {
            let e = &graph.edges[ei];
            let (ru, rv) = (uf.find(e.u), uf.find(e.v));
            if ru == rv {
                continue;
            }
            let pu = parity[ru];
            let pv = parity[rv];
            // a fresh node absorbed into a cluster needs its boundary
            for r in [ru, rv] {
                if boundary[r].is_empty() && parity[r] == 0 {
                    // dormant cluster root: seed with node adjacency
                    boundary[r] = graph.adj[r].clone();
                }
            }
            let keep = uf.union(ru, rv);
            let other = if keep == ru { rv } else { ru };
            parity[keep] = pu + pv;
            let moved = std::mem::take(&mut boundary[other]);
            boundary[keep].extend(moved);
            // absorb endpoints' adjacency in case they were plain nodes
            for node in [e.u, e.v] {
                if uf.find(node) == keep && !defects[node] {
                    boundary[keep].extend(graph.adj[node].iter().copied());
                }
            }
            active.push(keep);
        }
    }

    peel(graph, defects, &grown)
}

/// Peeling pass: build a spanning forest of each grown cluster and peel
/// leaves, flipping tree edges that carry a defect outward.
fn peel(graph: &DecodingGraph, defects: &[bool], grown: &[bool]) -> Vec<usize> {
    let n = graph.n_nodes;
    let mut visited = vec![false; n];
    let mut order: Vec<usize> = Vec::new();
    let mut parent_edge: Vec<Option<usize>> = vec![None; n];
    for start in 0..n {
        if visited[start] || !defects[start] {
            continue;
        }
        // BFS over grown edges
        let mut queue = std::collections::VecDeque::new();
        visited[start] = true;
        queue.push_back(start);
        while let Some(u) = queue.pop_front() {
            order.push(u);
            for &ei in &graph.adj[u] {
                if !grown[ei] {
                    continue;
                }
                let e = &graph.edges[ei];
                let w = if e.u == u { e.v } else { e.u };
                if !visited[w] {
                    visited[w] = true;
                    parent_edge[w] = Some(ei);
                    queue.push_back(w);
                }
            }
        }
    }
    let mut defect_left: Vec<bool> = defects.to_vec();
    let mut correction = Vec::new();
    for &node in order.iter().rev() {
        if !defect_left[node] {
            continue;
        }
        if let Some(ei) = parent_edge[node] {
            correction.push(ei);
            let e = &graph.edges[ei];
            let p = if e.u == node { e.v } else { e.u };
            defect_left[node] = false;
            defect_left[p] = !defect_left[p];
        }
    }
    debug_assert!(
        defect_left.iter().all(|d| !*d),
        "peeling must absorb every defect"
    );
    correction
}

/// Syndrome of a correction edge set (for validity checks).
pub fn syndrome_of(graph: &DecodingGraph, correction: &[usize]) -> Vec<bool> {
    let mut s = vec![false; graph.n_nodes];
    for &ei in correction {
        let e = &graph.edges[ei];
        s[e.u] = !s[e.u];
        s[e.v] = !s[e.v];
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ring(n: usize) -> DecodingGraph {
        let edges = (0..n)
            .map(|i| GraphEdge {
                u: i,
                v: (i + 1) % n,
                kind: EdgeKind::Space(i),
            })
            .collect();
        DecodingGraph::new(n, edges)
    }

    #[test]
    fn empty_syndrome_empty_correction() {
        let g = ring(8);
        let correction = union_find_decode(&g, &vec![false; 8], &vec![8; 8]);
        assert!(correction.is_empty());
    }

    #[test]
    fn adjacent_defects_single_edge() {
        let g = ring(8);
        let mut defects = vec![false; 8];
        defects[2] = true;
        defects[3] = true;
        let correction = union_find_decode(&g, &defects, &vec![8; 8]);
        assert_eq!(correction.len(), 1);
        assert_eq!(syndrome_of(&g, &correction), defects);
    }

    #[test]
    fn weighted_growth_prefers_cheap_path() {
        // square: 0-1 cheap-cheap one way, expensive the other
        let edges = vec![
            GraphEdge { u: 0, v: 1, kind: EdgeKind::Space(0) },
            GraphEdge { u: 1, v: 2, kind: EdgeKind::Space(1) },
            GraphEdge { u: 2, v: 3, kind: EdgeKind::Space(2) },
            GraphEdge { u: 3, v: 0, kind: EdgeKind::Space(3) },
        ];
        let g = DecodingGraph::new(4, edges);
        let mut defects = vec![false; 4];
        defects[0] = true;
        defects[2] = true;
        // path through node 1 is cheap, through node 3 expensive
        let weights = vec![8, 8, 40, 40];
        let correction = union_find_decode(&g, &defects, &weights);
        assert_eq!(syndrome_of(&g, &correction), defects);
        let total: u32 = correction.iter().map(|&e| weights[e]).sum();
        assert_eq!(total, 16, "decoder must route through the cheap side");
    }

    #[test]
    fn random_defect_sets_always_valid() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        // torus-like 2d grid graph
        let n = 36;
        let side = 6;
        let mut edges = Vec::new();
        for y in 0..side {
            for x in 0..side {
                let u = y * side + x;
                edges.push(GraphEdge { u, v: y * side + (x + 1) % side, kind: EdgeKind::Space(0) });
                edges.push(GraphEdge { u, v: ((y + 1) % side) * side + x, kind: EdgeKind::Time });
            }
        }
        let g = DecodingGraph::new(n, edges);
        let weights: Vec<u32> = (0..g.edges.len())
            .map(|_| 8 + (rng.random::<u32>() % 24))
            .collect();
        for _ in 0..200 {
            let mut defects = vec![false; n];
            let k = 2 * (1 + (rng.random::<u32>() % 6) as usize);
            let mut placed = 0;
            while placed < k {
                let v = (rng.random::<u32>() as usize) % n;
                if !defects[v] {
                    defects[v] = true;
                    placed += 1;
                }
            }
            let correction = union_find_decode(&g, &defects, &weights);
            assert_eq!(syndrome_of(&g, &correction), defects);
        }
    }
}
