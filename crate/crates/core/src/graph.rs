//! The primitive intersection graph and its connected components.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::fmt::Write as _;

use fixedbitset::FixedBitSet;
use num_bigint::BigUint;
use num_traits::One;
use serde::{Deserialize, Serialize};

use crate::geometry::{MembershipLabel, Point, PrimitiveSet};
use crate::sampling::SampledScene;

#[derive(Debug, Clone, PartialEq)]
pub struct IntersectionGraph {
    /// Primitive ids, in primitive-set order.
    pub vertices: Vec<String>,
    /// Primitive-set index of each vertex.
    pub primitive_indices: Vec<usize>,
    adjacency: Vec<Vec<bool>>,
    witnesses: BTreeMap<(usize, usize), Point>,
    /// Pairs that reached the sampling test (bounding boxes overlapped).
    pub pair_tests: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdjacencyDoc {
    pub vertices: Vec<String>,
    pub edges: Vec<[String; 2]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeInfo {
    Disjoint,
    FullyConnected,
}

/// Builds the graph over every primitive using every lattice point.
pub fn build_graph(ps: &PrimitiveSet, sampled: &SampledScene) -> IntersectionGraph {
    let all: Vec<usize> = (0..ps.len()).collect();
    build_graph_on(ps, &all, sampled, None, None)
}

/// Builds the graph over `subset` (primitive-set indices, ascending), looking
/// only at points in `region` when given. An edge needs a witness point
/// strictly inside both primitives. Witnesses of `prior` that still classify
/// as inside both are kept, so refining the lattice never drops an edge.
pub fn build_graph_on(
    ps: &PrimitiveSet,
    subset: &[usize],
    sampled: &SampledScene,
    region: Option<&FixedBitSet>,
    prior: Option<&IntersectionGraph>,
) -> IntersectionGraph {
    let n = subset.len();
    let dims = sampled.plan.dimension;
    let boxes: Vec<_> = subset
        .iter()
        .map(|&i| ps.get(i).bounding_box().map(|b| b.inflate(sampled.epsilon)))
        .collect();

    // First lattice index for every distinct inside-mask.
    let mut first_by_mask: HashMap<u64, usize> = HashMap::new();
    for k in 0..sampled.len() {
        if region.is_some_and(|r| !r.contains(k)) {
            continue;
        }
        let m = sampled.inside_mask(k);
        if m.count_ones() >= 2 {
            first_by_mask.entry(m).or_insert(k);
        }
    }

    let mut adjacency = vec![vec![false; n]; n];
    let mut witnesses = BTreeMap::new();
    let mut pair_tests = 0;
    for a in 0..n {
        for b in a + 1..n {
            let pruned = match (&boxes[a], &boxes[b]) {
                (Some(x), Some(y)) => !x.overlaps(y, dims),
                _ => false,
            };
            if pruned {
                continue;
            }
            pair_tests += 1;
            let bits = (1u64 << subset[a]) | (1u64 << subset[b]);
            let mut witness = first_by_mask
                .iter()
                .filter(|(m, _)| *m & bits == bits)
                .map(|(_, k)| *k)
                .min()
                .map(|k| *sampled.point(k));
            if witness.is_none() {
                witness = prior.and_then(|g| {
                    g.witness_by_id(ps.get(subset[a]).id.as_str(), ps.get(subset[b]).id.as_str())
                        .filter(|w| {
                            [subset[a], subset[b]].iter().all(|&i| {
                                ps.get(i).classify(w, sampled.epsilon) == MembershipLabel::Inside
                            })
                        })
                });
            }
            if let Some(w) = witness {
                adjacency[a][b] = true;
                adjacency[b][a] = true;
                witnesses.insert((a, b), w);
            }
        }
    }
    IntersectionGraph {
        vertices: subset.iter().map(|&i| ps.get(i).id.clone()).collect(),
        primitive_indices: subset.to_vec(),
        adjacency,
        witnesses,
        pair_tests,
    }
}

impl IntersectionGraph {
    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.adjacency[a][b]
    }

    pub fn edge_count(&self) -> usize {
        self.witnesses.len()
    }

    /// Edges as vertex-index pairs `(a, b)` with `a < b`, ascending.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        self.witnesses.keys().copied().collect()
    }

    pub fn witness(&self, a: usize, b: usize) -> Option<Point> {
        let key = if a < b { (a, b) } else { (b, a) };
        self.witnesses.get(&key).copied()
    }

    fn witness_by_id(&self, a: &str, b: &str) -> Option<Point> {
        let ia = self.vertices.iter().position(|v| v == a)?;
        let ib = self.vertices.iter().position(|v| v == b)?;
        self.witness(ia, ib)
    }

    /// Connected components, each listed in ascending vertex order; parts are
    /// ordered by their smallest vertex.
    pub fn connected_components(&self) -> ComponentPartition {
        let n = self.len();
        let mut seen = vec![false; n];
        let mut parts = Vec::new();
        for start in 0..n {
            if seen[start] {
                continue;
            }
            seen[start] = true;
            let mut part = vec![start];
            let mut queue = VecDeque::from([start]);
            while let Some(v) = queue.pop_front() {
                for w in 0..n {
                    if self.adjacency[v][w] && !seen[w] {
                        seen[w] = true;
                        part.push(w);
                        queue.push_back(w);
                    }
                }
            }
            part.sort_unstable();
            parts.push(part);
        }
        ComponentPartition { parts }
    }

    pub fn to_adjacency_doc(&self) -> AdjacencyDoc {
        AdjacencyDoc {
            vertices: self.vertices.clone(),
            edges: self
                .edges()
                .into_iter()
                .map(|(a, b)| [self.vertices[a].clone(), self.vertices[b].clone()])
                .collect(),
        }
    }

    /// Graphviz text, vertices and edges in primitive order.
    pub fn to_dot(&self) -> String {
        let quote = |s: &str| format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""));
        let mut out = String::from("graph intersection {\n");
        for v in &self.vertices {
            let _ = writeln!(out, "  {};", quote(v));
        }
        for (a, b) in self.edges() {
            let _ = writeln!(
                out,
                "  {} -- {};",
                quote(&self.vertices[a]),
                quote(&self.vertices[b])
            );
        }
        out.push_str("}\n");
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComponentPartition {
    /// Vertex indices of each part.
    pub parts: Vec<Vec<usize>>,
}

impl ComponentPartition {
    pub fn len(&self) -> usize {
        self.parts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parts.is_empty()
    }

    pub fn ids<'a>(&self, g: &'a IntersectionGraph) -> Vec<Vec<&'a str>> {
        self.parts
            .iter()
            .map(|p| p.iter().map(|&v| g.vertices[v].as_str()).collect())
            .collect()
    }
}

/// Extreme values of the non-empty fundamental product count: `|P|` when no
/// two primitives meet, `2^|P| - 1` when every subset of them does.
pub fn nf_bounds(primitive_count: usize, edges: EdgeInfo) -> BigUint {
    match edges {
        EdgeInfo::Disjoint => BigUint::from(primitive_count),
        EdgeInfo::FullyConnected => (BigUint::one() << primitive_count) - BigUint::one(),
    }
}

#[cfg(test)]
impl IntersectionGraph {
    pub(crate) fn from_edges(n: usize, edges: &[(usize, usize)]) -> Self {
        let mut adjacency = vec![vec![false; n]; n];
        let mut witnesses = BTreeMap::new();
        for &(a, b) in edges {
            let (a, b) = (a.min(b), a.max(b));
            adjacency[a][b] = true;
            adjacency[b][a] = true;
            witnesses.insert((a, b), Point::zeros());
        }
        IntersectionGraph {
            vertices: (0..n).map(|i| format!("v{i}")).collect(),
            primitive_indices: (0..n).collect(),
            adjacency,
            witnesses,
            pair_tests: 0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Aabb, Primitive, SamplePlan};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sampled(ps: &PrimitiveSet, resolution: usize) -> SampledScene {
        let plan = SamplePlan::new(
            Aabb::new(Point::new(-2.0, -2.0, -2.0), Point::new(7.0, 2.0, 2.0)),
            resolution,
            0.2,
            3,
        )
        .unwrap();
        SampledScene::new(ps, &plan, 1, 1e-4).unwrap()
    }

    #[test]
    fn far_spheres_are_pruned() {
        let ps = PrimitiveSet::new(vec![
            Primitive::sphere("A", [0.0; 3], 1.0).unwrap(),
            Primitive::sphere("B", [5.0, 0.0, 0.0], 1.0).unwrap(),
        ])
        .unwrap();
        let g = build_graph(&ps, &sampled(&ps, 16));
        assert_eq!(g.edge_count(), 0);
        assert_eq!(g.pair_tests, 0);
        assert!(g.to_dot().lines().all(|l| !l.contains("--")));
    }

    #[test]
    fn overlapping_spheres_share_an_edge_with_a_sound_witness() {
        let ps = PrimitiveSet::new(vec![
            Primitive::sphere("A", [0.0; 3], 1.0).unwrap(),
            Primitive::sphere("B", [1.5, 0.0, 0.0], 1.0).unwrap(),
        ])
        .unwrap();
        let g = build_graph(&ps, &sampled(&ps, 16));
        assert!(g.has_edge(0, 1));
        let w = g.witness(0, 1).unwrap();
        for p in ps.iter() {
            assert_eq!(p.classify(&w, 1e-4), MembershipLabel::Inside);
        }
        assert_eq!(g.pair_tests, 1);
        assert_eq!(
            g.to_dot(),
            "graph intersection {\n  \"A\";\n  \"B\";\n  \"A\" -- \"B\";\n}\n"
        );
    }

    #[test]
    fn prior_witnesses_survive_coarser_lattices() {
        let ps = PrimitiveSet::new(vec![
            Primitive::sphere("A", [0.0; 3], 1.0).unwrap(),
            Primitive::sphere("B", [1.8, 0.0, 0.0], 1.0).unwrap(),
        ])
        .unwrap();
        let fine = build_graph(&ps, &sampled(&ps, 64));
        assert!(fine.has_edge(0, 1));
        let coarse_alone = build_graph(&ps, &sampled(&ps, 2));
        assert!(!coarse_alone.has_edge(0, 1));
        let all = [0, 1];
        let coarse = build_graph_on(&ps, &all, &sampled(&ps, 2), None, Some(&fine));
        assert!(coarse.has_edge(0, 1));
    }

    #[test]
    fn component_examples() {
        let g = IntersectionGraph::from_edges(4, &[]);
        assert_eq!(g.connected_components().parts, vec![vec![0], vec![1], vec![2], vec![3]]);
        let g = IntersectionGraph::from_edges(4, &[(0, 1), (1, 2)]);
        assert_eq!(g.connected_components().parts, vec![vec![0, 1, 2], vec![3]]);
        let g = IntersectionGraph::from_edges(5, &[(4, 2), (0, 3)]);
        assert_eq!(g.connected_components().parts, vec![vec![0, 3], vec![1], vec![2, 4]]);
    }

    #[test]
    fn components_agree_with_transitive_closure() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for _ in 0..100 {
            let n = rng.random_range(1..12);
            let edges: Vec<(usize, usize)> = (0..n)
                .flat_map(|a| (a + 1..n).map(move |b| (a, b)))
                .filter(|_| rng.random_bool(0.2))
                .collect();
            let g = IntersectionGraph::from_edges(n, &edges);
            // Floyd-Warshall reachability.
            let mut reach = vec![vec![false; n]; n];
            for i in 0..n {
                reach[i][i] = true;
            }
            for &(a, b) in &edges {
                reach[a][b] = true;
                reach[b][a] = true;
            }
            for k in 0..n {
                for i in 0..n {
                    for j in 0..n {
                        if reach[i][k] && reach[k][j] {
                            reach[i][j] = true;
                        }
                    }
                }
            }
            let parts = g.connected_components().parts;
            let mut covered = vec![0; n];
            for part in &parts {
                for &a in part {
                    covered[a] += 1;
                    for b in 0..n {
                        assert_eq!(part.contains(&b), reach[a][b]);
                    }
                }
            }
            assert!(covered.iter().all(|&c| c == 1));
            assert!(parts.windows(2).all(|w| w[0][0] < w[1][0]));
        }
    }

    #[test]
    fn nf_bound_values() {
        assert_eq!(nf_bounds(6, EdgeInfo::Disjoint), BigUint::from(6u32));
        assert_eq!(nf_bounds(6, EdgeInfo::FullyConnected), BigUint::from(63u32));
        assert_eq!(nf_bounds(1, EdgeInfo::Disjoint), BigUint::from(1u32));
        assert_eq!(nf_bounds(1, EdgeInfo::FullyConnected), BigUint::from(1u32));
    }
}
