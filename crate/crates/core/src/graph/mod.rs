//! Undirected, unweighted input graphs with per-vertex feature vectors.
//!
//! Adjacency is kept in CSR form with every neighbor list sorted ascending, so
//! aggregation order (and therefore floating point results) is reproducible.

mod rmat;

use alloc::vec;
use alloc::vec::Vec;
use core::ops::Add;

use rand::seq::index;

use crate::rng::{self, streams};
use crate::{Error, Result};

pub use rmat::{generate_rmat, target_edge_count, RmatParams};

pub type VertexId = u32;

/// Bits per stored feature element. Features are `f64`.
pub const FEATURE_BITWIDTH: u32 = 64;

#[derive(Clone, Debug, PartialEq)]
pub struct Graph {
    /// Canonical edge list, `u < v`, sorted.
    edges: Vec<(VertexId, VertexId)>,
    offsets: Vec<usize>,
    adjacency: Vec<VertexId>,
    feature_dim: usize,
    features: Vec<f64>,
    labels: Option<Vec<u32>>,
}

impl Graph {
    /// Builds a graph from an undirected edge list and row-major features.
    ///
    /// Edges may be given in either orientation but each unordered pair must
    /// appear once; self-loops and out-of-range endpoints are rejected.
    pub fn new<I>(vertex_count: usize, edges: I, feature_dim: usize, features: Vec<f64>) -> Result<Self>
    where
        I: IntoIterator<Item = (VertexId, VertexId)>,
    {
        if vertex_count > u32::MAX as usize {
            return Err(Error::InvalidParameter("vertex count exceeds u32 range".into()));
        }
        let expected = vertex_count * feature_dim;
        if features.len() != expected {
            return Err(Error::ShapeMismatch { expected, actual: features.len() });
        }

        let mut canon = Vec::new();
        for (u, v) in edges {
            for x in [u, v] {
                if x as usize >= vertex_count {
                    return Err(Error::VertexOutOfRange { vertex: x as u64, vertex_count });
                }
            }
            if u == v {
                return Err(Error::SelfLoop(u));
            }
            canon.push((u.min(v), u.max(v)));
        }
        canon.sort_unstable();
        if let Some(w) = canon.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::DuplicateEdge(w[0].0, w[0].1));
        }

        let mut degree = vec![0usize; vertex_count];
        for &(u, v) in &canon {
            degree[u as usize] += 1;
            degree[v as usize] += 1;
        }
        let mut offsets = Vec::with_capacity(vertex_count + 1);
        offsets.push(0);
        for d in &degree {
            offsets.push(offsets.last().unwrap() + d);
        }
        // Filling in canonical edge order leaves every list sorted: all (u, x)
        // with u < x precede the (x, v) block.
        let mut cursor = offsets[..vertex_count].to_vec();
        let mut adjacency = vec![0; offsets[vertex_count]];
        for &(u, v) in &canon {
            adjacency[cursor[u as usize]] = v;
            cursor[u as usize] += 1;
            adjacency[cursor[v as usize]] = u;
            cursor[v as usize] += 1;
        }

        Ok(Self { edges: canon, offsets, adjacency, feature_dim, features, labels: None })
    }

    pub fn with_labels(mut self, labels: Vec<u32>) -> Result<Self> {
        if labels.len() != self.vertex_count() {
            return Err(Error::ShapeMismatch { expected: self.vertex_count(), actual: labels.len() });
        }
        self.labels = Some(labels);
        Ok(self)
    }

    /// Replaces the feature matrix, keeping topology and labels.
    pub fn with_features(mut self, feature_dim: usize, features: Vec<f64>) -> Result<Self> {
        let expected = self.vertex_count() * feature_dim;
        if features.len() != expected {
            return Err(Error::ShapeMismatch { expected, actual: features.len() });
        }
        self.feature_dim = feature_dim;
        self.features = features;
        Ok(self)
    }

    pub fn vertex_count(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(VertexId, VertexId)] {
        &self.edges
    }

    pub fn neighbors(&self, v: VertexId) -> &[VertexId] {
        let v = v as usize;
        &self.adjacency[self.offsets[v]..self.offsets[v + 1]]
    }

    pub fn degree(&self, v: VertexId) -> usize {
        let v = v as usize;
        self.offsets[v + 1] - self.offsets[v]
    }

    pub fn degrees(&self) -> impl Iterator<Item = usize> + '_ {
        self.offsets.windows(2).map(|w| w[1] - w[0])
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn features(&self, v: VertexId) -> &[f64] {
        let start = v as usize * self.feature_dim;
        &self.features[start..start + self.feature_dim]
    }

    pub fn feature_matrix(&self) -> &[f64] {
        &self.features
    }

    pub fn labels(&self) -> Option<&[u32]> {
        self.labels.as_deref()
    }

    /// Bytes of one vertex's feature vector (φ).
    pub fn feature_bytes(&self) -> usize {
        self.feature_dim * FEATURE_BITWIDTH as usize / 8
    }

    /// Cardinality of a vertex set: its size plus its external one-hop
    /// neighbor union.
    pub fn cardinality(&self, vertices: &[VertexId]) -> Cardinality {
        let n = self.vertex_count();
        let mut inside = vec![false; n];
        let mut members = 0;
        for &v in vertices {
            if !inside[v as usize] {
                inside[v as usize] = true;
                members += 1;
            }
        }
        let mut seen = vec![false; n];
        let mut neighbors = 0;
        for &v in vertices {
            for &u in self.neighbors(v) {
                if !inside[u as usize] && !seen[u as usize] {
                    seen[u as usize] = true;
                    neighbors += 1;
                }
            }
        }
        Cardinality { num_vertices: members, num_neighbors: neighbors }
    }

    /// Cardinality of every part of a total assignment `vertex -> part`, in one pass.
    pub fn part_cardinalities(&self, assignment: &[u32], parts: usize) -> Vec<Cardinality> {
        let mut out = vec![Cardinality::default(); parts];
        let mut touched: Vec<u32> = Vec::new();
        for (v, &p) in assignment.iter().enumerate() {
            out[p as usize].num_vertices += 1;
            touched.clear();
            touched.extend(
                self.neighbors(v as VertexId)
                    .iter()
                    .map(|&u| assignment[u as usize])
                    .filter(|&q| q != p),
            );
            touched.sort_unstable();
            touched.dedup();
            for &q in &touched {
                out[q as usize].num_neighbors += 1;
            }
        }
        out
    }

    /// Number of edges whose endpoints lie in different parts.
    pub fn edge_cut(&self, assignment: &[u32]) -> usize {
        self.edges
            .iter()
            .filter(|&&(u, v)| assignment[u as usize] != assignment[v as usize])
            .count()
    }

    pub fn degree_cdf(&self) -> DegreeCdf {
        DegreeCdf::from_degrees(self.degrees())
    }
}

/// Subgraph size as seen by a GNN layer: `⟨|V|, |N_V|⟩`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Cardinality {
    pub num_vertices: usize,
    /// Vertices outside the set adjacent to at least one member.
    pub num_neighbors: usize,
}

impl Cardinality {
    pub const fn new(num_vertices: usize, num_neighbors: usize) -> Self {
        Self { num_vertices, num_neighbors }
    }
}

impl Add for Cardinality {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Self::new(self.num_vertices + rhs.num_vertices, self.num_neighbors + rhs.num_neighbors)
    }
}

/// Empirical degree distribution, `F_D(d) = P(D ≤ d)`.
#[derive(Clone, Debug, PartialEq)]
pub struct DegreeCdf {
    values: Vec<usize>,
    /// `cumulative[i]` = number of vertices with degree ≤ `values[i]`.
    cumulative: Vec<u64>,
    total: u64,
}

impl DegreeCdf {
    pub fn from_degrees<I: IntoIterator<Item = usize>>(degrees: I) -> Self {
        let mut sorted: Vec<usize> = degrees.into_iter().collect();
        sorted.sort_unstable();
        let total = sorted.len() as u64;
        let mut values = Vec::new();
        let mut cumulative = Vec::new();
        for (i, &d) in sorted.iter().enumerate() {
            if values.last() == Some(&d) {
                *cumulative.last_mut().unwrap() = i as u64 + 1;
            } else {
                values.push(d);
                cumulative.push(i as u64 + 1);
            }
        }
        Self { values, cumulative, total }
    }

    pub fn vertex_count(&self) -> u64 {
        self.total
    }

    pub fn max_degree(&self) -> usize {
        self.values.last().copied().unwrap_or(0)
    }

    /// Vertices with degree ≤ `d`.
    pub fn count_at_most(&self, d: usize) -> u64 {
        match self.values.partition_point(|&x| x <= d) {
            0 => 0,
            i => self.cumulative[i - 1],
        }
    }

    /// Vertices with degree < `d`.
    pub fn count_below(&self, d: usize) -> u64 {
        match d {
            0 => 0,
            _ => self.count_at_most(d - 1),
        }
    }

    /// `F_D(d) = P(D ≤ d)`.
    pub fn at(&self, d: usize) -> f64 {
        self.fraction(self.count_at_most(d))
    }

    /// Left limit `F_D(d⁻) = P(D < d)`.
    pub fn below(&self, d: usize) -> f64 {
        self.fraction(self.count_below(d))
    }

    /// Stored `(degree, F_D(degree))` steps.
    pub fn points(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.values.iter().zip(&self.cumulative).map(|(&d, &c)| (d, self.fraction(c)))
    }

    fn fraction(&self, count: u64) -> f64 {
        if self.total == 0 {
            1.0
        } else {
            count as f64 / self.total as f64
        }
    }
}

/// Uniformly samples `target.num_vertices` vertices and measures the actual
/// cardinality of the sample. `target.num_neighbors` is not enforced.
pub fn sample_subgraph(g: &Graph, target: Cardinality, seed: u64) -> Result<(Vec<VertexId>, Cardinality)> {
    let n = g.vertex_count();
    if target.num_vertices > n {
        return Err(Error::SampleTooLarge { requested: target.num_vertices, available: n });
    }
    let mut rng = rng::stream(seed, streams::SAMPLING);
    let mut vertices: Vec<VertexId> = index::sample(&mut rng, n, target.num_vertices)
        .into_iter()
        .map(|i| i as VertexId)
        .collect();
    vertices.sort_unstable();
    let card = g.cardinality(&vertices);
    Ok((vertices, card))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bare(n: usize, edges: &[(u32, u32)]) -> Graph {
        Graph::new(n, edges.iter().copied(), 1, vec![0.0; n]).unwrap()
    }

    #[test]
    fn builds_small_graph() {
        let g = Graph::new(3, [(0, 1), (1, 2)], 2, vec![0.0; 6]).unwrap();
        assert_eq!(g.vertex_count(), 3);
        assert_eq!(g.edge_count(), 2);
        assert_eq!(g.neighbors(1), &[0, 2]);
        assert_eq!(g.feature_bytes(), 16);
    }

    #[test]
    fn rejects_bad_edges() {
        assert_eq!(
            Graph::new(3, [(0, 5)], 1, vec![0.0; 3]),
            Err(Error::VertexOutOfRange { vertex: 5, vertex_count: 3 })
        );
        assert_eq!(Graph::new(3, [(1, 1)], 1, vec![0.0; 3]), Err(Error::SelfLoop(1)));
        assert_eq!(Graph::new(3, [(0, 1), (1, 0)], 1, vec![0.0; 3]), Err(Error::DuplicateEdge(0, 1)));
        assert!(matches!(Graph::new(3, [], 2, vec![0.0; 3]), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn neighbor_lists_sorted() {
        let g = bare(5, &[(3, 4), (0, 3), (2, 3), (1, 3), (0, 4)]);
        assert_eq!(g.neighbors(3), &[0, 1, 2, 4]);
        assert_eq!(g.neighbors(4), &[0, 3]);
    }

    #[test]
    fn cdf_of_path() {
        let cdf = bare(3, &[(0, 1), (1, 2)]).degree_cdf();
        assert_eq!(cdf.at(0), 0.0);
        assert!((cdf.at(1) - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(cdf.at(2), 1.0);
        assert_eq!(cdf.max_degree(), 2);
    }

    #[test]
    fn cdf_of_edgeless_and_star() {
        let cdf = bare(4, &[]).degree_cdf();
        assert_eq!(cdf.at(0), 1.0);
        let star = bare(5, &[(0, 1), (0, 2), (0, 3), (0, 4)]).degree_cdf();
        assert_eq!(star.at(1), 0.8);
        assert_eq!(star.at(3), 0.8);
        assert_eq!(star.at(4), 1.0);
        assert_eq!(star.below(4), 0.8);
        assert_eq!(star.below(1), 0.0);
    }

    #[test]
    fn sampling_full_graph_and_star_center() {
        let star = bare(5, &[(0, 1), (0, 2), (0, 3), (0, 4)]);
        let (all, card) = sample_subgraph(&star, Cardinality::new(5, 0), 3).unwrap();
        assert_eq!(all, vec![0, 1, 2, 3, 4]);
        assert_eq!(card, Cardinality::new(5, 0));
        assert_eq!(star.cardinality(&[0]), Cardinality::new(1, 4));
        assert!(matches!(
            sample_subgraph(&star, Cardinality::new(6, 0), 3),
            Err(Error::SampleTooLarge { .. })
        ));
        assert_eq!(
            sample_subgraph(&star, Cardinality::new(2, 0), 9).unwrap(),
            sample_subgraph(&star, Cardinality::new(2, 0), 9).unwrap()
        );
    }

    #[test]
    fn part_cardinalities_match_per_part_scan() {
        let g = bare(6, &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (0, 5), (1, 4)]);
        let assignment = [0, 0, 1, 1, 2, 2];
        let cards = g.part_cardinalities(&assignment, 3);
        for p in 0..3u32 {
            let members: Vec<u32> = (0..6).filter(|&v| assignment[v as usize] == p).collect();
            assert_eq!(cards[p as usize], g.cardinality(&members));
        }
        assert_eq!(g.edge_cut(&assignment), 4);
    }
}
