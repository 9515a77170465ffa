//! Recursive-matrix (RMAT) synthetic graphs with seeded features and labels.

use alloc::collections::VecDeque;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use hashbrown::HashSet;
use rand::seq::index;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{Graph, VertexId};
use crate::rng::{self, streams};
use crate::{Error, Result};

const UNLABELED: u32 = u32::MAX;

#[derive(Clone, Debug, PartialEq)]
pub struct RmatParams {
    pub num_vertices: usize,
    /// Fraction of the `n(n-1)/2` possible undirected edges to generate.
    pub density: f64,
    pub feature_dim: usize,
    pub num_classes: usize,
    pub seed: u64,
    /// Quadrant probabilities `(a, b, c, d)`; must sum to 1.
    pub quadrants: [f64; 4],
    /// Probability that a feature element is exactly zero.
    pub zero_fraction: f64,
}

impl RmatParams {
    pub fn new(num_vertices: usize, density: f64, feature_dim: usize, num_classes: usize, seed: u64) -> Self {
        Self {
            num_vertices,
            density,
            feature_dim,
            num_classes,
            seed,
            quadrants: [0.57, 0.19, 0.19, 0.05],
            zero_fraction: 0.0,
        }
    }
}

/// `⌈density · n(n-1)/2⌉`, tolerant of float noise on exact products.
pub fn target_edge_count(num_vertices: usize, density: f64) -> u64 {
    let pairs = num_vertices as f64 * (num_vertices as f64 - 1.0) / 2.0;
    let raw = density * pairs;
    let nearest = libm::round(raw);
    if (raw - nearest).abs() <= 1e-9 * raw.max(1.0) {
        nearest as u64
    } else {
        libm::ceil(raw) as u64
    }
}

pub fn generate_rmat(params: &RmatParams) -> Result<Graph> {
    let n = params.num_vertices;
    if n < 2 {
        return Err(Error::InvalidParameter(format!("RMAT needs at least 2 vertices, got {n}")));
    }
    if !(params.density > 0.0 && params.density < 1.0) {
        return Err(Error::InvalidParameter(format!("density {} not in (0, 1)", params.density)));
    }
    if params.num_classes == 0 {
        return Err(Error::InvalidParameter("num_classes must be positive".into()));
    }
    if !(0.0..=1.0).contains(&params.zero_fraction) {
        return Err(Error::InvalidParameter("zero_fraction must lie in [0, 1]".into()));
    }
    let q = params.quadrants;
    if q.iter().any(|&p| p < 0.0) || (q.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidParameter("quadrant probabilities must be non-negative and sum to 1".into()));
    }
    let max = n as u64 * (n as u64 - 1) / 2;
    let target = target_edge_count(n, params.density);
    if target > max {
        return Err(Error::TooManyEdges { requested: target, max });
    }

    let edges = rmat_edges(n, target as usize, q, params.seed);
    let features = random_features(n * params.feature_dim, params.zero_fraction, params.seed);
    let graph = Graph::new(n, edges, params.feature_dim, features)?;
    let labels = propagate_labels(&graph, params.num_classes, params.seed);
    graph.with_labels(labels)
}

fn rmat_edges(n: usize, target: usize, q: [f64; 4], seed: u64) -> Vec<(VertexId, VertexId)> {
    let mut rng = rng::stream(seed, streams::RMAT_EDGES);
    let scale = usize::BITS - (n - 1).leading_zeros();
    let mut seen: HashSet<u64> = HashSet::with_capacity(target);
    let mut edges = Vec::with_capacity(target);
    // Heavy skew makes some pairs practically unreachable; past this budget the
    // remaining edges are drawn uniformly so dense targets still terminate.
    let budget = 64 * target as u64 + 1_000_000;
    let mut attempts = 0u64;

    while edges.len() < target {
        let (u, v) = if attempts < budget {
            attempts += 1;
            rmat_pair(&mut rng, scale, q)
        } else {
            (rng.random_range(0..n), rng.random_range(0..n))
        };
        if u >= n || v >= n || u == v {
            continue;
        }
        let (a, b) = (u.min(v) as u64, u.max(v) as u64);
        if seen.insert(a << 32 | b) {
            edges.push((a as VertexId, b as VertexId));
        }
    }
    edges
}

fn rmat_pair(rng: &mut ChaCha8Rng, scale: u32, q: [f64; 4]) -> (usize, usize) {
    let (mut u, mut v) = (0usize, 0usize);
    for _ in 0..scale {
        let r: f64 = rng.random();
        let (du, dv) = if r < q[0] {
            (0, 0)
        } else if r < q[0] + q[1] {
            (0, 1)
        } else if r < q[0] + q[1] + q[2] {
            (1, 0)
        } else {
            (1, 1)
        };
        u = u << 1 | du;
        v = v << 1 | dv;
    }
    (u, v)
}

fn random_features(len: usize, zero_fraction: f64, seed: u64) -> Vec<f64> {
    let mut rng = rng::stream(seed, streams::RMAT_FEATURES);
    (0..len)
        .map(|_| {
            let zero = zero_fraction > 0.0 && rng.random::<f64>() < zero_fraction;
            let x = rng.random_range(-1.0..=1.0);
            if zero { 0.0 } else { x }
        })
        .collect()
}

/// Majority label propagation from `classes` random seed vertices. Components
/// the propagation never reaches get one random class each.
fn propagate_labels(g: &Graph, classes: usize, seed: u64) -> Vec<u32> {
    let n = g.vertex_count();
    let mut rng = rng::stream(seed, streams::RMAT_LABELS);
    let mut labels = vec![UNLABELED; n];
    for (class, v) in index::sample(&mut rng, n, classes.min(n)).into_iter().enumerate() {
        labels[v] = class as u32;
    }

    let mut votes = vec![0u32; classes];
    loop {
        let mut next = labels.clone();
        let mut changed = false;
        for v in 0..n {
            if labels[v] != UNLABELED {
                continue;
            }
            votes.iter_mut().for_each(|c| *c = 0);
            let mut any = false;
            for &u in g.neighbors(v as VertexId) {
                let l = labels[u as usize];
                if l != UNLABELED {
                    votes[l as usize] += 1;
                    any = true;
                }
            }
            if any {
                // max_by_key keeps the last maximum; scan in reverse for the lowest class.
                let best = (0..classes).rev().max_by_key(|&c| votes[c]).unwrap();
                next[v] = best as u32;
                changed = true;
            }
        }
        labels = next;
        if !changed {
            break;
        }
    }

    let mut queue = VecDeque::new();
    for start in 0..n {
        if labels[start] != UNLABELED {
            continue;
        }
        let class = rng.random_range(0..classes) as u32;
        labels[start] = class;
        queue.push_back(start as VertexId);
        while let Some(v) = queue.pop_front() {
            for &u in g.neighbors(v) {
                if labels[u as usize] == UNLABELED {
                    labels[u as usize] = class;
                    queue.push_back(u);
                }
            }
        }
    }
    labels
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn edge_count_is_exact() {
        let g = generate_rmat(&RmatParams::new(500, 0.02, 4, 3, 7)).unwrap();
        assert_eq!(g.edge_count() as u64, target_edge_count(500, 0.02));
        assert_eq!(g.degrees().sum::<usize>(), 2 * g.edge_count());
        let labels = g.labels().unwrap();
        assert!(labels.iter().all(|&l| l < 3));
        assert!(g.feature_matrix().iter().all(|x| (-1.0..=1.0).contains(x)));
    }

    #[test]
    fn deterministic_for_seed() {
        let p = RmatParams::new(300, 0.03, 2, 4, 11);
        assert_eq!(generate_rmat(&p).unwrap(), generate_rmat(&p).unwrap());
        let other = generate_rmat(&RmatParams { seed: 12, ..p.clone() }).unwrap();
        assert_ne!(generate_rmat(&p).unwrap().edges(), other.edges());
    }

    #[test]
    fn target_rounding() {
        assert_eq!(target_edge_count(20_000, 0.001), 199_990);
        assert_eq!(target_edge_count(10, 0.5), 23);
        assert_eq!(target_edge_count(4, 0.5), 3);
    }

    #[test]
    fn near_complete_density_terminates() {
        let g = generate_rmat(&RmatParams::new(40, 0.99, 1, 2, 1)).unwrap();
        assert_eq!(g.edge_count() as u64, target_edge_count(40, 0.99));
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(generate_rmat(&RmatParams::new(1, 0.5, 1, 1, 0)).is_err());
        assert!(generate_rmat(&RmatParams::new(10, 0.0, 1, 1, 0)).is_err());
        assert!(generate_rmat(&RmatParams::new(10, 1.0, 1, 1, 0)).is_err());
    }

    #[test]
    fn zero_fraction_controls_sparsity() {
        let p = RmatParams { zero_fraction: 0.5, ..RmatParams::new(200, 0.05, 16, 2, 5) };
        let g = generate_rmat(&p).unwrap();
        let zeros = g.feature_matrix().iter().filter(|&&x| x == 0.0).count();
        let frac = zeros as f64 / g.feature_matrix().len() as f64;
        assert!((frac - 0.5).abs() < 0.05, "{frac}");
    }
}
