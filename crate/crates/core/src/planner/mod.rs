//! Resource-aware placement of graph partitions onto fog nodes.
//!
//! The planner splits the graph into one balanced min-cut partition per fog,
//! prices every partition/fog pair with collection, execution and
//! synchronization costs, and picks the bijection with the smallest
//! worst-case pair cost.

mod lbap;
pub mod partition;

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

pub use lbap::{lbap_assign, maximum_matching, perfect_matching, BottleneckAssignment, CostMatrix, Matching};
pub use partition::{balanced_partition, max_part_size, partition_assignment, PartitionConfig};

use crate::graph::{Cardinality, Graph, VertexId};
use crate::profiler::LatencyModel;
use crate::rng::{self, streams};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FogNode {
    pub id: u32,
    /// Device→fog upload bandwidth in bytes per second.
    pub bandwidth_bps: f64,
}

/// Cost of one inter-fog synchronization round.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SyncCost {
    /// δ milliseconds per round regardless of the partition.
    Constant(f64),
    /// `base_ms` plus the time to ship a partition's boundary activations.
    BoundaryAware { base_ms: f64, bytes_per_vertex: f64, bandwidth_bps: f64 },
}

impl SyncCost {
    /// Round cost for a partition with `boundary` boundary vertices.
    pub fn round_ms(&self, boundary: usize) -> f64 {
        match *self {
            SyncCost::Constant(ms) => ms,
            SyncCost::BoundaryAware { base_ms, bytes_per_vertex, bandwidth_bps } => {
                base_ms + boundary as f64 * bytes_per_vertex / bandwidth_bps * 1000.0
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            SyncCost::Constant(ms) => ms.is_finite() && ms >= 0.0,
            SyncCost::BoundaryAware { base_ms, bytes_per_vertex, bandwidth_bps } => {
                base_ms.is_finite()
                    && base_ms >= 0.0
                    && bytes_per_vertex.is_finite()
                    && bytes_per_vertex >= 0.0
                    && bandwidth_bps.is_finite()
                    && bandwidth_bps > 0.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("invalid synchronization cost {self:?}")))
        }
    }
}

/// Fog nodes serving one GNN of depth `layers`. Node order is the tie-break
/// order everywhere.
#[derive(Clone, Debug, PartialEq)]
pub struct FogCluster {
    nodes: Vec<FogNode>,
    sync: SyncCost,
    layers: usize,
}

impl FogCluster {
    pub fn new(nodes: Vec<FogNode>, sync: SyncCost, layers: usize) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::EmptyCluster);
        }
        for (i, node) in nodes.iter().enumerate() {
            if !(node.bandwidth_bps.is_finite() && node.bandwidth_bps > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "fog {} bandwidth {} must be positive",
                    node.id, node.bandwidth_bps
                )));
            }
            if nodes[..i].iter().any(|other| other.id == node.id) {
                return Err(Error::InvalidParameter(format!("duplicate fog id {}", node.id)));
            }
        }
        sync.validate()?;
        Ok(Self { nodes, sync, layers })
    }

    /// Cluster with a constant per-round synchronization cost `sync_ms`.
    pub fn with_constant_sync(nodes: Vec<FogNode>, sync_ms: f64, layers: usize) -> Result<Self> {
        Self::new(nodes, SyncCost::Constant(sync_ms), layers)
    }

    pub fn nodes(&self) -> &[FogNode] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn sync(&self) -> SyncCost {
        self.sync
    }

    pub fn layers(&self) -> usize {
        self.layers
    }
}

/// Total map `vertex -> fog index`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Placement {
    assignment: Vec<u32>,
    fog_count: usize,
}

impl Placement {
    pub fn new(assignment: Vec<u32>, fog_count: usize) -> Result<Self> {
        if let Some(&bad) = assignment.iter().find(|&&f| f as usize >= fog_count) {
            return Err(Error::InvalidPlacement(format!("fog index {bad} out of range for {fog_count} fogs")));
        }
        Ok(Self { assignment, fog_count })
    }

    /// Places partition `k` on fog `fog_of_partition[k]`. The partitions must
    /// be a disjoint cover of `0..vertex_count`.
    pub fn from_partitions(partitions: &[Vec<VertexId>], fog_of_partition: &[usize], vertex_count: usize) -> Result<Self> {
        if partitions.len() != fog_of_partition.len() {
            return Err(Error::DimensionMismatch { expected: partitions.len(), actual: fog_of_partition.len() });
        }
        let fog_count = partitions.len();
        let mut assignment = vec![u32::MAX; vertex_count];
        for (part, &fog) in partitions.iter().zip(fog_of_partition) {
            if fog >= fog_count {
                return Err(Error::InvalidPlacement(format!("fog index {fog} out of range")));
            }
            for &v in part {
                let slot = assignment
                    .get_mut(v as usize)
                    .ok_or(Error::VertexOutOfRange { vertex: v as u64, vertex_count })?;
                if *slot != u32::MAX {
                    return Err(Error::InvalidPlacement(format!("vertex {v} placed twice")));
                }
                *slot = fog as u32;
            }
        }
        if let Some(v) = assignment.iter().position(|&f| f == u32::MAX) {
            return Err(Error::InvalidPlacement(format!("vertex {v} not placed")));
        }
        Ok(Self { assignment, fog_count })
    }

    pub fn assignment(&self) -> &[u32] {
        &self.assignment
    }

    pub fn fog_count(&self) -> usize {
        self.fog_count
    }

    pub fn vertex_count(&self) -> usize {
        self.assignment.len()
    }

    pub fn fog_of(&self, v: VertexId) -> usize {
        self.assignment[v as usize] as usize
    }

    /// Vertices on fog `j`, ascending.
    pub fn partition(&self, j: usize) -> Vec<VertexId> {
        (0..self.assignment.len() as VertexId).filter(|&v| self.fog_of(v) == j).collect()
    }

    pub fn partitions(&self) -> Vec<Vec<VertexId>> {
        let mut out = vec![Vec::new(); self.fog_count];
        for (v, &f) in self.assignment.iter().enumerate() {
            out[f as usize].push(v as VertexId);
        }
        out
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut out = vec![0; self.fog_count];
        for &f in &self.assignment {
            out[f as usize] += 1;
        }
        out
    }

    pub fn cardinalities(&self, g: &Graph) -> Vec<Cardinality> {
        g.part_cardinalities(&self.assignment, self.fog_count)
    }

    /// Vertices on fog `j` with at least one neighbor on another fog.
    pub fn boundary(&self, g: &Graph, j: usize) -> Vec<VertexId> {
        (0..self.assignment.len() as VertexId)
            .filter(|&v| self.fog_of(v) == j && g.neighbors(v).iter().any(|&u| self.fog_of(u) != j))
            .collect()
    }

    /// Boundary vertex count of every fog.
    pub fn boundary_counts(&self, g: &Graph) -> Vec<usize> {
        let mut out = vec![0; self.fog_count];
        for v in 0..self.assignment.len() as VertexId {
            let j = self.fog_of(v);
            if g.neighbors(v).iter().any(|&u| self.fog_of(u) != j) {
                out[j] += 1;
            }
        }
        out
    }

    pub fn move_vertex(&mut self, v: VertexId, fog: usize) -> Result<()> {
        if fog >= self.fog_count {
            return Err(Error::InvalidPlacement(format!("fog index {fog} out of range")));
        }
        let slot = self
            .assignment
            .get_mut(v as usize)
            .ok_or(Error::VertexOutOfRange { vertex: v as u64, vertex_count: self.fog_count })?;
        *slot = fog as u32;
        Ok(())
    }
}

/// Milliseconds to upload `vertices` feature vectors of `phi_bytes` each.
pub fn collection_ms(vertices: usize, phi_bytes: f64, bandwidth_bps: f64) -> f64 {
    vertices as f64 * phi_bytes / bandwidth_bps * 1000.0
}

/// Entry `(k, j)` = collection of `P_k` over fog `j`'s link + `ω_j(card(P_k))`
/// + K synchronization rounds.
pub fn cost_matrix(
    g: &Graph,
    partitions: &[Vec<VertexId>],
    cluster: &FogCluster,
    models: &[LatencyModel],
    phi_bytes: f64,
) -> Result<CostMatrix> {
    let n = cluster.len();
    if partitions.len() != n {
        return Err(Error::DimensionMismatch { expected: n, actual: partitions.len() });
    }
    if models.len() != n {
        return Err(Error::DimensionMismatch { expected: n, actual: models.len() });
    }
    if !(phi_bytes.is_finite() && phi_bytes >= 0.0) {
        return Err(Error::InvalidParameter(format!("feature size {phi_bytes} must be non-negative")));
    }
    let placement = Placement::from_partitions(partitions, &(0..n).collect::<Vec<_>>(), g.vertex_count())?;
    let cards = placement.cardinalities(g);
    let boundaries = match cluster.sync() {
        SyncCost::Constant(_) => vec![0; n],
        SyncCost::BoundaryAware { .. } => placement.boundary_counts(g),
    };
    let k = cluster.layers() as f64;
    let mut data = Vec::with_capacity(n * n);
    for (p, part) in partitions.iter().enumerate() {
        let sync = k * cluster.sync().round_ms(boundaries[p]);
        for (node, model) in cluster.nodes().iter().zip(models) {
            data.push(collection_ms(part.len(), phi_bytes, node.bandwidth_bps) + model.predict(cards[p]) + sync);
        }
    }
    CostMatrix::new(n, data)
}

/// Predicted cost of one fog's share of the pipeline.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct FogEstimate {
    pub collection_ms: f64,
    /// Compute plus K synchronization rounds.
    pub execution_ms: f64,
}

impl FogEstimate {
    pub fn total_ms(&self) -> f64 {
        self.collection_ms + self.execution_ms
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Plan {
    pub placement: Placement,
    pub partitions: Vec<Vec<VertexId>>,
    pub costs: CostMatrix,
    pub fog_of_partition: Vec<usize>,
    /// Indexed by fog.
    pub per_fog: Vec<FogEstimate>,
    /// `max_j (t_colle_j + t_exec_j)`.
    pub makespan_ms: f64,
    pub feasibility_tests: usize,
}

/// Partitions the graph, prices every pair and assigns partitions by
/// bottleneck assignment.
pub fn plan(
    g: &Graph,
    cluster: &FogCluster,
    models: &[LatencyModel],
    phi_bytes: f64,
    cfg: &PartitionConfig,
) -> Result<Plan> {
    let partitions = balanced_partition(g, cluster.len(), cfg)?;
    plan_with_partitions(g, cluster, models, phi_bytes, partitions)
}

/// Like [`plan`] with externally supplied partitions.
pub fn plan_with_partitions(
    g: &Graph,
    cluster: &FogCluster,
    models: &[LatencyModel],
    phi_bytes: f64,
    partitions: Vec<Vec<VertexId>>,
) -> Result<Plan> {
    let costs = cost_matrix(g, &partitions, cluster, models, phi_bytes)?;
    let assignment = lbap_assign(&costs);
    finish_plan(g, cluster, models, phi_bytes, partitions, costs, assignment.fog_of_partition, assignment.feasibility_tests)
}

#[allow(clippy::too_many_arguments)]
fn finish_plan(
    g: &Graph,
    cluster: &FogCluster,
    models: &[LatencyModel],
    phi_bytes: f64,
    partitions: Vec<Vec<VertexId>>,
    costs: CostMatrix,
    fog_of_partition: Vec<usize>,
    feasibility_tests: usize,
) -> Result<Plan> {
    let placement = Placement::from_partitions(&partitions, &fog_of_partition, g.vertex_count())?;
    let per_fog = estimate_placement(g, cluster, models, phi_bytes, &placement)?;
    let makespan_ms = makespan(&per_fog);
    Ok(Plan { placement, partitions, costs, fog_of_partition, per_fog, makespan_ms, feasibility_tests })
}

/// Per-fog predicted collection and execution time of an arbitrary placement.
pub fn estimate_placement(
    g: &Graph,
    cluster: &FogCluster,
    models: &[LatencyModel],
    phi_bytes: f64,
    placement: &Placement,
) -> Result<Vec<FogEstimate>> {
    let n = cluster.len();
    if placement.fog_count() != n || models.len() != n {
        return Err(Error::DimensionMismatch { expected: n, actual: placement.fog_count().max(models.len()) });
    }
    let cards = placement.cardinalities(g);
    let boundaries = match cluster.sync() {
        SyncCost::Constant(_) => vec![0; n],
        SyncCost::BoundaryAware { .. } => placement.boundary_counts(g),
    };
    let k = cluster.layers() as f64;
    Ok((0..n)
        .map(|j| FogEstimate {
            collection_ms: collection_ms(cards[j].num_vertices, phi_bytes, cluster.nodes()[j].bandwidth_bps),
            execution_ms: models[j].predict(cards[j]) + k * cluster.sync().round_ms(boundaries[j]),
        })
        .collect())
}

pub fn makespan(per_fog: &[FogEstimate]) -> f64 {
    per_fog.iter().map(FogEstimate::total_ms).fold(0.0, f64::max)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BaselineStrategy {
    /// Seeded uniform bijection.
    Random,
    /// Partitions in descending mean cost each take the cheapest unused fog.
    Greedy,
}

/// Partition→fog bijection chosen by a baseline strategy.
pub fn baseline_assign(costs: &CostMatrix, strategy: BaselineStrategy, seed: u64) -> Vec<usize> {
    let n = costs.n();
    match strategy {
        BaselineStrategy::Random => {
            let mut fogs: Vec<usize> = (0..n).collect();
            fogs.shuffle(&mut rng::stream(seed, streams::BASELINE));
            fogs
        }
        BaselineStrategy::Greedy => {
            let mut order: Vec<usize> = (0..n).collect();
            let workload = |k: usize| costs.row(k).iter().sum::<f64>() / n as f64;
            order.sort_by(|&a, &b| workload(b).total_cmp(&workload(a)).then(a.cmp(&b)));
            let mut used = vec![false; n];
            let mut out = vec![0; n];
            for k in order {
                let mut best = usize::MAX;
                for j in (0..n).filter(|&j| !used[j]) {
                    if best == usize::MAX || costs.get(k, j) < costs.get(k, best) {
                        best = j;
                    }
                }
                used[best] = true;
                out[k] = best;
            }
            out
        }
    }
}

/// Partitions the graph like [`plan`] but assigns them with a baseline strategy.
pub fn plan_baseline(
    g: &Graph,
    cluster: &FogCluster,
    models: &[LatencyModel],
    phi_bytes: f64,
    cfg: &PartitionConfig,
    strategy: BaselineStrategy,
    seed: u64,
) -> Result<Plan> {
    let partitions = balanced_partition(g, cluster.len(), cfg)?;
    let costs = cost_matrix(g, &partitions, cluster, models, phi_bytes)?;
    let fog_of_partition = baseline_assign(&costs, strategy, seed);
    finish_plan(g, cluster, models, phi_bytes, partitions, costs, fog_of_partition, 0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn nodes(bandwidths: &[f64]) -> Vec<FogNode> {
        bandwidths.iter().enumerate().map(|(i, &b)| FogNode { id: i as u32, bandwidth_bps: b }).collect()
    }

    fn path(n: usize) -> Graph {
        Graph::new(n, (0..n as u32 - 1).map(|v| (v, v + 1)), 1, vec![0.0; n]).unwrap()
    }

    #[test]
    fn collection_only_entry() {
        let g = path(10);
        let cluster = FogCluster::with_constant_sync(nodes(&[1e6]), 0.0, 0).unwrap();
        let parts = vec![(0..10).collect()];
        let c = cost_matrix(&g, &parts, &cluster, &[LatencyModel::new(0.0, 0.0, 0.0)], 400.0).unwrap();
        assert!((c.get(0, 0) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn sync_only_entries() {
        let g = path(6);
        let cluster = FogCluster::with_constant_sync(nodes(&[1e6, 1e6]), 2.0, 3).unwrap();
        let parts = vec![vec![0, 1, 2], vec![3, 4, 5]];
        let zero = LatencyModel::new(0.0, 0.0, 0.0);
        let c = cost_matrix(&g, &parts, &cluster, &[zero, zero], 0.0).unwrap();
        assert!(c.values().iter().all(|&x| x == 6.0));
    }

    #[test]
    fn boundary_aware_sync() {
        let g = path(4);
        let sync = SyncCost::BoundaryAware { base_ms: 1.0, bytes_per_vertex: 1000.0, bandwidth_bps: 1e6 };
        let cluster = FogCluster::new(nodes(&[1e6, 1e6]), sync, 2).unwrap();
        let zero = LatencyModel::new(0.0, 0.0, 0.0);
        let c = cost_matrix(&g, &[vec![0, 1], vec![2, 3]], &cluster, &[zero, zero], 0.0).unwrap();
        // One boundary vertex per side: 2 · (1 + 1) ms.
        assert!((c.get(0, 1) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn cluster_validation() {
        assert_eq!(FogCluster::with_constant_sync(vec![], 0.0, 2), Err(Error::EmptyCluster));
        assert!(FogCluster::with_constant_sync(nodes(&[0.0]), 0.0, 2).is_err());
        assert!(FogCluster::with_constant_sync(nodes(&[1.0]), -1.0, 2).is_err());
        let dup = vec![FogNode { id: 1, bandwidth_bps: 1.0 }, FogNode { id: 1, bandwidth_bps: 1.0 }];
        assert!(FogCluster::with_constant_sync(dup, 0.0, 2).is_err());
    }

    #[test]
    fn placement_cover_checks() {
        assert!(Placement::from_partitions(&[vec![0, 1], vec![1]], &[0, 1], 2).is_err());
        assert!(Placement::from_partitions(&[vec![0], vec![]], &[0, 1], 2).is_err());
        let p = Placement::from_partitions(&[vec![0, 2], vec![1]], &[1, 0], 3).unwrap();
        assert_eq!(p.assignment(), &[1, 0, 1]);
        assert_eq!(p.partition(1), vec![0, 2]);
        assert_eq!(p.sizes(), vec![1, 2]);
    }

    #[test]
    fn boundary_sets() {
        let g = path(5);
        let p = Placement::new(vec![0, 0, 1, 1, 1], 2).unwrap();
        assert_eq!(p.boundary(&g, 0), vec![1]);
        assert_eq!(p.boundary(&g, 1), vec![2]);
        assert_eq!(p.boundary_counts(&g), vec![1, 1]);
    }

    #[test]
    fn greedy_hand_trace() {
        let c = CostMatrix::from_rows(&[vec![1.0, 4.0], vec![2.0, 3.0]]).unwrap();
        assert_eq!(baseline_assign(&c, BaselineStrategy::Greedy, 0), vec![0, 1]);
        let r = baseline_assign(&c, BaselineStrategy::Random, 9);
        assert_eq!(r, baseline_assign(&c, BaselineStrategy::Random, 9));
    }

    #[test]
    fn single_fog_plan_matches_baselines() {
        let g = path(20);
        let cluster = FogCluster::with_constant_sync(nodes(&[1e6]), 1.0, 2).unwrap();
        let m = [LatencyModel::new(0.1, 0.01, 1.0)];
        let cfg = PartitionConfig::default();
        let p = plan(&g, &cluster, &m, 100.0, &cfg).unwrap();
        for s in [BaselineStrategy::Random, BaselineStrategy::Greedy] {
            let b = plan_baseline(&g, &cluster, &m, 100.0, &cfg, s, 3).unwrap();
            assert_eq!(b.placement, p.placement);
            assert_eq!(b.makespan_ms, p.makespan_ms);
        }
        assert!((p.makespan_ms - (2.0 + 3.0 + 2.0)).abs() < 1e-9);
    }

    #[test]
    fn plan_makespan_is_bottleneck() {
        let g = path(40);
        let cluster = FogCluster::with_constant_sync(nodes(&[1e6, 4e6]), 1.0, 2).unwrap();
        let m = [LatencyModel::new(0.5, 0.1, 1.0), LatencyModel::new(0.1, 0.02, 1.0)];
        let p = plan(&g, &cluster, &m, 1000.0, &PartitionConfig::default()).unwrap();
        let bottleneck = p.costs.bottleneck_of(&p.fog_of_partition);
        assert!((p.makespan_ms - bottleneck).abs() < 1e-9);
    }
}
