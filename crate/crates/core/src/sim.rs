//! Deterministic simulation of the serving pipeline.
//!
//! Devices upload raw or packed features to their fog, fogs run the GNN as K
//! bulk-synchronous supersteps exchanging boundary activations, and the
//! results are gathered. Time is logical: each node's compute cost comes from
//! its ground-truth latency model scaled by background load and seeded noise.
//! Embeddings are computed by the real inference engine and never depend on
//! simulated time.

use alloc::collections::{BTreeMap, BinaryHeap};
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::cell::RefCell;
use core::cmp::{Ordering, Reverse};
use core::fmt;
use core::str::FromStr;

use rand::Rng;

use crate::gnn::{layer_forward, predict_labels, ActivationSet, GnnModel};
use crate::graph::{Cardinality, Graph, VertexId};
use crate::planner::{
    balanced_partition, baseline_assign, cost_matrix, plan_with_partitions, BaselineStrategy, FogCluster, FogNode,
    PartitionConfig, Placement, SyncCost,
};
use crate::profiler::{build_calibration_set, default_axes, fit_latency_model, LatencyModel, DEFAULT_SAMPLES_PER_AXIS};
use crate::quant::{
    compression_ratio, dequantized_features, make_quant_plan, pack_vertices, DeflateCodec, QuantPlan, DEFAULT_BITS,
};
use crate::rng::{self, streams};
use crate::{Error, Result};

/// Reference ground-truth models for the three fog classes and the cloud.
pub mod presets {
    use super::*;

    pub const WEAK_FOG: LatencyModel = LatencyModel::new(0.060, 0.006, 20.0);
    pub const MODERATE_FOG: LatencyModel = LatencyModel::new(0.030, 0.003, 15.0);
    pub const POWERFUL_FOG: LatencyModel = LatencyModel::new(0.012, 0.0012, 10.0);
    /// Ten times the moderate fog's throughput.
    pub const CLOUD: LatencyModel = LatencyModel::new(0.003, 0.0003, 5.0);
    pub const ACCESS_LATENCY_MS: f64 = 5.0;
    pub const SYNC_MS: f64 = 10.0;
    pub const WAN: WanProfile = WanProfile { bandwidth_bps: 2.0e6, rtt_ms: 100.0 };

    fn node(id: u32, bandwidth_bps: f64, truth: LatencyModel) -> NodeSpec {
        NodeSpec { id, bandwidth_bps, access_latency_ms: ACCESS_LATENCY_MS, truth }
    }

    /// `n` identical moderate fogs on 8 MB/s links.
    pub fn homogeneous(n: usize) -> ScenarioConfig {
        let fogs = (0..n as u32).map(|id| node(id, 8.0e6, MODERATE_FOG)).collect();
        ScenarioConfig::new(fogs)
    }

    /// One weak, four moderate and one powerful fog. The seed jitters every
    /// coefficient by up to ±10% and draws bandwidths from per-class ranges.
    pub fn heterogeneous(seed: u64) -> ScenarioConfig {
        let mut rng = rng::stream(seed, streams::MEASUREMENT ^ 0x40);
        let jitter = |m: LatencyModel, rng: &mut rand_chacha::ChaCha8Rng| {
            let mut f = || 1.0 + rng.random_range(-0.1..=0.1);
            LatencyModel::new(m.per_vertex_ms * f(), m.per_neighbor_ms * f(), m.intercept_ms * f())
        };
        let mut fogs = Vec::with_capacity(6);
        let weak = jitter(WEAK_FOG, &mut rng);
        fogs.push(node(0, rng.random_range(3.0e6..=5.0e6), weak));
        for id in 1..5 {
            let truth = jitter(MODERATE_FOG, &mut rng);
            fogs.push(node(id, rng.random_range(5.0e6..=12.0e6), truth));
        }
        let strong = jitter(POWERFUL_FOG, &mut rng);
        fogs.push(node(5, rng.random_range(6.0e6..=10.0e6), strong));
        ScenarioConfig::new(fogs)
    }
}

/// A compute node as the simulator sees it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NodeSpec {
    pub id: u32,
    /// Device→node upload bandwidth, bytes per second.
    pub bandwidth_bps: f64,
    /// Fixed per-device access delay before the upload completes.
    pub access_latency_ms: f64,
    /// Execution time the node actually exhibits under neutral load.
    pub truth: LatencyModel,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WanProfile {
    pub bandwidth_bps: f64,
    pub rtt_ms: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CloudSpec {
    pub wan: WanProfile,
    pub truth: LatencyModel,
}

impl CloudSpec {
    pub fn as_node(&self) -> NodeSpec {
        NodeSpec { id: u32::MAX, bandwidth_bps: self.wan.bandwidth_bps, access_latency_ms: self.wan.rtt_ms, truth: self.truth }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioConfig {
    pub fogs: Vec<NodeSpec>,
    pub cloud: CloudSpec,
    pub sync: SyncCost,
    /// GNN depth K.
    pub layers: usize,
    /// Degree-aware quantization and lossless packing for the planned strategy.
    pub codec: bool,
    pub quant_bits: [u32; 4],
    /// Relative half-width of uniform compute noise per node and layer.
    pub exec_noise: f64,
    /// Relative half-width of uniform noise on profiling measurements.
    pub profile_noise: f64,
    /// Each device's access delay is stretched by up to this fraction.
    pub access_jitter: f64,
    pub samples_per_axis: usize,
    pub partition: PartitionConfig,
    /// Pre-fitted per-fog models; profiled from `truth` when absent.
    pub profiles: Option<Vec<LatencyModel>>,
    /// Externally supplied `vertex -> partition` map used instead of the built-in partitioner.
    pub fixed_partition: Option<Vec<u32>>,
}

impl ScenarioConfig {
    pub fn new(fogs: Vec<NodeSpec>) -> Self {
        Self {
            fogs,
            cloud: CloudSpec { wan: presets::WAN, truth: presets::CLOUD },
            sync: SyncCost::Constant(presets::SYNC_MS),
            layers: 2,
            codec: true,
            quant_bits: DEFAULT_BITS,
            exec_noise: 0.05,
            profile_noise: 0.05,
            access_jitter: 0.2,
            samples_per_axis: DEFAULT_SAMPLES_PER_AXIS,
            partition: PartitionConfig::default(),
            profiles: None,
            fixed_partition: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.fogs.is_empty() {
            return Err(Error::EmptyCluster);
        }
        let cloud = self.cloud.as_node();
        for node in self.fogs.iter().chain(core::iter::once(&cloud)) {
            if !(node.bandwidth_bps.is_finite() && node.bandwidth_bps > 0.0) {
                return Err(Error::InvalidParameter(format!("node {} bandwidth must be positive", node.id)));
            }
            if !(node.access_latency_ms.is_finite() && node.access_latency_ms >= 0.0) {
                return Err(Error::InvalidParameter(format!("node {} access latency must be non-negative", node.id)));
            }
        }
        if self.layers == 0 {
            return Err(Error::InvalidParameter("a GNN needs at least one layer".into()));
        }
        for (name, x) in [("exec_noise", self.exec_noise), ("profile_noise", self.profile_noise), ("access_jitter", self.access_jitter)] {
            if !(0.0..1.0).contains(&x) {
                return Err(Error::InvalidParameter(format!("{name} must lie in [0, 1)")));
            }
        }
        if let Some(p) = &self.profiles {
            if p.len() != self.fogs.len() {
                return Err(Error::DimensionMismatch { expected: self.fogs.len(), actual: p.len() });
            }
        }
        QuantPlan::new([0, 0, 0], self.quant_bits)?;
        self.cluster().map(|_| ())
    }

    pub fn cluster(&self) -> Result<FogCluster> {
        let nodes = self.fogs.iter().map(|f| FogNode { id: f.id, bandwidth_bps: f.bandwidth_bps }).collect();
        FogCluster::new(nodes, self.sync, self.layers)
    }

    /// The same scenario restricted to its first `count` fogs.
    pub fn truncated(&self, count: usize) -> Self {
        let mut out = self.clone();
        out.fogs.truncate(count);
        if let Some(p) = out.profiles.as_mut() {
            p.truncate(count);
        }
        out.fixed_partition = None;
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Strategy {
    /// Everything shipped over the WAN to one cloud server.
    Cloud,
    /// The single fog with the lowest predicted latency.
    SingleFog,
    /// Balanced partitions mapped to fogs at random, raw features.
    MultifogBaseline,
    /// Balanced partitions mapped greedily by cost, raw features.
    MultifogGreedy,
    /// Balanced partitions mapped by bottleneck assignment, optionally packed.
    Fograph,
}

impl Strategy {
    pub const ALL: [Strategy; 5] =
        [Strategy::Cloud, Strategy::SingleFog, Strategy::MultifogBaseline, Strategy::MultifogGreedy, Strategy::Fograph];

    pub fn name(&self) -> &'static str {
        match self {
            Strategy::Cloud => "cloud",
            Strategy::SingleFog => "single_fog",
            Strategy::MultifogBaseline => "multifog_baseline",
            Strategy::MultifogGreedy => "multifog_greedy",
            Strategy::Fograph => "fograph",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown strategy {s:?}")))
    }
}

/// Which nodes serve, which vertices each holds, and whether features are packed.
#[derive(Clone, Debug, PartialEq)]
pub struct Deployment {
    pub strategy: Strategy,
    pub nodes: Vec<NodeSpec>,
    /// Index into the scenario's fog list per node; `None` for the cloud.
    pub fog_index: Vec<Option<usize>>,
    pub placement: Placement,
    pub codec: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ServingReport {
    pub strategy: Strategy,
    pub node_ids: Vec<u32>,
    pub collection_ms: Vec<f64>,
    /// Compute of all layers plus K synchronization rounds.
    pub execution_ms: Vec<f64>,
    pub compute_ms: Vec<f64>,
    /// Slowest node's synchronization cost per layer.
    pub layer_sync_ms: Vec<f64>,
    /// Bytes each node received from devices.
    pub payload_bytes: Vec<usize>,
    pub assembly_ms: f64,
    /// `max_j (collection_j + execution_j) + assembly`.
    pub end_to_end_ms: f64,
    /// Completion time when every superstep waits at a global barrier.
    pub barrier_makespan_ms: f64,
    /// Inferences per second with collection, execution and assembly pipelined.
    pub throughput_per_s: f64,
    pub embeddings: Option<ActivationSet>,
    /// Fraction of vertices whose predicted label differs from full-precision inference.
    pub flip_rate: Option<f64>,
}

impl ServingReport {
    pub fn node_totals(&self) -> impl Iterator<Item = f64> + '_ {
        self.collection_ms.iter().zip(&self.execution_ms).map(|(c, e)| c + e)
    }
}

/// `bytes_j / b_j + access_j · (1 + slowest device stretch_j)` in milliseconds.
pub fn simulate_collection(payload_bytes: &[usize], nodes: &[NodeSpec], device_stretch: &[f64]) -> Vec<f64> {
    payload_bytes
        .iter()
        .zip(nodes)
        .zip(device_stretch)
        .map(|((&bytes, node), &stretch)| {
            bytes as f64 / node.bandwidth_bps * 1000.0 + node.access_latency_ms * (1.0 + stretch)
        })
        .collect()
}

/// K supersteps: every node computes its partition's next layer, then all
/// nodes exchange boundary activations.
pub fn distributed_inference(
    model: &GnnModel,
    g: &Graph,
    placement: &Placement,
    input: ActivationSet,
) -> Result<ActivationSet> {
    if placement.vertex_count() != g.vertex_count() {
        return Err(Error::DimensionMismatch { expected: g.vertex_count(), actual: placement.vertex_count() });
    }
    let parts = placement.partitions();
    let mut h = input;
    for k in 1..=model.num_layers() {
        let mut outputs = Vec::with_capacity(parts.len());
        for part in &parts {
            outputs.push(layer_forward(model, k, part, &h, g)?);
        }
        h = ActivationSet::merge(k, model.dim_at(k), &outputs)?;
    }
    Ok(h)
}

/// Per-node execution timing of one round.
#[derive(Clone, Debug, PartialEq)]
pub struct ExecutionTiming {
    /// `[node][layer]` compute milliseconds.
    pub layer_compute_ms: Vec<Vec<f64>>,
    /// Per-node cost of one synchronization round.
    pub round_sync_ms: Vec<f64>,
}

impl ExecutionTiming {
    pub fn compute_ms(&self) -> Vec<f64> {
        self.layer_compute_ms.iter().map(|l| l.iter().sum()).collect()
    }

    pub fn execution_ms(&self) -> Vec<f64> {
        let layers = self.layer_compute_ms.first().map_or(0, Vec::len) as f64;
        self.compute_ms().iter().zip(&self.round_sync_ms).map(|(c, s)| c + layers * s).collect()
    }
}

/// Compute cost `load_j · truth_j(card_j)`, split evenly over the layers and
/// perturbed by `noise[j][k]`. Nodes without vertices cost nothing.
pub fn simulate_execution(
    g: &Graph,
    placement: &Placement,
    nodes: &[NodeSpec],
    loads: &[f64],
    sync: SyncCost,
    noise: &[Vec<f64>],
) -> Result<ExecutionTiming> {
    let n = nodes.len();
    if placement.fog_count() != n || loads.len() != n || noise.len() != n {
        return Err(Error::DimensionMismatch { expected: n, actual: placement.fog_count() });
    }
    let cards = placement.cardinalities(g);
    let boundaries = match sync {
        SyncCost::Constant(_) => vec![0; n],
        SyncCost::BoundaryAware { .. } => placement.boundary_counts(g),
    };
    let mut layer_compute_ms = Vec::with_capacity(n);
    for j in 0..n {
        let layers = noise[j].len() as f64;
        let per_layer = if cards[j].num_vertices == 0 { 0.0 } else { loads[j] * nodes[j].truth.predict(cards[j]) / layers };
        layer_compute_ms.push(noise[j].iter().map(|e| per_layer * (1.0 + e)).collect());
    }
    let round_sync_ms = boundaries.iter().map(|&b| sync.round_ms(b)).collect();
    Ok(ExecutionTiming { layer_compute_ms, round_sync_ms })
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Time(f64);

impl Eq for Time {}

impl PartialOrd for Time {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Time {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum Event {
    Collected(usize),
    Computed(usize, usize),
    Barrier(usize),
    Assembled,
}

/// Logical-time replay of a round with a global barrier after collection and
/// after every layer.
fn barrier_makespan(collection: &[f64], timing: &ExecutionTiming, active: &[bool], layer_sync: &[f64], assembly: f64) -> f64 {
    let n = collection.len();
    let layers = layer_sync.len();
    let mut queue = BinaryHeap::new();
    for (j, &t) in collection.iter().enumerate() {
        queue.push(Reverse((Time(t), Event::Collected(j))));
    }
    let mut pending = n;
    let mut finish = 0.0;
    while let Some(Reverse((Time(now), event))) = queue.pop() {
        match event {
            Event::Collected(_) | Event::Computed(..) => {
                pending -= 1;
                if pending > 0 {
                    continue;
                }
                let layer = match event {
                    Event::Computed(_, k) => k,
                    _ => 0,
                };
                if layer == 0 {
                    if layers == 0 {
                        queue.push(Reverse((Time(now + assembly), Event::Assembled)));
                        continue;
                    }
                    pending = n;
                    for j in 0..n {
                        queue.push(Reverse((Time(now + timing.layer_compute_ms[j][0]), Event::Computed(j, 1))));
                    }
                } else {
                    queue.push(Reverse((Time(now + layer_sync[layer - 1]), Event::Barrier(layer))));
                }
            }
            Event::Barrier(k) => {
                if k == layers {
                    let gather = if active.iter().filter(|&&a| a).count() > 1 { assembly } else { 0.0 };
                    queue.push(Reverse((Time(now + gather), Event::Assembled)));
                } else {
                    pending = n;
                    for j in 0..n {
                        queue.push(Reverse((Time(now + timing.layer_compute_ms[j][k]), Event::Computed(j, k + 1))));
                    }
                }
            }
            Event::Assembled => finish = now,
        }
    }
    finish
}

/// A scenario bound to a graph: fitted profiles, quantization plan and
/// cached partitions, ready to deploy and serve strategies.
#[derive(Clone, Debug)]
pub struct Testbed<'g> {
    g: &'g Graph,
    config: ScenarioConfig,
    profiles: Vec<LatencyModel>,
    quant: Option<QuantPlan>,
    quant_ratio: f64,
    partitions: Vec<Vec<VertexId>>,
    model: Option<&'g GnnModel>,
    reference_labels: Option<Vec<u32>>,
    full_input: Option<ActivationSet>,
    packed_input: Option<ActivationSet>,
    /// Compressed stream size per packed vertex set.
    packed_sizes: RefCell<BTreeMap<Vec<VertexId>, usize>>,
}

impl<'g> Testbed<'g> {
    /// Profiles every fog (unless profiles are supplied), plans quantization
    /// and partitions the graph. With a model, serving also computes
    /// embeddings and label flip rates.
    pub fn new(g: &'g Graph, config: ScenarioConfig, model: Option<&'g GnnModel>, seed: u64) -> Result<Self> {
        config.validate()?;
        let profiles = match &config.profiles {
            Some(p) => p.clone(),
            None => profile_fogs(g, &config, seed)?,
        };
        let (quant, quant_ratio) = if g.edge_count() == 0 {
            (None, 1.0)
        } else {
            let plan = make_quant_plan(&g.degree_cdf())?.with_bits(config.quant_bits)?;
            (Some(plan), compression_ratio(&plan, &g.degree_cdf()).ratio)
        };
        let n = config.fogs.len();
        let partitions = match &config.fixed_partition {
            Some(assignment) => {
                if assignment.len() != g.vertex_count() {
                    return Err(Error::DimensionMismatch { expected: g.vertex_count(), actual: assignment.len() });
                }
                let mut parts = vec![Vec::new(); n];
                for (v, &p) in assignment.iter().enumerate() {
                    parts
                        .get_mut(p as usize)
                        .ok_or_else(|| Error::InvalidPlacement(format!("partition {p} out of range")))?
                        .push(v as VertexId);
                }
                parts
            }
            None => balanced_partition(g, n, &config.partition)?,
        };
        let mut bed = Self {
            g,
            config,
            profiles,
            quant,
            quant_ratio,
            partitions,
            model,
            reference_labels: None,
            full_input: None,
            packed_input: None,
            packed_sizes: RefCell::new(BTreeMap::new()),
        };
        if let Some(model) = model {
            if model.num_layers() != bed.config.layers {
                return Err(Error::DimensionMismatch { expected: bed.config.layers, actual: model.num_layers() });
            }
            let full = ActivationSet::from_features(g);
            let reference = crate::gnn::infer_from(model, g, full.clone())?;
            bed.reference_labels = Some(predict_labels(&reference)?);
            if let Some(plan) = &bed.quant {
                bed.packed_input = Some(ActivationSet::from_matrix(g.feature_dim(), dequantized_features(g, plan)?)?);
            }
            bed.full_input = Some(full);
        }
        Ok(bed)
    }

    pub fn graph(&self) -> &'g Graph {
        self.g
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.config
    }

    pub fn profiles(&self) -> &[LatencyModel] {
        &self.profiles
    }

    pub fn quant_plan(&self) -> Option<&QuantPlan> {
        self.quant.as_ref()
    }

    pub fn partitions(&self) -> &[Vec<VertexId>] {
        &self.partitions
    }

    pub fn phi_bytes(&self) -> f64 {
        self.g.feature_bytes() as f64
    }

    /// Planning models: profiles scaled by the current load estimates.
    pub fn loaded_profiles(&self, eta: &[f64]) -> Vec<LatencyModel> {
        self.profiles.iter().zip(eta).map(|(m, &e)| m.scaled(e)).collect()
    }

    /// Places the graph according to `strategy`, planning with load estimates `eta`.
    pub fn deploy(&self, strategy: Strategy, seed: u64, eta: &[f64]) -> Result<Deployment> {
        let n = self.config.fogs.len();
        if eta.len() != n {
            return Err(Error::DimensionMismatch { expected: n, actual: eta.len() });
        }
        let vertex_count = self.g.vertex_count();
        let models = self.loaded_profiles(eta);
        let phi = self.phi_bytes();
        match strategy {
            Strategy::Cloud => Ok(Deployment {
                strategy,
                nodes: vec![self.config.cloud.as_node()],
                fog_index: vec![None],
                placement: Placement::new(vec![0; vertex_count], 1)?,
                codec: false,
            }),
            Strategy::SingleFog => {
                let whole = Cardinality::new(vertex_count, 0);
                let cost = |j: usize| {
                    vertex_count as f64 * phi / self.config.fogs[j].bandwidth_bps * 1000.0 + models[j].predict(whole)
                };
                let best = (0..n).fold(0, |best, j| if cost(j) < cost(best) { j } else { best });
                Ok(Deployment {
                    strategy,
                    nodes: vec![self.config.fogs[best]],
                    fog_index: vec![Some(best)],
                    placement: Placement::new(vec![0; vertex_count], 1)?,
                    codec: false,
                })
            }
            Strategy::MultifogBaseline | Strategy::MultifogGreedy => {
                let cluster = self.config.cluster()?;
                let costs = cost_matrix(self.g, &self.partitions, &cluster, &models, phi)?;
                let baseline = if strategy == Strategy::MultifogBaseline {
                    BaselineStrategy::Random
                } else {
                    BaselineStrategy::Greedy
                };
                let fog_of_partition = baseline_assign(&costs, baseline, seed);
                self.multifog(strategy, Placement::from_partitions(&self.partitions, &fog_of_partition, vertex_count)?, false)
            }
            Strategy::Fograph => {
                let placement = self.plan(&models)?.placement;
                self.multifog(strategy, placement, self.config.codec && self.quant.is_some())
            }
        }
    }

    /// Bottleneck-assignment plan over the cached partitions for `models`.
    pub fn plan(&self, models: &[LatencyModel]) -> Result<crate::planner::Plan> {
        let codec = self.config.codec && self.quant.is_some();
        let phi = if codec { self.phi_bytes() * self.quant_ratio } else { self.phi_bytes() };
        plan_with_partitions(self.g, &self.config.cluster()?, models, phi, self.partitions.clone())
    }

    /// Deployment over every fog with a given placement.
    pub fn multifog(&self, strategy: Strategy, placement: Placement, codec: bool) -> Result<Deployment> {
        let n = self.config.fogs.len();
        if placement.fog_count() != n || placement.vertex_count() != self.g.vertex_count() {
            return Err(Error::InvalidPlacement("placement does not match the scenario".into()));
        }
        Ok(Deployment {
            strategy,
            nodes: self.config.fogs.clone(),
            fog_index: (0..n).map(Some).collect(),
            placement,
            codec,
        })
    }

    /// Serves one inference round. `load` is each fog's true background load
    /// multiplier (the cloud is never loaded).
    pub fn serve(&self, d: &Deployment, load: &[f64], seed: u64) -> Result<ServingReport> {
        let g = self.g;
        let n = d.nodes.len();
        if load.len() != self.config.fogs.len() {
            return Err(Error::DimensionMismatch { expected: self.config.fogs.len(), actual: load.len() });
        }
        let loads: Vec<f64> = d.fog_index.iter().map(|i| i.map_or(1.0, |i| load[i])).collect();
        let parts = d.placement.partitions();

        let payload_bytes: Vec<usize> = match (&self.quant, d.codec) {
            (Some(plan), true) => {
                let mut out = Vec::with_capacity(n);
                for part in &parts {
                    out.push(self.packed_size(plan, part)?);
                }
                out
            }
            _ => parts.iter().map(|p| p.len() * g.feature_bytes()).collect(),
        };

        let mut jitter_rng = rng::stream(seed, streams::DEVICE_JITTER);
        let mut stretch = vec![0.0f64; n];
        for v in 0..g.vertex_count() as VertexId {
            let u: f64 = jitter_rng.random();
            let j = d.placement.fog_of(v);
            stretch[j] = stretch[j].max(u * self.config.access_jitter);
        }
        let collection_ms = simulate_collection(&payload_bytes, &d.nodes, &stretch);

        let layers = self.config.layers;
        let mut noise_rng = rng::stream(seed, streams::EXEC_NOISE);
        let amp = self.config.exec_noise;
        let noise: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..layers).map(|_| if amp > 0.0 { noise_rng.random_range(-amp..=amp) } else { 0.0 }).collect())
            .collect();
        let timing = simulate_execution(g, &d.placement, &d.nodes, &loads, self.config.sync, &noise)?;
        let compute_ms = timing.compute_ms();
        let execution_ms = timing.execution_ms();

        let active: Vec<bool> = parts.iter().map(|p| !p.is_empty()).collect();
        let max_sync = timing
            .round_sync_ms
            .iter()
            .zip(&active)
            .filter(|(_, &a)| a)
            .map(|(&s, _)| s)
            .fold(0.0, f64::max);
        let layer_sync_ms = vec![max_sync; layers];
        let assembly_ms = if active.iter().filter(|&&a| a).count() > 1 { self.config.sync.round_ms(0) } else { 0.0 };

        let end_to_end_ms =
            collection_ms.iter().zip(&execution_ms).map(|(c, e)| c + e).fold(0.0, f64::max) + assembly_ms;
        let barrier_makespan_ms = barrier_makespan(&collection_ms, &timing, &active, &layer_sync_ms, assembly_ms);
        let stage = collection_ms.iter().chain(&execution_ms).copied().fold(assembly_ms, f64::max);
        let throughput_per_s = if stage > 0.0 { 1000.0 / stage } else { f64::INFINITY };

        let (embeddings, flip_rate) = match self.model {
            Some(model) => {
                let input = if d.codec { self.packed_input.clone() } else { self.full_input.clone() };
                let input = input.ok_or(Error::InvalidParameter("missing model input".into()))?;
                let out = distributed_inference(model, g, &d.placement, input)?;
                let labels = predict_labels(&out)?;
                let reference = self.reference_labels.as_ref().expect("set with the model");
                let flips = labels.iter().zip(reference).filter(|(a, b)| a != b).count();
                (Some(out), Some(flips as f64 / g.vertex_count().max(1) as f64))
            }
            None => (None, None),
        };

        Ok(ServingReport {
            strategy: d.strategy,
            node_ids: d.nodes.iter().map(|n| n.id).collect(),
            collection_ms,
            execution_ms,
            compute_ms,
            layer_sync_ms,
            payload_bytes,
            assembly_ms,
            end_to_end_ms,
            barrier_makespan_ms,
            throughput_per_s,
            embeddings,
            flip_rate,
        })
    }

    fn packed_size(&self, plan: &QuantPlan, part: &[VertexId]) -> Result<usize> {
        if part.is_empty() {
            return Ok(0);
        }
        if let Some(&size) = self.packed_sizes.borrow().get(part) {
            return Ok(size);
        }
        let size = pack_vertices(self.g, plan, part, &DeflateCodec::default())?.stream.len();
        self.packed_sizes.borrow_mut().insert(part.to_vec(), size);
        Ok(size)
    }

    /// Deploys under neutral load and serves one round.
    pub fn simulate(&self, strategy: Strategy, seed: u64) -> Result<ServingReport> {
        let neutral = vec![1.0; self.config.fogs.len()];
        let d = self.deploy(strategy, seed, &neutral)?;
        self.serve(&d, &neutral, seed)
    }
}

/// Fits each fog's latency model from noisy timings of a calibration sweep.
pub fn profile_fogs(g: &Graph, config: &ScenarioConfig, seed: u64) -> Result<Vec<LatencyModel>> {
    let samples = build_calibration_set(g, &default_axes(g.vertex_count()), config.samples_per_axis, seed)?;
    let mut rng = rng::stream(seed, streams::MEASUREMENT);
    let amp = config.profile_noise;
    config
        .fogs
        .iter()
        .map(|fog| {
            let obs: Vec<(Cardinality, f64)> = samples
                .iter()
                .map(|s| {
                    let e = if amp > 0.0 { rng.random_range(-amp..=amp) } else { 0.0 };
                    (s.cardinality, fog.truth.predict(s.cardinality) * (1.0 + e))
                })
                .collect();
            fit_latency_model(&obs)
        })
        .collect()
}

/// One round under neutral load.
pub fn simulate_serving(
    g: &Graph,
    config: &ScenarioConfig,
    model: Option<&GnnModel>,
    strategy: Strategy,
    seed: u64,
) -> Result<ServingReport> {
    Testbed::new(g, config.clone(), model, seed)?.simulate(strategy, seed)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepPoint {
    pub fogs: usize,
    pub end_to_end_ms: f64,
    pub report: ServingReport,
}

/// End-to-end latency of `strategy` on the first `count` fogs, for each count.
pub fn sweep_fogs(g: &Graph, config: &ScenarioConfig, counts: &[usize], strategy: Strategy, seed: u64) -> Result<Vec<SweepPoint>> {
    let mut out = Vec::with_capacity(counts.len());
    for &count in counts {
        if count == 0 || count > config.fogs.len() {
            return Err(Error::InvalidParameter(format!("fog count {count} outside 1..={}", config.fogs.len())));
        }
        let bed = Testbed::new(g, config.truncated(count), None, seed)?;
        let report = bed.simulate(strategy, seed)?;
        out.push(SweepPoint { fogs: count, end_to_end_ms: report.end_to_end_ms, report });
    }
    Ok(out)
}

/// Human-readable one-line summary of a report.
pub fn summarize(report: &ServingReport) -> String {
    format!(
        "{}: e2e {:.1} ms, max collection {:.1} ms, max execution {:.1} ms, {:.2} inf/s",
        report.strategy,
        report.end_to_end_ms,
        report.collection_ms.iter().copied().fold(0.0, f64::max),
        report.execution_ms.iter().copied().fold(0.0, f64::max),
        report.throughput_per_s
    )
}
