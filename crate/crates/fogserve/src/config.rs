//! Scenario, cluster and profile documents (TOML).

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use fogserve_core::planner::{PartitionConfig, SyncCost};
use fogserve_core::profiler::LatencyModel;
use fogserve_core::sim::{presets, CloudSpec, NodeSpec, ScenarioConfig, WanProfile};
use fogserve_core::sim::Strategy;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FogEntry {
    pub id: u32,
    pub bandwidth_bps: f64,
    #[serde(default = "default_access")]
    pub access_latency_ms: f64,
    pub per_vertex_ms: f64,
    pub per_neighbor_ms: f64,
    pub intercept_ms: f64,
}

fn default_access() -> f64 {
    presets::ACCESS_LATENCY_MS
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CloudEntry {
    pub bandwidth_bps: f64,
    pub rtt_ms: f64,
    pub per_vertex_ms: f64,
    pub per_neighbor_ms: f64,
    pub intercept_ms: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundarySync {
    pub base_ms: f64,
    pub bytes_per_vertex: f64,
    pub bandwidth_bps: f64,
}

/// A scenario document. `preset` seeds the fog list (`"heterogeneous"` with
/// `preset_seed`, or `"homogeneous"` with `fog_count`); explicit `[[fog]]`
/// tables replace it. Fogs are kept sorted by id.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub preset: Option<String>,
    pub preset_seed: Option<u64>,
    pub fog_count: Option<usize>,
    #[serde(default, rename = "fog", skip_serializing_if = "Vec::is_empty")]
    pub fogs: Vec<FogEntry>,
    pub cloud: Option<CloudEntry>,
    pub sync_ms: Option<f64>,
    pub boundary_sync: Option<BoundarySync>,
    pub layers: Option<usize>,
    pub codec: Option<bool>,
    pub quant_bits: Option<[u32; 4]>,
    pub exec_noise: Option<f64>,
    pub profile_noise: Option<f64>,
    pub access_jitter: Option<f64>,
    pub samples_per_axis: Option<usize>,
    pub imbalance: Option<f64>,
    pub partition_seed: Option<u64>,
    /// Load-trace CSV, relative to the scenario file.
    pub trace: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub seeds: Vec<u64>,
}

/// A loaded scenario with paths resolved.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub trace: Option<PathBuf>,
    pub seeds: Vec<u64>,
}

impl Scenario {
    pub fn fog_ids(&self) -> Vec<u32> {
        self.config.fogs.iter().map(|f| f.id).collect()
    }
}

fn model_of(per_vertex_ms: f64, per_neighbor_ms: f64, intercept_ms: f64) -> LatencyModel {
    LatencyModel::new(per_vertex_ms, per_neighbor_ms, intercept_ms)
}

impl ScenarioFile {
    pub fn parse(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn to_config(&self) -> Result<ScenarioConfig> {
        let mut config = match self.preset.as_deref() {
            None => ScenarioConfig::new(Vec::new()),
            Some("heterogeneous") => presets::heterogeneous(self.preset_seed.unwrap_or(0)),
            Some("homogeneous") => presets::homogeneous(self.fog_count.unwrap_or(4)),
            Some(other) => bail!("unknown preset {other:?} (expected heterogeneous or homogeneous)"),
        };
        if !self.fogs.is_empty() {
            let mut fogs: Vec<NodeSpec> = self
                .fogs
                .iter()
                .map(|f| NodeSpec {
                    id: f.id,
                    bandwidth_bps: f.bandwidth_bps,
                    access_latency_ms: f.access_latency_ms,
                    truth: model_of(f.per_vertex_ms, f.per_neighbor_ms, f.intercept_ms),
                })
                .collect();
            fogs.sort_by_key(|f| f.id);
            config.fogs = fogs;
        }
        ensure!(!config.fogs.is_empty(), "scenario lists no fogs");
        if let Some(c) = &self.cloud {
            config.cloud = CloudSpec {
                wan: WanProfile { bandwidth_bps: c.bandwidth_bps, rtt_ms: c.rtt_ms },
                truth: model_of(c.per_vertex_ms, c.per_neighbor_ms, c.intercept_ms),
            };
        }
        config.sync = match (self.sync_ms, self.boundary_sync) {
            (Some(_), Some(_)) => bail!("give either sync_ms or [boundary_sync], not both"),
            (Some(ms), None) => SyncCost::Constant(ms),
            (None, Some(b)) => {
                SyncCost::BoundaryAware { base_ms: b.base_ms, bytes_per_vertex: b.bytes_per_vertex, bandwidth_bps: b.bandwidth_bps }
            }
            (None, None) => config.sync,
        };
        macro_rules! set {
            ($($field:ident),*) => { $(if let Some(x) = self.$field { config.$field = x; })* };
        }
        set!(layers, codec, quant_bits, exec_noise, profile_noise, access_jitter, samples_per_axis);
        config.partition = PartitionConfig {
            imbalance: self.imbalance.unwrap_or(config.partition.imbalance),
            seed: self.partition_seed.unwrap_or(config.partition.seed),
        };
        config.validate()?;
        Ok(config)
    }

    /// The explicit document for a configuration.
    pub fn from_config(config: &ScenarioConfig, seeds: Vec<u64>) -> Self {
        let (sync_ms, boundary_sync) = match config.sync {
            SyncCost::Constant(ms) => (Some(ms), None),
            SyncCost::BoundaryAware { base_ms, bytes_per_vertex, bandwidth_bps } => {
                (None, Some(BoundarySync { base_ms, bytes_per_vertex, bandwidth_bps }))
            }
        };
        let c = &config.cloud;
        Self {
            fogs: config
                .fogs
                .iter()
                .map(|f| FogEntry {
                    id: f.id,
                    bandwidth_bps: f.bandwidth_bps,
                    access_latency_ms: f.access_latency_ms,
                    per_vertex_ms: f.truth.per_vertex_ms,
                    per_neighbor_ms: f.truth.per_neighbor_ms,
                    intercept_ms: f.truth.intercept_ms,
                })
                .collect(),
            cloud: Some(CloudEntry {
                bandwidth_bps: c.wan.bandwidth_bps,
                rtt_ms: c.wan.rtt_ms,
                per_vertex_ms: c.truth.per_vertex_ms,
                per_neighbor_ms: c.truth.per_neighbor_ms,
                intercept_ms: c.truth.intercept_ms,
            }),
            sync_ms,
            boundary_sync,
            layers: Some(config.layers),
            codec: Some(config.codec),
            quant_bits: Some(config.quant_bits),
            exec_noise: Some(config.exec_noise),
            profile_noise: Some(config.profile_noise),
            access_jitter: Some(config.access_jitter),
            samples_per_axis: Some(config.samples_per_axis),
            imbalance: Some(config.partition.imbalance),
            partition_seed: Some(config.partition.seed),
            seeds,
            ..Default::default()
        }
    }
}

pub fn load_scenario(path: &Path) -> Result<Scenario> {
    if !path.is_file() {
        bail!("scenario not found: {}", path.display());
    }
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let file = ScenarioFile::parse(&text).with_context(|| format!("parsing {}", path.display()))?;
    let config = file.to_config().with_context(|| format!("in scenario {}", path.display()))?;
    let base = path.parent().unwrap_or(Path::new("."));
    Ok(Scenario { config, trace: file.trace.map(|t| base.join(t)), seeds: file.seeds })
}

pub fn write_scenario(path: &Path, config: &ScenarioConfig, seeds: Vec<u64>) -> Result<()> {
    let text = toml::to_string_pretty(&ScenarioFile::from_config(config, seeds))?;
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// One fitted node profile with its online load state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileEntry {
    pub id: u32,
    pub per_vertex_ms: f64,
    pub per_neighbor_ms: f64,
    pub intercept_ms: f64,
    #[serde(default)]
    pub residual_std_error: f64,
    #[serde(default = "one")]
    pub eta: f64,
    #[serde(default)]
    pub timestamp: u64,
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfilesFile {
    #[serde(rename = "node")]
    pub nodes: Vec<ProfileEntry>,
}

impl ProfilesFile {
    pub fn from_models(ids: &[u32], models: &[LatencyModel]) -> Self {
        let nodes = ids
            .iter()
            .zip(models)
            .map(|(&id, m)| ProfileEntry {
                id,
                per_vertex_ms: m.per_vertex_ms,
                per_neighbor_ms: m.per_neighbor_ms,
                intercept_ms: m.intercept_ms,
                residual_std_error: m.residual_std_error,
                eta: 1.0,
                timestamp: 0,
            })
            .collect();
        Self { nodes }
    }

    /// Load-scaled models in the order of `ids`.
    pub fn models_for(&self, ids: &[u32]) -> Result<Vec<LatencyModel>> {
        ids.iter()
            .map(|id| {
                let p = self
                    .nodes
                    .iter()
                    .find(|p| p.id == *id)
                    .with_context(|| format!("no profile for fog {id}"))?;
                ensure!(p.eta.is_finite() && p.eta > 0.0, "fog {id}: eta must be positive");
                let mut m = LatencyModel::new(p.per_vertex_ms, p.per_neighbor_ms, p.intercept_ms);
                m.residual_std_error = p.residual_std_error;
                Ok(m.scaled(p.eta))
            })
            .collect()
    }
}

pub fn write_profiles(path: &Path, profiles: &ProfilesFile) -> Result<()> {
    fs::write(path, toml::to_string_pretty(profiles)?).with_context(|| format!("writing {}", path.display()))
}

pub fn read_profiles(path: &Path) -> Result<ProfilesFile> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Everything one `run` invocation needs.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentSpec {
    pub graph: PathBuf,
    pub scenario: PathBuf,
    pub strategies: Vec<Strategy>,
    pub seeds: Vec<u64>,
    pub out: PathBuf,
    pub plots: bool,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if !self.scenario.is_file() {
            bail!("scenario not found: {}", self.scenario.display());
        }
        if !self.graph.is_dir() {
            bail!("graph not found: {}", self.graph.display());
        }
        ensure!(!self.seeds.is_empty(), "seed list is empty");
        ensure!(!self.strategies.is_empty(), "strategy list is empty");
        Ok(())
    }
}
