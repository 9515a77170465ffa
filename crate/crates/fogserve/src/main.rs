use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, ensure, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use fogserve::config::{self, ExperimentSpec, ProfilesFile};
use fogserve::core::gnn::ModelKind;
use fogserve::core::graph::{generate_rmat, RmatParams};
use fogserve::core::planner::{plan_with_partitions, balanced_partition, FogCluster, FogNode};
use fogserve::core::quant::{compression_ratio, make_quant_plan, pack_graph, ByteCodec, DeflateCodec, IdentityCodec, DEFAULT_BITS};
use fogserve::core::scheduler::{LoadTrace, SchedulerConfig, DEFAULT_SKEWNESS, DEFAULT_SLACKNESS};
use fogserve::core::sim::{profile_fogs, sweep_fogs, Strategy};
use fogserve::report::{self, PlanReport};
use fogserve::{acceptance, experiment, formats, verify};
use log::info;
use serde::Serialize;

#[derive(Parser)]
#[command(name = "fogserve", version, about = "Plan, simulate and verify GNN inference served across fog nodes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded RMAT graph directory.
    GenRmat(GenRmatArgs),
    /// Fit per-fog latency models from a simulated calibration sweep.
    Profile(ProfileArgs),
    /// Partition the graph and assign partitions to fogs.
    Plan(PlanArgs),
    /// Quantize and pack the graph's features into a stream.
    Pack(PackArgs),
    /// Serve every strategy for every seed and write results.csv.
    Run(RunArgs),
    /// Replay a load trace with and without the online scheduler.
    Trace(TraceArgs),
    /// Run the oracle suite and, optionally, the acceptance criteria.
    Verify(VerifyArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Toggle {
    On,
    Off,
}

impl From<Toggle> for bool {
    fn from(t: Toggle) -> bool {
        t == Toggle::On
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Model {
    Gcn,
    Gat,
    Sage,
}

impl From<Model> for ModelKind {
    fn from(m: Model) -> ModelKind {
        match m {
            Model::Gcn => ModelKind::Gcn,
            Model::Gat => ModelKind::Gat,
            Model::Sage => ModelKind::GraphSage,
        }
    }
}

#[derive(Args)]
struct GenRmatArgs {
    #[arg(long)]
    vertices: usize,
    #[arg(long, default_value_t = 0.001)]
    density: f64,
    #[arg(long, default_value_t = 32)]
    feature_dim: usize,
    #[arg(long, default_value_t = 8)]
    classes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Probability that a feature element is exactly zero.
    #[arg(long, default_value_t = 0.0)]
    zero_fraction: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ProfileArgs {
    #[arg(long)]
    graph: PathBuf,
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PlanArgs {
    #[arg(long)]
    graph: PathBuf,
    /// Scenario or cluster document listing the fogs.
    #[arg(long, alias = "scenario")]
    cluster: PathBuf,
    #[arg(long)]
    profiles: PathBuf,
    /// Plan report (JSON).
    #[arg(long)]
    out: PathBuf,
    /// Placement export, one "vertex_id fog_id" line per vertex.
    #[arg(long)]
    placement: Option<PathBuf>,
    #[arg(long, value_enum)]
    codec: Option<Toggle>,
    #[arg(long, value_delimiter = ',')]
    quant_bits: Option<Vec<u32>>,
}

#[derive(Args)]
struct PackArgs {
    #[arg(long)]
    graph: PathBuf,
    #[arg(long, value_delimiter = ',')]
    quant_bits: Option<Vec<u32>>,
    /// Lossless stage after quantization.
    #[arg(long, value_enum, default_value = "on")]
    codec: Toggle,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    graph: PathBuf,
    #[arg(long)]
    scenario: PathBuf,
    /// Comma-separated strategy names, or "all".
    #[arg(long, default_value = "cloud,single_fog,multifog_baseline,fograph")]
    strategies: String,
    /// Seeds as a list ("1,2,3") or a half-open range ("0..10"); defaults to the scenario's.
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum)]
    codec: Option<Toggle>,
    #[arg(long, value_delimiter = ',')]
    quant_bits: Option<Vec<u32>>,
    #[arg(long, value_enum, default_value = "gcn")]
    model: Model,
    /// Model weights; a seeded random model is used otherwise.
    #[arg(long)]
    weights: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    model_seed: u64,
    /// Fog counts for a scalability sweep of fograph (e.g. "1,2,3,4,5,6").
    #[arg(long, value_delimiter = ',')]
    sweep: Option<Vec<usize>>,
    /// Render SVG plots next to the CSV files.
    #[arg(long)]
    plots: bool,
}

#[derive(Args)]
struct TraceArgs {
    #[arg(long)]
    graph: PathBuf,
    #[arg(long)]
    scenario: PathBuf,
    /// Load trace CSV; defaults to the scenario's, else a spike on the first fog.
    #[arg(long)]
    trace: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_SLACKNESS)]
    lambda: f64,
    #[arg(long, default_value_t = DEFAULT_SKEWNESS)]
    theta: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum)]
    codec: Option<Toggle>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    plots: bool,
}

#[derive(Args)]
struct VerifyArgs {
    /// Smaller oracle sizes, well under 30 seconds.
    #[arg(long)]
    quick: bool,
    /// Also run the acceptance criteria.
    #[arg(long)]
    acceptance: bool,
    /// Only these acceptance criteria (implies --acceptance).
    #[arg(long, value_delimiter = ',')]
    criteria: Option<Vec<usize>>,
    /// Check that a weights file loads.
    #[arg(long)]
    weights: Option<PathBuf>,
}

fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    if let Some((a, b)) = s.split_once("..") {
        let (a, b): (u64, u64) = (a.trim().parse()?, b.trim().parse()?);
        ensure!(a < b, "empty seed range {s}");
        return Ok((a..b).collect());
    }
    s.split(',').filter(|x| !x.trim().is_empty()).map(|x| x.trim().parse().with_context(|| format!("bad seed {x:?}"))).collect()
}

fn parse_strategies(s: &str) -> Result<Vec<Strategy>> {
    if s.trim() == "all" {
        return Ok(Strategy::ALL.to_vec());
    }
    let mut out: Vec<Strategy> = s.split(',').map(|x| Ok(x.trim().parse::<Strategy>()?)).collect::<Result<_>>()?;
    out.sort();
    out.dedup();
    Ok(out)
}

fn quant_bits(bits: Option<Vec<u32>>) -> Result<Option<[u32; 4]>> {
    bits.map(|b| <[u32; 4]>::try_from(b).map_err(|b| anyhow::anyhow!("--quant-bits needs four widths, got {b:?}"))).transpose()
}

fn gen_rmat(a: GenRmatArgs) -> Result<()> {
    let params = RmatParams { zero_fraction: a.zero_fraction, ..RmatParams::new(a.vertices, a.density, a.feature_dim, a.classes, a.seed) };
    let g = generate_rmat(&params)?;
    formats::write_graph(&a.out, &g)?;
    println!("{} vertices, {} edges, max degree {} -> {}", g.vertex_count(), g.edge_count(), g.degree_cdf().max_degree(), a.out.display());
    Ok(())
}

fn profile(a: ProfileArgs) -> Result<()> {
    let g = formats::read_graph(&a.graph)?;
    let scenario = config::load_scenario(&a.scenario)?;
    let models = profile_fogs(&g, &scenario.config, a.seed)?;
    config::write_profiles(&a.out, &ProfilesFile::from_models(&scenario.fog_ids(), &models))?;
    for (id, m) in scenario.fog_ids().iter().zip(&models) {
        println!("fog {id}: {:.6} ms/vertex, {:.6} ms/neighbor, {:.3} ms intercept", m.per_vertex_ms, m.per_neighbor_ms, m.intercept_ms);
    }
    Ok(())
}

fn plan(a: PlanArgs) -> Result<()> {
    let g = formats::read_graph(&a.graph)?;
    let scenario = config::load_scenario(&a.cluster)?;
    let cfg = &scenario.config;
    let ids = scenario.fog_ids();
    let models = config::read_profiles(&a.profiles)?.models_for(&ids)?;
    let nodes = cfg.fogs.iter().map(|f| FogNode { id: f.id, bandwidth_bps: f.bandwidth_bps }).collect();
    let cluster = FogCluster::new(nodes, cfg.sync, cfg.layers)?;
    let codec = a.codec.map_or(cfg.codec, bool::from);
    let mut phi = g.feature_bytes() as f64;
    if codec && g.edge_count() > 0 {
        let bits = quant_bits(a.quant_bits)?.unwrap_or(cfg.quant_bits);
        let qp = make_quant_plan(&g.degree_cdf())?.with_bits(bits)?;
        phi *= compression_ratio(&qp, &g.degree_cdf()).ratio;
    }
    let partitions = balanced_partition(&g, cluster.len(), &cfg.partition)?;
    let plan = plan_with_partitions(&g, &cluster, &models, phi, partitions)?;
    let cut = g.edge_cut(plan.placement.assignment());
    report::write_json(&a.out, &PlanReport::new(&plan, &ids, cut))?;
    if let Some(path) = &a.placement {
        formats::write_placement(path, &plan.placement, &ids)?;
    }
    println!("predicted makespan {:.1} ms over {} fogs, edge cut {cut}", plan.makespan_ms, ids.len());
    Ok(())
}

#[derive(Serialize)]
struct PackSummary {
    vertices: usize,
    thresholds: [usize; 3],
    bits: [u32; 4],
    ratio: f64,
    inclusive_ratio: f64,
    raw_feature_bytes: usize,
    serialized_bytes: usize,
    stream_bytes: usize,
    codec: &'static str,
}

fn pack(a: PackArgs) -> Result<()> {
    let g = formats::read_graph(&a.graph)?;
    let cdf = g.degree_cdf();
    let plan = make_quant_plan(&cdf)?.with_bits(quant_bits(a.quant_bits)?.unwrap_or(DEFAULT_BITS))?;
    let codec: &dyn ByteCodec = if a.codec.into() { &DeflateCodec::default() } else { &IdentityCodec };
    let packed = pack_graph(&g, &plan, codec)?;
    fs::write(&a.out, &packed.stream).with_context(|| format!("writing {}", a.out.display()))?;
    let r = compression_ratio(&plan, &cdf);
    let summary = PackSummary {
        vertices: g.vertex_count(),
        thresholds: plan.thresholds(),
        bits: plan.bits(),
        ratio: r.ratio,
        inclusive_ratio: r.inclusive,
        raw_feature_bytes: g.vertex_count() * g.feature_bytes(),
        serialized_bytes: packed.raw_len,
        stream_bytes: packed.stream.len(),
        codec: codec.name(),
    };
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}

fn run(a: RunArgs) -> Result<()> {
    let scenario_seeds = if a.scenario.is_file() { config::load_scenario(&a.scenario)?.seeds } else { Vec::new() };
    let spec = ExperimentSpec {
        graph: a.graph.clone(),
        scenario: a.scenario.clone(),
        strategies: parse_strategies(&a.strategies)?,
        seeds: match &a.seeds {
            Some(s) => parse_seeds(s)?,
            None if scenario_seeds.is_empty() => vec![0],
            None => scenario_seeds,
        },
        out: a.out.clone(),
        plots: a.plots,
    };
    spec.validate()?;
    let mut scenario = config::load_scenario(&spec.scenario)?;
    if let Some(c) = a.codec {
        scenario.config.codec = c.into();
    }
    if let Some(bits) = quant_bits(a.quant_bits)? {
        scenario.config.quant_bits = bits;
    }
    scenario.config.validate()?;
    let g = formats::read_graph(&spec.graph)?;
    let model = match &a.weights {
        Some(path) => formats::read_weights(path)?,
        None => experiment::default_model(a.model.into(), &g, scenario.config.layers, a.model_seed)?,
    };
    fs::create_dir_all(&spec.out).with_context(|| format!("creating {}", spec.out.display()))?;
    let mut config = scenario.config.clone();
    experiment::pin_partition(&g, &mut config)?;
    let results = spec.out.join("results.csv");
    let rows = experiment::run_strategies(&g, &config, Some(&model), &spec.strategies, &spec.seeds, |rows| {
        report::write_results(&results, rows)
    })?;
    for (s, t) in report::mean_latency(&rows) {
        println!("{:<18} mean e2e {:>9.1} ms", s.name(), t);
    }
    if spec.plots {
        experiment::write_latency_plot(&spec.out.join("latency.svg"), &rows)?;
    }
    if let Some(counts) = &a.sweep {
        let points = sweep_fogs(&g, &scenario.config, counts, Strategy::Fograph, spec.seeds[0])?;
        report::write_sweep(&spec.out.join("sweep.csv"), &points)?;
        if spec.plots {
            let name = format!("{} vertices", g.vertex_count());
            experiment::write_sweep_plot(&spec.out.join("scalability.svg"), &[(name, points)])?;
        }
    }
    info!("wrote {}", results.display());
    Ok(())
}

fn trace(a: TraceArgs) -> Result<()> {
    let mut scenario = config::load_scenario(&a.scenario)?;
    if let Some(c) = a.codec {
        scenario.config.codec = c.into();
    }
    let g = formats::read_graph(&a.graph)?;
    let ids = scenario.fog_ids();
    let trace = match a.trace.as_ref().or(scenario.trace.as_ref()) {
        Some(path) => formats::read_trace(path, &ids)?,
        None => LoadTrace::spike(ids.len(), 240, 0, 2.0, 20, 10, 180),
    };
    let cfg = SchedulerConfig { slackness: a.lambda, skewness: a.theta, ..Default::default() };
    cfg.validate()?;
    let records = experiment::run_trace(&g, &scenario.config, &trace, &cfg, a.seed, &a.out, a.plots)?;
    formats::write_trace(&a.out.join("load_trace.csv"), &trace, &ids)?;
    let peak = |f: &dyn Fn(&fogserve::core::scheduler::RoundRecord) -> f64| records.iter().map(f).fold(0.0, f64::max);
    println!(
        "{} rounds: peak {:.1} ms scheduled, {:.1} ms unscheduled",
        records.len(),
        peak(&|r| r.scheduled.end_to_end_ms),
        peak(&|r| r.unscheduled.end_to_end_ms)
    );
    Ok(())
}

fn verify_cmd(a: VerifyArgs) -> Result<bool> {
    let mut checks = verify::oracle_suite(a.quick, a.weights.as_deref());
    let criteria = match (a.criteria, a.acceptance) {
        (Some(ids), _) => ids,
        (None, true) => (1..=acceptance::CRITERIA.len()).collect(),
        (None, false) => Vec::new(),
    };
    for id in criteria {
        if id == 0 || id > acceptance::CRITERIA.len() {
            bail!("no acceptance criterion {id}");
        }
        checks.push(acceptance::run(id));
    }
    for c in &checks {
        println!("{c}");
    }
    let failed = checks.iter().filter(|c| !c.passed).count();
    println!("{} checks, {failed} failed", checks.len());
    Ok(failed == 0)
}

fn dispatch(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::GenRmat(a) => gen_rmat(a)?,
        Command::Profile(a) => profile(a)?,
        Command::Plan(a) => plan(a)?,
        Command::Pack(a) => pack(a)?,
        Command::Run(a) => run(a)?,
        Command::Trace(a) => trace(a)?,
        Command::Verify(a) => return verify_cmd(a),
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("FOGSERVE_LOG", "warn")).init();
    match dispatch(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
