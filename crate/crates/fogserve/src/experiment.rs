//! Experiment drivers behind the `run` and `trace` subcommands.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use fogserve_core::gnn::{GnnModel, ModelKind};
use fogserve_core::planner::partition_assignment;
use fogserve_core::scheduler::{replay_trace, LoadTrace, RoundRecord, SchedulerConfig};
use fogserve_core::sim::{ScenarioConfig, Strategy, SweepPoint, Testbed};
use fogserve_core::Graph;
use log::info;

use crate::plot;
use crate::report::{self, ResultRow};

pub const HIDDEN_WIDTH: usize = 16;
pub const DEFAULT_CLASSES: usize = 8;

/// Seeded random model whose depth matches the scenario and whose output
/// width matches the graph's label count.
pub fn default_model(kind: ModelKind, g: &Graph, layers: usize, seed: u64) -> Result<GnnModel> {
    let classes = g
        .labels()
        .and_then(|l| l.iter().filter(|&&x| x != u32::MAX).max())
        .map_or(DEFAULT_CLASSES, |&m| m as usize + 1);
    let mut dims = vec![g.feature_dim()];
    dims.extend(std::iter::repeat_n(HIDDEN_WIDTH, layers.saturating_sub(1)));
    dims.push(classes);
    Ok(GnnModel::random(kind, &dims, seed)?)
}

/// Partitions once so every seed serves the same partitions.
pub fn pin_partition(g: &Graph, config: &mut ScenarioConfig) -> Result<()> {
    config.fixed_partition = Some(partition_assignment(g, config.fogs.len(), &config.partition)?);
    Ok(())
}

/// Serves every (seed, strategy) pair. Rows completed before a failure are
/// handed to `flush` before the error is returned.
pub fn run_strategies(
    g: &Graph,
    config: &ScenarioConfig,
    model: Option<&GnnModel>,
    strategies: &[Strategy],
    seeds: &[u64],
    mut flush: impl FnMut(&[ResultRow]) -> Result<()>,
) -> Result<Vec<ResultRow>> {
    let mut rows = Vec::with_capacity(strategies.len() * seeds.len());
    let outcome = (|| -> Result<()> {
        for &seed in seeds {
            let bed = Testbed::new(g, config.clone(), model, seed).with_context(|| format!("seed {seed}"))?;
            for &strategy in strategies {
                let r = bed.simulate(strategy, seed).with_context(|| format!("{strategy} seed {seed}"))?;
                info!("seed {seed}: {}", fogserve_core::sim::summarize(&r));
                rows.push(ResultRow::new(seed, &r));
            }
        }
        Ok(())
    })();
    flush(&rows)?;
    outcome.map(|_| rows)
}

pub fn write_latency_plot(path: &Path, rows: &[ResultRow]) -> Result<()> {
    let bars: Vec<(String, f64)> = report::mean_latency(rows).into_iter().map(|(s, t)| (s.name().to_string(), t)).collect();
    plot::write_svg(path, &plot::bar_chart("Mean end-to-end latency", "ms", &bars))
}

pub fn write_sweep_plot(path: &Path, curves: &[(String, Vec<SweepPoint>)]) -> Result<()> {
    let series: Vec<(String, Vec<(f64, f64)>)> = curves
        .iter()
        .map(|(name, pts)| (name.clone(), pts.iter().map(|p| (p.fogs as f64, p.end_to_end_ms)).collect()))
        .collect();
    plot::write_svg(path, &plot::line_chart("Latency vs. fog count", "fogs", "ms", &series))
}

/// Replays a load trace with and without the scheduler and writes
/// `scheduler_log.csv`, `trajectory.csv` and optionally `trajectory.svg`.
pub fn run_trace(
    g: &Graph,
    config: &ScenarioConfig,
    trace: &LoadTrace,
    cfg: &SchedulerConfig,
    seed: u64,
    out: &Path,
    plots: bool,
) -> Result<Vec<RoundRecord>> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let bed = Testbed::new(g, config.clone(), None, seed)?;
    let records = replay_trace(&bed, trace, cfg, seed)?;
    report::write_scheduler_log(&out.join("scheduler_log.csv"), &records)?;
    report::write_trajectory(&out.join("trajectory.csv"), &records)?;
    if plots {
        let series = vec![
            ("scheduled".to_string(), records.iter().map(|r| (r.round as f64, r.scheduled.end_to_end_ms)).collect()),
            ("unscheduled".to_string(), records.iter().map(|r| (r.round as f64, r.unscheduled.end_to_end_ms)).collect()),
        ];
        plot::write_svg(&out.join("trajectory.svg"), &plot::line_chart("Latency under load", "round", "ms", &series))?;
    }
    Ok(records)
}
