//! Result tables, plan reports and scheduler logs.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use fogserve_core::planner::Plan;
use fogserve_core::scheduler::RoundRecord;
use fogserve_core::sim::{ServingReport, Strategy, SweepPoint};
use serde::{Deserialize, Serialize};

/// One (strategy, seed) serving run.
#[derive(Clone, Debug, PartialEq)]
pub struct ResultRow {
    pub strategy: Strategy,
    pub seed: u64,
    pub node_ids: Vec<u32>,
    pub collection_ms: Vec<f64>,
    pub execution_ms: Vec<f64>,
    pub end_to_end_ms: f64,
    pub throughput_per_s: f64,
    pub flip_rate: Option<f64>,
}

impl ResultRow {
    pub fn new(seed: u64, r: &ServingReport) -> Self {
        Self {
            strategy: r.strategy,
            seed,
            node_ids: r.node_ids.clone(),
            collection_ms: r.collection_ms.clone(),
            execution_ms: r.execution_ms.clone(),
            end_to_end_ms: r.end_to_end_ms,
            throughput_per_s: r.throughput_per_s,
            flip_rate: r.flip_rate,
        }
    }
}

pub const RESULTS_HEADER: [&str; 7] = ["strategy", "seed", "t_colle_ms", "t_exec_ms", "e2e_ms", "throughput", "flip_rate"];

fn node_values(ids: &[u32], values: &[f64]) -> String {
    ids.iter()
        .zip(values)
        .map(|(id, v)| if *id == u32::MAX { format!("cloud={v:.6}") } else { format!("{id}={v:.6}") })
        .collect::<Vec<_>>()
        .join(";")
}

/// Writes rows sorted by strategy then seed; per-node columns are
/// `node=ms` pairs joined by `;`.
pub fn write_results(path: &Path, rows: &[ResultRow]) -> Result<()> {
    let mut rows: Vec<&ResultRow> = rows.iter().collect();
    rows.sort_by_key(|r| (r.strategy, r.seed));
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    w.write_record(RESULTS_HEADER)?;
    for r in rows {
        w.write_record([
            r.strategy.name().to_string(),
            r.seed.to_string(),
            node_values(&r.node_ids, &r.collection_ms),
            node_values(&r.node_ids, &r.execution_ms),
            format!("{:.6}", r.end_to_end_ms),
            format!("{:.6}", r.throughput_per_s),
            r.flip_rate.map_or(String::new(), |f| format!("{f:.6}")),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Mean end-to-end latency per strategy, in strategy order.
pub fn mean_latency(rows: &[ResultRow]) -> Vec<(Strategy, f64)> {
    let mut out: Vec<(Strategy, f64, usize)> = Vec::new();
    for r in rows {
        match out.iter_mut().find(|(s, ..)| *s == r.strategy) {
            Some(e) => {
                e.1 += r.end_to_end_ms;
                e.2 += 1;
            }
            None => out.push((r.strategy, r.end_to_end_ms, 1)),
        }
    }
    out.sort_by_key(|e| e.0);
    out.into_iter().map(|(s, t, n)| (s, t / n as f64)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FogReport {
    pub fog_id: u32,
    pub partition: usize,
    pub vertices: usize,
    pub t_colle_ms: f64,
    pub t_exec_ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanReport {
    pub fogs: Vec<FogReport>,
    pub predicted_makespan_ms: f64,
    pub bottleneck_ms: f64,
    pub feasibility_tests: usize,
    pub edge_cut: usize,
}

impl PlanReport {
    pub fn new(plan: &Plan, fog_ids: &[u32], edge_cut: usize) -> Self {
        let sizes = plan.placement.sizes();
        let mut partition_of = vec![0; fog_ids.len()];
        for (k, &j) in plan.fog_of_partition.iter().enumerate() {
            partition_of[j] = k;
        }
        let fogs = fog_ids
            .iter()
            .enumerate()
            .map(|(j, &fog_id)| FogReport {
                fog_id,
                partition: partition_of[j],
                vertices: sizes[j],
                t_colle_ms: plan.per_fog[j].collection_ms,
                t_exec_ms: plan.per_fog[j].execution_ms,
            })
            .collect();
        Self {
            fogs,
            predicted_makespan_ms: plan.makespan_ms,
            bottleneck_ms: plan.costs.bottleneck_of(&plan.fog_of_partition),
            feasibility_tests: plan.feasibility_tests,
            edge_cut,
        }
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// `round,mode,migrations,predicted_max_mu`.
pub fn write_scheduler_log(path: &Path, records: &[RoundRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    w.write_record(["round", "mode", "migrations", "predicted_max_mu"])?;
    for r in records {
        w.write_record([
            r.round.to_string(),
            r.mode.name().to_string(),
            r.migrations.len().to_string(),
            format!("{:.6}", r.predicted_max_mu),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// `round,scheduled_ms,unscheduled_ms`.
pub fn write_trajectory(path: &Path, records: &[RoundRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    w.write_record(["round", "scheduled_ms", "unscheduled_ms"])?;
    for r in records {
        w.write_record([
            r.round.to_string(),
            format!("{:.6}", r.scheduled.end_to_end_ms),
            format!("{:.6}", r.unscheduled.end_to_end_ms),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// `fogs,e2e_ms`.
pub fn write_sweep(path: &Path, points: &[SweepPoint]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    w.write_record(["fogs", "e2e_ms"])?;
    for p in points {
        w.write_record([p.fogs.to_string(), format!("{:.6}", p.end_to_end_ms)])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(strategy: Strategy, seed: u64) -> ResultRow {
        ResultRow {
            strategy,
            seed,
            node_ids: vec![0, 1],
            collection_ms: vec![1.0, 2.0],
            execution_ms: vec![3.0, 4.0],
            end_to_end_ms: 6.0,
            throughput_per_s: 250.0,
            flip_rate: None,
        }
    }

    #[test]
    fn rows_written_sorted() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        write_results(&path, &[row(Strategy::Fograph, 2), row(Strategy::Cloud, 1), row(Strategy::Fograph, 0)]).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "strategy,seed,t_colle_ms,t_exec_ms,e2e_ms,throughput,flip_rate");
        assert!(lines[1].starts_with("cloud,1,"));
        assert!(lines[2].starts_with("fograph,0,0=1.000000;1=2.000000,"));
        assert!(lines[3].starts_with("fograph,2,"));
    }

    #[test]
    fn means_per_strategy() {
        let mut a = row(Strategy::Cloud, 0);
        a.end_to_end_ms = 2.0;
        let m = mean_latency(&[a, row(Strategy::Cloud, 1), row(Strategy::Fograph, 0)]);
        assert_eq!(m, vec![(Strategy::Cloud, 4.0), (Strategy::Fograph, 6.0)]);
    }
}
