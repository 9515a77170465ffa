//! Independent oracles and the pass/fail check table behind `verify`.

use std::fmt;
use std::path::Path;
use std::time::Instant;

use anyhow::{ensure, Result};
use fogserve_core::gnn::{full_inference, ActivationSet, GnnModel, ModelKind};
use fogserve_core::graph::{generate_rmat, RmatParams};
use fogserve_core::planner::{lbap_assign, partition_assignment, CostMatrix, PartitionConfig, Placement};
use fogserve_core::quant::{compression_ratio, make_quant_plan, ByteCodec, DeflateCodec, QuantPlan, SUPPORTED_BITS};
use fogserve_core::sim::distributed_inference;
use fogserve_core::Graph;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::formats;

/// Result of one named check.
#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl Check {
    /// Runs `f`, timing it; an error counts as a failure with its message as detail.
    pub fn run(name: impl Into<String>, f: impl FnOnce() -> Result<String>) -> Self {
        let start = Instant::now();
        let (passed, detail) = match f() {
            Ok(detail) => (true, detail),
            Err(e) => (false, format!("{e:#}")),
        };
        Self { name: name.into(), passed, detail, seconds: start.elapsed().as_secs_f64() }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} ({:.1}s): {}", if self.passed { "PASS" } else { "FAIL" }, self.name, self.seconds, self.detail)
    }
}

/// Minimum bottleneck over all `n!` bijections (Heap's algorithm).
pub fn brute_force_bottleneck(c: &CostMatrix) -> f64 {
    let n = c.n();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut best = c.bottleneck_of(&perm);
    let mut stack = vec![0usize; n];
    let mut i = 1;
    while i < n {
        if stack[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(stack[i], i);
            }
            best = best.min(c.bottleneck_of(&perm));
            stack[i] += 1;
            i = 1;
        } else {
            stack[i] = 0;
            i += 1;
        }
    }
    best
}

/// Random cost matrix; odd `trial`s use a small integer range to force ties.
pub fn random_costs(n: usize, trial: usize, rng: &mut ChaCha8Rng) -> CostMatrix {
    let data = if trial.is_multiple_of(2) {
        (0..n * n).map(|_| rng.random_range(0.0..1000.0)).collect()
    } else {
        (0..n * n).map(|_| rng.random_range(0..6) as f64).collect()
    };
    CostMatrix::new(n, data).expect("finite square matrix")
}

/// LBAP against brute force on `per_size` matrices for each `n` in `sizes`.
pub fn lbap_check(sizes: std::ops::RangeInclusive<usize>, per_size: usize, seed: u64) -> Result<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut total = 0;
    for n in sizes {
        for trial in 0..per_size {
            let c = random_costs(n, trial, &mut rng);
            let got = lbap_assign(&c);
            let want = brute_force_bottleneck(&c);
            ensure!(got.bottleneck == want, "n={n} trial={trial}: lbap {} vs brute force {want}", got.bottleneck);
            ensure!(c.bottleneck_of(&got.fog_of_partition) == want, "n={n} trial={trial}: assignment misses its bottleneck");
            total += 1;
        }
    }
    Ok(format!("{total}/{total} matrices match brute force"))
}

/// Placement for the distributed-correctness check: the partitioner for
/// even graphs, uniform random fogs for odd ones.
fn test_placement(g: &Graph, fogs: usize, graph_index: usize, rng: &mut ChaCha8Rng) -> Result<Placement> {
    let fogs = fogs.min(g.vertex_count());
    let assignment = if graph_index.is_multiple_of(2) {
        partition_assignment(g, fogs, &PartitionConfig { seed: graph_index as u64, ..Default::default() })?
    } else {
        (0..g.vertex_count()).map(|_| rng.random_range(0..fogs as u32)).collect()
    };
    Ok(Placement::new(assignment, fogs)?)
}

/// Distributed execution against whole-graph inference.
pub fn distributed_check(graphs: usize, max_vertices: usize, fogs: &[usize], seed: u64) -> Result<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    let mut runs = 0;
    for gi in 0..graphs {
        let n = rng.random_range(20..=max_vertices);
        let avg_degree = rng.random_range(2.0..10.0);
        let density = (avg_degree / (n - 1) as f64).min(0.5);
        let g = generate_rmat(&RmatParams::new(n, density, 8, 4, seed + gi as u64))?;
        for kind in [ModelKind::Gcn, ModelKind::Gat, ModelKind::GraphSage] {
            for k in 1..=3usize {
                let mut dims = vec![8];
                dims.extend(std::iter::repeat_n(8, k - 1));
                dims.push(4);
                let model = GnnModel::random(kind, &dims, seed ^ (gi * 31 + k) as u64)?;
                let reference = full_inference(&model, &g)?;
                for &f in fogs {
                    let placement = test_placement(&g, f, gi, &mut rng)?;
                    let out = distributed_inference(&model, &g, &placement, ActivationSet::from_features(&g))?;
                    let err = out.max_relative_error(&reference).unwrap_or(f64::INFINITY);
                    ensure!(err <= 1e-9, "graph {gi} ({n} vertices) {kind:?} K={k} n={f}: relative error {err:e}");
                    worst = worst.max(err);
                    runs += 1;
                }
            }
        }
    }
    Ok(format!("{runs} placements agree, worst relative error {worst:e}"))
}

/// Bits counted vertex by vertex.
pub fn counted_ratio(g: &Graph, plan: &QuantPlan) -> f64 {
    let bits: u64 = g.degrees().map(|d| u64::from(plan.assign_bitwidth(d))).sum();
    bits as f64 / (g.vertex_count() as f64 * 64.0)
}

pub fn random_quant_plan(max_degree: usize, rng: &mut ChaCha8Rng) -> QuantPlan {
    let mut t: Vec<usize> = (0..3).map(|_| rng.random_range(0..=max_degree + 1)).collect();
    t.sort_unstable();
    let mut bits: Vec<u32> = (0..4).map(|_| SUPPORTED_BITS[rng.random_range(0..4)]).collect();
    bits.sort_unstable_by(|a, b| b.cmp(a));
    QuantPlan::new([t[0], t[1], t[2]], [bits[0], bits[1], bits[2], bits[3]]).expect("sorted thresholds, non-increasing widths")
}

/// Closed-form compression ratio against per-vertex bit counting.
pub fn ratio_check(graphs: usize, plans_per_graph: usize, seed: u64) -> Result<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut atoms = 0;
    let mut total = 0;
    for gi in 0..graphs {
        let n = rng.random_range(200..=5000);
        let density = rng.random_range(0.001..0.02);
        let g = generate_rmat(&RmatParams::new(n, density, 1, 2, seed + gi as u64))?;
        let cdf = g.degree_cdf();
        for p in 0..plans_per_graph {
            let plan = if p == 0 { make_quant_plan(&cdf)? } else { random_quant_plan(cdf.max_degree(), &mut rng) };
            let r = compression_ratio(&plan, &cdf);
            let want = counted_ratio(&g, &plan);
            ensure!(r.ratio == want, "graph {gi} plan {p}: ratio {} vs counted {want}", r.ratio);
            atoms += usize::from(r.has_threshold_atoms());
            total += 1;
        }
    }
    Ok(format!("{total}/{total} exact; inclusive-CDF value differs on {atoms} (threshold atoms)"))
}

/// Random payload, half of them sparse like typical feature blocks.
pub fn random_payload(i: usize, rng: &mut ChaCha8Rng) -> Vec<u8> {
    let len = rng.random_range(0..8192);
    if i.is_multiple_of(2) {
        (0..len).map(|_| rng.random()).collect()
    } else {
        (0..len).map(|_| if rng.random_bool(0.8) { 0 } else { rng.random() }).collect()
    }
}

pub fn codec_check(payloads: usize, seed: u64) -> Result<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let codec = DeflateCodec::default();
    let (mut raw, mut packed) = (0usize, 0usize);
    for i in 0..payloads {
        let data = random_payload(i, &mut rng);
        let enc = codec.encode(&data)?;
        ensure!(codec.decode(&enc)? == data, "payload {i} ({} bytes) did not round-trip", data.len());
        raw += data.len();
        packed += enc.len();
    }
    Ok(format!("{payloads} payloads round-trip, {raw} -> {packed} bytes"))
}

pub fn graph_format_check(seed: u64) -> Result<String> {
    let dir = std::env::temp_dir().join(format!("fogserve-verify-{}-{seed}", std::process::id()));
    let g = generate_rmat(&RmatParams::new(500, 0.01, 6, 3, seed))?;
    formats::write_graph(&dir, &g)?;
    let back = formats::read_graph(&dir);
    let _ = std::fs::remove_dir_all(&dir);
    ensure!(back? == g, "graph directory did not round-trip");
    Ok(format!("{} vertices, {} edges round-trip bit-exactly", g.vertex_count(), g.edge_count()))
}

/// Loads a weights file and checks that it re-encodes identically.
pub fn weights_check(path: &Path) -> Result<String> {
    let model = formats::read_weights(path)?;
    let again = formats::decode_weights(&formats::encode_weights(&model))?;
    ensure!(again == model, "weights do not re-encode identically");
    Ok(format!("{:?} model with {} layers", model.kind(), model.num_layers()))
}

/// The oracle table. `quick` shrinks every check to stay well under 30 s.
pub fn oracle_suite(quick: bool, weights: Option<&Path>) -> Vec<Check> {
    let (lbap_n, dist_graphs, ratio_graphs, payloads) = if quick { (20, 6, 10, 200) } else { (100, 50, 50, 1000) };
    let mut checks = vec![
        Check::run("lbap-brute-force", || lbap_check(2..=7, lbap_n, 2)),
        Check::run("distributed-equals-centralized", || distributed_check(dist_graphs, if quick { 300 } else { 1000 }, &[2, 4, 6], 1)),
        Check::run("compression-ratio-counting", || ratio_check(ratio_graphs, 20, 3)),
        Check::run("codec-round-trip", || codec_check(payloads, 4)),
        Check::run("graph-format-round-trip", || graph_format_check(5)),
    ];
    if let Some(path) = weights {
        checks.push(Check::run("weights-file", || weights_check(path)));
    }
    checks
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn brute_force_visits_every_permutation() {
        // Only the anti-diagonal avoids the large entries.
        let n = 5;
        let data = (0..n * n).map(|i| if i % n + i / n == n - 1 { 1.0 } else { 9.0 }).collect();
        assert_eq!(brute_force_bottleneck(&CostMatrix::new(n, data).unwrap()), 1.0);
    }

    #[test]
    fn quick_suite_passes() {
        for c in oracle_suite(true, None) {
            assert!(c.passed, "{c}");
        }
    }

    #[test]
    fn corrupted_weights_fail_named_check() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.fgwt");
        formats::write_weights(&path, &GnnModel::random(ModelKind::Gcn, &[4, 3], 2).unwrap()).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[16] ^= 0x40;
        std::fs::write(&path, bytes).unwrap();
        let c = Check::run("weights-file", || weights_check(&path));
        assert!(!c.passed);
        assert!(c.detail.contains("checksum"), "{}", c.detail);
    }
}
