//! The acceptance criteria, each returning a [`Check`].

use anyhow::{ensure, Result};
use fogserve_core::gnn::{infer_from, predict_labels, ActivationSet, GnnModel, ModelKind};
use fogserve_core::graph::{generate_rmat, RmatParams};
use fogserve_core::planner::partition_assignment;
use fogserve_core::profiler::{build_calibration_set, default_axes, fit_latency_model, LatencyModel};
use fogserve_core::quant::{dequantized_features, make_quant_plan, pack_vertices, quantize_vector, unpack, DeflateCodec};
use fogserve_core::scheduler::{compute_indicators, replay_trace, LoadTrace, Mode, SchedulerConfig};
use fogserve_core::sim::{presets, sweep_fogs, ScenarioConfig, Strategy, Testbed};
use fogserve_core::{Cardinality, Graph};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::verify::{codec_check, distributed_check, lbap_check, ratio_check, Check};

/// RMAT workload used by the serving criteria: 20K vertices at density 0.001.
pub fn rmat_20k(seed: u64) -> Result<Graph> {
    Ok(generate_rmat(&RmatParams::new(20_000, 0.001, 32, 8, seed))?)
}

pub fn c1_distributed_correctness() -> Result<String> {
    distributed_check(50, 1000, &[2, 4, 6], 101)
}

pub fn c2_lbap_exactness() -> Result<String> {
    lbap_check(2..=7, 100, 102)
}

pub fn c3_compression_ratio() -> Result<String> {
    ratio_check(50, 20, 103)
}

pub fn c4_codec() -> Result<String> {
    let lossless = codec_check(1000, 104)?;

    let mut rng = ChaCha8Rng::seed_from_u64(104);
    let mut worst = 0.0f64;
    for i in 0..1000 {
        let len = rng.random_range(1..128);
        let spread = 10f64.powi(rng.random_range(-3..4));
        let x: Vec<f64> = (0..len).map(|_| rng.random_range(-spread..spread)).collect();
        let bits = [8, 16, 32][i % 3];
        let q = quantize_vector(0, &x, bits)?;
        for (a, b) in x.iter().zip(q.dequantize()) {
            let err = (a - b).abs();
            // Reconstruction `offset + scale·code` itself rounds, so allow a few ulps.
            let bound = q.scale / 2.0 + 4.0 * f64::EPSILON * a.abs().max(q.offset.abs());
            ensure!(err <= bound, "vector {i} ({bits} bits): error {err:e} exceeds scale/2 = {:e}", q.scale / 2.0);
            if q.scale > 0.0 {
                worst = worst.max(err / q.scale);
            }
        }
    }

    let g = generate_rmat(&RmatParams::new(2000, 0.005, 16, 4, 104))?;
    let plan = make_quant_plan(&g.degree_cdf())?;
    let all: Vec<u32> = (0..g.vertex_count() as u32).collect();
    let packed = pack_vertices(&g, &plan, &all, &DeflateCodec::default())?;
    ensure!(unpack(&packed.stream, g.feature_dim(), &DeflateCodec::default())? == packed.features.records, "packed stream did not round-trip");
    Ok(format!("{lossless}; 1000 vectors within scale/2 (worst {worst:.3}·scale); packed stream round-trips"))
}

pub fn c5_accuracy_impact() -> Result<String> {
    let g = rmat_20k(105)?;
    let model = GnnModel::random(ModelKind::Gcn, &[32, 16, 8], 105)?;
    let plan = make_quant_plan(&g.degree_cdf())?;
    let full = predict_labels(&infer_from(&model, &g, ActivationSet::from_features(&g))?)?;
    let input = ActivationSet::from_matrix(g.feature_dim(), dequantized_features(&g, &plan)?)?;
    let quant = predict_labels(&infer_from(&model, &g, input)?)?;
    let flips = full.iter().zip(&quant).filter(|(a, b)| a != b).count();
    let rate = flips as f64 / g.vertex_count() as f64;
    ensure!(rate <= 0.01, "flip rate {:.4}% exceeds 1%", rate * 100.0);
    Ok(format!("{flips}/{} labels changed ({:.4}%)", g.vertex_count(), rate * 100.0))
}

/// Partitions `g` once for every scenario drawn in a criterion.
fn pinned(g: &Graph, mut config: ScenarioConfig) -> Result<ScenarioConfig> {
    config.fixed_partition = Some(partition_assignment(g, config.fogs.len(), &config.partition)?);
    Ok(config)
}

pub fn c6_planner_quality() -> Result<String> {
    let g = rmat_20k(106)?;
    let fixed = pinned(&g, presets::heterogeneous(0))?.fixed_partition;
    let (mut wins, mut plan_sum, mut random_sum, mut greedy_sum) = (0, 0.0, 0.0, 0.0);
    let seeds = 100;
    for seed in 0..seeds {
        let mut config = presets::heterogeneous(seed);
        config.codec = false;
        config.fixed_partition = fixed.clone();
        let bed = Testbed::new(&g, config, None, seed)?;
        let plan = bed.simulate(Strategy::Fograph, seed)?.end_to_end_ms;
        let random = bed.simulate(Strategy::MultifogBaseline, seed)?.end_to_end_ms;
        let greedy = bed.simulate(Strategy::MultifogGreedy, seed)?.end_to_end_ms;
        wins += usize::from(plan <= random);
        plan_sum += plan;
        random_sum += random;
        greedy_sum += greedy;
    }
    let n = seeds as f64;
    let (plan, random, greedy) = (plan_sum / n, random_sum / n, greedy_sum / n);
    let detail = format!(
        "plan <= random in {wins}/{seeds}; mean plan {plan:.1} ms, random {random:.1} ms ({:+.1}%), greedy {greedy:.1} ms ({:+.1}%)",
        (plan / random - 1.0) * 100.0,
        (plan / greedy - 1.0) * 100.0
    );
    ensure!(wins >= 95, "{detail}");
    ensure!(plan <= greedy, "{detail}");
    Ok(detail)
}

pub fn c7_trend_ordering() -> Result<String> {
    let g = rmat_20k(107)?;
    let fixed = pinned(&g, presets::heterogeneous(0))?.fixed_partition;
    let order = [Strategy::Cloud, Strategy::SingleFog, Strategy::MultifogBaseline, Strategy::Fograph];
    let mut held = 0;
    let mut sums = [0.0; 4];
    let seeds = 100;
    for seed in 0..seeds {
        let mut config = presets::heterogeneous(seed);
        config.fixed_partition = fixed.clone();
        ensure!(config.cloud.wan.bandwidth_bps < config.fogs.iter().map(|f| f.bandwidth_bps).fold(f64::INFINITY, f64::min), "WAN must be slower than every LAN link");
        let bed = Testbed::new(&g, config, None, seed)?;
        let mut t = [0.0; 4];
        for (i, s) in order.iter().enumerate() {
            t[i] = bed.simulate(*s, seed)?.end_to_end_ms;
            sums[i] += t[i];
        }
        held += usize::from(t.windows(2).all(|w| w[0] > w[1]));
    }
    let means: Vec<String> = order.iter().zip(sums).map(|(s, t)| format!("{s} {:.0}", t / seeds as f64)).collect();
    let detail = format!("ordering held in {held}/{seeds} seeds; mean ms: {}", means.join(" > "));
    ensure!(held >= 95, "{detail}");
    Ok(detail)
}

pub fn c8_profiler_band() -> Result<String> {
    let g = generate_rmat(&RmatParams::new(5000, 0.002, 1, 2, 108))?;
    let mut rng = ChaCha8Rng::seed_from_u64(108);
    let hidden = [presets::WEAK_FOG, presets::MODERATE_FOG, presets::POWERFUL_FOG, presets::CLOUD];
    let (mut inside, mut total) = (0usize, 0usize);
    let measure = |m: &LatencyModel, c: Cardinality, rng: &mut ChaCha8Rng| m.predict(c) * (1.0 + rng.random_range(-0.05..=0.05));
    for (i, truth) in hidden.iter().enumerate() {
        let train = build_calibration_set(&g, &default_axes(g.vertex_count()), 20, 1000 + i as u64)?;
        let obs: Vec<(Cardinality, f64)> = train.iter().map(|s| (s.cardinality, measure(truth, s.cardinality, &mut rng))).collect();
        let fitted = fit_latency_model(&obs)?;
        for k in 0..250 {
            let size = rng.random_range(g.vertex_count() / 64..=g.vertex_count() / 2);
            let (_, c) = fogserve_core::graph::sample_subgraph(&g, Cardinality::new(size, 0), 5000 + (i * 250 + k) as u64)?;
            let measured = measure(truth, c, &mut rng);
            let err = (fitted.predict(c) - measured).abs() / measured;
            inside += usize::from(err <= 0.10);
            total += 1;
        }
    }
    let share = inside as f64 / total as f64;
    let detail = format!("{inside}/{total} held-out predictions within ±10% ({:.1}%)", share * 100.0);
    ensure!(share >= 0.95, "{detail}");
    Ok(detail)
}

/// Mode chosen by the n⁺/n versus θ rule, computed independently.
fn expected_mode(times: &[f64], slackness: f64, skewness: f64) -> Mode {
    let mean = times.iter().sum::<f64>() / times.len() as f64;
    let over = times.iter().filter(|&&t| t / mean > slackness).count();
    if over == 0 {
        Mode::None
    } else if over as f64 / times.len() as f64 <= skewness {
        Mode::Diffuse
    } else {
        Mode::Replan
    }
}

pub fn c9_scheduler() -> Result<String> {
    let constructed: [(&[f64], Mode); 5] = [
        (&[1.0, 1.0, 1.0, 1.0], Mode::None),
        (&[2.0, 1.0, 1.0, 1.0], Mode::Diffuse),
        (&[3.0, 3.0, 1.0, 1.0], Mode::Diffuse),
        (&[3.0, 3.0, 3.0, 0.1], Mode::Replan),
        (&[5.0, 1.0], Mode::Diffuse),
    ];
    for (times, want) in constructed {
        let got = compute_indicators(times, 1.25, 0.5)?.mode();
        ensure!(got == want, "indicators {times:?}: {got:?} instead of {want:?}");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(109);
    for _ in 0..1000 {
        let n = rng.random_range(1..9);
        let times: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..3.0)).collect();
        let (lambda, theta) = (rng.random_range(1.0..2.0), rng.random_range(0.0..1.0));
        let got = compute_indicators(&times, lambda, theta)?.mode();
        ensure!(got == expected_mode(&times, lambda, theta), "indicators {times:?} λ={lambda} θ={theta}: {got:?}");
    }

    let g = generate_rmat(&RmatParams::new(5000, 0.004, 16, 4, 109))?;
    let bed = Testbed::new(&g, presets::homogeneous(4), None, 109)?;
    // Fog 0 doubles over 10 rounds, holds for 180 and recovers over 10.
    let trace = LoadTrace::spike(4, 240, 0, 2.0, 20, 10, 180);
    let records = replay_trace(&bed, &trace, &SchedulerConfig::default(), 109)?;
    let peak = |f: fn(&fogserve_core::scheduler::RoundRecord) -> f64| records.iter().map(f).fold(0.0, f64::max);
    let scheduled = peak(|r| r.scheduled.end_to_end_ms);
    let unscheduled = peak(|r| r.unscheduled.end_to_end_ms);
    let mut steps = 0;
    for r in &records {
        for m in &r.migrations {
            ensure!(
                m.predicted_max_after <= m.predicted_max_before,
                "round {}: moving vertex {} raised the predicted max from {} to {}",
                r.round,
                m.vertex,
                m.predicted_max_before,
                m.predicted_max_after
            );
            steps += 1;
        }
    }
    let count = |mode| records.iter().filter(|r| r.mode == mode).count();
    let detail = format!(
        "peak {scheduled:.1} ms scheduled vs {unscheduled:.1} ms unscheduled; {} diffuse / {} replan rounds, {steps} monotone migrations; branch rule matched on 1005 vectors",
        count(Mode::Diffuse),
        count(Mode::Replan)
    );
    ensure!(scheduled < unscheduled, "{detail}");
    Ok(detail)
}

pub fn c10_scalability() -> Result<String> {
    let counts: Vec<usize> = (1..=6).collect();
    let mut gains = Vec::new();
    let mut curves = Vec::new();
    for n in [20_000, 50_000, 100_000] {
        let g = generate_rmat(&RmatParams::new(n, 0.001, 32, 8, 110))?;
        let points = sweep_fogs(&g, &presets::homogeneous(6), &counts, Strategy::Fograph, 110)?;
        let lat: Vec<f64> = points.iter().map(|p| p.end_to_end_ms).collect();
        for (i, w) in lat.windows(2).enumerate() {
            ensure!(w[1] <= w[0] * 1.05, "{n} vertices: latency rises from {:.1} ms at {} fogs to {:.1} ms at {}", w[0], i + 1, w[1], i + 2);
        }
        gains.push(lat[0] - lat[lat.len() - 1]);
        curves.push(format!("{}K [{}]", n / 1000, lat.iter().map(|t| format!("{t:.0}")).collect::<Vec<_>>().join(", ")));
    }
    let detail = format!("{}; gains 1→6 fogs {:?} ms", curves.join("; "), gains.iter().map(|g| g.round()).collect::<Vec<_>>());
    ensure!(gains.windows(2).all(|w| w[1] > w[0]), "gains do not grow with graph size: {detail}");
    Ok(detail)
}

pub type Criterion = (usize, &'static str, fn() -> Result<String>);

pub const CRITERIA: [Criterion; 10] = [
    (1, "distributed correctness", c1_distributed_correctness),
    (2, "LBAP exactness", c2_lbap_exactness),
    (3, "compression ratio equals bit counting", c3_compression_ratio),
    (4, "codec round-trip and quantization error", c4_codec),
    (5, "accuracy impact of quantization", c5_accuracy_impact),
    (6, "planner quality vs. baselines", c6_planner_quality),
    (7, "serving strategy ordering", c7_trend_ordering),
    (8, "profiler prediction band", c8_profiler_band),
    (9, "scheduler under a load spike", c9_scheduler),
    (10, "scalability over fog counts", c10_scalability),
];

pub fn run(id: usize) -> Check {
    let (id, name, f) = CRITERIA[id - 1];
    Check::run(format!("criterion {id}: {name}"), f)
}
