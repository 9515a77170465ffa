use std::collections::BTreeSet;

use fogserve_core::graph::{generate_rmat, RmatParams};
use fogserve_core::planner::{lbap_assign, max_part_size, partition_assignment, CostMatrix, PartitionConfig, Placement};
use fogserve_core::profiler::LatencyModel;
use fogserve_core::quant::{
    bit_shuffle, bit_unshuffle, compression_ratio, make_quant_plan, pack_vertices, quantize_vector, unpack, ByteCodec,
    DeflateCodec, QuantPlan,
};
use fogserve_core::scheduler::{compute_indicators, diffuse, SchedulerConfig};
use fogserve_core::Graph;
use proptest::prelude::*;

fn graph_strategy(max_n: usize) -> impl Strategy<Value = Graph> {
    (2..max_n).prop_flat_map(|n| {
        proptest::collection::vec((0..n as u32, 0..n as u32), 0..n * 3).prop_map(move |pairs| {
            let edges: BTreeSet<(u32, u32)> =
                pairs.into_iter().filter(|(u, v)| u != v).map(|(u, v)| (u.min(v), u.max(v))).collect();
            let features = (0..n * 3).map(|i| ((i * 7919) % 17) as f64 - 8.0).collect();
            Graph::new(n, edges, 3, features).unwrap()
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn degree_sum_is_twice_edges(g in graph_strategy(60)) {
        prop_assert_eq!(g.degrees().sum::<usize>(), 2 * g.edge_count());
    }

    #[test]
    fn degree_cdf_is_monotone(g in graph_strategy(60)) {
        let cdf = g.degree_cdf();
        let mut last = 0.0;
        for d in 0..=cdf.max_degree() + 1 {
            let f = cdf.at(d);
            prop_assert!(f >= last && f <= 1.0);
            prop_assert!(cdf.below(d) <= f);
            last = f;
        }
        prop_assert_eq!(cdf.at(cdf.max_degree()), 1.0);
    }

    #[test]
    fn lbap_invariant_under_permutation(
        n in 1usize..7,
        seed in any::<u64>(),
    ) {
        use rand::{seq::SliceRandom, Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let data: Vec<f64> = (0..n * n).map(|_| rng.random_range(0..20) as f64).collect();
        let c = CostMatrix::new(n, data).unwrap();
        let mut rows: Vec<usize> = (0..n).collect();
        let mut cols: Vec<usize> = (0..n).collect();
        rows.shuffle(&mut rng);
        cols.shuffle(&mut rng);
        let permuted: Vec<f64> = rows.iter().flat_map(|&r| cols.iter().map(move |&k| (r, k))).map(|(r, k)| c.get(r, k)).collect();
        let p = CostMatrix::new(n, permuted).unwrap();
        prop_assert_eq!(lbap_assign(&c).bottleneck, lbap_assign(&p).bottleneck);
    }

    #[test]
    fn deflate_round_trips(data in proptest::collection::vec(any::<u8>(), 0..4096)) {
        let codec = DeflateCodec::default();
        prop_assert_eq!(codec.decode(&codec.encode(&data).unwrap()).unwrap(), data);
    }

    #[test]
    fn shuffle_round_trips(codes in proptest::collection::vec(any::<u64>(), 0..200), bits_idx in 0usize..4) {
        let bits = [8u32, 16, 32, 64][bits_idx];
        let mask = if bits == 64 { u64::MAX } else { (1u64 << bits) - 1 };
        let codes: Vec<u64> = codes.into_iter().map(|c| c & mask).collect();
        let mut out = Vec::new();
        bit_shuffle(&codes, bits, &mut out);
        prop_assert_eq!(bit_unshuffle(&out, codes.len(), bits).unwrap(), codes);
    }

    #[test]
    fn quantization_error_within_half_step(
        x in proptest::collection::vec(-1e3f64..1e3, 1..64),
        bits_idx in 0usize..3,
    ) {
        let bits = [8u32, 16, 32][bits_idx];
        let q = quantize_vector(0, &x, bits).unwrap();
        let y = q.dequantize();
        for (a, b) in x.iter().zip(&y) {
            // A few ulps of slack for the affine reconstruction.
            prop_assert!((a - b).abs() <= q.scale / 2.0 + 1e-9 * a.abs().max(1.0));
        }
    }

    #[test]
    fn ratio_is_monotone_in_bits(g in graph_strategy(80), lower in 0usize..4) {
        prop_assume!(g.edge_count() > 0);
        let cdf = g.degree_cdf();
        let plan = make_quant_plan(&cdf).unwrap();
        let mut bits = plan.bits();
        let steps = [64u32, 32, 16, 8];
        let pos = steps.iter().position(|&b| b == bits[lower]).unwrap();
        let floor = if lower == 3 { 8 } else { bits[lower + 1] };
        prop_assume!(pos + 1 < steps.len() && steps[pos + 1] >= floor);
        let before = compression_ratio(&plan, &cdf).ratio;
        bits[lower] = steps[pos + 1];
        let after = compression_ratio(&QuantPlan::new(plan.thresholds(), bits).unwrap(), &cdf).ratio;
        prop_assert!(after <= before);
        prop_assert!(after > 0.0 && before <= 1.0);
    }

    #[test]
    fn packing_round_trips(seed in 0u64..50) {
        let g = generate_rmat(&RmatParams::new(150, 0.05, 8, 3, seed)).unwrap();
        let plan = make_quant_plan(&g.degree_cdf()).unwrap();
        let vertices: Vec<u32> = (0..g.vertex_count() as u32).filter(|v| v % 3 != 1).collect();
        let packed = pack_vertices(&g, &plan, &vertices, &DeflateCodec::default()).unwrap();
        let records = unpack(&packed.stream, g.feature_dim(), &DeflateCodec::default()).unwrap();
        prop_assert_eq!(records, packed.features.records);
    }

    #[test]
    fn partitions_cover_and_respect_bound(g in graph_strategy(120), parts in 1usize..6, seed in any::<u64>()) {
        prop_assume!(parts <= g.vertex_count());
        let cfg = PartitionConfig { seed, ..Default::default() };
        let a = partition_assignment(&g, parts, &cfg).unwrap();
        prop_assert_eq!(a.len(), g.vertex_count());
        let bound = max_part_size(g.vertex_count(), parts, cfg.imbalance);
        let mut sizes = vec![0usize; parts];
        for &p in &a {
            prop_assert!((p as usize) < parts);
            sizes[p as usize] += 1;
        }
        prop_assert!(sizes.iter().all(|&s| s <= bound), "{sizes:?} > {bound}");
    }

    #[test]
    fn indicators_average_to_one(times in proptest::collection::vec(0.1f64..1e4, 1..10)) {
        let s = compute_indicators(&times, 1.25, 0.5).unwrap();
        let sum: f64 = s.mu.iter().sum();
        prop_assert!((sum - times.len() as f64).abs() < 1e-9);
    }

    #[test]
    fn diffusion_never_raises_predicted_max(g in graph_strategy(80), fogs in 2usize..5, skew in 1.0f64..4.0) {
        let n = g.vertex_count();
        let placement = Placement::new((0..n).map(|v| (v % fogs) as u32).collect(), fogs).unwrap();
        let mut models = vec![LatencyModel::new(1.0, 0.2, 1.0); fogs];
        models[0] = models[0].scaled(skew);
        let cards = placement.cardinalities(&g);
        let before = (0..fogs).map(|j| models[j].predict(cards[j])).fold(0.0, f64::max);
        let d = diffuse(&placement, &g, &models, &SchedulerConfig::default()).unwrap();
        for m in &d.migrations {
            prop_assert!(m.predicted_max_after <= m.predicted_max_before);
        }
        let cards = d.placement.cardinalities(&g);
        let after = (0..fogs).map(|j| models[j].predict(cards[j])).fold(0.0, f64::max);
        prop_assert!(after <= before + 1e-9);
    }
}

#[test]
fn partition_beats_random_balanced_assignment() {
    use rand::{seq::SliceRandom, SeedableRng};
    let mut wins = 0;
    for seed in 0..100u64 {
        let g = generate_rmat(&RmatParams::new(400, 0.02, 1, 2, seed)).unwrap();
        let parts = 2 + (seed % 5) as usize;
        let a = partition_assignment(&g, parts, &PartitionConfig { seed, ..Default::default() }).unwrap();
        let mut random: Vec<u32> = (0..g.vertex_count()).map(|v| (v % parts) as u32).collect();
        random.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        if g.edge_cut(&a) <= g.edge_cut(&random) {
            wins += 1;
        }
    }
    assert!(wins >= 95, "{wins}/100");
}
