//! Independent reference computations checked against the library.

use fogserve_core::gnn::{full_inference, GnnModel, ModelKind};
use fogserve_core::graph::{generate_rmat, RmatParams};
use fogserve_core::planner::{
    cost_matrix, lbap_assign, maximum_matching, CostMatrix, FogCluster, FogNode, Placement, SyncCost,
};
use fogserve_core::profiler::LatencyModel;
use fogserve_core::quant::{compression_ratio, compression_ratio_closed_form, make_quant_plan, QuantPlan};
use fogserve_core::sim::distributed_inference;
use fogserve_core::gnn::ActivationSet;
use fogserve_core::Graph;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

fn brute_bottleneck(c: &CostMatrix) -> f64 {
    permutations(c.n())
        .iter()
        .map(|p| c.bottleneck_of(p))
        .fold(f64::INFINITY, f64::min)
}

#[test]
fn lbap_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for n in 1..=7 {
        for trial in 0..40 {
            // Alternate continuous costs with small integer costs full of ties.
            let data: Vec<f64> = if trial % 2 == 0 {
                (0..n * n).map(|_| rng.random_range(0.0..100.0)).collect()
            } else {
                (0..n * n).map(|_| rng.random_range(0..5) as f64).collect()
            };
            let c = CostMatrix::new(n, data).unwrap();
            let a = lbap_assign(&c);
            let mut seen = vec![false; n];
            for &j in &a.fog_of_partition {
                assert!(!seen[j]);
                seen[j] = true;
            }
            assert_eq!(a.bottleneck, brute_bottleneck(&c), "n={n} trial={trial}");
            assert_eq!(c.bottleneck_of(&a.fog_of_partition), a.bottleneck);
        }
    }
}

/// Edmonds–Karp on the unit-capacity source→rows→cols→sink network.
fn max_flow_matching(mask: &[Vec<bool>]) -> usize {
    let rows = mask.len();
    let cols = mask.first().map_or(0, Vec::len);
    let size = rows + cols + 2;
    let (s, t) = (rows + cols, rows + cols + 1);
    let mut cap = vec![vec![0i32; size]; size];
    for r in 0..rows {
        cap[s][r] = 1;
        for c in 0..cols {
            if mask[r][c] {
                cap[r][rows + c] = 1;
            }
        }
    }
    for c in 0..cols {
        cap[rows + c][t] = 1;
    }
    let mut flow = 0;
    loop {
        let mut parent = vec![usize::MAX; size];
        parent[s] = s;
        let mut queue = std::collections::VecDeque::from([s]);
        while let Some(u) = queue.pop_front() {
            for v in 0..size {
                if parent[v] == usize::MAX && cap[u][v] > 0 {
                    parent[v] = u;
                    queue.push_back(v);
                }
            }
        }
        if parent[t] == usize::MAX {
            return flow;
        }
        let mut v = t;
        while v != s {
            let u = parent[v];
            cap[u][v] -= 1;
            cap[v][u] += 1;
            v = u;
        }
        flow += 1;
    }
}

#[test]
fn matching_size_equals_max_flow() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..300 {
        let rows = rng.random_range(1..8);
        let cols = rng.random_range(1..8);
        let p = rng.random_range(0.1..0.9);
        let mask: Vec<Vec<bool>> = (0..rows).map(|_| (0..cols).map(|_| rng.random_bool(p)).collect()).collect();
        let m = maximum_matching(&mask);
        assert_eq!(m.size, max_flow_matching(&mask));
        let mut used = vec![false; cols];
        for (r, c) in m.row_to_col.iter().enumerate() {
            if let Some(c) = *c {
                assert!(mask[r][c] && !used[c]);
                used[c] = true;
            }
        }
    }
}

fn random_graph(n: usize, p: f64, dim: usize, rng: &mut ChaCha8Rng) -> Graph {
    let mut edges = Vec::new();
    for u in 0..n as u32 {
        for v in u + 1..n as u32 {
            if rng.random_bool(p) {
                edges.push((u, v));
            }
        }
    }
    let features = (0..n * dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    Graph::new(n, edges, dim, features).unwrap()
}

/// Whole-graph layer as dense matrix algebra over the adjacency matrix.
fn dense_layer(kind: ModelKind, adj: &[Vec<f64>], h: &[Vec<f64>], w: &[f64], out: usize, relu: bool, att: Option<(&[f64], &[f64], f64)>) -> Vec<Vec<f64>> {
    let n = adj.len();
    let matvec = |x: &[f64]| -> Vec<f64> {
        let cols = x.len();
        (0..out).map(|r| (0..cols).map(|c| w[r * cols + c] * x[c]).sum()).collect()
    };
    let act = |v: Vec<f64>| v.into_iter().map(|x| if relu { x.max(0.0) } else { x }).collect::<Vec<_>>();
    let dim = h[0].len();
    (0..n)
        .map(|v| match kind {
            ModelKind::Gcn => {
                let mut agg = vec![0.0; dim];
                let mut deg = 1.0;
                for u in 0..n {
                    let a = adj[v][u] + if u == v { 1.0 } else { 0.0 };
                    if adj[v][u] > 0.0 {
                        deg += 1.0;
                    }
                    for d in 0..dim {
                        agg[d] += a * h[u][d];
                    }
                }
                act(matvec(&agg.iter().map(|x| x / deg).collect::<Vec<_>>()))
            }
            ModelKind::GraphSage => {
                let deg: f64 = adj[v].iter().sum();
                let mut cat = vec![0.0; 2 * dim];
                for u in 0..n {
                    for d in 0..dim {
                        cat[d] += adj[v][u] * h[u][d];
                    }
                }
                if deg > 0.0 {
                    cat[..dim].iter_mut().for_each(|x| *x /= deg);
                }
                cat[dim..].copy_from_slice(&h[v]);
                act(matvec(&cat))
            }
            ModelKind::Gat => {
                let (target, source, slope) = att.unwrap();
                let z: Vec<Vec<f64>> = h.iter().map(|x| matvec(x)).collect();
                let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
                let members: Vec<usize> = (0..n).filter(|&u| u == v || adj[v][u] > 0.0).collect();
                let scores: Vec<f64> = members
                    .iter()
                    .map(|&u| {
                        let e = dot(target, &z[v]) + dot(source, &z[u]);
                        if e >= 0.0 { e } else { slope * e }
                    })
                    .collect();
                let total: f64 = scores.iter().map(|s| s.exp()).sum();
                let mut agg = vec![0.0; out];
                for (&u, s) in members.iter().zip(&scores) {
                    for d in 0..out {
                        agg[d] += s.exp() / total * z[u][d];
                    }
                }
                act(agg)
            }
        })
        .collect()
}

fn dense_inference(model: &GnnModel, g: &Graph) -> Vec<Vec<f64>> {
    let n = g.vertex_count();
    let mut adj = vec![vec![0.0; n]; n];
    for &(u, v) in g.edges() {
        adj[u as usize][v as usize] = 1.0;
        adj[v as usize][u as usize] = 1.0;
    }
    let mut h: Vec<Vec<f64>> = (0..n as u32).map(|v| g.features(v).to_vec()).collect();
    for layer in model.layers() {
        let relu = layer.activation == fogserve_core::gnn::Activation::Relu;
        let att = match &layer.attention {
            Some(fogserve_core::gnn::Attention::Learned { target, source, negative_slope }) => {
                Some((target.as_slice(), source.as_slice(), *negative_slope))
            }
            _ => None,
        };
        h = dense_layer(model.kind(), &adj, &h, layer.weight.data(), layer.weight.rows(), relu, att);
    }
    h
}

fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let den: f64 = b.iter().map(|x| x.abs()).fold(1e-12, f64::max);
    num / den
}

#[test]
fn inference_matches_dense_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for trial in 0..12 {
        let g = random_graph(rng.random_range(2..40), 0.15, 5, &mut rng);
        for kind in [ModelKind::Gcn, ModelKind::Gat, ModelKind::GraphSage] {
            for k in 1..=3 {
                let mut dims = vec![5];
                dims.extend(std::iter::repeat_n(4, k - 1));
                dims.push(3);
                let model = GnnModel::random(kind, &dims, trial * 10 + k as u64).unwrap();
                let fast = full_inference(&model, &g).unwrap();
                let dense = dense_inference(&model, &g);
                for (v, h) in fast.iter() {
                    let err = relative_error(h, &dense[v as usize]);
                    assert!(err < 1e-9, "{kind:?} K={k} v={v} err={err}");
                }
            }
        }
    }
}

#[test]
fn distributed_equals_centralized_on_random_placements() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for trial in 0..10 {
        let g = random_graph(rng.random_range(10..120), 0.08, 6, &mut rng);
        for kind in [ModelKind::Gcn, ModelKind::Gat, ModelKind::GraphSage] {
            let model = GnnModel::random(kind, &[6, 8, 4], trial).unwrap();
            let reference = full_inference(&model, &g).unwrap();
            for fogs in [2, 4, 6] {
                let assignment = (0..g.vertex_count()).map(|_| rng.random_range(0..fogs as u32)).collect();
                let placement = Placement::new(assignment, fogs).unwrap();
                let out = distributed_inference(&model, &g, &placement, ActivationSet::from_features(&g)).unwrap();
                let err = out.max_relative_error(&reference).unwrap();
                assert!(err <= 1e-9, "{kind:?} fogs={fogs} err={err}");
            }
        }
    }
}

#[test]
fn compression_ratio_equals_bit_counting() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let widths = [64u32, 32, 16, 8];
    for trial in 0..10 {
        let g = generate_rmat(&RmatParams::new(rng.random_range(200..1500), 0.01, 2, 2, trial)).unwrap();
        let cdf = g.degree_cdf();
        let mut plans = vec![make_quant_plan(&cdf).unwrap()];
        for _ in 0..10 {
            let mut t: Vec<usize> = (0..3).map(|_| rng.random_range(0..=cdf.max_degree() + 1)).collect();
            t.sort_unstable();
            let mut bits: Vec<u32> = (0..4).map(|_| widths[rng.random_range(0..4)]).collect();
            bits.sort_unstable_by(|a, b| b.cmp(a));
            plans.push(QuantPlan::new([t[0], t[1], t[2]], [bits[0], bits[1], bits[2], bits[3]]).unwrap());
        }
        for plan in plans {
            let counted: u64 = g.degrees().map(|d| u64::from(plan.assign_bitwidth(d))).sum();
            let expected = counted as f64 / (g.vertex_count() as f64 * 64.0);
            let r = compression_ratio(&plan, &cdf);
            assert_eq!(r.ratio, expected);
            assert!((compression_ratio_closed_form(&plan, &cdf) - expected).abs() < 1e-12);
        }
    }
}

#[test]
fn cost_matrix_hand_computed() {
    // Path 0-1-2-3-4-5 split as {0,1}, {2,3}, {4,5}.
    let g = Graph::new(6, (0..5u32).map(|v| (v, v + 1)), 1, vec![0.0; 6]).unwrap();
    let parts = vec![vec![0, 1], vec![2, 3], vec![4, 5]];
    let nodes = vec![
        FogNode { id: 0, bandwidth_bps: 1000.0 },
        FogNode { id: 1, bandwidth_bps: 2000.0 },
        FogNode { id: 2, bandwidth_bps: 4000.0 },
    ];
    let cluster = FogCluster::new(nodes, SyncCost::Constant(5.0), 2).unwrap();
    let models = [
        LatencyModel::new(10.0, 1.0, 0.0),
        LatencyModel::new(5.0, 2.0, 1.0),
        LatencyModel::new(1.0, 1.0, 3.0),
    ];
    let c = cost_matrix(&g, &parts, &cluster, &models, 100.0).unwrap();
    // Cardinalities: ⟨2,1⟩, ⟨2,2⟩, ⟨2,1⟩. Collection = 2·100/b·1000. Sync = 2·5.
    let expected = [
        [200.0 + 21.0 + 10.0, 100.0 + 13.0 + 10.0, 50.0 + 6.0 + 10.0],
        [200.0 + 22.0 + 10.0, 100.0 + 15.0 + 10.0, 50.0 + 7.0 + 10.0],
        [200.0 + 21.0 + 10.0, 100.0 + 13.0 + 10.0, 50.0 + 6.0 + 10.0],
    ];
    for k in 0..3 {
        for j in 0..3 {
            assert!((c.get(k, j) - expected[k][j]).abs() < 1e-9, "({k},{j}) = {}", c.get(k, j));
        }
    }
}
