//! Multilevel balanced graph partitioning.
//!
//! k-way partitions come from recursive bisection. Each bisection coarsens the
//! graph by heavy-edge matching, splits the coarsest graph by greedy region
//! growing, then projects back level by level with Fiduccia–Mattheyses
//! boundary refinement. A final k-way pass enforces the hard size bound and
//! greedily moves boundary vertices that reduce the cut.

use alloc::collections::BinaryHeap;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Reverse;

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;

use crate::graph::{Graph, VertexId};
use crate::rng::{self, streams};
use crate::{Error, Result};

/// Stop coarsening below this many vertices.
const COARSEST: usize = 80;
const INITIAL_TRIES: usize = 6;
const FM_PASSES: usize = 6;
/// Non-improving FM moves tolerated before a pass gives up.
const FM_PATIENCE: usize = 120;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PartitionConfig {
    /// Allowed relative excess over `⌈|V|/n⌉` per part.
    pub imbalance: f64,
    pub seed: u64,
}

impl Default for PartitionConfig {
    fn default() -> Self {
        Self { imbalance: 0.03, seed: 0 }
    }
}

/// Upper bound on any part's size: `⌊(1+imbalance)·⌈|V|/n⌉⌋`.
pub fn max_part_size(vertices: usize, parts: usize, imbalance: f64) -> usize {
    let ideal = vertices.div_ceil(parts);
    (libm::floor((1.0 + imbalance) * ideal as f64) as usize).max(ideal)
}

/// Splits the graph into `parts` disjoint vertex sets covering every vertex,
/// each within the imbalance bound, with a small edge-cut.
pub fn balanced_partition(g: &Graph, parts: usize, cfg: &PartitionConfig) -> Result<Vec<Vec<VertexId>>> {
    let assignment = partition_assignment(g, parts, cfg)?;
    let mut out = vec![Vec::new(); parts];
    for (v, &p) in assignment.iter().enumerate() {
        out[p as usize].push(v as VertexId);
    }
    Ok(out)
}

/// Like [`balanced_partition`] but returns `vertex -> part`.
pub fn partition_assignment(g: &Graph, parts: usize, cfg: &PartitionConfig) -> Result<Vec<u32>> {
    let n = g.vertex_count();
    if parts == 0 || parts > n {
        return Err(Error::TooManyParts { parts, vertices: n });
    }
    if !(cfg.imbalance >= 0.0 && cfg.imbalance.is_finite()) {
        return Err(Error::InvalidParameter("imbalance must be a non-negative number".into()));
    }
    let mut assignment = vec![0u32; n];
    if parts == 1 {
        return Ok(assignment);
    }
    let fine = WGraph::from_graph(g);
    let mut rng = rng::stream(cfg.seed, streams::PARTITION);
    let all: Vec<u32> = (0..n as u32).collect();
    recursive_bisect(&fine, &all, parts, 0, cfg.imbalance, &mut rng, &mut assignment);
    let max_size = max_part_size(n, parts, cfg.imbalance);
    enforce_balance(&fine, &mut assignment, parts, max_size);
    refine_kway(&fine, &mut assignment, parts, max_size, cfg.imbalance);
    Ok(assignment)
}

/// Weighted CSR graph used at every coarsening level.
#[derive(Clone, Debug)]
struct WGraph {
    xadj: Vec<usize>,
    adj: Vec<u32>,
    ew: Vec<u32>,
    vw: Vec<u32>,
}

impl WGraph {
    fn from_graph(g: &Graph) -> Self {
        let n = g.vertex_count();
        let mut xadj = Vec::with_capacity(n + 1);
        let mut adj = Vec::with_capacity(2 * g.edge_count());
        xadj.push(0);
        for v in 0..n as u32 {
            adj.extend_from_slice(g.neighbors(v));
            xadj.push(adj.len());
        }
        let ew = vec![1; adj.len()];
        Self { xadj, adj, ew, vw: vec![1; n] }
    }

    fn len(&self) -> usize {
        self.vw.len()
    }

    fn edges(&self, v: usize) -> impl Iterator<Item = (usize, u32)> + '_ {
        let r = self.xadj[v]..self.xadj[v + 1];
        self.adj[r.clone()].iter().map(|&u| u as usize).zip(self.ew[r].iter().copied())
    }

    fn total_weight(&self) -> u64 {
        self.vw.iter().map(|&w| w as u64).sum()
    }

    /// Subgraph induced by `vertices` (ids of `self`), relabelled densely.
    fn induced(&self, vertices: &[u32]) -> WGraph {
        let mut local = vec![u32::MAX; self.len()];
        for (i, &v) in vertices.iter().enumerate() {
            local[v as usize] = i as u32;
        }
        let mut xadj = Vec::with_capacity(vertices.len() + 1);
        let mut adj = Vec::new();
        let mut ew = Vec::new();
        xadj.push(0);
        for &v in vertices {
            for (u, w) in self.edges(v as usize) {
                if local[u] != u32::MAX {
                    adj.push(local[u]);
                    ew.push(w);
                }
            }
            xadj.push(adj.len());
        }
        let vw = vertices.iter().map(|&v| self.vw[v as usize]).collect();
        WGraph { xadj, adj, ew, vw }
    }
}

fn recursive_bisect(
    g: &WGraph,
    vertices: &[u32],
    parts: usize,
    first_part: u32,
    imbalance: f64,
    rng: &mut ChaCha8Rng,
    out: &mut [u32],
) {
    if parts == 1 {
        for &v in vertices {
            out[v as usize] = first_part;
        }
        return;
    }
    let sub = g.induced(vertices);
    let left_parts = parts / 2;
    let total = sub.total_weight();
    let target_left = total * left_parts as u64 / parts as u64;
    let tol = ((imbalance * 0.5 * total as f64 * left_parts as f64 / parts as f64) as u64).max(1);
    let side = multilevel_bisect(&sub, target_left, tol, rng);

    let (mut left, mut right) = (Vec::new(), Vec::new());
    for (i, &v) in vertices.iter().enumerate() {
        if side[i] == 0 { left.push(v) } else { right.push(v) }
    }
    recursive_bisect(g, &left, left_parts, first_part, imbalance, rng, out);
    recursive_bisect(g, &right, parts - left_parts, first_part + left_parts as u32, imbalance, rng, out);
}

/// Returns a side (0 or 1) per vertex with side-0 weight close to `target0`.
fn multilevel_bisect(g: &WGraph, target0: u64, tol: u64, rng: &mut ChaCha8Rng) -> Vec<u8> {
    let total = g.total_weight();
    let max_vw = ((total / 20).max(1)) as u32;
    let mut levels: Vec<(WGraph, Vec<u32>)> = Vec::new();
    let mut current = g.clone();
    while current.len() > COARSEST {
        let (coarse, cmap) = coarsen(&current, max_vw, rng);
        if coarse.len() * 20 > current.len() * 19 {
            break;
        }
        levels.push((core::mem::replace(&mut current, coarse), cmap));
    }

    let mut side = initial_bisection(&current, target0, tol, rng);
    while let Some((finer, cmap)) = levels.pop() {
        side = cmap.iter().map(|&c| side[c as usize]).collect();
        let level_tol = tol.max(finer.vw.iter().copied().max().unwrap_or(1) as u64);
        fm_refine(&finer, &mut side, target0, level_tol);
    }
    side
}

/// Heavy-edge matching; returns the coarse graph and `fine -> coarse`.
fn coarsen(g: &WGraph, max_vw: u32, rng: &mut ChaCha8Rng) -> (WGraph, Vec<u32>) {
    let n = g.len();
    let mut order: Vec<u32> = (0..n as u32).collect();
    order.shuffle(rng);
    let mut mate = vec![u32::MAX; n];
    for &v in &order {
        let v = v as usize;
        if mate[v] != u32::MAX {
            continue;
        }
        let mut best: Option<(u32, usize)> = None;
        for (u, w) in g.edges(v) {
            if mate[u] == u32::MAX && g.vw[v] + g.vw[u] <= max_vw && best.is_none_or(|(bw, _)| w > bw) {
                best = Some((w, u));
            }
        }
        match best {
            Some((_, u)) => {
                mate[v] = u as u32;
                mate[u] = v as u32;
            }
            None => mate[v] = v as u32,
        }
    }

    // Two-hop matching: leaves of the same hub cannot match directly, so pair
    // unmatched vertices that share their heaviest neighbor.
    let mut waiting = vec![u32::MAX; n];
    for &v in &order {
        let v = v as usize;
        if mate[v] != v as u32 {
            continue;
        }
        let Some((hub, _)) = g.edges(v).fold(None, |best: Option<(usize, u32)>, (u, w)| match best {
            Some((_, bw)) if bw >= w => best,
            _ => Some((u, w)),
        }) else {
            continue;
        };
        let other = waiting[hub];
        if other != u32::MAX && g.vw[v] + g.vw[other as usize] <= max_vw {
            mate[v] = other;
            mate[other as usize] = v as u32;
            waiting[hub] = u32::MAX;
        } else {
            waiting[hub] = v as u32;
        }
    }

    // Isolated vertices have no neighbor to match; pair them with each other.
    let mut lone = u32::MAX;
    for &v in &order {
        let v = v as usize;
        if mate[v] != v as u32 || g.xadj[v] != g.xadj[v + 1] {
            continue;
        }
        if lone != u32::MAX && g.vw[v] + g.vw[lone as usize] <= max_vw {
            mate[v] = lone;
            mate[lone as usize] = v as u32;
            lone = u32::MAX;
        } else {
            lone = v as u32;
        }
    }

    let mut cmap = vec![u32::MAX; n];
    let mut members: Vec<(u32, u32)> = Vec::new();
    for v in 0..n {
        if cmap[v] == u32::MAX {
            let c = members.len() as u32;
            cmap[v] = c;
            cmap[mate[v] as usize] = c;
            members.push((v as u32, mate[v]));
        }
    }

    let cn = members.len();
    let mut xadj = Vec::with_capacity(cn + 1);
    let mut adj = Vec::new();
    let mut ew = Vec::new();
    let mut vw = Vec::with_capacity(cn);
    let mut slot = vec![usize::MAX; cn];
    xadj.push(0);
    for (c, &(a, b)) in members.iter().enumerate() {
        let start = adj.len();
        let pair = [a, b];
        let fine = if a == b { &pair[..1] } else { &pair[..] };
        let weight = fine.iter().map(|&v| g.vw[v as usize]).sum();
        for &v in fine {
            for (u, w) in g.edges(v as usize) {
                let cu = cmap[u] as usize;
                if cu == c {
                    continue;
                }
                if slot[cu] == usize::MAX || slot[cu] < start {
                    slot[cu] = adj.len();
                    adj.push(cu as u32);
                    ew.push(w);
                } else {
                    ew[slot[cu]] += w;
                }
            }
        }
        vw.push(weight);
        xadj.push(adj.len());
    }
    (WGraph { xadj, adj, ew, vw }, cmap)
}

fn cut_of(g: &WGraph, side: &[u8]) -> u64 {
    let mut cut = 0u64;
    for v in 0..g.len() {
        for (u, w) in g.edges(v) {
            if side[u] != side[v] {
                cut += w as u64;
            }
        }
    }
    cut / 2
}

fn side0_weight(g: &WGraph, side: &[u8]) -> u64 {
    side.iter().zip(&g.vw).filter(|(s, _)| **s == 0).map(|(_, &w)| w as u64).sum()
}

fn initial_bisection(g: &WGraph, target0: u64, tol: u64, rng: &mut ChaCha8Rng) -> Vec<u8> {
    let n = g.len();
    let mut best: Option<(u64, u64, Vec<u8>)> = None;
    for _ in 0..INITIAL_TRIES {
        let mut order: Vec<u32> = (0..n as u32).collect();
        order.shuffle(rng);
        let mut side = grow_region(g, target0, &order);
        fm_refine(g, &mut side, target0, tol);
        let cut = cut_of(g, &side);
        let dev = side0_weight(g, &side).abs_diff(target0);
        let excess = dev.saturating_sub(tol);
        let better = match &best {
            None => true,
            Some((bc, bx, _)) => (excess, cut) < (*bx, *bc),
        };
        if better {
            best = Some((cut, excess, side));
        }
    }
    best.unwrap().2
}

/// Greedy graph growing: side 0 absorbs the frontier vertex with the best
/// gain until it reaches `target0`; starts (and restarts on exhausted
/// components) follow `order`.
fn grow_region(g: &WGraph, target0: u64, order: &[u32]) -> Vec<u8> {
    let n = g.len();
    let mut side = vec![1u8; n];
    let mut gain = vec![0i64; n];
    for (v, gv) in gain.iter_mut().enumerate() {
        *gv = -(g.edges(v).map(|(_, w)| w as i64).sum::<i64>());
    }
    let mut heap: BinaryHeap<(i64, Reverse<u32>)> = BinaryHeap::new();
    let mut weight0 = 0u64;
    let mut next_start = 0;
    while weight0 < target0 {
        let v = loop {
            match heap.pop() {
                Some((gn, Reverse(v))) if side[v as usize] == 1 && gain[v as usize] == gn => break Some(v as usize),
                Some(_) => continue,
                None => break None,
            }
        };
        let v = match v {
            Some(v) => v,
            None => {
                while next_start < n && side[order[next_start] as usize] == 0 {
                    next_start += 1;
                }
                if next_start == n {
                    break;
                }
                order[next_start] as usize
            }
        };
        side[v] = 0;
        weight0 += g.vw[v] as u64;
        for (u, w) in g.edges(v) {
            if side[u] == 1 {
                gain[u] += 2 * w as i64;
                heap.push((gain[u], Reverse(u as u32)));
            }
        }
    }
    side
}

/// Two-way Fiduccia–Mattheyses refinement keeping side-0 weight within
/// `target0 ± tol` (moves that reduce an existing violation are also allowed).
fn fm_refine(g: &WGraph, side: &mut [u8], target0: u64, tol: u64) {
    let n = g.len();
    let mut ext = vec![0i64; n];
    let mut int = vec![0i64; n];
    for v in 0..n {
        for (u, w) in g.edges(v) {
            if side[u] == side[v] {
                int[v] += w as i64;
            } else {
                ext[v] += w as i64;
            }
        }
    }
    let mut w0 = side0_weight(g, side) as i64;
    let target = target0 as i64;
    let tol = tol as i64;
    let mut cut = cut_of(g, side) as i64;
    let mut locked = vec![false; n];

    for _ in 0..FM_PASSES {
        let mut heaps: [BinaryHeap<(i64, Reverse<u32>)>; 2] = [BinaryHeap::new(), BinaryHeap::new()];
        for v in 0..n {
            if ext[v] > 0 {
                heaps[side[v] as usize].push((ext[v] - int[v], Reverse(v as u32)));
            }
        }
        locked.iter_mut().for_each(|l| *l = false);
        let start_cut = cut;
        let start_dev = (w0 - target).abs();
        let mut best = (cut, start_dev, 0usize);
        let mut moves: Vec<usize> = Vec::new();

        loop {
            let mut choice: Option<(i64, usize)> = None;
            for s in 0..2 {
                // Drop stale entries so the top is current.
                while let Some(&(gn, Reverse(v))) = heaps[s].peek() {
                    let v = v as usize;
                    if locked[v] || side[v] as usize != s || ext[v] - int[v] != gn {
                        heaps[s].pop();
                    } else {
                        break;
                    }
                }
                if let Some(&(gn, Reverse(v))) = heaps[s].peek() {
                    let v = v as usize;
                    let vw = g.vw[v] as i64;
                    let new_w0 = if s == 0 { w0 - vw } else { w0 + vw };
                    let dev = (new_w0 - target).abs();
                    let feasible = dev <= tol || dev < (w0 - target).abs();
                    if feasible && choice.is_none_or(|(cg, _)| gn > cg) {
                        choice = Some((gn, v));
                    }
                }
            }
            let Some((gn, v)) = choice else { break };
            heaps[side[v] as usize].pop();

            let from = side[v];
            side[v] = 1 - from;
            locked[v] = true;
            let vw = g.vw[v] as i64;
            w0 += if from == 0 { -vw } else { vw };
            cut -= gn;
            core::mem::swap(&mut ext[v], &mut int[v]);
            for (u, w) in g.edges(v) {
                let w = w as i64;
                if side[u] == from {
                    int[u] -= w;
                    ext[u] += w;
                } else {
                    ext[u] -= w;
                    int[u] += w;
                }
                if !locked[u] && ext[u] > 0 {
                    heaps[side[u] as usize].push((ext[u] - int[u], Reverse(u as u32)));
                }
            }
            moves.push(v);

            let dev = (w0 - target).abs();
            let within = dev <= tol;
            let best_within = best.1 <= tol;
            let improved = match (within, best_within) {
                (true, false) => true,
                (false, true) => false,
                (true, true) => cut < best.0 || (cut == best.0 && dev < best.1),
                (false, false) => dev < best.1 || (dev == best.1 && cut < best.0),
            };
            if improved {
                best = (cut, dev, moves.len());
            } else if moves.len() - best.2 > FM_PATIENCE {
                break;
            }
        }

        // Roll back past the best prefix.
        for &v in moves[best.2..].iter().rev() {
            let from = side[v];
            side[v] = 1 - from;
            let vw = g.vw[v] as i64;
            w0 += if from == 0 { -vw } else { vw };
            core::mem::swap(&mut ext[v], &mut int[v]);
            for (u, w) in g.edges(v) {
                let w = w as i64;
                if side[u] == from {
                    int[u] -= w;
                    ext[u] += w;
                } else {
                    ext[u] -= w;
                    int[u] += w;
                }
            }
        }
        cut = best.0;
        if best.0 >= start_cut && best.1 >= start_dev {
            break;
        }
    }
}

fn part_sizes(assignment: &[u32], parts: usize) -> Vec<usize> {
    let mut sizes = vec![0usize; parts];
    for &p in assignment {
        sizes[p as usize] += 1;
    }
    sizes
}

/// Moves vertices out of parts larger than `max_size`, preferring moves that
/// keep neighbors together.
fn enforce_balance(g: &WGraph, assignment: &mut [u32], parts: usize, max_size: usize) {
    let mut sizes = part_sizes(assignment, parts);
    let mut conn = vec![0i64; parts];
    while sizes.iter().any(|&s| s > max_size) {
        let mut candidates: Vec<(i64, u32, u32)> = Vec::new();
        for v in 0..g.len() {
            let p = assignment[v] as usize;
            if sizes[p] <= max_size {
                continue;
            }
            conn.iter_mut().for_each(|c| *c = 0);
            for (u, w) in g.edges(v) {
                conn[assignment[u] as usize] += w as i64;
            }
            let mut dest: Option<usize> = None;
            for q in 0..parts {
                if q == p || sizes[q] >= max_size {
                    continue;
                }
                let better = match dest {
                    None => true,
                    Some(d) => conn[q] > conn[d] || (conn[q] == conn[d] && sizes[q] < sizes[d]),
                };
                if better {
                    dest = Some(q);
                }
            }
            if let Some(q) = dest {
                candidates.push((conn[q] - conn[p], v as u32, q as u32));
            }
        }
        candidates.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
        let mut moved = false;
        for (_, v, q) in candidates {
            let p = assignment[v as usize] as usize;
            if sizes[p] > max_size && sizes[q as usize] < max_size {
                assignment[v as usize] = q;
                sizes[p] -= 1;
                sizes[q as usize] += 1;
                moved = true;
            }
        }
        if !moved {
            break;
        }
    }
}

/// Greedy k-way boundary refinement: move a vertex to the adjacent part it is
/// most connected to when that strictly reduces the cut and sizes allow.
fn refine_kway(g: &WGraph, assignment: &mut [u32], parts: usize, max_size: usize, imbalance: f64) {
    let n = g.len();
    let ideal = n.div_ceil(parts);
    let min_size = libm::floor((1.0 - imbalance) * (n / parts) as f64) as usize;
    let min_size = min_size.min(ideal).max(1);
    let mut sizes = part_sizes(assignment, parts);
    let mut conn = vec![0i64; parts];
    for _ in 0..4 {
        let mut moved = 0;
        for v in 0..n {
            let p = assignment[v] as usize;
            if sizes[p] <= min_size {
                continue;
            }
            conn.iter_mut().for_each(|c| *c = 0);
            let mut boundary = false;
            for (u, w) in g.edges(v) {
                let q = assignment[u] as usize;
                conn[q] += w as i64;
                boundary |= q != p;
            }
            if !boundary {
                continue;
            }
            let mut best = p;
            for q in 0..parts {
                if q != p && sizes[q] < max_size && conn[q] > conn[best] {
                    best = q;
                }
            }
            if best != p {
                assignment[v] = best as u32;
                sizes[p] -= 1;
                sizes[best] += 1;
                moved += 1;
            }
        }
        if moved == 0 {
            break;
        }
    }
}
