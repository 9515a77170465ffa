//! Online load balancing between inference rounds.
//!
//! Each round the measured per-fog execution times are compared with their
//! mean. A few overloaded fogs are relieved by diffusion: boundary vertices
//! migrate one at a time from the slowest fog to a faster one. When many
//! fogs are overloaded the whole placement is re-planned with load-scaled
//! latency models. Changes are computed virtually and committed between rounds.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::graph::{Cardinality, Graph, VertexId};
use crate::planner::Placement;
use crate::profiler::{update_load_factor, LatencyModel};
use crate::sim::{ServingReport, Strategy, Testbed};
use crate::{Error, Result};

pub const DEFAULT_SLACKNESS: f64 = 1.25;
pub const DEFAULT_SKEWNESS: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SchedulerConfig {
    /// λ > 1: a fog is overloaded when its time exceeds λ × mean.
    pub slackness: f64,
    /// θ ∈ (0, 1]: overloaded fraction above which the placement is re-planned.
    pub skewness: f64,
    /// Migration cap per diffusion as a multiple of `|V|/n`.
    pub migration_cap_factor: f64,
}

impl Default for SchedulerConfig {
    fn default() -> Self {
        Self { slackness: DEFAULT_SLACKNESS, skewness: DEFAULT_SKEWNESS, migration_cap_factor: 2.0 }
    }
}

impl SchedulerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.slackness > 1.0 && self.slackness.is_finite()) {
            return Err(Error::InvalidParameter(format!("slackness {} must exceed 1", self.slackness)));
        }
        if !(self.skewness > 0.0 && self.skewness <= 1.0) {
            return Err(Error::InvalidParameter(format!("skewness {} must lie in (0, 1]", self.skewness)));
        }
        if !(self.migration_cap_factor >= 0.0 && self.migration_cap_factor.is_finite()) {
            return Err(Error::InvalidParameter("migration cap factor must be non-negative".into()));
        }
        Ok(())
    }

    fn migration_cap(&self, vertices: usize, fogs: usize) -> usize {
        libm::ceil(self.migration_cap_factor * vertices as f64 / fogs.max(1) as f64) as usize
    }
}

/// Per-fog imbalance indicators `μ_j = T_j / mean(T)`.
#[derive(Clone, Debug, PartialEq)]
pub struct BalanceState {
    pub mu: Vec<f64>,
    pub slackness: f64,
    pub skewness: f64,
    /// `|{j : μ_j > λ}|`.
    pub overloaded: usize,
}

impl BalanceState {
    pub fn max_mu(&self) -> f64 {
        self.mu.iter().copied().fold(0.0, f64::max)
    }

    pub fn mode(&self) -> Mode {
        if self.overloaded == 0 {
            Mode::None
        } else if self.overloaded as f64 / self.mu.len() as f64 <= self.skewness {
            Mode::Diffuse
        } else {
            Mode::Replan
        }
    }
}

pub fn compute_indicators(times: &[f64], slackness: f64, skewness: f64) -> Result<BalanceState> {
    if times.is_empty() {
        return Err(Error::EmptyCluster);
    }
    if let Some((fog, &time)) = times.iter().enumerate().find(|(_, t)| !(t.is_finite() && **t > 0.0)) {
        return Err(Error::NonPositiveTime { fog, time });
    }
    let mean = times.iter().sum::<f64>() / times.len() as f64;
    let mu: Vec<f64> = times.iter().map(|t| t / mean).collect();
    let overloaded = mu.iter().filter(|&&m| m > slackness).count();
    Ok(BalanceState { mu, slackness, skewness, overloaded })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Mode {
    None,
    Diffuse,
    Replan,
}

impl Mode {
    pub fn name(&self) -> &'static str {
        match self {
            Mode::None => "none",
            Mode::Diffuse => "diffuse",
            Mode::Replan => "replan",
        }
    }
}

/// One vertex moved by diffusion with the predicted maximum execution time
/// across fogs just before and after the move.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Migration {
    pub vertex: VertexId,
    pub from: usize,
    pub to: usize,
    pub predicted_max_before: f64,
    pub predicted_max_after: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Diffusion {
    pub placement: Placement,
    pub migrations: Vec<Migration>,
}

/// Incrementally maintained cardinalities of every fog's partition.
struct FogState<'a> {
    g: &'a Graph,
    fogs: usize,
    assignment: Vec<u32>,
    /// `[v * fogs + j]`: neighbors of `v` on fog `j`.
    counts: Vec<u32>,
    cards: Vec<Cardinality>,
}

impl<'a> FogState<'a> {
    fn new(g: &'a Graph, placement: &Placement) -> Self {
        let fogs = placement.fog_count();
        let assignment = placement.assignment().to_vec();
        let mut counts = vec![0u32; g.vertex_count() * fogs];
        for (v, c) in counts.chunks_exact_mut(fogs.max(1)).enumerate().take(g.vertex_count()) {
            for &u in g.neighbors(v as VertexId) {
                c[assignment[u as usize] as usize] += 1;
            }
        }
        let cards = g.part_cardinalities(&assignment, fogs);
        Self { g, fogs, assignment, counts, cards }
    }

    fn count(&self, v: VertexId, j: usize) -> u32 {
        self.counts[v as usize * self.fogs + j]
    }

    /// Cardinalities of `a` and `b` after moving `v` from `a` to `b`.
    fn after_move(&self, v: VertexId, a: usize, b: usize) -> (Cardinality, Cardinality) {
        let (mut ca, mut cb) = (self.cards[a], self.cards[b]);
        ca.num_vertices -= 1;
        cb.num_vertices += 1;
        if self.count(v, a) > 0 {
            ca.num_neighbors += 1;
        }
        if self.count(v, b) > 0 {
            cb.num_neighbors -= 1;
        }
        for &u in self.g.neighbors(v) {
            let fu = self.assignment[u as usize] as usize;
            if fu != a && self.count(u, a) == 1 {
                ca.num_neighbors -= 1;
            }
            if fu != b && self.count(u, b) == 0 {
                cb.num_neighbors += 1;
            }
        }
        (ca, cb)
    }

    fn apply(&mut self, v: VertexId, a: usize, b: usize) {
        let (ca, cb) = self.after_move(v, a, b);
        self.cards[a] = ca;
        self.cards[b] = cb;
        for &u in self.g.neighbors(v) {
            self.counts[u as usize * self.fogs + a] -= 1;
            self.counts[u as usize * self.fogs + b] += 1;
        }
        self.assignment[v as usize] = b as u32;
    }
}

fn predicted(models: &[LatencyModel], cards: &[Cardinality]) -> Vec<f64> {
    models.iter().zip(cards).map(|(m, &c)| if c.num_vertices == 0 { 0.0 } else { m.predict(c) }).collect()
}

fn argmax(xs: &[f64]) -> usize {
    (0..xs.len()).fold(0, |best, j| if xs[j] > xs[best] { j } else { best })
}

/// Migrates boundary vertices from the slowest fog toward faster ones until
/// the predicted maximum `μ` is within `λ`, no move lowers the predicted
/// maximum, or the migration cap is reached. `models` are the online
/// (load-scaled) estimates; every accepted move strictly lowers the predicted
/// time of the slower fog of its pair, so the global maximum never rises.
pub fn diffuse(placement: &Placement, g: &Graph, models: &[LatencyModel], cfg: &SchedulerConfig) -> Result<Diffusion> {
    cfg.validate()?;
    let n = placement.fog_count();
    if models.len() != n {
        return Err(Error::DimensionMismatch { expected: n, actual: models.len() });
    }
    if placement.vertex_count() != g.vertex_count() {
        return Err(Error::DimensionMismatch { expected: g.vertex_count(), actual: placement.vertex_count() });
    }
    let mut migrations = Vec::new();
    if n < 2 {
        return Ok(Diffusion { placement: placement.clone(), migrations });
    }
    let cap = cfg.migration_cap(g.vertex_count(), n);
    let mut state = FogState::new(g, placement);
    let mut moved = vec![false; g.vertex_count()];
    let mut candidates: Vec<(u32, VertexId)> = Vec::new();

    while migrations.len() < cap {
        let times = predicted(models, &state.cards);
        let mean = times.iter().sum::<f64>() / n as f64;
        let hi = argmax(&times);
        if mean <= 0.0 || times[hi] / mean <= cfg.slackness {
            break;
        }
        let mut partners: Vec<usize> = (0..n).filter(|&j| j != hi && times[hi] > cfg.slackness * times[j]).collect();
        partners.sort_by(|&a, &b| times[a].total_cmp(&times[b]).then(a.cmp(&b)));

        let mut accepted = None;
        'pairs: for &lo in &partners {
            candidates.clear();
            candidates.extend(
                (0..g.vertex_count() as VertexId)
                    .filter(|&v| state.assignment[v as usize] as usize == hi && !moved[v as usize])
                    .map(|v| (state.count(v, lo), v))
                    .filter(|&(c, _)| c > 0),
            );
            candidates.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
            let pair_max = times[hi].max(times[lo]);
            for &(_, v) in &candidates {
                let (ch, cl) = state.after_move(v, hi, lo);
                let th = if ch.num_vertices == 0 { 0.0 } else { models[hi].predict(ch) };
                let tl = models[lo].predict(cl);
                if th.max(tl) < pair_max {
                    accepted = Some((v, lo));
                    break 'pairs;
                }
            }
        }
        let Some((v, lo)) = accepted else { break };
        let before = times[hi];
        state.apply(v, hi, lo);
        moved[v as usize] = true;
        let after = predicted(models, &state.cards).into_iter().fold(0.0, f64::max);
        migrations.push(Migration { vertex: v, from: hi, to: lo, predicted_max_before: before, predicted_max_after: after });
    }
    Ok(Diffusion { placement: Placement::new(state.assignment, n)?, migrations })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScheduleOutcome {
    pub mode: Mode,
    pub state: BalanceState,
    pub placement: Placement,
    pub migrations: Vec<Migration>,
    /// Predicted `max μ` of the returned placement under the online models.
    pub predicted_max_mu: f64,
}

/// One scheduling decision from measured execution times. `models` are the
/// online (load-scaled) estimates; `replan` re-plans the whole graph with them.
pub fn schedule<F>(
    placement: &Placement,
    g: &Graph,
    models: &[LatencyModel],
    measured_ms: &[f64],
    cfg: &SchedulerConfig,
    replan: F,
) -> Result<ScheduleOutcome>
where
    F: FnOnce(&[LatencyModel]) -> Result<Placement>,
{
    cfg.validate()?;
    let state = compute_indicators(measured_ms, cfg.slackness, cfg.skewness)?;
    let mode = state.mode();
    let (placement, migrations) = match mode {
        Mode::None => (placement.clone(), Vec::new()),
        Mode::Diffuse => {
            let d = diffuse(placement, g, models, cfg)?;
            (d.placement, d.migrations)
        }
        Mode::Replan => (replan(models)?, Vec::new()),
    };
    let times = predicted(models, &placement.cardinalities(g));
    let mean = times.iter().sum::<f64>() / times.len() as f64;
    let predicted_max_mu = if mean > 0.0 { times.iter().copied().fold(0.0, f64::max) / mean } else { 0.0 };
    Ok(ScheduleOutcome { mode, state, placement, migrations, predicted_max_mu })
}

/// Background load multiplier per round and fog.
#[derive(Clone, Debug, PartialEq)]
pub struct LoadTrace {
    fogs: usize,
    rounds: Vec<Vec<f64>>,
}

impl LoadTrace {
    pub fn new(fogs: usize, rounds: Vec<Vec<f64>>) -> Result<Self> {
        for r in &rounds {
            if r.len() != fogs {
                return Err(Error::DimensionMismatch { expected: fogs, actual: r.len() });
            }
            if r.iter().any(|&x| !(x.is_finite() && x > 0.0)) {
                return Err(Error::InvalidParameter("load multipliers must be positive".into()));
            }
        }
        Ok(Self { fogs, rounds })
    }

    pub fn flat(fogs: usize, rounds: usize) -> Self {
        Self { fogs, rounds: vec![vec![1.0; fogs]; rounds] }
    }

    /// Neutral load except on `fog`: a linear ramp to `peak` over `ramp`
    /// rounds starting at `start`, `hold` rounds at the peak, then a ramp back.
    pub fn spike(fogs: usize, rounds: usize, fog: usize, peak: f64, start: usize, ramp: usize, hold: usize) -> Self {
        let mut trace = Self::flat(fogs, rounds);
        let ramp = ramp.max(1);
        for (r, row) in trace.rounds.iter_mut().enumerate() {
            let Some(t) = r.checked_sub(start) else { continue };
            let level = if t < ramp {
                (t + 1) as f64 / ramp as f64
            } else if t < ramp + hold {
                1.0
            } else if t < 2 * ramp + hold {
                (2 * ramp + hold - t - 1) as f64 / ramp as f64
            } else {
                0.0
            };
            row[fog] = 1.0 + (peak - 1.0) * level;
        }
        trace
    }

    pub fn fogs(&self) -> usize {
        self.fogs
    }

    pub fn len(&self) -> usize {
        self.rounds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rounds.is_empty()
    }

    pub fn round(&self, r: usize) -> &[f64] {
        &self.rounds[r]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RoundRecord {
    pub round: usize,
    pub scheduled: ServingReport,
    pub unscheduled: ServingReport,
    /// Decision taken after the scheduled round, committed before the next.
    pub mode: Mode,
    pub migrations: Vec<Migration>,
    pub predicted_max_mu: f64,
}

/// Serves every round of `trace` twice: with the scheduler adjusting the
/// placement between rounds, and with the initial placement frozen. Both
/// runs see identical loads and noise.
pub fn replay_trace(bed: &Testbed<'_>, trace: &LoadTrace, cfg: &SchedulerConfig, seed: u64) -> Result<Vec<RoundRecord>> {
    cfg.validate()?;
    let n = bed.config().fogs.len();
    if trace.fogs() != n {
        return Err(Error::DimensionMismatch { expected: n, actual: trace.fogs() });
    }
    let g = bed.graph();
    let neutral = vec![1.0; n];
    let frozen = bed.deploy(Strategy::Fograph, seed, &neutral)?;
    let mut live = frozen.clone();
    let mut eta = neutral.clone();
    let mut out = Vec::with_capacity(trace.len());

    for r in 0..trace.len() {
        let load = trace.round(r);
        let round_seed = seed.wrapping_mul(0x2545_F491_4F6C_DD1D).wrapping_add(r as u64);
        let scheduled = bed.serve(&live, load, round_seed)?;
        let unscheduled = bed.serve(&frozen, load, round_seed)?;

        let cards = live.placement.cardinalities(g);
        for j in 0..n {
            if cards[j].num_vertices == 0 {
                continue;
            }
            if let Ok(f) = update_load_factor(&bed.profiles()[j], cards[j], scheduled.compute_ms[j], r as u64) {
                eta[j] = f.eta;
            }
        }
        let models = bed.loaded_profiles(&eta);
        let measured: Vec<f64> = scheduled.compute_ms.iter().map(|&t| t.max(f64::MIN_POSITIVE)).collect();
        let outcome = schedule(&live.placement, g, &models, &measured, cfg, |m| Ok(bed.plan(m)?.placement))?;
        if outcome.mode != Mode::None {
            live.placement = outcome.placement;
        }
        out.push(RoundRecord {
            round: r,
            scheduled,
            unscheduled,
            mode: outcome.mode,
            migrations: outcome.migrations,
            predicted_max_mu: outcome.predicted_max_mu,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn indicator_examples() {
        let s = compute_indicators(&[2.0; 4], 1.2, 0.5).unwrap();
        assert_eq!(s.mu, vec![1.0; 4]);
        assert_eq!(s.overloaded, 0);
        assert_eq!(s.mode(), Mode::None);

        let s = compute_indicators(&[3.0, 1.0], 1.2, 0.5).unwrap();
        assert_eq!(s.mu, vec![1.5, 0.5]);
        assert_eq!(s.overloaded, 1);

        let s = compute_indicators(&[1.5, 1.3, 0.8, 0.4], 1.2, 0.5).unwrap();
        assert_eq!(s.overloaded, 2);
        assert_eq!(s.mode(), Mode::Diffuse);

        let s = compute_indicators(&[1.5, 1.5, 1.5, 0.1], 1.2, 0.5).unwrap();
        assert_eq!(s.overloaded, 3);
        assert_eq!(s.mode(), Mode::Replan);

        assert!(compute_indicators(&[1.0, 0.0], 1.2, 0.5).is_err());
        assert!(compute_indicators(&[], 1.2, 0.5).is_err());
    }

    /// Vertices A..F = 0..5; fog 0 holds A-D, fog 1 holds E, F. D has the
    /// most edges into fog 1.
    fn six_vertex() -> (Graph, Placement) {
        let edges = [(0, 1), (0, 2), (1, 2), (1, 3), (2, 3), (2, 4), (3, 4), (3, 5), (4, 5)];
        let g = Graph::new(6, edges, 1, vec![0.0; 6]).unwrap();
        (g, Placement::new(vec![0, 0, 0, 0, 1, 1], 2).unwrap())
    }

    #[test]
    fn most_connected_boundary_vertex_moves() {
        let (g, p) = six_vertex();
        let m = LatencyModel::new(1.0, 0.0, 0.0);
        let d = diffuse(&p, &g, &[m, m], &SchedulerConfig::default()).unwrap();
        assert_eq!(d.migrations.len(), 1);
        assert_eq!(d.migrations[0].vertex, 3);
        assert_eq!(d.placement.sizes(), vec![3, 3]);
    }

    #[test]
    fn balanced_placement_is_untouched() {
        let (g, _) = six_vertex();
        let p = Placement::new(vec![0, 0, 0, 1, 1, 1], 2).unwrap();
        let m = LatencyModel::new(1.0, 0.0, 0.0);
        let d = diffuse(&p, &g, &[m, m], &SchedulerConfig::default()).unwrap();
        assert!(d.migrations.is_empty());
        assert_eq!(d.placement, p);
    }

    #[test]
    fn incremental_cardinalities_match_recount() {
        let (g, p) = six_vertex();
        let mut s = FogState::new(&g, &p);
        for (v, to) in [(3, 1), (2, 1), (5, 0)] {
            let from = s.assignment[v as usize] as usize;
            s.apply(v, from, to);
            assert_eq!(s.cards, g.part_cardinalities(&s.assignment, 2));
        }
    }

    #[test]
    fn schedule_branches() {
        let (g, p) = six_vertex();
        let m = LatencyModel::new(1.0, 0.0, 0.0);
        let cfg = SchedulerConfig::default();
        let none = schedule(&p, &g, &[m, m], &[1.0, 1.0], &cfg, |_| unreachable!()).unwrap();
        assert_eq!(none.mode, Mode::None);
        assert_eq!(none.placement, p);
        let diff = schedule(&p, &g, &[m, m], &[4.0, 2.0], &cfg, |_| unreachable!()).unwrap();
        assert_eq!(diff.mode, Mode::Diffuse);
        // Three of four fogs overloaded: global replan.
        let p4 = Placement::new(vec![0, 1, 2, 3, 3, 3], 4).unwrap();
        let replanned = Placement::new(vec![0, 0, 1, 1, 2, 3], 4).unwrap();
        let out = schedule(&p4, &g, &[m; 4], &[5.0, 5.0, 5.0, 0.1], &cfg, |_| Ok(replanned.clone())).unwrap();
        assert_eq!(out.mode, Mode::Replan);
        assert_eq!(out.placement, replanned);
    }

    #[test]
    fn spike_trace_shape() {
        let t = LoadTrace::spike(2, 12, 1, 2.0, 2, 2, 3);
        let fog1: Vec<f64> = (0..12).map(|r| t.round(r)[1]).collect();
        assert_eq!(fog1, vec![1.0, 1.0, 1.5, 2.0, 2.0, 2.0, 2.0, 1.5, 1.0, 1.0, 1.0, 1.0]);
        assert!((0..12).all(|r| t.round(r)[0] == 1.0));
    }
}
