//! Per-node latency models and online load factors.
//!
//! Offline, a node's execution time is regressed on subgraph cardinality:
//! `ω(c) = β_v·|V| + β_n·|N_V| + ε`. Online, the ratio of a measured time to
//! the model's estimate (the load factor η) rescales every other prediction.

use alloc::vec::Vec;

use crate::graph::{sample_subgraph, Cardinality, Graph, VertexId};
use crate::{Error, Result};

/// Affine latency estimate in milliseconds.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LatencyModel {
    pub per_vertex_ms: f64,
    pub per_neighbor_ms: f64,
    pub intercept_ms: f64,
    /// Residual standard error of the fit (0 for hand-built models).
    pub residual_std_error: f64,
}

impl LatencyModel {
    pub const fn new(per_vertex_ms: f64, per_neighbor_ms: f64, intercept_ms: f64) -> Self {
        Self { per_vertex_ms, per_neighbor_ms, intercept_ms, residual_std_error: 0.0 }
    }

    /// Unclamped affine value.
    pub fn affine(&self, c: Cardinality) -> f64 {
        self.per_vertex_ms * c.num_vertices as f64 + self.per_neighbor_ms * c.num_neighbors as f64 + self.intercept_ms
    }

    /// `ω(c)`, clamped at zero.
    pub fn predict(&self, c: Cardinality) -> f64 {
        self.affine(c).max(0.0)
    }

    /// The same model with every coefficient multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            per_vertex_ms: self.per_vertex_ms * factor,
            per_neighbor_ms: self.per_neighbor_ms * factor,
            intercept_ms: self.intercept_ms * factor,
            residual_std_error: self.residual_std_error * factor,
        }
    }
}

/// Ratio of measured to predicted execution time.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LoadFactor {
    pub eta: f64,
    /// Inference round of the last refresh.
    pub updated_at: u64,
}

impl LoadFactor {
    pub const NEUTRAL: Self = Self { eta: 1.0, updated_at: 0 };

    pub fn new(eta: f64, updated_at: u64) -> Result<Self> {
        if !(eta.is_finite() && eta > 0.0) {
            return Err(Error::InvalidParameter(alloc::format!("load factor {eta} must be positive")));
        }
        Ok(Self { eta, updated_at })
    }

    /// η, or 1 once the factor is older than `window` rounds.
    pub fn effective(&self, now: u64, window: u64) -> f64 {
        if now.saturating_sub(self.updated_at) > window {
            1.0
        } else {
            self.eta
        }
    }
}

impl Default for LoadFactor {
    fn default() -> Self {
        Self::NEUTRAL
    }
}

/// One calibration subgraph with its measured cardinality.
#[derive(Clone, Debug, PartialEq)]
pub struct CalibrationSample {
    pub vertices: Vec<VertexId>,
    pub cardinality: Cardinality,
}

pub const DEFAULT_SAMPLES_PER_AXIS: usize = 20;

/// Six axes geometric in `|V|`: `n/64, n/32, …, n/2` (at least one vertex each).
pub fn default_axes(vertex_count: usize) -> Vec<Cardinality> {
    (1..=6).rev().map(|s| Cardinality::new((vertex_count >> s).max(1).min(vertex_count), 0)).collect()
}

/// Draws `samples_per_axis` uniform subgraphs per axis.
pub fn build_calibration_set(
    g: &Graph,
    axes: &[Cardinality],
    samples_per_axis: usize,
    seed: u64,
) -> Result<Vec<CalibrationSample>> {
    if axes.is_empty() {
        return Err(Error::InvalidParameter("calibration needs at least one axis".into()));
    }
    let mut out = Vec::with_capacity(axes.len() * samples_per_axis);
    for (a, &axis) in axes.iter().enumerate() {
        for s in 0..samples_per_axis {
            let sample_seed = seed
                .wrapping_mul(0x9E37_79B9_7F4A_7C15)
                .wrapping_add((a * samples_per_axis + s) as u64);
            let (vertices, cardinality) = sample_subgraph(g, axis, sample_seed)?;
            out.push(CalibrationSample { vertices, cardinality });
        }
    }
    Ok(out)
}

/// Ordinary least squares for `time = β·⟨|V|, |N_V|⟩ + ε`.
///
/// When the two regressors are collinear (or one is constant) the
/// minimum-norm solution is returned; only a design with no spread at all is
/// rejected.
pub fn fit_latency_model(observations: &[(Cardinality, f64)]) -> Result<LatencyModel> {
    let m = observations.len();
    if m < 3 {
        return Err(Error::TooFewObservations { needed: 3, found: m });
    }
    if observations.iter().any(|(_, t)| !t.is_finite()) {
        return Err(Error::NonFinite);
    }
    let mf = m as f64;
    let (mut mx, mut my, mut mt) = (0.0, 0.0, 0.0);
    for (c, t) in observations {
        mx += c.num_vertices as f64;
        my += c.num_neighbors as f64;
        mt += t;
    }
    mx /= mf;
    my /= mf;
    mt /= mf;

    let (mut sxx, mut sxy, mut syy, mut sxt, mut syt) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (c, t) in observations {
        let dx = c.num_vertices as f64 - mx;
        let dy = c.num_neighbors as f64 - my;
        let dt = t - mt;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
        sxt += dx * dt;
        syt += dy * dt;
    }

    // Pseudo-inverse of the symmetric 2x2 scatter matrix via its eigenpairs.
    let trace = sxx + syy;
    if trace <= 0.0 {
        return Err(Error::RankDeficient);
    }
    let half_gap = libm::sqrt(((sxx - syy) / 2.0) * ((sxx - syy) / 2.0) + sxy * sxy);
    let mid = trace / 2.0;
    let eigen = [mid + half_gap, mid - half_gap];
    let tol = 1e-10 * eigen[0];
    let mut beta = [0.0, 0.0];
    let mut rank = 0;
    for &lambda in &eigen {
        if lambda <= tol {
            continue;
        }
        rank += 1;
        let (vx, vy) = eigenvector(sxx, sxy, syy, lambda);
        let proj = (vx * sxt + vy * syt) / lambda;
        beta[0] += proj * vx;
        beta[1] += proj * vy;
    }
    let intercept = mt - beta[0] * mx - beta[1] * my;

    let params = rank + 1;
    let ssr: f64 = observations
        .iter()
        .map(|(c, t)| {
            let r = t - (beta[0] * c.num_vertices as f64 + beta[1] * c.num_neighbors as f64 + intercept);
            r * r
        })
        .sum();
    let residual_std_error = if m > params { libm::sqrt(ssr / (m - params) as f64) } else { 0.0 };

    Ok(LatencyModel { per_vertex_ms: beta[0], per_neighbor_ms: beta[1], intercept_ms: intercept, residual_std_error })
}

/// Unit eigenvector of `[[a, b], [b, d]]` for eigenvalue `lambda`.
fn eigenvector(a: f64, b: f64, d: f64, lambda: f64) -> (f64, f64) {
    // Rows of (M - λI) are orthogonal to the eigenvector; use the larger one.
    let (r1, r2) = ((a - lambda, b), (b, d - lambda));
    let n1 = r1.0 * r1.0 + r1.1 * r1.1;
    let n2 = r2.0 * r2.0 + r2.1 * r2.1;
    let (x, y) = if n1 >= n2 { (-r1.1, r1.0) } else { (-r2.1, r2.0) };
    let norm = libm::sqrt(x * x + y * y);
    if norm == 0.0 {
        // M is a multiple of I: any direction works, pick by eigen order.
        if lambda == a { (1.0, 0.0) } else { (0.0, 1.0) }
    } else {
        (x / norm, y / norm)
    }
}

/// `η = measured / ω(c)`.
pub fn update_load_factor(model: &LatencyModel, c: Cardinality, measured_ms: f64, round: u64) -> Result<LoadFactor> {
    let predicted = model.predict(c);
    if predicted <= 0.0 {
        return Err(Error::NonPositivePrediction(model.affine(c)));
    }
    LoadFactor::new(measured_ms / predicted, round)
}

/// `η · ω(c)`.
pub fn predict_online(model: &LatencyModel, load: &LoadFactor, c: Cardinality) -> f64 {
    (load.eta * model.predict(c)).max(0.0)
}
