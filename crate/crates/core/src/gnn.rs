//! Reference K-layer GNN inference: GCN, GAT and mean-aggregating GraphSAGE.
//!
//! Every layer is an `Aggregate` over one-hop neighbors followed by an
//! `Update`. [`layer_forward`] runs a single layer over any vertex subset, as
//! long as the previous layer's activations cover the subset and all of its
//! neighbors; that closure property is what lets a partition be computed on
//! one fog node and still agree with [`full_inference`].

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::graph::{Graph, VertexId};
use crate::rng::{self, streams};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ModelKind {
    Gcn,
    Gat,
    GraphSage,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Identity => x,
        }
    }
}

/// Dense row-major matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::ShapeMismatch { expected: rows * cols, actual: data.len() });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn identity(n: usize) -> Self {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            data[i * n + i] = 1.0;
        }
        Self { rows: n, cols: n, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// `out = self · x`
    fn mul_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.cols);
        for (row, o) in self.data.chunks_exact(self.cols).zip(out.iter_mut()) {
            *o = row.iter().zip(x).map(|(w, v)| w * v).sum();
        }
    }
}

/// How GAT obtains its attention coefficients `α_vu`.
#[derive(Clone, Debug, PartialEq)]
pub enum Attention {
    /// Softmax over `𝓝_v ∪ {v}` of `LeakyReLU(target·Wh_v + source·Wh_u)`.
    Learned { target: Vec<f64>, source: Vec<f64>, negative_slope: f64 },
    /// Precomputed `α_vu`, keyed by `(v, u)`; the self term is `(v, v)`.
    Fixed(BTreeMap<(VertexId, VertexId), f64>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub weight: Matrix,
    pub activation: Activation,
    /// Required for GAT, ignored otherwise.
    pub attention: Option<Attention>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GnnModel {
    kind: ModelKind,
    layers: Vec<Layer>,
}

impl GnnModel {
    pub fn new(kind: ModelKind, layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidParameter("a model needs at least one layer".into()));
        }
        let mut input = Self::layer_input(kind, &layers[0])?;
        for layer in &layers {
            let expected = match kind {
                ModelKind::GraphSage => 2 * input,
                _ => input,
            };
            if layer.weight.cols != expected {
                return Err(Error::DimensionMismatch { expected, actual: layer.weight.cols });
            }
            if kind == ModelKind::Gat {
                match &layer.attention {
                    Some(Attention::Learned { target, source, .. }) => {
                        for v in [target, source] {
                            if v.len() != layer.weight.rows {
                                return Err(Error::DimensionMismatch { expected: layer.weight.rows, actual: v.len() });
                            }
                        }
                    }
                    Some(Attention::Fixed(_)) => {}
                    None => return Err(Error::InvalidParameter("GAT layers need attention parameters".into())),
                }
            }
            input = layer.weight.rows;
        }
        Ok(Self { kind, layers })
    }

    fn layer_input(kind: ModelKind, layer: &Layer) -> Result<usize> {
        match kind {
            ModelKind::GraphSage if !layer.weight.cols.is_multiple_of(2) => Err(Error::InvalidParameter(format!(
                "GraphSAGE weight needs an even column count, got {}",
                layer.weight.cols
            ))),
            ModelKind::GraphSage => Ok(layer.weight.cols / 2),
            _ => Ok(layer.weight.cols),
        }
    }

    /// Glorot-uniform weights for layer widths `dims = [input, hidden.., output]`.
    /// Hidden layers use ReLU, the output layer is linear.
    pub fn random(kind: ModelKind, dims: &[usize], seed: u64) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::InvalidParameter("need at least input and output widths".into()));
        }
        let mut rng = rng::stream(seed, streams::MODEL_INIT);
        let mut layers = Vec::with_capacity(dims.len() - 1);
        for (i, w) in dims.windows(2).enumerate() {
            let (input, output) = (w[0], w[1]);
            let cols = if kind == ModelKind::GraphSage { 2 * input } else { input };
            let limit = libm::sqrt(6.0 / (cols + output) as f64);
            let data = (0..output * cols).map(|_| rng.random_range(-limit..=limit)).collect();
            let attention = (kind == ModelKind::Gat).then(|| {
                let a = libm::sqrt(6.0 / (output + 1) as f64);
                Attention::Learned {
                    target: (0..output).map(|_| rng.random_range(-a..=a)).collect(),
                    source: (0..output).map(|_| rng.random_range(-a..=a)).collect(),
                    negative_slope: 0.2,
                }
            });
            let activation = if i + 2 == dims.len() { Activation::Identity } else { Activation::Relu };
            layers.push(Layer { weight: Matrix::new(output, cols, data)?, activation, attention });
        }
        Self::new(kind, layers)
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn input_dim(&self) -> usize {
        Self::layer_input(self.kind, &self.layers[0]).unwrap_or(0)
    }

    /// Output width of layer `k` (1-based); `k = 0` gives the input width.
    pub fn dim_at(&self, k: usize) -> usize {
        if k == 0 {
            self.input_dim()
        } else {
            self.layers[k - 1].weight.rows
        }
    }
}

/// Activations `h^(k)` for a set of vertices.
#[derive(Clone, Debug, PartialEq)]
pub struct ActivationSet {
    layer: usize,
    dim: usize,
    /// Sorted, unique.
    vertices: Vec<VertexId>,
    values: Vec<f64>,
}

impl ActivationSet {
    pub fn new(layer: usize, dim: usize, mut rows: Vec<(VertexId, Vec<f64>)>) -> Result<Self> {
        rows.sort_by_key(|r| r.0);
        if let Some(w) = rows.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(Error::InvalidParameter(format!("vertex {} listed twice", w[0].0)));
        }
        let mut vertices = Vec::with_capacity(rows.len());
        let mut values = Vec::with_capacity(rows.len() * dim);
        for (v, h) in rows {
            if h.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, actual: h.len() });
            }
            vertices.push(v);
            values.extend_from_slice(&h);
        }
        Ok(Self { layer, dim, vertices, values })
    }

    /// Layer-0 activations: the raw features of every vertex.
    pub fn from_features(g: &Graph) -> Self {
        Self {
            layer: 0,
            dim: g.feature_dim(),
            vertices: (0..g.vertex_count() as VertexId).collect(),
            values: g.feature_matrix().to_vec(),
        }
    }

    /// Layer-0 activations from a row-major feature matrix over all vertices.
    pub fn from_matrix(dim: usize, values: Vec<f64>) -> Result<Self> {
        if dim == 0 || !values.len().is_multiple_of(dim) {
            return Err(Error::ShapeMismatch { expected: dim, actual: values.len() });
        }
        let n = values.len() / dim;
        Ok(Self { layer: 0, dim, vertices: (0..n as VertexId).collect(), values })
    }

    pub fn layer(&self) -> usize {
        self.layer
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn vertices(&self) -> &[VertexId] {
        &self.vertices
    }

    fn index_of(&self, v: VertexId) -> Option<usize> {
        // Full-graph sets are contiguous from 0.
        let direct = v as usize;
        if self.vertices.get(direct) == Some(&v) {
            return Some(direct);
        }
        self.vertices.binary_search(&v).ok()
    }

    pub fn get(&self, v: VertexId) -> Option<&[f64]> {
        self.index_of(v).map(|i| &self.values[i * self.dim..(i + 1) * self.dim])
    }

    pub fn iter(&self) -> impl Iterator<Item = (VertexId, &[f64])> {
        self.vertices.iter().copied().zip(self.values.chunks_exact(self.dim.max(1)))
    }

    /// Rows for `vertices` only; every requested vertex must be present.
    pub fn restrict(&self, vertices: &[VertexId]) -> Result<Self> {
        let mut rows = Vec::with_capacity(vertices.len());
        for &v in vertices {
            let h = self.get(v).ok_or(Error::MissingActivation(v))?;
            rows.push((v, h.to_vec()));
        }
        Self::new(self.layer, self.dim, rows)
    }

    /// Union of disjoint sets from the same layer.
    pub fn merge<'a, I: IntoIterator<Item = &'a ActivationSet>>(layer: usize, dim: usize, parts: I) -> Result<Self> {
        let mut rows = Vec::new();
        for part in parts {
            if part.dim != dim {
                return Err(Error::DimensionMismatch { expected: dim, actual: part.dim });
            }
            rows.extend(part.iter().map(|(v, h)| (v, h.to_vec())));
        }
        Self::new(layer, dim, rows)
    }

    /// Largest relative deviation `|a-b| / max(|a|, |b|, 1)` between two sets
    /// over the same vertices; `None` when the vertex sets differ.
    pub fn max_relative_error(&self, other: &Self) -> Option<f64> {
        if self.vertices != other.vertices || self.dim != other.dim {
            return None;
        }
        Some(
            self.values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| (a - b).abs() / a.abs().max(b.abs()).max(1.0))
                .fold(0.0, f64::max),
        )
    }
}

/// Computes layer `k` (1-based) for `local` from `prev` (layer `k-1`), which
/// must cover `local` and every neighbor of it. Neighbors are aggregated in
/// ascending id order.
pub fn layer_forward(
    model: &GnnModel,
    k: usize,
    local: &[VertexId],
    prev: &ActivationSet,
    g: &Graph,
) -> Result<ActivationSet> {
    if k == 0 || k > model.num_layers() {
        return Err(Error::InvalidParameter(format!("layer {k} outside 1..={}", model.num_layers())));
    }
    if prev.layer + 1 != k {
        return Err(Error::InvalidParameter(format!("layer {k} needs activations of layer {}", k - 1)));
    }
    let in_dim = model.dim_at(k - 1);
    if prev.dim != in_dim {
        return Err(Error::DimensionMismatch { expected: in_dim, actual: prev.dim });
    }
    let layer = &model.layers[k - 1];
    let out_dim = layer.weight.rows;

    let mut vertices: Vec<VertexId> = local.to_vec();
    vertices.sort_unstable();
    vertices.dedup();
    let mut values = vec![0.0; vertices.len() * out_dim];

    let fetch = |v: VertexId| prev.get(v).ok_or(Error::MissingActivation(v));

    match model.kind {
        ModelKind::Gcn => {
            let mut acc = vec![0.0; in_dim];
            for (i, &v) in vertices.iter().enumerate() {
                let nbrs = g.neighbors(v);
                acc.iter_mut().for_each(|a| *a = 0.0);
                for &u in nbrs {
                    add_assign(&mut acc, fetch(u)?);
                }
                add_assign(&mut acc, fetch(v)?);
                let norm = (nbrs.len() + 1) as f64;
                acc.iter_mut().for_each(|a| *a /= norm);
                let out = &mut values[i * out_dim..(i + 1) * out_dim];
                layer.weight.mul_into(&acc, out);
                out.iter_mut().for_each(|x| *x = layer.activation.apply(*x));
            }
        }
        ModelKind::GraphSage => {
            let mut cat = vec![0.0; 2 * in_dim];
            for (i, &v) in vertices.iter().enumerate() {
                let nbrs = g.neighbors(v);
                let (mean, own) = cat.split_at_mut(in_dim);
                mean.iter_mut().for_each(|a| *a = 0.0);
                for &u in nbrs {
                    add_assign(mean, fetch(u)?);
                }
                if !nbrs.is_empty() {
                    let d = nbrs.len() as f64;
                    mean.iter_mut().for_each(|a| *a /= d);
                }
                own.copy_from_slice(fetch(v)?);
                let out = &mut values[i * out_dim..(i + 1) * out_dim];
                layer.weight.mul_into(&cat, out);
                out.iter_mut().for_each(|x| *x = layer.activation.apply(*x));
            }
        }
        ModelKind::Gat => {
            let attention = layer.attention.as_ref().ok_or(Error::InvalidParameter("GAT layer without attention".into()))?;
            // W·h for every vertex the closure provides.
            let mut projected = vec![0.0; prev.len() * out_dim];
            for (i, (_, h)) in prev.iter().enumerate() {
                layer.weight.mul_into(h, &mut projected[i * out_dim..(i + 1) * out_dim]);
            }
            let z = |v: VertexId| -> Result<&[f64]> {
                let i = prev.index_of(v).ok_or(Error::MissingActivation(v))?;
                Ok(&projected[i * out_dim..(i + 1) * out_dim])
            };
            let mut coeffs = Vec::new();
            for (i, &v) in vertices.iter().enumerate() {
                let nbrs = g.neighbors(v);
                let zv = z(v)?;
                coeffs.clear();
                match attention {
                    Attention::Learned { target, source, negative_slope } => {
                        let self_score = dot(target, zv);
                        for &u in nbrs.iter().chain(core::iter::once(&v)) {
                            let e = self_score + dot(source, z(u)?);
                            coeffs.push(if e >= 0.0 { e } else { negative_slope * e });
                        }
                        let max = coeffs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                        let mut total = 0.0;
                        for c in coeffs.iter_mut() {
                            *c = libm::exp(*c - max);
                            total += *c;
                        }
                        coeffs.iter_mut().for_each(|c| *c /= total);
                    }
                    Attention::Fixed(alpha) => {
                        for &u in nbrs.iter().chain(core::iter::once(&v)) {
                            coeffs.push(*alpha.get(&(v, u)).ok_or(Error::MissingAttention(v, u))?);
                        }
                    }
                }
                let out = &mut values[i * out_dim..(i + 1) * out_dim];
                for (&u, &a) in nbrs.iter().chain(core::iter::once(&v)).zip(&coeffs) {
                    for (o, x) in out.iter_mut().zip(z(u)?) {
                        *o += a * x;
                    }
                }
                out.iter_mut().for_each(|x| *x = layer.activation.apply(*x));
            }
        }
    }

    Ok(ActivationSet { layer: k, dim: out_dim, vertices, values })
}

/// Runs all K layers over the whole graph from its stored features.
pub fn full_inference(model: &GnnModel, g: &Graph) -> Result<ActivationSet> {
    infer_from(model, g, ActivationSet::from_features(g))
}

/// Runs all K layers over the whole graph from explicit layer-0 activations
/// (for example dequantized features).
pub fn infer_from(model: &GnnModel, g: &Graph, input: ActivationSet) -> Result<ActivationSet> {
    if input.dim != model.input_dim() {
        return Err(Error::DimensionMismatch { expected: model.input_dim(), actual: input.dim });
    }
    let all: Vec<VertexId> = (0..g.vertex_count() as VertexId).collect();
    let mut h = input;
    for k in 1..=model.num_layers() {
        h = layer_forward(model, k, &all, &h, g)?;
    }
    Ok(h)
}

/// Argmax class per vertex, in the set's vertex order. Ties go to the lowest index.
pub fn predict_labels(activations: &ActivationSet) -> Result<Vec<u32>> {
    if activations.dim == 0 {
        return Err(Error::EmptyVector);
    }
    Ok(activations.iter().map(|(_, h)| argmax(h)).collect())
}

fn argmax(h: &[f64]) -> u32 {
    let mut best = 0;
    for (i, &x) in h.iter().enumerate() {
        if x > h[best] {
            best = i;
        }
    }
    best as u32
}

#[inline]
fn add_assign(acc: &mut [f64], x: &[f64]) {
    for (a, b) in acc.iter_mut().zip(x) {
        *a += b;
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_layer(kind: ModelKind, weight: Matrix, activation: Activation) -> GnnModel {
        let attention = (kind == ModelKind::Gat).then(|| Attention::Fixed(BTreeMap::new()));
        GnnModel::new(kind, vec![Layer { weight, activation, attention }]).unwrap()
    }

    #[test]
    fn gcn_hand_example() {
        let g = Graph::new(2, [(0, 1)], 1, vec![2.0, 4.0]).unwrap();
        let model = single_layer(ModelKind::Gcn, Matrix::identity(1), Activation::Relu);
        let out = layer_forward(&model, 1, &[0], &ActivationSet::from_features(&g), &g).unwrap();
        assert_eq!(out.get(0).unwrap(), &[3.0]);
    }

    #[test]
    fn gat_isolated_vertex_uses_self_term() {
        let g = Graph::new(1, [], 2, vec![-1.0, 2.0]).unwrap();
        let mut alpha = BTreeMap::new();
        alpha.insert((0, 0), 1.0);
        let model = GnnModel::new(
            ModelKind::Gat,
            vec![Layer { weight: Matrix::identity(2), activation: Activation::Relu, attention: Some(Attention::Fixed(alpha)) }],
        )
        .unwrap();
        let out = full_inference(&model, &g).unwrap();
        assert_eq!(out.get(0).unwrap(), &[0.0, 2.0]);
    }

    #[test]
    fn learned_attention_normalizes() {
        // With W = I and zero attention vectors all scores tie, so α is uniform.
        let g = Graph::new(3, [(0, 1), (0, 2)], 1, vec![3.0, 6.0, 9.0]).unwrap();
        let model = GnnModel::new(
            ModelKind::Gat,
            vec![Layer {
                weight: Matrix::identity(1),
                activation: Activation::Identity,
                attention: Some(Attention::Learned { target: vec![0.0], source: vec![0.0], negative_slope: 0.2 }),
            }],
        )
        .unwrap();
        let out = full_inference(&model, &g).unwrap();
        assert!((out.get(0).unwrap()[0] - 6.0).abs() < 1e-12);
        assert!((out.get(1).unwrap()[0] - 4.5).abs() < 1e-12);
    }

    #[test]
    fn sage_isolated_vertex_has_zero_mean() {
        let g = Graph::new(1, [], 1, vec![5.0]).unwrap();
        let w = Matrix::new(1, 2, vec![10.0, 1.0]).unwrap();
        let model = single_layer(ModelKind::GraphSage, w, Activation::Identity);
        assert_eq!(full_inference(&model, &g).unwrap().get(0).unwrap(), &[5.0]);
    }

    #[test]
    fn missing_neighbor_is_an_error() {
        let g = Graph::new(2, [(0, 1)], 1, vec![2.0, 4.0]).unwrap();
        let model = single_layer(ModelKind::Gcn, Matrix::identity(1), Activation::Relu);
        let partial = ActivationSet::new(0, 1, vec![(0, vec![2.0])]).unwrap();
        assert_eq!(layer_forward(&model, 1, &[0], &partial, &g), Err(Error::MissingActivation(1)));
    }

    #[test]
    fn dimension_checks() {
        let w = Matrix::new(2, 3, vec![0.0; 6]).unwrap();
        let layers = vec![
            Layer { weight: w.clone(), activation: Activation::Relu, attention: None },
            Layer { weight: w, activation: Activation::Relu, attention: None },
        ];
        assert_eq!(GnnModel::new(ModelKind::Gcn, layers), Err(Error::DimensionMismatch { expected: 2, actual: 3 }));
        let g = Graph::new(1, [], 2, vec![0.0; 2]).unwrap();
        let model = GnnModel::random(ModelKind::Gcn, &[3, 2], 0).unwrap();
        assert!(matches!(full_inference(&model, &g), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn zero_weights_give_activation_of_zero() {
        let g = Graph::new(3, [(0, 1), (1, 2)], 2, vec![1.0, -2.0, 3.0, 0.5, -1.0, 4.0]).unwrap();
        let model = single_layer(ModelKind::Gcn, Matrix::zeros(3, 2), Activation::Relu);
        let out = full_inference(&model, &g).unwrap();
        assert!(out.iter().all(|(_, h)| h.iter().all(|&x| x == 0.0)));
    }

    #[test]
    fn argmax_ties_go_low() {
        let set = ActivationSet::new(1, 2, vec![(0, vec![0.1, 0.9]), (1, vec![0.5, 0.5])]).unwrap();
        assert_eq!(predict_labels(&set).unwrap(), vec![1, 0]);
        let empty = ActivationSet::new(1, 0, vec![(0, vec![])]).unwrap();
        assert_eq!(predict_labels(&empty), Err(Error::EmptyVector));
    }

    #[test]
    fn random_models_have_requested_shape() {
        for kind in [ModelKind::Gcn, ModelKind::Gat, ModelKind::GraphSage] {
            let m = GnnModel::random(kind, &[8, 6, 3], 1).unwrap();
            assert_eq!(m.num_layers(), 2);
            assert_eq!(m.input_dim(), 8);
            assert_eq!(m.dim_at(2), 3);
            assert_eq!(m.layers()[1].activation, Activation::Identity);
        }
    }
}
