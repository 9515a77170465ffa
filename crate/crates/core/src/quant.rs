//! Degree-aware feature quantization, bit-plane packing and lossless coding.
//!
//! High-degree vertices are aggregated by many neighbors, which averages out
//! their quantization noise, so they get fewer bits. Codes are packed per
//! vertex with the bit planes of all elements grouped together, then the whole
//! stream goes through a byte-level lossless codec.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::graph::{DegreeCdf, Graph, VertexId, FEATURE_BITWIDTH};
use crate::{Error, Result};

pub const SUPPORTED_BITS: [u32; 4] = [8, 16, 32, 64];
pub const DEFAULT_BITS: [u32; 4] = [64, 32, 16, 8];
pub const STREAM_MAGIC: &[u8; 4] = b"FGPK";
/// Per-record header: id, bitwidth, offset, scale.
pub const RECORD_HEADER_BITS: u64 = 32 + 8 + 64 + 64;
/// Stream header: magic and vertex count.
pub const STREAM_HEADER_BITS: u64 = 32 + 32;

/// Degree thresholds `⟨D1, D2, D3⟩` and per-interval bitwidths `⟨q0..q3⟩`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct QuantPlan {
    thresholds: [usize; 3],
    bits: [u32; 4],
}

impl QuantPlan {
    pub fn new(thresholds: [usize; 3], bits: [u32; 4]) -> Result<Self> {
        if thresholds[0] > thresholds[1] || thresholds[1] > thresholds[2] {
            return Err(Error::InvalidQuantPlan("thresholds must be ascending"));
        }
        if let Some(&b) = bits.iter().find(|b| !SUPPORTED_BITS.contains(b)) {
            return Err(Error::UnsupportedBitwidth(b));
        }
        if bits.windows(2).any(|w| w[0] < w[1]) {
            return Err(Error::InvalidQuantPlan("bitwidths must not increase with degree"));
        }
        Ok(Self { thresholds, bits })
    }

    pub fn thresholds(&self) -> [usize; 3] {
        self.thresholds
    }

    pub fn bits(&self) -> [u32; 4] {
        self.bits
    }

    pub fn with_bits(self, bits: [u32; 4]) -> Result<Self> {
        Self::new(self.thresholds, bits)
    }

    /// Bitwidth of a vertex with `degree`; a degree equal to `D_i` falls in
    /// the interval above it.
    pub fn assign_bitwidth(&self, degree: usize) -> u32 {
        let interval = self.thresholds.iter().filter(|&&d| degree >= d).count();
        self.bits[interval]
    }
}

/// Splits `[0, max_degree]` into four equal intervals: `D_i = ⌈i·max/4⌉`.
pub fn make_quant_plan(cdf: &DegreeCdf) -> Result<QuantPlan> {
    let max = cdf.max_degree();
    if max == 0 {
        return Err(Error::InvalidQuantPlan("degree thresholds need at least one edge"));
    }
    let d = |i: usize| (i * max).div_ceil(4);
    QuantPlan::new([d(1), d(2), d(3)], DEFAULT_BITS)
}

/// Feature payload size relative to full precision.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CompressionRatio {
    /// Exact ratio: each threshold's weight is the fraction of vertices with
    /// degree strictly below it, so it equals counting per-vertex bits.
    pub ratio: f64,
    /// Same closed form evaluated with the inclusive CDF `P(D ≤ D_i)`, which
    /// differs from `ratio` when vertices sit exactly on a threshold.
    pub inclusive: f64,
}

impl CompressionRatio {
    pub fn has_threshold_atoms(&self) -> bool {
        self.ratio != self.inclusive
    }
}

/// `(1/Q)·[q3 − Σ_i F(D_i)·(q_i − q_{i−1})]` with `Q = 64`.
pub fn compression_ratio(plan: &QuantPlan, cdf: &DegreeCdf) -> CompressionRatio {
    let q = plan.bits.map(f64::from);
    let closed_form = |f: &dyn Fn(usize) -> f64| {
        let sum: f64 = (1..4).map(|i| f(plan.thresholds[i - 1]) * (q[i] - q[i - 1])).sum();
        (q[3] - sum) / f64::from(FEATURE_BITWIDTH)
    };
    let ratio = if cdf.vertex_count() == 0 {
        1.0
    } else {
        // Integer counting keeps the exact path free of rounding.
        let n = cdf.vertex_count();
        let mut bits: u64 = 0;
        let mut below_prev = 0;
        for i in 0..4 {
            let below = if i < 3 { cdf.count_below(plan.thresholds[i]) } else { n };
            bits += (below - below_prev) * u64::from(plan.bits[i]);
            below_prev = below;
        }
        bits as f64 / (n as f64 * f64::from(FEATURE_BITWIDTH))
    };
    CompressionRatio { ratio, inclusive: closed_form(&|d| cdf.at(d)) }
}

/// The exact ratio through the closed form with strict-inequality CDF values.
pub fn compression_ratio_closed_form(plan: &QuantPlan, cdf: &DegreeCdf) -> f64 {
    let q = plan.bits.map(f64::from);
    let sum: f64 = (1..4).map(|i| cdf.below(plan.thresholds[i - 1]) * (q[i] - q[i - 1])).sum();
    (q[3] - sum) / f64::from(FEATURE_BITWIDTH)
}

/// One quantized feature vector.
#[derive(Clone, Debug, PartialEq)]
pub struct QuantizedVector {
    pub vertex: VertexId,
    pub bits: u32,
    pub offset: f64,
    pub scale: f64,
    /// For 64 bits, the raw IEEE-754 bit patterns.
    pub codes: Vec<u64>,
}

impl QuantizedVector {
    pub fn dequantize(&self) -> Vec<f64> {
        if self.bits == 64 {
            self.codes.iter().map(|&c| f64::from_bits(c)).collect()
        } else {
            self.codes.iter().map(|&c| self.offset + self.scale * c as f64).collect()
        }
    }

    pub fn payload_bits(&self) -> u64 {
        self.codes.len() as u64 * u64::from(self.bits)
    }
}

/// Min-max affine quantization to `bits`; 64 bits passes values through.
pub fn quantize_vector(vertex: VertexId, x: &[f64], bits: u32) -> Result<QuantizedVector> {
    if !SUPPORTED_BITS.contains(&bits) {
        return Err(Error::UnsupportedBitwidth(bits));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    if bits == 64 {
        return Ok(QuantizedVector { vertex, bits, offset: 0.0, scale: 1.0, codes: x.iter().map(|v| v.to_bits()).collect() });
    }
    let min = x.iter().copied().fold(f64::INFINITY, f64::min);
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if x.is_empty() || max == min {
        let offset = if x.is_empty() { 0.0 } else { min };
        return Ok(QuantizedVector { vertex, bits, offset, scale: 0.0, codes: vec![0; x.len()] });
    }
    let top = (1u64 << bits) - 1;
    let scale = (max - min) / top as f64;
    let codes = x
        .iter()
        .map(|&v| (libm::round((v - min) / scale).max(0.0) as u64).min(top))
        .collect();
    Ok(QuantizedVector { vertex, bits, offset: min, scale, codes })
}

/// Quantize-then-dequantize every vertex's features by degree.
pub fn dequantized_features(g: &Graph, plan: &QuantPlan) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(g.feature_matrix().len());
    for v in 0..g.vertex_count() as VertexId {
        let q = quantize_vector(v, g.features(v), plan.assign_bitwidth(g.degree(v)))?;
        out.extend(q.dequantize());
    }
    Ok(out)
}

/// Bit-plane transpose: plane `p` holds bit `p` of every code, LSB plane
/// first, bits within a byte LSB-first. Output is padded to whole bytes.
pub fn bit_shuffle(codes: &[u64], bits: u32, out: &mut Vec<u8>) {
    let total = codes.len() * bits as usize;
    let start = out.len();
    out.resize(start + total.div_ceil(8), 0);
    let buf = &mut out[start..];
    let mut pos = 0;
    for p in 0..bits {
        for &c in codes {
            buf[pos >> 3] |= (((c >> p) & 1) as u8) << (pos & 7);
            pos += 1;
        }
    }
}

/// Inverse of [`bit_shuffle`] for `count` codes.
pub fn bit_unshuffle(bytes: &[u8], count: usize, bits: u32) -> Result<Vec<u64>> {
    let total = count * bits as usize;
    if bytes.len() < total.div_ceil(8) {
        return Err(Error::MalformedStream("truncated code block"));
    }
    let mut codes = vec![0u64; count];
    let mut pos = 0;
    for p in 0..bits {
        for c in codes.iter_mut() {
            *c |= u64::from((bytes[pos >> 3] >> (pos & 7)) & 1) << p;
            pos += 1;
        }
    }
    Ok(codes)
}

/// Lossless byte-stream codec.
pub trait ByteCodec {
    fn name(&self) -> &'static str;
    fn encode(&self, data: &[u8]) -> Result<Vec<u8>>;
    fn decode(&self, data: &[u8]) -> Result<Vec<u8>>;
}

/// DEFLATE at a fixed compression level (0–10, default 1).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DeflateCodec {
    pub level: u8,
}

impl Default for DeflateCodec {
    fn default() -> Self {
        Self { level: 1 }
    }
}

impl ByteCodec for DeflateCodec {
    fn name(&self) -> &'static str {
        "deflate"
    }

    fn encode(&self, data: &[u8]) -> Result<Vec<u8>> {
        Ok(miniz_oxide::deflate::compress_to_vec(data, self.level.min(10)))
    }

    fn decode(&self, data: &[u8]) -> Result<Vec<u8>> {
        miniz_oxide::inflate::decompress_to_vec(data).map_err(|e| Error::Codec(format!("inflate failed: {e:?}")))
    }
}

/// Passes bytes through unchanged.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct IdentityCodec;

impl ByteCodec for IdentityCodec {
    fn name(&self) -> &'static str {
        "identity"
    }

    fn encode(&self, data: &[u8]) -> Result<Vec<u8>> {
        Ok(data.to_vec())
    }

    fn decode(&self, data: &[u8]) -> Result<Vec<u8>> {
        Ok(data.to_vec())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PackedFeatures {
    pub records: Vec<QuantizedVector>,
    /// Quantized feature bits only.
    pub payload_bits: u64,
    /// Stream and record headers.
    pub header_bits: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PackedGraph {
    pub features: PackedFeatures,
    /// Serialized records after the lossless codec.
    pub stream: Vec<u8>,
    /// Serialized size before the codec.
    pub raw_len: usize,
}

/// Quantizes and packs every vertex.
pub fn pack_graph(g: &Graph, plan: &QuantPlan, codec: &dyn ByteCodec) -> Result<PackedGraph> {
    let all: Vec<VertexId> = (0..g.vertex_count() as VertexId).collect();
    pack_vertices(g, plan, &all, codec)
}

/// Quantizes `vertices` (in the given order) and packs them into one stream.
pub fn pack_vertices(g: &Graph, plan: &QuantPlan, vertices: &[VertexId], codec: &dyn ByteCodec) -> Result<PackedGraph> {
    let mut records = Vec::with_capacity(vertices.len());
    for &v in vertices {
        if v as usize >= g.vertex_count() {
            return Err(Error::VertexOutOfRange { vertex: v as u64, vertex_count: g.vertex_count() });
        }
        records.push(quantize_vector(v, g.features(v), plan.assign_bitwidth(g.degree(v)))?);
    }
    let raw = serialize_records(&records)?;
    let stream = codec.encode(&raw)?;
    let payload_bits = records.iter().map(QuantizedVector::payload_bits).sum();
    let header_bits = STREAM_HEADER_BITS + RECORD_HEADER_BITS * records.len() as u64;
    Ok(PackedGraph { features: PackedFeatures { records, payload_bits, header_bits }, stream, raw_len: raw.len() })
}

/// Little-endian record serialization, before the codec.
pub fn serialize_records(records: &[QuantizedVector]) -> Result<Vec<u8>> {
    let count = u32::try_from(records.len()).map_err(|_| Error::InvalidParameter("too many records".into()))?;
    let mut out = Vec::new();
    out.extend_from_slice(STREAM_MAGIC);
    out.extend_from_slice(&count.to_le_bytes());
    for r in records {
        out.extend_from_slice(&r.vertex.to_le_bytes());
        out.push(r.bits as u8);
        out.extend_from_slice(&r.offset.to_le_bytes());
        out.extend_from_slice(&r.scale.to_le_bytes());
        bit_shuffle(&r.codes, r.bits, &mut out);
    }
    Ok(out)
}

/// Inverse of [`serialize_records`]; every record has `feature_dim` elements.
pub fn deserialize_records(raw: &[u8], feature_dim: usize) -> Result<Vec<QuantizedVector>> {
    let mut cursor = Cursor { data: raw, pos: 0 };
    if cursor.take(4)? != STREAM_MAGIC {
        return Err(Error::MalformedStream("bad magic"));
    }
    let count = cursor.u32()? as usize;
    let mut records = Vec::with_capacity(count.min(raw.len()));
    for _ in 0..count {
        let vertex = cursor.u32()?;
        let bits = u32::from(cursor.take(1)?[0]);
        if !SUPPORTED_BITS.contains(&bits) {
            return Err(Error::UnsupportedBitwidth(bits));
        }
        let offset = f64::from_le_bytes(cursor.take(8)?.try_into().unwrap());
        let scale = f64::from_le_bytes(cursor.take(8)?.try_into().unwrap());
        let block = cursor.take((feature_dim * bits as usize).div_ceil(8))?;
        let codes = bit_unshuffle(block, feature_dim, bits)?;
        records.push(QuantizedVector { vertex, bits, offset, scale, codes });
    }
    if cursor.pos != raw.len() {
        return Err(Error::MalformedStream("trailing bytes"));
    }
    Ok(records)
}

/// Decodes a packed stream back to its quantized records.
pub fn unpack(stream: &[u8], feature_dim: usize, codec: &dyn ByteCodec) -> Result<Vec<QuantizedVector>> {
    deserialize_records(&codec.decode(stream)?, feature_dim)
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.data.len());
        let end = end.ok_or(Error::MalformedStream("unexpected end of stream"))?;
        let out = &self.data[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plan(t: [usize; 3]) -> QuantPlan {
        QuantPlan::new(t, DEFAULT_BITS).unwrap()
    }

    #[test]
    fn thresholds_split_degree_range() {
        let cdf = DegreeCdf::from_degrees([100, 0, 3]);
        assert_eq!(make_quant_plan(&cdf).unwrap().thresholds(), [25, 50, 75]);
        let cdf = DegreeCdf::from_degrees([4, 1]);
        assert_eq!(make_quant_plan(&cdf).unwrap().thresholds(), [1, 2, 3]);
        assert!(make_quant_plan(&DegreeCdf::from_degrees([0, 0])).is_err());
    }

    #[test]
    fn boundary_degree_goes_up() {
        let p = plan([25, 50, 75]);
        assert_eq!(p.assign_bitwidth(0), 64);
        assert_eq!(p.assign_bitwidth(24), 64);
        assert_eq!(p.assign_bitwidth(25), 32);
        assert_eq!(p.assign_bitwidth(50), 16);
        assert_eq!(p.assign_bitwidth(75), 8);
        assert_eq!(p.assign_bitwidth(1000), 8);
    }

    #[test]
    fn plan_validation() {
        assert!(QuantPlan::new([3, 2, 4], DEFAULT_BITS).is_err());
        assert_eq!(QuantPlan::new([1, 2, 3], [64, 32, 12, 8]), Err(Error::UnsupportedBitwidth(12)));
        assert!(QuantPlan::new([1, 2, 3], [8, 16, 32, 64]).is_err());
        assert!(plan([1, 2, 3]).with_bits([64; 4]).is_ok());
    }

    #[test]
    fn ratio_thirty_over_sixty_four() {
        let cdf = DegreeCdf::from_degrees([3, 3, 2, 2, 1, 1, 0, 0]);
        let p = make_quant_plan(&cdf).unwrap();
        assert_eq!(p.thresholds(), [1, 2, 3]);
        let r = compression_ratio(&p, &cdf);
        assert_eq!(r.ratio, 30.0 / 64.0);
        assert!((compression_ratio_closed_form(&p, &cdf) - 30.0 / 64.0).abs() < 1e-15);
        // The inclusive form puts vertices on a threshold in the wider interval below it.
        assert!(r.has_threshold_atoms());
        assert_eq!(r.inclusive, 44.0 / 64.0);
    }

    #[test]
    fn full_width_ratio_is_one() {
        let cdf = DegreeCdf::from_degrees([5, 1, 9, 0]);
        let p = make_quant_plan(&cdf).unwrap().with_bits([64; 4]).unwrap();
        let r = compression_ratio(&p, &cdf);
        assert_eq!(r.ratio, 1.0);
        assert_eq!(r.inclusive, 1.0);
    }

    #[test]
    fn quantization_examples() {
        let q = quantize_vector(0, &[0.0, 1.0], 8).unwrap();
        assert_eq!(q.codes, vec![0, 255]);
        assert_eq!(q.dequantize(), vec![0.0, 1.0]);
        for bits in SUPPORTED_BITS {
            let q = quantize_vector(1, &[0.3; 5], bits).unwrap();
            assert_eq!(q.dequantize(), vec![0.3; 5]);
        }
        let x = [1.5, -2.25, f64::MIN_POSITIVE];
        assert_eq!(quantize_vector(2, &x, 64).unwrap().dequantize(), x.to_vec());
        assert_eq!(quantize_vector(3, &[f64::NAN], 8), Err(Error::NonFinite));
        assert_eq!(quantize_vector(3, &[1.0], 12), Err(Error::UnsupportedBitwidth(12)));
    }

    #[test]
    fn shuffle_round_trip() {
        let codes = [0u64, 1, 0xABCD, 0xFFFF, 7];
        let mut buf = Vec::new();
        bit_shuffle(&codes, 16, &mut buf);
        assert_eq!(buf.len(), 10);
        assert_eq!(bit_unshuffle(&buf, 5, 16).unwrap(), codes.to_vec());
        // Plane 0 of [1, 0, 1] is 0b101.
        let mut buf = Vec::new();
        bit_shuffle(&[1, 0, 1], 8, &mut buf);
        assert_eq!(buf[0] & 0b111, 0b101);
    }

    fn star(leaves: u32, dim: usize) -> Graph {
        let n = leaves as usize + 1;
        let features = (0..n * dim).map(|i| (i as f64 * 0.37).sin()).collect();
        Graph::new(n, (1..=leaves).map(|v| (0, v)), dim, features).unwrap()
    }

    #[test]
    fn pack_round_trip() {
        let g = star(9, 6);
        let p = make_quant_plan(&g.degree_cdf()).unwrap();
        for codec in [&DeflateCodec::default() as &dyn ByteCodec, &IdentityCodec] {
            let packed = pack_graph(&g, &p, codec).unwrap();
            let back = unpack(&packed.stream, 6, codec).unwrap();
            assert_eq!(back, packed.features.records);
            let flat: Vec<f64> = back.iter().flat_map(QuantizedVector::dequantize).collect();
            assert_eq!(flat, dequantized_features(&g, &p).unwrap());
            assert_eq!(packed.stream, pack_graph(&g, &p, codec).unwrap().stream);
        }
    }

    #[test]
    fn zero_features_compress_well() {
        let n = 400;
        let g = Graph::new(n, (1..n as u32).map(|v| (0, v)), 64, vec![0.0; n * 64]).unwrap();
        let p = make_quant_plan(&g.degree_cdf()).unwrap();
        let packed = pack_graph(&g, &p, &DeflateCodec::default()).unwrap();
        let payload_bytes = packed.features.payload_bits / 8;
        assert!((packed.stream.len() as u64) * 20 < payload_bytes, "{} vs {payload_bytes}", packed.stream.len());
    }

    #[test]
    fn malformed_streams_rejected() {
        assert!(deserialize_records(b"XXXX\0\0\0\0", 1).is_err());
        assert!(deserialize_records(b"FGPK\x01\0\0\0", 1).is_err());
        assert!(deserialize_records(b"FGPK\0\0\0\0!", 1).is_err());
        assert!(DeflateCodec::default().decode(&[0xFF, 0x00, 0x12]).is_err());
    }
}
