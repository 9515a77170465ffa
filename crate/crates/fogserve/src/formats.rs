//! On-disk formats: graph directories, model weights, placements, load traces
//! and packed feature streams.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use anyhow::{anyhow, bail, ensure, Context, Result};
use fogserve_core::gnn::{Activation, Attention, GnnModel, Layer, Matrix, ModelKind};
use fogserve_core::planner::Placement;
use fogserve_core::scheduler::LoadTrace;
use fogserve_core::Graph;

pub const FEATURES_MAGIC: &[u8; 4] = b"FGRF";
pub const WEIGHTS_MAGIC: &[u8; 4] = b"FGWT";
const WEIGHTS_VERSION: u8 = 1;

pub const EDGES_FILE: &str = "edges.txt";
pub const FEATURES_FILE: &str = "features.bin";
pub const LABELS_FILE: &str = "labels.txt";

/// Writes `edges.txt`, `features.bin` and, when present, `labels.txt`.
pub fn write_graph(dir: &Path, g: &Graph) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;

    let mut edges = BufWriter::new(fs::File::create(dir.join(EDGES_FILE))?);
    for &(u, v) in g.edges() {
        writeln!(edges, "{u} {v}")?;
    }
    edges.flush()?;

    let mut bytes = Vec::with_capacity(12 + g.feature_matrix().len() * 8);
    bytes.extend_from_slice(FEATURES_MAGIC);
    bytes.extend_from_slice(&u32::try_from(g.vertex_count())?.to_le_bytes());
    bytes.extend_from_slice(&u32::try_from(g.feature_dim())?.to_le_bytes());
    for x in g.feature_matrix() {
        bytes.extend_from_slice(&x.to_le_bytes());
    }
    fs::write(dir.join(FEATURES_FILE), bytes)?;

    let labels_path = dir.join(LABELS_FILE);
    match g.labels() {
        Some(labels) => {
            let mut out = BufWriter::new(fs::File::create(labels_path)?);
            for l in labels {
                writeln!(out, "{l}")?;
            }
            out.flush()?;
        }
        None if labels_path.exists() => fs::remove_file(labels_path)?,
        None => {}
    }
    Ok(())
}

pub fn read_graph(dir: &Path) -> Result<Graph> {
    ensure!(dir.is_dir(), "graph directory {} not found", dir.display());
    let bytes = fs::read(dir.join(FEATURES_FILE)).with_context(|| format!("reading {}", dir.join(FEATURES_FILE).display()))?;
    ensure!(bytes.len() >= 12 && &bytes[..4] == FEATURES_MAGIC, "{FEATURES_FILE}: missing FGRF header");
    let n = u32::from_le_bytes(bytes[4..8].try_into()?) as usize;
    let dim = u32::from_le_bytes(bytes[8..12].try_into()?) as usize;
    let body = &bytes[12..];
    ensure!(
        body.len() == n * dim * 8,
        "{FEATURES_FILE}: expected {} bytes of features, found {}",
        n * dim * 8,
        body.len()
    );
    let features = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();

    let file = fs::File::open(dir.join(EDGES_FILE)).with_context(|| format!("reading {}", dir.join(EDGES_FILE).display()))?;
    let mut edges = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut it = line.split_whitespace();
        let mut next = || -> Result<u32> {
            it.next()
                .ok_or_else(|| anyhow!("{EDGES_FILE}:{}: expected two vertex ids", i + 1))?
                .parse()
                .with_context(|| format!("{EDGES_FILE}:{}", i + 1))
        };
        edges.push((next()?, next()?));
    }
    let mut g = Graph::new(n, edges, dim, features)?;

    let labels_path = dir.join(LABELS_FILE);
    if labels_path.exists() {
        let labels = fs::read_to_string(&labels_path)?
            .lines()
            .filter(|l| !l.trim().is_empty())
            .enumerate()
            .map(|(i, l)| l.trim().parse::<u32>().with_context(|| format!("{LABELS_FILE}:{}", i + 1)))
            .collect::<Result<Vec<_>>>()?;
        g = g.with_labels(labels)?;
    }
    Ok(g)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, &b| (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3))
}

fn kind_tag(kind: ModelKind) -> u8 {
    match kind {
        ModelKind::Gcn => 0,
        ModelKind::Gat => 1,
        ModelKind::GraphSage => 2,
    }
}

/// Serializes a model: magic, version, kind, layer count, then per layer its
/// shape, activation, row-major weights and attention parameters. A trailing
/// FNV-1a checksum covers everything before it.
pub fn encode_weights(model: &GnnModel) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(WEIGHTS_MAGIC);
    out.push(WEIGHTS_VERSION);
    out.push(kind_tag(model.kind()));
    out.extend_from_slice(&(model.num_layers() as u32).to_le_bytes());
    let f64s = |out: &mut Vec<u8>, xs: &[f64]| xs.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes()));
    for layer in model.layers() {
        out.extend_from_slice(&(layer.weight.rows() as u32).to_le_bytes());
        out.extend_from_slice(&(layer.weight.cols() as u32).to_le_bytes());
        out.push(match layer.activation {
            Activation::Relu => 0,
            Activation::Identity => 1,
        });
        f64s(&mut out, layer.weight.data());
        match &layer.attention {
            None => out.push(0),
            Some(Attention::Learned { target, source, negative_slope }) => {
                out.push(1);
                f64s(&mut out, &[*negative_slope]);
                f64s(&mut out, target);
                f64s(&mut out, source);
            }
            Some(Attention::Fixed(alpha)) => {
                out.push(2);
                out.extend_from_slice(&(alpha.len() as u32).to_le_bytes());
                for (&(v, u), &a) in alpha {
                    out.extend_from_slice(&v.to_le_bytes());
                    out.extend_from_slice(&u.to_le_bytes());
                    out.extend_from_slice(&a.to_le_bytes());
                }
            }
        }
    }
    let sum = fnv1a(&out);
    out.extend_from_slice(&sum.to_le_bytes());
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| anyhow!("weights file truncated"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into()?))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n.checked_mul(8).ok_or_else(|| anyhow!("weights file truncated"))?)?;
        Ok(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    }
}

pub fn decode_weights(bytes: &[u8]) -> Result<GnnModel> {
    ensure!(bytes.len() >= 18 && &bytes[..4] == WEIGHTS_MAGIC, "not a weights file (missing FGWT header)");
    let (body, trailer) = bytes.split_at(bytes.len() - 8);
    ensure!(fnv1a(body) == u64::from_le_bytes(trailer.try_into()?), "weights checksum mismatch");
    let mut r = Reader { bytes: body, pos: 4 };
    let version = r.u8()?;
    ensure!(version == WEIGHTS_VERSION, "unsupported weights version {version}");
    let kind = match r.u8()? {
        0 => ModelKind::Gcn,
        1 => ModelKind::Gat,
        2 => ModelKind::GraphSage,
        t => bail!("unknown model kind {t}"),
    };
    let count = r.u32()? as usize;
    let mut layers = Vec::with_capacity(count.min(64));
    for _ in 0..count {
        let rows = r.u32()? as usize;
        let cols = r.u32()? as usize;
        let activation = match r.u8()? {
            0 => Activation::Relu,
            1 => Activation::Identity,
            t => bail!("unknown activation {t}"),
        };
        let weight = Matrix::new(rows, cols, r.f64s(rows * cols)?)?;
        let attention = match r.u8()? {
            0 => None,
            1 => {
                let negative_slope = r.f64s(1)?[0];
                let target = r.f64s(rows)?;
                let source = r.f64s(rows)?;
                Some(Attention::Learned { target, source, negative_slope })
            }
            2 => {
                let n = r.u32()? as usize;
                let mut alpha = BTreeMap::new();
                for _ in 0..n {
                    let v = r.u32()?;
                    let u = r.u32()?;
                    alpha.insert((v, u), r.f64s(1)?[0]);
                }
                Some(Attention::Fixed(alpha))
            }
            t => bail!("unknown attention tag {t}"),
        };
        layers.push(Layer { weight, activation, attention });
    }
    ensure!(r.pos == body.len(), "trailing bytes in weights file");
    Ok(GnnModel::new(kind, layers)?)
}

pub fn write_weights(path: &Path, model: &GnnModel) -> Result<()> {
    fs::write(path, encode_weights(model)).with_context(|| format!("writing {}", path.display()))
}

pub fn read_weights(path: &Path) -> Result<GnnModel> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    decode_weights(&bytes).with_context(|| format!("loading {}", path.display()))
}

/// One `vertex_id fog_id` line per vertex, ascending by vertex.
pub fn write_placement(path: &Path, placement: &Placement, fog_ids: &[u32]) -> Result<()> {
    ensure!(fog_ids.len() == placement.fog_count(), "one fog id per placement slot required");
    let mut out = BufWriter::new(fs::File::create(path).with_context(|| format!("writing {}", path.display()))?);
    for (v, &j) in placement.assignment().iter().enumerate() {
        writeln!(out, "{v} {}", fog_ids[j as usize])?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a placement written by [`write_placement`]; every vertex must appear once.
pub fn read_placement(path: &Path, vertex_count: usize, fog_ids: &[u32]) -> Result<Placement> {
    let slot: BTreeMap<u32, u32> = fog_ids.iter().enumerate().map(|(i, &id)| (id, i as u32)).collect();
    let mut assignment = vec![u32::MAX; vertex_count];
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let mut it = line.split_whitespace().map(str::parse::<u64>);
        let (Some(Ok(v)), Some(Ok(f)), None) = (it.next(), it.next(), it.next()) else {
            bail!("{}:{}: expected \"vertex_id fog_id\"", path.display(), i + 1);
        };
        let v = usize::try_from(v)?;
        ensure!(v < vertex_count, "{}:{}: vertex {v} out of range", path.display(), i + 1);
        ensure!(assignment[v] == u32::MAX, "{}:{}: vertex {v} listed twice", path.display(), i + 1);
        assignment[v] = *u32::try_from(f).ok().and_then(|f| slot.get(&f)).ok_or_else(|| anyhow!("{}:{}: unknown fog {f}", path.display(), i + 1))?;
    }
    if let Some(v) = assignment.iter().position(|&a| a == u32::MAX) {
        bail!("{}: vertex {v} is not placed", path.display());
    }
    Ok(Placement::new(assignment, fog_ids.len())?)
}

/// `round,fog_id,load_multiplier` rows. Rounds must be contiguous from 0 and
/// every fog listed in each round.
pub fn read_trace(path: &Path, fog_ids: &[u32]) -> Result<LoadTrace> {
    #[derive(serde::Deserialize)]
    struct Row {
        round: usize,
        fog_id: u32,
        load_multiplier: f64,
    }
    let slot: BTreeMap<u32, usize> = fog_ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let mut rounds: BTreeMap<usize, Vec<Option<f64>>> = BTreeMap::new();
    for row in reader.deserialize() {
        let row: Row = row?;
        let j = *slot.get(&row.fog_id).ok_or_else(|| anyhow!("trace names unknown fog {}", row.fog_id))?;
        rounds.entry(row.round).or_insert_with(|| vec![None; fog_ids.len()])[j] = Some(row.load_multiplier);
    }
    let mut out = Vec::with_capacity(rounds.len());
    for (expected, (round, loads)) in rounds.into_iter().enumerate() {
        ensure!(round == expected, "trace round {expected} missing");
        let loads: Option<Vec<f64>> = loads.into_iter().collect();
        out.push(loads.ok_or_else(|| anyhow!("trace round {round} does not list every fog"))?);
    }
    Ok(LoadTrace::new(fog_ids.len(), out)?)
}

pub fn write_trace(path: &Path, trace: &LoadTrace, fog_ids: &[u32]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    w.write_record(["round", "fog_id", "load_multiplier"])?;
    for r in 0..trace.len() {
        for (j, load) in trace.round(r).iter().enumerate() {
            w.write_record([r.to_string(), fog_ids[j].to_string(), load.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use fogserve_core::graph::{generate_rmat, RmatParams};

    #[test]
    fn weights_round_trip_every_kind() {
        for kind in [ModelKind::Gcn, ModelKind::Gat, ModelKind::GraphSage] {
            let m = GnnModel::random(kind, &[4, 3, 2], 9).unwrap();
            assert_eq!(decode_weights(&encode_weights(&m)).unwrap(), m);
        }
    }

    #[test]
    fn fixed_attention_round_trips() {
        let alpha = BTreeMap::from([((0, 0), 0.5), ((0, 1), 0.5), ((1, 1), 1.0)]);
        let layer = Layer { weight: Matrix::identity(2), activation: Activation::Identity, attention: Some(Attention::Fixed(alpha)) };
        let m = GnnModel::new(ModelKind::Gat, vec![layer]).unwrap();
        assert_eq!(decode_weights(&encode_weights(&m)).unwrap(), m);
    }

    #[test]
    fn corrupted_weights_rejected() {
        let mut bytes = encode_weights(&GnnModel::random(ModelKind::Gcn, &[4, 2], 1).unwrap());
        bytes[20] ^= 1;
        assert!(decode_weights(&bytes).unwrap_err().to_string().contains("checksum"));
        assert!(decode_weights(&bytes[..10]).is_err());
    }

    #[test]
    fn graph_dir_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let g = generate_rmat(&RmatParams::new(300, 0.02, 5, 3, 4)).unwrap();
        write_graph(dir.path(), &g).unwrap();
        assert_eq!(read_graph(dir.path()).unwrap(), g);
    }
}
