//! Single-file model container: one JSON manifest line, then a blob of
//! little-endian `f32` arrays and the reference mesh as binary PLY.
//!
//! ```text
//! {"type":"gpmm-prior","version":1,"rank":r,"vertex_count":n,"reference":{"offset":0,"length":…},"mean":{…},…}\n
//! <blob>
//! ```
//!
//! Offsets and lengths count bytes from the start of the blob. Bases are
//! stored mode-major (`r × 3n`).

use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde_json::{json, Map, Value};

use super::LowRankGp;
use crate::mesh::ply::{parse_ply, ply_bytes};
use crate::mesh::{PlyFormat, Surface};
use crate::{Error, Result};

pub const PRIOR_TYPE: &str = "gpmm-prior";
pub const MODEL_TYPE: &str = "morphable-model";
const VERSION: u64 = 1;

struct Blob(Vec<u8>);

impl Blob {
    fn push(&mut self, bytes: &[u8]) -> Value {
        let offset = self.0.len();
        self.0.extend_from_slice(bytes);
        json!({"offset": offset, "length": bytes.len()})
    }

    fn push_f32(&mut self, values: impl Iterator<Item = f64>) -> Value {
        let bytes: Vec<u8> = values.flat_map(|v| (v as f32).to_le_bytes()).collect();
        self.push(&bytes)
    }

    fn push_model(&mut self, gp: &LowRankGp) -> Map<String, Value> {
        let mut m = Map::new();
        m.insert("rank".into(), json!(gp.rank()));
        m.insert("mean".into(), self.push_f32(gp.mean().iter().copied()));
        m.insert("variances".into(), self.push_f32(gp.variances().iter().copied()));
        m.insert("basis".into(), self.push_f32(gp.basis().iter().copied()));
        m
    }
}

/// Serializes models sharing one reference. A `gpmm-prior` holds exactly one
/// model whose fields sit at the top level of the manifest.
pub fn encode(kind: &str, models: &[(&str, &LowRankGp)]) -> Result<Vec<u8>> {
    let first = models.first().ok_or_else(|| Error::InvalidInput("container needs at least one model".into()))?.1;
    let reference = first.reference_mesh();
    for (name, gp) in models {
        if !gp.reference_mesh().same_topology(reference) || gp.reference_mesh().vertices() != reference.vertices() {
            return Err(Error::InvalidInput(format!("model '{name}' uses a different reference mesh")));
        }
    }
    let mut blob = Blob(Vec::new());
    let mut manifest = Map::new();
    manifest.insert("type".into(), json!(kind));
    manifest.insert("version".into(), json!(VERSION));
    manifest.insert("vertex_count".into(), json!(reference.vertex_count()));
    manifest.insert("encoding".into(), json!("f32le"));
    let ply = ply_bytes(reference, PlyFormat::BinaryLittleEndian, &[]);
    manifest.insert("reference".into(), blob.push(&ply));
    if kind == PRIOR_TYPE {
        if models.len() != 1 {
            return Err(Error::InvalidInput("a prior container holds exactly one model".into()));
        }
        manifest.extend(blob.push_model(first));
    } else {
        for (name, gp) in models {
            manifest.insert((*name).into(), Value::Object(blob.push_model(gp)));
        }
    }
    let mut out = serde_json::to_vec(&Value::Object(manifest)).expect("manifest serializes");
    out.push(b'\n');
    out.extend_from_slice(&blob.0);
    Ok(out)
}

/// Parsed container: its type and named models (`"prior"` for a prior).
pub fn decode(bytes: &[u8], ctx: &str) -> Result<(String, Vec<(String, LowRankGp)>)> {
    let nl = bytes.iter().position(|&b| b == b'\n').ok_or_else(|| Error::parse(ctx, "missing manifest line"))?;
    let manifest: Map<String, Value> =
        serde_json::from_slice(&bytes[..nl]).map_err(|e| Error::parse(ctx, format!("manifest: {e}")))?;
    let blob = &bytes[nl + 1..];
    let kind = manifest.get("type").and_then(Value::as_str).ok_or_else(|| Error::parse(ctx, "manifest has no type"))?;
    let version = manifest.get("version").and_then(Value::as_u64).unwrap_or(0);
    if version != VERSION {
        return Err(Error::parse(ctx, format!("unsupported container version {version}")));
    }
    let n = usize_field(&manifest, "vertex_count", ctx)?;
    let reference = parse_ply(block(blob, manifest.get("reference"), ctx)?, ctx)?;
    if reference.vertex_count() != n {
        return Err(Error::parse(ctx, "reference vertex count disagrees with manifest"));
    }
    let surface = Arc::new(Surface::new(reference));
    let models = match kind {
        PRIOR_TYPE => vec![("prior".to_string(), read_model(&manifest, blob, &surface, n, ctx)?)],
        MODEL_TYPE => ["shape", "color", "expression"]
            .iter()
            .map(|name| {
                let m = manifest
                    .get(*name)
                    .and_then(Value::as_object)
                    .ok_or_else(|| Error::parse(ctx, format!("missing '{name}' model")))?;
                Ok((name.to_string(), read_model(m, blob, &surface, n, &format!("{ctx} [{name}]"))?))
            })
            .collect::<Result<Vec<_>>>()?,
        other => return Err(Error::parse(ctx, format!("unknown container type '{other}'"))),
    };
    Ok((kind.to_string(), models))
}

fn usize_field(m: &Map<String, Value>, key: &str, ctx: &str) -> Result<usize> {
    m.get(key).and_then(Value::as_u64).map(|v| v as usize).ok_or_else(|| Error::parse(ctx, format!("missing '{key}'")))
}

fn block<'a>(blob: &'a [u8], desc: Option<&Value>, ctx: &str) -> Result<&'a [u8]> {
    let desc = desc.and_then(Value::as_object).ok_or_else(|| Error::parse(ctx, "missing block descriptor"))?;
    let offset = usize_field(desc, "offset", ctx)?;
    let length = usize_field(desc, "length", ctx)?;
    offset
        .checked_add(length)
        .filter(|&end| end <= blob.len())
        .map(|end| &blob[offset..end])
        .ok_or_else(|| Error::parse(ctx, format!("block {offset}+{length} exceeds the {} byte blob", blob.len())))
}

fn f32_block(blob: &[u8], desc: Option<&Value>, count: usize, what: &str, ctx: &str) -> Result<Vec<f64>> {
    let bytes = block(blob, desc, ctx)?;
    if bytes.len() != 4 * count {
        return Err(Error::parse(ctx, format!("{what}: expected {count} floats, found {} bytes", bytes.len())));
    }
    Ok(bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64).collect())
}

fn read_model(m: &Map<String, Value>, blob: &[u8], surface: &Arc<Surface>, n: usize, ctx: &str) -> Result<LowRankGp> {
    let r = usize_field(m, "rank", ctx)?;
    let mean = f32_block(blob, m.get("mean"), 3 * n, "mean", ctx)?;
    let variances = f32_block(blob, m.get("variances"), r, "variances", ctx)?;
    let basis = f32_block(blob, m.get("basis"), 3 * n * r, "basis", ctx)?;
    LowRankGp::new(
        surface.clone(),
        DVector::from_vec(mean),
        DMatrix::from_vec(3 * n, r, basis),
        DVector::from_vec(variances),
    )
    .map_err(|e| Error::parse(ctx, e.to_string()))
}

pub fn save_prior(gp: &LowRankGp, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode(PRIOR_TYPE, &[("prior", gp)])?).map_err(|e| Error::io(path, e))
}

pub fn load_prior(path: impl AsRef<Path>) -> Result<LowRankGp> {
    let (kind, mut models) = load(path.as_ref())?;
    if kind != PRIOR_TYPE {
        return Err(Error::parse(path.as_ref().display().to_string(), format!("expected a {PRIOR_TYPE}, found {kind}")));
    }
    Ok(models.remove(0).1)
}

/// Any container kind.
pub fn load(path: &Path) -> Result<(String, Vec<(String, LowRankGp)>)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, &path.display().to_string())
}
