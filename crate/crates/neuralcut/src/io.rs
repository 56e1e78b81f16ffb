//! Model container: `NCUT`, format version, config JSON, then named tensors
//! and running statistics as little-endian `f64`. Every length is a `u32`.

use std::path::Path;

use ndarray::Array1;
use thiserror::Error;

use crate::params::{ModelConfig, PolicyParams, RunningStats, Tensor};
use crate::tape::Mat;

pub const MAGIC: &[u8; 4] = b"NCUT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ModelIoError {
    #[error("model format version {found}, expected {expected}")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("corrupt model: {0}")]
    CorruptModel(String),
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&u32::try_from(v).expect("length fits u32").to_le_bytes());
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    put_u32(out, s.len());
    out.extend_from_slice(s.as_bytes());
}

fn put_f64s<'a>(out: &mut Vec<u8>, values: impl Iterator<Item = &'a f64>) {
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn save(params: &PolicyParams) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    put_str(
        &mut out,
        &serde_json::to_string(&params.config).expect("config serializes"),
    );
    put_u32(&mut out, params.tensors.len());
    for t in &params.tensors {
        put_str(&mut out, &t.name);
        put_u32(&mut out, t.value.nrows());
        put_u32(&mut out, t.value.ncols());
        put_f64s(&mut out, t.value.iter());
    }
    put_u32(&mut out, params.running.len());
    for r in &params.running {
        put_str(&mut out, &r.name);
        put_u32(&mut out, r.mean.len());
        put_f64s(&mut out, r.mean.iter());
        put_f64s(&mut out, r.var.iter());
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8], ModelIoError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| {
            ModelIoError::CorruptModel(format!("truncated at byte {}", self.bytes.len()))
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize, ModelIoError> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes(b.try_into().unwrap()) as usize)
    }

    fn string(&mut self) -> Result<String, ModelIoError> {
        let n = self.u32()?;
        String::from_utf8(self.take(n)?.to_vec())
            .map_err(|_| ModelIoError::CorruptModel("name is not UTF-8".into()))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>, ModelIoError> {
        let bytes = self.take(
            n.checked_mul(8)
                .ok_or_else(|| ModelIoError::CorruptModel("tensor size overflows".into()))?,
        )?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

pub fn load(bytes: &[u8]) -> Result<PolicyParams, ModelIoError> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)
        .map_err(|_| ModelIoError::CorruptModel("missing header".into()))?
        != MAGIC
    {
        return Err(ModelIoError::CorruptModel("bad magic".into()));
    }
    let version = r.u32()? as u32;
    if version != FORMAT_VERSION {
        return Err(ModelIoError::VersionMismatch {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let config: ModelConfig = serde_json::from_str(&r.string()?)
        .map_err(|e| ModelIoError::CorruptModel(format!("config: {e}")))?;
    let n = r.u32()?;
    let mut tensors = Vec::with_capacity(n.min(1024));
    for _ in 0..n {
        let name = r.string()?;
        let (rows, cols) = (r.u32()?, r.u32()?);
        let data = r.f64s(rows.saturating_mul(cols))?;
        let value = Mat::from_shape_vec((rows, cols), data)
            .map_err(|e| ModelIoError::CorruptModel(format!("{name}: {e}")))?;
        tensors.push(Tensor { name, value });
    }
    let n = r.u32()?;
    let mut running = Vec::with_capacity(n.min(1024));
    for _ in 0..n {
        let name = r.string()?;
        let len = r.u32()?;
        let mean = Array1::from(r.f64s(len)?);
        let var = Array1::from(r.f64s(len)?);
        running.push(RunningStats { name, mean, var });
    }
    if r.pos != bytes.len() {
        return Err(ModelIoError::CorruptModel(format!(
            "{} trailing bytes",
            bytes.len() - r.pos
        )));
    }
    let params = PolicyParams {
        config,
        tensors,
        running,
    };
    params.check().map_err(ModelIoError::CorruptModel)?;
    Ok(params)
}

/// Loads a model and checks that it was trained on the requested graph
/// layout.
pub fn load_for(bytes: &[u8], bipartite: bool) -> Result<PolicyParams, ModelIoError> {
    let params = load(bytes)?;
    if params.config.bipartite != bipartite {
        return Err(ModelIoError::SchemaMismatch(format!(
            "model is {}, inference wants {}",
            layout_name(params.config.bipartite),
            layout_name(bipartite)
        )));
    }
    Ok(params)
}

fn layout_name(bipartite: bool) -> &'static str {
    if bipartite {
        "bipartite"
    } else {
        "tripartite"
    }
}

pub fn save_file(params: &PolicyParams, path: &Path) -> Result<(), ModelIoError> {
    std::fs::write(path, save(params))?;
    Ok(())
}

pub fn load_file(path: &Path) -> Result<PolicyParams, ModelIoError> {
    load(&std::fs::read(path)?)
}
