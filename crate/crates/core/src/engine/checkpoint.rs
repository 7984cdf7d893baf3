//! Versioned binary checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! b"VNCK" | u32 version | u32 len, config-hash bytes | u64 probe step
//! | u64 probe input-statistics batch count
//! | u32 n, n × f64 scalars | u32 count, count × tensor
//! tensor = u32 len, name bytes | u32 ndim, ndim × u64 dims | f64 data (row-major)
//! ```

use std::collections::HashMap;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayViewD};

use super::model::Model;
use super::probe::LinearProbe;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"VNCK";
pub const VERSION: u32 = 1;

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_tensor(out: &mut Vec<u8>, name: &str, t: ArrayViewD<'_, f64>) {
    put_u32(out, name.len() as u32);
    out.extend_from_slice(name.as_bytes());
    put_u32(out, t.ndim() as u32);
    for &d in t.shape() {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for v in t.iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

fn probe_tensors(p: &LinearProbe) -> Vec<(&'static str, ArrayViewD<'_, f64>)> {
    vec![
        ("probe.w", p.w.view().into_dyn()),
        ("probe.b", p.b.view().into_dyn()),
        ("probe.m_w", p.m_w.view().into_dyn()),
        ("probe.v_w", p.v_w.view().into_dyn()),
        ("probe.m_b", p.m_b.view().into_dyn()),
        ("probe.v_b", p.v_b.view().into_dyn()),
        ("probe.input_mean", p.input_mean.view().into_dyn()),
        ("probe.input_var", p.input_var.view().into_dyn()),
    ]
}

/// Serialises the model (and optionally the probe) with the run's config hash.
pub fn encode_checkpoint(model: &Model, probe: Option<&LinearProbe>, config_hash: &str) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    put_u32(&mut out, VERSION);
    put_u32(&mut out, config_hash.len() as u32);
    out.extend_from_slice(config_hash.as_bytes());
    out.extend_from_slice(&probe.map_or(0, |p| p.step).to_le_bytes());
    out.extend_from_slice(&probe.map_or(0, |p| p.input_batches).to_le_bytes());
    let scalars = model.scalars();
    put_u32(&mut out, scalars.len() as u32);
    for s in &scalars {
        out.extend_from_slice(&s.to_le_bytes());
    }
    let tensors = model.tensors();
    let probe_t = probe.map(probe_tensors).unwrap_or_default();
    put_u32(&mut out, (tensors.len() + probe_t.len()) as u32);
    for (name, _, t) in &tensors {
        put_tensor(&mut out, name, t.view());
    }
    for (name, t) in &probe_t {
        put_tensor(&mut out, name, t.view());
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            Error::InvalidInput(format!("checkpoint truncated at byte {}", self.pos))
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

/// Decoded checkpoint contents.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config_hash: String,
    pub probe_step: u64,
    pub probe_input_batches: u64,
    pub scalars: Vec<f64>,
    pub tensors: HashMap<String, (Vec<usize>, Vec<f64>)>,
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::InvalidInput("not a checkpoint (bad magic)".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::InvalidInput(format!("unsupported checkpoint version {version}")));
    }
    let n = r.u32()? as usize;
    let config_hash = String::from_utf8(r.take(n)?.to_vec())
        .map_err(|_| Error::InvalidInput("config hash is not UTF-8".into()))?;
    let probe_step = r.u64()?;
    let probe_input_batches = r.u64()?;
    let n = r.u32()? as usize;
    let scalars = (0..n).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
    let count = r.u32()? as usize;
    let mut tensors = HashMap::with_capacity(count);
    for _ in 0..count {
        let n = r.u32()? as usize;
        let name = String::from_utf8(r.take(n)?.to_vec())
            .map_err(|_| Error::InvalidInput("tensor name is not UTF-8".into()))?;
        let ndim = r.u32()? as usize;
        let dims = (0..ndim).map(|_| r.u64().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let len: usize = dims.iter().product();
        let data = (0..len).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        tensors.insert(name, (dims, data));
    }
    if r.pos != bytes.len() {
        return Err(Error::InvalidInput("trailing bytes after checkpoint".into()));
    }
    Ok(Checkpoint { config_hash, probe_step, probe_input_batches, scalars, tensors })
}

/// Restores `model` (built from the same config) and optionally `probe`.
pub fn restore(ck: &Checkpoint, model: &mut Model, probe: Option<&mut LinearProbe>) -> Result<()> {
    for (name, _, mut t) in model.tensors_mut() {
        let (dims, data) = ck
            .tensors
            .get(&name)
            .ok_or_else(|| Error::InvalidInput(format!("checkpoint lacks tensor {name}")))?;
        if dims.as_slice() != t.shape() {
            return Err(Error::InvalidInput(format!(
                "tensor {name}: checkpoint shape {dims:?}, model shape {:?}",
                t.shape()
            )));
        }
        for (dst, src) in t.iter_mut().zip(data) {
            *dst = *src;
        }
    }
    model.set_scalars(&ck.scalars)?;
    if let Some(p) = probe {
        let get2 = |n: &str| -> Result<Array2<f64>> {
            let (d, v) = ck.tensors.get(n).ok_or_else(|| Error::InvalidInput(format!("checkpoint lacks {n}")))?;
            Array2::from_shape_vec((d[0], d[1]), v.clone()).map_err(|e| Error::InvalidInput(e.to_string()))
        };
        let get1 = |n: &str| -> Result<Array1<f64>> {
            let (_, v) = ck.tensors.get(n).ok_or_else(|| Error::InvalidInput(format!("checkpoint lacks {n}")))?;
            Ok(Array1::from(v.clone()))
        };
        *p = LinearProbe {
            w: get2("probe.w")?,
            b: get1("probe.b")?,
            m_w: get2("probe.m_w")?,
            v_w: get2("probe.v_w")?,
            m_b: get1("probe.m_b")?,
            v_b: get1("probe.v_b")?,
            step: ck.probe_step,
            input_mean: get1("probe.input_mean")?,
            input_var: get1("probe.input_var")?,
            input_batches: ck.probe_input_batches,
        };
    }
    Ok(())
}

pub fn write_checkpoint(path: &Path, model: &Model, probe: Option<&LinearProbe>, config_hash: &str) -> Result<()> {
    std::fs::write(path, encode_checkpoint(model, probe, config_hash))?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    decode_checkpoint(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::features::StreamSelect;
    use crate::engine::model::{tests::random_features, ModelConfig};
    use crate::util::group_rng;

    #[test]
    fn round_trip_restores_bit_identical_state() {
        let mut m = Model::new(ModelConfig::default(), 3).unwrap();
        let f = random_features(4, StreamSelect::All, 1);
        m.train_step(&f.all()).unwrap();
        let probe = LinearProbe::new(10, 512, &mut group_rng(1, 6));
        let bytes = encode_checkpoint(&m, Some(&probe), "abc123");
        let ck = decode_checkpoint(&bytes).unwrap();
        assert_eq!(ck.config_hash, "abc123");
        let mut fresh = Model::new(ModelConfig::default(), 99).unwrap();
        let mut p2 = LinearProbe::new(10, 512, &mut group_rng(2, 6));
        restore(&ck, &mut fresh, Some(&mut p2)).unwrap();
        assert_eq!(fresh.checksum(), m.checksum());
        assert_eq!(p2, probe);
        assert_eq!(encode_checkpoint(&fresh, Some(&p2), "abc123"), bytes);
    }

    #[test]
    fn rejects_corruption() {
        let m = Model::new(ModelConfig::hebbian_only(), 0).unwrap();
        let bytes = encode_checkpoint(&m, None, "h");
        assert!(decode_checkpoint(&bytes[..bytes.len() - 3]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode_checkpoint(&bad).is_err());
        let mut other = Model::new(ModelConfig::default(), 0).unwrap();
        assert!(restore(&decode_checkpoint(&bytes).unwrap(), &mut other, None).is_err());
    }
}
