//! Named-tensor checkpoint archive plus its JSON sidecar.
//!
//! Archive layout, all integers little endian:
//!
//! ```text
//! "ADCRNNCK" u32 version u32 count
//! count x { u32 name_len, name, u32 rank, rank x u64 dim, f64 x numel }
//! ```

use std::path::{Path, PathBuf};

use adcrnn_core::autodiff::{ParamStore, Tensor};
use adcrnn_core::data::NormStats;
use adcrnn_core::model::{CrnnModel, ModelConfig};
use serde::{Deserialize, Serialize};

use crate::config::{serde_model, serde_norm, to_json};
use crate::error::{AppError, AppResult};

const MAGIC: &[u8; 8] = b"ADCRNNCK";
pub const VERSION: u32 = 1;

pub fn encode(params: &ParamStore) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + params.numel() * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for (name, t) in params.iter() {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
        for &d in t.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], String> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| format!("truncated at byte {}", self.pos))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, String> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn decode(bytes: &[u8]) -> Result<ParamStore, String> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err("not a checkpoint archive".into());
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(format!("unsupported archive version {version}"));
    }
    let count = r.u32()?;
    let mut store = ParamStore::new();
    for _ in 0..count {
        let len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(len)?).map_err(|_| "tensor name is not UTF-8")?;
        let rank = r.u32()? as usize;
        let shape = (0..rank)
            .map(|_| r.u64().map(|d| d as usize))
            .collect::<Result<Vec<_>, _>>()?;
        let numel = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d)).ok_or("shape overflows")?;
        let raw = r.take(numel.checked_mul(8).ok_or("shape overflows")?)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let t = Tensor::new(&shape, data).map_err(|e| format!("tensor `{name}`: {e}"))?;
        store.insert(name, t).map_err(|e| e.to_string())?;
    }
    if r.pos != bytes.len() {
        return Err(format!("{} trailing bytes", bytes.len() - r.pos));
    }
    Ok(store)
}

/// Everything besides the weights needed to run a checkpoint on raw files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sidecar {
    pub format_version: u32,
    #[serde(with = "serde_model")]
    pub model: ModelConfig,
    /// Hand-crafted columns kept by the ANOVA screen (absent when HC is off).
    pub hc_mask: Option<Vec<bool>>,
    /// Statistics of the training split, after POS handling and HC masking.
    #[serde(with = "serde_norm")]
    pub norm_stats: NormStats,
    pub fold: Option<usize>,
    pub best_epoch: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct Bundle {
    pub model: CrnnModel,
    pub sidecar: Sidecar,
}

/// Sidecar path for a checkpoint: same stem, `.json` extension.
pub fn sidecar_path(ckpt: &Path) -> PathBuf {
    ckpt.with_extension("json")
}

pub fn save(ckpt: &Path, model: &CrnnModel, sidecar: &Sidecar) -> AppResult<()> {
    std::fs::write(ckpt, encode(model.params())).map_err(|e| AppError::io(ckpt, e))?;
    let side = sidecar_path(ckpt);
    std::fs::write(&side, to_json(sidecar)).map_err(|e| AppError::io(&side, e))
}

pub fn load(ckpt: &Path) -> AppResult<Bundle> {
    let bytes = std::fs::read(ckpt).map_err(|e| AppError::io(ckpt, e))?;
    let params = decode(&bytes).map_err(|e| AppError::Data(format!("{}: {e}", ckpt.display())))?;
    let side = sidecar_path(ckpt);
    let text = std::fs::read_to_string(&side).map_err(|e| AppError::io(&side, e))?;
    let sidecar: Sidecar =
        serde_json::from_str(&text).map_err(|e| AppError::Data(format!("{}: {e}", side.display())))?;
    if sidecar.format_version != VERSION {
        return Err(AppError::Data(format!(
            "{}: unsupported sidecar version {}",
            side.display(),
            sidecar.format_version
        )));
    }
    let model = CrnnModel::from_params(sidecar.model.clone(), &params)
        .map_err(|e| AppError::Data(format!("{}: checkpoint does not match its config: {e}", ckpt.display())))?;
    Ok(Bundle { model, sidecar })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn archive_round_trip_is_bit_exact() {
        let mut store = ParamStore::new();
        let odd = vec![f64::MIN_POSITIVE, -0.0, 1.0 / 3.0, f64::MAX, 5e-324, -7.25];
        store.insert("a.w", Tensor::new(&[2, 3], odd.clone()).unwrap()).unwrap();
        store.insert("b", Tensor::scalar(0.1)).unwrap();
        let bytes = encode(&store);
        let back = decode(&bytes).unwrap();
        assert_eq!(back.len(), 2);
        let a = back.by_name("a.w").unwrap();
        assert_eq!(a.shape(), &[2, 3]);
        for (x, y) in a.data().iter().zip(&odd) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
        assert_eq!(encode(&back), bytes);
    }

    #[test]
    fn corrupt_archives_rejected() {
        let mut store = ParamStore::new();
        store.insert("w", Tensor::row(&[1.0, 2.0])).unwrap();
        let bytes = encode(&store);
        assert!(decode(&bytes[..bytes.len() - 1]).is_err());
        assert!(decode(b"NOTACKPT").is_err());
        let mut v2 = bytes.clone();
        v2[8] = 2;
        assert!(decode(&v2).unwrap_err().contains("version 2"));
        let mut extra = bytes;
        extra.push(0);
        assert!(decode(&extra).is_err());
    }
}
