//! Binary checkpoint container.
//!
//! Layout: 8-byte magic `PCLPCKPT`, `u32` format version, `u32` header
//! length, a JSON header (config, head, vocabulary, free-form metadata),
//! `u64` parameter count, then every parameter as little-endian `f64` bits.
//! Parameters are stored bit-exactly, so save → load reproduces eval
//! outputs exactly.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{Head, ModelConfig, TinyModel};
use super::vocab::Vocabulary;
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"PCLPCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    head: Head,
    vocab: Vocabulary,
    meta: BTreeMap<String, String>,
}

/// A model plus string metadata (e.g. the validation metric it was saved at).
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model: TinyModel,
    pub meta: BTreeMap<String, String>,
}

pub fn save_checkpoint(path: &Path, model: &TinyModel, meta: &BTreeMap<String, String>) -> Result<()> {
    let header = Header {
        config: model.config().clone(),
        head: model.head(),
        vocab: model.vocabulary().clone(),
        meta: meta.clone(),
    };
    let header = serde_json::to_vec(&header)?;
    let params = model.params();
    let mut buf = Vec::with_capacity(24 + header.len() + params.len() * 8);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(header.len() as u32).to_le_bytes());
    buf.extend_from_slice(&header);
    buf.extend_from_slice(&(params.len() as u64).to_le_bytes());
    for p in params {
        buf.extend_from_slice(&p.to_le_bytes());
    }
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let tmp = path.with_extension("ckpt.tmp");
    fs::write(&tmp, &buf).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let buf = fs::read(path).map_err(|e| Error::io(path, e))?;
    let bad = |m: &str| Error::Checkpoint(format!("{}: {m}", path.display()));
    let mut at = 0usize;
    let mut take = |n: usize| -> Result<&[u8]> {
        let s = buf.get(at..at + n).ok_or_else(|| bad("truncated file"))?;
        at += n;
        Ok(s)
    };
    if take(8)? != MAGIC {
        return Err(bad("not a checkpoint (bad magic)"));
    }
    let version = u32::from_le_bytes(take(4)?.try_into().expect("4 bytes"));
    if version != CHECKPOINT_VERSION {
        return Err(bad(&format!("unsupported version {version}")));
    }
    let header_len = u32::from_le_bytes(take(4)?.try_into().expect("4 bytes")) as usize;
    let header: Header = serde_json::from_slice(take(header_len)?)?;
    let n = u64::from_le_bytes(take(8)?.try_into().expect("8 bytes")) as usize;
    let raw = take(n.checked_mul(8).ok_or_else(|| bad("parameter count overflow"))?)?;
    let params = raw
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    if at != buf.len() {
        return Err(bad("trailing bytes"));
    }
    let model = TinyModel::from_parts(header.vocab, header.config, header.head, params)?;
    Ok(Checkpoint {
        model,
        meta: header.meta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mlm::MaskScorer;
    use crate::prompt::{wrap, PromptTemplate};

    #[test]
    fn round_trip_is_bit_exact() {
        let vocab = Vocabulary::build(["a b c yes no is it patronizing or condescending?"], &[], 1);
        let cfg = ModelConfig {
            d_model: 8,
            n_heads: 2,
            n_layers: 1,
            d_ff: 8,
            max_seq_len: 16,
            dropout: 0.1,
        };
        let m = TinyModel::new_mlm(vocab, cfg, 5).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sub/best.ckpt");
        let mut meta = BTreeMap::new();
        meta.insert("metric".into(), "0.5".into());
        save_checkpoint(&p, &m, &meta).unwrap();
        let back = load_checkpoint(&p).unwrap();
        assert_eq!(back.meta, meta);
        assert_eq!(back.model.params(), m.params());
        let w = wrap("a b c", &PromptTemplate::binary_default(), "[MASK]").unwrap();
        assert_eq!(back.model.score_mask(&w).unwrap(), m.score_mask(&w).unwrap());
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.ckpt");
        fs::write(&p, b"NOTACKPTxxxx").unwrap();
        assert!(matches!(load_checkpoint(&p), Err(Error::Checkpoint(_))));
        fs::write(&p, b"PCLPCKPT").unwrap();
        assert!(load_checkpoint(&p).is_err());
    }
}
