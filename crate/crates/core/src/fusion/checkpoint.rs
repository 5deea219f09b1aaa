//! Versioned binary checkpoints: `PSYM1` magic, little-endian shapes, then
//! 64-bit floats for every tensor. The embedding table (vocabulary +
//! vectors) and prosody normalization stats ride along so inference can
//! rebuild the full feature pipeline.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::fusion::features::FeatureExtractor;
use crate::fusion::model::{ModelConfig, ModelParams};
use crate::prosody::{NormStats, FEATURE_DIM};
use crate::textproc::EmbeddingTable;

pub const MAGIC: &[u8; 5] = b"PSYM1";

/// Everything needed to run inference.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub vocab: BTreeMap<String, usize>,
    pub norm_stats: NormStats,
}

impl Checkpoint {
    /// Rebuild the feature extractor backed by the trained embedding
    /// matrix.
    pub fn extractor(&self) -> FeatureExtractor {
        FeatureExtractor {
            table: EmbeddingTable {
                vocab: self.vocab.clone(),
                vectors: self.params.embedding.clone(),
            },
            norm_stats: self.norm_stats.clone(),
        }
    }
}

fn put_u64(buf: &mut Vec<u8>, v: u64) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn put_f64s(buf: &mut Vec<u8>, vals: &[f64]) {
    for v in vals {
        buf.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn save_checkpoint(
    path: &Path,
    params: &ModelParams,
    vocab: &BTreeMap<String, usize>,
    norm_stats: &NormStats,
) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    put_u64(&mut buf, params.cfg.d_text as u64);
    put_u64(&mut buf, params.cfg.hidden as u64);
    put_u64(&mut buf, params.embedding.rows as u64);

    // vocabulary in row order (row 0 is the implicit <UNK>)
    let mut by_index: Vec<(&String, &usize)> = vocab.iter().collect();
    by_index.sort_by_key(|(_, &i)| i);
    put_u64(&mut buf, by_index.len() as u64);
    for (token, &index) in by_index {
        put_u64(&mut buf, index as u64);
        let bytes = token.as_bytes();
        put_u64(&mut buf, bytes.len() as u64);
        buf.extend_from_slice(bytes);
    }

    put_f64s(&mut buf, &norm_stats.mean);
    put_f64s(&mut buf, &norm_stats.std);

    for (_, tensor) in params.tensors() {
        put_u64(&mut buf, tensor.len() as u64);
        put_f64s(&mut buf, tensor);
    }

    std::fs::File::create(path)?.write_all(&buf)?;
    Ok(())
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.data.len() {
            return Err(Error::Parse {
                line: 0,
                msg: "checkpoint truncated".into(),
            });
        }
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = self.take(n * 8)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .map_err(|e| {
            if e.kind() == std::io::ErrorKind::NotFound {
                Error::MissingArtifact(format!("checkpoint {}", path.display()))
            } else {
                Error::Io(e)
            }
        })?
        .read_to_end(&mut bytes)?;
    let mut cur = Cursor {
        data: &bytes,
        pos: 0,
    };
    let magic = cur.take(5)?;
    if magic != MAGIC {
        return Err(Error::Version(format!(
            "bad checkpoint magic {:?}",
            String::from_utf8_lossy(magic)
        )));
    }
    let d_text = cur.u64()? as usize;
    let hidden = cur.u64()? as usize;
    let vocab_rows = cur.u64()? as usize;
    let cfg = ModelConfig { d_text, hidden };

    let vocab_len = cur.u64()? as usize;
    let mut vocab = BTreeMap::new();
    for _ in 0..vocab_len {
        let index = cur.u64()? as usize;
        let len = cur.u64()? as usize;
        let token = String::from_utf8(cur.take(len)?.to_vec()).map_err(|_| Error::Parse {
            line: 0,
            msg: "checkpoint vocab is not UTF-8".into(),
        })?;
        vocab.insert(token, index);
    }

    let mean_v = cur.f64s(FEATURE_DIM)?;
    let std_v = cur.f64s(FEATURE_DIM)?;
    let mut norm_stats = NormStats {
        mean: [0.0; FEATURE_DIM],
        std: [0.0; FEATURE_DIM],
    };
    norm_stats.mean.copy_from_slice(&mean_v);
    norm_stats.std.copy_from_slice(&std_v);

    let mut params = ModelParams::zeros(vocab_rows, cfg);
    for (name, tensor) in params.tensors_mut() {
        let n = cur.u64()? as usize;
        if n != tensor.len() {
            return Err(Error::Parse {
                line: 0,
                msg: format!("tensor {name} has {n} values, expected {}", tensor.len()),
            });
        }
        let vals = cur.f64s(n)?;
        tensor.copy_from_slice(&vals);
    }

    Ok(Checkpoint {
        params,
        vocab,
        norm_stats,
    })
}
