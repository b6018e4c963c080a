//! Binary checkpoint container.
//!
//! ```text
//! magic    8 bytes  "CASEENC\0"
//! version  u32 LE   (1)
//! hlen     u32 LE   header length in bytes
//! header   hlen     UTF-8 JSON: {kind, step, config, tensors: [{name, len}]}
//! data              every tensor as consecutive f64 LE, in header order
//! ```

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Encoder, EncoderConfig};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"CASEENC\0";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckpointKind {
    /// Encoder parameters only.
    Params,
    /// Parameters plus optimizer moments, for resuming training.
    TrainState,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    len: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    kind: CheckpointKind,
    step: usize,
    config: EncoderConfig,
    tensors: Vec<TensorEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub kind: CheckpointKind,
    pub step: usize,
    pub config: EncoderConfig,
    pub tensors: Vec<(String, Vec<f64>)>,
}

impl Checkpoint {
    /// Parameters split into their named groups.
    pub fn from_encoder(encoder: &Encoder) -> Self {
        let tensors = encoder
            .param_groups()
            .into_iter()
            .map(|(name, r)| (name, encoder.params()[r].to_vec()))
            .collect();
        Self {
            kind: CheckpointKind::Params,
            step: 0,
            config: encoder.config().clone(),
            tensors,
        }
    }

    pub fn tensor(&self, name: &str) -> Option<&[f64]> {
        self.tensors
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_slice())
    }

    /// Rebuild the encoder from a `Params` checkpoint.
    pub fn to_encoder(&self) -> Result<Encoder> {
        let template = Encoder::new(self.config.clone())?;
        let groups = template.param_groups();
        if groups.len() != self.tensors.len()
            || groups.iter().zip(&self.tensors).any(|((n, r), (m, v))| n != m || r.len() != v.len())
        {
            return Err(Error::Checkpoint("tensor layout does not match the config".into()));
        }
        let params = self.tensors.iter().flat_map(|(_, v)| v.iter().copied()).collect();
        Encoder::from_params(self.config.clone(), params)
    }
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    let header = Header {
        kind: ckpt.kind,
        step: ckpt.step,
        config: ckpt.config.clone(),
        tensors: ckpt
            .tensors
            .iter()
            .map(|(n, v)| TensorEntry { name: n.clone(), len: v.len() })
            .collect(),
    };
    let header = serde_json::to_vec(&header)?;
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(header.len() as u32).to_le_bytes())?;
    w.write_all(&header)?;
    for (_, v) in &ckpt.tensors {
        for x in v {
            w.write_all(&x.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let mut r = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint(format!("{} is not a checkpoint", path.display())));
    }
    let mut word = [0u8; 4];
    r.read_exact(&mut word)?;
    let version = u32::from_le_bytes(word);
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    r.read_exact(&mut word)?;
    let mut header = vec![0u8; u32::from_le_bytes(word) as usize];
    r.read_exact(&mut header)?;
    let header: Header = serde_json::from_slice(&header)?;
    let mut tensors = Vec::with_capacity(header.tensors.len());
    let mut buf = [0u8; 8];
    for t in header.tensors {
        let mut v = Vec::with_capacity(t.len);
        for _ in 0..t.len {
            r.read_exact(&mut buf)
                .map_err(|_| Error::Checkpoint(format!("truncated tensor `{}`", t.name)))?;
            v.push(f64::from_le_bytes(buf));
        }
        tensors.push((t.name, v));
    }
    if r.read(&mut buf)? != 0 {
        return Err(Error::Checkpoint("trailing bytes after tensors".into()));
    }
    Ok(Checkpoint {
        kind: header.kind,
        step: header.step,
        config: header.config,
        tensors,
    })
}
