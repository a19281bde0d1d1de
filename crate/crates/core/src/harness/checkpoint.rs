//! Versioned binary checkpoint.
//!
//! ```text
//! "PEMC" | u32 version | u32 n + settings JSON | u32 n + EMR stats text
//! | u32 tensors | per tensor: u32 n + name, u32 rank, u32 extents, f32 values
//! ```
//! All integers and floats little-endian.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use crate::emr::EmrPipeline;
use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::params::ParamStore;
use crate::tensor::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"PEMC";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Settings {
    /// Paths are blanked so the bytes depend only on what was trained.
    pub run: RunConfig,
    pub model: ModelConfig,
    /// Epoch (1-based) whose parameters were kept.
    pub best_epoch: usize,
}

#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub settings: Settings,
    pub pipeline: Option<EmrPipeline>,
    pub params: ParamStore<f32>,
}

impl PartialEq for Checkpoint {
    fn eq(&self, other: &Self) -> bool {
        self.to_bytes() == other.to_bytes()
    }
}

fn put_u32(buf: &mut Vec<u8>, v: usize) {
    buf.extend_from_slice(&u32::try_from(v).expect("checkpoint field exceeds u32").to_le_bytes());
}

fn put_blob(buf: &mut Vec<u8>, bytes: &[u8]) {
    put_u32(buf, bytes.len());
    buf.extend_from_slice(bytes);
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| Error::Format {
            offset: self.bytes.len() as u64,
            message: format!("truncated while reading {what} at offset {}", self.pos),
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()) as usize)
    }

    fn text(&mut self, what: &str) -> Result<&'a str> {
        let n = self.u32(what)?;
        let at = self.pos;
        std::str::from_utf8(self.take(n, what)?).map_err(|_| Error::Format {
            offset: at as u64,
            message: format!("{what} is not UTF-8"),
        })
    }
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        buf.extend_from_slice(CHECKPOINT_MAGIC);
        buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        put_blob(&mut buf, serde_json::to_string(&self.settings).expect("settings serialize").as_bytes());
        let stats = self.pipeline.as_ref().map(EmrPipeline::to_stats_string).unwrap_or_default();
        put_blob(&mut buf, stats.as_bytes());
        put_u32(&mut buf, self.params.len());
        for (name, t) in self.params.iter() {
            put_blob(&mut buf, name.as_bytes());
            put_u32(&mut buf, t.rank());
            t.shape().iter().for_each(|&e| put_u32(&mut buf, e));
            t.data().iter().for_each(|v| buf.extend_from_slice(&v.to_le_bytes()));
        }
        buf
    }

    /// Trainability flags are not stored; tensors come back frozen or
    /// trainable according to the model that loads them.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4, "magic").ok() != Some(CHECKPOINT_MAGIC.as_slice()) {
            return Err(Error::Format {
                offset: 0,
                message: "missing PEMC magic".into(),
            });
        }
        let version = r.u32("version")?;
        if version != CHECKPOINT_VERSION as usize {
            return Err(Error::Format {
                offset: 4,
                message: format!("unsupported checkpoint version {version}"),
            });
        }
        let at = r.pos;
        let settings: Settings = serde_json::from_str(r.text("settings")?).map_err(|e| Error::Format {
            offset: at as u64,
            message: format!("settings: {e}"),
        })?;
        let stats = r.text("EMR stats")?;
        let pipeline = if stats.is_empty() {
            None
        } else {
            Some(EmrPipeline::from_stats_str(stats)?)
        };
        let count = r.u32("tensor count")?;
        let mut params = ParamStore::new();
        for _ in 0..count {
            let name = r.text("tensor name")?.to_string();
            if params.id(&name).is_some() {
                return Err(Error::Consistency(format!("checkpoint repeats tensor {name}")));
            }
            let rank = r.u32("rank")?;
            let shape = (0..rank).map(|_| r.u32("extent")).collect::<Result<Vec<_>>>()?;
            let n: usize = shape.iter().product();
            let at = r.pos;
            let data = r
                .take(n.checked_mul(4).unwrap_or(usize::MAX), "tensor values")?
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
                .collect();
            let t = Tensor::new(shape, data).map_err(|e| Error::Format {
                offset: at as u64,
                message: format!("tensor {name}: {e}"),
            })?;
            params.add_frozen(name, t);
        }
        if r.pos != bytes.len() {
            return Err(Error::Format {
                offset: r.pos as u64,
                message: format!("{} trailing bytes", bytes.len() - r.pos),
            });
        }
        Ok(Self {
            settings,
            pipeline,
            params,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}
