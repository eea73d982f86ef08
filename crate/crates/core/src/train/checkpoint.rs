//! Binary checkpoint format (all integers and floats little-endian):
//!
//! ```text
//! "SARCLIP-CKPT"            12-byte magic
//! u32                       format version
//! str stage_tag             "stage1" | "stage2" | "probe"
//! str vocab_hash
//! str fingerprint           run config fingerprint
//! str config                TrainConfig as JSON
//! u32 tensor count, then per tensor: str name, u64 rows, u64 cols, rows*cols f64
//! u8  has optimizer state; if 1: u64 step, then per parameter tensor m and v values
//! ```
//!
//! `str` is a u32 byte length followed by UTF-8 bytes. Parameter tensors come
//! first in [`EncoderParams::tensors`] order, followed by any extra tensors
//! (for example a probe head).

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::adam::AdamState;
use super::config::TrainConfig;
use crate::embed::{DenseMatrix, EncoderParams};
use crate::{Error, Result, FORMAT_VERSION};

pub const CHECKPOINT_MAGIC: &[u8; 12] = b"SARCLIP-CKPT";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StageTag {
    Stage1,
    Stage2,
    Probe,
}

impl StageTag {
    pub fn as_str(self) -> &'static str {
        match self {
            StageTag::Stage1 => "stage1",
            StageTag::Stage2 => "stage2",
            StageTag::Probe => "probe",
        }
    }

    fn parse(s: &str) -> Result<Self> {
        match s {
            "stage1" => Ok(StageTag::Stage1),
            "stage2" => Ok(StageTag::Stage2),
            "probe" => Ok(StageTag::Probe),
            other => Err(Error::Format(format!("unknown stage tag `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub format_version: u32,
    pub stage: StageTag,
    pub params: EncoderParams,
    pub vocab_hash: String,
    /// Fingerprint of the run that produced this checkpoint.
    pub fingerprint: String,
    pub config: TrainConfig,
    pub optimizer: Option<AdamState>,
    /// Named tensors outside the encoders, such as a probe head.
    pub extras: Vec<(String, DenseMatrix)>,
}

impl Checkpoint {
    pub fn new(stage: StageTag, params: EncoderParams, vocab_hash: String, config: TrainConfig) -> Self {
        let fingerprint = crate::fingerprint::fingerprint(&config);
        Self {
            format_version: FORMAT_VERSION,
            stage,
            params,
            vocab_hash,
            fingerprint,
            config,
            optimizer: None,
            extras: Vec::new(),
        }
    }

    pub fn extra(&self, name: &str) -> Option<&DenseMatrix> {
        self.extras.iter().find(|(n, _)| n == name).map(|(_, m)| m)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut w = Writer(Vec::new());
        w.0.extend_from_slice(CHECKPOINT_MAGIC);
        w.u32(self.format_version);
        w.str(self.stage.as_str());
        w.str(&self.vocab_hash);
        w.str(&self.fingerprint);
        w.str(&serde_json::to_string(&self.config).map_err(|e| Error::Format(e.to_string()))?);
        let tensors = self.params.tensors();
        w.u32((tensors.len() + self.extras.len()) as u32);
        for t in &tensors {
            w.tensor(&t.name, t.shape, t.data);
        }
        for (name, m) in &self.extras {
            w.tensor(name, m.shape(), m.values());
        }
        match &self.optimizer {
            None => w.0.push(0),
            Some(state) => {
                if state.m.len() != tensors.len() || state.v.len() != tensors.len() {
                    return Err(Error::Shape("optimizer state does not match the parameters".into()));
                }
                w.0.push(1);
                w.u64(state.step);
                for (m, v) in state.m.iter().zip(&state.v) {
                    w.f64s(m);
                    w.f64s(v);
                }
            }
        }
        Ok(w.0)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(CHECKPOINT_MAGIC.len())? != CHECKPOINT_MAGIC {
            return Err(Error::Format("not a checkpoint (bad magic)".into()));
        }
        let format_version = r.u32()?;
        if format_version != FORMAT_VERSION {
            return Err(Error::Format(format!(
                "checkpoint format version {format_version}, this build reads version {FORMAT_VERSION}"
            )));
        }
        let stage = StageTag::parse(&r.str()?)?;
        let vocab_hash = r.str()?;
        let fingerprint = r.str()?;
        let config: TrainConfig =
            serde_json::from_str(&r.str()?).map_err(|e| Error::Format(format!("config snapshot: {e}")))?;

        let count = r.u32()? as usize;
        let mut named: Vec<(String, DenseMatrix)> = Vec::with_capacity(count);
        for _ in 0..count {
            let name = r.str()?;
            let rows = r.u64()? as usize;
            let cols = r.u64()? as usize;
            let values = r.f64s(rows.checked_mul(cols).ok_or_else(|| Error::Format("tensor too large".into()))?)?;
            named.push((name, DenseMatrix::from_vec(rows, cols, values)?));
        }

        let vocab_size = named
            .iter()
            .find(|(n, _)| n == "text.embedding")
            .map(|(_, m)| m.rows())
            .ok_or_else(|| Error::Format("checkpoint has no text.embedding tensor".into()))?;
        let mut params = EncoderParams::init(&config.model, vocab_size, 1.0, 0)?;
        let mut by_name: HashMap<String, DenseMatrix> = named.into_iter().collect();
        let layout = params.layout();
        for (tensor, (name, shape)) in params.tensors_mut().into_iter().zip(layout) {
            let m = by_name
                .remove(&name)
                .ok_or_else(|| Error::Format(format!("checkpoint is missing tensor `{name}`")))?;
            if m.shape() != shape {
                return Err(Error::Shape(format!("tensor `{name}` is {:?}, config implies {shape:?}", m.shape())));
            }
            tensor.data.copy_from_slice(m.values());
        }
        let mut extras: Vec<(String, DenseMatrix)> = by_name.into_iter().collect();
        extras.sort_by(|a, b| a.0.cmp(&b.0));

        let optimizer = match r.u8()? {
            0 => None,
            1 => {
                let step = r.u64()?;
                let mut m = Vec::new();
                let mut v = Vec::new();
                for t in params.tensors() {
                    let n = t.data.len();
                    let (mm, vv) = (r.f64s_prefixed(n)?, r.f64s_prefixed(n)?);
                    m.push(mm);
                    v.push(vv);
                }
                Some(AdamState { step, m, v })
            }
            other => return Err(Error::Format(format!("bad optimizer flag {other}"))),
        };
        if r.pos != bytes.len() {
            return Err(Error::Format(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        Ok(Self { format_version, stage, params, vocab_hash, fingerprint, config, optimizer, extras })
    }

    /// Writes to a temporary sibling file and renames it into place.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let bytes = self.to_bytes()?;
        let tmp = path.with_extension("ckpt.tmp");
        fs::write(&tmp, &bytes).map_err(|e| Error::io(format!("writing {}", tmp.display()), e))?;
        fs::rename(&tmp, path).map_err(|e| Error::io(format!("renaming to {}", path.display()), e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        Self::from_bytes(&bytes).map_err(|e| match e {
            Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
            other => other,
        })
    }
}

struct Writer(Vec<u8>);

impl Writer {
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn str(&mut self, s: &str) {
        self.u32(s.len() as u32);
        self.0.extend_from_slice(s.as_bytes());
    }

    fn tensor(&mut self, name: &str, shape: (usize, usize), data: &[f64]) {
        self.str(name);
        self.u64(shape.0 as u64);
        self.u64(shape.1 as u64);
        for v in data {
            self.0.extend_from_slice(&v.to_le_bytes());
        }
    }

    fn f64s(&mut self, data: &[f64]) {
        self.u64(data.len() as u64);
        for v in data {
            self.0.extend_from_slice(&v.to_le_bytes());
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            Error::Format(format!("truncated checkpoint (wanted {n} bytes at offset {})", self.pos))
        })?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn str(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|e| Error::Format(e.to_string()))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n.checked_mul(8).ok_or_else(|| Error::Format("tensor too large".into()))?)?;
        Ok(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
    }

    fn f64s_prefixed(&mut self, expected: usize) -> Result<Vec<f64>> {
        let n = self.u64()? as usize;
        if n != expected {
            return Err(Error::Format(format!("optimizer moment has {n} values, expected {expected}")));
        }
        self.f64s(n)
    }
}
