//! Binary checkpoint container.
//!
//! ```text
//! "TRRGEN1"            7 bytes
//! version              u32 LE
//! header length        u64 LE
//! header               UTF-8 JSON: run config, model config, vocabulary, metadata
//! tensor count         u64 LE
//! per tensor:          name length u32 LE, name, rows u64 LE, cols u64 LE,
//!                      rows*cols f64 LE (row-major)
//! ```
//!
//! Tensors are written in the fixed parameter order, so saving a loaded
//! checkpoint reproduces the file byte for byte.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::corpus::Vocabulary;
use crate::error::{Error, Result};
use crate::model::{ModelConfig, Parameters, Transformer};
use crate::numerics::Tensor;

pub const MAGIC: &[u8; 7] = b"TRRGEN1";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub epoch: usize,
    pub best_valid_loss: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub run: RunConfig,
    pub vocab: Vocabulary,
    pub model: Transformer,
    pub meta: TrainingMeta,
}

#[derive(Serialize, Deserialize)]
struct Header {
    run: RunConfig,
    model: ModelConfig,
    vocab: Vocabulary,
    meta: TrainingMeta,
}

impl Checkpoint {
    pub fn new(run: RunConfig, vocab: Vocabulary, model: Transformer, meta: TrainingMeta) -> Result<Self> {
        if vocab.len() != model.config.vocab_size {
            return Err(Error::Checkpoint(format!(
                "vocabulary has {} tokens, model expects {}",
                vocab.len(),
                model.config.vocab_size
            )));
        }
        Ok(Self { run, vocab, model, meta })
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        let header = serde_json::to_vec(&Header {
            run: self.run.clone(),
            model: self.model.config.clone(),
            vocab: self.vocab.clone(),
            meta: self.meta.clone(),
        })?;
        let leaves = self.model.params.named_leaves();
        let mut buf = Vec::with_capacity(64 + header.len() + 8 * self.model.params.scalar_count());
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&VERSION.to_le_bytes());
        buf.extend_from_slice(&(header.len() as u64).to_le_bytes());
        buf.extend_from_slice(&header);
        buf.extend_from_slice(&(leaves.len() as u64).to_le_bytes());
        for (name, t) in leaves {
            buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
            buf.extend_from_slice(name.as_bytes());
            buf.extend_from_slice(&(t.rows() as u64).to_le_bytes());
            buf.extend_from_slice(&(t.cols() as u64).to_le_bytes());
            for v in t.data() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        out.write_all(&buf).map_err(|e| Error::Checkpoint(format!("write failed: {e}")))
    }

    pub fn read_from<R: Read>(mut input: R) -> Result<Self> {
        let mut bytes = Vec::new();
        input
            .read_to_end(&mut bytes)
            .map_err(|e| Error::Checkpoint(format!("read failed: {e}")))?;
        Self::from_bytes(&bytes)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(MAGIC.len())? != MAGIC {
            return Err(Error::Checkpoint("not a checkpoint (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version} (expected {VERSION})")));
        }
        let header_len = r.len()?;
        let header: Header = serde_json::from_slice(r.take(header_len)?)
            .map_err(|e| Error::Checkpoint(format!("bad header: {e}")))?;
        header.model.validate()?;

        let layout = Parameters::layout(&header.model);
        let expected = layout.named_leaves();
        let count = r.len()?;
        if count != expected.len() {
            return Err(Error::Checkpoint(format!("{count} tensors, expected {}", expected.len())));
        }
        let mut tensors = Vec::with_capacity(count);
        for (want_name, shape) in expected {
            let name_len = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(name_len)?)
                .map_err(|_| Error::Checkpoint("tensor name is not UTF-8".into()))?;
            if name != want_name {
                return Err(Error::Checkpoint(format!("tensor {name:?} where {want_name:?} was expected")));
            }
            let (rows, cols) = (r.len()?, r.len()?);
            if [rows, cols] != *shape {
                return Err(Error::Checkpoint(format!("{name}: shape {rows}x{cols}, expected {}x{}", shape[0], shape[1])));
            }
            let n = rows
                .checked_mul(cols)
                .and_then(|n| n.checked_mul(8))
                .ok_or_else(|| Error::Checkpoint(format!("{name}: size overflow")))?;
            let data = r
                .take(n)?
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            tensors.push(Tensor::new(rows, cols, data)?);
        }
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        let params = layout.rebuild(&tensors)?;
        let model = Transformer::from_parts(header.model, params)?;
        Self::new(header.run, header.vocab, model, header.meta)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut bytes = Vec::new();
        self.write_to(&mut bytes)?;
        std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Checkpoint(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn len(&mut self) -> Result<usize> {
        let v = u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes"));
        usize::try_from(v).map_err(|_| Error::Checkpoint(format!("length {v} does not fit in memory")))
    }
}
