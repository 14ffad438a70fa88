//! Flat model parameter vector with a named segment table. The only object
//! that ever crosses a client boundary.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::hash::derive_seed;

use super::{LearnerError, ModelConfig};

const CHECKPOINT_MAGIC: &[u8; 8] = b"FRPARAM1";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segment {
    pub name: String,
    pub offset: usize,
    pub shape: Vec<usize>,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    segments: Vec<Segment>,
    total: usize,
}

impl Layout {
    fn new(blocks: &[(&str, Vec<usize>)]) -> Layout {
        let mut segments = Vec::with_capacity(blocks.len());
        let mut offset = 0;
        for (name, shape) in blocks {
            let seg = Segment { name: (*name).into(), offset, shape: shape.clone() };
            offset += seg.len();
            segments.push(seg);
        }
        Layout { segments, total: offset }
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn total_len(&self) -> usize {
        self.total
    }

    pub fn find(&self, name: &str) -> Option<&Segment> {
        self.segments.iter().find(|s| s.name == name)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    layout: Arc<Layout>,
    values: Vec<f64>,
}

impl ParamVector {
    pub fn zeros(layout: Arc<Layout>) -> ParamVector {
        let values = vec![0.0; layout.total_len()];
        ParamVector { layout, values }
    }

    pub fn zeros_like(&self) -> ParamVector {
        ParamVector { layout: self.layout.clone(), values: vec![0.0; self.values.len()] }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn same_layout(&self, other: &ParamVector) -> bool {
        Arc::ptr_eq(&self.layout, &other.layout) || self.layout == other.layout
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn block(&self, name: &str) -> &[f64] {
        let seg = self.layout.find(name).unwrap_or_else(|| panic!("no block {name}"));
        &self.values[seg.offset..seg.offset + seg.len()]
    }

    pub fn block_mut(&mut self, name: &str) -> &mut [f64] {
        let seg = self
            .layout
            .find(name)
            .unwrap_or_else(|| panic!("no block {name}"))
            .clone();
        &mut self.values[seg.offset..seg.offset + seg.len()]
    }

    /// Checkpoint bytes: magic, segment table, then little-endian f64 values.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.values.len() * 8 + 256);
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&(self.layout.segments.len() as u32).to_le_bytes());
        for seg in &self.layout.segments {
            let name = seg.name.as_bytes();
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name);
            out.extend_from_slice(&(seg.offset as u64).to_le_bytes());
            out.extend_from_slice(&(seg.shape.len() as u32).to_le_bytes());
            for &d in &seg.shape {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
        }
        out.extend_from_slice(&(self.values.len() as u64).to_le_bytes());
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<ParamVector, LearnerError> {
        let mut r = Reader { bytes, pos: 0 };
        let magic = r.take(8)?;
        if magic != CHECKPOINT_MAGIC {
            return Err(LearnerError::BadCheckpoint("bad magic".into()));
        }
        let nseg = r.u32()? as usize;
        if nseg > 1024 {
            return Err(LearnerError::BadCheckpoint("unreasonable segment count".into()));
        }
        let mut segments = Vec::with_capacity(nseg);
        let mut expected_offset = 0usize;
        for _ in 0..nseg {
            let name_len = r.u32()? as usize;
            let name = String::from_utf8(r.take(name_len)?.to_vec())
                .map_err(|_| LearnerError::BadCheckpoint("segment name not UTF-8".into()))?;
            let offset = r.u64()? as usize;
            if offset != expected_offset {
                return Err(LearnerError::BadCheckpoint("segments not contiguous".into()));
            }
            let ndim = r.u32()? as usize;
            let mut shape = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                shape.push(r.u64()? as usize);
            }
            let seg = Segment { name, offset, shape };
            expected_offset += seg.len();
            segments.push(seg);
        }
        let count = r.u64()? as usize;
        if count != expected_offset {
            return Err(LearnerError::BadCheckpoint("value count does not match layout".into()));
        }
        let mut values = Vec::with_capacity(count);
        for _ in 0..count {
            let raw = r.take(8)?;
            values.push(f64::from_le_bytes(raw.try_into().unwrap()));
        }
        if r.pos != bytes.len() {
            return Err(LearnerError::BadCheckpoint("trailing bytes".into()));
        }
        Ok(ParamVector {
            layout: Arc::new(Layout { segments, total: expected_offset }),
            values,
        })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], LearnerError> {
        if self.pos + n > self.bytes.len() {
            return Err(LearnerError::BadCheckpoint("truncated".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, LearnerError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, LearnerError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Parameter blocks of the decoder, in a fixed order shared by all clients.
/// Names ending in `_bias` are initialized to zero.
pub(crate) fn model_layout(cfg: &ModelConfig) -> Layout {
    let v = cfg.vocab_size();
    let (f, e, h) = (cfg.fp_dim, cfg.embed_dim, cfg.hidden_dim);
    Layout::new(&[
        ("embed", vec![v, e]),
        ("fp_proj", vec![h, f]),
        ("ctx1_proj", vec![h, e]),
        ("ctx2_proj", vec![h, e]),
        ("hidden_bias", vec![h]),
        ("out_proj", vec![v, h]),
        ("out_bias", vec![v]),
    ])
}

/// Fresh parameters: weights uniform in [-0.08, 0.08] from a deterministic
/// stream keyed by `seed`; bias blocks exactly zero.
pub fn init_params(cfg: &ModelConfig, seed: u64) -> ParamVector {
    let layout = Arc::new(model_layout(cfg));
    let mut params = ParamVector::zeros(layout.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "init", &[]));
    for seg in layout.segments() {
        if seg.name.ends_with("_bias") {
            continue;
        }
        let slice = &mut params.values[seg.offset..seg.offset + seg.len()];
        for v in slice {
            *v = (rng.gen::<f64>() * 2.0 - 1.0) * 0.08;
        }
    }
    params
}
