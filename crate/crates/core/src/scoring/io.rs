//! Model files.
//!
//! ```text
//! magic    "TQMODEL\0"
//! version  u32
//! kind     u32          0 sparse, 1 neural
//! mode     u8           surface mode code
//! level    u8           1 if rule features are rule-level
//! reserved u16
//! ndims    u32, then ndims × u32
//!   sparse: buckets, order, rule dim
//!   neural: vocab, emb, hidden, attn, rule dim
//! body
//!   sparse: u64 count, then count × (u64 key, f32 weight), keys ascending
//!   neural: vocab × (u32 len, utf-8 token), u64 count, count × f32
//! ```
//!
//! Integers and floats are little-endian. Parameters are trained in f64
//! and stored as f32.

use std::io::{Read, Write};
use std::path::Path;

use super::{Model, NeuralDims, NeuralModel, ScorerConfig, SparseModel};
use crate::chart::SurfaceMode;
use crate::error::{Error, Result};
use crate::rules::RulePred;

pub const MAGIC: &[u8; 8] = b"TQMODEL\0";
pub const VERSION: u32 = 1;

fn bad(msg: impl Into<String>) -> Error {
    Error::Model(msg.into())
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_f32(out: &mut Vec<u8>, v: f64) {
    out.extend_from_slice(&(v as f32).to_le_bytes());
}

struct Cursor<'a> {
    buf: &'a [u8],
    at: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| bad("truncated model file"))?;
        let s = &self.buf[self.at..end];
        self.at = end;
        Ok(s)
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

    fn f32(&mut self) -> Result<f64> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as f64)
    }
}

fn header(out: &mut Vec<u8>, kind: u32, config: ScorerConfig, dims: &[u32]) {
    out.extend_from_slice(MAGIC);
    put_u32(out, VERSION);
    put_u32(out, kind);
    out.push(config.mode.code());
    out.push(config.rule_level as u8);
    out.extend_from_slice(&[0, 0]);
    put_u32(out, dims.len() as u32);
    for &d in dims {
        put_u32(out, d);
    }
}

pub fn to_bytes(model: &Model) -> Vec<u8> {
    let mut out = Vec::new();
    match model {
        Model::Sparse(m) => {
            header(&mut out, 0, m.config, &[m.buckets, m.order, m.rule_dim() as u32]);
            let mut keys: Vec<(&u64, &f64)> = m.weights.iter().filter(|(_, &w)| w != 0.0).collect();
            keys.sort_unstable_by_key(|(k, _)| **k);
            put_u64(&mut out, keys.len() as u64);
            for (&k, &w) in keys {
                put_u64(&mut out, k);
                put_f32(&mut out, w);
            }
        }
        Model::Neural(m) => {
            let NeuralDims { emb, hidden, attn } = m.dims;
            let rules = RulePred::feature_count(m.config.rule_level);
            let dims = [m.tokens.len(), emb, hidden, attn, rules].map(|d| d as u32);
            header(&mut out, 1, m.config, &dims);
            for t in &m.tokens {
                put_u32(&mut out, t.len() as u32);
                out.extend_from_slice(t.as_bytes());
            }
            put_u64(&mut out, m.params.len() as u64);
            for &p in &m.params {
                put_f32(&mut out, p);
            }
        }
    }
    out
}

pub fn from_bytes(buf: &[u8]) -> Result<Model> {
    let mut c = Cursor { buf, at: 0 };
    if c.take(8)? != MAGIC {
        return Err(bad("not a model file (bad magic)"));
    }
    let version = c.u32()?;
    if version != VERSION {
        return Err(bad(format!("unsupported model version {version}")));
    }
    let kind = c.u32()?;
    let mode_code = c.u8()?;
    let mode = SurfaceMode::ALL
        .into_iter()
        .find(|m| m.code() == mode_code)
        .ok_or_else(|| bad(format!("unknown surface mode {mode_code}")))?;
    let rule_level = c.u8()? != 0;
    c.take(2)?;
    let config = ScorerConfig { mode, rule_level };
    let ndims = c.u32()? as usize;
    if ndims > 16 {
        return Err(bad("implausible header"));
    }
    let dims: Vec<usize> = (0..ndims).map(|_| c.u32().map(|d| d as usize)).collect::<Result<_>>()?;
    let rules = RulePred::feature_count(rule_level);
    let model = match (kind, dims.as_slice()) {
        (0, &[buckets, order, rule_dim]) => {
            if rule_dim != rules || buckets == 0 {
                return Err(bad("sparse model dimensions do not match the rule set"));
            }
            let mut m = SparseModel::new(config);
            m.buckets = buckets as u32;
            m.order = order as u32;
            let n = c.u64()?;
            for _ in 0..n {
                let k = c.u64()?;
                let w = c.f32()?;
                if k >= buckets as u64 * rule_dim as u64 {
                    return Err(bad("sparse weight key out of range"));
                }
                m.weights.insert(k, w);
            }
            Model::Sparse(m)
        }
        (1, &[vocab, emb, hidden, attn, rule_dim]) => {
            if rule_dim != rules {
                return Err(bad("neural model dimensions do not match the rule set"));
            }
            let mut tokens = Vec::with_capacity(vocab.min(1 << 20));
            for _ in 0..vocab {
                let len = c.u32()? as usize;
                let s = std::str::from_utf8(c.take(len)?).map_err(|_| bad("token is not utf-8"))?;
                tokens.push(s.to_string());
            }
            let mut m = NeuralModel::zeros(config, NeuralDims { emb, hidden, attn }, tokens);
            let n = c.u64()? as usize;
            if n != m.param_count() {
                return Err(bad(format!("expected {} parameters, found {n}", m.param_count())));
            }
            for p in &mut m.params {
                *p = c.f32()?;
            }
            Model::Neural(m)
        }
        _ => return Err(bad(format!("unknown model kind {kind} with {ndims} dims"))),
    };
    if c.at != buf.len() {
        return Err(bad("trailing bytes after model body"));
    }
    Ok(model)
}

pub fn save(model: &Model, path: &Path) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(&to_bytes(model))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Model> {
    let mut buf = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut buf)?;
    from_bytes(&buf)
}
