//! Binary checkpoint container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic      8 bytes  "RBCKPT\0\0"
//! version    u32      currently 1
//! count      u32      number of entries
//! entries    count x { key_len u16, key utf-8, tag u8, len u64, payload }
//! checksum   32 bytes SHA-256 of everything before it
//! ```
//!
//! Tags: 1 = u64, 2 = f64 array, 3 = utf-8 text, 4 = u64 array. Arrays are
//! packed IEEE-754 / u64 values; `len` is the payload size in bytes.
//!
//! Entries written: `layer_dims` (u64 array), `leaky_slope` (f64 array of 1),
//! `params` (f64 array, layer by layer: weights row-major then biases),
//! `adam.hyper` (f64 array: beta1, beta2, eps), `adam.first`, `adam.second`
//! (f64 arrays congruent to `params`), `adam.step` (u64), `epoch` (u64),
//! `config` (text, key-value branch config) and `log` (text, train log CSV).

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use sha2::{Digest, Sha256};

use super::{BranchConfig, TrainLog};
use crate::error::{Error, Result};
use crate::numerics::{AdamConfig, AdamState, Dense, EncoderParams, Matrix};

const MAGIC: &[u8; 8] = b"RBCKPT\0\0";
pub const VERSION: u32 = 1;

const TAG_U64: u8 = 1;
const TAG_F64S: u8 = 2;
const TAG_TEXT: u8 = 3;
const TAG_U64S: u8 = 4;

/// Everything needed to continue training a branch.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: EncoderParams,
    pub adam: AdamState,
    /// Completed epochs.
    pub epoch: usize,
    pub config: BranchConfig,
    pub log: TrainLog,
}

enum Value {
    U64(u64),
    F64s(Vec<f64>),
    Text(String),
    U64s(Vec<u64>),
}

fn push_entry(buf: &mut Vec<u8>, key: &str, value: &Value) {
    buf.extend_from_slice(&(key.len() as u16).to_le_bytes());
    buf.extend_from_slice(key.as_bytes());
    let (tag, payload): (u8, Vec<u8>) = match value {
        Value::U64(v) => (TAG_U64, v.to_le_bytes().to_vec()),
        Value::F64s(v) => (TAG_F64S, v.iter().flat_map(|x| x.to_le_bytes()).collect()),
        Value::Text(s) => (TAG_TEXT, s.as_bytes().to_vec()),
        Value::U64s(v) => (TAG_U64S, v.iter().flat_map(|x| x.to_le_bytes()).collect()),
    };
    buf.push(tag);
    buf.extend_from_slice(&(payload.len() as u64).to_le_bytes());
    buf.extend_from_slice(&payload);
}

pub fn write_checkpoint<W: Write>(ckpt: &Checkpoint, mut out: W) -> Result<()> {
    let mut dims: Vec<u64> = vec![ckpt.params.input_dim() as u64];
    dims.extend(ckpt.params.layers().iter().map(|l| l.out_dim() as u64));
    let a = &ckpt.adam;
    let entries = [
        ("layer_dims", Value::U64s(dims)),
        ("leaky_slope", Value::F64s(vec![ckpt.params.leaky_slope()])),
        ("params", Value::F64s(ckpt.params.to_flat())),
        (
            "adam.hyper",
            Value::F64s(vec![a.config.beta1, a.config.beta2, a.config.eps]),
        ),
        ("adam.first", Value::F64s(a.first.clone())),
        ("adam.second", Value::F64s(a.second.clone())),
        ("adam.step", Value::U64(a.step)),
        ("epoch", Value::U64(ckpt.epoch as u64)),
        ("config", Value::Text(ckpt.config.to_kv_string())),
        ("log", Value::Text(ckpt.log.to_csv_string())),
    ];
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(entries.len() as u32).to_le_bytes());
    for (k, v) in &entries {
        push_entry(&mut buf, k, v);
    }
    let digest = Sha256::digest(&buf);
    buf.extend_from_slice(&digest);
    out.write_all(&buf)
        .map_err(|e| Error::Checkpoint(format!("write failed: {e}")))
}

pub fn checkpoint_save(ckpt: &Checkpoint, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    write_checkpoint(ckpt, &mut buf)?;
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn checkpoint_load(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(bytes.as_slice())
}

struct Cursor<'b> {
    bytes: &'b [u8],
    pos: usize,
}

impl<'b> Cursor<'b> {
    fn take(&mut self, n: usize) -> Result<&'b [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Checkpoint("truncated file".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

fn words(payload: &[u8]) -> Result<impl Iterator<Item = [u8; 8]> + '_> {
    if !payload.len().is_multiple_of(8) {
        return Err(Error::Checkpoint("array payload not a multiple of 8 bytes".into()));
    }
    Ok(payload
        .chunks_exact(8)
        .map(|c| c.try_into().expect("8 bytes")))
}

pub fn read_checkpoint<R: Read>(mut input: R) -> Result<Checkpoint> {
    let mut bytes = Vec::new();
    input
        .read_to_end(&mut bytes)
        .map_err(|e| Error::Checkpoint(format!("read failed: {e}")))?;
    if bytes.len() < MAGIC.len() + 8 + 32 {
        return Err(Error::Checkpoint("truncated file".into()));
    }
    if &bytes[..8] != MAGIC {
        return Err(Error::Checkpoint("not a checkpoint (bad magic)".into()));
    }
    let (body, digest) = bytes.split_at(bytes.len() - 32);
    let mut cur = Cursor { bytes: body, pos: 8 };
    let version = cur.u32()?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported checkpoint version {version} (expected {VERSION})"
        )));
    }
    if Sha256::digest(body).as_slice() != digest {
        return Err(Error::Checkpoint("checksum mismatch (corrupt or truncated)".into()));
    }
    let count = cur.u32()?;
    let mut entries: BTreeMap<String, Value> = BTreeMap::new();
    for _ in 0..count {
        let klen = cur.u16()? as usize;
        let key = std::str::from_utf8(cur.take(klen)?)
            .map_err(|_| Error::Checkpoint("non-utf8 key".into()))?
            .to_string();
        let tag = cur.take(1)?[0];
        let len = usize::try_from(cur.u64()?)
            .map_err(|_| Error::Checkpoint("entry too large".into()))?;
        let payload = cur.take(len)?;
        let value = match tag {
            TAG_U64 if len == 8 => Value::U64(u64::from_le_bytes(payload.try_into().expect("8"))),
            TAG_F64S => Value::F64s(words(payload)?.map(f64::from_le_bytes).collect()),
            TAG_U64S => Value::U64s(words(payload)?.map(u64::from_le_bytes).collect()),
            TAG_TEXT => Value::Text(
                String::from_utf8(payload.to_vec())
                    .map_err(|_| Error::Checkpoint(format!("entry `{key}`: invalid utf-8")))?,
            ),
            _ => return Err(Error::Checkpoint(format!("entry `{key}`: bad tag {tag}"))),
        };
        entries.insert(key, value);
    }
    if cur.pos != body.len() {
        return Err(Error::Checkpoint("trailing bytes after entries".into()));
    }

    let missing = |k: &str| Error::Checkpoint(format!("missing or mistyped entry `{k}`"));
    let mut take_f64s = |k: &str| match entries.remove(k) {
        Some(Value::F64s(v)) => Ok(v),
        _ => Err(missing(k)),
    };
    let flat = take_f64s("params")?;
    let slope = take_f64s("leaky_slope")?;
    let hyper = take_f64s("adam.hyper")?;
    let first = take_f64s("adam.first")?;
    let second = take_f64s("adam.second")?;
    let u64_entry = |entries: &mut BTreeMap<String, Value>, k: &str| match entries.remove(k) {
        Some(Value::U64(v)) => Ok(v),
        _ => Err(missing(k)),
    };
    let step = u64_entry(&mut entries, "adam.step")?;
    let epoch = u64_entry(&mut entries, "epoch")? as usize;
    let dims = match entries.remove("layer_dims") {
        Some(Value::U64s(v)) if v.len() >= 2 => v,
        _ => return Err(missing("layer_dims")),
    };
    let text = |entries: &mut BTreeMap<String, Value>, k: &str| match entries.remove(k) {
        Some(Value::Text(s)) => Ok(s),
        _ => Err(missing(k)),
    };
    let config = BranchConfig::parse(&text(&mut entries, "config")?)?;
    let log = TrainLog::parse_csv(&text(&mut entries, "log")?)?;

    if slope.len() != 1 || hyper.len() != 3 {
        return Err(Error::Checkpoint("malformed scalar entries".into()));
    }
    let layers = dims
        .windows(2)
        .map(|w| Dense {
            weight: Matrix::zeros(w[1] as usize, w[0] as usize),
            bias: vec![0.0; w[1] as usize],
        })
        .collect();
    let mut params = EncoderParams::new(layers, slope[0])
        .map_err(|e| Error::Checkpoint(format!("layer dims: {e}")))?;
    params
        .assign_flat(&flat)
        .map_err(|e| Error::Checkpoint(format!("params: {e}")))?;
    if first.len() != flat.len() || second.len() != flat.len() {
        return Err(Error::Checkpoint("optimiser state does not match parameters".into()));
    }
    let adam = AdamState {
        config: AdamConfig {
            beta1: hyper[0],
            beta2: hyper[1],
            eps: hyper[2],
        },
        first,
        second,
        step,
    };
    Ok(Checkpoint {
        params,
        adam,
        epoch,
        config,
        log,
    })
}
