//! The SFPN weight container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "SFPN" | version u16 | flags u16 | classes u32 | entry count u32
//! entry*: name length u16 | name (utf-8) | rank u8 | dims u32 × rank | f32 × Π dims
//! crc32 u32 over every preceding byte
//! ```
//!
//! Flag bit 0 marks depthwise separable convolutions, bit 1 the global
//! depthwise head. Batch-norm epsilon and momentum travel as rank-0 entries.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result, WeightError};
use crate::network::{Init, NamedArray, Network, NetworkConfig, WeightStore};

pub const MAGIC: [u8; 4] = *b"SFPN";
pub const FORMAT_VERSION: u16 = 1;
pub const FLAG_DWC: u16 = 1;
pub const FLAG_GDC: u16 = 1 << 1;
pub const BN_EPSILON_ENTRY: &str = "bn10.epsilon";
pub const BN_MOMENTUM_ENTRY: &str = "bn10.momentum";

const HEADER_LEN: usize = 16;

fn put_entry(out: &mut Vec<u8>, name: &str, dims: &[usize], data: &[f32]) {
    out.extend_from_slice(&(name.len() as u16).to_le_bytes());
    out.extend_from_slice(name.as_bytes());
    out.push(dims.len() as u8);
    for &d in dims {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for v in data {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

/// Serializes a weight store, batch-norm hyperparameters last.
pub fn encode_weights(store: &WeightStore) -> Vec<u8> {
    let payload: usize = store.arrays.iter().map(|a| 7 + a.name.len() + 4 * (a.dims.len() + a.data.len())).sum();
    let mut out = Vec::with_capacity(HEADER_LEN + payload + 64);
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    let flags = if store.use_dwc { FLAG_DWC } else { 0 } | if store.use_gdc { FLAG_GDC } else { 0 };
    out.extend_from_slice(&flags.to_le_bytes());
    out.extend_from_slice(&(store.num_classes as u32).to_le_bytes());
    out.extend_from_slice(&(store.arrays.len() as u32 + 2).to_le_bytes());
    for a in &store.arrays {
        put_entry(&mut out, &a.name, &a.dims, &a.data);
    }
    put_entry(&mut out, BN_EPSILON_ENTRY, &[], &[store.bn_epsilon]);
    put_entry(&mut out, BN_MOMENTUM_ENTRY, &[], &[store.bn_momentum]);
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8], WeightError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or(WeightError::Truncated(what))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u8(&mut self, what: &'static str) -> Result<u8, WeightError> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &'static str) -> Result<u16, WeightError> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &'static str) -> Result<u32, WeightError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
}

/// Parses and verifies a weight container. Magic and version are checked
/// first, then the checksum, then the entries.
pub fn decode_weights(bytes: &[u8]) -> Result<WeightStore, WeightError> {
    let mut head = Cursor { bytes, pos: 0 };
    let magic: [u8; 4] = head.take(4, "magic")?.try_into().unwrap();
    if magic != MAGIC {
        return Err(WeightError::BadMagic(magic));
    }
    let version = head.u16("version")?;
    if version != FORMAT_VERSION {
        return Err(WeightError::UnsupportedVersion(version));
    }
    if bytes.len() < HEADER_LEN + 4 {
        return Err(WeightError::Truncated("header"));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().unwrap());
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(WeightError::CrcMismatch { stored, computed });
    }

    let mut c = Cursor { bytes: body, pos: 6 };
    let flags = c.u16("flags")?;
    if flags & !(FLAG_DWC | FLAG_GDC) != 0 {
        return Err(WeightError::UnknownFlags(flags));
    }
    let num_classes = c.u32("class count")? as usize;
    let count = c.u32("entry count")?;
    let mut store = WeightStore {
        use_dwc: flags & FLAG_DWC != 0,
        use_gdc: flags & FLAG_GDC != 0,
        num_classes,
        bn_epsilon: crate::tensor::norm::DEFAULT_EPSILON as f32,
        bn_momentum: crate::tensor::norm::DEFAULT_MOMENTUM as f32,
        arrays: Vec::new(),
    };
    let mut seen = std::collections::HashSet::new();
    for _ in 0..count {
        let name_len = c.u16("entry name length")? as usize;
        let name = std::str::from_utf8(c.take(name_len, "entry name")?).map_err(|_| WeightError::BadName)?;
        if name.is_empty() {
            return Err(WeightError::BadName);
        }
        if !seen.insert(name.to_string()) {
            return Err(WeightError::DuplicateEntry(name.to_string()));
        }
        let rank = c.u8("entry rank")? as usize;
        let dims = (0..rank)
            .map(|_| c.u32("entry dims").map(|d| d as usize))
            .collect::<Result<Vec<_>, _>>()?;
        let len = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .and_then(|n| n.checked_mul(4))
            .ok_or(WeightError::Truncated("entry payload"))?;
        let data: Vec<f32> = c
            .take(len, "entry payload")?
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect();
        match name {
            BN_EPSILON_ENTRY | BN_MOMENTUM_ENTRY if rank != 0 => {
                return Err(WeightError::ShapeMismatch {
                    name: name.to_string(),
                    expected: vec![],
                    found: dims,
                })
            }
            BN_EPSILON_ENTRY => store.bn_epsilon = data[0],
            BN_MOMENTUM_ENTRY => store.bn_momentum = data[0],
            _ => store.arrays.push(NamedArray {
                name: name.to_string(),
                dims,
                data,
            }),
        }
    }
    if c.pos != body.len() {
        return Err(WeightError::TrailingBytes(body.len() - c.pos));
    }
    Ok(store)
}

pub fn read_weight_store(path: &Path) -> Result<WeightStore> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(decode_weights(&bytes)?)
}

pub fn save_weights(net: &Network, path: &Path) -> Result<()> {
    fs::write(path, encode_weights(&net.to_store())).map_err(|e| Error::io(path, e))
}

/// Loads a weight file into a network of the given configuration. The file's
/// variant flags and class count must match the configuration.
pub fn load_weights(path: &Path, config: NetworkConfig) -> Result<Network> {
    Network::build(config, Init::Weights(read_weight_store(path)?))
}
