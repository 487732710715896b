//! Binary checkpoint container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic    8 bytes   "CFUCKPT\0"
//! version  u32       FORMAT_VERSION
//! hlen     u32       length of the JSON header
//! header   hlen      {"networks":[{"name","input_shape","layers","head","param_count"}]}
//! params   8 bytes × Σ param_count, f64 little-endian, networks in header order
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::layer::LayerSpec;
use super::network::{Head, Network};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"CFUCKPT\0";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    networks: Vec<Entry>,
}

#[derive(Serialize, Deserialize)]
struct Entry {
    name: String,
    input_shape: Vec<usize>,
    layers: Vec<LayerSpec>,
    head: Head,
    param_count: usize,
}

/// Serialize named networks into one checkpoint blob.
pub fn encode(networks: &[(&str, &Network)]) -> Result<Vec<u8>> {
    let header = Header {
        networks: networks
            .iter()
            .map(|(name, net)| Entry {
                name: name.to_string(),
                input_shape: net.input_shape().to_vec(),
                layers: net.layers().to_vec(),
                head: net.head(),
                param_count: net.param_count(),
            })
            .collect(),
    };
    let header = serde_json::to_vec(&header)?;
    let params: usize = networks.iter().map(|(_, n)| n.param_count()).sum();
    let mut out = Vec::with_capacity(16 + header.len() + 8 * params);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(&header);
    for (_, net) in networks {
        for p in net.params() {
            out.extend_from_slice(&p.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode(bytes: &[u8]) -> Result<Vec<(String, Network)>> {
    let take = |at: usize, n: usize| -> Result<&[u8]> {
        bytes
            .get(at..at + n)
            .ok_or_else(|| Error::Checkpoint(format!("truncated at byte {at}")))
    };
    if take(0, 8)? != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = u32::from_le_bytes(take(8, 4)?.try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let hlen = u32::from_le_bytes(take(12, 4)?.try_into().unwrap()) as usize;
    let header: Header = serde_json::from_slice(take(16, hlen)?)?;
    let mut at = 16 + hlen;
    let mut out = Vec::with_capacity(header.networks.len());
    for entry in header.networks {
        let raw = take(at, 8 * entry.param_count)?;
        at += 8 * entry.param_count;
        let params = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let net = Network::from_parts(entry.input_shape, entry.layers, entry.head, params)?;
        out.push((entry.name, net));
    }
    if at != bytes.len() {
        return Err(Error::Checkpoint(format!(
            "{} trailing bytes",
            bytes.len() - at
        )));
    }
    Ok(out)
}

pub fn save(path: &Path, networks: &[(&str, &Network)]) -> Result<()> {
    let bytes = encode(networks)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<Vec<(String, Network)>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

/// Load the network stored under `name`.
pub fn load_named(path: &Path, name: &str) -> Result<Network> {
    load(path)?
        .into_iter()
        .find(|(n, _)| n == name)
        .map(|(_, net)| net)
        .ok_or_else(|| Error::Checkpoint(format!("no network named {name:?}")))
}
