//! Parameter file: `u64` LE header length, JSON header, then the values as
//! little-endian `f32` at the byte offsets listed in the header (relative to
//! the start of the data block).

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::net::{DenoiserNet, NetConfig};
use crate::error::{Error, Result};
use crate::tensor::{ParamSet, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamHeader {
    pub format: String,
    pub net: NetConfig,
    pub entries: Vec<ParamEntry>,
}

const FORMAT: &str = "specrecon-params-f32le-v1";

pub fn encode_params(net: &DenoiserNet) -> Result<Vec<u8>> {
    let mut entries = Vec::new();
    let mut data = Vec::new();
    for (name, t) in net.params.iter() {
        entries.push(ParamEntry { name: name.to_string(), shape: t.shape().to_vec(), offset: data.len() });
        for &v in t.data() {
            data.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    let header = serde_json::to_vec(&ParamHeader { format: FORMAT.into(), net: net.config, entries })?;
    let mut out = Vec::with_capacity(8 + header.len() + data.len());
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    out.extend_from_slice(&data);
    Ok(out)
}

pub fn decode_params(bytes: &[u8]) -> Result<DenoiserNet> {
    let bad = |m: String| Error::Integrity(format!("parameter file: {m}"));
    let len_bytes: [u8; 8] = bytes.get(..8).ok_or_else(|| bad("truncated header length".into()))?.try_into().expect("8 bytes");
    let hlen = usize::try_from(u64::from_le_bytes(len_bytes)).map_err(|_| bad("header length overflows".into()))?;
    let header_end = 8usize.checked_add(hlen).filter(|&e| e <= bytes.len()).ok_or_else(|| bad("truncated header".into()))?;
    let header: ParamHeader = serde_json::from_slice(&bytes[8..header_end])?;
    if header.format != FORMAT {
        return Err(bad(format!("unknown format `{}`", header.format)));
    }
    let data = &bytes[header_end..];
    let mut net = DenoiserNet::new(header.net)?;
    let mut seen = ParamSet::new();
    for e in &header.entries {
        let n: usize = e.shape.iter().product();
        let chunk = data.get(e.offset..e.offset + 4 * n).ok_or_else(|| bad(format!("`{}` runs past the data block", e.name)))?;
        let values = chunk.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64).collect();
        let t = Tensor::new(e.shape.clone(), values)?;
        net.params.assign(&e.name, t.clone())?;
        seen.insert(e.name.clone(), t)?;
    }
    if seen.len() != net.params.len() {
        return Err(bad(format!("{} of {} parameters present", seen.len(), net.params.len())));
    }
    Ok(net)
}

pub fn save_params(net: &DenoiserNet, path: &Path) -> Result<()> {
    std::fs::write(path, encode_params(net)?).map_err(|e| Error::io(path, e))
}

pub fn load_params(path: &Path) -> Result<DenoiserNet> {
    decode_params(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
}
