//! Versioned checkpoint files for trained models.
//!
//! Layout: the magic line `VPSYNTH-CKPT 1`, one line of JSON header, then every
//! parameter as a little-endian `f64`, tensors in header order. The header
//! records the model kind, domain, configuration, tensor names and shapes, and
//! for puzzle models the input channel and feature maps, which must match the
//! running build for the checkpoint to load.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use vpsynth_core::dsl::Domain;
use vpsynth_core::nn::{Params, Tensor};
use vpsynth_core::policies::{
    channel_map, feature_map, CodeModel, CodeModelConfig, PuzzleModel, PuzzleModelConfig,
};

pub const MAGIC: &str = "VPSYNTH-CKPT";
pub const VERSION: u32 = 1;

// Rebuilding a model to compare layouts allocates from the stored config, so
// absurd widths are refused up front.
const MAX_WIDTH: usize = 1024;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("not a checkpoint (bad magic line)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("bad header: {0}")]
    Header(String),
    #[error("expected a {expected} checkpoint, found {found}")]
    Kind {
        expected: &'static str,
        found: String,
    },
    #[error("tensor data holds {found} bytes, header needs {expected}")]
    Length { expected: usize, found: usize },
    #[error("checkpoint does not match this build: {0}")]
    Mismatch(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
struct TensorHeader {
    name: String,
    shape: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
struct Header {
    kind: String,
    domain: Domain,
    config: serde_json::Value,
    #[serde(default)]
    channel_map: Vec<String>,
    #[serde(default)]
    feature_map: Vec<String>,
    tensors: Vec<TensorHeader>,
}

fn encode(header: &Header, params: &Params) -> Vec<u8> {
    let mut out = format!("{MAGIC} {VERSION}\n").into_bytes();
    out.extend(serde_json::to_vec(header).expect("headers serialize"));
    out.push(b'\n');
    for t in &params.tensors {
        for v in &t.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

fn line(bytes: &[u8]) -> Result<(&[u8], &[u8]), CheckpointError> {
    let i = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or(CheckpointError::BadMagic)?;
    Ok((&bytes[..i], &bytes[i + 1..]))
}

fn decode(bytes: &[u8], kind: &'static str) -> Result<(Header, Params), CheckpointError> {
    let (magic, rest) = line(bytes)?;
    let magic = std::str::from_utf8(magic).map_err(|_| CheckpointError::BadMagic)?;
    let version = magic
        .strip_prefix(MAGIC)
        .and_then(|v| v.trim().parse::<u32>().ok())
        .ok_or(CheckpointError::BadMagic)?;
    if version != VERSION {
        return Err(CheckpointError::Version(version));
    }
    let (head, data) =
        line(rest).map_err(|_| CheckpointError::Header("missing header line".into()))?;
    let header: Header =
        serde_json::from_slice(head).map_err(|e| CheckpointError::Header(e.to_string()))?;
    if header.kind != kind {
        return Err(CheckpointError::Kind {
            expected: kind,
            found: header.kind,
        });
    }
    let sizes: Vec<usize> = header
        .tensors
        .iter()
        .map(|t| t.shape.iter().product())
        .collect();
    let expected = sizes.iter().sum::<usize>() * 8;
    if data.len() != expected {
        return Err(CheckpointError::Length {
            expected,
            found: data.len(),
        });
    }
    let mut values = data
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")));
    let tensors = header
        .tensors
        .iter()
        .zip(&sizes)
        .map(|(t, &n)| Tensor {
            name: t.name.clone(),
            shape: t.shape.clone(),
            data: values.by_ref().take(n).collect(),
        })
        .collect();
    Ok((header, Params { tensors }))
}

fn check_layout(fresh: &Params, loaded: &Params) -> Result<(), CheckpointError> {
    if fresh.tensors.len() != loaded.tensors.len() {
        return Err(CheckpointError::Mismatch(format!(
            "{} tensors expected, {} stored",
            fresh.tensors.len(),
            loaded.tensors.len()
        )));
    }
    for (a, b) in fresh.tensors.iter().zip(&loaded.tensors) {
        if a.name != b.name || a.shape != b.shape {
            return Err(CheckpointError::Mismatch(format!(
                "tensor {} {:?} vs stored {} {:?}",
                a.name, a.shape, b.name, b.shape
            )));
        }
    }
    Ok(())
}

fn headers(params: &Params) -> Vec<TensorHeader> {
    params
        .tensors
        .iter()
        .map(|t| TensorHeader {
            name: t.name.clone(),
            shape: t.shape.clone(),
        })
        .collect()
}

fn strings(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

pub fn code_to_bytes(m: &CodeModel) -> Vec<u8> {
    let header = Header {
        kind: "code".into(),
        domain: m.domain,
        config: serde_json::to_value(m.config).expect("configs serialize"),
        channel_map: Vec::new(),
        feature_map: Vec::new(),
        tensors: headers(&m.params),
    };
    encode(&header, &m.params)
}

pub fn code_from_bytes(bytes: &[u8]) -> Result<CodeModel, CheckpointError> {
    let (h, params) = decode(bytes, "code")?;
    let config: CodeModelConfig =
        serde_json::from_value(h.config).map_err(|e| CheckpointError::Header(e.to_string()))?;
    if [config.embed, config.hidden]
        .iter()
        .any(|&w| w == 0 || w > MAX_WIDTH)
    {
        return Err(CheckpointError::Header("layer width out of range".into()));
    }
    check_layout(&CodeModel::new(h.domain, config, 0).params, &params)?;
    Ok(CodeModel {
        domain: h.domain,
        config,
        params,
    })
}

pub fn puzzle_to_bytes(m: &PuzzleModel) -> Vec<u8> {
    let header = Header {
        kind: "puzzle".into(),
        domain: m.domain,
        config: serde_json::to_value(&m.config).expect("configs serialize"),
        channel_map: strings(channel_map(m.domain)),
        feature_map: strings(feature_map(m.domain)),
        tensors: headers(&m.params),
    };
    encode(&header, &m.params)
}

pub fn puzzle_from_bytes(bytes: &[u8]) -> Result<PuzzleModel, CheckpointError> {
    let (h, params) = decode(bytes, "puzzle")?;
    let config: PuzzleModelConfig =
        serde_json::from_value(h.config).map_err(|e| CheckpointError::Header(e.to_string()))?;
    if h.channel_map != strings(channel_map(h.domain))
        || h.feature_map != strings(feature_map(h.domain))
    {
        return Err(CheckpointError::Mismatch(
            "input channel or feature map differs".into(),
        ));
    }
    if config.side == 0 || !config.side.is_multiple_of(8) || config.side > MAX_WIDTH {
        return Err(CheckpointError::Header(format!(
            "grid side {} is not a positive multiple of 8",
            config.side
        )));
    }
    if config
        .conv
        .iter()
        .chain(&config.dense)
        .chain([&config.shared])
        .any(|&w| w == 0 || w > MAX_WIDTH)
    {
        return Err(CheckpointError::Header("layer width out of range".into()));
    }
    check_layout(
        &PuzzleModel::new(h.domain, config.clone(), 0).params,
        &params,
    )?;
    Ok(PuzzleModel {
        domain: h.domain,
        config,
        params,
    })
}

pub fn save_code(path: &Path, m: &CodeModel) -> Result<(), CheckpointError> {
    Ok(fs::write(path, code_to_bytes(m))?)
}

pub fn load_code(path: &Path) -> Result<CodeModel, CheckpointError> {
    code_from_bytes(&fs::read(path)?)
}

pub fn save_puzzle(path: &Path, m: &PuzzleModel) -> Result<(), CheckpointError> {
    Ok(fs::write(path, puzzle_to_bytes(m))?)
}

pub fn load_puzzle(path: &Path) -> Result<PuzzleModel, CheckpointError> {
    puzzle_from_bytes(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use vpsynth_core::policies::{mini_code_config, mini_puzzle_config};

    #[test]
    fn round_trips_are_bit_exact() {
        for d in Domain::ALL {
            let c = CodeModel::new(d, mini_code_config(), 4);
            assert_eq!(code_from_bytes(&code_to_bytes(&c)).unwrap(), c);
            let p = PuzzleModel::new(d, mini_puzzle_config(), 4);
            assert_eq!(puzzle_from_bytes(&puzzle_to_bytes(&p)).unwrap(), p);
        }
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let c = CodeModel::new(Domain::Karel, mini_code_config(), 1);
        let bytes = code_to_bytes(&c);
        assert!(matches!(
            code_from_bytes(b"hello\n"),
            Err(CheckpointError::BadMagic)
        ));
        assert!(matches!(
            code_from_bytes(&bytes[..bytes.len() - 3]),
            Err(CheckpointError::Length { .. })
        ));
        assert!(matches!(
            puzzle_from_bytes(&bytes),
            Err(CheckpointError::Kind { .. })
        ));
        let v2 = String::from_utf8_lossy(&bytes).replacen("CKPT 1", "CKPT 2", 1);
        assert!(matches!(
            code_from_bytes(v2.as_bytes()),
            Err(CheckpointError::Version(2))
        ));
    }
}
