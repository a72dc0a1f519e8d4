//! Binary model files.
//!
//! Layout (little endian): 8-byte magic, u32 format version, u32 feature
//! schema version, u64 payload length, u32 CRC-32 of the payload, payload.
//! The payload is the bincode encoding of [`TrainedMetaModel`].

use thiserror::Error;

use super::TrainedMetaModel;
use crate::features::FEATURE_SCHEMA_VERSION;

pub const MAGIC: [u8; 8] = *b"OPESELMM";
pub const FORMAT_VERSION: u32 = 1;
const HEADER_LEN: usize = 8 + 4 + 4 + 8 + 4;

#[derive(Debug, Error)]
pub enum PersistError {
    #[error("not a model file (bad magic bytes)")]
    Magic,
    #[error("model file format version {found} is not supported (expected {expected})")]
    FormatVersion { found: u32, expected: u32 },
    #[error("model feature schema version {found} does not match this build's version {expected}")]
    SchemaVersion { found: u32, expected: u32 },
    #[error("model file is truncated or corrupt (checksum mismatch)")]
    Checksum,
    #[error("model encoding: {0}")]
    Encoding(String),
}

pub fn serialize(model: &TrainedMetaModel) -> Result<Vec<u8>, PersistError> {
    let payload = bincode::serialize(model).map_err(|e| PersistError::Encoding(e.to_string()))?;
    let mut out = Vec::with_capacity(HEADER_LEN + payload.len());
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&model.schema_version.to_le_bytes());
    out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
    out.extend_from_slice(&crc32fast::hash(&payload).to_le_bytes());
    out.extend_from_slice(&payload);
    Ok(out)
}

pub fn deserialize(bytes: &[u8]) -> Result<TrainedMetaModel, PersistError> {
    if bytes.len() < 8 || bytes[..8] != MAGIC {
        return Err(PersistError::Magic);
    }
    if bytes.len() < HEADER_LEN {
        return Err(PersistError::Checksum);
    }
    let u32_at = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
    let format = u32_at(8);
    if format != FORMAT_VERSION {
        return Err(PersistError::FormatVersion { found: format, expected: FORMAT_VERSION });
    }
    let schema = u32_at(12);
    if schema != FEATURE_SCHEMA_VERSION {
        return Err(PersistError::SchemaVersion { found: schema, expected: FEATURE_SCHEMA_VERSION });
    }
    let len = u64::from_le_bytes(bytes[16..24].try_into().unwrap());
    let crc = u32_at(24);
    let payload = &bytes[HEADER_LEN..];
    if payload.len() as u64 != len || crc32fast::hash(payload) != crc {
        return Err(PersistError::Checksum);
    }
    let model: TrainedMetaModel = bincode::deserialize(payload).map_err(|e| PersistError::Encoding(e.to_string()))?;
    if model.schema_version != schema {
        return Err(PersistError::SchemaVersion { found: model.schema_version, expected: FEATURE_SCHEMA_VERSION });
    }
    Ok(model)
}

pub fn save(model: &TrainedMetaModel, path: &std::path::Path) -> Result<(), std::io::Error> {
    let bytes = serialize(model).map_err(std::io::Error::other)?;
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(tmp, path)
}

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("cannot read model file: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Persist(#[from] PersistError),
}

pub fn load(path: &std::path::Path) -> Result<TrainedMetaModel, LoadError> {
    Ok(deserialize(&std::fs::read(path)?)?)
}
