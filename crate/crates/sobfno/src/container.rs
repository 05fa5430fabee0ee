//! Binary container shared by datasets and checkpoints.
//!
//! Layout: 8 magic bytes, a little-endian `u64` header length, a JSON
//! header, then `payload_len` little-endian `f64` values. The header carries
//! the format version, a kind tag, the payload length, its SHA-256 and
//! kind-specific metadata.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MAGIC: [u8; 8] = *b"SOBFNO\0\x01";
pub const FORMAT_VERSION: u32 = 1;

/// Headers larger than this are treated as corruption.
const MAX_HEADER: u64 = 1 << 24;

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("not a sobfno file (bad magic bytes)")]
    BadMagic,
    #[error("malformed file: {0}")]
    Malformed(String),
    #[error("format version {found} is not supported (expected {supported})")]
    Version { found: u32, supported: u32 },
    #[error("payload checksum mismatch: header says {expected}, data hashes to {actual}")]
    Checksum { expected: String, actual: String },
    #[error("expected a {expected} file, found {found}")]
    WrongKind { expected: String, found: String },
    #[error(transparent)]
    Core(#[from] sobfno_core::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub format_version: u32,
    pub kind: String,
    pub payload_len: u64,
    pub payload_sha256: String,
    pub meta: serde_json::Value,
}

fn payload_bytes(payload: &[f64]) -> Vec<u8> {
    payload.iter().flat_map(|v| v.to_le_bytes()).collect()
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn write_to(mut w: impl Write, kind: &str, meta: &impl Serialize, payload: &[f64]) -> Result<(), FormatError> {
    let bytes = payload_bytes(payload);
    let header = Header {
        format_version: FORMAT_VERSION,
        kind: kind.to_owned(),
        payload_len: payload.len() as u64,
        payload_sha256: sha256_hex(&bytes),
        meta: serde_json::to_value(meta).map_err(|e| FormatError::Malformed(e.to_string()))?,
    };
    let json = serde_json::to_vec(&header).map_err(|e| FormatError::Malformed(e.to_string()))?;
    w.write_all(&MAGIC)?;
    w.write_all(&(json.len() as u64).to_le_bytes())?;
    w.write_all(&json)?;
    w.write_all(&bytes)?;
    w.flush()?;
    Ok(())
}

pub fn write_file(path: &Path, kind: &str, meta: &impl Serialize, payload: &[f64]) -> Result<(), FormatError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    write_to(BufWriter::new(File::create(path)?), kind, meta, payload)
}

fn truncated(e: io::Error, what: &str) -> FormatError {
    if e.kind() == io::ErrorKind::UnexpectedEof {
        FormatError::Malformed(format!("truncated {what}"))
    } else {
        FormatError::Io(e)
    }
}

/// Reads and verifies a container, returning its header and payload.
pub fn read_from(mut r: impl Read) -> Result<(Header, Vec<f64>), FormatError> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(|e| truncated(e, "magic"))?;
    if magic != MAGIC {
        return Err(FormatError::BadMagic);
    }
    let mut len = [0u8; 8];
    r.read_exact(&mut len).map_err(|e| truncated(e, "header length"))?;
    let len = u64::from_le_bytes(len);
    if len > MAX_HEADER {
        return Err(FormatError::Malformed(format!("header length {len} is implausible")));
    }
    let mut json = vec![0u8; len as usize];
    r.read_exact(&mut json).map_err(|e| truncated(e, "header"))?;
    // Check the version before the full schema so old and future files get
    // a version diagnostic rather than a parse error.
    let raw: serde_json::Value =
        serde_json::from_slice(&json).map_err(|e| FormatError::Malformed(format!("header is not JSON: {e}")))?;
    match raw.get("format_version").and_then(|v| v.as_u64()) {
        Some(v) if v == u64::from(FORMAT_VERSION) => {}
        Some(v) => {
            return Err(FormatError::Version {
                found: u32::try_from(v).unwrap_or(u32::MAX),
                supported: FORMAT_VERSION,
            })
        }
        None => return Err(FormatError::Malformed("header lacks format_version".into())),
    }
    let header: Header =
        serde_json::from_value(raw).map_err(|e| FormatError::Malformed(format!("bad header: {e}")))?;
    let byte_len = header
        .payload_len
        .checked_mul(8)
        .ok_or_else(|| FormatError::Malformed("payload length overflows".into()))?;
    let mut bytes = Vec::new();
    r.by_ref().take(byte_len).read_to_end(&mut bytes)?;
    if (bytes.len() as u64) < byte_len {
        return Err(FormatError::Malformed(format!(
            "payload truncated: expected {byte_len} bytes, found {}",
            bytes.len()
        )));
    }
    let mut extra = [0u8; 1];
    if r.read(&mut extra)? != 0 {
        return Err(FormatError::Malformed("trailing bytes after payload".into()));
    }
    let actual = sha256_hex(&bytes);
    if actual != header.payload_sha256 {
        return Err(FormatError::Checksum {
            expected: header.payload_sha256,
            actual,
        });
    }
    let payload = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    Ok((header, payload))
}

pub fn read_file(path: &Path) -> Result<(Header, Vec<f64>), FormatError> {
    read_from(BufReader::new(File::open(path)?))
}

/// Reads a container of the given kind and decodes its metadata.
pub fn read_kind<M: DeserializeOwned>(path: &Path, kind: &str) -> Result<(M, Vec<f64>), FormatError> {
    let (header, payload) = read_file(path)?;
    if header.kind != kind {
        return Err(FormatError::WrongKind {
            expected: kind.into(),
            found: header.kind,
        });
    }
    let meta = serde_json::from_value(header.meta).map_err(|e| FormatError::Malformed(format!("bad {kind} metadata: {e}")))?;
    Ok((meta, payload))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn encode(payload: &[f64]) -> Vec<u8> {
        let mut buf = Vec::new();
        write_to(&mut buf, "test", &serde_json::json!({"a": 1}), payload).unwrap();
        buf
    }

    #[test]
    fn round_trip_preserves_bits() {
        let payload = [0.0, -0.0, 1.5, f64::MIN_POSITIVE, -3.25e300, f64::EPSILON];
        let (h, back) = read_from(encode(&payload).as_slice()).unwrap();
        assert_eq!(h.kind, "test");
        assert_eq!(h.payload_len, 6);
        for (a, b) in payload.iter().zip(&back) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn detects_corruption() {
        let buf = encode(&[1.0, 2.0, 3.0]);
        let mut flipped = buf.clone();
        *flipped.last_mut().unwrap() ^= 1;
        assert!(matches!(read_from(flipped.as_slice()), Err(FormatError::Checksum { .. })));
        assert!(matches!(read_from(&buf[..buf.len() - 3]), Err(FormatError::Malformed(_))));
        let mut longer = buf.clone();
        longer.push(0);
        assert!(matches!(read_from(longer.as_slice()), Err(FormatError::Malformed(_))));
        let mut magic = buf.clone();
        magic[0] = b'X';
        assert!(matches!(read_from(magic.as_slice()), Err(FormatError::BadMagic)));
        assert!(matches!(read_from(&buf[..4]), Err(FormatError::Malformed(_))));
    }

    #[test]
    fn rejects_other_versions() {
        let buf = encode(&[1.0]);
        let text = String::from_utf8_lossy(&buf[16..]).into_owned();
        let hlen = u64::from_le_bytes(buf[8..16].try_into().unwrap()) as usize;
        let header = &text[..hlen];
        let bumped = header.replace("\"format_version\":1", "\"format_version\":7");
        let mut out = MAGIC.to_vec();
        out.extend((bumped.len() as u64).to_le_bytes());
        out.extend(bumped.as_bytes());
        out.extend(&buf[16 + hlen..]);
        assert!(matches!(read_from(out.as_slice()), Err(FormatError::Version { found: 7, supported: 1 })));
    }
}
