//! OOVH: little-endian binary container for heatmap stacks.
//!
//! ```text
//! offset  size  field
//! 0       4     magic "OOVH"
//! 4       4     version (u32) = 1
//! 8       4     n_channels (u32)
//! 12      4     height (u32)
//! 16      4     width (u32)
//! 20      4     s (f32)
//! 24      4*N   values (f32), channel-major, row-major within a channel
//! ```

use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::heatmap::{HeatmapError, HeatmapStack};

pub const MAGIC: [u8; 4] = *b"OOVH";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 24;

#[derive(Debug, Error)]
pub enum OovhError {
    #[error("bad magic {0:?}, expected \"OOVH\"")]
    BadMagic([u8; 4]),
    #[error("unsupported OOVH version {found} (expected {VERSION})")]
    VersionMismatch { found: u32 },
    #[error("file truncated: need {expected} bytes, have {actual}")]
    TruncatedFile { expected: usize, actual: usize },
    #[error("{0} trailing bytes after payload")]
    TrailingData(usize),
    #[error("invalid heatmap payload: {0}")]
    InvalidPayload(#[from] HeatmapError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub fn encode(stack: &HeatmapStack) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * stack.values().len());
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(stack.channels() as u32).to_le_bytes());
    out.extend_from_slice(&(stack.height() as u32).to_le_bytes());
    out.extend_from_slice(&(stack.width() as u32).to_le_bytes());
    out.extend_from_slice(&stack.scale().to_le_bytes());
    for v in stack.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

fn u32_at(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap())
}

pub fn decode(bytes: &[u8]) -> Result<HeatmapStack, OovhError> {
    if bytes.len() < 4 {
        return Err(OovhError::TruncatedFile {
            expected: HEADER_LEN,
            actual: bytes.len(),
        });
    }
    let magic: [u8; 4] = bytes[..4].try_into().unwrap();
    if magic != MAGIC {
        return Err(OovhError::BadMagic(magic));
    }
    if bytes.len() < HEADER_LEN {
        return Err(OovhError::TruncatedFile {
            expected: HEADER_LEN,
            actual: bytes.len(),
        });
    }
    let version = u32_at(bytes, 4);
    if version != VERSION {
        return Err(OovhError::VersionMismatch { found: version });
    }
    let channels = u32_at(bytes, 8) as usize;
    let height = u32_at(bytes, 12) as usize;
    let width = u32_at(bytes, 16) as usize;
    let scale = f32::from_le_bytes(bytes[20..24].try_into().unwrap());
    let count = channels
        .checked_mul(height)
        .and_then(|v| v.checked_mul(width))
        .ok_or(OovhError::TruncatedFile {
            expected: usize::MAX,
            actual: bytes.len(),
        })?;
    let expected = HEADER_LEN + 4 * count;
    if bytes.len() < expected {
        return Err(OovhError::TruncatedFile {
            expected,
            actual: bytes.len(),
        });
    }
    if bytes.len() > expected {
        return Err(OovhError::TrailingData(bytes.len() - expected));
    }
    let values = bytes[HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(HeatmapStack::new(channels, height, width, scale, values)?)
}

pub fn save_heatmaps(stack: &HeatmapStack, path: impl AsRef<Path>) -> Result<(), OovhError> {
    fs::write(path, encode(stack))?;
    Ok(())
}

pub fn load_heatmaps(path: impl AsRef<Path>) -> Result<HeatmapStack, OovhError> {
    decode(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> HeatmapStack {
        HeatmapStack::new(2, 2, 3, 0.5, vec![0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0, 0.25])
            .unwrap()
    }

    #[test]
    fn header_layout() {
        let bytes = encode(&small());
        assert_eq!(&bytes[..4], b"OOVH");
        assert_eq!(&bytes[4..8], &[1, 0, 0, 0]);
        assert_eq!(&bytes[8..12], &[2, 0, 0, 0]);
        assert_eq!(&bytes[12..16], &[2, 0, 0, 0]);
        assert_eq!(&bytes[16..20], &[3, 0, 0, 0]);
        assert_eq!(&bytes[20..24], &0.5f32.to_le_bytes());
        assert_eq!(bytes.len(), 24 + 12 * 4);
        assert_eq!(&bytes[28..32], &0.1f32.to_le_bytes());
    }

    #[test]
    fn corrupt_magic() {
        let mut bytes = encode(&small());
        bytes[0] = b'X';
        assert!(matches!(decode(&bytes), Err(OovhError::BadMagic(_))));
    }

    #[test]
    fn wrong_version() {
        let mut bytes = encode(&small());
        bytes[4] = 2;
        assert!(matches!(
            decode(&bytes),
            Err(OovhError::VersionMismatch { found: 2 })
        ));
    }

    #[test]
    fn truncated() {
        let bytes = encode(&small());
        assert!(matches!(
            decode(&bytes[..bytes.len() - 1]),
            Err(OovhError::TruncatedFile { .. })
        ));
        assert!(matches!(
            decode(&bytes[..10]),
            Err(OovhError::TruncatedFile { .. })
        ));
    }

    #[test]
    fn trailing_and_invalid() {
        let mut bytes = encode(&small());
        bytes.push(0);
        assert!(matches!(decode(&bytes), Err(OovhError::TrailingData(1))));
        let mut bytes = encode(&small());
        bytes[24..28].copy_from_slice(&2.0f32.to_le_bytes());
        assert!(matches!(decode(&bytes), Err(OovhError::InvalidPayload(_))));
    }
}
