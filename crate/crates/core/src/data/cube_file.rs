//! Binary cube files.
//!
//! Layout, all integers little-endian:
//!
//! | bytes        | content                                   |
//! |--------------|-------------------------------------------|
//! | `0..4`       | magic `HSC1`                              |
//! | `4..8`       | `u32` length `n` of the JSON header        |
//! | `8..8+n`     | UTF-8 JSON [`CubeHeader`]                 |
//! | `8+n..`      | `f32` values, band-last (y, then x, band) |
//!
//! The payload must hold exactly `4·h·w·M` bytes.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{BandGrid, SpectralCube};

pub const CUBE_MAGIC: &str = "HSC1";
const PREFIX: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueKind {
    Radiance,
    Reflectance,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CubeHeader {
    pub magic: String,
    pub height: usize,
    pub width: usize,
    pub grid: BandGrid,
    pub kind: ValueKind,
    pub scene_id: String,
    #[serde(default)]
    pub illuminant_cct: Option<f64>,
    /// Illuminant SPD on `grid`, when known.
    #[serde(default)]
    pub illuminant: Option<Vec<f64>>,
}

impl CubeHeader {
    pub fn for_cube(cube: &SpectralCube, kind: ValueKind, scene_id: impl Into<String>) -> Self {
        CubeHeader {
            magic: CUBE_MAGIC.to_string(),
            height: cube.height(),
            width: cube.width(),
            grid: *cube.grid(),
            kind,
            scene_id: scene_id.into(),
            illuminant_cct: None,
            illuminant: None,
        }
    }
}

fn format_err(offset: usize, msg: impl Into<String>) -> Error {
    Error::Format {
        offset: offset as u64,
        msg: msg.into(),
    }
}

/// Serializes a cube; the header's shape fields must describe `cube`.
pub fn encode_cube(header: &CubeHeader, cube: &SpectralCube) -> Result<Vec<u8>> {
    if header.magic != CUBE_MAGIC
        || (header.height, header.width, header.grid) != (cube.height(), cube.width(), *cube.grid())
    {
        return Err(Error::Contract("cube header does not describe the cube".into()));
    }
    if let Some(l) = &header.illuminant {
        if l.len() != header.grid.count() {
            return Err(Error::Contract("illuminant length differs from band count".into()));
        }
    }
    let json = serde_json::to_vec(header)?;
    let mut out = Vec::with_capacity(PREFIX + json.len() + 4 * cube.values().len());
    out.extend_from_slice(CUBE_MAGIC.as_bytes());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for v in cube.values() {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    Ok(out)
}

/// Parses a cube; any inconsistency is an error naming the byte offset.
pub fn decode_cube(bytes: &[u8]) -> Result<(CubeHeader, SpectralCube)> {
    if bytes.len() < 4 {
        return Err(format_err(bytes.len(), "file ends inside the magic"));
    }
    if &bytes[..4] != CUBE_MAGIC.as_bytes() {
        return Err(format_err(0, "bad magic"));
    }
    if bytes.len() < PREFIX {
        return Err(format_err(bytes.len(), "file ends inside the header length"));
    }
    let header_len = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes")) as usize;
    let payload_at = PREFIX
        .checked_add(header_len)
        .filter(|&end| end <= bytes.len())
        .ok_or_else(|| format_err(bytes.len(), format!("file ends inside the {header_len}-byte header")))?;
    let header: CubeHeader = serde_json::from_slice(&bytes[PREFIX..payload_at])
        .map_err(|e| format_err(PREFIX + e.column().saturating_sub(1), format!("header: {e}")))?;
    if header.magic != CUBE_MAGIC {
        return Err(format_err(PREFIX, format!("header magic `{}`", header.magic)));
    }
    // Re-validate the grid; deserialization bypasses the constructor.
    BandGrid::new(header.grid.start_nm(), header.grid.step_nm(), header.grid.count())
        .map_err(|e| format_err(PREFIX, e.to_string()))?;
    if header.illuminant.as_ref().is_some_and(|l| l.len() != header.grid.count()) {
        return Err(format_err(PREFIX, "illuminant length differs from band count"));
    }
    let n = header
        .height
        .checked_mul(header.width)
        .and_then(|p| p.checked_mul(header.grid.count()))
        .filter(|&n| n > 0)
        .ok_or_else(|| format_err(PREFIX, "header dimensions are empty or overflow"))?;
    let payload = &bytes[payload_at..];
    if payload.len() != 4 * n {
        let at = payload_at + payload.len().min(4 * n);
        return Err(format_err(
            at,
            format!("payload holds {} bytes, header implies {}", payload.len(), 4 * n),
        ));
    }
    let mut values = Vec::with_capacity(n);
    for (i, chunk) in payload.chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(chunk.try_into().expect("4 bytes"));
        if !v.is_finite() || v < 0.0 {
            return Err(format_err(payload_at + 4 * i, format!("invalid value {v}")));
        }
        values.push(v as f64);
    }
    let cube = SpectralCube::new(header.grid, header.height, header.width, values)?;
    Ok((header, cube))
}

pub fn write_cube(path: impl AsRef<Path>, header: &CubeHeader, cube: &SpectralCube) -> Result<()> {
    std::fs::write(path, encode_cube(header, cube)?)?;
    Ok(())
}

pub fn read_cube(path: impl AsRef<Path>) -> Result<(CubeHeader, SpectralCube)> {
    decode_cube(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> (CubeHeader, SpectralCube) {
        let grid = BandGrid::new(420.0, 10.0, 3).unwrap();
        let cube = SpectralCube::from_fn(grid, 2, 2, |y, x, b| (y * 6 + x * 3 + b) as f64 * 0.1).unwrap();
        let header = CubeHeader::for_cube(&cube, ValueKind::Radiance, "s0");
        (header, cube)
    }

    #[test]
    fn round_trip() {
        let (h, c) = sample();
        let bytes = encode_cube(&h, &c).unwrap();
        let (h2, c2) = decode_cube(&bytes).unwrap();
        assert_eq!(h, h2);
        for (a, b) in c.values().iter().zip(c2.values()) {
            assert_eq!(*a as f32, *b as f32);
        }
    }

    #[test]
    fn payload_size_arithmetic() {
        let (h, c) = sample();
        let bytes = encode_cube(&h, &c).unwrap();
        let header_end = bytes.len() - 48;
        assert!(decode_cube(&bytes).is_ok());
        let err = decode_cube(&bytes[..header_end + 44]).unwrap_err();
        match err {
            Error::Format { offset, .. } => assert_eq!(offset as usize, header_end + 44),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn bad_magic_and_truncation() {
        let (h, c) = sample();
        let mut bytes = encode_cube(&h, &c).unwrap();
        assert!(matches!(decode_cube(&bytes[..6]), Err(Error::Format { offset: 6, .. })));
        assert!(matches!(decode_cube(&bytes[..20]), Err(Error::Format { .. })));
        bytes[0] = b'X';
        assert!(matches!(decode_cube(&bytes), Err(Error::Format { offset: 0, .. })));
        assert!(decode_cube(&[]).is_err());
    }

    #[test]
    fn header_magic_must_match() {
        let (mut h, c) = sample();
        h.magic = "HSC2".into();
        let json = serde_json::to_vec(&h).unwrap();
        let mut bytes = b"HSC1".to_vec();
        bytes.extend_from_slice(&(json.len() as u32).to_le_bytes());
        bytes.extend_from_slice(&json);
        bytes.extend(c.values().iter().flat_map(|v| (*v as f32).to_le_bytes()));
        assert!(matches!(decode_cube(&bytes), Err(Error::Format { offset: 8, .. })));
    }

    #[test]
    fn negative_value_reports_its_offset() {
        let (h, c) = sample();
        let mut bytes = encode_cube(&h, &c).unwrap();
        let at = bytes.len() - 4;
        bytes[at..].copy_from_slice(&(-1.0f32).to_le_bytes());
        assert!(matches!(decode_cube(&bytes), Err(Error::Format { offset, .. }) if offset as usize == at));
    }
}
