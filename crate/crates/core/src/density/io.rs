//! CDM1 density files and points JSON files.
//!
//! CDM1 layout (little-endian): `b"CDM1"`, `u32` height, `u32` width, then
//! `height * width` `f32` values in row-major order.

use std::fs;
use std::path::Path;

use super::grid::DensityGrid;
use super::mosaic::MosaicManifest;
use super::raster::InstancePointList;
use crate::error::{Error, Result};

pub const CDM1_MAGIC: &[u8; 4] = b"CDM1";
const HEADER_LEN: usize = 12;

pub fn encode_cdm1(grid: &DensityGrid) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * grid.values().len());
    out.extend_from_slice(CDM1_MAGIC);
    out.extend_from_slice(&(grid.height() as u32).to_le_bytes());
    out.extend_from_slice(&(grid.width() as u32).to_le_bytes());
    for &v in grid.values() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

pub fn decode_cdm1(bytes: &[u8]) -> Result<DensityGrid> {
    if bytes.len() < HEADER_LEN || &bytes[..4] != CDM1_MAGIC {
        return Err(Error::InvalidGrid("missing CDM1 header".into()));
    }
    let height = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let width = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let expected = height
        .checked_mul(width)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| Error::InvalidGrid("CDM1 dimensions overflow".into()))?;
    let body = &bytes[HEADER_LEN..];
    if body.len() != expected {
        return Err(Error::InvalidGrid(format!(
            "CDM1 body for {height}x{width} should be {expected} bytes, found {}",
            body.len()
        )));
    }
    let values = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    DensityGrid::new(height, width, values)
}

pub fn read_cdm1(path: &Path) -> Result<DensityGrid> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_cdm1(&bytes).map_err(|e| Error::parse(path, e))
}

pub fn write_cdm1(path: &Path, grid: &DensityGrid) -> Result<()> {
    fs::write(path, encode_cdm1(grid)).map_err(|e| Error::io(path, e))
}

pub fn read_points(path: &Path) -> Result<InstancePointList> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let points: InstancePointList =
        serde_json::from_str(&text).map_err(|e| Error::parse(path, e))?;
    points.validate().map_err(|e| Error::parse(path, e))?;
    Ok(points)
}

pub fn write_points(path: &Path, points: &InstancePointList) -> Result<()> {
    let text = serde_json::to_string(points).expect("point lists serialize");
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_mosaic_manifests(path: &Path) -> Result<Vec<MosaicManifest>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let manifests: Vec<MosaicManifest> =
        serde_json::from_str(&text).map_err(|e| Error::parse(path, e))?;
    for m in &manifests {
        m.validate().map_err(|e| Error::parse(path, e))?;
    }
    Ok(manifests)
}

pub fn write_mosaic_manifests(path: &Path, manifests: &[MosaicManifest]) -> Result<()> {
    let text = serde_json::to_string_pretty(manifests).expect("manifests serialize");
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}
