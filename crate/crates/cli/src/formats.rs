//! Binary sidecar formats written by the CLI stages.
//!
//! Auxiliary-target sidecar: 16-byte header (magic, version, reserved),
//! u64 point count, then 16-byte records (u32 foreground flag, 3 x f32
//! center offset), aligned index-for-index with the point-cloud file.
//!
//! Interpolated-feature file: 16-byte header, u64 count, u32 total feature
//! dim, u32 stage count, then per point `dim` f32 values followed by one
//! coverage byte per stage.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use lidarpipe_core::losses::AuxTargets;

const AUX_MAGIC: &[u8; 8] = b"LPAUXT\0\0";
const FEAT_MAGIC: &[u8; 8] = b"LPFEAT\0\0";
const VERSION: u32 = 1;

fn header(magic: &[u8; 8]) -> Vec<u8> {
    let mut bytes = Vec::with_capacity(16);
    bytes.extend_from_slice(magic);
    bytes.extend_from_slice(&VERSION.to_le_bytes());
    bytes.extend_from_slice(&0u32.to_le_bytes());
    bytes
}

pub fn write_aux_targets(targets: &AuxTargets, path: &Path) -> Result<()> {
    let mut bytes = header(AUX_MAGIC);
    bytes.extend_from_slice(&(targets.len() as u64).to_le_bytes());
    for i in 0..targets.len() {
        bytes.extend_from_slice(&(targets.s[i] as u32).to_le_bytes());
        for a in 0..3 {
            bytes.extend_from_slice(&(targets.dp[i][a] as f32).to_le_bytes());
        }
    }
    write_atomic(path, &bytes)
}

pub fn read_aux_targets(path: &Path) -> Result<(Vec<bool>, Vec<[f32; 3]>)> {
    let bytes = fs::read(path).with_context(|| path.display().to_string())?;
    if bytes.len() < 24 || &bytes[..8] != AUX_MAGIC {
        bail!("{}: not an auxiliary-target file", path.display());
    }
    let count = u64::from_le_bytes(bytes[16..24].try_into().unwrap()) as usize;
    if bytes.len() != 24 + count * 16 {
        bail!("{}: truncated auxiliary-target file", path.display());
    }
    let mut s = Vec::with_capacity(count);
    let mut dp = Vec::with_capacity(count);
    for rec in bytes[24..].chunks_exact(16) {
        s.push(u32::from_le_bytes(rec[0..4].try_into().unwrap()) != 0);
        let mut row = [0.0f32; 3];
        for (a, r) in row.iter_mut().enumerate() {
            *r = f32::from_le_bytes(rec[4 + 4 * a..8 + 4 * a].try_into().unwrap());
        }
        dp.push(row);
    }
    Ok((s, dp))
}

pub fn write_features(
    values: &[(Vec<f64>, Vec<bool>)],
    total_dim: usize,
    n_stages: usize,
    path: &Path,
) -> Result<()> {
    let mut bytes = header(FEAT_MAGIC);
    bytes.extend_from_slice(&(values.len() as u64).to_le_bytes());
    bytes.extend_from_slice(&(total_dim as u32).to_le_bytes());
    bytes.extend_from_slice(&(n_stages as u32).to_le_bytes());
    for (row, covered) in values {
        debug_assert_eq!(row.len(), total_dim);
        debug_assert_eq!(covered.len(), n_stages);
        for v in row {
            bytes.extend_from_slice(&(*v as f32).to_le_bytes());
        }
        for c in covered {
            bytes.push(*c as u8);
        }
    }
    write_atomic(path, &bytes)
}

/// Write-temp-then-rename, so partially written outputs are never visible.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).with_context(|| tmp.display().to_string())?;
    fs::rename(&tmp, path).with_context(|| path.display().to_string())?;
    Ok(())
}
