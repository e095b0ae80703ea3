use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::attention::FeatureGrid;
use crate::error::{Error, Result};
use crate::geometry::Homography;
use crate::numerics::Matrix;
use crate::synthdata::pair::SceneSample;
use crate::weightgen::BBox;

const BLOB_MAGIC: &[u8; 8] = b"MDGRID01";
pub const MANIFEST_FILE: &str = "manifest.jsonl";

/// Blob layout: magic, then `h`, `w`, `c` as little-endian `u64`, then
/// `h * w * c` little-endian `f64` values in row-major order.
pub fn write_grid_blob(path: &Path, grid: &FeatureGrid) -> Result<()> {
    let mut f = BufWriter::new(File::create(path)?);
    f.write_all(BLOB_MAGIC)?;
    for d in [grid.height(), grid.width(), grid.channels()] {
        f.write_all(&(d as u64).to_le_bytes())?;
    }
    for v in grid.values().data() {
        f.write_all(&v.to_le_bytes())?;
    }
    f.flush()?;
    Ok(())
}

pub fn read_grid_blob(path: &Path) -> Result<FeatureGrid> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    let bad = |m: &str| Error::Format(format!("{}: {m}", path.display()));
    if bytes.len() < 32 || &bytes[..8] != BLOB_MAGIC {
        return Err(bad("not a grid blob"));
    }
    let dim = |k: usize| {
        let mut b = [0u8; 8];
        b.copy_from_slice(&bytes[8 + 8 * k..16 + 8 * k]);
        usize::try_from(u64::from_le_bytes(b)).map_err(|_| bad("dimension overflow"))
    };
    let (h, w, c) = (dim(0)?, dim(1)?, dim(2)?);
    let n = h
        .checked_mul(w)
        .and_then(|x| x.checked_mul(c))
        .ok_or_else(|| bad("dimension overflow"))?;
    if bytes.len() != 32 + 8 * n {
        return Err(bad("payload length does not match the header"));
    }
    let data = bytes[32..]
        .chunks_exact(8)
        .map(|ch| f64::from_le_bytes(ch.try_into().expect("8-byte chunk")))
        .collect();
    FeatureGrid::new(h, w, Matrix::from_vec(h * w, c, data)?)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct ManifestLine {
    id: usize,
    ref_grid: String,
    tgt_grid: String,
    h_gt: Homography,
    boxes_r: Vec<BBox>,
    boxes_t: Vec<BBox>,
    visible: Vec<bool>,
    gt_matches: Vec<(usize, usize)>,
}

/// Writes `manifest.jsonl` plus one blob per grid under `dir`.
pub fn write_manifest(dir: &Path, samples: &[SceneSample]) -> Result<()> {
    fs::create_dir_all(dir.join("grids"))?;
    let mut out = BufWriter::new(File::create(dir.join(MANIFEST_FILE))?);
    for (id, s) in samples.iter().enumerate() {
        let line = ManifestLine {
            id,
            ref_grid: format!("grids/{id:05}_ref.bin"),
            tgt_grid: format!("grids/{id:05}_tgt.bin"),
            h_gt: s.h_gt,
            boxes_r: s.boxes_r.clone(),
            boxes_t: s.boxes_t.clone(),
            visible: s.visible.clone(),
            gt_matches: s.gt_matches.clone(),
        };
        write_grid_blob(&dir.join(&line.ref_grid), &s.ref_grid)?;
        write_grid_blob(&dir.join(&line.tgt_grid), &s.tgt_grid)?;
        serde_json::to_writer(&mut out, &line)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_manifest(dir: &Path) -> Result<Vec<SceneSample>> {
    let f = BufReader::new(File::open(dir.join(MANIFEST_FILE))?);
    let mut out = Vec::new();
    for line in f.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let m: ManifestLine = serde_json::from_str(&line)?;
        out.push(SceneSample {
            ref_grid: read_grid_blob(&dir.join(&m.ref_grid))?,
            tgt_grid: read_grid_blob(&dir.join(&m.tgt_grid))?,
            h_gt: m.h_gt,
            boxes_r: m.boxes_r,
            boxes_t: m.boxes_t,
            visible: m.visible,
            gt_matches: m.gt_matches,
        });
    }
    Ok(out)
}
