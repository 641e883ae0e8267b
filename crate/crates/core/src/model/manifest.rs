use std::collections::HashMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{
    read_gray_image, write_gray_png, HyperspectralLightField, SpectralBand, SpectralImage,
    ViewIndex,
};
use crate::error::{HlfError, Result};

/// JSON dataset description. `file` paths are relative to the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub grid_rows: usize,
    pub grid_cols: usize,
    pub baseline: f64,
    pub disparity_range: [f64; 2],
    pub label_count: usize,
    pub views: Vec<ManifestView>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestView {
    pub s: usize,
    pub t: usize,
    pub center_nm: f64,
    pub file: PathBuf,
}

/// Loads and validates an H-LF dataset. Every invariant is checked before
/// returning; errors name the offending cell.
pub fn load_dataset(manifest_path: impl AsRef<Path>) -> Result<HyperspectralLightField> {
    let manifest_path = manifest_path.as_ref();
    let text =
        std::fs::read_to_string(manifest_path).map_err(|e| HlfError::io(manifest_path, e))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| HlfError::Manifest {
        path: manifest_path.into(),
        message: e.to_string(),
    })?;
    let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    build_from_manifest(&manifest, base)
}

fn build_from_manifest(manifest: &Manifest, base: &Path) -> Result<HyperspectralLightField> {
    let (rows, cols) = (manifest.grid_rows, manifest.grid_cols);
    if rows == 0 || cols == 0 {
        return Err(HlfError::InvalidParameter("empty view grid".into()));
    }
    let mut cells: HashMap<ViewIndex, &ManifestView> = HashMap::new();
    for v in &manifest.views {
        let idx = ViewIndex::new(v.s, v.t);
        if v.s >= rows || v.t >= cols {
            return Err(HlfError::InvalidCell {
                cell: idx,
                message: format!("outside the {rows}x{cols} grid"),
            });
        }
        if cells.insert(idx, v).is_some() {
            return Err(HlfError::DuplicateCell(idx));
        }
    }

    let mut views = Vec::with_capacity(rows * cols);
    let mut dims: Option<(usize, usize)> = None;
    for s in 0..rows {
        for t in 0..cols {
            let idx = ViewIndex::new(s, t);
            let entry = cells.get(&idx).ok_or(HlfError::MissingCell(idx))?;
            let band =
                SpectralBand::narrow(entry.center_nm).map_err(|e| HlfError::InvalidCell {
                    cell: idx,
                    message: e.to_string(),
                })?;
            let path = base.join(&entry.file);
            if !path.exists() {
                return Err(HlfError::InvalidCell {
                    cell: idx,
                    message: format!("missing file {}", path.display()),
                });
            }
            let (w, h, pixels) = read_gray_image(&path)?;
            match dims {
                None => dims = Some((w, h)),
                Some(expected) if expected != (w, h) => {
                    return Err(HlfError::InvalidCell {
                        cell: idx,
                        message: format!(
                            "dimensions {w}x{h} differ from {}x{}",
                            expected.0, expected.1
                        ),
                    })
                }
                Some(_) => {}
            }
            views.push(SpectralImage::new(w, h, band, pixels)?);
        }
    }
    HyperspectralLightField::new(
        rows,
        cols,
        views,
        manifest.baseline,
        (manifest.disparity_range[0], manifest.disparity_range[1]),
        manifest.label_count,
    )
}

/// Writes every view as a 16-bit PNG next to `dir/manifest.json`.
pub fn write_dataset(hlf: &HyperspectralLightField, dir: impl AsRef<Path>) -> Result<PathBuf> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| HlfError::io(dir, e))?;
    let mut views = Vec::with_capacity(hlf.view_count());
    for idx in hlf.indices() {
        let img = hlf.view(idx);
        let file = PathBuf::from(format!("view_{}_{}.png", idx.s, idx.t));
        write_gray_png(
            dir.join(&file),
            img.width(),
            img.height(),
            img.pixels(),
            true,
        )?;
        views.push(ManifestView {
            s: idx.s,
            t: idx.t,
            center_nm: img.band().center_nm,
            file,
        });
    }
    let manifest = Manifest {
        grid_rows: hlf.rows(),
        grid_cols: hlf.cols(),
        baseline: hlf.baseline,
        disparity_range: [hlf.disparity_range.0, hlf.disparity_range.1],
        label_count: hlf.label_count,
        views,
    };
    let path = dir.join("manifest.json");
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serialises");
    std::fs::write(&path, json).map_err(|e| HlfError::io(&path, e))?;
    Ok(path)
}
