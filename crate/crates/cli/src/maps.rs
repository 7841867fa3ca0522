use std::path::Path;

use anyhow::{bail, Context, Result};
use sodscan_core::io::read_pgm;
use sodscan_core::SaliencyMap;

fn extension(path: &Path) -> String {
    path.extension()
        .and_then(|e| e.to_str())
        .unwrap_or("")
        .to_ascii_lowercase()
}

pub fn is_map_file(path: &Path) -> bool {
    matches!(extension(path).as_str(), "pgm" | "pnm" | "png")
}

/// PGM (binary or ASCII) or grayscale PNG, scaled onto `[0, 1]`.
pub fn load_map(path: &Path) -> Result<SaliencyMap> {
    match extension(path).as_str() {
        "png" => {
            let img = image::open(path).with_context(|| format!("reading {}", path.display()))?;
            let luma = img.to_luma16();
            let (w, h) = luma.dimensions();
            if w == 0 || h == 0 {
                bail!("{} has zero extent", path.display());
            }
            let values = luma.into_raw().into_iter().map(|v| v as f64 / 65535.0).collect();
            Ok(SaliencyMap::new(h as usize, w as usize, values)?)
        }
        _ => read_pgm(path).with_context(|| format!("reading {}", path.display())),
    }
}
