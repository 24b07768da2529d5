//! A dataset is a directory of `.hdr` files, optionally restricted to the
//! names listed in a split file (one file name per line, `#` comments).

use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::error::{invalid, Result};
use crate::hdrio::read_image;
use crate::imgcore::{Plane, PERIOD};
use crate::sim::{simulate_mecfa, SimConfig, Simulation};

/// Sorted `.hdr` files of `dir`, or the files named in `list` (in list order).
pub fn dataset_files(dir: &Path, list: Option<&Path>) -> Result<Vec<PathBuf>> {
    let files: Vec<PathBuf> = match list {
        Some(list) => std::fs::read_to_string(list)?
            .lines()
            .map(|l| l.split('#').next().unwrap_or("").trim())
            .filter(|l| !l.is_empty())
            .map(|name| dir.join(name))
            .collect(),
        None => {
            let mut v: Vec<PathBuf> = std::fs::read_dir(dir)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("hdr")))
                .collect();
            v.sort();
            v
        }
    };
    if files.is_empty() {
        return Err(invalid(format!("no .hdr files in {}", dir.display())));
    }
    if let Some(missing) = files.iter().find(|p| !p.is_file()) {
        return Err(invalid(format!("dataset file {} does not exist", missing.display())));
    }
    Ok(files)
}

/// Crops to the largest top-left region whose sides are multiples of the
/// mosaic period.
pub fn crop_to_period(img: &Plane) -> Result<Plane> {
    let (h, w) = (img.height() / PERIOD * PERIOD, img.width() / PERIOD * PERIOD);
    if h == 0 || w == 0 {
        return Err(invalid(format!("image {}x{} smaller than the mosaic period", img.height(), img.width())));
    }
    if (h, w) == (img.height(), img.width()) {
        Ok(img.clone())
    } else {
        img.crop(0, 0, h, w)
    }
}

/// Reads and simulates every file. Files are processed in parallel; the
/// result keeps the input order.
pub fn load_dataset(files: &[PathBuf], cfg: &SimConfig) -> Result<Vec<Simulation>> {
    files
        .par_iter()
        .map(|p| {
            let img = read_image(p)?;
            if img.channels() != 3 {
                return Err(invalid(format!("{}: expected an RGB image", p.display())));
            }
            simulate_mecfa(&crop_to_period(&img)?, cfg)
        })
        .collect()
}
