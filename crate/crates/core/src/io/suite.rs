//! On-disk layout of a synthetic suite: one directory per scene holding
//! `frame1.pgm`, `frame2.pgm` and `gt.flo`.

use std::path::{Path, PathBuf};

use super::{read_flo, read_image, write_flo, write_image};
use crate::error::{Error, Result};
use crate::synth::ScenePair;

fn scene_dir(root: &Path, index: usize, name: &str) -> PathBuf {
    root.join(format!("{index:02}_{name}"))
}

/// Writes every scene; frames are quantised to 8 bits.
pub fn write_suite(root: &Path, suite: &[ScenePair]) -> Result<Vec<PathBuf>> {
    let mut dirs = Vec::with_capacity(suite.len());
    for (i, pair) in suite.iter().enumerate() {
        let dir = scene_dir(root, i, &pair.name);
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        write_image(&pair.frame1, &dir.join("frame1.pgm"))?;
        write_image(&pair.frame2, &dir.join("frame2.pgm"))?;
        write_flo(&pair.gt, &dir.join("gt.flo"))?;
        dirs.push(dir);
    }
    Ok(dirs)
}

/// Loads every scene directory under `root`, in name order.
pub fn read_suite(root: &Path) -> Result<Vec<ScenePair>> {
    let listing = std::fs::read_dir(root).map_err(|e| Error::io(root, e))?;
    let mut dirs = Vec::new();
    for entry in listing {
        let entry = entry.map_err(|e| Error::io(root, e))?;
        let path = entry.path();
        if path.is_dir() && path.join("gt.flo").is_file() {
            dirs.push(path);
        }
    }
    dirs.sort();
    if dirs.is_empty() {
        return Err(Error::Scene(format!("no scene directories under {}", root.display())));
    }
    dirs.iter()
        .map(|dir| {
            let label = dir.file_name().and_then(|n| n.to_str()).unwrap_or_default();
            let name = match label.split_once('_') {
                Some((idx, rest)) if idx.chars().all(|c| c.is_ascii_digit()) => rest,
                _ => label,
            };
            let pair = ScenePair {
                name: name.to_string(),
                frame1: read_image(&dir.join("frame1.pgm"))?,
                frame2: read_image(&dir.join("frame2.pgm"))?,
                gt: read_flo(&dir.join("gt.flo"))?,
            };
            if pair.frame1.dims() != pair.gt.dims() || pair.frame2.dims() != pair.gt.dims() {
                return Err(Error::Dimension(format!("{}: frames and gt differ in size", dir.display())));
            }
            Ok(pair)
        })
        .collect()
}
