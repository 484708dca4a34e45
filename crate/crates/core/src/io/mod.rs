//! File formats, visualisation, configuration and reports.

mod color;
mod config;
mod flo;
mod image_file;
mod report;
mod suite;

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

pub use color::{flow_to_color, ratio_map_to_gray, RgbImage};
pub use config::{ReportFormat, RunConfig};
pub use flo::{decode_flo, encode_flo, read_flo, write_flo, FLO_TAG, INVALID_THRESHOLD};
pub use image_file::{decode_pgm, encode_pgm, luma, quantize, read_image, write_gray_png, write_image, write_rgb_png};
pub use report::{format_report, format_scene_report, write_report};
pub use suite::{read_suite, write_suite};

/// Writes `bytes` to a temporary file next to `path` and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(tmp.path(), e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(tmp.path(), e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

pub(crate) fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn extension(path: &Path) -> String {
    path.extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .unwrap_or_default()
}
