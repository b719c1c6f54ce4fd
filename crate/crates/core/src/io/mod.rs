//! File formats. Binary formats are little-endian and start with a
//! four-byte magic followed by a `u32` version.

mod binary;
pub mod checkpoint;
pub mod grid;
pub mod keypoints;
pub mod mesh;
pub mod samples;

use std::path::Path;

pub use checkpoint::{read_checkpoint, write_checkpoint};
pub use grid::{read_grid, write_grid};
pub use keypoints::{read_keypoints, write_keypoints, KeypointFile};
pub use mesh::{read_obj, read_ply, write_obj, write_ply};
pub use samples::{read_samples, write_samples};

use crate::error::Result;

/// Write `bytes` to `path`, creating parent directories.
pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    std::fs::write(path, bytes)?;
    Ok(())
}

/// Reals in text formats: 17 significant digits, enough to round-trip.
pub(crate) fn fmt_real(x: f64) -> String {
    format!("{x:.16e}")
}
