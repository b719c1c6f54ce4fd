//! Scalar grids ("IKPG"): three `u32` resolutions, bounds as six `f64`
//! (min xyz, max xyz), then `f32` values with x varying fastest.

use std::path::Path;

use super::binary::{Reader, Writer};
use crate::error::{Error, Result};
use crate::geometry::{Aabb, Point3};
use crate::isosurface::ScalarGrid;

const MAGIC: &[u8; 4] = b"IKPG";
const VERSION: u32 = 1;

pub fn encode_grid(grid: &ScalarGrid) -> Result<Vec<u8>> {
    grid.validate()?;
    let mut w = Writer::new(MAGIC, VERSION);
    for &n in &grid.resolution {
        w.len_u32(n, "resolution")?;
    }
    for v in grid.bounds.min.to_array().into_iter().chain(grid.bounds.max.to_array()) {
        w.f64(v);
    }
    for &v in &grid.values {
        w.f32(v as f32);
    }
    Ok(w.buf)
}

/// Values come back widened from `f32`.
pub fn decode_grid(data: &[u8]) -> Result<ScalarGrid> {
    let mut r = Reader::open(data, MAGIC, VERSION, "grid")?;
    let resolution = [r.usize()?, r.usize()?, r.usize()?];
    let min = Point3::new(r.f64()?, r.f64()?, r.f64()?);
    let max = Point3::new(r.f64()?, r.f64()?, r.f64()?);
    let n = resolution
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::Format("grid: resolution overflows".into()))?;
    r.expect_remaining(
        n.checked_mul(4)
            .ok_or_else(|| Error::Format("grid: too large".into()))?,
    )?;
    let values = (0..n).map(|_| r.f32().map(f64::from)).collect::<Result<Vec<_>>>()?;
    ScalarGrid::new(resolution, Aabb { min, max }, values).map_err(|e| Error::Format(format!("grid: {e}")))
}

pub fn write_grid(path: &Path, grid: &ScalarGrid) -> Result<()> {
    super::write_file(path, &encode_grid(grid)?)
}

pub fn read_grid(path: &Path) -> Result<ScalarGrid> {
    decode_grid(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let values: Vec<f64> = (0..2 * 3 * 4).map(|i| (i as f64 * 0.37).sin()).collect();
        let g = ScalarGrid::new([2, 3, 4], Aabb::unit(), values).unwrap();
        let bytes = encode_grid(&g).unwrap();
        let back = decode_grid(&bytes).unwrap();
        assert_eq!(back.resolution, g.resolution);
        assert_eq!(back.bounds, g.bounds);
        for (a, b) in back.values.iter().zip(&g.values) {
            assert_eq!(*a, *b as f32 as f64);
        }
        assert_eq!(encode_grid(&back).unwrap(), bytes);
        assert!(decode_grid(&bytes[..bytes.len() - 2]).is_err());
    }
}
