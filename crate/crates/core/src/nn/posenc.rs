use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::geometry::Point3;

/// Fourier feature lift of a coordinate.
///
/// Layout: `[x, y, z]` (when `include_raw`), then for each band `b`
/// `[sin(2^b pi x), sin(.. y), sin(.. z), cos(2^b pi x), cos(.. y), cos(.. z)]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PosEncConfig {
    pub bands: usize,
    pub include_raw: bool,
}

impl Default for PosEncConfig {
    fn default() -> Self {
        Self {
            bands: 6,
            include_raw: true,
        }
    }
}

impl PosEncConfig {
    /// Raw coordinates only.
    pub fn identity() -> Self {
        Self {
            bands: 0,
            include_raw: true,
        }
    }

    pub fn output_dim(&self) -> usize {
        3 * usize::from(self.include_raw) + 6 * self.bands
    }

    fn raw_offset(&self) -> usize {
        3 * usize::from(self.include_raw)
    }

    /// Write the features of `p` into `out[..output_dim]`.
    pub fn encode_into(&self, p: Point3, out: &mut [f64]) {
        let c = p.to_array();
        if self.include_raw {
            out[..3].copy_from_slice(&c);
        }
        let base = self.raw_offset();
        for b in 0..self.bands {
            let freq = (1u64 << b) as f64 * PI;
            let o = base + 6 * b;
            for j in 0..3 {
                let (s, co) = (freq * c[j]).sin_cos();
                out[o + j] = s;
                out[o + 3 + j] = co;
            }
        }
    }

    /// Features and their derivative along axis `k`, for each `k`.
    ///
    /// `tangents[k][i]` is `d feature_i / d p_k`.
    pub fn encode_with_tangents(&self, p: Point3, out: &mut [f64], tangents: [&mut [f64]; 3]) {
        self.encode_into(p, out);
        let c = p.to_array();
        let base = self.raw_offset();
        for (k, t) in tangents.into_iter().enumerate() {
            t[..self.output_dim()].fill(0.0);
            if self.include_raw {
                t[k] = 1.0;
            }
            for b in 0..self.bands {
                let freq = (1u64 << b) as f64 * PI;
                let o = base + 6 * b;
                let (s, co) = (freq * c[k]).sin_cos();
                t[o + k] = freq * co;
                t[o + 3 + k] = -freq * s;
            }
        }
    }
}

pub fn posenc(p: Point3, cfg: &PosEncConfig) -> Vec<f64> {
    let mut out = vec![0.0; cfg.output_dim()];
    cfg.encode_into(p, &mut out);
    out
}
