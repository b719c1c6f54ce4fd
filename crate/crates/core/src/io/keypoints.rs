//! Keypoint files: JSON with a fixed field order and 17-digit reals.
//!
//! ```json
//! {
//!   "model_id": "shape_000",
//!   "category": "synthetic",
//!   "radius": 8.0000000000000002e-2,
//!   "label_count": 3,
//!   "keypoints": [
//!     {"xyz": [1.0000000000000001e-1, 0.0000000000000000e0, -2.5000000000000000e-1], "semantic_id": 2}
//!   ]
//! }
//! ```
//!
//! `label_count` and `semantic_id` are present only for labeled sets, and
//! then on every keypoint.

use std::fmt::Write as _;
use std::path::Path;

use serde::Deserialize;

use super::fmt_real;
use crate::error::{Error, Result};
use crate::geometry::{KeypointSet, Point3};

#[derive(Debug, Clone, PartialEq)]
pub struct KeypointFile {
    pub model_id: String,
    pub category: String,
    pub radius: f64,
    pub keypoints: KeypointSet,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFile {
    model_id: String,
    #[serde(default)]
    category: String,
    radius: f64,
    label_count: Option<usize>,
    keypoints: Vec<RawKeypoint>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawKeypoint {
    xyz: [f64; 3],
    semantic_id: Option<usize>,
}

fn json_str(s: &str) -> String {
    serde_json::to_string(s).expect("strings always serialize")
}

impl KeypointFile {
    pub fn to_json(&self) -> Result<String> {
        self.keypoints.validate()?;
        let mut s = String::from("{\n");
        let _ = writeln!(s, "  \"model_id\": {},", json_str(&self.model_id));
        let _ = writeln!(s, "  \"category\": {},", json_str(&self.category));
        let _ = writeln!(s, "  \"radius\": {},", fmt_real(self.radius));
        let labels = self.keypoints.labels.as_deref();
        if labels.is_some() {
            let _ = writeln!(s, "  \"label_count\": {},", self.keypoints.label_count);
        }
        s.push_str("  \"keypoints\": [");
        for (i, p) in self.keypoints.points.iter().enumerate() {
            s.push_str(if i == 0 { "\n" } else { ",\n" });
            let _ = write!(
                s,
                "    {{\"xyz\": [{}, {}, {}]",
                fmt_real(p.x),
                fmt_real(p.y),
                fmt_real(p.z)
            );
            if let Some(l) = labels {
                let _ = write!(s, ", \"semantic_id\": {}", l[i]);
            }
            s.push('}');
        }
        if !self.keypoints.points.is_empty() {
            s.push_str("\n  ");
        }
        s.push_str("]\n}\n");
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: RawFile = serde_json::from_str(text)?;
        if !(raw.radius > 0.0 && raw.radius.is_finite()) {
            return Err(Error::Format(format!(
                "keypoint file {}: radius must be positive",
                raw.model_id
            )));
        }
        let points: Vec<Point3> = raw.keypoints.iter().map(|k| Point3::from_array(k.xyz)).collect();
        let ids: Vec<Option<usize>> = raw.keypoints.iter().map(|k| k.semantic_id).collect();
        let keypoints = if ids.iter().all(Option::is_none) && raw.label_count.is_none() {
            KeypointSet::new(points)
        } else {
            let labels: Vec<usize> = ids
                .iter()
                .map(|l| {
                    l.ok_or_else(|| {
                        Error::Format(format!(
                            "keypoint file {}: some keypoints lack semantic_id",
                            raw.model_id
                        ))
                    })
                })
                .collect::<Result<_>>()?;
            let count = raw
                .label_count
                .unwrap_or_else(|| labels.iter().max().map_or(1, |m| m + 1));
            KeypointSet::with_labels(points, labels, count)?
        };
        Ok(Self {
            model_id: raw.model_id,
            category: raw.category,
            radius: raw.radius,
            keypoints,
        })
    }
}

pub fn write_keypoints(path: &Path, file: &KeypointFile) -> Result<()> {
    super::write_file(path, file.to_json()?.as_bytes())
}

pub fn read_keypoints(path: &Path) -> Result<KeypointFile> {
    KeypointFile::from_json(&std::fs::read_to_string(path)?)
}
