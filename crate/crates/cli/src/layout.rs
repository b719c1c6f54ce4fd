//! Run directory layout.
//!
//! ```text
//! <out>/config.toml          resolved configuration of the last command
//! <out>/gt/<id>.json         ground-truth keypoints
//! <out>/samples/<id>.ikps    exported training samples
//! <out>/fits/<id>.sdf.ikpn   SDF checkpoint, with <id>.sdf.loss.tsv
//! <out>/fits/<id>.udf.ikpn   stacked-UDF checkpoint, with <id>.udf.loss.tsv
//! <out>/fits/<id>.analytic.json  analytic field record (--analytic)
//! <out>/pred/<id>.json       predicted keypoints
//! <out>/meshes/<id>.obj|ply  keypoint sphere meshes
//! <out>/report.json|txt      metric report
//! <out>/manifests/<cmd>.json  per-command manifest
//! <out>/ablation/<axis>.*   ablation tables
//! ```

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use implicit_keypoints::io::{read_keypoints, KeypointFile};

#[derive(Debug, Clone)]
pub struct RunDir {
    pub root: PathBuf,
}

impl RunDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn gt(&self) -> PathBuf {
        self.root.join("gt")
    }

    pub fn samples(&self) -> PathBuf {
        self.root.join("samples")
    }

    pub fn fits(&self) -> PathBuf {
        self.root.join("fits")
    }

    pub fn pred(&self) -> PathBuf {
        self.root.join("pred")
    }

    pub fn meshes(&self) -> PathBuf {
        self.root.join("meshes")
    }

    pub fn gt_file(&self, id: &str) -> PathBuf {
        self.gt().join(format!("{id}.json"))
    }

    pub fn sdf_checkpoint(&self, id: &str) -> PathBuf {
        self.fits().join(format!("{id}.sdf.ikpn"))
    }

    pub fn udf_checkpoint(&self, id: &str) -> PathBuf {
        self.fits().join(format!("{id}.udf.ikpn"))
    }

    pub fn analytic_record(&self, id: &str) -> PathBuf {
        self.fits().join(format!("{id}.analytic.json"))
    }

    pub fn pred_file(&self, id: &str) -> PathBuf {
        self.pred().join(format!("{id}.json"))
    }

    /// Ground-truth files sorted by model id.
    pub fn ground_truth(&self) -> Result<Vec<(String, KeypointFile)>> {
        list_keypoint_dir(&self.gt()).with_context(|| format!("reading ground truth in {}", self.gt().display()))
    }
}

/// All `*.json` keypoint files in `dir`, sorted by file stem.
pub fn list_keypoint_dir(dir: &Path) -> Result<Vec<(String, KeypointFile)>> {
    let mut stems = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        if path.extension().is_some_and(|e| e == "json") && path.file_stem().is_some_and(|s| s != "manifest") {
            stems.push(path.file_stem().unwrap().to_string_lossy().into_owned());
        }
    }
    stems.sort();
    stems
        .into_iter()
        .map(|id| {
            let path = dir.join(format!("{id}.json"));
            let file = read_keypoints(&path).with_context(|| format!("reading {}", path.display()))?;
            Ok((id, file))
        })
        .collect()
}

/// Model ids become file names, so keep them to a portable alphabet.
pub fn valid_model_id(id: &str) -> bool {
    !id.is_empty()
        && id.len() <= 128
        && !id.starts_with('.')
        && id.chars().all(|c| c.is_ascii_alphanumeric() || "_-.".contains(c))
}
