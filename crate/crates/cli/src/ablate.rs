//! Radius and architecture ablations.
//!
//! Both axes share one set of ground-truth keypoint sets, so rows differ
//! only in the varied setting.

use std::fmt::Write as _;

use anyhow::{Context, Result};
use implicit_keypoints::extraction::extract_keypoints;
use implicit_keypoints::isosurface::{eval_grid, marching_cubes};
use implicit_keypoints::metrics::{bhd, cd};
use implicit_keypoints::nn::{fit_sdf, Activation};
use implicit_keypoints::sampling::random_keypoint_set;
use implicit_keypoints::{Aabb, KeypointSet, SphereField};
use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::layout::RunDir;
use crate::{derive_seed, invalid, streams};

/// Radii of the radius ablation, largest first.
pub const RADII: [f64; 5] = [0.24, 0.16, 0.08, 0.04, 0.02];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    Radius,
    Architecture,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::Radius => "radius",
            Axis::Architecture => "architecture",
        }
    }
}

/// One network variant of the architecture ablation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Variant {
    pub activation: Activation,
    pub posenc: bool,
    pub gradient_losses: bool,
}

impl Variant {
    /// The twelve columns: each activation without and with positional
    /// encoding, each without and with the gradient losses.
    pub fn all() -> Vec<Variant> {
        let mut out = Vec::new();
        for activation in [Activation::Relu, Activation::Selu, Activation::Sine] {
            for posenc in [false, true] {
                for gradient_losses in [false, true] {
                    out.push(Variant {
                        activation,
                        posenc,
                        gradient_losses,
                    });
                }
            }
        }
        out
    }

    pub fn label(&self) -> String {
        format!(
            "{} {} Pos {} Grad",
            self.activation.name(),
            if self.posenc { "w" } else { "wo" },
            if self.gradient_losses { "w" } else { "wo" }
        )
    }

    /// `cfg` with this variant's network settings.
    pub fn apply(&self, cfg: &RunConfig) -> RunConfig {
        let mut out = cfg.clone();
        out.network.activation = self.activation;
        if !self.posenc {
            out.network.posenc_bands = 0;
        }
        if !self.gradient_losses {
            out.network.lambda_grad = 0.0;
            out.network.lambda_normal = 0.0;
        }
        out
    }
}

/// Mean metrics of one ablation setting over the shared shapes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub label: String,
    pub radius: f64,
    /// `None` when every shape failed.
    pub bhd: Option<f64>,
    pub cd: Option<f64>,
    pub per_shape_bhd: Vec<Option<f64>>,
    pub per_shape_cd: Vec<Option<f64>>,
    /// Shapes with no extracted keypoints, left out of the means.
    pub failed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ablation {
    pub axis: Axis,
    pub analytic: bool,
    pub shapes: usize,
    pub rows: Vec<AblationRow>,
}

/// Ground-truth keypoint sets shared by every row. Drawn inside the unit box
/// shrunk by the largest radius, so spheres fit the grid at every radius.
pub fn shared_keypoints(cfg: &RunConfig) -> Result<Vec<KeypointSet>> {
    let bounds = Aabb::unit().expanded(-RADII[0]);
    (0..cfg.dataset.shapes)
        .map(|i| {
            let seed = derive_seed(cfg.seed, i, streams::KEYPOINTS);
            Ok(random_keypoint_set(
                cfg.dataset.keypoints,
                cfg.min_separation(),
                &bounds,
                seed,
            )?)
        })
        .collect()
}

/// Predicted keypoints for one shape under `cfg`: the analytic field or a
/// fitted network, then Marching Cubes and extraction.
pub fn predict(cfg: &RunConfig, gt: &KeypointSet, index: usize, analytic: bool) -> Result<KeypointSet> {
    let field = SphereField::new(gt.clone(), cfg.radius)?;
    let res = [cfg.resolution; 3];
    let grid = if analytic {
        eval_grid(&field, res, Aabb::unit())?
    } else {
        let seed = derive_seed(cfg.seed, index, streams::FIT_SDF);
        let (net, _) =
            fit_sdf(&field, &cfg.fit_config(seed, false)).with_context(|| format!("shape {index}: SDF fit"))?;
        eval_grid(&net, res, Aabb::unit())?
    };
    let mesh = marching_cubes(&grid, 0.0)?;
    Ok(extract_keypoints(&mesh, &cfg.extraction_config())?)
}

/// Score `cfg` on the shared shapes.
pub fn score(cfg: &RunConfig, label: String, shapes: &[KeypointSet], analytic: bool) -> Result<AblationRow> {
    let per_shape = shapes
        .par_iter()
        .enumerate()
        .map(|(i, gt)| -> Result<(Option<f64>, Option<f64>)> {
            let pred = predict(cfg, gt, i, analytic)?;
            if pred.is_empty() {
                return Ok((None, None));
            }
            Ok((
                Some(bhd(&pred.points, &gt.points)?),
                Some(cd(&pred.points, &gt.points)?),
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let mean = |v: Vec<f64>| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
    let per_shape_bhd: Vec<_> = per_shape.iter().map(|s| s.0).collect();
    let per_shape_cd: Vec<_> = per_shape.iter().map(|s| s.1).collect();
    let row = AblationRow {
        label,
        radius: cfg.radius,
        bhd: mean(per_shape_bhd.iter().flatten().copied().collect()),
        cd: mean(per_shape_cd.iter().flatten().copied().collect()),
        failed: per_shape_bhd.iter().filter(|b| b.is_none()).count(),
        per_shape_bhd,
        per_shape_cd,
    };
    info!("{}: BHD {:?} CD {:?} failed {}", row.label, row.bhd, row.cd, row.failed);
    Ok(row)
}

/// One row of the radius ablation. Vote thresholds are scaled by mesh
/// density at every radius, since a fixed threshold tuned for r = 0.08
/// cannot be reached by the few vertices of a small sphere.
pub fn radius_row(cfg: &RunConfig, shapes: &[KeypointSet], radius: f64, analytic: bool) -> Result<AblationRow> {
    let mut c = cfg.clone();
    c.radius = radius;
    c.extraction.density_normalization = true;
    c.validate()?;
    score(&c, format!("r = {radius}"), shapes, analytic)
}

pub fn run(cfg: &RunConfig, axis: Axis, analytic: bool) -> Result<Ablation> {
    let shapes = shared_keypoints(cfg)?;
    let rows = match axis {
        Axis::Radius => RADII
            .iter()
            .map(|&r| radius_row(cfg, &shapes, r, analytic))
            .collect::<Result<Vec<_>>>()?,
        Axis::Architecture => {
            if analytic {
                return Err(invalid(
                    "the architecture ablation needs learned fields; drop --analytic",
                ));
            }
            Variant::all()
                .iter()
                .map(|v| {
                    let c = v.apply(cfg);
                    c.validate()?;
                    score(&c, v.label(), &shapes, false)
                })
                .collect::<Result<Vec<_>>>()?
        }
    };
    Ok(Ablation {
        axis,
        analytic,
        shapes: shapes.len(),
        rows,
    })
}

impl Ablation {
    pub fn to_text(&self) -> String {
        let f = |x: Option<f64>| x.map_or_else(|| "-".to_string(), |v| format!("{v:.16e}"));
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{} ablation, {} shapes, {} fields",
            self.axis.name(),
            self.shapes,
            if self.analytic { "analytic" } else { "learned" }
        );
        let _ = writeln!(s, "setting\tBHD\tCD\tfailed");
        for r in &self.rows {
            let _ = writeln!(s, "{}\t{}\t{}\t{}", r.label, f(r.bhd), f(r.cd), r.failed);
        }
        s
    }
}

/// Run an ablation and write `<out>/ablation/<axis>.json` and `.txt`.
pub fn ablate(dir: &RunDir, cfg: &RunConfig, axis: Axis, analytic: bool) -> Result<Ablation> {
    let result = run(cfg, axis, analytic)?;
    let base = dir.root.join("ablation");
    let mut json = serde_json::to_string_pretty(&result)?;
    json.push('\n');
    implicit_keypoints::io::write_file(&base.join(format!("{}.json", axis.name())), json.as_bytes())?;
    implicit_keypoints::io::write_file(&base.join(format!("{}.txt", axis.name())), result.to_text().as_bytes())?;
    implicit_keypoints::io::write_file(&dir.root.join("config.toml"), cfg.to_toml().as_bytes())?;
    Ok(result)
}
