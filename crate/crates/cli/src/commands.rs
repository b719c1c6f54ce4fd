//! The `gen`, `import`, `fit`, `extract`, `eval` and `pipeline` commands.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{Context, Result};
use implicit_keypoints::extraction::extract_keypoints_with_report;
use implicit_keypoints::field::ScalarField;
use implicit_keypoints::geometry::{label_of, stacked_udf};
use implicit_keypoints::io::{
    read_checkpoint, read_keypoints, write_checkpoint, write_file, write_grid, write_keypoints, write_obj, write_ply,
    write_samples, KeypointFile,
};
use implicit_keypoints::isosurface::{eval_grid, marching_cubes};
use implicit_keypoints::metrics::{MetricReport, ShapeEval};
use implicit_keypoints::nn::{fit_sdf, fit_stacked_udf, ImplicitNet, LossTerms};
use implicit_keypoints::sampling::{make_training_set, make_udf_training_set, random_keypoint_set};
use implicit_keypoints::{Aabb, KeypointSet, Point3, SphereField};
use log::{info, warn};
use rayon::prelude::*;
use serde::Serialize;

use crate::annotation::{parse_annotations, RecordError};
use crate::config::RunConfig;
use crate::layout::RunDir;
use crate::{derive_seed, invalid, streams};

/// Flags shared by the commands.
#[derive(Debug, Clone, Copy, Default)]
pub struct Flags {
    pub analytic: bool,
    pub semantic: bool,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_file(path, text.as_bytes())?;
    Ok(())
}

#[derive(Serialize)]
struct Manifest<T> {
    command: &'static str,
    config: String,
    entries: Vec<T>,
}

fn write_manifest<T: Serialize>(dir: &RunDir, command: &'static str, cfg: &RunConfig, entries: Vec<T>) -> Result<()> {
    let path = dir.root.join("manifests").join(format!("{command}.json"));
    write_json(
        &path,
        &Manifest {
            command,
            config: cfg.to_toml(),
            entries,
        },
    )?;
    write_file(&dir.root.join("config.toml"), cfg.to_toml().as_bytes())?;
    Ok(())
}

fn shape_id(i: usize, n: usize) -> String {
    let width = (n.saturating_sub(1)).to_string().len().max(3);
    format!("shape_{i:0width$}")
}

#[derive(Serialize)]
struct GenEntry {
    model_id: String,
    keypoint_seed: u64,
    sample_seed: u64,
    udf_sample_seed: Option<u64>,
    keypoints: usize,
    min_separation: f64,
}

/// Synthesize ground-truth keypoint sets and export their training samples.
pub fn gen(dir: &RunDir, cfg: &RunConfig, flags: Flags) -> Result<()> {
    let n = cfg.dataset.shapes;
    let min_sep = cfg.min_separation();
    let entries = (0..n)
        .into_par_iter()
        .map(|i| -> Result<GenEntry> {
            let id = shape_id(i, n);
            let kp_seed = derive_seed(cfg.seed, i, streams::KEYPOINTS);
            let keypoints = random_keypoint_set(cfg.dataset.keypoints, min_sep, &cfg.keypoint_bounds(), kp_seed)?;
            let file = KeypointFile {
                model_id: id.clone(),
                category: cfg.dataset.category.clone(),
                radius: cfg.radius,
                keypoints,
            };
            write_keypoints(&dir.gt_file(&id), &file)?;
            let field = SphereField::new(file.keypoints.clone(), cfg.radius)?;
            let sample_seed = derive_seed(cfg.seed, i, streams::FIT_SDF);
            let samples = make_training_set(&field, &cfg.sample_config(sample_seed))?;
            write_samples(&dir.samples().join(format!("{id}.ikps")), &samples)?;
            let udf_sample_seed = if flags.semantic {
                let seed = derive_seed(cfg.seed, i, streams::FIT_UDF);
                let samples = make_udf_training_set(&field, &cfg.sample_config(seed))?;
                write_samples(&dir.samples().join(format!("{id}.udf.ikps")), &samples)?;
                Some(seed)
            } else {
                None
            };
            Ok(GenEntry {
                model_id: id,
                keypoint_seed: kp_seed,
                sample_seed,
                udf_sample_seed,
                keypoints: file.keypoints.len(),
                min_separation: min_sep,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    info!("generated {n} shapes in {}", dir.gt().display());
    write_manifest(dir, "gen", cfg, entries)
}

#[derive(Serialize)]
struct ImportEntry {
    model_id: String,
    category: String,
    keypoints: usize,
    labeled: bool,
}

#[derive(Serialize)]
struct ImportReport {
    accepted: usize,
    rejected: Vec<RecordError>,
}

/// Ingest an annotation file. Valid records are written even when others
/// are rejected; rejections are listed in `import_report.json` and make the
/// command fail.
pub fn import(dir: &RunDir, cfg: &RunConfig, file: &Path, normalize: bool) -> Result<()> {
    let text = std::fs::read_to_string(file).with_context(|| format!("reading {}", file.display()))?;
    let (records, rejected) = parse_annotations(&text, normalize, cfg.radius).map_err(invalid)?;
    let mut entries = Vec::new();
    for rec in &records {
        let out = KeypointFile {
            model_id: rec.model_id.clone(),
            category: rec.category.clone(),
            radius: cfg.radius,
            keypoints: rec.keypoints.clone(),
        };
        write_keypoints(&dir.gt_file(&rec.model_id), &out)?;
        entries.push(ImportEntry {
            model_id: rec.model_id.clone(),
            category: rec.category.clone(),
            keypoints: rec.keypoints.len(),
            labeled: rec.keypoints.is_labeled(),
        });
    }
    write_json(
        &dir.root.join("import_report.json"),
        &ImportReport {
            accepted: records.len(),
            rejected: rejected.clone(),
        },
    )?;
    write_manifest(dir, "import", cfg, entries)?;
    if !rejected.is_empty() {
        let mut msg = format!(
            "{} of {} records rejected:",
            rejected.len(),
            rejected.len() + records.len()
        );
        for r in &rejected {
            let _ = write!(
                msg,
                "\n  record {} ({}): {}",
                r.index,
                r.model_id.as_deref().unwrap_or("?"),
                r.errors.join("; ")
            );
        }
        return Err(invalid(msg));
    }
    Ok(())
}

fn check_radius(cfg: &RunConfig, id: &str, file: &KeypointFile) -> Result<()> {
    if file.radius != cfg.radius {
        return Err(invalid(format!(
            "{id}: ground truth radius {} differs from configured radius {}",
            file.radius, cfg.radius
        )));
    }
    Ok(())
}

fn loss_log(curve: &[LossTerms], udf: bool) -> String {
    let f = |x: f64| format!("{x:.16e}");
    let mut s = String::from(if udf {
        "epoch\tmae\n"
    } else {
        "epoch\tsdf\tgrad\tnormal\ttotal\n"
    });
    for (e, t) in curve.iter().enumerate() {
        if udf {
            let _ = writeln!(s, "{e}\t{}", f(t.total));
        } else {
            let _ = writeln!(s, "{e}\t{}\t{}\t{}\t{}", f(t.sdf), f(t.grad), f(t.normal), f(t.total));
        }
    }
    s
}

#[derive(Serialize)]
struct FitEntry {
    model_id: String,
    mode: &'static str,
    sdf_seed: Option<u64>,
    sdf_final_loss: Option<LossTerms>,
    udf_seed: Option<u64>,
    udf_final_mae: Option<f64>,
}

/// Fit per-shape fields, or with `analytic` record the exact sphere field.
pub fn fit(dir: &RunDir, cfg: &RunConfig, flags: Flags) -> Result<()> {
    let shapes = dir.ground_truth()?;
    if shapes.is_empty() {
        return Err(invalid(format!("no ground truth in {}", dir.gt().display())));
    }
    for (id, file) in &shapes {
        check_radius(cfg, id, file)?;
        if flags.semantic && !file.keypoints.is_labeled() {
            return Err(invalid(format!("{id}: --semantic needs labeled keypoints")));
        }
    }
    let entries = shapes
        .par_iter()
        .enumerate()
        .map(|(i, (id, file))| -> Result<FitEntry> {
            if flags.analytic {
                write_keypoints(&dir.analytic_record(id), file)?;
                return Ok(FitEntry {
                    model_id: id.clone(),
                    mode: "analytic",
                    sdf_seed: None,
                    sdf_final_loss: None,
                    udf_seed: None,
                    udf_final_mae: None,
                });
            }
            let field = SphereField::new(file.keypoints.clone(), cfg.radius)?;
            let sdf_seed = derive_seed(cfg.seed, i, streams::FIT_SDF);
            info!("{id}: fitting SDF");
            let (net, report) =
                fit_sdf(&field, &cfg.fit_config(sdf_seed, false)).with_context(|| format!("{id}: SDF fit"))?;
            write_checkpoint(&dir.sdf_checkpoint(id), &net)?;
            write_file(
                &dir.fits().join(format!("{id}.sdf.loss.tsv")),
                loss_log(&report.epochs, false).as_bytes(),
            )?;
            let (udf_seed, udf_final_mae) = if flags.semantic {
                let seed = derive_seed(cfg.seed, i, streams::FIT_UDF);
                info!("{id}: fitting stacked UDF");
                let (net, report) =
                    fit_stacked_udf(&field, &cfg.fit_config(seed, true)).with_context(|| format!("{id}: UDF fit"))?;
                write_checkpoint(&dir.udf_checkpoint(id), &net)?;
                write_file(
                    &dir.fits().join(format!("{id}.udf.loss.tsv")),
                    loss_log(&report.epochs, true).as_bytes(),
                )?;
                (Some(seed), Some(report.final_loss.total))
            } else {
                (None, None)
            };
            Ok(FitEntry {
                model_id: id.clone(),
                mode: "learned",
                sdf_seed: Some(sdf_seed),
                sdf_final_loss: Some(report.final_loss),
                udf_seed,
                udf_final_mae,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    write_manifest(dir, "fit", cfg, entries)
}

/// Where a shape's fields come from.
enum Source {
    Analytic(KeypointFile),
    Learned { sdf: ImplicitNet, udf: Option<ImplicitNet> },
}

fn load_source(dir: &RunDir, id: &str, flags: Flags) -> Result<Source> {
    let ckpt = dir.sdf_checkpoint(id);
    let record = dir.analytic_record(id);
    if !flags.analytic && ckpt.exists() {
        let sdf = read_checkpoint(&ckpt).with_context(|| format!("reading {}", ckpt.display()))?;
        let udf_path = dir.udf_checkpoint(id);
        let udf = if udf_path.exists() {
            Some(read_checkpoint(&udf_path).with_context(|| format!("reading {}", udf_path.display()))?)
        } else {
            None
        };
        return Ok(Source::Learned { sdf, udf });
    }
    if record.exists() {
        return Ok(Source::Analytic(read_keypoints(&record)?));
    }
    Err(invalid(format!(
        "{id}: no {} in {}; run `fit` first",
        if flags.analytic {
            "analytic record"
        } else {
            "checkpoint or analytic record"
        },
        dir.fits().display()
    )))
}

impl Source {
    /// Stacked-UDF scores at `points`, when the source has a UDF.
    fn udf_scores(&self, points: &[Point3], flags: Flags) -> Result<Option<Vec<Vec<f64>>>> {
        match self {
            Source::Learned { udf: Some(net), .. } => Ok(Some(net.eval_many_all(points)?)),
            Source::Analytic(rec) if flags.semantic && rec.keypoints.is_labeled() => Ok(Some(
                points
                    .iter()
                    .map(|&p| stacked_udf(p, &rec.keypoints))
                    .collect::<implicit_keypoints::Result<_>>()?,
            )),
            _ => Ok(None),
        }
    }

    fn name(&self) -> &'static str {
        match self {
            Source::Analytic(_) => "analytic",
            Source::Learned { .. } => "learned",
        }
    }
}

#[derive(Serialize)]
struct ExtractEntry {
    model_id: String,
    source: &'static str,
    mesh_vertices: usize,
    mesh_triangles: usize,
    components: usize,
    keypoints: usize,
    labeled: bool,
    warnings: Vec<String>,
}

/// Options of `extract` beyond the shared flags.
#[derive(Debug, Clone, Copy, Default)]
pub struct ExtractOptions {
    pub save_grids: bool,
}

/// Marching Cubes on each fitted field, then keypoint extraction.
pub fn extract(dir: &RunDir, cfg: &RunConfig, flags: Flags, opts: ExtractOptions) -> Result<()> {
    let shapes = dir.ground_truth()?;
    let ext_cfg = cfg.extraction_config();
    let entries = shapes
        .par_iter()
        .map(|(id, gt)| -> Result<ExtractEntry> {
            let source = load_source(dir, id, flags)?;
            let res = [cfg.resolution; 3];
            let grid = match &source {
                Source::Analytic(rec) => {
                    let field = SphereField::new(rec.keypoints.clone(), cfg.radius)?;
                    eval_grid(&field as &dyn ScalarField, res, Aabb::unit())?
                }
                Source::Learned { sdf, .. } => eval_grid(sdf as &dyn ScalarField, res, Aabb::unit())?,
            };
            if opts.save_grids {
                write_grid(&dir.root.join("grids").join(format!("{id}.ikpg")), &grid)?;
            }
            let mesh = marching_cubes(&grid, 0.0)?;
            let extraction = extract_keypoints_with_report(&mesh, &ext_cfg)?;
            let points = extraction.keypoints.points.clone();
            let scores = source.udf_scores(&points, flags)?;
            if flags.semantic && scores.is_none() {
                return Err(invalid(format!(
                    "{id}: --semantic needs a UDF checkpoint or a labeled analytic record"
                )));
            }
            let keypoints = match &scores {
                Some(s) => {
                    let channels = match &source {
                        Source::Learned { udf: Some(net), .. } => net.out_dim(),
                        Source::Analytic(rec) => rec.keypoints.label_count,
                        _ => unreachable!(),
                    };
                    KeypointSet::with_labels(points, s.iter().map(|v| label_of(v)).collect(), channels)?
                }
                None => KeypointSet::new(points),
            };
            if keypoints.is_empty() {
                warn!("{id}: no keypoints extracted");
            }
            let pred = KeypointFile {
                model_id: id.clone(),
                category: gt.category.clone(),
                radius: cfg.radius,
                keypoints,
            };
            write_keypoints(&dir.pred_file(id), &pred)?;
            write_obj(&dir.meshes().join(format!("{id}.obj")), &mesh)?;
            write_ply(&dir.meshes().join(format!("{id}.ply")), &mesh)?;
            Ok(ExtractEntry {
                model_id: id.clone(),
                source: source.name(),
                mesh_vertices: mesh.vertices.len(),
                mesh_triangles: mesh.triangles.len(),
                components: extraction.components,
                keypoints: pred.keypoints.len(),
                labeled: pred.keypoints.is_labeled(),
                warnings: extraction.warnings,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    write_manifest(dir, "extract", cfg, entries)
}

/// Score predictions against ground truth and write `report.json` and
/// `report.txt`.
pub fn eval(dir: &RunDir, cfg: &RunConfig, flags: Flags) -> Result<MetricReport> {
    let gt = dir.ground_truth()?;
    if gt.is_empty() {
        return Err(invalid(format!("no ground truth in {}", dir.gt().display())));
    }
    let mut preds = Vec::with_capacity(gt.len());
    for (id, _) in &gt {
        let path = dir.pred_file(id);
        if !path.exists() {
            return Err(invalid(format!("{id}: missing prediction {}", path.display())));
        }
        preds.push(read_keypoints(&path)?);
    }
    let mut scores = Vec::new();
    let mut labels = Vec::new();
    if flags.semantic {
        for (id, file) in &gt {
            let Some(gt_labels) = &file.keypoints.labels else {
                return Err(invalid(format!("{id}: --semantic needs labeled ground truth")));
            };
            let source = load_source(dir, id, flags)?;
            let s = source.udf_scores(&file.keypoints.points, flags)?.ok_or_else(|| {
                invalid(format!(
                    "{id}: --semantic needs a UDF checkpoint or a labeled analytic record"
                ))
            })?;
            scores.extend(s);
            labels.extend(gt_labels.iter().copied());
        }
    }
    let shapes: Vec<ShapeEval<'_>> = gt
        .iter()
        .zip(&preds)
        .map(|((id, g), p)| ShapeEval {
            model_id: id,
            category: &g.category,
            pred: &p.keypoints.points,
            gt: &g.keypoints.points,
        })
        .collect();
    let label_scores = flags.semantic.then_some((scores.as_slice(), labels.as_slice()));
    let report = MetricReport::build(&shapes, &cfg.thresholds(), cfg.metrics.match_rule, label_scores)?;
    write_json(&dir.root.join("report.json"), &report)?;
    write_file(&dir.root.join("report.txt"), report.to_text().as_bytes())?;
    write_manifest(dir, "eval", cfg, Vec::<()>::new())?;
    Ok(report)
}

/// `gen`, `fit`, `extract` and `eval` in sequence.
pub fn pipeline(dir: &RunDir, cfg: &RunConfig, flags: Flags) -> Result<MetricReport> {
    gen(dir, cfg, flags)?;
    fit(dir, cfg, flags)?;
    extract(dir, cfg, flags, ExtractOptions::default())?;
    eval(dir, cfg, flags)
}
