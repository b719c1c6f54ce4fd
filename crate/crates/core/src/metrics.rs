//! Keypoint set metrics and report aggregation.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Aabb, Point3};

/// Reference sets at least this large are searched through a uniform grid.
pub const GRID_SEARCH_MIN_POINTS: usize = 512;

/// Squared distance from each `from` point to its nearest `to` point.
///
/// The grid path evaluates exactly the same squared distances as the brute
/// force one, so both give bitwise-identical results.
pub fn nearest_squared_distances(from: &[Point3], to: &[Point3]) -> Vec<f64> {
    if to.len() < GRID_SEARCH_MIN_POINTS {
        return from
            .iter()
            .map(|&p| to.iter().map(|&q| p.distance_squared(q)).fold(f64::INFINITY, f64::min))
            .collect();
    }
    let grid = PointGrid::new(to);
    from.iter().map(|&p| grid.nearest_squared(p)).collect()
}

struct PointGrid<'a> {
    points: &'a [Point3],
    origin: Point3,
    cell: f64,
    dims: [i64; 3],
    /// Point indices sorted by cell, with `starts[c]..starts[c + 1]` per cell.
    order: Vec<usize>,
    starts: Vec<usize>,
}

impl<'a> PointGrid<'a> {
    fn new(points: &'a [Point3]) -> Self {
        let bbox = Aabb::from_points(points).expect("nonempty reference set");
        let ext = bbox.extent();
        let longest = ext.x.max(ext.y).max(ext.z).max(1e-12);
        // about two points per cell along a cube of the longest side
        let cells_per_axis = ((points.len() as f64 / 2.0).cbrt().ceil() as i64).max(1);
        let cell = longest / cells_per_axis as f64;
        let dims = [ext.x, ext.y, ext.z].map(|e| ((e / cell).floor() as i64 + 1).max(1));
        let mut grid = Self {
            points,
            origin: bbox.min,
            cell,
            dims,
            order: Vec::new(),
            starts: Vec::new(),
        };
        let n_cells = (dims[0] * dims[1] * dims[2]) as usize;
        let cell_of: Vec<usize> = points.iter().map(|&p| grid.linear(grid.cell_coords(p))).collect();
        let mut counts = vec![0usize; n_cells + 1];
        for &c in &cell_of {
            counts[c + 1] += 1;
        }
        for c in 0..n_cells {
            counts[c + 1] += counts[c];
        }
        let mut fill = counts.clone();
        let mut order = vec![0; points.len()];
        for (i, &c) in cell_of.iter().enumerate() {
            order[fill[c]] = i;
            fill[c] += 1;
        }
        grid.order = order;
        grid.starts = counts;
        grid
    }

    fn cell_coords(&self, p: Point3) -> [i64; 3] {
        [0, 1, 2].map(|a| ((p[a] - self.origin[a]) / self.cell).floor() as i64)
    }

    fn clamp(&self, c: [i64; 3]) -> [i64; 3] {
        [0, 1, 2].map(|a| c[a].clamp(0, self.dims[a] - 1))
    }

    fn linear(&self, c: [i64; 3]) -> usize {
        let c = self.clamp(c);
        ((c[2] * self.dims[1] + c[1]) * self.dims[0] + c[0]) as usize
    }

    fn nearest_squared(&self, p: Point3) -> f64 {
        let q = self.clamp(self.cell_coords(p));
        // distance from p to the clamped cell, nonzero for queries outside the grid
        let lo = [0, 1, 2].map(|a| self.origin[a] + q[a] as f64 * self.cell);
        let outside: f64 = (0..3)
            .map(|a| {
                let d = (lo[a] - p[a]).max(p[a] - (lo[a] + self.cell)).max(0.0);
                d * d
            })
            .sum();
        let max_ring = self.dims.iter().copied().max().unwrap();
        let mut best = f64::INFINITY;
        for r in 0..=max_ring {
            for i in q[0] - r..=q[0] + r {
                for j in q[1] - r..=q[1] + r {
                    for k in q[2] - r..=q[2] + r {
                        let on_shell = (i - q[0]).abs() == r || (j - q[1]).abs() == r || (k - q[2]).abs() == r;
                        if !on_shell
                            || i < 0
                            || j < 0
                            || k < 0
                            || i >= self.dims[0]
                            || j >= self.dims[1]
                            || k >= self.dims[2]
                        {
                            continue;
                        }
                        let c = self.linear([i, j, k]);
                        for &idx in &self.order[self.starts[c]..self.starts[c + 1]] {
                            best = best.min(p.distance_squared(self.points[idx]));
                        }
                    }
                }
            }
            // cells beyond ring r are at least r cells (plus the outside gap) away
            let reach = r as f64 * self.cell;
            if best.is_finite() && best <= reach * reach + outside {
                break;
            }
        }
        best
    }
}

fn check_nonempty(a: &[Point3], b: &[Point3]) -> Result<()> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyPointSet);
    }
    Ok(())
}

/// Bidirectional Hausdorff distance: the mean of the two directed
/// max-min distances.
pub fn bhd(s1: &[Point3], s2: &[Point3]) -> Result<f64> {
    check_nonempty(s1, s2)?;
    let a = nearest_squared_distances(s1, s2).into_iter().fold(0.0, f64::max).sqrt();
    let b = nearest_squared_distances(s2, s1).into_iter().fold(0.0, f64::max).sqrt();
    Ok(0.5 * (a + b))
}

/// Chamfer distance with squared norms, averaged per direction and summed.
pub fn cd(s1: &[Point3], s2: &[Point3]) -> Result<f64> {
    check_nonempty(s1, s2)?;
    let mean = |v: Vec<f64>| {
        let n = v.len() as f64;
        v.into_iter().sum::<f64>() / n
    };
    Ok(mean(nearest_squared_distances(s1, s2)) + mean(nearest_squared_distances(s2, s1)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MatchRule {
    /// Pairs matched in ascending distance order, each point used once.
    Greedy,
    /// Every point within reach of the other set counts; true positives are
    /// the smaller of the two per-side counts.
    OneToMany,
}

/// IoU of predicted against ground-truth keypoints at each threshold:
/// `TP / (|pred| + |gt| - TP)`.
pub fn miou_curve(pred: &[Point3], gt: &[Point3], thresholds: &[f64]) -> Result<Vec<(f64, f64)>> {
    miou_curve_with(pred, gt, thresholds, MatchRule::Greedy)
}

pub fn miou_curve_with(pred: &[Point3], gt: &[Point3], thresholds: &[f64], rule: MatchRule) -> Result<Vec<(f64, f64)>> {
    if thresholds.is_empty() {
        return Err(Error::Invalid("no thresholds".into()));
    }
    if thresholds.iter().any(|t| !(*t >= 0.0)) || thresholds.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Invalid("thresholds must be nonnegative and ascending".into()));
    }
    let union_base = (pred.len() + gt.len()) as f64;
    let iou = |tp: usize| {
        if union_base == 0.0 {
            1.0
        } else {
            tp as f64 / (union_base - tp as f64)
        }
    };

    let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(pred.len() * gt.len());
    for (i, &p) in pred.iter().enumerate() {
        for (j, &g) in gt.iter().enumerate() {
            pairs.push((p.distance(g), i, j));
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    let mut out = Vec::with_capacity(thresholds.len());
    match rule {
        MatchRule::Greedy => {
            let mut used_p = vec![false; pred.len()];
            let mut used_g = vec![false; gt.len()];
            let mut tp = 0;
            let mut next = 0;
            for &t in thresholds {
                while next < pairs.len() && pairs[next].0 <= t {
                    let (_, i, j) = pairs[next];
                    if !used_p[i] && !used_g[j] {
                        used_p[i] = true;
                        used_g[j] = true;
                        tp += 1;
                    }
                    next += 1;
                }
                out.push((t, iou(tp)));
            }
        }
        MatchRule::OneToMany => {
            let near_p: Vec<f64> = nearest_squared_distances(pred, gt).into_iter().map(f64::sqrt).collect();
            let near_g: Vec<f64> = nearest_squared_distances(gt, pred).into_iter().map(f64::sqrt).collect();
            for &t in thresholds {
                let tp_p = near_p.iter().filter(|&&d| d <= t).count();
                let tp_g = near_g.iter().filter(|&&d| d <= t).count();
                out.push((t, iou(tp_p.min(tp_g))));
            }
        }
    }
    Ok(out)
}

/// `n` evenly spaced thresholds from 0 to `max` inclusive.
pub fn default_thresholds(max: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| max * i as f64 / (n - 1).max(1) as f64).collect()
}

pub const TOPK: [usize; 3] = [1, 3, 5];

/// Fraction of keypoints whose ground-truth label is among the `k` smallest
/// channels of their stacked-UDF scores, for `k` in 1, 3, 5. Ties rank the
/// lower channel first.
pub fn topk_accuracy(scores: &[Vec<f64>], gt_labels: &[usize]) -> Result<BTreeMap<usize, f64>> {
    if scores.len() != gt_labels.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} score vectors for {} labels",
            scores.len(),
            gt_labels.len()
        )));
    }
    if scores.is_empty() {
        return Err(Error::EmptyPointSet);
    }
    let mut hits = [0usize; TOPK.len()];
    for (s, &label) in scores.iter().zip(gt_labels) {
        if label >= s.len() {
            return Err(Error::ShapeMismatch(format!(
                "label {label} outside {} channels",
                s.len()
            )));
        }
        let v = s[label];
        let rank = s
            .iter()
            .enumerate()
            .filter(|&(c, &x)| x < v || (x == v && c < label))
            .count();
        for (h, &k) in hits.iter_mut().zip(&TOPK) {
            if rank < k {
                *h += 1;
            }
        }
    }
    let n = scores.len() as f64;
    Ok(TOPK.iter().zip(hits).map(|(&k, h)| (k, h as f64 / n)).collect())
}

/// Scores of one shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeScore {
    pub model_id: String,
    pub category: String,
    pub predicted: usize,
    pub ground_truth: usize,
    /// `None` when no keypoint was predicted.
    pub bhd: Option<f64>,
    pub cd: Option<f64>,
    pub miou: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryScore {
    pub shapes: usize,
    pub scored: usize,
    /// `None` when no shape of the category was scored.
    pub bhd: Option<f64>,
    pub cd: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub bhd: Option<f64>,
    pub cd: Option<f64>,
    pub shapes: usize,
    /// Shapes with no predicted keypoints; excluded from the BHD/CD means.
    pub failed: usize,
    pub categories: BTreeMap<String, CategoryScore>,
    pub miou_curve: Vec<(f64, f64)>,
    pub topk: BTreeMap<usize, f64>,
    pub per_shape: Vec<ShapeScore>,
}

/// Input of one shape to [`MetricReport::build`].
pub struct ShapeEval<'a> {
    pub model_id: &'a str,
    pub category: &'a str,
    pub pred: &'a [Point3],
    pub gt: &'a [Point3],
}

fn mean(v: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| s / n as f64)
}

impl MetricReport {
    /// Score every shape and aggregate. `label_scores` carries per-keypoint
    /// stacked-UDF scores and ground-truth labels for the top-k table.
    pub fn build(
        shapes: &[ShapeEval<'_>],
        thresholds: &[f64],
        rule: MatchRule,
        label_scores: Option<(&[Vec<f64>], &[usize])>,
    ) -> Result<Self> {
        let mut per_shape = Vec::with_capacity(shapes.len());
        for s in shapes {
            if s.gt.is_empty() {
                return Err(Error::Invalid(format!(
                    "shape {} has no ground-truth keypoints",
                    s.model_id
                )));
            }
            let (b, c) = if s.pred.is_empty() {
                (None, None)
            } else {
                (Some(bhd(s.pred, s.gt)?), Some(cd(s.pred, s.gt)?))
            };
            let miou = miou_curve_with(s.pred, s.gt, thresholds, rule)?
                .into_iter()
                .map(|(_, v)| v)
                .collect();
            per_shape.push(ShapeScore {
                model_id: s.model_id.to_string(),
                category: s.category.to_string(),
                predicted: s.pred.len(),
                ground_truth: s.gt.len(),
                bhd: b,
                cd: c,
                miou,
            });
        }
        let mut categories = BTreeMap::new();
        let names: std::collections::BTreeSet<&str> = per_shape.iter().map(|s| s.category.as_str()).collect();
        for name in names {
            let members: Vec<&ShapeScore> = per_shape.iter().filter(|s| s.category == name).collect();
            categories.insert(
                name.to_string(),
                CategoryScore {
                    shapes: members.len(),
                    scored: members.iter().filter(|s| s.bhd.is_some()).count(),
                    bhd: mean(members.iter().filter_map(|s| s.bhd)),
                    cd: mean(members.iter().filter_map(|s| s.cd)),
                },
            );
        }
        let miou_curve = thresholds
            .iter()
            .enumerate()
            .map(|(i, &t)| (t, mean(per_shape.iter().map(|s| s.miou[i])).unwrap_or(0.0)))
            .collect();
        let topk = match label_scores {
            Some((scores, labels)) => topk_accuracy(scores, labels)?,
            None => BTreeMap::new(),
        };
        Ok(Self {
            bhd: mean(per_shape.iter().filter_map(|s| s.bhd)),
            cd: mean(per_shape.iter().filter_map(|s| s.cd)),
            shapes: per_shape.len(),
            failed: per_shape.iter().filter(|s| s.bhd.is_none()).count(),
            categories,
            miou_curve,
            topk,
            per_shape,
        })
    }

    /// Human-readable report. Reals are printed with 17 significant digits
    /// so the text and JSON forms carry the same values.
    pub fn to_text(&self) -> String {
        let f = |x: f64| format!("{x:.16e}");
        let opt = |x: Option<f64>| x.map(f).unwrap_or_else(|| "-".into());
        let mut s = String::new();
        let _ = writeln!(s, "shapes {} failed {}", self.shapes, self.failed);
        let _ = writeln!(s, "BHD {}", opt(self.bhd));
        let _ = writeln!(s, "CD {}", opt(self.cd));
        let _ = writeln!(s, "\nAverage BHD and CD per category");
        let _ = writeln!(s, "category\tshapes\tscored\tBHD\tCD");
        for (name, c) in &self.categories {
            let _ = writeln!(s, "{name}\t{}\t{}\t{}\t{}", c.shapes, c.scored, opt(c.bhd), opt(c.cd));
        }
        let _ = writeln!(s, "\nmIoU curve");
        let _ = writeln!(s, "threshold\tmIoU");
        for (t, v) in &self.miou_curve {
            let _ = writeln!(s, "{}\t{}", f(*t), f(*v));
        }
        if !self.topk.is_empty() {
            let _ = writeln!(s, "\nlabel accuracy");
            for (k, v) in &self.topk {
                let _ = writeln!(s, "Top-{k}\t{}", f(*v));
            }
        }
        let _ = writeln!(s, "\nper shape");
        let _ = writeln!(s, "model_id\tcategory\tpredicted\tground_truth\tBHD\tCD");
        for p in &self.per_shape {
            let _ = writeln!(
                s,
                "{}\t{}\t{}\t{}\t{}\t{}",
                p.model_id,
                p.category,
                p.predicted,
                p.ground_truth,
                opt(p.bhd),
                opt(p.cd)
            );
        }
        s
    }
}
