//! Recovery of equal-radius sphere centers from sphere-mesh vertices.
//!
//! Per connected component: Hough voting for centers on a bin lattice
//! (step 1), clustering of well-supported bins into candidates (step 2),
//! alternating nearest-center partition and closed-form sphere fits
//! (step 3), and merging of centers closer than one radius followed by
//! re-refinement (step 4).

use std::collections::VecDeque;

use log::warn;
use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Aabb, KeypointSet, Point3, TriangleMesh, DEFAULT_RADIUS};
use crate::isosurface::split_components;

/// Vertex count of the training spheres that the default vote threshold was
/// chosen for; used by the optional density normalization.
pub const REFERENCE_SPHERE_VERTICES: usize = 2562;

/// Largest accepted covariance condition number in the sphere fit.
pub const MAX_CONDITION: f64 = 1e8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VoteMode {
    /// Each point votes for bins at distance `radius` (within half a bin).
    Annulus,
    /// Each point votes for bins within half a bin of itself.
    Literal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CandidateMode {
    /// One candidate per cluster, at its best bin.
    Peak,
    /// Every bin of a cluster that no 26-neighbour beats. Keeps intersecting
    /// spheres, whose vote blobs fuse, apart.
    LocalMaxima,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExtractionConfig {
    pub grid_size: f64,
    pub radius: f64,
    pub epsilon: f64,
    pub n_vote: f64,
    pub n_max: usize,
    pub max_merge_rounds: usize,
    pub vote_mode: VoteMode,
    pub candidates: CandidateMode,
    /// Scale `n_vote` by component vertex count / 2562.
    pub density_normalization: bool,
}

impl Default for ExtractionConfig {
    fn default() -> Self {
        Self {
            grid_size: 1.0 / 32.0,
            radius: DEFAULT_RADIUS,
            epsilon: 0.01,
            n_vote: 80.0,
            n_max: 10,
            max_merge_rounds: 10,
            vote_mode: VoteMode::Annulus,
            candidates: CandidateMode::LocalMaxima,
            density_normalization: false,
        }
    }
}

impl ExtractionConfig {
    pub fn with_radius(radius: f64) -> Self {
        Self {
            radius,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [self.grid_size, self.radius, self.epsilon, self.n_vote];
        if positive.iter().any(|v| !(*v > 0.0 && v.is_finite())) || self.n_max == 0 {
            return Err(Error::Invalid("extraction parameters must be positive".into()));
        }
        Ok(())
    }
}

/// Vote counts on a lattice of cubic bins of side `cell`; bin `(i, j, k)` is
/// centered at `origin + (i + 1/2, j + 1/2, k + 1/2) * cell` and stored at
/// `(i * dims[1] + j) * dims[2] + k`.
#[derive(Debug, Clone, PartialEq)]
pub struct VoteGrid {
    pub origin: Point3,
    pub cell: f64,
    pub dims: [usize; 3],
    pub votes: Vec<u32>,
}

impl VoteGrid {
    pub fn linear(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.dims[1] + j) * self.dims[2] + k
    }

    pub fn unlinear(&self, idx: usize) -> [usize; 3] {
        let k = idx % self.dims[2];
        let ij = idx / self.dims[2];
        [ij / self.dims[1], ij % self.dims[1], k]
    }

    pub fn bin_center(&self, i: usize, j: usize, k: usize) -> Point3 {
        self.origin + Point3::new(i as f64 + 0.5, j as f64 + 0.5, k as f64 + 0.5) * self.cell
    }

    /// Bin holding the most votes; lowest linear index wins ties.
    pub fn argmax(&self) -> Option<[usize; 3]> {
        let mut best: Option<usize> = None;
        for (i, &v) in self.votes.iter().enumerate() {
            if best.is_none_or(|b| v > self.votes[b]) {
                best = Some(i);
            }
        }
        best.map(|i| self.unlinear(i))
    }
}

/// Step 1: voxelize the bounding box of `points`, expanded by the radius,
/// and accumulate center votes.
pub fn hough_vote(points: &[Point3], cfg: &ExtractionConfig) -> Result<VoteGrid> {
    cfg.validate()?;
    let bbox = Aabb::from_points(points).ok_or(Error::EmptyPointSet)?;
    let bbox = bbox.expanded(cfg.radius);
    let d = cfg.grid_size;
    let ext = bbox.extent();
    let dims = [ext.x, ext.y, ext.z].map(|e| ((e / d).ceil() as usize).max(1));
    let mut grid = VoteGrid {
        origin: bbox.min,
        cell: d,
        dims,
        votes: vec![0; dims[0] * dims[1] * dims[2]],
    };

    let half = d / 2.0;
    let reach = match cfg.vote_mode {
        VoteMode::Annulus => cfg.radius + half,
        VoteMode::Literal => half,
    };
    for &p in points {
        let lo = |a: usize| (((p[a] - reach - grid.origin[a]) / d - 0.5).floor().max(0.0)) as usize;
        let hi = |a: usize| {
            let h = ((p[a] + reach - grid.origin[a]) / d - 0.5).ceil();
            (h.max(0.0) as usize).min(dims[a] - 1)
        };
        for i in lo(0)..=hi(0) {
            for j in lo(1)..=hi(1) {
                for k in lo(2)..=hi(2) {
                    let dist = grid.bin_center(i, j, k).distance(p);
                    let hit = match cfg.vote_mode {
                        VoteMode::Annulus => (dist - cfg.radius).abs() <= half,
                        VoteMode::Literal => dist <= half,
                    };
                    if hit {
                        let idx = grid.linear(i, j, k);
                        grid.votes[idx] += 1;
                    }
                }
            }
        }
    }
    Ok(grid)
}

/// Step 2 with an explicit threshold: 26-connected clusters of bins with
/// more than `threshold` votes. [`CandidateMode::Peak`] keeps each cluster's
/// best bin (lowest index on ties); [`CandidateMode::LocalMaxima`] keeps
/// every bin not beaten by a neighbour, where an equal neighbour with a lower
/// index counts as beating it.
pub fn cluster_with_threshold(votes: &VoteGrid, threshold: f64, mode: CandidateMode) -> Vec<Point3> {
    let [nx, ny, nz] = votes.dims;
    let above = |idx: usize| f64::from(votes.votes[idx]) > threshold;
    let beats = |a: usize, b: usize| votes.votes[a] > votes.votes[b] || (votes.votes[a] == votes.votes[b] && a < b);
    let neighbours = |idx: usize| {
        let [i, j, k] = votes.unlinear(idx);
        let mut out = Vec::with_capacity(26);
        for di in -1i64..=1 {
            for dj in -1i64..=1 {
                for dk in -1i64..=1 {
                    let (a, b, c) = (i as i64 + di, j as i64 + dj, k as i64 + dk);
                    if (di, dj, dk) == (0, 0, 0)
                        || a < 0
                        || b < 0
                        || c < 0
                        || a >= nx as i64
                        || b >= ny as i64
                        || c >= nz as i64
                    {
                        continue;
                    }
                    out.push(votes.linear(a as usize, b as usize, c as usize));
                }
            }
        }
        out
    };
    let mut seen = vec![false; votes.votes.len()];
    let mut candidates = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..votes.votes.len() {
        if seen[start] || !above(start) {
            continue;
        }
        seen[start] = true;
        queue.push_back(start);
        let mut members = Vec::new();
        while let Some(idx) = queue.pop_front() {
            members.push(idx);
            for n in neighbours(idx) {
                if !seen[n] && above(n) {
                    seen[n] = true;
                    queue.push_back(n);
                }
            }
        }
        members.sort_unstable();
        let picked: Vec<usize> = match mode {
            CandidateMode::Peak => {
                let mut best = members[0];
                for &m in &members[1..] {
                    if beats(m, best) {
                        best = m;
                    }
                }
                vec![best]
            }
            CandidateMode::LocalMaxima => members
                .iter()
                .copied()
                .filter(|&m| neighbours(m).into_iter().all(|n| !beats(n, m)))
                .collect(),
        };
        for idx in picked {
            let [i, j, k] = votes.unlinear(idx);
            candidates.push(votes.bin_center(i, j, k));
        }
    }
    candidates
}

/// Step 2 at the configured threshold `n_vote`.
pub fn cluster_candidates(votes: &VoteGrid, cfg: &ExtractionConfig) -> Vec<Point3> {
    cluster_with_threshold(votes, cfg.n_vote, cfg.candidates)
}

/// Closed-form minimum-variance sphere center
/// `mean + 1/2 Cov^-1 gamma`, with `Cov` the population covariance and
/// `gamma = mean((x - mean) |x - mean|^2)`.
pub fn best_sphere_center(points: &[Point3]) -> Result<Point3> {
    if points.len() < 4 {
        return Err(Error::DegeneratePointSet(format!(
            "{} points, need at least 4",
            points.len()
        )));
    }
    let n = points.len() as f64;
    let mean = Point3::centroid(points).expect("nonempty");
    let mut cov = Matrix3::<f64>::zeros();
    let mut gamma = Vector3::<f64>::zeros();
    for &p in points {
        let y = p - mean;
        let v = Vector3::new(y.x, y.y, y.z);
        cov += v * v.transpose();
        gamma += v * y.norm_squared();
    }
    cov /= n;
    gamma /= n;

    let eig = SymmetricEigen::new(cov);
    let lo = eig.eigenvalues.min();
    let hi = eig.eigenvalues.max();
    if !(lo > 0.0) || hi / lo > MAX_CONDITION {
        return Err(Error::DegeneratePointSet(format!(
            "covariance condition number {:.3e}",
            hi / lo
        )));
    }
    let inv_gamma = eig.eigenvectors
        * Matrix3::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l))
        * eig.eigenvectors.transpose()
        * gamma;
    Ok(mean + Point3::new(inv_gamma.x, inv_gamma.y, inv_gamma.z) * 0.5)
}

/// Index of the nearest center; lowest index wins ties.
fn nearest(p: Point3, centers: &[Point3]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, &c) in centers.iter().enumerate() {
        let d = p.distance_squared(c);
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    best
}

/// Step 3: alternate nearest-center partitioning and closed-form refits for
/// at most `n_max` rounds, stopping once no center moves by `epsilon`.
/// Centers whose partition cannot be fitted are dropped.
pub fn refine_centers(points: &[Point3], candidates: &[Point3], cfg: &ExtractionConfig) -> Result<Vec<Point3>> {
    refine_centers_logged(points, candidates, cfg, &mut Vec::new())
}

fn refine_centers_logged(
    points: &[Point3],
    candidates: &[Point3],
    cfg: &ExtractionConfig,
    warnings: &mut Vec<String>,
) -> Result<Vec<Point3>> {
    if candidates.is_empty() {
        return Err(Error::NoValidCenters);
    }
    let mut centers = candidates.to_vec();
    for _ in 0..cfg.n_max {
        let mut parts: Vec<Vec<Point3>> = vec![Vec::new(); centers.len()];
        for &p in points {
            parts[nearest(p, &centers)].push(p);
        }
        let mut next = Vec::with_capacity(centers.len());
        let mut shift: f64 = 0.0;
        for (c, part) in centers.iter().zip(&parts) {
            match best_sphere_center(part) {
                Ok(n) => {
                    shift = shift.max(n.distance(*c));
                    next.push(n);
                }
                Err(e) => {
                    let msg = format!("dropping center {c:?}: {e}");
                    warn!("{msg}");
                    warnings.push(msg);
                }
            }
        }
        if next.is_empty() {
            return Err(Error::NoValidCenters);
        }
        let dropped = next.len() != centers.len();
        centers = next;
        if shift < cfg.epsilon && !dropped {
            break;
        }
    }
    Ok(centers)
}

/// Step 4: replace every group of centers connected by distances below the
/// radius with its centroid. Groups are ordered by their first member.
pub fn merge_close(centers: &[Point3], cfg: &ExtractionConfig) -> (Vec<Point3>, bool) {
    let n = centers.len();
    let mut group: Vec<usize> = (0..n).collect();
    fn root(group: &mut [usize], mut x: usize) -> usize {
        while group[x] != x {
            group[x] = group[group[x]];
            x = group[x];
        }
        x
    }
    let mut merged = false;
    for i in 0..n {
        for j in i + 1..n {
            if centers[i].distance(centers[j]) < cfg.radius {
                let (a, b) = (root(&mut group, i), root(&mut group, j));
                if a != b {
                    group[a.max(b)] = a.min(b);
                }
                merged = true;
            }
        }
    }
    if !merged {
        return (centers.to_vec(), false);
    }
    let mut members: Vec<Vec<Point3>> = vec![Vec::new(); n];
    for (i, &c) in centers.iter().enumerate() {
        let r = root(&mut group, i);
        members[r].push(c);
    }
    let out = members
        .iter()
        .filter(|m| !m.is_empty())
        .map(|m| Point3::centroid(m).expect("nonempty group"))
        .collect();
    (out, true)
}

/// Keypoints and the non-fatal problems met while extracting them.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Extraction {
    pub keypoints: KeypointSet,
    pub warnings: Vec<String>,
    pub components: usize,
}

fn extract_component(points: &[Point3], cfg: &ExtractionConfig, warnings: &mut Vec<String>) -> Vec<Point3> {
    if points.len() < 4 {
        warnings.push(format!("component with {} vertices skipped", points.len()));
        return Vec::new();
    }
    let votes = match hough_vote(points, cfg) {
        Ok(v) => v,
        Err(e) => {
            warnings.push(format!("voting failed: {e}"));
            return Vec::new();
        }
    };
    let mut threshold = cfg.n_vote;
    if cfg.density_normalization {
        threshold *= points.len() as f64 / REFERENCE_SPHERE_VERTICES as f64;
    }
    let mut candidates = cluster_with_threshold(&votes, threshold, cfg.candidates);
    if candidates.is_empty() {
        candidates = cluster_with_threshold(&votes, threshold / 2.0, cfg.candidates);
    }
    if candidates.is_empty() {
        let best = votes
            .argmax()
            .map(|[i, j, k]| votes.votes[votes.linear(i, j, k)])
            .unwrap_or(0);
        warnings.push(format!(
            "component with {} vertices has no bin above {} votes (max {best}); no keypoints",
            points.len(),
            threshold / 2.0
        ));
        return Vec::new();
    }

    let mut centers = match refine_centers_logged(points, &candidates, cfg, warnings) {
        Ok(c) => c,
        Err(e) => {
            warnings.push(format!("component with {} vertices: {e}", points.len()));
            return Vec::new();
        }
    };
    let mut rounds = 0;
    loop {
        let (merged, changed) = merge_close(&centers, cfg);
        if !changed {
            break;
        }
        if rounds == cfg.max_merge_rounds {
            warnings.push(format!("merge/refine did not settle after {rounds} rounds"));
            centers = merged;
            break;
        }
        centers = match refine_centers_logged(points, &merged, cfg, warnings) {
            Ok(c) => c,
            Err(_) => merged,
        };
        rounds += 1;
    }
    centers
}

/// Run the full extraction on every connected component of a sphere mesh.
pub fn extract_keypoints_with_report(mesh: &TriangleMesh, cfg: &ExtractionConfig) -> Result<Extraction> {
    cfg.validate()?;
    let mut warnings = Vec::new();
    let components = split_components(mesh);
    let mut centers = Vec::new();
    for comp in &components {
        centers.extend(extract_component(&comp.vertices, cfg, &mut warnings));
    }
    // centers from different components can still be closer than a radius
    // when the field has spurious pieces
    loop {
        let (merged, changed) = merge_close(&centers, cfg);
        centers = merged;
        if !changed {
            break;
        }
    }
    for w in &warnings {
        warn!("{w}");
    }
    Ok(Extraction {
        keypoints: KeypointSet::new(centers),
        warnings,
        components: components.len(),
    })
}

/// Keypoints of a sphere mesh; an empty mesh yields an empty set.
pub fn extract_keypoints(mesh: &TriangleMesh, cfg: &ExtractionConfig) -> Result<KeypointSet> {
    Ok(extract_keypoints_with_report(mesh, cfg)?.keypoints)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::icosphere;

    fn sphere_points(c: Point3, r: f64) -> Vec<Point3> {
        icosphere(c, r, 4).vertices
    }

    #[test]
    fn tetrahedron_center() {
        let s = 1.0 / 3f64.sqrt();
        let pts = [[s, s, s], [s, -s, -s], [-s, s, -s], [-s, -s, s]].map(Point3::from_array);
        let c = best_sphere_center(&pts).unwrap();
        assert!(c.norm() < 1e-15);
    }

    #[test]
    fn icosphere_center() {
        let truth = Point3::new(0.1, 0.2, 0.3);
        let c = best_sphere_center(&sphere_points(truth, 0.08)).unwrap();
        assert!(c.distance(truth) < 1e-9);
    }

    #[test]
    fn degenerate_sets() {
        let plane: Vec<Point3> = (0..10).map(|i| Point3::new(i as f64, (i * i) as f64, 0.0)).collect();
        assert!(matches!(best_sphere_center(&plane), Err(Error::DegeneratePointSet(_))));
        assert!(best_sphere_center(&plane[..3]).is_err());
    }

    #[test]
    fn single_sphere_votes_peak_at_center() {
        let truth = Point3::new(0.013, -0.27, 0.4);
        let pts = sphere_points(truth, 0.08);
        let cfg = ExtractionConfig::default();
        let votes = hough_vote(&pts, &cfg).unwrap();
        let [i, j, k] = votes.argmax().unwrap();
        let best = votes.bin_center(i, j, k);
        assert!(best.distance(truth) <= 3f64.sqrt() * cfg.grid_size / 2.0 + 1e-12);
        let cands = cluster_candidates(&votes, &cfg);
        assert_eq!(cands.len(), 1);
        assert!(cands[0].distance(truth) <= 3f64.sqrt() * cfg.grid_size / 2.0 + 1e-12);
    }

    #[test]
    fn single_point_votes_on_a_shell() {
        let cfg = ExtractionConfig::default();
        let p = Point3::new(0.3, 0.3, 0.3);
        let votes = hough_vote(&[p], &cfg).unwrap();
        let mut n = 0;
        for idx in 0..votes.votes.len() {
            if votes.votes[idx] > 0 {
                let [i, j, k] = votes.unlinear(idx);
                let d = votes.bin_center(i, j, k).distance(p);
                assert!(d >= cfg.radius - cfg.grid_size / 2.0 && d <= cfg.radius + cfg.grid_size / 2.0);
                n += 1;
            }
        }
        assert!(n > 0);
    }

    #[test]
    fn doubling_points_doubles_votes() {
        let cfg = ExtractionConfig::default();
        let pts = sphere_points(Point3::new(0.1, 0.0, 0.0), 0.08);
        let once = hough_vote(&pts, &cfg).unwrap();
        let twice_pts: Vec<Point3> = pts.iter().chain(&pts).copied().collect();
        let twice = hough_vote(&twice_pts, &cfg).unwrap();
        assert_eq!(once.dims, twice.dims);
        assert!(once.votes.iter().zip(&twice.votes).all(|(a, b)| 2 * a == *b));
    }

    #[test]
    fn below_threshold_gives_no_candidates() {
        let cfg = ExtractionConfig {
            n_vote: 1e9,
            ..Default::default()
        };
        let votes = hough_vote(&sphere_points(Point3::ORIGIN, 0.08), &cfg).unwrap();
        assert!(cluster_candidates(&votes, &cfg).is_empty());
    }

    #[test]
    fn two_spheres_two_clusters() {
        let a = Point3::new(-0.25, 0.0, 0.0);
        let b = Point3::new(0.25, 0.0, 0.0);
        let pts: Vec<Point3> = sphere_points(a, 0.08)
            .into_iter()
            .chain(sphere_points(b, 0.08))
            .collect();
        let cfg = ExtractionConfig::default();
        let cands = cluster_candidates(&hough_vote(&pts, &cfg).unwrap(), &cfg);
        assert_eq!(cands.len(), 2);
    }

    #[test]
    fn refinement_is_exact_on_exact_vertices() {
        let cfg = ExtractionConfig::default();
        let truth = Point3::new(0.3, -0.1, 0.2);
        let pts = sphere_points(truth, 0.08);
        let one = refine_centers(&pts, &[truth + Point3::new(0.05, -0.04, 0.07)], &cfg).unwrap();
        assert!(one[0].distance(truth) < 1e-12);

        let a = Point3::new(-0.3, 0.1, 0.0);
        let b = Point3::new(0.3, -0.2, 0.1);
        let both: Vec<Point3> = sphere_points(a, 0.08)
            .into_iter()
            .chain(sphere_points(b, 0.08))
            .collect();
        let got = refine_centers(
            &both,
            &[a + Point3::new(0.02, 0.0, 0.0), b - Point3::new(0.0, 0.03, 0.0)],
            &cfg,
        )
        .unwrap();
        assert!(got[0].distance(a) < 1e-6);
        assert!(got[1].distance(b) < 1e-6);

        let again = refine_centers(&both, &got, &cfg).unwrap();
        for (x, y) in again.iter().zip(&got) {
            assert!(x.distance(*y) < 1e-12);
        }
        assert!(matches!(refine_centers(&both, &[], &cfg), Err(Error::NoValidCenters)));
    }

    #[test]
    fn merge_examples() {
        let cfg = ExtractionConfig::default();
        let a = Point3::ORIGIN;
        let (m, f) = merge_close(&[a, Point3::new(0.05, 0.0, 0.0)], &cfg);
        assert!(f);
        assert_eq!(m, vec![Point3::new(0.025, 0.0, 0.0)]);
        let far = [a, Point3::new(0.2, 0.0, 0.0)];
        assert_eq!(merge_close(&far, &cfg), (far.to_vec(), false));
        let chain = [a, Point3::new(0.05, 0.0, 0.0), Point3::new(0.10, 0.0, 0.0)];
        let (m, f) = merge_close(&chain, &cfg);
        assert!(f);
        assert_eq!(m.len(), 1);
        assert!((m[0].x - 0.05).abs() < 1e-15);
    }

    #[test]
    fn empty_mesh_gives_no_keypoints() {
        let k = extract_keypoints(&TriangleMesh::default(), &ExtractionConfig::default()).unwrap();
        assert!(k.is_empty());
    }
}
