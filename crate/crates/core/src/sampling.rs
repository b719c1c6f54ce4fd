//! Synthetic ground truth and training samples.
//!
//! A training set for one shape holds `n_volume` uniform samples of the box
//! with their analytic SDF, followed by `n_surface` on-sphere samples drawn
//! from the icosphere vertices of every keypoint (SDF 0, radial normal).

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{sphere_sdf, stacked_udf, Aabb, KeypointSet, Point3, SphereField, TriangleMesh};

/// Surface samples whose analytic SDF is below this lie inside another sphere.
pub const INTERIOR_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSample {
    pub point: Point3,
    pub sdf: f64,
    pub normal: Option<Point3>,
    pub udf: Option<Vec<f64>>,
}

impl TrainingSample {
    pub fn is_surface(&self) -> bool {
        self.normal.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SampleConfig {
    pub n_volume: usize,
    pub n_surface: usize,
    pub bounds: Aabb,
    pub icosphere_level: u32,
    pub seed: u64,
}

impl Default for SampleConfig {
    fn default() -> Self {
        Self {
            n_volume: 10_000,
            n_surface: 10_000,
            bounds: Aabb::unit(),
            icosphere_level: 4,
            seed: 0,
        }
    }
}

impl SampleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.icosphere_level > 6 {
            return Err(Error::Invalid(format!(
                "icosphere level {} outside [0, 6]",
                self.icosphere_level
            )));
        }
        if !self.bounds.is_valid() {
            return Err(Error::Invalid("sampling bounds must be a non-empty box".into()));
        }
        Ok(())
    }
}

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform_point(rng: &mut impl Rng, bounds: &Aabb) -> Point3 {
    Point3::new(
        rng.gen_range(bounds.min.x..bounds.max.x),
        rng.gen_range(bounds.min.y..bounds.max.y),
        rng.gen_range(bounds.min.z..bounds.max.z),
    )
}

/// Subdivided icosahedron with `10 * 4^level + 2` vertices on the sphere,
/// outward-facing triangles and radial unit normals.
pub fn icosphere(center: Point3, radius: f64, level: u32) -> TriangleMesh {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut dirs: Vec<Point3> = [
        [-1.0, t, 0.0],
        [1.0, t, 0.0],
        [-1.0, -t, 0.0],
        [1.0, -t, 0.0],
        [0.0, -1.0, t],
        [0.0, 1.0, t],
        [0.0, -1.0, -t],
        [0.0, 1.0, -t],
        [t, 0.0, -1.0],
        [t, 0.0, 1.0],
        [-t, 0.0, -1.0],
        [-t, 0.0, 1.0],
    ]
    .iter()
    .map(|&a| Point3::from_array(a).normalized())
    .collect();
    let mut faces: Vec<[u32; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];

    for _ in 0..level {
        let mut midpoints: HashMap<(u32, u32), u32> = HashMap::new();
        let mut midpoint = |a: u32, b: u32, dirs: &mut Vec<Point3>| -> u32 {
            let key = (a.min(b), a.max(b));
            *midpoints.entry(key).or_insert_with(|| {
                let m = ((dirs[a as usize] + dirs[b as usize]) * 0.5).normalized();
                dirs.push(m);
                (dirs.len() - 1) as u32
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for &[a, b, c] in &faces {
            let ab = midpoint(a, b, &mut dirs);
            let bc = midpoint(b, c, &mut dirs);
            let ca = midpoint(c, a, &mut dirs);
            next.extend_from_slice(&[[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }

    TriangleMesh {
        vertices: dirs.iter().map(|&d| center + d * radius).collect(),
        triangles: faces,
        normals: Some(dirs),
    }
}

/// `k` points in `bounds`, pairwise at least `min_separation` apart, by
/// rejection sampling with a budget of `10_000 * k` draws.
pub fn random_keypoint_set(k: usize, min_separation: f64, bounds: &Aabb, seed: u64) -> Result<KeypointSet> {
    if k == 0 {
        return Err(Error::Invalid("keypoint count must be at least 1".into()));
    }
    if !(min_separation >= 0.0) {
        return Err(Error::Invalid("min_separation must be nonnegative".into()));
    }
    let mut rng = rng_from_seed(seed);
    let budget = 10_000 * k;
    let mut points: Vec<Point3> = Vec::with_capacity(k);
    let mut attempts = 0;
    while points.len() < k {
        if attempts == budget {
            return Err(Error::PackingFailed {
                k,
                min_separation,
                attempts,
            });
        }
        attempts += 1;
        let p = uniform_point(&mut rng, bounds);
        if points.iter().all(|q| q.distance(p) >= min_separation) {
            points.push(p);
        }
    }
    let labels = (0..k).collect();
    KeypointSet::with_labels(points, labels, k)
}

/// On-surface candidates: icosphere vertices of every keypoint that are not
/// strictly inside another sphere.
fn surface_pool(field: &SphereField, level: u32) -> Result<Vec<(Point3, Point3)>> {
    let mut pool = Vec::new();
    for &c in field.centers() {
        let sphere = icosphere(c, field.radius, level);
        let normals = sphere.normals.expect("icosphere carries normals");
        for (v, n) in sphere.vertices.into_iter().zip(normals) {
            if sphere_sdf(v, field)? >= -INTERIOR_TOLERANCE {
                pool.push((v, n));
            }
        }
    }
    Ok(pool)
}

/// Volume samples first, then surface samples; surface shortfall is
/// topped up with extra volume samples.
pub fn make_training_set(field: &SphereField, cfg: &SampleConfig) -> Result<Vec<TrainingSample>> {
    cfg.validate()?;
    if field.keypoints.is_empty() {
        return Err(Error::EmptyField);
    }
    let mut rng = rng_from_seed(cfg.seed);
    let mut out = Vec::with_capacity(cfg.n_volume + cfg.n_surface);
    let volume = |rng: &mut ChaCha8Rng, out: &mut Vec<TrainingSample>| -> Result<()> {
        let p = uniform_point(rng, &cfg.bounds);
        out.push(TrainingSample {
            point: p,
            sdf: sphere_sdf(p, field)?,
            normal: None,
            udf: None,
        });
        Ok(())
    };
    for _ in 0..cfg.n_volume {
        volume(&mut rng, &mut out)?;
    }

    let mut pool = surface_pool(field, cfg.icosphere_level)?;
    let taken = cfg.n_surface.min(pool.len());
    if taken < pool.len() {
        let mut chosen = rand::seq::index::sample(&mut rng, pool.len(), taken).into_vec();
        chosen.sort_unstable();
        pool = chosen.into_iter().map(|i| pool[i]).collect();
    }
    out.extend(pool.into_iter().map(|(p, n)| TrainingSample {
        point: p,
        sdf: 0.0,
        normal: Some(n),
        udf: None,
    }));
    for _ in taken..cfg.n_surface {
        volume(&mut rng, &mut out)?;
    }
    Ok(out)
}

/// Same sample locations as [`make_training_set`], with stacked-UDF targets.
pub fn make_udf_training_set(field: &SphereField, cfg: &SampleConfig) -> Result<Vec<TrainingSample>> {
    if !field.keypoints.is_labeled() {
        return Err(Error::Unlabeled);
    }
    let mut samples = make_training_set(field, cfg)?;
    for s in &mut samples {
        s.udf = Some(stacked_udf(s.point, &field.keypoints)?);
    }
    Ok(samples)
}
