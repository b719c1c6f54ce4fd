//! Shared geometric types and the analytic fields of keypoint-sphere unions.
//!
//! A keypoint `c` with radius `r` is represented by the sphere of radius `r`
//! around `c`. The union of those spheres has the signed distance
//! `min_i (|p - c_i| - r)` (negative inside), and the stacked unsigned field
//! keeps one distance channel per semantic label.

use std::ops::{Add, AddAssign, Div, Index, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Value of a stacked-UDF channel whose label has no keypoint.
pub const MISSING_LABEL_DISTANCE: f64 = 1.0;

/// Default keypoint sphere radius.
pub const DEFAULT_RADIUS: f64 = 0.08;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const ORIGIN: Point3 = Point3::new(0.0, 0.0, 0.0);

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn dot(self, o: Point3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Point3) -> Point3 {
        Point3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn norm_squared(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        self.norm_squared().sqrt()
    }

    pub fn distance(self, o: Point3) -> f64 {
        (self - o).norm()
    }

    pub fn distance_squared(self, o: Point3) -> f64 {
        (self - o).norm_squared()
    }

    /// Unit vector in the same direction; the zero vector maps to itself.
    pub fn normalized(self) -> Point3 {
        let n = self.norm();
        if n > 0.0 {
            self / n
        } else {
            self
        }
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn min(self, o: Point3) -> Point3 {
        Point3::new(self.x.min(o.x), self.y.min(o.y), self.z.min(o.z))
    }

    pub fn max(self, o: Point3) -> Point3 {
        Point3::new(self.x.max(o.x), self.y.max(o.y), self.z.max(o.z))
    }

    pub fn lerp(self, o: Point3, t: f64) -> Point3 {
        self + (o - self) * t
    }

    /// Arithmetic mean; `None` for an empty slice.
    pub fn centroid(points: &[Point3]) -> Option<Point3> {
        if points.is_empty() {
            return None;
        }
        let sum = points.iter().fold(Point3::ORIGIN, |acc, &p| acc + p);
        Some(sum / points.len() as f64)
    }
}

impl Index<usize> for Point3 {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        match i {
            0 => &self.x,
            1 => &self.y,
            2 => &self.z,
            _ => panic!("Point3 index {i} out of range"),
        }
    }
}

impl Add for Point3 {
    type Output = Point3;
    fn add(self, o: Point3) -> Point3 {
        Point3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl AddAssign for Point3 {
    fn add_assign(&mut self, o: Point3) {
        *self = *self + o;
    }
}

impl Sub for Point3 {
    type Output = Point3;
    fn sub(self, o: Point3) -> Point3 {
        Point3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for Point3 {
    type Output = Point3;
    fn mul(self, s: f64) -> Point3 {
        Point3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Div<f64> for Point3 {
    type Output = Point3;
    fn div(self, s: f64) -> Point3 {
        Point3::new(self.x / s, self.y / s, self.z / s)
    }
}

impl Neg for Point3 {
    type Output = Point3;
    fn neg(self) -> Point3 {
        Point3::new(-self.x, -self.y, -self.z)
    }
}

/// Axis-aligned box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: Point3,
    pub max: Point3,
}

impl Aabb {
    pub const fn new(min: Point3, max: Point3) -> Self {
        Self { min, max }
    }

    /// The normalized model space `[-1, 1]^3`.
    pub const fn unit() -> Self {
        Self::new(Point3::new(-1.0, -1.0, -1.0), Point3::new(1.0, 1.0, 1.0))
    }

    pub fn from_points(points: &[Point3]) -> Option<Self> {
        let first = *points.first()?;
        Some(
            points
                .iter()
                .fold(Self::new(first, first), |b, &p| Self::new(b.min.min(p), b.max.max(p))),
        )
    }

    pub fn extent(&self) -> Point3 {
        self.max - self.min
    }

    pub fn center(&self) -> Point3 {
        (self.min + self.max) * 0.5
    }

    pub fn expanded(&self, margin: f64) -> Self {
        let m = Point3::new(margin, margin, margin);
        Self::new(self.min - m, self.max + m)
    }

    pub fn contains(&self, p: Point3) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }

    pub fn is_valid(&self) -> bool {
        self.min.is_finite() && self.max.is_finite() && (0..3).all(|i| self.min[i] < self.max[i])
    }
}

/// Ordered keypoints with optional semantic labels in `[0, label_count)`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct KeypointSet {
    pub points: Vec<Point3>,
    pub labels: Option<Vec<usize>>,
    pub label_count: usize,
}

impl KeypointSet {
    /// Unlabeled keypoints; `label_count` is set to the number of points.
    pub fn new(points: Vec<Point3>) -> Self {
        let label_count = points.len().max(1);
        Self {
            points,
            labels: None,
            label_count,
        }
    }

    pub fn with_labels(points: Vec<Point3>, labels: Vec<usize>, label_count: usize) -> Result<Self> {
        let set = Self {
            points,
            labels: Some(labels),
            label_count,
        };
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<()> {
        if self.label_count == 0 {
            return Err(Error::Invalid("label_count must be positive".into()));
        }
        if let Some(p) = self.points.iter().find(|p| !p.is_finite()) {
            return Err(Error::Invalid(format!("non-finite keypoint {p:?}")));
        }
        if let Some(labels) = &self.labels {
            if labels.len() != self.points.len() {
                return Err(Error::Invalid(format!(
                    "{} labels for {} keypoints",
                    labels.len(),
                    self.points.len()
                )));
            }
            if let Some(&l) = labels.iter().find(|&&l| l >= self.label_count) {
                return Err(Error::Invalid(format!("label {l} outside [0, {})", self.label_count)));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn is_labeled(&self) -> bool {
        self.labels.is_some()
    }

    pub fn translated(&self, t: Point3) -> Self {
        Self {
            points: self.points.iter().map(|&p| p + t).collect(),
            ..self.clone()
        }
    }
}

/// The union of equal-radius spheres centered at the keypoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SphereField {
    pub keypoints: KeypointSet,
    pub radius: f64,
}

impl SphereField {
    pub fn new(keypoints: KeypointSet, radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::Invalid(format!("radius must be positive, got {radius}")));
        }
        keypoints.validate()?;
        Ok(Self { keypoints, radius })
    }

    pub fn centers(&self) -> &[Point3] {
        &self.keypoints.points
    }

    pub fn sdf(&self, p: Point3) -> Result<f64> {
        sphere_sdf(p, self)
    }

    pub fn gradient(&self, p: Point3) -> Result<Point3> {
        sphere_sdf_gradient(p, self)
    }
}

/// Index and distance of the nearest center; lowest index wins ties.
fn nearest_center(p: Point3, centers: &[Point3]) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &c) in centers.iter().enumerate() {
        let d = p.distance(c);
        match best {
            Some((_, bd)) if d >= bd => {}
            _ => best = Some((i, d)),
        }
    }
    best
}

/// Signed distance from `p` to the boundary of the sphere union.
pub fn sphere_sdf(p: Point3, field: &SphereField) -> Result<f64> {
    let (_, d) = nearest_center(p, field.centers()).ok_or(Error::EmptyField)?;
    Ok(d - field.radius)
}

/// Gradient of [`sphere_sdf`]: the unit direction away from the nearest center.
///
/// On points equidistant from several centers the field has a kink; the
/// lowest-index center is used there.
pub fn sphere_sdf_gradient(p: Point3, field: &SphereField) -> Result<Point3> {
    let (i, d) = nearest_center(p, field.centers()).ok_or(Error::EmptyField)?;
    if d < 1e-12 {
        return Err(Error::SingularGradient(i));
    }
    Ok((p - field.centers()[i]) / d)
}

/// Per-label distances from `p`; channels without a keypoint hold
/// [`MISSING_LABEL_DISTANCE`], shared labels keep the smallest distance.
pub fn stacked_udf(p: Point3, keypoints: &KeypointSet) -> Result<Vec<f64>> {
    let labels = keypoints.labels.as_ref().ok_or(Error::Unlabeled)?;
    let mut out = vec![f64::INFINITY; keypoints.label_count];
    for (&c, &l) in keypoints.points.iter().zip(labels) {
        let d = p.distance(c);
        if d < out[l] {
            out[l] = d;
        }
    }
    for v in &mut out {
        if v.is_infinite() {
            *v = MISSING_LABEL_DISTANCE;
        }
    }
    Ok(out)
}

/// Arg-min channel of a stacked-UDF vector; lowest index wins ties.
///
/// # Panics
/// On an empty vector.
pub fn label_of(udf_values: &[f64]) -> usize {
    assert!(!udf_values.is_empty(), "label_of on empty vector");
    let mut best = 0;
    for (i, &v) in udf_values.iter().enumerate().skip(1) {
        if v < udf_values[best] {
            best = i;
        }
    }
    best
}

/// Vertices, triangles and optional per-vertex unit normals.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TriangleMesh {
    pub vertices: Vec<Point3>,
    pub triangles: Vec<[u32; 3]>,
    pub normals: Option<Vec<Point3>>,
}

impl TriangleMesh {
    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.vertices.len();
        if let Some(t) = self.triangles.iter().find(|t| t.iter().any(|&i| i as usize >= n)) {
            return Err(Error::Invalid(format!("triangle {t:?} indexes past {n} vertices")));
        }
        if let Some(normals) = &self.normals {
            if normals.len() != n {
                return Err(Error::Invalid("normal count differs from vertex count".into()));
            }
            if normals.iter().any(|v| (v.norm() - 1.0).abs() > 1e-6) {
                return Err(Error::Invalid("normals must be unit length".into()));
            }
        }
        Ok(())
    }

    /// Unnormalized face normal (cross product of edges).
    pub fn face_normal(&self, t: usize) -> Point3 {
        let [a, b, c] = self.triangles[t].map(|i| self.vertices[i as usize]);
        (b - a).cross(c - a)
    }

    pub fn translated(&self, t: Point3) -> Self {
        Self {
            vertices: self.vertices.iter().map(|&v| v + t).collect(),
            ..self.clone()
        }
    }

    /// Concatenate meshes, offsetting indices.
    pub fn merged(meshes: &[TriangleMesh]) -> TriangleMesh {
        let mut out = TriangleMesh::default();
        let keep_normals = !meshes.is_empty() && meshes.iter().all(|m| m.normals.is_some());
        let mut normals = Vec::new();
        for m in meshes {
            let offset = out.vertices.len() as u32;
            out.vertices.extend_from_slice(&m.vertices);
            out.triangles.extend(m.triangles.iter().map(|t| t.map(|i| i + offset)));
            if keep_normals {
                normals.extend_from_slice(m.normals.as_ref().unwrap());
            }
        }
        if keep_normals {
            out.normals = Some(normals);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn field(points: &[[f64; 3]], r: f64) -> SphereField {
        SphereField::new(
            KeypointSet::new(points.iter().map(|&a| Point3::from_array(a)).collect()),
            r,
        )
        .unwrap()
    }

    #[test]
    fn sdf_examples() {
        let f = field(&[[0.0, 0.0, 0.0]], 0.08);
        assert_eq!(sphere_sdf(Point3::ORIGIN, &f).unwrap(), -0.08);
        assert_eq!(sphere_sdf(Point3::new(0.08, 0.0, 0.0), &f).unwrap(), 0.0);
        let f2 = field(&[[0.0, 0.0, 0.0], [0.5, 0.0, 0.0]], 0.08);
        let v = sphere_sdf(Point3::new(0.25, 0.0, 0.0), &f2).unwrap();
        assert!((v - 0.17).abs() < 1e-15);
    }

    #[test]
    fn sdf_empty_field() {
        let f = SphereField::new(KeypointSet::new(vec![]), 0.08).unwrap();
        assert!(matches!(sphere_sdf(Point3::ORIGIN, &f), Err(Error::EmptyField)));
    }

    #[test]
    fn gradient_examples() {
        let f = field(&[[0.0, 0.0, 0.0]], 0.08);
        assert_eq!(
            sphere_sdf_gradient(Point3::new(0.5, 0.0, 0.0), &f).unwrap(),
            Point3::new(1.0, 0.0, 0.0)
        );
        assert_eq!(
            sphere_sdf_gradient(Point3::new(0.0, -0.2, 0.0), &f).unwrap(),
            Point3::new(0.0, -1.0, 0.0)
        );
        let f2 = field(&[[0.0, 0.0, 0.0], [0.5, 0.0, 0.0]], 0.08);
        let p = Point3::new(0.25, 0.1, 0.0);
        assert_eq!(sphere_sdf_gradient(p, &f2).unwrap(), p.normalized());
        assert!(matches!(
            sphere_sdf_gradient(Point3::new(0.5, 0.0, 0.0), &f2),
            Err(Error::SingularGradient(1))
        ));
    }

    #[test]
    fn stacked_udf_examples() {
        let pts = vec![Point3::new(0.1, 0.2, 0.3), Point3::new(-0.4, 0.0, 0.5)];
        let set = KeypointSet::with_labels(pts.clone(), vec![3, 0], 10).unwrap();
        let v = stacked_udf(pts[0], &set).unwrap();
        assert_eq!(v.len(), 10);
        assert_eq!(v[3], 0.0);
        assert!(v[0] > 0.0);
        for (k, &x) in v.iter().enumerate() {
            if k != 0 && k != 3 {
                assert_eq!(x, MISSING_LABEL_DISTANCE);
            }
        }
        assert_eq!(label_of(&v), 3);

        let unlabeled = KeypointSet::new(pts);
        assert!(matches!(stacked_udf(Point3::ORIGIN, &unlabeled), Err(Error::Unlabeled)));
    }

    #[test]
    fn stacked_udf_shared_label_takes_min() {
        let pts = vec![Point3::new(1.0, 0.0, 0.0), Point3::new(0.3, 0.0, 0.0)];
        let set = KeypointSet::with_labels(pts, vec![1, 1], 2).unwrap();
        let v = stacked_udf(Point3::ORIGIN, &set).unwrap();
        assert_eq!(v, vec![MISSING_LABEL_DISTANCE, 0.3]);
    }

    #[test]
    fn label_of_examples() {
        assert_eq!(label_of(&[0.3, 0.05, 1.0]), 1);
        assert_eq!(label_of(&[1.0; 5]), 0);
    }

    #[test]
    fn keypoint_set_validation() {
        assert!(KeypointSet::with_labels(vec![Point3::ORIGIN], vec![2], 2).is_err());
        assert!(KeypointSet::with_labels(vec![Point3::ORIGIN], vec![], 2).is_err());
        assert!(SphereField::new(KeypointSet::new(vec![Point3::ORIGIN]), 0.0).is_err());
    }
}
