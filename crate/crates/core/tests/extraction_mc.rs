use implicit_keypoints::extraction::{extract_keypoints, extract_keypoints_with_report, ExtractionConfig};
use implicit_keypoints::isosurface::{eval_grid, marching_cubes};
use implicit_keypoints::metrics::bhd;
use implicit_keypoints::{Aabb, KeypointSet, Point3, SphereField, TriangleMesh};

fn mesh_of(centers: &[[f64; 3]], radius: f64, res: usize) -> TriangleMesh {
    let kp = KeypointSet::new(centers.iter().map(|&c| Point3::from_array(c)).collect());
    let f = SphereField::new(kp, radius).unwrap();
    marching_cubes(&eval_grid(&f, [res; 3], Aabb::unit()).unwrap(), 0.0).unwrap()
}

fn pts(a: &[[f64; 3]]) -> Vec<Point3> {
    a.iter().map(|&p| Point3::from_array(p)).collect()
}

#[test]
fn single_sphere_from_marching_cubes() {
    let m = mesh_of(&[[0.1, -0.2, 0.3]], 0.08, 128);
    let kp = extract_keypoints(&m, &ExtractionConfig::default()).unwrap();
    assert_eq!(kp.len(), 1);
    assert!(kp.points[0].distance(Point3::new(0.1, -0.2, 0.3)) < 5e-3);
}

#[test]
fn separated_spheres() {
    let c = [[-0.5, 0.0, 0.0], [0.0, 0.3, 0.2], [0.5, -0.4, -0.3]];
    let kp = extract_keypoints(&mesh_of(&c, 0.08, 128), &ExtractionConfig::default()).unwrap();
    assert_eq!(kp.len(), 3);
    assert!(bhd(&kp.points, &pts(&c)).unwrap() < 5e-3);
}

#[test]
fn intersecting_spheres() {
    let c = [[-0.06, 0.0, 0.0], [0.06, 0.0, 0.0]];
    let ex = extract_keypoints_with_report(&mesh_of(&c, 0.08, 128), &ExtractionConfig::default()).unwrap();
    assert_eq!(ex.keypoints.len(), 2, "{:?}", ex.keypoints.points);
    assert!(bhd(&ex.keypoints.points, &pts(&c)).unwrap() < 0.01);
}

#[test]
fn translation_equivariance() {
    let c = [[-0.3, 0.1, 0.0], [0.3, -0.2, 0.1]];
    let m = mesh_of(&c, 0.08, 96);
    let t = Point3::new(0.013, -0.021, 0.007);
    let cfg = ExtractionConfig::default();
    let a = extract_keypoints(&m, &cfg).unwrap();
    let b = extract_keypoints(&m.translated(t), &cfg).unwrap();
    assert_eq!(a.len(), b.len());
    let shifted: Vec<Point3> = a.points.iter().map(|&p| p + t).collect();
    assert!(bhd(&shifted, &b.points).unwrap() < 1e-6);
}

#[test]
fn small_radius_density_normalization() {
    let m = mesh_of(&[[0.0, 0.0, 0.0]], 0.02, 128);
    let plain = extract_keypoints(&m, &ExtractionConfig::with_radius(0.02)).unwrap();
    let cfg = ExtractionConfig {
        density_normalization: true,
        ..ExtractionConfig::with_radius(0.02)
    };
    let norm = extract_keypoints(&m, &cfg).unwrap();
    // a 0.02 sphere meshes to a few dozen vertices, far below the fixed threshold
    assert!(m.vertices.len() < 80);
    assert!(plain.is_empty());
    assert_eq!(norm.len(), 1);
}
