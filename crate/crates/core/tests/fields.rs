use implicit_keypoints::geometry::{label_of, sphere_sdf, sphere_sdf_gradient, stacked_udf};
use implicit_keypoints::sampling::{icosphere, random_keypoint_set, rng_from_seed, uniform_point};
use implicit_keypoints::{Aabb, KeypointSet, Point3, SphereField};

fn field(k: usize, seed: u64) -> SphereField {
    SphereField::new(random_keypoint_set(k, 0.24, &Aabb::unit(), seed).unwrap(), 0.08).unwrap()
}

#[test]
fn eikonal_holds_away_from_kinks() {
    let f = field(6, 3);
    let mut rng = rng_from_seed(11);
    let h = 1e-6;
    let mut checked = 0;
    for _ in 0..10_000 {
        let p = uniform_point(&mut rng, &Aabb::unit());
        let mut d: Vec<f64> = f.centers().iter().map(|c| c.distance(p)).collect();
        d.sort_by(f64::total_cmp);
        // skip the medial surfaces and the centers, where the field has kinks
        if d.len() > 1 && d[1] - d[0] < 1e-3 || d[0] < 1e-3 {
            continue;
        }
        let g = sphere_sdf_gradient(p, &f).unwrap();
        assert!((g.norm() - 1.0).abs() < 1e-12);
        let fd = Point3::new(
            sphere_sdf(p + Point3::new(h, 0.0, 0.0), &f).unwrap()
                - sphere_sdf(p - Point3::new(h, 0.0, 0.0), &f).unwrap(),
            sphere_sdf(p + Point3::new(0.0, h, 0.0), &f).unwrap()
                - sphere_sdf(p - Point3::new(0.0, h, 0.0), &f).unwrap(),
            sphere_sdf(p + Point3::new(0.0, 0.0, h), &f).unwrap()
                - sphere_sdf(p - Point3::new(0.0, 0.0, h), &f).unwrap(),
        ) / (2.0 * h);
        assert!((fd - g).norm() < 1e-6, "{fd:?} vs {g:?}");
        checked += 1;
    }
    assert!(checked > 9_000);
}

#[test]
fn sdf_is_one_lipschitz() {
    let f = field(5, 8);
    let mut rng = rng_from_seed(12);
    for _ in 0..5_000 {
        let a = uniform_point(&mut rng, &Aabb::unit());
        let b = uniform_point(&mut rng, &Aabb::unit());
        let lhs = (sphere_sdf(a, &f).unwrap() - sphere_sdf(b, &f).unwrap()).abs();
        assert!(lhs <= a.distance(b) + 1e-12);
    }
}

#[test]
fn icosphere_vertices_lie_on_the_zero_set() {
    let f = field(4, 5);
    for &c in f.centers() {
        for v in icosphere(c, f.radius, 4).vertices {
            let s = sphere_sdf(v, &f).unwrap();
            // vertices inside another sphere are negative, never positive
            assert!(s <= 1e-12);
        }
    }
    let lone = SphereField::new(KeypointSet::new(vec![Point3::new(0.3, -0.1, 0.2)]), 0.08).unwrap();
    for v in icosphere(lone.keypoints.points[0], 0.08, 4).vertices {
        assert!(sphere_sdf(v, &lone).unwrap().abs() < 1e-12);
    }
}

#[test]
fn stacked_udf_labels_its_own_keypoints() {
    for seed in 0..20 {
        let f = field(1 + seed as usize % 10, seed);
        let kp = &f.keypoints;
        for (i, &p) in kp.points.iter().enumerate() {
            let u = stacked_udf(p, kp).unwrap();
            assert_eq!(label_of(&u), kp.labels.as_ref().unwrap()[i]);
        }
    }
}

#[test]
fn missing_labels_read_as_the_sentinel() {
    let kp = KeypointSet::with_labels(
        vec![Point3::new(0.5, 0.5, 0.5), Point3::new(-0.5, 0.0, 0.0)],
        vec![0, 3],
        5,
    )
    .unwrap();
    let u = stacked_udf(Point3::default(), &kp).unwrap();
    assert_eq!(u.len(), 5);
    assert_eq!([u[1], u[2], u[4]], [1.0; 3]);
    assert_eq!(u[3], 0.5);
}
