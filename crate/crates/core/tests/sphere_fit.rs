use implicit_keypoints::extraction::best_sphere_center;
use implicit_keypoints::sampling::rng_from_seed;
use implicit_keypoints::Point3;
use nalgebra::{DMatrix, DVector};
use rand::Rng;

/// Algebraic least squares: |x|^2 = 2 c.x + d, solved by SVD. The problem
/// is translation invariant; shifting to the centroid keeps the design
/// matrix well conditioned for small spheres far from the origin.
fn lsq_center(points: &[Point3]) -> Point3 {
    let n = points.len();
    let o = Point3::centroid(points).unwrap();
    let y: Vec<Point3> = points.iter().map(|&p| p - o).collect();
    let a = DMatrix::from_fn(n, 4, |i, j| if j == 3 { 1.0 } else { 2.0 * y[i][j] });
    let b = DVector::from_fn(n, |i, _| y[i].norm_squared());
    let x = a.svd(true, true).solve(&b, 1e-14).unwrap();
    o + Point3::new(x[0], x[1], x[2])
}

fn random_direction(rng: &mut impl Rng) -> Point3 {
    loop {
        let v = Point3::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        );
        let n = v.norm();
        if n > 0.1 && n <= 1.0 {
            return v / n;
        }
    }
}

#[test]
fn exact_samples_and_least_squares_agree() {
    let mut rng = rng_from_seed(2024);
    for case in 0..1000 {
        let c = Point3::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        );
        let r = rng.gen_range(0.02..0.5);
        let n = rng.gen_range(8..64);
        let mut pts: Vec<Point3> = (0..n).map(|_| c + random_direction(&mut rng) * r).collect();
        let fit = best_sphere_center(&pts).unwrap();
        assert!(fit.distance(c) < 1e-9, "case {case}: {}", fit.distance(c));
        assert!(
            fit.distance(lsq_center(&pts)) < 1e-9,
            "case {case}: {}",
            fit.distance(lsq_center(&pts))
        );
        // perturbed samples: both estimators are the same minimizer
        for p in &mut pts {
            *p += random_direction(&mut rng) * (0.05 * r * rng.gen::<f64>());
        }
        let noisy = best_sphere_center(&pts).unwrap();
        assert!(
            noisy.distance(lsq_center(&pts)) < 1e-9,
            "case {case}: {}",
            noisy.distance(lsq_center(&pts))
        );
    }
}
