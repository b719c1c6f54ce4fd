use implicit_keypoints::metrics::{bhd, cd, miou_curve, nearest_squared_distances};
use implicit_keypoints::Point3;
use proptest::prelude::*;

fn sq(a: Point3, b: Point3) -> f64 {
    let d = a - b;
    d.x * d.x + d.y * d.y + d.z * d.z
}

fn oracle_bhd(a: &[Point3], b: &[Point3]) -> f64 {
    let directed = |s: &[Point3], t: &[Point3]| {
        let mut worst: f64 = 0.0;
        for &p in s {
            let mut best = f64::INFINITY;
            for &q in t {
                best = best.min(sq(p, q).sqrt());
            }
            worst = worst.max(best);
        }
        worst
    };
    0.5 * (directed(a, b) + directed(b, a))
}

fn oracle_cd(a: &[Point3], b: &[Point3]) -> f64 {
    let directed = |s: &[Point3], t: &[Point3]| {
        let mut sum = 0.0;
        for &p in s {
            let mut best = f64::INFINITY;
            for &q in t {
                best = best.min(sq(p, q));
            }
            sum += best;
        }
        sum / s.len() as f64
    };
    directed(a, b) + directed(b, a)
}

/// Repeatedly match the closest unmatched pair within `t`.
fn oracle_iou(pred: &[Point3], gt: &[Point3], t: f64) -> f64 {
    let mut used_p = vec![false; pred.len()];
    let mut used_g = vec![false; gt.len()];
    let mut tp = 0;
    loop {
        let mut best: Option<(f64, usize, usize)> = None;
        for i in 0..pred.len() {
            for j in 0..gt.len() {
                if used_p[i] || used_g[j] {
                    continue;
                }
                let d = sq(pred[i], gt[j]).sqrt();
                if d <= t && best.is_none_or(|(bd, _, _)| d < bd) {
                    best = Some((d, i, j));
                }
            }
        }
        match best {
            Some((_, i, j)) => {
                used_p[i] = true;
                used_g[j] = true;
                tp += 1;
            }
            None => break,
        }
    }
    let union = (pred.len() + gt.len()) as f64;
    if union == 0.0 {
        1.0
    } else {
        tp as f64 / (union - tp as f64)
    }
}

fn points(max: usize) -> impl Strategy<Value = Vec<Point3>> {
    prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64), 1..=max)
        .prop_map(|v| v.into_iter().map(|(x, y, z)| Point3::new(x, y, z)).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn metrics_match_double_loop_oracles(a in points(20), b in points(20)) {
        prop_assert_eq!(bhd(&a, &b).unwrap().to_bits(), oracle_bhd(&a, &b).to_bits());
        prop_assert_eq!(cd(&a, &b).unwrap().to_bits(), oracle_cd(&a, &b).to_bits());
        let ts = [0.0, 0.05, 0.1, 0.3, 1.0];
        let curve = miou_curve(&a, &b, &ts).unwrap();
        for (t, v) in curve {
            prop_assert_eq!(v.to_bits(), oracle_iou(&a, &b, t).to_bits());
        }
    }

    #[test]
    fn metrics_are_symmetric(a in points(20), b in points(20)) {
        prop_assert_eq!(bhd(&a, &b).unwrap(), bhd(&b, &a).unwrap());
        prop_assert_eq!(cd(&a, &b).unwrap(), cd(&b, &a).unwrap());
    }
}

#[test]
fn grid_accelerated_path_matches_oracle() {
    let cloud: Vec<Point3> = (0..1500)
        .map(|i| {
            let t = i as f64;
            Point3::new((t * 0.731).sin(), (t * 1.173).cos(), (t * 0.377).sin() * 0.5)
        })
        .collect();
    let other: Vec<Point3> = (0..900)
        .map(|i| Point3::new((i as f64 * 0.11).cos(), 0.3, (i as f64 * 0.07).sin()))
        .collect();
    assert_eq!(
        bhd(&cloud, &other).unwrap().to_bits(),
        oracle_bhd(&cloud, &other).to_bits()
    );
    assert_eq!(
        cd(&cloud, &other).unwrap().to_bits(),
        oracle_cd(&cloud, &other).to_bits()
    );
    let d = nearest_squared_distances(&other, &cloud);
    assert_eq!(d.len(), other.len());
}
