use implicit_keypoints::nn::{Activation, ImplicitNet, NetConfig, OutputAdjoint, PosEncConfig};
use implicit_keypoints::sampling::rng_from_seed;
use implicit_keypoints::Point3;
use rand::Rng;

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let scale: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt().max(1e-8);
    diff / scale
}

fn random_net(rng: &mut impl Rng, seed: u64, activation: Activation) -> ImplicitNet {
    let depth = rng.gen_range(1..4);
    let cfg = NetConfig {
        hidden: (0..depth).map(|_| rng.gen_range(2..9)).collect(),
        out_dim: rng.gen_range(1..4),
        omega: 30.0,
        posenc: PosEncConfig {
            bands: rng.gen_range(0..3),
            include_raw: true,
        },
        activation,
        latent_dim: 0,
    };
    let mut net = ImplicitNet::siren_init(cfg, seed).unwrap();
    // nonzero biases exercise every term
    for p in net.params_mut() {
        *p += rng.gen_range(-0.05..0.05);
    }
    net
}

fn random_point(rng: &mut impl Rng) -> Point3 {
    Point3::new(
        rng.gen_range(-1.0..1.0),
        rng.gen_range(-1.0..1.0),
        rng.gen_range(-1.0..1.0),
    )
}

#[test]
fn input_jacobians_match_finite_differences() {
    let mut rng = rng_from_seed(5);
    let h = 1e-6;
    for seed in 0..100 {
        let act = [Activation::Sine, Activation::Selu][seed as usize % 2];
        let net = random_net(&mut rng, seed, act);
        let p = random_point(&mut rng);
        let (_, jac) = net.forward_with_input_grad(p);
        let mut analytic = Vec::new();
        let mut numeric = Vec::new();
        for (o, row) in jac.iter().enumerate() {
            for a in 0..3 {
                let mut e = Point3::default();
                match a {
                    0 => e.x = h,
                    1 => e.y = h,
                    _ => e.z = h,
                }
                numeric.push((net.forward(p + e)[o] - net.forward(p - e)[o]) / (2.0 * h));
                analytic.push(row[a]);
            }
        }
        assert!(rel_err(&analytic, &numeric) < 1e-4, "net {seed}");
    }
}

/// Smooth scalar of values and Jacobians, `L = sum a.f + sum b.grad f`.
fn objective(net: &ImplicitNet, pts: &[Point3], adj: &OutputAdjoint) -> f64 {
    let cache = net.forward_batch(pts, None, true).unwrap();
    let mut l = 0.0;
    for o in 0..net.out_dim() {
        for i in 0..pts.len() {
            l += adj.values[o][i] * cache.value(i, o);
            let g = cache.gradient(i, o);
            let w = adj.gradients.as_ref().unwrap()[o][i];
            l += w[0] * g[0] + w[1] * g[1] + w[2] * g[2];
        }
    }
    l
}

#[test]
fn parameter_gradients_match_finite_differences() {
    let mut rng = rng_from_seed(6);
    let h = 1e-6;
    for seed in 0..100 {
        let act = [Activation::Sine, Activation::Selu][seed as usize % 2];
        let mut net = random_net(&mut rng, 1000 + seed, act);
        let pts: Vec<Point3> = (0..3).map(|_| random_point(&mut rng)).collect();
        let mut adj = OutputAdjoint::zeros(net.out_dim(), pts.len(), true);
        for o in 0..net.out_dim() {
            for i in 0..pts.len() {
                adj.values[o][i] = rng.gen_range(-1.0..1.0);
                adj.gradients.as_mut().unwrap()[o][i] = [
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                ];
            }
        }
        let cache = net.forward_batch(&pts, None, true).unwrap();
        let analytic = net.backward(&cache, &adj).unwrap();
        let mut numeric = Vec::with_capacity(analytic.len());
        for k in 0..analytic.len() {
            let orig = net.params()[k];
            net.params_mut()[k] = orig + h;
            let up = objective(&net, &pts, &adj);
            net.params_mut()[k] = orig - h;
            let down = objective(&net, &pts, &adj);
            net.params_mut()[k] = orig;
            numeric.push((up - down) / (2.0 * h));
        }
        assert!(
            rel_err(&analytic, &numeric) < 1e-4,
            "net {seed}: {}",
            rel_err(&analytic, &numeric)
        );
    }
}
