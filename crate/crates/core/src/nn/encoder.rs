//! Minimal point-set encoder for the conditioned decoder: a shared
//! per-point MLP over encoded coordinates followed by max pooling.
//!
//! The encoder weights are fixed at initialization; conditioned training
//! updates the decoder only.

use rand::Rng;

use super::adam::{adam_step, AdamState};
use super::fit::{losses, FitConfig};
use super::loss::LossTerms;
use super::net::{ImplicitNet, NetConfig};
use super::posenc::PosEncConfig;
use crate::error::{Error, Result};
use crate::geometry::{Point3, SphereField};
use crate::sampling::{make_training_set, rng_from_seed, SampleConfig, TrainingSample};

pub const CODE_DIM: usize = 256;

#[derive(Debug, Clone, PartialEq)]
pub struct PointSetEncoder {
    posenc: PosEncConfig,
    /// `(n_out, n_in, weights row-major, biases)` per layer, ReLU between.
    layers: Vec<(usize, usize, Vec<f64>, Vec<f64>)>,
}

impl PointSetEncoder {
    pub fn new(posenc: PosEncConfig, hidden: usize, seed: u64) -> Self {
        let mut rng = rng_from_seed(seed);
        let widths = [posenc.output_dim(), hidden, CODE_DIM];
        let layers = widths
            .windows(2)
            .map(|w| {
                let bound = (6.0 / w[0] as f64).sqrt();
                let weights = (0..w[0] * w[1]).map(|_| rng.gen_range(-bound..=bound)).collect();
                (w[1], w[0], weights, vec![0.0; w[1]])
            })
            .collect();
        Self { posenc, layers }
    }

    fn point_feature(&self, p: Point3) -> Vec<f64> {
        let mut h = super::posenc::posenc(p, &self.posenc);
        for (n_out, n_in, w, b) in &self.layers {
            h = (0..*n_out)
                .map(|r| {
                    let z: f64 = w[r * n_in..(r + 1) * n_in]
                        .iter()
                        .zip(&h)
                        .map(|(a, x)| a * x)
                        .sum::<f64>()
                        + b[r];
                    z.max(0.0)
                })
                .collect();
        }
        h
    }

    /// Permutation-invariant code of a point set.
    pub fn encode(&self, points: &[Point3]) -> Result<Vec<f64>> {
        if points.is_empty() {
            return Err(Error::EmptyPointSet);
        }
        let mut code = vec![f64::NEG_INFINITY; CODE_DIM];
        for &p in points {
            for (c, f) in code.iter_mut().zip(self.point_feature(p)) {
                *c = c.max(f);
            }
        }
        Ok(code)
    }
}

impl Default for PointSetEncoder {
    fn default() -> Self {
        Self::new(PosEncConfig::default(), 128, 0)
    }
}

pub fn encode_pointset(points: &[Point3]) -> Result<Vec<f64>> {
    PointSetEncoder::default().encode(points)
}

/// Train one decoder over several shapes, each conditioned on the code of
/// its observed point set. One Adam update per epoch-batch over all shapes.
/// Returns the decoder and the mean loss per epoch.
pub fn fit_conditioned(
    shapes: &[(SphereField, Vec<Point3>)],
    encoder: &PointSetEncoder,
    cfg: &FitConfig,
) -> Result<(ImplicitNet, Vec<LossTerms>)> {
    cfg.validate()?;
    if shapes.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let net_cfg = NetConfig {
        latent_dim: CODE_DIM,
        out_dim: 1,
        ..cfg.net.clone()
    };
    let mut net = ImplicitNet::siren_init(net_cfg, cfg.seed)?;
    let mut data = Vec::with_capacity(shapes.len());
    for (i, (field, cloud)) in shapes.iter().enumerate() {
        let samples = make_training_set(
            field,
            &SampleConfig {
                seed: cfg.sampling.seed.wrapping_add(i as u64),
                ..cfg.sampling.clone()
            },
        )?;
        data.push((encoder.encode(cloud)?, samples));
    }

    let mut adam = AdamState::new(net.params().len(), cfg.adam);
    let mut curve = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let mut grad = vec![0.0; net.params().len()];
        let mut mean = LossTerms::default();
        for (code, samples) in &data {
            net.set_latent(Some(code.clone()))?;
            let batch: Vec<&TrainingSample> = samples.iter().collect();
            let (terms, g) = losses(&net, &batch, &cfg.weights)?;
            for (a, b) in grad.iter_mut().zip(&g) {
                *a += b / data.len() as f64;
            }
            mean.sdf += terms.sdf / data.len() as f64;
            mean.grad += terms.grad / data.len() as f64;
            mean.normal += terms.normal / data.len() as f64;
            mean.total += terms.total / data.len() as f64;
        }
        if !mean.is_finite() {
            return Err(Error::TrainingDiverged { epoch });
        }
        adam_step(net.params_mut(), &grad, &mut adam)?;
        curve.push(mean);
    }
    net.set_latent(Some(data[0].0.clone()))?;
    Ok((net, curve))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cloud() -> Vec<Point3> {
        (0..20)
            .map(|i| {
                let t = i as f64 * 0.37;
                Point3::new(t.sin() * 0.5, t.cos() * 0.4, (0.5 * t).sin() * 0.3)
            })
            .collect()
    }

    #[test]
    fn permutation_and_duplication_invariant() {
        let enc = PointSetEncoder::default();
        let pts = cloud();
        let code = enc.encode(&pts).unwrap();
        assert_eq!(code.len(), CODE_DIM);
        let mut rev = pts.clone();
        rev.reverse();
        assert_eq!(enc.encode(&rev).unwrap(), code);
        let mut dup = pts.clone();
        dup.push(pts[3]);
        assert_eq!(enc.encode(&dup).unwrap(), code);
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(matches!(encode_pointset(&[]), Err(Error::EmptyPointSet)));
    }
}
