//! Per-shape fitting of SDF and stacked-UDF heads.

use log::debug;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamConfig, AdamState};
use super::loss::{sdf_loss_terms, udf_loss_terms, LossTerms, LossWeights};
use super::net::{ImplicitNet, NetConfig, OutputAdjoint};
use crate::error::{Error, Result};
use crate::field::GradientField;
use crate::geometry::SphereField;
use crate::sampling::{make_training_set, make_udf_training_set, rng_from_seed, SampleConfig, TrainingSample};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub net: NetConfig,
    pub weights: LossWeights,
    pub adam: AdamConfig,
    pub epochs: usize,
    pub batch_size: usize,
    /// Seeds weight initialization and batch shuffling.
    pub seed: u64,
    pub sampling: SampleConfig,
    /// Draw a fresh training set (seed + epoch) at every epoch.
    pub resample_per_epoch: bool,
    /// Cosine-anneal the learning rate from `adam.lr` to this value over the
    /// epochs; constant when unset.
    pub lr_final: Option<f64>,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            net: NetConfig::default(),
            weights: LossWeights::default(),
            adam: AdamConfig::default(),
            epochs: 300,
            batch_size: 2048,
            seed: 0,
            sampling: SampleConfig::default(),
            resample_per_epoch: false,
            lr_final: None,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        self.net.validate()?;
        self.weights.validate()?;
        self.sampling.validate()?;
        if self.batch_size == 0 {
            return Err(Error::Invalid("batch_size must be positive".into()));
        }
        if !(self.adam.lr > 0.0) || self.lr_final.is_some_and(|l| !(l > 0.0)) {
            return Err(Error::Invalid("learning rate must be positive".into()));
        }
        Ok(())
    }
}

impl FitConfig {
    /// Learning rate used during `epoch`.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        match self.lr_final {
            Some(end) if self.epochs > 1 => {
                let t = epoch as f64 / (self.epochs - 1) as f64;
                end + 0.5 * (self.adam.lr - end) * (1.0 + (std::f64::consts::PI * t).cos())
            }
            _ => self.adam.lr,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FitReport {
    /// Loss over the full training set before the first update.
    pub initial: LossTerms,
    /// Mean batch loss of every epoch.
    pub epochs: Vec<LossTerms>,
    /// Loss over the full training set after the last update.
    pub final_loss: LossTerms,
}

/// Losses of an SDF head on a batch and the gradient of the weighted total
/// with respect to the network parameters.
pub fn losses(net: &ImplicitNet, batch: &[&TrainingSample], w: &LossWeights) -> Result<(LossTerms, Vec<f64>)> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    if net.out_dim() != 1 {
        return Err(Error::ShapeMismatch("SDF losses need a single-output head".into()));
    }
    let points: Vec<_> = batch.iter().map(|s| s.point).collect();
    let tangents = w.uses_gradient();
    let cache = net.forward_batch(&points, None, tangents)?;
    let values: Vec<f64> = (0..batch.len()).map(|i| cache.value(i, 0)).collect();
    let grads: Vec<[f64; 3]> = if tangents {
        (0..batch.len()).map(|i| cache.gradient(i, 0)).collect()
    } else {
        vec![[0.0; 3]; batch.len()]
    };
    let (mut terms, adj) = sdf_loss_terms(batch, &values, &grads, w)?;
    if !tangents {
        terms.grad = 0.0;
        terms.normal = 0.0;
        terms.total = w.lambda1 * terms.sdf;
    }
    let adjoint = OutputAdjoint {
        values: vec![adj.values],
        gradients: tangents.then(|| vec![adj.gradients]),
    };
    let grad = net.backward(&cache, &adjoint)?;
    Ok((terms, grad))
}

/// Losses of any differentiable field over a sample set, without parameter
/// gradients.
pub fn evaluate_sdf_losses<F: GradientField + ?Sized>(
    field: &F,
    samples: &[TrainingSample],
    w: &LossWeights,
) -> Result<LossTerms> {
    let points: Vec<_> = samples.iter().map(|s| s.point).collect();
    let (values, grads) = field.values_and_gradients(&points)?;
    let refs: Vec<&TrainingSample> = samples.iter().collect();
    Ok(sdf_loss_terms(&refs, &values, &grads, w)?.0)
}

/// Mean absolute stacked-UDF error of a network over a sample set.
pub fn evaluate_udf_loss(net: &ImplicitNet, samples: &[TrainingSample]) -> Result<f64> {
    let points: Vec<_> = samples.iter().map(|s| s.point).collect();
    let values = net.eval_many_all(&points)?;
    let refs: Vec<&TrainingSample> = samples.iter().collect();
    Ok(udf_loss_terms(&refs, &values)?.0)
}

fn check_finite(terms: &LossTerms, grad: &[f64], epoch: usize) -> Result<()> {
    if !terms.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::TrainingDiverged { epoch });
    }
    Ok(())
}

/// Shared epoch loop: shuffles, batches, and applies one Adam update per
/// batch using `step`, which returns the batch loss and parameter gradient.
fn train<S>(
    net: &mut ImplicitNet,
    cfg: &FitConfig,
    mut samples: Vec<TrainingSample>,
    resample: impl Fn(u64) -> Result<Vec<TrainingSample>>,
    mut step: S,
) -> Result<Vec<LossTerms>>
where
    S: FnMut(&ImplicitNet, &[&TrainingSample]) -> Result<(LossTerms, Vec<f64>)>,
{
    let mut adam = AdamState::new(net.params().len(), cfg.adam);
    let mut rng = rng_from_seed(cfg.seed ^ 0x5eed_ba7c_4e55_0001);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut curve = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        if cfg.resample_per_epoch && epoch > 0 {
            samples = resample(cfg.sampling.seed.wrapping_add(epoch as u64))?;
            order = (0..samples.len()).collect();
        }
        adam.config.lr = cfg.lr_at(epoch);
        order.shuffle(&mut rng);
        let mut sum = LossTerms::default();
        let mut batches = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&TrainingSample> = chunk.iter().map(|&i| &samples[i]).collect();
            let (terms, grad) = step(net, &batch)?;
            check_finite(&terms, &grad, epoch)?;
            adam_step(net.params_mut(), &grad, &mut adam)?;
            sum.sdf += terms.sdf;
            sum.grad += terms.grad;
            sum.normal += terms.normal;
            sum.total += terms.total;
            batches += 1;
        }
        let n = batches.max(1) as f64;
        let mean = LossTerms {
            sdf: sum.sdf / n,
            grad: sum.grad / n,
            normal: sum.normal / n,
            total: sum.total / n,
        };
        debug!("epoch {epoch}: loss {:.6}", mean.total);
        curve.push(mean);
    }
    if net.params().iter().any(|p| !p.is_finite()) {
        return Err(Error::TrainingDiverged { epoch: cfg.epochs });
    }
    Ok(curve)
}

/// Fit a single-output network to the SDF of a sphere union.
pub fn fit_sdf(field: &SphereField, cfg: &FitConfig) -> Result<(ImplicitNet, FitReport)> {
    cfg.validate()?;
    if cfg.net.out_dim != 1 || cfg.net.latent_dim != 0 {
        return Err(Error::Invalid(
            "fit_sdf needs an unconditioned single-output network".into(),
        ));
    }
    let samples = make_training_set(field, &cfg.sampling)?;
    if samples.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let mut net = ImplicitNet::siren_init(cfg.net.clone(), cfg.seed)?;
    let initial = evaluate_sdf_losses(&net, &samples, &cfg.weights)?;
    let resample = |seed| {
        make_training_set(
            field,
            &SampleConfig {
                seed,
                ..cfg.sampling.clone()
            },
        )
    };
    let w = cfg.weights;
    let epochs = train(&mut net, cfg, samples.clone(), resample, |net, batch| {
        losses(net, batch, &w)
    })?;
    let final_loss = evaluate_sdf_losses(&net, &samples, &cfg.weights)?;
    if !final_loss.is_finite() {
        return Err(Error::TrainingDiverged { epoch: cfg.epochs });
    }
    Ok((
        net,
        FitReport {
            initial,
            epochs,
            final_loss,
        },
    ))
}

fn udf_step(net: &ImplicitNet, batch: &[&TrainingSample]) -> Result<(LossTerms, Vec<f64>)> {
    let points: Vec<_> = batch.iter().map(|s| s.point).collect();
    let cache = net.forward_batch(&points, None, false)?;
    let k = net.out_dim();
    let values: Vec<Vec<f64>> = (0..batch.len())
        .map(|i| (0..k).map(|o| cache.value(i, o)).collect())
        .collect();
    let (loss, adj) = udf_loss_terms(batch, &values)?;
    let mut adjoint = OutputAdjoint::zeros(k, batch.len(), false);
    for (i, a) in adj.iter().enumerate() {
        for o in 0..k {
            adjoint.values[o][i] = a[o];
        }
    }
    let grad = net.backward(&cache, &adjoint)?;
    Ok((
        LossTerms {
            sdf: loss,
            total: loss,
            ..Default::default()
        },
        grad,
    ))
}

/// Fit a `K`-output network to the stacked UDF of labeled keypoints. The
/// `out_dim` of `cfg.net` is replaced by the keypoints' label count; loss
/// terms report the mean absolute error in `sdf` and `total`.
pub fn fit_stacked_udf(field: &SphereField, cfg: &FitConfig) -> Result<(ImplicitNet, FitReport)> {
    cfg.validate()?;
    if !field.keypoints.is_labeled() {
        return Err(Error::Unlabeled);
    }
    let net_cfg = NetConfig {
        out_dim: field.keypoints.label_count,
        latent_dim: 0,
        ..cfg.net.clone()
    };
    let samples = make_udf_training_set(field, &cfg.sampling)?;
    let mut net = ImplicitNet::siren_init(net_cfg, cfg.seed)?;
    let mae = |net: &ImplicitNet| -> Result<LossTerms> {
        let l = evaluate_udf_loss(net, &samples)?;
        Ok(LossTerms {
            sdf: l,
            total: l,
            ..Default::default()
        })
    };
    let initial = mae(&net)?;
    let resample = |seed| {
        make_udf_training_set(
            field,
            &SampleConfig {
                seed,
                ..cfg.sampling.clone()
            },
        )
    };
    let epochs = train(&mut net, cfg, samples.clone(), resample, udf_step)?;
    let final_loss = mae(&net)?;
    if !final_loss.is_finite() {
        return Err(Error::TrainingDiverged { epoch: cfg.epochs });
    }
    Ok((
        net,
        FitReport {
            initial,
            epochs,
            final_loss,
        },
    ))
}
