//! A common view of analytic and learned scalar fields.

use crate::error::Result;
use crate::geometry::{Point3, SphereField};
use crate::nn::ImplicitNet;

/// A scalar field that can be sampled in bulk.
pub trait ScalarField: Sync {
    fn values(&self, points: &[Point3]) -> Result<Vec<f64>>;
}

/// A scalar field with a spatial gradient.
pub trait GradientField: ScalarField {
    fn values_and_gradients(&self, points: &[Point3]) -> Result<(Vec<f64>, Vec<[f64; 3]>)>;
}

impl ScalarField for SphereField {
    fn values(&self, points: &[Point3]) -> Result<Vec<f64>> {
        points.iter().map(|&p| self.sdf(p)).collect()
    }
}

impl GradientField for SphereField {
    fn values_and_gradients(&self, points: &[Point3]) -> Result<(Vec<f64>, Vec<[f64; 3]>)> {
        let values = self.values(points)?;
        let grads = points
            .iter()
            .map(|&p| self.gradient(p).map(Point3::to_array))
            .collect::<Result<_>>()?;
        Ok((values, grads))
    }
}

/// The first output channel of a network.
impl ScalarField for ImplicitNet {
    fn values(&self, points: &[Point3]) -> Result<Vec<f64>> {
        self.eval_many(points, 0)
    }
}

impl GradientField for ImplicitNet {
    fn values_and_gradients(&self, points: &[Point3]) -> Result<(Vec<f64>, Vec<[f64; 3]>)> {
        let mut values = Vec::with_capacity(points.len());
        let mut grads = Vec::with_capacity(points.len());
        for chunk in points.chunks(2048) {
            let cache = self.forward_batch(chunk, None, true)?;
            for i in 0..chunk.len() {
                values.push(cache.value(i, 0));
                grads.push(cache.gradient(i, 0));
            }
        }
        Ok((values, grads))
    }
}

/// A closure-backed field, mostly for tests.
pub struct FnField<F>(pub F);

impl<F: Fn(Point3) -> f64 + Sync> ScalarField for FnField<F> {
    fn values(&self, points: &[Point3]) -> Result<Vec<f64>> {
        Ok(points.iter().map(|&p| (self.0)(p)).collect())
    }
}
