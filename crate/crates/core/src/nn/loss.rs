//! Training objectives.
//!
//! Each term is averaged over the samples that contribute to it: the value
//! and Eikonal terms over the whole batch, the normal term over the
//! on-surface samples only.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampling::TrainingSample;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda1: 1.0,
            lambda2: 0.1,
            lambda3: 0.05,
        }
    }
}

impl LossWeights {
    /// Whether any term depends on the spatial gradient.
    pub fn uses_gradient(&self) -> bool {
        self.lambda2 != 0.0 || self.lambda3 != 0.0
    }

    pub fn validate(&self) -> Result<()> {
        if [self.lambda1, self.lambda2, self.lambda3]
            .iter()
            .any(|l| !(*l >= 0.0 && l.is_finite()))
        {
            return Err(Error::Invalid("loss weights must be nonnegative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossTerms {
    pub sdf: f64,
    pub grad: f64,
    pub normal: f64,
    pub total: f64,
}

impl LossTerms {
    pub fn is_finite(&self) -> bool {
        self.sdf.is_finite() && self.grad.is_finite() && self.normal.is_finite() && self.total.is_finite()
    }
}

/// Loss adjoints with respect to predicted values and spatial gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct SdfAdjoint {
    pub values: Vec<f64>,
    pub gradients: Vec<[f64; 3]>,
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// SDF, Eikonal and normal losses of predictions `values[i]` with spatial
/// gradients `gradients[i]` against `samples`, plus their adjoints.
pub fn sdf_loss_terms(
    samples: &[&TrainingSample],
    values: &[f64],
    gradients: &[[f64; 3]],
    w: &LossWeights,
) -> Result<(LossTerms, SdfAdjoint)> {
    let n = samples.len();
    if n == 0 {
        return Err(Error::EmptyBatch);
    }
    if values.len() != n || gradients.len() != n {
        return Err(Error::ShapeMismatch("predictions do not match batch".into()));
    }
    let n_surface = samples.iter().filter(|s| s.normal.is_some()).count();
    let inv_n = 1.0 / n as f64;
    let inv_s = if n_surface > 0 { 1.0 / n_surface as f64 } else { 0.0 };

    let mut terms = LossTerms::default();
    let mut adj = SdfAdjoint {
        values: vec![0.0; n],
        gradients: vec![[0.0; 3]; n],
    };
    for (i, s) in samples.iter().enumerate() {
        let r = values[i] - s.sdf;
        terms.sdf += r.abs() * inv_n;
        adj.values[i] = w.lambda1 * sign(r) * inv_n;

        let g = gradients[i];
        let norm = (g[0] * g[0] + g[1] * g[1] + g[2] * g[2]).sqrt();
        terms.grad += (norm - 1.0).abs() * inv_n;
        if norm > 0.0 {
            let c = w.lambda2 * sign(norm - 1.0) * inv_n / norm;
            for k in 0..3 {
                adj.gradients[i][k] += c * g[k];
            }
        }

        if let Some(nrm) = s.normal {
            let nv = nrm.to_array();
            if norm > 0.0 {
                let dot = g[0] * nv[0] + g[1] * nv[1] + g[2] * nv[2];
                terms.normal += (1.0 - dot / norm) * inv_s;
                // d/dg (1 - g.n/|g|) = -(n/|g| - (g.n) g/|g|^3)
                let c = w.lambda3 * inv_s;
                for k in 0..3 {
                    adj.gradients[i][k] -= c * (nv[k] / norm - dot * g[k] / (norm * norm * norm));
                }
            } else {
                terms.normal += inv_s;
            }
        }
    }
    terms.total = w.lambda1 * terms.sdf + w.lambda2 * terms.grad + w.lambda3 * terms.normal;
    Ok((terms, adj))
}

/// Mean absolute error of stacked-UDF predictions `values[i][k]` and its
/// adjoint.
pub fn udf_loss_terms(samples: &[&TrainingSample], values: &[Vec<f64>]) -> Result<(f64, Vec<Vec<f64>>)> {
    let n = samples.len();
    if n == 0 {
        return Err(Error::EmptyBatch);
    }
    if values.len() != n {
        return Err(Error::ShapeMismatch("predictions do not match batch".into()));
    }
    let mut loss = 0.0;
    let mut adj = Vec::with_capacity(n);
    let mut scale = 0.0;
    for (s, v) in samples.iter().zip(values) {
        let target = s.udf.as_ref().ok_or(Error::Unlabeled)?;
        if target.len() != v.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} UDF channels predicted for {} targets",
                v.len(),
                target.len()
            )));
        }
        scale = 1.0 / (n * target.len()) as f64;
        let mut a = Vec::with_capacity(v.len());
        for (p, t) in v.iter().zip(target) {
            loss += (p - t).abs() * scale;
            a.push(sign(p - t) * scale);
        }
        adj.push(a);
    }
    debug_assert!(scale > 0.0);
    Ok((loss, adj))
}
