//! Fully connected implicit field with exact input Jacobians and
//! reverse-mode parameter gradients.
//!
//! A batch is evaluated column-wise: every activation matrix is
//! `features x cols`, row-major, where the columns hold the values of all
//! batch points followed (optionally) by three tangent blocks, one per input
//! axis. The tangents are pushed forward alongside the values so that the
//! network's spatial gradient is available to the loss, and the backward
//! pass differentiates through both.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::posenc::PosEncConfig;
use crate::error::{Error, Result};
use crate::geometry::Point3;
use crate::sampling::rng_from_seed;

const SELU_LAMBDA: f64 = 1.050_700_987_355_480_5;
const SELU_ALPHA: f64 = 1.673_263_242_354_377_3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Sine,
    Relu,
    Selu,
}

impl Activation {
    pub fn code(self) -> u32 {
        match self {
            Activation::Sine => 0,
            Activation::Relu => 1,
            Activation::Selu => 2,
        }
    }

    pub fn from_code(c: u32) -> Option<Self> {
        match c {
            0 => Some(Activation::Sine),
            1 => Some(Activation::Relu),
            2 => Some(Activation::Selu),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Sine => "Sine",
            Activation::Relu => "ReLU",
            Activation::Selu => "SeLU",
        }
    }

    /// `(f(z), f'(z), f''(z))`.
    #[inline]
    fn eval(self, z: f64, omega: f64) -> (f64, f64, f64) {
        match self {
            Activation::Sine => {
                let (s, c) = (omega * z).sin_cos();
                (s, omega * c, -omega * omega * s)
            }
            Activation::Relu => {
                if z > 0.0 {
                    (z, 1.0, 0.0)
                } else {
                    (0.0, 0.0, 0.0)
                }
            }
            Activation::Selu => {
                if z > 0.0 {
                    (SELU_LAMBDA * z, SELU_LAMBDA, 0.0)
                } else {
                    let e = SELU_LAMBDA * SELU_ALPHA * z.exp();
                    (e - SELU_LAMBDA * SELU_ALPHA, e, e)
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetConfig {
    pub hidden: Vec<usize>,
    pub out_dim: usize,
    pub omega: f64,
    pub posenc: PosEncConfig,
    pub activation: Activation,
    /// Width of the shape code appended to the encoded coordinate; 0 for a
    /// single-shape decoder.
    pub latent_dim: usize,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            hidden: vec![256; 4],
            out_dim: 1,
            omega: 30.0,
            posenc: PosEncConfig::default(),
            activation: Activation::Sine,
            latent_dim: 0,
        }
    }
}

impl NetConfig {
    pub fn input_dim(&self) -> usize {
        self.posenc.output_dim() + self.latent_dim
    }

    /// `[input, hidden.., out]`.
    pub fn widths(&self) -> Vec<usize> {
        let mut w = Vec::with_capacity(self.hidden.len() + 2);
        w.push(self.input_dim());
        w.extend_from_slice(&self.hidden);
        w.push(self.out_dim);
        w
    }

    pub fn validate(&self) -> Result<()> {
        if self.out_dim == 0 {
            return Err(Error::Invalid("out_dim must be at least 1".into()));
        }
        if !(self.omega > 0.0 && self.omega.is_finite()) {
            return Err(Error::Invalid(format!("omega must be positive, got {}", self.omega)));
        }
        if self.input_dim() == 0 || self.hidden.iter().any(|&h| h == 0) {
            return Err(Error::Invalid("layer widths must be positive".into()));
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        self.widths().windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct LayerShape {
    n_in: usize,
    n_out: usize,
    /// Offset of the weight matrix (`n_out x n_in`, row-major) in the flat
    /// parameter vector; biases follow it.
    offset: usize,
}

impl LayerShape {
    fn weights(self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.n_in * self.n_out
    }

    fn biases(self) -> std::ops::Range<usize> {
        let start = self.offset + self.n_in * self.n_out;
        start..start + self.n_out
    }
}

/// Sinusoidal MLP `f(p) = W_L s(.. s(W_1 psi(p) + b_1) ..) + b_L`, where the
/// hidden activation `s` is `sin(omega * x)` by default and the last layer
/// is linear.
#[derive(Debug, Clone, PartialEq)]
pub struct ImplicitNet {
    config: NetConfig,
    layers: Vec<LayerShape>,
    params: Vec<f64>,
    latent: Option<Vec<f64>>,
}

/// Intermediate activations of a batch, kept for the backward pass.
pub struct ForwardCache {
    batch: usize,
    tangents: bool,
    /// `inputs[l]` is the input of layer `l` (`n_in x cols`).
    inputs: Vec<Vec<f64>>,
    /// `pre[l]` holds pre-activations of hidden layer `l` (`n_out x cols`).
    pre: Vec<Vec<f64>>,
    output: Vec<f64>,
}

impl ForwardCache {
    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn has_tangents(&self) -> bool {
        self.tangents
    }

    fn cols(&self) -> usize {
        self.batch * if self.tangents { 4 } else { 1 }
    }

    /// Network output `o` at batch point `i`.
    pub fn value(&self, i: usize, o: usize) -> f64 {
        self.output[o * self.cols() + i]
    }

    /// `d output_o / d p` at batch point `i`.
    pub fn gradient(&self, i: usize, o: usize) -> [f64; 3] {
        assert!(self.tangents, "cache was built without tangents");
        let row = &self.output[o * self.cols()..(o + 1) * self.cols()];
        [1, 2, 3].map(|k| row[k * self.batch + i])
    }
}

/// Adjoints of the loss with respect to the batch outputs: `values[o][i]`
/// and `gradients[o][i][k]`.
pub struct OutputAdjoint {
    pub values: Vec<Vec<f64>>,
    pub gradients: Option<Vec<Vec<[f64; 3]>>>,
}

impl OutputAdjoint {
    pub fn zeros(out_dim: usize, batch: usize, with_gradients: bool) -> Self {
        Self {
            values: vec![vec![0.0; batch]; out_dim],
            gradients: with_gradients.then(|| vec![vec![[0.0; 3]; batch]; out_dim]),
        }
    }
}

/// `c = alpha * op(a) * op(b) + beta * c` for row-major operands, where
/// `op` transposes when the flag is set. `a` is `m x k` after `op`, `b` is
/// `k x n` after `op`.
#[allow(clippy::too_many_arguments)]
fn gemm(m: usize, k: usize, n: usize, a: &[f64], a_t: bool, b: &[f64], b_t: bool, beta: f64, c: &mut [f64]) {
    debug_assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    let (rsa, csa) = if a_t { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_t { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: strides describe matrices that lie within the checked slices.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

impl ImplicitNet {
    /// Zero-initialized network.
    pub fn zeros(config: NetConfig) -> Result<Self> {
        config.validate()?;
        let widths = config.widths();
        let mut layers = Vec::with_capacity(widths.len() - 1);
        let mut offset = 0;
        for w in widths.windows(2) {
            layers.push(LayerShape {
                n_in: w[0],
                n_out: w[1],
                offset,
            });
            offset += w[0] * w[1] + w[1];
        }
        Ok(Self {
            config,
            layers,
            params: vec![0.0; offset],
            latent: None,
        })
    }

    /// SIREN initialization: first layer `U(-1/fan_in, 1/fan_in)`, later
    /// layers `U(-sqrt(6/fan_in)/omega, +..)`, zero biases. ReLU and SeLU
    /// networks use `U(-sqrt(6/fan_in), +..)` and `U(-sqrt(3/fan_in), +..)`.
    pub fn siren_init(config: NetConfig, seed: u64) -> Result<Self> {
        let mut net = Self::zeros(config)?;
        let mut rng = rng_from_seed(seed);
        let omega = net.config.omega;
        let activation = net.config.activation;
        for (l, shape) in net.layers.clone().into_iter().enumerate() {
            let fan_in = shape.n_in as f64;
            let bound = match activation {
                Activation::Sine if l == 0 => 1.0 / fan_in,
                Activation::Sine => (6.0 / fan_in).sqrt() / omega,
                Activation::Relu => (6.0 / fan_in).sqrt(),
                Activation::Selu => (3.0 / fan_in).sqrt(),
            };
            for w in &mut net.params[shape.weights()] {
                *w = rng.gen_range(-bound..=bound);
            }
        }
        Ok(net)
    }

    pub fn from_params(config: NetConfig, params: Vec<f64>) -> Result<Self> {
        let mut net = Self::zeros(config)?;
        if params.len() != net.params.len() {
            return Err(Error::ShapeMismatch(format!(
                "expected {} parameters, got {}",
                net.params.len(),
                params.len()
            )));
        }
        net.params = params;
        Ok(net)
    }

    pub fn config(&self) -> &NetConfig {
        &self.config
    }

    pub fn out_dim(&self) -> usize {
        self.config.out_dim
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn latent(&self) -> Option<&[f64]> {
        self.latent.as_deref()
    }

    pub fn set_latent(&mut self, latent: Option<Vec<f64>>) -> Result<()> {
        let want = self.config.latent_dim;
        match &latent {
            Some(z) if z.len() != want => {
                return Err(Error::ShapeMismatch(format!(
                    "latent of length {} for width {want}",
                    z.len()
                )))
            }
            None if want > 0 => return Err(Error::ShapeMismatch("conditioned net needs a latent code".into())),
            _ => {}
        }
        self.latent = latent;
        Ok(())
    }

    /// Weight matrix of layer `l` as `(n_out, n_in, row-major data)`.
    pub fn layer_weights(&self, l: usize) -> (usize, usize, &[f64]) {
        let s = self.layers[l];
        (s.n_out, s.n_in, &self.params[s.weights()])
    }

    pub fn layer_biases(&self, l: usize) -> &[f64] {
        &self.params[self.layers[l].biases()]
    }

    pub fn layer_count(&self) -> usize {
        self.layers.len()
    }

    fn resolve_latent<'a>(&'a self, latent: Option<&'a [f64]>) -> Result<&'a [f64]> {
        let want = self.config.latent_dim;
        let z = latent.or(self.latent.as_deref()).unwrap_or(&[]);
        if z.len() != want {
            return Err(Error::ShapeMismatch(format!(
                "latent of length {} for width {want}",
                z.len()
            )));
        }
        Ok(z)
    }

    /// Evaluate a batch. With `tangents`, the input Jacobian is carried as
    /// three extra column blocks. `latent` overrides the stored code.
    pub fn forward_batch(&self, points: &[Point3], latent: Option<&[f64]>, tangents: bool) -> Result<ForwardCache> {
        let z = self.resolve_latent(latent)?;
        let batch = points.len();
        let cols = batch * if tangents { 4 } else { 1 };
        let enc = self.config.posenc;
        let enc_dim = enc.output_dim();
        let n_in = self.config.input_dim();

        let mut input = vec![0.0; n_in * cols];
        let mut feat = vec![0.0; enc_dim];
        let mut tan = [vec![0.0; enc_dim], vec![0.0; enc_dim], vec![0.0; enc_dim]];
        for (i, &p) in points.iter().enumerate() {
            if tangents {
                let [t0, t1, t2] = &mut tan;
                enc.encode_with_tangents(p, &mut feat, [t0, t1, t2]);
                for r in 0..enc_dim {
                    let row = &mut input[r * cols..];
                    row[i] = feat[r];
                    for k in 0..3 {
                        row[(k + 1) * batch + i] = tan[k][r];
                    }
                }
            } else {
                enc.encode_into(p, &mut feat);
                for r in 0..enc_dim {
                    input[r * cols + i] = feat[r];
                }
            }
            for (j, &zj) in z.iter().enumerate() {
                input[(enc_dim + j) * cols + i] = zj;
            }
        }

        let omega = self.config.omega;
        let act = self.config.activation;
        let last = self.layers.len() - 1;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(last);
        let mut current = input;
        for (l, shape) in self.layers.iter().enumerate() {
            let w = &self.params[shape.weights()];
            let b = &self.params[shape.biases()];
            let mut out = vec![0.0; shape.n_out * cols];
            gemm(shape.n_out, shape.n_in, cols, w, false, &current, false, 0.0, &mut out);
            for r in 0..shape.n_out {
                for v in &mut out[r * cols..r * cols + batch] {
                    *v += b[r];
                }
            }
            inputs.push(current);
            if l == last {
                current = out;
                break;
            }
            let mut h = vec![0.0; shape.n_out * cols];
            for r in 0..shape.n_out {
                let zr = &out[r * cols..(r + 1) * cols];
                let hr = &mut h[r * cols..(r + 1) * cols];
                for i in 0..batch {
                    let (f, df, _) = act.eval(zr[i], omega);
                    hr[i] = f;
                    if tangents {
                        for k in 1..4 {
                            hr[k * batch + i] = df * zr[k * batch + i];
                        }
                    }
                }
            }
            pre.push(out);
            current = h;
        }

        Ok(ForwardCache {
            batch,
            tangents,
            inputs,
            pre,
            output: current,
        })
    }

    /// Gradient of a scalar loss with respect to the flat parameter vector,
    /// given the loss adjoints of the batch outputs.
    pub fn backward(&self, cache: &ForwardCache, adjoint: &OutputAdjoint) -> Result<Vec<f64>> {
        let batch = cache.batch;
        let cols = cache.cols();
        let out_dim = self.config.out_dim;
        if adjoint.values.len() != out_dim || adjoint.values.iter().any(|v| v.len() != batch) {
            return Err(Error::ShapeMismatch("output adjoint does not match batch".into()));
        }
        if adjoint.gradients.is_some() && !cache.tangents {
            return Err(Error::ShapeMismatch(
                "gradient adjoints need a forward pass with tangents".into(),
            ));
        }

        let mut grad = vec![0.0; self.params.len()];
        let mut upstream = vec![0.0; out_dim * cols];
        for o in 0..out_dim {
            let row = &mut upstream[o * cols..(o + 1) * cols];
            row[..batch].copy_from_slice(&adjoint.values[o]);
            if let Some(g) = &adjoint.gradients {
                for i in 0..batch {
                    for k in 0..3 {
                        row[(k + 1) * batch + i] = g[o][i][k];
                    }
                }
            }
        }

        let omega = self.config.omega;
        let act = self.config.activation;
        let last = self.layers.len() - 1;
        for l in (0..self.layers.len()).rev() {
            let shape = self.layers[l];
            // upstream holds d loss / d (layer l output) on entry; for hidden
            // layers convert it to the adjoint of the pre-activations.
            if l != last {
                let z = &cache.pre[l];
                for r in 0..shape.n_out {
                    let zr = &z[r * cols..(r + 1) * cols];
                    let ur = &mut upstream[r * cols..(r + 1) * cols];
                    for i in 0..batch {
                        let (_, df, ddf) = act.eval(zr[i], omega);
                        let mut value_adj = ur[i] * df;
                        if cache.tangents {
                            for k in 1..4 {
                                let j = k * batch + i;
                                value_adj += ur[j] * ddf * zr[j];
                                ur[j] *= df;
                            }
                        }
                        ur[i] = value_adj;
                    }
                }
            }
            let input = &cache.inputs[l];
            gemm(
                shape.n_out,
                cols,
                shape.n_in,
                &upstream,
                false,
                input,
                true,
                0.0,
                &mut grad[shape.weights()],
            );
            let gb = &mut grad[shape.biases()];
            for r in 0..shape.n_out {
                gb[r] = upstream[r * cols..r * cols + batch].iter().sum();
            }
            if l > 0 {
                let w = &self.params[shape.weights()];
                let mut down = vec![0.0; shape.n_in * cols];
                gemm(shape.n_in, shape.n_out, cols, w, true, &upstream, false, 0.0, &mut down);
                upstream = down;
            }
        }
        Ok(grad)
    }

    /// Output vector at `p`.
    pub fn forward(&self, p: Point3) -> Vec<f64> {
        self.try_forward(p).expect("latent code matches the network")
    }

    pub fn try_forward(&self, p: Point3) -> Result<Vec<f64>> {
        let cache = self.forward_batch(&[p], None, false)?;
        Ok((0..self.out_dim()).map(|o| cache.value(0, o)).collect())
    }

    /// Outputs and the Jacobian, `jacobian[o] = d output_o / d p`.
    pub fn forward_with_input_grad(&self, p: Point3) -> (Vec<f64>, Vec<[f64; 3]>) {
        let cache = self
            .forward_batch(&[p], None, true)
            .expect("latent code matches the network");
        let values = (0..self.out_dim()).map(|o| cache.value(0, o)).collect();
        let jac = (0..self.out_dim()).map(|o| cache.gradient(0, o)).collect();
        (values, jac)
    }

    /// First output at many points, batched.
    pub fn eval_many(&self, points: &[Point3], output: usize) -> Result<Vec<f64>> {
        const CHUNK: usize = 4096;
        let mut out = Vec::with_capacity(points.len());
        for chunk in points.chunks(CHUNK) {
            let cache = self.forward_batch(chunk, None, false)?;
            out.extend((0..chunk.len()).map(|i| cache.value(i, output)));
        }
        Ok(out)
    }

    /// All outputs at many points, `result[i][o]`.
    pub fn eval_many_all(&self, points: &[Point3]) -> Result<Vec<Vec<f64>>> {
        const CHUNK: usize = 4096;
        let mut out = Vec::with_capacity(points.len());
        for chunk in points.chunks(CHUNK) {
            let cache = self.forward_batch(chunk, None, false)?;
            out.extend((0..chunk.len()).map(|i| (0..self.out_dim()).map(|o| cache.value(i, o)).collect()));
        }
        Ok(out)
    }
}
