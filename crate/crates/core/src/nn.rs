//! Dense feed-forward networks with hand-written backpropagation.
//!
//! Parameters of every layer are flattened in layer order, each layer
//! contributing its row-major `(out, in)` weight matrix followed by its bias.
//! This ordering is what [`Mlp::flatten_params`], [`Mlp::set_params`], the
//! gradient vectors and the Adam state all share.
//!
//! Batched operations take row-major `(batch, features)` matrices and are the
//! hot path for the learners; the single-sample entry points are thin
//! conveniences around them.

use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Relu,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.max(0.0),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the pre-activation `z` and the output `y`.
    #[inline]
    fn derivative(self, z: f64, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
struct Dense {
    weight: Array2<f64>,
    bias: Array1<f64>,
}

/// Multi-layer perceptron; the output layer is always linear.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "MlpCheckpoint", try_from = "MlpCheckpoint")]
pub struct Mlp {
    sizes: Vec<usize>,
    activations: Vec<Activation>,
    layers: Vec<Dense>,
}

/// Architecture descriptor plus flat parameters; the on-disk form of an [`Mlp`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpCheckpoint {
    pub layer_sizes: Vec<usize>,
    pub hidden_activations: Vec<Activation>,
    pub params: Vec<f64>,
}

impl From<Mlp> for MlpCheckpoint {
    fn from(net: Mlp) -> Self {
        MlpCheckpoint {
            params: net.flatten_params(),
            layer_sizes: net.sizes,
            hidden_activations: net.activations,
        }
    }
}

impl TryFrom<MlpCheckpoint> for Mlp {
    type Error = Error;

    fn try_from(ckpt: MlpCheckpoint) -> Result<Self> {
        let mut net = Mlp::zeros(&ckpt.layer_sizes, &ckpt.hidden_activations)?;
        net.set_params(&ckpt.params)?;
        Ok(net)
    }
}

/// Intermediate values of a batched forward pass, reused by
/// [`Mlp::backward_batch`] and [`Mlp::jvp_batch`].
#[derive(Clone, Debug)]
pub struct ForwardCache {
    input: Array2<f64>,
    pre: Vec<Array2<f64>>,
    post: Vec<Array2<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &Array2<f64> {
        self.post.last().expect("network has at least one layer")
    }

    pub fn batch_size(&self) -> usize {
        self.input.nrows()
    }

    /// Pre-activation values of `layer`, one row per sample.
    pub fn pre_activation(&self, layer: usize) -> &Array2<f64> {
        &self.pre[layer]
    }

    pub fn num_layers(&self) -> usize {
        self.pre.len()
    }

    fn layer_input(&self, layer: usize) -> &Array2<f64> {
        if layer == 0 {
            &self.input
        } else {
            &self.post[layer - 1]
        }
    }
}

/// Gradient of a scalar loss w.r.t. the flattened parameters and the input.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub params: Vec<f64>,
    pub input: Vec<f64>,
}

impl Mlp {
    /// Random initialization: Glorot-uniform for tanh/identity layers,
    /// He-uniform for ReLU layers, zero biases.
    pub fn new<R: Rng + ?Sized>(
        layer_sizes: &[usize],
        hidden_activations: &[Activation],
        rng: &mut R,
    ) -> Result<Self> {
        let mut net = Self::zeros(layer_sizes, hidden_activations)?;
        for (i, layer) in net.layers.iter_mut().enumerate() {
            let (fan_out, fan_in) = layer.weight.dim();
            let act = net
                .activations
                .get(i)
                .copied()
                .unwrap_or(Activation::Identity);
            let limit = match act {
                Activation::Relu => (6.0 / fan_in as f64).sqrt(),
                _ => (6.0 / (fan_in + fan_out) as f64).sqrt(),
            };
            layer
                .weight
                .mapv_inplace(|_| rng.random_range(-limit..limit));
        }
        Ok(net)
    }

    pub fn zeros(layer_sizes: &[usize], hidden_activations: &[Activation]) -> Result<Self> {
        if layer_sizes.len() < 2 || layer_sizes.iter().any(|&n| n == 0) {
            return Err(Error::InvalidConfig(format!(
                "layer sizes must list at least two positive sizes, got {layer_sizes:?}"
            )));
        }
        let n_hidden = layer_sizes.len() - 2;
        let activations = match hidden_activations.len() {
            1 => vec![hidden_activations[0]; n_hidden],
            n if n == n_hidden => hidden_activations.to_vec(),
            0 if n_hidden == 0 => Vec::new(),
            n => {
                return Err(Error::DimensionMismatch {
                    context: "hidden activations",
                    expected: n_hidden,
                    actual: n,
                })
            }
        };
        let layers = layer_sizes
            .windows(2)
            .map(|w| Dense {
                weight: Array2::zeros((w[1], w[0])),
                bias: Array1::zeros(w[1]),
            })
            .collect();
        Ok(Mlp {
            sizes: layer_sizes.to_vec(),
            activations,
            layers,
        })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn hidden_activations(&self) -> &[Activation] {
        &self.activations
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn param_count(&self) -> usize {
        self.sizes.windows(2).map(|w| w[1] * (w[0] + 1)).sum()
    }

    fn activation(&self, layer: usize) -> Activation {
        self.activations
            .get(layer)
            .copied()
            .unwrap_or(Activation::Identity)
    }

    pub fn flatten_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for layer in &self.layers {
            out.extend(layer.weight.iter());
            out.extend(layer.bias.iter());
        }
        out
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        check_len("set_params", self.param_count(), params.len())?;
        let mut offset = 0;
        for layer in &mut self.layers {
            for w in layer.weight.iter_mut() {
                *w = params[offset];
                offset += 1;
            }
            for b in layer.bias.iter_mut() {
                *b = params[offset];
                offset += 1;
            }
        }
        Ok(())
    }

    /// Multiplies the weights and bias of one layer by `factor`.
    pub fn scale_layer(&mut self, layer: usize, factor: f64) {
        self.layers[layer].weight.mapv_inplace(|w| w * factor);
        self.layers[layer].bias.mapv_inplace(|b| b * factor);
    }

    /// Direct access to a layer's weight and bias, mostly for tests and
    /// hand-built networks.
    pub fn layer_mut(&mut self, layer: usize) -> (&mut Array2<f64>, &mut Array1<f64>) {
        let l = &mut self.layers[layer];
        (&mut l.weight, &mut l.bias)
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        check_len("forward input", self.input_dim(), input.len())?;
        let mut x = Array1::from(input.to_vec());
        for (i, layer) in self.layers.iter().enumerate() {
            let act = self.activation(i);
            let mut z = layer.weight.dot(&x);
            z += &layer.bias;
            z.mapv_inplace(|v| act.apply(v));
            x = z;
        }
        Ok(x.to_vec())
    }

    /// Forward pass without keeping intermediates.
    pub fn predict_batch(&self, inputs: &Array2<f64>) -> Result<Array2<f64>> {
        check_len("forward input", self.input_dim(), inputs.ncols())?;
        let mut x = inputs.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            let act = self.activation(i);
            let mut z = x.dot(&layer.weight.t());
            z += &layer.bias;
            z.mapv_inplace(|v| act.apply(v));
            x = z;
        }
        Ok(x)
    }

    pub fn forward_batch(&self, inputs: &Array2<f64>) -> Result<ForwardCache> {
        check_len("forward input", self.input_dim(), inputs.ncols())?;
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut post: Vec<Array2<f64>> = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            let x = if i == 0 { inputs } else { &post[i - 1] };
            let mut z = x.dot(&layer.weight.t());
            z += &layer.bias;
            let act = self.activation(i);
            let y = z.mapv(|v| act.apply(v));
            pre.push(z);
            post.push(y);
        }
        Ok(ForwardCache {
            input: inputs.clone(),
            pre,
            post,
        })
    }

    /// Backpropagates `output_grad` (one row per sample) and returns the
    /// parameter gradient summed over the batch together with the per-sample
    /// input gradients, flattened row-major.
    pub fn backward_batch(
        &self,
        cache: &ForwardCache,
        output_grad: &Array2<f64>,
    ) -> Result<Gradients> {
        check_len("backward output grad", self.output_dim(), output_grad.ncols())?;
        check_len("backward batch", cache.batch_size(), output_grad.nrows())?;
        let mut param_grads: Vec<(Array2<f64>, Array1<f64>)> = Vec::with_capacity(self.layers.len());
        let mut upstream = output_grad.clone();
        for i in (0..self.layers.len()).rev() {
            let act = self.activation(i);
            let mut dz = upstream;
            if act != Activation::Identity {
                ndarray::Zip::from(&mut dz)
                    .and(&cache.pre[i])
                    .and(&cache.post[i])
                    .for_each(|g, &z, &y| *g *= act.derivative(z, y));
            }
            let x = cache.layer_input(i);
            let dw = dz.t().dot(x);
            let db = dz.sum_axis(Axis(0));
            upstream = dz.dot(&self.layers[i].weight);
            param_grads.push((dw, db));
        }
        let mut params = Vec::with_capacity(self.param_count());
        for (dw, db) in param_grads.iter().rev() {
            params.extend(dw.iter());
            params.extend(db.iter());
        }
        Ok(Gradients {
            params,
            input: upstream.iter().copied().collect(),
        })
    }

    pub fn backward(&self, input: &[f64], output_grad: &[f64]) -> Result<Gradients> {
        check_len("backward input", self.input_dim(), input.len())?;
        check_len("backward output grad", self.output_dim(), output_grad.len())?;
        let x = Array2::from_shape_vec((1, input.len()), input.to_vec()).unwrap();
        let g = Array2::from_shape_vec((1, output_grad.len()), output_grad.to_vec()).unwrap();
        let cache = self.forward_batch(&x)?;
        self.backward_batch(&cache, &g)
    }

    /// Forward-mode derivative of the outputs along a parameter-space
    /// direction `tangent`, one row per sample of the cached batch.
    pub fn jvp_batch(&self, cache: &ForwardCache, tangent: &[f64]) -> Result<Array2<f64>> {
        check_len("jvp tangent", self.param_count(), tangent.len())?;
        let mut offset = 0;
        let mut t_in: Option<Array2<f64>> = None;
        for (i, layer) in self.layers.iter().enumerate() {
            let (rows, cols) = layer.weight.dim();
            let dw = ndarray::ArrayView2::from_shape((rows, cols), &tangent[offset..offset + rows * cols])
                .expect("contiguous slice");
            offset += rows * cols;
            let db = ndarray::ArrayView1::from(&tangent[offset..offset + rows]);
            offset += rows;
            let x = cache.layer_input(i);
            let mut tz = x.dot(&dw.t());
            tz += &db;
            if let Some(t) = &t_in {
                tz += &t.dot(&layer.weight.t());
            }
            let act = self.activation(i);
            if act != Activation::Identity {
                ndarray::Zip::from(&mut tz)
                    .and(&cache.pre[i])
                    .and(&cache.post[i])
                    .for_each(|t, &z, &y| *t *= act.derivative(z, y));
            }
            t_in = Some(tz);
        }
        Ok(t_in.expect("network has at least one layer"))
    }
}

/// Adam optimizer state over a flattened parameter vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl AdamState {
    pub fn new(n_params: usize, lr: f64) -> Self {
        AdamState {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
        }
    }

    pub fn first_moment(&self) -> &[f64] {
        &self.m
    }

    pub fn second_moment(&self) -> &[f64] {
        &self.v
    }

    /// One descent step: `params` moves against `grad`.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) -> Result<()> {
        check_len("adam params", self.m.len(), params.len())?;
        check_len("adam grad", self.m.len(), grad.len())?;
        if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
            return Err(Error::NonFinite(format!("adam gradient coordinate {i}")));
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
        Ok(())
    }
}
