use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Shape of a swish MLP: `depth` hidden layers of `width` units.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MlpSpec {
    pub input_dim: usize,
    #[serde(rename = "d")]
    pub depth: usize,
    #[serde(rename = "w")]
    pub width: usize,
    pub output_dim: usize,
}

impl MlpSpec {
    pub fn new(input_dim: usize, depth: usize, width: usize, output_dim: usize) -> Result<Self> {
        let spec = MlpSpec {
            input_dim,
            depth,
            width,
            output_dim,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.depth == 0 || self.width == 0 || self.output_dim == 0 {
            return Err(invalid(format!("degenerate network shape {self:?}")));
        }
        Ok(())
    }

    /// Layer widths from input to output.
    pub fn dims(&self) -> Vec<usize> {
        let mut dims = Vec::with_capacity(self.depth + 2);
        dims.push(self.input_dim);
        dims.extend(std::iter::repeat_n(self.width, self.depth));
        dims.push(self.output_dim);
        dims
    }

    pub fn num_layers(&self) -> usize {
        self.depth + 1
    }

    /// `sum_layers (fan_in * fan_out + fan_out)`.
    pub fn param_count(&self) -> usize {
        self.dims()
            .windows(2)
            .map(|w| w[0] * w[1] + w[1])
            .sum()
    }

    /// `(weight_offset, bias_offset, fan_in, fan_out)` of each layer.
    pub fn layout(&self) -> Vec<LayerLayout> {
        let mut out = Vec::with_capacity(self.num_layers());
        let mut offset = 0;
        for w in self.dims().windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            out.push(LayerLayout {
                weights: offset,
                bias: offset + fan_in * fan_out,
                fan_in,
                fan_out,
            });
            offset += fan_in * fan_out + fan_out;
        }
        out
    }
}

/// Offsets of one affine layer inside the flat parameter vector. Weights are
/// stored row-major as `[fan_out][fan_in]`, followed by `fan_out` biases.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LayerLayout {
    pub weights: usize,
    pub bias: usize,
    pub fan_in: usize,
    pub fan_out: usize,
}

impl LayerLayout {
    #[inline]
    pub fn weight(&self, out: usize, inp: usize) -> usize {
        self.weights + out * self.fan_in + inp
    }
}

pub fn mlp_param_count(spec: &MlpSpec) -> usize {
    spec.param_count()
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub fn swish(x: f64) -> f64 {
    x * sigmoid(x)
}

#[inline]
fn swish_and_slope(x: f64) -> (f64, f64) {
    let s = sigmoid(x);
    (x * s, s + x * s * (1.0 - s))
}

/// Feed-forward network with swish hidden layers and a linear output layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub spec: MlpSpec,
    pub params: Vec<f64>,
}

impl Mlp {
    pub fn zeros(spec: MlpSpec) -> Result<Self> {
        spec.validate()?;
        Ok(Mlp {
            params: vec![0.0; spec.param_count()],
            spec,
        })
    }

    pub fn from_params(spec: MlpSpec, params: Vec<f64>) -> Result<Self> {
        spec.validate()?;
        if params.len() != spec.param_count() {
            return Err(invalid(format!(
                "{} parameters for a network with {}",
                params.len(),
                spec.param_count()
            )));
        }
        Ok(Mlp { spec, params })
    }

    /// Weights uniform on `+-sqrt(6 / (fan_in + fan_out))`, zero biases.
    pub fn init<R: Rng>(spec: MlpSpec, rng: &mut R) -> Result<Self> {
        let mut net = Mlp::zeros(spec)?;
        for layer in spec.layout() {
            let bound = (6.0 / (layer.fan_in + layer.fan_out) as f64).sqrt();
            for w in &mut net.params[layer.weights..layer.bias] {
                *w = rng.random_range(-bound..bound);
            }
        }
        Ok(net)
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn input_layer(&self) -> LayerLayout {
        self.spec.layout()[0]
    }

    /// Zeroes every first-layer weight (biases untouched).
    pub fn zero_input_weights(&mut self) {
        let l = self.input_layer();
        self.params[l.weights..l.bias].fill(0.0);
    }

    /// Euclidean norm of the first-layer weights fed by inputs `cols`.
    pub fn input_column_norm(&self, cols: std::ops::Range<usize>) -> f64 {
        let l = self.input_layer();
        let mut acc = 0.0;
        for j in 0..l.fan_out {
            for i in cols.clone() {
                let w = self.params[l.weight(j, i)];
                acc += w * w;
            }
        }
        acc.sqrt()
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        if input.len() != self.spec.input_dim {
            return Err(invalid(format!(
                "input has length {}, network expects {}",
                input.len(),
                self.spec.input_dim
            )));
        }
        let mut ws = Workspace::new(&self.spec, 1);
        Ok(self.forward_batch(input, 1, &mut ws).to_vec())
    }

    /// Gradient of `<cotangent, forward(input)>` with respect to the parameters
    /// and the input.
    pub fn backward(&self, input: &[f64], cotangent: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        if input.len() != self.spec.input_dim || cotangent.len() != self.spec.output_dim {
            return Err(invalid("input or cotangent shape does not match the network"));
        }
        let mut ws = Workspace::new(&self.spec, 1);
        self.forward_batch(input, 1, &mut ws);
        let mut grad = vec![0.0; self.num_params()];
        let mut input_grad = vec![0.0; self.spec.input_dim];
        self.backward_batch(&mut ws, cotangent, &mut grad, Some(&mut input_grad));
        Ok((grad, input_grad))
    }

    /// Forward pass over `batch` row-major inputs; returns the `batch x output_dim`
    /// outputs stored in `ws`.
    pub fn forward_batch<'w>(&self, inputs: &[f64], batch: usize, ws: &'w mut Workspace) -> &'w [f64] {
        let layout = self.spec.layout();
        ws.ensure(&self.spec, batch);
        ws.batch = batch;
        ws.acts[0][..batch * self.spec.input_dim].copy_from_slice(&inputs[..batch * self.spec.input_dim]);
        let last = layout.len() - 1;
        for (l, layer) in layout.iter().enumerate() {
            let (before, after) = ws.acts.split_at_mut(l + 1);
            let a_in = &before[l][..batch * layer.fan_in];
            let a_out = &mut after[0][..batch * layer.fan_out];
            let w = &self.params[layer.weights..layer.bias];
            let b = &self.params[layer.bias..layer.bias + layer.fan_out];
            let pre = &mut ws.pre[l][..batch * layer.fan_out];
            for s in 0..batch {
                let x = &a_in[s * layer.fan_in..(s + 1) * layer.fan_in];
                for j in 0..layer.fan_out {
                    let row = &w[j * layer.fan_in..(j + 1) * layer.fan_in];
                    let mut z = b[j];
                    for (wi, xi) in row.iter().zip(x) {
                        z += wi * xi;
                    }
                    pre[s * layer.fan_out + j] = z;
                    a_out[s * layer.fan_out + j] = if l == last { z } else { swish(z) };
                }
            }
        }
        &ws.acts[last + 1][..batch * self.spec.output_dim]
    }

    /// Accumulates into `grad` the parameter gradient of
    /// `sum_s <cot_s, out_s>` for the batch last run through `forward_batch`.
    pub fn backward_batch(
        &self,
        ws: &mut Workspace,
        cotangents: &[f64],
        grad: &mut [f64],
        mut input_grad: Option<&mut [f64]>,
    ) {
        let layout = self.spec.layout();
        let batch = ws.batch;
        let last = layout.len() - 1;
        ws.delta[..batch * self.spec.output_dim]
            .copy_from_slice(&cotangents[..batch * self.spec.output_dim]);
        for l in (0..=last).rev() {
            let layer = layout[l];
            let a_in = &ws.acts[l][..batch * layer.fan_in];
            let delta = &ws.delta[..batch * layer.fan_out];
            {
                let (gw, gb) = grad[layer.weights..layer.bias + layer.fan_out]
                    .split_at_mut(layer.fan_in * layer.fan_out);
                for s in 0..batch {
                    let x = &a_in[s * layer.fan_in..(s + 1) * layer.fan_in];
                    for j in 0..layer.fan_out {
                        let d = delta[s * layer.fan_out + j];
                        if d == 0.0 {
                            continue;
                        }
                        gb[j] += d;
                        let row = &mut gw[j * layer.fan_in..(j + 1) * layer.fan_in];
                        for (g, xi) in row.iter_mut().zip(x) {
                            *g += d * xi;
                        }
                    }
                }
            }
            if l == 0 && input_grad.is_none() {
                break;
            }
            // propagate to the layer input
            let w = &self.params[layer.weights..layer.bias];
            let next = &mut ws.delta_prev[..batch * layer.fan_in];
            next.fill(0.0);
            for s in 0..batch {
                let out_row = &mut next[s * layer.fan_in..(s + 1) * layer.fan_in];
                for j in 0..layer.fan_out {
                    let d = delta[s * layer.fan_out + j];
                    if d == 0.0 {
                        continue;
                    }
                    let row = &w[j * layer.fan_in..(j + 1) * layer.fan_in];
                    for (o, wi) in out_row.iter_mut().zip(row) {
                        *o += d * wi;
                    }
                }
            }
            if l == 0 {
                if let Some(ig) = input_grad.as_deref_mut() {
                    for (g, d) in ig.iter_mut().zip(next.iter()) {
                        *g += d;
                    }
                }
                break;
            }
            let pre = &ws.pre[l - 1][..batch * layer.fan_in];
            for (d, &z) in next.iter_mut().zip(pre) {
                *d *= swish_and_slope(z).1;
            }
            std::mem::swap(&mut ws.delta, &mut ws.delta_prev);
        }
    }
}

/// Scratch buffers for batched passes.
#[derive(Clone, Debug, Default)]
pub struct Workspace {
    batch: usize,
    capacity: usize,
    spec: Option<MlpSpec>,
    // acts[0] is the input, acts[l + 1] the output of layer l
    acts: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
    delta: Vec<f64>,
    delta_prev: Vec<f64>,
}

impl Workspace {
    pub fn new(spec: &MlpSpec, batch: usize) -> Self {
        let mut ws = Workspace::default();
        ws.ensure(spec, batch);
        ws
    }

    fn ensure(&mut self, spec: &MlpSpec, batch: usize) {
        if self.spec.as_ref() == Some(spec) && self.capacity >= batch {
            return;
        }
        let dims = spec.dims();
        let widest = *dims.iter().max().unwrap();
        self.acts = dims.iter().map(|&d| vec![0.0; d * batch]).collect();
        self.pre = dims[1..].iter().map(|&d| vec![0.0; d * batch]).collect();
        self.delta = vec![0.0; widest * batch];
        self.delta_prev = vec![0.0; widest * batch];
        self.capacity = batch;
        self.spec = Some(*spec);
    }
}
