//! A small feed-forward vector-field network with hand-written reverse mode.
//!
//! Input layout is `[x_t | time embedding | condition]`. Hidden layers use
//! `tanh`; the output layer is linear and has width `d`.

use rand::Rng;

use crate::error::{check_len, param, Error, Result};

/// Sinusoidal time features `[sin(2πk t)…, cos(2πk t)…]`, `k = 1..=width/2`.
///
/// `width == 1` returns the raw time `[t]`.
pub fn embed_time(t: f64, width: usize) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(width);
    embed_time_into(t, width, &mut out)?;
    Ok(out)
}

fn embed_time_into(t: f64, width: usize, out: &mut Vec<f64>) -> Result<()> {
    if width == 1 {
        out.push(t);
        return Ok(());
    }
    if width < 2 || width % 2 != 0 {
        return Err(param(
            "time_embedding_width",
            format!("must be 1 or even and >= 2, got {width}"),
        ));
    }
    let half = width / 2;
    let tau = std::f64::consts::TAU;
    out.extend((1..=half).map(|k| (tau * k as f64 * t).sin()));
    out.extend((1..=half).map(|k| (tau * k as f64 * t).cos()));
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    /// No nonlinearity; the network becomes affine. Used by linearity probes.
    Identity,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the activation output.
    #[inline]
    fn derivative_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
            Activation::Identity => 1.0,
        }
    }
}

/// Dense layer `y = W x + b`, `W` stored row-major as `outputs × inputs`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Layer {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    /// Glorot-uniform weights in `[-s, s]`, `s = sqrt(6 / (fan_in + fan_out))`; zero biases.
    pub fn glorot<R: Rng + ?Sized>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let s = (6.0 / (inputs + outputs) as f64).sqrt();
        let weights = (0..inputs * outputs)
            .map(|_| rng.random_range(-s..=s))
            .collect();
        Self {
            inputs,
            outputs,
            weights,
            bias: vec![0.0; outputs],
        }
    }

    fn affine(&self, x: &[f64], out: &mut [f64]) {
        for (o, (row, b)) in out
            .iter_mut()
            .zip(self.weights.chunks_exact(self.inputs).zip(&self.bias))
        {
            *o = b + row.iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>();
        }
    }
}

/// The vector-field model `v_θ(x_t, t, cond)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<Layer>,
    activation: Activation,
    data_dim: usize,
    time_width: usize,
    cond_width: usize,
}

impl Mlp {
    /// Randomly initialized network with the given hidden widths.
    pub fn new<R: Rng + ?Sized>(
        data_dim: usize,
        time_width: usize,
        cond_width: usize,
        hidden: &[usize],
        rng: &mut R,
    ) -> Result<Self> {
        let sizes = Self::sizes_for(data_dim, time_width, cond_width, hidden);
        let layers = sizes
            .windows(2)
            .map(|w| Layer::glorot(w[0], w[1], rng))
            .collect();
        Self::from_layers(layers, Activation::Tanh, data_dim, time_width, cond_width)
    }

    /// All-zero network; its output is identically zero.
    pub fn zeros(
        data_dim: usize,
        time_width: usize,
        cond_width: usize,
        hidden: &[usize],
    ) -> Result<Self> {
        let sizes = Self::sizes_for(data_dim, time_width, cond_width, hidden);
        let layers = sizes.windows(2).map(|w| Layer::zeros(w[0], w[1])).collect();
        Self::from_layers(layers, Activation::Tanh, data_dim, time_width, cond_width)
    }

    fn sizes_for(
        data_dim: usize,
        time_width: usize,
        cond_width: usize,
        hidden: &[usize],
    ) -> Vec<usize> {
        let mut sizes = vec![data_dim + time_width + cond_width];
        sizes.extend_from_slice(hidden);
        sizes.push(data_dim);
        sizes
    }

    pub fn from_layers(
        layers: Vec<Layer>,
        activation: Activation,
        data_dim: usize,
        time_width: usize,
        cond_width: usize,
    ) -> Result<Self> {
        if layers.is_empty() {
            return Err(param("layers", "at least one layer is required"));
        }
        if data_dim == 0 {
            return Err(param("data_dim", "must be positive"));
        }
        if time_width > 0 {
            embed_time(0.0, time_width)?;
        }
        check_len(
            "network input width",
            data_dim + time_width + cond_width,
            layers[0].inputs,
        )?;
        check_len(
            "network output width",
            data_dim,
            layers[layers.len() - 1].outputs,
        )?;
        for pair in layers.windows(2) {
            check_len("layer chaining", pair[0].outputs, pair[1].inputs)?;
        }
        for layer in &layers {
            check_len(
                "layer weights",
                layer.inputs * layer.outputs,
                layer.weights.len(),
            )?;
            check_len("layer bias", layer.outputs, layer.bias.len())?;
            if !layer
                .weights
                .iter()
                .chain(&layer.bias)
                .all(|x| x.is_finite())
            {
                return Err(param("layers", "parameters must be finite"));
            }
        }
        Ok(Self {
            layers,
            activation,
            data_dim,
            time_width,
            cond_width,
        })
    }

    pub fn with_activation(mut self, activation: Activation) -> Self {
        self.activation = activation;
        self
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn data_dim(&self) -> usize {
        self.data_dim
    }

    pub fn time_width(&self) -> usize {
        self.time_width
    }

    pub fn cond_width(&self) -> usize {
        self.cond_width
    }

    /// `[input, hidden…, output]`
    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.layers[0].inputs];
        sizes.extend(self.layers.iter().map(|l| l.outputs));
        sizes
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    pub fn param_norm(&self) -> f64 {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.bias))
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt()
    }

    pub fn all_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(&l.bias).all(|x| x.is_finite()))
    }

    /// Concatenates `[x | embed(t) | cond]` after checking widths.
    pub fn input_vector(&self, x: &[f64], t: f64, cond: &[f64]) -> Result<Vec<f64>> {
        check_len("x_t", self.data_dim, x.len())?;
        check_len("condition", self.cond_width, cond.len())?;
        let mut input = Vec::with_capacity(self.layers[0].inputs);
        input.extend_from_slice(x);
        if self.time_width > 0 {
            embed_time_into(t, self.time_width, &mut input)?;
        }
        input.extend_from_slice(cond);
        Ok(input)
    }

    pub fn forward(&self, x: &[f64], t: f64, cond: &[f64]) -> Result<Vec<f64>> {
        let input = self.input_vector(x, t, cond)?;
        Ok(self.forward_input(&input))
    }

    /// Forward pass on an already assembled input vector.
    pub fn forward_input(&self, input: &[f64]) -> Vec<f64> {
        let mut acts = self.trace(input);
        acts.pop().unwrap_or_default()
    }

    /// Activations of every layer, starting with the input itself.
    fn trace(&self, input: &[f64]) -> Vec<Vec<f64>> {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(input.to_vec());
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = vec![0.0; layer.outputs];
            layer.affine(&acts[i], &mut z);
            if i != last {
                for v in &mut z {
                    *v = self.activation.apply(*v);
                }
            }
            acts.push(z);
        }
        acts
    }

    /// Gradients of a scalar loss whose gradient w.r.t. the output is `loss_grad`.
    pub fn backward(
        &self,
        x: &[f64],
        t: f64,
        cond: &[f64],
        loss_grad: &[f64],
    ) -> Result<Gradients> {
        let input = self.input_vector(x, t, cond)?;
        check_len("loss gradient", self.data_dim, loss_grad.len())?;
        let mut grads = Gradients::zeros_like(self);
        self.accumulate(&input, loss_grad, &mut grads);
        Ok(grads)
    }

    /// Runs forward on `input`, returns the output and adds the gradient of
    /// `loss_grad_fn(output)` into `grads`.
    pub fn forward_backward(
        &self,
        input: &[f64],
        grads: &mut Gradients,
        loss_grad_fn: impl FnOnce(&[f64]) -> Vec<f64>,
    ) -> Vec<f64> {
        let acts = self.trace(input);
        let out = acts.last().cloned().unwrap_or_default();
        let delta = loss_grad_fn(&out);
        self.backprop(&acts, delta, grads);
        out
    }

    /// Adds the gradients for one input into `grads`.
    pub fn accumulate(&self, input: &[f64], loss_grad: &[f64], grads: &mut Gradients) {
        let acts = self.trace(input);
        self.backprop(&acts, loss_grad.to_vec(), grads);
    }

    fn backprop(&self, acts: &[Vec<f64>], mut delta: Vec<f64>, grads: &mut Gradients) {
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let a_prev = &acts[l];
            let g = &mut grads.layers[l];
            for (o, d) in delta.iter().enumerate() {
                g.bias[o] += d;
                if *d != 0.0 {
                    let row = &mut g.weights[o * layer.inputs..(o + 1) * layer.inputs];
                    for (gw, a) in row.iter_mut().zip(a_prev) {
                        *gw += d * a;
                    }
                }
            }
            if l == 0 {
                break;
            }
            let mut prev = vec![0.0; layer.inputs];
            for (o, d) in delta.iter().enumerate() {
                let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                for (p, w) in prev.iter_mut().zip(row) {
                    *p += w * d;
                }
            }
            for (p, a) in prev.iter_mut().zip(a_prev) {
                *p *= self.activation.derivative_from_output(*a);
            }
            delta = prev;
        }
    }

    /// Plain gradient descent update `θ ← θ − lr g`.
    pub fn sgd_step(&mut self, grads: &Gradients, lr: f64) -> Result<()> {
        grads.check_shape(self)?;
        if !grads.all_finite() {
            return Err(Error::NonFinite {
                stage: "sgd step",
                step: 0,
            });
        }
        for (layer, g) in self.layers.iter_mut().zip(&grads.layers) {
            for (w, gw) in layer.weights.iter_mut().zip(&g.weights) {
                *w -= lr * gw;
            }
            for (b, gb) in layer.bias.iter_mut().zip(&g.bias) {
                *b -= lr * gb;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

/// One gradient array per parameter tensor, shaped like the model.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGrad>,
}

impl Gradients {
    pub fn zeros_like(model: &Mlp) -> Self {
        Self {
            layers: model
                .layers
                .iter()
                .map(|l| LayerGrad {
                    weights: vec![0.0; l.weights.len()],
                    bias: vec![0.0; l.bias.len()],
                })
                .collect(),
        }
    }

    pub fn zero(&mut self) {
        for g in &mut self.layers {
            g.weights.fill(0.0);
            g.bias.fill(0.0);
        }
    }

    pub fn scale(&mut self, s: f64) {
        for g in &mut self.layers {
            g.weights
                .iter_mut()
                .chain(g.bias.iter_mut())
                .for_each(|x| *x *= s);
        }
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (g, o) in self.layers.iter_mut().zip(&other.layers) {
            g.weights
                .iter_mut()
                .zip(&o.weights)
                .for_each(|(a, b)| *a += b);
            g.bias.iter_mut().zip(&o.bias).for_each(|(a, b)| *a += b);
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.layers
            .iter()
            .flat_map(|g| g.weights.iter().chain(&g.bias))
    }

    pub fn norm(&self) -> f64 {
        self.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn all_finite(&self) -> bool {
        self.iter().all(|x| x.is_finite())
    }

    fn check_shape(&self, model: &Mlp) -> Result<()> {
        check_len("gradient layers", model.layers.len(), self.layers.len())?;
        for (l, g) in model.layers.iter().zip(&self.layers) {
            check_len("weight gradient", l.weights.len(), g.weights.len())?;
            check_len("bias gradient", l.bias.len(), g.bias.len())?;
        }
        Ok(())
    }
}

/// Bias-corrected Adam without weight decay.
#[derive(Debug, Clone)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Gradients,
    v: Gradients,
}

impl Adam {
    pub const DEFAULT_BETAS: (f64, f64) = (0.9, 0.99);

    pub fn new(model: &Mlp) -> Self {
        Self::with_betas(model, Self::DEFAULT_BETAS.0, Self::DEFAULT_BETAS.1)
    }

    pub fn with_betas(model: &Mlp, beta1: f64, beta2: f64) -> Self {
        Self {
            beta1,
            beta2,
            eps: 1e-8,
            step: 0,
            m: Gradients::zeros_like(model),
            v: Gradients::zeros_like(model),
        }
    }

    /// Number of updates applied so far.
    pub fn step_index(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, model: &mut Mlp, grads: &Gradients, lr: f64) -> Result<()> {
        grads.check_shape(model)?;
        if !grads.all_finite() {
            return Err(Error::NonFinite {
                stage: "adam step",
                step: self.step as usize + 1,
            });
        }
        self.step += 1;
        let (b1, b2) = (self.beta1, self.beta2);
        let c1 = 1.0 - b1.powi(self.step as i32);
        let c2 = 1.0 - b2.powi(self.step as i32);
        let eps = self.eps;
        let update = |p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]| {
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        };
        for (((layer, g), m), v) in model
            .layers
            .iter_mut()
            .zip(&grads.layers)
            .zip(&mut self.m.layers)
            .zip(&mut self.v.layers)
        {
            update(
                &mut layer.weights,
                &g.weights,
                &mut m.weights,
                &mut v.weights,
            );
            update(&mut layer.bias, &g.bias, &mut m.bias, &mut v.bias);
        }
        Ok(())
    }
}
