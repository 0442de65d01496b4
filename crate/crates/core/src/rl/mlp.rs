//! Small fully connected network with hand-written backpropagation.

use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Identity => x,
        }
    }

    fn derivative(self, pre: f64) -> f64 {
        match self {
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

/// Dense layer, weights stored row-major as `[output][input]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    /// Uniform init with bound `gain * sqrt(6 / (fan_in + fan_out))`.
    pub fn random<R: Rng>(inputs: usize, outputs: usize, gain: f64, rng: &mut R) -> Self {
        let bound = gain * (6.0 / (inputs + outputs) as f64).sqrt();
        Self {
            inputs,
            outputs,
            weights: (0..inputs * outputs).map(|_| rng.gen_range(-bound..=bound)).collect(),
            bias: vec![0.0; outputs],
        }
    }

    fn forward(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(self.bias.iter().enumerate().map(|(o, b)| {
            let row = &self.weights[o * self.inputs..(o + 1) * self.inputs];
            b + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
        }));
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Dense>,
    /// Applied after every layer but the last.
    pub hidden_activation: Activation,
}

/// Intermediate values of one forward pass, kept for backpropagation.
#[derive(Debug, Clone, Default)]
pub struct Trace {
    /// `inputs[k]` is the input of layer `k`; the last entry is the network output.
    inputs: Vec<Vec<f64>>,
    /// Pre-activation of each layer.
    pre: Vec<Vec<f64>>,
}

impl Trace {
    pub fn output(&self) -> &[f64] {
        self.inputs.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

/// Gradient buffer with the same shape as an [`Mlp`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Dense>,
}

impl Gradients {
    pub fn zero(&mut self) {
        for l in &mut self.layers {
            l.weights.fill(0.0);
            l.bias.fill(0.0);
        }
    }

    pub fn scale(&mut self, k: f64) {
        for l in &mut self.layers {
            l.weights.iter_mut().chain(l.bias.iter_mut()).for_each(|g| *g *= k);
        }
    }

    pub fn sum_of_squares(&self) -> f64 {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.bias))
            .map(|g| g * g)
            .sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.bias))
            .all(|g| g.is_finite())
    }

    pub fn flat(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.bias).copied())
            .collect()
    }
}

/// Scale a set of gradient buffers so their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm(grads: &mut [&mut Gradients], max_norm: f64) -> f64 {
    let norm = grads.iter().map(|g| g.sum_of_squares()).sum::<f64>().sqrt();
    if norm > max_norm && norm > 0.0 {
        let k = max_norm / (norm + 1e-6);
        grads.iter_mut().for_each(|g| g.scale(k));
    }
    norm
}

impl Mlp {
    /// `sizes` lists layer widths from input to output, e.g. `[6, 64, 64, 8]`.
    pub fn new<R: Rng>(sizes: &[usize], hidden_activation: Activation, output_gain: f64, rng: &mut R) -> Self {
        assert!(sizes.len() >= 2, "need at least an input and an output size");
        let n = sizes.len() - 1;
        let layers = (0..n)
            .map(|i| {
                let gain = if i + 1 == n { output_gain } else { 1.0 };
                Dense::random(sizes[i], sizes[i + 1], gain, rng)
            })
            .collect();
        Self {
            layers,
            hidden_activation,
        }
    }

    pub fn zeros(sizes: &[usize], hidden_activation: Activation) -> Self {
        Self {
            layers: sizes.windows(2).map(|w| Dense::zeros(w[0], w[1])).collect(),
            hidden_activation,
        }
    }

    pub fn input_size(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_size(&self) -> usize {
        self.layers.last().expect("non-empty").outputs
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![self.input_size()];
        s.extend(self.layers.iter().map(|l| l.outputs));
        s
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn param_mut(&mut self, mut idx: usize) -> &mut f64 {
        for l in &mut self.layers {
            if idx < l.weights.len() {
                return &mut l.weights[idx];
            }
            idx -= l.weights.len();
            if idx < l.bias.len() {
                return &mut l.bias[idx];
            }
            idx -= l.bias.len();
        }
        panic!("parameter index out of range");
    }

    pub fn params(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.bias).copied())
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.bias))
            .all(|p| p.is_finite())
    }

    pub fn zero_gradients(&self) -> Gradients {
        Gradients {
            layers: self.layers.iter().map(|l| Dense::zeros(l.inputs, l.outputs)).collect(),
        }
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut cur = x.to_vec();
        let mut next = Vec::new();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            layer.forward(&cur, &mut next);
            if i < last {
                next.iter_mut().for_each(|v| *v = self.hidden_activation.apply(*v));
            }
            std::mem::swap(&mut cur, &mut next);
        }
        cur
    }

    pub fn forward_trace(&self, x: &[f64]) -> Trace {
        let mut trace = Trace {
            inputs: Vec::with_capacity(self.layers.len() + 1),
            pre: Vec::with_capacity(self.layers.len()),
        };
        trace.inputs.push(x.to_vec());
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = Vec::new();
            layer.forward(trace.inputs.last().expect("input"), &mut z);
            let a = if i < last {
                z.iter().map(|v| self.hidden_activation.apply(*v)).collect()
            } else {
                z.clone()
            };
            trace.pre.push(z);
            trace.inputs.push(a);
        }
        trace
    }

    /// Accumulate dL/dθ into `grads` given dL/d(output).
    pub fn backward(&self, trace: &Trace, grad_output: &[f64], grads: &mut Gradients) {
        let mut delta = grad_output.to_vec();
        let last = self.layers.len() - 1;
        for i in (0..self.layers.len()).rev() {
            let layer = &self.layers[i];
            if i < last {
                for (d, z) in delta.iter_mut().zip(&trace.pre[i]) {
                    *d *= self.hidden_activation.derivative(*z);
                }
            }
            let input = &trace.inputs[i];
            let g = &mut grads.layers[i];
            for o in 0..layer.outputs {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                g.bias[o] += d;
                let row = &mut g.weights[o * layer.inputs..(o + 1) * layer.inputs];
                row.iter_mut().zip(input).for_each(|(gw, x)| *gw += d * x);
            }
            if i > 0 {
                let mut prev = vec![0.0; layer.inputs];
                for (o, d) in delta.iter().enumerate() {
                    if *d == 0.0 {
                        continue;
                    }
                    let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                    prev.iter_mut().zip(row).for_each(|(p, w)| *p += d * w);
                }
                delta = prev;
            }
        }
    }
}

/// Adam optimizer state for one network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(net: &Mlp, learning_rate: f64) -> Self {
        let n = net.num_params();
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }

    pub fn with_eps(mut self, eps: f64) -> Self {
        self.eps = eps;
        self
    }

    /// Gradient descent step: θ ← θ − lr · m̂ / (√v̂ + ε).
    pub fn step(&mut self, net: &mut Mlp, grads: &Gradients) {
        self.step += 1;
        let b1t = 1.0 - self.beta1.powi(self.step as i32);
        let b2t = 1.0 - self.beta2.powi(self.step as i32);
        let mut k = 0;
        for (layer, g) in net.layers.iter_mut().zip(&grads.layers) {
            for (p, gp) in layer
                .weights
                .iter_mut()
                .chain(layer.bias.iter_mut())
                .zip(g.weights.iter().chain(&g.bias))
            {
                self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * gp;
                self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * gp * gp;
                let mh = self.m[k] / b1t;
                let vh = self.v[k] / b2t;
                *p -= self.learning_rate * mh / (vh.sqrt() + self.eps);
                k += 1;
            }
        }
    }
}

/// Largest relative difference between analytic gradients and central
/// finite differences (step `h`) of `loss` at input `x`.
///
/// `loss` maps a network output to the loss and its gradient w.r.t. the
/// output. Relative errors use `max(|analytic|, |numeric|, 1e-6)` as the
/// denominator so that exactly-zero gradients compare absolutely.
pub fn gradcheck<F>(net: &Mlp, x: &[f64], loss: F, h: f64) -> f64
where
    F: Fn(&[f64]) -> (f64, Vec<f64>),
{
    let trace = net.forward_trace(x);
    let (_, grad_out) = loss(trace.output());
    let mut grads = net.zero_gradients();
    net.backward(&trace, &grad_out, &mut grads);
    let analytic = grads.flat();

    let mut probe = net.clone();
    let mut worst: f64 = 0.0;
    for (i, a) in analytic.iter().enumerate() {
        let orig = *probe.param_mut(i);
        *probe.param_mut(i) = orig + h;
        let plus = loss(&probe.forward(x)).0;
        *probe.param_mut(i) = orig - h;
        let minus = loss(&probe.forward(x)).0;
        *probe.param_mut(i) = orig;
        let numeric = (plus - minus) / (2.0 * h);
        let denom = a.abs().max(numeric.abs()).max(1e-6);
        worst = worst.max((a - numeric).abs() / denom);
    }
    worst
}

/// ½‖output − target‖² and its gradient.
pub fn squared_error(output: &[f64], target: &[f64]) -> (f64, Vec<f64>) {
    let diff: Vec<f64> = output.iter().zip(target).map(|(o, t)| o - t).collect();
    (0.5 * diff.iter().map(|d| d * d).sum::<f64>(), diff)
}
