//! Small convolutional/dense networks with hand-written backpropagation.
//!
//! A network reads a single-channel image through an optional stack of
//! strided convolutions, flattens the result, appends a vector of extra
//! inputs and finishes with dense layers. Gradients are accumulated into a
//! [`Grads`] value laid out like [`Network::tensors`].

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::LearnError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative expressed through the activation's output.
    #[inline]
    pub fn derivative_at_output(self, y: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub out_h: usize,
    pub out_w: usize,
    /// `[out][in][ky][kx]`
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl Conv2d {
    pub fn new(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        (in_h, in_w): (usize, usize),
        activation: Activation,
    ) -> Result<Self, LearnError> {
        if in_channels == 0 || out_channels == 0 || kernel == 0 || stride == 0 {
            return Err(LearnError::Domain("convolution sizes must be positive".into()));
        }
        let padding = kernel / 2;
        if in_h + 2 * padding < kernel || in_w + 2 * padding < kernel {
            return Err(LearnError::Domain(format!(
                "{in_h}x{in_w} input too small for kernel {kernel}"
            )));
        }
        let out_h = (in_h + 2 * padding - kernel) / stride + 1;
        let out_w = (in_w + 2 * padding - kernel) / stride + 1;
        Ok(Self {
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
            in_h,
            in_w,
            out_h,
            out_w,
            weight: vec![0.0; out_channels * in_channels * kernel * kernel],
            bias: vec![0.0; out_channels],
            activation,
        })
    }

    pub fn input_len(&self) -> usize {
        self.in_channels * self.in_h * self.in_w
    }

    pub fn output_len(&self) -> usize {
        self.out_channels * self.out_h * self.out_w
    }

    fn fan_in(&self) -> usize {
        self.in_channels * self.kernel * self.kernel
    }

    /// Input row/column for an output position and kernel offset, if inside.
    #[inline]
    fn source(&self, o: usize, k: usize, limit: usize) -> Option<usize> {
        (o * self.stride + k).checked_sub(self.padding).filter(|&i| i < limit)
    }

    fn forward(&self, x: &[f64], y: &mut Vec<f64>) {
        let k = self.kernel;
        y.clear();
        y.resize(self.output_len(), 0.0);
        for oc in 0..self.out_channels {
            for oy in 0..self.out_h {
                for ox in 0..self.out_w {
                    let mut sum = self.bias[oc];
                    for ic in 0..self.in_channels {
                        let wbase = (oc * self.in_channels + ic) * k * k;
                        let xbase = ic * self.in_h * self.in_w;
                        for ky in 0..k {
                            let Some(iy) = self.source(oy, ky, self.in_h) else {
                                continue;
                            };
                            for kx in 0..k {
                                if let Some(ix) = self.source(ox, kx, self.in_w) {
                                    sum += self.weight[wbase + ky * k + kx] * x[xbase + iy * self.in_w + ix];
                                }
                            }
                        }
                    }
                    y[(oc * self.out_h + oy) * self.out_w + ox] = self.activation.apply(sum);
                }
            }
        }
    }

    fn backward(&self, x: &[f64], y: &[f64], gy: &[f64], gw: &mut [f64], gb: &mut [f64], mut gx: Option<&mut [f64]>) {
        let k = self.kernel;
        for oc in 0..self.out_channels {
            for oy in 0..self.out_h {
                for ox in 0..self.out_w {
                    let idx = (oc * self.out_h + oy) * self.out_w + ox;
                    let gz = gy[idx] * self.activation.derivative_at_output(y[idx]);
                    if gz == 0.0 {
                        continue;
                    }
                    gb[oc] += gz;
                    for ic in 0..self.in_channels {
                        let wbase = (oc * self.in_channels + ic) * k * k;
                        let xbase = ic * self.in_h * self.in_w;
                        for ky in 0..k {
                            let Some(iy) = self.source(oy, ky, self.in_h) else {
                                continue;
                            };
                            for kx in 0..k {
                                if let Some(ix) = self.source(ox, kx, self.in_w) {
                                    let xi = xbase + iy * self.in_w + ix;
                                    gw[wbase + ky * k + kx] += gz * x[xi];
                                    if let Some(gx) = gx.as_deref_mut() {
                                        gx[xi] += gz * self.weight[wbase + ky * k + kx];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    /// Row-major `[out][in]`.
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl Dense {
    pub fn new(inputs: usize, outputs: usize, activation: Activation) -> Result<Self, LearnError> {
        if inputs == 0 || outputs == 0 {
            return Err(LearnError::Domain("dense sizes must be positive".into()));
        }
        Ok(Self {
            inputs,
            outputs,
            weight: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
            activation,
        })
    }

    fn forward(&self, x: &[f64], y: &mut Vec<f64>) {
        y.clear();
        y.extend(self.weight.chunks_exact(self.inputs).zip(&self.bias).map(|(row, b)| {
            let z = row.iter().zip(x).fold(*b, |acc, (w, xi)| acc + w * xi);
            self.activation.apply(z)
        }));
    }

    fn backward(&self, x: &[f64], y: &[f64], gy: &[f64], gw: &mut [f64], gb: &mut [f64], gx: &mut [f64]) {
        for o in 0..self.outputs {
            let gz = gy[o] * self.activation.derivative_at_output(y[o]);
            if gz == 0.0 {
                continue;
            }
            gb[o] += gz;
            let row = o * self.inputs;
            let w = &self.weight[row..row + self.inputs];
            let g = &mut gw[row..row + self.inputs];
            for i in 0..self.inputs {
                g[i] += gz * x[i];
                gx[i] += gz * w[i];
            }
        }
    }
}

/// Architecture shared by actor and critic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkSpec {
    pub conv_filters: Vec<usize>,
    pub kernel: usize,
    pub stride: usize,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    /// Half-width of the uniform initialization of the output layer.
    pub final_init: f64,
}

impl Default for NetworkSpec {
    fn default() -> Self {
        Self {
            conv_filters: vec![8, 16],
            kernel: 3,
            stride: 2,
            hidden: vec![256, 256],
            activation: Activation::Relu,
            final_init: 3e-3,
        }
    }
}

/// Per-tensor gradient buffers, in [`Network::tensors`] order.
pub type Grads = Vec<Vec<f64>>;

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub image_h: usize,
    pub image_w: usize,
    pub extra_inputs: usize,
    pub conv: Vec<Conv2d>,
    pub dense: Vec<Dense>,
}

/// Activations recorded by a forward pass.
#[derive(Debug, Clone, Default)]
pub struct Trace {
    /// Conv outputs, one per conv layer.
    conv: Vec<Vec<f64>>,
    /// Dense inputs (first is the flattened trunk plus extras), then the output.
    dense: Vec<Vec<f64>>,
}

impl Trace {
    pub fn output(&self) -> &[f64] {
        self.dense.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

impl Network {
    /// Builds a network with every parameter zero.
    pub fn zeros(
        spec: &NetworkSpec,
        (image_h, image_w): (usize, usize),
        extra_inputs: usize,
        outputs: usize,
        output_activation: Activation,
    ) -> Result<Self, LearnError> {
        let mut conv = Vec::with_capacity(spec.conv_filters.len());
        let (mut c, mut h, mut w) = (1, image_h, image_w);
        for &filters in &spec.conv_filters {
            let layer = Conv2d::new(c, filters, spec.kernel, spec.stride, (h, w), spec.activation)?;
            (c, h, w) = (filters, layer.out_h, layer.out_w);
            conv.push(layer);
        }
        let mut width = c * h * w + extra_inputs;
        let mut dense = Vec::with_capacity(spec.hidden.len() + 1);
        for &units in &spec.hidden {
            dense.push(Dense::new(width, units, spec.activation)?);
            width = units;
        }
        dense.push(Dense::new(width, outputs, output_activation)?);
        Ok(Self {
            image_h,
            image_w,
            extra_inputs,
            conv,
            dense,
        })
    }

    /// Uniform fan-in initialization, with the output layer drawn from
    /// `+-final_init`.
    pub fn random(
        spec: &NetworkSpec,
        image: (usize, usize),
        extra_inputs: usize,
        outputs: usize,
        output_activation: Activation,
        rng: &mut impl Rng,
    ) -> Result<Self, LearnError> {
        let mut net = Self::zeros(spec, image, extra_inputs, outputs, output_activation)?;
        for layer in &mut net.conv {
            let bound = 1.0 / (layer.fan_in() as f64).sqrt();
            for v in layer.weight.iter_mut().chain(layer.bias.iter_mut()) {
                *v = rng.random_range(-bound..=bound);
            }
        }
        let last = net.dense.len() - 1;
        for (i, layer) in net.dense.iter_mut().enumerate() {
            let bound = if i == last {
                spec.final_init
            } else {
                1.0 / (layer.inputs as f64).sqrt()
            };
            for v in layer.weight.iter_mut().chain(layer.bias.iter_mut()) {
                *v = rng.random_range(-bound..=bound);
            }
        }
        Ok(net)
    }

    pub fn image_len(&self) -> usize {
        self.image_h * self.image_w
    }

    pub fn output_len(&self) -> usize {
        self.dense.last().map_or(0, |d| d.outputs)
    }

    /// `(name, shape, values)` for every parameter tensor, in a fixed order.
    pub fn tensors(&self) -> Vec<(String, Vec<usize>, &[f64])> {
        let mut out = Vec::with_capacity(2 * (self.conv.len() + self.dense.len()));
        for (i, l) in self.conv.iter().enumerate() {
            out.push((
                format!("conv{i}.weight"),
                vec![l.out_channels, l.in_channels, l.kernel, l.kernel],
                l.weight.as_slice(),
            ));
            out.push((format!("conv{i}.bias"), vec![l.out_channels], l.bias.as_slice()));
        }
        for (i, l) in self.dense.iter().enumerate() {
            out.push((
                format!("dense{i}.weight"),
                vec![l.outputs, l.inputs],
                l.weight.as_slice(),
            ));
            out.push((format!("dense{i}.bias"), vec![l.outputs], l.bias.as_slice()));
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Vec<f64>> {
        let mut out = Vec::with_capacity(2 * (self.conv.len() + self.dense.len()));
        for l in &mut self.conv {
            out.push(&mut l.weight);
            out.push(&mut l.bias);
        }
        for l in &mut self.dense {
            out.push(&mut l.weight);
            out.push(&mut l.bias);
        }
        out
    }

    pub fn zero_grads(&self) -> Grads {
        self.tensors().iter().map(|(_, _, v)| vec![0.0; v.len()]).collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|(_, _, v)| v.len()).sum()
    }

    /// Checks that layer sizes chain and every parameter is finite.
    pub fn validate(&self) -> Result<(), LearnError> {
        let mut len = self.image_len();
        for (i, l) in self.conv.iter().enumerate() {
            if l.input_len() != len {
                return Err(LearnError::Domain(format!(
                    "conv{i} expects {} inputs, gets {len}",
                    l.input_len()
                )));
            }
            len = l.output_len();
        }
        len += self.extra_inputs;
        for (i, l) in self.dense.iter().enumerate() {
            if l.inputs != len {
                return Err(LearnError::Domain(format!(
                    "dense{i} expects {} inputs, gets {len}",
                    l.inputs
                )));
            }
            len = l.outputs;
        }
        if self.dense.is_empty() {
            return Err(LearnError::Domain("network has no output layer".into()));
        }
        for (name, _, values) in self.tensors() {
            if values.iter().any(|v| !v.is_finite()) {
                return Err(LearnError::Domain(format!("non-finite parameter in {name}")));
            }
        }
        Ok(())
    }

    fn check_inputs(&self, image: &[f64], extra: &[f64]) -> Result<(), LearnError> {
        if image.len() != self.image_len() || extra.len() != self.extra_inputs {
            return Err(LearnError::Domain(format!(
                "network expects {}+{} inputs, got {}+{}",
                self.image_len(),
                self.extra_inputs,
                image.len(),
                extra.len()
            )));
        }
        Ok(())
    }

    pub fn forward_trace(&self, image: &[f64], extra: &[f64]) -> Result<Trace, LearnError> {
        self.check_inputs(image, extra)?;
        let mut trace = Trace {
            conv: Vec::with_capacity(self.conv.len()),
            dense: Vec::with_capacity(self.dense.len() + 1),
        };
        for layer in &self.conv {
            let mut y = Vec::new();
            layer.forward(trace.conv.last().map_or(image, Vec::as_slice), &mut y);
            trace.conv.push(y);
        }
        let trunk = trace.conv.last().map_or(image, Vec::as_slice);
        let mut input = Vec::with_capacity(trunk.len() + extra.len());
        input.extend_from_slice(trunk);
        input.extend_from_slice(extra);
        trace.dense.push(input);
        for layer in &self.dense {
            let mut y = Vec::new();
            layer.forward(trace.dense.last().expect("input pushed"), &mut y);
            trace.dense.push(y);
        }
        Ok(trace)
    }

    pub fn forward(&self, image: &[f64], extra: &[f64]) -> Result<Vec<f64>, LearnError> {
        Ok(self.forward_trace(image, extra)?.dense.pop().unwrap_or_default())
    }

    /// Adds d(output . grad_output)/d(params) into `grads` and returns the
    /// gradient with respect to the extra inputs.
    pub fn backward(&self, image: &[f64], trace: &Trace, grad_output: &[f64], grads: &mut Grads) -> Vec<f64> {
        let nconv = self.conv.len();
        let mut g = grad_output.to_vec();
        for (i, layer) in self.dense.iter().enumerate().rev() {
            let mut gx = vec![0.0; layer.inputs];
            let (gw, gb) = split_pair(grads, 2 * (nconv + i));
            layer.backward(&trace.dense[i], &trace.dense[i + 1], &g, gw, gb, &mut gx);
            g = gx;
        }
        let extra_grad = g.split_off(g.len() - self.extra_inputs);
        for (i, layer) in self.conv.iter().enumerate().rev() {
            let x = if i == 0 { image } else { &trace.conv[i - 1] };
            let (gw, gb) = split_pair(grads, 2 * i);
            if i == 0 {
                layer.backward(x, &trace.conv[i], &g, gw, gb, None);
            } else {
                let mut gx = vec![0.0; layer.input_len()];
                layer.backward(x, &trace.conv[i], &g, gw, gb, Some(&mut gx));
                g = gx;
            }
        }
        extra_grad
    }
}

fn split_pair(grads: &mut Grads, at: usize) -> (&mut [f64], &mut [f64]) {
    let (w, rest) = grads[at..].split_at_mut(1);
    (&mut w[0], &mut rest[0])
}

/// Adam optimizer state for one network.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub t: u64,
    m: Grads,
    v: Grads,
}

impl Adam {
    pub fn new(net: &Network) -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            t: 0,
            m: net.zero_grads(),
            v: net.zero_grads(),
        }
    }

    /// Descends along `grads` with step size `lr`.
    pub fn step(&mut self, net: &mut Network, grads: &Grads, lr: f64) {
        if lr == 0.0 {
            return;
        }
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        for (((p, g), m), v) in net
            .tensors_mut()
            .into_iter()
            .zip(grads)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            for i in 0..p.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                p[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + self.epsilon);
            }
        }
    }
}

/// `target <- tau * online + (1 - tau) * target`, elementwise.
pub fn soft_update(target: &mut Network, online: &Network, tau: f64) -> Result<(), LearnError> {
    let src = online.tensors();
    let shapes_match = {
        let dst = target.tensors();
        dst.len() == src.len() && dst.iter().zip(&src).all(|(a, b)| a.1 == b.1)
    };
    if !shapes_match || target.extra_inputs != online.extra_inputs {
        return Err(LearnError::Domain("soft update between different architectures".into()));
    }
    for (t, (_, _, o)) in target.tensors_mut().into_iter().zip(src) {
        for (ti, oi) in t.iter_mut().zip(o) {
            *ti = tau * oi + (1.0 - tau) * *ti;
        }
    }
    Ok(())
}
