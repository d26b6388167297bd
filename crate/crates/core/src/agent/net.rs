//! Fully-connected value network with hand-rolled backprop.
//!
//! Small enough (tens of thousands of parameters) that plain nested loops
//! beat any framework here, and explicit gradients make the finite-difference
//! check meaningful.

use serde::{Deserialize, Serialize};

use crate::rng::StreamRng;

/// Dense ReLU network: linear layers with ReLU between them and a linear
/// output layer. Weights are row-major `[out][in]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QNet {
    pub dims: Vec<usize>,
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

/// Per-parameter gradients, same shapes as the network.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros_like(net: &QNet) -> Self {
        Self {
            weights: net.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            biases: net.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }

    pub fn reset(&mut self) {
        for layer in self.weights.iter_mut().chain(self.biases.iter_mut()) {
            layer.fill(0.0);
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for layer in self.weights.iter_mut().chain(self.biases.iter_mut()) {
            for g in layer.iter_mut() {
                *g *= factor;
            }
        }
    }
}

/// Four-accumulator dot product; the split chains let the optimizer keep the
/// multiply-adds pipelined.
#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let (mut s0, mut s1, mut s2, mut s3) = (0.0_f64, 0.0_f64, 0.0_f64, 0.0_f64);
    let mut ca = a.chunks_exact(4);
    let mut cb = b.chunks_exact(4);
    for (pa, pb) in ca.by_ref().zip(cb.by_ref()) {
        s0 += pa[0] * pb[0];
        s1 += pa[1] * pb[1];
        s2 += pa[2] * pb[2];
        s3 += pa[3] * pb[3];
    }
    let mut tail = 0.0;
    for (x, y) in ca.remainder().iter().zip(cb.remainder()) {
        tail += x * y;
    }
    (s0 + s1) + (s2 + s3) + tail
}

/// Layer inputs cached during a forward pass, for backprop.
pub struct ForwardTrace {
    /// Activations entering each layer; `inputs[0]` is the network input and
    /// `inputs.last()` the output.
    pub inputs: Vec<Vec<f64>>,
}

impl ForwardTrace {
    pub fn output(&self) -> &[f64] {
        self.inputs.last().expect("trace has output")
    }
}

impl QNet {
    /// He-initialized network for the given layer sizes.
    pub fn new(dims: &[usize], rng: &mut StreamRng) -> Self {
        assert!(dims.len() >= 2, "need at least input and output dims");
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for pair in dims.windows(2) {
            let (n_in, n_out) = (pair[0], pair[1]);
            let std = (2.0 / n_in as f64).sqrt();
            weights.push(
                (0..n_in * n_out)
                    .map(|_| rng.standard_normal() * std)
                    .collect(),
            );
            biases.push(vec![0.0; n_out]);
        }
        Self {
            dims: dims.to_vec(),
            weights,
            biases,
        }
    }

    pub fn layer_count(&self) -> usize {
        self.weights.len()
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.dims.last().unwrap()
    }

    /// Plain forward pass.
    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.input_dim());
        let mut cur = x.to_vec();
        for layer in 0..self.layer_count() {
            cur = self.layer_forward(layer, &cur);
        }
        cur
    }

    /// Forward pass that keeps every layer input for backprop.
    pub fn forward_trace(&self, x: &[f64]) -> ForwardTrace {
        let mut inputs = Vec::with_capacity(self.layer_count() + 1);
        inputs.push(x.to_vec());
        for layer in 0..self.layer_count() {
            let next = self.layer_forward(layer, inputs.last().unwrap());
            inputs.push(next);
        }
        ForwardTrace { inputs }
    }

    fn layer_forward(&self, layer: usize, input: &[f64]) -> Vec<f64> {
        let n_in = self.dims[layer];
        let n_out = self.dims[layer + 1];
        let w = &self.weights[layer];
        let b = &self.biases[layer];
        let activate = layer + 1 < self.layer_count(); // ReLU on hidden layers only
        let mut out = Vec::with_capacity(n_out);
        for o in 0..n_out {
            let row = &w[o * n_in..(o + 1) * n_in];
            let acc = b[o] + dot(row, input);
            out.push(if activate { acc.max(0.0) } else { acc });
        }
        out
    }

    /// Accumulate parameter gradients for one sample given the gradient of
    /// the loss with respect to the network output.
    pub fn backward_into(&self, trace: &ForwardTrace, dl_dout: &[f64], grads: &mut Gradients) {
        let mut delta = dl_dout.to_vec();
        for layer in (0..self.layer_count()).rev() {
            let n_in = self.dims[layer];
            let n_out = self.dims[layer + 1];
            let input = &trace.inputs[layer];
            let output = &trace.inputs[layer + 1];
            let hidden = layer + 1 < self.layer_count();

            // ReLU gate: the stored output is already post-activation.
            if hidden {
                for (d, &o) in delta.iter_mut().zip(output) {
                    if o <= 0.0 {
                        *d = 0.0;
                    }
                }
            }

            let gw = &mut grads.weights[layer];
            let gb = &mut grads.biases[layer];
            let w = &self.weights[layer];
            let mut next_delta = vec![0.0; n_in];
            for o in 0..n_out {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                gb[o] += d;
                let row = &w[o * n_in..(o + 1) * n_in];
                let grow = &mut gw[o * n_in..(o + 1) * n_in];
                for i in 0..n_in {
                    grow[i] += d * input[i];
                }
                for i in 0..n_in {
                    next_delta[i] += d * row[i];
                }
            }
            delta = next_delta;
        }
    }

    /// Greedy action: argmax over outputs, lowest index on ties.
    pub fn argmax_action(&self, features: &[f64]) -> usize {
        let q = self.forward(features);
        let mut best = 0;
        for (i, &v) in q.iter().enumerate() {
            if v > q[best] {
                best = i;
            }
        }
        best
    }

    pub fn param_count(&self) -> usize {
        self.weights.iter().map(Vec::len).sum::<usize>()
            + self.biases.iter().map(Vec::len).sum::<usize>()
    }
}

/// Adam optimizer state matched to one network's shapes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m_w: Vec<Vec<f64>>,
    v_w: Vec<Vec<f64>>,
    m_b: Vec<Vec<f64>>,
    v_b: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(net: &QNet, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m_w: net.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            v_w: net.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            m_b: net.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
            v_b: net.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }

    pub fn step(&mut self, net: &mut QNet, grads: &Gradients) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for layer in 0..net.weights.len() {
            Self::update_slice(
                &mut net.weights[layer],
                &grads.weights[layer],
                &mut self.m_w[layer],
                &mut self.v_w[layer],
                self.lr,
                self.beta1,
                self.beta2,
                self.eps,
                bc1,
                bc2,
            );
            Self::update_slice(
                &mut net.biases[layer],
                &grads.biases[layer],
                &mut self.m_b[layer],
                &mut self.v_b[layer],
                self.lr,
                self.beta1,
                self.beta2,
                self.eps,
                bc1,
                bc2,
            );
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn update_slice(
        params: &mut [f64],
        grads: &[f64],
        m: &mut [f64],
        v: &mut [f64],
        lr: f64,
        beta1: f64,
        beta2: f64,
        eps: f64,
        bc1: f64,
        bc2: f64,
    ) {
        for i in 0..params.len() {
            let g = grads[i];
            m[i] = beta1 * m[i] + (1.0 - beta1) * g;
            v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{StreamRng, STREAM_AGENT};

    fn small_net(seed: u64) -> QNet {
        let mut rng = StreamRng::new(seed, STREAM_AGENT);
        QNet::new(&[4, 8, 3], &mut rng)
    }

    #[test]
    fn forward_matches_trace_output() {
        let net = small_net(1);
        let x = [0.3, -0.2, 0.5, 0.9];
        let direct = net.forward(&x);
        let trace = net.forward_trace(&x);
        assert_eq!(direct, trace.output());
    }

    #[test]
    fn argmax_breaks_ties_toward_lowest_index() {
        let mut net = small_net(1);
        for w in net.weights.iter_mut() {
            w.iter_mut().for_each(|v| *v = 0.0);
        }
        for b in net.biases.iter_mut() {
            b.iter_mut().for_each(|v| *v = 0.0);
        }
        assert_eq!(net.argmax_action(&[1.0, 1.0, 1.0, 1.0]), 0);
        // Bias the third output and it must win.
        let last = net.biases.len() - 1;
        net.biases[last][2] = 5.0;
        net.biases[last][0] = 1.0;
        net.biases[last][1] = 2.0;
        assert_eq!(net.argmax_action(&[0.0; 4]), 2);
    }

    /// Central finite differences on a squared-error loss, for one randomly
    /// chosen coordinate per layer.
    #[test]
    fn analytic_gradient_matches_finite_differences() {
        let mut rng = StreamRng::new(11, STREAM_AGENT);
        for _ in 0..20 {
            let mut net = QNet::new(&[4, 8, 8, 3], &mut rng);
            let x: Vec<f64> = (0..4).map(|_| rng.standard_normal()).collect();
            let target: Vec<f64> = (0..3).map(|_| rng.standard_normal()).collect();

            let loss = |n: &QNet| -> f64 {
                n.forward(&x)
                    .iter()
                    .zip(&target)
                    .map(|(o, t)| (o - t) * (o - t))
                    .sum()
            };

            let trace = net.forward_trace(&x);
            let dl: Vec<f64> = trace
                .output()
                .iter()
                .zip(&target)
                .map(|(o, t)| 2.0 * (o - t))
                .collect();
            let mut grads = Gradients::zeros_like(&net);
            net.backward_into(&trace, &dl, &mut grads);

            let h = 1e-6;
            for layer in 0..net.layer_count() {
                let idx = rng.below(net.weights[layer].len());
                let orig = net.weights[layer][idx];
                net.weights[layer][idx] = orig + h;
                let up = loss(&net);
                net.weights[layer][idx] = orig - h;
                let down = loss(&net);
                net.weights[layer][idx] = orig;
                let fd = (up - down) / (2.0 * h);
                let an = grads.weights[layer][idx];
                let rel = (an - fd).abs() / an.abs().max(fd.abs()).max(1e-6);
                assert!(rel < 1e-4, "layer {layer} idx {idx}: {an} vs {fd}");
            }
        }
    }

    #[test]
    fn adam_reduces_regression_loss() {
        let mut rng = StreamRng::new(5, STREAM_AGENT);
        let mut net = QNet::new(&[4, 8, 3], &mut rng);
        let mut adam = Adam::new(&net, 1e-2);
        let x = [0.5, -0.3, 0.8, 0.1];
        let target = [1.0, -1.0, 0.5];
        let loss_of = |n: &QNet| -> f64 {
            n.forward(&x)
                .iter()
                .zip(&target)
                .map(|(o, t)| (o - t) * (o - t))
                .sum()
        };
        let before = loss_of(&net);
        for _ in 0..200 {
            let trace = net.forward_trace(&x);
            let dl: Vec<f64> = trace
                .output()
                .iter()
                .zip(&target)
                .map(|(o, t)| 2.0 * (o - t))
                .collect();
            let mut grads = Gradients::zeros_like(&net);
            net.backward_into(&trace, &dl, &mut grads);
            adam.step(&mut net, &grads);
        }
        let after = loss_of(&net);
        assert!(after < before * 0.01, "{before} -> {after}");
    }
}
