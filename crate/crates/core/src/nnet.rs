//! Small fully-connected networks with hand-written reverse mode.
//!
//! Hidden layers always use `tanh`; the output layer uses one of
//! [`Activation::Sigmoid`], [`Activation::Softmax`] or
//! [`Activation::Identity`]. Weights are stored per layer in row-major
//! `out x in` order. Parameters are addressed in a flat order (layer by
//! layer, weights before biases) for finite-difference checks and
//! serialization.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{FexError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Sigmoid,
    Softmax,
    Identity,
}

impl Activation {
    pub fn as_str(&self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Sigmoid => "sigmoid",
            Activation::Softmax => "softmax",
            Activation::Identity => "identity",
        }
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = z.iter().map(|&v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpNetwork {
    layer_sizes: Vec<usize>,
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
    output_activation: Activation,
}

/// Post-activation values of every layer, input first.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub activations: Vec<Vec<f64>>,
}

impl ForwardTrace {
    pub fn output(&self) -> &[f64] {
        self.activations.last().expect("trace has an input layer")
    }
}

fn validate_sizes(layer_sizes: &[usize], output_activation: Activation) -> Result<()> {
    if layer_sizes.len() < 2 {
        return Err(FexError::InvalidArgument(
            "a network needs at least an input and an output layer".into(),
        ));
    }
    if let Some(pos) = layer_sizes.iter().position(|&s| s == 0) {
        return Err(FexError::InvalidArgument(format!(
            "layer {pos} has zero units"
        )));
    }
    if output_activation == Activation::Tanh {
        return Err(FexError::InvalidArgument(
            "tanh is reserved for hidden layers".into(),
        ));
    }
    Ok(())
}

impl MlpNetwork {
    /// Xavier-uniform weights, zero biases.
    pub fn xavier<R: Rng + ?Sized>(
        layer_sizes: &[usize],
        output_activation: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        let mut net = Self::zeros(layer_sizes, output_activation)?;
        for (l, w) in net.weights.iter_mut().enumerate() {
            let (fan_in, fan_out) = (layer_sizes[l], layer_sizes[l + 1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for v in w.iter_mut() {
                *v = rng.gen_range(-limit..limit);
            }
        }
        Ok(net)
    }

    pub fn zeros(layer_sizes: &[usize], output_activation: Activation) -> Result<Self> {
        validate_sizes(layer_sizes, output_activation)?;
        let weights = layer_sizes
            .windows(2)
            .map(|w| vec![0.0; w[0] * w[1]])
            .collect();
        let biases = layer_sizes[1..].iter().map(|&n| vec![0.0; n]).collect();
        Ok(MlpNetwork {
            layer_sizes: layer_sizes.to_vec(),
            weights,
            biases,
            output_activation,
        })
    }

    pub fn from_parts(
        layer_sizes: Vec<usize>,
        weights: Vec<Vec<f64>>,
        biases: Vec<Vec<f64>>,
        output_activation: Activation,
    ) -> Result<Self> {
        validate_sizes(&layer_sizes, output_activation)?;
        let n_layers = layer_sizes.len() - 1;
        if weights.len() != n_layers {
            return Err(FexError::dim("weight layers", n_layers, weights.len()));
        }
        if biases.len() != n_layers {
            return Err(FexError::dim("bias layers", n_layers, biases.len()));
        }
        for l in 0..n_layers {
            let (fan_in, fan_out) = (layer_sizes[l], layer_sizes[l + 1]);
            if weights[l].len() != fan_in * fan_out {
                return Err(FexError::dim("weight matrix", fan_in * fan_out, weights[l].len()));
            }
            if biases[l].len() != fan_out {
                return Err(FexError::dim("bias vector", fan_out, biases[l].len()));
            }
        }
        Ok(MlpNetwork {
            layer_sizes,
            weights,
            biases,
            output_activation,
        })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn input_size(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_size(&self) -> usize {
        *self.layer_sizes.last().expect("validated")
    }

    pub fn output_activation(&self) -> Activation {
        self.output_activation
    }

    pub fn weights(&self) -> &[Vec<f64>] {
        &self.weights
    }

    pub fn biases(&self) -> &[Vec<f64>] {
        &self.biases
    }

    pub fn weights_mut(&mut self) -> &mut [Vec<f64>] {
        &mut self.weights
    }

    pub fn biases_mut(&mut self) -> &mut [Vec<f64>] {
        &mut self.biases
    }

    pub fn num_params(&self) -> usize {
        self.weights.iter().map(Vec::len).sum::<usize>()
            + self.biases.iter().map(Vec::len).sum::<usize>()
    }

    fn locate(&self, mut index: usize) -> (usize, bool, usize) {
        for l in 0..self.weights.len() {
            if index < self.weights[l].len() {
                return (l, true, index);
            }
            index -= self.weights[l].len();
            if index < self.biases[l].len() {
                return (l, false, index);
            }
            index -= self.biases[l].len();
        }
        panic!("parameter index out of range");
    }

    pub fn param(&self, index: usize) -> f64 {
        match self.locate(index) {
            (l, true, i) => self.weights[l][i],
            (l, false, i) => self.biases[l][i],
        }
    }

    pub fn set_param(&mut self, index: usize, value: f64) {
        match self.locate(index) {
            (l, true, i) => self.weights[l][i] = value,
            (l, false, i) => self.biases[l][i] = value,
        }
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut trace = self.forward_trace(x)?;
        Ok(trace.activations.pop().expect("output layer"))
    }

    pub fn forward_trace(&self, x: &[f64]) -> Result<ForwardTrace> {
        if x.len() != self.input_size() {
            return Err(FexError::dim("network input", self.input_size(), x.len()));
        }
        let n_layers = self.weights.len();
        let mut activations = Vec::with_capacity(n_layers + 1);
        activations.push(x.to_vec());
        for l in 0..n_layers {
            let (fan_in, fan_out) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
            let input = &activations[l];
            let w = &self.weights[l];
            let mut z: Vec<f64> = (0..fan_out)
                .map(|o| {
                    let row = &w[o * fan_in..(o + 1) * fan_in];
                    self.biases[l][o] + row.iter().zip(input).map(|(a, b)| a * b).sum::<f64>()
                })
                .collect();
            if l + 1 < n_layers {
                z.iter_mut().for_each(|v| *v = v.tanh());
            } else {
                match self.output_activation {
                    Activation::Sigmoid => z.iter_mut().for_each(|v| *v = sigmoid(*v)),
                    Activation::Softmax => z = softmax(&z),
                    Activation::Identity => {}
                    Activation::Tanh => unreachable!("rejected at construction"),
                }
            }
            activations.push(z);
        }
        Ok(ForwardTrace { activations })
    }

    /// Gradient of `upstream · output(x)` with respect to every parameter.
    pub fn backward(&self, x: &[f64], upstream: &[f64]) -> Result<GradientBundle> {
        let trace = self.forward_trace(x)?;
        self.backward_trace(&trace, upstream)
    }

    /// As [`MlpNetwork::backward`], reusing a trace from `forward_trace`.
    pub fn backward_trace(&self, trace: &ForwardTrace, upstream: &[f64]) -> Result<GradientBundle> {
        if upstream.len() != self.output_size() {
            return Err(FexError::dim("upstream gradient", self.output_size(), upstream.len()));
        }
        let y = trace.output();
        let delta: Vec<f64> = match self.output_activation {
            Activation::Identity => upstream.to_vec(),
            Activation::Sigmoid => upstream
                .iter()
                .zip(y)
                .map(|(u, &s)| u * s * (1.0 - s))
                .collect(),
            Activation::Softmax => {
                let dot: f64 = upstream.iter().zip(y).map(|(u, p)| u * p).sum();
                upstream.iter().zip(y).map(|(u, &p)| p * (u - dot)).collect()
            }
            Activation::Tanh => unreachable!("rejected at construction"),
        };
        Ok(self.backprop(trace, delta))
    }

    /// Gradient given `d loss / d z` at the output pre-activation.
    pub fn backward_preactivation(&self, x: &[f64], d_logits: &[f64]) -> Result<GradientBundle> {
        let trace = self.forward_trace(x)?;
        if d_logits.len() != self.output_size() {
            return Err(FexError::dim("logit gradient", self.output_size(), d_logits.len()));
        }
        Ok(self.backprop(&trace, d_logits.to_vec()))
    }

    fn backprop(&self, trace: &ForwardTrace, mut delta: Vec<f64>) -> GradientBundle {
        let mut grads = GradientBundle::zeros_like(self);
        for l in (0..self.weights.len()).rev() {
            let fan_in = self.layer_sizes[l];
            let input = &trace.activations[l];
            let gw = &mut grads.weights[l];
            for (o, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                let row = &mut gw[o * fan_in..(o + 1) * fan_in];
                for (g, &a) in row.iter_mut().zip(input) {
                    *g += d * a;
                }
            }
            grads.biases[l].copy_from_slice(&delta);
            if l == 0 {
                break;
            }
            let w = &self.weights[l];
            let mut prev = vec![0.0; fan_in];
            for (o, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                for (p, &wv) in prev.iter_mut().zip(&w[o * fan_in..(o + 1) * fan_in]) {
                    *p += d * wv;
                }
            }
            // tanh'(z) = 1 - a^2
            for (p, &a) in prev.iter_mut().zip(input) {
                *p *= 1.0 - a * a;
            }
            delta = prev;
        }
        grads
    }
}

/// Per-parameter arrays with the same shapes as the owning network.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientBundle {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl GradientBundle {
    pub fn zeros_like(net: &MlpNetwork) -> Self {
        GradientBundle {
            weights: net.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            biases: net.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }

    pub fn matches(&self, net: &MlpNetwork) -> bool {
        self.weights.len() == net.weights.len()
            && self.biases.len() == net.biases.len()
            && self.weights.iter().zip(&net.weights).all(|(a, b)| a.len() == b.len())
            && self.biases.iter().zip(&net.biases).all(|(a, b)| a.len() == b.len())
    }

    fn same_shape(&self, other: &GradientBundle) -> bool {
        self.weights.len() == other.weights.len()
            && self.biases.len() == other.biases.len()
            && self.weights.iter().zip(&other.weights).all(|(a, b)| a.len() == b.len())
            && self.biases.iter().zip(&other.biases).all(|(a, b)| a.len() == b.len())
    }

    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(w, b)| w.iter().chain(b.iter()))
            .copied()
    }

    fn iter_mut(&mut self) -> impl Iterator<Item = &mut f64> + '_ {
        self.weights
            .iter_mut()
            .zip(self.biases.iter_mut())
            .flat_map(|(w, b)| w.iter_mut().chain(b.iter_mut()))
    }

    /// `self += scale * other`
    pub fn add_scaled(&mut self, other: &GradientBundle, scale: f64) {
        assert!(self.same_shape(other), "gradient shapes differ");
        for (a, b) in self.iter_mut().zip(other.iter()) {
            *a += scale * b;
        }
    }

    pub fn scale(&mut self, factor: f64) {
        self.iter_mut().for_each(|v| *v *= factor);
    }

    pub fn max_abs(&self) -> f64 {
        self.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.iter().all(f64::is_finite)
    }

    pub fn max_abs_diff(&self, other: &GradientBundle) -> f64 {
        assert!(self.same_shape(other), "gradient shapes differ");
        self.iter()
            .zip(other.iter())
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }
}

/// First and second moment estimates for [`adam_step`].
#[derive(Debug, Clone)]
pub struct AdamState {
    m: GradientBundle,
    v: GradientBundle,
    t: u64,
}

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

impl AdamState {
    pub fn new(net: &MlpNetwork) -> Self {
        AdamState {
            m: GradientBundle::zeros_like(net),
            v: GradientBundle::zeros_like(net),
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }
}

/// One Adam update of `net` against `grads` (a descent direction is taken).
pub fn adam_step(
    net: &mut MlpNetwork,
    grads: &GradientBundle,
    state: &mut AdamState,
    lr: f64,
) -> Result<()> {
    if !grads.matches(net) || !state.m.matches(net) {
        return Err(FexError::InvalidArgument(
            "gradient or optimizer state shape does not match the network".into(),
        ));
    }
    state.t += 1;
    let bc1 = 1.0 - ADAM_BETA1.powi(state.t as i32);
    let bc2 = 1.0 - ADAM_BETA2.powi(state.t as i32);
    let n_layers = net.weights.len();
    for l in 0..n_layers {
        let params = net.weights[l].iter_mut().chain(net.biases[l].iter_mut());
        let g = grads.weights[l].iter().chain(grads.biases[l].iter());
        let m = state.m.weights[l].iter_mut().chain(state.m.biases[l].iter_mut());
        let v = state.v.weights[l].iter_mut().chain(state.v.biases[l].iter_mut());
        for (((p, &g), m), v) in params.zip(g).zip(m).zip(v) {
            *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
            *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
        }
    }
    Ok(())
}

/// Step used by the central-difference checks.
pub const FD_STEP: f64 = 1e-5;

/// Largest relative gap between `analytic` and central differences of
/// `loss` around `net`, over every parameter. The relative error of one
/// parameter is `|analytic - numeric| / max(1e-12, |numeric|)`.
pub fn gradient_check<F>(net: &MlpNetwork, analytic: &GradientBundle, loss: F, step: f64) -> f64
where
    F: Fn(&MlpNetwork) -> f64,
{
    assert!(analytic.matches(net), "gradient shape does not match network");
    let mut probe = net.clone();
    let mut worst: f64 = 0.0;
    for (i, a) in analytic.iter().enumerate() {
        let orig = probe.param(i);
        probe.set_param(i, orig + step);
        let up = loss(&probe);
        probe.set_param(i, orig - step);
        let down = loss(&probe);
        probe.set_param(i, orig);
        let numeric = (up - down) / (2.0 * step);
        worst = worst.max((a - numeric).abs() / numeric.abs().max(1e-12));
    }
    worst
}

/// Finite-difference check of [`MlpNetwork::backward`] for a scalar probe
/// of the network output. `probe` returns the loss and its gradient with
/// respect to the output.
pub fn finite_diff_check<P>(net: &MlpNetwork, x: &[f64], probe: P) -> Result<f64>
where
    P: Fn(&[f64]) -> (f64, Vec<f64>),
{
    let out = net.forward(x)?;
    let (_, upstream) = probe(&out);
    let analytic = net.backward(x, &upstream)?;
    Ok(gradient_check(
        net,
        &analytic,
        |n| probe(&n.forward(x).expect("validated input")).0,
        FD_STEP,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn quadratic(out: &[f64]) -> (f64, Vec<f64>) {
        let target: Vec<f64> = (0..out.len()).map(|i| 0.1 * i as f64 - 0.2).collect();
        let loss = out.iter().zip(&target).map(|(o, t)| (o - t).powi(2)).sum();
        let grad = out.iter().zip(&target).map(|(o, t)| 2.0 * (o - t)).collect();
        (loss, grad)
    }

    #[test]
    fn identity_network_passes_input_through() {
        let net = MlpNetwork::from_parts(
            vec![2, 2],
            vec![vec![1.0, 0.0, 0.0, 1.0]],
            vec![vec![0.0, 0.0]],
            Activation::Identity,
        )
        .unwrap();
        assert_eq!(net.forward(&[1.0, 2.0]).unwrap(), vec![1.0, 2.0]);
    }

    #[test]
    fn zero_sigmoid_layer_outputs_half() {
        let net = MlpNetwork::zeros(&[3, 4], Activation::Sigmoid).unwrap();
        for x in [[0.0, 0.0, 0.0], [5.0, -3.0, 1e3]] {
            assert_eq!(net.forward(&x).unwrap(), vec![0.5; 4]);
        }
    }

    #[test]
    fn forward_is_deterministic() {
        let net = MlpNetwork::xavier(&[4, 8, 3], Activation::Softmax, &mut ChaCha8Rng::seed_from_u64(7))
            .unwrap();
        let x = [0.3, -0.1, 0.9, 0.4];
        let a = net.forward(&x).unwrap();
        let b = net.forward(&x).unwrap();
        assert_eq!(a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                   b.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn forward_rejects_wrong_width() {
        let net = MlpNetwork::zeros(&[3, 2], Activation::Identity).unwrap();
        assert_eq!(net.forward(&[1.0]).unwrap_err().category(), "dimension");
        assert_eq!(net.backward(&[1.0, 2.0, 3.0], &[1.0]).unwrap_err().category(), "dimension");
    }

    #[test]
    fn linear_layer_gradient() {
        let net = MlpNetwork::from_parts(vec![1, 1], vec![vec![1.0]], vec![vec![0.0]], Activation::Identity)
            .unwrap();
        let g = net.backward(&[2.0], &[3.0]).unwrap();
        assert_eq!(g.weights, vec![vec![6.0]]);
        assert_eq!(g.biases, vec![vec![3.0]]);
    }

    #[test]
    fn zero_upstream_gives_zero_gradient() {
        let net = MlpNetwork::xavier(&[3, 5, 2], Activation::Sigmoid, &mut ChaCha8Rng::seed_from_u64(1))
            .unwrap();
        let g = net.backward(&[0.1, 0.2, 0.3], &[0.0, 0.0]).unwrap();
        assert_eq!(g.max_abs(), 0.0);
    }

    #[test]
    fn zero_hidden_units_rejected() {
        let err = MlpNetwork::zeros(&[3, 0, 2], Activation::Identity).unwrap_err();
        assert_eq!(err.category(), "invalid-argument");
        assert!(MlpNetwork::zeros(&[3], Activation::Identity).is_err());
    }

    #[test]
    fn identity_net_gradient_check() {
        let net = MlpNetwork::from_parts(
            vec![2, 2],
            vec![vec![1.0, 0.0, 0.0, 1.0]],
            vec![vec![0.0, 0.0]],
            Activation::Identity,
        )
        .unwrap();
        let err = finite_diff_check(&net, &[0.5, -1.5], quadratic).unwrap();
        assert!(err <= 1e-6, "{err}");
    }

    #[test]
    fn random_networks_gradient_check() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for trial in 0..20 {
            let act = [Activation::Sigmoid, Activation::Softmax, Activation::Identity][trial % 3];
            let sizes = [1 + trial % 5, 3 + trial % 4, 2 + trial % 3];
            let net = MlpNetwork::xavier(&sizes, act, &mut rng).unwrap();
            let x: Vec<f64> = (0..sizes[0]).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let err = finite_diff_check(&net, &x, quadratic).unwrap();
            assert!(err <= 1e-4, "trial {trial}: {err}");
        }
    }

    #[test]
    fn deep_network_gradient_check() {
        let net = MlpNetwork::xavier(&[4, 6, 5, 3], Activation::Softmax, &mut ChaCha8Rng::seed_from_u64(9))
            .unwrap();
        let err = finite_diff_check(&net, &[0.2, 0.4, -0.6, 0.8], quadratic).unwrap();
        assert!(err <= 1e-4, "{err}");
    }

    #[test]
    fn preactivation_backward_matches_softmax_cross_entropy() {
        let net = MlpNetwork::xavier(&[3, 4, 3], Activation::Softmax, &mut ChaCha8Rng::seed_from_u64(3))
            .unwrap();
        let x = [0.5, 0.1, -0.4];
        let p = net.forward(&x).unwrap();
        let label = 2;
        let d_logits: Vec<f64> = p.iter().enumerate()
            .map(|(k, &pk)| pk - if k == label { 1.0 } else { 0.0 })
            .collect();
        let via_logits = net.backward_preactivation(&x, &d_logits).unwrap();
        let upstream: Vec<f64> = p.iter().enumerate()
            .map(|(k, &pk)| if k == label { -1.0 / pk } else { 0.0 })
            .collect();
        let via_output = net.backward(&x, &upstream).unwrap();
        assert!(via_logits.max_abs_diff(&via_output) < 1e-12);
    }

    #[test]
    fn adam_zero_gradient_leaves_parameters() {
        let mut net = MlpNetwork::xavier(&[2, 3, 1], Activation::Identity, &mut ChaCha8Rng::seed_from_u64(4))
            .unwrap();
        let before = net.clone();
        let mut state = AdamState::new(&net);
        let zero = GradientBundle::zeros_like(&net);
        adam_step(&mut net, &zero, &mut state, 0.01).unwrap();
        assert_eq!(net, before);
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut net = MlpNetwork::xavier(&[2, 3, 1], Activation::Identity, &mut ChaCha8Rng::seed_from_u64(5))
            .unwrap();
        let before = net.clone();
        let mut grads = GradientBundle::zeros_like(&net);
        for (l, w) in grads.weights.iter_mut().enumerate() {
            for (i, v) in w.iter_mut().enumerate() {
                *v = if (i + l) % 2 == 0 { 0.3 + i as f64 } else { -2.0e-3 };
            }
        }
        let mut state = AdamState::new(&net);
        let lr = 0.01;
        adam_step(&mut net, &grads, &mut state, lr).unwrap();
        for i in 0..net.num_params() {
            let g: f64 = grads.iter().nth(i).unwrap();
            let delta = net.param(i) - before.param(i);
            if g == 0.0 {
                assert_eq!(delta, 0.0);
            } else {
                assert!((delta + lr * g.signum()).abs() < 1e-6 * lr.max(1.0), "{i}: {delta}");
            }
        }
    }

    #[test]
    fn adam_minimizes_scalar_quadratic() {
        // f(w) = w^2 on a single identity bias
        let mut net = MlpNetwork::from_parts(vec![1, 1], vec![vec![0.0]], vec![vec![1.0]], Activation::Identity)
            .unwrap();
        let mut state = AdamState::new(&net);
        let mut reached = None;
        for step in 0..200 {
            let w = net.biases()[0][0];
            if w.abs() < 0.1 {
                reached = Some(step);
                break;
            }
            let mut g = GradientBundle::zeros_like(&net);
            g.biases[0][0] = 2.0 * w;
            adam_step(&mut net, &g, &mut state, 0.05).unwrap();
        }
        assert!(reached.is_some(), "w = {}", net.biases()[0][0]);
    }

    #[test]
    fn adam_rejects_shape_mismatch() {
        let mut net = MlpNetwork::zeros(&[2, 1], Activation::Identity).unwrap();
        let other = MlpNetwork::zeros(&[3, 1], Activation::Identity).unwrap();
        let mut state = AdamState::new(&net);
        let g = GradientBundle::zeros_like(&other);
        assert!(adam_step(&mut net, &g, &mut state, 0.1).is_err());
    }

    #[test]
    fn flat_parameter_order() {
        let mut net = MlpNetwork::zeros(&[2, 2, 1], Activation::Identity).unwrap();
        assert_eq!(net.num_params(), 4 + 2 + 2 + 1);
        net.set_param(4, 7.0);
        assert_eq!(net.biases()[0][0], 7.0);
        net.set_param(6, 3.0);
        assert_eq!(net.weights()[1][0], 3.0);
    }
}
