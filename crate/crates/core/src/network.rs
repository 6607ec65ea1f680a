//! Feed-forward network mapping features to mixture parameters.
//!
//! The last dense layer emits `3K` raw values laid out as
//! `[logits_pi; raw_mu; raw_sigma]`. The head turns them into a valid mixture:
//!
//! * `pi = (1 - K pi_min) softmax(logits) + pi_min`
//! * `mu = m_mu tanh(raw_mu / m_mu)`
//! * `sigma = sigma_min + (sigma_max - sigma_min) sigmoid(raw_sigma)`
//!
//! Reverse mode is written out by hand: score derivatives come from
//! [`crate::scoring`], the head Jacobians and dense-layer backprop live here.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mixture::{HeadBounds, MixtureParams};
use crate::rng::seeded_rng;
use crate::scoring::ScoreGradient;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Relu,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.max(0.0),
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `a`.
    #[inline]
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "tanh" => Ok(Activation::Tanh),
            "relu" => Ok(Activation::Relu),
            other => Err(Error::Config(format!("unknown activation `{other}`"))),
        }
    }
}

/// Architecture of the mixture network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input_dim: usize,
    pub hidden_layers: Vec<usize>,
    pub activation: Activation,
    pub k_components: usize,
    pub bounds: HeadBounds,
    pub seed: u64,
}

impl NetworkSpec {
    /// One hidden layer of 50 tanh units, default bounds.
    pub fn new(input_dim: usize, k_components: usize) -> Self {
        Self {
            input_dim,
            hidden_layers: vec![50],
            activation: Activation::Tanh,
            k_components,
            bounds: HeadBounds::default(),
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::Config("input_dim must be >= 1".into()));
        }
        if self.k_components == 0 {
            return Err(Error::Config("k_components must be >= 1".into()));
        }
        if self.hidden_layers.contains(&0) {
            return Err(Error::Config("hidden layer widths must be >= 1".into()));
        }
        self.bounds.validate_for(self.k_components)
    }

    fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden_layers.len() + 1);
        let mut prev = self.input_dim;
        for &w in &self.hidden_layers {
            dims.push((prev, w));
            prev = w;
        }
        dims.push((prev, 3 * self.k_components));
        dims
    }
}

/// Dense layer with a row-major `out_dim x in_dim` weight matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl Dense {
    fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self {
            in_dim,
            out_dim,
            weights: vec![0.0; in_dim * out_dim],
            biases: vec![0.0; out_dim],
        }
    }

    fn apply(&self, input: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for (row, b) in self.weights.chunks_exact(self.in_dim).zip(&self.biases) {
            out.push(b + row.iter().zip(input).map(|(w, x)| w * x).sum::<f64>());
        }
    }
}

/// Network parameters together with the spec they realize.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkWeights {
    pub spec: NetworkSpec,
    pub layers: Vec<Dense>,
}

/// Gradient with the same layout as [`NetworkWeights::layers`].
#[derive(Debug, Clone, PartialEq)]
pub struct WeightGradient {
    pub layers: Vec<Dense>,
}

impl WeightGradient {
    pub fn zeros_like(w: &NetworkWeights) -> Self {
        Self {
            layers: w.layers.iter().map(|l| Dense::zeros(l.in_dim, l.out_dim)).collect(),
        }
    }

    pub fn add_scaled(&mut self, alpha: f64, other: &WeightGradient) {
        for (a, b) in self.values_mut().zip(other.values()) {
            *a += alpha * b;
        }
    }

    pub fn values(&self) -> impl Iterator<Item = &f64> {
        self.layers.iter().flat_map(|l| l.weights.iter().chain(&l.biases))
    }

    fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.iter_mut().chain(l.biases.iter_mut()))
    }
}

/// Intermediate values kept by [`forward`] for one backward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    /// `activations[0]` is the input, `activations[i]` the output of hidden layer `i`.
    activations: Vec<Vec<f64>>,
    pre_activations: Vec<Vec<f64>>,
    /// Raw head outputs, `3K` long.
    raw: Vec<f64>,
    softmax: Vec<f64>,
}

impl ForwardTrace {
    pub fn raw_outputs(&self) -> &[f64] {
        &self.raw
    }
}

/// Fan-in-scaled uniform weights (LeCun for tanh, He for ReLU), zero biases,
/// and `raw_sigma` biases chosen so every component starts at `sigma = 1`
/// (clamped into the bounds). The weight and `raw_sigma` rows of the output
/// layer are scaled down by 10 so the initial mixture starts near equal
/// weights and `sigma = 1`; the mean rows keep the plain fan-in scale.
pub fn init_weights(spec: &NetworkSpec) -> Result<NetworkWeights> {
    spec.validate()?;
    let mut rng = seeded_rng(spec.seed);
    let dims = spec.layer_dims();
    let n_layers = dims.len();
    let mut layers = Vec::with_capacity(n_layers);
    for (i, &(fan_in, fan_out)) in dims.iter().enumerate() {
        let gain = match spec.activation {
            Activation::Tanh => 3.0,
            Activation::Relu => 6.0,
        };
        let limit = (gain / fan_in as f64).sqrt();
        let mut layer = Dense::zeros(fan_in, fan_out);
        for w in layer.weights.iter_mut() {
            *w = rng.random_range(-limit..limit);
        }
        if i + 1 == n_layers {
            let k = spec.k_components;
            for (j, row) in layer.weights.chunks_mut(fan_in).enumerate() {
                if j < k || j >= 2 * k {
                    row.iter_mut().for_each(|w| *w *= 0.1);
                }
            }
        }
        layers.push(layer);
    }
    let k = spec.k_components;
    let b = spec.bounds;
    let target = 1.0f64.clamp(b.sigma_min, b.sigma_max);
    let frac = if b.sigma_max > b.sigma_min {
        ((target - b.sigma_min) / (b.sigma_max - b.sigma_min)).clamp(1e-12, 1.0 - 1e-12)
    } else {
        0.5
    };
    let sigma_bias = (frac / (1.0 - frac)).ln();
    let head = layers.last_mut().expect("at least one layer");
    for bias in &mut head.biases[2 * k..3 * k] {
        *bias = sigma_bias;
    }
    Ok(NetworkWeights {
        spec: spec.clone(),
        layers,
    })
}

/// Maps raw head outputs to a bounded mixture; returns the softmax used.
fn head_transform(raw: &[f64], k: usize, bounds: &HeadBounds) -> Result<(MixtureParams, Vec<f64>)> {
    let logits = &raw[..k];
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    let softmax: Vec<f64> = exps.iter().map(|e| e / total).collect();

    let mix = 1.0 - k as f64 * bounds.pi_min;
    let weights: Vec<f64> = softmax.iter().map(|s| mix * s + bounds.pi_min).collect();
    let means: Vec<f64> = raw[k..2 * k]
        .iter()
        .map(|r| bounds.m_mu * (r / bounds.m_mu).tanh())
        .collect();
    let range = bounds.sigma_max - bounds.sigma_min;
    let stds: Vec<f64> = raw[2 * k..]
        .iter()
        .map(|r| (bounds.sigma_min + range * sigmoid(*r)).min(bounds.sigma_max))
        .collect();
    let params = MixtureParams::with_bounds(weights, means, stds, bounds)?;
    Ok((params, softmax))
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Evaluates the network at `x`.
pub fn forward(weights: &NetworkWeights, x: &[f64]) -> Result<(MixtureParams, ForwardTrace)> {
    let spec = &weights.spec;
    if x.len() != spec.input_dim {
        return Err(Error::Shape(format!(
            "input has {} features, network expects {}",
            x.len(),
            spec.input_dim
        )));
    }
    if let Some(v) = x.iter().find(|v| !v.is_finite()) {
        return Err(Error::Domain(format!("non-finite input feature {v}")));
    }
    let n_layers = weights.layers.len();
    let mut activations = Vec::with_capacity(n_layers);
    let mut pre_activations = Vec::with_capacity(n_layers - 1);
    activations.push(x.to_vec());
    let mut buf = Vec::new();
    for layer in &weights.layers[..n_layers - 1] {
        layer.apply(activations.last().unwrap(), &mut buf);
        let act: Vec<f64> = buf.iter().map(|&z| spec.activation.apply(z)).collect();
        pre_activations.push(std::mem::take(&mut buf));
        activations.push(act);
    }
    let mut raw = Vec::new();
    weights.layers[n_layers - 1].apply(activations.last().unwrap(), &mut raw);
    let (params, softmax) = head_transform(&raw, spec.k_components, &spec.bounds)?;
    Ok((
        params,
        ForwardTrace {
            activations,
            pre_activations,
            raw,
            softmax,
        },
    ))
}

/// Mixture parameters only.
pub fn predict_params(weights: &NetworkWeights, x: &[f64]) -> Result<MixtureParams> {
    forward(weights, x).map(|(p, _)| p)
}

/// Pulls a score gradient back through the head transforms to the raw outputs.
pub fn head_backward(
    trace: &ForwardTrace,
    upstream: &ScoreGradient,
    spec: &NetworkSpec,
) -> Result<Vec<f64>> {
    let k = spec.k_components;
    if upstream.k() != k || upstream.d_means.len() != k || upstream.d_stds.len() != k {
        return Err(Error::Shape(format!(
            "upstream gradient has {} components, network emits {k}",
            upstream.k()
        )));
    }
    let b = &spec.bounds;
    let mix = 1.0 - k as f64 * b.pi_min;
    let s = &trace.softmax;
    let dot: f64 = upstream.d_weights.iter().zip(s).map(|(g, s)| g * s).sum();
    let mut d_raw = vec![0.0; 3 * k];
    for j in 0..k {
        d_raw[j] = mix * s[j] * (upstream.d_weights[j] - dot);

        let t = (trace.raw[k + j] / b.m_mu).tanh();
        d_raw[k + j] = upstream.d_means[j] * (1.0 - t * t);

        let sg = sigmoid(trace.raw[2 * k + j]);
        d_raw[2 * k + j] = upstream.d_stds[j] * (b.sigma_max - b.sigma_min) * sg * (1.0 - sg);
    }
    Ok(d_raw)
}

/// Gradient of the loss with respect to every weight and bias, given the
/// loss gradient with respect to the mixture parameters at this point.
pub fn backward(
    weights: &NetworkWeights,
    trace: ForwardTrace,
    upstream: &ScoreGradient,
) -> Result<WeightGradient> {
    let mut grad = WeightGradient::zeros_like(weights);
    backward_into(weights, &trace, upstream, 1.0, &mut grad)?;
    Ok(grad)
}

/// Accumulates `scale * dLoss/dweights` into `grad`.
pub fn backward_into(
    weights: &NetworkWeights,
    trace: &ForwardTrace,
    upstream: &ScoreGradient,
    scale: f64,
    grad: &mut WeightGradient,
) -> Result<()> {
    let spec = &weights.spec;
    let n_layers = weights.layers.len();
    if trace.activations.len() != n_layers || grad.layers.len() != n_layers {
        return Err(Error::Shape("trace or gradient does not match network depth".into()));
    }
    let mut delta = head_backward(trace, upstream, spec)?;
    delta.iter_mut().for_each(|d| *d *= scale);

    for li in (0..n_layers).rev() {
        let layer = &weights.layers[li];
        let input = &trace.activations[li];
        let g = &mut grad.layers[li];
        for (o, &d) in delta.iter().enumerate() {
            if d == 0.0 {
                continue;
            }
            g.biases[o] += d;
            let row = &mut g.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
            for (gw, x) in row.iter_mut().zip(input) {
                *gw += d * x;
            }
        }
        if li == 0 {
            break;
        }
        let mut prev = vec![0.0; layer.in_dim];
        for (o, &d) in delta.iter().enumerate() {
            if d == 0.0 {
                continue;
            }
            let row = &layer.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
            for (p, w) in prev.iter_mut().zip(row) {
                *p += d * w;
            }
        }
        let z = &trace.pre_activations[li - 1];
        for ((p, &zi), &ai) in prev.iter_mut().zip(z).zip(input) {
            *p *= spec.activation.derivative(zi, ai);
        }
        delta = prev;
    }
    Ok(())
}

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// First and second moment estimates for Adam.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl OptimizerState {
    pub fn new(weights: &NetworkWeights) -> Self {
        let n = weights.n_params();
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }
}

impl NetworkWeights {
    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    pub fn values(&self) -> impl Iterator<Item = &f64> {
        self.layers.iter().flat_map(|l| l.weights.iter().chain(&l.biases))
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.iter_mut().chain(l.biases.iter_mut()))
    }

    pub fn is_finite(&self) -> bool {
        self.values().all(|v| v.is_finite())
    }
}

/// One bias-corrected Adam update, in place.
pub fn adam_step(
    weights: &mut NetworkWeights,
    grads: &WeightGradient,
    state: &mut OptimizerState,
    lr: f64,
) -> Result<()> {
    if state.m.len() != weights.n_params() {
        return Err(Error::Shape("optimizer state does not match network".into()));
    }
    if grads.values().count() != state.m.len() {
        return Err(Error::Shape("gradient does not match network".into()));
    }
    if let Some(g) = grads.values().find(|g| !g.is_finite()) {
        return Err(Error::NonFinite(format!("gradient entry {g}")));
    }
    state.t += 1;
    let bc1 = 1.0 - ADAM_BETA1.powi(state.t as i32);
    let bc2 = 1.0 - ADAM_BETA2.powi(state.t as i32);
    for (((w, g), m), v) in weights
        .values_mut()
        .zip(grads.values())
        .zip(state.m.iter_mut())
        .zip(state.v.iter_mut())
    {
        *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
        *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        *w -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec(seed: u64) -> NetworkSpec {
        NetworkSpec {
            input_dim: 2,
            hidden_layers: vec![4],
            activation: Activation::Tanh,
            k_components: 2,
            bounds: HeadBounds::default(),
            seed,
        }
    }

    #[test]
    fn init_is_deterministic_per_seed() {
        let a = init_weights(&small_spec(1)).unwrap();
        let b = init_weights(&small_spec(1)).unwrap();
        let c = init_weights(&small_spec(2)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn initial_sigmas_are_near_one() {
        let mut spec = NetworkSpec::new(3, 4);
        spec.seed = 17;
        let w = init_weights(&spec).unwrap();
        let mut rng = seeded_rng(5);
        for _ in 0..1000 {
            let x: Vec<f64> = (0..3).map(|_| rng.sample(rand_distr::StandardNormal)).collect();
            let p = predict_params(&w, &x).unwrap();
            assert!(p.stds().iter().all(|s| (0.5..=2.0).contains(s)), "{:?}", p.stds());
        }
    }

    #[test]
    fn zero_network_gives_symmetric_head() {
        let spec = small_spec(0);
        let mut w = init_weights(&spec).unwrap();
        w.values_mut().for_each(|v| *v = 0.0);
        let p = predict_params(&w, &[0.0, 0.0]).unwrap();
        let b = spec.bounds;
        assert!(p.weights().iter().all(|&pi| (pi - 0.5).abs() < 1e-15));
        assert!(p.means().iter().all(|&m| m == 0.0));
        let mid = b.sigma_min + (b.sigma_max - b.sigma_min) / 2.0;
        assert!(p.stds().iter().all(|&s| (s - mid).abs() < 1e-12));
    }

    #[test]
    fn forward_rejects_bad_inputs() {
        let w = init_weights(&small_spec(0)).unwrap();
        assert!(matches!(forward(&w, &[0.0]), Err(Error::Shape(_))));
        assert!(matches!(forward(&w, &[0.0, f64::NAN]), Err(Error::Domain(_))));
    }

    #[test]
    fn zero_upstream_gives_zero_gradient() {
        let w = init_weights(&small_spec(3)).unwrap();
        let (_, trace) = forward(&w, &[0.3, -1.2]).unwrap();
        let g = backward(&w, trace, &ScoreGradient::zeros(2)).unwrap();
        assert!(g.values().all(|&v| v == 0.0));
    }

    #[test]
    fn softmax_path_gradient_sums_to_zero() {
        let w = init_weights(&small_spec(3)).unwrap();
        let (_, trace) = forward(&w, &[0.3, -1.2]).unwrap();
        let mut up = ScoreGradient::zeros(2);
        up.d_weights = vec![0.7, -2.3];
        let d_raw = head_backward(&trace, &up, &w.spec).unwrap();
        assert!((d_raw[0] + d_raw[1]).abs() < 1e-15);
    }

    #[test]
    fn backward_rejects_mismatched_upstream() {
        let w = init_weights(&small_spec(3)).unwrap();
        let (_, trace) = forward(&w, &[0.3, -1.2]).unwrap();
        assert!(matches!(backward(&w, trace, &ScoreGradient::zeros(3)), Err(Error::Shape(_))));
    }

    #[test]
    fn adam_zero_gradient_leaves_weights() {
        let mut w = init_weights(&small_spec(4)).unwrap();
        let before = w.clone();
        let mut st = OptimizerState::new(&w);
        let g = WeightGradient::zeros_like(&w);
        adam_step(&mut w, &g, &mut st, 0.01).unwrap();
        assert_eq!(w, before);
        assert_eq!(st.step_count(), 1);
    }

    #[test]
    fn adam_constant_gradient_moves_by_lr() {
        let mut w = init_weights(&small_spec(4)).unwrap();
        let before = w.clone();
        let mut st = OptimizerState::new(&w);
        let mut g = WeightGradient::zeros_like(&w);
        g.layers[0].weights[0] = 3.0;
        g.layers[0].weights[1] = -0.02;
        let lr = 0.01;
        for _ in 0..50 {
            adam_step(&mut w, &g, &mut st, lr).unwrap();
        }
        let d0 = w.layers[0].weights[0] - before.layers[0].weights[0];
        let d1 = w.layers[0].weights[1] - before.layers[0].weights[1];
        assert!((d0 + 50.0 * lr).abs() < 1e-6);
        assert!((d1 - 50.0 * lr).abs() < 1e-4);
    }

    #[test]
    fn adam_rejects_non_finite_gradients() {
        let mut w = init_weights(&small_spec(4)).unwrap();
        let mut st = OptimizerState::new(&w);
        let mut g = WeightGradient::zeros_like(&w);
        g.layers[1].biases[0] = f64::NAN;
        assert!(matches!(adam_step(&mut w, &g, &mut st, 0.01), Err(Error::NonFinite(_))));
    }

    #[test]
    fn spec_validation() {
        let mut s = small_spec(0);
        s.hidden_layers = vec![3, 0];
        assert!(s.validate().is_err());
        let mut s = small_spec(0);
        s.k_components = 0;
        assert!(s.validate().is_err());
        assert!("ReLU".parse::<Activation>().is_ok());
        assert!("gelu".parse::<Activation>().is_err());
    }
}
