//! Dense multilayer-perceptron scorer with analytic backpropagation.
//!
//! Hidden layers apply the configured activation; the final layer is a single
//! linear unit, so any output nonlinearity belongs to the loss.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::stats::SeededRng;
use crate::{Error, Result};

const CHECKPOINT_MAGIC: &str = "pushrank-mlp 1";

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Activation {
    Sigmoid,
    LeakyRelu { slope: f64 },
}

impl Activation {
    /// Slope used when a leaky ReLU is requested without one.
    pub const DEFAULT_LEAKY_SLOPE: f64 = 0.01;

    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Sigmoid => sigmoid(z),
            Activation::LeakyRelu { slope } => {
                if z > 0.0 {
                    z
                } else {
                    slope * z
                }
            }
        }
    }

    /// Derivative given both the pre-activation and the activation output.
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Sigmoid => a * (1.0 - a),
            Activation::LeakyRelu { slope } => {
                if z > 0.0 {
                    1.0
                } else {
                    slope
                }
            }
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

/// One affine layer: `weights` is (out x in).
#[derive(Clone, Debug, PartialEq)]
pub struct DenseLayer {
    pub weights: Array2<f64>,
    pub biases: Array1<f64>,
}

impl DenseLayer {
    fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self {
            weights: Array2::zeros((fan_out, fan_in)),
            biases: Array1::zeros(fan_out),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScorerParams {
    layer_dims: Vec<usize>,
    activation: Activation,
    layers: Vec<DenseLayer>,
}

/// Gradients of a loss w.r.t. every weight and bias of a [`ScorerParams`].
#[derive(Clone, Debug, PartialEq)]
pub struct ParamGrads {
    pub layers: Vec<DenseLayer>,
}

/// Anything that can score a batch of encoded inputs.
pub trait Scorer {
    fn input_dim(&self) -> usize;
    fn score_batch(&self, inputs: ArrayView2<'_, f64>) -> Result<Array1<f64>>;
}

fn validate_dims(layer_dims: &[usize]) -> Result<()> {
    if layer_dims.len() < 2 {
        return Err(Error::Config(format!(
            "layer_dims needs at least input and output sizes, got {layer_dims:?}"
        )));
    }
    if layer_dims.contains(&0) {
        return Err(Error::Config(format!("layer_dims must be positive, got {layer_dims:?}")));
    }
    if *layer_dims.last().unwrap() != 1 {
        return Err(Error::Config(format!(
            "scorer output must be scalar, got layer_dims {layer_dims:?}"
        )));
    }
    Ok(())
}

fn validate_activation(activation: Activation) -> Result<()> {
    if let Activation::LeakyRelu { slope } = activation {
        if !slope.is_finite() {
            return Err(Error::Config(format!("leaky ReLU slope {slope} is not finite")));
        }
    }
    Ok(())
}

/// Glorot-uniform weights, zero biases.
pub fn init_params(layer_dims: &[usize], activation: Activation, seed: u64) -> Result<ScorerParams> {
    let mut params = ScorerParams::zeros(layer_dims, activation)?;
    let mut rng = SeededRng::new(seed);
    for layer in &mut params.layers {
        let (fan_out, fan_in) = layer.weights.dim();
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let dist = Uniform::new_inclusive(-limit, limit).expect("finite positive limit");
        layer.weights.mapv_inplace(|_| dist.sample(&mut rng));
    }
    Ok(params)
}

/// Forward pass intermediates kept for backpropagation.
struct ForwardCache {
    /// Pre-activations of each hidden layer.
    pre: Vec<Array2<f64>>,
    /// Layer inputs: `inputs[0]` is the batch, `inputs[l]` the output of hidden layer l-1.
    inputs: Vec<Array2<f64>>,
    scores: Array1<f64>,
}

impl ScorerParams {
    pub fn zeros(layer_dims: &[usize], activation: Activation) -> Result<Self> {
        validate_dims(layer_dims)?;
        validate_activation(activation)?;
        let layers = layer_dims
            .windows(2)
            .map(|w| DenseLayer::zeros(w[0], w[1]))
            .collect();
        Ok(Self {
            layer_dims: layer_dims.to_vec(),
            activation,
            layers,
        })
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [DenseLayer] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.biases.len())
            .sum()
    }

    /// Mutable access to parameter `index` in flat order (per layer: weights
    /// row-major, then biases).
    pub fn param_mut(&mut self, index: usize) -> &mut f64 {
        let mut index = index;
        for layer in &mut self.layers {
            let nw = layer.weights.len();
            if index < nw {
                let cols = layer.weights.ncols();
                return &mut layer.weights[(index / cols, index % cols)];
            }
            index -= nw;
            if index < layer.biases.len() {
                return &mut layer.biases[index];
            }
            index -= layer.biases.len();
        }
        panic!("parameter index out of range");
    }

    pub fn zero_grads(&self) -> ParamGrads {
        ParamGrads {
            layers: self
                .layers
                .iter()
                .map(|l| DenseLayer::zeros(l.weights.ncols(), l.weights.nrows()))
                .collect(),
        }
    }

    fn check_batch(&self, inputs: &ArrayView2<'_, f64>) -> Result<()> {
        if inputs.ncols() != self.input_dim() {
            return Err(Error::Shape(format!(
                "scorer expects {} input features, got {}",
                self.input_dim(),
                inputs.ncols()
            )));
        }
        Ok(())
    }

    fn forward_cached(&self, inputs: ArrayView2<'_, f64>) -> ForwardCache {
        let last = self.layers.len() - 1;
        let mut cache_inputs = vec![inputs.to_owned()];
        let mut pre = Vec::with_capacity(last);
        for layer in &self.layers[..last] {
            let z = cache_inputs.last().unwrap().dot(&layer.weights.t()) + &layer.biases;
            let a = z.mapv(|v| self.activation.apply(v));
            pre.push(z);
            cache_inputs.push(a);
        }
        let out = &self.layers[last];
        let scores = cache_inputs.last().unwrap().dot(&out.weights.row(0)) + out.biases[0];
        ForwardCache {
            pre,
            inputs: cache_inputs,
            scores,
        }
    }

    pub fn forward(&self, input: &[f64]) -> Result<f64> {
        let view = ArrayView2::from_shape((1, input.len()), input)
            .map_err(|e| Error::Shape(e.to_string()))?;
        Ok(self.forward_batch(view)?[0])
    }

    pub fn forward_batch(&self, inputs: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
        self.check_batch(&inputs)?;
        Ok(self.forward_cached(inputs).scores)
    }

    pub fn backward(&self, input: &[f64], d_score: f64) -> Result<ParamGrads> {
        let view = ArrayView2::from_shape((1, input.len()), input)
            .map_err(|e| Error::Shape(e.to_string()))?;
        self.backward_batch(view, &[d_score])
    }

    /// Gradient of `sum_b d_scores[b] * score(inputs[b])` w.r.t. all parameters.
    pub fn backward_batch(&self, inputs: ArrayView2<'_, f64>, d_scores: &[f64]) -> Result<ParamGrads> {
        self.check_batch(&inputs)?;
        if d_scores.len() != inputs.nrows() {
            return Err(Error::Shape(format!(
                "{} upstream gradients for a batch of {}",
                d_scores.len(),
                inputs.nrows()
            )));
        }
        let cache = self.forward_cached(inputs);
        Ok(self.backprop(&cache, d_scores))
    }

    /// Forward pass, loss on the scores, then backpropagation in one go.
    ///
    /// `loss` maps the batch scores to `(loss, d_loss/d_scores)`.
    pub fn forward_backward<F>(&self, inputs: ArrayView2<'_, f64>, loss: F) -> Result<(f64, ParamGrads)>
    where
        F: FnOnce(&[f64]) -> Result<(f64, Vec<f64>)>,
    {
        self.check_batch(&inputs)?;
        let cache = self.forward_cached(inputs);
        let (value, d_scores) = loss(cache.scores.as_slice().expect("contiguous scores"))?;
        if d_scores.len() != inputs.nrows() {
            return Err(Error::Shape(format!(
                "{} upstream gradients for a batch of {}",
                d_scores.len(),
                inputs.nrows()
            )));
        }
        Ok((value, self.backprop(&cache, &d_scores)))
    }

    fn backprop(&self, cache: &ForwardCache, d_scores: &[f64]) -> ParamGrads {
        let mut grads = self.zero_grads();
        let mut delta = Array2::from_shape_vec((d_scores.len(), 1), d_scores.to_vec())
            .expect("column vector shape");
        for l in (0..self.layers.len()).rev() {
            let layer_in = &cache.inputs[l];
            grads.layers[l].weights = delta.t().dot(layer_in);
            grads.layers[l].biases = delta.sum_axis(Axis(0));
            if l > 0 {
                let mut upstream = delta.dot(&self.layers[l].weights);
                let z = &cache.pre[l - 1];
                ndarray::Zip::from(&mut upstream)
                    .and(z)
                    .and(layer_in)
                    .for_each(|d, &z, &a| *d *= self.activation.derivative(z, a));
                delta = upstream;
            }
        }
        grads
    }

    pub fn to_checkpoint_string(&self) -> String {
        let mut out = String::new();
        writeln!(out, "{CHECKPOINT_MAGIC}").unwrap();
        let dims: Vec<String> = self.layer_dims.iter().map(usize::to_string).collect();
        writeln!(out, "layer_dims {}", dims.join(" ")).unwrap();
        match self.activation {
            Activation::Sigmoid => writeln!(out, "activation sigmoid").unwrap(),
            Activation::LeakyRelu { slope } => writeln!(out, "activation leaky_relu {slope:?}").unwrap(),
        }
        for layer in &self.layers {
            for row in layer.weights.rows() {
                let vals: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
                writeln!(out, "w {}", vals.join(" ")).unwrap();
            }
            let vals: Vec<String> = layer.biases.iter().map(|v| format!("{v:?}")).collect();
            writeln!(out, "b {}", vals.join(" ")).unwrap();
        }
        out
    }

    pub fn from_checkpoint_str(text: &str) -> Result<Self> {
        let bad = |msg: String| Error::Parse {
            path: "<checkpoint>".into(),
            message: msg,
        };
        let mut lines = text.lines();
        if lines.next() != Some(CHECKPOINT_MAGIC) {
            return Err(bad("missing checkpoint header".into()));
        }
        let dims_line = lines.next().ok_or_else(|| bad("missing layer_dims".into()))?;
        let dims = dims_line
            .strip_prefix("layer_dims ")
            .ok_or_else(|| bad(format!("expected layer_dims, got '{dims_line}'")))?
            .split_whitespace()
            .map(|t| t.parse::<usize>().map_err(|e| bad(format!("layer dim '{t}': {e}"))))
            .collect::<Result<Vec<_>>>()?;
        let act_line = lines.next().ok_or_else(|| bad("missing activation".into()))?;
        let act_tokens: Vec<&str> = act_line.split_whitespace().collect();
        let activation = match act_tokens.as_slice() {
            ["activation", "sigmoid"] => Activation::Sigmoid,
            ["activation", "leaky_relu", slope] => Activation::LeakyRelu {
                slope: slope.parse().map_err(|e| bad(format!("slope '{slope}': {e}")))?,
            },
            _ => return Err(bad(format!("unrecognised activation line '{act_line}'"))),
        };
        let mut params = Self::zeros(&dims, activation)?;
        let parse_values = |line: Option<&str>, tag: &str, expected: usize| -> Result<Vec<f64>> {
            let line = line.ok_or_else(|| bad("truncated checkpoint".into()))?;
            let rest = line
                .strip_prefix(tag)
                .ok_or_else(|| bad(format!("expected '{tag}' line, got '{line}'")))?;
            let vals = rest
                .split_whitespace()
                .map(|t| t.parse::<f64>().map_err(|e| bad(format!("value '{t}': {e}"))))
                .collect::<Result<Vec<_>>>()?;
            if vals.len() != expected {
                return Err(bad(format!("expected {expected} values, got {}", vals.len())));
            }
            Ok(vals)
        };
        for layer in &mut params.layers {
            let cols = layer.weights.ncols();
            for mut row in layer.weights.rows_mut() {
                let vals = parse_values(lines.next(), "w ", cols)?;
                row.iter_mut().zip(vals).for_each(|(dst, v)| *dst = v);
            }
            let vals = parse_values(lines.next(), "b ", layer.biases.len())?;
            layer.biases.iter_mut().zip(vals).for_each(|(dst, v)| *dst = v);
        }
        if lines.any(|l| !l.trim().is_empty()) {
            return Err(bad("trailing data after last layer".into()));
        }
        Ok(params)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_checkpoint_string())
            .map_err(|e| Error::io(format!("writing checkpoint {}", path.display()), e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(format!("reading checkpoint {}", path.display()), e))?;
        Self::from_checkpoint_str(&text).map_err(|e| match e {
            Error::Parse { message, .. } => Error::Parse {
                path: path.to_path_buf(),
                message,
            },
            other => other,
        })
    }
}

impl Scorer for ScorerParams {
    fn input_dim(&self) -> usize {
        ScorerParams::input_dim(self)
    }

    fn score_batch(&self, inputs: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
        self.forward_batch(inputs)
    }
}

impl ParamGrads {
    pub fn scale(&mut self, factor: f64) {
        for layer in &mut self.layers {
            layer.weights *= factor;
            layer.biases *= factor;
        }
    }

    pub fn add_assign(&mut self, other: &ParamGrads) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weights += &b.weights;
            a.biases += &b.biases;
        }
    }

    /// Values in the same flat order as [`ScorerParams::param_mut`].
    pub fn flat_values(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.biases.iter()).copied())
            .collect()
    }

    pub fn l2_norm(&self) -> f64 {
        self.flat_values().iter().map(|g| g * g).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(l.biases.iter()).all(|v| v.is_finite()))
    }
}

/// Central-difference gradient of `objective` w.r.t. every parameter.
pub fn finite_difference_grads<F>(params: &ScorerParams, step: f64, mut objective: F) -> Result<ParamGrads>
where
    F: FnMut(&ScorerParams) -> Result<f64>,
{
    let mut probe = params.clone();
    let mut numeric = Vec::with_capacity(params.param_count());
    for i in 0..params.param_count() {
        let original = *probe.param_mut(i);
        *probe.param_mut(i) = original + step;
        let plus = objective(&probe)?;
        *probe.param_mut(i) = original - step;
        let minus = objective(&probe)?;
        *probe.param_mut(i) = original;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::Numeric("objective is not finite".into()));
        }
        numeric.push((plus - minus) / (2.0 * step));
    }
    let mut grads = params.zero_grads();
    let mut values = numeric.into_iter();
    for layer in &mut grads.layers {
        for v in layer.weights.iter_mut().chain(layer.biases.iter_mut()) {
            *v = values.next().unwrap();
        }
    }
    Ok(grads)
}

/// max |a - n| / max(|a|, |n|, 1e-12) over all parameters.
pub fn max_relative_error(analytic: &ParamGrads, numeric: &ParamGrads) -> f64 {
    analytic
        .flat_values()
        .iter()
        .zip(numeric.flat_values())
        .map(|(&a, n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-12))
        .fold(0.0, f64::max)
}

/// Step used for the central differences in [`grad_check`].
pub const GRAD_CHECK_STEP: f64 = 1e-5;

/// Checks `backward` against central finite differences for a single input.
///
/// `loss` maps a score to `(loss, d_loss/d_score)`.
pub fn grad_check<L>(params: &ScorerParams, input: &[f64], loss: L) -> Result<f64>
where
    L: Fn(f64) -> (f64, f64),
{
    let score = params.forward(input)?;
    let (value, d_score) = loss(score);
    if !value.is_finite() || !d_score.is_finite() {
        return Err(Error::Numeric("loss is not finite at the evaluation point".into()));
    }
    let analytic = params.backward(input, d_score)?;
    let numeric = finite_difference_grads(params, GRAD_CHECK_STEP, |p| Ok(loss(p.forward(input)?).0))?;
    Ok(max_relative_error(&analytic, &numeric))
}
