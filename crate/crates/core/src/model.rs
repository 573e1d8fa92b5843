//! Fully connected ReLU network with optional inverted dropout.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::ParamVector;
use crate::rng::{streams, Rng};
use crate::tape::{Tape, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
}

/// Network architecture.
///
/// `hidden_layers = 0` gives a purely affine model `w·x + b`; `hidden_units`
/// is then ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlpConfig {
    pub input_dim: usize,
    pub hidden_layers: usize,
    pub hidden_units: usize,
    pub output_dim: usize,
    pub activation: Activation,
    pub dropout_rate: f64,
}

impl Default for MlpConfig {
    /// 1 → 40 → 40 → 1 ReLU network without dropout.
    fn default() -> Self {
        Self {
            input_dim: 1,
            hidden_layers: 2,
            hidden_units: 40,
            output_dim: 1,
            activation: Activation::Relu,
            dropout_rate: 0.0,
        }
    }
}

/// Shape of one dense layer inside the flat parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerShape {
    pub fan_in: usize,
    pub fan_out: usize,
    /// Index of the first weight; biases follow the `fan_out × fan_in` weights.
    pub offset: usize,
}

impl LayerShape {
    pub fn weights(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.fan_in * self.fan_out
    }

    pub fn biases(&self) -> std::ops::Range<usize> {
        let start = self.offset + self.fan_in * self.fan_out;
        start..start + self.fan_out
    }

    pub fn len(&self) -> usize {
        (self.fan_in + 1) * self.fan_out
    }

    pub fn is_empty(&self) -> bool {
        self.fan_out == 0
    }
}

impl MlpConfig {
    /// A linear `input_dim → output_dim` model with no hidden layer.
    pub fn linear(input_dim: usize, output_dim: usize) -> Self {
        Self {
            input_dim,
            hidden_layers: 0,
            hidden_units: 0,
            output_dim,
            activation: Activation::Relu,
            dropout_rate: 0.0,
        }
    }

    pub fn with_dropout(mut self, rate: f64) -> Self {
        self.dropout_rate = rate;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 {
            return Err(Error::Config("input_dim and output_dim must be at least 1".into()));
        }
        if self.hidden_layers > 0 && self.hidden_units == 0 {
            return Err(Error::Config("hidden_units must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Config(format!(
                "dropout_rate must lie in [0, 1), got {}",
                self.dropout_rate
            )));
        }
        Ok(())
    }

    fn widths(&self) -> Vec<usize> {
        let mut widths = Vec::with_capacity(self.hidden_layers + 2);
        widths.push(self.input_dim);
        widths.extend(std::iter::repeat_n(self.hidden_units, self.hidden_layers));
        widths.push(self.output_dim);
        widths
    }

    pub fn layers(&self) -> Vec<LayerShape> {
        let widths = self.widths();
        let mut offset = 0;
        widths
            .windows(2)
            .map(|w| {
                let shape = LayerShape {
                    fan_in: w[0],
                    fan_out: w[1],
                    offset,
                };
                offset += shape.len();
                shape
            })
            .collect()
    }

    pub fn num_params(&self) -> usize {
        self.layers().iter().map(LayerShape::len).sum()
    }

    fn check_params(&self, len: usize) -> Result<()> {
        let expected = self.num_params();
        if len != expected {
            return Err(Error::Config(format!(
                "parameter vector has {len} entries, model expects {expected}"
            )));
        }
        Ok(())
    }

    fn check_scalar_io(&self) -> Result<()> {
        if self.input_dim != 1 || self.output_dim != 1 {
            return Err(Error::Config(format!(
                "scalar evaluation needs a 1 -> 1 model, got {} -> {}",
                self.input_dim, self.output_dim
            )));
        }
        Ok(())
    }

    fn check_mask(&self, mask: &DropoutMask) -> Result<()> {
        let ok = mask.layers.len() == self.hidden_layers
            && mask.layers.iter().all(|l| l.len() == self.hidden_units);
        if ok {
            Ok(())
        } else {
            Err(Error::Usage(format!(
                "dropout mask shape does not match {} hidden layers of {} units",
                self.hidden_layers, self.hidden_units
            )))
        }
    }
}

/// Kaiming-uniform weights in `±√(6 / fan_in)`, zero biases.
pub fn init_params(config: &MlpConfig, seed: u64) -> Result<ParamVector> {
    config.validate()?;
    let mut rng = Rng::stream(seed, streams::INIT);
    let mut values = vec![0.0; config.num_params()];
    for layer in config.layers() {
        let bound = (6.0 / layer.fan_in as f64).sqrt();
        for w in &mut values[layer.weights()] {
            *w = rng.uniform_in(-bound, bound);
        }
    }
    Ok(ParamVector::from_vec_unchecked(values))
}

/// Per-hidden-unit multipliers for inverted dropout: each entry is either
/// `0` or `1 / (1 − p)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutMask {
    rate: f64,
    layers: Vec<Vec<f64>>,
}

impl DropoutMask {
    /// Draws a fresh mask; every unit is dropped independently with
    /// probability `config.dropout_rate`.
    pub fn sample(config: &MlpConfig, rng: &mut Rng) -> Self {
        let p = config.dropout_rate;
        let scale = 1.0 / (1.0 - p);
        let layers = (0..config.hidden_layers)
            .map(|_| {
                (0..config.hidden_units)
                    .map(|_| if rng.bernoulli(p) { 0.0 } else { scale })
                    .collect()
            })
            .collect();
        Self { rate: p, layers }
    }

    pub fn ones(config: &MlpConfig) -> Self {
        Self::filled(config, 1.0)
    }

    pub fn zeros(config: &MlpConfig) -> Self {
        Self::filled(config, 0.0)
    }

    fn filled(config: &MlpConfig, value: f64) -> Self {
        Self {
            rate: config.dropout_rate,
            layers: vec![vec![value; config.hidden_units]; config.hidden_layers],
        }
    }

    /// Builds a mask from explicit entries, checking each is `0` or `1/(1−rate)`.
    pub fn from_layers(rate: f64, layers: Vec<Vec<f64>>) -> Result<Self> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Usage(format!("dropout rate {rate} outside [0, 1)")));
        }
        let scale = 1.0 / (1.0 - rate);
        if layers.iter().flatten().any(|&m| m != 0.0 && m != scale) {
            return Err(Error::Usage(format!(
                "mask entries must be 0 or {scale} for rate {rate}"
            )));
        }
        Ok(Self { rate, layers })
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn layer(&self, i: usize) -> &[f64] {
        &self.layers[i]
    }
}

#[inline]
fn relu(v: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        0.0
    }
}

/// Tape-free forward pass over a general input vector.
pub fn forward_values(
    params: &[f64],
    input: &[f64],
    config: &MlpConfig,
    mask: Option<&DropoutMask>,
) -> Result<Vec<f64>> {
    config.check_params(params.len())?;
    if input.len() != config.input_dim {
        return Err(Error::Config(format!(
            "input has {} features, model expects {}",
            input.len(),
            config.input_dim
        )));
    }
    if let Some(m) = mask {
        config.check_mask(m)?;
    }
    let layers = config.layers();
    let last = layers.len() - 1;
    let mut activations = input.to_vec();
    for (k, layer) in layers.iter().enumerate() {
        let weights = &params[layer.weights()];
        let biases = &params[layer.biases()];
        let mut next = Vec::with_capacity(layer.fan_out);
        for j in 0..layer.fan_out {
            let row = &weights[j * layer.fan_in..(j + 1) * layer.fan_in];
            let mut acc = biases[j];
            for (w, x) in row.iter().zip(&activations) {
                acc += w * x;
            }
            if k < last {
                acc = relu(acc);
                if let Some(m) = mask {
                    acc *= m.layers[k][j];
                }
            }
            next.push(acc);
        }
        activations = next;
    }
    Ok(activations)
}

/// Scalar prediction for a 1 → 1 model.
pub fn predict(
    params: &[f64],
    x: f64,
    config: &MlpConfig,
    mask: Option<&DropoutMask>,
) -> Result<f64> {
    config.check_scalar_io()?;
    Ok(forward_values(params, &[x], config, mask)?[0])
}

/// Predictions at every point of `xs` with one shared mask.
pub fn predict_many(
    params: &[f64],
    xs: &[f64],
    config: &MlpConfig,
    mask: Option<&DropoutMask>,
) -> Result<Vec<f64>> {
    xs.iter().map(|&x| predict(params, x, config, mask)).collect()
}

/// Records a forward pass for scalar input `x` on `tape`, reading weights
/// from `params` (one tape variable per parameter, in flat layout order).
pub fn forward(
    tape: &mut Tape,
    params: &[Var],
    x: f64,
    config: &MlpConfig,
    mask: Option<&DropoutMask>,
) -> Result<Var> {
    config.check_scalar_io()?;
    config.check_params(params.len())?;
    if let Some(m) = mask {
        config.check_mask(m)?;
    }
    let layers = config.layers();
    let last = layers.len() - 1;
    let mut activations = vec![tape.constant(x)];
    for (k, layer) in layers.iter().enumerate() {
        let weights = &params[layer.weights()];
        let biases = &params[layer.biases()];
        let mut next = Vec::with_capacity(layer.fan_out);
        for j in 0..layer.fan_out {
            let row = &weights[j * layer.fan_in..(j + 1) * layer.fan_in];
            let mut out = tape.affine(biases[j], row, &activations);
            if k < last {
                out = tape.relu(out);
                if let Some(m) = mask {
                    out = tape.scale(out, m.layers[k][j]);
                }
            }
            next.push(out);
        }
        activations = next;
    }
    Ok(activations[0])
}

/// Full-batch MSE and its gradient with respect to every parameter.
///
/// `masks`, when given, supplies one dropout mask per example.
pub fn loss_and_gradient(
    tape: &mut Tape,
    params: &[f64],
    xs: &[f64],
    ys: &[f64],
    config: &MlpConfig,
    masks: Option<&[DropoutMask]>,
) -> Result<(f64, Vec<f64>)> {
    if let Some(m) = masks {
        if m.len() != xs.len() {
            return Err(Error::Usage(format!(
                "{} dropout masks for {} examples",
                m.len(),
                xs.len()
            )));
        }
    }
    tape.clear();
    let vars = tape.inputs(params);
    let mut preds = Vec::with_capacity(xs.len());
    for (i, &x) in xs.iter().enumerate() {
        let mask = masks.map(|m| &m[i]);
        preds.push(forward(tape, &vars, x, config, mask)?);
    }
    let loss = tape.mean_squared_error(&preds, ys)?;
    let adjoints = tape.backward(loss)?;
    Ok((tape.value(loss), adjoints.wrt(&vars)))
}
