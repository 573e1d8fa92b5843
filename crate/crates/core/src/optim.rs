//! Adam with decoupled weight decay, with its moment buffers kept after
//! training so the second moment can be reused as a diagonal curvature
//! estimate.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::RegressionDataset;
use crate::error::{Error, Result};
use crate::io::{fmt_f64, write_csv};
use crate::model::{init_params, loss_and_gradient, DropoutMask, MlpConfig};
use crate::params::ParamVector;
use crate::rng::{streams, Rng};
use crate::tape::Tape;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps_opt: f64,
    pub weight_decay: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps_opt: 1e-8,
            weight_decay: 0.0,
        }
    }
}

impl AdamHyper {
    pub fn validate(&self) -> Result<()> {
        let in_unit = |b: f64| (0.0..1.0).contains(&b);
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(Error::Config(format!("lr must be > 0, got {}", self.lr)));
        }
        if !in_unit(self.beta1) || !in_unit(self.beta2) {
            return Err(Error::Config(format!(
                "betas must lie in [0, 1), got ({}, {})",
                self.beta1, self.beta2
            )));
        }
        if !(self.eps_opt >= 0.0) || !(self.weight_decay >= 0.0) {
            return Err(Error::Config("eps_opt and weight_decay must be >= 0".into()));
        }
        Ok(())
    }
}

/// Moment buffers and step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
    hyper: AdamHyper,
}

impl AdamState {
    pub fn new(len: usize, hyper: AdamHyper) -> Result<Self> {
        hyper.validate()?;
        Ok(Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
            hyper,
        })
    }

    /// Rebuilds a state from persisted buffers.
    pub fn from_parts(m: Vec<f64>, v: Vec<f64>, t: u64, hyper: AdamHyper) -> Result<Self> {
        hyper.validate()?;
        if m.len() != v.len() {
            return Err(Error::Data(format!(
                "moment buffers differ in length ({} vs {})",
                m.len(),
                v.len()
            )));
        }
        if let Some(i) = v.iter().position(|&x| !(x >= 0.0) || !x.is_finite()) {
            return Err(Error::Data(format!("second moment entry {i} is {}", v[i])));
        }
        if m.iter().any(|x| !x.is_finite()) {
            return Err(Error::Data("first moment has non-finite entries".into()));
        }
        Ok(Self { m, v, t, hyper })
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }

    /// Number of completed steps.
    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn hyper(&self) -> &AdamHyper {
        &self.hyper
    }

    pub fn first_moment_raw(&self) -> &[f64] {
        &self.m
    }

    pub fn second_moment_raw(&self) -> &[f64] {
        &self.v
    }

    /// Bias-corrected second moment `v / (1 − β2^t)`.
    pub fn second_moment(&self) -> Result<Vec<f64>> {
        if self.t == 0 {
            return Err(Error::Usage(
                "no steps taken: optimizer moments absent".into(),
            ));
        }
        let correction = 1.0 - self.hyper.beta2.powf(self.t as f64);
        Ok(self.v.iter().map(|v| v / correction).collect())
    }
}

/// One AdamW update in place.
///
/// `m ← β1 m + (1−β1) g`, `v ← β2 v + (1−β2) g²`, then
/// `θ ← θ (1 − lr λ) − lr m̂ / (√v̂ + ε)` with bias-corrected `m̂`, `v̂`.
/// Decay acts on the parameters only and never enters `v`.
pub fn adam_step(params: &mut [f64], grad: &[f64], state: &mut AdamState) -> Result<()> {
    if params.len() != state.len() || grad.len() != state.len() {
        return Err(Error::Usage(format!(
            "adam step: {} params, {} grads, state of {}",
            params.len(),
            grad.len(),
            state.len()
        )));
    }
    let step = state.t + 1;
    if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
        return Err(Error::Training {
            stage: "step",
            index: step as usize,
            reason: format!("gradient entry {i} is {}", grad[i]),
        });
    }
    let AdamHyper {
        lr,
        beta1,
        beta2,
        eps_opt,
        weight_decay,
    } = state.hyper;
    state.t = step;
    let bc1 = 1.0 - beta1.powf(step as f64);
    let bc2 = 1.0 - beta2.powf(step as f64);
    let decay = 1.0 - lr * weight_decay;
    for i in 0..params.len() {
        let g = grad[i];
        state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * g;
        state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * g * g;
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        let update = if m_hat == 0.0 {
            0.0
        } else {
            lr * m_hat / (v_hat.sqrt() + eps_opt)
        };
        params[i] = params[i] * decay - update;
    }
    Ok(())
}

/// Training run settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps_opt: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    /// 5000 full-batch epochs, lr 0.1, decoupled weight decay 0.1.
    fn default() -> Self {
        Self {
            epochs: 5000,
            lr: 0.1,
            weight_decay: 0.1,
            beta1: 0.9,
            beta2: 0.999,
            eps_opt: 1e-8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn hyper(&self) -> AdamHyper {
        AdamHyper {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps_opt: self.eps_opt,
            weight_decay: self.weight_decay,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        self.hyper().validate()
    }
}

/// Result of [`train`].
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Final parameters (the MAP estimate).
    pub params: ParamVector,
    pub state: AdamState,
    /// Full-batch loss evaluated before each epoch's step.
    pub losses: Vec<f64>,
}

/// Full-batch MSE training, one optimizer step per epoch, initialized from
/// `init_params(model, cfg.seed)`.
pub fn train(
    dataset: &RegressionDataset,
    model: &MlpConfig,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    train_with(dataset, model, cfg, None, |_, _| {})
}

/// [`train`] with an optional starting point and a hook called after every
/// epoch with the epoch index and the updated parameters.
///
/// When `model.dropout_rate > 0` every example gets a fresh dropout mask
/// each epoch, drawn from the `cfg.seed` dropout stream.
pub fn train_with<F>(
    dataset: &RegressionDataset,
    model: &MlpConfig,
    cfg: &TrainConfig,
    init: Option<ParamVector>,
    mut after_epoch: F,
) -> Result<TrainOutcome>
where
    F: FnMut(usize, &[f64]),
{
    cfg.validate()?;
    model.validate()?;
    if dataset.is_empty() {
        return Err(Error::Usage("cannot train on an empty dataset".into()));
    }
    let mut params = match init {
        Some(p) => {
            if p.len() != model.num_params() {
                return Err(Error::Config(format!(
                    "initial parameters have {} entries, model expects {}",
                    p.len(),
                    model.num_params()
                )));
            }
            p.into_vec()
        }
        None => init_params(model, cfg.seed)?.into_vec(),
    };
    let mut state = AdamState::new(params.len(), cfg.hyper())?;
    let mut dropout_rng =
        (model.dropout_rate > 0.0).then(|| Rng::stream(cfg.seed, streams::DROPOUT));
    let mut tape = Tape::new();
    let mut losses = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let masks: Option<Vec<DropoutMask>> = dropout_rng.as_mut().map(|rng| {
            (0..dataset.len())
                .map(|_| DropoutMask::sample(model, rng))
                .collect()
        });
        let (loss, grad) = loss_and_gradient(
            &mut tape,
            &params,
            &dataset.xs,
            &dataset.ys,
            model,
            masks.as_deref(),
        )?;
        if !loss.is_finite() {
            return Err(Error::Training {
                stage: "epoch",
                index: epoch,
                reason: format!("loss is {loss}"),
            });
        }
        losses.push(loss);
        adam_step(&mut params, &grad, &mut state).map_err(|e| match e {
            Error::Training { reason, .. } => Error::Training {
                stage: "epoch",
                index: epoch,
                reason,
            },
            other => other,
        })?;
        after_epoch(epoch, &params);
    }
    let params = ParamVector::new(params).map_err(|e| Error::Training {
        stage: "epoch",
        index: cfg.epochs,
        reason: e.to_string(),
    })?;
    Ok(TrainOutcome {
        params,
        state,
        losses,
    })
}

/// Writes the loss history with header `epoch,loss`.
pub fn write_loss_csv(path: &Path, losses: &[f64]) -> Result<()> {
    let rows = losses
        .iter()
        .enumerate()
        .map(|(e, l)| vec![e.to_string(), fmt_f64(*l)]);
    write_csv(path, &["epoch", "loss"], rows)
}
