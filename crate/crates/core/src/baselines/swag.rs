use serde::{Deserialize, Serialize};

use crate::data::RegressionDataset;
use crate::error::{Error, Result};
use crate::model::MlpConfig;
use crate::optim::{train_with, TrainConfig, TrainOutcome};
use crate::params::ParamVector;
use crate::posterior::DiagGaussian;

/// Running first and second moments of the parameter trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct SwagDiagState {
    running_mean: Vec<f64>,
    running_sq_mean: Vec<f64>,
    snapshots: usize,
}

impl SwagDiagState {
    pub fn new(len: usize) -> Self {
        Self {
            running_mean: vec![0.0; len],
            running_sq_mean: vec![0.0; len],
            snapshots: 0,
        }
    }

    /// Folds one parameter snapshot into the cumulative averages.
    pub fn collect(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.running_mean.len() {
            return Err(Error::Usage(format!(
                "snapshot has {} entries, state tracks {}",
                params.len(),
                self.running_mean.len()
            )));
        }
        self.snapshots += 1;
        let k = self.snapshots as f64;
        for (i, &p) in params.iter().enumerate() {
            self.running_mean[i] += (p - self.running_mean[i]) / k;
            self.running_sq_mean[i] += (p * p - self.running_sq_mean[i]) / k;
        }
        Ok(())
    }

    pub fn snapshots(&self) -> usize {
        self.snapshots
    }

    pub fn running_mean(&self) -> &[f64] {
        &self.running_mean
    }

    pub fn running_sq_mean(&self) -> &[f64] {
        &self.running_sq_mean
    }

    /// `sq_mean − mean²` before clamping; can dip below zero by rounding.
    pub fn raw_variance(&self) -> Vec<f64> {
        self.running_sq_mean
            .iter()
            .zip(&self.running_mean)
            .map(|(sq, m)| sq - m * m)
            .collect()
    }

    /// Clamped at zero.
    pub fn variance(&self) -> Vec<f64> {
        self.raw_variance().into_iter().map(|v| v.max(0.0)).collect()
    }
}

/// When snapshots are taken during training (0-based epoch indices).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SwagSchedule {
    pub collect_every: usize,
    pub start_epoch: usize,
}

impl Default for SwagSchedule {
    fn default() -> Self {
        Self {
            collect_every: 1,
            start_epoch: 4000,
        }
    }
}

impl SwagSchedule {
    fn takes(&self, epoch: usize) -> bool {
        epoch >= self.start_epoch && (epoch - self.start_epoch).is_multiple_of(self.collect_every)
    }
}

/// Runs a training job and accumulates a snapshot after every qualifying epoch.
pub fn swag_collect(
    dataset: &RegressionDataset,
    model: &MlpConfig,
    cfg: &TrainConfig,
    schedule: SwagSchedule,
) -> Result<(SwagDiagState, TrainOutcome)> {
    if schedule.collect_every == 0 {
        return Err(Error::Usage("collect_every must be at least 1".into()));
    }
    if schedule.start_epoch >= cfg.epochs {
        return Err(Error::Usage(format!(
            "SWAG start epoch {} is not before the final epoch ({} epochs)",
            schedule.start_epoch, cfg.epochs
        )));
    }
    let mut state = SwagDiagState::new(model.num_params());
    let mut failure = None;
    let outcome = train_with(dataset, model, cfg, None, |epoch, params| {
        if schedule.takes(epoch) && failure.is_none() {
            failure = state.collect(params).err();
        }
    })?;
    if let Some(e) = failure {
        return Err(e);
    }
    Ok((state, outcome))
}

/// `N(running_mean, max(sq_mean − mean², 0))`.
pub fn swag_posterior(state: &SwagDiagState) -> Result<DiagGaussian> {
    if state.snapshots < 2 {
        return Err(Error::Usage(format!(
            "SWAG posterior needs at least 2 snapshots, have {}",
            state.snapshots
        )));
    }
    let std = state.variance().into_iter().map(f64::sqrt).collect();
    DiagGaussian::new(ParamVector::new(state.running_mean.clone())?, std)
}
