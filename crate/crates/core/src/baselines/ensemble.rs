use rayon::prelude::*;

use crate::data::RegressionDataset;
use crate::error::{Error, Result};
use crate::model::{predict_many, MlpConfig};
use crate::optim::{train, TrainConfig};
use crate::params::ParamVector;
use crate::predictive::{PredictiveSummary, Spread};

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleMember {
    pub params: ParamVector,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleState {
    pub model: MlpConfig,
    pub members: Vec<EnsembleMember>,
}

/// Trains `members` networks independently; member `k` uses seed `base_seed + k`
/// for its initialization and any dropout stream.
pub fn train_ensemble(
    dataset: &RegressionDataset,
    model: &MlpConfig,
    cfg: &TrainConfig,
    members: usize,
    base_seed: u64,
) -> Result<EnsembleState> {
    if members == 0 {
        return Err(Error::Usage("ensemble needs at least one member".into()));
    }
    let seeds: Vec<u64> = (0..members as u64).map(|k| base_seed.wrapping_add(k)).collect();
    train_ensemble_with_seeds(dataset, model, cfg, &seeds)
}

/// One member per entry of `seeds`; members with equal seeds are identical.
pub fn train_ensemble_with_seeds(
    dataset: &RegressionDataset,
    model: &MlpConfig,
    cfg: &TrainConfig,
    seeds: &[u64],
) -> Result<EnsembleState> {
    if seeds.is_empty() {
        return Err(Error::Usage("ensemble needs at least one member".into()));
    }
    let members = seeds
        .par_iter()
        .enumerate()
        .map(|(k, &seed)| {
            let cfg = TrainConfig {
                seed,
                ..cfg.clone()
            };
            train(dataset, model, &cfg)
                .map(|out| EnsembleMember {
                    params: out.params,
                    seed,
                })
                .map_err(|e| Error::Training {
                    stage: "ensemble member",
                    index: k,
                    reason: e.to_string(),
                })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EnsembleState {
        model: model.clone(),
        members,
    })
}

/// Mean and population std (divisor M) of member predictions.
pub fn ensemble_predict(state: &EnsembleState, grid: &[f64]) -> Result<PredictiveSummary> {
    let rows = state
        .members
        .iter()
        .map(|m| predict_many(&m.params, grid, &state.model, None))
        .collect::<Result<Vec<_>>>()?;
    let seed = state.members.first().map_or(0, |m| m.seed);
    PredictiveSummary::from_predictions(grid.to_vec(), &rows, Spread::Population, "ensemble", seed)
}
