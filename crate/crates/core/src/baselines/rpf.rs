//! Randomized prior functions: each member is a trainable network plus a
//! frozen, randomly initialized prior network scaled by `beta`.

use rayon::prelude::*;

use crate::data::RegressionDataset;
use crate::error::{Error, Result};
use crate::model::{init_params, predict, predict_many, MlpConfig};
use crate::optim::{train, TrainConfig};
use crate::params::ParamVector;
use crate::predictive::{PredictiveSummary, Spread};
use crate::rng::{derive_seed, streams, Rng};

#[derive(Debug, Clone, PartialEq)]
pub struct RpfPair {
    pub model: MlpConfig,
    pub trainable: ParamVector,
    pub prior: ParamVector,
    pub beta: f64,
    pub seed: u64,
}

/// Seed label for the prior network's initialization.
const PRIOR_LABEL: u64 = 1;

/// Trains the trainable half of one pair against `y − beta · prior(x)`, so
/// the combined prediction fits the data while the prior stays fixed.
/// With `bootstrap`, the data are resampled with replacement first.
pub fn rpf_train(
    dataset: &RegressionDataset,
    model: &MlpConfig,
    cfg: &TrainConfig,
    beta: f64,
    seed: u64,
    bootstrap: bool,
) -> Result<RpfPair> {
    if !(beta >= 0.0) || !beta.is_finite() {
        return Err(Error::Usage(format!("beta must be >= 0, got {beta}")));
    }
    let prior = init_params(model, derive_seed(seed, PRIOR_LABEL))?;
    let data = if bootstrap {
        dataset.bootstrap(&mut Rng::stream(seed, streams::BOOTSTRAP))
    } else {
        dataset.clone()
    };
    let prior_out = predict_many(&prior, &data.xs, model, None)?;
    let targets: Vec<f64> = data
        .ys
        .iter()
        .zip(&prior_out)
        .map(|(y, p)| y - beta * p)
        .collect();
    let shifted = RegressionDataset::new(data.xs.clone(), targets)?;
    let cfg = TrainConfig {
        seed,
        ..cfg.clone()
    };
    let out = train(&shifted, model, &cfg)?;
    Ok(RpfPair {
        model: model.clone(),
        trainable: out.params,
        prior,
        beta,
        seed,
    })
}

/// `trainable(x) + beta · prior(x)`.
pub fn rpf_predict(pair: &RpfPair, x: f64) -> Result<f64> {
    let t = predict(&pair.trainable, x, &pair.model, None)?;
    let p = predict(&pair.prior, x, &pair.model, None)?;
    Ok(t + pair.beta * p)
}

/// `members` pairs with seeds `base_seed + k`.
pub fn rpf_ensemble(
    dataset: &RegressionDataset,
    model: &MlpConfig,
    cfg: &TrainConfig,
    beta: f64,
    members: usize,
    base_seed: u64,
    bootstrap: bool,
) -> Result<Vec<RpfPair>> {
    if members == 0 {
        return Err(Error::Usage("RPF ensemble needs at least one member".into()));
    }
    (0..members as u64)
        .into_par_iter()
        .map(|k| {
            rpf_train(dataset, model, cfg, beta, base_seed.wrapping_add(k), bootstrap).map_err(
                |e| Error::Training {
                    stage: "rpf member",
                    index: k as usize,
                    reason: e.to_string(),
                },
            )
        })
        .collect()
}

/// Mean and population std across pairs.
pub fn rpf_ensemble_predict(pairs: &[RpfPair], grid: &[f64]) -> Result<PredictiveSummary> {
    let rows = pairs
        .iter()
        .map(|pair| grid.iter().map(|&x| rpf_predict(pair, x)).collect())
        .collect::<Result<Vec<Vec<f64>>>>()?;
    let seed = pairs.first().map_or(0, |p| p.seed);
    PredictiveSummary::from_predictions(grid.to_vec(), &rows, Spread::Population, "rpf", seed)
}
