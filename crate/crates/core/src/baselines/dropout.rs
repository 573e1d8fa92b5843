use rayon::prelude::*;

use crate::error::Result;
use crate::model::{predict_many, DropoutMask, MlpConfig};
use crate::predictive::{PredictiveSummary, Spread};
use crate::rng::{streams, Rng};

/// MC dropout: `samples` stochastic passes over the grid, each with one
/// fresh mask (rate `model.dropout_rate`) drawn from sub-stream `s` of `seed`.
/// Std uses divisor `S − 1`.
pub fn mc_dropout_predict(
    params: &[f64],
    model: &MlpConfig,
    grid: &[f64],
    samples: usize,
    seed: u64,
) -> Result<PredictiveSummary> {
    model.validate()?;
    let rows = (0..samples)
        .into_par_iter()
        .map(|s| {
            let mut rng = Rng::stream(seed, streams::SAMPLE_BASE + s as u64);
            let mask = DropoutMask::sample(model, &mut rng);
            predict_many(params, grid, model, Some(&mask))
        })
        .collect::<Result<Vec<_>>>()?;
    PredictiveSummary::from_predictions(grid.to_vec(), &rows, Spread::Sample, "mc-dropout", seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::init_params;

    #[test]
    fn zero_rate_has_zero_spread() {
        let model = MlpConfig::default();
        let p = init_params(&model, 1).unwrap();
        let grid = [-5.0, 0.0, 2.5];
        let s = mc_dropout_predict(&p, &model, &grid, 100, 3).unwrap();
        assert_eq!(s.std, vec![0.0; 3]);
        assert_eq!(s.mean, predict_many(&p, &grid, &model, None).unwrap());
    }

    #[test]
    fn fixed_seed_reproduces() {
        let model = MlpConfig::default().with_dropout(0.1);
        let p = init_params(&model, 1).unwrap();
        let grid = [-1.0, 1.0];
        let a = mc_dropout_predict(&p, &model, &grid, 64, 5).unwrap();
        let b = mc_dropout_predict(&p, &model, &grid, 64, 5).unwrap();
        assert_eq!(a, b);
        assert!(a.std.iter().all(|&s| s > 0.0));
    }

    #[test]
    fn inverted_dropout_is_unbiased_through_a_linear_readout() {
        // Output is linear in the hidden-layer mask, so E[masked] = unmasked.
        let model = MlpConfig {
            hidden_layers: 1,
            hidden_units: 16,
            ..MlpConfig::default()
        }
        .with_dropout(0.5);
        let mut p = init_params(&model, 8).unwrap().into_vec();
        // Positive hidden biases keep all units active at x = 0.7.
        let first = model.layers()[0];
        for b in &mut p[first.biases()] {
            *b = 1.0;
        }
        let plain = predict_many(&p, &[0.7], &model, None).unwrap()[0];
        let s = mc_dropout_predict(&p, &model, &[0.7], 100_000, 2).unwrap();
        assert!(
            (s.mean[0] - plain).abs() < 0.02 * plain.abs(),
            "mc {} vs {plain}",
            s.mean[0]
        );
    }
}
