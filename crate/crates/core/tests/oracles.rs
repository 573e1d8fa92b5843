mod common;

use l2m::model::forward;
use l2m::rng::Rng;
use l2m::{
    init_params, mc_predictive, predict, DiagGaussian, DropoutMask, MlpConfig, ParamVector, Tape,
};

fn pass(check: common::Check) {
    if let Err(e) = check {
        panic!("{e}");
    }
}

#[test]
fn autodiff_matches_finite_differences() {
    pass(common::gradient_oracle());
}

#[test]
fn adamw_matches_unrolled_recurrence() {
    pass(common::optimizer_trace());
}

#[test]
fn l2m_precision_arithmetic() {
    pass(common::l2m_arithmetic());
}

#[test]
fn posterior_draws_have_the_right_moments() {
    pass(common::sampling_moments());
}

#[test]
fn linear_model_pushforward() {
    pass(common::linear_pushforward());
}

#[test]
fn hmc_on_standard_normal() {
    pass(common::hmc_correctness());
}

#[test]
fn degenerate_inputs_are_exact() {
    pass(common::degenerate_inputs());
}

/// Dense ReLU network written out directly from the flat layout.
fn reference_forward(params: &[f64], x: f64, cfg: &MlpConfig, mask: Option<&DropoutMask>) -> f64 {
    let mut act = vec![x];
    let mut offset = 0;
    let widths: Vec<usize> = std::iter::once(cfg.input_dim)
        .chain(std::iter::repeat_n(cfg.hidden_units, cfg.hidden_layers))
        .chain(std::iter::once(cfg.output_dim))
        .collect();
    for k in 0..widths.len() - 1 {
        let (n_in, n_out) = (widths[k], widths[k + 1]);
        let w = &params[offset..offset + n_in * n_out];
        let b = &params[offset + n_in * n_out..offset + n_in * n_out + n_out];
        offset += n_in * n_out + n_out;
        let mut next = vec![0.0; n_out];
        for j in 0..n_out {
            let mut acc = b[j];
            for i in 0..n_in {
                acc += w[j * n_in + i] * act[i];
            }
            if k + 1 < widths.len() - 1 {
                acc = acc.max(0.0);
                if let Some(m) = mask {
                    acc *= m.layer(k)[j];
                }
            }
            next[j] = acc;
        }
        act = next;
    }
    assert_eq!(offset, params.len());
    act[0]
}

#[test]
fn forward_pass_matches_reference_and_tape() {
    for (k, layers) in [0usize, 1, 2, 3].into_iter().enumerate() {
        let cfg = MlpConfig {
            hidden_layers: layers,
            hidden_units: 6,
            dropout_rate: 0.25,
            ..MlpConfig::default()
        };
        let params = init_params(&cfg, k as u64).unwrap();
        let mut rng = Rng::new(k as u64);
        for &x in &[-5.5, -1.0, 0.0, 0.3, 4.0] {
            let mask = DropoutMask::sample(&cfg, &mut rng);
            for m in [None, Some(&mask)] {
                let want = reference_forward(&params, x, &cfg, m);
                let got = predict(&params, x, &cfg, m).unwrap();
                assert_eq!(got.to_bits(), want.to_bits(), "layers {layers} x {x}");
                let mut tape = Tape::new();
                let vars = tape.inputs(&params);
                let out = forward(&mut tape, &vars, x, &cfg, m).unwrap();
                assert_eq!(tape.value(out).to_bits(), want.to_bits());
            }
        }
    }
}

#[test]
fn default_network_shape() {
    let cfg = MlpConfig::default();
    assert_eq!(cfg.num_params(), 1761);
    let params = init_params(&cfg, 0).unwrap();
    let mut tape = Tape::new();
    let vars = tape.inputs(&params);
    let before = tape.len();
    forward(&mut tape, &vars, 1.0, &cfg, None).unwrap();
    assert!(tape.len() > before);
}

#[test]
fn init_variance_follows_fan_in() {
    let cfg = MlpConfig::default();
    let layers = cfg.layers();
    // One weight from the first layer (fan_in 1) and one from the second (fan_in 40).
    let picks = [(layers[0].weights().start + 3, 1.0), (layers[1].weights().start + 77, 40.0)];
    let n = 10_000;
    let mut draws = vec![Vec::with_capacity(n); picks.len()];
    for seed in 0..n as u64 {
        let p = init_params(&cfg, seed).unwrap();
        for (j, (idx, _)) in picks.iter().enumerate() {
            draws[j].push(p[*idx]);
        }
        assert!(p[layers[0].biases()].iter().all(|&b| b == 0.0));
    }
    for (j, (_, fan_in)) in picks.iter().enumerate() {
        let var = draws[j].iter().map(|w| w * w).sum::<f64>() / n as f64;
        let want = 2.0 / fan_in;
        assert!((var / want - 1.0).abs() < 0.1, "fan_in {fan_in}: variance {var} vs {want}");
    }
}

#[test]
fn predictive_std_error_shrinks_as_inverse_root_s() {
    let model = MlpConfig::linear(1, 1);
    let sigma = 0.5;
    let post = DiagGaussian::new(ParamVector::new(vec![2.0, 1.0]).unwrap(), vec![sigma, 0.0]).unwrap();
    let x = 2.0;
    let want = x * sigma;
    let rms = |s: usize| {
        let reps = 200;
        let sq: f64 = (0..reps)
            .map(|r| {
                let got = mc_predictive(&post, &model, &[x], s, 1000 + r, "lin").unwrap().std[0];
                (got - want).powi(2)
            })
            .sum();
        (sq / reps as f64).sqrt()
    };
    let errs: Vec<f64> = [50, 200, 800].iter().map(|&s| rms(s)).collect();
    for w in errs.windows(2) {
        let ratio = w[0] / w[1];
        assert!((1.6..=2.5).contains(&ratio), "rms errors {errs:?}");
    }
}

#[test]
fn mc_predictive_is_seed_deterministic() {
    let cfg = MlpConfig {
        hidden_units: 5,
        ..MlpConfig::default()
    };
    let params = init_params(&cfg, 2).unwrap();
    let post = DiagGaussian::new(params.clone(), vec![0.05; params.len()]).unwrap();
    let grid = l2m::eval_grid(-3.0, 3.0, 11).unwrap();
    let a = mc_predictive(&post, &cfg, &grid, 30, 9, "a").unwrap();
    let b = mc_predictive(&post, &cfg, &grid, 30, 9, "a").unwrap();
    let c = mc_predictive(&post, &cfg, &grid, 30, 10, "a").unwrap();
    assert_eq!(a, b);
    assert_ne!(a.std, c.std);
}

#[test]
fn quadrupling_samples_halves_spread_of_mean_estimate() {
    let model = MlpConfig::linear(1, 1);
    let post = DiagGaussian::new(ParamVector::new(vec![2.0, 1.0]).unwrap(), vec![0.5, 0.3]).unwrap();
    let spread = |s: usize| {
        let means: Vec<f64> = (0..30)
            .map(|r| mc_predictive(&post, &model, &[1.5], s, 500 + r, "lin").unwrap().mean[0])
            .collect();
        let m = means.iter().sum::<f64>() / 30.0;
        (means.iter().map(|v| (v - m).powi(2)).sum::<f64>() / 29.0).sqrt()
    };
    let (a, b) = (spread(100), spread(400));
    let ratio = a / b;
    assert!((1.6..=2.4).contains(&ratio), "spread {a} -> {b}, ratio {ratio}");
}
