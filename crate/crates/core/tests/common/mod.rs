//! Acceptance checks shared by the acceptance runner and the integration
//! tests. Each check returns a one-line detail on success and a reason on
//! failure.
#![allow(dead_code)]

use std::path::Path;
use std::process::Command;

use l2m::baselines::hmc::{hamiltonian, leapfrog};
use l2m::baselines::{
    ensemble_predict, hmc_sample, mc_dropout_predict, train_ensemble, HmcConfig, LogDensity,
    StandardNormal, SwagDiagState,
};
use l2m::harness::{execute, ExperimentConfig, Invocation};
use l2m::model::{loss_and_gradient, predict_many};
use l2m::rng::Rng;
use l2m::tape::mse_loss;
use l2m::{
    adam_step, build_l2m, generate_cubic, init_params, mc_predictive, AdamHyper, AdamState,
    DiagGaussian, DropoutMask, MlpConfig, ParamVector, Tape, TrainConfig,
};

pub type Check = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn e2s<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

/// `|a − b| / max(|a|, |b|, floor)`.
pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

pub type GradientInstance = (MlpConfig, l2m::RegressionDataset, Vec<f64>, Option<Vec<DropoutMask>>);

/// Ten seeded (model, dataset) instances of varying depth, width and
/// dropout.
pub fn gradient_instances() -> Vec<GradientInstance> {
    (0..10u64)
        .map(|k| {
            let model = MlpConfig {
                hidden_layers: (k % 3) as usize,
                hidden_units: 3 + (k as usize % 5),
                dropout_rate: if k % 4 == 3 { 0.3 } else { 0.0 },
                ..MlpConfig::default()
            };
            let data = generate_cubic(4 + k as usize, -4.0, 4.0, 3.0, 100 + k).unwrap();
            let mut rng = Rng::new(7 + k);
            let mut params = init_params(&model, k).unwrap().into_vec();
            for p in &mut params {
                *p += 0.1 * rng.normal();
            }
            let masks = (model.dropout_rate > 0.0).then(|| {
                (0..data.len())
                    .map(|_| DropoutMask::sample(&model, &mut rng))
                    .collect()
            });
            (model, data, params, masks)
        })
        .collect()
}

fn reference_loss(
    params: &[f64],
    model: &MlpConfig,
    data: &l2m::RegressionDataset,
    masks: Option<&[DropoutMask]>,
) -> f64 {
    let preds: Vec<f64> = (0..data.len())
        .map(|i| {
            let mask = masks.map(|m| &m[i]);
            l2m::predict(params, data.xs[i], model, mask).unwrap()
        })
        .collect();
    mse_loss(&preds, &data.ys).unwrap()
}

/// Criterion 1: autodiff against central differences.
pub fn gradient_oracle() -> Check {
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    let mut tape = Tape::new();
    for (k, (model, data, params, masks)) in gradient_instances().into_iter().enumerate() {
        let (loss, grad) =
            loss_and_gradient(&mut tape, &params, &data.xs, &data.ys, &model, masks.as_deref())
                .map_err(e2s)?;
        let direct = reference_loss(&params, &model, &data, masks.as_deref());
        ensure(rel_err(loss, direct, 1e-300) < 1e-12, || {
            format!("instance {k}: tape loss {loss} vs direct {direct}")
        })?;
        for i in 0..params.len() {
            let mut up = params.clone();
            let mut dn = params.clone();
            up[i] += h;
            dn[i] -= h;
            let fd = (reference_loss(&up, &model, &data, masks.as_deref())
                - reference_loss(&dn, &model, &data, masks.as_deref()))
                / (2.0 * h);
            let err = rel_err(grad[i], fd, 1e-8);
            ensure(err < 1e-4, || {
                format!("instance {k} param {i}: autodiff {} vs FD {fd} (rel {err:.2e})", grad[i])
            })?;
            worst = worst.max(err);
            checked += 1;
        }
    }
    Ok(format!("10 instances, {checked} partials, max rel err {worst:.2e}"))
}

/// Scalar recurrence for one coordinate, written out independently of the
/// library implementation.
fn unrolled_adam(theta0: f64, grads: &[f64], h: &AdamHyper) -> Vec<(f64, f64, f64)> {
    let (mut theta, mut m, mut v) = (theta0, 0.0, 0.0);
    let mut out = Vec::new();
    for (t, &g) in grads.iter().enumerate() {
        let t = (t + 1) as i32;
        m = h.beta1 * m + (1.0 - h.beta1) * g;
        v = h.beta2 * v + (1.0 - h.beta2) * g * g;
        let m_hat = m / (1.0 - h.beta1.powi(t));
        let v_hat = v / (1.0 - h.beta2.powi(t));
        let step = if m_hat == 0.0 {
            0.0
        } else {
            h.lr * m_hat / (v_hat.sqrt() + h.eps_opt)
        };
        theta = theta * (1.0 - h.lr * h.weight_decay) - step;
        out.push((theta, m, v_hat));
    }
    out
}

/// Criterion 2: five-step AdamW traces.
pub fn optimizer_trace() -> Check {
    let scripts: [(AdamHyper, [f64; 3], [[f64; 3]; 5]); 3] = [
        (
            AdamHyper {
                lr: 0.1,
                beta1: 0.9,
                beta2: 0.999,
                eps_opt: 1e-8,
                weight_decay: 0.1,
            },
            [0.5, -1.0, 2.0],
            [
                [1.0, -0.5, 0.0],
                [2.0, 0.25, 0.0],
                [-3.0, 4.0, 1e-3],
                [0.5, -2.0, -1e-3],
                [1e-4, 0.0, 7.0],
            ],
        ),
        (
            AdamHyper {
                lr: 0.01,
                beta1: 0.5,
                beta2: 0.9,
                eps_opt: 1e-6,
                weight_decay: 0.0,
            },
            [0.0, 3.0, -0.25],
            [
                [1.0, 10.0, -1.0],
                [2.0, -10.0, 1.0],
                [0.0, 5.0, -1.0],
                [-1.0, 0.0, 1.0],
                [4.0, 1.0, -1.0],
            ],
        ),
        (
            AdamHyper {
                lr: 0.3,
                beta1: 0.0,
                beta2: 0.5,
                eps_opt: 1e-8,
                weight_decay: 1.0,
            },
            [1.0, 1.0, 1.0],
            [[0.1; 3], [0.2; 3], [-0.3; 3], [0.0; 3], [5.0; 3]],
        ),
    ];
    let mut worst: f64 = 0.0;
    for (s, (hyper, init, grads)) in scripts.iter().enumerate() {
        let mut params = init.to_vec();
        let mut state = AdamState::new(3, *hyper).map_err(e2s)?;
        let expected: Vec<_> = (0..3)
            .map(|i| {
                let g: Vec<f64> = grads.iter().map(|row| row[i]).collect();
                unrolled_adam(init[i], &g, hyper)
            })
            .collect();
        for (t, g) in grads.iter().enumerate() {
            adam_step(&mut params, g, &mut state).map_err(e2s)?;
            let v_hat = state.second_moment().map_err(e2s)?;
            for i in 0..3 {
                let (theta, m, vh) = expected[i][t];
                for (name, got, want) in [
                    ("theta", params[i], theta),
                    ("m", state.first_moment_raw()[i], m),
                    ("v_hat", v_hat[i], vh),
                ] {
                    let err = (got - want).abs();
                    worst = worst.max(err);
                    ensure(err <= 1e-12, || {
                        format!("script {s} step {} coord {i}: {name} {got} vs {want}", t + 1)
                    })?;
                }
            }
        }
    }
    let mut state = AdamState::new(
        1,
        AdamHyper {
            beta2: 0.9,
            ..AdamHyper::default()
        },
    )
    .map_err(e2s)?;
    let mut p = [0.0];
    adam_step(&mut p, &[1.0], &mut state).map_err(e2s)?;
    adam_step(&mut p, &[2.0], &mut state).map_err(e2s)?;
    let v2 = state.second_moment().map_err(e2s)?[0];
    let want = 0.49 / 0.19;
    ensure((v2 - want).abs() <= 1e-12, || format!("(1,2) case: v_hat {v2} vs {want}"))?;
    Ok(format!("3 scripts x 5 steps, max abs err {worst:.2e}; (1,2) case v_hat = {v2:.6}"))
}

/// Criterion 3: precision assembly and its floor.
pub fn l2m_arithmetic() -> Check {
    let mut rng = Rng::new(3);
    let mut worst: f64 = 0.0;
    for case in 0..500 {
        let n = 1 + rng.index(40);
        let lambda = 10f64.powf(rng.uniform_in(-4.0, 2.0));
        let eps = if case % 5 == 0 { 0.0 } else { 10f64.powf(rng.uniform_in(-12.0, -2.0)) };
        let theta = ParamVector::new((0..n).map(|_| rng.normal()).collect()).map_err(e2s)?;
        let v_hat: Vec<f64> = (0..n)
            .map(|i| match i % 4 {
                0 => 0.0,
                1 => 10f64.powf(rng.uniform_in(-20.0, 6.0)),
                _ => rng.uniform() * rng.normal().abs(),
            })
            .collect();
        let post = build_l2m(&theta, &v_hat, lambda, eps).map_err(e2s)?;
        let floor = 1.0 / lambda + eps;
        for i in 0..n {
            let want = v_hat[i] + 1.0 / lambda + eps;
            let prec = post.precision()[i];
            let err = rel_err(prec, want, 1e-300);
            worst = worst.max(err);
            ensure(err <= 1e-12, || format!("case {case} coord {i}: precision {prec} vs {want}"))?;
            ensure(prec >= floor, || format!("case {case} coord {i}: {prec} below floor {floor}"))?;
            let std = post.gaussian().std()[i];
            let implied = 1.0 / (std * std);
            ensure(rel_err(implied, want, 1e-300) <= 1e-12, || {
                format!("case {case} coord {i}: std {std} implies precision {implied}, want {want}")
            })?;
        }
        ensure(post.gaussian().mean() == &theta, || format!("case {case}: mean is not theta"))?;
    }
    Ok(format!("500 random cases, max rel err {worst:.2e}, floor holds"))
}

/// Criterion 4: moments of 1e5 posterior draws.
pub fn sampling_moments() -> Check {
    let mean = vec![0.0, 1.5, -3.0, 100.0, 0.25];
    let std = vec![1.0, 0.01, 2.5, 10.0, 0.0];
    let post =
        DiagGaussian::new(ParamVector::new(mean.clone()).map_err(e2s)?, std.clone()).map_err(e2s)?;
    let n = 100_000;
    let mut rng = Rng::new(11);
    let draws: Vec<Vec<f64>> = (0..n).map(|_| post.sample_with(&mut rng).into_vec()).collect();
    let (m, s) = l2m::predictive::column_stats(&draws, l2m::predictive::Spread::Sample).map_err(e2s)?;
    let mut worst: f64 = 0.0;
    for i in 0..mean.len() {
        if std[i] == 0.0 {
            ensure(m[i] == mean[i] && s[i] == 0.0, || {
                format!("coord {i}: zero-std coordinate gave mean {} std {}", m[i], s[i])
            })?;
            continue;
        }
        let se_mean = std[i] / (n as f64).sqrt();
        let se_std = std[i] / (2.0 * (n as f64 - 1.0)).sqrt();
        let zm = (m[i] - mean[i]).abs() / se_mean;
        let zs = (s[i] - std[i]).abs() / se_std;
        worst = worst.max(zm).max(zs);
        ensure(zm < 5.0 && zs < 5.0, || {
            format!("coord {i}: mean {} ({zm:.2} SE), std {} ({zs:.2} SE)", m[i], s[i])
        })?;
    }
    Ok(format!("{n} draws, 5 coords, worst deviation {worst:.2} SE"))
}

/// Criterion 5: a linear model with weight std σ has predictive std |x|σ.
pub fn linear_pushforward() -> Check {
    let model = MlpConfig::linear(1, 1);
    let sigma = 0.7;
    let post = DiagGaussian::new(ParamVector::new(vec![1.3, -0.4]).map_err(e2s)?, vec![sigma, 0.0])
        .map_err(e2s)?;
    let grid = [-6.0, -2.5, -1.0, 0.0, 0.3, 1.0, 4.0];
    let s = mc_predictive(&post, &model, &grid, 100_000, 5, "linear").map_err(e2s)?;
    let mut worst: f64 = 0.0;
    for (i, &x) in grid.iter().enumerate() {
        let want = x.abs() * sigma;
        if want == 0.0 {
            ensure(s.std[i] == 0.0, || format!("x = 0: std {} not zero", s.std[i]))?;
            continue;
        }
        let err = rel_err(s.std[i], want, 0.0);
        worst = worst.max(err);
        ensure(err < 0.03, || format!("x = {x}: std {} vs {want} (rel {err:.3})", s.std[i]))?;
    }
    Ok(format!("S = 1e5, max rel err {:.2}%", 100.0 * worst))
}

fn small_model() -> MlpConfig {
    MlpConfig {
        hidden_units: 8,
        ..MlpConfig::default()
    }
}

fn quick_train() -> TrainConfig {
    TrainConfig {
        epochs: 200,
        ..TrainConfig::default()
    }
}

/// Criterion 6: the full default pipeline, every method.
pub fn uncertainty_ordering(work: &Path) -> Check {
    let cfg = ExperimentConfig::default();
    execute(Invocation::GenData, &cfg, work, vec![]).map_err(e2s)?;
    let manifest = execute(
        Invocation::Compare {
            inputs: vec![],
            dataset: Some(work.join("dataset.csv")),
            methods: vec![],
        },
        &cfg,
        work,
        vec![],
    )
    .map_err(e2s)?;
    let summary: serde_json::Value =
        serde_json::from_slice(&std::fs::read(work.join("compare.json")).map_err(e2s)?).map_err(e2s)?;
    let methods = summary["methods"].as_array().ok_or("summary has no methods")?;
    ensure(methods.len() == 6, || format!("expected 6 methods, got {}", methods.len()))?;
    let mut parts = Vec::new();
    let mut failed = Vec::new();
    for m in methods {
        let name = m["method"].as_str().unwrap_or("?");
        match m["ratio"].as_f64() {
            Some(r) => {
                parts.push(format!("{name} {r:.2}"));
                if !(r > 2.0) {
                    failed.push(name.to_string());
                }
            }
            None => {
                parts.push(format!("{name} undefined"));
                failed.push(name.to_string());
            }
        }
    }
    let hmc_acc = manifest.diagnostics["hmc"]["acceptance_rate"].as_f64().unwrap_or(f64::NAN);
    let line = format!("ratios: {} (HMC acceptance {hmc_acc:.2})", parts.join(", "));
    if failed.is_empty() {
        Ok(line)
    } else {
        Err(format!("{line}; ratio <= 2 for {}", failed.join(", ")))
    }
}

/// Median `|ΔH|` over `n` single trajectories on the 1-D standard normal.
pub fn median_energy_error(step: f64, steps: usize, n: usize, seed: u64) -> f64 {
    let target = StandardNormal { dim: 1 };
    let mut rng = Rng::new(seed);
    let mut errs: Vec<f64> = (0..n)
        .map(|_| {
            let q = [rng.normal()];
            let p = [rng.normal()];
            let (lp, g) = target.evaluate(&q).unwrap();
            let t = leapfrog(&target, &q, &p, &g, step, steps).unwrap().unwrap();
            (hamiltonian(t.log_density, &t.momentum) - hamiltonian(lp, &p)).abs()
        })
        .collect();
    errs.sort_by(f64::total_cmp);
    errs[n / 2]
}

/// Criterion 7: HMC on the standard normal and the integrator order.
pub fn hmc_correctness() -> Check {
    let cfg = HmcConfig {
        step_size: 0.1,
        leapfrog_steps: 10,
        num_samples: 10_000,
        burn_in: 500,
        seed: 2,
    };
    let run = hmc_sample(&StandardNormal { dim: 1 }, &[0.0], &cfg).map_err(e2s)?;
    let xs: Vec<f64> = run.samples.iter().map(|s| s[0]).collect();
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let acc = run.acceptance_rate();
    ensure(xs.len() == 10_000, || format!("{} samples returned", xs.len()))?;
    ensure(mean.abs() < 0.05, || format!("mean {mean:.4}"))?;
    ensure((0.9..=1.1).contains(&var), || format!("variance {var:.4}"))?;
    ensure(acc > 0.5 && acc <= 1.0, || format!("acceptance {acc:.3}"))?;
    let coarse = median_energy_error(0.1, 10, 20_000, 9);
    let fine = median_energy_error(0.05, 20, 20_000, 9);
    let ratio = coarse / fine;
    ensure((3.0..=5.0).contains(&ratio), || {
        format!("median |dH| {coarse:.3e} -> {fine:.3e}, ratio {ratio:.2}")
    })?;
    Ok(format!(
        "mean {mean:.4}, variance {var:.4}, acceptance {acc:.3}, |dH| ratio on halving {ratio:.2}"
    ))
}

fn run_cli(bin: &Path, cwd: &Path, args: &[&str], threads: Option<&str>) -> Result<(), String> {
    let mut cmd = Command::new(bin);
    cmd.args(args).current_dir(cwd);
    match threads {
        Some(t) => cmd.env("L2M_THREADS", t),
        None => cmd.env_remove("L2M_THREADS"),
    };
    let out = cmd.output().map_err(e2s)?;
    ensure(out.status.success(), || {
        format!(
            "`l2m {}` failed: {}",
            args.join(" "),
            String::from_utf8_lossy(&out.stderr).trim()
        )
    })
}

fn csv_files(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = std::fs::read_dir(dir)
        .map(|rd| {
            rd.filter_map(|e| e.ok())
                .map(|e| e.file_name().to_string_lossy().into_owned())
                .filter(|n| n.ends_with(".csv"))
                .collect()
        })
        .unwrap_or_default();
    names.sort();
    names
}

/// Criterion 8: every manifest replays to byte-identical CSVs, also under
/// a different thread count.
pub fn determinism(bin: &Path, work: &Path) -> Check {
    let run = |args: &[&str]| run_cli(bin, work, args, None);
    let small = [
        "--epochs", "150", "--hidden-units", "8", "--samples", "40", "--members", "2",
        "--swag-start", "100", "--hmc-samples", "15", "--hmc-burn-in", "5", "--hmc-leapfrog-steps", "5",
        "--grid-points", "25",
    ];
    run(&["gen-data", "--seed", "4", "--out-dir", "data"])?;
    run(&["train", "--dataset", "data/dataset.csv", "--epochs", "150", "--hidden-units", "8", "--out-dir", "map"])?;
    run(&[
        "train", "--dataset", "data/dataset.csv", "--epochs", "150", "--hidden-units", "8",
        "--dropout-rate", "0.1", "--out-dir", "drop",
    ])?;
    for (method, extra) in [
        ("l2m", vec!["--checkpoint", "map/checkpoint.json"]),
        ("mc-dropout", vec!["--checkpoint", "drop/checkpoint.json"]),
        ("ensemble", vec!["--dataset", "data/dataset.csv"]),
        ("swag", vec!["--dataset", "data/dataset.csv"]),
        ("rpf", vec!["--dataset", "data/dataset.csv"]),
        ("hmc", vec!["--dataset", "data/dataset.csv", "--checkpoint", "map/checkpoint.json"]),
    ] {
        let mut args = vec!["uq", method, "--seed", "6", "--out-dir", "uq"];
        args.extend(extra);
        args.extend(small);
        run(&args)?;
    }
    run(&["compare", "--inputs", "uq/l2m.csv", "uq/hmc.csv", "uq/ensemble.csv", "--out-dir", "cmp"])?;
    let mut compared = 0;
    for (dir, manifests) in [
        ("data", vec!["gen-data"]),
        ("map", vec!["train"]),
        ("drop", vec!["train"]),
        ("uq", vec!["l2m", "mc-dropout", "ensemble", "swag", "rpf", "hmc"]),
        ("cmp", vec!["compare"]),
    ] {
        for (k, name) in manifests.iter().enumerate() {
            let replay_dir = format!("replay/{dir}/{name}");
            let manifest = format!("{dir}/{name}.manifest.json");
            let threads = if k % 2 == 0 { "3" } else { "1" };
            run_cli(
                bin,
                work,
                &["replay", "--from-manifest", &manifest, "--out-dir", &replay_dir],
                Some(threads),
            )?;
            let produced: Vec<String> = {
                let m: serde_json::Value = serde_json::from_slice(
                    &std::fs::read(work.join(&manifest)).map_err(e2s)?,
                )
                .map_err(e2s)?;
                m["outputs"]
                    .as_array()
                    .ok_or("manifest lacks outputs")?
                    .iter()
                    .filter_map(|v| v.as_str())
                    .filter(|n| n.ends_with(".csv"))
                    .map(String::from)
                    .collect()
            };
            ensure(!produced.is_empty(), || format!("{manifest} lists no CSV outputs"))?;
            for file in produced {
                let a = std::fs::read(work.join(dir).join(&file)).map_err(e2s)?;
                let b = std::fs::read(work.join(&replay_dir).join(&file)).map_err(e2s)?;
                ensure(a == b, || format!("{dir}/{file} differs after replaying {manifest}"))?;
                compared += 1;
            }
        }
    }
    let all = csv_files(&work.join("uq")).len();
    Ok(format!("10 manifests replayed, {compared} CSVs byte-identical ({all} in uq/), thread counts 1 and 3"))
}

/// Criterion 9: degenerate inputs give exact answers.
pub fn degenerate_inputs() -> Check {
    let grid = l2m::eval_grid(-6.0, 6.0, 50).map_err(e2s)?;
    let model = small_model();
    let data = generate_cubic(12, -4.0, 4.0, 3.0, 8).map_err(e2s)?;

    let params = init_params(&model, 1).map_err(e2s)?;
    let s = mc_dropout_predict(&params, &model, &grid, 64, 3).map_err(e2s)?;
    let map = predict_many(&params, &grid, &model, None).map_err(e2s)?;
    ensure(s.std.iter().all(|&v| v == 0.0), || "p = 0 dropout: nonzero std".into())?;
    ensure(s.mean == map, || "p = 0 dropout: mean differs from the deterministic net".into())?;

    let state = train_ensemble(&data, &model, &quick_train(), 1, 5).map_err(e2s)?;
    let s = ensemble_predict(&state, &grid).map_err(e2s)?;
    ensure(s.std.iter().all(|&v| v == 0.0), || "M = 1 ensemble: nonzero std".into())?;

    let zero = DiagGaussian::new(params.clone(), vec![0.0; params.len()]).map_err(e2s)?;
    let s = mc_predictive(&zero, &model, &grid, 100, 4, "zero").map_err(e2s)?;
    ensure(s.mean == map, || "zero-std posterior: mean differs from MAP predictions".into())?;
    ensure(s.std.iter().all(|&v| v == 0.0), || "zero-std posterior: nonzero std".into())?;

    let mut swag = SwagDiagState::new(params.len());
    for _ in 0..25 {
        swag.collect(&params).map_err(e2s)?;
    }
    ensure(swag.variance().iter().all(|&v| v == 0.0), || "constant SWAG snapshots: nonzero variance".into())?;
    ensure(swag.raw_variance().iter().all(|&v| v == 0.0), || {
        "constant SWAG snapshots: nonzero unclamped variance".into()
    })?;

    let clean = generate_cubic(200, -4.0, 4.0, 0.0, 6).map_err(e2s)?;
    ensure(clean.xs.iter().zip(&clean.ys).all(|(x, y)| *y == x * x * x), || {
        "noise-free data: y != x^3".into()
    })?;
    Ok("dropout p=0, ensemble M=1, zero-std posterior, constant SWAG, noise-free data: all exact".into())
}
