//! Executes invocations: produces the outputs and the manifest of a run.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde_json::json;

use super::checkpoint::Checkpoint;
use super::config::{ExperimentConfig, Method};
use super::manifest::{Invocation, LabeledInput, RunManifest};
use crate::baselines::{
    ensemble_predict, hmc_sample, mc_dropout_predict, rpf_ensemble, rpf_ensemble_predict,
    swag_collect, swag_posterior, train_ensemble, NetworkPosterior,
};
use crate::data::{generate_from, DatasetMeta, RegressionDataset};
use crate::error::{Error, Result};
use crate::io::{fmt_f64, read_json, write_csv, write_json};
use crate::model::predict_many;
use crate::optim::{train, write_loss_csv};
use crate::posterior::{build_l2m, L2MPosterior, L2M_FORMULA};
use crate::predictive::{
    band_table, mc_predictive, region_stats, PredictiveSummary, RegionStats, Spread,
};
use crate::rng::PRNG_NAME;

/// Reads a dataset CSV and, when present, the `<stem>.meta.json` written
/// next to it by `gen-data`.
pub fn load_dataset(path: &Path) -> Result<RegressionDataset> {
    let mut data = RegressionDataset::read_csv(path)?;
    let meta_path = meta_path(path);
    if meta_path.exists() {
        data.meta = Some(read_json::<DatasetMeta>(&meta_path)?);
    }
    Ok(data)
}

fn meta_path(csv: &Path) -> PathBuf {
    csv.with_extension("meta.json")
}

/// Inputs a method may reuse instead of training them itself.
#[derive(Debug, Clone, Default)]
pub struct Artifacts {
    pub dataset: Option<RegressionDataset>,
    /// Deterministic MAP network, used by `l2m` and as the HMC start.
    pub map: Option<Checkpoint>,
    /// Network trained with dropout, used by `mc-dropout`.
    pub dropout: Option<Checkpoint>,
}

/// Predictive output of one method.
#[derive(Debug, Clone)]
pub struct MethodResult {
    pub summary: PredictiveSummary,
    pub posterior: Option<L2MPosterior>,
    pub diagnostics: serde_json::Value,
}

fn need_dataset(art: &Artifacts, method: Method) -> Result<&RegressionDataset> {
    art.dataset
        .as_ref()
        .ok_or_else(|| Error::Usage(format!("{method} needs a dataset")))
}

fn train_checkpoint(
    data: &RegressionDataset,
    model: &crate::model::MlpConfig,
    cfg: &ExperimentConfig,
) -> Result<Checkpoint> {
    let out = train(data, model, &cfg.train)?;
    Ok(Checkpoint::from_outcome(model, &cfg.train, &out))
}

/// Runs one method on the configured grid. Missing networks are trained
/// from `cfg`; supplied ones are used as they are.
pub fn run_method(method: Method, cfg: &ExperimentConfig, art: &Artifacts) -> Result<MethodResult> {
    let grid = cfg.grid.points()?;
    let samples = cfg.predictive.samples;
    let seed = cfg.predictive.seed;
    let mut result = match method {
        Method::L2m => {
            let ck = match &art.map {
                Some(ck) => ck.clone(),
                None => train_checkpoint(need_dataset(art, method)?, &cfg.model, cfg)?,
            };
            let v_hat = ck.state.second_moment()?;
            let posterior = build_l2m(&ck.params, &v_hat, ck.train.weight_decay, cfg.l2m.eps)?;
            let summary =
                mc_predictive(posterior.gaussian(), &ck.model, &grid, samples, seed, "l2m")?;
            let std = posterior.gaussian().std();
            let diagnostics = json!({
                "weight_decay": ck.train.weight_decay,
                "eps": cfg.l2m.eps,
                "optimizer_steps": ck.state.steps(),
                "param_std_min": std.iter().copied().fold(f64::INFINITY, f64::min),
                "param_std_max": std.iter().copied().fold(0.0, f64::max),
            });
            MethodResult {
                summary,
                posterior: Some(posterior),
                diagnostics,
            }
        }
        Method::McDropout => {
            let ck = match &art.dropout {
                Some(ck) => ck.clone(),
                None => {
                    let model = cfg.model.clone().with_dropout(cfg.mc_dropout.rate);
                    train_checkpoint(need_dataset(art, method)?, &model, cfg)?
                }
            };
            let summary = mc_dropout_predict(&ck.params, &ck.model, &grid, samples, seed)?;
            MethodResult {
                summary,
                posterior: None,
                diagnostics: json!({ "dropout_rate": ck.model.dropout_rate }),
            }
        }
        Method::Ensemble => {
            let data = need_dataset(art, method)?;
            let state = train_ensemble(
                data,
                &cfg.model,
                &cfg.train,
                cfg.ensemble.members,
                cfg.train.seed,
            )?;
            let mut summary = ensemble_predict(&state, &grid)?;
            summary.seed = cfg.train.seed;
            MethodResult {
                summary,
                posterior: None,
                diagnostics: json!({ "members": cfg.ensemble.members }),
            }
        }
        Method::Swag => {
            let data = need_dataset(art, method)?;
            let (state, _) = swag_collect(data, &cfg.model, &cfg.train, cfg.swag)?;
            let posterior = swag_posterior(&state)?;
            let summary = mc_predictive(&posterior, &cfg.model, &grid, samples, seed, "swag")?;
            MethodResult {
                summary,
                posterior: None,
                diagnostics: json!({ "snapshots": state.snapshots() }),
            }
        }
        Method::Rpf => {
            let data = need_dataset(art, method)?;
            let pairs = rpf_ensemble(
                data,
                &cfg.model,
                &cfg.train,
                cfg.rpf.beta,
                cfg.rpf.members,
                cfg.train.seed,
                cfg.rpf.bootstrap,
            )?;
            MethodResult {
                summary: rpf_ensemble_predict(&pairs, &grid)?,
                posterior: None,
                diagnostics: json!({
                    "members": cfg.rpf.members,
                    "beta": cfg.rpf.beta,
                    "bootstrap": cfg.rpf.bootstrap,
                }),
            }
        }
        Method::Hmc => {
            let data = need_dataset(art, method)?;
            let (model, init) = match &art.map {
                Some(ck) => (ck.model.clone(), ck.params.clone()),
                None => (cfg.model.clone(), train_checkpoint(data, &cfg.model, cfg)?.params),
            };
            let target = NetworkPosterior {
                dataset: data,
                model: &model,
                noise_sigma: cfg.hmc.noise_sigma,
                prior_precision: cfg.hmc.prior_precision,
            };
            let run = hmc_sample(&target, &init, &cfg.hmc.chain(seed))?;
            let rows = run
                .samples
                .par_iter()
                .map(|theta| predict_many(theta, &grid, &model, None))
                .collect::<Result<Vec<_>>>()?;
            let summary =
                PredictiveSummary::from_predictions(grid.clone(), &rows, Spread::Sample, "hmc", seed)?;
            let mut abs_dh: Vec<f64> = run.delta_h.iter().map(|d| d.abs()).collect();
            abs_dh.sort_by(f64::total_cmp);
            let median_dh = abs_dh.get(abs_dh.len() / 2).copied();
            MethodResult {
                summary,
                posterior: None,
                diagnostics: json!({
                    "acceptance_rate": run.acceptance_rate(),
                    "proposals": run.proposals,
                    "non_finite": run.non_finite,
                    "median_abs_delta_h": median_dh,
                }),
            }
        }
    };
    if let Some(sigma) = cfg.predictive.add_noise_sigma {
        result.summary = result.summary.with_observation_noise(sigma);
    }
    Ok(result)
}

/// Writes `<method>.csv` and `<method>_bands.csv`; returns the file names.
fn write_method_outputs(
    dir: &Path,
    label: &str,
    summary: &PredictiveSummary,
    cfg: &ExperimentConfig,
) -> Result<Vec<String>> {
    let csv = format!("{label}.csv");
    let bands = format!("{label}_bands.csv");
    summary.write_csv(&dir.join(&csv))?;
    band_table(summary, &cfg.predictive.band_ks)?.write_csv(&dir.join(&bands))?;
    Ok(vec![csv, bands])
}

struct Produced {
    /// The config with settings fixed by input files filled in.
    config: ExperimentConfig,
    outputs: Vec<String>,
    dataset: Option<DatasetMeta>,
    method: Option<String>,
    formula: Option<String>,
    diagnostics: serde_json::Value,
}

/// Per-method region statistics as written to the compare summary.
pub fn region_json(label: &str, stats: &RegionStats) -> serde_json::Value {
    json!({
        "method": label,
        "inner_mean_std": stats.inner_mean_std,
        "outer_mean_std": stats.outer_mean_std,
        "ratio": match stats.ratio {
            Some(r) => json!(r),
            None => json!("undefined"),
        },
    })
}

fn gen_data(cfg: &ExperimentConfig, dir: &Path) -> Result<Produced> {
    let data = generate_from(&cfg.data)?;
    data.write_csv(&dir.join("dataset.csv"))?;
    write_json(&meta_path(&dir.join("dataset.csv")), &cfg.data)?;
    Ok(Produced {
        config: cfg.clone(),
        outputs: vec!["dataset.csv".into(), "dataset.meta.json".into()],
        dataset: Some(cfg.data.clone()),
        method: None,
        formula: None,
        diagnostics: json!({}),
    })
}

fn train_cmd(cfg: &ExperimentConfig, dir: &Path, dataset: &Path) -> Result<Produced> {
    let data = load_dataset(dataset)?;
    let mut cfg = cfg.clone();
    if let Some(meta) = &data.meta {
        cfg.data = meta.clone();
    }
    let out = train(&data, &cfg.model, &cfg.train)?;
    Checkpoint::from_outcome(&cfg.model, &cfg.train, &out).save(&dir.join("checkpoint.json"))?;
    write_loss_csv(&dir.join("loss.csv"), &out.losses)?;
    Ok(Produced {
        config: cfg,
        outputs: vec!["checkpoint.json".into(), "checkpoint.csv".into(), "loss.csv".into()],
        dataset: data.meta,
        method: None,
        formula: None,
        diagnostics: json!({
            "initial_loss": out.losses.first(),
            "final_loss": out.losses.last(),
            "num_params": out.params.len(),
        }),
    })
}

fn uq_cmd(
    cfg: &ExperimentConfig,
    dir: &Path,
    method: Method,
    dataset: Option<&Path>,
    checkpoint: Option<&Path>,
) -> Result<Produced> {
    let needs_ck = matches!(method, Method::L2m | Method::McDropout);
    if needs_ck && checkpoint.is_none() {
        return Err(Error::Usage(format!("uq {method} requires --checkpoint")));
    }
    if !needs_ck && dataset.is_none() {
        return Err(Error::Usage(format!("uq {method} requires --dataset")));
    }
    let mut cfg = cfg.clone();
    let mut art = Artifacts {
        dataset: dataset.map(load_dataset).transpose()?,
        ..Artifacts::default()
    };
    if let Some(meta) = art.dataset.as_ref().and_then(|d| d.meta.as_ref()) {
        cfg.data = meta.clone();
    }
    if let Some(path) = checkpoint {
        let ck = Checkpoint::load(path)?;
        if method == Method::McDropout {
            cfg.mc_dropout.rate = ck.model.dropout_rate;
            cfg.model = ck.model.clone().with_dropout(0.0);
            cfg.train = ck.train.clone();
            art.dropout = Some(ck);
        } else {
            cfg.model = ck.model.clone();
            cfg.train = ck.train.clone();
            art.map = Some(ck);
        }
    }
    let cfg = &cfg;
    let result = run_method(method, cfg, &art)?;
    let mut outputs = write_method_outputs(dir, method.label(), &result.summary, cfg)?;
    if let Some(post) = &result.posterior {
        post.save(&dir.join("l2m_posterior.json"), &cfg.seeds())?;
        outputs.push("l2m_posterior.json".into());
        outputs.push("l2m_posterior.csv".into());
    }
    Ok(Produced {
        config: cfg.clone(),
        outputs,
        dataset: art.dataset.and_then(|d| d.meta),
        method: Some(method.label().into()),
        formula: (method == Method::L2m).then(|| L2M_FORMULA.to_string()),
        diagnostics: result.diagnostics,
    })
}

fn compare_cmd(
    cfg: &ExperimentConfig,
    dir: &Path,
    inputs: &[LabeledInput],
    dataset: Option<&Path>,
    methods: &[Method],
) -> Result<Produced> {
    let mut cfg = cfg.clone();
    let mut outputs = Vec::new();
    let mut dataset_meta = None;
    let mut diagnostics = serde_json::Map::new();
    let summaries: Vec<(String, PredictiveSummary)> = if !inputs.is_empty() {
        if dataset.is_some() || !methods.is_empty() {
            return Err(Error::Usage(
                "compare takes either --inputs or --dataset/--methods, not both".into(),
            ));
        }
        inputs
            .iter()
            .map(|i| Ok((i.label.clone(), PredictiveSummary::read_csv(&i.path, &i.label)?)))
            .collect::<Result<_>>()?
    } else {
        let path = dataset.ok_or_else(|| {
            Error::Usage("compare needs --inputs or a --dataset to run methods on".into())
        })?;
        let methods: Vec<Method> = if methods.is_empty() {
            Method::ALL.to_vec()
        } else {
            methods.to_vec()
        };
        let data = load_dataset(path)?;
        dataset_meta = data.meta.clone();
        if let Some(meta) = &dataset_meta {
            cfg.data = meta.clone();
        }
        let cfg = &cfg;
        let needs_map = methods.iter().any(|m| matches!(m, Method::L2m | Method::Hmc));
        let map = needs_map
            .then(|| train_checkpoint(&data, &cfg.model, cfg))
            .transpose()?;
        let art = Artifacts {
            dataset: Some(data),
            map,
            dropout: None,
        };
        let results = methods
            .par_iter()
            .map(|&m| run_method(m, cfg, &art).map(|r| (m, r)))
            .collect::<Result<Vec<_>>>()?;
        let mut out = Vec::with_capacity(results.len());
        for (m, r) in results {
            outputs.extend(write_method_outputs(dir, m.label(), &r.summary, cfg)?);
            diagnostics.insert(m.label().into(), r.diagnostics);
            out.push((m.label().to_string(), r.summary));
        }
        out
    };
    if summaries.len() < 2 {
        return Err(Error::Usage(format!(
            "compare needs at least two methods, got {}",
            summaries.len()
        )));
    }
    let mut summaries = summaries;
    let mut seen = std::collections::BTreeSet::new();
    for (label, _) in summaries.iter_mut() {
        let base = label.clone();
        let mut k = 1;
        while !seen.insert(label.clone()) {
            k += 1;
            *label = format!("{base}-{k}");
        }
    }
    let rows = summaries.iter().flat_map(|(label, s)| {
        (0..s.len()).map(move |i| {
            vec![
                label.clone(),
                fmt_f64(s.grid[i]),
                fmt_f64(s.mean[i]),
                fmt_f64(s.std[i]),
            ]
        })
    });
    write_csv(&dir.join("compare.csv"), &["method", "x", "mean", "std"], rows)?;
    let stats = summaries
        .iter()
        .map(|(label, s)| {
            let r = region_stats(s, cfg.compare.inner_radius, cfg.compare.outer_radius)?;
            Ok(region_json(label, &r))
        })
        .collect::<Result<Vec<_>>>()?;
    let summary = json!({
        "inner_radius": cfg.compare.inner_radius,
        "outer_radius": cfg.compare.outer_radius,
        "methods": stats,
    });
    write_json(&dir.join("compare.json"), &summary)?;
    outputs.push("compare.csv".into());
    outputs.push("compare.json".into());
    Ok(Produced {
        config: cfg,
        outputs,
        dataset: dataset_meta,
        method: None,
        formula: None,
        diagnostics: serde_json::Value::Object(diagnostics),
    })
}

/// Runs `invocation` under `cfg`, writing outputs and the manifest into
/// `out_dir`. Returns the manifest.
pub fn execute(
    invocation: Invocation,
    cfg: &ExperimentConfig,
    out_dir: &Path,
    argv: Vec<String>,
) -> Result<RunManifest> {
    cfg.validate()?;
    let invocation = invocation.absolutize()?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let out_dir = std::path::absolute(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let started_at = chrono::Utc::now().to_rfc3339();
    let produced = match &invocation {
        Invocation::GenData => gen_data(cfg, &out_dir)?,
        Invocation::Train { dataset } => train_cmd(cfg, &out_dir, dataset)?,
        Invocation::Uq {
            method,
            dataset,
            checkpoint,
        } => uq_cmd(cfg, &out_dir, *method, dataset.as_deref(), checkpoint.as_deref())?,
        Invocation::Compare {
            inputs,
            dataset,
            methods,
        } => compare_cmd(cfg, &out_dir, inputs, dataset.as_deref(), methods)?,
    };
    let manifest = RunManifest {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        argv,
        out_dir: out_dir.clone(),
        seeds: produced.config.seeds(),
        config: produced.config,
        prng: PRNG_NAME.into(),
        dataset: produced.dataset,
        method: produced.method,
        posterior_formula: produced.formula,
        diagnostics: produced.diagnostics,
        started_at,
        finished_at: chrono::Utc::now().to_rfc3339(),
        outputs: produced.outputs,
        invocation,
    };
    manifest.save(&out_dir.join(manifest.invocation.manifest_name()))?;
    Ok(manifest)
}

/// Re-executes the run recorded in a manifest, optionally into another
/// directory.
pub fn replay(manifest_path: &Path, out_dir: Option<&Path>, argv: Vec<String>) -> Result<RunManifest> {
    let m = RunManifest::load(manifest_path)?;
    let dir = out_dir.map(Path::to_path_buf).unwrap_or(m.out_dir.clone());
    execute(m.invocation, &m.config, &dir, argv)
}
