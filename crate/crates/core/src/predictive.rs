//! Monte Carlo posterior predictive summaries and σ-band tables.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{fmt_f64, parse_f64, read_csv, write_csv};
use crate::model::{predict_many, MlpConfig};
use crate::posterior::DiagGaussian;
use crate::rng::{streams, Rng};

/// Per-grid-point predictive mean and standard deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictiveSummary {
    pub grid: Vec<f64>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub samples_used: usize,
    pub method: String,
    pub seed: u64,
}

/// Divisor used for the spread across samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Spread {
    /// Divide by `n` (ensembles).
    Population,
    /// Divide by `n − 1` (Monte Carlo draws).
    Sample,
}

/// Mean and spread of each column of `rows` (one row per sample, one column
/// per grid point), reduced in row order with Welford's update. A column of
/// identical values yields exactly that value and a spread of exactly zero.
pub fn column_stats(rows: &[Vec<f64>], spread: Spread) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = rows.len();
    let min = match spread {
        Spread::Population => 1,
        Spread::Sample => 2,
    };
    if n < min {
        return Err(Error::Usage(format!(
            "need at least {min} samples for a spread estimate, got {n}"
        )));
    }
    let width = rows[0].len();
    if rows.iter().any(|r| r.len() != width) {
        return Err(Error::Usage("prediction rows differ in length".into()));
    }
    let mut mean = vec![0.0; width];
    let mut m2 = vec![0.0; width];
    for (k, row) in rows.iter().enumerate() {
        let count = (k + 1) as f64;
        for j in 0..width {
            let delta = row[j] - mean[j];
            mean[j] += delta / count;
            m2[j] += delta * (row[j] - mean[j]);
        }
    }
    let divisor = match spread {
        Spread::Population => n as f64,
        Spread::Sample => (n - 1) as f64,
    };
    let std = m2.iter().map(|s| (s.max(0.0) / divisor).sqrt()).collect();
    Ok((mean, std))
}

impl PredictiveSummary {
    pub fn new(
        grid: Vec<f64>,
        mean: Vec<f64>,
        std: Vec<f64>,
        samples_used: usize,
        method: impl Into<String>,
        seed: u64,
    ) -> Result<Self> {
        if grid.len() != mean.len() || grid.len() != std.len() {
            return Err(Error::Usage(format!(
                "summary lengths differ: grid {}, mean {}, std {}",
                grid.len(),
                mean.len(),
                std.len()
            )));
        }
        if let Some(i) = std.iter().position(|s| !(*s >= 0.0)) {
            return Err(Error::Data(format!("negative or NaN std at grid point {i}")));
        }
        Ok(Self {
            grid,
            mean,
            std,
            samples_used,
            method: method.into(),
            seed,
        })
    }

    /// Summarizes sampled predictions (one row per sample) over `grid`.
    pub fn from_predictions(
        grid: Vec<f64>,
        rows: &[Vec<f64>],
        spread: Spread,
        method: impl Into<String>,
        seed: u64,
    ) -> Result<Self> {
        let (mean, std) = column_stats(rows, spread)?;
        Self::new(grid, mean, std, rows.len(), method, seed)
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    /// Adds observation noise in quadrature: `√(std² + σ²)`.
    pub fn with_observation_noise(mut self, sigma: f64) -> Self {
        for s in &mut self.std {
            *s = (*s * *s + sigma * sigma).sqrt();
        }
        self
    }

    /// Writes `x,mean,std` with 17 significant digits.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let rows = (0..self.len())
            .map(|i| vec![fmt_f64(self.grid[i]), fmt_f64(self.mean[i]), fmt_f64(self.std[i])]);
        write_csv(path, &["x", "mean", "std"], rows)
    }

    /// Reads a summary CSV; `method` labels the result.
    pub fn read_csv(path: &Path, method: impl Into<String>) -> Result<Self> {
        let rows = read_csv(path, &["x", "mean", "std"])?;
        let mut cols = (Vec::new(), Vec::new(), Vec::new());
        for row in &rows {
            cols.0.push(parse_f64(path, &row[0])?);
            cols.1.push(parse_f64(path, &row[1])?);
            cols.2.push(parse_f64(path, &row[2])?);
        }
        Self::new(cols.0, cols.1, cols.2, 0, method, 0).map_err(|e| Error::format(path, e))
    }
}

/// Monte Carlo predictive: draw `samples` weight vectors (sample `s` from
/// its own sub-stream of `seed`), evaluate the network on the grid, and
/// report per-point mean and sample std (divisor `S − 1`).
pub fn mc_predictive(
    posterior: &DiagGaussian,
    model: &MlpConfig,
    grid: &[f64],
    samples: usize,
    seed: u64,
    method: &str,
) -> Result<PredictiveSummary> {
    if samples < 2 {
        return Err(Error::Usage(format!(
            "predictive std needs at least 2 samples, got {samples}"
        )));
    }
    if posterior.len() != model.num_params() {
        return Err(Error::Config(format!(
            "posterior over {} parameters, model has {}",
            posterior.len(),
            model.num_params()
        )));
    }
    let rows = (0..samples)
        .into_par_iter()
        .map(|s| {
            let mut rng = Rng::stream(seed, streams::SAMPLE_BASE + s as u64);
            let theta = posterior.sample_with(&mut rng);
            predict_many(&theta, grid, model, None)
        })
        .collect::<Result<Vec<_>>>()?;
    PredictiveSummary::from_predictions(grid.to_vec(), &rows, Spread::Sample, method, seed)
}

/// Rows of `x, mean, (mean − k·std, mean + k·std) for each k`.
#[derive(Debug, Clone, PartialEq)]
pub struct BandTable {
    pub ks: Vec<f64>,
    pub rows: Vec<BandRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BandRow {
    pub x: f64,
    pub mean: f64,
    pub bands: Vec<(f64, f64)>,
}

pub fn band_table(summary: &PredictiveSummary, ks: &[f64]) -> Result<BandTable> {
    if ks.is_empty() {
        return Err(Error::Usage("band multipliers must be nonempty".into()));
    }
    if ks.iter().any(|k| !(*k >= 0.0) || !k.is_finite()) {
        return Err(Error::Usage("band multipliers must be finite and >= 0".into()));
    }
    let rows = (0..summary.len())
        .map(|i| {
            let (m, s) = (summary.mean[i], summary.std[i]);
            BandRow {
                x: summary.grid[i],
                mean: m,
                bands: ks.iter().map(|k| (m - k * s, m + k * s)).collect(),
            }
        })
        .collect();
    Ok(BandTable {
        ks: ks.to_vec(),
        rows,
    })
}

fn k_label(k: f64) -> String {
    if k.fract() == 0.0 && k.abs() < 1e15 {
        format!("{}", k as i64)
    } else {
        format!("{k}")
    }
}

impl BandTable {
    pub fn header(&self) -> Vec<String> {
        let mut header = vec!["x".to_string(), "mean".to_string()];
        for k in &self.ks {
            header.push(format!("lo{}", k_label(*k)));
            header.push(format!("hi{}", k_label(*k)));
        }
        header
    }

    /// Writes the table; for `ks = (1, 2, 3)` the header is
    /// `x,mean,lo1,hi1,lo2,hi2,lo3,hi3`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let header = self.header();
        let header: Vec<&str> = header.iter().map(String::as_str).collect();
        let rows = self.rows.iter().map(|r| {
            let mut row = vec![fmt_f64(r.x), fmt_f64(r.mean)];
            for (lo, hi) in &r.bands {
                row.push(fmt_f64(*lo));
                row.push(fmt_f64(*hi));
            }
            row
        });
        write_csv(path, &header, rows)
    }
}

/// Average predictive std inside the data region and in the extrapolation
/// region of the grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionStats {
    pub inner_mean_std: f64,
    pub outer_mean_std: f64,
    /// `outer / inner`, `None` when the inner average is zero.
    pub ratio: Option<f64>,
}

/// Mean std over `|x| ≤ inner_radius` versus over `|x| ≥ outer_radius`.
pub fn region_stats(
    summary: &PredictiveSummary,
    inner_radius: f64,
    outer_radius: f64,
) -> Result<RegionStats> {
    let average = |keep: &dyn Fn(f64) -> bool, label: &str| -> Result<f64> {
        let picked: Vec<f64> = summary
            .grid
            .iter()
            .zip(&summary.std)
            .filter(|(x, _)| keep(**x))
            .map(|(_, s)| *s)
            .collect();
        if picked.is_empty() {
            return Err(Error::Usage(format!("no grid points in the {label} region")));
        }
        Ok(picked.iter().sum::<f64>() / picked.len() as f64)
    };
    let inner = average(&|x: f64| x.abs() <= inner_radius, "inner")?;
    let outer = average(&|x: f64| x.abs() >= outer_radius, "outer")?;
    let ratio = (inner > 0.0 && outer.is_finite()).then(|| outer / inner);
    Ok(RegionStats {
        inner_mean_std: inner,
        outer_mean_std: outer,
        ratio,
    })
}
