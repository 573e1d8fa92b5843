//! Cubic toy-regression data and evaluation grids.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{fmt_f64, parse_f64, read_csv, write_csv};
use crate::rng::{streams, Rng};

/// Evaluation grid used by every method unless overridden.
pub const DEFAULT_GRID: GridSpec = GridSpec {
    low: -6.0,
    high: 6.0,
    points: 200,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub low: f64,
    pub high: f64,
    pub points: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        DEFAULT_GRID
    }
}

impl GridSpec {
    pub fn points(&self) -> Result<Vec<f64>> {
        eval_grid(self.low, self.high, self.points)
    }
}

/// Generation parameters; persisted alongside every dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetMeta {
    pub n: usize,
    pub x_low: f64,
    pub x_high: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for DatasetMeta {
    fn default() -> Self {
        Self {
            n: 20,
            x_low: -4.0,
            x_high: 4.0,
            noise_sigma: 3.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionDataset {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    /// `None` for datasets loaded from a CSV without provenance.
    pub meta: Option<DatasetMeta>,
}

impl RegressionDataset {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        if xs.len() != ys.len() {
            return Err(Error::Data(format!(
                "{} inputs vs {} targets",
                xs.len(),
                ys.len()
            )));
        }
        if xs.is_empty() {
            return Err(Error::Data("dataset is empty".into()));
        }
        if xs.iter().chain(&ys).any(|v| !v.is_finite()) {
            return Err(Error::Data("dataset contains non-finite values".into()));
        }
        Ok(Self { xs, ys, meta: None })
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    /// Resample with replacement, `len()` draws.
    pub fn bootstrap(&self, rng: &mut Rng) -> Self {
        let n = self.len();
        let idx: Vec<usize> = (0..n).map(|_| rng.index(n)).collect();
        Self {
            xs: idx.iter().map(|&i| self.xs[i]).collect(),
            ys: idx.iter().map(|&i| self.ys[i]).collect(),
            meta: None,
        }
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let rows = self
            .xs
            .iter()
            .zip(&self.ys)
            .map(|(x, y)| vec![fmt_f64(*x), fmt_f64(*y)]);
        write_csv(path, &["x", "y"], rows)
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let rows = read_csv(path, &["x", "y"])?;
        let mut xs = Vec::with_capacity(rows.len());
        let mut ys = Vec::with_capacity(rows.len());
        for row in &rows {
            xs.push(parse_f64(path, &row[0])?);
            ys.push(parse_f64(path, &row[1])?);
        }
        Self::new(xs, ys).map_err(|e| Error::format(path, e))
    }
}

/// `n` points with `x ~ U[x_low, x_high]` and `y = x³ + N(0, noise_sigma²)`.
pub fn generate_cubic(
    n: usize,
    x_low: f64,
    x_high: f64,
    noise_sigma: f64,
    seed: u64,
) -> Result<RegressionDataset> {
    if n == 0 {
        return Err(Error::Usage("dataset size must be at least 1".into()));
    }
    if !(x_low < x_high) || !x_low.is_finite() || !x_high.is_finite() {
        return Err(Error::Usage(format!("invalid x range [{x_low}, {x_high}]")));
    }
    if !(noise_sigma >= 0.0) || !noise_sigma.is_finite() {
        return Err(Error::Usage(format!("noise sigma must be >= 0, got {noise_sigma}")));
    }
    let mut rng = Rng::stream(seed, streams::DATA);
    let xs: Vec<f64> = (0..n).map(|_| rng.uniform_in(x_low, x_high)).collect();
    let ys: Vec<f64> = xs
        .iter()
        .map(|&x| {
            let clean = x * x * x;
            if noise_sigma == 0.0 {
                clean
            } else {
                clean + noise_sigma * rng.normal()
            }
        })
        .collect();
    Ok(RegressionDataset {
        xs,
        ys,
        meta: Some(DatasetMeta {
            n,
            x_low,
            x_high,
            noise_sigma,
            seed,
        }),
    })
}

pub fn generate_from(meta: &DatasetMeta) -> Result<RegressionDataset> {
    generate_cubic(meta.n, meta.x_low, meta.x_high, meta.noise_sigma, meta.seed)
}

/// Evenly spaced grid including both endpoints.
pub fn eval_grid(low: f64, high: f64, points: usize) -> Result<Vec<f64>> {
    if points < 2 {
        return Err(Error::Usage(format!("grid needs at least 2 points, got {points}")));
    }
    if !(low < high) {
        return Err(Error::Usage(format!("invalid grid range [{low}, {high}]")));
    }
    let step = (high - low) / (points - 1) as f64;
    let mut grid: Vec<f64> = (0..points).map(|i| low + step * i as f64).collect();
    grid[points - 1] = high;
    Ok(grid)
}
