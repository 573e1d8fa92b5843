//! Diagonal Gaussian posteriors over the flat parameter vector, and the
//! L2M construction that builds one from the optimizer's second moment.
//!
//! The L2M precision of parameter `i` is `v̂_i + 1/λ + ε`, where `v̂` is the
//! bias-corrected Adam second moment (a diagonal empirical-Fisher estimate),
//! `λ` is the decoupled weight-decay coefficient and `ε` a damping term.
//! The prior contributes `1/λ`, not `λ`; see the crate README.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{fmt_f64, parse_f64, read_csv, read_json, write_csv, write_json};
use crate::params::ParamVector;
use crate::rng::Rng;

/// Default damping added to the precision.
pub const DEFAULT_EPS: f64 = 1e-8;

/// Human-readable statement of the precision formula, stamped into manifests.
pub const L2M_FORMULA: &str = "precision_i = v_hat_i + 1/weight_decay + eps; std_i = precision_i^(-1/2)";

/// Independent Gaussian over every parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagGaussian {
    mean: ParamVector,
    std: Vec<f64>,
}

impl DiagGaussian {
    /// Requires matching lengths and finite, nonnegative standard deviations.
    /// A zero `std` entry is allowed and pins that coordinate to its mean.
    pub fn new(mean: ParamVector, std: Vec<f64>) -> Result<Self> {
        if mean.len() != std.len() {
            return Err(Error::Usage(format!(
                "mean has {} entries, std has {}",
                mean.len(),
                std.len()
            )));
        }
        if let Some(i) = std.iter().position(|s| !(*s >= 0.0) || !s.is_finite()) {
            return Err(Error::Data(format!("std entry {i} is {}", std[i])));
        }
        Ok(Self { mean, std })
    }

    pub fn mean(&self) -> &ParamVector {
        &self.mean
    }

    pub fn std(&self) -> &[f64] {
        &self.std
    }

    pub fn len(&self) -> usize {
        self.std.len()
    }

    pub fn is_empty(&self) -> bool {
        self.std.is_empty()
    }

    /// `mean + std ⊙ z`, `z` i.i.d. standard normal from `rng`.
    pub fn sample_with(&self, rng: &mut Rng) -> ParamVector {
        let values = self
            .mean
            .iter()
            .zip(&self.std)
            .map(|(m, s)| m + s * rng.normal())
            .collect();
        ParamVector::from_vec_unchecked(values)
    }

    /// Draw from the default stream of `seed`.
    pub fn sample(&self, seed: u64) -> ParamVector {
        self.sample_with(&mut Rng::new(seed))
    }

    /// `1 / std²` per coordinate (infinite where `std` is zero).
    pub fn precision(&self) -> Vec<f64> {
        self.std.iter().map(|s| 1.0 / (s * s)).collect()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let rows = self
            .mean
            .iter()
            .zip(&self.std)
            .enumerate()
            .map(|(i, (m, s))| vec![i.to_string(), fmt_f64(*m), fmt_f64(*s)]);
        write_csv(path, &["index", "mean", "std"], rows)
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let rows = read_csv(path, &["index", "mean", "std"])?;
        let mut mean = Vec::with_capacity(rows.len());
        let mut std = Vec::with_capacity(rows.len());
        for (i, row) in rows.iter().enumerate() {
            if row[0] != i.to_string() {
                return Err(Error::format(path, format!("row {i} has index {}", row[0])));
            }
            mean.push(parse_f64(path, &row[1])?);
            std.push(parse_f64(path, &row[2])?);
        }
        let mean = ParamVector::new(mean).map_err(|e| Error::format(path, e))?;
        Self::new(mean, std).map_err(|e| Error::format(path, e))
    }
}

/// Diagonal Laplace posterior built from Adam's second-moment buffer.
#[derive(Debug, Clone)]
pub struct L2MPosterior {
    gaussian: DiagGaussian,
    // The precision as assembled, before the square root.
    precision: Vec<f64>,
    weight_decay: f64,
    eps: f64,
}

impl PartialEq for L2MPosterior {
    fn eq(&self, other: &Self) -> bool {
        self.gaussian == other.gaussian
            && self.weight_decay == other.weight_decay
            && self.eps == other.eps
    }
}

/// Builds `N(θ_MAP, diag(v̂ + 1/λ + ε)⁻¹)`.
pub fn build_l2m(
    theta_map: &ParamVector,
    second_moment: &[f64],
    weight_decay: f64,
    eps: f64,
) -> Result<L2MPosterior> {
    if !(weight_decay > 0.0) || !weight_decay.is_finite() {
        return Err(Error::Usage(format!(
            "weight decay must be > 0 for the prior term 1/lambda, got {weight_decay}"
        )));
    }
    if !(eps >= 0.0) || !eps.is_finite() {
        return Err(Error::Usage(format!("eps must be >= 0, got {eps}")));
    }
    if second_moment.len() != theta_map.len() {
        return Err(Error::Usage(format!(
            "second moment has {} entries, parameters have {}",
            second_moment.len(),
            theta_map.len()
        )));
    }
    if let Some(i) = second_moment
        .iter()
        .position(|v| !(*v >= 0.0) || !v.is_finite())
    {
        return Err(Error::Data(format!(
            "second moment entry {i} is {}",
            second_moment[i]
        )));
    }
    let floor = 1.0 / weight_decay + eps;
    let precision: Vec<f64> = second_moment.iter().map(|v| v + floor).collect();
    let std = precision.iter().map(|p| (1.0 / p).sqrt()).collect();
    Ok(L2MPosterior {
        gaussian: DiagGaussian::new(theta_map.clone(), std)?,
        precision,
        weight_decay,
        eps,
    })
}

impl L2MPosterior {
    pub fn gaussian(&self) -> &DiagGaussian {
        &self.gaussian
    }

    pub fn weight_decay(&self) -> f64 {
        self.weight_decay
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn sample(&self, seed: u64) -> ParamVector {
        self.gaussian.sample(seed)
    }

    /// Per-parameter precision `1/std²`; every entry is at least `1/λ + ε`.
    pub fn precision(&self) -> &[f64] {
        &self.precision
    }

    /// Writes `<stem>.json` (metadata) and `<stem>.csv` (index,mean,std).
    pub fn save(&self, json_path: &Path, seed_lineage: &serde_json::Value) -> Result<()> {
        let csv_path = json_path.with_extension("csv");
        let doc = PosteriorFile {
            kind: "l2m".into(),
            formula: L2M_FORMULA.into(),
            weight_decay: self.weight_decay,
            eps: self.eps,
            dims: self.gaussian.len(),
            seeds: seed_lineage.clone(),
            csv: file_name(&csv_path),
        };
        self.gaussian.write_csv(&csv_path)?;
        write_json(json_path, &doc)
    }

    pub fn load(json_path: &Path) -> Result<Self> {
        let doc: PosteriorFile = read_json(json_path)?;
        let csv_path = sibling(json_path, &doc.csv);
        let gaussian = DiagGaussian::read_csv(&csv_path)?;
        if gaussian.len() != doc.dims {
            return Err(Error::format(
                json_path,
                format!("dims {} but CSV has {} rows", doc.dims, gaussian.len()),
            ));
        }
        Ok(Self {
            precision: gaussian.precision(),
            gaussian,
            weight_decay: doc.weight_decay,
            eps: doc.eps,
        })
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct PosteriorFile {
    kind: String,
    formula: String,
    weight_decay: f64,
    eps: f64,
    dims: usize,
    seeds: serde_json::Value,
    csv: String,
}

pub(crate) fn file_name(path: &Path) -> String {
    path.file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

pub(crate) fn sibling(anchor: &Path, name: &str) -> PathBuf {
    anchor
        .parent()
        .map(|p| p.join(name))
        .unwrap_or_else(|| PathBuf::from(name))
}
