//! Effective experiment configuration. Every knob of every method lives
//! here so one JSON document regenerates all outputs.

use std::path::Path;

use clap::ValueEnum;
use serde::{Deserialize, Serialize};

use crate::baselines::{HmcConfig, SwagSchedule};
use crate::data::{DatasetMeta, GridSpec};
use crate::error::{Error, Result};
use crate::io::read_json;
use crate::model::MlpConfig;
use crate::optim::TrainConfig;
use crate::posterior::DEFAULT_EPS;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    L2m,
    Ensemble,
    McDropout,
    Swag,
    Rpf,
    Hmc,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Rpf,
        Method::McDropout,
        Method::Ensemble,
        Method::Swag,
        Method::Hmc,
        Method::L2m,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Method::L2m => "l2m",
            Method::Ensemble => "ensemble",
            Method::McDropout => "mc-dropout",
            Method::Swag => "swag",
            Method::Rpf => "rpf",
            Method::Hmc => "hmc",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictiveConfig {
    pub samples: usize,
    pub seed: u64,
    /// Adds observation noise in quadrature to every reported std.
    pub add_noise_sigma: Option<f64>,
    pub band_ks: Vec<f64>,
}

impl Default for PredictiveConfig {
    fn default() -> Self {
        Self {
            samples: 500,
            seed: 0,
            add_noise_sigma: None,
            band_ks: vec![1.0, 2.0, 3.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct L2mConfig {
    pub eps: f64,
}

impl Default for L2mConfig {
    fn default() -> Self {
        Self { eps: DEFAULT_EPS }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleConfig {
    pub members: usize,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self { members: 5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McDropoutConfig {
    /// Used for training and inference when the method trains its own network.
    pub rate: f64,
}

impl Default for McDropoutConfig {
    fn default() -> Self {
        Self { rate: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RpfConfig {
    pub members: usize,
    pub beta: f64,
    pub bootstrap: bool,
}

impl Default for RpfConfig {
    fn default() -> Self {
        Self {
            members: 5,
            beta: 1.0,
            bootstrap: true,
        }
    }
}

/// HMC settings; the chain seed is `predictive.seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HmcSettings {
    pub step_size: f64,
    pub leapfrog_steps: usize,
    pub num_samples: usize,
    pub burn_in: usize,
    /// Likelihood noise σ_n.
    pub noise_sigma: f64,
    /// Prior precision λ' on the weights.
    pub prior_precision: f64,
}

impl Default for HmcSettings {
    fn default() -> Self {
        Self {
            step_size: 0.005,
            leapfrog_steps: 20,
            num_samples: 500,
            burn_in: 200,
            noise_sigma: 3.0,
            prior_precision: 0.1,
        }
    }
}

impl HmcSettings {
    pub fn chain(&self, seed: u64) -> HmcConfig {
        HmcConfig {
            step_size: self.step_size,
            leapfrog_steps: self.leapfrog_steps,
            num_samples: self.num_samples,
            burn_in: self.burn_in,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompareConfig {
    pub inner_radius: f64,
    pub outer_radius: f64,
}

impl Default for CompareConfig {
    fn default() -> Self {
        Self {
            inner_radius: 2.0,
            outer_radius: 4.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: DatasetMeta,
    pub model: MlpConfig,
    pub train: TrainConfig,
    pub grid: GridSpec,
    pub predictive: PredictiveConfig,
    pub l2m: L2mConfig,
    pub ensemble: EnsembleConfig,
    pub mc_dropout: McDropoutConfig,
    pub swag: SwagSchedule,
    pub rpf: RpfConfig,
    pub hmc: HmcSettings,
    pub compare: CompareConfig,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let cfg: Self = read_json(path)?;
        cfg.validate().map_err(|e| Error::format(path, e))?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()?;
        if self.grid.points < 2 || !(self.grid.low < self.grid.high) {
            return Err(Error::Config(format!("invalid grid {:?}", self.grid)));
        }
        if self.predictive.samples < 2 {
            return Err(Error::Config("predictive.samples must be at least 2".into()));
        }
        if self.predictive.band_ks.is_empty() {
            return Err(Error::Config("predictive.band_ks must be nonempty".into()));
        }
        if !(0.0..1.0).contains(&self.mc_dropout.rate) {
            return Err(Error::Config("mc_dropout.rate must lie in [0, 1)".into()));
        }
        if self.ensemble.members == 0 || self.rpf.members == 0 {
            return Err(Error::Config("ensemble sizes must be at least 1".into()));
        }
        self.hmc.chain(0).validate()?;
        Ok(())
    }

    /// Seeds that determine every stochastic output.
    pub fn seeds(&self) -> serde_json::Value {
        serde_json::json!({
            "data": self.data.seed,
            "train": self.train.seed,
            "predictive": self.predictive.seed,
        })
    }
}
