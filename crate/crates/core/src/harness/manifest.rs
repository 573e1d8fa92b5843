//! Run manifests: enough information to regenerate a run's outputs.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, Method};
use crate::data::DatasetMeta;
use crate::error::{Error, Result};
use crate::io::{read_json, write_json};

/// A predictive CSV to merge in `compare`, labeled by method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabeledInput {
    pub label: String,
    pub path: PathBuf,
}

impl LabeledInput {
    /// Parses `label=path`, or a bare path labeled by its file stem.
    pub fn parse(arg: &str) -> Result<Self> {
        let (label, path) = match arg.split_once('=') {
            Some((l, p)) => (l.to_string(), PathBuf::from(p)),
            None => {
                let path = PathBuf::from(arg);
                let stem = path
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_default();
                (stem, path)
            }
        };
        if label.is_empty() || path.as_os_str().is_empty() {
            return Err(Error::Usage(format!("cannot parse input {arg:?}; expected label=path")));
        }
        Ok(Self { label, path })
    }
}

/// What a run was asked to do, with every path made absolute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Invocation {
    GenData,
    Train {
        dataset: PathBuf,
    },
    Uq {
        method: Method,
        dataset: Option<PathBuf>,
        checkpoint: Option<PathBuf>,
    },
    Compare {
        inputs: Vec<LabeledInput>,
        dataset: Option<PathBuf>,
        methods: Vec<Method>,
    },
}

impl Invocation {
    pub fn name(&self) -> &'static str {
        match self {
            Invocation::GenData => "gen-data",
            Invocation::Train { .. } => "train",
            Invocation::Uq { .. } => "uq",
            Invocation::Compare { .. } => "compare",
        }
    }

    /// File name of the manifest this invocation writes.
    pub fn manifest_name(&self) -> String {
        match self {
            Invocation::Uq { method, .. } => format!("{method}.manifest.json"),
            other => format!("{}.manifest.json", other.name()),
        }
    }

    pub(crate) fn absolutize(mut self) -> Result<Self> {
        let abs = |p: &mut PathBuf| -> Result<()> {
            *p = std::path::absolute(&*p).map_err(|e| Error::io(p.clone(), e))?;
            Ok(())
        };
        match &mut self {
            Invocation::GenData => {}
            Invocation::Train { dataset } => abs(dataset)?,
            Invocation::Uq {
                dataset,
                checkpoint,
                ..
            } => {
                if let Some(p) = dataset {
                    abs(p)?;
                }
                if let Some(p) = checkpoint {
                    abs(p)?;
                }
            }
            Invocation::Compare {
                inputs, dataset, ..
            } => {
                for i in inputs {
                    abs(&mut i.path)?;
                }
                if let Some(p) = dataset {
                    abs(p)?;
                }
            }
        }
        Ok(self)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    /// The command line as typed, for reference only.
    pub argv: Vec<String>,
    pub invocation: Invocation,
    pub out_dir: PathBuf,
    pub config: ExperimentConfig,
    pub seeds: serde_json::Value,
    pub prng: String,
    pub dataset: Option<DatasetMeta>,
    pub method: Option<String>,
    pub posterior_formula: Option<String>,
    pub diagnostics: serde_json::Value,
    pub started_at: String,
    pub finished_at: String,
    /// Files written, relative to `out_dir`.
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let m: Self = read_json(path)?;
        m.config.validate().map_err(|e| Error::format(path, e))?;
        Ok(m)
    }
}
