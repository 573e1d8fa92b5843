//! Training checkpoints: `<stem>.json` metadata plus `<stem>.csv` holding
//! the parameters and both Adam moment buffers.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{fmt_f64, parse_f64, read_csv, read_json, write_csv, write_json};
use crate::model::MlpConfig;
use crate::optim::{AdamHyper, AdamState, TrainConfig, TrainOutcome};
use crate::params::ParamVector;
use crate::posterior::{file_name, sibling};

const FORMAT: &str = "l2m-checkpoint/1";
const HEADER: [&str; 4] = ["index", "param", "m", "v"];

/// Trained parameters together with the optimizer state that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: MlpConfig,
    pub train: TrainConfig,
    pub params: ParamVector,
    pub state: AdamState,
    /// Loss before the last step, if training ran.
    pub final_loss: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointFile {
    format: String,
    model: MlpConfig,
    train: TrainConfig,
    adam: AdamHyper,
    steps: u64,
    num_params: usize,
    final_loss: Option<String>,
    tensors: String,
}

impl Checkpoint {
    pub fn from_outcome(model: &MlpConfig, train: &TrainConfig, outcome: &TrainOutcome) -> Self {
        Self {
            model: model.clone(),
            train: train.clone(),
            params: outcome.params.clone(),
            state: outcome.state.clone(),
            final_loss: outcome.losses.last().copied(),
        }
    }

    pub fn save(&self, json_path: &Path) -> Result<()> {
        let csv_path = json_path.with_extension("csv");
        let m = self.state.first_moment_raw();
        let v = self.state.second_moment_raw();
        let rows = (0..self.params.len()).map(|i| {
            vec![
                i.to_string(),
                fmt_f64(self.params[i]),
                fmt_f64(m[i]),
                fmt_f64(v[i]),
            ]
        });
        write_csv(&csv_path, &HEADER, rows)?;
        let doc = CheckpointFile {
            format: FORMAT.into(),
            model: self.model.clone(),
            train: self.train.clone(),
            adam: *self.state.hyper(),
            steps: self.state.steps(),
            num_params: self.params.len(),
            final_loss: self.final_loss.map(fmt_f64),
            tensors: file_name(&csv_path),
        };
        write_json(json_path, &doc)
    }

    pub fn load(json_path: &Path) -> Result<Self> {
        let doc: CheckpointFile = read_json(json_path)?;
        if doc.format != FORMAT {
            return Err(Error::format(
                json_path,
                format!("unsupported checkpoint format {:?}", doc.format),
            ));
        }
        doc.model
            .validate()
            .map_err(|e| Error::format(json_path, e))?;
        if doc.model.num_params() != doc.num_params {
            return Err(Error::format(
                json_path,
                format!(
                    "num_params {} does not match the model ({})",
                    doc.num_params,
                    doc.model.num_params()
                ),
            ));
        }
        let csv_path = sibling(json_path, &doc.tensors);
        let records = read_csv(&csv_path, &HEADER)?;
        if records.len() != doc.num_params {
            return Err(Error::format(
                &csv_path,
                format!("{} rows, expected {}", records.len(), doc.num_params),
            ));
        }
        let mut params = Vec::with_capacity(records.len());
        let mut m = Vec::with_capacity(records.len());
        let mut v = Vec::with_capacity(records.len());
        for (i, rec) in records.iter().enumerate() {
            if rec[0] != i.to_string() {
                return Err(Error::format(&csv_path, format!("row {i} has index {}", rec[0])));
            }
            params.push(parse_f64(&csv_path, &rec[1])?);
            m.push(parse_f64(&csv_path, &rec[2])?);
            v.push(parse_f64(&csv_path, &rec[3])?);
        }
        let params = ParamVector::new(params).map_err(|e| Error::format(&csv_path, e))?;
        let state = AdamState::from_parts(m, v, doc.steps, doc.adam)
            .map_err(|e| Error::format(&csv_path, e))?;
        let final_loss = doc
            .final_loss
            .as_deref()
            .map(|s| parse_f64(json_path, s))
            .transpose()?;
        Ok(Self {
            model: doc.model,
            train: doc.train,
            params,
            state,
            final_loss,
        })
    }
}
