//! Uncertainty quantification for small regression MLPs.
//!
//! The central piece is [`posterior::build_l2m`]: after training with AdamW,
//! the optimizer's bias-corrected second-moment buffer is reused as a
//! diagonal curvature estimate, giving a Laplace posterior
//! `N(θ_MAP, diag(v̂ + 1/λ + ε)⁻¹)` at no extra cost. [`baselines`] holds the
//! comparison methods, [`predictive`] turns any of them into σ bands on an
//! evaluation grid, and [`harness`] wires everything into the `l2m` CLI.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod data;
pub mod error;
pub mod harness;
pub mod io;
pub mod model;
pub mod optim;
pub mod params;
pub mod posterior;
pub mod predictive;
pub mod rng;
pub mod tape;

pub use data::{eval_grid, generate_cubic, GridSpec, RegressionDataset};
pub use error::{Error, Result};
pub use model::{init_params, predict, DropoutMask, MlpConfig};
pub use optim::{adam_step, train, AdamHyper, AdamState, TrainConfig, TrainOutcome};
pub use params::ParamVector;
pub use posterior::{build_l2m, DiagGaussian, L2MPosterior};
pub use predictive::{band_table, mc_predictive, PredictiveSummary};
pub use tape::{Tape, Var};
