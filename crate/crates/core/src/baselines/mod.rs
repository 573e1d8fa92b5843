//! Comparison methods: deep ensembles, MC dropout, SWAG-diagonal,
//! randomized prior functions and Hamiltonian Monte Carlo.

pub mod dropout;
pub mod ensemble;
pub mod hmc;
pub mod rpf;
pub mod swag;

pub use dropout::mc_dropout_predict;
pub use ensemble::{ensemble_predict, train_ensemble, train_ensemble_with_seeds, EnsembleMember, EnsembleState};
pub use hmc::{hmc_sample, HmcConfig, HmcRun, LogDensity, NetworkPosterior, StandardNormal};
pub use rpf::{rpf_ensemble, rpf_ensemble_predict, rpf_predict, rpf_train, RpfPair};
pub use swag::{swag_collect, swag_posterior, SwagDiagState, SwagSchedule};
