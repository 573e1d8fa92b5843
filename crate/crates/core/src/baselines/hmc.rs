//! Plain Hamiltonian Monte Carlo with an identity mass matrix and a
//! leapfrog integrator.

use serde::{Deserialize, Serialize};

use crate::data::RegressionDataset;
use crate::error::{Error, Result};
use crate::model::{loss_and_gradient, MlpConfig};
use crate::params::ParamVector;
use crate::rng::{streams, Rng};
use crate::tape::Tape;

/// Differentiable unnormalized log density.
pub trait LogDensity {
    fn dim(&self) -> usize;

    /// `(log p(θ), ∇ log p(θ))`.
    fn evaluate(&self, theta: &[f64]) -> Result<(f64, Vec<f64>)>;
}

/// Isotropic standard normal in `dim` dimensions.
#[derive(Debug, Clone, Copy)]
pub struct StandardNormal {
    pub dim: usize,
}

impl LogDensity for StandardNormal {
    fn dim(&self) -> usize {
        self.dim
    }

    fn evaluate(&self, theta: &[f64]) -> Result<(f64, Vec<f64>)> {
        let lp = -0.5 * theta.iter().map(|t| t * t).sum::<f64>();
        Ok((lp, theta.iter().map(|t| -t).collect()))
    }
}

/// Network weight posterior under a Gaussian likelihood and Gaussian prior:
/// `log p(θ) = −SSR(θ) / (2 σ_n²) − (λ'/2) ‖θ‖²`.
#[derive(Debug, Clone)]
pub struct NetworkPosterior<'a> {
    pub dataset: &'a RegressionDataset,
    pub model: &'a MlpConfig,
    pub noise_sigma: f64,
    pub prior_precision: f64,
}

impl LogDensity for NetworkPosterior<'_> {
    fn dim(&self) -> usize {
        self.model.num_params()
    }

    fn evaluate(&self, theta: &[f64]) -> Result<(f64, Vec<f64>)> {
        let mut tape = Tape::new();
        let (mse, grad) = loss_and_gradient(
            &mut tape,
            theta,
            &self.dataset.xs,
            &self.dataset.ys,
            self.model,
            None,
        )?;
        let n = self.dataset.len() as f64;
        let like_scale = n / (2.0 * self.noise_sigma * self.noise_sigma);
        let norm2: f64 = theta.iter().map(|t| t * t).sum();
        let lp = -like_scale * mse - 0.5 * self.prior_precision * norm2;
        let grad = grad
            .iter()
            .zip(theta)
            .map(|(g, t)| -like_scale * g - self.prior_precision * t)
            .collect();
        Ok((lp, grad))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HmcConfig {
    pub step_size: f64,
    pub leapfrog_steps: usize,
    pub num_samples: usize,
    pub burn_in: usize,
    pub seed: u64,
}

impl HmcConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_size > 0.0) || !self.step_size.is_finite() {
            return Err(Error::Config(format!("step_size must be > 0, got {}", self.step_size)));
        }
        if self.leapfrog_steps == 0 || self.num_samples == 0 {
            return Err(Error::Config(
                "leapfrog_steps and num_samples must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Chain output and diagnostics.
#[derive(Debug, Clone)]
pub struct HmcRun {
    /// Post-burn-in states.
    pub samples: Vec<ParamVector>,
    pub proposals: usize,
    pub accepted: usize,
    /// Proposals rejected because the energy was not finite.
    pub non_finite: usize,
    /// `H(proposal) − H(current)` per finite proposal.
    pub delta_h: Vec<f64>,
}

impl HmcRun {
    pub fn acceptance_rate(&self) -> f64 {
        if self.proposals == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposals as f64
        }
    }
}

/// `H = −log p(q) + ½‖p‖²`.
pub fn hamiltonian(log_density: f64, momentum: &[f64]) -> f64 {
    -log_density + 0.5 * momentum.iter().map(|p| p * p).sum::<f64>()
}

/// End point of a leapfrog trajectory.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub position: Vec<f64>,
    pub momentum: Vec<f64>,
    pub log_density: f64,
    pub gradient: Vec<f64>,
}

/// Integrates `steps` leapfrog steps of size `step` from `(position,
/// momentum)`, given the gradient at the start. Returns `None` as soon as
/// anything becomes non-finite.
pub fn leapfrog<D: LogDensity + ?Sized>(
    target: &D,
    position: &[f64],
    momentum: &[f64],
    gradient: &[f64],
    step: f64,
    steps: usize,
) -> Result<Option<Trajectory>> {
    let mut q = position.to_vec();
    let mut p = momentum.to_vec();
    let mut grad = gradient.to_vec();
    let mut lp = f64::NAN;
    for i in 0..p.len() {
        p[i] += 0.5 * step * grad[i];
    }
    for s in 0..steps {
        for i in 0..q.len() {
            q[i] += step * p[i];
        }
        if q.iter().any(|v| !v.is_finite()) {
            return Ok(None);
        }
        let (new_lp, new_grad) = target.evaluate(&q)?;
        lp = new_lp;
        grad = new_grad;
        if !lp.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Ok(None);
        }
        let scale = if s + 1 == steps { 0.5 * step } else { step };
        for i in 0..p.len() {
            p[i] += scale * grad[i];
        }
    }
    Ok(Some(Trajectory {
        position: q,
        momentum: p,
        log_density: lp,
        gradient: grad,
    }))
}

/// Runs `burn_in + num_samples` HMC transitions from `init` and returns the
/// post-burn-in states. Non-finite proposals are rejected and counted; the
/// run aborts once more than half of all planned proposals are non-finite.
pub fn hmc_sample<D: LogDensity + ?Sized>(
    target: &D,
    init: &[f64],
    cfg: &HmcConfig,
) -> Result<HmcRun> {
    cfg.validate()?;
    if init.len() != target.dim() {
        return Err(Error::Config(format!(
            "initial state has {} entries, target has dimension {}",
            init.len(),
            target.dim()
        )));
    }
    let (mut lp, mut grad) = target.evaluate(init)?;
    if !lp.is_finite() {
        return Err(Error::Sampler("log density at the initial state is not finite".into()));
    }
    let mut q = init.to_vec();
    let mut rng = Rng::stream(cfg.seed, streams::HMC);
    let total = cfg.burn_in + cfg.num_samples;
    let mut run = HmcRun {
        samples: Vec::with_capacity(cfg.num_samples),
        proposals: 0,
        accepted: 0,
        non_finite: 0,
        delta_h: Vec::with_capacity(total),
    };
    for iter in 0..total {
        let p0: Vec<f64> = (0..q.len()).map(|_| rng.normal()).collect();
        let h0 = hamiltonian(lp, &p0);
        let proposal = leapfrog(target, &q, &p0, &grad, cfg.step_size, cfg.leapfrog_steps)?;
        let u = rng.uniform();
        run.proposals += 1;
        match proposal {
            Some(t) => {
                let h1 = hamiltonian(t.log_density, &t.momentum);
                let delta = h1 - h0;
                if delta.is_finite() {
                    run.delta_h.push(delta);
                    // Accept with probability min(1, exp(−ΔH)).
                    if u < (-delta).exp() {
                        q = t.position;
                        lp = t.log_density;
                        grad = t.gradient;
                        run.accepted += 1;
                    }
                } else {
                    run.non_finite += 1;
                }
            }
            None => run.non_finite += 1,
        }
        if 2 * run.non_finite > total {
            return Err(Error::Sampler(format!(
                "{} of {} proposals non-finite after {} iterations (step_size {}, {} leapfrog steps, {} accepted)",
                run.non_finite,
                total,
                iter + 1,
                cfg.step_size,
                cfg.leapfrog_steps,
                run.accepted
            )));
        }
        if iter >= cfg.burn_in {
            run.samples.push(ParamVector::new(q.clone())?);
        }
    }
    Ok(run)
}
