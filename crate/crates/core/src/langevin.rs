//! Unadjusted Langevin sampling of the HR posterior
//! `p(u^h | u^l, φ, θ) ∝ p(u^l | u^h, φ) p(u^h | θ)`.
//!
//! One step is `u ← u + γ ∇log p(u) + √(2γ) w` with `w ~ N(0, I)`; there is
//! no Metropolis correction.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::downnet::{self, NetParams};
use crate::error::{Error, Result};
use crate::fem::{Field, Grid};
use crate::prior::PriorModel;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LangevinConfig {
    /// Step size γ.
    pub gamma: f64,
    /// Total number of steps K.
    pub steps: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
}

/// Step size as a multiple of σ²: the stiffest prior curvature is
/// `λ_max(AᵀA)/σ² ≈ 28/σ²`, so `0.01·σ²` keeps `γL` well under 2.
pub const GAMMA_PER_SIGMA2: f64 = 1e-2;

impl LangevinConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::Config(format!("step size must be positive, got {}", self.gamma)));
        }
        if self.burn_in >= self.steps {
            return Err(Error::Config(format!(
                "burn-in {} must be smaller than the step count {}",
                self.burn_in, self.steps
            )));
        }
        if self.thin == 0 {
            return Err(Error::Config("thinning interval must be at least 1".into()));
        }
        Ok(())
    }

    /// Defaults for inference chains: K = 5000, burn-in 2000, thin 10.
    pub fn inference(sigma: f64, seed: u64) -> Self {
        Self {
            gamma: GAMMA_PER_SIGMA2 * sigma * sigma,
            steps: 5000,
            burn_in: 2000,
            thin: 10,
            seed,
        }
    }

    /// Defaults for the short chains inside training: K = 200, burn-in 100,
    /// thin 10 (ten retained samples).
    pub fn training(sigma: f64, seed: u64) -> Self {
        Self {
            gamma: GAMMA_PER_SIGMA2 * sigma * sigma,
            steps: 200,
            burn_in: 100,
            thin: 10,
            seed,
        }
    }

    /// Number of positions a chain with this config keeps.
    pub fn retained(&self) -> usize {
        self.steps.saturating_sub(self.burn_in) / self.thin.max(1)
    }

    /// Whether the position after step `k` (1-based) is kept.
    pub fn keeps(&self, k: usize) -> bool {
        k > self.burn_in && (k - self.burn_in).is_multiple_of(self.thin)
    }
}

/// LR observation term of the posterior.
#[derive(Clone, Copy, Debug)]
pub struct Likelihood<'a> {
    pub net: &'a NetParams,
    pub lr: &'a Field,
    pub epsilon: f64,
}

/// Posterior target: the prior, optionally tilted by the LR likelihood.
#[derive(Clone, Copy, Debug)]
pub struct Posterior<'a> {
    pub prior: &'a PriorModel,
    pub likelihood: Option<Likelihood<'a>>,
}

impl<'a> Posterior<'a> {
    pub fn new(prior: &'a PriorModel, net: &'a NetParams, lr: &'a Field, epsilon: f64) -> Self {
        Self {
            prior,
            likelihood: Some(Likelihood { net, lr, epsilon }),
        }
    }

    /// Prior only; the likelihood term is switched off.
    pub fn prior_only(prior: &'a PriorModel) -> Self {
        Self { prior, likelihood: None }
    }

    pub fn grid(&self) -> &Grid {
        self.prior.grid()
    }

    /// `∇ log p(u | u^l)` into `out`; `scratch` must have the HR length.
    pub fn grad_into(&self, u: &Field, scratch: &mut [f64], out: &mut [f64]) -> Result<()> {
        if u.grid() != self.grid() {
            return Err(Error::Shape(format!(
                "chain position on {} nodes per side, prior on {}",
                u.grid().n(),
                self.grid().n()
            )));
        }
        self.prior.grad_log_prior_into(u.data(), scratch, out);
        if let Some(lik) = self.likelihood {
            let g = downnet::loglik_gradients(lik.net, u, lik.lr, lik.epsilon, false)?;
            for (o, v) in out.iter_mut().zip(g.hr.data()) {
                *o += v;
            }
        }
        Ok(())
    }

    pub fn grad(&self, u: &Field) -> Result<Field> {
        let mut scratch = vec![0.0; u.len()];
        let mut out = vec![0.0; u.len()];
        self.grad_into(u, &mut scratch, &mut out)?;
        Ok(Field::from_raw(*u.grid(), out))
    }

    /// Unnormalized log density (prior plus likelihood).
    pub fn log_density(&self, u: &Field) -> Result<f64> {
        let mut v = self.prior.log_prior_unnorm(u)?;
        if let Some(lik) = self.likelihood {
            v += downnet::log_likelihood(lik.net, u, lik.lr, lik.epsilon)?;
        }
        Ok(v)
    }
}

/// `∇_{u^h} log p(u^l | u^h, φ) + ∇_{u^h} log p(u^h | θ)`.
pub fn grad_log_posterior(
    prior: &PriorModel,
    net: &NetParams,
    lr: &Field,
    u: &Field,
    epsilon: f64,
) -> Result<Field> {
    Posterior::new(prior, net, lr, epsilon).grad(u)
}

/// Position, RNG and streaming moments of one chain.
#[derive(Clone, Debug)]
pub struct ChainState {
    position: Field,
    step_count: usize,
    rng: ChaCha8Rng,
    count: usize,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl ChainState {
    pub fn new(init: Field, seed: u64) -> Self {
        let n = init.len();
        Self {
            position: init,
            step_count: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
            count: 0,
            mean: vec![0.0; n],
            m2: vec![0.0; n],
        }
    }

    pub fn position(&self) -> &Field {
        &self.position
    }

    pub fn step_count(&self) -> usize {
        self.step_count
    }

    pub fn sample_count(&self) -> usize {
        self.count
    }

    /// One Euler–Maruyama move along `gradient` with step `gamma`.
    pub fn step(&mut self, gradient: &[f64], gamma: f64) -> Result<()> {
        if !(gamma > 0.0) {
            return Err(Error::Config(format!("step size must be positive, got {gamma}")));
        }
        if gradient.len() != self.position.len() {
            return Err(Error::Shape(format!(
                "gradient of length {} for a chain of length {}",
                gradient.len(),
                self.position.len()
            )));
        }
        let step = self.step_count + 1;
        if gradient.iter().any(|g| !g.is_finite()) {
            return Err(Error::Divergence { step });
        }
        let noise = (2.0 * gamma).sqrt();
        for (u, g) in self.position.data_mut().iter_mut().zip(gradient) {
            let w: f64 = StandardNormal.sample(&mut self.rng);
            *u += gamma * g + noise * w;
        }
        if self.position.data().iter().any(|u| !u.is_finite()) {
            return Err(Error::Divergence { step });
        }
        self.step_count = step;
        Ok(())
    }

    /// Folds the current position into the running mean and variance.
    pub fn record(&mut self) {
        self.count += 1;
        let c = self.count as f64;
        for ((m, s), &x) in self.mean.iter_mut().zip(&mut self.m2).zip(self.position.data()) {
            let delta = x - *m;
            *m += delta / c;
            *s += delta * (x - *m);
        }
    }

    pub fn mean(&self) -> Field {
        Field::from_raw(*self.position.grid(), self.mean.clone())
    }

    /// Per-node standard deviation with divisor equal to the sample count.
    pub fn std(&self) -> Field {
        let c = self.count.max(1) as f64;
        Field::from_raw(
            *self.position.grid(),
            self.m2.iter().map(|s| (s / c).max(0.0).sqrt()).collect(),
        )
    }
}

/// Functional form of [`ChainState::step`].
pub fn step(mut state: ChainState, gradient: &Field, gamma: f64) -> Result<ChainState> {
    state.step(gradient.data(), gamma)?;
    Ok(state)
}

#[derive(Clone, Debug)]
pub struct ChainOutput {
    /// Retained positions (empty when samples were not kept).
    pub samples: Vec<Field>,
    pub mean: Field,
    pub std: Field,
    pub retained: usize,
}

/// Runs a chain keeping every retained position.
pub fn run_chain(posterior: &Posterior, init: Field, config: &LangevinConfig) -> Result<ChainOutput> {
    run_chain_with(posterior, init, config, true)
}

/// Runs `config.steps` Langevin steps from `init`; positions after the
/// burn-in, every `thin`-th step, feed the moment estimates and, when
/// `keep_samples` is set, the returned sample list.
pub fn run_chain_with(
    posterior: &Posterior,
    init: Field,
    config: &LangevinConfig,
    keep_samples: bool,
) -> Result<ChainOutput> {
    config.validate()?;
    if config.retained() == 0 {
        return Err(Error::Config(format!(
            "chain of {} steps with burn-in {} and thin {} retains no samples",
            config.steps, config.burn_in, config.thin
        )));
    }
    let n = init.len();
    let mut state = ChainState::new(init, config.seed);
    let mut scratch = vec![0.0; n];
    let mut grad = vec![0.0; n];
    let mut samples = Vec::new();
    for k in 1..=config.steps {
        posterior.grad_into(&state.position, &mut scratch, &mut grad)?;
        state.step(&grad, config.gamma)?;
        if config.keeps(k) {
            state.record();
            if keep_samples {
                samples.push(state.position.clone());
            }
        }
    }
    Ok(ChainOutput {
        samples,
        mean: state.mean(),
        std: state.std(),
        retained: state.count,
    })
}

/// Warm start: corner-aligned bicubic upscaling of the LR field.
pub fn init_chain(lr: &Field, grid_hr: &Grid) -> Result<Field> {
    downnet::bicubic_to_grid(lr, grid_hr)
}
