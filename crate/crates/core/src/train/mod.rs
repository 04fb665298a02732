//! Maximum marginal likelihood training of the downscaling network.
//!
//! Each step draws posterior samples `u^h ~ p(u^h | u^l, φ, θ)` per datum and
//! ascends the Monte Carlo estimate of `∇_φ log p(u^l | φ, θ)`, i.e. the mean
//! of `∇_φ log p(u^l | u^h, φ)` over the samples (Fisher's identity).

mod optim;

use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use optim::{decode_optimizer_state, encode_optimizer_state, Optimizer, OptimizerState};

use crate::dataset::Manifest;
use crate::downnet::{init_params, load_checkpoint, loglik_gradients, save_checkpoint, NetConfig, NetParams};
use crate::error::{Error, Result};
use crate::fem::{norm, Field};
use crate::langevin::{init_chain, run_chain_with, LangevinConfig, Posterior, GAMMA_PER_SIGMA2};
use crate::prior::{build_prior, PriorModel, DEFAULT_SIGMA};
use crate::seed::derive_seed;

const TAG_INIT: u64 = 0;
const TAG_SHUFFLE: u64 = 1;
const TAG_CHAIN: u64 = 2;

pub const LOG_FILE: &str = "train_log.csv";
pub const FINAL_CHECKPOINT: &str = "final.psrn";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Posterior samples per datum, M.
    pub samples: usize,
    /// Training chain length K.
    pub langevin_steps: usize,
    /// Chain step size; `None` means `GAMMA_PER_SIGMA2 · σ²`.
    pub gamma: Option<f64>,
    pub optimizer: Optimizer,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    /// Write a checkpoint every this many epochs (0: final only).
    pub checkpoint_every: usize,
    pub sigma: f64,
    pub net: NetConfig,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            learning_rate: 1e-3,
            batch_size: 8,
            samples: 10,
            langevin_steps: 200,
            gamma: None,
            optimizer: Optimizer::Adam,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            checkpoint_every: 0,
            sigma: DEFAULT_SIGMA,
            net: NetConfig::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.epochs == 0 {
            return bad("epoch count must be at least 1".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning rate must be positive, got {}", self.learning_rate));
        }
        if self.batch_size == 0 {
            return bad("batch size must be at least 1".into());
        }
        if self.samples == 0 {
            return bad("samples per datum must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("Adam betas must lie in [0, 1)".into());
        }
        if !(self.adam_eps > 0.0) {
            return bad("Adam stability constant must be positive".into());
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return bad(format!("prior sigma must be positive, got {}", self.sigma));
        }
        self.net.validate()?;
        let chain = self.chain_config(0);
        chain.validate()?;
        if chain.retained() != self.samples {
            return bad(format!(
                "a {}-step chain cannot retain {} samples",
                self.langevin_steps, self.samples
            ));
        }
        Ok(())
    }

    pub fn gamma(&self) -> f64 {
        self.gamma.unwrap_or(GAMMA_PER_SIGMA2 * self.sigma * self.sigma)
    }

    /// Chain schedule retaining exactly M samples: thin = ⌊K/2⌋/M and the
    /// rest of the chain is burn-in (K=200, M=10 gives burn-in 100, thin 10).
    pub fn chain_config(&self, seed: u64) -> LangevinConfig {
        let thin = (self.langevin_steps / 2 / self.samples.max(1)).max(1);
        LangevinConfig {
            gamma: self.gamma(),
            steps: self.langevin_steps,
            burn_in: self.langevin_steps.saturating_sub(self.samples * thin),
            thin,
            seed,
        }
    }
}

/// Source of approximate posterior samples for the gradient estimate.
pub trait PosteriorSampler: Sync {
    fn sample(&self, posterior: &Posterior, init: Field, m: usize, seed: u64) -> Result<Vec<Field>>;
}

/// Short ULA chain retaining `m` evenly thinned positions.
#[derive(Clone, Copy, Debug)]
pub struct LangevinSampler {
    pub steps: usize,
    pub gamma: f64,
}

impl PosteriorSampler for LangevinSampler {
    fn sample(&self, posterior: &Posterior, init: Field, m: usize, seed: u64) -> Result<Vec<Field>> {
        let config = TrainConfig {
            langevin_steps: self.steps,
            gamma: Some(self.gamma),
            samples: m,
            ..TrainConfig::default()
        }
        .chain_config(seed);
        Ok(run_chain_with(posterior, init, &config, true)?.samples)
    }
}

/// One datum of a minibatch.
pub struct BatchItem<'a> {
    pub id: usize,
    pub lr: &'a Field,
    pub prior: &'a PriorModel,
    pub seed: u64,
}

#[derive(Clone, Debug)]
pub struct McGradient {
    /// Batch mean of the per-datum sample-averaged parameter gradient.
    pub grad: Vec<f64>,
    /// Mean of `−½‖u^l − H_φ(u^h)‖²/ε²` over all samples.
    pub mean_neg_resid: f64,
}

/// Monte Carlo gradient of the batch log marginal likelihood. Chains run in
/// parallel; the reduction is in batch order.
pub fn mc_gradient(
    net: &NetParams,
    batch: &[BatchItem],
    sampler: &dyn PosteriorSampler,
    samples: usize,
    epsilon: f64,
) -> Result<McGradient> {
    if batch.is_empty() {
        return Err(Error::Config("minibatch is empty".into()));
    }
    if samples == 0 {
        return Err(Error::Config("samples per datum must be at least 1".into()));
    }
    let per_datum = batch
        .par_iter()
        .map(|item| datum_gradient(net, item, sampler, samples, epsilon).map_err(|e| e.in_sample(item.id)))
        .collect::<Vec<_>>();
    let mut grad = vec![0.0; net.len()];
    let mut value = 0.0;
    for r in per_datum {
        let (g, v) = r?;
        for (acc, x) in grad.iter_mut().zip(&g) {
            *acc += x;
        }
        value += v;
    }
    let m = batch.len() as f64;
    grad.iter_mut().for_each(|g| *g /= m);
    Ok(McGradient {
        grad,
        mean_neg_resid: value / m,
    })
}

fn datum_gradient(
    net: &NetParams,
    item: &BatchItem,
    sampler: &dyn PosteriorSampler,
    samples: usize,
    epsilon: f64,
) -> Result<(Vec<f64>, f64)> {
    let posterior = Posterior::new(item.prior, net, item.lr, epsilon);
    let init = init_chain(item.lr, item.prior.grid())?;
    let draws = sampler.sample(&posterior, init, samples, item.seed)?;
    if draws.is_empty() {
        return Err(Error::Config("sampler returned no samples".into()));
    }
    let mut grad = vec![0.0; net.len()];
    let mut value = 0.0;
    for u in &draws {
        let g = loglik_gradients(net, u, item.lr, epsilon, true)?;
        for (acc, x) in grad.iter_mut().zip(&g.params) {
            *acc += x;
        }
        value += g.value;
    }
    let k = draws.len() as f64;
    grad.iter_mut().for_each(|g| *g /= k);
    Ok((grad, value / k))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mean_neg_resid: f64,
    pub grad_norm: f64,
    pub seconds: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    pub final_checkpoint: Option<PathBuf>,
}

/// Everything needed to continue training after `epoch` completed epochs.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainState {
    pub epoch: usize,
    pub params: NetParams,
    pub optimizer: OptimizerState,
}

impl TrainState {
    pub fn initial(config: &TrainConfig) -> Self {
        let params = init_params(derive_seed(config.seed, &[TAG_INIT]), &config.net);
        let optimizer = OptimizerState::new(params.len());
        Self {
            epoch: 0,
            params,
            optimizer,
        }
    }

    /// Loads `<stem>.psrn` and its `<stem>.opt` optimizer sidecar.
    pub fn load(checkpoint: impl AsRef<Path>) -> Result<Self> {
        let checkpoint = checkpoint.as_ref();
        let params = load_checkpoint(checkpoint)?;
        let opt_path = checkpoint.with_extension("opt");
        let bytes = fs::read(&opt_path).map_err(|e| Error::io(&opt_path, e))?;
        let (epoch, optimizer) = decode_optimizer_state(&bytes, &opt_path)?;
        if optimizer.len() != params.len() {
            return Err(Error::Format {
                path: opt_path,
                reason: format!(
                    "optimizer state holds {} parameters, checkpoint {}",
                    optimizer.len(),
                    params.len()
                ),
            });
        }
        Ok(Self {
            epoch,
            params,
            optimizer,
        })
    }

    /// Writes the checkpoint, optimizer sidecar and a JSON metadata sidecar.
    pub fn save(&self, checkpoint: impl AsRef<Path>, meta: &serde_json::Value) -> Result<()> {
        let checkpoint = checkpoint.as_ref();
        save_checkpoint(&self.params, checkpoint)?;
        let opt_path = checkpoint.with_extension("opt");
        fs::write(&opt_path, encode_optimizer_state(self.epoch, &self.optimizer))
            .map_err(|e| Error::io(&opt_path, e))?;
        let meta_path = checkpoint.with_extension("json");
        let mut meta = meta.clone();
        if let Some(obj) = meta.as_object_mut() {
            obj.insert("epoch".into(), self.epoch.into());
        }
        let text = serde_json::to_string_pretty(&meta)?;
        fs::write(&meta_path, text + "\n").map_err(|e| Error::io(&meta_path, e))
    }
}

pub struct TrainOutcome {
    pub report: TrainReport,
    pub params: NetParams,
}

/// Training driver. Without an output directory nothing is written.
pub struct Trainer<'a> {
    manifest: &'a Manifest,
    config: TrainConfig,
    out_dir: Option<PathBuf>,
    meta: serde_json::Value,
    state: Option<TrainState>,
    sampler: Option<Box<dyn PosteriorSampler + 'a>>,
}

impl<'a> Trainer<'a> {
    pub fn new(manifest: &'a Manifest, config: TrainConfig) -> Self {
        Self {
            manifest,
            config,
            out_dir: None,
            meta: serde_json::Value::Null,
            state: None,
            sampler: None,
        }
    }

    pub fn output_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.out_dir = Some(dir.into());
        self
    }

    /// Provenance recorded next to every checkpoint (the train config is
    /// always included).
    pub fn meta(mut self, meta: serde_json::Value) -> Self {
        self.meta = meta;
        self
    }

    pub fn resume(mut self, state: TrainState) -> Self {
        self.state = Some(state);
        self
    }

    pub fn sampler(mut self, sampler: impl PosteriorSampler + 'a) -> Self {
        self.sampler = Some(Box::new(sampler));
        self
    }

    pub fn run(self) -> Result<TrainOutcome> {
        let config = &self.config;
        config.validate()?;
        let train_ids = self.manifest.train_ids();
        if train_ids.len() < config.batch_size {
            return Err(Error::Config(format!(
                "batch size {} exceeds the {} training samples",
                config.batch_size,
                train_ids.len()
            )));
        }
        let hr_grid = self.manifest.hr_grid()?;
        let lr: Vec<Field> = train_ids
            .iter()
            .map(|&id| self.manifest.load_lr(id))
            .collect::<Result<_>>()?;
        let default_sampler = LangevinSampler {
            steps: config.langevin_steps,
            gamma: config.gamma(),
        };
        let sampler: &dyn PosteriorSampler = match &self.sampler {
            Some(s) => s.as_ref(),
            None => &default_sampler,
        };
        let mut state = self.state.clone().unwrap_or_else(|| TrainState::initial(config));
        if state.params.len() != TrainState::initial(config).params.len() {
            return Err(Error::Config("resumed parameters do not match the configured architecture".into()));
        }
        let meta = serde_json::json!({ "train": config, "run": self.meta });

        let mut log = match &self.out_dir {
            Some(dir) => {
                fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
                Some(open_log(&dir.join(LOG_FILE), state.epoch > 0)?)
            }
            None => None,
        };

        let mut records = Vec::new();
        for epoch in state.epoch + 1..=config.epochs {
            let started = Instant::now();
            let mut order: Vec<usize> = (0..train_ids.len()).collect();
            order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(config.seed, &[TAG_SHUFFLE, epoch as u64])));
            let (mut resid_sum, mut norm_sum, mut steps) = (0.0, 0.0, 0usize);
            for (b, chunk) in order.chunks(config.batch_size).enumerate() {
                let priors = chunk
                    .iter()
                    .map(|&k| {
                        let id = train_ids[k];
                        let params = self.manifest.record(id)?.params();
                        build_prior(&hr_grid, &params, config.sigma).map_err(|e| e.in_sample(id))
                    })
                    .collect::<Result<Vec<_>>>()?;
                let batch: Vec<BatchItem> = chunk
                    .iter()
                    .zip(&priors)
                    .map(|(&k, prior)| {
                        let id = train_ids[k];
                        BatchItem {
                            id,
                            lr: &lr[k],
                            prior,
                            seed: derive_seed(config.seed, &[TAG_CHAIN, epoch as u64, b as u64, id as u64]),
                        }
                    })
                    .collect();
                let g = mc_gradient(&state.params, &batch, sampler, config.samples, config.net.epsilon)?;
                state.optimizer.ascend(config, state.params.values_mut(), &g.grad);
                if !state.params.is_finite() {
                    return Err(Error::NonFiniteParams { epoch, step: b });
                }
                resid_sum += g.mean_neg_resid;
                norm_sum += norm(&g.grad);
                steps += 1;
            }
            state.epoch = epoch;
            let rec = EpochRecord {
                epoch,
                mean_neg_resid: resid_sum / steps as f64,
                grad_norm: norm_sum / steps as f64,
                seconds: started.elapsed().as_secs_f64(),
            };
            if let Some(f) = log.as_mut() {
                let path = self.out_dir.as_ref().unwrap().join(LOG_FILE);
                writeln!(f, "{},{:e},{:e},{:.6}", rec.epoch, rec.mean_neg_resid, rec.grad_norm, rec.seconds)
                    .map_err(|e| Error::io(&path, e))?;
            }
            records.push(rec);
            if let Some(dir) = &self.out_dir {
                if config.checkpoint_every > 0 && epoch % config.checkpoint_every == 0 && epoch < config.epochs {
                    state.save(dir.join(checkpoint_name(epoch)), &meta)?;
                }
            }
        }

        let final_checkpoint = match &self.out_dir {
            Some(dir) => {
                let path = dir.join(FINAL_CHECKPOINT);
                state.save(&path, &meta)?;
                Some(path)
            }
            None => None,
        };
        Ok(TrainOutcome {
            report: TrainReport {
                epochs: records,
                final_checkpoint,
            },
            params: state.params,
        })
    }
}

/// File name of the periodic checkpoint after `epoch`.
pub fn checkpoint_name(epoch: usize) -> String {
    format!("epoch_{epoch:04}.psrn")
}

/// Trains from scratch without writing any files.
pub fn train(manifest: &Manifest, config: &TrainConfig) -> Result<TrainOutcome> {
    Trainer::new(manifest, config.clone()).run()
}

fn open_log(path: &Path, append: bool) -> Result<File> {
    if append && path.exists() {
        return OpenOptions::new().append(true).open(path).map_err(|e| Error::io(path, e));
    }
    let mut f = File::create(path).map_err(|e| Error::io(path, e))?;
    writeln!(f, "epoch,mean_neg_resid,grad_norm,seconds").map_err(|e| Error::io(path, e))?;
    Ok(f)
}

#[cfg(test)]
mod tests;
