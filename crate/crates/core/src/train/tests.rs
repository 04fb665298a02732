use tempfile::tempdir;

use super::*;
use crate::dataset::{generate, GenerateConfig};
use crate::downnet::{bicubic_downscale, grad_loglik_wrt_params};
use crate::fem::{ForcingParams, Grid};

fn quick(epochs: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        batch_size: 4,
        samples: 2,
        langevin_steps: 20,
        net: NetConfig {
            channels: 2,
            ..NetConfig::default()
        },
        seed: 5,
        ..TrainConfig::default()
    }
}

fn corpus(dir: &Path) -> Manifest {
    generate(dir, &GenerateConfig::new(8, 8, 3)).unwrap()
}

/// Returns the same fields for every datum.
struct Fixed(Vec<Field>);

impl PosteriorSampler for Fixed {
    fn sample(&self, _: &Posterior, _: Field, m: usize, _: u64) -> Result<Vec<Field>> {
        Ok(self.0.iter().take(m).cloned().collect())
    }
}

fn prior_and_lr(seed: u64) -> (PriorModel, Field) {
    let hr = Grid::new(32).unwrap();
    let theta = ForcingParams::new(1.0, 0.5, 1.5, 0.2);
    let prior = build_prior(&hr, &theta, 1e-2).unwrap();
    let lr = bicubic_downscale(&prior.mean(1e-10).unwrap()).unwrap();
    let _ = seed;
    (prior, lr)
}

fn net() -> NetParams {
    init_params(
        9,
        &NetConfig {
            channels: 2,
            ..NetConfig::default()
        },
    )
}

#[test]
fn chain_schedule_retains_m() {
    let c = TrainConfig::default().chain_config(0);
    assert_eq!((c.steps, c.burn_in, c.thin, c.retained()), (200, 100, 10, 10));
    for (k, m) in [(200, 1), (20, 3), (7, 7), (50, 4)] {
        let cfg = TrainConfig {
            langevin_steps: k,
            samples: m,
            ..TrainConfig::default()
        };
        assert_eq!(cfg.chain_config(0).retained(), m, "K={k} M={m}");
    }
    let short = TrainConfig {
        langevin_steps: 3,
        samples: 5,
        ..TrainConfig::default()
    };
    assert!(short.validate().is_err());
}

#[test]
fn config_validation() {
    assert!(quick(0).validate().is_err());
    assert!(TrainConfig { learning_rate: 0.0, ..quick(1) }.validate().is_err());
    assert!(TrainConfig { batch_size: 0, ..quick(1) }.validate().is_err());
    assert!(TrainConfig { samples: 0, ..quick(1) }.validate().is_err());
    assert!(quick(1).validate().is_ok());
}

#[test]
fn zero_residual_gives_zero_gradient() {
    let (prior, _) = prior_and_lr(0);
    let u = prior.mean(1e-10).unwrap();
    let mut params = net();
    // output layer and biases zero: H is exactly bicubic decimation
    let n = params.len();
    let w3 = params.layer_offset(2);
    params.values_mut()[w3..n].iter_mut().for_each(|v| *v = 0.0);
    let lr = bicubic_downscale(&u).unwrap();
    let batch = [BatchItem { id: 0, lr: &lr, prior: &prior, seed: 1 }];
    let g = mc_gradient(&params, &batch, &Fixed(vec![u.clone(), u]), 2, 1e-2).unwrap();
    assert!(g.grad.iter().all(|&x| x == 0.0));
    assert_eq!(g.mean_neg_resid, 0.0);
}

#[test]
fn single_sample_matches_direct_gradient() {
    let (prior, lr) = prior_and_lr(0);
    let params = net();
    let sampler = LangevinSampler { steps: 12, gamma: 1e-6 };
    let batch = [BatchItem { id: 0, lr: &lr, prior: &prior, seed: 77 }];
    let g = mc_gradient(&params, &batch, &sampler, 1, 1e-2).unwrap();

    let posterior = Posterior::new(&prior, &params, &lr, 1e-2);
    let init = init_chain(&lr, prior.grid()).unwrap();
    let drawn = sampler.sample(&posterior, init, 1, 77).unwrap();
    assert_eq!(drawn.len(), 1);
    let direct = grad_loglik_wrt_params(&params, &drawn[0], &lr, 1e-2).unwrap();
    assert_eq!(g.grad, direct);
}

#[test]
fn averages_over_samples() {
    let (prior, lr) = prior_and_lr(0);
    let params = net();
    let u0 = prior.mean(1e-10).unwrap();
    let u1 = Field::from_fn(*u0.grid(), |x, y| 0.1 * x * y);
    let batch = [BatchItem { id: 0, lr: &lr, prior: &prior, seed: 0 }];
    let g = mc_gradient(&params, &batch, &Fixed(vec![u0.clone(), u1.clone()]), 2, 1e-2).unwrap();
    let a = grad_loglik_wrt_params(&params, &u0, &lr, 1e-2).unwrap();
    let b = grad_loglik_wrt_params(&params, &u1, &lr, 1e-2).unwrap();
    for k in 0..a.len() {
        let want = 0.5 * (a[k] + b[k]);
        assert!((g.grad[k] - want).abs() <= 1e-12 * want.abs().max(1.0));
    }
}

#[test]
fn duplicated_data_match_single_datum() {
    let (prior, lr) = prior_and_lr(0);
    let params = net();
    let sampler = LangevinSampler { steps: 20, gamma: 1e-6 };
    let one = [BatchItem { id: 0, lr: &lr, prior: &prior, seed: 3 }];
    let two = [
        BatchItem { id: 0, lr: &lr, prior: &prior, seed: 3 },
        BatchItem { id: 1, lr: &lr, prior: &prior, seed: 3 },
    ];
    let g1 = mc_gradient(&params, &one, &sampler, 2, 1e-2).unwrap();
    let g2 = mc_gradient(&params, &two, &sampler, 2, 1e-2).unwrap();
    assert_eq!(g1.grad, g2.grad);
    assert_eq!(g1.mean_neg_resid, g2.mean_neg_resid);
}

#[test]
fn divergence_names_datum() {
    let (prior, lr) = prior_and_lr(0);
    let params = net();
    let sampler = LangevinSampler { steps: 400, gamma: 10.0 };
    let batch = [BatchItem { id: 42, lr: &lr, prior: &prior, seed: 3 }];
    match mc_gradient(&params, &batch, &sampler, 2, 1e-2) {
        Err(Error::Sample { id: 42, source }) => assert!(matches!(*source, Error::Divergence { .. })),
        other => panic!("expected divergence in sample 42, got {:?}", other.map(|g| g.mean_neg_resid)),
    }
    assert!(matches!(mc_gradient(&params, &[], &sampler, 2, 1e-2), Err(Error::Config(_))));
}

#[test]
fn smoke_run_single_epoch() {
    let dir = tempdir().unwrap();
    let m = corpus(dir.path());
    let out = dir.path().join("run");
    let outcome = Trainer::new(&m, quick(1)).output_dir(&out).run().unwrap();
    assert_eq!(outcome.report.epochs.len(), 1);
    assert_eq!(outcome.report.epochs[0].epoch, 1);
    assert!(outcome.params.is_finite());
    let ckpt = outcome.report.final_checkpoint.unwrap();
    assert_eq!(load_checkpoint(&ckpt).unwrap(), outcome.params);
    let log = fs::read_to_string(out.join(LOG_FILE)).unwrap();
    assert_eq!(log.lines().count(), 2);
    assert!(log.starts_with("epoch,mean_neg_resid,grad_norm,seconds\n1,"));
    let meta: serde_json::Value = serde_json::from_str(&fs::read_to_string(ckpt.with_extension("json")).unwrap()).unwrap();
    assert_eq!(meta["train"]["seed"], 5);
    assert_eq!(meta["epoch"], 1);
}

#[test]
fn training_changes_parameters() {
    let dir = tempdir().unwrap();
    let m = corpus(dir.path());
    let outcome = train(&m, &quick(1)).unwrap();
    assert_ne!(outcome.params, TrainState::initial(&quick(1)).params);
}

#[test]
fn batch_larger_than_corpus_is_rejected() {
    let dir = tempdir().unwrap();
    let m = corpus(dir.path());
    let cfg = TrainConfig { batch_size: 7, ..quick(1) };
    assert!(matches!(train(&m, &cfg), Err(Error::Config(_))));
}

#[test]
fn runs_are_deterministic() {
    let dir = tempdir().unwrap();
    let m = corpus(dir.path());
    let a = train(&m, &quick(2)).unwrap();
    let b = train(&m, &quick(2)).unwrap();
    assert_eq!(a.params, b.params);
    let c = train(&m, &TrainConfig { seed: 6, ..quick(2) }).unwrap();
    assert_ne!(a.params, c.params);
}

#[test]
fn resume_is_bit_exact() {
    let dir = tempdir().unwrap();
    let m = corpus(dir.path());
    let cfg = TrainConfig {
        checkpoint_every: 1,
        ..quick(3)
    };
    let full = Trainer::new(&m, cfg.clone()).output_dir(dir.path().join("full")).run().unwrap();
    let state = TrainState::load(dir.path().join("full").join(checkpoint_name(1))).unwrap();
    assert_eq!(state.epoch, 1);
    let resumed = Trainer::new(&m, cfg).resume(state).output_dir(dir.path().join("resumed")).run().unwrap();
    assert_eq!(resumed.report.epochs.len(), 2);
    assert_eq!(resumed.params, full.params);
    let a = fs::read(dir.path().join("full").join(FINAL_CHECKPOINT)).unwrap();
    let b = fs::read(dir.path().join("resumed").join(FINAL_CHECKPOINT)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn sgd_also_trains() {
    let dir = tempdir().unwrap();
    let m = corpus(dir.path());
    let cfg = TrainConfig {
        optimizer: Optimizer::Sgd,
        learning_rate: 1e-9,
        ..quick(1)
    };
    assert!(train(&m, &cfg).unwrap().params.is_finite());
}

#[test]
fn non_finite_parameters_abort() {
    let dir = tempdir().unwrap();
    let m = corpus(dir.path());
    let cfg = TrainConfig {
        optimizer: Optimizer::Sgd,
        learning_rate: f64::MAX,
        batch_size: 6,
        ..quick(1)
    };
    assert!(matches!(train(&m, &cfg), Err(Error::NonFiniteParams { epoch: 1, .. })));
}
