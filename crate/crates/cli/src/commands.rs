//! Subcommand bodies. Each writes its artifacts under `config.out` together
//! with the resolved run configuration.

use std::fs;
use std::path::Path;

use probsr_core::dataset::{self, generate_with_meta, read_field, write_field, GenerateConfig};
use probsr_core::downnet::{init_params, load_checkpoint, NetConfig, DOWNSCALE_FACTOR};
use probsr_core::eval::{self, encode_heatmap, log_field, timing_csv, write_heatmap, BenchConfig, EvalConfig};
use probsr_core::langevin::{init_chain, run_chain_with, LangevinConfig, Posterior};
use probsr_core::prior::build_prior;
use probsr_core::train::{TrainConfig, TrainState, Trainer, LOG_FILE};
use probsr_core::{Error, Grid};
use serde_json::json;

use crate::config::RunConfig;
use crate::CliError;

pub const RUN_CONFIG_FILE: &str = "run_config.json";

pub fn dispatch(config: &RunConfig) -> Result<(), CliError> {
    match config.command.as_str() {
        "gen-data" => gen_data(config),
        "train" => train(config),
        "superres" => superres(config),
        "eval" => evaluate(config),
        "bench" => bench(config),
        other => Err(CliError::Usage(format!("unknown command {other}"))),
    }
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Runtime(Error::Io {
        path: dir.to_path_buf(),
        source: e,
    }))
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(Error::from)? + "\n";
    fs::write(path, text).map_err(|e| {
        CliError::Runtime(Error::Io {
            path: path.to_path_buf(),
            source: e,
        })
    })
}

fn write_run_config(config: &RunConfig) -> Result<(), CliError> {
    write_json(&config.out.join(RUN_CONFIG_FILE), &config.to_json())
}

fn chain(config: &RunConfig) -> LangevinConfig {
    LangevinConfig {
        gamma: config.gamma(),
        steps: config.steps,
        burn_in: config.burnin,
        thin: config.thin,
        seed: config.seed,
    }
}

fn gen_data(config: &RunConfig) -> Result<(), CliError> {
    let gen = GenerateConfig {
        n: config.n,
        l: config.l,
        seed: config.seed,
        hr: config.hr,
    };
    let manifest = generate_with_meta(&config.out, &gen, Some(config.to_json()))?;
    println!("{}", manifest.path().display());
    eprintln!(
        "{} samples ({} train / {} test) at l = {}",
        manifest.records.len(),
        manifest.train_ids().len(),
        manifest.test_ids().len(),
        manifest.l()
    );
    Ok(())
}

fn train(config: &RunConfig) -> Result<(), CliError> {
    let manifest = dataset::load(config.data.as_ref().expect("validated"))?;
    let train_config = TrainConfig {
        epochs: config.epochs,
        learning_rate: config.lr,
        batch_size: config.batch,
        samples: config.samples,
        langevin_steps: config.langevin_steps,
        gamma: config.gamma,
        optimizer: config.optimizer,
        checkpoint_every: config.checkpoint_every,
        sigma: config.sigma,
        net: NetConfig {
            channels: config.channels,
            epsilon: config.epsilon,
            ..NetConfig::default()
        },
        seed: config.seed,
        ..TrainConfig::default()
    };
    create_dir(&config.out)?;
    write_run_config(config)?;
    let mut trainer = Trainer::new(&manifest, train_config)
        .output_dir(&config.out)
        .meta(config.to_json());
    if let Some(path) = &config.resume {
        trainer = trainer.resume(TrainState::load(path)?);
    }
    let outcome = trainer.run()?;
    for e in &outcome.report.epochs {
        eprintln!(
            "epoch {:>4}  mean -|r|^2/2eps^2 {:>12.4e}  |grad| {:>10.3e}  {:.1}s",
            e.epoch, e.mean_neg_resid, e.grad_norm, e.seconds
        );
    }
    eprintln!("log: {}", config.out.join(LOG_FILE).display());
    if let Some(p) = outcome.report.final_checkpoint {
        println!("{}", p.display());
    }
    Ok(())
}

fn superres(config: &RunConfig) -> Result<(), CliError> {
    let lr = read_field(config.input.as_ref().expect("validated"))?;
    let net = load_checkpoint(config.model.as_ref().expect("validated"))?;
    let theta = config.theta()?.expect("validated");
    let hr_grid = Grid::new(lr.grid().n() * DOWNSCALE_FACTOR)?;
    let prior = build_prior(&hr_grid, &theta, config.sigma)?;
    let posterior = Posterior::new(&prior, &net, &lr, config.epsilon);
    let out = run_chain_with(&posterior, init_chain(&lr, &hr_grid)?, &chain(config), config.save_samples)?;

    create_dir(&config.out)?;
    write_field(config.out.join("mean.psrf"), &out.mean)?;
    write_field(config.out.join("std.psrf"), &out.std)?;
    write_heatmap(config.out.join("logstd.ppm"), &log_field(&out.std))?;
    let mean_ppm = config.out.join("mean.ppm");
    fs::write(&mean_ppm, encode_heatmap(&out.mean)).map_err(|e| {
        CliError::Runtime(Error::Io {
            path: mean_ppm.clone(),
            source: e,
        })
    })?;
    if config.save_samples {
        let dir = config.out.join("samples");
        create_dir(&dir)?;
        for (k, s) in out.samples.iter().enumerate() {
            write_field(dir.join(format!("sample_{k:05}.psrf")), s)?;
        }
    }
    write_json(
        &config.out.join("meta.json"),
        &json!({ "config": config.to_json(), "retained": out.retained, "hr_size": hr_grid.n() }),
    )?;
    println!("{}", config.out.join("mean.psrf").display());
    Ok(())
}

fn evaluate(config: &RunConfig) -> Result<(), CliError> {
    let manifest = dataset::load(config.data.as_ref().expect("validated"))?;
    let net = load_checkpoint(config.model.as_ref().expect("validated"))?;
    let eval_config = EvalConfig {
        sigma: config.sigma,
        epsilon: config.epsilon,
        chain: chain(config),
    };
    create_dir(&config.out)?;
    let fields_dir = config.out.join("cases");
    let mut report = eval::evaluate(&manifest, &net, &eval_config, config.fields.then_some(fields_dir.as_path()))?;
    report.config = json!({ "run": config.to_json(), "eval": eval_config });
    let path = config.out.join("report.json");
    report.write_json(&path)?;
    for c in &report.cases {
        eprintln!(
            "case {:>5}  mse bicubic {:.4e}  mse probsr {:.4e}",
            c.id, c.mse_bicubic, c.mse_probsr
        );
    }
    eprintln!(
        "mean mse: bicubic {:.4e}, probsr {:.4e}; mean std near-LR {:.3e} vs far {:.3e}",
        report.mean_mse_bicubic, report.mean_mse_probsr, report.uq.mean_std_near_lr, report.uq.mean_std_far
    );
    println!("{}", path.display());
    Ok(())
}

fn bench(config: &RunConfig) -> Result<(), CliError> {
    let net = match &config.model {
        Some(p) => load_checkpoint(p)?,
        None => init_params(
            config.seed,
            &NetConfig {
                channels: config.channels,
                epsilon: config.epsilon,
                ..NetConfig::default()
            },
        ),
    };
    let defaults = BenchConfig::default();
    let bench_config = BenchConfig {
        resolutions: config.resolutions.clone(),
        repeats: config.repeats,
        chain_steps: config.bench_steps,
        sigma: config.sigma,
        epsilon: config.epsilon,
        theta: config.theta()?.unwrap_or(defaults.theta),
        seed: config.seed,
    };
    let rows = eval::bench(&bench_config, &net)?;
    create_dir(&config.out)?;
    let csv = timing_csv(&rows);
    let csv_path = config.out.join("timing.csv");
    fs::write(&csv_path, &csv).map_err(|e| {
        CliError::Runtime(Error::Io {
            path: csv_path.clone(),
            source: e,
        })
    })?;
    write_json(
        &config.out.join("timing.json"),
        &json!({
            "config": config.to_json(),
            "bench": bench_config,
            "protocol": "median of repeats after one warm-up; excludes file I/O; includes chain burn-in",
            "rows": rows,
        }),
    )?;
    print!("{csv}");
    Ok(())
}
