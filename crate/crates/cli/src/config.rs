//! Run settings. Layers, lowest precedence first: built-in defaults, the
//! `PROBSR_SEED` environment variable, the `--config` file (`key = value`
//! lines), then command-line flags.

use std::fs;
use std::path::{Path, PathBuf};

use probsr_core::{ForcingParams, HrPolicy, Optimizer};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::CliError;

pub const SEED_ENV: &str = "PROBSR_SEED";

/// Every setting any subcommand reads. Serialized verbatim into artifacts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: String,
    pub seed: u64,
    pub threads: Option<usize>,
    // corpus
    pub n: usize,
    pub l: usize,
    pub hr: HrPolicy,
    // model
    pub sigma: f64,
    pub epsilon: f64,
    pub channels: usize,
    // training
    pub epochs: usize,
    pub lr: f64,
    pub batch: usize,
    pub samples: usize,
    pub langevin_steps: usize,
    pub gamma: Option<f64>,
    pub optimizer: Optimizer,
    pub checkpoint_every: usize,
    pub resume: Option<PathBuf>,
    // inference
    pub steps: usize,
    pub burnin: usize,
    pub thin: usize,
    pub theta: Option<String>,
    pub save_samples: bool,
    pub fields: bool,
    // bench
    pub resolutions: Vec<usize>,
    pub repeats: usize,
    pub bench_steps: usize,
    // paths
    pub data: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub input: Option<PathBuf>,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            command: String::new(),
            seed: 0,
            threads: None,
            n: 1000,
            l: 40,
            hr: HrPolicy::TestOnly,
            sigma: 1e-2,
            epsilon: 1e-2,
            channels: 16,
            epochs: 30,
            lr: 1e-3,
            batch: 8,
            samples: 10,
            langevin_steps: 200,
            gamma: None,
            optimizer: Optimizer::Adam,
            checkpoint_every: 0,
            resume: None,
            steps: 5000,
            burnin: 2000,
            thin: 10,
            theta: None,
            save_samples: false,
            fields: false,
            resolutions: vec![64, 96, 128, 160, 192],
            repeats: 3,
            bench_steps: 500,
            data: None,
            model: None,
            input: None,
            out: PathBuf::from("out"),
        }
    }
}

/// Overlays the non-null entries of `top` onto `base`.
fn overlay(base: &mut Map<String, Value>, top: Map<String, Value>) {
    for (k, v) in top {
        if !v.is_null() {
            base.insert(k, v);
        }
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

/// Parses a `key = value` config file into a JSON object. Values follow TOML
/// syntax; bare words are taken as strings.
pub fn parse_config_file(text: &str, path: &Path) -> Result<Map<String, Value>, CliError> {
    let mut out = Map::new();
    for (k, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| usage(format!("{}:{}: expected key = value", path.display(), k + 1)))?;
        let key = key.trim().replace('-', "_");
        let value = value.trim();
        let parsed: Value = match toml::from_str::<toml::Table>(&format!("v = {value}")) {
            Ok(mut t) => serde_json::to_value(t.remove("v").unwrap())
                .map_err(|e| usage(format!("{}:{}: {e}", path.display(), k + 1)))?,
            Err(_) => Value::String(value.to_string()),
        };
        out.insert(key, parsed);
    }
    Ok(out)
}

pub fn load_config_file(path: &Path) -> Result<Map<String, Value>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            CliError::Runtime(probsr_core::Error::MissingFile(path.to_path_buf()))
        } else {
            usage(format!("cannot read config file {}: {e}", path.display()))
        }
    })?;
    parse_config_file(&text, path)
}

impl RunConfig {
    /// Merges the layers. `flags` holds only the flags actually given.
    pub fn resolve(
        command: &str,
        env_seed: Option<&str>,
        file: Option<Map<String, Value>>,
        flags: Map<String, Value>,
    ) -> Result<Self, CliError> {
        let Value::Object(mut merged) = serde_json::to_value(RunConfig::default()).expect("defaults serialize") else {
            unreachable!()
        };
        if let Some(s) = env_seed {
            let seed: u64 = s
                .trim()
                .parse()
                .map_err(|_| usage(format!("{SEED_ENV} must be an unsigned integer, got {s:?}")))?;
            merged.insert("seed".into(), seed.into());
        }
        if let Some(file) = file {
            if file.contains_key("command") {
                return Err(usage("config files cannot set `command`"));
            }
            overlay(&mut merged, file);
        }
        overlay(&mut merged, flags);
        merged.insert("command".into(), command.into());
        serde_json::from_value(Value::Object(merged)).map_err(|e| usage(format!("invalid setting: {e}")))
    }

    pub fn to_json(&self) -> Value {
        serde_json::to_value(self).expect("config serializes")
    }

    /// Step size for chains; defaults to `0.01·σ²`.
    pub fn gamma(&self) -> f64 {
        self.gamma
            .unwrap_or(probsr_core::langevin::GAMMA_PER_SIGMA2 * self.sigma * self.sigma)
    }

    pub fn theta(&self) -> Result<Option<ForcingParams>, CliError> {
        let Some(text) = &self.theta else { return Ok(None) };
        let vals: Vec<f64> = text
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| usage(format!("--theta expects four numbers a,b,c,d, got {text:?}")))?;
        match vals[..] {
            [a, b, c, d] if vals.iter().all(|v| v.is_finite()) => Ok(Some(ForcingParams::new(a, b, c, d))),
            _ => Err(usage(format!("--theta expects four finite numbers a,b,c,d, got {text:?}"))),
        }
    }

    /// Checks the settings the current subcommand depends on.
    pub fn validate(&self) -> Result<(), CliError> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(usage(format!("--{name} must be positive, got {v}")))
            }
        };
        let at_least = |name: &str, v: usize, min: usize| {
            if v >= min {
                Ok(())
            } else {
                Err(usage(format!("--{name} must be at least {min}, got {v}")))
            }
        };
        let required = |name: &str, v: &Option<PathBuf>| {
            if v.is_some() {
                Ok(())
            } else {
                Err(usage(format!("--{name} is required")))
            }
        };
        if let Some(t) = self.threads {
            at_least("threads", t, 1)?;
        }
        if let Some(g) = self.gamma {
            positive("gamma", g)?;
        }
        positive("sigma", self.sigma)?;
        positive("epsilon", self.epsilon)?;
        match self.command.as_str() {
            "gen-data" => {
                at_least("n", self.n, 1)?;
                at_least("l", self.l, probsr_core::dataset::MIN_LR_SIZE)?;
            }
            "train" => {
                required("data", &self.data)?;
                at_least("epochs", self.epochs, 1)?;
                positive("lr", self.lr)?;
                at_least("batch", self.batch, 1)?;
                at_least("samples", self.samples, 1)?;
                at_least("channels", self.channels, 1)?;
                if self.langevin_steps < self.samples {
                    return Err(usage(format!(
                        "--langevin-steps ({}) must be at least --samples ({})",
                        self.langevin_steps, self.samples
                    )));
                }
            }
            "superres" | "eval" => {
                if self.command == "superres" {
                    required("input", &self.input)?;
                    if self.theta()?.is_none() {
                        return Err(usage("--theta a,b,c,d is required: the prior needs the forcing parameters"));
                    }
                } else {
                    required("data", &self.data)?;
                }
                required("model", &self.model)?;
                at_least("thin", self.thin, 1)?;
                if self.burnin >= self.steps {
                    return Err(usage(format!(
                        "--burnin ({}) must be smaller than --steps ({})",
                        self.burnin, self.steps
                    )));
                }
                if (self.steps - self.burnin) / self.thin == 0 {
                    return Err(usage("chain settings retain no samples"));
                }
            }
            "bench" => {
                at_least("repeats", self.repeats, 1)?;
                at_least("bench-steps", self.bench_steps, 2)?;
                if self.resolutions.is_empty() {
                    return Err(usage("--resolutions must list at least one size"));
                }
                for &r in &self.resolutions {
                    if r % probsr_core::DOWNSCALE_FACTOR != 0 || r < 12 {
                        return Err(usage(format!("resolution {r} must be a multiple of 4 and at least 12")));
                    }
                }
            }
            _ => {}
        }
        Ok(())
    }
}
