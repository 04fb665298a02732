//! Wall-clock comparison of a direct HR solve against LR solve + ProbSR
//! inference. Dataset I/O is excluded; chain burn-in is included.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::super_resolve;
use crate::downnet::{NetParams, DOWNSCALE_FACTOR};
use crate::error::{Error, Result};
use crate::fem::{assemble_load, assemble_stiffness, solve, ForcingParams, Grid, DEFAULT_TOL};
use crate::langevin::{LangevinConfig, GAMMA_PER_SIGMA2};
use crate::prior::DEFAULT_SIGMA;

pub const METHOD_DIRECT: &str = "fem";
pub const METHOD_PROBSR: &str = "probsr";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub resolution: usize,
    pub method: String,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub resolutions: Vec<usize>,
    pub repeats: usize,
    /// Inference chain length, fixed across resolutions.
    pub chain_steps: usize,
    pub sigma: f64,
    pub epsilon: f64,
    pub theta: ForcingParams,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            resolutions: vec![64, 96, 128, 160, 192],
            repeats: 3,
            chain_steps: 500,
            sigma: DEFAULT_SIGMA,
            epsilon: 1e-2,
            theta: ForcingParams::new(-2.5, -2.5, 1.0, 0.0),
            seed: 0,
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.repeats == 0 {
            return Err(Error::Config("repeats must be at least 1".into()));
        }
        if self.chain_steps < 2 {
            return Err(Error::Config("chain must have at least 2 steps".into()));
        }
        for &r in &self.resolutions {
            if r % DOWNSCALE_FACTOR != 0 || r / DOWNSCALE_FACTOR < 3 {
                return Err(Error::Config(format!(
                    "resolution {r} must be a multiple of {DOWNSCALE_FACTOR} and at least {}",
                    3 * DOWNSCALE_FACTOR
                )));
            }
        }
        Ok(())
    }

    fn chain(&self) -> LangevinConfig {
        LangevinConfig {
            gamma: GAMMA_PER_SIGMA2 * self.sigma * self.sigma,
            steps: self.chain_steps,
            burn_in: self.chain_steps / 2,
            thin: 1,
            seed: self.seed,
        }
    }
}

/// Median; the mean of the two middle values for even lengths.
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let k = v.len() / 2;
    if v.len() % 2 == 1 {
        v[k]
    } else {
        0.5 * (v[k - 1] + v[k])
    }
}

fn time_median(repeats: usize, mut f: impl FnMut() -> Result<()>) -> Result<f64> {
    f()?;
    let mut times = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        let t = Instant::now();
        f()?;
        times.push(t.elapsed().as_secs_f64());
    }
    Ok(median(&times))
}

/// Two rows per resolution: the direct solve at `r×r`, and the LR solve at
/// `(r/4)×(r/4)` followed by prior assembly and inference at `r×r`.
pub fn bench(config: &BenchConfig, net: &NetParams) -> Result<Vec<TimingRow>> {
    config.validate()?;
    let chain = config.chain();
    let mut rows = Vec::new();
    for &r in &config.resolutions {
        let hr = Grid::new(r)?;
        let lr = Grid::new(r / DOWNSCALE_FACTOR)?;
        let direct = time_median(config.repeats, || {
            let a = assemble_stiffness(&hr)?;
            solve(&a, &assemble_load(&hr, &config.theta), DEFAULT_TOL).map(drop)
        })?;
        let probsr = time_median(config.repeats, || {
            let a = assemble_stiffness(&lr)?;
            let u_lr = solve(&a, &assemble_load(&lr, &config.theta), DEFAULT_TOL)?;
            super_resolve(&u_lr, &config.theta, net, &hr, config.sigma, config.epsilon, &chain).map(drop)
        })?;
        rows.push(TimingRow {
            resolution: r,
            method: METHOD_DIRECT.into(),
            seconds: direct,
        });
        rows.push(TimingRow {
            resolution: r,
            method: METHOD_PROBSR.into(),
            seconds: probsr,
        });
    }
    Ok(rows)
}

pub fn timing_csv(rows: &[TimingRow]) -> String {
    let mut out = String::from("resolution,method,seconds\n");
    for r in rows {
        out.push_str(&format!("{},{},{:.6}\n", r.resolution, r.method, r.seconds));
    }
    out
}
