//! Evaluation against HR ground truth: MSE of ProbSR versus bicubic
//! upscaling, uncertainty summaries and solver timing sweeps.

mod heatmap;
mod timing;

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use heatmap::{colormap, encode_heatmap, log_field, write_heatmap, LOG_FLOOR};
pub use timing::{bench, median, timing_csv, BenchConfig, TimingRow, METHOD_DIRECT, METHOD_PROBSR};

use crate::dataset::{write_field, Manifest};
use crate::downnet::{bicubic_to_grid, NetParams};
use crate::error::{Error, Result};
use crate::fem::{Field, ForcingParams, Grid};
use crate::langevin::{init_chain, run_chain_with, ChainOutput, LangevinConfig, Posterior};
use crate::prior::build_prior;
use crate::seed::derive_seed;

/// Mean of squared nodal differences.
pub fn mse(a: &Field, b: &Field) -> Result<f64> {
    a.check_same_grid(b)?;
    let sq: f64 = a.data().iter().zip(b.data()).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok(sq / a.len() as f64)
}

/// Posterior inference for one LR field: builds the θ-prior on `hr_grid`
/// and runs a Langevin chain from the bicubic warm start.
pub fn super_resolve(
    lr: &Field,
    theta: &ForcingParams,
    net: &NetParams,
    hr_grid: &Grid,
    sigma: f64,
    epsilon: f64,
    chain: &LangevinConfig,
) -> Result<ChainOutput> {
    let prior = build_prior(hr_grid, theta, sigma)?;
    let posterior = Posterior::new(&prior, net, lr, epsilon);
    run_chain_with(&posterior, init_chain(lr, hr_grid)?, chain, false)
}

/// HR node nearest to each LR node (Euclidean, ties to the lowest index).
pub fn near_lr_nodes(hr: &Grid, l: usize) -> Result<Vec<usize>> {
    let lr = Grid::with_bounds(l, hr.lo(), hr.hi())?;
    // the distance is separable on tensor grids, so the 2-D argmin is the
    // pair of 1-D argmins and lowest-index tie-breaking carries over
    let nearest: Vec<usize> = (0..l)
        .map(|k| {
            let t = lr.lo() + k as f64 * lr.h();
            let mut best = (f64::INFINITY, 0);
            for m in 0..hr.n() {
                let d = (hr.lo() + m as f64 * hr.h() - t).abs();
                if d < best.0 {
                    best = (d, m);
                }
            }
            best.1
        })
        .collect();
    let mut nodes: Vec<usize> = nearest
        .iter()
        .flat_map(|&i| nearest.iter().map(move |&j| hr.index(i, j)))
        .collect();
    nodes.sort_unstable();
    nodes.dedup();
    Ok(nodes)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UqSummary {
    pub mean_std_near_lr: f64,
    pub mean_std_far: f64,
}

/// Mean posterior std at the HR nodes nearest to LR nodes and at all others.
pub fn uq_analysis(std: &Field, l: usize) -> Result<UqSummary> {
    if std.data().iter().any(|&s| s < 0.0) {
        return Err(Error::Config("standard deviation field has negative entries".into()));
    }
    let near = near_lr_nodes(std.grid(), l)?;
    if near.len() == std.len() {
        return Err(Error::Config(format!(
            "every HR node is nearest to an LR node (l = {l}, HR n = {})",
            std.grid().n()
        )));
    }
    let mut mask = vec![false; std.len()];
    near.iter().for_each(|&k| mask[k] = true);
    let (mut s_near, mut s_far) = (0.0, 0.0);
    for (s, &m) in std.data().iter().zip(&mask) {
        if m {
            s_near += s;
        } else {
            s_far += s;
        }
    }
    Ok(UqSummary {
        mean_std_near_lr: s_near / near.len() as f64,
        mean_std_far: s_far / (std.len() - near.len()) as f64,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub sigma: f64,
    pub epsilon: f64,
    /// Inference chain; its seed is the base for per-case seeds.
    pub chain: LangevinConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaseReport {
    pub id: usize,
    pub theta: ForcingParams,
    pub mse_bicubic: f64,
    pub mse_probsr: f64,
    pub uq: UqSummary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub cases: Vec<CaseReport>,
    pub mean_mse_bicubic: f64,
    pub mean_mse_probsr: f64,
    /// Case-averaged uncertainty summary.
    pub uq: UqSummary,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub timing: Vec<TimingRow>,
    #[serde(default)]
    pub config: serde_json::Value,
}

impl EvalReport {
    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)? + "\n";
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

/// Chain seed of test case `id`.
pub fn case_seed(base: u64, id: usize) -> u64 {
    derive_seed(base, &[id as u64])
}

/// Scores every test case. With `out_dir`, also writes per-case mean and std
/// fields (PSRF) and a log-std heatmap.
pub fn evaluate(manifest: &Manifest, net: &NetParams, config: &EvalConfig, out_dir: Option<&Path>) -> Result<EvalReport> {
    let ids = manifest.test_ids();
    if ids.is_empty() {
        return Err(Error::Config("the test split is empty".into()));
    }
    let hr_grid = manifest.hr_grid()?;
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let cases = ids
        .par_iter()
        .map(|&id| evaluate_case(manifest, net, config, &hr_grid, id, out_dir).map_err(|e| e.in_sample(id)))
        .collect::<Result<Vec<_>>>()?;
    let k = cases.len() as f64;
    let mean = |f: fn(&CaseReport) -> f64| cases.iter().map(f).sum::<f64>() / k;
    Ok(EvalReport {
        mean_mse_bicubic: mean(|c| c.mse_bicubic),
        mean_mse_probsr: mean(|c| c.mse_probsr),
        uq: UqSummary {
            mean_std_near_lr: mean(|c| c.uq.mean_std_near_lr),
            mean_std_far: mean(|c| c.uq.mean_std_far),
        },
        cases,
        timing: Vec::new(),
        config: serde_json::to_value(config)?,
    })
}

fn evaluate_case(
    manifest: &Manifest,
    net: &NetParams,
    config: &EvalConfig,
    hr_grid: &Grid,
    id: usize,
    out_dir: Option<&Path>,
) -> Result<CaseReport> {
    let theta = manifest.record(id)?.params();
    let lr = manifest.load_lr(id)?;
    let truth = manifest
        .load_hr(id)?
        .ok_or_else(|| Error::Config(format!("test sample {id} has no HR ground truth")))?;
    let bicubic = bicubic_to_grid(&lr, hr_grid)?;
    let chain = LangevinConfig {
        seed: case_seed(config.chain.seed, id),
        ..config.chain
    };
    let out = super_resolve(&lr, &theta, net, hr_grid, config.sigma, config.epsilon, &chain)?;
    if let Some(dir) = out_dir {
        write_field(dir.join(format!("case_{id:05}_mean.psrf")), &out.mean)?;
        write_field(dir.join(format!("case_{id:05}_std.psrf")), &out.std)?;
        write_heatmap(dir.join(format!("case_{id:05}_logstd.ppm")), &log_field(&out.std))?;
    }
    Ok(CaseReport {
        id,
        theta,
        mse_bicubic: mse(&bicubic, &truth)?,
        mse_probsr: mse(&out.mean, &truth)?,
        uq: uq_analysis(&out.std, manifest.l())?,
    })
}
