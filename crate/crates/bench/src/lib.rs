//! Shared fixtures for the criterion benchmarks.

use probsr_core::downnet::{bicubic_downscale, init_params, NetConfig, NetParams};
use probsr_core::fem::{assemble_load, assemble_stiffness};
use probsr_core::prior::build_prior;
use probsr_core::{Field, ForcingParams, Grid, PriorModel, SparseMatrix};

/// Forcing used by every benchmark.
pub fn theta() -> ForcingParams {
    ForcingParams::new(-2.5, -2.5, 1.0, 0.0)
}

/// Constrained stiffness matrix and load vector on an `n×n` grid.
pub fn poisson_system(n: usize) -> (SparseMatrix, Field) {
    let grid = Grid::new(n).expect("n >= 3");
    let a = assemble_stiffness(&grid).expect("valid grid");
    (a, assemble_load(&grid, &theta()))
}

/// Inference problem at HR size `n` (a multiple of 4): prior, network with
/// nonzero output layer, the HR prior mean and its bicubic decimation.
pub struct InferenceFixture {
    pub prior: PriorModel,
    pub net: NetParams,
    pub hr: Field,
    pub lr: Field,
}

pub fn inference_fixture(n: usize) -> InferenceFixture {
    let grid = Grid::new(n).expect("n >= 3");
    let prior = build_prior(&grid, &theta(), 1e-2).expect("valid prior");
    let hr = prior.mean(1e-10).expect("solve converges");
    let lr = bicubic_downscale(&hr).expect("n divisible by 4");
    let mut net = init_params(0, &NetConfig::default());
    // a nonzero residual branch exercises the whole backward pass
    let out = net.layer_offset(2);
    for (k, v) in net.values_mut()[out..].iter_mut().enumerate() {
        *v = 1e-3 * ((k % 7) as f64 - 3.0);
    }
    InferenceFixture { prior, net, hr, lr }
}
