//! Probabilistic super-resolution of PDE solutions: a finite-element prior
//! on the fine grid, a learned downscaling likelihood, Langevin posterior
//! sampling and marginal-likelihood training.

pub mod autodiff;
pub mod dataset;
pub mod downnet;
pub mod error;
pub mod eval;
pub mod fem;
pub mod langevin;
pub mod prior;
pub mod seed;
pub mod train;

pub use dataset::{GenerateConfig, HrPolicy, Manifest, Split};
pub use downnet::{NetConfig, NetParams, DOWNSCALE_FACTOR};
pub use error::{Error, Result};
pub use eval::{EvalConfig, EvalReport};
pub use fem::{Field, ForcingParams, Grid, SparseMatrix};
pub use langevin::{ChainOutput, LangevinConfig};
pub use prior::PriorModel;
pub use train::{Optimizer, TrainConfig, TrainReport};
