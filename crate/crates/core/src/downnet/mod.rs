//! The downscaling map `H_φ`: bicubic decimation of the HR field plus a
//! learned convolutional residual `F_φ`.
//!
//! `F_φ` is conv3×3(1→C) → ReLU → maxpool → conv3×3(C→C) → ReLU → maxpool →
//! conv3×3(C→1) → bicubic resample to the LR lattice (the identity when the
//! pooled size already matches).

mod checkpoint;
mod network;
mod params;

pub use checkpoint::{decode as decode_checkpoint, encode as encode_checkpoint, load_checkpoint, save_checkpoint};
pub use network::{
    bicubic_downscale, bicubic_to_grid, forward, grad_loglik_wrt_hr, grad_loglik_wrt_params, log_likelihood,
    loglik_gradients, LikelihoodGrad,
};
pub use params::{init_params, LayerShape, NetConfig, NetParams, DOWNSCALE_FACTOR};

#[cfg(test)]
mod tests;
