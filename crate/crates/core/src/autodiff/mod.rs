//! Small reverse-mode differentiation toolkit for the downscaling network:
//! 3×3 convolution, ReLU, 2×2 max pooling and corner-aligned bicubic
//! resampling, each with an exact vector–Jacobian product.

mod ops;
mod tape;
mod tensor;

pub use ops::{
    bicubic_resample, bicubic_resample_transpose, conv2d, conv2d_backward_input, conv2d_backward_params,
    conv_param_count, cubic_weight, maxpool2, maxpool2_backward, maxpool2_with_argmax, relu, relu_backward,
    Resampler1d, CUBIC_A, KERNEL,
};
pub use tape::Tape;
pub use tensor::Tensor4;
