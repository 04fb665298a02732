use super::ops;
use super::tensor::Tensor4;
use crate::error::{Error, Result};

#[derive(Debug)]
enum Op {
    Conv {
        input: Tensor4,
        weights: Vec<f64>,
        param_offset: usize,
        out_ch: usize,
    },
    Relu {
        input: Tensor4,
    },
    MaxPool {
        in_shape: [usize; 4],
        argmax: Vec<usize>,
    },
    Bicubic {
        in_h: usize,
        in_w: usize,
    },
}

/// Records a chain of ops so their gradients can be pulled back in reverse.
///
/// Each recorded op consumes the output of the previous one. Parameters
/// live in a caller-owned flat vector; conv ops remember their offset into
/// it, and [`Tape::backward`] returns a gradient of the same length.
#[derive(Debug)]
pub struct Tape {
    ops: Vec<Op>,
    num_params: usize,
    input_shape: Option<[usize; 4]>,
    output_shape: Option<[usize; 4]>,
    param_grads: bool,
    consumed: bool,
}

impl Tape {
    pub fn new(num_params: usize) -> Self {
        Self {
            ops: Vec::new(),
            num_params,
            input_shape: None,
            output_shape: None,
            param_grads: true,
            consumed: false,
        }
    }

    /// Skips parameter gradients in the backward pass; the returned
    /// parameter gradient is then all zeros.
    pub fn without_param_grads(mut self) -> Self {
        self.param_grads = false;
        self
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    fn link(&mut self, input: &Tensor4, output: &Tensor4) -> Result<()> {
        if self.consumed {
            return Err(Error::TapeConsumed);
        }
        match self.output_shape {
            None => self.input_shape = Some(input.shape()),
            Some(prev) if prev != input.shape() => {
                return Err(Error::Shape(format!(
                    "op input {:?} does not continue the recorded chain ending in {prev:?}",
                    input.shape()
                )))
            }
            Some(_) => {}
        }
        self.output_shape = Some(output.shape());
        Ok(())
    }

    /// Conv layer whose weights and bias are `params[offset..]`.
    pub fn conv2d(&mut self, input: &Tensor4, params: &[f64], offset: usize, out_ch: usize) -> Result<Tensor4> {
        let in_ch = input.channels();
        let n_w = out_ch * in_ch * ops::KERNEL * ops::KERNEL;
        let end = offset + n_w + out_ch;
        if end > params.len() || end > self.num_params {
            return Err(Error::Shape(format!(
                "conv parameters {offset}..{end} exceed parameter vector of length {}",
                params.len().min(self.num_params)
            )));
        }
        let weights = &params[offset..offset + n_w];
        let bias = &params[offset + n_w..end];
        let out = ops::conv2d(input, weights, bias, out_ch)?;
        self.link(input, &out)?;
        self.ops.push(Op::Conv {
            input: input.clone(),
            weights: weights.to_vec(),
            param_offset: offset,
            out_ch,
        });
        Ok(out)
    }

    pub fn relu(&mut self, input: &Tensor4) -> Result<Tensor4> {
        let out = ops::relu(input);
        self.link(input, &out)?;
        self.ops.push(Op::Relu { input: input.clone() });
        Ok(out)
    }

    pub fn maxpool2(&mut self, input: &Tensor4) -> Result<Tensor4> {
        let (out, argmax) = ops::maxpool2_with_argmax(input)?;
        self.link(input, &out)?;
        self.ops.push(Op::MaxPool {
            in_shape: input.shape(),
            argmax,
        });
        Ok(out)
    }

    pub fn bicubic_resample(&mut self, input: &Tensor4, out_h: usize, out_w: usize) -> Result<Tensor4> {
        let out = ops::bicubic_resample(input, out_h, out_w)?;
        self.link(input, &out)?;
        self.ops.push(Op::Bicubic {
            in_h: input.height(),
            in_w: input.width(),
        });
        Ok(out)
    }

    /// Pulls `seed` (the gradient with respect to the final output) back
    /// through every recorded op in reverse order. A tape can be consumed once.
    pub fn backward(&mut self, seed: &Tensor4) -> Result<(Tensor4, Vec<f64>)> {
        if self.consumed {
            return Err(Error::TapeConsumed);
        }
        let Some(out_shape) = self.output_shape else {
            return Err(Error::Shape("backward on an empty tape".into()));
        };
        if seed.shape() != out_shape {
            return Err(Error::Shape(format!(
                "seed gradient {:?} does not match tape output {out_shape:?}",
                seed.shape()
            )));
        }
        self.consumed = true;
        let mut grad_params = vec![0.0; self.num_params];
        let mut grad = seed.clone();
        for op in std::mem::take(&mut self.ops).into_iter().rev() {
            grad = match op {
                Op::Conv {
                    input,
                    weights,
                    param_offset,
                    out_ch,
                } => {
                    if self.param_grads {
                        let n_w = weights.len();
                        let (gw, rest) = grad_params[param_offset..].split_at_mut(n_w);
                        ops::conv2d_backward_params(&input, &grad, gw, &mut rest[..out_ch]);
                    }
                    ops::conv2d_backward_input(&grad, &weights, input.channels())
                }
                Op::Relu { input } => ops::relu_backward(&input, &grad),
                Op::MaxPool { in_shape, argmax } => ops::maxpool2_backward(in_shape, &argmax, &grad),
                Op::Bicubic { in_h, in_w } => ops::bicubic_resample_transpose(&grad, in_h, in_w)?,
            };
        }
        debug_assert_eq!(Some(grad.shape()), self.input_shape);
        Ok((grad, grad_params))
    }
}
