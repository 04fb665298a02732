use super::params::{NetParams, DOWNSCALE_FACTOR};
use crate::autodiff::{bicubic_resample, bicubic_resample_transpose, Tape, Tensor4};
use crate::error::{Error, Result};
use crate::fem::{Field, Grid};

fn lr_grid_for(hr: &Grid) -> Result<Grid> {
    hr.coarsened(DOWNSCALE_FACTOR)
}

/// Residual branch `F_φ` recorded on `tape`.
fn residual_branch(tape: &mut Tape, params: &NetParams, x: &Tensor4, l: usize) -> Result<Tensor4> {
    let p = params.values();
    let c = params.channels();
    let h = tape.conv2d(x, p, params.layer_offset(0), c)?;
    let h = tape.relu(&h)?;
    let h = tape.maxpool2(&h)?;
    let h = tape.conv2d(&h, p, params.layer_offset(1), c)?;
    let h = tape.relu(&h)?;
    let h = tape.maxpool2(&h)?;
    let h = tape.conv2d(&h, p, params.layer_offset(2), 1)?;
    tape.bicubic_resample(&h, l, l)
}

/// Output of one network evaluation with the residual-branch tape retained.
struct Evaluation {
    output: Tensor4,
    tape: Tape,
    hr_n: usize,
    lr_grid: Grid,
}

fn evaluate(params: &NetParams, hr: &Field, param_grads: bool) -> Result<Evaluation> {
    let lr_grid = lr_grid_for(hr.grid())?;
    let l = lr_grid.n();
    let x = Tensor4::from_field(hr);
    let mut tape = Tape::new(params.len());
    if !param_grads {
        tape = tape.without_param_grads();
    }
    let mut output = residual_branch(&mut tape, params, &x, l)?;
    output.add_assign(&bicubic_resample(&x, l, l)?);
    Ok(Evaluation {
        output,
        tape,
        hr_n: hr.grid().n(),
        lr_grid,
    })
}

/// `H_φ(u^h) = bicubic(u^h) + F_φ(u^h)` on the LR lattice.
pub fn forward(params: &NetParams, hr: &Field) -> Result<Field> {
    let eval = evaluate(params, hr, false)?;
    eval.output.into_field(eval.lr_grid)
}

/// Pure bicubic decimation of an HR field to the LR lattice.
pub fn bicubic_downscale(hr: &Field) -> Result<Field> {
    let lr_grid = lr_grid_for(hr.grid())?;
    bicubic_resample(&Tensor4::from_field(hr), lr_grid.n(), lr_grid.n())?.into_field(lr_grid)
}

/// Corner-aligned bicubic interpolation of `field` onto `target`.
pub fn bicubic_to_grid(field: &Field, target: &Grid) -> Result<Field> {
    bicubic_resample(&Tensor4::from_field(field), target.n(), target.n())?.into_field(*target)
}

fn check_lr(lr: &Field, expected: &Grid) -> Result<()> {
    if lr.grid() != expected {
        return Err(Error::Shape(format!(
            "LR field has {} nodes per side, network produces {}",
            lr.grid().n(),
            expected.n()
        )));
    }
    Ok(())
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if !(epsilon > 0.0) {
        return Err(Error::Config(format!("epsilon must be positive, got {epsilon}")));
    }
    Ok(())
}

/// Unnormalized `log N(u^l; H_φ(u^h), ε²I) = −‖u^l − H_φ(u^h)‖² / (2ε²)`.
pub fn log_likelihood(params: &NetParams, hr: &Field, lr: &Field, epsilon: f64) -> Result<f64> {
    check_epsilon(epsilon)?;
    let pred = forward(params, hr)?;
    check_lr(lr, pred.grid())?;
    let sq: f64 = lr.data().iter().zip(pred.data()).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(-sq / (2.0 * epsilon * epsilon))
}

/// Log-likelihood value with its gradients.
#[derive(Clone, Debug)]
pub struct LikelihoodGrad {
    pub value: f64,
    /// `∇_{u^h}`, an HR field.
    pub hr: Field,
    /// `∇_φ`, empty unless requested.
    pub params: Vec<f64>,
}

/// Evaluates the log-likelihood and pulls `(u^l − H_φ(u^h))/ε²` back
/// through the network in a single backward pass.
pub fn loglik_gradients(
    params: &NetParams,
    hr: &Field,
    lr: &Field,
    epsilon: f64,
    want_params: bool,
) -> Result<LikelihoodGrad> {
    check_epsilon(epsilon)?;
    let Evaluation {
        output,
        mut tape,
        hr_n,
        lr_grid,
    } = evaluate(params, hr, want_params)?;
    check_lr(lr, &lr_grid)?;
    let inv_var = 1.0 / (epsilon * epsilon);
    let mut sq = 0.0;
    let seed: Vec<f64> = lr
        .data()
        .iter()
        .zip(output.data())
        .map(|(y, h)| {
            let r = y - h;
            sq += r * r;
            r * inv_var
        })
        .collect();
    let seed = Tensor4::new(output.shape(), seed)?;
    let (mut grad_x, grad_p) = tape.backward(&seed)?;
    grad_x.add_assign(&bicubic_resample_transpose(&seed, hr_n, hr_n)?);
    Ok(LikelihoodGrad {
        value: -0.5 * sq * inv_var,
        hr: grad_x.into_field(*hr.grid())?,
        params: if want_params { grad_p } else { Vec::new() },
    })
}

/// `∇_{u^h} log p(u^l | u^h, φ) = Jᵀ(u^l − H_φ(u^h))/ε²`.
pub fn grad_loglik_wrt_hr(params: &NetParams, hr: &Field, lr: &Field, epsilon: f64) -> Result<Field> {
    Ok(loglik_gradients(params, hr, lr, epsilon, false)?.hr)
}

/// `∇_φ log p(u^l | u^h, φ)`.
pub fn grad_loglik_wrt_params(params: &NetParams, hr: &Field, lr: &Field, epsilon: f64) -> Result<Vec<f64>> {
    Ok(loglik_gradients(params, hr, lr, epsilon, true)?.params)
}
