//! Gaussian prior over HR nodal coefficients with mean `A⁻¹b` and
//! covariance `σ² A⁻¹A⁻ᵀ`, evaluated through `−‖Au − b‖²/(2σ²)` so that no
//! inverse of `A` is ever formed.

use crate::error::{Error, Result};
use crate::fem::{self, Field, ForcingParams, Grid, SparseMatrix};

pub const DEFAULT_SIGMA: f64 = 1e-2;

#[derive(Clone, Debug)]
pub struct PriorModel {
    a: SparseMatrix,
    b: Field,
    sigma: f64,
}

impl PriorModel {
    pub fn new(a: SparseMatrix, b: Field, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::Config(format!("prior sigma must be positive, got {sigma}")));
        }
        if a.nrows() != a.ncols() || a.nrows() != b.len() {
            return Err(Error::Shape(format!(
                "prior operator {}x{} with load of length {}",
                a.nrows(),
                a.ncols(),
                b.len()
            )));
        }
        Ok(Self { a, b, sigma })
    }

    pub fn operator(&self) -> &SparseMatrix {
        &self.a
    }

    pub fn load(&self) -> &Field {
        &self.b
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn grid(&self) -> &Grid {
        self.b.grid()
    }

    /// Prior mean `A⁻¹b` by conjugate gradients.
    pub fn mean(&self, tol: f64) -> Result<Field> {
        fem::solve(&self.a, &self.b, tol)
    }

    fn check(&self, u: &Field) -> Result<()> {
        u.check_same_grid(&self.b)
    }

    /// `Au − b` into `out`.
    fn residual_into(&self, u: &[f64], out: &mut [f64]) {
        self.a.mul_vec_into(u, out);
        for (r, b) in out.iter_mut().zip(self.b.data()) {
            *r -= b;
        }
    }

    /// `−‖Au − b‖² / (2σ²)`, normalizing constant dropped.
    pub fn log_prior_unnorm(&self, u: &Field) -> Result<f64> {
        self.check(u)?;
        let mut r = vec![0.0; u.len()];
        self.residual_into(u.data(), &mut r);
        Ok(-0.5 * fem::dot(&r, &r) / (self.sigma * self.sigma))
    }

    /// `−Aᵀ(Au − b)/σ²` written into `out`, using `scratch` for `Au − b`.
    pub fn grad_log_prior_into(&self, u: &[f64], scratch: &mut [f64], out: &mut [f64]) {
        self.residual_into(u, scratch);
        self.a.mul_vec_transpose_into(scratch, out);
        let s = -1.0 / (self.sigma * self.sigma);
        out.iter_mut().for_each(|g| *g *= s);
    }

    /// `∇ log p(u) = −Aᵀ(Au − b)/σ²`.
    pub fn grad_log_prior(&self, u: &Field) -> Result<Field> {
        self.check(u)?;
        let mut scratch = vec![0.0; u.len()];
        let mut out = vec![0.0; u.len()];
        self.grad_log_prior_into(u.data(), &mut scratch, &mut out);
        Ok(Field::from_raw(*u.grid(), out))
    }
}

/// Assembles the HR stiffness and load for `params`; no factorization.
pub fn build_prior(grid_hr: &Grid, params: &ForcingParams, sigma: f64) -> Result<PriorModel> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::Config(format!("prior sigma must be positive, got {sigma}")));
    }
    let a = fem::assemble_stiffness(grid_hr)?;
    let b = fem::assemble_load(grid_hr, params);
    PriorModel::new(a, b, sigma)
}

pub fn grad_log_prior(model: &PriorModel, u: &Field) -> Result<Field> {
    model.grad_log_prior(u)
}

pub fn log_prior_unnorm(model: &PriorModel, u: &Field) -> Result<f64> {
    model.log_prior_unnorm(u)
}
