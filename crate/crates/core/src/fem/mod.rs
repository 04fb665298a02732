//! Q1 finite elements for the Poisson benchmark on `[-3, 3]²`.
//!
//! Dirichlet data sits on the `y = ±3` rows and the `x = ±3` columns are
//! natural zero-flux edges. Dirichlet rows of the stiffness matrix are
//! identity rows and the matching load entries carry the boundary value.

mod assembly;
mod forcing;
mod grid;
mod solver;
mod sparse;

pub use assembly::{assemble_load, assemble_load_fn, assemble_stiffness, assemble_stiffness_unconstrained};
pub use forcing::{eval_forcing, sample_forcing, ForcingParams};
pub use grid::{Field, Grid, DOMAIN_HI, DOMAIN_LO};
pub use solver::{residual_norm, solve, solve_with_stats, SolveStats, DEFAULT_TOL};
pub use sparse::SparseMatrix;

pub(crate) use solver::{dot, norm};

use crate::error::Result;

/// Assembles and solves the benchmark problem for `params` on `grid`.
pub fn solve_poisson(grid: &Grid, params: &ForcingParams, tol: f64) -> Result<Field> {
    let a = assemble_stiffness(grid)?;
    let b = assemble_load(grid, params);
    solve(&a, &b, tol)
}
