use super::grid::Field;
use super::sparse::SparseMatrix;
use crate::error::{Error, Result};

pub const DEFAULT_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolveStats {
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Solves `A u = b` for a stiffness matrix whose Dirichlet rows are identity
/// rows, returning `u` with `‖Au − b‖₂ ≤ tol·‖b‖₂`.
///
/// Identity rows fix their unknowns to `b`; those known values are moved to the
/// right-hand side of the remaining rows, which leaves a symmetric positive
/// definite system for Jacobi-preconditioned conjugate gradients. At most
/// `10·N` iterations are attempted.
pub fn solve(a: &SparseMatrix, b: &Field, tol: f64) -> Result<Field> {
    let (u, _) = solve_with_stats(a, b.data(), tol)?;
    Ok(Field::from_raw(*b.grid(), u))
}

pub fn solve_with_stats(a: &SparseMatrix, b: &[f64], tol: f64) -> Result<(Vec<f64>, SolveStats)> {
    let n = a.nrows();
    if a.ncols() != n || b.len() != n {
        return Err(Error::Shape(format!(
            "system {}x{} with right-hand side of length {}",
            a.nrows(),
            a.ncols(),
            b.len()
        )));
    }
    if !(tol > 0.0) {
        return Err(Error::Config(format!("solver tolerance must be positive, got {tol}")));
    }
    let b_norm = norm(b);
    if b_norm == 0.0 {
        return Ok((
            vec![0.0; n],
            SolveStats {
                iterations: 0,
                relative_residual: 0.0,
            },
        ));
    }

    let fixed: Vec<bool> = (0..n).map(|r| a.is_identity_row(r)).collect();
    let mut u: Vec<f64> = (0..n).map(|r| if fixed[r] { b[r] } else { 0.0 }).collect();

    // rhs for free rows: b - A_fd u_d
    let mut rhs = vec![0.0; n];
    for r in 0..n {
        if fixed[r] {
            continue;
        }
        let (cols, vals) = a.row(r);
        let lifted: f64 = cols
            .iter()
            .zip(vals)
            .filter(|(c, _)| fixed[**c])
            .map(|(&c, &v)| v * b[c])
            .sum();
        rhs[r] = b[r] - lifted;
    }

    let inv_diag: Vec<f64> = a
        .diagonal()
        .iter()
        .zip(&fixed)
        .map(|(&d, &f)| if f { 0.0 } else { 1.0 / d })
        .collect();

    let apply = |x: &[f64], y: &mut [f64]| {
        for r in 0..n {
            if fixed[r] {
                y[r] = 0.0;
                continue;
            }
            let (cols, vals) = a.row(r);
            y[r] = cols
                .iter()
                .zip(vals)
                .filter(|(c, _)| !fixed[**c])
                .map(|(&c, &v)| v * x[c])
                .sum();
        }
    };

    let max_iter = 10 * n;
    let target = tol * b_norm;
    let mut x = vec![0.0; n];
    let mut r = rhs.clone();
    let mut z = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut ap = vec![0.0; n];
    let mut iterations = 0;
    // The recursively updated residual can drift from the true one, so
    // convergence is confirmed against `rhs - A x` and CG restarts if needed.
    let mut restarts = 0;
    loop {
        for k in 0..n {
            z[k] = r[k] * inv_diag[k];
        }
        p.copy_from_slice(&z);
        let mut rz = dot(&r, &z);
        let mut res = norm(&r);
        while !(res <= target) {
            if iterations == max_iter || !res.is_finite() {
                return Err(Error::SolverFailure {
                    iterations,
                    residual: res / b_norm,
                });
            }
            apply(&p, &mut ap);
            let alpha = rz / dot(&p, &ap);
            for k in 0..n {
                x[k] += alpha * p[k];
                r[k] -= alpha * ap[k];
            }
            for k in 0..n {
                z[k] = r[k] * inv_diag[k];
            }
            let rz_next = dot(&r, &z);
            let beta = rz_next / rz;
            rz = rz_next;
            for k in 0..n {
                p[k] = z[k] + beta * p[k];
            }
            res = norm(&r);
            iterations += 1;
        }
        apply(&x, &mut ap);
        for k in 0..n {
            r[k] = rhs[k] - ap[k];
        }
        let true_res = norm(&r);
        if true_res <= target {
            break;
        }
        restarts += 1;
        if restarts > 3 {
            return Err(Error::SolverFailure {
                iterations,
                residual: true_res / b_norm,
            });
        }
    }

    for k in 0..n {
        if !fixed[k] {
            u[k] = x[k];
        }
    }
    let relative_residual = residual_norm(a, &u, b) / b_norm;
    Ok((
        u,
        SolveStats {
            iterations,
            relative_residual,
        },
    ))
}

/// `‖A u − b‖₂`.
pub fn residual_norm(a: &SparseMatrix, u: &[f64], b: &[f64]) -> f64 {
    let au = a.mul_vec(u);
    au.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
