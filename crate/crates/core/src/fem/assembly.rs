use super::forcing::ForcingParams;
use super::grid::{Field, Grid};
use super::sparse::SparseMatrix;
use crate::error::Result;

/// Q1 element stiffness on a square, local nodes counter-clockwise from the
/// lower-left corner. Independent of the element size in 2D.
const ELEMENT_STIFFNESS: [[f64; 4]; 4] = [
    [4.0 / 6.0, -1.0 / 6.0, -2.0 / 6.0, -1.0 / 6.0],
    [-1.0 / 6.0, 4.0 / 6.0, -1.0 / 6.0, -2.0 / 6.0],
    [-2.0 / 6.0, -1.0 / 6.0, 4.0 / 6.0, -1.0 / 6.0],
    [-1.0 / 6.0, -2.0 / 6.0, -1.0 / 6.0, 4.0 / 6.0],
];

/// Reference-square corner signs `(ξ_a, η_a)` in the same local order.
const CORNERS: [(f64, f64); 4] = [(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)];

fn element_nodes(grid: &Grid, ei: usize, ej: usize) -> [usize; 4] {
    [
        grid.index(ei, ej),
        grid.index(ei, ej + 1),
        grid.index(ei + 1, ej + 1),
        grid.index(ei + 1, ej),
    ]
}

/// Stiffness `A_ij = ⟨∇φ_i, ∇φ_j⟩` with natural boundaries everywhere.
pub fn assemble_stiffness_unconstrained(grid: &Grid) -> SparseMatrix {
    let ne = grid.n() - 1;
    let mut triplets = Vec::with_capacity(16 * ne * ne);
    for ei in 0..ne {
        for ej in 0..ne {
            let nodes = element_nodes(grid, ei, ej);
            for (a, &ra) in nodes.iter().enumerate() {
                for (b, &cb) in nodes.iter().enumerate() {
                    triplets.push((ra, cb, ELEMENT_STIFFNESS[a][b]));
                }
            }
        }
    }
    SparseMatrix::from_triplets(grid.len(), grid.len(), triplets)
        .expect("element indices lie on the grid")
}

/// Stiffness with the Dirichlet rows (`y = ±3`) replaced by identity rows.
pub fn assemble_stiffness(grid: &Grid) -> Result<SparseMatrix> {
    let mut a = assemble_stiffness_unconstrained(grid);
    let n = grid.n();
    for i in [0, n - 1] {
        for j in 0..n {
            a.set_identity_row(grid.index(i, j));
        }
    }
    Ok(a)
}

/// Load vector `⟨f, φ_j⟩` by 2×2 Gauss quadrature, Dirichlet entries set to `dirichlet`.
pub fn assemble_load_fn(grid: &Grid, f: impl Fn(f64, f64) -> f64, dirichlet: f64) -> Field {
    let n = grid.n();
    let h = grid.h();
    let g = 1.0 / 3f64.sqrt();
    let weight = 0.25 * h * h;
    let mut load = vec![0.0; grid.len()];
    for ei in 0..n - 1 {
        for ej in 0..n - 1 {
            let (x0, y0) = grid.coord(ei, ej);
            let (xc, yc) = (x0 + 0.5 * h, y0 + 0.5 * h);
            let nodes = element_nodes(grid, ei, ej);
            for (xi, eta) in [(-g, -g), (g, -g), (g, g), (-g, g)] {
                let fv = f(xc + 0.5 * h * xi, yc + 0.5 * h * eta) * weight;
                for (&node, &(sx, sy)) in nodes.iter().zip(&CORNERS) {
                    load[node] += fv * 0.25 * (1.0 + sx * xi) * (1.0 + sy * eta);
                }
            }
        }
    }
    for i in [0, n - 1] {
        for j in 0..n {
            load[grid.index(i, j)] = dirichlet;
        }
    }
    Field::from_raw(*grid, load)
}

/// Load vector for the benchmark forcing `f_θ` with Dirichlet value `d`.
pub fn assemble_load(grid: &Grid, params: &ForcingParams) -> Field {
    assemble_load_fn(grid, |x, y| params.eval(x, y), params.d)
}
