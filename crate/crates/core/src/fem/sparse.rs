use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// Compressed sparse row matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Builds a matrix from `(row, col, value)` triplets, summing duplicates.
    pub fn from_triplets(
        nrows: usize,
        ncols: usize,
        triplets: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Result<Self> {
        let mut rows: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); nrows];
        for (r, c, v) in triplets {
            if r >= nrows || c >= ncols {
                return Err(Error::Shape(format!(
                    "entry ({r}, {c}) outside {nrows}x{ncols} matrix"
                )));
            }
            *rows[r].entry(c).or_insert(0.0) += v;
        }
        let mut row_ptr = Vec::with_capacity(nrows + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for row in rows {
            for (c, v) in row {
                col_idx.push(c);
                values.push(v);
            }
            row_ptr.push(col_idx.len());
        }
        Ok(Self {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            values,
        })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            nrows: n,
            ncols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Column indices and values of row `r`.
    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        (&self.col_idx[span.clone()], &self.values[span])
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let (cols, vals) = self.row(r);
        match cols.binary_search(&c) {
            Ok(k) => vals[k],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.nrows.min(self.ncols))
            .map(|r| self.get(r, r))
            .collect()
    }

    /// `y = A x`.
    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.ncols);
        assert_eq!(y.len(), self.nrows);
        for (r, out) in y.iter_mut().enumerate() {
            let span = self.row_ptr[r]..self.row_ptr[r + 1];
            *out = self.col_idx[span.clone()]
                .iter()
                .zip(&self.values[span])
                .map(|(&c, &v)| v * x[c])
                .sum();
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        self.mul_vec_into(x, &mut y);
        y
    }

    /// `y = Aᵀ x`, scattering along rows so no transpose is stored.
    pub fn mul_vec_transpose_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.nrows);
        assert_eq!(y.len(), self.ncols);
        y.iter_mut().for_each(|v| *v = 0.0);
        for (r, &xr) in x.iter().enumerate() {
            let span = self.row_ptr[r]..self.row_ptr[r + 1];
            for (&c, &v) in self.col_idx[span.clone()].iter().zip(&self.values[span]) {
                y[c] += v * xr;
            }
        }
    }

    pub fn mul_vec_transpose(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.ncols];
        self.mul_vec_transpose_into(x, &mut y);
        y
    }

    pub fn transpose(&self) -> Self {
        let triplets = (0..self.nrows).flat_map(|r| {
            let (cols, vals) = self.row(r);
            cols.iter()
                .zip(vals)
                .map(move |(&c, &v)| (c, r, v))
                .collect::<Vec<_>>()
        });
        Self::from_triplets(self.ncols, self.nrows, triplets)
            .expect("transpose indices are in range")
    }

    /// Largest `|A_ij - A_ji|` over stored entries.
    pub fn max_asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for r in 0..self.nrows {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                worst = worst.max((v - self.get(c, r)).abs());
            }
        }
        worst
    }

    /// Replaces row `r` with the unit row `e_r`, keeping the CSR layout sorted.
    pub fn set_identity_row(&mut self, r: usize) {
        let start = self.row_ptr[r];
        let end = self.row_ptr[r + 1];
        let removed = end - start;
        self.col_idx.splice(start..end, [r]);
        self.values.splice(start..end, [1.0]);
        let shift = removed as isize - 1;
        for p in &mut self.row_ptr[r + 1..] {
            *p = (*p as isize - shift) as usize;
        }
    }

    /// True when row `r` is exactly `e_r`.
    pub fn is_identity_row(&self, r: usize) -> bool {
        let (cols, vals) = self.row(r);
        cols.iter()
            .zip(vals)
            .all(|(&c, &v)| if c == r { v == 1.0 } else { v == 0.0 })
            && cols.contains(&r)
    }

    /// Induced ∞-norm (max absolute row sum).
    pub fn norm_inf(&self) -> f64 {
        (0..self.nrows)
            .map(|r| self.row(r).1.iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Dense row-major copy; for small test fixtures only.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; self.ncols]; self.nrows];
        for (r, row) in out.iter_mut().enumerate() {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                row[c] = v;
            }
        }
        out
    }
}
