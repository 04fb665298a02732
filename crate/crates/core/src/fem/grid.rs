use crate::error::{Error, Result};

pub const DOMAIN_LO: f64 = -3.0;
pub const DOMAIN_HI: f64 = 3.0;

/// Uniform square node lattice over `[lo, hi]²`.
///
/// Node `(i, j)` sits at `(lo + j·h, lo + i·h)` and has row-major index
/// `i·n + j`, so row 0 is the `y = lo` edge. Rows 0 and `n-1` carry the
/// Dirichlet condition; columns 0 and `n-1` are natural (zero-flux) edges.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid {
    n: usize,
    lo: f64,
    hi: f64,
}

impl Grid {
    /// Grid on the benchmark domain `[-3, 3]²`.
    pub fn new(n: usize) -> Result<Self> {
        Self::with_bounds(n, DOMAIN_LO, DOMAIN_HI)
    }

    pub fn with_bounds(n: usize, lo: f64, hi: f64) -> Result<Self> {
        if n < 3 {
            return Err(Error::InvalidGrid(format!(
                "need at least 3 nodes per side, got {n}"
            )));
        }
        if !(lo.is_finite() && hi.is_finite() && hi > lo) {
            return Err(Error::InvalidGrid(format!("bad bounds [{lo}, {hi}]")));
        }
        Ok(Self { n, lo, hi })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn h(&self) -> f64 {
        (self.hi - self.lo) / (self.n - 1) as f64
    }

    /// Total node count `n²`.
    pub fn len(&self) -> usize {
        self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        i * self.n + j
    }

    /// Physical `(x, y)` of node `(i, j)`.
    #[inline]
    pub fn coord(&self, i: usize, j: usize) -> (f64, f64) {
        let h = self.h();
        (self.lo + j as f64 * h, self.lo + i as f64 * h)
    }

    #[inline]
    pub fn is_dirichlet_row(&self, i: usize) -> bool {
        i == 0 || i == self.n - 1
    }

    pub fn is_dirichlet(&self, idx: usize) -> bool {
        self.is_dirichlet_row(idx / self.n)
    }

    /// LR grid with a quarter of the nodes per side.
    pub fn coarsened(&self, factor: usize) -> Result<Self> {
        if factor == 0 || !self.n.is_multiple_of(factor) {
            return Err(Error::Shape(format!(
                "grid with {} nodes per side is not divisible by {factor}",
                self.n
            )));
        }
        Self::with_bounds(self.n / factor, self.lo, self.hi)
    }

    pub fn refined(&self, factor: usize) -> Result<Self> {
        Self::with_bounds(self.n * factor, self.lo, self.hi)
    }
}

/// Nodal scalar field on a [`Grid`], stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    grid: Grid,
    data: Vec<f64>,
}

impl Field {
    pub fn new(grid: Grid, data: Vec<f64>) -> Result<Self> {
        if data.len() != grid.len() {
            return Err(Error::Shape(format!(
                "field on {0}x{0} grid needs {1} values, got {2}",
                grid.n(),
                grid.len(),
                data.len()
            )));
        }
        if let Some(k) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Shape(format!("non-finite value at node {k}")));
        }
        Ok(Self { grid, data })
    }

    pub fn zeros(grid: Grid) -> Self {
        Self {
            grid,
            data: vec![0.0; grid.len()],
        }
    }

    pub fn constant(grid: Grid, value: f64) -> Self {
        Self {
            grid,
            data: vec![value; grid.len()],
        }
    }

    pub fn from_fn(grid: Grid, mut f: impl FnMut(f64, f64) -> f64) -> Self {
        let n = grid.n();
        let mut data = Vec::with_capacity(grid.len());
        for i in 0..n {
            for j in 0..n {
                let (x, y) = grid.coord(i, j);
                data.push(f(x, y));
            }
        }
        Self { grid, data }
    }

    /// Wraps data without the finiteness scan; used on hot paths where the
    /// caller already guarantees the length.
    pub(crate) fn from_raw(grid: Grid, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), grid.len());
        Self { grid, data }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[self.grid.index(i, j)]
    }

    pub fn max_abs_diff(&self, other: &Field) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub(crate) fn check_same_grid(&self, other: &Field) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::Shape(format!(
                "grid mismatch: {} vs {} nodes per side",
                self.grid.n(),
                other.grid.n()
            )));
        }
        Ok(())
    }
}
