use crate::error::{Error, Result};
use crate::fem::{Field, Grid};

/// Dense `(batch, channels, height, width)` tensor, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor4 {
    shape: [usize; 4],
    data: Vec<f64>,
}

impl Tensor4 {
    pub fn new(shape: [usize; 4], data: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::Shape(format!(
                "tensor of shape {shape:?} needs {expected} values, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: [usize; 4]) -> Self {
        Self {
            shape,
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn filled(shape: [usize; 4], value: f64) -> Self {
        Self {
            shape,
            data: vec![value; shape.iter().product()],
        }
    }

    /// Single-channel image view of a nodal field.
    pub fn from_field(field: &Field) -> Self {
        let n = field.grid().n();
        Self {
            shape: [1, 1, n, n],
            data: field.data().to_vec(),
        }
    }

    pub fn into_field(self, grid: Grid) -> Result<Field> {
        if self.shape != [1, 1, grid.n(), grid.n()] {
            return Err(Error::Shape(format!(
                "tensor {:?} does not fit a {}x{} field",
                self.shape,
                grid.n(),
                grid.n()
            )));
        }
        Ok(Field::from_raw(grid, self.data))
    }

    pub fn shape(&self) -> [usize; 4] {
        self.shape
    }

    pub fn batch(&self) -> usize {
        self.shape[0]
    }

    pub fn channels(&self) -> usize {
        self.shape[1]
    }

    pub fn height(&self) -> usize {
        self.shape[2]
    }

    pub fn width(&self) -> usize {
        self.shape[3]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
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

    /// Contiguous `height × width` plane for `(b, c)`.
    pub fn plane(&self, b: usize, c: usize) -> &[f64] {
        let hw = self.shape[2] * self.shape[3];
        let start = (b * self.shape[1] + c) * hw;
        &self.data[start..start + hw]
    }

    pub fn plane_mut(&mut self, b: usize, c: usize) -> &mut [f64] {
        let hw = self.shape[2] * self.shape[3];
        let start = (b * self.shape[1] + c) * hw;
        &mut self.data[start..start + hw]
    }

    pub fn dot(&self, other: &Tensor4) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn add_assign(&mut self, other: &Tensor4) {
        debug_assert_eq!(self.shape, other.shape);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|v| *v *= s);
    }
}
