use ndarray::{Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};
use crate::quant::ensure_finite;

/// `N x D` visual-token activations, one token per row.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenMatrix {
    data: Array2<f64>,
    grid_shape: Option<(usize, usize)>,
}

impl TokenMatrix {
    pub fn new(data: Array2<f64>) -> Result<Self> {
        let (n, d) = data.dim();
        if n == 0 || d == 0 {
            return Err(Error::data(format!("token matrix must be non-empty, got {n}x{d}")));
        }
        ensure_finite(data.iter(), "token matrix")?;
        Ok(TokenMatrix { data, grid_shape: None })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::data("ragged token rows"));
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        let data =
            Array2::from_shape_vec((rows.len(), d), flat).map_err(|e| Error::data(format!("token rows: {e}")))?;
        Self::new(data)
    }

    pub fn with_grid(mut self, rows: usize, cols: usize) -> Result<Self> {
        if rows * cols != self.n_tokens() {
            return Err(Error::data(format!("grid {rows}x{cols} does not cover {} tokens", self.n_tokens())));
        }
        self.grid_shape = Some((rows, cols));
        Ok(self)
    }

    pub fn n_tokens(&self) -> usize {
        self.data.nrows()
    }

    pub fn dim(&self) -> usize {
        self.data.ncols()
    }

    pub fn grid_shape(&self) -> Option<(usize, usize)> {
        self.grid_shape
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.data.view()
    }

    pub fn token(&self, i: usize) -> ArrayView1<'_, f64> {
        self.data.row(i)
    }

    pub fn rows(&self) -> impl Iterator<Item = ArrayView1<'_, f64>> {
        self.data.rows().into_iter()
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.data
    }

    /// Rows at `indices`, in the given order.
    pub fn select(&self, indices: &[usize]) -> Array2<f64> {
        self.data.select(ndarray::Axis(0), indices)
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        TokenMatrix::new(&self.data * c)
    }
}
