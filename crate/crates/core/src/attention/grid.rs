use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::CellGrid;
use crate::numerics::Matrix;

/// Per-cell feature vectors; row `r * w + c` holds cell `(r, c)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureGrid {
    h: usize,
    w: usize,
    values: Matrix,
}

impl FeatureGrid {
    pub fn new(h: usize, w: usize, values: Matrix) -> Result<Self> {
        if values.rows() != h * w {
            return Err(Error::Shape(format!(
                "grid {h}x{w} needs {} rows, got {}",
                h * w,
                values.rows()
            )));
        }
        if !values.is_finite() {
            return Err(Error::InvalidArgument("non-finite feature value".into()));
        }
        Ok(Self { h, w, values })
    }

    pub fn zeros(h: usize, w: usize, c: usize) -> Self {
        Self {
            h,
            w,
            values: Matrix::zeros(h * w, c),
        }
    }

    pub fn height(&self) -> usize {
        self.h
    }

    pub fn width(&self) -> usize {
        self.w
    }

    pub fn channels(&self) -> usize {
        self.values.cols()
    }

    pub fn cells(&self) -> usize {
        self.h * self.w
    }

    pub fn values(&self) -> &Matrix {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut Matrix {
        &mut self.values
    }

    pub fn into_values(self) -> Matrix {
        self.values
    }
}

impl CellGrid for FeatureGrid {
    fn grid_height(&self) -> usize {
        self.h
    }

    fn grid_width(&self) -> usize {
        self.w
    }

    fn cell_values(&self) -> &Matrix {
        &self.values
    }

    fn with_cell_values(&self, values: Matrix) -> Result<Self> {
        FeatureGrid::new(self.h, self.w, values)
    }
}
