use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::CellGrid;
use crate::numerics::Matrix;

/// Per-cell positive weights over an `h x w` grid.
///
/// `baseline` is the value carried by background cells: 1 for maps built
/// from boxes or masks, 2 after the two-view refinement (which adds a
/// warped map of ones wherever the other view is in bounds).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "WeightMapRepr", try_from = "WeightMapRepr")]
pub struct WeightMap {
    h: usize,
    w: usize,
    values: Matrix,
    baseline: f64,
}

#[derive(Serialize, Deserialize)]
struct WeightMapRepr {
    h: usize,
    w: usize,
    values: Vec<f64>,
    #[serde(default = "one")]
    baseline: f64,
}

fn one() -> f64 {
    1.0
}

impl From<WeightMap> for WeightMapRepr {
    fn from(m: WeightMap) -> Self {
        Self {
            h: m.h,
            w: m.w,
            values: m.values.into_vec(),
            baseline: m.baseline,
        }
    }
}

impl TryFrom<WeightMapRepr> for WeightMap {
    type Error = Error;

    fn try_from(r: WeightMapRepr) -> Result<Self> {
        Ok(WeightMap::new(r.h, r.w, r.values)?.with_baseline(r.baseline))
    }
}

impl WeightMap {
    pub fn new(h: usize, w: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != h * w {
            return Err(Error::Shape(format!(
                "weight map {h}x{w} needs {} values, got {}",
                h * w,
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "weight map values must be finite and positive, got {v}"
            )));
        }
        Ok(Self {
            h,
            w,
            values: Matrix::column(values),
            baseline: 1.0,
        })
    }

    pub fn uniform(h: usize, w: usize, value: f64) -> Self {
        Self {
            h,
            w,
            values: Matrix::filled(h * w, 1, value),
            baseline: value,
        }
    }

    pub fn with_baseline(mut self, baseline: f64) -> Self {
        self.baseline = baseline;
        self
    }

    pub fn height(&self) -> usize {
        self.h
    }

    pub fn width(&self) -> usize {
        self.w
    }

    pub fn len(&self) -> usize {
        self.h * self.w
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn values(&self) -> &[f64] {
        self.values.data()
    }

    /// The weights as an `hw x 1` column, ready to broadcast over channels.
    pub fn column(&self) -> &Matrix {
        &self.values
    }

    pub fn baseline(&self) -> f64 {
        self.baseline
    }

    pub fn is_foreground(&self, cell: usize) -> bool {
        self.values.data()[cell] > self.baseline
    }
}

impl CellGrid for WeightMap {
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
        Ok(WeightMap::new(self.h, self.w, values.into_vec())?.with_baseline(self.baseline))
    }
}

/// Foreground probabilities per cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegMask {
    pub h: usize,
    pub w: usize,
    pub probs: Vec<f64>,
}

impl SegMask {
    pub fn new(h: usize, w: usize, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != h * w {
            return Err(Error::Shape(format!(
                "mask {h}x{w} needs {} values, got {}",
                h * w,
                probs.len()
            )));
        }
        if let Some(p) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::InvalidArgument(format!("mask probability {p} outside [0, 1]")));
        }
        Ok(Self { h, w, probs })
    }

    pub fn zeros(h: usize, w: usize) -> Self {
        Self {
            h,
            w,
            probs: vec![0.0; h * w],
        }
    }
}

/// Axis-aligned box in pixels with a class in `1..=C`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
    #[serde(rename = "class")]
    pub class_id: usize,
}

impl BBox {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64, class_id: usize) -> Result<Self> {
        let b = Self {
            x1,
            y1,
            x2,
            y2,
            class_id,
        };
        if !(x1.is_finite() && y1.is_finite() && x2.is_finite() && y2.is_finite()) {
            return Err(Error::InvalidArgument("non-finite box coordinate".into()));
        }
        if !(x1 < x2 && y1 < y2) {
            return Err(Error::InvalidArgument(format!(
                "box needs x1 < x2 and y1 < y2, got {b:?}"
            )));
        }
        Ok(b)
    }

    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }

    pub fn area(&self) -> f64 {
        self.width().max(0.0) * self.height().max(0.0)
    }

    /// Strict interior test.
    pub fn contains(&self, x: f64, y: f64) -> bool {
        x > self.x1 && x < self.x2 && y > self.y1 && y < self.y2
    }

    /// Clips to `[0, width] x [0, height]`; `None` when nothing is left.
    pub fn clamped(&self, width: f64, height: f64) -> Option<Self> {
        let b = Self {
            x1: self.x1.clamp(0.0, width),
            y1: self.y1.clamp(0.0, height),
            x2: self.x2.clamp(0.0, width),
            y2: self.y2.clamp(0.0, height),
            class_id: self.class_id,
        };
        (b.x1 < b.x2 && b.y1 < b.y2).then_some(b)
    }
}
