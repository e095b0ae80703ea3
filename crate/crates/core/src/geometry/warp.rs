use crate::error::{Error, Result};
use crate::geometry::homography::{Homography, Point2};
use crate::numerics::Matrix;

/// Slack on the sampling bounds, so cell centers that land on the border
/// after round-off still sample.
const BOUND_TOL: f64 = 1e-9;

/// A row-major `height x width` lattice of cells, each holding a row of
/// `values` (`height * width` rows).
pub trait CellGrid: Sized {
    fn grid_height(&self) -> usize;
    fn grid_width(&self) -> usize;
    fn cell_values(&self) -> &Matrix;
    fn with_cell_values(&self, values: Matrix) -> Result<Self>;
}

/// Resamples a grid under an image-space homography.
///
/// Output cell `(r, c)` has its center at `((c + 0.5) s, (r + 0.5) s)` px;
/// it is mapped through `h^-1` and the source is sampled bilinearly
/// between cell centers. Samples outside the source take `fill`.
pub fn warp_grid<G: CellGrid>(grid: &G, h: &Homography, stride: f64, fill: f64) -> Result<G> {
    let out = warp_cells(
        grid.cell_values(),
        grid.grid_height(),
        grid.grid_width(),
        h,
        stride,
        fill,
    )?;
    grid.with_cell_values(out)
}

pub fn warp_cells(
    values: &Matrix,
    height: usize,
    width: usize,
    h: &Homography,
    stride: f64,
    fill: f64,
) -> Result<Matrix> {
    if !(stride >= 1.0) {
        return Err(Error::InvalidArgument(format!("stride must be >= 1, got {stride}")));
    }
    if values.rows() != height * width {
        return Err(Error::Shape(format!(
            "grid {height}x{width} needs {} rows, got {}",
            height * width,
            values.rows()
        )));
    }
    let inv = h.rescaled(1.0 / stride)?.inverse()?;
    let c = values.cols();
    let mut out = Matrix::filled(height * width, c, fill);
    for r in 0..height {
        for col in 0..width {
            let Ok(src) = inv.apply(Point2::new(col as f64 + 0.5, r as f64 + 0.5)) else {
                continue;
            };
            let (u, v) = (src.x - 0.5, src.y - 0.5);
            let (umax, vmax) = ((width - 1) as f64, (height - 1) as f64);
            if !(u >= -BOUND_TOL && u <= umax + BOUND_TOL && v >= -BOUND_TOL && v <= vmax + BOUND_TOL) {
                continue;
            }
            let (u, v) = (u.clamp(0.0, umax), v.clamp(0.0, vmax));
            let (u0, v0) = (u.floor() as usize, v.floor() as usize);
            let (u1, v1) = ((u0 + 1).min(width - 1), (v0 + 1).min(height - 1));
            let (fu, fv) = (u - u0 as f64, v - v0 as f64);
            // nested lerps stay within the range of the four samples
            let dst = out.row_mut(r * width + col);
            let (a, b) = (values.row(v0 * width + u0), values.row(v0 * width + u1));
            let (c, d) = (values.row(v1 * width + u0), values.row(v1 * width + u1));
            for k in 0..dst.len() {
                let top = a[k] + fu * (b[k] - a[k]);
                let bottom = c[k] + fu * (d[k] - c[k]);
                dst[k] = top + fv * (bottom - top);
            }
        }
    }
    Ok(out)
}
