//! Planar homographies: application, estimation, robust fitting, grid
//! resampling and the corner-error metric.

mod dlt;
mod homography;
mod metrics;
mod ransac;
mod warp;

pub use dlt::estimate_dlt;
pub use homography::{Correspondence, Homography, Point2, MIN_DET, MIN_W};
pub use metrics::{auc, corner_error};
pub use ransac::{ransac_homography, reprojection_error, RansacFit, RansacParams};
pub use warp::{warp_cells, warp_grid, CellGrid};
