//! Normalized direct linear transform.

use nalgebra::{DMatrix, SMatrix, SVector};

use crate::error::{Error, Result};
use crate::geometry::homography::{det3, mul3, Correspondence, Homography, Point2};

/// Ratio of the second-smallest to the largest singular value below which
/// the constraint system has more than one null direction.
const RANK_TOL: f64 = 1e-10;

/// Triangle area (relative to the squared spread) below which three points
/// count as collinear.
const COLLINEAR_TOL: f64 = 1e-9;

/// Hartley normalization: centroid to the origin, mean distance `sqrt(2)`.
fn normalization(points: &[Point2]) -> Result<[[f64; 3]; 3]> {
    let n = points.len() as f64;
    let cx = points.iter().map(|p| p.x).sum::<f64>() / n;
    let cy = points.iter().map(|p| p.y).sum::<f64>() / n;
    let mean_r = points
        .iter()
        .map(|p| ((p.x - cx).powi(2) + (p.y - cy).powi(2)).sqrt())
        .sum::<f64>()
        / n;
    if mean_r <= f64::EPSILON {
        return Err(Error::Degenerate("all points coincide".into()));
    }
    let s = std::f64::consts::SQRT_2 / mean_r;
    Ok([[s, 0.0, -s * cx], [0.0, s, -s * cy], [0.0, 0.0, 1.0]])
}

fn transform(t: &[[f64; 3]; 3], p: Point2) -> Point2 {
    // affine normalization, no projective row
    Point2::new(t[0][0] * p.x + t[0][2], t[1][1] * p.y + t[1][2])
}

pub(crate) fn has_collinear_triple(points: &[Point2]) -> bool {
    let spread = points
        .iter()
        .flat_map(|a| points.iter().map(move |b| a.distance(*b)))
        .fold(0.0, f64::max);
    let tol = COLLINEAR_TOL * spread * spread.max(1.0);
    let n = points.len();
    for i in 0..n {
        for j in i + 1..n {
            for k in j + 1..n {
                let (a, b, c) = (points[i], points[j], points[k]);
                let area = (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
                if area.abs() <= tol {
                    return true;
                }
            }
        }
    }
    false
}

/// Least-squares homography mapping `reference` points to `target` points.
///
/// Needs at least four correspondences. With exactly four, no three points
/// on either side may be collinear.
pub fn estimate_dlt(corrs: &[Correspondence]) -> Result<Homography> {
    let n = corrs.len();
    if n < 4 {
        return Err(Error::InvalidArgument(format!(
            "homography needs at least 4 correspondences, got {n}"
        )));
    }
    let src: Vec<Point2> = corrs.iter().map(|c| c.reference).collect();
    let dst: Vec<Point2> = corrs.iter().map(|c| c.target).collect();
    if n == 4 && (has_collinear_triple(&src) || has_collinear_triple(&dst)) {
        return Err(Error::Degenerate("three of four points are collinear".into()));
    }
    let ts = normalization(&src)?;
    let td = normalization(&dst)?;

    let rows = (2 * n).max(9);
    let mut a = DMatrix::<f64>::zeros(rows, 9);
    for (i, (s, d)) in src.iter().zip(&dst).enumerate() {
        let s = transform(&ts, *s);
        let d = transform(&td, *d);
        let (x, y, u, v) = (s.x, s.y, d.x, d.y);
        let r0 = 2 * i;
        a[(r0, 0)] = -x;
        a[(r0, 1)] = -y;
        a[(r0, 2)] = -1.0;
        a[(r0, 6)] = u * x;
        a[(r0, 7)] = u * y;
        a[(r0, 8)] = u;
        let r1 = r0 + 1;
        a[(r1, 3)] = -x;
        a[(r1, 4)] = -y;
        a[(r1, 5)] = -1.0;
        a[(r1, 6)] = v * x;
        a[(r1, 7)] = v * y;
        a[(r1, 8)] = v;
    }

    let svd = a.svd(false, true);
    let v_t = svd
        .v_t
        .ok_or_else(|| Error::Degenerate("singular value decomposition failed".into()))?;
    let mut order: Vec<usize> = (0..9).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let largest = svd.singular_values[order[0]];
    let second_smallest = svd.singular_values[order[7]];
    if largest <= 0.0 || second_smallest <= RANK_TOL * largest {
        return Err(Error::Degenerate("rank-deficient constraint system".into()));
    }
    let h = v_t.row(order[8]);
    let hn = [[h[0], h[1], h[2]], [h[3], h[4], h[5]], [h[6], h[7], h[8]]];
    if det3(&hn).abs() <= 1e-12 {
        return Err(Error::Degenerate("solution is singular".into()));
    }

    let td_inv = [
        [1.0 / td[0][0], 0.0, -td[0][2] / td[0][0]],
        [0.0, 1.0 / td[1][1], -td[1][2] / td[1][1]],
        [0.0, 0.0, 1.0],
    ];
    Homography::new(mul3(&mul3(&td_inv, &hn), &ts))
}

/// Exact homography through four correspondences with `h33 = 1`, solved
/// by Gaussian elimination. Used for RANSAC hypotheses.
pub(crate) fn minimal_homography(corrs: &[Correspondence; 4]) -> Option<Homography> {
    let src: Vec<Point2> = corrs.iter().map(|c| c.reference).collect();
    let dst: Vec<Point2> = corrs.iter().map(|c| c.target).collect();
    if has_collinear_triple(&src) || has_collinear_triple(&dst) {
        return None;
    }
    let mut a = SMatrix::<f64, 8, 8>::zeros();
    let mut b = SVector::<f64, 8>::zeros();
    for i in 0..4 {
        let (x, y, u, v) = (src[i].x, src[i].y, dst[i].x, dst[i].y);
        let r = 2 * i;
        a[(r, 0)] = x;
        a[(r, 1)] = y;
        a[(r, 2)] = 1.0;
        a[(r, 6)] = -u * x;
        a[(r, 7)] = -u * y;
        b[r] = u;
        a[(r + 1, 3)] = x;
        a[(r + 1, 4)] = y;
        a[(r + 1, 5)] = 1.0;
        a[(r + 1, 6)] = -v * x;
        a[(r + 1, 7)] = -v * y;
        b[r + 1] = v;
    }
    let h = a.lu().solve(&b)?;
    Homography::new([[h[0], h[1], h[2]], [h[3], h[4], h[5]], [h[6], h[7], 1.0]]).ok()
}
