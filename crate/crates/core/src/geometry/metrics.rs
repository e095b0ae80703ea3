use crate::error::{Error, Result};
use crate::geometry::homography::{Homography, Point2};

/// Mean distance between the four image corners mapped by `est` and by `gt`.
///
/// A corner that either transform sends to infinity makes the error infinite.
pub fn corner_error(est: &Homography, gt: &Homography, width: f64, height: f64) -> f64 {
    let corners = [
        Point2::new(0.0, 0.0),
        Point2::new(width, 0.0),
        Point2::new(width, height),
        Point2::new(0.0, height),
    ];
    let mut total = 0.0;
    for c in corners {
        match (est.apply(c), gt.apply(c)) {
            (Ok(a), Ok(b)) => total += a.distance(b),
            _ => return f64::INFINITY,
        }
    }
    total / 4.0
}

/// Normalized area under the recall-versus-error curve on `[0, threshold]`.
///
/// Recall is a step function of the error, so the integral is exact:
/// each pair contributes `max(0, 1 - e / t)`. Non-finite errors (failed
/// estimates) contribute nothing.
pub fn auc(errors: &[f64], threshold: f64) -> Result<f64> {
    if errors.is_empty() {
        return Err(Error::InvalidArgument("AUC of an empty error list".into()));
    }
    if !(threshold > 0.0) {
        return Err(Error::InvalidArgument(format!("AUC threshold must be > 0, got {threshold}")));
    }
    let total: f64 = errors
        .iter()
        .map(|&e| {
            if e.is_nan() {
                0.0
            } else {
                (1.0 - e.max(0.0) / threshold).max(0.0)
            }
        })
        .sum();
    Ok(total / errors.len() as f64)
}
