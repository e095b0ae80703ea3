use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::dlt::{estimate_dlt, minimal_homography};
use crate::geometry::homography::{Correspondence, Homography};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RansacParams {
    pub iters: usize,
    pub inlier_px: f64,
    pub seed: u64,
    /// Stop once this probability of having drawn an all-inlier sample is
    /// reached. `None` always runs `iters` hypotheses.
    pub confidence: Option<f64>,
}

impl Default for RansacParams {
    fn default() -> Self {
        Self {
            iters: 1000,
            inlier_px: 3.0,
            seed: 0,
            confidence: Some(0.999),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RansacFit {
    pub homography: Homography,
    /// Indices into the input, ascending.
    pub inliers: Vec<usize>,
}

pub fn reprojection_error(h: &Homography, c: &Correspondence) -> f64 {
    match h.apply(c.reference) {
        Ok(p) => p.distance(c.target),
        Err(_) => f64::INFINITY,
    }
}

fn consensus(h: &Homography, corrs: &[Correspondence], inlier_px: f64) -> (Vec<usize>, f64) {
    let mut inliers = Vec::new();
    let mut residual = 0.0;
    for (i, c) in corrs.iter().enumerate() {
        let e = reprojection_error(h, c);
        if e <= inlier_px {
            inliers.push(i);
            residual += e * e;
        }
    }
    (inliers, residual)
}

fn required_iterations(confidence: f64, inlier_ratio: f64) -> usize {
    let good = inlier_ratio.powi(4);
    if good >= 1.0 {
        return 1;
    }
    if good <= 0.0 {
        return usize::MAX;
    }
    let n = (1.0 - confidence).ln() / (1.0 - good).ln();
    if n.is_finite() {
        n.ceil().max(1.0) as usize
    } else {
        usize::MAX
    }
}

/// Robust homography from putative correspondences.
///
/// Hypotheses come from random 4-point samples; the one with the most
/// inliers (ties broken by smaller squared residual) wins and is refit on
/// its inliers.
pub fn ransac_homography(corrs: &[Correspondence], params: &RansacParams) -> Result<RansacFit> {
    if corrs.len() < 4 {
        return Err(Error::InvalidArgument(format!(
            "RANSAC needs at least 4 correspondences, got {}",
            corrs.len()
        )));
    }
    if !(params.inlier_px >= 0.0) {
        return Err(Error::InvalidArgument("inlier threshold must be >= 0".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut best: Option<(Homography, Vec<usize>, f64)> = None;
    let mut budget = params.iters;
    let mut it = 0;
    while it < budget {
        it += 1;
        let idx = sample(&mut rng, corrs.len(), 4);
        let picked = [corrs[idx.index(0)], corrs[idx.index(1)], corrs[idx.index(2)], corrs[idx.index(3)]];
        let Some(h) = minimal_homography(&picked) else {
            continue;
        };
        let (inliers, residual) = consensus(&h, corrs, params.inlier_px);
        let better = match &best {
            None => true,
            Some((_, b, r)) => inliers.len() > b.len() || (inliers.len() == b.len() && residual < *r),
        };
        if better {
            if let Some(conf) = params.confidence {
                let ratio = inliers.len() as f64 / corrs.len() as f64;
                budget = budget.min(required_iterations(conf, ratio));
            }
            best = Some((h, inliers, residual));
        }
    }

    let Some((h, inliers, _)) = best.filter(|(_, inl, _)| inl.len() >= 4) else {
        return Err(Error::EstimationFailed("no hypothesis reached 4 inliers".into()));
    };
    let subset: Vec<Correspondence> = inliers.iter().map(|&i| corrs[i]).collect();
    let homography = estimate_dlt(&subset).unwrap_or(h);
    Ok(RansacFit {
        homography,
        inliers,
    })
}
