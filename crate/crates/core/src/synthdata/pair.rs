use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::attention::FeatureGrid;
use crate::error::{Error, Result};
use crate::geometry::{estimate_dlt, warp_grid, Correspondence, Homography, Point2};
use crate::synthdata::scene::{gaussian_matrix, SceneSpec};
use crate::weightgen::BBox;

pub const MAX_CORNER_TRIES: usize = 100;
/// Largest cell-center distance, in cells, for a ground-truth match.
pub const MATCH_RADIUS: f64 = 0.5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneSample {
    pub ref_grid: FeatureGrid,
    pub tgt_grid: FeatureGrid,
    /// Maps reference pixels to target pixels.
    pub h_gt: Homography,
    pub boxes_r: Vec<BBox>,
    /// Visible warped boxes, in `boxes_r` order with dropped ones removed.
    pub boxes_t: Vec<BBox>,
    /// Per reference box: whether its warped hull stayed in view.
    pub visible: Vec<bool>,
    /// `(target cell, reference cell)` pairs.
    pub gt_matches: Vec<(usize, usize)>,
}

fn image_corners(w: f64, h: f64) -> [Point2; 4] {
    [Point2::new(0.0, 0.0), Point2::new(w, 0.0), Point2::new(w, h), Point2::new(0.0, h)]
}

/// Strictly convex with the same winding as the image rectangle.
fn is_convex(q: &[Point2; 4]) -> bool {
    (0..4).all(|k| {
        let (a, b, c) = (q[k], q[(k + 1) % 4], q[(k + 2) % 4]);
        (b.x - a.x) * (c.y - b.y) - (b.y - a.y) * (c.x - b.x) > 1e-9
    })
}

/// Homography taking the image corners to `corners`.
pub fn homography_from_corners(w: f64, h: f64, corners: &[Point2; 4]) -> Result<Homography> {
    let corrs: Vec<Correspondence> = image_corners(w, h)
        .iter()
        .zip(corners)
        .map(|(&s, &d)| Correspondence::new(s, d))
        .collect();
    estimate_dlt(&corrs)
}

fn sample_corners<R: Rng + ?Sized>(spec: &SceneSpec, rng: &mut R) -> Result<[Point2; 4]> {
    let (w, h) = (spec.w as f64, spec.h as f64);
    let m = spec.warp_magnitude * w.min(h);
    for _ in 0..MAX_CORNER_TRIES {
        let q = image_corners(w, h).map(|p| {
            let dx = if m > 0.0 { rng.gen_range(-m..=m) } else { 0.0 };
            let dy = if m > 0.0 { rng.gen_range(-m..=m) } else { 0.0 };
            Point2::new(p.x + dx, p.y + dy)
        });
        if is_convex(&q) {
            return Ok(q);
        }
    }
    Err(Error::Degenerate(format!(
        "no convex corner sample in {MAX_CORNER_TRIES} tries"
    )))
}

/// Axis-aligned hull of the mapped corners, clipped to the image.
pub fn warp_box(b: &BBox, h: &Homography, width: f64, height: f64) -> Option<BBox> {
    let pts = [
        Point2::new(b.x1, b.y1),
        Point2::new(b.x2, b.y1),
        Point2::new(b.x2, b.y2),
        Point2::new(b.x1, b.y2),
    ]
    .map(|p| h.apply(p));
    let mut hull = BBox {
        x1: f64::INFINITY,
        y1: f64::INFINITY,
        x2: f64::NEG_INFINITY,
        y2: f64::NEG_INFINITY,
        class_id: b.class_id,
    };
    for p in pts {
        let p = p.ok()?;
        hull.x1 = hull.x1.min(p.x);
        hull.y1 = hull.y1.min(p.y);
        hull.x2 = hull.x2.max(p.x);
        hull.y2 = hull.y2.max(p.y);
    }
    hull.clamped(width, height)
}

/// Pairs whose cell centers correspond within half a cell in both
/// directions; out-of-view cells are excluded.
pub fn derive_gt_matches(h_gt: &Homography, h: usize, w: usize, stride: f64) -> Result<Vec<(usize, usize)>> {
    let inv = h_gt.inverse()?;
    let nearest = |hom: &Homography, cell: usize| -> Option<(usize, f64)> {
        let (r, c) = (cell / w, cell % w);
        let p = hom
            .apply(Point2::new((c as f64 + 0.5) * stride, (r as f64 + 0.5) * stride))
            .ok()?;
        let (u, v) = (p.x / stride - 0.5, p.y / stride - 0.5);
        let (cu, cv) = (u.round(), v.round());
        if !(cu >= 0.0 && cv >= 0.0 && cu < w as f64 && cv < h as f64) {
            return None;
        }
        let d = ((u - cu).powi(2) + (v - cv).powi(2)).sqrt();
        Some((cv as usize * w + cu as usize, d))
    };
    let mut out = Vec::new();
    for t in 0..h * w {
        let Some((r, d)) = nearest(&inv, t) else {
            continue;
        };
        if d > MATCH_RADIUS {
            continue;
        }
        if nearest(h_gt, r).map(|(back, _)| back) == Some(t) {
            out.push((t, r));
        }
    }
    Ok(out)
}

/// Warps a reference scene by a random perspective transform and re-samples
/// noise on the target.
pub fn make_pair<R: Rng + ?Sized>(
    reference: &FeatureGrid,
    boxes_r: &[BBox],
    spec: &SceneSpec,
    rng: &mut R,
) -> Result<SceneSample> {
    spec.validate()?;
    let (h, w) = (reference.height(), reference.width());
    let (wf, hf) = (w as f64, h as f64);
    let h_gt = if spec.warp_magnitude == 0.0 {
        Homography::IDENTITY
    } else {
        homography_from_corners(wf, hf, &sample_corners(spec, rng)?)?
    };
    let warped = warp_grid(reference, &h_gt, 1.0, 0.0)?;
    let noise = gaussian_matrix(h * w, reference.channels(), spec.noise_sigma, rng);
    let tgt_grid = FeatureGrid::new(h, w, warped.into_values().add(&noise)?)?;
    let mut boxes_t = Vec::new();
    let mut visible = Vec::new();
    for b in boxes_r {
        match warp_box(b, &h_gt, wf, hf) {
            Some(t) => {
                boxes_t.push(t);
                visible.push(true);
            }
            None => visible.push(false),
        }
    }
    Ok(SceneSample {
        ref_grid: reference.clone(),
        tgt_grid,
        h_gt,
        boxes_r: boxes_r.to_vec(),
        boxes_t,
        visible,
        gt_matches: derive_gt_matches(&h_gt, h, w, 1.0)?,
    })
}
