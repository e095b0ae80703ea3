use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{warp_cells, warp_grid, Homography};
use crate::weightgen::types::{BBox, SegMask, WeightMap};

/// Mask probability that must be exceeded for a cell to count as foreground.
pub const MASK_THRESHOLD: f64 = 0.5;

/// How much reference-side box information is available at inference.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Setting {
    /// Ground-truth reference boxes are given.
    GtBoxR,
    /// Reference boxes come from an earlier prediction.
    PreBoxR,
    /// No reference boxes.
    NoBoxR,
}

impl Setting {
    pub const ALL: [Setting; 3] = [Setting::GtBoxR, Setting::PreBoxR, Setting::NoBoxR];

    pub fn as_str(self) -> &'static str {
        match self {
            Setting::GtBoxR => "gtboxr",
            Setting::PreBoxR => "preboxr",
            Setting::NoBoxR => "noboxr",
        }
    }
}

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Setting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gtboxr" => Ok(Setting::GtBoxR),
            "preboxr" => Ok(Setting::PreBoxR),
            "noboxr" => Ok(Setting::NoBoxR),
            other => Err(Error::InvalidArgument(format!("unknown setting {other:?}"))),
        }
    }
}

/// Whatever the weight generators may draw on; which fields are required
/// depends on the [`Setting`].
#[derive(Clone, Copy, Debug, Default)]
pub struct MapInputs<'a> {
    pub gt_boxes_r: Option<&'a [BBox]>,
    pub pred_boxes_r: Option<&'a [BBox]>,
    pub mask_t: Option<&'a SegMask>,
    pub mask_r: Option<&'a SegMask>,
}

fn require<'a, T: ?Sized>(v: Option<&'a T>, setting: Setting, what: &str) -> Result<&'a T> {
    v.ok_or_else(|| Error::MissingInput {
        setting: setting.to_string(),
        what: what.to_string(),
    })
}

fn check_emphasis(alpha: f64) -> Result<()> {
    if alpha >= 0.0 && alpha.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("emphasis must be >= 0, got {alpha}")))
    }
}

/// Whether cell `(r, c)`'s center lies strictly inside a box.
pub fn cell_in_box(b: &BBox, r: usize, c: usize, stride: f64) -> bool {
    b.contains((c as f64 + 0.5) * stride, (r as f64 + 0.5) * stride)
}

/// Indicator of cells covered by the union of `boxes`.
pub fn box_union_cells(boxes: &[BBox], h: usize, w: usize, stride: f64) -> Vec<bool> {
    (0..h * w)
        .map(|i| boxes.iter().any(|b| cell_in_box(b, i / w, i % w, stride)))
        .collect()
}

/// `1 + alpha` on cells whose centers lie inside any box, 1 elsewhere.
pub fn map_from_boxes(boxes: &[BBox], h: usize, w: usize, stride: f64, alpha: f64) -> Result<WeightMap> {
    check_emphasis(alpha)?;
    let values = box_union_cells(boxes, h, w, stride)
        .into_iter()
        .map(|inside| if inside { 1.0 + alpha } else { 1.0 })
        .collect();
    WeightMap::new(h, w, values)
}

/// `1 + alpha` where the mask exceeds 0.5, 1 elsewhere.
pub fn map_from_mask(mask: &SegMask, alpha: f64) -> Result<WeightMap> {
    check_emphasis(alpha)?;
    let values = mask
        .probs
        .iter()
        .map(|&p| if p > MASK_THRESHOLD { 1.0 + alpha } else { 1.0 })
        .collect();
    WeightMap::new(mask.h, mask.w, values)
}

/// Maps `(M_t, M_r)` for the two-view attention module.
pub fn generate_wam_maps(
    setting: Setting,
    inputs: &MapInputs<'_>,
    h: usize,
    w: usize,
    stride: f64,
    alpha1: f64,
) -> Result<(WeightMap, WeightMap)> {
    match setting {
        Setting::GtBoxR | Setting::PreBoxR => {
            let boxes = if setting == Setting::GtBoxR {
                require(inputs.gt_boxes_r, setting, "ground-truth reference boxes")?
            } else {
                require(inputs.pred_boxes_r, setting, "predicted reference boxes")?
            };
            let mask_t = require(inputs.mask_t, setting, "target mask")?;
            Ok((
                map_from_mask(mask_t, alpha1)?,
                map_from_boxes(boxes, h, w, stride, alpha1)?,
            ))
        }
        Setting::NoBoxR => {
            let mask_t = require(inputs.mask_t, setting, "target mask")?;
            let mask_r = require(inputs.mask_r, setting, "reference mask")?;
            Ok((map_from_mask(mask_t, alpha1)?, map_from_mask(mask_r, alpha1)?))
        }
    }
}

/// Maps `(M_t, M_r)` for the spatial attention module. With reference boxes
/// the target map is the reference map pushed through `h_prime`; without
/// them both mask maps are cross-refined through `h_prime` in one
/// simultaneous step.
pub fn generate_wsam_maps(
    setting: Setting,
    inputs: &MapInputs<'_>,
    h_prime: &Homography,
    h: usize,
    w: usize,
    stride: f64,
    alpha2: f64,
) -> Result<(WeightMap, WeightMap)> {
    match setting {
        Setting::GtBoxR | Setting::PreBoxR => {
            let boxes = if setting == Setting::GtBoxR {
                require(inputs.gt_boxes_r, setting, "ground-truth reference boxes")?
            } else {
                require(inputs.pred_boxes_r, setting, "predicted reference boxes")?
            };
            let m_r = map_from_boxes(boxes, h, w, stride, alpha2)?;
            let m_t = warp_grid(&m_r, h_prime, stride, 1.0)?;
            Ok((m_t, m_r))
        }
        Setting::NoBoxR => {
            let m_t0 = map_from_mask(require(inputs.mask_t, setting, "target mask")?, alpha2)?;
            let m_r0 = map_from_mask(require(inputs.mask_r, setting, "reference mask")?, alpha2)?;
            let inv = h_prime.inverse()?;
            let to_r = warp_cells(m_t0.column(), h, w, &inv, stride, 0.0)?;
            let to_t = warp_cells(m_r0.column(), h, w, h_prime, stride, 0.0)?;
            let m_r = m_r0.column().add(&to_r)?;
            let m_t = m_t0.column().add(&to_t)?;
            Ok((
                WeightMap::new(h, w, m_t.into_vec())?.with_baseline(2.0),
                WeightMap::new(h, w, m_r.into_vec())?.with_baseline(2.0),
            ))
        }
    }
}

/// Maps for the match filter: predicted target boxes on one side, the
/// foreground support of the spatial module's reference map on the other,
/// both at `1 + beta` over a baseline of 1.
pub fn box_filter_maps(
    pred_boxes_t: &[BBox],
    wsam_m_r: &WeightMap,
    beta: f64,
    stride: f64,
) -> Result<(WeightMap, WeightMap)> {
    check_emphasis(beta)?;
    let (h, w) = (wsam_m_r.height(), wsam_m_r.width());
    let m_t = map_from_boxes(pred_boxes_t, h, w, stride, beta)?;
    let values = (0..h * w)
        .map(|i| if wsam_m_r.is_foreground(i) { 1.0 + beta } else { 1.0 })
        .collect();
    Ok((m_t, WeightMap::new(h, w, values)?))
}
