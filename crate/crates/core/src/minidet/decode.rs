use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::minidet::head::DetPreds;
use crate::numerics::{logistic, softmax_rows};
use crate::weightgen::BBox;

pub const DEFAULT_SCORE_THRESH: f64 = 0.05;
pub const DEFAULT_NMS_IOU: f64 = 0.6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    #[serde(flatten)]
    pub bbox: BBox,
    pub score: f64,
}

pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let iw = (a.x2.min(b.x2) - a.x1.max(b.x1)).max(0.0);
    let ih = (a.y2.min(b.y2) - a.y1.max(b.y1)).max(0.0);
    let inter = iw * ih;
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        (inter / union).clamp(0.0, 1.0)
    }
}

/// Greedy per-class suppression: a box is dropped when its IoU with a kept,
/// higher-scoring box of the same class reaches `iou_thresh`.
pub fn nms(mut dets: Vec<Detection>, iou_thresh: f64) -> Vec<Detection> {
    dets.sort_by(|a, b| b.score.total_cmp(&a.score));
    let mut kept: Vec<Detection> = Vec::new();
    for d in dets {
        let clash = kept
            .iter()
            .any(|k| k.bbox.class_id == d.bbox.class_id && iou(&k.bbox, &d.bbox) >= iou_thresh);
        if !clash {
            kept.push(d);
        }
    }
    kept
}

/// Boxes from every cell scoring at least `score_thresh`, after NMS, in
/// descending score order. Boxes are clipped to the image.
pub fn decode_detections(
    preds: &DetPreds,
    stride: f64,
    score_thresh: f64,
    nms_iou: f64,
) -> Result<Vec<Detection>> {
    if !(0.0..=1.0).contains(&score_thresh) || !(0.0..=1.0).contains(&nms_iou) {
        return Err(Error::InvalidArgument("thresholds must lie in [0, 1]".into()));
    }
    let (h, w) = (preds.h, preds.w);
    let probs = softmax_rows(&preds.cls_logits);
    let (width, height) = (w as f64 * stride, h as f64 * stride);
    let mut dets = Vec::new();
    for i in 0..h * w {
        let row = probs.row(i);
        let (k, pk) = row
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (k, &v)| if v > acc.1 { (k, v) } else { acc });
        let score = logistic(preds.obj_logits.get(i, 0)) * pk;
        if score < score_thresh {
            continue;
        }
        let (cx, cy) = (((i % w) as f64 + 0.5) * stride, ((i / w) as f64 + 0.5) * stride);
        let o = preds.log_offsets.row(i);
        let raw = BBox {
            x1: cx - o[0].exp() * stride,
            y1: cy - o[1].exp() * stride,
            x2: cx + o[2].exp() * stride,
            y2: cy + o[3].exp() * stride,
            class_id: k + 1,
        };
        if let Some(bbox) = raw.clamped(width, height) {
            dets.push(Detection { bbox, score });
        }
    }
    Ok(nms(dets, nms_iou))
}
