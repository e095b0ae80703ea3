use serde::{Deserialize, Serialize};

use crate::minidet::decode::{iou, Detection};
use crate::weightgen::BBox;

/// Recall points of the interpolated precision curve.
const RECALL_POINTS: usize = 101;

/// `0.50, 0.55, ..., 0.95`.
pub fn coco_thresholds() -> Vec<f64> {
    (0..10).map(|k| f64::from(50 + 5 * k) / 100.0).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ApReport {
    pub thresholds: Vec<f64>,
    /// AP at each threshold, averaged over classes with ground truth.
    pub per_threshold: Vec<f64>,
    pub ap: f64,
    pub ap50: f64,
    pub ap75: f64,
}

/// One image: its detections and its ground-truth boxes.
#[derive(Clone, Debug, Default)]
pub struct EvalImage {
    pub detections: Vec<Detection>,
    pub ground_truth: Vec<BBox>,
}

fn class_ap(images: &[EvalImage], class: usize, thr: f64) -> Option<f64> {
    let n_gt: usize = images
        .iter()
        .map(|im| im.ground_truth.iter().filter(|g| g.class_id == class).count())
        .sum();
    if n_gt == 0 {
        return None;
    }
    let mut dets: Vec<(usize, &Detection)> = images
        .iter()
        .enumerate()
        .flat_map(|(k, im)| im.detections.iter().filter(|d| d.bbox.class_id == class).map(move |d| (k, d)))
        .collect();
    // stable: equal scores keep image then detection order
    dets.sort_by(|a, b| b.1.score.total_cmp(&a.1.score));

    let mut used: Vec<Vec<bool>> = images.iter().map(|im| vec![false; im.ground_truth.len()]).collect();
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut precision = Vec::with_capacity(dets.len());
    let mut recall = Vec::with_capacity(dets.len());
    for (k, d) in dets {
        let mut best: Option<(usize, f64)> = None;
        for (g, gt) in images[k].ground_truth.iter().enumerate() {
            if gt.class_id != class || used[k][g] {
                continue;
            }
            let o = iou(&d.bbox, gt);
            if o >= thr && best.is_none_or(|(_, b)| o > b) {
                best = Some((g, o));
            }
        }
        match best {
            Some((g, _)) => {
                used[k][g] = true;
                tp += 1;
            }
            None => fp += 1,
        }
        precision.push(tp as f64 / (tp + fp) as f64);
        recall.push(tp as f64 / n_gt as f64);
    }
    for i in (0..precision.len().saturating_sub(1)).rev() {
        precision[i] = precision[i].max(precision[i + 1]);
    }
    let mut total = 0.0;
    for k in 0..RECALL_POINTS {
        let r = k as f64 / (RECALL_POINTS - 1) as f64;
        let idx = recall.partition_point(|&x| x < r - 1e-12);
        if idx < precision.len() {
            total += precision[idx];
        }
    }
    Some(total / RECALL_POINTS as f64)
}

/// COCO-style AP over a set of images. Classes without ground truth are
/// skipped; with no ground truth at all every AP is 0.
pub fn average_precision(images: &[EvalImage], thresholds: &[f64]) -> ApReport {
    let mut classes: Vec<usize> = images
        .iter()
        .flat_map(|im| im.ground_truth.iter().map(|g| g.class_id))
        .collect();
    classes.sort_unstable();
    classes.dedup();
    let per_threshold: Vec<f64> = thresholds
        .iter()
        .map(|&thr| {
            let aps: Vec<f64> = classes.iter().filter_map(|&c| class_ap(images, c, thr)).collect();
            if aps.is_empty() {
                0.0
            } else {
                aps.iter().sum::<f64>() / aps.len() as f64
            }
        })
        .collect();
    let at = |x: f64| {
        thresholds
            .iter()
            .position(|&t| (t - x).abs() < 1e-9)
            .map_or(f64::NAN, |k| per_threshold[k])
    };
    let ap = if per_threshold.is_empty() {
        0.0
    } else {
        per_threshold.iter().sum::<f64>() / per_threshold.len() as f64
    };
    ApReport {
        thresholds: thresholds.to_vec(),
        ap,
        ap50: at(0.5),
        ap75: at(0.75),
        per_threshold,
    }
}
