//! A small dense detector: per-cell affine heads for class, objectness and
//! box offsets, center-sampling target assignment, a cross-entropy plus L1
//! loss, NMS decoding and COCO-style average precision.

mod ap;
mod decode;
mod head;

pub use ap::{average_precision, coco_thresholds, ApReport, EvalImage};
pub use decode::{decode_detections, iou, nms, Detection, DEFAULT_NMS_IOU, DEFAULT_SCORE_THRESH};
pub use head::{
    assign_targets, det_head, det_head_var, detection_loss_var, DenseTargets, DetLossVars,
    DetOutputs, DetParams, DetPreds, OBJ_PRIOR_LOGIT,
};
