use crate::attention::{wam_forward, wsam_forward};
use crate::error::Result;
use crate::geometry::{ransac_homography, Homography, RansacParams};
use crate::harness::config::ExperimentConfig;
use crate::harness::model::Model;
use crate::matchhead::{apply_box_filter_var, dual_softmax_var, matcher_loss_var, mnn_select, score_var};
use crate::minidet::{
    assign_targets, decode_detections, det_head_var, detection_loss_var, DetPreds, Detection,
};
use crate::numerics::{Matrix, Tape, Var};
use crate::params::Bound;
use crate::synthdata::SceneSample;
use crate::weightgen::{
    box_filter_maps, box_projection_loss_var, generate_wam_maps, generate_wsam_maps,
    light_decoder_var, BBox, MapInputs, SegMask, Setting, WeightMap,
};

/// One pixel per cell throughout the pipeline.
pub const STRIDE: f64 = 1.0;

#[derive(Clone, Copy, Debug)]
pub struct LossVars {
    pub total: Var,
    pub matcher: Var,
    pub det_t: Var,
    pub det_r: Var,
    pub mask: Option<Var>,
}

#[derive(Clone, Debug)]
pub struct StageOutputs {
    pub loss: Option<LossVars>,
    /// Final match probabilities, target cells by reference cells.
    pub p: Matrix,
    pub det_t: DetPreds,
    pub h_prime: Option<Homography>,
    pub interim_failed: bool,
}

/// MNN selection plus RANSAC; `None` with fewer than four matches or when
/// estimation fails.
pub fn estimate_homography(p: &Matrix, w: usize, cfg: &ExperimentConfig) -> Option<Homography> {
    let matches = mnn_select(p, cfg.theta).ok()?;
    let corrs = matches.correspondences(w, w, STRIDE);
    if corrs.len() < 4 {
        return None;
    }
    let params = RansacParams {
        iters: cfg.ransac_iters,
        inlier_px: cfg.ransac_inlier_px,
        seed: cfg.seed,
        ..RansacParams::default()
    };
    ransac_homography(&corrs, &params).ok().map(|f| f.homography)
}

/// Boxes of detections scoring at least `min_score`.
fn confident_boxes(dets: &[Detection], min_score: f64) -> Vec<BBox> {
    dets.iter().filter(|d| d.score >= min_score).map(|d| d.bbox).collect()
}

/// 2D sinusoidal encoding, `hw x c`. Channel `4j + m` holds sin x, cos x,
/// sin y, cos y at frequency `10000^(-4j / c)` for 1-based cell coordinates;
/// channels past the last full group of four are zero.
pub fn positional_encoding(h: usize, w: usize, c: usize) -> Matrix {
    let half = (c / 2) as f64;
    Matrix::from_fn(h * w, c, |cell, ch| {
        let (j, m) = (ch / 4, ch % 4);
        if j >= c / 4 {
            return 0.0;
        }
        let freq = (-((2 * j) as f64) * 10000f64.ln() / half).exp();
        let x = (cell % w + 1) as f64 * freq;
        let y = (cell / w + 1) as f64 * freq;
        match m {
            0 => x.sin(),
            1 => x.cos(),
            2 => y.sin(),
            _ => y.cos(),
        }
    })
}

fn map_var(t: &mut Tape, m: &WeightMap) -> Var {
    t.constant(m.column().clone())
}

fn mask_of(t: &Tape, probs: Var, h: usize, w: usize) -> Result<SegMask> {
    SegMask::new(h, w, t.value(probs).data().to_vec())
}

/// Builds the pipeline for `model.variant` on the tape. Losses are added
/// when `with_loss` is set.
pub fn forward(
    t: &mut Tape,
    b: &Bound,
    model: &Model,
    sample: &SceneSample,
    setting: Setting,
    cfg: &ExperimentConfig,
    with_loss: bool,
) -> Result<StageOutputs> {
    let (h, w) = (sample.tgt_grid.height(), sample.tgt_grid.width());
    let variant = model.variant;

    // stage 1: shared backbone
    let project = |t: &mut Tape, x: &Matrix| -> Result<Var> {
        let x = t.constant(x.clone());
        let y = t.matmul(x, b.var(model.backbone.w))?;
        t.add(y, b.var(model.backbone.b))
    };
    let f_t = project(t, sample.tgt_grid.values())?;
    let f_r = project(t, sample.ref_grid.values())?;

    let need_ref_det = with_loss || (variant.uses_wam() && setting == Setting::PreBoxR);
    let ref_out = if need_ref_det {
        Some(det_head_var(t, b, &model.det, f_r)?)
    } else {
        None
    };

    let mut mask_loss = None;
    let mut interim_failed = false;
    let mut h_prime = None;
    let (p, out_t) = if let (Some(dec), Some(wam)) = (&model.decoder, &model.wam) {
        let probs_t = light_decoder_var(t, b, dec, f_t)?;
        let probs_r = light_decoder_var(t, b, dec, f_r)?;
        let mask_t = mask_of(t, probs_t, h, w)?;
        let mask_r = mask_of(t, probs_r, h, w)?;
        if with_loss {
            let lt = box_projection_loss_var(t, probs_t, &sample.boxes_t, h, w, STRIDE)?;
            let lr = box_projection_loss_var(t, probs_r, &sample.boxes_r, h, w, STRIDE)?;
            let l = t.add(lt, lr)?;
            mask_loss = Some(t.scale(l, cfg.mask_weight));
        }
        let pred_r = match (setting, ref_out) {
            (Setting::PreBoxR, Some(out)) => {
                let preds = DetPreds::from_tape(t, &out, h, w);
                let dets = decode_detections(&preds, STRIDE, cfg.score_thresh, cfg.nms_iou)?;
                Some(confident_boxes(&dets, cfg.box_score_thresh))
            }
            _ => None,
        };
        let inputs = MapInputs {
            gt_boxes_r: Some(&sample.boxes_r),
            pred_boxes_r: pred_r.as_deref(),
            mask_t: Some(&mask_t),
            mask_r: Some(&mask_r),
        };

        // stage 2: weighted attention and interim estimate
        let (m_t, m_r) = generate_wam_maps(setting, &inputs, h, w, STRIDE, cfg.alpha1)?;
        let (vm_t, vm_r) = (map_var(t, &m_t), map_var(t, &m_r));
        let (g_t, g_r) = if cfg.pe_scale > 0.0 {
            let pe = t.constant(positional_encoding(h, w, cfg.scene.c).scale(cfg.pe_scale));
            (t.add(f_t, pe)?, t.add(f_r, pe)?)
        } else {
            (f_t, f_r)
        };
        let (c_t, c_r) = wam_forward(t, b, wam, g_t, g_r, vm_t, vm_r)?;
        let s = score_var(t, c_t, c_r, cfg.tau)?;
        let p = dual_softmax_var(t, s)?;

        // stage 3: spatial attention feeding the detector
        let needs_interim = variant.uses_wsam() || (variant.uses_box_filter() && setting == Setting::NoBoxR);
        let wsam_maps = if variant.uses_wsam() || variant.uses_box_filter() {
            let hp = if needs_interim {
                estimate_homography(t.value(p), w, cfg).unwrap_or_else(|| {
                    interim_failed = true;
                    Homography::IDENTITY
                })
            } else {
                Homography::IDENTITY
            };
            h_prime = needs_interim.then_some(hp);
            Some(generate_wsam_maps(setting, &inputs, &hp, h, w, STRIDE, cfg.alpha2)?)
        } else {
            None
        };
        let det_in = match (&model.wsam, &wsam_maps) {
            (Some(ws), Some((wm_t, wm_r))) => {
                let (vt, vr) = (map_var(t, wm_t), map_var(t, wm_r));
                wsam_forward(t, b, ws, f_t, f_r, vt, vr)?
            }
            _ => f_t,
        };

        // stage 4: box filter from the target detections
        let out_t = det_head_var(t, b, &model.det, det_in)?;
        let p = match (&wsam_maps, variant.uses_box_filter()) {
            (Some((_, wm_r)), true) => {
                let preds = DetPreds::from_tape(t, &out_t, h, w);
                let dets = decode_detections(&preds, STRIDE, cfg.score_thresh, cfg.nms_iou)?;
                let boxes = confident_boxes(&dets, cfg.box_score_thresh);
                let (mh_t, mh_r) = box_filter_maps(&boxes, wm_r, cfg.beta, STRIDE)?;
                apply_box_filter_var(t, p, &mh_t, &mh_r)?
            }
            _ => p,
        };
        (p, out_t)
    } else {
        let s = score_var(t, f_t, f_r, cfg.tau)?;
        (dual_softmax_var(t, s)?, det_head_var(t, b, &model.det, f_t)?)
    };

    let loss = if with_loss {
        let matcher = matcher_loss_var(t, p, &sample.gt_matches)?;
        let targets_t = assign_targets(&sample.boxes_t, h, w, STRIDE);
        let det_t = detection_loss_var(t, &out_t, &targets_t, STRIDE, cfg.lambda_reg)?.total;
        let targets_r = assign_targets(&sample.boxes_r, h, w, STRIDE);
        let ref_out = ref_out.expect("reference head runs with losses");
        let det_r = detection_loss_var(t, &ref_out, &targets_r, STRIDE, cfg.lambda_reg)?.total;
        let det = t.add(det_t, det_r)?;
        let det = t.scale(det, cfg.lambda);
        let mut total = t.add(matcher, det)?;
        if let Some(m) = mask_loss {
            total = t.add(total, m)?;
        }
        Some(LossVars {
            total,
            matcher,
            det_t,
            det_r,
            mask: mask_loss,
        })
    } else {
        None
    };
    Ok(StageOutputs {
        loss,
        p: t.value(p).clone(),
        det_t: DetPreds::from_tape(t, &out_t, h, w),
        h_prime,
        interim_failed,
    })
}

/// Evaluation-time predictions for one pair.
#[derive(Clone, Debug)]
pub struct Prediction {
    pub detections: Vec<Detection>,
    pub homography: Option<Homography>,
    pub matches: usize,
    pub interim_failed: bool,
}

pub fn predict(model: &Model, sample: &SceneSample, setting: Setting, cfg: &ExperimentConfig) -> Result<Prediction> {
    let mut t = Tape::new();
    let b = model.store.bind(&mut t, false);
    let out = forward(&mut t, &b, model, sample, setting, cfg, false)?;
    let w = sample.tgt_grid.width();
    Ok(Prediction {
        detections: decode_detections(&out.det_t, STRIDE, cfg.score_thresh, cfg.nms_iou)?,
        homography: estimate_homography(&out.p, w, cfg),
        matches: mnn_select(&out.p, cfg.theta)?.len(),
        interim_failed: out.interim_failed,
    })
}
