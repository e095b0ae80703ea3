use matchdet::attention::FeatureGrid;
use matchdet::minidet::{
    assign_targets, average_precision, coco_thresholds, decode_detections, det_head, det_head_var,
    detection_loss_var, iou, nms, DetOutputs, DetParams, DetPreds, Detection, EvalImage,
};
use matchdet::numerics::{check_gradients, Matrix, Tape, DEFAULT_STEP};
use matchdet::params::{Bound, ParamStore};
use matchdet::weightgen::BBox;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn bx(x1: f64, y1: f64, x2: f64, y2: f64, class: usize) -> BBox {
    BBox::new(x1, y1, x2, y2, class).unwrap()
}

fn det(b: BBox, score: f64) -> Detection {
    Detection { bbox: b, score }
}

fn head(c: usize, classes: usize, seed: u64) -> (ParamStore, DetParams) {
    let mut store = ParamStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = DetParams::init(&mut store, "det", c, classes, &mut rng);
    (store, p)
}

fn random_grid(rng: &mut ChaCha8Rng, h: usize, w: usize, c: usize) -> FeatureGrid {
    FeatureGrid::new(h, w, Matrix::from_fn(h * w, c, |_, _| rng.gen_range(-1.0..1.0))).unwrap()
}

#[test]
fn head_emits_one_row_per_cell() {
    let (store, p) = head(6, 3, 0);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let out = det_head(&random_grid(&mut rng, 3, 5, 6), &store, &p).unwrap();
    assert_eq!(out.cls_logits.shape(), (15, 3));
    assert_eq!(out.obj_logits.shape(), (15, 1));
    assert_eq!(out.log_offsets.shape(), (15, 4));
}

#[test]
fn zero_params_give_half_objectness_and_unit_offsets() {
    let (mut store, p) = head(4, 2, 0);
    for m in store.values_mut() {
        *m = Matrix::zeros(m.rows(), m.cols());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let out = det_head(&random_grid(&mut rng, 2, 2, 4), &store, &p).unwrap();
    for i in 0..4 {
        assert_eq!(matchdet::numerics::logistic(out.obj_logits.get(i, 0)), 0.5);
        assert!(out.log_offsets.row(i).iter().all(|o| o.exp() == 1.0));
    }
}

#[test]
fn head_and_loss_pass_gradient_checks() {
    let (h, w, c, classes, stride) = (3, 3, 5, 3, 4.0);
    let (store, p) = head(c, classes, 3);
    let boxes = [bx(0.0, 0.0, 8.0, 12.0, 1), bx(4.5, 3.0, 12.0, 12.0, 3)];
    let targets = assign_targets(&boxes, h, w, stride);
    assert!(targets.positives() > 0 && targets.positives() < h * w);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..10 {
        let mut inputs = vec![random_grid(&mut rng, h, w, c).into_values()];
        for m in store.values() {
            inputs.push(Matrix::from_fn(m.rows(), m.cols(), |r, k| m.get(r, k) + rng.gen_range(-0.3..0.3)));
        }
        let check = check_gradients(&inputs, DEFAULT_STEP, |t, v| {
            let b = Bound::from_vars(v[1..].to_vec());
            let out = det_head_var(t, &b, &p, v[0])?;
            Ok(detection_loss_var(t, &out, &targets, stride, 1.0)?.total)
        })
        .unwrap();
        assert!(check.relative_error < 1e-5, "{check:?}");
    }
}

#[test]
fn assignment_closed_forms() {
    let none = assign_targets(&[], 4, 4, 2.0);
    assert!(none.positive.iter().all(|&p| !p));
    let all = assign_targets(&[bx(0.0, 0.0, 8.0, 8.0, 2)], 4, 4, 2.0);
    assert!(all.positive.iter().all(|&p| p));
    assert!(all.assigned.iter().all(|&a| a == Some(0)));
    assert!(all.class_id.iter().all(|&k| k == 2));
    // cell (0,0) center (1,1): distances 1, 1, 7, 7
    assert_eq!(all.regression[0], [1.0, 1.0, 7.0, 7.0]);
}

#[test]
fn nested_boxes_go_to_the_smaller_one() {
    let boxes = [bx(0.0, 0.0, 8.0, 8.0, 1), bx(2.0, 2.0, 6.0, 6.0, 2)];
    let t = assign_targets(&boxes, 4, 4, 2.0);
    for r in 0..4 {
        for c in 0..4 {
            let (x, y) = (2.0 * c as f64 + 1.0, 2.0 * r as f64 + 1.0);
            let inner = x > 2.0 && x < 6.0 && y > 2.0 && y < 6.0;
            assert_eq!(t.assigned[r * 4 + c], Some(usize::from(inner)));
        }
    }
}

#[test]
fn assignment_matches_brute_force_on_8x8() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..500 {
        let n = rng.gen_range(0..5);
        let boxes: Vec<BBox> = (0..n)
            .map(|_| {
                let x1 = f64::from(rng.gen_range(0..8u8));
                let y1 = f64::from(rng.gen_range(0..8u8));
                let x2 = x1 + f64::from(rng.gen_range(1..=8u8));
                let y2 = y1 + f64::from(rng.gen_range(1..=8u8));
                bx(x1, y1, x2, y2, rng.gen_range(1..=3))
            })
            .collect();
        let t = assign_targets(&boxes, 8, 8, 1.0);
        for i in 0..64 {
            let (x, y) = ((i % 8) as f64 + 0.5, (i / 8) as f64 + 0.5);
            let mut best: Option<usize> = None;
            for (k, b) in boxes.iter().enumerate() {
                let inside = x > b.x1 && x < b.x2 && y > b.y1 && y < b.y2;
                if inside && best.is_none_or(|j| b.area() < boxes[j].area()) {
                    best = Some(k);
                }
            }
            assert_eq!(t.assigned[i], best);
            if let Some(k) = best {
                assert!(boxes[k].contains(x, y));
                assert!(t.regression[i].iter().all(|&d| d > 0.0));
                assert_eq!(t.class_id[i], boxes[k].class_id);
            }
        }
    }
}

fn loss_of(out: (Matrix, Matrix, Matrix), boxes: &[BBox], h: usize, w: usize) -> f64 {
    let targets = assign_targets(boxes, h, w, 1.0);
    let mut t = Tape::new();
    let o = DetOutputs {
        cls: t.constant(out.0),
        obj: t.constant(out.1),
        reg: t.constant(out.2),
    };
    let l = detection_loss_var(&mut t, &o, &targets, 1.0, 1.0).unwrap();
    t.scalar_value(l.total).unwrap()
}

#[test]
fn all_negative_half_objectness_costs_ln2() {
    let l = loss_of((Matrix::zeros(6, 2), Matrix::zeros(6, 1), Matrix::zeros(6, 4)), &[], 2, 3);
    assert!((l - std::f64::consts::LN_2).abs() < 1e-9);
}

#[test]
fn perfect_predictions_cost_nothing() {
    let (h, w) = (4, 4);
    let boxes = [bx(0.0, 0.0, 2.0, 3.0, 2), bx(2.0, 1.0, 4.0, 4.0, 1)];
    let t = assign_targets(&boxes, h, w, 1.0);
    let cls = Matrix::from_fn(h * w, 2, |i, k| if t.class_id[i] == k + 1 { 40.0 } else { -40.0 });
    let obj = Matrix::from_fn(h * w, 1, |i, _| if t.positive[i] { 40.0 } else { -40.0 });
    let reg = Matrix::from_fn(h * w, 4, |i, k| {
        if t.positive[i] {
            t.regression[i][k].ln()
        } else {
            0.0
        }
    });
    assert!(loss_of((cls, obj, reg), &boxes, h, w) < 1e-6);
}

fn preds(h: usize, w: usize, obj: f64) -> DetPreds {
    DetPreds {
        h,
        w,
        cls_logits: Matrix::zeros(h * w, 2),
        obj_logits: Matrix::filled(h * w, 1, obj),
        log_offsets: Matrix::zeros(h * w, 4),
    }
}

#[test]
fn decoding_closed_forms() {
    assert!(decode_detections(&preds(3, 3, -10.0), 2.0, 0.05, 0.6).unwrap().is_empty());

    let mut p = preds(3, 3, -10.0);
    p.obj_logits.set(4, 0, 10.0);
    p.cls_logits.set(4, 1, 10.0);
    let d = decode_detections(&p, 2.0, 0.05, 0.6).unwrap();
    assert_eq!(d.len(), 1);
    // center (3,3), unit offsets scaled by the stride
    assert_eq!((d[0].bbox.x1, d[0].bbox.y1, d[0].bbox.x2, d[0].bbox.y2), (1.0, 1.0, 5.0, 5.0));
    assert_eq!(d[0].bbox.class_id, 2);
    assert!(d[0].score > 0.99);

    assert!(decode_detections(&p, 2.0, 1.5, 0.6).is_err());
}

#[test]
fn identical_boxes_collapse_under_nms() {
    let b = bx(0.0, 0.0, 4.0, 4.0, 1);
    let kept = nms(vec![det(b, 0.3), det(b, 0.9)], 0.6);
    assert_eq!(kept, vec![det(b, 0.9)]);
    let other = bx(0.0, 0.0, 4.0, 4.0, 2);
    assert_eq!(nms(vec![det(b, 0.3), det(other, 0.9)], 0.6).len(), 2);
}

#[test]
fn iou_closed_forms() {
    let a = bx(0.0, 0.0, 2.0, 2.0, 1);
    assert_eq!(iou(&a, &a), 1.0);
    assert_eq!(iou(&a, &bx(5.0, 5.0, 6.0, 6.0, 1)), 0.0);
    // overlap 2, union 6
    assert!((iou(&a, &bx(1.0, 0.0, 3.0, 2.0, 1)) - 1.0 / 3.0).abs() < 1e-15);
}

#[test]
fn ap_closed_forms() {
    let thr = coco_thresholds();
    assert_eq!(thr.len(), 10);
    let gt = vec![bx(0.0, 0.0, 4.0, 4.0, 1), bx(6.0, 6.0, 9.0, 9.0, 2)];
    let perfect = EvalImage {
        detections: gt.iter().map(|&b| det(b, 0.8)).collect(),
        ground_truth: gt.clone(),
    };
    let r = average_precision(&[perfect], &thr);
    assert!(r.per_threshold.iter().all(|&a| (a - 1.0).abs() < 1e-12));
    assert_eq!((r.ap, r.ap50, r.ap75), (1.0, 1.0, 1.0));

    let empty = EvalImage {
        detections: vec![],
        ground_truth: gt,
    };
    assert_eq!(average_precision(&[empty], &thr).ap, 0.0);

    // one TP at IoU 0.9 scored 0.9, then one FP scored 0.5
    let g = bx(0.0, 0.0, 10.0, 10.0, 1);
    let tp = bx(0.0, 0.0, 10.0, 9.0, 1);
    assert!((iou(&tp, &g) - 0.9).abs() < 1e-12);
    let img = EvalImage {
        detections: vec![det(tp, 0.9), det(bx(20.0, 20.0, 25.0, 25.0, 1), 0.5)],
        ground_truth: vec![g],
    };
    assert_eq!(average_precision(&[img], &thr).ap50, 1.0);
}

#[test]
fn ap_matches_hand_curve_with_interleaved_false_positive() {
    // FP first, then TP: precision 1/2 at full recall
    let g = bx(0.0, 0.0, 10.0, 10.0, 1);
    let img = EvalImage {
        detections: vec![det(bx(30.0, 30.0, 31.0, 31.0, 1), 0.9), det(g, 0.5)],
        ground_truth: vec![g],
    };
    let r = average_precision(&[img], &[0.5]);
    assert!((r.ap50 - 0.5).abs() < 1e-12);
}

#[test]
fn detection_json_mirrors_the_box_schema() {
    let d = det(bx(1.0, 2.0, 3.0, 4.0, 2), 0.75);
    let s = serde_json::to_string(&d).unwrap();
    assert_eq!(s, r#"{"x1":1.0,"y1":2.0,"x2":3.0,"y2":4.0,"class":2,"score":0.75}"#);
    assert_eq!(serde_json::from_str::<Detection>(&s).unwrap(), d);
}

fn arb_box() -> impl Strategy<Value = BBox> {
    (0.0..20.0f64, 0.0..20.0f64, 0.1..10.0f64, 0.1..10.0f64, 1..3usize)
        .prop_map(|(x, y, w, h, k)| bx(x, y, x + w, y + h, k))
}

proptest! {
    #[test]
    fn iou_is_symmetric_and_bounded(a in arb_box(), b in arb_box()) {
        let ab = iou(&a, &b);
        prop_assert_eq!(ab, iou(&b, &a));
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert!((iou(&a, &a) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn nms_leaves_no_overlapping_pairs(
        boxes in prop::collection::vec((arb_box(), 0.0..1.0f64), 0..20),
        thr in 0.1..0.9f64,
    ) {
        let kept = nms(boxes.into_iter().map(|(b, s)| det(b, s)).collect(), thr);
        for (i, a) in kept.iter().enumerate() {
            for b in &kept[i + 1..] {
                if a.bbox.class_id == b.bbox.class_id {
                    prop_assert!(iou(&a.bbox, &b.bbox) < thr);
                }
            }
        }
    }

    #[test]
    fn ap_depends_only_on_score_ranks(
        dets in prop::collection::vec((arb_box(), 0.01..1.0f64), 1..12),
        gts in prop::collection::vec(arb_box(), 1..5),
        scale in 0.01..5.0f64,
        shift in -3.0..3.0f64,
    ) {
        let thr = coco_thresholds();
        let base = EvalImage {
            detections: dets.iter().map(|&(b, s)| det(b, s)).collect(),
            ground_truth: gts.clone(),
        };
        let rescaled = EvalImage {
            detections: dets.iter().map(|&(b, s)| det(b, (s * scale + shift).exp())).collect(),
            ground_truth: gts,
        };
        let a = average_precision(&[base], &thr);
        let b = average_precision(&[rescaled], &thr);
        prop_assert_eq!(a.per_threshold, b.per_threshold);
    }
}
