use matchdet::geometry::Homography;
use matchdet::numerics::{check_gradients, Matrix, DEFAULT_STEP};
use matchdet::params::{Bound, ParamStore};
use matchdet::weightgen::{
    box_filter_maps, box_projection_loss, box_projection_loss_var, generate_wam_maps,
    generate_wsam_maps, light_decoder, light_decoder_var, map_from_boxes, map_from_mask, BBox,
    DecoderParams, MapInputs, SegMask, Setting, WeightMap,
};
use matchdet::{attention::FeatureGrid, Error};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn bx(x1: f64, y1: f64, x2: f64, y2: f64) -> BBox {
    BBox::new(x1, y1, x2, y2, 1).unwrap()
}

#[test]
fn box_maps_rasterize_cell_centers() {
    assert!(map_from_boxes(&[], 4, 4, 1.0, 1.0).unwrap().values().iter().all(|&v| v == 1.0));
    let full = map_from_boxes(&[bx(0.0, 0.0, 4.0, 4.0)], 4, 4, 1.0, 1.0).unwrap();
    assert!(full.values().iter().all(|&v| v == 2.0));
    let m = map_from_boxes(&[bx(1.0, 1.0, 3.0, 3.0)], 4, 4, 1.0, 1.0).unwrap();
    let fg: Vec<usize> = (0..16).filter(|&i| m.values()[i] == 2.0).collect();
    assert_eq!(fg, vec![5, 6, 9, 10]);
    assert_eq!(m.values().iter().filter(|&&v| v == 1.0).count(), 12);
    // stride 8: the same box in pixels
    let s = map_from_boxes(&[bx(8.0, 8.0, 24.0, 24.0)], 4, 4, 8.0, 1.0).unwrap();
    assert_eq!(s, m);
    assert!(map_from_boxes(&[], 2, 2, 1.0, -0.5).is_err());
}

#[test]
fn mask_maps_use_a_strict_threshold() {
    let zero = SegMask::zeros(2, 2);
    assert!(map_from_mask(&zero, 1.0).unwrap().values().iter().all(|&v| v == 1.0));
    let ones = SegMask::new(2, 2, vec![1.0; 4]).unwrap();
    assert!(map_from_mask(&ones, 1.0).unwrap().values().iter().all(|&v| v == 2.0));
    let half = SegMask::new(1, 3, vec![0.5, 0.5000001, 0.49]).unwrap();
    assert_eq!(map_from_mask(&half, 1.0).unwrap().values(), &[1.0, 2.0, 1.0]);
}

proptest! {
    #[test]
    fn adding_a_box_never_lowers_a_weight(
        boxes in prop::collection::vec((0.0f64..7.0, 0.0f64..7.0, 0.5f64..4.0, 0.5f64..4.0), 0..4),
        extra in (0.0f64..7.0, 0.0f64..7.0, 0.5f64..4.0, 0.5f64..4.0),
    ) {
        let to_box = |(x, y, w, h): (f64, f64, f64, f64)| bx(x, y, x + w, y + h);
        let mut bs: Vec<BBox> = boxes.into_iter().map(to_box).collect();
        let before = map_from_boxes(&bs, 8, 8, 1.0, 1.0).unwrap();
        bs.push(to_box(extra));
        let after = map_from_boxes(&bs, 8, 8, 1.0, 1.0).unwrap();
        for (a, b) in after.values().iter().zip(before.values()) {
            prop_assert!(a >= b);
        }
    }
}

fn decoder_setup(seed: u64, c: usize) -> (ParamStore, DecoderParams, ChaCha8Rng) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::new();
    let p = DecoderParams::init(&mut store, "dec", c, &mut rng);
    (store, p, rng)
}

#[test]
fn decoder_outputs_are_open_unit_probabilities() {
    let (store, p, mut rng) = decoder_setup(1, 6);
    let f = FeatureGrid::new(3, 4, Matrix::from_fn(12, 6, |_, _| rng.gen_range(-3.0..3.0))).unwrap();
    let a = light_decoder(&f, &store, &p).unwrap();
    let b = light_decoder(&f, &store, &p).unwrap();
    assert_eq!(a, b);
    assert!(a.probs.iter().all(|&x| x > 0.0 && x < 1.0));
    assert_eq!((a.h, a.w), (3, 4));
}

#[test]
fn decoder_gradients_match_finite_differences() {
    let (store, p, mut rng) = decoder_setup(2, 5);
    let n = store.len();
    for _ in 0..20 {
        let mut inputs: Vec<Matrix> = store
            .values()
            .iter()
            .map(|m| Matrix::from_fn(m.rows(), m.cols(), |_, _| rng.gen_range(-1.0..1.0)))
            .collect();
        inputs.push(Matrix::from_fn(9, 5, |_, _| rng.gen_range(-1.0..1.0)));
        let weights = Matrix::from_fn(9, 1, |_, _| rng.gen_range(-1.0..1.0));
        let check = check_gradients(&inputs, DEFAULT_STEP, |t, leaves| {
            let b = Bound::from_vars(leaves[..n].to_vec());
            let probs = light_decoder_var(t, &b, &p, leaves[n])?;
            let w = t.constant(weights.clone());
            let y = t.mul(probs, w)?;
            Ok(t.sum(y))
        })
        .unwrap();
        assert!(check.relative_error < 1e-5, "{}", check.relative_error);
    }
}

#[test]
fn projection_loss_closed_forms() {
    let boxes = [bx(1.0, 1.0, 3.0, 2.0)];
    let exact = SegMask::new(4, 4, (0..16).map(|i| if i == 5 || i == 6 { 1.0 } else { 0.0 }).collect())
        .unwrap();
    assert!(box_projection_loss(&exact, &boxes, 1.0).unwrap().abs() < 1e-12);
    let zero = SegMask::zeros(4, 4);
    let l = box_projection_loss(&zero, &boxes, 1.0).unwrap();
    assert!((l - 2.0).abs() < 1e-5, "{l}");
    let probs: Vec<f64> = (0..16).map(|i| i as f64 / 20.0).collect();
    let m = SegMask::new(4, 4, probs.clone()).unwrap();
    let mean = probs.iter().sum::<f64>() / 16.0;
    assert!((box_projection_loss(&m, &[], 1.0).unwrap() - mean).abs() < 1e-15);
}

#[test]
fn projection_loss_vanishes_exactly_when_projections_agree() {
    let configs = [vec![bx(1.0, 1.0, 3.0, 2.0)], vec![bx(0.0, 0.0, 2.0, 2.0), bx(2.0, 3.0, 4.0, 4.0)]];
    for boxes in configs {
        let inside: Vec<bool> = (0..16)
            .map(|i| boxes.iter().any(|b| b.contains((i % 4) as f64 + 0.5, (i / 4) as f64 + 0.5)))
            .collect();
        let proj = |cells: &dyn Fn(usize) -> bool| {
            let xs: Vec<bool> = (0..4).map(|c| (0..4).any(|r| cells(r * 4 + c))).collect();
            let ys: Vec<bool> = (0..4).map(|r| (0..4).any(|c| cells(r * 4 + c))).collect();
            (xs, ys)
        };
        let target = proj(&|i| inside[i]);
        for bits in 0u32..(1 << 16) {
            let probs: Vec<f64> = (0..16).map(|i| f64::from((bits >> i) & 1)).collect();
            let loss = box_projection_loss(&SegMask::new(4, 4, probs).unwrap(), &boxes, 1.0).unwrap();
            let agrees = proj(&|i| (bits >> i) & 1 == 1) == target;
            assert_eq!(loss.abs() < 1e-9, agrees, "mask {bits:016b}: loss {loss}");
        }
    }
}

#[test]
fn projection_loss_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let boxes = [bx(0.5, 1.0, 2.5, 3.5), bx(3.0, 0.0, 5.0, 2.0)];
    for _ in 0..50 {
        let probs = Matrix::from_fn(20, 1, |_, _| rng.gen_range(0.05..0.95));
        let check = check_gradients(&[probs], DEFAULT_STEP, |t, v| {
            box_projection_loss_var(t, v[0], &boxes, 4, 5, 1.0)
        })
        .unwrap();
        assert!(check.relative_error < 1e-5, "{}", check.relative_error);
    }
}

#[test]
fn wam_maps_per_setting() {
    let gt = [bx(1.0, 1.0, 3.0, 2.0)];
    let zero = SegMask::zeros(4, 4);
    let inputs = MapInputs {
        gt_boxes_r: Some(&gt),
        pred_boxes_r: Some(&[]),
        mask_t: Some(&zero),
        mask_r: Some(&zero),
    };
    let (mt, mr) = generate_wam_maps(Setting::GtBoxR, &inputs, 4, 4, 1.0, 1.0).unwrap();
    assert!(mt.values().iter().all(|&v| v == 1.0));
    for i in 0..16 {
        assert_eq!(mr.values()[i], if i == 5 || i == 6 { 2.0 } else { 1.0 });
    }
    let (_, mr) = generate_wam_maps(Setting::PreBoxR, &inputs, 4, 4, 1.0, 1.0).unwrap();
    assert!(mr.values().iter().all(|&v| v == 1.0));
    let (mt, mr) = generate_wam_maps(Setting::NoBoxR, &inputs, 4, 4, 1.0, 1.0).unwrap();
    assert!(mt.values().iter().chain(mr.values()).all(|&v| v == 1.0));

    let missing = MapInputs { mask_t: Some(&zero), ..MapInputs::default() };
    for s in Setting::ALL {
        assert!(matches!(
            generate_wam_maps(s, &missing, 4, 4, 1.0, 1.0),
            Err(Error::MissingInput { .. })
        ));
    }
}

#[test]
fn wsam_maps_follow_the_homography() {
    let gt = [bx(1.0, 1.0, 3.0, 3.0)];
    let inputs = MapInputs { gt_boxes_r: Some(&gt), ..MapInputs::default() };
    let (mt, mr) = generate_wsam_maps(Setting::GtBoxR, &inputs, &Homography::IDENTITY, 4, 4, 1.0, 1.0)
        .unwrap();
    assert_eq!(mt.values(), mr.values());

    let shift = Homography::translation(8.0, 0.0);
    let inputs8 = MapInputs { gt_boxes_r: Some(&[bx(8.0, 8.0, 24.0, 24.0)]), ..MapInputs::default() };
    let (mt, mr) = generate_wsam_maps(Setting::GtBoxR, &inputs8, &shift, 4, 4, 8.0, 1.0).unwrap();
    for r in 0..4 {
        assert_eq!(mt.values()[r * 4], 1.0);
        for c in 1..4 {
            assert!((mt.values()[r * 4 + c] - mr.values()[r * 4 + c - 1]).abs() < 1e-12);
        }
    }
}

#[test]
fn mask_refinement_adds_in_bounds_contributions() {
    let zero = SegMask::zeros(3, 3);
    let inputs = MapInputs { mask_t: Some(&zero), mask_r: Some(&zero), ..MapInputs::default() };
    let (mt, mr) = generate_wsam_maps(Setting::NoBoxR, &inputs, &Homography::IDENTITY, 3, 3, 1.0, 1.0)
        .unwrap();
    assert!(mt.values().iter().chain(mr.values()).all(|&v| v == 2.0));
    assert!((0..9).all(|i| !mt.is_foreground(i)));

    let (mt, mr) = generate_wsam_maps(Setting::NoBoxR, &inputs, &Homography::translation(1.0, 0.0), 3, 3, 1.0, 1.0)
        .unwrap();
    for r in 0..3 {
        // the target's first column and the reference's last column see
        // nothing of the other view
        assert_eq!(mt.values()[r * 3], 1.0);
        assert_eq!(mr.values()[r * 3 + 2], 1.0);
        assert_eq!(mt.values()[r * 3 + 1], 2.0);
        assert_eq!(mr.values()[r * 3], 2.0);
    }

    // one foreground cell on each side, simultaneous update
    let mut pt = vec![0.0; 9];
    pt[4] = 0.9;
    let mut pr = vec![0.0; 9];
    pr[0] = 0.9;
    let (st, sr) = (SegMask::new(3, 3, pt).unwrap(), SegMask::new(3, 3, pr).unwrap());
    let inputs = MapInputs { mask_t: Some(&st), mask_r: Some(&sr), ..MapInputs::default() };
    let (mt, mr) = generate_wsam_maps(Setting::NoBoxR, &inputs, &Homography::IDENTITY, 3, 3, 1.0, 1.0)
        .unwrap();
    let mut expect = vec![2.0; 9];
    expect[0] = 3.0;
    expect[4] = 3.0;
    assert_eq!(mt.values(), expect.as_slice());
    assert_eq!(mr.values(), expect.as_slice());
    assert!(mt.is_foreground(0) && mt.is_foreground(4) && !mt.is_foreground(1));
}

#[test]
fn generated_maps_are_at_least_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..50 {
        let probs = |rng: &mut ChaCha8Rng| SegMask::new(5, 5, (0..25).map(|_| rng.gen_range(0.0..1.0)).collect()).unwrap();
        let (st, sr) = (probs(&mut rng), probs(&mut rng));
        let h = Homography::new([
            [1.0 + rng.gen_range(-0.1..0.1), rng.gen_range(-0.1..0.1), rng.gen_range(-2.0..2.0)],
            [rng.gen_range(-0.1..0.1), 1.0 + rng.gen_range(-0.1..0.1), rng.gen_range(-2.0..2.0)],
            [0.0, 0.0, 1.0],
        ])
        .unwrap();
        let gt = [bx(rng.gen_range(0.0..2.0), rng.gen_range(0.0..2.0), rng.gen_range(3.0..5.0), rng.gen_range(3.0..5.0))];
        let inputs = MapInputs { gt_boxes_r: Some(&gt), pred_boxes_r: Some(&gt), mask_t: Some(&st), mask_r: Some(&sr) };
        for s in Setting::ALL {
            let (a, b) = generate_wam_maps(s, &inputs, 5, 5, 1.0, 1.0).unwrap();
            let (c, d) = generate_wsam_maps(s, &inputs, &h, 5, 5, 1.0, 1.0).unwrap();
            for m in [a, b, c, d] {
                assert!(m.values().iter().all(|&v| v >= 1.0));
            }
        }
    }
}

#[test]
fn box_filter_maps_reassign_foreground() {
    let m_r = WeightMap::new(2, 2, vec![1.0, 2.0, 1.0, 1.6]).unwrap();
    let (mt, mr) = box_filter_maps(&[], &m_r, 1.0, 1.0).unwrap();
    assert!(mt.values().iter().all(|&v| v == 1.0));
    assert_eq!(mr.values(), &[1.0, 2.0, 1.0, 2.0]);
    let (mt, _) = box_filter_maps(&[bx(0.0, 0.0, 1.0, 1.0)], &m_r, 3.0, 1.0).unwrap();
    assert_eq!(mt.values(), &[4.0, 1.0, 1.0, 1.0]);
}

#[test]
fn weight_map_json_is_flat() {
    let m = WeightMap::new(1, 2, vec![1.0, 2.0]).unwrap();
    let s = serde_json::to_string(&m).unwrap();
    assert_eq!(s, r#"{"h":1,"w":2,"values":[1.0,2.0],"baseline":1.0}"#);
    let back: WeightMap = serde_json::from_str(r#"{"h":1,"w":2,"values":[1.0,2.0]}"#).unwrap();
    assert_eq!(back, m);
    assert!(serde_json::from_str::<WeightMap>(r#"{"h":1,"w":2,"values":[1.0]}"#).is_err());
    let b: BBox = serde_json::from_str(r#"{"x1":0,"y1":1,"x2":2,"y2":3,"class":2}"#).unwrap();
    assert_eq!(b.class_id, 2);
}
