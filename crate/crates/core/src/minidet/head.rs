use rand::Rng;

use crate::attention::FeatureGrid;
use crate::error::{Error, Result};
use crate::numerics::{Matrix, Tape, Var};
use crate::params::{gaussian, Bound, ParamId, ParamStore};
use crate::weightgen::{cell_in_box, BBox};

/// Initial objectness bias, the logit of a 10% prior.
pub const OBJ_PRIOR_LOGIT: f64 = -2.197_224_577_336_219_6;
/// Smallest regression distance, in strides, before taking the log.
const MIN_DISTANCE: f64 = 1e-3;
const LOG_EPS: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct DetParams {
    pub classes: usize,
    pub w_cls: ParamId,
    pub b_cls: ParamId,
    pub w_obj: ParamId,
    pub b_obj: ParamId,
    pub w_reg: ParamId,
    pub b_reg: ParamId,
}

impl DetParams {
    pub fn init<R: Rng + ?Sized>(
        store: &mut ParamStore,
        prefix: &str,
        c: usize,
        classes: usize,
        rng: &mut R,
    ) -> Self {
        let std = 0.1 / (c as f64).sqrt();
        Self {
            classes,
            w_cls: store.add(format!("{prefix}.cls.w"), gaussian(c, classes, std, rng)),
            b_cls: store.add(format!("{prefix}.cls.b"), Matrix::zeros(1, classes)),
            w_obj: store.add(format!("{prefix}.obj.w"), gaussian(c, 1, std, rng)),
            b_obj: store.add(format!("{prefix}.obj.b"), Matrix::filled(1, 1, OBJ_PRIOR_LOGIT)),
            w_reg: store.add(format!("{prefix}.reg.w"), gaussian(c, 4, std, rng)),
            b_reg: store.add(format!("{prefix}.reg.b"), Matrix::zeros(1, 4)),
        }
    }
}

/// Head outputs on the tape: class logits `hw x C`, objectness logits
/// `hw x 1`, log box offsets `hw x 4` (left, top, right, bottom, in strides).
#[derive(Clone, Copy, Debug)]
pub struct DetOutputs {
    pub cls: Var,
    pub obj: Var,
    pub reg: Var,
}

pub fn det_head_var(t: &mut Tape, b: &Bound, p: &DetParams, features: Var) -> Result<DetOutputs> {
    let mut affine = |w: ParamId, bias: ParamId| -> Result<Var> {
        let z = t.matmul(features, b.var(w))?;
        t.add(z, b.var(bias))
    };
    Ok(DetOutputs {
        cls: affine(p.w_cls, p.b_cls)?,
        obj: affine(p.w_obj, p.b_obj)?,
        reg: affine(p.w_reg, p.b_reg)?,
    })
}

/// Materialized head outputs for one grid.
#[derive(Clone, Debug, PartialEq)]
pub struct DetPreds {
    pub h: usize,
    pub w: usize,
    pub cls_logits: Matrix,
    pub obj_logits: Matrix,
    pub log_offsets: Matrix,
}

impl DetPreds {
    pub fn from_tape(t: &Tape, out: &DetOutputs, h: usize, w: usize) -> Self {
        Self {
            h,
            w,
            cls_logits: t.value(out.cls).clone(),
            obj_logits: t.value(out.obj).clone(),
            log_offsets: t.value(out.reg).clone(),
        }
    }
}

pub fn det_head(features: &FeatureGrid, store: &ParamStore, p: &DetParams) -> Result<DetPreds> {
    let mut t = Tape::new();
    let b = store.bind(&mut t, false);
    let f = t.constant(features.values().clone());
    let out = det_head_var(&mut t, &b, p, f)?;
    Ok(DetPreds::from_tape(&t, &out, features.height(), features.width()))
}

/// Per-cell training targets.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseTargets {
    pub h: usize,
    pub w: usize,
    pub positive: Vec<bool>,
    /// Class in `1..=C` for positives, 0 otherwise.
    pub class_id: Vec<usize>,
    /// Distances from the cell center to the left, top, right and bottom
    /// sides of the assigned box, in pixels; zero for negatives.
    pub regression: Vec<[f64; 4]>,
    pub assigned: Vec<Option<usize>>,
}

impl DenseTargets {
    pub fn positives(&self) -> usize {
        self.positive.iter().filter(|&&p| p).count()
    }
}

/// A cell is positive when its center lies inside a box; overlapping boxes
/// go to the smallest one (then the earliest).
pub fn assign_targets(boxes: &[BBox], h: usize, w: usize, stride: f64) -> DenseTargets {
    let n = h * w;
    let mut out = DenseTargets {
        h,
        w,
        positive: vec![false; n],
        class_id: vec![0; n],
        regression: vec![[0.0; 4]; n],
        assigned: vec![None; n],
    };
    for i in 0..n {
        let (r, c) = (i / w, i % w);
        let best = boxes
            .iter()
            .enumerate()
            .filter(|(_, b)| cell_in_box(b, r, c, stride))
            .min_by(|(ia, a), (ib, b)| a.area().total_cmp(&b.area()).then(ia.cmp(ib)));
        if let Some((k, b)) = best {
            let (cx, cy) = ((c as f64 + 0.5) * stride, (r as f64 + 0.5) * stride);
            out.positive[i] = true;
            out.class_id[i] = b.class_id;
            out.regression[i] = [cx - b.x1, cy - b.y1, b.x2 - cx, b.y2 - cy];
            out.assigned[i] = Some(k);
        }
    }
    out
}

/// Loss terms, each already averaged.
#[derive(Clone, Copy, Debug)]
pub struct DetLossVars {
    pub objectness: Var,
    pub class: Var,
    pub regression: Var,
    pub total: Var,
}

/// Objectness cross-entropy over all cells, class cross-entropy and L1 on
/// log offsets over positives; `total = obj + cls + lambda_reg * reg`.
pub fn detection_loss_var(
    t: &mut Tape,
    out: &DetOutputs,
    targets: &DenseTargets,
    stride: f64,
    lambda_reg: f64,
) -> Result<DetLossVars> {
    let n = targets.positive.len();
    let classes = t.shape(out.cls).1;
    if t.shape(out.obj) != (n, 1) || t.shape(out.reg) != (n, 4) || t.shape(out.cls).0 != n {
        return Err(Error::Shape("detection outputs do not match the targets".into()));
    }
    if let Some(&bad) = targets.class_id.iter().find(|&&k| k > classes) {
        return Err(Error::InvalidArgument(format!("class {bad} outside 1..={classes}")));
    }
    let y = Matrix::column(targets.positive.iter().map(|&p| f64::from(u8::from(p))).collect());
    let not_y = y.map(|v| 1.0 - v);

    let p = t.logistic(out.obj);
    let p = t.add_scalar(p, LOG_EPS);
    let log_p = t.log(p);
    let neg_obj = t.scale(out.obj, -1.0);
    let q = t.logistic(neg_obj);
    let q = t.add_scalar(q, LOG_EPS);
    let log_q = t.log(q);
    let yv = t.constant(y.clone());
    let nyv = t.constant(not_y);
    let a = t.mul(log_p, yv)?;
    let bq = t.mul(log_q, nyv)?;
    let ll = t.add(a, bq)?;
    let ll = t.sum(ll);
    let objectness = t.scale(ll, -1.0 / n.max(1) as f64);

    let n_pos = targets.positives();
    let (class, regression) = if n_pos == 0 {
        (t.constant(Matrix::scalar(0.0)), t.constant(Matrix::scalar(0.0)))
    } else {
        let onehot = Matrix::from_fn(n, classes, |i, k| {
            f64::from(u8::from(targets.positive[i] && targets.class_id[i] == k + 1))
        });
        let sm = t.softmax_rows(out.cls);
        let sm = t.add_scalar(sm, LOG_EPS);
        let ls = t.log(sm);
        let oh = t.constant(onehot);
        let picked = t.mul(ls, oh)?;
        let s = t.sum(picked);
        let class = t.scale(s, -1.0 / n_pos as f64);

        let goal = Matrix::from_fn(n, 4, |i, k| {
            if targets.positive[i] {
                (targets.regression[i][k] / stride).max(MIN_DISTANCE).ln()
            } else {
                0.0
            }
        });
        let g = t.constant(goal);
        let diff = t.sub(out.reg, g)?;
        let pos = t.relu(diff);
        let negd = t.scale(diff, -1.0);
        let neg = t.relu(negd);
        let abs = t.add(pos, neg)?;
        let masked = t.mul(abs, yv)?;
        let s = t.sum(masked);
        (class, t.scale(s, 1.0 / (4 * n_pos) as f64))
    };
    let weighted = t.scale(regression, lambda_reg);
    let total = t.add(objectness, class)?;
    let total = t.add(total, weighted)?;
    Ok(DetLossVars {
        objectness,
        class,
        regression,
        total,
    })
}
