use rand::Rng;

use crate::attention::FeatureGrid;
use crate::error::Result;
use crate::numerics::{Axis, Matrix, Tape, Var};
use crate::params::{gaussian, orthogonal, Bound, ParamId, ParamStore};
use crate::weightgen::maps::box_union_cells;
use crate::weightgen::types::{BBox, SegMask};

/// Smoothing added to both sides of the Dice ratio.
pub const DICE_EPS: f64 = 1e-6;

/// Per-cell two-layer perceptron predicting foreground probability.
#[derive(Clone, Debug, PartialEq)]
pub struct DecoderParams {
    pub w1: ParamId,
    pub b1: ParamId,
    pub w2: ParamId,
    pub b2: ParamId,
}

impl DecoderParams {
    pub fn init<R: Rng + ?Sized>(store: &mut ParamStore, prefix: &str, c: usize, rng: &mut R) -> Self {
        Self {
            w1: store.add(format!("{prefix}.w1"), orthogonal(c, c, 1.0, rng)),
            b1: store.add(format!("{prefix}.b1"), Matrix::zeros(1, c)),
            w2: store.add(format!("{prefix}.w2"), gaussian(c, 1, 0.1, rng)),
            b2: store.add(format!("{prefix}.b2"), Matrix::zeros(1, 1)),
        }
    }
}

/// Foreground probabilities as an `hw x 1` column.
pub fn light_decoder_var(t: &mut Tape, b: &Bound, p: &DecoderParams, features: Var) -> Result<Var> {
    let h = t.matmul(features, b.var(p.w1))?;
    let h = t.add(h, b.var(p.b1))?;
    let h = t.relu(h);
    let z = t.matmul(h, b.var(p.w2))?;
    let z = t.add(z, b.var(p.b2))?;
    Ok(t.logistic(z))
}

pub fn light_decoder(features: &FeatureGrid, store: &ParamStore, p: &DecoderParams) -> Result<SegMask> {
    let mut t = Tape::new();
    let b = store.bind(&mut t, false);
    let f = t.constant(features.values().clone());
    let probs = light_decoder_var(&mut t, &b, p, f)?;
    SegMask::new(features.height(), features.width(), t.value(probs).data().to_vec())
}

/// Rearranges an `hw x 1` column into an `h x w` image with two constant
/// selection products.
fn to_image(t: &mut Tape, col: Var, h: usize, w: usize) -> Result<Var> {
    let spread = t.constant(Matrix::from_fn(h * w, w, |i, c| f64::from(u8::from(i % w == c))));
    let gather = t.constant(Matrix::from_fn(h, h * w, |r, i| f64::from(u8::from(i / w == r))));
    let placed = t.mul(spread, col)?;
    t.matmul(gather, placed)
}

fn dice_distance(t: &mut Tape, p: Var, target: &Matrix) -> Result<Var> {
    let tv = t.constant(target.clone());
    let inter = t.mul(p, tv)?;
    let inter = t.sum(inter);
    let num = t.scale(inter, 2.0);
    let num = t.add_scalar(num, DICE_EPS);
    let p2 = t.mul(p, p)?;
    let p2 = t.sum(p2);
    let t2: f64 = target.data().iter().map(|x| x * x).sum();
    let den = t.add_scalar(p2, t2 + DICE_EPS);
    let inv = t.recip(den)?;
    let ratio = t.mul(num, inv)?;
    let neg = t.scale(ratio, -1.0);
    Ok(t.add_scalar(neg, 1.0))
}

/// Dice distance between the column-wise and row-wise maxima of the mask
/// and those of the box-union indicator, summed over both axes. Without
/// boxes the loss is the mean probability.
pub fn box_projection_loss_var(
    t: &mut Tape,
    probs: Var,
    boxes: &[BBox],
    h: usize,
    w: usize,
    stride: f64,
) -> Result<Var> {
    if boxes.is_empty() {
        return Ok(t.mean(probs));
    }
    let inside = box_union_cells(boxes, h, w, stride);
    let target_x = Matrix::from_fn(1, w, |_, c| f64::from(u8::from((0..h).any(|r| inside[r * w + c]))));
    let target_y = Matrix::from_fn(h, 1, |r, _| f64::from(u8::from((0..w).any(|c| inside[r * w + c]))));
    let img = to_image(t, probs, h, w)?;
    let px = t.max_axis(img, Axis::Cols)?;
    let py = t.max_axis(img, Axis::Rows)?;
    let dx = dice_distance(t, px, &target_x)?;
    let dy = dice_distance(t, py, &target_y)?;
    t.add(dx, dy)
}

pub fn box_projection_loss(mask: &SegMask, boxes: &[BBox], stride: f64) -> Result<f64> {
    let mut t = Tape::new();
    let p = t.constant(Matrix::column(mask.probs.clone()));
    let l = box_projection_loss_var(&mut t, p, boxes, mask.h, mask.w, stride)?;
    t.scalar_value(l)
}
