use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::attention::{
    transformer_block, weighted_attention_var, ws_attention_combined_var, AttentionMode, BlockContext,
    BlockParams,
};
use crate::error::Result;
use crate::matchhead::{dual_softmax_var, matcher_loss_var, score_var};
use crate::minidet::{assign_targets, det_head_var, detection_loss_var, DetParams};
use crate::numerics::{check_gradients, GradCheck, Matrix, Tape, Var, DEFAULT_STEP};
use crate::params::{Bound, ParamStore};
use crate::weightgen::{box_projection_loss_var, light_decoder_var, BBox, DecoderParams};

/// Largest accepted relative error between tape and finite differences.
pub const GRAD_TOLERANCE: f64 = 1e-5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradCheckSummary {
    pub op: String,
    pub instances: usize,
    pub max_relative_error: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradSuiteReport {
    pub seed: u64,
    pub entries: Vec<GradCheckSummary>,
    pub wall_s: f64,
}

impl GradSuiteReport {
    pub fn passed(&self) -> bool {
        self.entries.iter().all(|e| e.passed)
    }
}

fn uniform(rng: &mut ChaCha8Rng, r: usize, c: usize, lo: f64, hi: f64) -> Matrix {
    Matrix::from_fn(r, c, |_, _| rng.gen_range(lo..hi))
}

/// Reduces `y` to a scalar against fixed random weights.
fn contract(t: &mut Tape, y: Var, w: &Matrix) -> Result<Var> {
    let w = t.constant(w.clone());
    let p = t.mul(y, w)?;
    Ok(t.sum(p))
}

fn randomized(store: &ParamStore, rng: &mut ChaCha8Rng, scale: f64) -> Vec<Matrix> {
    store
        .values()
        .iter()
        .map(|m| uniform(rng, m.rows(), m.cols(), -scale, scale))
        .collect()
}

fn summarize(op: &str, checks: &[GradCheck]) -> GradCheckSummary {
    let max = checks.iter().map(|c| c.relative_error).fold(0.0, f64::max);
    GradCheckSummary {
        op: op.to_string(),
        instances: checks.len(),
        max_relative_error: max,
        passed: checks.iter().all(|c| c.relative_error < GRAD_TOLERANCE),
    }
}

fn weighted_attention_case(rng: &mut ChaCha8Rng) -> Result<GradCheck> {
    let (nq, nk, d, dv) = (rng.gen_range(2..6), rng.gen_range(2..6), rng.gen_range(2..5), rng.gen_range(1..4));
    let inputs = vec![
        uniform(rng, nq, d, -1.0, 1.0),
        uniform(rng, nk, d, -1.0, 1.0),
        uniform(rng, nk, dv, -1.0, 1.0),
        uniform(rng, nq, 1, 0.5, 2.0),
        uniform(rng, nk, 1, 0.5, 2.0),
    ];
    let w = uniform(rng, nq, dv, -1.0, 1.0);
    check_gradients(&inputs, DEFAULT_STEP, |t, v| {
        let y = weighted_attention_var(t, v[0], v[1], v[2], v[3], v[4])?;
        contract(t, y, &w)
    })
}

fn ws_attention_case(rng: &mut ChaCha8Rng) -> Result<GradCheck> {
    let (nq, nk, ne, d) = (rng.gen_range(2..6), rng.gen_range(2..6), rng.gen_range(1..4), rng.gen_range(2..5));
    let inputs = vec![
        uniform(rng, nq, d, -1.0, 1.0),
        uniform(rng, nk, d, -1.0, 1.0),
        uniform(rng, nk, d, -1.0, 1.0),
        uniform(rng, nq, 1, 0.5, 2.0),
        uniform(rng, nk, 1, 0.5, 2.0),
        uniform(rng, ne, d, -1.0, 1.0),
    ];
    let w = uniform(rng, nq, d, -1.0, 1.0);
    check_gradients(&inputs, DEFAULT_STEP, |t, v| {
        let y = ws_attention_combined_var(t, v[0], v[1], v[2], v[3], v[4], v[5])?;
        contract(t, y, &w)
    })
}

fn block_case(rng: &mut ChaCha8Rng, mode: AttentionMode) -> Result<GradCheck> {
    let c = 4;
    let (nx, nc) = (rng.gen_range(2..5), rng.gen_range(2..5));
    let mut store = ParamStore::new();
    let p = BlockParams::init(&mut store, "b", c, rng);
    let w_e = store.add("w_e", Matrix::zeros(3, c));
    let n = store.len();
    let mut inputs = randomized(&store, rng, 0.6);
    inputs.push(uniform(rng, nx, c, -1.0, 1.0));
    inputs.push(uniform(rng, nc, c, -1.0, 1.0));
    let mq = uniform(rng, nx, 1, 1.0, 2.0);
    let mk = uniform(rng, nc, 1, 1.0, 2.0);
    let w = uniform(rng, nx, c, -1.0, 1.0);
    check_gradients(&inputs, DEFAULT_STEP, |t, v| {
        let b = Bound::from_vars(v[..n].to_vec());
        let ctx = BlockContext {
            grid: v[n + 1],
            m_q: t.constant(mq.clone()),
            m_k: t.constant(mk.clone()),
            w_e: Some(b.var(w_e)),
        };
        let y = transformer_block(t, &b, &p, v[n], mode, Some(&ctx))?;
        contract(t, y, &w)
    })
}

fn decoder_case(rng: &mut ChaCha8Rng) -> Result<GradCheck> {
    let (h, w, c) = (3, 4, rng.gen_range(2..6));
    let mut store = ParamStore::new();
    let p = DecoderParams::init(&mut store, "dec", c, rng);
    let n = store.len();
    let mut inputs = randomized(&store, rng, 1.0);
    inputs.push(uniform(rng, h * w, c, -1.0, 1.0));
    let x0 = rng.gen_range(0.0..2.0);
    let y0 = rng.gen_range(0.0..1.5);
    let boxes = [BBox::new(x0, y0, x0 + rng.gen_range(1.0..2.0), y0 + rng.gen_range(1.0..1.5), 0)?];
    check_gradients(&inputs, DEFAULT_STEP, |t, v| {
        let b = Bound::from_vars(v[..n].to_vec());
        let probs = light_decoder_var(t, &b, &p, v[n])?;
        box_projection_loss_var(t, probs, &boxes, h, w, 1.0)
    })
}

fn match_loss_case(rng: &mut ChaCha8Rng) -> Result<GradCheck> {
    let (nt, nr, c) = (rng.gen_range(3..7), rng.gen_range(3..7), rng.gen_range(2..5));
    let inputs = vec![uniform(rng, nt, c, -1.0, 1.0), uniform(rng, nr, c, -1.0, 1.0)];
    let gt: Vec<(usize, usize)> = (0..nt.min(nr)).map(|k| (k, (k * 2 + 1) % nr)).collect();
    let tau = rng.gen_range(0.3..1.0);
    check_gradients(&inputs, DEFAULT_STEP, |t, v| {
        let s = score_var(t, v[0], v[1], tau)?;
        let p = dual_softmax_var(t, s)?;
        matcher_loss_var(t, p, &gt)
    })
}

fn detection_loss_case(rng: &mut ChaCha8Rng) -> Result<GradCheck> {
    let (h, w, c, classes) = (3, 3, rng.gen_range(2..6), 3);
    let mut store = ParamStore::new();
    let p = DetParams::init(&mut store, "det", c, classes, rng);
    let n = store.len();
    let mut inputs = randomized(&store, rng, 0.5);
    inputs.push(uniform(rng, h * w, c, -1.0, 1.0));
    let boxes = [
        BBox::new(0.0, 0.0, 2.0, rng.gen_range(2.2..3.0), 0)?,
        BBox::new(rng.gen_range(0.8..1.2), 1.0, 3.0, 3.0, 2)?,
    ];
    let targets = assign_targets(&boxes, h, w, 1.0);
    check_gradients(&inputs, DEFAULT_STEP, |t, v| {
        let b = Bound::from_vars(v[..n].to_vec());
        let out = det_head_var(t, &b, &p, v[n])?;
        Ok(detection_loss_var(t, &out, &targets, 1.0, 1.0)?.total)
    })
}

type Case = fn(&mut ChaCha8Rng) -> Result<GradCheck>;

/// Backward-versus-finite-difference checks over `instances` random inputs
/// for every differentiable operation of the pipeline.
pub fn run_gradient_suite(instances: usize, seed: u64) -> Result<GradSuiteReport> {
    let start = Instant::now();
    let cases: [(&str, Case); 8] = [
        ("weighted_attention", weighted_attention_case),
        ("ws_attention", ws_attention_case),
        ("block_self", |r| block_case(r, AttentionMode::SelfAttention)),
        ("block_weighted", |r| block_case(r, AttentionMode::Weighted)),
        ("block_weighted_spatial", |r| block_case(r, AttentionMode::WeightedSpatial)),
        ("light_decoder", decoder_case),
        ("match_loss", match_loss_case),
        ("detection_loss", detection_loss_case),
    ];
    let mut entries = Vec::with_capacity(cases.len());
    for (k, (name, case)) in cases.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(k as u64);
        let checks = (0..instances).map(|_| case(&mut rng)).collect::<Result<Vec<_>>>()?;
        entries.push(summarize(name, &checks));
    }
    Ok(GradSuiteReport {
        seed,
        entries,
        wall_s: start.elapsed().as_secs_f64(),
    })
}
