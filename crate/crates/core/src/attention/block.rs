use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::attention::ops::{cross_attention, weighted_attention_var, ws_attention_combined_var};
use crate::error::{Error, Result};
use crate::numerics::{Matrix, Tape, Var};
use crate::params::{orthogonal, Bound, ParamId, ParamStore};

/// Gain of the random orthogonal projections at initialization.
pub const INIT_GAIN: f64 = 0.1;
/// Gain of the shared initial query/key projection.
pub const QK_INIT_GAIN: f64 = 0.5;
/// Hidden width of the feed-forward layer, in multiples of the channels.
pub const FFN_EXPANSION: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttentionMode {
    #[serde(rename = "self")]
    SelfAttention,
    Weighted,
    WeightedSpatial,
}

impl FromStr for AttentionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "self" => Ok(Self::SelfAttention),
            "weighted" => Ok(Self::Weighted),
            "weighted-spatial" => Ok(Self::WeightedSpatial),
            other => Err(Error::InvalidArgument(format!("unknown attention mode {other:?}"))),
        }
    }
}

/// What a cross block attends to. The maps are `hw x 1` weight columns for
/// the queries and for the context cells.
#[derive(Clone, Copy, Debug)]
pub struct BlockContext {
    pub grid: Var,
    pub m_q: Var,
    pub m_k: Var,
    /// Class embedding rows, required by the spatial mode.
    pub w_e: Option<Var>,
}

/// One single-head pre-norm transformer block.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockParams {
    pub channels: usize,
    pub ln1_gain: ParamId,
    pub ln1_bias: ParamId,
    pub wq: ParamId,
    pub wk: ParamId,
    pub wv: ParamId,
    pub wo: ParamId,
    pub ln2_gain: ParamId,
    pub ln2_bias: ParamId,
    pub w1: ParamId,
    pub b1: ParamId,
    pub w2: ParamId,
    pub b2: ParamId,
}

impl BlockParams {
    /// Registers a fresh block. The output projection and the second
    /// feed-forward layer start at zero, so the block starts as the identity.
    pub fn init<R: Rng + ?Sized>(store: &mut ParamStore, prefix: &str, c: usize, rng: &mut R) -> Self {
        let hidden = FFN_EXPANSION * c;
        let mut add = |name: &str, m: Matrix| store.add(format!("{prefix}.{name}"), m);
        // wq and wk start equal so initial affinities are scaled dot products
        let qk = orthogonal(c, c, QK_INIT_GAIN, rng);
        Self {
            channels: c,
            ln1_gain: add("ln1.gain", Matrix::filled(1, c, 1.0)),
            ln1_bias: add("ln1.bias", Matrix::zeros(1, c)),
            wq: add("wq", qk.clone()),
            wk: add("wk", qk),
            wv: add("wv", orthogonal(c, c, INIT_GAIN, rng)),
            wo: add("wo", Matrix::zeros(c, c)),
            ln2_gain: add("ln2.gain", Matrix::filled(1, c, 1.0)),
            ln2_bias: add("ln2.bias", Matrix::zeros(1, c)),
            w1: add("ffn.w1", orthogonal(c, hidden, INIT_GAIN, rng)),
            b1: add("ffn.b1", Matrix::zeros(1, hidden)),
            w2: add("ffn.w2", Matrix::zeros(hidden, c)),
            b2: add("ffn.b2", Matrix::zeros(1, c)),
        }
    }
}

fn norm(t: &mut Tape, x: Var, gain: Var, bias: Var) -> Result<Var> {
    let n = t.layer_norm(x);
    let g = t.mul(n, gain)?;
    t.add(g, bias)
}

/// `y = x + Attn(LN1(x), LN1(context)) Wo`, `z = y + FFN(LN2(y))`.
pub fn transformer_block(
    t: &mut Tape,
    b: &Bound,
    p: &BlockParams,
    x: Var,
    mode: AttentionMode,
    context: Option<&BlockContext>,
) -> Result<Var> {
    let (g1, b1) = (b.var(p.ln1_gain), b.var(p.ln1_bias));
    let xn = norm(t, x, g1, b1)?;
    let q = t.matmul(xn, b.var(p.wq))?;
    let core = match mode {
        AttentionMode::SelfAttention => {
            let k = t.matmul(xn, b.var(p.wk))?;
            let v = t.matmul(xn, b.var(p.wv))?;
            cross_attention(t, q, k, v)?
        }
        AttentionMode::Weighted | AttentionMode::WeightedSpatial => {
            let ctx = context.ok_or_else(|| {
                Error::InvalidArgument(format!("{mode:?} block needs a context"))
            })?;
            let cn = norm(t, ctx.grid, g1, b1)?;
            let k = t.matmul(cn, b.var(p.wk))?;
            let v = t.matmul(cn, b.var(p.wv))?;
            if mode == AttentionMode::Weighted {
                weighted_attention_var(t, q, k, v, ctx.m_q, ctx.m_k)?
            } else {
                let w_e = ctx.w_e.ok_or_else(|| {
                    Error::InvalidArgument("spatial block needs a class embedding".into())
                })?;
                ws_attention_combined_var(t, q, k, v, ctx.m_q, ctx.m_k, w_e)?
            }
        }
    };
    let out = t.matmul(core, b.var(p.wo))?;
    let y = t.add(x, out)?;

    let yn = norm(t, y, b.var(p.ln2_gain), b.var(p.ln2_bias))?;
    let h = t.matmul(yn, b.var(p.w1))?;
    let h = t.add(h, b.var(p.b1))?;
    let h = t.relu(h);
    let f = t.matmul(h, b.var(p.w2))?;
    let f = t.add(f, b.var(p.b2))?;
    t.add(y, f)
}
