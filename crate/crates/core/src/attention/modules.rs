use rand::Rng;

use crate::attention::block::{transformer_block, AttentionMode, BlockContext, BlockParams};
use crate::error::{Error, Result};
use crate::numerics::{Tape, Var};
use crate::params::{gaussian, Bound, ParamId, ParamStore};

/// One round of the two-view module: a weighted cross block then a self
/// block, with separate parameters for each direction.
#[derive(Clone, Debug, PartialEq)]
pub struct WamRound {
    pub t_cross: BlockParams,
    pub t_self: BlockParams,
    pub r_cross: BlockParams,
    pub r_self: BlockParams,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WamParams {
    pub rounds: Vec<WamRound>,
}

impl WamParams {
    pub fn init<R: Rng + ?Sized>(
        store: &mut ParamStore,
        prefix: &str,
        c: usize,
        n_wam: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if n_wam == 0 {
            return Err(Error::InvalidArgument("n_wam must be at least 1".into()));
        }
        let rounds = (0..n_wam)
            .map(|i| WamRound {
                t_cross: BlockParams::init(store, &format!("{prefix}.{i}.t.cross"), c, rng),
                t_self: BlockParams::init(store, &format!("{prefix}.{i}.t.self"), c, rng),
                r_cross: BlockParams::init(store, &format!("{prefix}.{i}.r.cross"), c, rng),
                r_self: BlockParams::init(store, &format!("{prefix}.{i}.r.self"), c, rng),
            })
            .collect();
        Ok(Self { rounds })
    }
}

/// Updates both views together each round; the target attends to the
/// reference with `(M_Q, M_K) = (M_t, M_r)` and the reference to the target
/// with the maps swapped.
pub fn wam_forward(
    t: &mut Tape,
    b: &Bound,
    p: &WamParams,
    c_t: Var,
    c_r: Var,
    m_t: Var,
    m_r: Var,
) -> Result<(Var, Var)> {
    let (mut ct, mut cr) = (c_t, c_r);
    for round in &p.rounds {
        let to_r = BlockContext {
            grid: cr,
            m_q: m_t,
            m_k: m_r,
            w_e: None,
        };
        let to_t = BlockContext {
            grid: ct,
            m_q: m_r,
            m_k: m_t,
            w_e: None,
        };
        let nt = transformer_block(t, b, &round.t_cross, ct, AttentionMode::Weighted, Some(&to_r))?;
        let nr = transformer_block(t, b, &round.r_cross, cr, AttentionMode::Weighted, Some(&to_t))?;
        ct = transformer_block(t, b, &round.t_self, nt, AttentionMode::SelfAttention, None)?;
        cr = transformer_block(t, b, &round.r_self, nr, AttentionMode::SelfAttention, None)?;
    }
    Ok((ct, cr))
}

#[derive(Clone, Debug, PartialEq)]
pub struct WsamParams {
    pub rounds: Vec<(BlockParams, BlockParams)>,
    /// Class embedding, `C_classes x c`.
    pub w_e: ParamId,
}

impl WsamParams {
    pub fn init<R: Rng + ?Sized>(
        store: &mut ParamStore,
        prefix: &str,
        c: usize,
        classes: usize,
        n_wsam: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if n_wsam == 0 {
            return Err(Error::InvalidArgument("n_wsam must be at least 1".into()));
        }
        let rounds = (0..n_wsam)
            .map(|i| {
                (
                    BlockParams::init(store, &format!("{prefix}.{i}.spatial"), c, rng),
                    BlockParams::init(store, &format!("{prefix}.{i}.self"), c, rng),
                )
            })
            .collect();
        let std = 1.0 / (c as f64).sqrt();
        let w_e = store.add(format!("{prefix}.w_e"), gaussian(classes, c, std, rng));
        Ok(Self { rounds, w_e })
    }
}

/// Highlights the target against the (fixed) reference features and the
/// class embedding.
pub fn wsam_forward(
    t: &mut Tape,
    b: &Bound,
    p: &WsamParams,
    c_t: Var,
    c_r: Var,
    m_t: Var,
    m_r: Var,
) -> Result<Var> {
    let ctx = BlockContext {
        grid: c_r,
        m_q: m_t,
        m_k: m_r,
        w_e: Some(b.var(p.w_e)),
    };
    let mut ct = c_t;
    for (spatial, self_block) in &p.rounds {
        ct = transformer_block(t, b, spatial, ct, AttentionMode::WeightedSpatial, Some(&ctx))?;
        ct = transformer_block(t, b, self_block, ct, AttentionMode::SelfAttention, None)?;
    }
    Ok(ct)
}
