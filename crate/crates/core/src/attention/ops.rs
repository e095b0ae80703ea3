//! Attention cores on the tape, plus value-level wrappers over grids.

use crate::attention::FeatureGrid;
use crate::error::{Error, Result};
use crate::numerics::{softmax_rows, Matrix, Tape, Var};
use crate::weightgen::WeightMap;

fn check_qkv(t: &Tape, q: Var, k: Var, v: Var) -> Result<()> {
    let (q, k, v) = (t.shape(q), t.shape(k), t.shape(v));
    if q.1 != k.1 {
        return Err(Error::Shape(format!(
            "query width {} differs from key width {}",
            q.1, k.1
        )));
    }
    if k.0 != v.0 {
        return Err(Error::Shape(format!(
            "{} keys but {} values",
            k.0, v.0
        )));
    }
    Ok(())
}

fn check_map(t: &Tape, m: Var, rows: usize, what: &str) -> Result<()> {
    if t.shape(m) != (rows, 1) {
        return Err(Error::Shape(format!(
            "{what} map must be {rows}x1, got {:?}",
            t.shape(m)
        )));
    }
    Ok(())
}

/// `softmax(Q K^T) V`.
pub fn cross_attention(t: &mut Tape, q: Var, k: Var, v: Var) -> Result<Var> {
    check_qkv(t, q, k, v)?;
    let logits = t.matmul_nt(q, k)?;
    let a = t.softmax_rows(logits);
    t.matmul(a, v)
}

/// `softmax((Q . M_Q)(K . M_K)^T) V` with `hw x 1` weight columns.
pub fn weighted_attention_var(
    t: &mut Tape,
    q: Var,
    k: Var,
    v: Var,
    m_q: Var,
    m_k: Var,
) -> Result<Var> {
    check_qkv(t, q, k, v)?;
    check_map(t, m_q, t.shape(q).0, "query")?;
    check_map(t, m_k, t.shape(k).0, "key")?;
    let qw = t.mul(q, m_q)?;
    let kw = t.mul(k, m_k)?;
    cross_attention(t, qw, kw, v)
}

/// `Q . (1 + cos(Q, V~Q))` where `V~Q` is the weighted attention output.
pub fn ws_attention_var(
    t: &mut Tape,
    q: Var,
    k: Var,
    v: Var,
    m_q: Var,
    m_k: Var,
) -> Result<Var> {
    let aligned = weighted_attention_var(t, q, k, v, m_q, m_k)?;
    if t.shape(aligned) != t.shape(q) {
        return Err(Error::Shape(format!(
            "spatial attention needs values as wide as queries, got {:?} vs {:?}",
            t.shape(aligned),
            t.shape(q)
        )));
    }
    let cos = t.cosine_rows(q, aligned)?;
    let gate = t.add_scalar(cos, 1.0);
    t.mul(q, gate)
}

/// Instance branch against the reference plus a semantic branch against
/// the class embedding rows (with uniform weights), summed.
#[allow(clippy::too_many_arguments)]
pub fn ws_attention_combined_var(
    t: &mut Tape,
    q: Var,
    k: Var,
    v: Var,
    m_q: Var,
    m_k: Var,
    w_e: Var,
) -> Result<Var> {
    let instance = ws_attention_var(t, q, k, v, m_q, m_k)?;
    let (nq, nk) = (t.shape(q).0, t.shape(w_e).0);
    let ones_q = t.constant(Matrix::filled(nq, 1, 1.0));
    let ones_e = t.constant(Matrix::filled(nk, 1, 1.0));
    let semantic = ws_attention_var(t, q, w_e, w_e, ones_q, ones_e)?;
    t.add(instance, semantic)
}

/// Attention weight matrix `softmax((Q . M_Q)(K . M_K)^T)`.
pub fn attention_weights(q: &Matrix, k: &Matrix, m_q: &[f64], m_k: &[f64]) -> Result<Matrix> {
    if q.cols() != k.cols() || m_q.len() != q.rows() || m_k.len() != k.rows() {
        return Err(Error::Shape("attention operand shapes disagree".into()));
    }
    let qw = Matrix::from_fn(q.rows(), q.cols(), |r, c| q.get(r, c) * m_q[r]);
    let kw = Matrix::from_fn(k.rows(), k.cols(), |r, c| k.get(r, c) * m_k[r]);
    Ok(softmax_rows(&qw.matmul_nt(&kw)?))
}

fn eval_on_grid(
    q: &FeatureGrid,
    f: impl FnOnce(&mut Tape) -> Result<Var>,
) -> Result<FeatureGrid> {
    let mut t = Tape::new();
    let out = f(&mut t)?;
    FeatureGrid::new(q.height(), q.width(), t.value(out).clone())
}

pub fn weighted_attention(
    q: &FeatureGrid,
    k: &FeatureGrid,
    v: &FeatureGrid,
    m_q: &WeightMap,
    m_k: &WeightMap,
) -> Result<FeatureGrid> {
    eval_on_grid(q, |t| {
        let (qv, kv, vv) = (
            t.constant(q.values().clone()),
            t.constant(k.values().clone()),
            t.constant(v.values().clone()),
        );
        let (mq, mk) = (t.constant(m_q.column().clone()), t.constant(m_k.column().clone()));
        weighted_attention_var(t, qv, kv, vv, mq, mk)
    })
}

pub fn ws_attention(
    q: &FeatureGrid,
    k: &FeatureGrid,
    v: &FeatureGrid,
    m_q: &WeightMap,
    m_k: &WeightMap,
) -> Result<FeatureGrid> {
    eval_on_grid(q, |t| {
        let (qv, kv, vv) = (
            t.constant(q.values().clone()),
            t.constant(k.values().clone()),
            t.constant(v.values().clone()),
        );
        let (mq, mk) = (t.constant(m_q.column().clone()), t.constant(m_k.column().clone()));
        ws_attention_var(t, qv, kv, vv, mq, mk)
    })
}

pub fn ws_attention_combined(
    c_t: &FeatureGrid,
    c_r: &FeatureGrid,
    w_e: &Matrix,
    m_t: &WeightMap,
    m_r: &WeightMap,
) -> Result<FeatureGrid> {
    eval_on_grid(c_t, |t| {
        let (qv, kv) = (t.constant(c_t.values().clone()), t.constant(c_r.values().clone()));
        let e = t.constant(w_e.clone());
        let (mq, mk) = (t.constant(m_t.column().clone()), t.constant(m_r.column().clone()));
        ws_attention_combined_var(t, qv, kv, kv, mq, mk, e)
    })
}
