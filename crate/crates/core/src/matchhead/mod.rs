//! Dual-softmax matching, the box filter, mutual-nearest selection and the
//! matching loss.

use serde::{Deserialize, Serialize};

use crate::attention::FeatureGrid;
use crate::error::{Error, Result};
use crate::geometry::{Correspondence, Point2};
use crate::numerics::{softmax_rows, Matrix, Tape, Var};
use crate::weightgen::WeightMap;

pub const DEFAULT_TAU: f64 = 0.1;
pub const DEFAULT_THETA: f64 = 0.2;
/// Added inside the logarithm of the matching loss.
pub const LOG_EPS: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct ScoreMatrix {
    pub s: Matrix,
    pub tau: f64,
}

fn check_tau(tau: f64) -> Result<()> {
    if tau > 0.0 && tau.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("temperature must be > 0, got {tau}")))
    }
}

/// `S(i, j) = cos(C_t(i), C_r(j)) / tau`.
pub fn score_matrix(c_t: &FeatureGrid, c_r: &FeatureGrid, tau: f64) -> Result<ScoreMatrix> {
    let mut t = Tape::new();
    let a = t.constant(c_t.values().clone());
    let b = t.constant(c_r.values().clone());
    let s = score_var(&mut t, a, b, tau)?;
    Ok(ScoreMatrix {
        s: t.value(s).clone(),
        tau,
    })
}

pub fn score_var(t: &mut Tape, c_t: Var, c_r: Var, tau: f64) -> Result<Var> {
    check_tau(tau)?;
    let cos = t.pairwise_cosine(c_t, c_r)?;
    Ok(t.scale(cos, 1.0 / tau))
}

/// Row softmax times column softmax.
pub fn dual_softmax(s: &ScoreMatrix) -> Matrix {
    let rows = softmax_rows(&s.s);
    let cols = softmax_rows(&s.s.transpose()).transpose();
    rows.hadamard(&cols).expect("same shape")
}

pub fn dual_softmax_var(t: &mut Tape, s: Var) -> Result<Var> {
    let rows = t.softmax_rows(s);
    let st = t.transpose(s);
    let cols = t.softmax_rows(st);
    let cols = t.transpose(cols);
    t.mul(rows, cols)
}

/// Outer product `M_t(i) M_r(j)`.
pub fn filter_matrix(m_hat_t: &WeightMap, m_hat_r: &WeightMap) -> Matrix {
    let (a, b) = (m_hat_t.values(), m_hat_r.values());
    Matrix::from_fn(a.len(), b.len(), |i, j| a[i] * b[j])
}

pub fn apply_box_filter(p: &Matrix, m_hat_t: &WeightMap, m_hat_r: &WeightMap) -> Result<Matrix> {
    if p.shape() != (m_hat_t.len(), m_hat_r.len()) {
        return Err(Error::Shape(format!(
            "probabilities are {:?} but maps have {} and {} cells",
            p.shape(),
            m_hat_t.len(),
            m_hat_r.len()
        )));
    }
    p.hadamard(&filter_matrix(m_hat_t, m_hat_r))
}

pub fn apply_box_filter_var(t: &mut Tape, p: Var, m_hat_t: &WeightMap, m_hat_r: &WeightMap) -> Result<Var> {
    if t.shape(p) != (m_hat_t.len(), m_hat_r.len()) {
        return Err(Error::Shape("box filter maps do not match the probabilities".into()));
    }
    let f = t.constant(filter_matrix(m_hat_t, m_hat_r));
    t.mul(p, f)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Match {
    /// Target cell.
    pub i: usize,
    /// Reference cell.
    pub j: usize,
    pub p: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchSet {
    pub pairs: Vec<Match>,
    pub theta: f64,
    pub tau: Option<f64>,
}

impl MatchSet {
    pub fn with_tau(mut self, tau: f64) -> Self {
        self.tau = Some(tau);
        self
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Cell centers in pixels; `w_t`, `w_r` are the grid widths.
    pub fn correspondences(&self, w_t: usize, w_r: usize, stride: f64) -> Vec<Correspondence> {
        let center = |cell: usize, w: usize| {
            Point2::new(((cell % w) as f64 + 0.5) * stride, ((cell / w) as f64 + 0.5) * stride)
        };
        self.pairs
            .iter()
            .map(|m| Correspondence {
                target: center(m.i, w_t),
                reference: center(m.j, w_r),
                score: m.p.clamp(0.0, 1.0),
            })
            .collect()
    }
}

fn first_argmax(values: impl Iterator<Item = f64>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (k, v) in values.enumerate() {
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((k, v));
        }
    }
    best.map(|(k, _)| k)
}

/// Mutual row/column maxima with `P >= theta`; ties go to the lowest index.
pub fn mnn_select(p: &Matrix, theta: f64) -> Result<MatchSet> {
    if !(theta >= 0.0) {
        return Err(Error::InvalidArgument(format!("threshold must be >= 0, got {theta}")));
    }
    let (n, m) = p.shape();
    let col_best: Vec<Option<usize>> = (0..m)
        .map(|j| first_argmax((0..n).map(|i| p.get(i, j))))
        .collect();
    let mut pairs = Vec::new();
    for i in 0..n {
        let Some(j) = first_argmax(p.row(i).iter().copied()) else {
            continue;
        };
        let v = p.get(i, j);
        if col_best[j] == Some(i) && v >= theta {
            pairs.push(Match { i, j, p: v });
        }
    }
    Ok(MatchSet {
        pairs,
        theta,
        tau: None,
    })
}

fn gt_counts(shape: (usize, usize), gt: &[(usize, usize)]) -> Result<Matrix> {
    let mut counts = Matrix::zeros(shape.0, shape.1);
    for &(i, j) in gt {
        if i >= shape.0 || j >= shape.1 {
            return Err(Error::InvalidArgument(format!(
                "ground-truth match ({i}, {j}) outside {shape:?}"
            )));
        }
        counts.set(i, j, counts.get(i, j) + 1.0);
    }
    Ok(counts)
}

/// `-mean log(P(i, j) + 1e-12)` over the ground-truth pairs; 0 when there
/// are none.
pub fn matcher_loss_var(t: &mut Tape, p: Var, gt: &[(usize, usize)]) -> Result<Var> {
    let counts = gt_counts(t.shape(p), gt)?;
    if gt.is_empty() {
        return Ok(t.constant(Matrix::scalar(0.0)));
    }
    let shifted = t.add_scalar(p, LOG_EPS);
    let logp = t.log(shifted);
    let c = t.constant(counts);
    let picked = t.mul(logp, c)?;
    let total = t.sum(picked);
    Ok(t.scale(total, -1.0 / gt.len() as f64))
}

pub fn matcher_loss(p: &Matrix, gt: &[(usize, usize)]) -> Result<f64> {
    let mut t = Tape::new();
    let pv = t.constant(p.clone());
    let l = matcher_loss_var(&mut t, pv, gt)?;
    t.scalar_value(l)
}
