//! Central finite differences, used as the independent check on
//! [`Tape::backward`](super::Tape::backward).

use crate::error::Result;
use crate::numerics::{Matrix, Tape, Var};

/// Step used by the gradient checks.
pub const DEFAULT_STEP: f64 = 1e-5;

/// `(f(x + h e_i) - f(x - h e_i)) / 2h` for every coordinate `i`.
pub fn finite_diff_grad(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    assert!(h > 0.0, "finite difference step must be positive");
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + h;
            let fp = f(&probe);
            probe[i] = orig - h;
            let fm = f(&probe);
            probe[i] = orig;
            (fp - fm) / (2.0 * h)
        })
        .collect()
}

/// `||a - b|| / max(||a||, ||b||)`, or the absolute difference norm when
/// both gradients are (numerically) zero.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt();
    let scale = norm(a).max(norm(b));
    if scale < 1e-10 {
        diff
    } else {
        diff / scale
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Outcome of comparing the tape gradient with finite differences.
#[derive(Debug, Clone, Copy)]
pub struct GradCheck {
    pub relative_error: f64,
    pub analytic_norm: f64,
}

/// Compares reverse-mode and finite-difference gradients of a scalar
/// function of several matrix inputs.
///
/// `build` receives a fresh tape and one leaf per input and must return a
/// `1 x 1` node.
pub fn check_gradients<F>(inputs: &[Matrix], h: f64, build: F) -> Result<GradCheck>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let leaves: Vec<Var> = inputs.iter().map(|m| tape.leaf(m.clone())).collect();
    let out = build(&mut tape, &leaves)?;
    let grads = tape.backward(out)?;
    let analytic: Vec<f64> = leaves
        .iter()
        .flat_map(|&v| grads.get(v).into_vec())
        .collect();

    let flat: Vec<f64> = inputs.iter().flat_map(|m| m.data().to_vec()).collect();
    let eval = |x: &[f64]| -> f64 {
        let mut tape = Tape::new();
        let mut offset = 0;
        let leaves: Vec<Var> = inputs
            .iter()
            .map(|m| {
                let n = m.len();
                let part = Matrix::from_vec(m.rows(), m.cols(), x[offset..offset + n].to_vec())
                    .expect("sizes are preserved");
                offset += n;
                tape.leaf(part)
            })
            .collect();
        let out = build(&mut tape, &leaves).expect("build succeeded at the base point");
        tape.scalar_value(out).expect("scalar output")
    };
    let numeric = finite_diff_grad(eval, &flat, h);
    Ok(GradCheck {
        relative_error: relative_error(&analytic, &numeric),
        analytic_norm: norm(&analytic),
    })
}
