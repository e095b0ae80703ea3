//! Named parameter storage shared by every learnable component.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::numerics::{Gradients, Matrix, Tape, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Ordered collection of named matrices. Insertion order is the canonical
/// order for checkpoints and optimizer state.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Matrix>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Matrix) -> ParamId {
        let name = name.into();
        assert!(
            !self.names.contains(&name),
            "parameter {name} registered twice"
        );
        self.names.push(name);
        self.values.push(value);
        ParamId(self.values.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Matrix {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Matrix {
        &mut self.values[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Matrix)> {
        self.names.iter().map(String::as_str).zip(&self.values)
    }

    pub fn values(&self) -> &[Matrix] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Matrix] {
        &mut self.values
    }

    pub fn scalar_count(&self) -> usize {
        self.values.iter().map(Matrix::len).sum()
    }

    /// Replaces every value with the same-named entry of `other`.
    pub fn load_from(&mut self, other: &[(String, Matrix)]) -> Result<()> {
        if other.len() != self.len() {
            return Err(Error::Format(format!(
                "checkpoint has {} parameters, model has {}",
                other.len(),
                self.len()
            )));
        }
        for (name, m) in other {
            let id = self
                .find(name)
                .ok_or_else(|| Error::Format(format!("unknown parameter {name}")))?;
            if self.get(id).shape() != m.shape() {
                return Err(Error::Shape(format!(
                    "parameter {name}: expected {:?}, got {:?}",
                    self.get(id).shape(),
                    m.shape()
                )));
            }
            self.values[id.0] = m.clone();
        }
        Ok(())
    }

    /// Places every parameter on the tape, as gradient-tracking leaves when
    /// `trainable`, else as constants.
    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> Bound {
        let vars = self
            .values
            .iter()
            .map(|m| {
                if trainable {
                    tape.leaf(m.clone())
                } else {
                    tape.constant(m.clone())
                }
            })
            .collect();
        Bound { vars }
    }
}

/// Tape handles for a [`ParamStore`], indexed by [`ParamId`].
#[derive(Clone, Debug)]
pub struct Bound {
    vars: Vec<Var>,
}

impl Bound {
    /// Wraps vars that mirror a store's order, e.g. leaves created by a
    /// gradient check.
    pub fn from_vars(vars: Vec<Var>) -> Self {
        Self { vars }
    }

    pub fn var(&self, id: ParamId) -> Var {
        self.vars[id.0]
    }

    /// Gradients for every parameter in store order.
    pub fn gradients(&self, grads: &mut Gradients) -> Vec<Matrix> {
        self.vars.iter().map(|&v| grads.take(v)).collect()
    }
}

/// `rows x cols` matrix with orthonormal rows or columns (whichever is the
/// shorter side), multiplied by `gain`.
pub fn orthogonal<R: Rng + ?Sized>(rows: usize, cols: usize, gain: f64, rng: &mut R) -> Matrix {
    let (tall_r, tall_c) = if rows >= cols { (rows, cols) } else { (cols, rows) };
    let g = DMatrix::<f64>::from_fn(tall_r, tall_c, |_, _| rng.sample(StandardNormal));
    let qr = g.qr();
    let q = qr.q();
    let r = qr.r();
    // sign fix makes the distribution uniform
    let m = Matrix::from_fn(tall_r, tall_c, |i, j| {
        let s = if r[(j, j)] < 0.0 { -1.0 } else { 1.0 };
        gain * s * q[(i, j)]
    });
    if rows >= cols {
        m
    } else {
        m.transpose()
    }
}

pub fn gaussian<R: Rng + ?Sized>(rows: usize, cols: usize, std: f64, rng: &mut R) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| std * rng.sample::<f64, _>(StandardNormal))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn orthogonal_has_orthonormal_short_side() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for (r, c) in [(5, 5), (3, 12), (12, 3)] {
            let m = orthogonal(r, c, 1.0, &mut rng);
            assert_eq!(m.shape(), (r, c));
            let gram = if r <= c { m.matmul_nt(&m) } else { m.matmul_tn(&m) }.unwrap();
            let eye = Matrix::identity(r.min(c));
            assert!(gram.max_abs_diff(&eye).unwrap() < 1e-12);
        }
    }

    #[test]
    fn store_round_trips_by_name() {
        let mut a = ParamStore::new();
        let x = a.add("x", Matrix::filled(2, 2, 1.0));
        a.add("y", Matrix::zeros(1, 3));
        let mut b = a.clone();
        b.get_mut(x).data_mut()[0] = 5.0;
        let dump: Vec<(String, Matrix)> = b.iter().map(|(n, m)| (n.to_string(), m.clone())).collect();
        a.load_from(&dump).unwrap();
        assert_eq!(a, b);
        let bad = vec![("x".to_string(), Matrix::zeros(1, 1)), ("y".to_string(), Matrix::zeros(1, 3))];
        assert!(a.load_from(&bad).is_err());
    }
}
