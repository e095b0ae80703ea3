use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::attention::FeatureGrid;
use crate::error::{Error, Result};
use crate::numerics::Matrix;
use crate::params::orthogonal;

/// A pair of grids whose cells carry either a foreground or a background
/// component, with controlled cross-view similarity for each.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwoComponentSpec {
    /// Cosine between the target and reference foreground components.
    pub v: f64,
    /// Cosine between the target and reference background components.
    pub u: f64,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub fg_cells: Vec<usize>,
}

/// Builds `(C_t, C_r)`. Foreground rows lie in one random 2-D subspace and
/// background rows in an orthogonal one; all rows have unit norm.
pub fn construct_two_component_pair(
    spec: &TwoComponentSpec,
    seed: u64,
) -> Result<(FeatureGrid, FeatureGrid)> {
    let TwoComponentSpec { v, u, c, h, w, .. } = *spec;
    if c < 4 {
        return Err(Error::InvalidArgument(format!(
            "two orthogonal 2-D subspaces need c >= 4, got {c}"
        )));
    }
    if !(0.0..=1.0).contains(&v) || !(0.0..=1.0).contains(&u) {
        return Err(Error::InvalidArgument(format!(
            "similarities must lie in [0, 1], got v={v}, u={u}"
        )));
    }
    let n = h * w;
    if let Some(&bad) = spec.fg_cells.iter().find(|&&i| i >= n) {
        return Err(Error::InvalidArgument(format!("foreground cell {bad} outside {n} cells")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // columns are an orthonormal 4-frame
    let basis = orthogonal(c, 4, 1.0, &mut rng);
    let e = |k: usize| -> Vec<f64> { (0..c).map(|i| basis.get(i, k)).collect() };
    let mix = |a: &[f64], b: &[f64], cos: f64| -> Vec<f64> {
        let s = (1.0 - cos * cos).max(0.0).sqrt();
        a.iter().zip(b).map(|(x, y)| cos * x + s * y).collect()
    };
    let (e0, e1, e2, e3) = (e(0), e(1), e(2), e(3));
    let (f_t, f_r) = (e0.clone(), mix(&e0, &e1, v));
    let (b_t, b_r) = (e2.clone(), mix(&e2, &e3, u));

    let mut ct = Matrix::zeros(n, c);
    let mut cr = Matrix::zeros(n, c);
    for i in 0..n {
        let fg = spec.fg_cells.contains(&i);
        ct.row_mut(i).copy_from_slice(if fg { &f_t } else { &b_t });
        cr.row_mut(i).copy_from_slice(if fg { &f_r } else { &b_r });
    }
    Ok((FeatureGrid::new(h, w, ct)?, FeatureGrid::new(h, w, cr)?))
}
