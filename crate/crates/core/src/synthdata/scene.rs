use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::attention::FeatureGrid;
use crate::error::{Error, Result};
use crate::numerics::Matrix;
use crate::weightgen::BBox;

pub const MAX_WARP_MAGNITUDE: f64 = 0.25;
const PLACEMENT_TRIES: usize = 50;

/// Scene and pair generation parameters. Boxes are in pixels with one
/// pixel per cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneSpec {
    pub h: usize,
    pub w: usize,
    pub c: usize,
    pub min_objects: usize,
    pub n_objects: usize,
    pub classes: usize,
    pub min_size: usize,
    pub max_size: usize,
    pub noise_sigma: f64,
    /// Per-entry standard deviation of the static background texture.
    pub texture_sigma: f64,
    /// Per-entry standard deviation of the per-instance part code.
    pub part_sigma: f64,
    /// Norm scale of the local-geometry code on object cells.
    pub geometry_scale: f64,
    pub warp_magnitude: f64,
    pub seed: u64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            h: 16,
            w: 16,
            c: 16,
            min_objects: 1,
            n_objects: 3,
            classes: 4,
            min_size: 3,
            max_size: 7,
            noise_sigma: 0.2,
            texture_sigma: 0.05,
            part_sigma: 0.15,
            geometry_scale: 0.3,
            warp_magnitude: 0.15,
            seed: 0,
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.into()));
        if self.h == 0 || self.w == 0 || self.c == 0 {
            return bad("grid dimensions must be positive");
        }
        if self.classes == 0 {
            return bad("at least one class is required");
        }
        if self.min_objects > self.n_objects {
            return bad("min_objects exceeds n_objects");
        }
        if self.min_size == 0 || self.min_size > self.max_size {
            return bad("object sizes need 0 < min_size <= max_size");
        }
        if !(0.0..=MAX_WARP_MAGNITUDE).contains(&self.warp_magnitude) {
            return bad("warp_magnitude must lie in [0, 0.25]");
        }
        for s in [self.noise_sigma, self.texture_sigma, self.part_sigma, self.geometry_scale] {
            if !(s >= 0.0 && s.is_finite()) {
                return bad("standard deviations must be finite and non-negative");
            }
        }
        Ok(())
    }

    /// Class signatures and the geometry basis, fixed by `seed`.
    pub fn codes(&self) -> SceneCodes {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(1);
        let n = Normal::new(0.0, 1.0).expect("unit normal");
        let mut unit_rows = |rows: usize| {
            let mut m = Matrix::from_fn(rows, self.c, |_, _| n.sample(&mut rng));
            for r in 0..rows {
                let row = m.row_mut(r);
                let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
                row.iter_mut().for_each(|v| *v /= norm);
            }
            m
        };
        SceneCodes {
            signatures: unit_rows(self.classes),
            geometry: unit_rows(4),
        }
    }

    /// Generator for sample `index`.
    pub fn sample_rng(&self, index: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed.wrapping_add(index))
    }
}

/// Per-dataset codes shared by every scene.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneCodes {
    /// Unit-norm rows, one per class.
    pub signatures: Matrix,
    /// Unit-norm rows for the left, top, right and bottom log distances.
    pub geometry: Matrix,
}

/// Log distance around which geometry codes are centered.
const GEOMETRY_CENTER: f64 = std::f64::consts::LN_2;

#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    pub grid: FeatureGrid,
    pub boxes: Vec<BBox>,
    /// Objects drawn before placement; `boxes.len()` may be smaller.
    pub requested: usize,
}

pub(crate) fn gaussian_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, std: f64, rng: &mut R) -> Matrix {
    if std == 0.0 {
        return Matrix::zeros(rows, cols);
    }
    let n = Normal::new(0.0, std).expect("finite std");
    Matrix::from_fn(rows, cols, |_, _| n.sample(rng))
}

/// Background texture plus noise, with non-overlapping rectangular objects.
/// An object cell holds its class signature, a per-instance part code and
/// a geometry code: the log distances from the cell center to the four box
/// sides, embedded through the geometry basis.
pub fn generate_scene<R: Rng + ?Sized>(spec: &SceneSpec, codes: &SceneCodes, rng: &mut R) -> Result<Scene> {
    spec.validate()?;
    if codes.signatures.shape() != (spec.classes, spec.c) || codes.geometry.shape() != (4, spec.c) {
        return Err(Error::Shape("scene codes do not match the spec".into()));
    }
    let (h, w, c) = (spec.h, spec.w, spec.c);
    let mut values = gaussian_matrix(h * w, c, spec.texture_sigma, rng);
    let requested = rng.gen_range(spec.min_objects..=spec.n_objects);
    let mut occupied = vec![false; h * w];
    let mut boxes = Vec::new();
    for _ in 0..requested {
        let class = rng.gen_range(0..spec.classes);
        let placed = (0..PLACEMENT_TRIES).find_map(|_| {
            let bw = rng.gen_range(spec.min_size..=spec.max_size);
            let bh = rng.gen_range(spec.min_size..=spec.max_size);
            if bw > w || bh > h {
                return None;
            }
            let x0 = rng.gen_range(0..=w - bw);
            let y0 = rng.gen_range(0..=h - bh);
            let free = (y0..y0 + bh).all(|r| (x0..x0 + bw).all(|q| !occupied[r * w + q]));
            free.then_some((x0, y0, bw, bh))
        });
        let Some((x0, y0, bw, bh)) = placed else {
            continue;
        };
        let parts = gaussian_matrix(bw * bh, c, spec.part_sigma, rng);
        for r in y0..y0 + bh {
            for q in x0..x0 + bw {
                let cell = r * w + q;
                occupied[cell] = true;
                let part = parts.row((r - y0) * bw + (q - x0));
                let sig = codes.signatures.row(class);
                let (cx, cy) = (q as f64 + 0.5, r as f64 + 0.5);
                let dist = [cx - x0 as f64, cy - y0 as f64, (x0 + bw) as f64 - cx, (y0 + bh) as f64 - cy];
                let geo: Vec<f64> = dist.iter().map(|d| spec.geometry_scale * (d.ln() - GEOMETRY_CENTER)).collect();
                for (k, v) in values.row_mut(cell).iter_mut().enumerate() {
                    let g: f64 = (0..4).map(|s| geo[s] * codes.geometry.get(s, k)).sum();
                    *v = sig[k] + part[k] + g;
                }
            }
        }
        boxes.push(BBox::new(x0 as f64, y0 as f64, (x0 + bw) as f64, (y0 + bh) as f64, class + 1)?);
    }
    let noise = gaussian_matrix(h * w, c, spec.noise_sigma, rng);
    let values = values.add(&noise)?;
    Ok(Scene {
        grid: FeatureGrid::new(h, w, values)?,
        boxes,
        requested,
    })
}
