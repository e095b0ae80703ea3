use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Determinant magnitude below which a homography counts as singular.
pub const MIN_DET: f64 = 1e-12;
/// Projective coordinate magnitude below which a point maps to infinity.
pub const MIN_W: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(self, other: Self) -> f64 {
        ((self.x - other.x).powi(2) + (self.y - other.y).powi(2)).sqrt()
    }
}

/// A matched pair: `reference` in the reference image, `target` in the
/// target image, related by `target ~ H reference`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Correspondence {
    pub target: Point2,
    pub reference: Point2,
    pub score: f64,
}

impl Correspondence {
    pub fn new(reference: Point2, target: Point2) -> Self {
        Self {
            target,
            reference,
            score: 1.0,
        }
    }
}

/// Projective transform in pixel coordinates, stored row-major and scaled so
/// that `h[2][2] == 1` (or unit Frobenius norm when that entry vanishes).
///
/// Serializes as a JSON array of nine numbers.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "[f64; 9]", try_from = "[f64; 9]")]
pub struct Homography {
    m: [[f64; 3]; 3],
}

impl From<Homography> for [f64; 9] {
    fn from(h: Homography) -> Self {
        h.to_array()
    }
}

impl TryFrom<[f64; 9]> for Homography {
    type Error = Error;

    fn try_from(v: [f64; 9]) -> Result<Self> {
        Homography::from_array(v)
    }
}

impl Homography {
    pub const IDENTITY: Self = Self {
        m: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
    };

    /// Normalizes and validates a raw 3x3 matrix.
    pub fn new(m: [[f64; 3]; 3]) -> Result<Self> {
        if m.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument("non-finite homography entry".into()));
        }
        let fro = m.iter().flatten().map(|x| x * x).sum::<f64>().sqrt();
        if fro == 0.0 {
            return Err(Error::Singular(0.0));
        }
        let scale = if m[2][2].abs() > 1e-12 * fro {
            m[2][2]
        } else {
            fro
        };
        let mut n = m;
        for v in n.iter_mut().flatten() {
            *v /= scale;
        }
        let h = Self { m: n };
        let det = h.det();
        if det.abs() <= MIN_DET {
            return Err(Error::Singular(det));
        }
        Ok(h)
    }

    pub fn from_array(v: [f64; 9]) -> Result<Self> {
        Self::new([[v[0], v[1], v[2]], [v[3], v[4], v[5]], [v[6], v[7], v[8]]])
    }

    pub fn to_array(&self) -> [f64; 9] {
        let m = &self.m;
        [
            m[0][0], m[0][1], m[0][2], m[1][0], m[1][1], m[1][2], m[2][0], m[2][1], m[2][2],
        ]
    }

    pub fn translation(tx: f64, ty: f64) -> Self {
        Self {
            m: [[1.0, 0.0, tx], [0.0, 1.0, ty], [0.0, 0.0, 1.0]],
        }
    }

    pub fn matrix(&self) -> [[f64; 3]; 3] {
        self.m
    }

    pub fn det(&self) -> f64 {
        det3(&self.m)
    }

    pub fn apply(&self, p: Point2) -> Result<Point2> {
        let m = &self.m;
        let w = m[2][0] * p.x + m[2][1] * p.y + m[2][2];
        if w.abs() <= MIN_W || !w.is_finite() {
            return Err(Error::PointAtInfinity(w));
        }
        Ok(Point2::new(
            (m[0][0] * p.x + m[0][1] * p.y + m[0][2]) / w,
            (m[1][0] * p.x + m[1][1] * p.y + m[1][2]) / w,
        ))
    }

    pub fn inverse(&self) -> Result<Self> {
        let m = &self.m;
        let det = self.det();
        if det.abs() <= MIN_DET {
            return Err(Error::Singular(det));
        }
        let cof = |r0: usize, r1: usize, c0: usize, c1: usize| {
            m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0]
        };
        let adj = [
            [cof(1, 2, 1, 2), -cof(0, 2, 1, 2), cof(0, 1, 1, 2)],
            [-cof(1, 2, 0, 2), cof(0, 2, 0, 2), -cof(0, 1, 0, 2)],
            [cof(1, 2, 0, 1), -cof(0, 2, 0, 1), cof(0, 1, 0, 1)],
        ];
        let mut inv = adj;
        for v in inv.iter_mut().flatten() {
            *v /= det;
        }
        Self::new(inv)
    }

    /// `self * other`: applies `other` first.
    pub fn compose(&self, other: &Self) -> Result<Self> {
        Self::new(mul3(&self.m, &other.m))
    }

    /// Expresses the transform in coordinates scaled by `s`
    /// (`S H S^-1` with `S = diag(s, s, 1)`).
    pub fn rescaled(&self, s: f64) -> Result<Self> {
        let sm = [[s, 0.0, 0.0], [0.0, s, 0.0], [0.0, 0.0, 1.0]];
        let si = [[1.0 / s, 0.0, 0.0], [0.0, 1.0 / s, 0.0], [0.0, 0.0, 1.0]];
        Self::new(mul3(&mul3(&sm, &self.m), &si))
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.to_array()
            .iter()
            .zip(other.to_array())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

impl Default for Homography {
    fn default() -> Self {
        Self::IDENTITY
    }
}

pub(crate) fn det3(m: &[[f64; 3]; 3]) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

pub(crate) fn mul3(a: &[[f64; 3]; 3], b: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let mut out = [[0.0; 3]; 3];
    for (r, row) in out.iter_mut().enumerate() {
        for (c, v) in row.iter_mut().enumerate() {
            *v = (0..3).map(|k| a[r][k] * b[k][c]).sum();
        }
    }
    out
}
