//! Opposite-camera fusion: a ground-plane homography between the two views
//! and gap filling for people hidden from the entrance camera.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::entrance::EffectiveEntrance;
use crate::geometry::{iou, BBox};
use crate::linalg::Matrix;
use crate::model::{Detection, ENTRANCE_CAMERA};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FusionError {
    #[error("point maps to infinity")]
    PointAtInfinity,
    #[error("homography is singular")]
    Singular,
    #[error("degenerate correspondence configuration: {0}")]
    DegenerateConfiguration(&'static str),
}

/// Projective map with `m[2][2] = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Homography<T> {
    m: Matrix<T, 3, 3>,
}

pub const DENOMINATOR_TOLERANCE: f64 = 1e-12;
pub const DETERMINANT_TOLERANCE: f64 = 1e-9;

fn det3<T: Scalar>(m: &Matrix<T, 3, 3>) -> T {
    let a = &m.0;
    a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1]) - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
        + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0])
}

impl<T: Scalar> Homography<T> {
    /// Normalizes `m` so its bottom-right entry is one and checks invertibility.
    pub fn new(m: [[T; 3]; 3]) -> Result<Self, FusionError> {
        let m = Matrix(m);
        let corner = m[(2, 2)];
        if !m.is_finite() || corner.abs() < T::lit(DENOMINATOR_TOLERANCE) {
            return Err(FusionError::Singular);
        }
        let m = m.scale(T::one() / corner);
        if !(det3(&m).abs() > T::lit(DETERMINANT_TOLERANCE)) {
            return Err(FusionError::Singular);
        }
        Ok(Self { m })
    }

    pub fn identity() -> Self {
        Self { m: Matrix::identity() }
    }

    pub fn matrix(&self) -> [[T; 3]; 3] {
        self.m.0
    }

    pub fn determinant(&self) -> T {
        det3(&self.m)
    }

    pub fn inverse(&self) -> Result<Self, FusionError> {
        let a = &self.m.0;
        let cof = |r0: usize, r1: usize, c0: usize, c1: usize| a[r0][c0] * a[r1][c1] - a[r0][c1] * a[r1][c0];
        // Adjugate; the determinant factor cancels in normalization.
        let adj = [
            [cof(1, 2, 1, 2), -cof(0, 2, 1, 2), cof(0, 1, 1, 2)],
            [-cof(1, 2, 0, 2), cof(0, 2, 0, 2), -cof(0, 1, 0, 2)],
            [cof(1, 2, 0, 1), -cof(0, 2, 0, 1), cof(0, 1, 0, 1)],
        ];
        Self::new(adj)
    }

    fn denominator(&self, x: T, y: T) -> T {
        self.m[(2, 0)] * x + self.m[(2, 1)] * y + self.m[(2, 2)]
    }

    pub fn map_point(&self, (x, y): (T, T)) -> Result<(T, T), FusionError> {
        let w = self.denominator(x, y);
        if !(w.abs() > T::lit(DENOMINATOR_TOLERANCE)) {
            return Err(FusionError::PointAtInfinity);
        }
        let u = (self.m[(0, 0)] * x + self.m[(0, 1)] * y + self.m[(0, 2)]) / w;
        let v = (self.m[(1, 0)] * x + self.m[(1, 1)] * y + self.m[(1, 2)]) / w;
        Ok((u, v))
    }

    /// `∂(u, v) / ∂(x, y)` at `p`, row-major.
    pub fn jacobian(&self, (x, y): (T, T)) -> Result<[[T; 2]; 2], FusionError> {
        let w = self.denominator(x, y);
        if !(w.abs() > T::lit(DENOMINATOR_TOLERANCE)) {
            return Err(FusionError::PointAtInfinity);
        }
        let m = &self.m.0;
        let a = m[0][0] * x + m[0][1] * y + m[0][2];
        let b = m[1][0] * x + m[1][1] * y + m[1][2];
        let w2 = w * w;
        Ok([
            [(m[0][0] * w - a * m[2][0]) / w2, (m[0][1] * w - a * m[2][1]) / w2],
            [(m[1][0] * w - b * m[2][0]) / w2, (m[1][1] * w - b * m[2][1]) / w2],
        ])
    }

    /// Maps a person box through the ground-plane homography.
    ///
    /// The bottom corners and foot point are mapped; the result keeps the
    /// mapped bottom-edge width, stands on the mapped foot point and scales the
    /// height by the local areal scale `sqrt(|det J|)` at the foot.
    pub fn map_box(&self, b: &BBox<T>) -> Result<BBox<T>, FusionError> {
        let foot = b.foot();
        let (fx, fy) = self.map_point(foot)?;
        let (lx, _) = self.map_point((b.x, b.bottom()))?;
        let (rx, _) = self.map_point((b.right(), b.bottom()))?;
        let j = self.jacobian(foot)?;
        let scale = (j[0][0] * j[1][1] - j[0][1] * j[1][0]).abs().sqrt();
        let w = (rx - lx).abs();
        let h = b.h * scale;
        Ok(BBox::raw(fx - w * T::lit(0.5), fy - h, w, h))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HomographyFit<T> {
    pub homography: Homography<T>,
    /// Root-mean-square reprojection error in destination pixels.
    pub rmse: T,
}

fn normalizing_transform<T: Scalar>(pts: &[(T, T)]) -> Result<Matrix<T, 3, 3>, FusionError> {
    let n = T::lit(pts.len() as f64);
    let (sx, sy) = pts.iter().fold((T::zero(), T::zero()), |(a, b), p| (a + p.0, b + p.1));
    let (cx, cy) = (sx / n, sy / n);
    let mean_dist = pts
        .iter()
        .fold(T::zero(), |acc, p| acc + ((p.0 - cx).powi(2) + (p.1 - cy).powi(2)).sqrt())
        / n;
    if !(mean_dist > T::zero()) {
        return Err(FusionError::DegenerateConfiguration("points coincide"));
    }
    let s = T::lit(std::f64::consts::SQRT_2) / mean_dist;
    Ok(Matrix([[s, T::zero(), -s * cx], [T::zero(), s, -s * cy], [T::zero(), T::zero(), T::one()]]))
}

fn apply<T: Scalar>(t: &Matrix<T, 3, 3>, (x, y): (T, T)) -> (T, T) {
    (t[(0, 0)] * x + t[(0, 2)], t[(1, 1)] * y + t[(1, 2)])
}

fn collinear<T: Scalar>(a: (T, T), b: (T, T), c: (T, T), scale: T) -> bool {
    let cross = (b.0 - a.0) * (c.1 - a.1) - (b.1 - a.1) * (c.0 - a.0);
    cross.abs() <= T::lit(1e-9) * scale
}

/// A `(source, destination)` point pair.
pub type Correspondence<T> = ((T, T), (T, T));

/// Normalized direct linear transform over point correspondences.
pub fn estimate_homography<T: Scalar>(
    pairs: &[Correspondence<T>],
) -> Result<HomographyFit<T>, FusionError> {
    if pairs.len() < 4 {
        return Err(FusionError::DegenerateConfiguration("need at least 4 correspondences"));
    }
    let src: Vec<(T, T)> = pairs.iter().map(|p| p.0).collect();
    let dst: Vec<(T, T)> = pairs.iter().map(|p| p.1).collect();
    let ts = normalizing_transform(&src)?;
    let td = normalizing_transform(&dst)?;
    let ns: Vec<_> = src.iter().map(|&p| apply(&ts, p)).collect();
    let nd: Vec<_> = dst.iter().map(|&p| apply(&td, p)).collect();
    if pairs.len() == 4 {
        for (i, j, k) in [(0, 1, 2), (0, 1, 3), (0, 2, 3), (1, 2, 3)] {
            if collinear(ns[i], ns[j], ns[k], T::one()) {
                return Err(FusionError::DegenerateConfiguration("three source points are collinear"));
            }
        }
    }

    let mut ata = Matrix::<T, 9, 9>::zeros();
    for (&(x, y), &(u, v)) in ns.iter().zip(&nd) {
        let o = T::one();
        let z = T::zero();
        let rows = [
            [-x, -y, -o, z, z, z, u * x, u * y, u],
            [z, z, z, -x, -y, -o, v * x, v * y, v],
        ];
        for row in rows {
            for r in 0..9 {
                for c in 0..9 {
                    ata[(r, c)] += row[r] * row[c];
                }
            }
        }
    }
    let (values, vectors) = ata.symmetric_eigen();
    let largest = values[8].abs();
    if !(values[1].abs() > T::epsilon().sqrt() * largest) {
        return Err(FusionError::DegenerateConfiguration("correspondences do not fix a unique map"));
    }
    let hn = Matrix::<T, 3, 3>::from_fn(|r, c| vectors[(3 * r + c, 0)]);
    let td_inv = td.try_inverse(T::lit(DENOMINATOR_TOLERANCE)).ok_or(FusionError::Singular)?;
    let h = td_inv * hn * ts;
    let homography = Homography::new(h.0).map_err(|_| {
        FusionError::DegenerateConfiguration("estimated map is singular")
    })?;

    let mut sq = T::zero();
    for (&s, &d) in src.iter().zip(&dst) {
        let (u, v) = homography.map_point(s)?;
        sq += (u - d.0).powi(2) + (v - d.1).powi(2);
    }
    let rmse = (sq / T::lit(pairs.len() as f64)).sqrt();
    Ok(HomographyFit { homography, rmse })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FusionConfig {
    /// Multiplier applied to the score of a mapped-in detection.
    pub score_discount: f64,
    /// A mapped box at or above this IoU with any entrance-camera detection is a duplicate.
    pub duplicate_iou: f64,
    /// Growth of the entrance neighbourhood per side, as a fraction of its size.
    pub neighborhood_margin: f64,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self { score_discount: 0.5, duplicate_iou: 0.1, neighborhood_margin: 0.5 }
    }
}

/// Adds entrance-camera detections for people only the opposite camera sees
/// near the entrance. Existing detections are returned unchanged, in order,
/// ahead of the synthesized ones.
pub fn fill_occluded<T: Scalar>(
    primary: &[Detection<T>],
    secondary: &[Detection<T>],
    h: &Homography<T>,
    eff: &EffectiveEntrance<T>,
    cfg: &FusionConfig,
) -> Vec<Detection<T>> {
    let mut out = primary.to_vec();
    let Some(first) = eff.regions.first() else {
        return out;
    };
    let hull = eff.regions.iter().skip(1).fold(*first, |acc, r| {
        BBox::from_corners(
            acc.x.min(r.x),
            acc.y.min(r.y),
            acc.right().max(r.right()),
            acc.bottom().max(r.bottom()),
        )
    });
    let margin = T::lit(cfg.neighborhood_margin);
    let neighborhood = hull.dilate(margin, margin);
    let duplicate = T::lit(cfg.duplicate_iou);

    for det in secondary {
        let Ok(foot) = h.map_point(det.bbox.foot()) else { continue };
        if !neighborhood.contains_point(foot.0, foot.1) {
            continue;
        }
        let Ok(mapped) = h.map_box(&det.bbox) else { continue };
        if mapped.is_degenerate() {
            continue;
        }
        let seen = out.iter().any(|p| iou(&mapped, &p.bbox).is_ok_and(|v| v >= duplicate));
        if seen {
            continue;
        }
        out.push(Detection {
            frame: det.frame,
            bbox: mapped,
            score: det.score * T::lit(cfg.score_discount),
            camera: ENTRANCE_CAMERA,
            id: det.id,
            synthesized: true,
        });
    }
    out
}
