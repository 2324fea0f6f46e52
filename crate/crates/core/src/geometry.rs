//! Axis-aligned rectangles in frame pixel coordinates.
//!
//! Coordinates are continuous. A box that touches a region's boundary counts as
//! contained in it; an empty intersection is a zero-area box rather than an
//! error.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum GeometryError {
    #[error("box has zero area")]
    ZeroAreaBox,
    #[error("both boxes have zero area")]
    BothZeroArea,
    #[error("invalid box: {0}")]
    InvalidBox(&'static str),
    #[error("region must have positive width and height")]
    InvalidScene,
    #[error("entrance does not lie inside the scene")]
    EntranceOutsideScene,
}

/// Left/top corner plus width and height.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(bound = "T: Scalar + Serialize + serde::de::DeserializeOwned")]
pub struct BBox<T> {
    pub x: T,
    pub y: T,
    pub w: T,
    pub h: T,
}

impl<T: Scalar> BBox<T> {
    /// Builds a box, rejecting negative or non-finite extents.
    pub fn new(x: T, y: T, w: T, h: T) -> Result<Self, GeometryError> {
        if !(x.is_finite() && y.is_finite() && w.is_finite() && h.is_finite()) {
            return Err(GeometryError::InvalidBox("non-finite coordinate"));
        }
        if w < T::zero() || h < T::zero() {
            return Err(GeometryError::InvalidBox("negative width or height"));
        }
        Ok(Self { x, y, w, h })
    }

    /// Builds a box without validation. Callers guarantee `w, h >= 0`.
    pub const fn raw(x: T, y: T, w: T, h: T) -> Self {
        Self { x, y, w, h }
    }

    pub fn from_corners(x0: T, y0: T, x1: T, y1: T) -> Self {
        let (l, r) = if x0 <= x1 { (x0, x1) } else { (x1, x0) };
        let (t, b) = if y0 <= y1 { (y0, y1) } else { (y1, y0) };
        Self::raw(l, t, r - l, b - t)
    }

    pub fn from_center(cx: T, cy: T, w: T, h: T) -> Self {
        let half = T::lit(0.5);
        Self::raw(cx - w * half, cy - h * half, w, h)
    }

    #[inline]
    pub fn right(&self) -> T {
        self.x + self.w
    }

    #[inline]
    pub fn bottom(&self) -> T {
        self.y + self.h
    }

    #[inline]
    pub fn area(&self) -> T {
        self.w * self.h
    }

    pub fn center(&self) -> (T, T) {
        let half = T::lit(0.5);
        (self.x + self.w * half, self.y + self.h * half)
    }

    /// Ground-contact point: the midpoint of the bottom edge.
    pub fn foot(&self) -> (T, T) {
        (self.x + self.w * T::lit(0.5), self.bottom())
    }

    pub fn is_degenerate(&self) -> bool {
        self.area() <= T::zero()
    }

    pub fn contains_point(&self, px: T, py: T) -> bool {
        px >= self.x && px <= self.right() && py >= self.y && py <= self.bottom()
    }

    /// Whether every corner of `self` lies inside or on the boundary of `outer`.
    pub fn is_within(&self, outer: &Self) -> bool {
        self.x >= outer.x
            && self.y >= outer.y
            && self.right() <= outer.right()
            && self.bottom() <= outer.bottom()
    }

    /// Positive-area overlap test (edge contact alone does not count).
    pub fn overlaps(&self, other: &Self) -> bool {
        intersect(self, other).area() > T::zero()
    }

    /// Grows the box by `fx·w` on the left and right and `fy·h` on the top and bottom.
    pub fn dilate(&self, fx: T, fy: T) -> Self {
        let dx = self.w * fx;
        let dy = self.h * fy;
        let two = T::lit(2.0);
        Self::raw(self.x - dx, self.y - dy, self.w + two * dx, self.h + two * dy)
    }

    pub fn cast<U: Scalar>(&self) -> BBox<U> {
        BBox::raw(
            U::lit(self.x.to_f64_lossy()),
            U::lit(self.y.to_f64_lossy()),
            U::lit(self.w.to_f64_lossy()),
            U::lit(self.h.to_f64_lossy()),
        )
    }
}

/// Axis-aligned intersection. Disjoint inputs give a zero-area box anchored at
/// the clamped overlap corner.
pub fn intersect<T: Scalar>(a: &BBox<T>, b: &BBox<T>) -> BBox<T> {
    let x0 = a.x.max(b.x);
    let y0 = a.y.max(b.y);
    let x1 = a.right().min(b.right());
    let y1 = a.bottom().min(b.bottom());
    BBox::raw(x0, y0, (x1 - x0).max(T::zero()), (y1 - y0).max(T::zero()))
}

/// Fraction of `b`'s area that lies inside `region`.
pub fn containment_ratio<T: Scalar>(b: &BBox<T>, region: &BBox<T>) -> Result<T, GeometryError> {
    let area = b.area();
    if !(area > T::zero()) {
        return Err(GeometryError::ZeroAreaBox);
    }
    if b.is_within(region) {
        return Ok(T::one());
    }
    Ok((intersect(b, region).area() / area).min(T::one()))
}

pub fn iou<T: Scalar>(a: &BBox<T>, b: &BBox<T>) -> Result<T, GeometryError> {
    let (aa, ab) = (a.area(), b.area());
    if !(aa > T::zero()) && !(ab > T::zero()) {
        return Err(GeometryError::BothZeroArea);
    }
    let inter = intersect(a, b).area();
    let union = aa + ab - inter;
    Ok((inter / union).max(T::zero()).min(T::one()))
}

/// The full frame `A[0, 0, width, height]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar + Serialize + serde::de::DeserializeOwned")]
pub struct Scene<T> {
    pub width: T,
    pub height: T,
}

impl<T: Scalar> Scene<T> {
    pub fn new(width: T, height: T) -> Result<Self, GeometryError> {
        if !(width > T::zero() && height > T::zero()) || !width.is_finite() || !height.is_finite() {
            return Err(GeometryError::InvalidScene);
        }
        Ok(Self { width, height })
    }

    pub fn rect(&self) -> BBox<T> {
        BBox::raw(T::zero(), T::zero(), self.width, self.height)
    }

    pub fn intersects(&self, b: &BBox<T>) -> bool {
        b.x <= self.width && b.y <= self.height && b.right() >= T::zero() && b.bottom() >= T::zero()
    }
}

/// The private-area doorway as seen by the entrance-facing camera.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar + Serialize + serde::de::DeserializeOwned")]
pub struct Entrance<T> {
    pub rect: BBox<T>,
}

impl<T: Scalar> Entrance<T> {
    pub fn new(rect: BBox<T>, scene: &Scene<T>) -> Result<Self, GeometryError> {
        if rect.is_degenerate() {
            return Err(GeometryError::ZeroAreaBox);
        }
        if !rect.is_within(&scene.rect()) {
            return Err(GeometryError::EntranceOutsideScene);
        }
        Ok(Self { rect })
    }

    /// Entrance without a scene bound check.
    pub fn unchecked(rect: BBox<T>) -> Self {
        Self { rect }
    }
}

/// Splits the union of `keep` minus the union of `cut` into disjoint
/// rectangles on the compressed coordinate grid of all inputs.
///
/// `membership` decides whether a grid cell (tested at its centre) belongs to
/// the result; the `keep`/`cut` lists only supply the grid lines.
pub(crate) fn decompose<T: Scalar>(
    rects: &[BBox<T>],
    membership: impl Fn(T, T) -> bool,
) -> Vec<BBox<T>> {
    let mut xs: Vec<T> = rects.iter().flat_map(|r| [r.x, r.right()]).collect();
    let mut ys: Vec<T> = rects.iter().flat_map(|r| [r.y, r.bottom()]).collect();
    let cmp = |a: &T, b: &T| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal);
    xs.sort_by(cmp);
    xs.dedup();
    ys.sort_by(cmp);
    ys.dedup();
    if xs.len() < 2 || ys.len() < 2 {
        return Vec::new();
    }
    let half = T::lit(0.5);

    // Horizontal runs per grid row: (x_start_idx, x_end_idx).
    let rows: Vec<Vec<(usize, usize)>> = ys
        .windows(2)
        .map(|yw| {
            let cy = (yw[0] + yw[1]) * half;
            let mut runs = Vec::new();
            let mut start = None;
            for (i, xw) in xs.windows(2).enumerate() {
                let inside = membership((xw[0] + xw[1]) * half, cy);
                match (inside, start) {
                    (true, None) => start = Some(i),
                    (false, Some(s)) => {
                        runs.push((s, i));
                        start = None;
                    }
                    _ => {}
                }
            }
            if let Some(s) = start {
                runs.push((s, xs.len() - 1));
            }
            runs
        })
        .collect();

    // Merge identical runs across consecutive rows into taller rectangles.
    let mut out = Vec::new();
    let mut open: Vec<((usize, usize), usize)> = Vec::new();
    for (row_idx, runs) in rows.iter().enumerate() {
        let mut next_open = Vec::new();
        for &(run, start_row) in &open {
            if runs.contains(&run) {
                next_open.push((run, start_row));
            } else {
                out.push(BBox::from_corners(xs[run.0], ys[start_row], xs[run.1], ys[row_idx]));
            }
        }
        for &run in runs {
            if !next_open.iter().any(|(r, _)| *r == run) {
                next_open.push((run, row_idx));
            }
        }
        open = next_open;
    }
    let last = ys.len() - 1;
    for (run, start_row) in open {
        out.push(BBox::from_corners(xs[run.0], ys[start_row], xs[run.1], ys[last]));
    }
    out.sort_by(|a, b| cmp(&a.y, &b.y).then(cmp(&a.x, &b.x)));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn b(x: f64, y: f64, w: f64, h: f64) -> BBox<f64> {
        BBox::new(x, y, w, h).unwrap()
    }

    /// Counts the integer pixel cells covered by every box in `boxes`.
    fn raster_count(boxes: &[BBox<f64>], step: f64) -> f64 {
        let x0 = boxes.iter().map(|r| r.x).fold(f64::INFINITY, f64::min);
        let y0 = boxes.iter().map(|r| r.y).fold(f64::INFINITY, f64::min);
        let x1 = boxes.iter().map(|r| r.right()).fold(f64::NEG_INFINITY, f64::max);
        let y1 = boxes.iter().map(|r| r.bottom()).fold(f64::NEG_INFINITY, f64::max);
        let mut n = 0usize;
        let mut y = y0 + step / 2.0;
        while y < y1 {
            let mut x = x0 + step / 2.0;
            while x < x1 {
                if boxes.iter().all(|r| r.contains_point(x, y)) {
                    n += 1;
                }
                x += step;
            }
            y += step;
        }
        n as f64 * step * step
    }

    #[test]
    fn intersect_examples() {
        assert_eq!(intersect(&b(0., 0., 10., 10.), &b(5., 5., 10., 10.)), b(5., 5., 5., 5.));
        assert_eq!(intersect(&b(0., 0., 10., 10.), &b(20., 20., 5., 5.)).area(), 0.0);
        let a = b(3., 4., 7., 2.);
        assert_eq!(intersect(&a, &a), a);
    }

    #[test]
    fn containment_examples() {
        assert_eq!(containment_ratio(&b(10., 10., 5., 5.), &b(0., 0., 100., 100.)).unwrap(), 1.0);
        assert_eq!(containment_ratio(&b(0., 0., 10., 10.), &b(5., 0., 10., 10.)).unwrap(), 0.5);
        let bx = b(2., 3., 7., 5.);
        let e = b(4., 4., 6., 6.);
        let oracle = raster_count(&[bx, e], 1.0) / raster_count(&[bx], 1.0);
        let got = containment_ratio(&bx, &e).unwrap();
        assert!((got - oracle).abs() < 0.02, "{got} vs {oracle}");
        assert!((got - 20.0 / 35.0).abs() < 1e-12);
    }

    #[test]
    fn containment_rejects_zero_area() {
        assert_eq!(
            containment_ratio(&b(1., 1., 0., 4.), &b(0., 0., 10., 10.)),
            Err(GeometryError::ZeroAreaBox)
        );
    }

    #[test]
    fn touching_boundary_counts_as_contained() {
        let e = b(0., 0., 10., 10.);
        assert_eq!(containment_ratio(&b(0., 0., 10., 10.), &e).unwrap(), 1.0);
        assert_eq!(containment_ratio(&b(5., 0., 5., 10.), &e).unwrap(), 1.0);
    }

    #[test]
    fn iou_examples() {
        let a = b(1., 2., 30., 40.);
        assert_eq!(iou(&a, &a).unwrap(), 1.0);
        assert_eq!(iou(&a, &b(100., 100., 5., 5.)).unwrap(), 0.0);
        let v = iou(&b(0., 0., 10., 10.), &b(5., 0., 10., 10.)).unwrap();
        assert!((v - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(iou(&b(0., 0., 0., 0.), &b(1., 1., 0., 3.)), Err(GeometryError::BothZeroArea));
        assert_eq!(iou(&b(0., 0., 0., 0.), &b(0., 0., 3., 3.)).unwrap(), 0.0);
    }

    #[test]
    fn new_rejects_negative_extent() {
        assert!(BBox::new(0.0, 0.0, -1.0, 2.0).is_err());
        assert!(BBox::new(0.0, f64::NAN, 1.0, 2.0).is_err());
    }

    #[test]
    fn entrance_must_fit_scene() {
        let scene = Scene::new(100.0, 50.0).unwrap();
        assert!(Entrance::new(b(10., 10., 20., 20.), &scene).is_ok());
        assert_eq!(
            Entrance::new(b(90., 10., 20., 20.), &scene),
            Err(GeometryError::EntranceOutsideScene)
        );
        assert!(Scene::new(0.0, 10.0).is_err());
    }

    #[test]
    fn works_in_f32() {
        let a = BBox::<f32>::raw(0., 0., 10., 10.);
        let c = BBox::<f32>::raw(5., 0., 10., 10.);
        assert!((iou(&a, &c).unwrap() - 1.0 / 3.0).abs() < 1e-6);
    }

    #[test]
    fn decompose_recovers_difference() {
        let outer = b(0., 0., 10., 10.);
        let hole = b(3., 3., 4., 4.);
        let parts = decompose(&[outer, hole], |x, y| {
            outer.contains_point(x, y) && !hole.contains_point(x, y)
        });
        let total: f64 = parts.iter().map(|p| p.area()).sum();
        assert!((total - 84.0).abs() < 1e-12);
        for (i, p) in parts.iter().enumerate() {
            for q in &parts[i + 1..] {
                assert!(!p.overlaps(q));
            }
        }
    }

    fn arb_box() -> impl Strategy<Value = BBox<f64>> {
        (0.0..100.0f64, 0.0..100.0f64, 1.0..60.0f64, 1.0..60.0f64)
            .prop_map(|(x, y, w, h)| BBox::raw(x, y, w, h))
    }

    proptest! {
        #[test]
        fn intersect_commutative_idempotent(a in arb_box(), c in arb_box()) {
            prop_assert_eq!(intersect(&a, &c), intersect(&c, &a));
            let s = intersect(&a, &a);
            prop_assert!((s.x - a.x).abs() < 1e-12 && (s.y - a.y).abs() < 1e-12);
            prop_assert!((s.w - a.w).abs() < 1e-12 && (s.h - a.h).abs() < 1e-12);
        }

        #[test]
        fn iou_bounded_and_symmetric(a in arb_box(), c in arb_box()) {
            let v = iou(&a, &c).unwrap();
            prop_assert!((0.0..=1.0).contains(&v));
            prop_assert_eq!(v, iou(&c, &a).unwrap());
            if a != c {
                prop_assert!(v < 1.0);
            }
        }

        #[test]
        fn full_containment_iff_corners_inside(a in arb_box(), c in arb_box()) {
            let r = containment_ratio(&a, &c).unwrap();
            prop_assert_eq!(r == 1.0, a.is_within(&c));
        }
    }
}
