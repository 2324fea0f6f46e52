//! Origin/sink classification against the private-area entrance and the
//! (origin, sink) → event transition table.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{decompose, intersect, BBox, Entrance, GeometryError};
use crate::model::{EventKind, EventRecord, FrameIndex, Origin, Sink, Track, TrackId, TrackState};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EntranceError {
    #[error("track {0} has no boxes")]
    EmptyTrack(TrackId),
    #[error("track {0} has not terminated")]
    NotTerminated(TrackId),
    #[error("invalid entrance configuration: {0}")]
    InvalidConfig(&'static str),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar + Serialize + serde::de::DeserializeOwned")]
pub struct EntranceConfig<T> {
    pub entrance: Entrance<T>,
    /// Fraction of a box that must fall inside the entrance; `1` is the strict rule.
    pub containment_threshold: T,
    /// Per-side dilation of an occluding box, as a fraction of its width/height.
    pub occluder_margin: T,
}

impl<T: Scalar> EntranceConfig<T> {
    pub fn new(entrance: Entrance<T>) -> Self {
        Self { entrance, containment_threshold: T::lit(0.8), occluder_margin: T::lit(0.1) }
    }

    pub fn strict(mut self) -> Self {
        self.containment_threshold = T::one();
        self
    }

    pub fn validate(&self) -> Result<(), EntranceError> {
        let tau = self.containment_threshold;
        if !(tau > T::zero() && tau <= T::one()) {
            return Err(EntranceError::InvalidConfig("containment threshold must lie in (0, 1]"));
        }
        if !(self.occluder_margin >= T::zero()) {
            return Err(EntranceError::InvalidConfig("occluder margin must be >= 0"));
        }
        Ok(())
    }
}

/// The part of the frame that acts as the entrance at one instant, as
/// disjoint rectangles.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveEntrance<T> {
    pub regions: Vec<BBox<T>>,
}

impl<T: Scalar> EffectiveEntrance<T> {
    pub fn unoccluded(entrance: &Entrance<T>) -> Self {
        Self { regions: vec![entrance.rect] }
    }

    pub fn area(&self) -> T {
        self.regions.iter().fold(T::zero(), |acc, r| acc + r.area())
    }

    pub fn contains_point(&self, x: T, y: T) -> bool {
        self.regions.iter().any(|r| r.contains_point(x, y))
    }

    /// Fraction of `b` inside the union of the regions.
    pub fn containment(&self, b: &BBox<T>) -> Result<T, GeometryError> {
        let area = b.area();
        if !(area > T::zero()) {
            return Err(GeometryError::ZeroAreaBox);
        }
        if self.regions.iter().any(|r| b.is_within(r)) {
            return Ok(T::one());
        }
        let covered = self.regions.iter().fold(T::zero(), |acc, r| acc + intersect(b, r).area());
        let ratio = covered / area;
        // Fragments can sum to a hair under one.
        if ratio >= T::one() - T::epsilon() * T::lit(16.0) {
            Ok(T::one())
        } else {
            Ok(ratio)
        }
    }
}

/// `(E \ ∪Bᵢ) ∪ ∪(Bᵢ′ \ Bᵢ)` where `Bᵢ′` is `Bᵢ` grown by `margin` of its size
/// on every side. With no occluders this is just `{E}`.
pub fn effective_entrance<T: Scalar>(
    entrance: &Entrance<T>,
    occluders: &[BBox<T>],
    margin: T,
) -> EffectiveEntrance<T> {
    let occluders: Vec<BBox<T>> = occluders.iter().copied().filter(|b| !b.is_degenerate()).collect();
    if occluders.is_empty() {
        return EffectiveEntrance::unoccluded(entrance);
    }
    let e = entrance.rect;
    let dilated: Vec<BBox<T>> = occluders.iter().map(|b| b.dilate(margin, margin)).collect();
    let strictly_inside = |r: &BBox<T>, x: T, y: T| x > r.x && x < r.right() && y > r.y && y < r.bottom();
    let mut grid = Vec::with_capacity(1 + 2 * occluders.len());
    grid.push(e);
    grid.extend(occluders.iter().copied());
    grid.extend(dilated.iter().copied());
    let regions = decompose(&grid, |x, y| {
        let in_e = strictly_inside(&e, x, y) && !occluders.iter().any(|b| strictly_inside(b, x, y));
        in_e || occluders
            .iter()
            .zip(&dilated)
            .any(|(b, d)| strictly_inside(d, x, y) && !strictly_inside(b, x, y))
    });
    EffectiveEntrance { regions }
}

pub fn classify_origin<T: Scalar>(
    first_box: &BBox<T>,
    eff: &EffectiveEntrance<T>,
    threshold: T,
) -> Result<Origin, GeometryError> {
    Ok(if eff.containment(first_box)? >= threshold { Origin::PrivateArea } else { Origin::Scene })
}

pub fn classify_sink<T: Scalar>(
    last_box: &BBox<T>,
    eff: &EffectiveEntrance<T>,
    threshold: T,
) -> Result<Sink, GeometryError> {
    Ok(if eff.containment(last_box)? >= threshold { Sink::PrivateArea } else { Sink::Scene })
}

pub fn classify_event(origin: Origin, sink: Sink) -> EventKind {
    match (origin, sink) {
        (Origin::Scene, Sink::Scene) => EventKind::JustAppeared,
        (Origin::Scene, Sink::PrivateArea) => EventKind::Entry,
        (Origin::PrivateArea, Sink::Scene) => EventKind::Exit,
        (Origin::PrivateArea, Sink::PrivateArea) => EventKind::ReEntry,
    }
}

/// Per-frame boxes of confirmed tracks that overlap the entrance.
#[derive(Debug, Clone, Default)]
pub struct OccluderHistory<T> {
    frames: BTreeMap<FrameIndex, Vec<(TrackId, BBox<T>)>>,
}

impl<T: Scalar> OccluderHistory<T> {
    pub fn new() -> Self {
        Self { frames: BTreeMap::new() }
    }

    /// Records `b` for `frame` when it overlaps the entrance.
    pub fn observe(&mut self, entrance: &Entrance<T>, frame: FrameIndex, id: TrackId, b: BBox<T>) {
        if b.overlaps(&entrance.rect) {
            self.frames.entry(frame).or_default().push((id, b));
        }
    }

    /// Occluders seen at `frame`, other than track `except`.
    pub fn at(&self, frame: FrameIndex, except: TrackId) -> Vec<BBox<T>> {
        self.frames
            .get(&frame)
            .map(|v| v.iter().filter(|(id, _)| *id != except).map(|(_, b)| *b).collect())
            .unwrap_or_default()
    }

    /// Drops frames before `frame`.
    pub fn prune_before(&mut self, frame: FrameIndex) {
        self.frames = self.frames.split_off(&frame);
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

fn label_box<T: Scalar>(
    track: &Track<T>,
    cfg: &EntranceConfig<T>,
    history: &OccluderHistory<T>,
    frame: FrameIndex,
    b: &BBox<T>,
) -> Result<T, GeometryError> {
    let eff = effective_entrance(&cfg.entrance, &history.at(frame, track.id), cfg.occluder_margin);
    eff.containment(b)
}

/// Origin label of `track` from its first box and that frame's occluders.
pub fn track_origin<T: Scalar>(
    track: &Track<T>,
    cfg: &EntranceConfig<T>,
    history: &OccluderHistory<T>,
) -> Result<Origin, EntranceError> {
    let (frame, b) = track.first().ok_or(EntranceError::EmptyTrack(track.id))?;
    let ratio = label_box(track, cfg, history, frame, &b)?;
    Ok(if ratio >= cfg.containment_threshold { Origin::PrivateArea } else { Origin::Scene })
}

pub fn track_sink<T: Scalar>(
    track: &Track<T>,
    cfg: &EntranceConfig<T>,
    history: &OccluderHistory<T>,
) -> Result<Sink, EntranceError> {
    let (frame, b) = track.last().ok_or(EntranceError::EmptyTrack(track.id))?;
    let ratio = label_box(track, cfg, history, frame, &b)?;
    Ok(if ratio >= cfg.containment_threshold { Sink::PrivateArea } else { Sink::Scene })
}

/// Classifies a terminated track. An origin already assigned at confirmation
/// is kept; otherwise it is derived here from the first box.
pub fn finalize_track<T: Scalar>(
    track: &Track<T>,
    cfg: &EntranceConfig<T>,
    history: &OccluderHistory<T>,
    fps: f64,
) -> Result<EventRecord, EntranceError> {
    if track.is_empty() {
        return Err(EntranceError::EmptyTrack(track.id));
    }
    if track.state != TrackState::Terminated {
        return Err(EntranceError::NotTerminated(track.id));
    }
    let origin = match track.origin {
        Some(o) => o,
        None => track_origin(track, cfg, history)?,
    };
    let sink = match track.sink {
        Some(s) => s,
        None => track_sink(track, cfg, history)?,
    };
    let t_enter = track.t_enter_scene;
    let t_exit = track.t_exit_scene.or(track.last_frame()).unwrap_or(t_enter);
    Ok(EventRecord {
        track_id: track.id,
        event: classify_event(origin, sink),
        origin,
        sink,
        t_enter,
        t_exit,
        enter_seconds: t_enter as f64 / fps,
        exit_seconds: t_exit as f64 / fps,
    })
}
