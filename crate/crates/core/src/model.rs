//! Domain records shared by tracking, classification and the gallery.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::BBox;
use crate::scalar::Scalar;

pub type FrameIndex = u64;
pub type TrackId = u64;

/// Camera 0 faces the entrance; camera 1 is the opposite view.
pub type CameraId = u8;
pub const ENTRANCE_CAMERA: CameraId = 0;
pub const OPPOSITE_CAMERA: CameraId = 1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection<T> {
    pub frame: FrameIndex,
    pub bbox: BBox<T>,
    pub score: T,
    pub camera: CameraId,
    /// Identity column from the input file; `-1` for raw detections.
    pub id: i64,
    /// Set when the detection was mapped in from the opposite camera.
    pub synthesized: bool,
}

impl<T: Scalar> Detection<T> {
    pub fn new(frame: FrameIndex, bbox: BBox<T>, score: T) -> Self {
        Self { frame, bbox, score, camera: ENTRANCE_CAMERA, id: -1, synthesized: false }
    }

    pub fn on_camera(mut self, camera: CameraId) -> Self {
        self.camera = camera;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TrackState {
    Tentative,
    Confirmed,
    Missing,
    Terminated,
}

/// Where a track first appeared.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Origin {
    /// `E_A`: walked in from the open scene.
    #[serde(rename = "E_A")]
    Scene,
    /// `E_X`: emerged from the private area.
    #[serde(rename = "E_X")]
    PrivateArea,
}

/// Where a track was last seen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Sink {
    /// `E_A`: left through the open scene.
    #[serde(rename = "E_A")]
    Scene,
    /// `E_N`: vanished into the private area.
    #[serde(rename = "E_N")]
    PrivateArea,
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Origin::Scene => "E_A",
            Origin::PrivateArea => "E_X",
        })
    }
}

impl fmt::Display for Sink {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sink::Scene => "E_A",
            Sink::PrivateArea => "E_N",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EventKind {
    Entry,
    Exit,
    JustAppeared,
    ReEntry,
}

impl EventKind {
    pub const ALL: [EventKind; 4] =
        [EventKind::Entry, EventKind::Exit, EventKind::JustAppeared, EventKind::ReEntry];

    pub fn index(self) -> usize {
        match self {
            EventKind::Entry => 0,
            EventKind::Exit => 1,
            EventKind::JustAppeared => 2,
            EventKind::ReEntry => 3,
        }
    }

    /// Reporting class: re-entries are reported together with just-appeared.
    pub fn folded(self) -> EventKind {
        match self {
            EventKind::ReEntry => EventKind::JustAppeared,
            k => k,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Entry => "Entry",
            EventKind::Exit => "Exit",
            EventKind::JustAppeared => "JustAppeared",
            EventKind::ReEntry => "ReEntry",
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for EventKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace(['_', '-', ' '], "").as_str() {
            "entry" => Ok(EventKind::Entry),
            "exit" => Ok(EventKind::Exit),
            "justappeared" => Ok(EventKind::JustAppeared),
            "reentry" => Ok(EventKind::ReEntry),
            other => Err(format!("unknown event label {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TrackError {
    #[error("track {0} already has an origin label")]
    OriginAlreadySet(TrackId),
    #[error("track {0} already has a sink label")]
    SinkAlreadySet(TrackId),
    #[error("frame {frame} is not after the last frame {last} of track {id}")]
    NonIncreasingFrame { id: TrackId, frame: FrameIndex, last: FrameIndex },
}

/// One individual's trajectory through the entrance camera's view.
#[derive(Debug, Clone, PartialEq)]
pub struct Track<T> {
    pub id: TrackId,
    pub boxes: BTreeMap<FrameIndex, BBox<T>>,
    /// Frames whose box came from a fused opposite-camera detection.
    pub synthesized_frames: BTreeSet<FrameIndex>,
    pub state: TrackState,
    pub t_enter_scene: FrameIndex,
    pub t_exit_scene: Option<FrameIndex>,
    pub origin: Option<Origin>,
    pub sink: Option<Sink>,
}

impl<T: Scalar> Track<T> {
    pub fn new(id: TrackId, frame: FrameIndex, bbox: BBox<T>) -> Self {
        Self {
            id,
            boxes: BTreeMap::from([(frame, bbox)]),
            synthesized_frames: BTreeSet::new(),
            state: TrackState::Tentative,
            t_enter_scene: frame,
            t_exit_scene: None,
            origin: None,
            sink: None,
        }
    }

    /// A finished track built from recorded boxes, e.g. a ground-truth file.
    /// Returns `None` when `boxes` is empty.
    pub fn terminated(id: TrackId, boxes: BTreeMap<FrameIndex, BBox<T>>) -> Option<Self> {
        let first = *boxes.keys().next()?;
        let last = *boxes.keys().next_back()?;
        Some(Self {
            id,
            boxes,
            synthesized_frames: BTreeSet::new(),
            state: TrackState::Terminated,
            t_enter_scene: first,
            t_exit_scene: Some(last),
            origin: None,
            sink: None,
        })
    }

    pub fn push(&mut self, frame: FrameIndex, bbox: BBox<T>) -> Result<(), TrackError> {
        if let Some(last) = self.last_frame() {
            if frame <= last {
                return Err(TrackError::NonIncreasingFrame { id: self.id, frame, last });
            }
        }
        self.boxes.insert(frame, bbox);
        Ok(())
    }

    pub fn first(&self) -> Option<(FrameIndex, BBox<T>)> {
        self.boxes.iter().next().map(|(f, b)| (*f, *b))
    }

    pub fn last(&self) -> Option<(FrameIndex, BBox<T>)> {
        self.boxes.iter().next_back().map(|(f, b)| (*f, *b))
    }

    pub fn last_frame(&self) -> Option<FrameIndex> {
        self.boxes.keys().next_back().copied()
    }

    pub fn len(&self) -> usize {
        self.boxes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.boxes.is_empty()
    }

    pub fn set_origin(&mut self, origin: Origin) -> Result<(), TrackError> {
        if self.origin.is_some() {
            return Err(TrackError::OriginAlreadySet(self.id));
        }
        self.origin = Some(origin);
        Ok(())
    }

    pub fn set_sink(&mut self, sink: Sink) -> Result<(), TrackError> {
        if self.sink.is_some() {
            return Err(TrackError::SinkAlreadySet(self.id));
        }
        self.sink = Some(sink);
        Ok(())
    }

    /// Marks the track finished at its last assigned frame.
    pub fn terminate(&mut self) {
        self.state = TrackState::Terminated;
        self.t_exit_scene = self.last_frame();
    }
}

/// The classified outcome of one finished track.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub track_id: TrackId,
    pub event: EventKind,
    pub origin: Origin,
    pub sink: Sink,
    pub t_enter: FrameIndex,
    pub t_exit: FrameIndex,
    /// Seconds from stream start: `t_enter / fps`.
    pub enter_seconds: f64,
    pub exit_seconds: f64,
}
