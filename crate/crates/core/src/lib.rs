//! Entry/exit surveillance for a camera-forbidden private area.
//!
//! People are tracked in the entrance-facing camera, each finished track is
//! labelled by where it appeared and disappeared relative to the entrance,
//! and the resulting Entry/Exit events maintain a ledger of who is inside.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`). File
//! formats, the simulator and the pipeline work in `f64`; the aliases below
//! name the common concrete types.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod assignment;
pub mod entrance;
pub mod evaluation;
pub mod fusion;
pub mod gallery;
pub mod geometry;
pub mod io;
pub mod kalman;
pub mod linalg;
pub mod model;
pub mod pipeline;
pub mod scalar;
pub mod synth;
pub mod tracker;

pub use scalar::Scalar;

pub use entrance::{classify_event, effective_entrance, finalize_track};
pub use evaluation::{event_accuracy, f1, match_detections};
pub use gallery::OccupancyLedger;
pub use geometry::{containment_ratio, iou};
pub use model::{EventKind, EventRecord, Origin, Sink, TrackState};
pub use pipeline::{run_from_files, run_pipeline, PipelineConfig, PipelineError as Error, PipelineOutput};

pub type BoundingBox = geometry::BBox<f64>;
pub type SceneRegion = geometry::Scene<f64>;
pub type EntranceRegion = geometry::Entrance<f64>;
pub type Detection = model::Detection<f64>;
pub type Track = model::Track<f64>;
pub type Tracker = tracker::Tracker<f64>;
pub type KalmanFilter = kalman::KalmanFilter<f64>;
pub type Homography = fusion::Homography<f64>;
pub type EffectiveEntrance = entrance::EffectiveEntrance<f64>;
pub type EntranceConfig = entrance::EntranceConfig<f64>;

pub type BoundingBox32 = geometry::BBox<f32>;
pub type Tracker32 = tracker::Tracker<f32>;
pub type KalmanFilter32 = kalman::KalmanFilter<f32>;
