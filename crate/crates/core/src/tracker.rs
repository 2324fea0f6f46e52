//! Tracking by detection: Kalman prediction, optimal IoU assignment and the
//! tentative → confirmed ⇄ missing → terminated lifecycle.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assignment;
use crate::geometry::iou;
use crate::kalman::{KalmanError, KalmanFilter, KalmanState};
use crate::model::{Detection, FrameIndex, Track, TrackId, TrackState};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrackerError {
    #[error("frame {frame} does not advance past frame {last}")]
    NonMonotonicFrame { frame: FrameIndex, last: FrameIndex },
    #[error("detections for frame {expected} include one from frame {found}")]
    MixedFrames { expected: FrameIndex, found: FrameIndex },
    #[error("invalid tracker configuration: {0}")]
    InvalidConfig(&'static str),
    #[error(transparent)]
    Kalman(#[from] KalmanError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrackerConfig {
    /// Frames a confirmed track may go unassigned before it terminates.
    pub max_missing_frames: u32,
    /// Consecutive hits needed to confirm a new track. `1` confirms at once.
    pub min_hits_to_confirm: u32,
    /// Minimum IoU between prediction and detection for an assignment to stand.
    pub gating_iou: f64,
    pub process_noise_scale: f64,
    pub measurement_noise_scale: f64,
    pub fps: f64,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            max_missing_frames: 20,
            min_hits_to_confirm: 3,
            gating_iou: 0.3,
            process_noise_scale: 1.0,
            measurement_noise_scale: 1.0,
            fps: 20.0,
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<(), TrackerError> {
        if self.max_missing_frames == 0 {
            return Err(TrackerError::InvalidConfig("max_missing_frames must be > 0"));
        }
        if self.min_hits_to_confirm == 0 {
            return Err(TrackerError::InvalidConfig("min_hits_to_confirm must be > 0"));
        }
        if !(self.gating_iou > 0.0 && self.gating_iou <= 1.0) {
            return Err(TrackerError::InvalidConfig("gating_iou must lie in (0, 1]"));
        }
        if !(self.fps > 0.0 && self.fps.is_finite()) {
            return Err(TrackerError::InvalidConfig("fps must be positive"));
        }
        if !(self.process_noise_scale >= 0.0 && self.measurement_noise_scale >= 0.0) {
            return Err(TrackerError::InvalidConfig("noise scales must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct LiveTrack<T> {
    track: Track<T>,
    filter_state: KalmanState<T>,
    consecutive_hits: u32,
    missed: u32,
}

/// What one call to [`Tracker::step`] changed.
#[derive(Debug, Clone, Default)]
pub struct StepOutcome<T> {
    /// Tracks promoted from tentative in this frame.
    pub confirmed: Vec<TrackId>,
    /// Tracks that ran out of missing frames in this frame.
    pub terminated: Vec<Track<T>>,
    /// `(track id, detection index)` for every accepted assignment.
    pub assignments: Vec<(TrackId, usize)>,
}

/// One tracker per video sequence.
#[derive(Debug, Clone)]
pub struct Tracker<T> {
    config: TrackerConfig,
    filter: KalmanFilter<T>,
    live: Vec<LiveTrack<T>>,
    next_id: TrackId,
    last_frame: Option<FrameIndex>,
}

impl<T: Scalar> Tracker<T> {
    pub fn new(config: TrackerConfig) -> Result<Self, TrackerError> {
        config.validate()?;
        Ok(Self {
            filter: KalmanFilter::new(
                T::lit(config.process_noise_scale),
                T::lit(config.measurement_noise_scale),
            ),
            config,
            live: Vec::new(),
            next_id: 1,
            last_frame: None,
        })
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.config
    }

    pub fn last_frame(&self) -> Option<FrameIndex> {
        self.last_frame
    }

    /// Live tracks in ascending id order.
    pub fn tracks(&self) -> impl Iterator<Item = &Track<T>> {
        self.live.iter().map(|l| &l.track)
    }

    pub fn track_mut(&mut self, id: TrackId) -> Option<&mut Track<T>> {
        self.live.iter_mut().find(|l| l.track.id == id).map(|l| &mut l.track)
    }

    /// Advances the tracker to `frame` with that frame's detections.
    pub fn step(
        &mut self,
        frame: FrameIndex,
        detections: &[Detection<T>],
    ) -> Result<StepOutcome<T>, TrackerError> {
        if let Some(last) = self.last_frame {
            if frame <= last {
                return Err(TrackerError::NonMonotonicFrame { frame, last });
            }
        }
        if let Some(d) = detections.iter().find(|d| d.frame != frame) {
            return Err(TrackerError::MixedFrames { expected: frame, found: d.frame });
        }
        self.last_frame = Some(frame);

        for l in &mut self.live {
            l.filter_state = self.filter.predict(&l.filter_state);
        }

        let cost: Vec<Vec<T>> = self
            .live
            .iter()
            .map(|l| {
                let predicted = l.filter_state.bbox();
                detections
                    .iter()
                    .map(|d| T::one() - iou(&predicted, &d.bbox).unwrap_or(T::zero()))
                    .collect()
            })
            .collect();
        let gate = T::one() - T::lit(self.config.gating_iou);
        let pairs = assignment::assign(&cost, gate);

        let mut outcome = StepOutcome::default();
        let mut track_hit = vec![false; self.live.len()];
        let mut det_used = vec![false; detections.len()];
        for &(ti, di) in &pairs {
            track_hit[ti] = true;
            det_used[di] = true;
            let det = &detections[di];
            let l = &mut self.live[ti];
            l.filter_state = self.filter.update(&l.filter_state, &det.bbox)?;
            l.track.boxes.insert(frame, det.bbox);
            if det.synthesized {
                l.track.synthesized_frames.insert(frame);
            }
            l.consecutive_hits += 1;
            l.missed = 0;
            match l.track.state {
                TrackState::Missing => l.track.state = TrackState::Confirmed,
                TrackState::Tentative if l.consecutive_hits >= self.config.min_hits_to_confirm => {
                    l.track.state = TrackState::Confirmed;
                    outcome.confirmed.push(l.track.id);
                }
                _ => {}
            }
            outcome.assignments.push((l.track.id, di));
        }

        let max_missing = self.config.max_missing_frames;
        let mut kept = Vec::with_capacity(self.live.len());
        for (l, hit) in std::mem::take(&mut self.live).into_iter().zip(track_hit) {
            let mut l = l;
            if hit {
                kept.push(l);
                continue;
            }
            match l.track.state {
                // A tentative track that misses once is a false start.
                TrackState::Tentative => {}
                TrackState::Confirmed | TrackState::Missing => {
                    l.track.state = TrackState::Missing;
                    l.consecutive_hits = 0;
                    l.missed += 1;
                    if l.missed > max_missing {
                        l.track.terminate();
                        outcome.terminated.push(l.track);
                    } else {
                        kept.push(l);
                    }
                }
                TrackState::Terminated => unreachable!("terminated tracks are not kept live"),
            }
        }
        self.live = kept;

        for (di, det) in detections.iter().enumerate() {
            if det_used[di] {
                continue;
            }
            let id = self.next_id;
            self.next_id += 1;
            let mut track = Track::new(id, frame, det.bbox);
            if det.synthesized {
                track.synthesized_frames.insert(frame);
            }
            if self.config.min_hits_to_confirm <= 1 {
                track.state = TrackState::Confirmed;
                outcome.confirmed.push(id);
            }
            self.live.push(LiveTrack {
                filter_state: self.filter.initiate(&det.bbox),
                track,
                consecutive_hits: 1,
                missed: 0,
            });
        }
        outcome.assignments.sort_unstable();
        Ok(outcome)
    }

    /// Ends the stream: every confirmed or missing track terminates at its
    /// last assigned frame; tentative tracks are dropped.
    pub fn flush(&mut self) -> Vec<Track<T>> {
        std::mem::take(&mut self.live)
            .into_iter()
            .filter(|l| matches!(l.track.state, TrackState::Confirmed | TrackState::Missing))
            .map(|l| {
                let mut t = l.track;
                t.terminate();
                t
            })
            .collect()
    }
}
