//! Ledger of the people currently inside the private area.
//!
//! An entering track is enrolled; an exiting track is a probe that removes one
//! enrolled person. Without appearance matching the probe is resolved by a
//! [`MatchPolicy`]; the default is first-in first-out, and every resolved
//! identity is recorded as provisional.

use std::collections::VecDeque;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{EventKind, EventRecord, FrameIndex, TrackId};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GalleryError {
    #[error("exit by track {track_id} at frame {frame} with nobody recorded inside")]
    ExitFromEmptyGallery { track_id: TrackId, frame: FrameIndex },
    #[error("person {0} is already inside")]
    DuplicatePerson(TrackId),
    #[error("fps must be positive")]
    InvalidFps,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GalleryEntry {
    pub person_id: TrackId,
    pub t_entry: FrameIndex,
    /// Opaque descriptor payload carried for a future re-identification step.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature_slot: Option<Vec<u8>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DwellRecord {
    pub person_id: TrackId,
    pub t_entry: FrameIndex,
    pub t_exit: FrameIndex,
    pub dwell_seconds: f64,
    /// Track that was resolved as this person's exit.
    pub exit_track_id: TrackId,
}

/// A re-entry: someone stepped out of the entrance and went back in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReEntrySegment {
    pub track_id: TrackId,
    pub t_out: FrameIndex,
    pub t_back: FrameIndex,
    pub outside_seconds: f64,
}

/// Chooses which enrolled person an exiting probe corresponds to.
pub trait MatchPolicy {
    /// Index into `entries` (oldest first). `entries` is never empty.
    fn select(&self, entries: &VecDeque<GalleryEntry>, probe: &EventRecord) -> usize;
}

/// Longest-inside person leaves first.
#[derive(Debug, Clone, Copy, Default)]
pub struct Fifo;

impl MatchPolicy for Fifo {
    fn select(&self, _entries: &VecDeque<GalleryEntry>, _probe: &EventRecord) -> usize {
        0
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct OccupancyLedger {
    entries: VecDeque<GalleryEntry>,
    history: Vec<DwellRecord>,
    reentries: Vec<ReEntrySegment>,
    entries_applied: u64,
    exits_applied: u64,
}

impl OccupancyLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn occupancy(&self) -> usize {
        self.entries.len()
    }

    pub fn inside(&self) -> impl Iterator<Item = &GalleryEntry> {
        self.entries.iter()
    }

    pub fn dwell_report(&self) -> &[DwellRecord] {
        &self.history
    }

    pub fn reentries(&self) -> &[ReEntrySegment] {
        &self.reentries
    }

    /// `(entries, exits)` successfully applied so far.
    pub fn counts(&self) -> (u64, u64) {
        (self.entries_applied, self.exits_applied)
    }

    pub fn apply_event(&mut self, ev: &EventRecord, fps: f64) -> Result<(), GalleryError> {
        self.apply_event_with(ev, fps, &Fifo, None)
    }

    /// Applies one classified event. A failed exit leaves the ledger untouched.
    pub fn apply_event_with(
        &mut self,
        ev: &EventRecord,
        fps: f64,
        policy: &dyn MatchPolicy,
        features: Option<Vec<u8>>,
    ) -> Result<(), GalleryError> {
        if !(fps > 0.0) {
            return Err(GalleryError::InvalidFps);
        }
        match ev.event {
            EventKind::JustAppeared => {}
            EventKind::Entry => {
                if self.entries.iter().any(|e| e.person_id == ev.track_id) {
                    return Err(GalleryError::DuplicatePerson(ev.track_id));
                }
                self.entries.push_back(GalleryEntry {
                    person_id: ev.track_id,
                    t_entry: ev.t_exit,
                    feature_slot: features,
                });
                self.entries_applied += 1;
            }
            EventKind::Exit => {
                if self.entries.is_empty() {
                    return Err(GalleryError::ExitFromEmptyGallery {
                        track_id: ev.track_id,
                        frame: ev.t_enter,
                    });
                }
                let idx = policy.select(&self.entries, ev).min(self.entries.len() - 1);
                let matched = self.entries.remove(idx).expect("index in range");
                let t_exit = ev.t_enter.max(matched.t_entry);
                self.history.push(DwellRecord {
                    person_id: matched.person_id,
                    t_entry: matched.t_entry,
                    t_exit,
                    dwell_seconds: (t_exit - matched.t_entry) as f64 / fps,
                    exit_track_id: ev.track_id,
                });
                self.exits_applied += 1;
            }
            EventKind::ReEntry => {
                let t_back = ev.t_exit.max(ev.t_enter);
                self.reentries.push(ReEntrySegment {
                    track_id: ev.track_id,
                    t_out: ev.t_enter,
                    t_back,
                    outside_seconds: (t_back - ev.t_enter) as f64 / fps,
                });
            }
        }
        Ok(())
    }

    /// Writes `person_id,t_entry,t_exit,dwell_seconds` rows with a header.
    pub fn write_dwell_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["person_id", "t_entry", "t_exit", "dwell_seconds"])?;
        for row in &self.history {
            w.write_record([
                row.person_id.to_string(),
                row.t_entry.to_string(),
                row.t_exit.to_string(),
                row.dwell_seconds.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}
