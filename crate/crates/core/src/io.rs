//! File formats: detection and ground-truth CSV, homography text, event lines.
//!
//! Detection rows are `frame,id,x,y,w,h,score,camera` with no header (a leading
//! `frame,...` header line is tolerated, `#` starts a comment). `id` is `-1`
//! for raw detections and `camera` defaults to `0`. Ground-truth rows use the
//! same columns with a required non-negative `id` and an optional ninth
//! `event` column.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::fusion::Homography;
use crate::geometry::BBox;
use crate::model::{CameraId, Detection, EventKind, EventRecord, FrameIndex, Track, TrackId};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("line {line}: {reason}")]
    Parse { line: u64, reason: String },
    #[error("{0}: file contains no records")]
    EmptyFile(String),
    #[error("{path}: {source}")]
    Open { path: String, source: std::io::Error },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("homography: {0}")]
    Homography(String),
}

fn parse_err(line: u64, reason: impl Into<String>) -> IoError {
    IoError::Parse { line, reason: reason.into() }
}

fn open(path: &Path) -> Result<File, IoError> {
    File::open(path).map_err(|source| IoError::Open { path: path.display().to_string(), source })
}

/// One parsed detection-format row.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Row {
    line: u64,
    frame: FrameIndex,
    id: i64,
    bbox: BBox<f64>,
    score: f64,
    camera: CameraId,
    event: Option<EventKind>,
}

fn parse_rows<R: Read>(r: R, allow_event: bool) -> Result<Vec<Row>, IoError> {
    let mut rows = Vec::new();
    for (idx, text) in BufReader::new(r).lines().enumerate() {
        let text = text?;
        let line = idx as u64 + 1;
        let text = text.trim();
        if text.is_empty() || text.starts_with('#') {
            continue;
        }
        let rec: Vec<&str> = text.split(',').map(str::trim).collect();
        if rows.is_empty() && rec[0].eq_ignore_ascii_case("frame") {
            continue;
        }
        let max_cols = if allow_event { 9 } else { 8 };
        if rec.len() < 7 || rec.len() > max_cols {
            return Err(parse_err(line, format!("expected 7 to {max_cols} columns, found {}", rec.len())));
        }
        let num = |i: usize, name: &str| -> Result<f64, IoError> {
            let v: f64 = rec[i]
                .parse()
                .map_err(|_| parse_err(line, format!("{name}: not a number: {:?}", rec[i])))?;
            if !v.is_finite() {
                return Err(parse_err(line, format!("{name}: not finite")));
            }
            Ok(v)
        };
        let frame: FrameIndex = rec[0]
            .parse()
            .map_err(|_| parse_err(line, format!("frame: not a non-negative integer: {:?}", rec[0])))?;
        let id: i64 = rec[1].parse().map_err(|_| parse_err(line, format!("id: not an integer: {:?}", rec[1])))?;
        let (x, y, w, h) = (num(2, "x")?, num(3, "y")?, num(4, "w")?, num(5, "h")?);
        if w < 0.0 || h < 0.0 {
            return Err(parse_err(line, "negative width or height"));
        }
        let score = num(6, "score")?;
        if !(0.0..=1.0).contains(&score) {
            return Err(parse_err(line, "score outside [0, 1]"));
        }
        let camera = match rec.get(7).copied() {
            None | Some("") => 0,
            Some(c) => c.parse().map_err(|_| parse_err(line, format!("camera: invalid id {c:?}")))?,
        };
        let event = match rec.get(8).copied() {
            None | Some("") => None,
            Some(e) => Some(e.parse::<EventKind>().map_err(|m| parse_err(line, m))?),
        };
        rows.push(Row { line, frame, id, bbox: BBox::raw(x, y, w, h), score, camera, event });
    }
    rows.sort_by_key(|r| r.frame);
    Ok(rows)
}

/// Parses detection rows, stably sorted by frame.
pub fn parse_detections<R: Read>(r: R) -> Result<Vec<Detection<f64>>, IoError> {
    Ok(parse_rows(r, false)?
        .into_iter()
        .map(|row| Detection {
            frame: row.frame,
            bbox: row.bbox,
            score: row.score,
            camera: row.camera,
            id: row.id,
            synthesized: false,
        })
        .collect())
}

/// Detections keyed by frame, then camera.
pub type DetectionsByFrame = BTreeMap<FrameIndex, BTreeMap<CameraId, Vec<Detection<f64>>>>;

pub fn group_by_frame(dets: &[Detection<f64>]) -> DetectionsByFrame {
    let mut out = DetectionsByFrame::new();
    for d in dets {
        out.entry(d.frame).or_default().entry(d.camera).or_default().push(*d);
    }
    out
}

pub fn load_detections(path: &Path) -> Result<Vec<Detection<f64>>, IoError> {
    let dets = parse_detections(open(path)?)?;
    if dets.is_empty() {
        return Err(IoError::EmptyFile(path.display().to_string()));
    }
    Ok(dets)
}

fn write_row<W: Write>(
    w: &mut csv::Writer<W>,
    frame: FrameIndex,
    id: i64,
    b: &BBox<f64>,
    score: f64,
    camera: CameraId,
    event: Option<EventKind>,
) -> Result<(), csv::Error> {
    let mut rec = vec![
        frame.to_string(),
        id.to_string(),
        b.x.to_string(),
        b.y.to_string(),
        b.w.to_string(),
        b.h.to_string(),
        score.to_string(),
        camera.to_string(),
    ];
    if let Some(e) = event {
        rec.push(e.to_string());
    }
    w.write_record(rec)
}

fn writer<W: Write>(out: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().flexible(true).from_writer(out)
}

pub fn write_detections<W: Write>(out: W, dets: &[Detection<f64>]) -> Result<(), IoError> {
    let mut w = writer(out);
    for d in dets {
        write_row(&mut w, d.frame, d.id, &d.bbox, d.score, d.camera, None)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_detections(path: &Path, dets: &[Detection<f64>]) -> Result<(), IoError> {
    write_detections(File::create(path)?, dets)
}

/// A labelled box of one person in one frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroundTruthRow {
    pub frame: FrameIndex,
    pub id: TrackId,
    pub bbox: BBox<f64>,
    pub camera: CameraId,
    pub event: Option<EventKind>,
}

pub fn parse_ground_truth<R: Read>(r: R) -> Result<Vec<GroundTruthRow>, IoError> {
    let rows = parse_rows(r, true)?;
    rows.into_iter()
        .map(|row| {
            if row.id < 0 {
                return Err(parse_err(row.line, "ground truth requires a non-negative id"));
            }
            Ok(GroundTruthRow {
                frame: row.frame,
                id: row.id as TrackId,
                bbox: row.bbox,
                camera: row.camera,
                event: row.event,
            })
        })
        .collect()
}

pub fn load_ground_truth(path: &Path) -> Result<Vec<GroundTruthRow>, IoError> {
    let rows = parse_ground_truth(open(path)?)?;
    if rows.is_empty() {
        return Err(IoError::EmptyFile(path.display().to_string()));
    }
    Ok(rows)
}

pub fn write_ground_truth<W: Write>(out: W, rows: &[GroundTruthRow]) -> Result<(), IoError> {
    let mut w = writer(out);
    for r in rows {
        write_row(&mut w, r.frame, r.id as i64, &r.bbox, 1.0, r.camera, r.event)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes tracks in ground-truth layout, labelling rows with the track's event.
pub fn write_tracks<W: Write>(
    out: W,
    tracks: &[Track<f64>],
    events: &BTreeMap<TrackId, EventKind>,
) -> Result<(), IoError> {
    let mut rows: Vec<GroundTruthRow> = tracks
        .iter()
        .flat_map(|t| {
            let ev = events.get(&t.id).copied();
            t.boxes
                .iter()
                .map(move |(&frame, &bbox)| GroundTruthRow { frame, id: t.id, bbox, camera: 0, event: ev })
        })
        .collect();
    rows.sort_by_key(|r| (r.frame, r.id));
    write_ground_truth(out, &rows)
}

/// Groups rows of one camera into finished tracks, one per id.
pub fn tracks_from_rows(rows: &[GroundTruthRow], camera: CameraId) -> Vec<Track<f64>> {
    let mut by_id: BTreeMap<TrackId, BTreeMap<FrameIndex, BBox<f64>>> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.camera == camera) {
        by_id.entry(r.id).or_default().insert(r.frame, r.bbox);
    }
    by_id.into_iter().filter_map(|(id, boxes)| Track::terminated(id, boxes)).collect()
}

/// First label found per id, for ids that carry one.
pub fn labels_from_rows(rows: &[GroundTruthRow]) -> BTreeMap<TrackId, EventKind> {
    let mut out = BTreeMap::new();
    for r in rows {
        if let Some(e) = r.event {
            out.entry(r.id).or_insert(e);
        }
    }
    out
}

/// Nine whitespace-separated reals, row-major.
pub fn parse_homography(text: &str) -> Result<Homography<f64>, IoError> {
    let vals: Vec<f64> = text
        .split_whitespace()
        .map(|t| t.parse::<f64>().map_err(|_| IoError::Homography(format!("not a number: {t:?}"))))
        .collect::<Result<_, _>>()?;
    homography_from_slice(&vals)
}

pub fn homography_from_slice(vals: &[f64]) -> Result<Homography<f64>, IoError> {
    if vals.len() != 9 {
        return Err(IoError::Homography(format!("expected 9 values, found {}", vals.len())));
    }
    let m = [[vals[0], vals[1], vals[2]], [vals[3], vals[4], vals[5]], [vals[6], vals[7], vals[8]]];
    Homography::new(m).map_err(|e| IoError::Homography(e.to_string()))
}

pub fn load_homography(path: &Path) -> Result<Homography<f64>, IoError> {
    let mut s = String::new();
    open(path)?.read_to_string(&mut s)?;
    parse_homography(&s)
}

pub fn format_homography(h: &Homography<f64>) -> String {
    h.matrix().iter().map(|r| r.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" ")).collect::<Vec<_>>().join("\n")
        + "\n"
}

/// One JSON object per line.
pub fn write_events<W: Write>(mut out: W, events: &[EventRecord]) -> Result<(), IoError> {
    for e in events {
        serde_json::to_writer(&mut out, e)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_events<R: Read>(r: R) -> Result<Vec<EventRecord>, IoError> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(r).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| parse_err(i as u64 + 1, e.to_string()))?);
    }
    Ok(out)
}

pub fn load_events(path: &Path) -> Result<Vec<EventRecord>, IoError> {
    read_events(open(path)?)
}
