//! Detection recall/precision/F1 and per-class event accuracy.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;
use std::ops::AddAssign;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{iou, BBox};
use crate::model::{EventKind, EventRecord, FrameIndex};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum EvaluationError {
    #[error("recall and precision are both zero")]
    BothZero,
    #[error("percentage outside [0, 100]")]
    OutOfRange,
}

/// Harmonic mean of two percentages.
pub fn f1<T: Scalar>(recall: T, precision: T) -> Result<T, EvaluationError> {
    let hundred = T::lit(100.0);
    let in_range = |v: T| v >= T::zero() && v <= hundred;
    if !in_range(recall) || !in_range(precision) {
        return Err(EvaluationError::OutOfRange);
    }
    if recall == T::zero() && precision == T::zero() {
        return Err(EvaluationError::BothZero);
    }
    Ok(T::lit(2.0) * precision * recall / (precision + recall))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DetectionCounts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl AddAssign for DetectionCounts {
    fn add_assign(&mut self, o: Self) {
        self.tp += o.tp;
        self.fp += o.fp;
        self.fn_ += o.fn_;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionMatchResult {
    pub counts: DetectionCounts,
    pub recall: f64,
    pub precision: f64,
    pub f1: f64,
}

impl DetectionCounts {
    /// Percentages. With nothing to find recall is 100; with nothing
    /// predicted precision is 100; F1 is 0 when both rates are 0.
    pub fn result(&self) -> DetectionMatchResult {
        let pct = |num: u64, den: u64| if den == 0 { 100.0 } else { 100.0 * num as f64 / den as f64 };
        let recall = pct(self.tp, self.tp + self.fn_);
        let precision = pct(self.tp, self.tp + self.fp);
        DetectionMatchResult { counts: *self, recall, precision, f1: f1(recall, precision).unwrap_or(0.0) }
    }
}

/// One-to-one matching of `pred` to `gt` boxes with IoU at least `threshold`.
///
/// Pairs are taken greedily by descending IoU, then augmenting paths raise the
/// matching to maximum cardinality. Returns `(pred, gt)` index pairs.
pub fn match_frame<T: Scalar>(pred: &[BBox<T>], gt: &[BBox<T>], threshold: T) -> Vec<(usize, usize)> {
    let mut edges: Vec<(T, usize, usize)> = Vec::new();
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); pred.len()];
    for (i, p) in pred.iter().enumerate() {
        for (j, g) in gt.iter().enumerate() {
            let v = iou(p, g).unwrap_or(T::zero());
            if v >= threshold && v > T::zero() {
                edges.push((v, i, j));
                adj[i].push(j);
            }
        }
    }
    edges.sort_by(|a, b| {
        b.0.partial_cmp(&a.0)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.1.cmp(&b.1))
            .then(a.2.cmp(&b.2))
    });
    let mut pred_to: Vec<Option<usize>> = vec![None; pred.len()];
    let mut gt_to: Vec<Option<usize>> = vec![None; gt.len()];
    for &(_, i, j) in &edges {
        if pred_to[i].is_none() && gt_to[j].is_none() {
            pred_to[i] = Some(j);
            gt_to[j] = Some(i);
        }
    }

    fn augment(
        i: usize,
        adj: &[Vec<usize>],
        seen: &mut [bool],
        pred_to: &mut [Option<usize>],
        gt_to: &mut [Option<usize>],
    ) -> bool {
        for &j in &adj[i] {
            if seen[j] {
                continue;
            }
            seen[j] = true;
            let free = match gt_to[j] {
                None => true,
                Some(k) => augment(k, adj, seen, pred_to, gt_to),
            };
            if free {
                pred_to[i] = Some(j);
                gt_to[j] = Some(i);
                return true;
            }
        }
        false
    }
    for i in 0..pred.len() {
        if pred_to[i].is_none() {
            let mut seen = vec![false; gt.len()];
            augment(i, &adj, &mut seen, &mut pred_to, &mut gt_to);
        }
    }
    pred_to.iter().enumerate().filter_map(|(i, j)| j.map(|j| (i, j))).collect()
}

pub fn match_detections<T: Scalar>(
    pred: &BTreeMap<FrameIndex, Vec<BBox<T>>>,
    gt: &BTreeMap<FrameIndex, Vec<BBox<T>>>,
    threshold: T,
) -> DetectionMatchResult {
    let mut counts = DetectionCounts::default();
    let empty = Vec::new();
    let frames: std::collections::BTreeSet<_> = pred.keys().chain(gt.keys()).copied().collect();
    for f in frames {
        let p = pred.get(&f).unwrap_or(&empty);
        let g = gt.get(&f).unwrap_or(&empty);
        let tp = match_frame(p, g, threshold).len() as u64;
        counts += DetectionCounts { tp, fp: p.len() as u64 - tp, fn_: g.len() as u64 - tp };
    }
    counts.result()
}

/// Overlap of two inclusive frame spans as intersection over union.
pub fn temporal_iou(a: (FrameIndex, FrameIndex), b: (FrameIndex, FrameIndex)) -> f64 {
    let lo = a.0.max(b.0);
    let hi = a.1.min(b.1);
    if hi < lo {
        return 0.0;
    }
    let inter = (hi - lo + 1) as f64;
    let len = |s: (FrameIndex, FrameIndex)| (s.1.saturating_sub(s.0) + 1) as f64;
    inter / (len(a) + len(b) - inter)
}

pub const TEMPORAL_IOU_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct EventAccuracyResult {
    /// `confusion[truth][predicted]` over associated pairs, indexed by [`EventKind::index`].
    pub confusion: [[u64; 4]; 4],
    /// Ground-truth events with no associated prediction.
    pub missed: [u64; 4],
    /// Predictions with no associated ground truth.
    pub spurious: u64,
}

impl AddAssign for EventAccuracyResult {
    fn add_assign(&mut self, o: Self) {
        for r in 0..4 {
            self.missed[r] += o.missed[r];
            for c in 0..4 {
                self.confusion[r][c] += o.confusion[r][c];
            }
        }
        self.spurious += o.spurious;
    }
}

impl EventAccuracyResult {
    pub fn ground_truth_count(&self, kind: EventKind) -> u64 {
        let r = kind.index();
        self.confusion[r].iter().sum::<u64>() + self.missed[r]
    }

    pub fn correct(&self, kind: EventKind) -> u64 {
        self.confusion[kind.index()][kind.index()]
    }

    /// Percentage of ground-truth events of `kind` labelled correctly; `None`
    /// when there are none.
    pub fn accuracy(&self, kind: EventKind) -> Option<f64> {
        let n = self.ground_truth_count(kind);
        (n > 0).then(|| 100.0 * self.correct(kind) as f64 / n as f64)
    }

    /// Reporting view in which re-entries count as just-appeared on both sides.
    pub fn folded_accuracy(&self, kind: EventKind) -> Option<f64> {
        let members: Vec<EventKind> = EventKind::ALL.into_iter().filter(|k| k.folded() == kind.folded()).collect();
        let mut n = 0;
        let mut ok = 0;
        for &t in &members {
            n += self.ground_truth_count(t);
            for &p in &members {
                ok += self.confusion[t.index()][p.index()];
            }
        }
        (n > 0).then(|| 100.0 * ok as f64 / n as f64)
    }

    pub fn overall(&self) -> Option<f64> {
        let n: u64 = EventKind::ALL.iter().map(|&k| self.ground_truth_count(k)).sum();
        let ok: u64 = EventKind::ALL.iter().map(|&k| self.correct(k)).sum();
        (n > 0).then(|| 100.0 * ok as f64 / n as f64)
    }
}

/// Associates predictions to ground truth by temporal span overlap
/// (greedy, highest overlap first) and tallies labels.
pub fn event_accuracy(pred: &[EventRecord], gt: &[EventRecord]) -> EventAccuracyResult {
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (gi, g) in gt.iter().enumerate() {
        for (pi, p) in pred.iter().enumerate() {
            let v = temporal_iou((g.t_enter, g.t_exit), (p.t_enter, p.t_exit));
            if v >= TEMPORAL_IOU_THRESHOLD {
                pairs.push((v, gi, pi));
            }
        }
    }
    pairs.sort_by(|a, b| {
        b.0.partial_cmp(&a.0).unwrap_or(std::cmp::Ordering::Equal).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2))
    });
    let mut gt_used = vec![false; gt.len()];
    let mut pred_used = vec![false; pred.len()];
    let mut out = EventAccuracyResult::default();
    for (_, gi, pi) in pairs {
        if gt_used[gi] || pred_used[pi] {
            continue;
        }
        gt_used[gi] = true;
        pred_used[pi] = true;
        out.confusion[gt[gi].event.index()][pred[pi].event.index()] += 1;
    }
    for (g, used) in gt.iter().zip(&gt_used) {
        if !used {
            out.missed[g.event.index()] += 1;
        }
    }
    out.spurious = pred_used.iter().filter(|u| !**u).count() as u64;
    out
}

/// One sequence's results, laid out like the detection and event tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub dataset: String,
    pub detection: DetectionMatchResult,
    pub events: Option<EventAccuracyResult>,
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |v| format!("{v:.2}"))
}

impl EvaluationReport {
    pub const CSV_HEADER: [&'static str; 11] = [
        "dataset",
        "recall",
        "precision",
        "f1",
        "entry",
        "exit",
        "just_appeared",
        "reentry",
        "overall",
        "tp_fp_fn",
        "spurious_events",
    ];

    pub fn csv_row(&self) -> Vec<String> {
        let d = &self.detection;
        let ev = self.events.as_ref();
        vec![
            self.dataset.clone(),
            format!("{:.2}", d.recall),
            format!("{:.2}", d.precision),
            format!("{:.2}", d.f1),
            cell(ev.and_then(|e| e.folded_accuracy(EventKind::Entry))),
            cell(ev.and_then(|e| e.folded_accuracy(EventKind::Exit))),
            cell(ev.and_then(|e| e.folded_accuracy(EventKind::JustAppeared))),
            cell(ev.and_then(|e| e.accuracy(EventKind::ReEntry))),
            cell(ev.and_then(|e| e.overall())),
            format!("{}/{}/{}", d.counts.tp, d.counts.fp, d.counts.fn_),
            ev.map_or_else(|| "-".into(), |e| e.spurious.to_string()),
        ]
    }

    pub fn write_csv<W: Write>(reports: &[EvaluationReport], out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(Self::CSV_HEADER)?;
        for r in reports {
            w.write_record(r.csv_row())?;
        }
        w.flush()?;
        Ok(())
    }

    /// Plain-text tables: detection quality, then event accuracy.
    pub fn render_text(reports: &[EvaluationReport]) -> String {
        let width = reports.iter().map(|r| r.dataset.len()).max().unwrap_or(7).max(7);
        let mut s = String::new();
        let _ = writeln!(s, "People detection results");
        let _ = writeln!(s, "{:<width$}  {:>8}  {:>9}  {:>8}", "Dataset", "Recall", "Precision", "F1");
        for r in reports {
            let d = &r.detection;
            let _ = writeln!(s, "{:<width$}  {:>8.2}  {:>9.2}  {:>8.2}", r.dataset, d.recall, d.precision, d.f1);
        }
        let _ = writeln!(s);
        let _ = writeln!(s, "Entry/Exit event detection results");
        let _ = writeln!(s, "{:<width$}  {:>8}  {:>8}  {:>13}", "Dataset", "Entry", "Exit", "Just appeared");
        for r in reports {
            let ev = r.events.as_ref();
            let _ = writeln!(
                s,
                "{:<width$}  {:>8}  {:>8}  {:>13}",
                r.dataset,
                cell(ev.and_then(|e| e.folded_accuracy(EventKind::Entry))),
                cell(ev.and_then(|e| e.folded_accuracy(EventKind::Exit))),
                cell(ev.and_then(|e| e.folded_accuracy(EventKind::JustAppeared))),
            );
        }
        s
    }
}
