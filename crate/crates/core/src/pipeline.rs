//! Configuration and the frame loop tying tracking, classification, fusion
//! and the occupancy ledger together.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::entrance::{effective_entrance, finalize_track, track_origin, EntranceConfig, EntranceError, OccluderHistory};
use crate::evaluation::{event_accuracy, match_detections, EvaluationReport};
use crate::fusion::{fill_occluded, FusionConfig, Homography};
use crate::gallery::OccupancyLedger;
use crate::geometry::{BBox, Entrance, GeometryError, Scene};
use crate::io::{self, GroundTruthRow, IoError};
use crate::model::{Detection, EventKind, EventRecord, FrameIndex, Track, TrackId, TrackState, ENTRANCE_CAMERA, OPPOSITE_CAMERA};
use crate::synth::{self, ScenarioScript, SynthError};
use crate::tracker::{Tracker, TrackerConfig, TrackerError};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config {path}: {reason}")]
    Config { path: String, reason: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Fs(#[from] std::io::Error),
    #[error(transparent)]
    Tracker(#[from] TrackerError),
    #[error(transparent)]
    Entrance(#[from] EntranceError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifierConfig {
    /// Fraction of a box that must lie in the entrance to count as "at the entrance".
    pub containment_threshold: f64,
    /// Dilation of an occluding box per side, as a fraction of its size.
    pub occluder_margin: f64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self { containment_threshold: 0.8, occluder_margin: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct FusionSection {
    pub enabled: bool,
    /// Row-major opposite-camera → entrance-camera homography.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub homography: Option<[f64; 9]>,
    /// Whitespace-separated 3×3 matrix file, used when `homography` is absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub homography_file: Option<PathBuf>,
    #[serde(flatten)]
    pub params: FusionConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvaluationSection {
    pub iou_threshold: f64,
    /// Leave fused boxes out of the detection scores.
    pub exclude_synthesized: bool,
}

impl Default for EvaluationSection {
    fn default() -> Self {
        Self { iou_threshold: 0.5, exclude_synthesized: true }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct InputSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detections: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<PathBuf>,
    /// Scenario script rendered in place of a detections file.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub script: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: PathBuf::from("out") }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    #[serde(default = "default_name")]
    pub name: String,
    #[serde(default = "default_fps")]
    pub fps: f64,
    pub scene: Scene<f64>,
    pub entrance: BBox<f64>,
    #[serde(default)]
    pub classifier: ClassifierConfig,
    #[serde(default)]
    pub tracker: TrackerConfig,
    #[serde(default)]
    pub fusion: FusionSection,
    #[serde(default)]
    pub evaluation: EvaluationSection,
    #[serde(default)]
    pub input: InputSection,
    #[serde(default)]
    pub output: OutputSection,
}

fn default_name() -> String {
    "sequence".into()
}

fn default_fps() -> f64 {
    20.0
}

impl PipelineConfig {
    pub fn new(scene: Scene<f64>, entrance: BBox<f64>) -> Self {
        Self {
            name: default_name(),
            fps: default_fps(),
            scene,
            entrance,
            classifier: ClassifierConfig::default(),
            tracker: TrackerConfig::default(),
            fusion: FusionSection::default(),
            evaluation: EvaluationSection::default(),
            input: InputSection::default(),
            output: OutputSection::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Reads a config file. Relative paths inside it are taken relative to
    /// the file's directory, and a homography file is read in.
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let err = |reason: String| PipelineError::Config { path: path.display().to_string(), reason };
        let text = fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
        let mut cfg = Self::from_toml(&text).map_err(|e| err(e.to_string()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &mut Option<PathBuf>| {
            if let Some(p) = p {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        };
        resolve(&mut cfg.input.detections);
        resolve(&mut cfg.input.ground_truth);
        resolve(&mut cfg.input.script);
        resolve(&mut cfg.fusion.homography_file);
        if cfg.output.dir.is_relative() {
            cfg.output.dir = base.join(&cfg.output.dir);
        }
        if cfg.fusion.homography.is_none() {
            if let Some(file) = &cfg.fusion.homography_file {
                let h = io::load_homography(file)?;
                let m = h.matrix();
                cfg.fusion.homography = Some([
                    m[0][0], m[0][1], m[0][2], m[1][0], m[1][1], m[1][2], m[2][0], m[2][1], m[2][2],
                ]);
            }
        }
        for p in [&cfg.input.detections, &cfg.input.ground_truth, &cfg.input.script].into_iter().flatten() {
            if !p.exists() {
                return Err(err(format!("input {} does not exist", p.display())));
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        if !(self.fps > 0.0 && self.fps.is_finite()) {
            return Err(PipelineError::Invalid("fps must be positive".into()));
        }
        self.entrance_config()?.validate()?;
        self.tracker_config().validate()?;
        if self.fusion.enabled && self.fusion.homography.is_none() {
            return Err(PipelineError::Invalid("fusion is enabled but no homography is given".into()));
        }
        self.homography()?;
        if !(self.evaluation.iou_threshold > 0.0 && self.evaluation.iou_threshold <= 1.0) {
            return Err(PipelineError::Invalid("evaluation.iou_threshold must lie in (0, 1]".into()));
        }
        Ok(())
    }

    pub fn entrance_config(&self) -> Result<EntranceConfig<f64>, PipelineError> {
        let scene = Scene::new(self.scene.width, self.scene.height)?;
        let mut cfg = EntranceConfig::new(Entrance::new(self.entrance, &scene)?);
        cfg.containment_threshold = self.classifier.containment_threshold;
        cfg.occluder_margin = self.classifier.occluder_margin;
        Ok(cfg)
    }

    /// The tracker settings with the stream's frame rate.
    pub fn tracker_config(&self) -> TrackerConfig {
        TrackerConfig { fps: self.fps, ..self.tracker }
    }

    pub fn homography(&self) -> Result<Option<Homography<f64>>, PipelineError> {
        self.fusion
            .homography
            .map(|m| io::homography_from_slice(&m).map_err(PipelineError::from))
            .transpose()
    }
}

/// Everything one pipeline run produces.
#[derive(Debug, Clone, Default)]
pub struct PipelineOutput {
    /// In termination order.
    pub events: Vec<EventRecord>,
    /// Terminated confirmed tracks, in the same order as `events`.
    pub tracks: Vec<Track<f64>>,
    pub ledger: OccupancyLedger,
    pub report: Option<EvaluationReport>,
    /// Non-fatal problems, e.g. an exit with nobody inside.
    pub warnings: Vec<String>,
}

impl PipelineOutput {
    pub fn labels(&self) -> BTreeMap<TrackId, EventKind> {
        self.events.iter().map(|e| (e.track_id, e.event)).collect()
    }
}

struct Engine<'a> {
    cfg: &'a PipelineConfig,
    ecfg: EntranceConfig<f64>,
    homography: Option<Homography<f64>>,
    tracker: Tracker<f64>,
    history: OccluderHistory<f64>,
    out: PipelineOutput,
    /// Boxes handed to the tracker, for detection scoring.
    fed: BTreeMap<FrameIndex, Vec<BBox<f64>>>,
}

impl Engine<'_> {
    fn step(&mut self, frame: FrameIndex, cam0: &[Detection<f64>], cam1: &[Detection<f64>]) -> Result<(), PipelineError> {
        let mut dets: Vec<Detection<f64>> = Vec::with_capacity(cam0.len());
        for d in cam0 {
            if d.bbox.is_degenerate() {
                self.out.warnings.push(format!("frame {frame}: dropped zero-area detection"));
            } else {
                dets.push(*d);
            }
        }
        if let (true, Some(h)) = (self.cfg.fusion.enabled, &self.homography) {
            if !cam1.is_empty() {
                let occluders = frame.checked_sub(1).map(|f| self.history.at(f, 0)).unwrap_or_default();
                let eff = effective_entrance(&self.ecfg.entrance, &occluders, self.ecfg.occluder_margin);
                dets = fill_occluded(&dets, cam1, h, &eff, &self.cfg.fusion.params);
            }
        }
        let scored = dets
            .iter()
            .filter(|d| !(d.synthesized && self.cfg.evaluation.exclude_synthesized))
            .map(|d| d.bbox);
        self.fed.entry(frame).or_default().extend(scored);

        let outcome = self.tracker.step(frame, &dets)?;
        for &(id, di) in &outcome.assignments {
            if outcome.confirmed.contains(&id) {
                continue;
            }
            let confirmed = self.tracker.tracks().any(|t| t.id == id && t.state == TrackState::Confirmed);
            if confirmed {
                self.history.observe(&self.ecfg.entrance, frame, id, dets[di].bbox);
            }
        }
        for &id in &outcome.confirmed {
            let track = self.tracker.tracks().find(|t| t.id == id).expect("confirmed track is live").clone();
            for (&f, &b) in &track.boxes {
                self.history.observe(&self.ecfg.entrance, f, id, b);
            }
            let origin = track_origin(&track, &self.ecfg, &self.history)?;
            self.tracker.track_mut(id).expect("live").origin = Some(origin);
        }
        let mut ended = outcome.terminated;
        ended.sort_by_key(|t| t.id);
        for t in ended {
            self.finish(t)?;
        }
        let oldest = self.tracker.tracks().filter_map(|t| t.first().map(|(f, _)| f)).min();
        self.history.prune_before(oldest.unwrap_or(frame).min(frame));
        Ok(())
    }

    fn finish(&mut self, track: Track<f64>) -> Result<(), PipelineError> {
        let ev = finalize_track(&track, &self.ecfg, &self.history, self.cfg.fps)?;
        if let Err(e) = self.out.ledger.apply_event(&ev, self.cfg.fps) {
            self.out.warnings.push(format!("track {}: {e}", ev.track_id));
        }
        self.out.events.push(ev);
        self.out.tracks.push(track);
        Ok(())
    }
}

/// Runs the full engine over one sequence. `detections` may mix both
/// cameras and need not be sorted; every frame from the first to the last
/// detection is stepped, including frames with nothing detected.
pub fn run_pipeline(
    cfg: &PipelineConfig,
    detections: &[Detection<f64>],
    ground_truth: Option<&[GroundTruthRow]>,
) -> Result<PipelineOutput, PipelineError> {
    cfg.validate()?;
    let mut engine = Engine {
        cfg,
        ecfg: cfg.entrance_config()?,
        homography: cfg.homography()?,
        tracker: Tracker::new(cfg.tracker_config())?,
        history: OccluderHistory::new(),
        out: PipelineOutput::default(),
        fed: BTreeMap::new(),
    };
    let grouped = io::group_by_frame(detections);
    let empty = Vec::new();
    if let (Some(&first), Some(&last)) = (grouped.keys().next(), grouped.keys().next_back()) {
        for frame in first..=last {
            let cams = grouped.get(&frame);
            let cam0 = cams.and_then(|c| c.get(&ENTRANCE_CAMERA)).unwrap_or(&empty);
            let cam1 = cams.and_then(|c| c.get(&OPPOSITE_CAMERA)).unwrap_or(&empty);
            engine.step(frame, cam0, cam1)?;
        }
    }
    for t in engine.tracker.flush() {
        engine.finish(t)?;
    }
    if let Some(gt) = ground_truth {
        let gt_events = ground_truth_events(gt, &engine.ecfg, cfg.fps)?;
        let gt_boxes = boxes_by_frame(gt);
        let detection = match_detections(&engine.fed, &gt_boxes, cfg.evaluation.iou_threshold);
        engine.out.report = Some(EvaluationReport {
            dataset: cfg.name.clone(),
            detection,
            events: Some(event_accuracy(&engine.out.events, &gt_events)),
        });
    }
    Ok(engine.out)
}

/// Entrance-camera ground-truth boxes per frame.
pub fn boxes_by_frame(rows: &[GroundTruthRow]) -> BTreeMap<FrameIndex, Vec<BBox<f64>>> {
    let mut out: BTreeMap<FrameIndex, Vec<BBox<f64>>> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.camera == ENTRANCE_CAMERA) {
        out.entry(r.frame).or_default().push(r.bbox);
    }
    out
}

/// Detection boxes of one camera per frame.
pub fn detection_boxes(dets: &[Detection<f64>], camera: u8) -> BTreeMap<FrameIndex, Vec<BBox<f64>>> {
    let mut out: BTreeMap<FrameIndex, Vec<BBox<f64>>> = BTreeMap::new();
    for d in dets.iter().filter(|d| d.camera == camera) {
        out.entry(d.frame).or_default().push(d.bbox);
    }
    out
}

/// Classifies finished tracks offline, using each other as occluders.
pub fn classify_tracks(
    tracks: &[Track<f64>],
    ecfg: &EntranceConfig<f64>,
    fps: f64,
) -> Result<Vec<EventRecord>, PipelineError> {
    let mut history = OccluderHistory::new();
    for t in tracks {
        for (&f, &b) in &t.boxes {
            history.observe(&ecfg.entrance, f, t.id, b);
        }
    }
    tracks.iter().map(|t| Ok(finalize_track(t, ecfg, &history, fps)?)).collect()
}

/// Ground-truth events, one per id. A labelled id keeps its label; an
/// unlabelled one is classified from its boxes.
pub fn ground_truth_events(
    rows: &[GroundTruthRow],
    ecfg: &EntranceConfig<f64>,
    fps: f64,
) -> Result<Vec<EventRecord>, PipelineError> {
    let tracks = io::tracks_from_rows(rows, ENTRANCE_CAMERA);
    let labels = io::labels_from_rows(rows);
    let mut events = classify_tracks(&tracks, ecfg, fps)?;
    for ev in &mut events {
        if let Some(&kind) = labels.get(&ev.track_id) {
            ev.event = kind;
        }
    }
    Ok(events)
}

/// Command-line overrides applied on top of a config file.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub ground_truth: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub strict_containment: bool,
}

impl RunOptions {
    pub fn apply(&self, cfg: &mut PipelineConfig) {
        if let Some(gt) = &self.ground_truth {
            cfg.input.ground_truth = Some(gt.clone());
        }
        if let Some(dir) = &self.out_dir {
            cfg.output.dir = dir.clone();
        }
        if self.strict_containment {
            cfg.classifier.containment_threshold = 1.0;
        }
    }
}

/// Detections plus optional ground truth.
pub type Inputs = (Vec<Detection<f64>>, Option<Vec<GroundTruthRow>>);

/// Detections and optional ground truth named by the config's inputs.
/// A script is rendered when no detections file is given; its ground truth
/// is used unless a file overrides it.
pub fn load_inputs(
    cfg: &PipelineConfig,
    seed: Option<u64>,
) -> Result<Inputs, PipelineError> {
    let gt_file = cfg.input.ground_truth.as_deref().map(io::load_ground_truth).transpose()?;
    if let Some(path) = &cfg.input.detections {
        let dets = match io::load_detections(path) {
            Ok(d) => d,
            Err(IoError::EmptyFile(_)) => Vec::new(),
            Err(e) => return Err(e.into()),
        };
        return Ok((dets, gt_file));
    }
    if let Some(path) = &cfg.input.script {
        let mut script = ScenarioScript::load(path)?;
        if let Some(s) = seed {
            script.seed = s;
        }
        let scenario = synth::generate(&script)?;
        return Ok((scenario.detections, gt_file.or(Some(scenario.ground_truth))));
    }
    Err(PipelineError::Invalid("config names neither input.detections nor input.script".into()))
}

/// Loads a config, runs it and writes `events.jsonl`, `dwell.csv`,
/// `tracks.csv` and, with ground truth, `report.csv` and `report.txt`.
pub fn run_from_files(config: &Path, opts: &RunOptions) -> Result<PipelineOutput, PipelineError> {
    let mut cfg = PipelineConfig::load(config)?;
    opts.apply(&mut cfg);
    let (dets, gt) = load_inputs(&cfg, opts.seed)?;
    let output = run_pipeline(&cfg, &dets, gt.as_deref())?;
    write_outputs(&cfg.output.dir, &output)?;
    Ok(output)
}

pub fn write_outputs(dir: &Path, output: &PipelineOutput) -> Result<(), PipelineError> {
    fs::create_dir_all(dir)?;
    io::write_events(BufWriter::new(File::create(dir.join("events.jsonl"))?), &output.events)?;
    output.ledger.write_dwell_csv(BufWriter::new(File::create(dir.join("dwell.csv"))?))?;
    io::write_tracks(BufWriter::new(File::create(dir.join("tracks.csv"))?), &output.tracks, &output.labels())?;
    if let Some(report) = &output.report {
        let reports = std::slice::from_ref(report);
        EvaluationReport::write_csv(reports, BufWriter::new(File::create(dir.join("report.csv"))?))?;
        fs::write(dir.join("report.txt"), EvaluationReport::render_text(reports))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{presets, NoiseSpec};

    fn corridor() -> PipelineConfig {
        PipelineConfig::new(presets::SCENE, presets::DOOR)
    }

    #[test]
    fn empty_input_is_quiet() {
        let out = run_pipeline(&corridor(), &[], None).unwrap();
        assert!(out.events.is_empty());
        assert_eq!(out.ledger.occupancy(), 0);
    }

    #[test]
    fn single_entry_fills_gallery() {
        let mut script = presets::balanced(1, NoiseSpec::default(), 2);
        script.persons.retain(|p| p.event == EventKind::Entry);
        let sc = synth::generate(&script).unwrap();
        let out = run_pipeline(&corridor(), &sc.detections, Some(&sc.ground_truth)).unwrap();
        assert_eq!(out.events.len(), 1);
        assert_eq!(out.events[0].event, EventKind::Entry);
        assert_eq!(out.ledger.occupancy(), 1);
        let report = out.report.unwrap();
        assert_eq!(report.detection.recall, 100.0);
        assert_eq!(report.detection.precision, 100.0);
    }

    #[test]
    fn ground_truth_as_prediction_scores_perfectly() {
        let sc = synth::generate(&presets::balanced(2, NoiseSpec::default(), 5)).unwrap();
        let ecfg = corridor().entrance_config().unwrap();
        let gt_events = ground_truth_events(&sc.ground_truth, &ecfg, 20.0).unwrap();
        let acc = event_accuracy(&gt_events, &sc.events);
        assert_eq!(acc.overall(), Some(100.0));
        let boxes = boxes_by_frame(&sc.ground_truth);
        let m = match_detections(&boxes, &boxes, 0.5);
        assert_eq!((m.recall, m.precision, m.f1), (100.0, 100.0, 100.0));
    }

    #[test]
    fn config_toml_roundtrip_and_defaults() {
        let mut cfg = corridor();
        cfg.fusion.enabled = true;
        cfg.fusion.homography = Some(presets::OPPOSITE_VIEW);
        let back = PipelineConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
        let minimal = PipelineConfig::from_toml(
            "[scene]\nwidth = 1920.0\nheight = 1080.0\n[entrance]\nx = 860.0\ny = 300.0\nw = 200.0\nh = 300.0\n",
        )
        .unwrap();
        assert_eq!(minimal, corridor());
    }

    #[test]
    fn fusion_without_homography_is_rejected() {
        let mut cfg = corridor();
        cfg.fusion.enabled = true;
        assert!(matches!(cfg.validate(), Err(PipelineError::Invalid(_))));
        let mut cfg = corridor();
        cfg.entrance = BBox::raw(1900.0, 300.0, 200.0, 300.0);
        assert!(cfg.validate().is_err());
    }
}
