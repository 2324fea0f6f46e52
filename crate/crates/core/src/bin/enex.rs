use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use enex::evaluation::{event_accuracy, match_detections, DetectionCounts, EventAccuracyResult, EvaluationReport};
use enex::io;
use enex::model::ENTRANCE_CAMERA;
use enex::pipeline::{self, PipelineConfig, PipelineOutput, RunOptions};
use enex::synth::{self, presets, NoiseSpec, ScenarioScript};

#[derive(Parser)]
#[command(name = "enex", version, about = "Entry/exit event detection at a private-area entrance")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Pipeline configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for a scripted input; overrides the script's own.
    #[arg(long)]
    seed: Option<u64>,
    /// Require boxes to lie wholly inside the entrance (threshold 1.0).
    #[arg(long)]
    strict_containment: bool,
}

impl Common {
    fn options(&self, gt: Option<PathBuf>) -> RunOptions {
        RunOptions { ground_truth: gt, out_dir: self.out.clone(), seed: self.seed, strict_containment: self.strict_containment }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Track detections and write `tracks.csv`.
    Track {
        #[command(flatten)]
        common: Common,
    },
    /// Label finished tracks and write `events.jsonl` and `dwell.csv`.
    Classify {
        #[command(flatten)]
        common: Common,
        /// Tracks in ground-truth CSV layout, e.g. the output of `track`.
        #[arg(long)]
        tracks: PathBuf,
    },
    /// Render a scenario script into detection and ground-truth files.
    Simulate {
        /// Scenario script (TOML). Without it a balanced corridor scenario is generated.
        #[arg(long)]
        script: Option<PathBuf>,
        /// People per event kind for the generated scenario.
        #[arg(long, default_value_t = 10)]
        per_kind: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score predictions against ground truth, one sequence per `--gt`.
    Evaluate {
        #[arg(long, required = true)]
        gt: Vec<PathBuf>,
        /// Predicted detections, paired with `--gt` in order.
        #[arg(long, required = true)]
        pred: Vec<PathBuf>,
        /// Predicted events, paired with `--gt` in order.
        #[arg(long)]
        events: Vec<PathBuf>,
        /// Needed to label ground-truth ids that carry no event column.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Full pipeline: track, classify, update the ledger, evaluate.
    Run {
        #[command(flatten)]
        common: Common,
        /// Ground truth; overrides `input.ground_truth`.
        #[arg(long)]
        gt: Option<PathBuf>,
    },
}

fn load_config(common: &Common, gt: Option<PathBuf>) -> Result<PipelineConfig> {
    let mut cfg = PipelineConfig::load(&common.config)?;
    common.options(gt).apply(&mut cfg);
    Ok(cfg)
}

fn print_summary(out: &PipelineOutput, dir: &Path) {
    for w in &out.warnings {
        eprintln!("warning: {w}");
    }
    let (entries, exits) = out.ledger.counts();
    println!(
        "{} events ({entries} entries, {exits} exits), {} inside, written to {}",
        out.events.len(),
        out.ledger.occupancy(),
        dir.display()
    );
    if let Some(r) = &out.report {
        print!("{}", EvaluationReport::render_text(std::slice::from_ref(r)));
    }
}

fn track(common: &Common) -> Result<()> {
    let cfg = load_config(common, None)?;
    let (dets, _) = pipeline::load_inputs(&cfg, common.seed)?;
    let out = pipeline::run_pipeline(&cfg, &dets, None)?;
    fs::create_dir_all(&cfg.output.dir)?;
    let path = cfg.output.dir.join("tracks.csv");
    io::write_tracks(BufWriter::new(File::create(&path)?), &out.tracks, &Default::default())?;
    println!("{} tracks written to {}", out.tracks.len(), path.display());
    Ok(())
}

fn classify(common: &Common, tracks: &Path) -> Result<()> {
    let cfg = load_config(common, None)?;
    let rows = io::load_ground_truth(tracks)?;
    let tracks = io::tracks_from_rows(&rows, ENTRANCE_CAMERA);
    let events = pipeline::classify_tracks(&tracks, &cfg.entrance_config()?, cfg.fps)?;
    let mut sorted = events.clone();
    sorted.sort_by_key(|e| (e.t_exit, e.track_id));
    let mut out = PipelineOutput { events, tracks, ..Default::default() };
    for ev in &sorted {
        if let Err(e) = out.ledger.apply_event(ev, cfg.fps) {
            out.warnings.push(format!("track {}: {e}", ev.track_id));
        }
    }
    pipeline::write_outputs(&cfg.output.dir, &out)?;
    print_summary(&out, &cfg.output.dir);
    Ok(())
}

fn simulate(script: Option<&Path>, per_kind: usize, seed: Option<u64>, out: &Path) -> Result<()> {
    let mut script = match script {
        Some(p) => ScenarioScript::load(p)?,
        None => presets::balanced(per_kind, NoiseSpec::default(), seed.unwrap_or(0)),
    };
    if let Some(s) = seed {
        script.seed = s;
    }
    let sc = synth::generate(&script)?;
    fs::create_dir_all(out)?;
    io::save_detections(&out.join("detections.csv"), &sc.detections)?;
    io::write_ground_truth(BufWriter::new(File::create(out.join("ground_truth.csv"))?), &sc.ground_truth)?;
    io::write_events(BufWriter::new(File::create(out.join("events.jsonl"))?), &sc.events)?;
    fs::write(out.join("script.toml"), script.to_toml())?;
    println!("{} detections, {} people written to {}", sc.detections.len(), sc.events.len(), out.display());
    Ok(())
}

struct Sequence {
    counts: DetectionCounts,
    report: EvaluationReport,
}

fn evaluate_one(gt: &Path, pred: &Path, events: Option<&Path>, cfg: Option<&PipelineConfig>) -> Result<Sequence> {
    let rows = io::load_ground_truth(gt)?;
    let dets = match io::load_detections(pred) {
        Ok(d) => d,
        Err(io::IoError::EmptyFile(_)) => Vec::new(),
        Err(e) => return Err(e.into()),
    };
    let threshold = cfg.map_or(0.5, |c| c.evaluation.iou_threshold);
    let detection = match_detections(
        &pipeline::detection_boxes(&dets, ENTRANCE_CAMERA),
        &pipeline::boxes_by_frame(&rows),
        threshold,
    );
    let events = match events {
        None => None,
        Some(path) => {
            let Some(cfg) = cfg else { bail!("--events needs --config to label ground truth") };
            let gt_events = pipeline::ground_truth_events(&rows, &cfg.entrance_config()?, cfg.fps)?;
            Some(event_accuracy(&io::load_events(path)?, &gt_events))
        }
    };
    let dataset = gt.file_stem().map_or_else(|| gt.display().to_string(), |s| s.to_string_lossy().into_owned());
    Ok(Sequence { counts: detection.counts, report: EvaluationReport { dataset, detection, events } })
}

fn evaluate(gt: &[PathBuf], pred: &[PathBuf], events: &[PathBuf], config: Option<&Path>, out: Option<&Path>) -> Result<()> {
    if gt.len() != pred.len() {
        bail!("{} --gt files but {} --pred files", gt.len(), pred.len());
    }
    if !events.is_empty() && events.len() != gt.len() {
        bail!("{} --gt files but {} --events files", gt.len(), events.len());
    }
    let cfg = config.map(PipelineConfig::load).transpose()?;
    let results: Vec<Result<Sequence>> = std::thread::scope(|s| {
        let handles: Vec<_> = gt
            .iter()
            .enumerate()
            .map(|(i, g)| {
                let (p, e, c) = (&pred[i], events.get(i), cfg.as_ref());
                s.spawn(move || {
                    evaluate_one(g, p, e.map(PathBuf::as_path), c).with_context(|| format!("sequence {}", g.display()))
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("evaluation thread panicked")).collect()
    });
    let sequences = results.into_iter().collect::<Result<Vec<_>>>()?;
    let mut reports: Vec<EvaluationReport> = sequences.iter().map(|s| s.report.clone()).collect();
    if sequences.len() > 1 {
        let mut counts = DetectionCounts::default();
        let mut ev: Option<EventAccuracyResult> = None;
        for s in &sequences {
            counts += s.counts;
            if let Some(e) = s.report.events {
                *ev.get_or_insert_with(Default::default) += e;
            }
        }
        reports.push(EvaluationReport { dataset: "total".into(), detection: counts.result(), events: ev });
    }
    print!("{}", EvaluationReport::render_text(&reports));
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        EvaluationReport::write_csv(&reports, BufWriter::new(File::create(dir.join("report.csv"))?))?;
        fs::write(dir.join("report.txt"), EvaluationReport::render_text(&reports))?;
    }
    Ok(())
}

fn run(common: &Common, gt: Option<PathBuf>) -> Result<()> {
    let opts = common.options(gt);
    let mut cfg = PipelineConfig::load(&common.config)?;
    opts.apply(&mut cfg);
    let out = pipeline::run_from_files(&common.config, &opts)?;
    print_summary(&out, &cfg.output.dir);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Track { common } => track(common),
        Command::Classify { common, tracks } => classify(common, tracks),
        Command::Simulate { script, per_kind, seed, out } => simulate(script.as_deref(), *per_kind, *seed, out),
        Command::Evaluate { gt, pred, events, config, out } => {
            evaluate(gt, pred, events, config.as_deref(), out.as_deref())
        }
        Command::Run { common, gt } => run(common, gt.clone()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
