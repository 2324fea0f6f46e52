//! One test per acceptance criterion. Each prints a single PASS/FAIL line.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use num_rational::Rational64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use enex::assignment::{min_cost_matching, total_cost};
use enex::entrance::{classify_event, effective_entrance};
use enex::evaluation::{f1, EventAccuracyResult};
use enex::gallery::OccupancyLedger;
use enex::geometry::{containment_ratio, iou, BBox, Entrance};
use enex::kalman::{KalmanFilter, KalmanState};
use enex::model::{EventKind, EventRecord, Origin, Sink};
use enex::pipeline::{run_from_files, run_pipeline, PipelineConfig, RunOptions};
use enex::synth::{self, presets, NoiseSpec, Scenario};

fn report(id: u32, name: &str, pass: bool, detail: String) {
    println!("criterion {id:>2} {name}: {} ({detail})", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "criterion {id} {name} failed: {detail}");
}

#[test]
fn c01_metric_replay() {
    let start = Instant::now();
    let rows: [(f64, f64, f64); 4] = [(60.4, 80.3, 68.94), (80.43, 92.23, 85.92), (78.2, 91.3, 84.24), (80.76, 90.05, 85.09)];
    let mut worst: f64 = 0.0;
    let mut detail = Vec::new();
    for (r, p, want) in rows {
        let got = f1(r, p).unwrap();
        worst = worst.max((got - want).abs());
        detail.push(format!("f1({r}, {p}) = {got:.4} vs {want}"));
    }
    let elapsed = start.elapsed();
    let pass = worst <= 0.01 && elapsed < Duration::from_secs(1);
    report(1, "metric replay", pass, format!("{}; max error {worst:.4}", detail.join(", ")));
}

#[test]
fn c02_transition_table() {
    let table = [
        (Origin::Scene, Sink::Scene, EventKind::JustAppeared),
        (Origin::Scene, Sink::PrivateArea, EventKind::Entry),
        (Origin::PrivateArea, Sink::Scene, EventKind::Exit),
        (Origin::PrivateArea, Sink::PrivateArea, EventKind::ReEntry),
    ];
    let wrong: Vec<_> = table.iter().filter(|(o, s, e)| classify_event(*o, *s) != *e).collect();
    report(2, "transition table", wrong.is_empty(), format!("{} of 4 pairs wrong", wrong.len()));
}

fn corridor_config() -> PipelineConfig {
    PipelineConfig::new(presets::SCENE, presets::DOOR)
}

fn run_scenario(sc: &Scenario, cfg: &PipelineConfig) -> EventAccuracyResult {
    let out = run_pipeline(cfg, &sc.detections, None).unwrap();
    enex::evaluation::event_accuracy(&out.events, &sc.events)
}

fn accuracy_line(acc: &EventAccuracyResult) -> String {
    EventKind::ALL
        .iter()
        .map(|&k| format!("{k} {:.1}%", acc.accuracy(k).unwrap_or(f64::NAN)))
        .collect::<Vec<_>>()
        .join(", ")
}

#[test]
fn c03_noise_free_oracle() {
    let start = Instant::now();
    let sc = synth::generate(&presets::balanced(50, NoiseSpec::default(), 2024)).unwrap();
    assert_eq!(sc.events.len(), 200);
    let acc = run_scenario(&sc, &corridor_config());
    let elapsed = start.elapsed();
    let all = EventKind::ALL.iter().all(|&k| acc.accuracy(k) == Some(100.0));
    let pass = all && acc.spurious == 0 && elapsed < Duration::from_secs(10);
    report(
        3,
        "noise-free end-to-end",
        pass,
        format!("{}; {} spurious; {:.2?}", accuracy_line(&acc), acc.spurious, elapsed),
    );
}

#[test]
fn c04_noise_robustness() {
    let noise = NoiseSpec { position_sigma: 2.0, miss_probability: 0.1, false_positives_per_frame: 1.0 / 20.0 };
    let sc = synth::generate(&presets::balanced(50, noise, 2024)).unwrap();
    let acc = run_scenario(&sc, &corridor_config());
    let overall = acc.overall().unwrap();
    report(
        4,
        "noise robustness",
        overall >= 95.0,
        format!("overall {overall:.2}% (need >= 95); {}; {} spurious", accuracy_line(&acc), acc.spurious),
    );
}

#[test]
fn c05_occlusion_fusion() {
    let script = presets::entrance_occlusion(15, 7);
    let sc = synth::generate(&script).unwrap();
    let walker = script.persons.iter().find(|p| p.event == EventKind::Entry).unwrap();
    let walker_start = walker.start_frame;
    let walker_events = |events: &[EventRecord]| -> Vec<EventRecord> {
        events.iter().filter(|e| e.t_exit >= walker_start).copied().collect()
    };

    let plain = corridor_config();
    let without = walker_events(&run_pipeline(&plain, &sc.detections, None).unwrap().events);
    let broken = without.len() != 1 || without[0].event != EventKind::Entry;

    let mut fused = corridor_config();
    fused.fusion.enabled = true;
    fused.fusion.homography = Some(presets::OPPOSITE_VIEW);
    let out = run_pipeline(&fused, &sc.detections, None).unwrap();
    let with = walker_events(&out.events);
    let recovered = with.len() == 1 && with[0].event == EventKind::Entry;

    let describe = |v: &[EventRecord]| v.iter().map(|e| e.event.to_string()).collect::<Vec<_>>().join("+");
    report(
        5,
        "occlusion and fusion",
        broken && recovered,
        format!("without fusion [{}], with fusion [{}], occupancy {}", describe(&without), describe(&with), out.ledger.occupancy()),
    );
}

fn brute_force_min<C: Copy + std::ops::Add<Output = C> + PartialOrd + num_traits::Zero>(cost: &[Vec<C>]) -> C {
    fn rec<C: Copy + std::ops::Add<Output = C> + PartialOrd>(
        cost: &[Vec<C>],
        row: usize,
        used: &mut [bool],
        acc: C,
        best: &mut Option<C>,
    ) {
        if row == cost.len() {
            if best.is_none_or(|b| acc < b) {
                *best = Some(acc);
            }
            return;
        }
        for c in 0..used.len() {
            if !used[c] {
                used[c] = true;
                rec(cost, row + 1, used, acc + cost[row][c], best);
                used[c] = false;
            }
        }
    }
    let mut best = None;
    rec(cost, 0, &mut vec![false; cost[0].len()], C::zero(), &mut best);
    best.unwrap()
}

#[test]
fn c06_assignment_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut mismatches = 0;
    for _ in 0..100 {
        let ints: Vec<Vec<i64>> = (0..6).map(|_| (0..6).map(|_| rng.random_range(0..1000)).collect()).collect();
        let pairs = min_cost_matching(&ints);
        if pairs.len() != 6 || total_cost(&ints, &pairs) != brute_force_min(&ints) {
            mismatches += 1;
        }
        let ratios: Vec<Vec<Rational64>> = (0..6)
            .map(|_| (0..6).map(|_| Rational64::new(rng.random_range(0..500), rng.random_range(1..50))).collect())
            .collect();
        let pairs = min_cost_matching(&ratios);
        if total_cost(&ratios, &pairs) != brute_force_min(&ratios) {
            mismatches += 1;
        }
        // Integer-valued floats add exactly, so equality is exact here too.
        let floats: Vec<Vec<f64>> = ints.iter().map(|r| r.iter().map(|&v| v as f64).collect()).collect();
        let pairs = min_cost_matching(&floats);
        if total_cost(&floats, &pairs) != brute_force_min(&floats) {
            mismatches += 1;
        }
    }
    report(6, "assignment oracle", mismatches == 0, format!("{mismatches} mismatches over 300 matrices (i64, rational, f64)"));
}

struct DirectKalman {
    x: DVector<f64>,
    p: DMatrix<f64>,
}

impl DirectKalman {
    const POS: f64 = 1.0 / 20.0;
    const VEL: f64 = 1.0 / 160.0;

    fn new(z: [f64; 4]) -> Self {
        let h = z[3];
        let (p, v) = (2.0 * Self::POS * h, 10.0 * Self::VEL * h);
        let d = [p * p, p * p, p * p, p * p, v * v, v * v, v * v, v * v];
        Self {
            x: DVector::from_vec(vec![z[0], z[1], z[2], z[3], 0.0, 0.0, 0.0, 0.0]),
            p: DMatrix::from_diagonal(&DVector::from_row_slice(&d)),
        }
    }

    fn f() -> DMatrix<f64> {
        let mut f = DMatrix::identity(8, 8);
        for i in 0..4 {
            f[(i, i + 4)] = 1.0;
        }
        f
    }

    fn h() -> DMatrix<f64> {
        DMatrix::from_fn(4, 8, |r, c| if r == c { 1.0 } else { 0.0 })
    }

    fn predict(&mut self) {
        let h = self.x[3].abs();
        let (p, v) = ((Self::POS * h).powi(2), (Self::VEL * h).powi(2));
        let q = DMatrix::from_diagonal(&DVector::from_row_slice(&[p, p, p, p, v, v, v, v]));
        let f = Self::f();
        self.x = &f * &self.x;
        self.p = &f * &self.p * f.transpose() + q;
    }

    fn update(&mut self, z: [f64; 4]) {
        let r = (Self::POS * self.x[3].abs()).powi(2);
        let r = DMatrix::from_diagonal_element(4, 4, r);
        let h = Self::h();
        let s = &h * &self.p * h.transpose() + r;
        let k = &self.p * h.transpose() * s.try_inverse().unwrap();
        let y = DVector::from_row_slice(&z) - &h * &self.x;
        self.x = &self.x + &k * y;
        self.p = (DMatrix::identity(8, 8) - &k * &h) * &self.p;
    }
}

#[test]
fn c07_kalman_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let kf = KalmanFilter::<f64>::default();
    let b0 = BBox::raw(400.0, 300.0, 70.0, 180.0);
    let mut ours: KalmanState<f64> = kf.initiate(&b0);
    let (cx, cy) = b0.center();
    let mut oracle = DirectKalman::new([cx, cy, b0.w, b0.h]);
    let (mut worst, mut asym, mut min_eig) = (0.0_f64, 0.0_f64, f64::INFINITY);
    let truth_v = (rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0));
    for k in 0..1000 {
        ours = kf.predict(&ours);
        oracle.predict();
        let z = BBox::from_center(
            cx + truth_v.0 * k as f64 + rng.random_range(-4.0..4.0),
            cy + truth_v.1 * k as f64 + rng.random_range(-4.0..4.0),
            70.0 + rng.random_range(-3.0..3.0),
            180.0 + rng.random_range(-6.0..6.0),
        );
        ours = kf.update(&ours, &z).unwrap();
        let (zx, zy) = z.center();
        oracle.update([zx, zy, z.w, z.h]);
        for i in 0..8 {
            worst = worst.max((ours.mean[(i, 0)] - oracle.x[i]).abs());
            for j in 0..8 {
                worst = worst.max((ours.covariance[(i, j)] - oracle.p[(i, j)]).abs());
                asym = asym.max((ours.covariance[(i, j)] - ours.covariance[(j, i)]).abs());
            }
        }
        let p = DMatrix::from_fn(8, 8, |i, j| ours.covariance[(i, j)]);
        min_eig = min_eig.min(p.symmetric_eigen().eigenvalues.min());
    }
    let pass = worst <= 1e-9 && asym <= 1e-9 && min_eig >= -1e-9;
    report(
        7,
        "kalman oracle",
        pass,
        format!("max deviation {worst:.2e}, max asymmetry {asym:.2e}, min eigenvalue {min_eig:.3e}"),
    );
}

const CELL: f64 = 0.25;

/// Sample points on a `CELL` lattice covering `hull`, calling `f` per cell centre.
fn raster(hull: &BBox<f64>, mut f: impl FnMut(f64, f64)) {
    let nx = (hull.w / CELL).ceil() as usize;
    let ny = (hull.h / CELL).ceil() as usize;
    for j in 0..ny {
        let y = hull.y + (j as f64 + 0.5) * CELL;
        for i in 0..nx {
            f(hull.x + (i as f64 + 0.5) * CELL, y);
        }
    }
}

fn inside(b: &BBox<f64>, x: f64, y: f64) -> bool {
    x > b.x && x < b.right() && y > b.y && y < b.bottom()
}

fn hull_of(boxes: &[BBox<f64>]) -> BBox<f64> {
    let x0 = boxes.iter().map(|b| b.x).fold(f64::INFINITY, f64::min);
    let y0 = boxes.iter().map(|b| b.y).fold(f64::INFINITY, f64::min);
    let x1 = boxes.iter().map(|b| b.right()).fold(f64::NEG_INFINITY, f64::max);
    let y1 = boxes.iter().map(|b| b.bottom()).fold(f64::NEG_INFINITY, f64::max);
    BBox::from_corners(x0, y0, x1, y1)
}

#[test]
fn c08_geometry_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let rand_box = |rng: &mut ChaCha8Rng| {
        BBox::raw(rng.random_range(0.0..120.0), rng.random_range(0.0..120.0), rng.random_range(30.0..120.0), rng.random_range(30.0..120.0))
    };
    let (mut worst_iou, mut worst_contain) = (0.0_f64, 0.0_f64);
    for _ in 0..1000 {
        let (a, b) = (rand_box(&mut rng), rand_box(&mut rng));
        let (mut na, mut nb, mut both) = (0u64, 0u64, 0u64);
        raster(&hull_of(&[a, b]), |x, y| {
            let (ia, ib) = (inside(&a, x, y), inside(&b, x, y));
            na += ia as u64;
            nb += ib as u64;
            both += (ia && ib) as u64;
        });
        let raster_iou = both as f64 / (na + nb - both) as f64;
        let raster_contain = both as f64 / na as f64;
        worst_iou = worst_iou.max((iou(&a, &b).unwrap() - raster_iou).abs());
        worst_contain = worst_contain.max((containment_ratio(&a, &b).unwrap() - raster_contain).abs());
    }

    let door = Entrance::unchecked(presets::DOOR);
    let mut worst_area = 0.0_f64;
    for _ in 0..200 {
        let n = rng.random_range(1..4);
        let occluders: Vec<BBox<f64>> = (0..n)
            .map(|_| BBox::raw(rng.random_range(780.0..1060.0), rng.random_range(200.0..560.0), 70.0, 180.0))
            .collect();
        let margin = rng.random_range(0.0..0.3);
        let eff = effective_entrance(&door, &occluders, margin);
        let dilated: Vec<BBox<f64>> = occluders.iter().map(|o| o.dilate(margin, margin)).collect();
        let mut all = dilated.clone();
        all.push(door.rect);
        let mut count = 0u64;
        raster(&hull_of(&all), |x, y| {
            let in_e = inside(&door.rect, x, y) && !occluders.iter().any(|o| inside(o, x, y));
            let in_ring = occluders.iter().zip(&dilated).any(|(o, d)| inside(d, x, y) && !inside(o, x, y));
            count += (in_e || in_ring) as u64;
        });
        let raster_area = count as f64 * CELL * CELL;
        worst_area = worst_area.max((eff.area() - raster_area).abs() / raster_area);
    }
    let pass = worst_iou <= 0.02 && worst_contain <= 0.02 && worst_area <= 0.02;
    report(
        8,
        "geometry oracle",
        pass,
        format!("max |dIoU| {worst_iou:.4}, max |dcontainment| {worst_contain:.4}, max relative area error {:.3}%", worst_area * 100.0),
    );
}

#[test]
fn c09_gallery_conservation() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut violations = 0;
    let mut steps = 0;
    for _ in 0..500 {
        let mut ledger = OccupancyLedger::new();
        let mut running: i64 = 0;
        let mut frame = 0;
        for id in 1..=rng.random_range(1..60u64) {
            let kind = if running == 0 {
                [EventKind::Entry, EventKind::JustAppeared, EventKind::ReEntry][rng.random_range(0..3)]
            } else {
                EventKind::ALL[rng.random_range(0..4)]
            };
            frame += rng.random_range(1..40);
            let (origin, sink) = match kind {
                EventKind::Entry => (Origin::Scene, Sink::PrivateArea),
                EventKind::Exit => (Origin::PrivateArea, Sink::Scene),
                EventKind::JustAppeared => (Origin::Scene, Sink::Scene),
                EventKind::ReEntry => (Origin::PrivateArea, Sink::PrivateArea),
            };
            let ev = EventRecord {
                track_id: id,
                event: kind,
                origin,
                sink,
                t_enter: frame,
                t_exit: frame + 30,
                enter_seconds: frame as f64 / 20.0,
                exit_seconds: (frame + 30) as f64 / 20.0,
            };
            ledger.apply_event(&ev, 20.0).unwrap();
            running += match kind {
                EventKind::Entry => 1,
                EventKind::Exit => -1,
                _ => 0,
            };
            steps += 1;
            if running < 0 || ledger.occupancy() as i64 != running {
                violations += 1;
            }
        }
    }
    report(9, "gallery conservation", violations == 0, format!("{violations} violations over {steps} events in 500 streams"));
}

#[test]
fn c10_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let noise = NoiseSpec { position_sigma: 2.0, miss_probability: 0.1, false_positives_per_frame: 0.05 };
    let mut script = presets::balanced(5, noise, 11);
    script.camera1 = Some(synth::CameraSpec { homography: presets::OPPOSITE_VIEW });
    std::fs::write(dir.path().join("scene.toml"), script.to_toml()).unwrap();
    let mut cfg = corridor_config();
    cfg.fusion.enabled = true;
    cfg.fusion.homography = Some(presets::OPPOSITE_VIEW);
    cfg.input.script = Some("scene.toml".into());
    std::fs::write(dir.path().join("run.toml"), cfg.to_toml()).unwrap();

    let read_all = |out: &std::path::Path| -> BTreeMap<String, Vec<u8>> {
        ["events.jsonl", "dwell.csv", "tracks.csv", "report.csv", "report.txt"]
            .iter()
            .map(|f| (f.to_string(), std::fs::read(out.join(f)).unwrap()))
            .collect()
    };
    let mut outputs = Vec::new();
    for run in ["a", "b"] {
        let opts = RunOptions { out_dir: Some(dir.path().join(run)), seed: Some(99), ..Default::default() };
        let out = run_from_files(&dir.path().join("run.toml"), &opts).unwrap();
        assert!(!out.events.is_empty());
        outputs.push(read_all(&dir.path().join(run)));
    }
    let same = outputs[0] == outputs[1];
    let events = String::from_utf8_lossy(&outputs[0]["events.jsonl"]).lines().count();
    report(10, "determinism", same, format!("{events} event lines, outputs identical: {same}"));
}

