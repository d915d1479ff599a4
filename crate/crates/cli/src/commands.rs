use std::fmt::Write as _;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use devnav_core::dataset::{
    associate, parse_detections, parse_image_index, parse_trajectory, read_gray_image, write_detections,
    write_gray_image, write_image_index, write_mask, DatasetError, ImageIndexEntry, Trajectory,
};
use devnav_core::dynamic::{
    build_mask, process_sequence, BoxVerdict, DecisionMode, DetectError, DynamicVerdict, MotionModelKind, VerdictRecord,
};
use devnav_core::fixtures::SequenceSpec;
use devnav_core::flow::FlowError;
use devnav_core::geometry::GeometryError;
use devnav_core::metrics::{ate, delta_for_seconds, rpe_poses, MetricSummary, MetricsError, RpeForm};
use devnav_core::planning::{astar, Cell, OccupancyGrid, PlanningError};
use devnav_core::simulation::{generate_scene, rasterize_static, run_episode, EpisodeResult, SimError, World};
use devnav_core::{FrameDetections, GrayImage};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{self, FileConfig};
use crate::output::{manifest_path, Run};
use crate::{
    Cli, Command, DetectArgs, EvalAteArgs, EvalRpeArgs, FixtureKind, GenFixturesArgs, GenSceneArgs, MaskArgs, ModeArg,
    ModelArg, PlanArgs, RpeFormArg, SimulateArgs, TrajectoryPair,
};

/// Invalid arguments detected after parsing.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    anyhow!(UsageError(msg.into()))
}

fn variant_name<E: std::fmt::Debug>(e: &E) -> String {
    let dbg = format!("{e:?}");
    dbg.split(|c: char| !c.is_alphanumeric())
        .next()
        .unwrap_or("Error")
        .to_string()
}

/// Name of the innermost library error variant, e.g. `NoPath`.
pub fn error_kind(err: &anyhow::Error) -> String {
    for cause in err.chain() {
        let kind = if let Some(e) = cause.downcast_ref::<SimError>() {
            match e {
                SimError::Planning(p) => variant_name(p),
                other => variant_name(other),
            }
        } else if let Some(e) = cause.downcast_ref::<MetricsError>() {
            match e {
                MetricsError::Geometry(g) => variant_name(g),
                other => variant_name(other),
            }
        } else if let Some(e) = cause.downcast_ref::<DetectError>() {
            variant_name(e)
        } else if let Some(e) = cause.downcast_ref::<PlanningError>() {
            variant_name(e)
        } else if let Some(e) = cause.downcast_ref::<GeometryError>() {
            variant_name(e)
        } else if let Some(e) = cause.downcast_ref::<DatasetError>() {
            variant_name(e)
        } else if let Some(e) = cause.downcast_ref::<FlowError>() {
            variant_name(e)
        } else if cause.is::<UsageError>() {
            "Usage".to_string()
        } else if cause.is::<std::io::Error>() {
            "Io".to_string()
        } else {
            continue;
        };
        return kind;
    }
    "Error".to_string()
}

pub fn run(cli: &Cli) -> Result<()> {
    let mut cfg = config::load(cli.config.as_deref()).map_err(|e| usage(format!("{e:#}")))?;
    match &cli.command {
        Command::EvalAte(a) => eval_ate(cli, &mut cfg, a),
        Command::EvalRpe(a) => eval_rpe(cli, &mut cfg, a),
        Command::DetectDynamic(a) => detect_dynamic(cli, &mut cfg, a),
        Command::Mask(a) => mask(cli, &mut cfg, a),
        Command::Plan(a) => plan(cli, &mut cfg, a),
        Command::Simulate(a) => simulate(cli, &mut cfg, a),
        Command::GenScene(a) => gen_scene(cli, &mut cfg, a),
        Command::GenFixtures(a) => gen_fixtures(cli, &mut cfg, a),
    }
}

fn snapshot(cfg: &FileConfig) -> serde_json::Value {
    serde_json::to_value(cfg).expect("config serializes")
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serializes");
    s.push('\n');
    s
}

fn to_jsonl<T: Serialize>(items: impl IntoIterator<Item = T>) -> String {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(&item).expect("record serializes"));
        out.push('\n');
    }
    out
}

/// Report to `out` when given, otherwise to standard output.
fn emit(run: &mut Run, out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => run.write(p, text.as_bytes()),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn summary_row(out: &mut String, label: &str, s: &MetricSummary) {
    let _ = writeln!(
        out,
        "{label:<16} {:>12.6} {:>12.6} {:>12.6} {:>8}",
        s.rmse, s.mean, s.median, s.count
    );
}

fn summary_header() -> String {
    format!(
        "{:<16} {:>12} {:>12} {:>12} {:>8}\n",
        "metric", "rmse", "mean", "median", "count"
    )
}

fn load_pair(run: &mut Run, pair: &TrajectoryPair, max_diff: f64) -> Result<(Trajectory, Trajectory)> {
    let gt = parse_trajectory(&run.read_text(&pair.gt)?).with_context(|| format!("{}", pair.gt.display()))?;
    let est = parse_trajectory(&run.read_text(&pair.est)?).with_context(|| format!("{}", pair.est.display()))?;
    let matches = associate(&gt.timestamps(), &est.timestamps(), max_diff);
    if matches.is_empty() {
        return Err(MetricsError::EmptySamples).context("no associated timestamps");
    }
    let (gi, ei): (Vec<usize>, Vec<usize>) = matches.into_iter().unzip();
    Ok((gt.select(gi), est.select(ei)))
}

fn eval_ate(cli: &Cli, cfg: &mut FileConfig, a: &EvalAteArgs) -> Result<()> {
    if let Some(m) = a.pair.max_diff {
        cfg.eval.max_diff = m;
    }
    let mut run = Run::new("eval-ate", snapshot(cfg), None);
    let (gt, est) = load_pair(&mut run, &a.pair, cfg.eval.max_diff)?;
    let report = ate(&gt, &est)?;
    let text = if cli.json {
        to_json(&report)
    } else {
        let mut s = summary_header();
        summary_row(&mut s, "ATE [m]", &report.translational);
        s
    };
    emit(&mut run, a.pair.out.as_deref(), &text)?;
    run.finish(manifest_path(cli.manifest.as_deref(), a.pair.out.as_deref(), false))
}

fn eval_rpe(cli: &Cli, cfg: &mut FileConfig, a: &EvalRpeArgs) -> Result<()> {
    if let Some(m) = a.pair.max_diff {
        cfg.eval.max_diff = m;
    }
    if let Some(d) = a.delta {
        cfg.eval.delta = d as usize;
    }
    let mut run = Run::new("eval-rpe", serde_json::Value::Null, None);
    let (gt, est) = load_pair(&mut run, &a.pair, cfg.eval.max_diff)?;
    if let Some(sec) = a.delta_seconds {
        cfg.eval.delta =
            delta_for_seconds(&gt.timestamps(), sec).ok_or_else(|| usage("--delta-seconds needs a positive value"))?;
    }
    if cfg.eval.delta == 0 {
        return Err(usage("delta must be at least 1"));
    }
    run.manifest.config = snapshot(cfg);
    let form = match a.form {
        RpeFormArg::Canonical => RpeForm::Canonical,
        RpeFormArg::Printed => RpeForm::Printed,
    };
    let report = rpe_poses(&gt.poses(), &est.poses(), cfg.eval.delta, form)?;
    let text = if cli.json {
        to_json(&report)
    } else {
        let mut s = format!("delta {}\n", report.delta);
        s.push_str(&summary_header());
        summary_row(&mut s, "RPE trans [m]", &report.translational);
        summary_row(&mut s, "RPE rot [deg]", &report.rotational);
        s
    };
    emit(&mut run, a.pair.out.as_deref(), &text)?;
    run.finish(manifest_path(cli.manifest.as_deref(), a.pair.out.as_deref(), false))
}

fn apply_detect_flags(cfg: &mut FileConfig, a: &DetectArgs) {
    let d = &mut cfg.detect;
    if let Some(v) = a.threshold1 {
        d.threshold1 = v;
    }
    if let Some(v) = a.threshold2_fraction {
        d.threshold2.fraction = v;
    }
    if let Some(v) = a.threshold2_min {
        d.threshold2.absolute_min = v;
    }
    if let Some(v) = a.max_corners {
        d.flow.max_corners = v;
    }
    if let Some(v) = a.pyramid_levels {
        d.flow.pyramid_levels = v;
    }
    if let Some(v) = a.window {
        d.flow.window = v;
    }
    if let Some(m) = a.model {
        d.model = match m {
            ModelArg::Translation => MotionModelKind::Translation,
            ModelArg::Affine => MotionModelKind::Affine,
        };
    }
    if let Some(m) = a.mode {
        d.mode = match m {
            ModeArg::Compensated => DecisionMode::Compensated,
            ModeArg::Raw => DecisionMode::RawDisplacement,
        };
    }
    if let Some(c) = &a.classes {
        d.target_classes = c.clone();
    }
    if let Some(v) = a.max_diff {
        cfg.eval.max_diff = v;
    }
}

fn frame_name(k: usize) -> String {
    format!("{k:06}.pgm")
}

fn detect_dynamic(cli: &Cli, cfg: &mut FileConfig, a: &DetectArgs) -> Result<()> {
    apply_detect_flags(cfg, a);
    if cfg.detect.threshold1.is_nan()
        || cfg.detect.threshold1 < 0.0
        || !(0.0..=1.0).contains(&cfg.detect.threshold2.fraction)
    {
        return Err(usage("threshold1 must be ≥ 0 and threshold2 fraction in [0, 1]"));
    }
    cfg.detect.flow.validate().map_err(|e| usage(e.to_string()))?;
    let mut run = Run::new("detect-dynamic", snapshot(cfg), None);

    let index = parse_image_index(&run.read_text(&a.images)?)?;
    let detections = parse_detections(&run.read_text(&a.detections)?)?;
    let base = a.images.parent().unwrap_or(Path::new("")).to_path_buf();
    let pairs = associate(
        &index.iter().map(|e| e.timestamp).collect::<Vec<_>>(),
        &detections.iter().map(|d| d.timestamp).collect::<Vec<_>>(),
        cfg.eval.max_diff,
    );
    if pairs.is_empty() {
        bail!("no image matches a detection timestamp");
    }
    let mut frames: Vec<GrayImage> = Vec::with_capacity(pairs.len());
    let mut dets: Vec<FrameDetections> = Vec::with_capacity(pairs.len());
    for &(i, d) in &pairs {
        let bytes = run.read(&base.join(&index[i].path))?;
        let img = read_gray_image(&bytes).with_context(|| index[i].path.clone())?;
        let det = detections[d].clone();
        if let Some(prev) = frames.first() {
            if (prev.width(), prev.height()) != (img.width(), img.height()) {
                bail!("{} has a different size from the first frame", index[i].path);
            }
        }
        frames.push(img);
        dets.push(det);
    }
    let (w, h) = (frames[0].width(), frames[0].height());
    for d in &mut dets {
        d.clamp_to(w, h);
    }

    let results = process_sequence(&frames, &dets, &cfg.detect)?;
    let records: Vec<VerdictRecord> = results.iter().map(|r| r.record()).collect();
    let mut mask_index = Vec::with_capacity(results.len());
    for (k, r) in results.iter().enumerate() {
        let name = format!("masks/{}", frame_name(k));
        run.write(&a.out.join(&name), &write_mask(&r.mask))?;
        mask_index.push(ImageIndexEntry {
            timestamp: r.timestamp,
            path: name,
        });
    }
    run.write(&a.out.join("masks.txt"), write_image_index(&mask_index).as_bytes())?;
    run.write(&a.out.join("verdicts.jsonl"), to_jsonl(&records).as_bytes())?;

    if cli.json {
        print!("{}", to_jsonl(&records));
    } else {
        println!("{:>6} {:>14} {:>6} {:>7}", "frame", "t", "boxes", "moving");
        for (k, r) in records.iter().enumerate() {
            let moving = r.boxes.iter().filter(|b| b.moving).count();
            println!("{k:>6} {:>14.6} {:>6} {moving:>7}", r.t, r.boxes.len());
        }
    }
    run.finish(manifest_path(cli.manifest.as_deref(), Some(&a.out), true))
}

fn mask(cli: &Cli, cfg: &mut FileConfig, a: &MaskArgs) -> Result<()> {
    if let Some(v) = a.max_diff {
        cfg.eval.max_diff = v;
    }
    if a.width == 0 || a.height == 0 {
        return Err(usage("mask size must be positive"));
    }
    let mut run = Run::new("mask", snapshot(cfg), None);
    let records: Vec<VerdictRecord> = run
        .read_text(&a.verdicts)?
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).with_context(|| format!("verdict line {}", i + 1)))
        .collect::<Result<_>>()?;
    let mut detections = parse_detections(&run.read_text(&a.detections)?)?;
    for d in &mut detections {
        d.clamp_to(a.width, a.height);
    }
    let pairs = associate(
        &records.iter().map(|r| r.t).collect::<Vec<_>>(),
        &detections.iter().map(|d| d.timestamp).collect::<Vec<_>>(),
        cfg.eval.max_diff,
    );
    let mut index = Vec::with_capacity(pairs.len());
    let mut total = 0;
    for (k, &(ri, di)) in pairs.iter().enumerate() {
        let det = &detections[di];
        let mut boxes = Vec::new();
        for b in &records[ri].boxes {
            let bb = det
                .boxes
                .get(b.idx)
                .ok_or_else(|| anyhow!(DatasetError::Format(format!("box index {} out of range", b.idx))))?;
            boxes.push(bb.clone());
        }
        let verdict = DynamicVerdict {
            per_point: Vec::new(),
            per_box: records[ri]
                .boxes
                .iter()
                .enumerate()
                .map(|(index, b)| BoxVerdict {
                    index,
                    dynamic_count: b.count,
                    total_count: b.total,
                    is_moving: b.moving,
                    undecidable: false,
                })
                .collect(),
        };
        let m = build_mask(a.width, a.height, &verdict, &boxes);
        total += m.count();
        let name = frame_name(k);
        run.write(&a.out.join(&name), &write_mask(&m))?;
        index.push(ImageIndexEntry {
            timestamp: records[ri].t,
            path: name,
        });
    }
    run.write(&a.out.join("masks.txt"), write_image_index(&index).as_bytes())?;
    if cli.json {
        println!("{}", serde_json::json!({"frames": pairs.len(), "masked_pixels": total}));
    } else {
        println!("frames {}  masked pixels {}", pairs.len(), total);
    }
    run.finish(manifest_path(cli.manifest.as_deref(), Some(&a.out), true))
}

#[derive(Serialize)]
struct PlanReport {
    start: Cell,
    goal: Cell,
    cost: f64,
    cells: Vec<Cell>,
    world: Vec<(f64, f64)>,
}

fn plan(cli: &Cli, cfg: &mut FileConfig, a: &PlanArgs) -> Result<()> {
    if let Some(v) = a.inflate {
        cfg.plan.inflate = v;
    }
    if let Some(v) = a.threshold {
        cfg.plan.occupied_threshold = v;
    }
    if let Some(v) = a.resolution {
        cfg.plan.resolution = v;
    }
    let mut run = Run::new("plan", snapshot(cfg), None);
    let bytes = run.read(&a.grid)?;
    let grid = if bytes.starts_with(b"P5") {
        OccupancyGrid::from_image(&read_gray_image(&bytes)?, cfg.plan.resolution)?
    } else {
        OccupancyGrid::parse_text(std::str::from_utf8(&bytes).context("grid file is not UTF-8")?)?
    };
    let grid = if cfg.plan.inflate > 0.0 {
        grid.inflate(cfg.plan.inflate, cfg.plan.occupied_threshold)
    } else {
        grid
    };
    let to_cell = |p: (f64, f64)| -> Result<Cell> {
        if a.world {
            grid.world_to_cell(p.0, p.1)
                .ok_or_else(|| anyhow!(PlanningError::InvalidEndpoint(format!("{p:?} is off the grid"))))
        } else if p.0 < 0.0 || p.1 < 0.0 || p.0.fract() != 0.0 || p.1.fract() != 0.0 {
            Err(usage(format!(
                "cell coordinates must be non-negative integers, got {p:?}"
            )))
        } else {
            Ok((p.0 as usize, p.1 as usize))
        }
    };
    let (start, goal) = (to_cell(a.start)?, to_cell(a.goal)?);
    let path = astar(&grid, start, goal, cfg.plan.occupied_threshold)?;
    let report = PlanReport {
        start,
        goal,
        cost: path.cost,
        world: path.cells.iter().map(|&c| grid.cell_center(c)).collect(),
        cells: path.cells,
    };
    let text = if cli.json {
        to_json(&report)
    } else {
        let mut s = format!("cost {:.6} m  cells {}\n", report.cost, report.cells.len());
        for (c, w) in report.cells.iter().zip(&report.world) {
            let _ = writeln!(s, "{:>5} {:>5} {:>10.3} {:>10.3}", c.0, c.1, w.0, w.1);
        }
        s
    };
    emit(&mut run, a.out.as_deref(), &text)?;
    run.finish(manifest_path(cli.manifest.as_deref(), a.out.as_deref(), false))
}

#[derive(Serialize)]
struct EpisodeSummary {
    episode: usize,
    seed: u64,
    #[serde(flatten)]
    result: EpisodeResult,
}

fn simulate(cli: &Cli, cfg: &mut FileConfig, a: &SimulateArgs) -> Result<()> {
    let s = &mut cfg.sim;
    if let Some(v) = a.dt {
        s.dt = v;
    }
    if let Some(v) = a.v_max {
        s.v_max = v;
    }
    if let Some(v) = a.w_max {
        s.w_max = v;
    }
    if let Some(v) = a.max_steps {
        s.max_steps = v;
    }
    if let Some(v) = a.robot_radius {
        s.robot_radius = v;
    }
    if let Some(v) = a.sectors {
        s.vfh.sectors = v;
    }
    if let Some(v) = a.tau_low {
        s.vfh.tau_low = v;
    }
    if let Some(v) = a.tau_high {
        s.vfh.tau_high = v;
    }
    s.validate().map_err(|e| usage(e.to_string()))?;
    let mut run = Run::new("simulate", snapshot(cfg), Some(a.seed));
    let world: World =
        serde_json::from_str(&run.read_text(&a.scene)?).map_err(|e| anyhow!(SimError::InvalidWorld(e.to_string())))?;
    world.validate(cfg.sim.robot_radius)?;

    let seeds: Vec<u64> = (0..a.episodes).map(|k| a.seed.wrapping_add(k)).collect();
    let episodes = seeds
        .par_iter()
        .map(|&seed| run_episode(&world, &cfg.sim, seed))
        .collect::<Result<Vec<_>, _>>()?;

    let mut log = String::new();
    let mut summaries = Vec::with_capacity(episodes.len());
    for (k, ((result, steps), &seed)) in episodes.into_iter().zip(&seeds).enumerate() {
        log.push_str(&to_jsonl(&steps));
        let summary = EpisodeSummary {
            episode: k,
            seed,
            result,
        };
        log.push_str(&serde_json::to_string(&serde_json::json!({ "summary": summary }))?);
        log.push('\n');
        summaries.push(summary);
    }
    if let Some(out) = &a.out {
        run.write(out, log.as_bytes())?;
    }
    if let Some(p) = &a.dump_grid {
        let grid = rasterize_static(&world, cfg.sim.resolution)?;
        run.write(p, &write_gray_image(&grid.to_image()))?;
    }
    if cli.json {
        print!("{}", to_json(&summaries));
    } else {
        println!(
            "{:>7} {:>20} {:>9} {:>6} {:>9} {:>9} {:>7}",
            "episode", "seed", "outcome", "steps", "path [m]", "min clr", "replans"
        );
        for s in &summaries {
            let r = &s.result;
            println!(
                "{:>7} {:>20} {:>9} {:>6} {:>9.3} {:>9.3} {:>7}",
                s.episode,
                s.seed,
                format!("{:?}", r.outcome).to_lowercase(),
                r.steps,
                r.path_length,
                r.min_clearance,
                r.replans
            );
        }
        let reached = summaries
            .iter()
            .filter(|s| s.result.outcome == devnav_core::simulation::Outcome::Reached)
            .count();
        println!("reached {reached}/{}", summaries.len());
    }
    run.finish(manifest_path(cli.manifest.as_deref(), a.out.as_deref(), false))
}

fn gen_scene(cli: &Cli, cfg: &mut FileConfig, a: &GenSceneArgs) -> Result<()> {
    let p = &mut cfg.scene;
    if let Some(v) = a.obstacles {
        p.n_obstacles = v;
    }
    if let Some(v) = a.movers {
        p.n_movers = v;
    }
    if let Some(v) = a.clearance {
        p.min_goal_clearance = v;
    }
    if let Some(v) = a.width {
        p.bounds.0 = v;
    }
    if let Some(v) = a.height {
        p.bounds.1 = v;
    }
    let mut run = Run::new("gen-scene", snapshot(cfg), Some(a.seed));
    let world = generate_scene(a.seed, &cfg.scene)?;
    run.write(&a.out, to_json(&world).as_bytes())?;
    if cli.json {
        print!("{}", to_json(&world));
    } else {
        println!(
            "scene {}  obstacles {}  movers {}  goal ({:.3}, {:.3})",
            a.out.display(),
            world.static_obstacles.len(),
            world.movers.len(),
            world.goal.0,
            world.goal.1
        );
    }
    run.finish(manifest_path(cli.manifest.as_deref(), Some(&a.out), false))
}

#[derive(Serialize)]
struct FixtureTruth<'a> {
    spec: &'a SequenceSpec,
    moving: Vec<bool>,
}

fn gen_fixtures(cli: &Cli, cfg: &mut FileConfig, a: &GenFixturesArgs) -> Result<()> {
    if a.width < 32 || a.height < 32 {
        return Err(usage("fixture frames must be at least 32x32"));
    }
    let frames = a.frames as usize;
    let spec = match a.kind {
        FixtureKind::Walking => SequenceSpec::walking(a.seed, a.width, a.height, frames),
        FixtureKind::Sitting => SequenceSpec::sitting(a.seed, a.width, a.height, frames),
    };
    let mut run = Run::new("gen-fixtures", snapshot(cfg), Some(a.seed));
    let images: Vec<Vec<u8>> = (0..frames)
        .into_par_iter()
        .map(|k| write_gray_image(&spec.render_frame(k)))
        .collect();
    let mut index = Vec::with_capacity(frames);
    for (k, bytes) in images.iter().enumerate() {
        let name = format!("rgb/{}", frame_name(k));
        run.write(&a.out.join(&name), bytes)?;
        index.push(ImageIndexEntry {
            timestamp: spec.timestamp(k),
            path: name,
        });
    }
    let dets: Vec<FrameDetections> = (0..frames).map(|k| spec.detections(k)).collect();
    run.write(&a.out.join("rgb.txt"), write_image_index(&index).as_bytes())?;
    run.write(&a.out.join("detections.jsonl"), write_detections(&dets).as_bytes())?;
    let truth = FixtureTruth {
        spec: &spec,
        moving: spec.moving_flags(),
    };
    run.write(&a.out.join("truth.json"), to_json(&truth).as_bytes())?;
    if cli.json {
        println!("{}", serde_json::json!({"frames": frames, "out": a.out}));
    } else {
        println!("wrote {frames} frames to {}", a.out.display());
    }
    run.finish(manifest_path(cli.manifest.as_deref(), Some(&a.out), true))
}
