//! `devnav`: trajectory evaluation, dynamic-object masking, planning and
//! simulation from the command line.
//!
//! Exit codes: 0 success, 1 domain or I/O error, 2 usage error. Failures
//! print one JSON object on standard error.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "devnav",
    version,
    about = "Dynamic-scene SLAM evaluation and navigation toolkit"
)]
pub struct Cli {
    /// JSON config file; defaults to the path in DEVNAV_CONFIG.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Where to write the run manifest.
    #[arg(long, global = true)]
    pub manifest: Option<PathBuf>,
    /// Emit JSON instead of tables.
    #[arg(long, global = true)]
    pub json: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Absolute trajectory error after rigid alignment.
    EvalAte(EvalAteArgs),
    /// Relative pose error over a fixed frame offset.
    EvalRpe(EvalRpeArgs),
    /// Flag moving detection boxes and write per-frame masks.
    DetectDynamic(DetectArgs),
    /// Rebuild masks from a verdict log and detections.
    Mask(MaskArgs),
    /// A* path on an occupancy grid.
    Plan(PlanArgs),
    /// Run navigation episodes in a scene.
    Simulate(SimulateArgs),
    /// Generate a random navigation scene.
    GenScene(GenSceneArgs),
    /// Generate a synthetic image sequence with detections.
    GenFixtures(GenFixturesArgs),
}

#[derive(Debug, Args)]
pub struct TrajectoryPair {
    /// Ground-truth trajectory, TUM format.
    #[arg(long)]
    pub gt: PathBuf,
    /// Estimated trajectory, TUM format.
    #[arg(long)]
    pub est: PathBuf,
    /// Association tolerance in seconds.
    #[arg(long)]
    pub max_diff: Option<f64>,
    /// Report file; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalAteArgs {
    #[command(flatten)]
    pub pair: TrajectoryPair,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum RpeFormArg {
    Canonical,
    Printed,
}

#[derive(Debug, Args)]
pub struct EvalRpeArgs {
    #[command(flatten)]
    pub pair: TrajectoryPair,
    /// Frame offset.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..), conflicts_with = "delta_seconds")]
    pub delta: Option<u64>,
    /// Frame offset nearest to this many seconds.
    #[arg(long)]
    pub delta_seconds: Option<f64>,
    #[arg(long, value_enum, default_value = "canonical")]
    pub form: RpeFormArg,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModelArg {
    Translation,
    Affine,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    Compensated,
    Raw,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    /// Image index (`timestamp path` lines, paths relative to the index).
    #[arg(long)]
    pub images: PathBuf,
    /// Detections, JSON lines.
    #[arg(long)]
    pub detections: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Pixels.
    #[arg(long)]
    pub threshold1: Option<f64>,
    #[arg(long)]
    pub threshold2_fraction: Option<f64>,
    #[arg(long)]
    pub threshold2_min: Option<usize>,
    #[arg(long)]
    pub max_corners: Option<usize>,
    #[arg(long)]
    pub pyramid_levels: Option<usize>,
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long, value_enum)]
    pub model: Option<ModelArg>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    /// Comma-separated target classes.
    #[arg(long, value_delimiter = ',')]
    pub classes: Option<Vec<String>>,
    /// Image/detection association tolerance in seconds.
    #[arg(long)]
    pub max_diff: Option<f64>,
}

#[derive(Debug, Args)]
pub struct MaskArgs {
    /// Verdict log written by detect-dynamic.
    #[arg(long)]
    pub verdicts: PathBuf,
    #[arg(long)]
    pub detections: PathBuf,
    #[arg(long)]
    pub width: usize,
    #[arg(long)]
    pub height: usize,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub max_diff: Option<f64>,
}

#[derive(Debug, Args)]
pub struct PlanArgs {
    /// Grid file: text (`cols rows resolution` header) or PGM.
    #[arg(long)]
    pub grid: PathBuf,
    /// Start as `col,row`, or `x,y` meters with --world.
    #[arg(long, value_parser = parse_pair)]
    pub start: (f64, f64),
    #[arg(long, value_parser = parse_pair)]
    pub goal: (f64, f64),
    /// Interpret endpoints as world coordinates in meters.
    #[arg(long)]
    pub world: bool,
    /// Obstacle inflation radius in meters.
    #[arg(long)]
    pub inflate: Option<f64>,
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Meters per cell for PGM grids.
    #[arg(long)]
    pub resolution: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Scene JSON.
    #[arg(long)]
    pub scene: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Episodes use seeds seed, seed+1, ...
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    pub episodes: u64,
    /// Episode log, JSON lines.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write the static occupancy raster as PGM.
    #[arg(long)]
    pub dump_grid: Option<PathBuf>,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub v_max: Option<f64>,
    #[arg(long)]
    pub w_max: Option<f64>,
    #[arg(long)]
    pub max_steps: Option<usize>,
    #[arg(long)]
    pub robot_radius: Option<f64>,
    #[arg(long)]
    pub sectors: Option<usize>,
    #[arg(long)]
    pub tau_low: Option<f64>,
    #[arg(long)]
    pub tau_high: Option<f64>,
}

#[derive(Debug, Args)]
pub struct GenSceneArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub obstacles: Option<usize>,
    #[arg(long)]
    pub movers: Option<usize>,
    /// Minimum goal-to-obstacle clearance in meters.
    #[arg(long)]
    pub clearance: Option<f64>,
    #[arg(long)]
    pub width: Option<f64>,
    #[arg(long)]
    pub height: Option<f64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FixtureKind {
    Walking,
    Sitting,
}

#[derive(Debug, Args)]
pub struct GenFixturesArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "walking")]
    pub kind: FixtureKind,
    #[arg(long, default_value_t = 640)]
    pub width: usize,
    #[arg(long, default_value_t = 480)]
    pub height: usize,
    #[arg(long, default_value_t = 30, value_parser = clap::value_parser!(u64).range(1..))]
    pub frames: u64,
}

fn parse_pair(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or("expected `a,b`")?;
    let a: f64 = a.trim().parse().map_err(|e| format!("{e}"))?;
    let b: f64 = b.trim().parse().map_err(|e| format!("{e}"))?;
    Ok((a, b))
}

fn error_line(kind: &str, err: &anyhow::Error) -> String {
    serde_json::json!({
        "error": kind,
        "kind": commands::error_kind(err),
        "message": format!("{err:#}"),
    })
    .to_string()
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let _ = e.print();
            let rendered = e.to_string();
            let msg = rendered
                .lines()
                .next()
                .unwrap_or("usage error")
                .trim_start_matches("error: ");
            eprintln!(
                "{}",
                serde_json::json!({"error": "usage", "kind": "Usage", "message": msg})
            );
            return ExitCode::from(2);
        }
    };
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) if err.chain().any(|c| c.is::<commands::UsageError>()) => {
            eprintln!("{}", error_line("usage", &err));
            ExitCode::from(2)
        }
        Err(err) => {
            eprintln!("{}", error_line("domain", &err));
            ExitCode::from(1)
        }
    }
}
