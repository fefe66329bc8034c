//! Command-line front end.

use crate::ablation::{run_ablation, to_csv};
use crate::appearance::load_embeddings;
use crate::config::TrackerConfig;
use crate::image::RawImage;
use crate::io::{self, SequenceDir, VISDRONE_CLASSES};
use crate::metrics::{aggregate, evaluate_sequence, EvalConfig, EvalRecord};
use crate::par::Execution;
use crate::rng::splitmix64;
use crate::synthetic::{self, ScenarioSpec, PRESET_NAMES};
use crate::tracker::{run_sequence, EmbeddingSource, RunSummary, TrackerOptions};
use clap::{Args, Parser, Subcommand, ValueEnum};
use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use thiserror::Error;

/// Environment variable naming a config file used when `--config` is absent.
pub const CONFIG_ENV: &str = "SFTRACK_CONFIG";

#[derive(Debug, Parser)]
#[command(name = "sftrack", version, about = "Multi-object tracking, evaluation and synthetic sequences")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Track a sequence directory and write MOT-format results.
    Track(TrackArgs),
    /// Score results against ground truth.
    Eval(EvalArgs),
    /// Generate a synthetic sequence.
    Synth(SynthArgs),
    /// Draw result boxes onto copies of the frames.
    Overlay(OverlayArgs),
    /// Run the four-row configuration lattice on a preset.
    Ablate(AblateArgs),
}

#[derive(Debug, Args)]
pub struct TrackArgs {
    #[arg(long)]
    pub seq: PathBuf,
    #[arg(long)]
    pub det: PathBuf,
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub no_mc: bool,
    #[arg(long)]
    pub no_low_init: bool,
    #[arg(long)]
    pub no_traditional: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GtFormat {
    Mot,
    Visdrone,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long)]
    pub res: PathBuf,
    #[arg(long, value_enum, default_value = "mot")]
    pub format: GtFormat,
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, required_unless_present = "spec", conflicts_with = "spec")]
    pub preset: Option<String>,
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct OverlayArgs {
    #[arg(long)]
    pub seq: PathBuf,
    #[arg(long)]
    pub res: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[arg(long)]
    pub preset: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags, unreadable or malformed inputs.
    #[error("{0}")]
    Input(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 2,
            CliError::Internal(_) => 1,
        }
    }
}

fn input(e: impl std::fmt::Display) -> CliError {
    CliError::Input(e.to_string())
}

fn internal(e: impl std::fmt::Display) -> CliError {
    CliError::Internal(e.to_string())
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<(), CliError> {
    match cli.command {
        Command::Track(a) => track(&a, out),
        Command::Eval(a) => eval(&a, out),
        Command::Synth(a) => synth(&a, out),
        Command::Overlay(a) => overlay(&a, out),
        Command::Ablate(a) => ablate(&a, out),
    }
}

fn say(out: &mut dyn Write, text: &str) -> Result<(), CliError> {
    out.write_all(text.as_bytes()).map_err(internal)
}

/// `--config`, then `$SFTRACK_CONFIG`, then built-in defaults.
pub fn resolve_config(path: Option<&Path>) -> Result<TrackerConfig, CliError> {
    let env = std::env::var_os(CONFIG_ENV).filter(|v| !v.is_empty()).map(PathBuf::from);
    match path.map(Path::to_path_buf).or(env) {
        Some(p) => TrackerConfig::load(&p).map_err(|e| CliError::Input(format!("{}: {e}", p.display()))),
        None => Ok(TrackerConfig::default()),
    }
}

fn track(a: &TrackArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let mut cfg = resolve_config(a.config.as_deref())?;
    cfg.mc_enabled &= !a.no_mc;
    cfg.low_init_enabled &= !a.no_low_init;
    cfg.traditional_second_assoc &= !a.no_traditional;
    let seq = SequenceDir::open(&a.seq).map_err(input)?;
    let mut dets = io::read_mot_detections(&a.det).map_err(input)?;
    let mut options = TrackerOptions::default();
    if let Some(p) = &a.embeddings {
        let table = load_embeddings(p).map_err(|e| CliError::Input(format!("{}: {e}", p.display())))?;
        if table.is_empty() {
            log::warn!("{} holds no embeddings; using hand-crafted descriptors", p.display());
        } else {
            let n = io::attach_embeddings(&mut dets, &table);
            log::info!("attached {n} embeddings");
            options.embeddings = EmbeddingSource::Provided;
        }
    }
    let results = run_sequence(&seq, &dets, &cfg, &options).map_err(input)?;
    io::write_results(&a.out, &results).map_err(input)?;
    let s = RunSummary::from_results(&results);
    say(
        out,
        &format!(
            "frames {}  outputs {}  tracks {}\nhigh {}  low {}  matched first {}  matched second {}\n\
             new from high {}  new from low {}  removed {}  motion fallbacks {}\n",
            s.frames,
            s.outputs,
            s.tracks,
            s.n_high,
            s.n_low,
            s.n_matched_first,
            s.n_matched_second,
            s.n_new_high,
            s.n_new_low,
            s.n_removed,
            s.motion_fallbacks
        ),
    )
}

fn frame_range(records: &[EvalRecord]) -> Option<(u32, u32)> {
    let lo = records.iter().map(|r| r.frame).min()?;
    let hi = records.iter().map(|r| r.frame).max()?;
    Some((lo, hi))
}

fn sequence_name(gt: &Path) -> String {
    let stem = gt.file_stem().and_then(|s| s.to_str()).unwrap_or("sequence");
    gt.parent()
        .and_then(|p| p.file_name())
        .and_then(|s| s.to_str())
        .filter(|s| !s.is_empty() && *s != "gt")
        .unwrap_or(stem)
        .to_string()
}

fn eval(a: &EvalArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let (mut gt, cfg) = match a.format {
        GtFormat::Mot => (io::read_mot_gt(&a.gt).map_err(input)?, EvalConfig::default()),
        GtFormat::Visdrone => (
            io::read_visdrone_gt(&a.gt, &VISDRONE_CLASSES).map_err(input)?,
            EvalConfig { classes: Some(VISDRONE_CLASSES.to_vec()), ..EvalConfig::default() },
        ),
    };
    let mut res = io::read_results(&a.res).map_err(input)?;
    if let (Some(g), Some(r)) = (frame_range(&gt), frame_range(&res)) {
        if g != r {
            let (lo, hi) = (g.0.max(r.0), g.1.min(r.1));
            log::warn!("frame ranges differ (gt {}-{}, results {}-{}); evaluating frames {lo}-{hi}", g.0, g.1, r.0, r.1);
            gt.retain(|x| (lo..=hi).contains(&x.frame));
            res.retain(|x| (lo..=hi).contains(&x.frame));
        }
    }
    let metrics = evaluate_sequence(&gt, &res, &cfg).map_err(input)?;
    let report = aggregate(BTreeMap::from([(sequence_name(&a.gt), metrics)])).map_err(internal)?;
    say(out, &report.table())?;
    if let Some(p) = &a.json {
        io::write_bytes(p, report.to_json().as_bytes()).map_err(input)?;
    }
    Ok(())
}

fn unknown_preset(name: &str) -> CliError {
    CliError::Input(format!("unknown preset `{name}` (expected one of {})", PRESET_NAMES.join(", ")))
}

fn synth(a: &SynthArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let spec = match (&a.preset, &a.spec) {
        (Some(name), _) => synthetic::preset(name).ok_or_else(|| unknown_preset(name))?,
        (None, Some(p)) => ScenarioSpec::load(p).map_err(|e| CliError::Input(format!("{}: {e}", p.display())))?,
        (None, None) => return Err(CliError::Input("one of --preset or --spec is required".into())),
    };
    let seq = synthetic::generate(&spec, Execution::Parallel);
    synthetic::write_sequence(&seq, &a.out, Execution::Parallel).map_err(input)?;
    let n_det: usize = seq.detections.values().map(Vec::len).sum();
    let n_gt: usize = seq.ground_truth.iter().map(Vec::len).sum();
    say(out, &format!("{}: {} frames, {} gt boxes, {} detections -> {}\n", spec.name, spec.frames, n_gt, n_det, a.out.display()))
}

/// Outline color for a track: hue from a hash of the id, fixed saturation
/// 0.85 and value 0.95.
pub fn track_color(track_id: u64) -> [u8; 3] {
    let h = (splitmix64(track_id) >> 11) as f64 / (1u64 << 53) as f64 * 6.0;
    let (s, v) = (0.85, 0.95);
    let sector = h.floor();
    let f = h - sector;
    let (p, q, t) = (v * (1.0 - s), v * (1.0 - s * f), v * (1.0 - s * (1.0 - f)));
    let (r, g, b) = match sector as u32 {
        0 => (v, t, p),
        1 => (q, v, p),
        2 => (p, v, t),
        3 => (p, q, v),
        4 => (t, p, v),
        _ => (v, p, q),
    };
    [r, g, b].map(|c| (c * 255.0).round() as u8)
}

/// Recolors the two-pixel-wide inner border of the pixels whose centers lie
/// inside `bbox`.
pub fn draw_outline(img: &mut RawImage, bbox: &crate::geometry::BoundingBox, color: [u8; 3]) {
    let span = |lo: f64, hi: f64, n: usize| {
        let a = (lo - 0.5).ceil().clamp(0.0, n as f64) as usize;
        let b = (hi - 0.5).ceil().clamp(0.0, n as f64) as usize;
        (a, b)
    };
    let (x0, x1) = span(bbox.left, bbox.right(), img.width());
    let (y0, y1) = span(bbox.top, bbox.bottom(), img.height());
    for y in y0..y1 {
        for x in x0..x1 {
            if x < x0 + 2 || x + 2 >= x1 || y < y0 + 2 || y + 2 >= y1 {
                img.set_pixel(x, y, color);
            }
        }
    }
}

fn overlay(a: &OverlayArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let seq = SequenceDir::open(&a.seq).map_err(input)?;
    let res = io::read_results(&a.res).map_err(input)?;
    let mut by_frame: BTreeMap<u32, Vec<&EvalRecord>> = BTreeMap::new();
    for r in &res {
        by_frame.entry(r.frame).or_default().push(r);
    }
    if let Some((&f, _)) = by_frame.range(seq.manifest.seq_length + 1..).next() {
        return Err(CliError::Input(format!("results reference frame {f} beyond the sequence")));
    }
    std::fs::create_dir_all(&a.out).map_err(|e| CliError::Input(format!("{}: {e}", a.out.display())))?;
    for k in 1..=seq.manifest.seq_length {
        let mut img = seq.read_frame(k).map_err(input)?;
        for r in by_frame.get(&k).into_iter().flatten() {
            draw_outline(&mut img, &r.bbox, track_color(r.id as u64));
        }
        io::write_ppm(&a.out.join(format!("{k:06}.ppm")), &img).map_err(input)?;
    }
    say(out, &format!("{} frames, {} boxes -> {}\n", seq.manifest.seq_length, res.len(), a.out.display()))
}

fn ablate(a: &AblateArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let spec = synthetic::preset(&a.preset).ok_or_else(|| unknown_preset(&a.preset))?;
    let base = resolve_config(None)?;
    let seq = synthetic::generate(&spec, Execution::Parallel);
    let results = run_ablation(&seq, &base, Execution::Parallel).map_err(internal)?;
    let csv = to_csv(&results);
    io::write_bytes(&a.out, csv.as_bytes()).map_err(input)?;
    say(out, &csv)
}
