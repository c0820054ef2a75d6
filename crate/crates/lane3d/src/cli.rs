//! Command line: evaluation, frame transforms, anchor codec, loss, fixture
//! generation and occlusion labeling.
//!
//! Exit codes: 0 on success (including `--help`/`--version`), 1 on usage
//! errors, 2 on data errors. Diagnostics go to the error stream.

use std::ffi::OsString;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use lane3d_core::anchor::{decode, encode, SkipReason};
use lane3d_core::fixtures::{
    finalize_ground_truth, generate_lanes, generate_scene_with_depth, label_occlusion, perturb_predictions, BoxOccluder,
    CameraRanges, DepthKind, NoiseConfig, OcclusionLabel, ProbModel, RoadSpec, SceneFixture,
};
use lane3d_core::geometry::{ego_to_topview, topview_to_ego};
use lane3d_core::loss::loss;
use lane3d_core::matcher::match_frame;
use lane3d_core::metrics::{aggregate, tally_frame};
use lane3d_core::{EgoPoint, EvalFrame, EvalReport, Lane3D, LaneCategory, LossBreakdown, MatchReport, TopViewPoint};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ConfigError, Settings};
use crate::jsonl::{read_jsonl, to_precise_line, write_jsonl, FieldError, FrameRecord, JsonlError};
use crate::raster_file::{read_raster, write_raster, RasterFileError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {source}")]
    Jsonl { path: PathBuf, source: JsonlError },
    #[error("{path}: {source}")]
    Raster { path: PathBuf, source: RasterFileError },
    #[error("{0}")]
    Data(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) | Self::Config(ConfigError::UnknownKey(_) | ConfigError::BadOverride(_)) => EXIT_USAGE,
            _ => EXIT_DATA,
        }
    }
}

type Result<T, E = CliError> = std::result::Result<T, E>;

#[derive(Debug, Parser)]
#[command(name = "lane3d", version, about = "Monocular 3D lane geometry: evaluation, anchors, loss and synthetic fixtures")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Match predictions against ground truth and report AP, F-score and errors.
    Eval(EvalArgs),
    /// Convert points between the virtual top-view and the ego frame.
    Transform(TransformArgs),
    /// Encode lanes into anchor tensors or decode tensors back into lanes.
    #[command(subcommand)]
    Anchors(AnchorsCommand),
    /// Evaluate the anchor loss between predicted and ground-truth tensors.
    Loss(LossArgs),
    /// Generate synthetic scenes or pseudo-predictions.
    #[command(subcommand)]
    Fixtures(FixturesCommand),
    /// Label lane points of a generated scene by occlusion type.
    #[command(subcommand)]
    Occlusion(OcclusionCommand),
}

#[derive(Debug, Args)]
struct ConfigArgs {
    /// Flat key/value TOML file.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Override one config key; repeatable. Takes precedence over --config.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl ConfigArgs {
    fn load(&self, extra: &[String]) -> Result<Settings> {
        let mut overrides = self.set.clone();
        overrides.extend_from_slice(extra);
        Ok(Settings::load(self.config.as_deref(), &overrides)?)
    }
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long, value_name = "JSONL")]
    gt: PathBuf,
    #[arg(long, value_name = "JSONL")]
    pred: PathBuf,
    /// Where to write the JSON report.
    #[arg(long, value_name = "JSON")]
    out: Option<PathBuf>,
    /// Per-frame assignments at `prob_threshold`, one JSON object per line.
    #[arg(long, value_name = "JSONL")]
    dump_matches: Option<PathBuf>,
    #[command(flatten)]
    cfg: ConfigArgs,
}

#[derive(Debug, Args)]
struct TransformArgs {
    /// Input is top-view (x̄, ȳ); prints ego (x, y, z).
    #[arg(long, conflicts_with = "to_topview", required_unless_present = "to_topview")]
    to_ego: bool,
    /// Input is ego (x, y); prints top-view (x̄, ȳ).
    #[arg(long)]
    to_topview: bool,
    /// Camera height above the ground, meters.
    #[arg(long)]
    height: f64,
    /// Point height z, meters.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    z: f64,
    /// Coordinate pairs, two values per point.
    #[arg(required = true, allow_negative_numbers = true, value_name = "COORD")]
    coords: Vec<f64>,
}

#[derive(Debug, Subcommand)]
enum AnchorsCommand {
    /// Lanes (with camera) → anchor tensors.
    Encode(AnchorsEncodeArgs),
    /// Anchor tensors (with camera) → lanes.
    Decode(AnchorsDecodeArgs),
}

#[derive(Debug, Args)]
struct AnchorsEncodeArgs {
    #[arg(long, value_name = "JSONL")]
    input: PathBuf,
    #[arg(long, value_name = "JSONL")]
    out: PathBuf,
    #[command(flatten)]
    cfg: ConfigArgs,
}

#[derive(Debug, Args)]
struct AnchorsDecodeArgs {
    #[arg(long, value_name = "JSONL")]
    input: PathBuf,
    #[arg(long, value_name = "JSONL")]
    out: PathBuf,
    #[arg(long)]
    prob_threshold: Option<f64>,
    #[arg(long)]
    vis_threshold: Option<f64>,
    #[command(flatten)]
    cfg: ConfigArgs,
}

#[derive(Debug, Args)]
struct LossArgs {
    #[arg(long, value_name = "JSONL")]
    pred: PathBuf,
    #[arg(long, value_name = "JSONL")]
    gt: PathBuf,
}

#[derive(Debug, Subcommand)]
enum FixturesCommand {
    /// Generate scenes from a road spec.
    Gen(GenArgs),
    /// Derive noisy pseudo-predictions from ground truth.
    Perturb(PerturbArgs),
}

#[derive(Debug, Args)]
struct GenArgs {
    /// Road spec, JSON.
    #[arg(long, value_name = "JSON")]
    spec: PathBuf,
    /// Camera sampling ranges and intrinsics, JSON.
    #[arg(long, value_name = "JSON")]
    camera: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    frames: usize,
    #[arg(long, value_name = "DIR")]
    out_dir: PathBuf,
    /// Skip rendering and occlusion labeling; ground truth is the full lanes.
    #[arg(long)]
    no_rasters: bool,
    #[command(flatten)]
    cfg: ConfigArgs,
}

#[derive(Debug, Args)]
struct PerturbArgs {
    #[arg(long, value_name = "JSONL")]
    gt: PathBuf,
    #[arg(long, value_name = "JSONL")]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Noise settings, JSON; individual flags override it.
    #[arg(long, value_name = "JSON")]
    noise: Option<PathBuf>,
    #[arg(long)]
    sigma_x: Option<f64>,
    #[arg(long)]
    sigma_z: Option<f64>,
    #[arg(long)]
    drop_rate: Option<f64>,
    #[arg(long)]
    spurious_rate: Option<f64>,
    /// Fixed probability of spurious lanes (true lanes keep theirs).
    #[arg(long)]
    spurious_prob: Option<f64>,
}

#[derive(Debug, Subcommand)]
enum OcclusionCommand {
    /// Label each lane point of a scene directory written by `fixtures gen`.
    Label(LabelArgs),
}

#[derive(Debug, Args)]
struct LabelArgs {
    #[arg(long, value_name = "DIR")]
    scene: PathBuf,
    /// Depth deviation tolerance, meters.
    #[arg(long)]
    eps: Option<f64>,
    /// Write the finalized ground truth as JSONL instead of the labels.
    #[arg(long)]
    finalize: bool,
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
    #[command(flatten)]
    cfg: ConfigArgs,
}

/// Sidecar of a scene directory: what the rasters hold and what occludes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneMeta {
    pub seed: u64,
    /// Exact pitch; the camera record stores degrees.
    pub pitch_rad: f64,
    pub depth_kind: DepthKind,
    pub occluders: Vec<BoxOccluder>,
}

pub const GT_FILE: &str = "gt.jsonl";
pub const FRAME_FILE: &str = "frame.jsonl";
pub const DEPTH_FILE: &str = "depth.l3dr";
pub const SEMANTIC_FILE: &str = "semantic.l3dr";
pub const SCENE_FILE: &str = "scene.json";

pub fn frame_id(index: usize) -> String {
    format!("frame_{index:05}")
}

/// Runs the CLI on `args` (including the program name) and returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                let _ = write!(err, "{text}");
                EXIT_USAGE
            } else {
                let _ = write!(out, "{text}");
                EXIT_OK
            };
        }
    };
    match execute(cli.command, out, err) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

fn execute(command: Command, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    match command {
        Command::Eval(a) => cmd_eval(a, out),
        Command::Transform(a) => cmd_transform(a, out),
        Command::Anchors(AnchorsCommand::Encode(a)) => cmd_encode(a, err),
        Command::Anchors(AnchorsCommand::Decode(a)) => cmd_decode(a),
        Command::Loss(a) => cmd_loss(a, out),
        Command::Fixtures(FixturesCommand::Gen(a)) => cmd_gen(a, err),
        Command::Fixtures(FixturesCommand::Perturb(a)) => cmd_perturb(a),
        Command::Occlusion(OcclusionCommand::Label(a)) => cmd_label(a, out),
    }
}

fn read_frames(path: &Path) -> Result<Vec<FrameRecord>> {
    read_jsonl(path).map_err(|source| CliError::Jsonl { path: path.to_path_buf(), source })
}

fn write_frames(path: &Path, frames: &[FrameRecord]) -> Result<()> {
    write_jsonl(path, frames).map_err(|source| CliError::Io { path: path.to_path_buf(), source })
}

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, bytes).map_err(|source| CliError::Io { path: path.to_path_buf(), source })
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|source| CliError::Io { path: path.to_path_buf(), source })?;
    serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn field_error(frame: &FrameRecord, e: FieldError) -> CliError {
    CliError::Data(format!("frame {}: field `{}`: {}", frame.frame_id, e.field, e.message))
}

fn stdout_error(source: io::Error) -> CliError {
    CliError::Io { path: PathBuf::from("<stdout>"), source }
}

/// Frames of two files paired by position; ids must agree.
fn paired<'a>(a: &'a [FrameRecord], b: &'a [FrameRecord], what: (&str, &str)) -> Result<Vec<(&'a FrameRecord, &'a FrameRecord)>> {
    if a.len() != b.len() {
        return Err(CliError::Data(format!("{} has {} frames, {} has {}", what.0, a.len(), what.1, b.len())));
    }
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            if x.frame_id == y.frame_id {
                Ok((x, y))
            } else {
                Err(CliError::Data(format!("frame id mismatch: {} `{}` vs {} `{}`", what.0, x.frame_id, what.1, y.frame_id)))
            }
        })
        .collect()
}

/// The `eval` output document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalOutput {
    pub config: Settings,
    pub frames: usize,
    pub laneline: EvalReport,
    pub centerline: EvalReport,
}

#[derive(Debug, Serialize)]
struct FrameMatches<'a> {
    frame_id: &'a str,
    laneline: MatchReport,
    centerline: MatchReport,
}

fn summary_table(report: &EvalOutput) -> String {
    let mut s = format!(
        "{:<11} {:>7} {:>8} {:>8} {:>6} {:>9} {:>9} {:>9} {:>9}\n",
        "category", "frames", "AP", "F_max", "tau", "x_near", "x_far", "z_near", "z_far"
    );
    for (name, r) in [("laneline", &report.laneline), ("centerline", &report.centerline)] {
        s += &format!(
            "{:<11} {:>7} {:>8.4} {:>8.4} {:>6.2} {:>9.4} {:>9.4} {:>9.4} {:>9.4}\n",
            name, report.frames, r.ap, r.f_max, r.best_threshold, r.x_err_near, r.x_err_far, r.z_err_near, r.z_err_far
        );
    }
    s
}

fn eval_frames(gt: &[FrameRecord], pred: &[FrameRecord]) -> Result<Vec<(String, EvalFrame)>> {
    paired(gt, pred, ("gt", "pred"))?
        .into_iter()
        .map(|(g, p)| {
            let gt = g.to_lanes().map_err(|e| field_error(g, e))?;
            let pred = p.to_lanes().map_err(|e| field_error(p, e))?;
            Ok((g.frame_id.clone(), EvalFrame { gt, pred }))
        })
        .collect()
}

/// Evaluates both lane categories; frames are tallied in parallel and reduced in order.
pub fn evaluate_records(gt: &[FrameRecord], pred: &[FrameRecord], settings: &Settings) -> Result<EvalOutput> {
    let frames = eval_frames(gt, pred)?;
    if frames.is_empty() {
        return Err(CliError::Data("no frames to evaluate".into()));
    }
    let cfg = settings.match_config();
    let th = &settings.thresholds;
    let (ll, cl): (Vec<_>, Vec<_>) = frames
        .par_iter()
        .map(|(_, f)| {
            (tally_frame(f, &cfg, th, Some(LaneCategory::Laneline)), tally_frame(f, &cfg, th, Some(LaneCategory::Centerline)))
        })
        .collect::<Vec<_>>()
        .into_iter()
        .unzip();
    let metrics = |e: lane3d_core::MetricsError| CliError::Data(e.to_string());
    Ok(EvalOutput {
        config: settings.clone(),
        frames: frames.len(),
        laneline: aggregate(ll, th).map_err(metrics)?,
        centerline: aggregate(cl, th).map_err(metrics)?,
    })
}

fn cmd_eval(a: EvalArgs, out: &mut dyn Write) -> Result<()> {
    let settings = a.cfg.load(&[])?;
    let gt = read_frames(&a.gt)?;
    let pred = read_frames(&a.pred)?;
    let report = evaluate_records(&gt, &pred, &settings)?;
    if let Some(path) = &a.out {
        let json = serde_json::to_string_pretty(&report).expect("report serializes") + "\n";
        write_file(path, json)?;
    }
    if let Some(path) = &a.dump_matches {
        let cfg = settings.match_config();
        let frames = eval_frames(&gt, &pred)?;
        let lines: Vec<String> = frames
            .par_iter()
            .map(|(id, f)| {
                let of = |lanes: &[Lane3D], c: LaneCategory, pred: bool| -> Vec<Lane3D> {
                    lanes.iter().filter(|l| l.category() == c && (!pred || l.prob() >= settings.prob_threshold)).cloned().collect()
                };
                let m = |c| match_frame(&of(&f.pred, c, true), &of(&f.gt, c, false), &cfg);
                let fm = FrameMatches { frame_id: id, laneline: m(LaneCategory::Laneline), centerline: m(LaneCategory::Centerline) };
                serde_json::to_string(&fm).expect("matches serialize") + "\n"
            })
            .collect();
        write_file(path, lines.concat())?;
    }
    out.write_all(summary_table(&report).as_bytes()).map_err(stdout_error)
}

fn cmd_transform(a: TransformArgs, out: &mut dyn Write) -> Result<()> {
    if a.coords.len() % 2 != 0 {
        return Err(CliError::Usage(format!("expected coordinate pairs, got {} values", a.coords.len())));
    }
    let geometry = |e: lane3d_core::GeometryError| CliError::Data(e.to_string());
    let mut text = String::new();
    for pair in a.coords.chunks(2) {
        if a.to_ego {
            let p = topview_to_ego(TopViewPoint::new(pair[0], pair[1]), a.z, a.height).map_err(geometry)?;
            text += &format!("{} {} {}\n", p.x, p.y, p.z);
        } else {
            let t = ego_to_topview(EgoPoint::new(pair[0], pair[1], a.z), a.height).map_err(geometry)?;
            text += &format!("{} {}\n", t.x_bar, t.y_bar);
        }
    }
    out.write_all(text.as_bytes()).map_err(stdout_error)
}

fn camera_of(f: &FrameRecord) -> Result<lane3d_core::CameraModel> {
    f.to_camera()
        .map_err(|e| field_error(f, e))?
        .ok_or_else(|| CliError::Data(format!("frame {}: field `camera` is required", f.frame_id)))
}

fn cmd_encode(a: AnchorsEncodeArgs, err: &mut dyn Write) -> Result<()> {
    let settings = a.cfg.load(&[])?;
    let cfg = settings.anchor_config();
    let frames = read_frames(&a.input)?;
    let mut records = Vec::with_capacity(frames.len());
    for f in &frames {
        let cam = camera_of(f)?;
        let lanes = f.to_lanes().map_err(|e| field_error(f, e))?;
        let enc = encode(&lanes, &cfg, cam.height_m()).map_err(|e| CliError::Data(format!("frame {}: {e}", f.frame_id)))?;
        for c in &enc.collisions {
            let _ = writeln!(err, "warning: frame {}: lane {} lost anchor {} to lane {}", f.frame_id, c.dropped, c.anchor, c.kept);
        }
        for s in &enc.skipped {
            let why = match &s.reason {
                SkipReason::DoesNotCoverYref => "does not cover y_ref".to_string(),
                SkipReason::NoVisiblePositions => "has no visible anchor rows".to_string(),
                SkipReason::Geometry(g) => g.to_string(),
            };
            let _ = writeln!(err, "warning: frame {}: lane {} skipped: {why}", f.frame_id, s.lane);
        }
        let mut rec = FrameRecord::new(f.frame_id.clone(), None, &[]);
        rec.camera = f.camera.clone();
        rec.anchors = Some(crate::jsonl::AnchorRecord::from_tensor(&enc.tensor));
        records.push(rec);
    }
    write_frames(&a.out, &records)
}

fn cmd_decode(a: AnchorsDecodeArgs) -> Result<()> {
    let mut extra = Vec::new();
    extra.extend(a.prob_threshold.map(|v| format!("prob_threshold={v:?}")));
    extra.extend(a.vis_threshold.map(|v| format!("vis_threshold={v:?}")));
    let settings = a.cfg.load(&extra)?;
    let cfg = settings.anchor_config();
    let frames = read_frames(&a.input)?;
    let mut records = Vec::with_capacity(frames.len());
    for f in &frames {
        let cam = camera_of(f)?;
        let tensor = f
            .to_tensor()
            .map_err(|e| field_error(f, e))?
            .ok_or_else(|| CliError::Data(format!("frame {}: field `anchors` is required", f.frame_id)))?;
        let lanes = decode(&tensor, &cfg, cam.height_m(), settings.prob_threshold, settings.vis_threshold)
            .map_err(|e| CliError::Data(format!("frame {}: {e}", f.frame_id)))?;
        let mut rec = FrameRecord::new(f.frame_id.clone(), None, &lanes);
        rec.camera = f.camera.clone();
        records.push(rec);
    }
    write_frames(&a.out, &records)
}

#[derive(Debug, Serialize)]
struct FrameLoss<'a> {
    frame_id: &'a str,
    #[serde(flatten)]
    loss: LossBreakdown,
}

#[derive(Debug, Serialize)]
struct LossOutput<'a> {
    frames: Vec<FrameLoss<'a>>,
    total: LossBreakdown,
}

fn cmd_loss(a: LossArgs, out: &mut dyn Write) -> Result<()> {
    let pred = read_frames(&a.pred)?;
    let gt = read_frames(&a.gt)?;
    let mut frames = Vec::with_capacity(gt.len());
    let mut total = LossBreakdown::default();
    for (p, g) in paired(&pred, &gt, ("pred", "gt"))? {
        let tensor = |f: &FrameRecord| {
            f.to_tensor()
                .map_err(|e| field_error(f, e))?
                .ok_or_else(|| CliError::Data(format!("frame {}: field `anchors` is required", f.frame_id)))
        };
        let l = loss(&tensor(p)?, &tensor(g)?).map_err(|e| CliError::Data(format!("frame {}: {e}", p.frame_id)))?;
        total.existence_term += l.existence_term;
        total.offset_term += l.offset_term;
        total.height_term += l.height_term;
        total.visibility_term += l.visibility_term;
        total.total += l.total;
        frames.push(FrameLoss { frame_id: &p.frame_id, loss: l });
    }
    let json = serde_json::to_string_pretty(&LossOutput { frames, total }).expect("loss serializes") + "\n";
    out.write_all(json.as_bytes()).map_err(stdout_error)
}

/// Ground truth and on-disk artifacts of one generated frame.
struct GeneratedFrame {
    gt: FrameRecord,
    scene: Option<(FrameRecord, SceneFixture, SceneMeta)>,
}

fn generate_frame(spec: &RoadSpec, ranges: &CameraRanges, seed: u64, index: usize, settings: &Settings, rasters: bool) -> Result<GeneratedFrame> {
    let fixture = |e: lane3d_core::fixtures::FixtureError| CliError::Data(format!("spec: {e}"));
    let id = frame_id(index);
    if !rasters {
        let (cam, lanes) = generate_lanes(spec, seed, ranges).map_err(fixture)?;
        return Ok(GeneratedFrame { gt: FrameRecord::new(id, Some(&cam), &lanes), scene: None });
    }
    let scene = generate_scene_with_depth(spec, seed, ranges, settings.depth_kind).map_err(fixture)?;
    let labels = label_occlusion(&scene, settings.occlusion_eps);
    let gt = FrameRecord::new(id.clone(), Some(&scene.camera), &finalize_ground_truth(&scene.lanes_gt, &labels));
    let raw = FrameRecord::new(id, Some(&scene.camera), &scene.lanes_gt);
    let meta = SceneMeta { seed, pitch_rad: scene.camera.pitch_rad(), depth_kind: scene.depth_kind, occluders: scene.occluders.clone() };
    Ok(GeneratedFrame { gt, scene: Some((raw, scene, meta)) })
}

fn cmd_gen(a: GenArgs, err: &mut dyn Write) -> Result<()> {
    let settings = a.cfg.load(&[])?;
    let spec: RoadSpec = read_json(&a.spec)?;
    let ranges: CameraRanges = match &a.camera {
        Some(p) => read_json(p)?,
        None => CameraRanges::default(),
    };
    fs::create_dir_all(&a.out_dir).map_err(|source| CliError::Io { path: a.out_dir.clone(), source })?;

    // bounded batches keep at most a few rendered scenes in memory
    let batch = if a.no_rasters { 4096 } else { 2 * rayon::current_num_threads() };
    let mut gt = Vec::with_capacity(a.frames);
    let indices: Vec<usize> = (0..a.frames).collect();
    for chunk in indices.chunks(batch) {
        let generated: Vec<GeneratedFrame> = chunk
            .par_iter()
            .map(|&i| generate_frame(&spec, &ranges, a.seed.wrapping_add(i as u64), i, &settings, !a.no_rasters))
            .collect::<Result<_>>()?;
        for g in generated {
            if let Some((raw, scene, meta)) = &g.scene {
                let dir = a.out_dir.join(&raw.frame_id);
                fs::create_dir_all(&dir).map_err(|source| CliError::Io { path: dir.clone(), source })?;
                write_frames(&dir.join(FRAME_FILE), std::slice::from_ref(raw))?;
                let depth = dir.join(DEPTH_FILE);
                write_raster(&depth, &scene.depth_map).map_err(|source| CliError::Io { path: depth, source })?;
                let semantic = dir.join(SEMANTIC_FILE);
                write_raster(&semantic, &scene.semantic_map).map_err(|source| CliError::Io { path: semantic, source })?;
                write_file(&dir.join(SCENE_FILE), serde_json::to_string_pretty(meta).expect("meta serializes") + "\n")?;
            }
            gt.push(g.gt);
        }
    }
    write_frames(&a.out_dir.join(GT_FILE), &gt)?;
    let _ = writeln!(err, "wrote {} frames to {}", gt.len(), a.out_dir.display());
    Ok(())
}

fn cmd_perturb(a: PerturbArgs) -> Result<()> {
    let mut noise: NoiseConfig = match &a.noise {
        Some(p) => read_json(p)?,
        None => NoiseConfig::default(),
    };
    noise.sigma_x = a.sigma_x.unwrap_or(noise.sigma_x);
    noise.sigma_z = a.sigma_z.unwrap_or(noise.sigma_z);
    noise.drop_rate = a.drop_rate.unwrap_or(noise.drop_rate);
    noise.spurious_rate = a.spurious_rate.unwrap_or(noise.spurious_rate);
    if let Some(p) = a.spurious_prob {
        noise.prob_model = match noise.prob_model {
            ProbModel::Fixed { true_prob, .. } => ProbModel::Fixed { true_prob, spurious_prob: p },
            ProbModel::Uniform { true_range, .. } => ProbModel::Uniform { true_range, spurious_range: (p, p) },
        };
    }
    let gt = read_frames(&a.gt)?;
    let records: Vec<FrameRecord> = gt
        .par_iter()
        .enumerate()
        .map(|(i, f)| {
            let lanes = f.to_lanes().map_err(|e| field_error(f, e))?;
            let pred = perturb_predictions(&lanes, a.seed.wrapping_add(i as u64), &noise);
            let mut rec = FrameRecord::new(f.frame_id.clone(), None, &pred);
            rec.camera = f.camera.clone();
            Ok(rec)
        })
        .collect::<Result<_>>()?;
    write_frames(&a.out, &records)
}

/// Rebuilds a scene written by `fixtures gen` from its directory.
pub fn load_scene(dir: &Path) -> Result<(String, SceneFixture)> {
    let frames = read_frames(&dir.join(FRAME_FILE))?;
    let [frame] = frames.as_slice() else {
        return Err(CliError::Data(format!("{}: expected exactly one frame", dir.join(FRAME_FILE).display())));
    };
    let meta: SceneMeta = read_json(&dir.join(SCENE_FILE))?;
    let record = frame.camera.as_ref().ok_or_else(|| CliError::Data(format!("frame {}: field `camera` is required", frame.frame_id)))?;
    let camera = record.to_model_with_pitch(meta.pitch_rad).map_err(|e| field_error(frame, FieldError { field: "camera".into(), message: e.to_string() }))?;
    let raster = |name: &str| dir.join(name);
    let depth_map = read_raster::<f32>(raster(DEPTH_FILE)).map_err(|source| CliError::Raster { path: raster(DEPTH_FILE), source })?;
    let semantic_map = read_raster::<u8>(raster(SEMANTIC_FILE)).map_err(|source| CliError::Raster { path: raster(SEMANTIC_FILE), source })?;
    let size = (camera.image_size().0 as usize, camera.image_size().1 as usize);
    for (name, dims) in [(DEPTH_FILE, (depth_map.width(), depth_map.height())), (SEMANTIC_FILE, (semantic_map.width(), semantic_map.height()))] {
        if dims != size {
            return Err(CliError::Data(format!("{name} is {}x{}, camera image is {}x{}", dims.0, dims.1, size.0, size.1)));
        }
    }
    let lanes_gt = frame.to_lanes().map_err(|e| field_error(frame, e))?;
    let scene = SceneFixture { camera, lanes_gt, depth_map, depth_kind: meta.depth_kind, semantic_map, occluders: meta.occluders };
    Ok((frame.frame_id.clone(), scene))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct LabelOutput {
    pub frame_id: String,
    pub eps: f64,
    pub labels: Vec<Vec<OcclusionLabel>>,
}

fn cmd_label(a: LabelArgs, out: &mut dyn Write) -> Result<()> {
    let extra: Vec<String> = a.eps.map(|e| format!("occlusion_eps={e:?}")).into_iter().collect();
    let settings = a.cfg.load(&extra)?;
    let (id, scene) = load_scene(&a.scene)?;
    let labels = label_occlusion(&scene, settings.occlusion_eps);
    let text = if a.finalize {
        let lanes = finalize_ground_truth(&scene.lanes_gt, &labels);
        to_precise_line(&FrameRecord::new(id, Some(&scene.camera), &lanes)) + "\n"
    } else {
        serde_json::to_string(&LabelOutput { frame_id: id, eps: settings.occlusion_eps, labels }).expect("labels serialize") + "\n"
    };
    match &a.out {
        Some(path) => write_file(path, text),
        None => out.write_all(text.as_bytes()).map_err(stdout_error),
    }
}
