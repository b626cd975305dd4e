use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::LevelFilter;

use sl4map::eval::{evaluate, AteAlignment, EvalSummary};
use sl4map::io::{
    read_ply_file, read_tum_file, submap_color, synthesize_session, write_kv_file, write_ply_file,
    write_tum_file, DiskReconstructor, KeyValues, PointCloud, Session, TimedPose, GT_POINTS,
    GT_TRAJECTORY,
};
use sl4map::oracle::{Scenario, SceneLayout, WarpKind, WarpModel};
use sl4map::pipeline::{run_pipeline, AlignmentMode, EdgeKind, PipelineConfig, PipelineOutput};

const MAP_PLY: &str = "map.ply";
const TRAJECTORY_TUM: &str = "trajectory.tum";
const GRAPH_TXT: &str = "graph.txt";
const RUN_TXT: &str = "run.txt";
const METRICS_TXT: &str = "metrics.txt";

#[derive(Parser, Debug)]
#[command(name = "sl4map", version, about = "Submap alignment SLAM backend")]
struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate an oracle session directory.
    Synth(SynthArgs),
    /// Run the pipeline on a session.
    Run(RunArgs),
    /// Score a run against ground truth.
    Eval(EvalArgs),
    /// Re-emit a cloud and trajectory, optionally aligned to ground truth.
    Export(ExportArgs),
}

/// Pipeline parameters. Unset values fall back to the session manifest,
/// then to the built-in defaults.
#[derive(Args, Debug, Clone, Default)]
struct PipelineArgs {
    /// New keyframes per submap.
    #[arg(long)]
    w: Option<usize>,
    /// Loop frames appended per submap.
    #[arg(long)]
    w_loop: Option<usize>,
    /// Confidence cutoff, percent of the submap mean.
    #[arg(long)]
    tau_conf: Option<f64>,
    /// Descriptor similarity threshold for loop retrieval.
    #[arg(long)]
    tau_desc: Option<f64>,
    /// Minimum submap gap for loop retrieval.
    #[arg(long)]
    tau_interval: Option<usize>,
    /// Keyframe disparity threshold in pixels.
    #[arg(long)]
    tau_disparity: Option<f64>,
    /// Disable loop closure.
    #[arg(long)]
    no_loop_closure: bool,
}

impl PipelineArgs {
    fn apply(&self, c: &mut PipelineConfig) {
        if let Some(v) = self.w {
            c.w = v;
        }
        if let Some(v) = self.w_loop {
            c.w_loop = v;
        }
        if let Some(v) = self.tau_conf {
            c.tau_conf = v;
        }
        if let Some(v) = self.tau_desc {
            c.tau_desc = v;
        }
        if let Some(v) = self.tau_interval {
            c.tau_interval = v;
        }
        if let Some(v) = self.tau_disparity {
            c.tau_disparity = v;
        }
        if self.no_loop_closure {
            c.loop_closure = false;
        }
    }
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// Session directory to create.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "corridor_loop")]
    layout: SceneLayout,
    #[arg(long, default_value_t = 4000)]
    n_points: usize,
    #[arg(long, default_value_t = 128)]
    n_frames: usize,
    /// Seed for the scene and the simulated reconstructions.
    #[arg(long, default_value_t = 0)]
    scenario_seed: u64,
    /// Per-submap ambiguity: identity, sim3, or sl4.
    #[arg(long, default_value = "sl4")]
    warp: WarpKind,
    /// Tangent-norm bound of the per-submap warp.
    #[arg(long, default_value_t = 0.2)]
    magnitude: f64,
    /// Point noise standard deviation, in submap units.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    /// Fraction of points replaced by gross outliers.
    #[arg(long, default_value_t = 0.0)]
    outliers: f64,
    /// Per-frame random-walk drift inside each submap.
    #[arg(long, default_value_t = 0.0)]
    drift: f64,
    /// Warp the first submap as well.
    #[arg(long)]
    warp_first: bool,
    #[command(flatten)]
    pipeline: PipelineArgs,
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Session directory.
    session: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    mode: Option<AlignmentMode>,
    #[arg(long)]
    ransac_iters: Option<usize>,
    /// Inlier threshold in the normalized frame.
    #[arg(long)]
    ransac_thresh: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    pipeline: PipelineArgs,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// Run output directory.
    run: PathBuf,
    /// Session directory holding ground truth.
    #[arg(long)]
    gt: PathBuf,
    #[arg(long, default_value = "sim3")]
    align: AteAlignment,
    /// Keep only nearest-neighbor distances up to this percentile.
    #[arg(long)]
    trim: Option<f64>,
    /// Metrics file (default: RUN/metrics.txt).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ExportArgs {
    /// Run output directory.
    run: PathBuf,
    #[arg(long)]
    ply: Option<PathBuf>,
    #[arg(long)]
    tum: Option<PathBuf>,
    /// Session directory whose ground truth the export is aligned to.
    #[arg(long)]
    align_to: Option<PathBuf>,
    #[arg(long, default_value = "sim3")]
    align: AteAlignment,
}

fn synth(a: &SynthArgs) -> Result<()> {
    let scenario = Scenario {
        layout: a.layout,
        n_points: a.n_points,
        n_frames: a.n_frames,
        seed: a.scenario_seed,
        model: WarpModel {
            kind: a.warp,
            magnitude: a.magnitude,
            noise_sigma: a.noise,
            outlier_fraction: a.outliers,
            drift: a.drift,
            anchor_first: !a.warp_first,
        },
    };
    if a.n_points < 100 {
        bail!("--n-points must be at least 100");
    }
    let mut config = PipelineConfig::default();
    a.pipeline.apply(&mut config);
    config.validate()?;
    let session = synthesize_session(&a.out, &scenario, &config)
        .with_context(|| format!("writing session {}", a.out.display()))?;
    log::info!(
        "wrote {} frames to {}",
        session.frames.len(),
        a.out.display()
    );
    Ok(())
}

fn run_config(session: &Session, a: &RunArgs) -> Result<PipelineConfig> {
    let mut c = session.config()?;
    a.pipeline.apply(&mut c);
    if let Some(m) = a.mode {
        c.mode = m;
    }
    if let Some(v) = a.ransac_iters {
        c.ransac_iters = v;
    }
    if let Some(v) = a.ransac_thresh {
        c.ransac_thresh = v;
    }
    if let Some(v) = a.seed {
        c.seed = v;
    }
    Ok(c)
}

fn write_run(out: &Path, config: &PipelineConfig, result: &PipelineOutput) -> Result<()> {
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let global = &result.solution.global;
    let cloud = PointCloud {
        points: global.points.clone(),
        colors: global
            .point_submap
            .iter()
            .map(|s| submap_color(*s))
            .collect(),
    };
    write_ply_file(&out.join(MAP_PLY), &cloud)?;

    let poses: Vec<TimedPose> = global
        .cameras
        .iter()
        .filter_map(|c| c.pose.map(|p| (c.frame_id, p)))
        .collect();
    let omitted = global.cameras.len() - poses.len();
    if omitted > 0 {
        log::warn!(
            "{omitted} of {} frames have projective cameras and are left out of {TRAJECTORY_TUM}",
            global.cameras.len()
        );
    }
    write_tum_file(&out.join(TRAJECTORY_TUM), &poses)?;
    std::fs::write(out.join(GRAPH_TXT), &result.solution.graph_dump)
        .with_context(|| format!("writing {GRAPH_TXT}"))?;

    let report = &result.solution.report;
    let mut kv = KeyValues::new();
    sl4map::io::manifest_for_config(&mut kv, config);
    kv.set("keyframes", result.keyframes.len());
    kv.set("submaps", result.submaps.len());
    kv.set(
        "loop_edges",
        result
            .alignments
            .iter()
            .filter(|a| a.kind == EdgeKind::Loop)
            .count(),
    );
    kv.set("frames_with_pose", poses.len());
    kv.set("points", global.points.len());
    kv.set("lm_iterations", report.iterations);
    kv.set_float("lm_initial_cost", report.initial_cost);
    kv.set_float("lm_final_cost", report.final_cost);
    kv.set("lm_termination", format!("{:?}", report.termination));
    write_kv_file(&out.join(RUN_TXT), &kv)?;
    Ok(())
}

fn run(a: &RunArgs) -> Result<()> {
    let session = Session::open(&a.session)
        .with_context(|| format!("opening session {}", a.session.display()))?;
    let config = run_config(&session, a)?;
    let mut rec = DiskReconstructor::open(&session.dir)?;
    let result = run_pipeline(&session.frames, &mut rec, &config)?;
    write_run(&a.out, &config, &result)?;
    log::info!(
        "{} submaps, LM {:?} after {} iterations",
        result.submaps.len(),
        result.solution.report.termination,
        result.solution.report.iterations
    );
    Ok(())
}

struct RunFiles {
    cloud: PointCloud,
    poses: Vec<TimedPose>,
}

fn load_run(dir: &Path) -> Result<RunFiles> {
    Ok(RunFiles {
        cloud: read_ply_file(&dir.join(MAP_PLY))?,
        poses: read_tum_file(&dir.join(TRAJECTORY_TUM))?,
    })
}

fn load_gt(session: &Path) -> Result<RunFiles> {
    Ok(RunFiles {
        cloud: read_ply_file(&session.join(GT_POINTS))?,
        poses: read_tum_file(&session.join(GT_TRAJECTORY))?,
    })
}

fn centers(poses: &[TimedPose]) -> Vec<(u64, nalgebra::Vector3<f64>)> {
    poses
        .iter()
        .map(|(id, p)| (*id, p.translation.vector))
        .collect()
}

fn score(
    est: &RunFiles,
    gt: &RunFiles,
    align: AteAlignment,
    trim: Option<f64>,
) -> Result<EvalSummary> {
    Ok(evaluate(
        &centers(&est.poses),
        &est.cloud.points,
        &centers(&gt.poses),
        &gt.cloud.points,
        align,
        trim,
    )?)
}

fn eval(a: &EvalArgs) -> Result<()> {
    let est = load_run(&a.run)?;
    let gt = load_gt(&a.gt)?;
    let s = score(&est, &gt, a.align, a.trim)?;
    let mut kv = KeyValues::new();
    kv.set_float("ate_rmse", s.ate.rmse);
    kv.set_float("accuracy", s.recon.accuracy);
    kv.set_float("completion", s.recon.completion);
    kv.set_float("chamfer", s.recon.chamfer);
    kv.set("frames_matched", s.frames_matched);
    kv.set("align", a.align);
    kv.set("trim", a.trim.map_or("none".to_string(), |t| t.to_string()));
    let path = a.out.clone().unwrap_or_else(|| a.run.join(METRICS_TXT));
    write_kv_file(&path, &kv)?;
    println!(
        "ate_rmse={} chamfer={} frames_matched={}",
        s.ate.rmse, s.recon.chamfer, s.frames_matched
    );
    Ok(())
}

fn export(a: &ExportArgs) -> Result<()> {
    if a.ply.is_none() && a.tum.is_none() {
        bail!("nothing to export: pass --ply and/or --tum");
    }
    let mut est = load_run(&a.run)?;
    if let Some(gt_dir) = &a.align_to {
        let gt = load_gt(gt_dir)?;
        let t = score(&est, &gt, a.align, None)?.ate.alignment;
        for p in &mut est.cloud.points {
            *p = t.transform_point(p);
        }
        let r = nalgebra::UnitQuaternion::from_rotation_matrix(&t.rotation);
        for (_, pose) in &mut est.poses {
            pose.translation.vector = t.transform_point(&pose.translation.vector);
            pose.rotation = r * pose.rotation;
        }
    }
    if let Some(p) = &a.ply {
        write_ply_file(p, &est.cloud)?;
    }
    if let Some(p) = &a.tum {
        write_tum_file(p, &est.poses)?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => LevelFilter::Warn,
        1 => LevelFilter::Info,
        _ => LevelFilter::Debug,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .init();
    let result = match &cli.command {
        Command::Synth(a) => synth(a),
        Command::Run(a) => run(a),
        Command::Eval(a) => eval(a),
        Command::Export(a) => export(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
