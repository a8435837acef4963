use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use handsynth::config::{PipelineConfig, OUT_ENV};
use handsynth::metrics::RootJoint;
use handsynth::pipeline::{self, summary_text};
use handsynth::scene::{annotation_file_name, export_obj, CameraSelection};
use handsynth::{Error, Result};

/// Interacting two-hand pose synthesis pipeline.
#[derive(Debug, Parser)]
#[command(name = "handsynth", version)]
struct Cli {
    /// Pipeline config (TOML). Built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the rng seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output directory. Falls back to $HANDSYNTH_OUT, then the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Cameras per pose in the annotation export.
    #[arg(long, global = true, value_parser = ["sparse", "full"])]
    cameras: Option<String>,
    /// Penetration tolerance of the validity filter, millimeters.
    #[arg(long = "tolerance-mm", global = true)]
    tolerance_mm: Option<f64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Seed pairs and their augmented initial poses.
    GenPoses,
    /// Contact anchors from the initial poses.
    SelectAnchors,
    /// Pretrain the naturalness discriminator.
    TrainDisc,
    /// Optimize every initial pose.
    Optimize,
    /// Validity filter; writes the pose library and yield report.
    Filter,
    /// Camera-rig annotations for the pose library.
    Export {
        /// Also write each pose's posed meshes as OBJ.
        #[arg(long)]
        obj: bool,
    },
    /// Metrics of predictions against ground-truth annotations.
    Eval {
        /// Ground-truth annotation file or directory.
        #[arg(long)]
        gt: PathBuf,
        /// Predictions: annotation file/directory or a predictions-only file.
        #[arg(long)]
        pred: PathBuf,
        /// Root keypoint: middle_mcp or wrist.
        #[arg(long)]
        root: Option<RootJoint>,
    },
    /// All stages end to end.
    RunAll,
    /// Print the effective config as TOML.
    PrintConfig,
}

fn effective_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(w) = cli.workers {
        cfg.workers = w;
    }
    if let Some(o) = &cli.out {
        cfg.paths.out_dir = o.clone();
    } else if let Some(o) = std::env::var_os(OUT_ENV) {
        cfg.paths.out_dir = o.into();
    }
    if let Some(c) = &cli.cameras {
        cfg.export.cameras = c.parse::<CameraSelection>()?;
    }
    if let Some(t) = cli.tolerance_mm {
        cfg.filter.tolerance_mm = t;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    let cfg = effective_config(&cli)?;
    if let Command::PrintConfig = cli.command {
        print!("{}", cfg.to_toml());
        return Ok(());
    }
    pipeline::with_workers(cfg.workers, || dispatch(&cli.command, &cfg))?
}

fn dispatch(command: &Command, cfg: &PipelineConfig) -> Result<()> {
    let out = cfg.out_dir();
    match command {
        Command::GenPoses => {
            let (seeds, jobs) = pipeline::gen_poses(cfg)?;
            println!("{} seeds, {} initial poses", seeds.len(), jobs.len());
        }
        Command::SelectAnchors => {
            let models = pipeline::build_models(cfg)?;
            let jobs = pipeline::load_jobs(out)?;
            let a = pipeline::anchors_stage(cfg, &models, &jobs)?;
            println!("{} right and {} left anchors", a.right.len(), a.left.len());
        }
        Command::TrainDisc => {
            pipeline::train_disc_stage(cfg)?;
            println!("discriminator written to {}", out.join(pipeline::DISCRIMINATOR_FILE).display());
        }
        Command::Optimize => {
            let models = pipeline::build_models(cfg)?;
            let jobs = pipeline::load_jobs(out)?;
            let anchors = pipeline::load_anchors(out, &models)?;
            let net = pipeline::load_discriminator(out)?;
            let (records, _) = pipeline::optimize_stage(cfg, &models, &jobs, &anchors, &net)?;
            let diverged = records.iter().filter(|r| r.optimized.is_none()).count();
            println!("{} poses optimized, {diverged} diverged", records.len());
        }
        Command::Filter => {
            let models = pipeline::build_models(cfg)?;
            let anchors = pipeline::load_anchors(out, &models)?;
            let records = pipeline::load_optimized(out)?;
            let (report, library) = pipeline::filter_stage(cfg, &models, &anchors, &records)?;
            let y = report.summary.yield_rate.map_or("n/a".into(), |y| format!("{y:.4}"));
            println!(
                "yield {y} ({} of {} passed, {} diverged); library {} poses",
                report.summary.passed,
                report.summary.jobs,
                report.summary.diverged,
                library.len()
            );
        }
        Command::Export { obj } => {
            let models = pipeline::build_models(cfg)?;
            let library = pipeline::load_library(out)?;
            let m = pipeline::export_stage(cfg, &models, &library)?;
            if *obj {
                let dir = out.join(pipeline::ANNOTATIONS_DIR).join("meshes");
                std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
                for (i, e) in library.iter().enumerate() {
                    let name = annotation_file_name(i, e).replace(".json", ".obj");
                    export_obj(&models, e, &dir.join(name))?;
                }
            }
            println!("{} records for {} poses", m.records, m.poses);
        }
        Command::Eval { gt, pred, root } => {
            let mut cfg = cfg.clone();
            if let Some(r) = root {
                cfg.metrics.root = *r;
            }
            let models = pipeline::build_models(&cfg)?;
            let report = pipeline::eval_stage(&cfg, &models, gt, pred)?;
            print!("{}", report.to_table());
        }
        Command::RunAll => {
            let t = std::time::Instant::now();
            let r = pipeline::run_all(cfg)?;
            print!("{}", summary_text(&r.manifest, &r.times, t.elapsed().as_secs_f64()));
        }
        Command::PrintConfig => unreachable!("handled before the worker pool starts"),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.family().exit_code() as u8)
        }
    }
}
