//! Stage drivers shared by the CLI, the FFI layer and the end-to-end tests.
//!
//! Every stage reads its inputs from and writes its outputs to the configured
//! output directory, so stages can run one at a time or chained by [`run_all`].

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::discriminator::{build_corpus, train, Discriminator};
use crate::error::{Error, Result};
use crate::hand::{HandPair, HandProportions, PosePair, Side};
use crate::limits::JointLimits;
use crate::losses::{anchor_contact, select_anchors, AnchorSets, HandGrids, LossTerms, Objective, ANCHOR_COUNT};
use crate::metrics::{evaluate_batch, EvalSample, MetricsReport};
use crate::optimizer::{generate_jobs, run_batch, validity_filter, BatchJob, BatchSummary, Trace};
use crate::scene::{
    export_annotations, read_annotations, read_json, sha256_hex, write_json, AnnotationManifest, LibraryEntry,
    ManifestFile, PoseAnnotations, MANIFEST_NAME,
};
use crate::seeds::{seed_library, SeedPair};

pub const SEEDS_FILE: &str = "seeds.json";
pub const INITIAL_FILE: &str = "initial_poses.json";
pub const ANCHORS_FILE: &str = "anchors.json";
pub const DISCRIMINATOR_FILE: &str = "discriminator.bin";
pub const DISC_CURVE_FILE: &str = "discriminator_training.csv";
pub const OPTIMIZED_FILE: &str = "optimized.json";
pub const TRACES_FILE: &str = "traces.csv";
pub const FILTER_FILE: &str = "filter_report.json";
pub const LIBRARY_FILE: &str = "library.json";
pub const ANNOTATIONS_DIR: &str = "annotations";
pub const RUN_MANIFEST: &str = "manifest.json";
pub const SUMMARY_FILE: &str = "summary.txt";
pub const METRICS_FILE: &str = "metrics.json";

// Independent rng streams derived from the configured seed.
const STREAM_DISC_CORPUS: u64 = 0xd15c_0001;
const STREAM_DISC_INIT: u64 = 0xd15c_0002;
const STREAM_DISC_TRAIN: u64 = 0xd15c_0003;

/// Runs `f` on a pool of `workers` threads (0 means one per core).
pub fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {workers} workers: {e}")))?;
    Ok(pool.install(f))
}

pub fn build_models(cfg: &PipelineConfig) -> Result<HandPair> {
    let proportions = match &cfg.paths.proportions {
        Some(p) => HandProportions::load(p)?,
        None => HandProportions::default(),
    };
    HandPair::build(&proportions)
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn require(path: &Path, stage: &str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "{} not found; run `{stage}` first",
            path.display()
        )))
    }
}

pub fn load_seeds(cfg: &PipelineConfig) -> Result<Vec<SeedPair>> {
    match &cfg.paths.seeds {
        Some(p) => read_json(p),
        None => Ok(seed_library(cfg.library.seed_count, cfg.seed)),
    }
}

/// Seeds and their augmented initial pairs.
pub fn gen_poses(cfg: &PipelineConfig) -> Result<(Vec<SeedPair>, Vec<BatchJob>)> {
    let out = cfg.out_dir();
    ensure_dir(out)?;
    let seeds = load_seeds(cfg)?;
    let jobs = generate_jobs(&seeds, &cfg.augmentation, &JointLimits::default(), cfg.seed)?;
    write_json(&out.join(SEEDS_FILE), &seeds)?;
    write_json(&out.join(INITIAL_FILE), &jobs)?;
    Ok((seeds, jobs))
}

pub fn load_jobs(out: &Path) -> Result<Vec<BatchJob>> {
    let path = out.join(INITIAL_FILE);
    require(&path, "gen-poses")?;
    read_json(&path)
}

/// Anchors from the configured file, or selected from the initial poses.
pub fn anchors_stage(cfg: &PipelineConfig, models: &HandPair, jobs: &[BatchJob]) -> Result<AnchorSets> {
    let out = cfg.out_dir();
    ensure_dir(out)?;
    let anchors = match &cfg.paths.anchors {
        Some(p) => AnchorSets::load(p)?,
        None => {
            let corpus: Vec<PosePair> = jobs.iter().map(|j| j.initial.clone()).collect();
            select_anchors(models, &corpus, ANCHOR_COUNT)?
        }
    };
    anchors.validate(models)?;
    anchors.save(&out.join(ANCHORS_FILE))?;
    Ok(anchors)
}

pub fn load_anchors(out: &Path, models: &HandPair) -> Result<AnchorSets> {
    let path = out.join(ANCHORS_FILE);
    require(&path, "select-anchors")?;
    let a = AnchorSets::load(&path)?;
    a.validate(models)?;
    Ok(a)
}

/// Discriminator from the configured file, or trained from scratch. Writes the
/// parameters and, when trained, the per-epoch loss curve.
pub fn train_disc_stage(cfg: &PipelineConfig) -> Result<Discriminator> {
    let out = cfg.out_dir();
    ensure_dir(out)?;
    let net = match &cfg.paths.discriminator {
        Some(p) => Discriminator::load(p)?,
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ STREAM_DISC_CORPUS);
            let (natural, perturbed) =
                build_corpus(&cfg.discriminator, &cfg.augmentation, &JointLimits::default(), &mut rng);
            let mut net = Discriminator::default_architecture(cfg.seed ^ STREAM_DISC_INIT);
            let curve = train(&mut net, &natural, &perturbed, &cfg.discriminator, cfg.seed ^ STREAM_DISC_TRAIN)?;
            let mut csv = String::from("epoch,mse\n");
            for (i, l) in curve.iter().enumerate() {
                csv.push_str(&format!("{i},{l}\n"));
            }
            write_bytes(&out.join(DISC_CURVE_FILE), csv.as_bytes())?;
            net
        }
    };
    net.save(&out.join(DISCRIMINATOR_FILE))?;
    Ok(net)
}

pub fn load_discriminator(out: &Path) -> Result<Discriminator> {
    let path = out.join(DISCRIMINATOR_FILE);
    require(&path, "train-disc")?;
    Discriminator::load(&path)
}

/// Result of optimizing one job, as stored on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizedRecord {
    pub seed_id: String,
    pub seed_index: usize,
    pub augmentation_index: usize,
    pub initial: PosePair,
    pub optimized: Option<PosePair>,
    pub final_terms: Option<LossTerms>,
    pub error: Option<String>,
}

impl OptimizedRecord {
    pub fn job_id(&self) -> String {
        format!("{}#{}", self.seed_id, self.augmentation_index)
    }
}

/// Optimizes every initial pair; writes the results and one CSV of all traces.
pub fn optimize_stage(
    cfg: &PipelineConfig,
    models: &HandPair,
    jobs: &[BatchJob],
    anchors: &AnchorSets,
    net: &Discriminator,
) -> Result<(Vec<OptimizedRecord>, f64)> {
    let out = cfg.out_dir();
    ensure_dir(out)?;
    let limits = JointLimits::default();
    let grids = HandGrids::build(models, cfg.sdf.resolution, cfg.sdf.padding)?;
    let objective = Objective {
        models,
        grids: &grids,
        limits: &limits,
        discriminator: Some(net),
    };
    let outcomes = run_batch(jobs, &objective, anchors, &cfg.schedule, None)?;
    let secs = outcomes.iter().map(|o| o.optimize_secs).sum();
    let mut csv = String::new();
    let records: Vec<OptimizedRecord> = outcomes
        .into_iter()
        .map(|o| {
            let id = format!("{}#{}", o.job.seed_id, o.job.augmentation_index);
            append_trace(&mut csv, &id, &o.trace);
            OptimizedRecord {
                seed_id: o.job.seed_id,
                seed_index: o.job.seed_index,
                augmentation_index: o.job.augmentation_index,
                initial: o.job.initial,
                optimized: o.optimized,
                final_terms: o.final_terms,
                error: o.error,
            }
        })
        .collect();
    write_json(&out.join(OPTIMIZED_FILE), &records)?;
    write_bytes(&out.join(TRACES_FILE), csv.as_bytes())?;
    Ok((records, secs))
}

fn append_trace(csv: &mut String, id: &str, trace: &Trace) {
    let body = trace.to_csv();
    let mut lines = body.lines();
    let header = lines.next().unwrap_or_default();
    if csv.is_empty() {
        csv.push_str("job,");
        csv.push_str(header);
        csv.push('\n');
    }
    for l in lines {
        csv.push_str(id);
        csv.push(',');
        csv.push_str(l);
        csv.push('\n');
    }
}

pub fn load_optimized(out: &Path) -> Result<Vec<OptimizedRecord>> {
    let path = out.join(OPTIMIZED_FILE);
    require(&path, "optimize")?;
    read_json(&path)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterEntry {
    pub seed_id: String,
    pub augmentation_index: usize,
    pub pass: bool,
    pub max_depth_mm: f64,
    pub diagnostics: Vec<String>,
    pub input_contact: bool,
    pub output_contact: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterReport {
    pub tolerance_mm: f64,
    pub contact_mm: f64,
    pub summary: BatchSummary,
    /// Fraction of inputs and of optimized outputs with an anchor pair closer than `contact_mm`.
    pub input_contact_rate: f64,
    pub output_contact_rate: f64,
    pub entries: Vec<FilterEntry>,
}

/// Applies the validity filter; writes the report and the surviving library.
pub fn filter_stage(
    cfg: &PipelineConfig,
    models: &HandPair,
    anchors: &AnchorSets,
    records: &[OptimizedRecord],
) -> Result<(FilterReport, Vec<LibraryEntry>)> {
    use rayon::prelude::*;
    let out = cfg.out_dir();
    ensure_dir(out)?;
    let limits = JointLimits::default();
    let tol = cfg.filter.tolerance_mm * 1e-3;
    let within = cfg.filter.contact_mm * 1e-3;
    let entries: Vec<FilterEntry> = records
        .par_iter()
        .map(|r| {
            let input_contact = anchor_contact(models, anchors, &r.initial, within);
            match &r.optimized {
                Some(p) => {
                    let rep = validity_filter(p, models, &limits, tol);
                    FilterEntry {
                        seed_id: r.seed_id.clone(),
                        augmentation_index: r.augmentation_index,
                        pass: rep.pass,
                        max_depth_mm: rep.max_depth * 1e3,
                        diagnostics: rep.diagnostics,
                        input_contact,
                        output_contact: anchor_contact(models, anchors, p, within),
                    }
                }
                None => FilterEntry {
                    seed_id: r.seed_id.clone(),
                    augmentation_index: r.augmentation_index,
                    pass: false,
                    max_depth_mm: f64::NAN,
                    diagnostics: vec![format!("diverged: {}", r.error.as_deref().unwrap_or("unknown"))],
                    input_contact,
                    output_contact: false,
                },
            }
        })
        .collect();
    let passed = entries.iter().filter(|e| e.pass).count();
    let diverged = records.iter().filter(|r| r.optimized.is_none()).count();
    let n = entries.len();
    let rate = |f: fn(&FilterEntry) -> bool| {
        if n == 0 {
            0.0
        } else {
            entries.iter().filter(|e| f(e)).count() as f64 / n as f64
        }
    };
    let report = FilterReport {
        tolerance_mm: cfg.filter.tolerance_mm,
        contact_mm: cfg.filter.contact_mm,
        summary: BatchSummary {
            jobs: n,
            passed,
            rejected: n - passed - diverged,
            diverged,
            yield_rate: (n > 0).then(|| passed as f64 / n as f64),
        },
        input_contact_rate: rate(|e| e.input_contact),
        output_contact_rate: rate(|e| e.output_contact),
        entries,
    };
    let library: Vec<LibraryEntry> = records
        .iter()
        .zip(&report.entries)
        .filter(|(_, e)| e.pass)
        .map(|(r, _)| LibraryEntry {
            seed_id: r.seed_id.clone(),
            augmentation_index: r.augmentation_index,
            pair: r.optimized.clone().expect("passing records are optimized"),
        })
        .collect();
    write_json(&out.join(FILTER_FILE), &report)?;
    write_json(&out.join(LIBRARY_FILE), &library)?;
    Ok((report, library))
}

pub fn load_library(out: &Path) -> Result<Vec<LibraryEntry>> {
    let path = out.join(LIBRARY_FILE);
    require(&path, "filter")?;
    read_json(&path)
}

pub fn export_stage(cfg: &PipelineConfig, models: &HandPair, library: &[LibraryEntry]) -> Result<AnnotationManifest> {
    let dir = cfg.out_dir().join(ANNOTATIONS_DIR);
    export_annotations(models, library, &cfg.rig, cfg.export.cameras, &cfg.hash(), &dir)
}

/// Per-stage wall-clock seconds; reported but kept out of the manifest.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct StageTimes {
    pub gen_poses: f64,
    pub select_anchors: f64,
    pub train_disc: f64,
    pub optimize: f64,
    pub filter: f64,
    pub export: f64,
    /// Sum of per-job optimization times across workers.
    pub optimize_cpu: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub seed: u64,
    pub seeds: usize,
    pub summary: BatchSummary,
    pub input_contact_rate: f64,
    pub output_contact_rate: f64,
    pub library_poses: usize,
    pub annotation_records: usize,
    pub files: Vec<ManifestFile>,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub manifest: RunManifest,
    pub report: FilterReport,
    pub library: Vec<LibraryEntry>,
    pub records: Vec<OptimizedRecord>,
    pub times: StageTimes,
}

fn hash_file(dir: &Path, name: &str) -> Result<ManifestFile> {
    let path = dir.join(name);
    let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    Ok(ManifestFile {
        name: name.to_string(),
        sha256: sha256_hex(&bytes),
    })
}

/// All stages in order, then a manifest hashing every output file.
pub fn run_all(cfg: &PipelineConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let out = cfg.out_dir().to_path_buf();
    let mut times = StageTimes::default();
    let clock = Instant::now();
    let lap = |slot: &mut f64, t: &mut Instant| {
        *slot = t.elapsed().as_secs_f64();
        *t = Instant::now();
    };
    let mut t = clock;

    let models = build_models(cfg)?;
    let (seeds, jobs) = gen_poses(cfg)?;
    lap(&mut times.gen_poses, &mut t);
    let anchors = anchors_stage(cfg, &models, &jobs)?;
    lap(&mut times.select_anchors, &mut t);
    let net = train_disc_stage(cfg)?;
    lap(&mut times.train_disc, &mut t);
    let (records, cpu) = optimize_stage(cfg, &models, &jobs, &anchors, &net)?;
    times.optimize_cpu = cpu;
    lap(&mut times.optimize, &mut t);
    let (report, library) = filter_stage(cfg, &models, &anchors, &records)?;
    lap(&mut times.filter, &mut t);
    let annotations = if library.is_empty() {
        None
    } else {
        Some(export_stage(cfg, &models, &library)?)
    };
    lap(&mut times.export, &mut t);

    let mut files = Vec::new();
    for name in [SEEDS_FILE, INITIAL_FILE, ANCHORS_FILE, DISCRIMINATOR_FILE, OPTIMIZED_FILE, TRACES_FILE, FILTER_FILE, LIBRARY_FILE] {
        files.push(hash_file(&out, name)?);
    }
    if annotations.is_some() {
        let mut f = hash_file(&out.join(ANNOTATIONS_DIR), MANIFEST_NAME)?;
        f.name = format!("{ANNOTATIONS_DIR}/{MANIFEST_NAME}");
        files.push(f);
    }
    let manifest = RunManifest {
        config_hash: cfg.hash(),
        seed: cfg.seed,
        seeds: seeds.len(),
        summary: report.summary.clone(),
        input_contact_rate: report.input_contact_rate,
        output_contact_rate: report.output_contact_rate,
        library_poses: library.len(),
        annotation_records: annotations.as_ref().map_or(0, |a| a.records),
        files,
    };
    write_json(&out.join(RUN_MANIFEST), &manifest)?;
    write_bytes(&out.join(SUMMARY_FILE), summary_text(&manifest, &times, clock.elapsed().as_secs_f64()).as_bytes())?;
    Ok(RunOutput {
        manifest,
        report,
        library,
        records,
        times,
    })
}

pub fn summary_text(m: &RunManifest, t: &StageTimes, total: f64) -> String {
    let s = &m.summary;
    let y = s.yield_rate.map_or("n/a".to_string(), |y| format!("{y:.4}"));
    format!(
        "config {}\nseeds {}  jobs {}  passed {}  rejected {}  diverged {}\nyield {}\n\
         anchor contact rate: inputs {:.4}  outputs {:.4}\nlibrary poses {}  annotation records {}\n\
         seconds: gen-poses {:.2}  select-anchors {:.2}  train-disc {:.2}  optimize {:.2} (cpu {:.2})  filter {:.2}  export {:.2}  total {:.2}\n",
        m.config_hash,
        m.seeds,
        s.jobs,
        s.passed,
        s.rejected,
        s.diverged,
        y,
        m.input_contact_rate,
        m.output_contact_rate,
        m.library_poses,
        m.annotation_records,
        t.gen_poses,
        t.select_anchors,
        t.train_disc,
        t.optimize,
        t.optimize_cpu,
        t.filter,
        t.export,
        total
    )
}

/// Prediction without pose parameters: camera-space joints in meters, and
/// optionally camera-space mesh vertices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointPrediction {
    pub seed_id: String,
    pub augmentation_index: usize,
    pub camera_index: usize,
    pub joints_3d: [Vec<[f64; 3]>; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vertices: Option<[Vec<[f64; 3]>; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionSet {
    pub predictions: Vec<JointPrediction>,
}

type Key = (String, usize, usize);

/// Annotation files from a file or directory (the manifest is skipped).
pub fn annotation_files(path: &Path) -> Result<Vec<PathBuf>> {
    if path.is_dir() {
        let mut v: Vec<PathBuf> = fs::read_dir(path)
            .map_err(|e| Error::io(path, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json") && p.file_name().is_some_and(|n| n != MANIFEST_NAME))
            .collect();
        v.sort();
        Ok(v)
    } else if path.exists() {
        Ok(vec![path.to_path_buf()])
    } else {
        Err(Error::io(path, std::io::Error::new(std::io::ErrorKind::NotFound, "no such file or directory")))
    }
}

fn camera_vertices(models: &HandPair, pose: &PosePair, cam: &crate::scene::CameraParams) -> [Vec<[f64; 3]>; 2] {
    [Side::Right, Side::Left].map(|s| {
        crate::hand::PosedHand::new(models.get(s), pose.hand(s))
            .vertices
            .iter()
            .map(|v| {
                let c = cam.to_camera(v);
                [c.x, c.y, c.z]
            })
            .collect()
    })
}

struct Frame {
    joints: [Vec<[f64; 3]>; 2],
    vertices: Option<[Vec<[f64; 3]>; 2]>,
}

fn frames_from_annotations(models: &HandPair, files: &[PathBuf]) -> Result<Vec<(Key, Frame)>> {
    let mut out = Vec::new();
    for f in files {
        let ann: PoseAnnotations = read_annotations(f)?;
        for r in &ann.records {
            out.push((
                (r.seed_id.clone(), r.augmentation_index, r.camera_index),
                Frame {
                    joints: r.joints_3d.clone(),
                    vertices: Some(camera_vertices(models, &ann.pose, &r.camera)),
                },
            ));
        }
    }
    Ok(out)
}

fn load_frames(models: &HandPair, path: &Path) -> Result<Vec<(Key, Frame)>> {
    if path.is_file() {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        if let Ok(set) = serde_json::from_slice::<PredictionSet>(&bytes) {
            return Ok(set
                .predictions
                .into_iter()
                .map(|p| {
                    (
                        (p.seed_id, p.augmentation_index, p.camera_index),
                        Frame {
                            joints: p.joints_3d,
                            vertices: p.vertices,
                        },
                    )
                })
                .collect());
        }
    }
    frames_from_annotations(models, &annotation_files(path)?)
}

fn to_mm(points: &[[f64; 3]]) -> Vec<crate::mesh::Vec3> {
    points.iter().map(|p| crate::mesh::Vec3::from(*p) * 1e3).collect()
}

/// Matches predictions to ground truth by (seed id, augmentation, camera) and
/// evaluates all metrics. Every GT frame must have a prediction.
pub fn eval_stage(cfg: &PipelineConfig, models: &HandPair, gt: &Path, pred: &Path) -> Result<MetricsReport> {
    let gt_frames = load_frames(models, gt)?;
    let pred_frames: std::collections::HashMap<Key, Frame> = load_frames(models, pred)?.into_iter().collect();
    let mut samples = Vec::with_capacity(gt_frames.len());
    for (key, g) in &gt_frames {
        let p = pred_frames
            .get(key)
            .ok_or_else(|| Error::Shape(format!("no prediction for {} #{} camera {}", key.0, key.1, key.2)))?;
        let verts = |f: &Frame| f.vertices.as_ref().map(|v| [to_mm(&v[0]), to_mm(&v[1])]);
        samples.push(EvalSample {
            pred: [to_mm(&p.joints[0]), to_mm(&p.joints[1])],
            gt: [to_mm(&g.joints[0]), to_mm(&g.joints[1])],
            pred_vertices: verts(p),
            gt_vertices: verts(g),
        });
    }
    let report = evaluate_batch(&samples, &cfg.metrics)?;
    ensure_dir(cfg.out_dir())?;
    write_json(&cfg.out_dir().join(METRICS_FILE), &report)?;
    Ok(report)
}
