//! C ABI over the handsynth pipeline.
//!
//! Every fallible call returns an [`HsStatus`]; on failure the message is
//! available from [`hs_last_error`] on the same thread until the next failing
//! call. Handles are opaque and owned by the caller, who releases them with the
//! matching `_free` function. Lengths are meters, angles radians.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use nalgebra::{Matrix3, Rotation3, Vector3};

use handsynth::config::PipelineConfig;
use handsynth::hand::{forward_kinematics, joint_positions, HandPair, HandPose, HandProportions, PosePair, PosedHand, Side, POSE_DIM};
use handsynth::limits::JointLimits;
use handsynth::optimizer::validity_filter;
use handsynth::pipeline;
use handsynth::{Error, ErrorFamily};

/// Result of every fallible call. Error values match the CLI exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HsStatus {
    Ok = 0,
    Config = 2,
    Io = 3,
    Divergence = 4,
    DegenerateGeometry = 5,
    Data = 6,
    /// Null pointer, bad UTF-8 or an out-of-range argument.
    InvalidArgument = 7,
    /// A panic was caught at the boundary.
    Internal = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HsSide {
    Right = 0,
    Left = 1,
}

impl From<HsSide> for Side {
    fn from(s: HsSide) -> Side {
        match s {
            HsSide::Right => Side::Right,
            HsSide::Left => Side::Left,
        }
    }
}

/// One hand's pose: 45 finger angles (finger-major, joint-minor, then bend,
/// splay, twist), a row-major root rotation matrix and the root translation.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HsPose {
    pub angles: [f64; 45],
    pub root_rotation: [f64; 9],
    pub root_translation: [f64; 3],
}

/// Outcome of [`hs_run_all`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct HsRunSummary {
    pub jobs: usize,
    pub passed: usize,
    pub rejected: usize,
    pub diverged: usize,
    /// Pass rate; NaN for an empty batch.
    pub yield_rate: f64,
    pub input_contact_rate: f64,
    pub output_contact_rate: f64,
    pub library_poses: usize,
    pub annotation_records: usize,
}

/// Outcome of [`hs_eval`], millimeters.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct HsMetrics {
    pub samples: usize,
    pub mpjpe: f64,
    pub pampjpe: f64,
    pub smpjpe: f64,
    pub mrrpe: f64,
    /// NaN when no sample has a ground-truth contact.
    pub cdev: f64,
    pub cdev_samples: usize,
}

/// Opaque pipeline configuration.
pub struct HsConfig(PipelineConfig);

/// Opaque pair of hand models.
pub struct HsModels(HandPair);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(HsStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match e.family() {
            ErrorFamily::Config => HsStatus::Config,
            ErrorFamily::Io => HsStatus::Io,
            ErrorFamily::Divergence => HsStatus::Divergence,
            ErrorFamily::DegenerateGeometry => HsStatus::DegenerateGeometry,
            ErrorFamily::Data => HsStatus::Data,
        };
        Failure(status, e.to_string())
    }
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(HsStatus::InvalidArgument, msg.into())
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> HsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => HsStatus::Ok,
        Ok(Err(Failure(s, msg))) => {
            set_error(msg);
            s
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal error: {msg}"));
            HsStatus::Internal
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, name: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| invalid(format!("{name} is null")))
}

unsafe fn deref_mut<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| invalid(format!("{name} is null")))
}

unsafe fn path_arg(p: *const c_char, name: &str) -> Result<PathBuf, Failure> {
    if p.is_null() {
        return Err(invalid(format!("{name} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(PathBuf::from)
        .map_err(|_| invalid(format!("{name} is not UTF-8")))
}

fn to_pose(side: Side, p: &HsPose) -> Result<HandPose, Failure> {
    if p.angles.iter().chain(&p.root_rotation).chain(&p.root_translation).any(|x| !x.is_finite()) {
        return Err(invalid("pose has non-finite entries"));
    }
    let m = Matrix3::from_row_slice(&p.root_rotation);
    if (m.transpose() * m - Matrix3::identity()).norm() > 1e-6 || m.determinant() < 0.0 {
        return Err(invalid("root_rotation is not a rotation matrix"));
    }
    let mut pose = HandPose::t_pose(side);
    for (j, a) in pose.angles.iter_mut().enumerate() {
        a.copy_from_slice(&p.angles[3 * j..3 * j + 3]);
    }
    pose.root_rotation = Rotation3::from_matrix_unchecked(m);
    pose.root_translation = Vector3::from_row_slice(&p.root_translation);
    Ok(pose)
}

/// Library version, a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn hs_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failure on this thread, or null. Valid until the next
/// failing call on the same thread.
#[no_mangle]
pub extern "C" fn hs_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Built-in default configuration.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn hs_config_default(out: *mut *mut HsConfig) -> HsStatus {
    guard(|| {
        let out = deref_mut(out, "out")?;
        *out = Box::into_raw(Box::new(HsConfig(PipelineConfig::default())));
        Ok(())
    })
}

/// Reads and validates a TOML configuration file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hs_config_load(path: *const c_char, out: *mut *mut HsConfig) -> HsStatus {
    guard(|| {
        let path = path_arg(path, "path")?;
        let out = deref_mut(out, "out")?;
        *out = Box::into_raw(Box::new(HsConfig(PipelineConfig::load(&path)?)));
        Ok(())
    })
}

/// # Safety
/// `cfg` must be a live handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn hs_config_set_out_dir(cfg: *mut HsConfig, path: *const c_char) -> HsStatus {
    guard(|| {
        let cfg = deref_mut(cfg, "cfg")?;
        cfg.0.paths.out_dir = path_arg(path, "path")?;
        Ok(())
    })
}

/// # Safety
/// `cfg` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn hs_config_set_seed(cfg: *mut HsConfig, seed: u64) -> HsStatus {
    guard(|| {
        deref_mut(cfg, "cfg")?.0.seed = seed;
        Ok(())
    })
}

/// Worker threads for batch stages; 0 uses every core.
///
/// # Safety
/// `cfg` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn hs_config_set_workers(cfg: *mut HsConfig, workers: usize) -> HsStatus {
    guard(|| {
        deref_mut(cfg, "cfg")?.0.workers = workers;
        Ok(())
    })
}

/// Releases a configuration; null is ignored.
///
/// # Safety
/// `cfg` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn hs_config_free(cfg: *mut HsConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Runs every stage into the configured output directory.
///
/// # Safety
/// `cfg` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn hs_run_all(cfg: *const HsConfig, out: *mut HsRunSummary) -> HsStatus {
    guard(|| {
        let cfg = &deref(cfg, "cfg")?.0;
        let out = deref_mut(out, "out")?;
        let run = pipeline::with_workers(cfg.workers, || pipeline::run_all(cfg))??;
        let m = &run.manifest;
        *out = HsRunSummary {
            jobs: m.summary.jobs,
            passed: m.summary.passed,
            rejected: m.summary.rejected,
            diverged: m.summary.diverged,
            yield_rate: m.summary.yield_rate.unwrap_or(f64::NAN),
            input_contact_rate: m.input_contact_rate,
            output_contact_rate: m.output_contact_rate,
            library_poses: m.library_poses,
            annotation_records: m.annotation_records,
        };
        Ok(())
    })
}

/// Metrics of predictions against ground-truth annotations (files or directories).
///
/// # Safety
/// `cfg` must be a live handle; paths NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn hs_eval(
    cfg: *const HsConfig,
    gt: *const c_char,
    pred: *const c_char,
    out: *mut HsMetrics,
) -> HsStatus {
    guard(|| {
        let cfg = &deref(cfg, "cfg")?.0;
        let gt = path_arg(gt, "gt")?;
        let pred = path_arg(pred, "pred")?;
        let out = deref_mut(out, "out")?;
        let models = pipeline::build_models(cfg)?;
        let r = pipeline::eval_stage(cfg, &models, &gt, &pred)?;
        *out = HsMetrics {
            samples: r.samples,
            mpjpe: r.mpjpe,
            pampjpe: r.pampjpe,
            smpjpe: r.smpjpe,
            mrrpe: r.mrrpe,
            cdev: r.cdev.unwrap_or(f64::NAN),
            cdev_samples: r.cdev_samples,
        };
        Ok(())
    })
}

/// Both hand models with default proportions.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hs_models_new(out: *mut *mut HsModels) -> HsStatus {
    guard(|| {
        let out = deref_mut(out, "out")?;
        *out = Box::into_raw(Box::new(HsModels(HandPair::build(&HandProportions::default())?)));
        Ok(())
    })
}

/// Releases models; null is ignored.
///
/// # Safety
/// `models` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn hs_models_free(models: *mut HsModels) {
    if !models.is_null() {
        drop(Box::from_raw(models));
    }
}

/// # Safety
/// `models` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn hs_models_vertex_count(models: *const HsModels, side: HsSide, out: *mut usize) -> HsStatus {
    guard(|| {
        let m = &deref(models, "models")?.0;
        *deref_mut(out, "out")? = m.get(side.into()).vertex_count();
        Ok(())
    })
}

/// Zero angles, identity rotation, zero translation.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hs_pose_rest(out: *mut HsPose) -> HsStatus {
    guard(|| {
        let mut r = [0.0; 9];
        r[0] = 1.0;
        r[4] = 1.0;
        r[8] = 1.0;
        *deref_mut(out, "out")? = HsPose {
            angles: [0.0; POSE_DIM],
            root_rotation: r,
            root_translation: [0.0; 3],
        };
        Ok(())
    })
}

/// The 21 keypoints (16 joints then 5 fingertips) as 63 consecutive x, y, z values.
///
/// # Safety
/// `models` live, `pose` readable, `out` writable for 63 doubles.
#[no_mangle]
pub unsafe extern "C" fn hs_keypoints(
    models: *const HsModels,
    side: HsSide,
    pose: *const HsPose,
    out: *mut f64,
) -> HsStatus {
    guard(|| {
        let m = &deref(models, "models")?.0;
        let side = Side::from(side);
        let pose = to_pose(side, deref(pose, "pose")?)?;
        if out.is_null() {
            return Err(invalid("out is null"));
        }
        let model = m.get(side);
        let k = joint_positions(model, &forward_kinematics(model, &pose));
        let out = std::slice::from_raw_parts_mut(out, 3 * k.len());
        for (i, p) in k.iter().enumerate() {
            out[3 * i..3 * i + 3].copy_from_slice(p.as_slice());
        }
        Ok(())
    })
}

/// Posed mesh vertices as consecutive x, y, z values. `capacity` is the length
/// of `out` in doubles and must be at least three times the vertex count.
///
/// # Safety
/// `models` live, `pose` readable, `out` writable for `capacity` doubles.
#[no_mangle]
pub unsafe extern "C" fn hs_vertices(
    models: *const HsModels,
    side: HsSide,
    pose: *const HsPose,
    out: *mut f64,
    capacity: usize,
) -> HsStatus {
    guard(|| {
        let m = &deref(models, "models")?.0;
        let side = Side::from(side);
        let pose = to_pose(side, deref(pose, "pose")?)?;
        let model = m.get(side);
        let need = 3 * model.vertex_count();
        if out.is_null() || capacity < need {
            return Err(invalid(format!("out must hold {need} doubles")));
        }
        let out = std::slice::from_raw_parts_mut(out, need);
        for (i, v) in PosedHand::new(model, &pose).vertices.iter().enumerate() {
            out[3 * i..3 * i + 3].copy_from_slice(v.as_slice());
        }
        Ok(())
    })
}

/// Validity filter on one pair: joint limits and the brute-force penetration
/// depth against `tolerance` (meters). `passed` gets 1 or 0.
///
/// # Safety
/// `models` live; `right`, `left` readable; `passed`, `depth` writable.
#[no_mangle]
pub unsafe extern "C" fn hs_check_pair(
    models: *const HsModels,
    right: *const HsPose,
    left: *const HsPose,
    tolerance: f64,
    passed: *mut u8,
    depth: *mut f64,
) -> HsStatus {
    guard(|| {
        let m = &deref(models, "models")?.0;
        let pair = PosePair::new(
            to_pose(Side::Right, deref(right, "right")?)?,
            to_pose(Side::Left, deref(left, "left")?)?,
        );
        if !(tolerance.is_finite() && tolerance >= 0.0) {
            return Err(invalid("tolerance must be non-negative"));
        }
        let passed = deref_mut(passed, "passed")?;
        let depth = deref_mut(depth, "depth")?;
        let r = validity_filter(&pair, m, &JointLimits::default(), tolerance);
        *passed = r.pass as u8;
        *depth = r.max_depth;
        Ok(())
    })
}
