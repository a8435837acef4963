//! Two-hand pose-estimation metrics. Inputs and outputs are millimeters.

use nalgebra::{Matrix3, SVD};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hand::{joint_index, keypoint_parent, NUM_KEYPOINTS, WRIST};
use crate::mesh::Vec3;

/// Middle-finger MCP, the default root keypoint.
pub const MIDDLE_MCP: usize = joint_index(2, 0);
pub const DEFAULT_CONTACT_MM: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RootJoint {
    #[default]
    MiddleMcp,
    Wrist,
}

impl RootJoint {
    pub fn index(self) -> usize {
        match self {
            RootJoint::MiddleMcp => MIDDLE_MCP,
            RootJoint::Wrist => WRIST,
        }
    }
}

impl std::str::FromStr for RootJoint {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "middle_mcp" | "middle-mcp" => Ok(RootJoint::MiddleMcp),
            "wrist" => Ok(RootJoint::Wrist),
            _ => Err(Error::Config(format!("root joint must be middle_mcp or wrist, got {s}"))),
        }
    }
}

/// Prediction and ground truth for one frame; index 0 is the right hand.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalSample {
    pub pred: [Vec<Vec3>; 2],
    pub gt: [Vec<Vec3>; 2],
    pub pred_vertices: Option<[Vec<Vec3>; 2]>,
    pub gt_vertices: Option<[Vec<Vec3>; 2]>,
}

impl EvalSample {
    pub fn joints(pred: [Vec<Vec3>; 2], gt: [Vec<Vec3>; 2]) -> Self {
        Self {
            pred,
            gt,
            pred_vertices: None,
            gt_vertices: None,
        }
    }

    fn check(&self) -> Result<()> {
        for h in 0..2 {
            if self.pred[h].len() != self.gt[h].len() {
                return Err(Error::Shape(format!(
                    "hand {h}: {} predicted joints vs {} ground-truth joints",
                    self.pred[h].len(),
                    self.gt[h].len()
                )));
            }
            if self.gt[h].is_empty() {
                return Err(Error::Shape(format!("hand {h} has no joints")));
            }
        }
        Ok(())
    }

    fn root(&self, root: RootJoint) -> Result<usize> {
        let r = root.index();
        if self.gt.iter().any(|g| g.len() <= r) {
            return Err(Error::Shape(format!("root keypoint {r} is missing")));
        }
        Ok(r)
    }
}

fn mean_error(pairs: impl Iterator<Item = (Vec3, Vec3)>) -> f64 {
    let (mut sum, mut n) = (0.0, 0usize);
    for (a, b) in pairs {
        sum += (a - b).norm();
        n += 1;
    }
    sum / n as f64
}

fn root_aligned_error(pred: &[Vec<Vec3>; 2], gt: &[Vec<Vec3>; 2], r: usize) -> f64 {
    mean_error((0..2).flat_map(|h| {
        let (pr, gr) = (pred[h][r], gt[h][r]);
        pred[h].iter().zip(&gt[h]).map(move |(p, g)| (p - pr, g - gr))
    }))
}

/// Mean joint error after translating each predicted hand so its root meets the GT root.
pub fn mpjpe(s: &EvalSample, root: RootJoint) -> Result<f64> {
    s.check()?;
    let r = s.root(root)?;
    Ok(root_aligned_error(&s.pred, &s.gt, r))
}

/// Similarity (or rigid, without scale) transform mapping `src` onto `dst`.
#[derive(Debug, Clone, PartialEq)]
pub struct Alignment {
    pub scale: f64,
    pub rotation: Matrix3<f64>,
    pub translation: Vec3,
}

impl Alignment {
    pub fn apply(&self, p: &Vec3) -> Vec3 {
        self.rotation * p * self.scale + self.translation
    }
}

/// Closed-form least-squares alignment of `src` to `dst`.
pub fn procrustes(src: &[Vec3], dst: &[Vec3], with_scale: bool) -> Result<Alignment> {
    if src.len() != dst.len() {
        return Err(Error::Shape(format!("{} vs {} points", src.len(), dst.len())));
    }
    if src.len() < 3 {
        return Err(Error::DegenerateAlignment("fewer than 3 points".into()));
    }
    let n = src.len() as f64;
    let ms = src.iter().sum::<Vec3>() / n;
    let md = dst.iter().sum::<Vec3>() / n;
    let mut cov = Matrix3::zeros();
    let mut var_s = 0.0;
    let mut scatter_s = Matrix3::zeros();
    let mut scatter_d = Matrix3::zeros();
    for (a, b) in src.iter().zip(dst) {
        let (a, b) = (a - ms, b - md);
        cov += b * a.transpose();
        scatter_s += a * a.transpose();
        scatter_d += b * b.transpose();
        var_s += a.norm_squared();
    }
    for (m, what) in [(&scatter_s, "source"), (&scatter_d, "target")] {
        let sv = m.symmetric_eigenvalues();
        let mut v: Vec<f64> = sv.iter().copied().collect();
        v.sort_by(|a, b| b.total_cmp(a));
        if !(v[1] > 1e-12 * v[0].max(f64::MIN_POSITIVE)) {
            return Err(Error::DegenerateAlignment(format!("{what} points are collinear")));
        }
    }
    let svd = SVD::new(cov, true, true);
    let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
    let d = (u * vt).determinant().signum();
    let sign = Matrix3::from_diagonal(&Vec3::new(1.0, 1.0, d));
    let rotation = u * sign * vt;
    let scale = if with_scale {
        let sv = svd.singular_values;
        (sv[0] + sv[1] + d * sv[2]) / var_s
    } else {
        1.0
    };
    Ok(Alignment {
        scale,
        translation: md - rotation * ms * scale,
        rotation,
    })
}

fn pa_error(s: &EvalSample, with_scale: bool) -> Result<f64> {
    s.check()?;
    let mut pairs = Vec::new();
    for h in 0..2 {
        let a = procrustes(&s.pred[h], &s.gt[h], with_scale)?;
        pairs.extend(s.pred[h].iter().zip(&s.gt[h]).map(|(p, g)| (a.apply(p), *g)));
    }
    Ok(mean_error(pairs.into_iter()))
}

/// Mean joint error after a per-hand similarity alignment.
pub fn pampjpe(s: &EvalSample) -> Result<f64> {
    pa_error(s, true)
}

/// Rotation and translation only.
pub fn pampjpe_rigid(s: &EvalSample) -> Result<f64> {
    pa_error(s, false)
}

/// Rescales every predicted bone to its GT length, keeping directions.
pub fn rescale_bones(pred: &[Vec3], gt: &[Vec3]) -> Result<Vec<Vec3>> {
    if pred.len() != NUM_KEYPOINTS || gt.len() != NUM_KEYPOINTS {
        return Err(Error::Shape(format!("bone rescaling needs {NUM_KEYPOINTS} keypoints per hand")));
    }
    let mut out = pred.to_vec();
    for k in 0..NUM_KEYPOINTS {
        if let Some(p) = keypoint_parent(k) {
            let bone = pred[k] - pred[p];
            let len = bone.norm();
            if len == 0.0 {
                return Err(Error::DegenerateAlignment(format!("predicted bone {p}->{k} has zero length")));
            }
            out[k] = out[p] + bone * ((gt[k] - gt[p]).norm() / len);
        }
    }
    Ok(out)
}

/// Root-aligned error after matching predicted bone lengths to GT.
pub fn smpjpe(s: &EvalSample, root: RootJoint) -> Result<f64> {
    s.check()?;
    let r = s.root(root)?;
    let scaled = [rescale_bones(&s.pred[0], &s.gt[0])?, rescale_bones(&s.pred[1], &s.gt[1])?];
    Ok(root_aligned_error(&scaled, &s.gt, r))
}

/// Error of the left root relative to the right root.
pub fn mrrpe(s: &EvalSample, root: RootJoint) -> Result<f64> {
    s.check()?;
    let r = s.root(root)?;
    let pred = s.pred[1][r] - s.pred[0][r];
    let gt = s.gt[1][r] - s.gt[0][r];
    Ok((pred - gt).norm())
}

/// Contact deviation: over GT vertex pairs (right, left) closer than `threshold`,
/// the mean of `|d_pred − d_gt|`. `None` when GT has no contact.
pub fn cdev(s: &EvalSample, threshold: f64) -> Result<Option<f64>> {
    let (Some(pv), Some(gv)) = (&s.pred_vertices, &s.gt_vertices) else {
        return Err(Error::Shape("contact deviation needs predicted and GT meshes".into()));
    };
    for h in 0..2 {
        if pv[h].len() != gv[h].len() {
            return Err(Error::Shape(format!("hand {h}: mesh vertex counts differ")));
        }
    }
    let (mut sum, mut n) = (0.0, 0usize);
    for (i, gr) in gv[0].iter().enumerate() {
        for (j, gl) in gv[1].iter().enumerate() {
            let dg = (gr - gl).norm();
            if dg < threshold {
                sum += ((pv[0][i] - pv[1][j]).norm() - dg).abs();
                n += 1;
            }
        }
    }
    Ok((n > 0).then(|| sum / n as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricsConfig {
    pub root: RootJoint,
    pub contact_threshold_mm: f64,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            root: RootJoint::MiddleMcp,
            contact_threshold_mm: DEFAULT_CONTACT_MM,
        }
    }
}

/// Per-sample metrics. `cdev` is absent without meshes or contacts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleMetrics {
    pub mpjpe: f64,
    pub pampjpe: f64,
    pub smpjpe: f64,
    pub mrrpe: f64,
    pub cdev: Option<f64>,
}

pub fn evaluate(s: &EvalSample, cfg: &MetricsConfig) -> Result<SampleMetrics> {
    Ok(SampleMetrics {
        mpjpe: mpjpe(s, cfg.root)?,
        pampjpe: pampjpe(s)?,
        smpjpe: smpjpe(s, cfg.root)?,
        mrrpe: mrrpe(s, cfg.root)?,
        cdev: if s.pred_vertices.is_some() && s.gt_vertices.is_some() {
            cdev(s, cfg.contact_threshold_mm)?
        } else {
            None
        },
    })
}

/// Means over a batch. `cdev` averages only samples with contact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub samples: usize,
    pub root: RootJoint,
    pub mpjpe: f64,
    pub pampjpe: f64,
    pub smpjpe: f64,
    pub mrrpe: f64,
    pub cdev: Option<f64>,
    pub cdev_samples: usize,
}

impl MetricsReport {
    pub fn to_table(&self) -> String {
        let cdev = self.cdev.map_or("n/a".to_string(), |v| format!("{v:.4}"));
        format!(
            "metric    value (mm)\nMPJPE     {:.4}\nPAMPJPE   {:.4}\nSMPJPE    {:.4}\nMRRPE     {:.4}\nCDev      {} ({} of {} samples with contact)\n",
            self.mpjpe, self.pampjpe, self.smpjpe, self.mrrpe, cdev, self.cdev_samples, self.samples
        )
    }
}

/// Evaluates in parallel and reduces in sample order.
pub fn evaluate_batch(samples: &[EvalSample], cfg: &MetricsConfig) -> Result<MetricsReport> {
    if samples.is_empty() {
        return Err(Error::Shape("no samples to evaluate".into()));
    }
    let per: Vec<SampleMetrics> = samples.par_iter().map(|s| evaluate(s, cfg)).collect::<Result<_>>()?;
    let n = per.len() as f64;
    let mean = |f: fn(&SampleMetrics) -> f64| per.iter().map(f).sum::<f64>() / n;
    let contacts: Vec<f64> = per.iter().filter_map(|m| m.cdev).collect();
    Ok(MetricsReport {
        samples: per.len(),
        root: cfg.root,
        mpjpe: mean(|m| m.mpjpe),
        pampjpe: mean(|m| m.pampjpe),
        smpjpe: mean(|m| m.smpjpe),
        mrrpe: mean(|m| m.mrrpe),
        cdev: (!contacts.is_empty()).then(|| contacts.iter().sum::<f64>() / contacts.len() as f64),
        cdev_samples: contacts.len(),
    })
}
