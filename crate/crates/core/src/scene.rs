//! Spherical camera rig, pinhole projection and annotation export.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{Matrix3, Rotation3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::hand::{joint_positions, HandPair, PosePair, PosedHand, Side, NUM_KEYPOINTS};
use crate::mesh::{TriMesh, Vec3};

pub const ANNOTATION_VERSION: u32 = 1;
pub const MANIFEST_NAME: &str = "manifest.json";

/// Pinhole camera. `rotation`/`translation` map world to camera coordinates,
/// `x_cam = R·x_world + t`; the camera looks along +z with image y pointing down.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraParams {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
    pub rotation: [[f64; 3]; 3],
    pub translation: [f64; 3],
}

impl CameraParams {
    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        Matrix3::from_fn(|i, j| self.rotation[i][j])
    }

    pub fn to_camera(&self, p: &Vec3) -> Vec3 {
        self.rotation_matrix() * p + Vec3::from(self.translation)
    }

    /// Camera center in world coordinates.
    pub fn position(&self) -> Vec3 {
        -(self.rotation_matrix().transpose() * Vec3::from(self.translation))
    }

    /// Pixel coordinates of a camera-space point.
    pub fn pixel(&self, pc: &Vec3) -> [f64; 2] {
        [self.fx * pc.x / pc.z + self.cx, self.fy * pc.y / pc.z + self.cy]
    }
}

/// One projected point. `in_front` is false for points at or behind the camera plane,
/// whose pixel coordinates are meaningless.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub pixel: [f64; 2],
    pub depth: f64,
    pub in_front: bool,
}

pub fn project(points: &[Vec3], cam: &CameraParams) -> Vec<Projection> {
    points
        .iter()
        .map(|p| {
            let pc = cam.to_camera(p);
            Projection {
                pixel: cam.pixel(&pc),
                depth: pc.z,
                in_front: pc.z > 0.0,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RigConfig {
    pub radius: f64,
    /// Track elevations, degrees.
    pub elevations_deg: Vec<f64>,
    pub views_per_track: usize,
    pub fx: f64,
    pub fy: f64,
    pub width: u32,
    pub height: u32,
}

impl Default for RigConfig {
    fn default() -> Self {
        Self {
            radius: 0.6,
            elevations_deg: vec![-45.0, -15.0, 15.0, 45.0],
            views_per_track: 10,
            fx: 500.0,
            fy: 500.0,
            width: 512,
            height: 334,
        }
    }
}

impl RigConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.radius.is_finite() && self.radius > 0.0) {
            return Err(Error::Config(format!("rig radius {} must be positive", self.radius)));
        }
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(Error::Config("focal lengths must be positive".into()));
        }
        if self.elevations_deg.is_empty() || self.views_per_track == 0 {
            return Err(Error::Config("rig needs at least one track and one view".into()));
        }
        if self.elevations_deg.iter().any(|e| !(e.abs() < 90.0)) {
            return Err(Error::Config("track elevations must lie strictly between -90 and 90 degrees".into()));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::Config("image size must be positive".into()));
        }
        Ok(())
    }

    pub fn camera_count(&self) -> usize {
        self.elevations_deg.len() * self.views_per_track
    }
}

/// World-to-camera rotation for a camera at `eye` looking at `target`.
pub fn look_at(eye: &Vec3, target: &Vec3) -> Rotation3<f64> {
    let z = (target - eye).normalize();
    let mut up = Vec3::y();
    if z.cross(&up).norm() < 1e-6 {
        up = Vec3::z();
    }
    let x = z.cross(&up).normalize();
    let y = z.cross(&x);
    Rotation3::from_matrix_unchecked(Matrix3::from_rows(&[x.transpose(), y.transpose(), z.transpose()]))
}

/// Cameras ordered track by track, azimuths uniformly spaced from 0.
pub fn build_rig(center: &Vec3, cfg: &RigConfig) -> Result<Vec<CameraParams>> {
    cfg.validate()?;
    let mut cams = Vec::with_capacity(cfg.camera_count());
    for &el in &cfg.elevations_deg {
        let el = el.to_radians();
        for k in 0..cfg.views_per_track {
            let az = std::f64::consts::TAU * k as f64 / cfg.views_per_track as f64;
            let dir = Vec3::new(el.cos() * az.sin(), el.sin(), el.cos() * az.cos());
            let eye = center + dir * cfg.radius;
            let r = look_at(&eye, center);
            let t = -(r * eye);
            let m = r.matrix();
            cams.push(CameraParams {
                fx: cfg.fx,
                fy: cfg.fy,
                cx: cfg.width as f64 / 2.0,
                cy: cfg.height as f64 / 2.0,
                width: cfg.width,
                height: cfg.height,
                rotation: [
                    [m[(0, 0)], m[(0, 1)], m[(0, 2)]],
                    [m[(1, 0)], m[(1, 1)], m[(1, 2)]],
                    [m[(2, 0)], m[(2, 1)], m[(2, 2)]],
                ],
                translation: [t.x, t.y, t.z],
            });
        }
    }
    Ok(cams)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum CameraSelection {
    /// One camera per azimuth slot, cycling through the tracks.
    #[default]
    Sparse,
    Full,
}

impl std::str::FromStr for CameraSelection {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sparse" => Ok(CameraSelection::Sparse),
            "full" => Ok(CameraSelection::Full),
            _ => Err(Error::Config(format!("camera selection must be sparse or full, got {s}"))),
        }
    }
}

/// Rig indices used for the `pose_index`-th pose.
pub fn select_cameras(cfg: &RigConfig, selection: CameraSelection, pose_index: usize) -> Vec<usize> {
    let tracks = cfg.elevations_deg.len();
    let views = cfg.views_per_track;
    match selection {
        CameraSelection::Full => (0..tracks * views).collect(),
        CameraSelection::Sparse => (0..views).map(|k| ((pose_index + k) % tracks) * views + k).collect(),
    }
}

/// A pose in the generated library.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LibraryEntry {
    pub seed_id: String,
    pub augmentation_index: usize,
    pub pair: PosePair,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub seed_id: String,
    pub augmentation_index: usize,
    pub camera_index: usize,
    pub camera: CameraParams,
    /// Right then left, 21 keypoints each, camera coordinates in meters.
    pub joints_3d: [Vec<[f64; 3]>; 2],
    /// Right then left, pixels.
    pub joints_2d: [Vec<[f64; 2]>; 2],
}

impl AnnotationRecord {
    /// Largest pixel distance between the stored 2D joints and a fresh projection of the 3D joints.
    pub fn reprojection_error(&self) -> f64 {
        let mut worst = 0.0f64;
        for h in 0..2 {
            for (p3, p2) in self.joints_3d[h].iter().zip(&self.joints_2d[h]) {
                let q = self.camera.pixel(&Vec3::from(*p3));
                worst = worst.max((q[0] - p2[0]).hypot(q[1] - p2[1]));
            }
        }
        worst
    }
}

/// Contents of one per-pose annotation file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseAnnotations {
    pub version: u32,
    pub seed_id: String,
    pub augmentation_index: usize,
    pub pose: PosePair,
    pub records: Vec<AnnotationRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestFile {
    pub name: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationManifest {
    pub version: u32,
    pub config_hash: String,
    pub poses: usize,
    pub cameras_per_pose: usize,
    pub records: usize,
    pub files: Vec<ManifestFile>,
}

/// World-space keypoints of both hands, right first.
pub fn pair_keypoints(models: &HandPair, pair: &PosePair) -> [[Vec3; NUM_KEYPOINTS]; 2] {
    [Side::Right, Side::Left].map(|s| {
        let posed = PosedHand::new(models.get(s), pair.hand(s));
        joint_positions(models.get(s), &posed.transforms)
    })
}

/// Rig center for a pair: the mean of its 42 keypoints.
pub fn pair_center(models: &HandPair, pair: &PosePair) -> Vec3 {
    let k = pair_keypoints(models, pair);
    k.iter().flatten().sum::<Vec3>() / (2 * NUM_KEYPOINTS) as f64
}

/// Records for one pose, one per selected camera.
pub fn annotate_pose(
    models: &HandPair,
    entry: &LibraryEntry,
    pose_index: usize,
    rig: &RigConfig,
    selection: CameraSelection,
) -> Result<PoseAnnotations> {
    let keypoints = pair_keypoints(models, &entry.pair);
    let center = keypoints.iter().flatten().sum::<Vec3>() / (2 * NUM_KEYPOINTS) as f64;
    let cams = build_rig(&center, rig)?;
    let records = select_cameras(rig, selection, pose_index)
        .into_iter()
        .map(|ci| {
            let cam = &cams[ci];
            let mut j3 = [Vec::new(), Vec::new()];
            let mut j2 = [Vec::new(), Vec::new()];
            for h in 0..2 {
                for p in &keypoints[h] {
                    let pc = cam.to_camera(p);
                    j3[h].push([pc.x, pc.y, pc.z]);
                    j2[h].push(cam.pixel(&pc));
                }
            }
            AnnotationRecord {
                seed_id: entry.seed_id.clone(),
                augmentation_index: entry.augmentation_index,
                camera_index: ci,
                camera: cam.clone(),
                joints_3d: j3,
                joints_2d: j2,
            }
        })
        .collect();
    Ok(PoseAnnotations {
        version: ANNOTATION_VERSION,
        seed_id: entry.seed_id.clone(),
        augmentation_index: entry.augmentation_index,
        pose: entry.pair.clone(),
        records,
    })
}

pub fn annotation_file_name(pose_index: usize, entry: &LibraryEntry) -> String {
    format!("pose_{pose_index:05}_{}_{}.json", entry.seed_id, entry.augmentation_index)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes one annotation file per pose and a manifest into `out_dir`.
/// An empty library is rejected before anything is written.
pub fn export_annotations(
    models: &HandPair,
    library: &[LibraryEntry],
    rig: &RigConfig,
    selection: CameraSelection,
    config_hash: &str,
    out_dir: &Path,
) -> Result<AnnotationManifest> {
    if library.is_empty() {
        return Err(Error::Config("cannot export an empty pose library".into()));
    }
    rig.validate()?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let files = library
        .par_iter()
        .enumerate()
        .map(|(i, entry)| {
            let ann = annotate_pose(models, entry, i, rig, selection)?;
            let name = annotation_file_name(i, entry);
            let bytes = serde_json::to_vec_pretty(&ann).map_err(|e| Error::format(&name, e))?;
            let path = out_dir.join(&name);
            fs::write(&path, &bytes).map_err(|e| Error::io(&path, e))?;
            Ok((
                ManifestFile {
                    name,
                    sha256: sha256_hex(&bytes),
                },
                ann.records.len(),
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let manifest = AnnotationManifest {
        version: ANNOTATION_VERSION,
        config_hash: config_hash.to_string(),
        poses: library.len(),
        cameras_per_pose: select_cameras(rig, selection, 0).len(),
        records: files.iter().map(|f| f.1).sum(),
        files: files.into_iter().map(|f| f.0).collect(),
    };
    write_json(&out_dir.join(MANIFEST_NAME), &manifest)?;
    Ok(manifest)
}

pub fn read_annotations(path: &Path) -> Result<PoseAnnotations> {
    let ann: PoseAnnotations = read_json(path)?;
    if ann.version != ANNOTATION_VERSION {
        return Err(Error::format(path, format!("unsupported annotation version {}", ann.version)));
    }
    Ok(ann)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let bytes = serde_json::to_vec_pretty(value).map_err(|e| Error::format(path, e))?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_slice(&bytes).map_err(|e| Error::format(path, e))
}

/// Both posed hands as one mesh, right hand first.
pub fn posed_pair_mesh(models: &HandPair, pair: &PosePair) -> TriMesh {
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for s in [Side::Right, Side::Left] {
        let m = models.get(s);
        let off = vertices.len();
        vertices.extend(PosedHand::new(m, pair.hand(s)).vertices);
        faces.extend(m.mesh.faces.iter().map(|f| [f[0] + off, f[1] + off, f[2] + off]));
    }
    TriMesh::new(vertices, faces)
}

/// Writes the posed pair of `entry` as an OBJ file next to its annotations.
pub fn export_obj(models: &HandPair, entry: &LibraryEntry, path: &Path) -> Result<PathBuf> {
    posed_pair_mesh(models, &entry.pair).write_obj(path)?;
    Ok(path.to_path_buf())
}
