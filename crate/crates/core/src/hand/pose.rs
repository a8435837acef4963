use nalgebra::{Matrix3, Rotation3};
use serde::{Deserialize, Serialize};

use crate::mesh::Vec3;

/// Number of articulated finger joints per hand.
pub const FINGER_JOINTS: usize = 15;
/// Length of the articulation vector: 15 joints × (bend, splay, twist).
pub const POSE_DIM: usize = 45;
/// Optimization parameters per hand: 45 angles, 3 root-rotation tangent, 3 translation.
pub const HAND_PARAMS: usize = POSE_DIM + 6;

pub const BEND: usize = 0;
pub const SPLAY: usize = 1;
pub const TWIST: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Right,
    Left,
}

impl Side {
    pub fn other(self) -> Side {
        match self {
            Side::Right => Side::Left,
            Side::Left => Side::Right,
        }
    }

    pub fn index(self) -> usize {
        match self {
            Side::Right => 0,
            Side::Left => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Finger {
    Thumb,
    Index,
    Middle,
    Ring,
    Pinky,
}

impl Finger {
    pub const ALL: [Finger; 5] = [
        Finger::Thumb,
        Finger::Index,
        Finger::Middle,
        Finger::Ring,
        Finger::Pinky,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Finger::Thumb => "thumb",
            Finger::Index => "index",
            Finger::Middle => "middle",
            Finger::Ring => "ring",
            Finger::Pinky => "pinky",
        }
    }
}

/// Kinematic-tree index (0 = wrist) of finger `f`, segment `k` (0 root, 1 middle, 2 end).
pub const fn joint_index(finger: usize, segment: usize) -> usize {
    1 + 3 * finger + segment
}

/// Slot of an angle in the 45-vector: finger-major, joint-minor, then (bend, splay, twist).
pub const fn angle_slot(finger: usize, segment: usize, axis: usize) -> usize {
    3 * (3 * finger + segment) + axis
}

/// Whether the angle slot is a free degree of freedom: bend everywhere, splay on
/// finger roots only, twist never.
pub fn is_free_slot(slot: usize) -> bool {
    let axis = slot % 3;
    let segment = (slot / 3) % 3;
    match axis {
        BEND => true,
        SPLAY => segment == 0,
        _ => false,
    }
}

/// Articulation plus root placement of one hand.
#[derive(Debug, Clone, PartialEq)]
pub struct HandPose {
    pub side: Side,
    /// Per finger joint (bend, splay, twist) in radians, indexed by `joint - 1`.
    pub angles: [[f64; 3]; FINGER_JOINTS],
    pub root_rotation: Rotation3<f64>,
    pub root_translation: Vec3,
}

impl HandPose {
    pub fn t_pose(side: Side) -> Self {
        Self {
            side,
            angles: [[0.0; 3]; FINGER_JOINTS],
            root_rotation: Rotation3::identity(),
            root_translation: Vec3::zeros(),
        }
    }

    pub fn with_translation(mut self, t: Vec3) -> Self {
        self.root_translation = t;
        self
    }

    pub fn with_rotation(mut self, r: Rotation3<f64>) -> Self {
        self.root_rotation = r;
        self
    }

    pub fn angle(&self, finger: usize, segment: usize, axis: usize) -> f64 {
        self.angles[3 * finger + segment][axis]
    }

    pub fn set_angle(&mut self, finger: usize, segment: usize, axis: usize, value: f64) {
        self.angles[3 * finger + segment][axis] = value;
    }

    /// Twist is always zero and splay is zero away from finger roots.
    pub fn is_structurally_valid(&self) -> bool {
        (0..POSE_DIM).all(|slot| is_free_slot(slot) || self.angles[slot / 3][slot % 3] == 0.0)
    }

    /// Zeroes the locked components.
    pub fn enforce_structure(&mut self) {
        for slot in 0..POSE_DIM {
            if !is_free_slot(slot) {
                self.angles[slot / 3][slot % 3] = 0.0;
            }
        }
    }

    pub fn to_vector(&self) -> [f64; POSE_DIM] {
        pose_to_vector(self)
    }

    /// The same articulation on the other hand, reflected across the x = 0 plane.
    pub fn mirrored(&self) -> HandPose {
        let s = Matrix3::from_diagonal(&Vec3::new(-1.0, 1.0, 1.0));
        let r = s * self.root_rotation.matrix() * s;
        HandPose {
            side: self.side.other(),
            angles: self.angles,
            root_rotation: Rotation3::from_matrix_unchecked(r),
            root_translation: Vec3::new(
                -self.root_translation.x,
                self.root_translation.y,
                self.root_translation.z,
            ),
        }
    }
}

/// Articulation only; root rotation and translation are dropped.
pub fn pose_to_vector(pose: &HandPose) -> [f64; POSE_DIM] {
    let mut out = [0.0; POSE_DIM];
    for (j, a) in pose.angles.iter().enumerate() {
        out[3 * j..3 * j + 3].copy_from_slice(a);
    }
    out
}

pub fn vector_to_pose(side: Side, v: &[f64; POSE_DIM]) -> HandPose {
    let mut pose = HandPose::t_pose(side);
    for (j, a) in pose.angles.iter_mut().enumerate() {
        a.copy_from_slice(&v[3 * j..3 * j + 3]);
    }
    pose
}

/// Serialized form of a [`HandPose`]: rotation as a row-major 3×3 matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HandPoseRecord {
    pub side: Side,
    pub angles: Vec<f64>,
    pub root_rotation: [[f64; 3]; 3],
    pub root_translation: [f64; 3],
}

impl From<&HandPose> for HandPoseRecord {
    fn from(p: &HandPose) -> Self {
        let m = p.root_rotation.matrix();
        HandPoseRecord {
            side: p.side,
            angles: pose_to_vector(p).to_vec(),
            root_rotation: [
                [m[(0, 0)], m[(0, 1)], m[(0, 2)]],
                [m[(1, 0)], m[(1, 1)], m[(1, 2)]],
                [m[(2, 0)], m[(2, 1)], m[(2, 2)]],
            ],
            root_translation: [p.root_translation.x, p.root_translation.y, p.root_translation.z],
        }
    }
}

impl TryFrom<&HandPoseRecord> for HandPose {
    type Error = String;

    fn try_from(r: &HandPoseRecord) -> Result<Self, String> {
        let v: [f64; POSE_DIM] = r
            .angles
            .as_slice()
            .try_into()
            .map_err(|_| format!("expected {POSE_DIM} angles, got {}", r.angles.len()))?;
        let mut pose = vector_to_pose(r.side, &v);
        let m = Matrix3::from_fn(|i, j| r.root_rotation[i][j]);
        let orth = (m.transpose() * m - Matrix3::identity()).norm();
        if orth > 1e-6 || m.determinant() < 0.0 {
            return Err("root_rotation is not a rotation matrix".into());
        }
        pose.root_rotation = Rotation3::from_matrix_unchecked(m);
        pose.root_translation = Vec3::from(r.root_translation);
        Ok(pose)
    }
}

impl Serialize for HandPose {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        HandPoseRecord::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for HandPose {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let rec = HandPoseRecord::deserialize(d)?;
        HandPose::try_from(&rec).map_err(serde::de::Error::custom)
    }
}

/// The two hands of one interacting configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosePair {
    pub right: HandPose,
    pub left: HandPose,
}

impl PosePair {
    pub fn new(right: HandPose, left: HandPose) -> Self {
        debug_assert_eq!(right.side, Side::Right);
        debug_assert_eq!(left.side, Side::Left);
        Self { right, left }
    }

    pub fn hand(&self, side: Side) -> &HandPose {
        match side {
            Side::Right => &self.right,
            Side::Left => &self.left,
        }
    }

    pub fn hand_mut(&mut self, side: Side) -> &mut HandPose {
        match side {
            Side::Right => &mut self.right,
            Side::Left => &mut self.left,
        }
    }
}
