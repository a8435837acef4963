//! Forward kinematics, skinning and the reverse pass from point gradients to pose
//! parameters.
//!
//! A joint's posed transform maps canonical space to posed space:
//! `x ↦ M_j (x − J_j) + P_j`, where `J_j` is the canonical joint position, `P_j`
//! the posed one and `M_j = M_parent · F_j R_b R_s R_t F_jᵀ` with `F_j` the
//! joint's twist-splay-bend frame.

use nalgebra::{Matrix3, Rotation3};

use super::model::{HandModel, NUM_JOINTS, NUM_KEYPOINTS, NUM_TIPS, WRIST};
use super::pose::{joint_index, HandPose, HAND_PARAMS, POSE_DIM};
use crate::mesh::Vec3;

/// Rotation of a joint in its own frame coordinates, `R_b(bend) · R_s(splay) · R_t(twist)`.
/// Bend is about local z, splay about local y, twist about local x.
pub fn tsb_rotation(angles: &[f64; 3]) -> Matrix3<f64> {
    let [b, s, t] = *angles;
    let rb = Rotation3::from_axis_angle(&Vec3::z_axis(), b);
    let rs = Rotation3::from_axis_angle(&Vec3::y_axis(), s);
    let rt = Rotation3::from_axis_angle(&Vec3::x_axis(), t);
    (rb * rs * rt).into_inner()
}

/// Posed rotation and position of each joint.
#[derive(Debug, Clone, PartialEq)]
pub struct JointTransforms {
    pub rotations: Vec<Matrix3<f64>>,
    pub positions: Vec<Vec3>,
}

impl JointTransforms {
    /// Maps a canonical point rigidly attached to joint `j` into posed space.
    pub fn apply(&self, model: &HandModel, j: usize, x: &Vec3) -> Vec3 {
        self.rotations[j] * (x - model.tree.rest_positions[j]) + self.positions[j]
    }

    /// Inverse of [`apply`](Self::apply): posed point to canonical coordinates of joint `j`.
    pub fn to_canonical(&self, model: &HandModel, j: usize, p: &Vec3) -> Vec3 {
        self.rotations[j].transpose() * (p - self.positions[j]) + model.tree.rest_positions[j]
    }
}

pub fn forward_kinematics(model: &HandModel, pose: &HandPose) -> JointTransforms {
    let tree = &model.tree;
    let mut rotations = vec![Matrix3::identity(); NUM_JOINTS];
    let mut positions = vec![Vec3::zeros(); NUM_JOINTS];
    rotations[WRIST] = *pose.root_rotation.matrix();
    positions[WRIST] = tree.rest_positions[WRIST] + pose.root_translation;
    for j in 1..NUM_JOINTS {
        let p = tree.parent[j].expect("finger joint has a parent");
        let f = &tree.frames[j];
        let local = f * tsb_rotation(&pose.angles[j - 1]) * f.transpose();
        rotations[j] = rotations[p] * local;
        positions[j] = rotations[p] * tree.bone_vector(j) + positions[p];
    }
    JointTransforms {
        rotations,
        positions,
    }
}

/// Linear blend skinning of the canonical mesh.
pub fn skin_vertices(model: &HandModel, transforms: &JointTransforms) -> Vec<Vec3> {
    model
        .mesh
        .vertices
        .iter()
        .zip(&model.skin_weights)
        .map(|(v, w)| {
            let mut acc = Vec3::zeros();
            for (j, &wj) in w.iter().enumerate() {
                if wj != 0.0 {
                    acc += transforms.apply(model, j, v) * wj;
                }
            }
            acc
        })
        .collect()
}

/// 16 joint positions followed by the 5 fingertips.
pub fn joint_positions(model: &HandModel, transforms: &JointTransforms) -> [Vec3; NUM_KEYPOINTS] {
    let mut out = [Vec3::zeros(); NUM_KEYPOINTS];
    out[..NUM_JOINTS].copy_from_slice(&transforms.positions);
    for f in 0..NUM_TIPS {
        let end = joint_index(f, 2);
        out[NUM_JOINTS + f] = transforms.apply(model, end, &model.tips[f]);
    }
    out
}

/// Posed state of one hand needed by the losses.
#[derive(Debug, Clone)]
pub struct PosedHand {
    pub transforms: JointTransforms,
    pub vertices: Vec<Vec3>,
}

impl PosedHand {
    pub fn new(model: &HandModel, pose: &HandPose) -> Self {
        let transforms = forward_kinematics(model, pose);
        let vertices = skin_vertices(model, &transforms);
        Self {
            transforms,
            vertices,
        }
    }

    /// Posed normal of a vertex (rigid part rotation applied to the canonical normal).
    pub fn vertex_normal(&self, model: &HandModel, v: usize) -> Vec3 {
        let j = model.vertex_part[v];
        self.transforms.rotations[j] * model.vertex_normals[v]
    }
}

/// Per-joint sums of point gradients `g` applied at posed points `p`:
/// `force = Σ g`, `moment = Σ p × g`.
#[derive(Debug, Clone, PartialEq)]
pub struct Wrenches {
    pub force: Vec<Vec3>,
    pub moment: Vec<Vec3>,
}

impl Default for Wrenches {
    fn default() -> Self {
        Self {
            force: vec![Vec3::zeros(); NUM_JOINTS],
            moment: vec![Vec3::zeros(); NUM_JOINTS],
        }
    }
}

impl Wrenches {
    pub fn add(&mut self, joint: usize, point: &Vec3, grad: &Vec3) {
        self.force[joint] += grad;
        self.moment[joint] += point.cross(grad);
    }

    /// Adds `grad` as the gradient of a skinned vertex, split over its weighted joints.
    pub fn add_vertex(
        &mut self,
        model: &HandModel,
        transforms: &JointTransforms,
        v: usize,
        grad: &Vec3,
    ) {
        let canonical = &model.mesh.vertices[v];
        for (j, &w) in model.skin_weights[v].iter().enumerate() {
            if w != 0.0 {
                let p = transforms.apply(model, j, canonical);
                self.add(j, &p, &(grad * w));
            }
        }
    }

    pub fn merge(&mut self, other: &Wrenches) {
        for j in 0..NUM_JOINTS {
            self.force[j] += other.force[j];
            self.moment[j] += other.moment[j];
        }
    }
}

/// Gradient of a scalar with respect to one hand's parameters, given the
/// gradients of every posed point it depends on (as [`Wrenches`]).
///
/// Layout: 45 angles, root-rotation tangent (left perturbation `exp([r]×)·R`
/// at `r = 0`), root translation.
pub fn backprop_wrenches(
    model: &HandModel,
    pose: &HandPose,
    transforms: &JointTransforms,
    wrenches: &Wrenches,
) -> [f64; HAND_PARAMS] {
    let tree = &model.tree;
    let mut force = wrenches.force.clone();
    let mut moment = wrenches.moment.clone();
    for j in (1..NUM_JOINTS).rev() {
        let p = tree.parent[j].expect("finger joint has a parent");
        let (f, m) = (force[j], moment[j]);
        force[p] += f;
        moment[p] += m;
    }

    let mut grad = [0.0; HAND_PARAMS];
    for j in 1..NUM_JOINTS {
        let p = tree.parent[j].expect("finger joint has a parent");
        let frame = transforms.rotations[p] * tree.frames[j];
        let [b, s, _] = pose.angles[j - 1];
        let rb = Rotation3::from_axis_angle(&Vec3::z_axis(), b);
        let rs = Rotation3::from_axis_angle(&Vec3::y_axis(), s);
        let axes = [
            frame * Vec3::z(),
            frame * (rb * Vec3::y()),
            frame * (rb * (rs * Vec3::x())),
        ];
        let torque = moment[j] - transforms.positions[j].cross(&force[j]);
        for (a, axis) in axes.iter().enumerate() {
            grad[3 * (j - 1) + a] = axis.dot(&torque);
        }
    }
    let root_torque = moment[WRIST] - transforms.positions[WRIST].cross(&force[WRIST]);
    grad[POSE_DIM..POSE_DIM + 3].copy_from_slice(root_torque.as_slice());
    grad[POSE_DIM + 3..].copy_from_slice(force[WRIST].as_slice());
    grad
}

/// Applies a parameter step: angles and translation additively, rotation by
/// left-multiplying `exp([δr]×)` and re-orthonormalizing.
pub fn apply_step(pose: &mut HandPose, step: &[f64]) {
    assert_eq!(step.len(), HAND_PARAMS);
    for (j, a) in pose.angles.iter_mut().enumerate() {
        for (k, x) in a.iter_mut().enumerate() {
            *x += step[3 * j + k];
        }
    }
    let dr = Vec3::new(step[POSE_DIM], step[POSE_DIM + 1], step[POSE_DIM + 2]);
    if dr != Vec3::zeros() {
        let mut r = Rotation3::new(dr) * pose.root_rotation;
        r.renormalize();
        pose.root_rotation = r;
    }
    pose.root_translation += Vec3::new(step[POSE_DIM + 3], step[POSE_DIM + 4], step[POSE_DIM + 5]);
}
