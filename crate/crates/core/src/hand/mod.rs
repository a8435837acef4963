//! Procedural articulated hand: canonical mesh, kinematic tree with
//! twist-splay-bend frames, forward kinematics and skinning.

mod kinematics;
mod model;
mod pose;
mod proportions;

pub use kinematics::{
    apply_step, backprop_wrenches, forward_kinematics, joint_positions, skin_vertices,
    tsb_rotation, JointTransforms, PosedHand, Wrenches,
};
pub use model::{
    keypoint_parent, mirror_matrix, HandModel, HandPair, KinematicTree, MeshResolution,
    NUM_JOINTS, NUM_KEYPOINTS, NUM_TIPS, WRIST,
};
pub use pose::{
    angle_slot, is_free_slot, joint_index, pose_to_vector, vector_to_pose, Finger, HandPose,
    HandPoseRecord, PosePair, Side, BEND, FINGER_JOINTS, HAND_PARAMS, POSE_DIM, SPLAY, TWIST,
};
pub use proportions::{FingerProportions, HandProportions};
