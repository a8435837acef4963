//! Hand-authored two-hand seed configurations and single-hand natural gestures.

use nalgebra::{Rotation3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::hand::{HandPose, PosePair, Side, BEND, SPLAY};
use crate::limits::{clamp_pose, JointLimits};
use crate::mesh::Vec3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedPair {
    pub id: String,
    pub pair: PosePair,
}

/// Per finger `[root bend, root splay, middle bend, end bend]`, degrees.
type Gesture = [[f64; 4]; 5];

const STRAIGHT: [f64; 4] = [0.0, 0.0, 0.0, 0.0];
const CURLED: [f64; 4] = [65.0, 0.0, 95.0, 65.0];
const THUMB_TUCKED: [f64; 4] = [35.0, 15.0, 40.0, 50.0];

/// Thumb, index, middle, ring, pinky.
const GESTURES: &[(&str, Gesture)] = &[
    ("flat", [STRAIGHT; 5]),
    ("spread", [[0.0, -25.0, 0.0, 0.0], [0.0, -18.0, 0.0, 0.0], [0.0, 0.0, 0.0, 0.0], [0.0, 10.0, 0.0, 0.0], [0.0, 22.0, 0.0, 0.0]]),
    ("relaxed", [[10.0, 5.0, 15.0, 10.0], [15.0, -3.0, 25.0, 15.0], [18.0, 0.0, 30.0, 18.0], [20.0, 3.0, 32.0, 20.0], [22.0, 6.0, 30.0, 18.0]]),
    ("fist", [THUMB_TUCKED, CURLED, CURLED, CURLED, CURLED]),
    ("point", [THUMB_TUCKED, STRAIGHT, CURLED, CURLED, CURLED]),
    ("peace", [THUMB_TUCKED, [0.0, -12.0, 0.0, 0.0], [0.0, 10.0, 0.0, 0.0], CURLED, CURLED]),
    ("thumbs_up", [[0.0, -25.0, 0.0, 0.0], CURLED, CURLED, CURLED, CURLED]),
    ("ok", [[25.0, 10.0, 25.0, 30.0], [40.0, 0.0, 55.0, 40.0], [5.0, 3.0, 5.0, 3.0], [5.0, 6.0, 5.0, 3.0], [5.0, 12.0, 5.0, 3.0]]),
    ("pinch", [[30.0, 8.0, 25.0, 20.0], [35.0, 0.0, 45.0, 30.0], [30.0, 0.0, 40.0, 25.0], [28.0, 3.0, 40.0, 25.0], [25.0, 6.0, 38.0, 22.0]]),
    ("claw", [[10.0, -10.0, 30.0, 40.0], [10.0, -8.0, 80.0, 60.0], [10.0, 0.0, 80.0, 60.0], [10.0, 5.0, 80.0, 60.0], [10.0, 12.0, 75.0, 55.0]]),
    ("cup", [[20.0, 0.0, 20.0, 15.0], [30.0, -5.0, 30.0, 20.0], [30.0, 0.0, 32.0, 20.0], [30.0, 4.0, 32.0, 20.0], [30.0, 8.0, 30.0, 20.0]]),
    ("cylinder_grasp", [[30.0, 10.0, 35.0, 30.0], [50.0, 0.0, 60.0, 40.0], [52.0, 0.0, 62.0, 42.0], [50.0, 2.0, 62.0, 42.0], [48.0, 5.0, 58.0, 40.0]]),
    ("hook", [[5.0, -5.0, 5.0, 5.0], [5.0, 0.0, 90.0, 75.0], [5.0, 0.0, 92.0, 75.0], [5.0, 0.0, 90.0, 75.0], [5.0, 0.0, 85.0, 70.0]]),
    ("l_shape", [[0.0, -28.0, 0.0, 0.0], STRAIGHT, CURLED, CURLED, CURLED]),
    ("three", [THUMB_TUCKED, [0.0, -10.0, 0.0, 0.0], STRAIGHT, [0.0, 8.0, 0.0, 0.0], CURLED]),
    ("four", [[30.0, 15.0, 30.0, 30.0], [0.0, -8.0, 0.0, 0.0], STRAIGHT, [0.0, 6.0, 0.0, 0.0], [0.0, 14.0, 0.0, 0.0]]),
    ("call_me", [[0.0, -25.0, 0.0, 0.0], CURLED, CURLED, CURLED, [0.0, 20.0, 0.0, 0.0]]),
    ("rock", [THUMB_TUCKED, STRAIGHT, CURLED, CURLED, [0.0, 15.0, 0.0, 0.0]]),
    ("tripod", [[30.0, 10.0, 30.0, 25.0], [40.0, 0.0, 50.0, 30.0], [40.0, 0.0, 50.0, 30.0], [45.0, 3.0, 70.0, 45.0], [45.0, 6.0, 70.0, 45.0]]),
    ("key_grip", [[20.0, -10.0, 20.0, 20.0], [50.0, 0.0, 80.0, 50.0], [55.0, 0.0, 85.0, 55.0], [60.0, 0.0, 85.0, 55.0], [60.0, 0.0, 85.0, 55.0]]),
    ("tabletop", [[15.0, -15.0, 10.0, 5.0], [70.0, 0.0, 0.0, 0.0], [75.0, 0.0, 0.0, 0.0], [70.0, 0.0, 0.0, 0.0], [65.0, 0.0, 0.0, 0.0]]),
    ("half_fist", [[25.0, 10.0, 30.0, 35.0], [45.0, 0.0, 55.0, 35.0], [45.0, 0.0, 55.0, 35.0], [45.0, 0.0, 55.0, 35.0], [45.0, 0.0, 55.0, 35.0]]),
    ("gun", [[0.0, -20.0, 0.0, 0.0], STRAIGHT, STRAIGHT, CURLED, CURLED]),
    ("precision_pinch", [[28.0, 12.0, 30.0, 35.0], [35.0, 0.0, 40.0, 50.0], [10.0, 0.0, 15.0, 10.0], [15.0, 4.0, 20.0, 12.0], [20.0, 8.0, 25.0, 15.0]]),
    ("wave", [[5.0, -15.0, 5.0, 0.0], [0.0, -10.0, 0.0, 0.0], [0.0, 0.0, 0.0, 0.0], [0.0, 6.0, 0.0, 0.0], [0.0, 14.0, 0.0, 0.0]]),
    ("loose_curl", [[15.0, 5.0, 20.0, 15.0], [30.0, 0.0, 45.0, 30.0], [35.0, 0.0, 50.0, 32.0], [38.0, 2.0, 52.0, 34.0], [40.0, 4.0, 50.0, 32.0]]),
    ("middle_curled", [[10.0, 0.0, 10.0, 5.0], [5.0, -5.0, 5.0, 3.0], [60.0, 0.0, 80.0, 55.0], [20.0, 3.0, 30.0, 18.0], [15.0, 6.0, 20.0, 12.0]]),
    ("counting_two_thumb", [[0.0, -25.0, 0.0, 0.0], STRAIGHT, CURLED, CURLED, CURLED]),
    ("flat_together", [[0.0, 5.0, 0.0, 0.0], [0.0, 5.0, 0.0, 0.0], [0.0, 0.0, 0.0, 0.0], [0.0, -5.0, 0.0, 0.0], [0.0, -5.0, 0.0, 0.0]]),
    ("ball_grasp", [[25.0, 15.0, 25.0, 20.0], [35.0, -10.0, 35.0, 25.0], [38.0, 0.0, 38.0, 25.0], [38.0, 6.0, 38.0, 25.0], [36.0, 14.0, 36.0, 24.0]]),
];

/// Number of hand-authored gestures.
pub fn gesture_count() -> usize {
    GESTURES.len()
}

pub fn gesture_names() -> impl Iterator<Item = &'static str> {
    GESTURES.iter().map(|(n, _)| *n)
}

/// Articulation of gesture `i` for `side` (root at identity), clamped to `limits`.
pub fn gesture(i: usize, side: Side, limits: &JointLimits) -> HandPose {
    let (_, g) = &GESTURES[i % GESTURES.len()];
    let mut pose = HandPose::t_pose(side);
    for (f, row) in g.iter().enumerate() {
        pose.set_angle(f, 0, BEND, row[0].to_radians());
        pose.set_angle(f, 0, SPLAY, row[1].to_radians());
        pose.set_angle(f, 1, BEND, row[2].to_radians());
        pose.set_angle(f, 2, BEND, row[3].to_radians());
    }
    clamp_pose(&pose, limits)
}

/// A random gesture with uniform jitter of up to `jitter_deg` on every free angle.
pub fn jittered_gesture(rng: &mut impl Rng, side: Side, jitter_deg: f64, limits: &JointLimits) -> HandPose {
    let mut pose = gesture(rng.random_range(0..GESTURES.len()), side, limits);
    for (j, a) in pose.angles.iter_mut().enumerate() {
        a[BEND] += rng.random_range(-jitter_deg..=jitter_deg).to_radians();
        if j % 3 == 0 {
            a[SPLAY] += rng.random_range(-jitter_deg..=jitter_deg).to_radians();
        }
    }
    clamp_pose(&pose, limits)
}

fn rot(axis: [f64; 3], deg: f64) -> Rotation3<f64> {
    Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(Vector3::from(axis)), deg.to_radians())
}

fn placed(side: Side, gesture_idx: usize, r: Rotation3<f64>, t: [f64; 3]) -> HandPose {
    gesture(gesture_idx, side, &JointLimits::default())
        .with_rotation(r)
        .with_translation(Vec3::from(t))
}

fn mirror_of(right: &HandPose) -> HandPose {
    right.mirrored()
}

fn idx(name: &str) -> usize {
    GESTURES.iter().position(|(n, _)| *n == name).expect("known gesture")
}

/// Ten hand-authored interacting configurations. The canonical right hand points
/// along +y with its palm facing −z; the left hand is its mirror image.
pub fn builtin_seed_pairs() -> Vec<SeedPair> {
    let palm_gap = 0.0135;
    let mut out = Vec::new();
    let mut push = |id: &str, right: HandPose, left: HandPose| {
        out.push(SeedPair {
            id: id.to_string(),
            pair: PosePair { right, left },
        });
    };

    // palms pressed together, mirror symmetric
    let r = placed(Side::Right, idx("flat_together"), rot([0.0, 1.0, 0.0], 90.0), [palm_gap, 0.0, 0.0]);
    push("prayer", r.clone(), mirror_of(&r));

    // palms together, right hand slid up
    let r = placed(Side::Right, idx("relaxed"), rot([0.0, 1.0, 0.0], 90.0), [palm_gap, 0.04, 0.0]);
    let l = mirror_of(&placed(Side::Right, idx("relaxed"), rot([0.0, 1.0, 0.0], 90.0), [palm_gap, -0.01, 0.0]));
    push("offset_clap", r, l);

    // right palm resting on the back of the left hand
    let r = placed(Side::Right, idx("relaxed"), Rotation3::identity(), [0.01, 0.02, 0.027]);
    let l = placed(Side::Left, idx("flat"), Rotation3::identity(), [-0.01, 0.0, 0.0]);
    push("stacked", r, l);

    // back to back
    let r = placed(Side::Right, idx("flat"), rot([0.0, 1.0, 0.0], -90.0), [palm_gap, 0.0, 0.0]);
    push("back_to_back", r.clone(), mirror_of(&r));

    // right hand palm up cupping the left fist from below
    let r = placed(Side::Right, idx("cup"), rot([0.0, 1.0, 0.0], 180.0), [0.0, 0.0, -0.02]);
    let l = placed(Side::Left, idx("fist"), Rotation3::identity(), [0.0, -0.02, 0.02]);
    push("cupping", r, l);

    // perpendicular: right hand vertical, left palm down beneath its fingers
    let r = placed(Side::Right, idx("cylinder_grasp"), rot([0.0, 1.0, 0.0], 90.0), [0.0, -0.05, 0.0]);
    let l = placed(Side::Left, idx("flat"), rot([0.0, 0.0, 1.0], -90.0), [0.03, 0.03, -0.012]);
    push("grasp_fingers", r, l);

    // fingertips touching with palms apart
    let r = placed(Side::Right, idx("cup"), rot([0.0, 1.0, 0.0], 90.0), [0.035, 0.0, 0.0]);
    push("steeple", r.clone(), mirror_of(&r));

    // palms facing, fingers pointing in opposite directions
    let r = placed(Side::Right, idx("relaxed"), rot([0.0, 1.0, 0.0], 90.0), [palm_gap, 0.0, 0.0]);
    let flip = Rotation3::from_matrix_unchecked(nalgebra::Matrix3::new(
        0.0, 0.0, -1.0, //
        0.0, -1.0, 0.0, //
        -1.0, 0.0, 0.0,
    ));
    let l = placed(Side::Left, idx("relaxed"), flip, [-palm_gap, 0.09, 0.0]);
    push("crossed_palms", r, l);

    // interlaced: palms facing, left shifted half a finger width
    let r = placed(Side::Right, idx("half_fist"), rot([0.0, 1.0, 0.0], 90.0), [0.012, 0.0, 0.0]);
    let l = mirror_of(&placed(Side::Right, idx("half_fist"), rot([0.0, 1.0, 0.0], 90.0), [0.012, 0.0, 0.01]));
    push("interlaced", r, l);

    // right index pointing into the left palm
    let r = placed(Side::Right, idx("point"), rot([1.0, 0.0, 0.0], -90.0), [0.0, 0.0, 0.19]);
    let l = placed(Side::Left, idx("cup"), rot([0.0, 1.0, 0.0], 180.0), [0.0, -0.04, 0.0]);
    push("poke", r, l);

    out
}

/// `n` seed pairs: the built-in set cycled, with every repeat beyond the first
/// pass jittered (±5 mm translation, ±5° rotation per hand).
pub fn seed_library(n: usize, rng_seed: u64) -> Vec<SeedPair> {
    let base = builtin_seed_pairs();
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed ^ 0x5eed_5eed);
    (0..n)
        .map(|i| {
            let b = &base[i % base.len()];
            let mut pair = b.pair.clone();
            if i >= base.len() {
                for side in [Side::Right, Side::Left] {
                    let h = pair.hand_mut(side);
                    let axis = Vec3::new(
                        rng.random_range(-1.0..1.0),
                        rng.random_range(-1.0..1.0),
                        rng.random_range(-1.0..1.0),
                    );
                    let angle = rng.random_range(-5.0f64..5.0).to_radians();
                    if axis.norm() > 1e-6 {
                        let r = Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(axis), angle);
                        h.root_rotation = r * h.root_rotation;
                    }
                    h.root_translation += Vec3::new(
                        rng.random_range(-0.005..0.005),
                        rng.random_range(-0.005..0.005),
                        rng.random_range(-0.005..0.005),
                    );
                }
            }
            SeedPair {
                id: format!("{}_{:03}", b.id, i),
                pair,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::limits::check_limits;

    #[test]
    fn gestures_are_legal() {
        let l = JointLimits::default();
        assert!(gesture_count() >= 30);
        for i in 0..gesture_count() {
            let g = gesture(i, Side::Right, &l);
            assert!(g.is_structurally_valid());
            assert!(check_limits(&g, &l).is_empty());
        }
    }

    #[test]
    fn seeds_are_well_formed() {
        let seeds = builtin_seed_pairs();
        assert_eq!(seeds.len(), 10);
        for s in &seeds {
            assert_eq!(s.pair.right.side, Side::Right);
            assert_eq!(s.pair.left.side, Side::Left);
            let r = s.pair.right.root_rotation.matrix();
            assert!((r.transpose() * r - nalgebra::Matrix3::identity()).norm() < 1e-12);
        }
    }

    #[test]
    fn library_is_deterministic() {
        assert_eq!(seed_library(25, 4), seed_library(25, 4));
        assert_eq!(seed_library(25, 4).len(), 25);
    }
}
