//! Per-joint rotation ranges, clamping, violation reports and the anatomic penalty.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hand::{angle_slot, Finger, HandPose, BEND, POSE_DIM, SPLAY};

/// Ranges of one finger, degrees, as `[min, max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FingerLimits {
    pub root_bend: [f64; 2],
    pub root_splay: [f64; 2],
    pub middle_bend: [f64; 2],
    pub end_bend: [f64; 2],
}

/// Anatomic ranges for all five fingers. Twist is always fixed at zero and
/// splay is zero on middle and end joints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointLimits {
    pub thumb: FingerLimits,
    pub index: FingerLimits,
    pub middle: FingerLimits,
    pub ring: FingerLimits,
    pub pinky: FingerLimits,
}

impl Default for JointLimits {
    fn default() -> Self {
        let f = |rb: [f64; 2], rs: [f64; 2], mb: [f64; 2], eb: [f64; 2]| FingerLimits {
            root_bend: rb,
            root_splay: rs,
            middle_bend: mb,
            end_bend: eb,
        };
        JointLimits {
            thumb: f([-20.0, 40.0], [-30.0, 30.0], [-8.0, 50.0], [-10.0, 100.0]),
            index: f([-25.0, 70.0], [-25.0, 15.0], [-4.0, 110.0], [-8.0, 90.0]),
            middle: f([-25.0, 80.0], [-15.0, 15.0], [-7.0, 100.0], [-8.0, 90.0]),
            ring: f([-25.0, 70.0], [-25.0, 15.0], [-10.0, 100.0], [-8.0, 90.0]),
            pinky: f([-22.0, 70.0], [-20.0, 30.0], [-8.0, 90.0], [-8.0, 90.0]),
        }
    }
}

/// Angle ranges in radians, one per slot of the 45-vector.
#[derive(Debug, Clone, PartialEq)]
pub struct AngleRanges {
    pub lo: [f64; POSE_DIM],
    pub hi: [f64; POSE_DIM],
}

impl JointLimits {
    pub fn finger(&self, f: usize) -> &FingerLimits {
        match f {
            0 => &self.thumb,
            1 => &self.index,
            2 => &self.middle,
            3 => &self.ring,
            4 => &self.pinky,
            _ => panic!("finger index {f} out of range"),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for f in 0..5 {
            let fl = self.finger(f);
            for (name, r) in [
                ("root_bend", fl.root_bend),
                ("root_splay", fl.root_splay),
                ("middle_bend", fl.middle_bend),
                ("end_bend", fl.end_bend),
            ] {
                if !(r[0].is_finite() && r[1].is_finite() && r[0] <= 0.0 && 0.0 <= r[1]) {
                    return Err(Error::Config(format!(
                        "{} {name} range [{}, {}] must be finite and contain 0",
                        Finger::ALL[f].name(),
                        r[0],
                        r[1]
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn ranges(&self) -> AngleRanges {
        let mut lo = [0.0; POSE_DIM];
        let mut hi = [0.0; POSE_DIM];
        for f in 0..5 {
            let fl = self.finger(f);
            let mut set = |seg: usize, axis: usize, r: [f64; 2]| {
                let s = angle_slot(f, seg, axis);
                lo[s] = r[0].to_radians();
                hi[s] = r[1].to_radians();
            };
            set(0, BEND, fl.root_bend);
            set(0, SPLAY, fl.root_splay);
            set(1, BEND, fl.middle_bend);
            set(2, BEND, fl.end_bend);
        }
        AngleRanges { lo, hi }
    }
}

/// `max(θ − hi, 0) + min(θ − lo, 0)`: signed excursion outside `[lo, hi]`.
pub fn deviation(theta: f64, lo: f64, hi: f64) -> f64 {
    (theta - hi).max(0.0) + (theta - lo).min(0.0)
}

/// Projects every angle into its closed range.
pub fn clamp_pose(pose: &HandPose, limits: &JointLimits) -> HandPose {
    let r = limits.ranges();
    let mut out = pose.clone();
    for slot in 0..POSE_DIM {
        let a = &mut out.angles[slot / 3][slot % 3];
        *a = a.clamp(r.lo[slot], r.hi[slot]);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LimitViolation {
    pub finger: &'static str,
    /// 0 root, 1 middle, 2 end.
    pub segment: usize,
    pub axis: &'static str,
    pub value: f64,
    /// Signed deviation in radians (positive above the range).
    pub deviation: f64,
}

impl LimitViolation {
    pub fn excess(&self) -> f64 {
        self.deviation.abs()
    }
}

impl std::fmt::Display for LimitViolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} joint {} {}: {:.3}° exceeds range by {:.3}°",
            self.finger,
            self.segment,
            self.axis,
            self.value.to_degrees(),
            self.excess().to_degrees()
        )
    }
}

/// Every angle outside its range. Empty exactly when the anatomic loss is zero.
pub fn check_limits(pose: &HandPose, limits: &JointLimits) -> Vec<LimitViolation> {
    let r = limits.ranges();
    let axis_name = ["bend", "splay", "twist"];
    (0..POSE_DIM)
        .filter_map(|slot| {
            let value = pose.angles[slot / 3][slot % 3];
            let d = deviation(value, r.lo[slot], r.hi[slot]);
            (d != 0.0).then(|| LimitViolation {
                finger: Finger::ALL[slot / 9].name(),
                segment: (slot / 3) % 3,
                axis: axis_name[slot % 3],
                value,
                deviation: d,
            })
        })
        .collect()
}

/// Sum of squared deviations over all 45 angles and its gradient.
pub fn anatomic_loss(pose: &HandPose, limits: &JointLimits) -> (f64, [f64; POSE_DIM]) {
    let r = limits.ranges();
    let mut grad = [0.0; POSE_DIM];
    let mut loss = 0.0;
    for slot in 0..POSE_DIM {
        let d = deviation(pose.angles[slot / 3][slot % 3], r.lo[slot], r.hi[slot]);
        loss += d * d;
        grad[slot] = 2.0 * d;
    }
    (loss, grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hand::{Side, TWIST};
    use proptest::prelude::*;

    #[test]
    fn t_pose_is_legal() {
        let l = JointLimits::default();
        l.validate().unwrap();
        let p = HandPose::t_pose(Side::Right);
        assert!(check_limits(&p, &l).is_empty());
        assert_eq!(anatomic_loss(&p, &l).0, 0.0);
    }

    #[test]
    fn thumb_root_overbend() {
        let l = JointLimits::default();
        let mut p = HandPose::t_pose(Side::Right);
        p.set_angle(0, 0, BEND, 50f64.to_radians());
        let (loss, grad) = anatomic_loss(&p, &l);
        assert!((loss - 10f64.to_radians().powi(2)).abs() < 1e-15);
        assert!((loss - 0.030462).abs() < 1e-6);
        assert!((grad[0] - 2.0 * 10f64.to_radians()).abs() < 1e-12);
        let v = check_limits(&p, &l);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].finger, "thumb");
        assert!((v[0].excess().to_degrees() - 10.0).abs() < 1e-9);

        let c = clamp_pose(&p, &l);
        assert_eq!(c.angle(0, 0, BEND), 40f64.to_radians());
    }

    #[test]
    fn bound_is_legal_with_zero_gradient() {
        let l = JointLimits::default();
        let r = l.ranges();
        let mut p = HandPose::t_pose(Side::Right);
        p.angles[0][0] = r.hi[0];
        let (loss, grad) = anatomic_loss(&p, &l);
        assert_eq!(loss, 0.0);
        assert_eq!(grad[0], 0.0);
    }

    #[test]
    fn twist_has_zero_range() {
        let l = JointLimits::default();
        let mut p = HandPose::t_pose(Side::Right);
        p.angles[4][TWIST] = 0.01;
        assert_eq!(check_limits(&p, &l).len(), 1);
        p.angles[4][TWIST] = 0.0;
        p.angles[4][SPLAY] = -0.01; // middle joint of index
        assert_eq!(check_limits(&p, &l)[0].axis, "splay");
    }

    #[test]
    fn malformed_range_is_rejected() {
        let mut l = JointLimits::default();
        l.ring.end_bend = [5.0, 90.0];
        assert!(matches!(l.validate(), Err(Error::Config(_))));
    }

    fn arb_pose() -> impl Strategy<Value = HandPose> {
        proptest::collection::vec(-3.0f64..3.0, POSE_DIM).prop_map(|v| {
            let arr: [f64; POSE_DIM] = v.try_into().unwrap();
            crate::hand::vector_to_pose(Side::Right, &arr)
        })
    }

    proptest! {
        #[test]
        fn clamp_is_idempotent_and_legal(p in arb_pose()) {
            let l = JointLimits::default();
            let c = clamp_pose(&p, &l);
            prop_assert_eq!(clamp_pose(&c, &l), c.clone());
            prop_assert!(check_limits(&c, &l).is_empty());
            prop_assert_eq!(anatomic_loss(&c, &l).0, 0.0);
        }

        #[test]
        fn report_empty_iff_loss_zero(p in arb_pose()) {
            let l = JointLimits::default();
            prop_assert_eq!(check_limits(&p, &l).is_empty(), anatomic_loss(&p, &l).0 == 0.0);
        }

        #[test]
        fn gradient_matches_finite_differences(p in arb_pose()) {
            let l = JointLimits::default();
            let (_, grad) = anatomic_loss(&p, &l);
            let h = 1e-7;
            for slot in 0..POSE_DIM {
                let mut a = p.clone();
                a.angles[slot / 3][slot % 3] += h;
                let mut b = p.clone();
                b.angles[slot / 3][slot % 3] -= h;
                let fd = (anatomic_loss(&a, &l).0 - anatomic_loss(&b, &l).0) / (2.0 * h);
                let r = l.ranges();
                let x = p.angles[slot / 3][slot % 3];
                // skip points within h of a kink
                if (x - r.lo[slot]).abs() < 2.0 * h || (x - r.hi[slot]).abs() < 2.0 * h {
                    continue;
                }
                let denom = fd.abs().max(grad[slot].abs()).max(1.0);
                prop_assert!((fd - grad[slot]).abs() / denom < 1e-6);
            }
        }
    }
}
