//! Initial pose generation: random bend/splay offsets on top of seed pose pairs,
//! restricted to the anatomic ranges.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hand::{HandPose, PosePair, BEND, POSE_DIM, SPLAY};
use crate::limits::{clamp_pose, JointLimits};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentationConfig {
    /// Augmented pairs per seed pair.
    pub count: usize,
    /// Bend offset range, degrees.
    pub bend_offset_deg: [f64; 2],
    /// Splay offset range for finger roots, degrees.
    pub splay_offset_deg: [f64; 2],
}

impl Default for AugmentationConfig {
    fn default() -> Self {
        Self {
            count: 30,
            bend_offset_deg: [-90.0, 90.0],
            splay_offset_deg: [-30.0, 30.0],
        }
    }
}

impl AugmentationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.count == 0 {
            return Err(Error::Config("augmentation count must be at least 1".into()));
        }
        for (name, r) in [
            ("bend_offset_deg", self.bend_offset_deg),
            ("splay_offset_deg", self.splay_offset_deg),
        ] {
            if !(r[0].is_finite() && r[1].is_finite() && r[0] <= r[1]) {
                return Err(Error::Config(format!("{name} must be an ordered finite range")));
            }
        }
        Ok(())
    }

    /// Norm of the largest possible offset vector, radians: every bend at the
    /// extreme bend offset and every root splay at the extreme splay offset.
    pub fn max_offset_norm(&self) -> f64 {
        let b = self.bend_offset_deg[0].abs().max(self.bend_offset_deg[1].abs()).to_radians();
        let s = self.splay_offset_deg[0].abs().max(self.splay_offset_deg[1].abs()).to_radians();
        (15.0 * b * b + 5.0 * s * s).sqrt()
    }
}

fn sample(rng: &mut impl Rng, range: [f64; 2]) -> f64 {
    if range[0] == range[1] {
        range[0]
    } else {
        rng.random_range(range[0]..=range[1])
    }
}

/// One augmented hand and the effective per-slot offsets actually applied
/// (after clamping), radians.
pub fn augment_hand(
    seed: &HandPose,
    cfg: &AugmentationConfig,
    limits: &JointLimits,
    rng: &mut impl Rng,
) -> (HandPose, [f64; POSE_DIM]) {
    let mut out = seed.clone();
    for (j, a) in out.angles.iter_mut().enumerate() {
        a[BEND] += sample(rng, cfg.bend_offset_deg).to_radians();
        if j % 3 == 0 {
            a[SPLAY] += sample(rng, cfg.splay_offset_deg).to_radians();
        }
    }
    out.enforce_structure();
    let out = clamp_pose(&out, limits);
    let mut offsets = [0.0; POSE_DIM];
    for (slot, o) in offsets.iter_mut().enumerate() {
        *o = out.angles[slot / 3][slot % 3] - seed.angles[slot / 3][slot % 3];
    }
    (out, offsets)
}

/// `cfg.count` augmented copies of a seed pair. Offsets compose additively with
/// the seed's bend and splay angles; splay offsets apply to finger roots only;
/// the result is clamped into the anatomic ranges. Root placement is copied.
pub fn augment_pose(
    seed: &PosePair,
    cfg: &AugmentationConfig,
    limits: &JointLimits,
    rng: &mut impl Rng,
) -> Result<Vec<PosePair>> {
    cfg.validate()?;
    limits.validate()?;
    Ok((0..cfg.count)
        .map(|_| {
            let (right, _) = augment_hand(&seed.right, cfg, limits, rng);
            let (left, _) = augment_hand(&seed.left, cfg, limits, rng);
            PosePair { right, left }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hand::{angle_slot, Side};
    use crate::limits::check_limits;
    use crate::seeds::builtin_seed_pairs;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_offsets_reproduce_the_seed() {
        let seed = &builtin_seed_pairs()[0].pair;
        let cfg = AugmentationConfig {
            count: 3,
            bend_offset_deg: [0.0, 0.0],
            splay_offset_deg: [0.0, 0.0],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let out = augment_pose(seed, &cfg, &JointLimits::default(), &mut rng).unwrap();
        assert_eq!(out.len(), 3);
        for p in out {
            assert_eq!(&p, seed);
        }
    }

    #[test]
    fn structure_and_limits_hold() {
        let limits = JointLimits::default();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for s in builtin_seed_pairs() {
            let out = augment_pose(&s.pair, &AugmentationConfig::default(), &limits, &mut rng).unwrap();
            for p in out {
                for h in [&p.right, &p.left] {
                    assert!(h.is_structurally_valid());
                    assert!(check_limits(h, &limits).is_empty());
                    for seg in 1..3 {
                        for f in 0..5 {
                            assert_eq!(h.angle(f, seg, SPLAY), 0.0);
                        }
                    }
                }
                assert_eq!(p.right.root_rotation, s.pair.right.root_rotation);
                assert_eq!(p.left.root_translation, s.pair.left.root_translation);
            }
        }
    }

    #[test]
    fn thumb_root_bend_stays_in_table_range() {
        let limits = JointLimits::default();
        let cfg = AugmentationConfig::default();
        let seed = HandPose::t_pose(Side::Right);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for _ in 0..10_000 {
            let (p, _) = augment_hand(&seed, &cfg, &limits, &mut rng);
            let b = p.angles[0][BEND].to_degrees();
            lo = lo.min(b);
            hi = hi.max(b);
        }
        assert!(lo >= -20.0 - 1e-9 && hi <= 40.0 + 1e-9, "[{lo}, {hi}]");
        // the clamp is active at both ends under ±90° offsets
        assert!((lo + 20.0).abs() < 1e-9 && (hi - 40.0).abs() < 1e-9);
        assert_eq!(angle_slot(0, 0, BEND), 0);
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let seed = &builtin_seed_pairs()[1].pair;
        let limits = JointLimits::default();
        let cfg = AugmentationConfig::default();
        let a = augment_pose(seed, &cfg, &limits, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = augment_pose(seed, &cfg, &limits, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn malformed_limits_are_a_configuration_error() {
        let mut limits = JointLimits::default();
        limits.index.root_bend = [10.0, 5.0];
        let seed = &builtin_seed_pairs()[0].pair;
        let r = augment_pose(seed, &AugmentationConfig::default(), &limits, &mut ChaCha8Rng::seed_from_u64(0));
        assert!(matches!(r, Err(Error::Config(_))));
    }
}
