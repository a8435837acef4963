use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Geometry of one finger in the right-hand T-pose, meters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FingerProportions {
    /// Root joint position.
    pub base: [f64; 3],
    /// Direction of the finger in the T-pose (need not be normalized).
    pub direction: [f64; 3],
    /// Root, middle and end bone lengths.
    pub lengths: [f64; 3],
    /// Capsule radius of each segment.
    pub radii: [f64; 3],
}

/// Bone-length table for the procedural hand (right hand; the left is mirrored).
///
/// The palm is a superellipsoid centred at `palm_center`; fingers are capsule
/// chains starting at their root joints. The wrist sits at the origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HandProportions {
    pub palm_center: [f64; 3],
    pub palm_half_extents: [f64; 3],
    /// Superellipsoid exponent; smaller is boxier.
    pub palm_exponent: f64,
    /// Thumb, index, middle, ring, pinky.
    pub fingers: [FingerProportions; 5],
}

impl Default for HandProportions {
    fn default() -> Self {
        let finger = |x: f64, y: f64, lengths: [f64; 3], radii: [f64; 3]| FingerProportions {
            base: [x, y, 0.0],
            direction: [0.0, 1.0, 0.0],
            lengths,
            radii,
        };
        HandProportions {
            palm_center: [0.0, 0.046, 0.0],
            palm_half_extents: [0.043, 0.050, 0.0125],
            palm_exponent: 0.45,
            fingers: [
                FingerProportions {
                    base: [-0.024, 0.022, -0.004],
                    direction: [-0.62, 0.78, 0.0],
                    lengths: [0.044, 0.032, 0.027],
                    radii: [0.0115, 0.0100, 0.0090],
                },
                finger(-0.028, 0.090, [0.040, 0.024, 0.021], [0.0088, 0.0080, 0.0072]),
                finger(-0.008, 0.094, [0.045, 0.028, 0.023], [0.0090, 0.0082, 0.0074]),
                finger(0.012, 0.090, [0.042, 0.026, 0.022], [0.0086, 0.0078, 0.0070]),
                finger(0.030, 0.082, [0.032, 0.020, 0.019], [0.0076, 0.0070, 0.0064]),
            ],
        }
    }
}

impl HandProportions {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !self.palm_half_extents.iter().all(|&v| positive(v)) {
            return Err(Error::InvalidProportions(
                "palm half extents must be positive".into(),
            ));
        }
        if !positive(self.palm_exponent) || self.palm_exponent > 1.0 {
            return Err(Error::InvalidProportions(
                "palm exponent must lie in (0, 1]".into(),
            ));
        }
        for (f, finger) in self.fingers.iter().enumerate() {
            let name = crate::hand::Finger::ALL[f].name();
            for (k, (&len, &r)) in finger.lengths.iter().zip(&finger.radii).enumerate() {
                if !positive(len) {
                    return Err(Error::InvalidProportions(format!(
                        "{name} bone {k} has non-positive length {len}"
                    )));
                }
                if !positive(r) {
                    return Err(Error::InvalidProportions(format!(
                        "{name} bone {k} has non-positive radius {r}"
                    )));
                }
            }
            if finger.lengths[2] <= finger.radii[2] {
                return Err(Error::InvalidProportions(format!(
                    "{name} end bone must be longer than its radius"
                )));
            }
            let d = finger.direction;
            let n = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
            if !(n.is_finite() && n > 1e-9) {
                return Err(Error::InvalidProportions(format!(
                    "{name} direction must be non-zero"
                )));
            }
            if (d[2] / n).abs() > 0.99 {
                return Err(Error::InvalidProportions(format!(
                    "{name} direction must not be parallel to the palm normal"
                )));
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let p: HandProportions = toml::from_str(&text).map_err(|e| Error::format(path, e))?;
        p.validate()?;
        Ok(p)
    }
}
