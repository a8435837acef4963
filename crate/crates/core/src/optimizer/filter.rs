use serde::Serialize;

use crate::hand::{HandPair, PosePair, PosedHand, Side};
use crate::limits::{check_limits, JointLimits, LimitViolation};
use crate::losses::max_penetration_depth;

#[derive(Debug, Clone, Serialize)]
pub struct ValidityReport {
    pub pass: bool,
    /// Deepest interpenetration, meters, by exact point-in-mesh tests.
    pub max_depth: f64,
    pub violations: Vec<(Side, LimitViolation)>,
    pub diagnostics: Vec<String>,
}

/// Accepts a pair iff no angle leaves its range and no vertex of either hand
/// lies deeper than `tolerance` (meters) inside the other hand.
pub fn validity_filter(pair: &PosePair, models: &HandPair, limits: &JointLimits, tolerance: f64) -> ValidityReport {
    let mut violations = Vec::new();
    let mut diagnostics = Vec::new();
    for side in [Side::Right, Side::Left] {
        for v in check_limits(pair.hand(side), limits) {
            diagnostics.push(format!("joint limit ({side:?}): {v}"));
            violations.push((side, v));
        }
        if !pair.hand(side).is_structurally_valid() {
            diagnostics.push(format!("structure ({side:?}): twist or non-root splay is nonzero"));
        }
    }
    let r = PosedHand::new(&models.right, &pair.right);
    let l = PosedHand::new(&models.left, &pair.left);
    let max_depth = max_penetration_depth(models, [&r, &l]);
    if max_depth > tolerance {
        diagnostics.push(format!(
            "penetration: {:.3} mm exceeds tolerance {:.3} mm",
            max_depth * 1e3,
            tolerance * 1e3
        ));
    }
    ValidityReport {
        pass: diagnostics.is_empty(),
        max_depth,
        violations,
        diagnostics,
    }
}
