//! The composite objective `w1·L_A + w2·L_a + w3·L_adv + w4·L_p` and its parts.

pub mod anchors;
pub mod penetration;
pub mod sdf;

pub use anchors::{
    anchor_contact, attraction_loss, attraction_wrenches, build_anchor_pairs, contact_frequency, pairs_for_state,
    select_anchors, select_anchors_from_counts, spring_weight, AnchorPair, AnchorSet, AnchorSets,
    ANCHOR_COUNT, CONTACT_SCALE,
};
pub use penetration::{max_penetration_depth, penetration_loss, HandGrids, PartGrids, PenetrationResult};
pub use sdf::{build_sdf, omega_query, SdfGrid};

pub use crate::limits::{anatomic_loss, check_limits};

use serde::{Deserialize, Serialize};

use crate::discriminator::{adversarial_loss, Discriminator};
use crate::error::{Error, Result};
use crate::hand::{backprop_wrenches, HandPair, PosePair, PosedHand, Side, Wrenches, HAND_PARAMS, NUM_JOINTS};
use crate::limits::JointLimits;

/// Parameters of a pose pair: right hand's 51 followed by the left hand's 51.
pub const PAIR_PARAMS: usize = 2 * HAND_PARAMS;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    /// Attraction.
    pub w1: f64,
    /// Anatomic.
    pub w2: f64,
    /// Adversarial.
    pub w3: f64,
    /// Penetration.
    pub w4: f64,
}

impl LossWeights {
    pub const ZERO: LossWeights = LossWeights {
        w1: 0.0,
        w2: 0.0,
        w3: 0.0,
        w4: 0.0,
    };

    pub fn validate(&self) -> Result<()> {
        for (n, w) in [("w1", self.w1), ("w2", self.w2), ("w3", self.w3), ("w4", self.w4)] {
            if !(w.is_finite() && w >= 0.0) {
                return Err(Error::Config(format!("loss weight {n} = {w} must be finite and non-negative")));
            }
        }
        Ok(())
    }
}

/// Unweighted loss terms and the weighted total.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossTerms {
    pub penetration: f64,
    pub attraction: f64,
    pub anatomic: f64,
    pub adversarial: f64,
    pub total: f64,
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub terms: LossTerms,
    /// Gradient of the total, [`PAIR_PARAMS`] entries.
    pub grad: Vec<f64>,
}

/// Everything the objective needs besides the pose pair itself.
#[derive(Debug, Clone, Copy)]
pub struct Objective<'a> {
    pub models: &'a HandPair,
    pub grids: &'a HandGrids,
    pub limits: &'a JointLimits,
    pub discriminator: Option<&'a Discriminator>,
}

fn accumulate(dst: &mut Wrenches, k: f64, src: &Wrenches) {
    for j in 0..NUM_JOINTS {
        dst.force[j] += src.force[j] * k;
        dst.moment[j] += src.moment[j] * k;
    }
}

impl Objective<'_> {
    pub fn evaluate(&self, pair: &PosePair, anchor_pairs: &[AnchorPair], w: &LossWeights) -> Evaluation {
        let posed = [
            PosedHand::new(&self.models.right, &pair.right),
            PosedHand::new(&self.models.left, &pair.left),
        ];
        let pen = penetration_loss(self.models, [&posed[0], &posed[1]], self.grids);
        let (attraction, attr_w) = attraction_wrenches(self.models, anchor_pairs, &posed[0], &posed[1]);

        let mut terms = LossTerms {
            penetration: pen.loss,
            attraction,
            ..LossTerms::default()
        };
        let mut grad = vec![0.0; PAIR_PARAMS];
        for side in [Side::Right, Side::Left] {
            let s = side.index();
            let pose = pair.hand(side);
            let model = self.models.get(side);
            let mut wr = Wrenches::default();
            accumulate(&mut wr, w.w4, &pen.wrenches[s]);
            accumulate(&mut wr, w.w1, &attr_w[s]);
            let g = &mut grad[s * HAND_PARAMS..(s + 1) * HAND_PARAMS];
            g.copy_from_slice(&backprop_wrenches(model, pose, &posed[s].transforms, &wr));

            let (la, ga) = anatomic_loss(pose, self.limits);
            terms.anatomic += la;
            for (gi, a) in g.iter_mut().zip(&ga) {
                *gi += w.w2 * a;
            }
            if let Some(d) = self.discriminator {
                let (lv, gv) = adversarial_loss(d, pose);
                terms.adversarial += lv;
                for (gi, a) in g.iter_mut().zip(&gv) {
                    *gi += w.w3 * a;
                }
            }
        }
        terms.total = w.w1 * terms.attraction
            + w.w2 * terms.anatomic
            + w.w3 * terms.adversarial
            + w.w4 * terms.penetration;
        Evaluation { terms, grad }
    }

    /// Total loss only.
    pub fn value(&self, pair: &PosePair, anchor_pairs: &[AnchorPair], w: &LossWeights) -> f64 {
        self.evaluate(pair, anchor_pairs, w).terms.total
    }
}
