//! Penetration between the two hands, part by part.

use rayon::prelude::*;

use super::sdf::{build_sdf, SdfGrid};
use crate::error::Result;
use crate::hand::{HandModel, HandPair, PosedHand, Side, Wrenches, NUM_JOINTS};
use crate::mesh::Vec3;

/// One SDF grid per part, built in the part's canonical frame.
///
/// Parts move rigidly with their joint, so a canonical grid queried through
/// the joint's inverse transform equals a grid rebuilt from the posed submesh.
#[derive(Debug, Clone)]
pub struct PartGrids {
    pub grids: Vec<SdfGrid>,
    /// Canonical bounding-sphere center of each part.
    pub centers: Vec<Vec3>,
    /// Bounding-sphere radius covering every point where `Ω > 0` can occur.
    pub radii: Vec<f64>,
}

impl PartGrids {
    pub fn build(model: &HandModel, resolution: usize, padding: usize) -> Result<Self> {
        let grids = model
            .part_meshes
            .par_iter()
            .map(|m| build_sdf(m, resolution, padding))
            .collect::<Result<Vec<_>>>()?;
        let mut centers = Vec::with_capacity(NUM_JOINTS);
        let mut radii = Vec::with_capacity(NUM_JOINTS);
        for (m, g) in model.part_meshes.iter().zip(&grids) {
            let bb = m.aabb().expect("parts are non-empty");
            centers.push(bb.center());
            radii.push(0.5 * bb.extent().norm() + g.spacing.norm());
        }
        Ok(Self {
            grids,
            centers,
            radii,
        })
    }

    /// `Ω` of part `j` at posed point `p`, and its gradient with respect to `p`.
    pub fn omega(&self, model: &HandModel, posed: &PosedHand, j: usize, p: &Vec3) -> (f64, Vec3) {
        let q = posed.transforms.to_canonical(model, j, p);
        let (w, g) = self.grids[j].query(&q);
        (w, posed.transforms.rotations[j] * g)
    }

    /// Sum of `Ω` over all parts at `p`.
    pub fn omega_total(&self, model: &HandModel, posed: &PosedHand, p: &Vec3) -> (f64, Vec3) {
        let mut w = 0.0;
        let mut g = Vec3::zeros();
        for j in 0..NUM_JOINTS {
            let (wj, gj) = self.omega(model, posed, j, p);
            w += wj;
            g += gj;
        }
        (w, g)
    }

    pub fn posed_center(&self, model: &HandModel, posed: &PosedHand, j: usize) -> Vec3 {
        posed.transforms.apply(model, j, &self.centers[j])
    }
}

/// Grids for both hands, indexed by [`Side::index`].
#[derive(Debug, Clone)]
pub struct HandGrids {
    pub right: PartGrids,
    pub left: PartGrids,
}

impl HandGrids {
    pub fn build(models: &HandPair, resolution: usize, padding: usize) -> Result<Self> {
        Ok(Self {
            right: PartGrids::build(&models.right, resolution, padding)?,
            left: PartGrids::build(&models.left, resolution, padding)?,
        })
    }

    pub fn get(&self, side: Side) -> &PartGrids {
        match side {
            Side::Right => &self.right,
            Side::Left => &self.left,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PenetrationResult {
    /// `L_p^right + L_p^left`.
    pub loss: f64,
    /// `[L_p^right, L_p^left]`: each hand's vertices inside the other hand.
    pub per_side: [f64; 2],
    /// Point gradients of `loss` on each hand's joints, `[right, left]`.
    /// Includes the motion of the queried grids with their joints.
    pub wrenches: [Wrenches; 2],
}

/// `Σ_s Σ_parts Σ_v Ω_other(v)` over both hands, with gradients.
pub fn penetration_loss(
    models: &HandPair,
    posed: [&PosedHand; 2],
    grids: &HandGrids,
) -> PenetrationResult {
    let mut per_side = [0.0; 2];
    let mut wrenches = [Wrenches::default(), Wrenches::default()];
    for side in [Side::Right, Side::Left] {
        let other = side.other();
        let (s, o) = (side.index(), other.index());
        let (model, omodel) = (models.get(side), models.get(other));
        let (own, ogrids) = (grids.get(side), grids.get(other));
        let (ph, po) = (posed[s], posed[o]);
        let mut w_self = Wrenches::default();
        let mut w_other = Wrenches::default();
        for a in 0..NUM_JOINTS {
            let ca = own.posed_center(model, ph, a);
            for b in 0..NUM_JOINTS {
                let cb = ogrids.posed_center(omodel, po, b);
                if (ca - cb).norm() > own.radii[a] + ogrids.radii[b] {
                    continue;
                }
                for &v in &model.parts[a] {
                    let p = ph.vertices[v];
                    let (w, g) = ogrids.omega(omodel, po, b, &p);
                    if w > 0.0 {
                        per_side[s] += w;
                        w_self.add_vertex(model, &ph.transforms, v, &g);
                        w_other.add(b, &p, &(-g));
                    }
                }
            }
        }
        wrenches[s].merge(&w_self);
        wrenches[o].merge(&w_other);
    }
    PenetrationResult {
        loss: per_side[0] + per_side[1],
        per_side,
        wrenches,
    }
}

/// Deepest point of either hand inside the other, by exact point-in-mesh and
/// point-to-mesh distance on every part (no grids). Meters; 0 when disjoint.
pub fn max_penetration_depth(models: &HandPair, posed: [&PosedHand; 2]) -> f64 {
    let mut deepest: f64 = 0.0;
    for side in [Side::Right, Side::Left] {
        let other = side.other();
        let model = models.get(side);
        let omodel = models.get(other);
        let ph = posed[side.index()];
        let po = posed[other.index()];
        let spheres: Vec<(Vec3, f64)> = omodel
            .part_meshes
            .iter()
            .enumerate()
            .map(|(b, m)| {
                let bb = m.aabb().expect("parts are non-empty");
                (po.transforms.apply(omodel, b, &bb.center()), 0.5 * bb.extent().norm())
            })
            .collect();
        let d = (0..model.vertex_count())
            .into_par_iter()
            .map(|v| {
                let p = ph.vertices[v];
                let mut best: f64 = 0.0;
                for (b, (c, r)) in spheres.iter().enumerate() {
                    if (p - c).norm() > *r {
                        continue;
                    }
                    let q = po.transforms.to_canonical(omodel, b, &p);
                    let m = &omodel.part_meshes[b];
                    if m.contains(&q) {
                        best = best.max(m.distance(&q));
                    }
                }
                best
            })
            .reduce(|| 0.0, f64::max);
        deepest = deepest.max(d);
    }
    deepest
}
