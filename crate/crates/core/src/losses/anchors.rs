//! Contact anchors, cross-hand anchor pairs and the attraction springs.

use std::f64::consts::PI;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hand::{HandModel, HandPair, PosePair, PosedHand, Side, Wrenches};
use crate::mesh::{k_ring, Vec3};

pub const ANCHOR_COUNT: usize = 108;
/// Contact and pairing scale `s`, meters.
pub const CONTACT_SCALE: f64 = 0.02;
pub const ANCHOR_FILE_VERSION: u32 = 1;

/// Anchor vertices of one hand with their canonical normals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorSet {
    pub side: Side,
    pub vertices: Vec<usize>,
    pub normals: Vec<[f64; 3]>,
}

impl AnchorSet {
    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    fn from_vertices(model: &HandModel, vertices: Vec<usize>) -> Self {
        let normals = vertices
            .iter()
            .map(|&v| {
                let n = model.vertex_normals[v];
                [n.x, n.y, n.z]
            })
            .collect();
        Self {
            side: model.side,
            vertices,
            normals,
        }
    }

    /// Posed anchor positions and normals.
    pub fn posed(&self, model: &HandModel, posed: &PosedHand) -> (Vec<Vec3>, Vec<Vec3>) {
        let pos = self.vertices.iter().map(|&v| posed.vertices[v]).collect();
        let nrm = self
            .vertices
            .iter()
            .zip(&self.normals)
            .map(|(&v, n)| posed.transforms.rotations[model.vertex_part[v]] * Vec3::from(*n))
            .collect();
        (pos, nrm)
    }
}

/// Both hands' anchor sets; the sidecar file format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorSets {
    pub version: u32,
    pub contact_scale: f64,
    pub right: AnchorSet,
    pub left: AnchorSet,
}

impl AnchorSets {
    pub fn get(&self, side: Side) -> &AnchorSet {
        match side {
            Side::Right => &self.right,
            Side::Left => &self.left,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let s = serde_json::to_string_pretty(self).map_err(|e| Error::format(path, e.to_string()))?;
        std::fs::write(path, s).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let a: Self = serde_json::from_str(&s).map_err(|e| Error::format(path, e.to_string()))?;
        if a.version != ANCHOR_FILE_VERSION {
            return Err(Error::format(path, format!("unsupported anchor file version {}", a.version)));
        }
        if a.right.side != Side::Right || a.left.side != Side::Left {
            return Err(Error::format(path, "anchor sets listed under the wrong side"));
        }
        Ok(a)
    }

    /// Checks indices against the models.
    pub fn validate(&self, models: &HandPair) -> Result<()> {
        for set in [&self.right, &self.left] {
            let n = models.get(set.side).vertex_count();
            if set.vertices.len() != set.normals.len() || set.vertices.iter().any(|&v| v >= n) {
                return Err(Error::Config(format!("{:?} anchor set does not match the hand mesh", set.side)));
            }
        }
        Ok(())
    }
}

/// Per-vertex count of corpus configurations in which the vertex lies within
/// `threshold` of the other hand's surface, `[right counts, left counts]`.
pub fn contact_frequency(models: &HandPair, corpus: &[PosePair], threshold: f64) -> [Vec<u32>; 2] {
    let per_pair: Vec<[Vec<bool>; 2]> = corpus
        .par_iter()
        .map(|pair| {
            let r = PosedHand::new(&models.right, &pair.right);
            let l = PosedHand::new(&models.left, &pair.left);
            [
                near_other(models, Side::Right, &r, &l, threshold),
                near_other(models, Side::Left, &l, &r, threshold),
            ]
        })
        .collect();
    let mut counts = [
        vec![0u32; models.right.vertex_count()],
        vec![0u32; models.left.vertex_count()],
    ];
    for flags in &per_pair {
        for s in 0..2 {
            for (c, &f) in counts[s].iter_mut().zip(&flags[s]) {
                *c += f as u32;
            }
        }
    }
    counts
}

fn near_other(
    models: &HandPair,
    side: Side,
    own: &PosedHand,
    other: &PosedHand,
    threshold: f64,
) -> Vec<bool> {
    let model = models.get(side);
    let omodel = models.get(side.other());
    let spheres: Vec<(Vec3, f64)> = omodel
        .part_meshes
        .iter()
        .enumerate()
        .map(|(b, m)| {
            let bb = m.aabb().expect("parts are non-empty");
            (other.transforms.apply(omodel, b, &bb.center()), 0.5 * bb.extent().norm())
        })
        .collect();
    (0..model.vertex_count())
        .map(|v| {
            let p = own.vertices[v];
            spheres.iter().enumerate().any(|(b, (c, r))| {
                (p - c).norm() <= r + threshold && {
                    let q = other.transforms.to_canonical(omodel, b, &p);
                    let m = &omodel.part_meshes[b];
                    m.contains(&q) || m.distance(&q) < threshold
                }
            })
        })
        .collect()
}

/// Greedy anchor pick: vertices in decreasing contact count (ties by index),
/// skipping anything within 2 mesh hops of an earlier pick. Vertices that never
/// made contact are not eligible.
pub fn select_anchors_from_counts(model: &HandModel, counts: &[u32], count: usize) -> Result<AnchorSet> {
    let adj = model.mesh.adjacency();
    let mut order: Vec<usize> = (0..counts.len()).filter(|&v| counts[v] > 0).collect();
    order.sort_by(|&a, &b| counts[b].cmp(&counts[a]).then(a.cmp(&b)));
    let mut blocked = vec![false; counts.len()];
    let mut chosen = Vec::with_capacity(count);
    for v in order {
        if chosen.len() == count {
            break;
        }
        if blocked[v] {
            continue;
        }
        chosen.push(v);
        for u in k_ring(&adj, v, 2) {
            blocked[u] = true;
        }
    }
    if chosen.len() < count {
        return Err(Error::InsufficientCorpus(format!(
            "only {} of {count} {:?} anchors could be placed",
            chosen.len(),
            model.side
        )));
    }
    Ok(AnchorSet::from_vertices(model, chosen))
}

/// Anchors for both hands from the contact statistics of `corpus`.
pub fn select_anchors(models: &HandPair, corpus: &[PosePair], count: usize) -> Result<AnchorSets> {
    let [rc, lc] = contact_frequency(models, corpus, CONTACT_SCALE);
    Ok(AnchorSets {
        version: ANCHOR_FILE_VERSION,
        contact_scale: CONTACT_SCALE,
        right: select_anchors_from_counts(&models.right, &rc, count)?,
        left: select_anchors_from_counts(&models.left, &lc, count)?,
    })
}

/// Spring weight `0.5·cos(π·d/s) + 0.5` for `d ≤ s`, else 0.
pub fn spring_weight(rest_distance: f64, s: f64) -> f64 {
    if rest_distance <= s {
        0.5 * (PI * rest_distance / s).cos() + 0.5
    } else {
        0.0
    }
}

/// A spring between a right-hand and a left-hand anchor vertex.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnchorPair {
    /// Right-hand vertex index.
    pub right: usize,
    /// Left-hand vertex index.
    pub left: usize,
    pub rest_distance: f64,
    pub k: f64,
}

/// Pairs each right anchor with its nearest left anchor, keeping pairs with
/// opposing normals and distance at most `s`.
pub fn build_anchor_pairs(
    right: (&[usize], &[Vec3], &[Vec3]),
    left: (&[usize], &[Vec3], &[Vec3]),
    s: f64,
) -> Vec<AnchorPair> {
    let (rv, rp, rn) = right;
    let (lv, lp, ln) = left;
    let mut out = Vec::new();
    for i in 0..rv.len() {
        let Some((j, d)) = lp
            .iter()
            .map(|q| (rp[i] - q).norm())
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(&b.1))
        else {
            break;
        };
        if rn[i].dot(&ln[j]) < 0.0 && d <= s {
            out.push(AnchorPair {
                right: rv[i],
                left: lv[j],
                rest_distance: d,
                k: spring_weight(d, s),
            });
        }
    }
    out
}

/// Anchor pairs for the current posed hands.
pub fn pairs_for_state(
    models: &HandPair,
    anchors: &AnchorSets,
    right: &PosedHand,
    left: &PosedHand,
) -> Vec<AnchorPair> {
    let (rp, rn) = anchors.right.posed(&models.right, right);
    let (lp, ln) = anchors.left.posed(&models.left, left);
    build_anchor_pairs(
        (&anchors.right.vertices, &rp, &rn),
        (&anchors.left.vertices, &lp, &ln),
        anchors.contact_scale,
    )
}

/// Whether some anchor pair of `pair` is closer than `within` meters.
pub fn anchor_contact(models: &HandPair, anchors: &AnchorSets, pair: &PosePair, within: f64) -> bool {
    let r = PosedHand::new(&models.right, &pair.right);
    let l = PosedHand::new(&models.left, &pair.left);
    pairs_for_state(models, anchors, &r, &l)
        .iter()
        .any(|p| (r.vertices[p.right] - l.vertices[p.left]).norm() < within)
}

/// `Σ ½ k ‖a_r − a_l‖²` and, per pair, the gradient with respect to the right
/// anchor (the left anchor's gradient is its negation).
pub fn attraction_loss(pairs: &[AnchorPair], right: &[Vec3], left: &[Vec3]) -> (f64, Vec<Vec3>) {
    let mut loss = 0.0;
    let grads = pairs
        .iter()
        .map(|p| {
            let d = right[p.right] - left[p.left];
            loss += 0.5 * p.k * d.norm_squared();
            d * p.k
        })
        .collect();
    (loss, grads)
}

/// Attraction loss with its joint wrenches `[right, left]`.
pub fn attraction_wrenches(
    models: &HandPair,
    pairs: &[AnchorPair],
    right: &PosedHand,
    left: &PosedHand,
) -> (f64, [Wrenches; 2]) {
    let (loss, grads) = attraction_loss(pairs, &right.vertices, &left.vertices);
    let mut wr = Wrenches::default();
    let mut wl = Wrenches::default();
    for (p, g) in pairs.iter().zip(&grads) {
        wr.add_vertex(&models.right, &right.transforms, p.right, g);
        wl.add_vertex(&models.left, &left.transforms, p.left, &(-g));
    }
    (loss, [wr, wl])
}
