use nalgebra::Matrix3;

use super::pose::{joint_index, Side};
use super::proportions::HandProportions;
use crate::error::Result;
use crate::mesh::{TriMesh, Vec3};

pub const NUM_JOINTS: usize = 16;
pub const NUM_TIPS: usize = 5;
/// 16 kinematic joints followed by 5 fingertips.
pub const NUM_KEYPOINTS: usize = NUM_JOINTS + NUM_TIPS;
pub const WRIST: usize = 0;

/// Parent of each of the 21 keypoints (16 joints + 5 tips); `None` for the wrist.
pub fn keypoint_parent(k: usize) -> Option<usize> {
    match k {
        0 => None,
        1..=15 => Some(if (k - 1) % 3 == 0 { WRIST } else { k - 1 }),
        16..=20 => Some(joint_index(k - 16, 2)),
        _ => panic!("keypoint index {k} out of range"),
    }
}

/// Palm-side normal of the right hand in the T-pose.
fn palmar_normal() -> Vec3 {
    Vec3::new(0.0, 0.0, -1.0)
}

/// Reflection across the x = 0 plane.
pub fn mirror_matrix() -> Matrix3<f64> {
    Matrix3::from_diagonal(&Vec3::new(-1.0, 1.0, 1.0))
}

/// Wrist-rooted tree of 16 joints with twist-splay-bend frames.
#[derive(Debug, Clone, PartialEq)]
pub struct KinematicTree {
    pub parent: Vec<Option<usize>>,
    /// Canonical (T-pose) joint positions.
    pub rest_positions: Vec<Vec3>,
    /// Columns are (twist, splay, bend); right-handed and orthonormal.
    pub frames: Vec<Matrix3<f64>>,
}

impl KinematicTree {
    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parent.is_empty()
    }

    /// Canonical offset from the parent joint.
    pub fn bone_vector(&self, j: usize) -> Vec3 {
        match self.parent[j] {
            Some(p) => self.rest_positions[j] - self.rest_positions[p],
            None => self.rest_positions[j],
        }
    }

    pub fn children(&self, j: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(move |&c| self.parent[c] == Some(j))
    }
}

/// Tessellation density of the procedural mesh.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeshResolution {
    pub capsule_around: usize,
    pub capsule_cap_rings: usize,
    pub capsule_body_rings: usize,
    pub palm_around: usize,
    pub palm_rings: usize,
}

impl Default for MeshResolution {
    fn default() -> Self {
        Self {
            capsule_around: 10,
            capsule_cap_rings: 3,
            capsule_body_rings: 1,
            palm_around: 24,
            palm_rings: 11,
        }
    }
}

/// Articulated capsule-and-palm hand.
///
/// Vertices are grouped into 16 parts, one per joint; each part is a closed
/// surface of its own and is skinned rigidly to its joint.
#[derive(Debug, Clone)]
pub struct HandModel {
    pub side: Side,
    pub tree: KinematicTree,
    pub mesh: TriMesh,
    pub skin_weights: Vec<[f64; NUM_JOINTS]>,
    /// Joint owning each vertex.
    pub vertex_part: Vec<usize>,
    /// Vertex indices of each part, ascending.
    pub parts: Vec<Vec<usize>>,
    /// Canonical closed submesh of each part (local indexing matches `parts`).
    pub part_meshes: Vec<TriMesh>,
    /// Canonical fingertip points, attached to the end joints.
    pub tips: [Vec3; NUM_TIPS],
    pub vertex_normals: Vec<Vec3>,
}

struct PartBuilder {
    vertices: Vec<Vec3>,
    faces: Vec<[usize; 3]>,
}

/// Closed surface from a pole, a stack of rings and a second pole.
fn ring_surface(pole_a: Vec3, rings: &[Vec<Vec3>], pole_b: Vec3) -> PartBuilder {
    let around = rings[0].len();
    let mut vertices = vec![pole_a];
    for r in rings {
        vertices.extend_from_slice(r);
    }
    vertices.push(pole_b);
    let last = vertices.len() - 1;
    let idx = |ring: usize, k: usize| 1 + ring * around + (k % around);
    let mut faces = Vec::new();
    for k in 0..around {
        faces.push([0, idx(0, k + 1), idx(0, k)]);
    }
    for r in 0..rings.len() - 1 {
        for k in 0..around {
            let (a, b) = (idx(r, k), idx(r, k + 1));
            let (c, d) = (idx(r + 1, k), idx(r + 1, k + 1));
            faces.push([a, b, d]);
            faces.push([a, d, c]);
        }
    }
    let lr = rings.len() - 1;
    for k in 0..around {
        faces.push([last, idx(lr, k), idx(lr, k + 1)]);
    }
    let mut part = PartBuilder { vertices, faces };
    if TriMesh::new(part.vertices.clone(), part.faces.clone()).signed_volume() < 0.0 {
        for f in &mut part.faces {
            f.swap(1, 2);
        }
    }
    part
}

fn capsule(
    start: Vec3,
    frame: &Matrix3<f64>,
    axis_len: f64,
    radius: f64,
    res: &MeshResolution,
) -> PartBuilder {
    let t: Vec3 = frame.column(0).into();
    let u: Vec3 = frame.column(1).into();
    let w: Vec3 = frame.column(2).into();
    let end = start + t * axis_len;
    let ring = |center: Vec3, r: f64| -> Vec<Vec3> {
        (0..res.capsule_around)
            .map(|k| {
                let phi = 2.0 * std::f64::consts::PI * k as f64 / res.capsule_around as f64;
                center + (u * phi.cos() + w * phi.sin()) * r
            })
            .collect()
    };
    let cap = res.capsule_cap_rings.max(1);
    let mut rings = Vec::new();
    for k in 1..=cap {
        let alpha = std::f64::consts::FRAC_PI_2 * k as f64 / cap as f64;
        rings.push(ring(start - t * (radius * alpha.cos()), radius * alpha.sin()));
    }
    for k in 1..=res.capsule_body_rings {
        let s = k as f64 / (res.capsule_body_rings + 1) as f64;
        rings.push(ring(start + t * (axis_len * s), radius));
    }
    for k in (1..=cap).rev() {
        let alpha = std::f64::consts::FRAC_PI_2 * k as f64 / cap as f64;
        rings.push(ring(end + t * (radius * alpha.cos()), radius * alpha.sin()));
    }
    ring_surface(start - t * radius, &rings, end + t * radius)
}

fn signed_pow(x: f64, e: f64) -> f64 {
    x.signum() * x.abs().powf(e)
}

fn palm(p: &HandProportions, res: &MeshResolution) -> PartBuilder {
    let c = Vec3::from(p.palm_center);
    let [a, b, h] = p.palm_half_extents;
    let e = p.palm_exponent;
    let rings: Vec<Vec<Vec3>> = (1..=res.palm_rings)
        .map(|i| {
            let eta = -std::f64::consts::FRAC_PI_2
                + std::f64::consts::PI * i as f64 / (res.palm_rings + 1) as f64;
            (0..res.palm_around)
                .map(|k| {
                    let omega = 2.0 * std::f64::consts::PI * k as f64 / res.palm_around as f64;
                    let ce = signed_pow(eta.cos(), e);
                    c + Vec3::new(
                        a * ce * signed_pow(omega.cos(), e),
                        b * ce * signed_pow(omega.sin(), e),
                        h * signed_pow(eta.sin(), e),
                    )
                })
                .collect()
        })
        .collect();
    ring_surface(c - Vec3::new(0.0, 0.0, h), &rings, c + Vec3::new(0.0, 0.0, h))
}

/// Twist along the bone, splay from the palm normal, bend = twist × splay.
fn tsb_frame(twist_dir: Vec3) -> Matrix3<f64> {
    let t = twist_dir.normalize();
    let n = palmar_normal();
    let s = (n - t * n.dot(&t)).normalize();
    let b = t.cross(&s);
    Matrix3::from_columns(&[t, s, b])
}

impl HandModel {
    /// Builds the canonical hand for `side`. The left hand is the mirror image of
    /// the right across x = 0, with every frame axis negated so that identical
    /// angle vectors produce mirror-image articulations.
    pub fn build(side: Side, proportions: &HandProportions) -> Result<Self> {
        Self::build_with_resolution(side, proportions, &MeshResolution::default())
    }

    pub fn build_with_resolution(
        side: Side,
        proportions: &HandProportions,
        res: &MeshResolution,
    ) -> Result<Self> {
        proportions.validate()?;

        let mut parent = vec![None; NUM_JOINTS];
        let mut rest = vec![Vec3::zeros(); NUM_JOINTS];
        let mut frames = vec![Matrix3::identity(); NUM_JOINTS];
        let mut tips = [Vec3::zeros(); NUM_TIPS];

        for (f, fp) in proportions.fingers.iter().enumerate() {
            let dir = Vec3::from(fp.direction).normalize();
            let mut pos = Vec3::from(fp.base);
            for k in 0..3 {
                let j = joint_index(f, k);
                parent[j] = Some(if k == 0 { WRIST } else { j - 1 });
                rest[j] = pos;
                frames[j] = tsb_frame(dir);
                pos += dir * fp.lengths[k];
            }
            tips[f] = pos;
        }
        frames[WRIST] = tsb_frame(rest[joint_index(2, 0)] - rest[WRIST]);

        let mut parts: Vec<PartBuilder> = Vec::with_capacity(NUM_JOINTS);
        parts.push(palm(proportions, res));
        for (f, fp) in proportions.fingers.iter().enumerate() {
            for k in 0..3 {
                let j = joint_index(f, k);
                let axis_len = if k == 2 {
                    fp.lengths[2] - fp.radii[2]
                } else {
                    fp.lengths[k]
                };
                parts.push(capsule(rest[j], &frames[j], axis_len, fp.radii[k], res));
            }
        }

        let mut vertices = Vec::new();
        let mut faces = Vec::new();
        let mut vertex_part = Vec::new();
        let mut part_indices = Vec::with_capacity(NUM_JOINTS);
        for (j, part) in parts.iter().enumerate() {
            let offset = vertices.len();
            part_indices.push((offset..offset + part.vertices.len()).collect::<Vec<_>>());
            vertices.extend_from_slice(&part.vertices);
            vertex_part.extend(std::iter::repeat_n(j, part.vertices.len()));
            faces.extend(
                part.faces
                    .iter()
                    .map(|f| [f[0] + offset, f[1] + offset, f[2] + offset]),
            );
        }

        if side == Side::Left {
            let s = mirror_matrix();
            for v in &mut vertices {
                *v = s * *v;
            }
            for f in &mut faces {
                f.swap(1, 2);
            }
            for r in &mut rest {
                *r = s * *r;
            }
            for fr in &mut frames {
                *fr = -(s * *fr);
            }
            for t in &mut tips {
                *t = s * *t;
            }
        }

        let mesh = TriMesh::new(vertices, faces);
        let skin_weights = vertex_part
            .iter()
            .map(|&j| {
                let mut w = [0.0; NUM_JOINTS];
                w[j] = 1.0;
                w
            })
            .collect();
        let part_meshes = part_indices.iter().map(|ix| mesh.submesh(ix)).collect();
        let vertex_normals = mesh.vertex_normals();

        Ok(HandModel {
            side,
            tree: KinematicTree {
                parent,
                rest_positions: rest,
                frames,
            },
            mesh,
            skin_weights,
            vertex_part,
            parts: part_indices,
            part_meshes,
            tips,
            vertex_normals,
        })
    }

    pub fn vertex_count(&self) -> usize {
        self.mesh.vertices.len()
    }

    /// Canonical keypoints: 16 joints then 5 tips.
    pub fn rest_keypoints(&self) -> [Vec3; NUM_KEYPOINTS] {
        let mut out = [Vec3::zeros(); NUM_KEYPOINTS];
        out[..NUM_JOINTS].copy_from_slice(&self.tree.rest_positions);
        out[NUM_JOINTS..].copy_from_slice(&self.tips);
        out
    }
}

/// Right and left model built from the same proportions.
#[derive(Debug, Clone)]
pub struct HandPair {
    pub right: HandModel,
    pub left: HandModel,
}

impl HandPair {
    pub fn build(proportions: &HandProportions) -> Result<Self> {
        Ok(Self {
            right: HandModel::build(Side::Right, proportions)?,
            left: HandModel::build(Side::Left, proportions)?,
        })
    }

    pub fn get(&self, side: Side) -> &HandModel {
        match side {
            Side::Right => &self.right,
            Side::Left => &self.left,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn right() -> HandModel {
        HandModel::build(Side::Right, &HandProportions::default()).unwrap()
    }

    #[test]
    fn structure() {
        let m = right();
        assert_eq!(m.tree.len(), NUM_JOINTS);
        assert_eq!(m.tips.len(), NUM_TIPS);
        assert_eq!(m.parts.len(), NUM_JOINTS);
        assert_eq!(m.tree.parent[WRIST], None);
        for j in 1..NUM_JOINTS {
            let p = m.tree.parent[j].unwrap();
            assert!(p < j);
        }
        for f in 0..5 {
            assert_eq!(m.tree.parent[joint_index(f, 0)], Some(WRIST));
            assert_eq!(m.tree.parent[joint_index(f, 1)], Some(joint_index(f, 0)));
            assert_eq!(m.tree.parent[joint_index(f, 2)], Some(joint_index(f, 1)));
        }
        assert_eq!(m.tree.children(WRIST).count(), 5);
    }

    #[test]
    fn partition_covers_every_vertex_once() {
        let m = right();
        let mut seen = vec![0usize; m.vertex_count()];
        for part in &m.parts {
            for &v in part {
                seen[v] += 1;
            }
        }
        assert!(seen.iter().all(|&c| c == 1));
        for (j, part) in m.parts.iter().enumerate() {
            assert!(part.iter().all(|&v| m.vertex_part[v] == j));
        }
    }

    #[test]
    fn parts_are_closed_and_outward() {
        for side in [Side::Right, Side::Left] {
            let m = HandModel::build(side, &HandProportions::default()).unwrap();
            m.mesh.check_watertight().unwrap();
            for pm in &m.part_meshes {
                pm.check_watertight().unwrap();
                assert!(pm.signed_volume() > 0.0);
            }
        }
    }

    #[test]
    fn frames_are_right_handed_orthonormal() {
        for side in [Side::Right, Side::Left] {
            let m = HandModel::build(side, &HandProportions::default()).unwrap();
            for f in &m.tree.frames {
                assert!((f.transpose() * f - Matrix3::identity()).norm() < 1e-9);
                assert!((f.determinant() - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn skin_weights_rows_sum_to_one() {
        let m = right();
        for row in &m.skin_weights {
            assert!(row.iter().all(|&w| w >= 0.0));
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn left_is_mirror_of_right() {
        let r = right();
        let l = HandModel::build(Side::Left, &HandProportions::default()).unwrap();
        assert_eq!(r.vertex_count(), l.vertex_count());
        for (a, b) in r.mesh.vertices.iter().zip(&l.mesh.vertices) {
            assert!((a.x + b.x).abs() < 1e-9 && (a.y - b.y).abs() < 1e-9 && (a.z - b.z).abs() < 1e-9);
        }
    }

    #[test]
    fn fingertip_is_on_the_end_capsule_surface() {
        let m = right();
        for f in 0..5 {
            let part = &m.part_meshes[joint_index(f, 2)];
            assert!(part.distance(&m.tips[f]) < 1e-12);
        }
    }

    #[test]
    fn keypoint_tree() {
        assert_eq!(keypoint_parent(0), None);
        assert_eq!(keypoint_parent(1), Some(0));
        assert_eq!(keypoint_parent(3), Some(2));
        assert_eq!(keypoint_parent(16), Some(3));
        assert_eq!(keypoint_parent(20), Some(15));
    }
}
