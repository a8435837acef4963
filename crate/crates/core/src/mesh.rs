//! Triangle-mesh queries: closest point, generalized winding number, watertightness,
//! vertex adjacency and OBJ export.

use std::collections::{HashMap, VecDeque};
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::Vector3;

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;

/// Indexed triangle mesh. Faces are counter-clockwise seen from outside.
#[derive(Debug, Clone, PartialEq)]
pub struct TriMesh {
    pub vertices: Vec<Vec3>,
    pub faces: Vec<[usize; 3]>,
}

/// Axis-aligned bounding box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn from_points<'a>(points: impl IntoIterator<Item = &'a Vec3>) -> Option<Self> {
        let mut it = points.into_iter();
        let first = *it.next()?;
        let mut bb = Aabb {
            min: first,
            max: first,
        };
        for p in it {
            bb.min = bb.min.inf(p);
            bb.max = bb.max.sup(p);
        }
        Some(bb)
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        (0..3).all(|k| p[k] >= self.min[k] && p[k] <= self.max[k])
    }

    /// Euclidean distance from `p` to the box (0 inside).
    pub fn distance(&self, p: &Vec3) -> f64 {
        let mut d2 = 0.0;
        for k in 0..3 {
            let e = (self.min[k] - p[k]).max(0.0).max(p[k] - self.max[k]);
            d2 += e * e;
        }
        d2.sqrt()
    }

    pub fn center(&self) -> Vec3 {
        (self.min + self.max) * 0.5
    }

    pub fn extent(&self) -> Vec3 {
        self.max - self.min
    }
}

/// Closest point on triangle `abc` to `p` (Ericson, Real-Time Collision Detection 5.1.5).
pub fn closest_point_on_triangle(p: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> Vec3 {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return *a;
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return *b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return a + ab * v;
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return *c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return a + ac * w;
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return b + (c - b) * w;
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    a + ab * v + ac * w
}

/// Signed solid angle subtended by triangle `abc` at `p` (Van Oosterom–Strackee).
fn solid_angle(p: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> f64 {
    let a = a - p;
    let b = b - p;
    let c = c - p;
    let (la, lb, lc) = (a.norm(), b.norm(), c.norm());
    let numer = a.dot(&b.cross(&c));
    let denom = la * lb * lc + a.dot(&b) * lc + a.dot(&c) * lb + b.dot(&c) * la;
    2.0 * numer.atan2(denom)
}

impl TriMesh {
    pub fn new(vertices: Vec<Vec3>, faces: Vec<[usize; 3]>) -> Self {
        Self { vertices, faces }
    }

    pub fn aabb(&self) -> Option<Aabb> {
        Aabb::from_points(self.vertices.iter())
    }

    fn tri(&self, f: &[usize; 3]) -> (&Vec3, &Vec3, &Vec3) {
        (
            &self.vertices[f[0]],
            &self.vertices[f[1]],
            &self.vertices[f[2]],
        )
    }

    /// Unsigned distance from `p` to the surface.
    pub fn distance(&self, p: &Vec3) -> f64 {
        self.faces
            .iter()
            .map(|f| {
                let (a, b, c) = self.tri(f);
                (closest_point_on_triangle(p, a, b, c) - p).norm_squared()
            })
            .fold(f64::INFINITY, f64::min)
            .sqrt()
    }

    /// Generalized winding number; ≈1 inside a closed outward-oriented mesh, ≈0 outside.
    pub fn winding_number(&self, p: &Vec3) -> f64 {
        let total: f64 = self
            .faces
            .iter()
            .map(|f| {
                let (a, b, c) = self.tri(f);
                solid_angle(p, a, b, c)
            })
            .sum();
        total / (4.0 * std::f64::consts::PI)
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        self.winding_number(p) > 0.5
    }

    /// Signed distance, negative inside.
    pub fn signed_distance(&self, p: &Vec3) -> f64 {
        let d = self.distance(p);
        if self.contains(p) {
            -d
        } else {
            d
        }
    }

    /// Signed volume by the divergence theorem; positive for outward orientation.
    pub fn signed_volume(&self) -> f64 {
        self.faces
            .iter()
            .map(|f| {
                let (a, b, c) = self.tri(f);
                a.dot(&b.cross(c)) / 6.0
            })
            .sum()
    }

    /// Every directed edge must be matched by exactly one opposite edge.
    pub fn check_watertight(&self) -> Result<()> {
        if self.faces.is_empty() {
            return Err(Error::DegenerateGeometry("mesh has no faces".into()));
        }
        let mut directed: HashMap<(usize, usize), usize> = HashMap::new();
        for f in &self.faces {
            for k in 0..3 {
                let (u, v) = (f[k], f[(k + 1) % 3]);
                if u >= self.vertices.len() || v >= self.vertices.len() {
                    return Err(Error::DegenerateGeometry(format!(
                        "face references vertex {} out of range",
                        u.max(v)
                    )));
                }
                *directed.entry((u, v)).or_insert(0) += 1;
            }
        }
        for (&(u, v), &n) in &directed {
            if n != 1 || directed.get(&(v, u)) != Some(&1) {
                return Err(Error::DegenerateGeometry(format!(
                    "edge ({u}, {v}) is not shared by exactly two consistently oriented faces"
                )));
            }
        }
        Ok(())
    }

    /// Area-weighted vertex normals.
    pub fn vertex_normals(&self) -> Vec<Vec3> {
        let mut normals = vec![Vec3::zeros(); self.vertices.len()];
        for f in &self.faces {
            let (a, b, c) = self.tri(f);
            let n = (b - a).cross(&(c - a));
            for &i in f {
                normals[i] += n;
            }
        }
        for n in &mut normals {
            let len = n.norm();
            if len > 0.0 {
                *n /= len;
            }
        }
        normals
    }

    /// Sorted neighbour lists from face connectivity.
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.vertices.len()];
        for f in &self.faces {
            for k in 0..3 {
                let (u, v) = (f[k], f[(k + 1) % 3]);
                adj[u].push(v);
                adj[v].push(u);
            }
        }
        for list in &mut adj {
            list.sort_unstable();
            list.dedup();
        }
        adj
    }

    /// Extracts the faces whose vertices all belong to `indices`, re-indexed.
    pub fn submesh(&self, indices: &[usize]) -> TriMesh {
        let mut remap = HashMap::with_capacity(indices.len());
        for (local, &global) in indices.iter().enumerate() {
            remap.insert(global, local);
        }
        let faces = self
            .faces
            .iter()
            .filter_map(|f| {
                Some([
                    *remap.get(&f[0])?,
                    *remap.get(&f[1])?,
                    *remap.get(&f[2])?,
                ])
            })
            .collect();
        TriMesh {
            vertices: indices.iter().map(|&i| self.vertices[i]).collect(),
            faces,
        }
    }

    pub fn to_obj(&self) -> String {
        let mut out = String::with_capacity(self.vertices.len() * 40 + self.faces.len() * 20);
        for v in &self.vertices {
            let _ = writeln!(out, "v {} {} {}", v.x, v.y, v.z);
        }
        for f in &self.faces {
            let _ = writeln!(out, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
        }
        out
    }

    pub fn write_obj(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_obj()).map_err(|e| Error::io(path, e))
    }
}

/// Vertices within `hops` graph steps of `start` (including `start`).
pub fn k_ring(adjacency: &[Vec<usize>], start: usize, hops: usize) -> Vec<usize> {
    let mut depth: HashMap<usize, usize> = HashMap::new();
    let mut queue = VecDeque::new();
    depth.insert(start, 0);
    queue.push_back(start);
    while let Some(u) = queue.pop_front() {
        let d = depth[&u];
        if d == hops {
            continue;
        }
        for &v in &adjacency[u] {
            if let std::collections::hash_map::Entry::Vacant(e) = depth.entry(v) {
                e.insert(d + 1);
                queue.push_back(v);
            }
        }
    }
    let mut out: Vec<usize> = depth.into_keys().collect();
    out.sort_unstable();
    out
}

/// Breadth-first hop distance between two vertices, `None` if disconnected.
pub fn hop_distance(adjacency: &[Vec<usize>], from: usize, to: usize) -> Option<usize> {
    if from == to {
        return Some(0);
    }
    let mut seen = vec![false; adjacency.len()];
    let mut queue = VecDeque::new();
    seen[from] = true;
    queue.push_back((from, 0));
    while let Some((u, d)) = queue.pop_front() {
        for &v in &adjacency[u] {
            if v == to {
                return Some(d + 1);
            }
            if !seen[v] {
                seen[v] = true;
                queue.push_back((v, d + 1));
            }
        }
    }
    None
}

/// Triangulated sphere by icosahedron subdivision, used as a test primitive.
pub fn icosphere(radius: f64, subdivisions: usize) -> TriMesh {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut vertices: Vec<Vec3> = [
        (-1.0, t, 0.0),
        (1.0, t, 0.0),
        (-1.0, -t, 0.0),
        (1.0, -t, 0.0),
        (0.0, -1.0, t),
        (0.0, 1.0, t),
        (0.0, -1.0, -t),
        (0.0, 1.0, -t),
        (t, 0.0, -1.0),
        (t, 0.0, 1.0),
        (-t, 0.0, -1.0),
        (-t, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| Vec3::new(x, y, z).normalize())
    .collect();
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..subdivisions {
        let mut midpoints: HashMap<(usize, usize), usize> = HashMap::new();
        let mut next = Vec::with_capacity(faces.len() * 4);
        let mut mid = |a: usize, b: usize, verts: &mut Vec<Vec3>| -> usize {
            let key = (a.min(b), a.max(b));
            *midpoints.entry(key).or_insert_with(|| {
                verts.push(((verts[a] + verts[b]) * 0.5).normalize());
                verts.len() - 1
            })
        };
        for f in &faces {
            let ab = mid(f[0], f[1], &mut vertices);
            let bc = mid(f[1], f[2], &mut vertices);
            let ca = mid(f[2], f[0], &mut vertices);
            next.push([f[0], ab, ca]);
            next.push([f[1], bc, ab]);
            next.push([f[2], ca, bc]);
            next.push([ab, bc, ca]);
        }
        faces = next;
    }
    for v in &mut vertices {
        *v *= radius;
    }
    TriMesh { vertices, faces }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn icosphere_is_closed_and_outward() {
        let s = icosphere(1.0, 2);
        s.check_watertight().unwrap();
        let v = s.signed_volume();
        assert!(v > 4.0 && v < 4.19, "volume {v}");
        assert!((s.winding_number(&Vec3::zeros()) - 1.0).abs() < 1e-9);
        assert!(s.winding_number(&Vec3::new(2.0, 0.1, 0.0)).abs() < 1e-9);
    }

    #[test]
    fn closest_point_regions() {
        let a = Vec3::new(0.0, 0.0, 0.0);
        let b = Vec3::new(1.0, 0.0, 0.0);
        let c = Vec3::new(0.0, 1.0, 0.0);
        let above = Vec3::new(0.25, 0.25, 2.0);
        assert_eq!(
            closest_point_on_triangle(&above, &a, &b, &c),
            Vec3::new(0.25, 0.25, 0.0)
        );
        let beyond_b = Vec3::new(3.0, -1.0, 0.0);
        assert_eq!(closest_point_on_triangle(&beyond_b, &a, &b, &c), b);
        let off_edge = Vec3::new(1.0, 1.0, 0.0);
        let q = closest_point_on_triangle(&off_edge, &a, &b, &c);
        assert!((q - Vec3::new(0.5, 0.5, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn open_mesh_is_rejected() {
        let mut s = icosphere(1.0, 1);
        s.faces.pop();
        assert!(matches!(
            s.check_watertight(),
            Err(Error::DegenerateGeometry(_))
        ));
    }

    #[test]
    fn hop_distance_on_sphere() {
        let s = icosphere(1.0, 1);
        let adj = s.adjacency();
        let ring = k_ring(&adj, 0, 1);
        assert_eq!(ring.len(), 1 + adj[0].len());
        for &n in &adj[0] {
            assert_eq!(hop_distance(&adj, 0, n), Some(1));
        }
    }
}
