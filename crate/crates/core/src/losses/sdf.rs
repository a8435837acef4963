//! Voxelized modified signed distance field `Ω = max(−sdf, 0)`.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mesh::{TriMesh, Vec3};

/// `Ω` sampled on an `N × N × N` lattice of cell centers.
///
/// Node `(i, j, k)` sits at `origin + (i·hx, j·hy, k·hz)`. Spacing is chosen
/// per axis so the submesh's bounding box spans the inner `N − 1 − 2·padding`
/// intervals, which keeps flat parts (the palm) resolved across their thickness.
#[derive(Debug, Clone, PartialEq)]
pub struct SdfGrid {
    pub origin: Vec3,
    pub spacing: Vec3,
    pub resolution: usize,
    pub values: Vec<f64>,
}

impl SdfGrid {
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.resolution * (j + self.resolution * k)
    }

    pub fn node(&self, i: usize, j: usize, k: usize) -> Vec3 {
        self.origin + Vec3::new(i as f64, j as f64, k as f64).component_mul(&self.spacing)
    }

    pub fn value(&self, i: usize, j: usize, k: usize) -> f64 {
        self.values[self.index(i, j, k)]
    }

    /// Far corner of the node lattice.
    pub fn upper(&self) -> Vec3 {
        let m = (self.resolution - 1) as f64;
        self.node(0, 0, 0) + self.spacing * m
    }

    /// Trilinear interpolation of `Ω` and its exact spatial gradient.
    /// Points outside the node lattice give `(0, 0)`.
    pub fn query(&self, p: &Vec3) -> (f64, Vec3) {
        let n = self.resolution;
        let max = (n - 1) as f64;
        let u = (p - self.origin)
            .component_div(&self.spacing)
            .map(|c| if (c - c.round()).abs() < 1e-9 { c.round() } else { c });
        if u.iter().any(|&c| !(0.0..=max).contains(&c)) {
            return (0.0, Vec3::zeros());
        }
        let mut idx = [0usize; 3];
        let mut f = [0.0; 3];
        for a in 0..3 {
            let i = (u[a].floor() as usize).min(n - 2);
            idx[a] = i;
            f[a] = u[a] - i as f64;
        }
        let [i, j, k] = idx;
        let [fx, fy, fz] = f;
        let c = |di: usize, dj: usize, dk: usize| self.value(i + di, j + dj, k + dk);
        let (c000, c100, c010, c110) = (c(0, 0, 0), c(1, 0, 0), c(0, 1, 0), c(1, 1, 0));
        let (c001, c101, c011, c111) = (c(0, 0, 1), c(1, 0, 1), c(0, 1, 1), c(1, 1, 1));

        let c00 = c000 + fx * (c100 - c000);
        let c10 = c010 + fx * (c110 - c010);
        let c01 = c001 + fx * (c101 - c001);
        let c11 = c011 + fx * (c111 - c011);
        let c0 = c00 + fy * (c10 - c00);
        let c1 = c01 + fy * (c11 - c01);
        let value = c0 + fz * (c1 - c0);

        let dx0 = (c100 - c000) + fy * ((c110 - c010) - (c100 - c000));
        let dx1 = (c101 - c001) + fy * ((c111 - c011) - (c101 - c001));
        let dx = dx0 + fz * (dx1 - dx0);
        let dy = (c10 - c00) + fz * ((c11 - c01) - (c10 - c00));
        let dz = c1 - c0;
        let grad = Vec3::new(dx, dy, dz).component_div(&self.spacing);
        (value, grad)
    }
}

/// Samples `Ω` of a closed mesh on a padded lattice.
pub fn build_sdf(mesh: &TriMesh, resolution: usize, padding: usize) -> Result<SdfGrid> {
    if resolution < 8 {
        return Err(Error::Config(format!("SDF resolution {resolution} is below 8")));
    }
    if 2 * padding + 2 > resolution {
        return Err(Error::Config(format!(
            "SDF padding {padding} leaves no interior cells at resolution {resolution}"
        )));
    }
    mesh.check_watertight()?;
    let bb = mesh
        .aabb()
        .ok_or_else(|| Error::DegenerateGeometry("empty submesh".into()))?;
    let inner = (resolution - 1 - 2 * padding) as f64;
    let ext = bb.extent();
    let floor = ext.max() * 1e-3;
    let spacing = ext.map(|e| e.max(floor) / inner);
    let origin = bb.center() - spacing * ((resolution - 1) as f64 / 2.0);

    let n = resolution;
    let grid = SdfGrid {
        origin,
        spacing,
        resolution: n,
        values: Vec::new(),
    };
    let values: Vec<f64> = (0..n * n * n)
        .into_par_iter()
        .map(|idx| {
            let (i, j, k) = (idx % n, (idx / n) % n, idx / (n * n));
            let p = grid.node(i, j, k);
            if !bb.contains(&p) || !mesh.contains(&p) {
                0.0
            } else {
                mesh.distance(&p)
            }
        })
        .collect();
    Ok(SdfGrid { values, ..grid })
}

/// `Ω` and `∇Ω` at `p`; zero outside the grid.
pub fn omega_query(grid: &SdfGrid, p: &Vec3) -> (f64, Vec3) {
    grid.query(p)
}
