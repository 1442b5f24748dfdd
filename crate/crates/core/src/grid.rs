//! Masked uniform grid over a convex domain.
//!
//! A [`Grid`] embeds the domain in a uniform node lattice with a two-cell
//! exterior collar.  The mask selects nodes strictly inside the domain; every
//! stencil in the crate is expressed through four per-node "arms" holding the
//! fraction `θ ∈ (0,1]` of each grid arm that lies inside the domain, so
//! boundary-corrected operators and boundary-data evaluation at the true
//! crossing points share one geometric source of truth.
//!
//! The grid also precomputes the discrete integration structure used by the
//! energies:
//! - `quad_w`: per-node area weights.  Boundary-cut cells contribute their
//!   covered fraction (8×8 subsampling), and slivers whose node falls outside
//!   the mask are folded into the nearest interior node, so `Σ quad_w`
//!   reproduces `area(Ω)` to quadrature accuracy rather than staircase
//!   accuracy.
//! - `edges_x` / `edges_y`: grid edges with both endpoints in the mask; all
//!   gradient-type sums run over these.
//! - `plaqs` / `plaq_w`: grid squares with all four corners in the mask
//!   (convexity makes the corner test exact) and their area weights; the rim
//!   row absorbs the cut-cell area so field-energy quadrature also sees the
//!   full domain area.

use crate::domain::{DomainSpec, Point2};
use crate::{Error, Result};
use std::sync::Arc;

/// An exterior node adjacent to the mask, with the outward normal of the
/// nearby boundary.
#[derive(Clone, Copy, Debug)]
pub struct BoundaryNode {
    pub idx: u32,
    pub pos: Point2,
    pub normal: Point2,
}

/// Direction indices for [`Grid::arms`]: west, east, south, north.
pub const W: usize = 0;
pub const E: usize = 1;
pub const S: usize = 2;
pub const N: usize = 3;

#[derive(Debug)]
pub struct Grid {
    /// Requested resolution (nodes across the longest bounding-box side).
    pub n: usize,
    pub nx: usize,
    pub ny: usize,
    /// Node spacing (isotropic).
    pub h: f64,
    /// Position of node `(0, 0)`.
    pub origin: Point2,
    pub spec: DomainSpec,
    /// `true` for nodes strictly inside the domain; length `nx * ny`.
    pub mask: Vec<bool>,
    /// Indices of mask nodes in row-major order (the canonical iteration
    /// order for deterministic reductions).
    pub interior: Vec<u32>,
    /// Arm fractions `[θ_W, θ_E, θ_S, θ_N]` per node; `1.0` on uncut arms.
    pub arms: Vec<[f64; 4]>,
    /// Per-node area weights; zero off the mask, `Σ quad_w ≈ area(Ω)`.
    pub quad_w: Vec<f64>,
    /// Exterior nodes with at least one masked 4-neighbor.
    pub boundary_nodes: Vec<BoundaryNode>,
    /// Active x-edges, encoded `j * (nx - 1) + i` for the edge `(i,j)-(i+1,j)`.
    pub edges_x: Vec<u32>,
    /// Active y-edges, encoded `j * nx + i` for the edge `(i,j)-(i,j+1)`.
    pub edges_y: Vec<u32>,
    /// Active plaquettes, encoded `j * (nx - 1) + i` (lower-left corner).
    pub plaqs: Vec<u32>,
    /// Plaquette area weights; zero for inactive, length `(nx-1) * (ny-1)`.
    pub plaq_w: Vec<f64>,
}

impl Grid {
    #[inline]
    #[must_use]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    #[inline]
    #[must_use]
    pub fn pos(&self, i: usize, j: usize) -> Point2 {
        Point2::new(
            self.origin.x + i as f64 * self.h,
            self.origin.y + j as f64 * self.h,
        )
    }

    #[inline]
    #[must_use]
    pub fn pos_of(&self, idx: usize) -> Point2 {
        self.pos(idx % self.nx, idx / self.nx)
    }

    #[inline]
    #[must_use]
    pub fn is_in(&self, i: usize, j: usize) -> bool {
        self.mask[self.idx(i, j)]
    }

    /// Number of nodes in the mask.
    #[must_use]
    pub fn n_interior(&self) -> usize {
        self.interior.len()
    }

    /// Total quadrature area (close to `area(Ω)`).
    #[must_use]
    pub fn covered_area(&self) -> f64 {
        self.interior.iter().map(|&k| self.quad_w[k as usize]).sum()
    }

    /// Point where the cut arm `dir` of node `idx` meets the boundary.
    #[must_use]
    pub fn crossing_point(&self, idx: usize, dir: usize) -> Point2 {
        let p = self.pos_of(idx);
        let t = self.arms[idx][dir] * self.h;
        match dir {
            W => Point2::new(p.x - t, p.y),
            E => Point2::new(p.x + t, p.y),
            S => Point2::new(p.x, p.y - t),
            _ => Point2::new(p.x, p.y + t),
        }
    }

    /// Cell-based bilinear interpolation weights for an arbitrary point:
    /// returns the four node indices and weights of the cell containing `p`.
    /// Exterior corner nodes receive weight as stored (callers that need
    /// mask-only stencils should check the mask).
    #[must_use]
    pub fn bilinear_stencil(&self, p: Point2) -> Option<([usize; 4], [f64; 4])> {
        let fx = (p.x - self.origin.x) / self.h;
        let fy = (p.y - self.origin.y) / self.h;
        if fx < 0.0 || fy < 0.0 {
            return None;
        }
        let i = fx.floor() as usize;
        let j = fy.floor() as usize;
        if i + 1 >= self.nx || j + 1 >= self.ny {
            return None;
        }
        let ax = fx - i as f64;
        let ay = fy - j as f64;
        Some((
            [
                self.idx(i, j),
                self.idx(i + 1, j),
                self.idx(i, j + 1),
                self.idx(i + 1, j + 1),
            ],
            [
                (1.0 - ax) * (1.0 - ay),
                ax * (1.0 - ay),
                (1.0 - ax) * ay,
                ax * ay,
            ],
        ))
    }

    /// Neighbor index in direction `dir`, without bounds checks beyond the
    /// collar guarantee (interior nodes always have in-grid neighbors).
    #[inline]
    #[must_use]
    pub fn neighbor(&self, idx: usize, dir: usize) -> usize {
        match dir {
            W => idx - 1,
            E => idx + 1,
            S => idx - self.nx,
            _ => idx + self.nx,
        }
    }
}

/// Builds the masked grid at resolution `n` (nodes across the longest
/// bounding-box side, `16 ≤ n ≤ 4096`).
pub fn build_grid(spec: &DomainSpec, n: usize) -> Result<Arc<Grid>> {
    spec.validate()?;
    if !(16..=4096).contains(&n) {
        return Err(Error::InvalidParameter(format!(
            "grid resolution {n} outside supported range [16, 4096]"
        )));
    }

    let (bmin, bmax) = spec.bounding_box();
    let ex = bmax.x - bmin.x;
    let ey = bmax.y - bmin.y;
    let h = ex.max(ey) / (n - 1) as f64;
    // Two-cell collar on every side; +1e-12 guards float noise in the division.
    let nx = (ex / h + 1e-12).ceil() as usize + 5;
    let ny = (ey / h + 1e-12).ceil() as usize + 5;
    let origin = Point2::new(bmin.x - 2.0 * h, bmin.y - 2.0 * h);

    let idx = |i: usize, j: usize| j * nx + i;
    let pos = |i: usize, j: usize| {
        Point2::new(origin.x + i as f64 * h, origin.y + j as f64 * h)
    };

    // Mask: strictly inside.  Nodes exactly on the boundary (aligned
    // rectangle sides) are exterior, matching the Dirichlet convention.
    let mut mask = vec![false; nx * ny];
    for j in 0..ny {
        for i in 0..nx {
            mask[idx(i, j)] = spec.level(pos(i, j)) < -1e-12;
        }
    }

    let mut interior = Vec::new();
    for (k, &m) in mask.iter().enumerate() {
        if m {
            interior.push(k as u32);
        }
    }
    if interior.is_empty() {
        return Err(Error::InvalidParameter(
            "domain contains no grid nodes at this resolution".into(),
        ));
    }

    // Arm fractions.
    let mut arms = vec![[1.0f64; 4]; nx * ny];
    for &k in &interior {
        let k = k as usize;
        let (i, j) = (k % nx, k / nx);
        let p = pos(i, j);
        let nbrs = [
            (W, i.wrapping_sub(1), j),
            (E, i + 1, j),
            (S, i, j.wrapping_sub(1)),
            (N, i, j + 1),
        ];
        for (dir, ni, nj) in nbrs {
            if ni >= nx || nj >= ny {
                // Collar guarantees this cannot happen for masked nodes.
                arms[k][dir] = 1.0;
                continue;
            }
            if !mask[idx(ni, nj)] {
                arms[k][dir] = spec.boundary_crossing(p, pos(ni, nj));
            }
        }
    }

    // Node area weights with sliver redistribution.
    let grad_bound = match spec.shape {
        crate::domain::Shape::Ellipse { a, b } => (1.0 / a).max(1.0 / b),
        _ => 1.0,
    };
    let margin = 1.6 * h * grad_bound;
    let mut quad_w = vec![0.0f64; nx * ny];
    let mut slivers: Vec<(usize, f64)> = Vec::new();
    for j in 0..ny {
        for i in 0..nx {
            let k = idx(i, j);
            let p = pos(i, j);
            let corners = [
                Point2::new(p.x - 0.5 * h, p.y - 0.5 * h),
                Point2::new(p.x + 0.5 * h, p.y - 0.5 * h),
                Point2::new(p.x - 0.5 * h, p.y + 0.5 * h),
                Point2::new(p.x + 0.5 * h, p.y + 0.5 * h),
            ];
            let levels: Vec<f64> = corners.iter().map(|&c| spec.level(c)).collect();
            let all_in = levels.iter().all(|&l| l < 0.0);
            let cov = if all_in {
                1.0
            } else if levels.iter().fold(f64::INFINITY, |a, &b| a.min(b)) < margin {
                // Partially covered (or nearly so): subsample midpoints.
                let mut inside = 0u32;
                for sj in 0..8 {
                    for si in 0..8 {
                        let q = Point2::new(
                            p.x - 0.5 * h + (si as f64 + 0.5) * h / 8.0,
                            p.y - 0.5 * h + (sj as f64 + 0.5) * h / 8.0,
                        );
                        if spec.level(q) < 0.0 {
                            inside += 1;
                        }
                    }
                }
                f64::from(inside) / 64.0
            } else {
                0.0
            };
            if cov == 0.0 {
                continue;
            }
            if mask[k] {
                quad_w[k] = cov * h * h;
            } else {
                slivers.push((k, cov * h * h));
            }
        }
    }
    for (k, w) in slivers {
        let (i, j) = (k % nx, k / nx);
        // Fold the covered area into the most interior 8-neighbor.
        let mut best: Option<(usize, f64)> = None;
        for dj in -1i64..=1 {
            for di in -1i64..=1 {
                if di == 0 && dj == 0 {
                    continue;
                }
                let (ni, nj) = (i as i64 + di, j as i64 + dj);
                if ni < 0 || nj < 0 || ni as usize >= nx || nj as usize >= ny {
                    continue;
                }
                let nk = idx(ni as usize, nj as usize);
                if mask[nk] {
                    let l = spec.level(pos(ni as usize, nj as usize));
                    if best.map_or(true, |(_, bl)| l < bl) {
                        best = Some((nk, l));
                    }
                }
            }
        }
        if let Some((nk, _)) = best {
            quad_w[nk] += w;
        }
        // Slivers with no masked neighbor in the 3×3 patch are dropped; they
        // are O(h²) corner fragments.
    }

    // Boundary nodes (exterior, adjacent to the mask).
    let mut boundary_nodes = Vec::new();
    for j in 1..ny - 1 {
        for i in 1..nx - 1 {
            let k = idx(i, j);
            if mask[k] {
                continue;
            }
            let touches = mask[k - 1] || mask[k + 1] || mask[k - nx] || mask[k + nx];
            if touches {
                let p = pos(i, j);
                boundary_nodes.push(BoundaryNode {
                    idx: k as u32,
                    pos: p,
                    normal: spec.outward_normal(p),
                });
            }
        }
    }

    // Active edges.
    let mut edges_x = Vec::new();
    let mut edges_y = Vec::new();
    for j in 0..ny {
        for i in 0..nx - 1 {
            if mask[idx(i, j)] && mask[idx(i + 1, j)] {
                edges_x.push((j * (nx - 1) + i) as u32);
            }
        }
    }
    for j in 0..ny - 1 {
        for i in 0..nx {
            if mask[idx(i, j)] && mask[idx(i, j + 1)] {
                edges_y.push((j * nx + i) as u32);
            }
        }
    }

    // Active plaquettes and their area weights.
    let mut plaqs = Vec::new();
    let mut plaq_w = vec![0.0f64; (nx - 1) * (ny - 1)];
    for j in 0..ny - 1 {
        for i in 0..nx - 1 {
            if mask[idx(i, j)]
                && mask[idx(i + 1, j)]
                && mask[idx(i, j + 1)]
                && mask[idx(i + 1, j + 1)]
            {
                let pk = j * (nx - 1) + i;
                plaqs.push(pk as u32);
                plaq_w[pk] = h * h;
            }
        }
    }
    // Fold the area the plaquette tiling misses near the boundary into the
    // rim so field-term quadrature sees the whole domain.
    let covered: f64 = plaqs.iter().map(|&p| plaq_w[p as usize]).sum();
    let target: f64 = quad_w.iter().sum();
    let deficit = target - covered;
    if deficit > 0.0 && !plaqs.is_empty() {
        let mut rim = Vec::new();
        for &pk in &plaqs {
            let pk = pk as usize;
            let (i, j) = (pk % (nx - 1), pk / (nx - 1));
            let mut nb = 0;
            if i > 0 && plaq_w[pk - 1] > 0.0 {
                nb += 1;
            }
            if i + 1 < nx - 1 && plaq_w[pk + 1] > 0.0 {
                nb += 1;
            }
            if j > 0 && plaq_w[pk - (nx - 1)] > 0.0 {
                nb += 1;
            }
            if j + 1 < ny - 1 && plaq_w[pk + (nx - 1)] > 0.0 {
                nb += 1;
            }
            if nb < 4 {
                rim.push(pk);
            }
        }
        if !rim.is_empty() {
            let extra = deficit / rim.len() as f64;
            for pk in rim {
                plaq_w[pk] += extra;
            }
        }
    }

    Ok(Arc::new(Grid {
        n,
        nx,
        ny,
        h,
        origin,
        spec: *spec,
        mask,
        interior,
        arms,
        quad_w,
        boundary_nodes,
        edges_x,
        edges_y,
        plaqs,
        plaq_w,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_coarse_grid() {
        let err = build_grid(&DomainSpec::disk(1.0), 8).unwrap_err();
        assert!(err.is_validation());
    }

    #[test]
    fn disk_area_from_weights() {
        let g = build_grid(&DomainSpec::disk(1.0), 64).unwrap();
        let area = g.covered_area();
        // Subsampled cut cells put this far inside the 3h coarse bound.
        assert!(
            (area - std::f64::consts::PI).abs() < 3.0 * g.h,
            "area {area} vs π"
        );
        assert!((area - std::f64::consts::PI).abs() < 3e-3);
    }

    #[test]
    fn unit_square_nodes_strictly_inside() {
        let g = build_grid(&DomainSpec::rectangle(1.0, 1.0), 33).unwrap();
        for &k in &g.interior {
            let p = g.pos_of(k as usize);
            assert!(p.x > -0.5 && p.x < 0.5 && p.y > -0.5 && p.y < 0.5);
        }
        // Node spacing divides the side exactly, so boundary-aligned nodes
        // exist but are excluded from the mask, and all arms are uncut at
        // exactly θ = 1 except the ones reaching the boundary nodes.
        assert_eq!(g.n_interior(), 31 * 31);
        // Area weights still reproduce the square's area.
        assert!((g.covered_area() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn square_boundary_arms_are_unit() {
        // Aligned rectangle: the crossing sits exactly one full arm away.
        let g = build_grid(&DomainSpec::rectangle(1.0, 1.0), 33).unwrap();
        for &k in &g.interior {
            for d in 0..4 {
                let t = g.arms[k as usize][d];
                assert!(
                    (t - 1.0).abs() < 1e-9,
                    "aligned square should have unit arms, got {t}"
                );
            }
        }
    }

    #[test]
    fn disk_arms_in_range_and_boundary_nodes_have_unit_normals() {
        let g = build_grid(&DomainSpec::disk(1.0), 48).unwrap();
        for &k in &g.interior {
            for d in 0..4 {
                let t = g.arms[k as usize][d];
                assert!(t > 0.0 && t <= 1.0);
            }
        }
        assert!(!g.boundary_nodes.is_empty());
        for bn in &g.boundary_nodes {
            assert!((bn.normal.norm() - 1.0).abs() < 1e-12);
            // Outward: normal roughly parallel to the radius vector.
            let r = bn.pos.norm();
            if r > 0.5 {
                let dot = (bn.normal.x * bn.pos.x + bn.normal.y * bn.pos.y) / r;
                assert!(dot > 0.9);
            }
        }
    }

    #[test]
    fn plaquette_weights_cover_domain_area() {
        let g = build_grid(&DomainSpec::disk(1.0), 64).unwrap();
        let total: f64 = g.plaqs.iter().map(|&p| g.plaq_w[p as usize]).sum();
        assert!((total - std::f64::consts::PI).abs() < 3e-3, "plaq area {total}");
    }

    #[test]
    fn edges_have_masked_endpoints() {
        let g = build_grid(&DomainSpec::ellipse(2.0, 1.0), 40).unwrap();
        for &e in &g.edges_x {
            let e = e as usize;
            let (i, j) = (e % (g.nx - 1), e / (g.nx - 1));
            assert!(g.is_in(i, j) && g.is_in(i + 1, j));
        }
        for &e in &g.edges_y {
            let e = e as usize;
            let (i, j) = (e % g.nx, e / g.nx);
            assert!(g.is_in(i, j) && g.is_in(i, j + 1));
        }
    }
}
