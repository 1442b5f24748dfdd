//! London limit of the magnetic problem.
//!
//! Two linear solves fix the macroscopic magnetic response of the sample:
//! the screened field `h₀` with `-Δh₀ + h₀ = 0`, `h₀ = 1` on the boundary,
//! and its potential `ξ₀` with `Δξ₀ = h₀`, `ξ₀ = 0` on the boundary.  On
//! this discretization the two are tied by the exact identity `ξ₀ = h₀ - 1`,
//! which the solver verifies a posteriori.
//!
//! The minima of `ξ₀` (it is strictly negative inside) are where vortices
//! first appear as the applied field grows; the module locates them with
//! sub-cell accuracy, checks they are non-degenerate, and records their
//! Hessians.  It also evaluates the quadratic form
//! `J₀ = 1/2 ∫ (|∇ξ₀|² + ξ₀²)`, the leading coefficient of the vortex-free
//! energy, and solves the signed-source problem that yields the
//! finite-core interaction potential `ζ` used in the vortex energy ladder.

use std::sync::Arc;

use crate::domain::Point2;
use crate::field::ScalarField;
use crate::grid::Grid;
use crate::ops;
use crate::solve::{solve_dirichlet, BoundaryData, SolveKind};
use crate::{Error, Result};

/// A located minimum of the London potential.
#[derive(Clone, Copy, Debug, serde::Serialize, serde::Deserialize)]
pub struct Minimum {
    pub pos: Point2,
    pub value: f64,
    /// Symmetric 2x2 Hessian `[[f_xx, f_xy], [f_xy, f_yy]]` at the minimum.
    pub hessian: [[f64; 2]; 2],
}

/// Everything the rest of the pipeline needs from the London limit.
#[derive(Clone, Debug)]
pub struct LondonData {
    pub h0: ScalarField,
    pub xi0: ScalarField,
    /// Minima of `ξ₀`, sorted by (value, y, x).
    pub minima: Vec<Minimum>,
    /// `J₀ = 1/2 ∫ (|∇ξ₀|² + ξ₀²)`.
    pub j0: f64,
    /// `‖ξ₀‖_∞` (the depth of the deepest well).
    pub norm_inf: f64,
    /// `M_Ω = 2π ‖ξ₀‖_∞`, the slope constant of the first critical field.
    pub m_omega: f64,
    /// `‖ξ₀ - (h₀ - 1)‖_∞`, a solver consistency check.
    pub identity_residual: f64,
}

/// Solves the screened-field pair `(h₀, ξ₀)`.
pub fn solve_london(grid: &Arc<Grid>) -> Result<(ScalarField, ScalarField, f64)> {
    let zero = ScalarField::zeros(grid);
    let (h0, _) = solve_dirichlet(grid, SolveKind::Screened, &zero, BoundaryData::Const(1.0))?;
    let mut rhs = ScalarField::zeros(grid);
    for &k in &grid.interior {
        rhs.data[k as usize] = -h0.data[k as usize];
    }
    let (xi0, _) = solve_dirichlet(grid, SolveKind::Poisson, &rhs, BoundaryData::Const(0.0))?;
    let mut residual = 0.0f64;
    for &k in &grid.interior {
        let k = k as usize;
        residual = residual.max((xi0.data[k] - (h0.data[k] - 1.0)).abs());
    }
    Ok((h0, xi0, residual))
}

/// Solves the London limit and packages wells, `J₀`, and the slope constant.
pub fn build_london(grid: &Arc<Grid>) -> Result<LondonData> {
    let (h0, xi0, identity_residual) = solve_london(grid)?;
    let minima = find_lambda(&xi0)?;
    let j0 = compute_j0(&xi0);
    let norm_inf = xi0.max_abs();
    Ok(LondonData {
        h0,
        xi0,
        minima,
        j0,
        norm_inf,
        m_omega: 2.0 * std::f64::consts::PI * norm_inf,
        identity_residual,
    })
}

/// Packages a hand-built potential (e.g. a synthetic multi-well landscape)
/// the same way [`build_london`] does, with `h₀ = 1 + ξ₀`.
pub fn london_from_xi0(xi0: ScalarField) -> Result<LondonData> {
    let grid = xi0.grid.clone();
    let mut h0 = ScalarField::zeros(&grid);
    for &k in &grid.interior {
        h0.data[k as usize] = 1.0 + xi0.data[k as usize];
    }
    let minima = find_lambda(&xi0)?;
    let j0 = compute_j0(&xi0);
    let norm_inf = xi0.max_abs();
    Ok(LondonData {
        h0,
        xi0,
        minima,
        j0,
        norm_inf,
        m_omega: 2.0 * std::f64::consts::PI * norm_inf,
        identity_residual: 0.0,
    })
}

/// A synthetic multi-well potential: superposed Gaussian dips, clipped to
/// vanish smoothly toward the boundary.  Used to exercise multi-well logic
/// on domains whose true potential has a single well.
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct GaussianWell {
    pub center: Point2,
    pub depth: f64,
    pub width: f64,
}

#[must_use]
pub fn synthetic_xi0(grid: &Arc<Grid>, wells: &[GaussianWell]) -> ScalarField {
    ScalarField::from_fn(grid, |p| {
        let mut v = 0.0;
        for w in wells {
            let d2 = (p.x - w.center.x).powi(2) + (p.y - w.center.y).powi(2);
            v -= w.depth * (-d2 / (2.0 * w.width * w.width)).exp();
        }
        // Boundary taper so the landscape respects the zero boundary value.
        let lvl = grid.spec.level(p);
        let taper = 1.0 - (1.0 + lvl / (0.05 * grid.spec.diameter())).max(0.0).powi(2).min(1.0);
        v * taper.max(0.0)
    })
}

/// Nodal second differences with step `s = cells · h`, exact on node values.
fn hessian_at_node(f: &ScalarField, i: usize, j: usize, cells: usize) -> Option<[[f64; 2]; 2]> {
    let g = &f.grid;
    let s = cells as f64 * g.h;
    let ok = |ii: i64, jj: i64| -> Option<f64> {
        if ii < 0 || jj < 0 || ii as usize >= g.nx || jj as usize >= g.ny {
            return None;
        }
        let k = g.idx(ii as usize, jj as usize);
        if g.mask[k] {
            Some(f.data[k])
        } else {
            None
        }
    };
    let (i, j) = (i as i64, j as i64);
    let c = cells as i64;
    let f00 = ok(i, j)?;
    let fxx = (ok(i + c, j)? - 2.0 * f00 + ok(i - c, j)?) / (s * s);
    let fyy = (ok(i, j + c)? - 2.0 * f00 + ok(i, j - c)?) / (s * s);
    let fxy = (ok(i + c, j + c)? - ok(i + c, j - c)? - ok(i - c, j + c)? + ok(i - c, j - c)?)
        / (4.0 * s * s);
    Some([[fxx, fxy], [fxy, fyy]])
}

/// Locates the set of global minima of a potential well landscape.
///
/// Nodes within `1e-4 · ‖f‖_∞` of the global minimum that are local minima
/// among their in-domain 8-neighbors are refined by a 3x3 least-squares
/// quadratic; duplicates within `3h` collapse to the deeper one.  Each
/// reported minimum carries a nodal finite-difference Hessian and fails with
/// a degeneracy error unless that Hessian is solidly positive definite.
pub fn find_lambda(f: &ScalarField) -> Result<Vec<Minimum>> {
    let g = &f.grid;
    let tol = 1e-4 * f.max_abs().max(f64::MIN_POSITIVE);

    // Collect and refine every discrete local minimum first; the global
    // filter afterwards compares refined values, so the O(h²) offset between
    // a node sample and the true well bottom cannot drop a tied well.
    let mut cands: Vec<(f64, Point2, usize, usize)> = Vec::new();
    for j in 1..g.ny - 1 {
        for i in 1..g.nx - 1 {
            let k = g.idx(i, j);
            if !g.mask[k] {
                continue;
            }
            let mut is_min = true;
            for dj in -1i64..=1 {
                for di in -1i64..=1 {
                    if di == 0 && dj == 0 {
                        continue;
                    }
                    let nk = g.idx((i as i64 + di) as usize, (j as i64 + dj) as usize);
                    if g.mask[nk] && f.data[nk] < f.data[k] {
                        is_min = false;
                    }
                }
            }
            if !is_min {
                continue;
            }
            // 3x3 least-squares quadratic refinement (falls back to the node
            // when the stencil leaves the domain or the fit is not convex).
            let mut refined = (f.data[k], g.pos(i, j));
            let mut have_patch = true;
            let mut patch = [0.0f64; 9];
            for dj in -1i64..=1 {
                for di in -1i64..=1 {
                    let nk = g.idx((i as i64 + di) as usize, (j as i64 + dj) as usize);
                    if !g.mask[nk] {
                        have_patch = false;
                    } else {
                        patch[((dj + 1) * 3 + (di + 1)) as usize] = f.data[nk];
                    }
                }
            }
            if have_patch {
                let mut c1 = 0.0;
                let mut c2 = 0.0;
                let mut c3 = 0.0;
                let mut c4 = 0.0;
                let mut c5 = 0.0;
                let mut sum = 0.0;
                for (q, &fv) in patch.iter().enumerate() {
                    let xi = (q % 3) as f64 - 1.0;
                    let eta = (q / 3) as f64 - 1.0;
                    c1 += fv * xi / 6.0;
                    c2 += fv * eta / 6.0;
                    c3 += fv * (xi * xi - 2.0 / 3.0) / 2.0;
                    c4 += fv * xi * eta / 4.0;
                    c5 += fv * (eta * eta - 2.0 / 3.0) / 2.0;
                    sum += fv;
                }
                let c0 = (sum - 6.0 * (c3 + c5)) / 9.0;
                let det = 4.0 * c3 * c5 - c4 * c4;
                if det > 0.0 && c3 > 0.0 {
                    let dx = (-2.0 * c5 * c1 + c4 * c2) / det;
                    let dy = (c4 * c1 - 2.0 * c3 * c2) / det;
                    if dx.abs() <= 1.0 && dy.abs() <= 1.0 {
                        let val = c0 + 0.5 * (c1 * dx + c2 * dy);
                        let p = g.pos(i, j);
                        refined = (val, Point2::new(p.x + dx * g.h, p.y + dy * g.h));
                    }
                }
            }
            cands.push((refined.0, refined.1, i, j));
        }
    }
    if cands.is_empty() {
        return Err(Error::Degenerate("potential has no interior minimum".into()));
    }

    // Keep only the global-minimum plateau, then deduplicate (the deeper
    // survivor wins within a 3h radius).
    cands.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let fmin = cands[0].0;
    cands.retain(|c| c.0 <= fmin + tol);
    let mut kept: Vec<(f64, Point2, usize, usize)> = Vec::new();
    for c in cands {
        if kept.iter().all(|k| k.1.dist(c.1) > 3.0 * g.h) {
            kept.push(c);
        }
    }

    let mut out = Vec::new();
    for (value, pos, i, j) in kept {
        let mut hess = None;
        for cells in [4usize, 2, 1] {
            if let Some(h) = hessian_at_node(f, i, j, cells) {
                hess = Some(h);
                break;
            }
        }
        let h = hess.ok_or_else(|| {
            Error::Degenerate(format!(
                "minimum at ({}, {}) too close to the boundary for curvature",
                pos.x, pos.y
            ))
        })?;
        // Symmetric 2x2 eigenvalues.
        let tr = h[0][0] + h[1][1];
        let disc = (0.25 * (h[0][0] - h[1][1]).powi(2) + h[0][1] * h[0][1]).sqrt();
        let (emin, emax) = (0.5 * tr - disc, 0.5 * tr + disc);
        if !(emin > 1e-6 * emax.max(f64::MIN_POSITIVE)) {
            return Err(Error::Degenerate(format!(
                "minimum at ({}, {}) is degenerate (eigenvalues {emin:e}, {emax:e})",
                pos.x, pos.y
            )));
        }
        out.push(Minimum { pos, value, hessian: h });
    }
    out.sort_by(|a, b| {
        (a.value, a.pos.y, a.pos.x)
            .partial_cmp(&(b.value, b.pos.y, b.pos.x))
            .unwrap()
    });
    Ok(out)
}

/// `J₀ = 1/2 ∫ (|∇f|² + f²)` as a lattice quadratic form.
///
/// The gradient part sums squared edge differences plus cut-arm stubs
/// `f_k²/θ` toward the zero boundary value; the mass part uses the
/// area-corrected node weights.  With the zero-boundary lift included, the
/// value is stable to a relative `1e-3` between successive resolutions.
#[must_use]
pub fn compute_j0(f: &ScalarField) -> f64 {
    let g = &f.grid;
    let mut kin = 0.0;
    for &e in &g.edges_x {
        let e = e as usize;
        let (i, j) = (e % (g.nx - 1), e / (g.nx - 1));
        let k = g.idx(i, j);
        let d = f.data[k + 1] - f.data[k];
        kin += d * d;
    }
    for &e in &g.edges_y {
        let k = e as usize;
        let d = f.data[k + g.nx] - f.data[k];
        kin += d * d;
    }
    // Cut arms: the solution continues linearly to 0 at distance θh.
    for &k in &g.interior {
        let k = k as usize;
        for dir in 0..4 {
            if !g.mask[g.neighbor(k, dir)] {
                let theta = g.arms[k][dir];
                kin += f.data[k] * f.data[k] / theta;
            }
        }
    }
    let mut mass = 0.0;
    for &k in &g.interior {
        let k = k as usize;
        mass += g.quad_w[k] * f.data[k] * f.data[k];
    }
    0.5 * (kin + mass)
}

/// The signed-source potential pair for point vortices.
#[derive(Clone, Debug)]
pub struct ZetaData {
    /// `g` solves `-Δg + g = 2π Σ dᵢ δ_{aᵢ}`, `g = 0` on the boundary.
    pub g: ScalarField,
    /// `ζ` solves `Δζ = g`, `ζ = 0` on the boundary; `ζ ≤ 0`.
    pub zeta: ScalarField,
    pub points: Vec<Point2>,
    pub degrees: Vec<i32>,
}

/// Solves the two-stage source problem for vortices at `points` with the
/// given integer degrees.
pub fn solve_zeta(grid: &Arc<Grid>, points: &[Point2], degrees: &[i32]) -> Result<ZetaData> {
    if points.len() != degrees.len() {
        return Err(Error::InvalidParameter(format!(
            "{} vortex points but {} degrees",
            points.len(),
            degrees.len()
        )));
    }
    let weights: Vec<f64> = degrees
        .iter()
        .map(|&d| 2.0 * std::f64::consts::PI * d as f64)
        .collect();
    let load = ops::dirac_load(grid, points, &weights)?;
    let (g, _) = solve_dirichlet(grid, SolveKind::Screened, &load, BoundaryData::Const(0.0))?;
    let mut rhs = ScalarField::zeros(grid);
    for &k in &grid.interior {
        rhs.data[k as usize] = -g.data[k as usize];
    }
    let (zeta, _) = solve_dirichlet(grid, SolveKind::Poisson, &rhs, BoundaryData::Const(0.0))?;
    Ok(ZetaData {
        g,
        zeta,
        points: points.to_vec(),
        degrees: degrees.to_vec(),
    })
}

/// The interaction functional
/// `Ṽ(ζ) = 2π Σ dᵢ ζ(aᵢ) + 1/2 ∫ ((Δζ)² + |∇ζ|²)`
/// evaluated on an arbitrary admissible `ζ` with lattice derivatives.
#[must_use]
pub fn tilde_v_general(zeta: &ScalarField, points: &[Point2], degrees: &[i32]) -> f64 {
    let g = &zeta.grid;
    let lap = ops::laplacian(zeta);
    let grad = ops::gradient(zeta);
    let mut quad = 0.0;
    for &k in &g.interior {
        let k = k as usize;
        quad += g.quad_w[k]
            * (lap.data[k] * lap.data[k] + grad.x[k] * grad.x[k] + grad.y[k] * grad.y[k]);
    }
    let mut point_part = 0.0;
    for (p, &d) in points.iter().zip(degrees) {
        point_part += 2.0 * std::f64::consts::PI * d as f64 * zeta.bilinear(*p);
    }
    point_part + 0.5 * quad
}

/// `Ṽ` at its minimizer collapses to `π Σ dᵢ ζ(aᵢ)`.
#[must_use]
pub fn tilde_v_at_min(data: &ZetaData) -> f64 {
    let mut s = 0.0;
    for (p, &d) in data.points.iter().zip(&data.degrees) {
        s += d as f64 * data.zeta.bilinear(*p);
    }
    std::f64::consts::PI * s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::DomainSpec;
    use crate::grid::build_grid;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    /// Modified Bessel functions of the first kind by power series.
    fn bessel_i(nu: u32, x: f64) -> f64 {
        let mut term = (x / 2.0).powi(nu as i32);
        for k in 1..=nu {
            term /= k as f64;
        }
        let mut sum = term;
        for k in 1..40 {
            term *= x * x / (4.0 * k as f64 * (k + nu as usize) as f64);
            sum += term;
        }
        sum
    }

    #[test]
    fn disk_center_value_and_identity() {
        let g = build_grid(&DomainSpec::disk(1.0), 256).unwrap();
        let (h0, xi0, res) = solve_london(&g).unwrap();
        let expect = 1.0 / bessel_i(0, 1.0) - 1.0;
        let got = xi0.bilinear(Point2::new(0.0, 0.0));
        assert!((got - expect).abs() < 1e-3, "ξ₀(0) = {got}, want {expect}");
        assert!(res < 1e-8, "ξ₀ = h₀ - 1 off by {res}");
        let h00 = h0.bilinear(Point2::new(0.0, 0.0));
        assert!((h00 - 1.0 / bessel_i(0, 1.0)).abs() < 1e-3);
    }

    #[test]
    fn potential_is_pinched_between_minus_one_and_zero() {
        let g = build_grid(&DomainSpec::ellipse(1.3, 0.8), 128).unwrap();
        let (_, xi0, _) = solve_london(&g).unwrap();
        for &k in &g.interior {
            let v = xi0.data[k as usize];
            assert!(v < 0.0 && v > -1.0, "ξ₀ = {v} outside (-1, 0)");
        }
    }

    #[test]
    fn disk_well_is_at_center_with_isotropic_curvature() {
        let g = build_grid(&DomainSpec::disk(1.0), 256).unwrap();
        let data = build_london(&g).unwrap();
        assert_eq!(data.minima.len(), 1);
        let m = data.minima[0];
        assert!(m.pos.norm() < 2.0 * g.h, "well at {:?}", m.pos);
        let want = 0.5 / bessel_i(0, 1.0);
        assert!((m.hessian[0][0] - want).abs() < 0.02, "H_xx = {}", m.hessian[0][0]);
        assert!((m.hessian[1][1] - want).abs() < 0.02);
        assert!(m.hessian[0][1].abs() < 0.02);
        assert!((data.norm_inf - 0.2101485).abs() < 1e-3);
        assert!((data.m_omega - 2.0 * std::f64::consts::PI * 0.2101485).abs() < 7e-3);
    }

    #[test]
    fn elongated_ellipse_well_curvature_is_anisotropic() {
        let g = build_grid(&DomainSpec::ellipse(2.0, 1.0), 192).unwrap();
        let data = build_london(&g).unwrap();
        assert_eq!(data.minima.len(), 1);
        let m = data.minima[0];
        assert!(m.pos.norm() < 2.0 * g.h);
        assert!(
            m.hessian[0][0] < m.hessian[1][1],
            "long axis must be the soft direction: {:?}",
            m.hessian
        );
    }

    #[test]
    fn synthetic_two_well_landscape_is_resolved() {
        let g = build_grid(&DomainSpec::disk(1.0), 128).unwrap();
        let wells = [
            GaussianWell { center: Point2::new(-0.4, 0.0), depth: 1.0, width: 0.18 },
            GaussianWell { center: Point2::new(0.45, 0.1), depth: 1.0, width: 0.18 },
        ];
        let xi0 = synthetic_xi0(&g, &wells);
        let data = london_from_xi0(xi0).unwrap();
        assert_eq!(data.minima.len(), 2, "minima: {:?}", data.minima);
        for (m, w) in data.minima.iter().zip([&wells[0], &wells[1]]) {
            let near = wells.iter().map(|ww| m.pos.dist(ww.center)).fold(f64::INFINITY, f64::min);
            assert!(near < 0.05, "minimum {:?} far from both wells ({:?})", m.pos, w.center);
        }
    }

    #[test]
    fn j0_matches_disk_closed_form_and_scales_quadratically() {
        // On the unit disk J₀ = -1/2 ∫ ξ₀ = (π/2)(1 - 2 I₁(1)/I₀(1)).
        let expect = 0.5 * std::f64::consts::PI
            * (1.0 - 2.0 * bessel_i(1, 1.0) / bessel_i(0, 1.0));
        let g1 = build_grid(&DomainSpec::disk(1.0), 128).unwrap();
        let g2 = build_grid(&DomainSpec::disk(1.0), 256).unwrap();
        let (_, xi_a, _) = solve_london(&g1).unwrap();
        let (_, xi_b, _) = solve_london(&g2).unwrap();
        let (ja, jb) = (compute_j0(&xi_a), compute_j0(&xi_b));
        assert!((jb - expect).abs() / expect < 3e-3, "J₀ = {jb}, want {expect}");
        assert!((ja - jb).abs() / jb < 1e-3, "resolution drift {ja} vs {jb}");

        let mut doubled = ScalarField::zeros(&g2);
        for &k in &g2.interior {
            doubled.data[k as usize] = 2.0 * xi_b.data[k as usize];
        }
        let j4 = compute_j0(&doubled);
        assert!((j4 - 4.0 * jb).abs() < 1e-10 * j4);
    }

    #[test]
    fn zeta_is_nonpositive_and_linear_in_degree() {
        let g = build_grid(&DomainSpec::disk(1.0), 128).unwrap();
        let pts = [Point2::new(0.3, 0.1), Point2::new(-0.2, -0.4)];
        let one = solve_zeta(&g, &pts, &[1, 1]).unwrap();
        let three = solve_zeta(&g, &pts, &[3, 3]).unwrap();
        let mut worst = 0.0f64;
        for &k in &g.interior {
            let k = k as usize;
            assert!(one.zeta.data[k] <= 1e-6, "ζ must be non-positive");
            worst = worst.max((three.zeta.data[k] - 3.0 * one.zeta.data[k]).abs());
        }
        assert!(worst < 1e-9, "degree linearity violated by {worst}");

        // Superposition across points.
        let left = solve_zeta(&g, &pts[..1], &[1]).unwrap();
        let right = solve_zeta(&g, &pts[1..], &[1]).unwrap();
        let mut sup = 0.0f64;
        for &k in &g.interior {
            let k = k as usize;
            sup = sup
                .max((one.zeta.data[k] - left.zeta.data[k] - right.zeta.data[k]).abs());
        }
        assert!(sup < 1e-9, "superposition violated by {sup}");
        assert!(tilde_v_at_min(&one) < 0.0);
    }

    #[test]
    fn interaction_functional_collapses_at_its_minimizer() {
        let g = build_grid(&DomainSpec::disk(1.0), 256).unwrap();
        let pts = [Point2::new(0.4, 0.0), Point2::new(-0.4, 0.0)];
        let degs = [1, 1];
        let data = solve_zeta(&g, &pts, &degs).unwrap();
        let optimal = tilde_v_at_min(&data);
        let general = tilde_v_general(&data.zeta, &pts, &degs);
        let rel = (general - optimal).abs() / optimal.abs();
        assert!(rel < 0.02, "Ṽ general {general} vs collapsed {optimal} (rel {rel})");
    }

    #[test]
    fn source_response_is_symmetric_across_pairs() {
        let g = build_grid(&DomainSpec::disk(1.0), 192).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let mut pairs = 0;
        while pairs < 5 {
            let a = Point2::new(rng.random_range(-0.6..0.6), rng.random_range(-0.6..0.6));
            let b = Point2::new(rng.random_range(-0.6..0.6), rng.random_range(-0.6..0.6));
            if a.dist(b) < 10.0 * g.h {
                continue;
            }
            let za = solve_zeta(&g, &[a], &[1]).unwrap();
            let zb = solve_zeta(&g, &[b], &[1]).unwrap();
            let ab = za.zeta.bilinear(b);
            let ba = zb.zeta.bilinear(a);
            let rel = (ab - ba).abs() / ab.abs().max(ba.abs());
            assert!(rel < 0.01, "ζ^a(b) = {ab} vs ζ^b(a) = {ba} (rel {rel})");
            pairs += 1;
        }
    }
}
