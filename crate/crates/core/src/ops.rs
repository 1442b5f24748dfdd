//! Node-based differential operators on the masked grid.
//!
//! These are the analysis/reporting operators: centered second-order stencils
//! where both neighbors are masked, first-order one-sided fallbacks against
//! the mask edge.  The solver stencils (boundary-corrected Dirichlet operator,
//! edge-based Neumann operator) live in [`crate::solve`] and are deliberately
//! separate: they must stay symmetric for conjugate gradients, while these
//! trade symmetry for pointwise accuracy.

use crate::field::{ScalarField, VectorField};
use crate::grid::{E, N, S, W};
use crate::{Error, Point2, Result};

/// Centered (or one-sided) gradient.
#[must_use]
pub fn gradient(f: &ScalarField) -> VectorField {
    let g = &f.grid;
    let mut out = VectorField::zeros(g);
    let h = g.h;
    for &k in &g.interior {
        let k = k as usize;
        let have = |dir: usize| g.mask[g.neighbor(k, dir)];
        let v = |dir: usize| f.data[g.neighbor(k, dir)];
        let c = f.data[k];

        out.x[k] = match (have(W), have(E)) {
            (true, true) => (v(E) - v(W)) / (2.0 * h),
            (false, true) => (v(E) - c) / h,
            (true, false) => (c - v(W)) / h,
            (false, false) => 0.0,
        };
        out.y[k] = match (have(S), have(N)) {
            (true, true) => (v(N) - v(S)) / (2.0 * h),
            (false, true) => (v(N) - c) / h,
            (true, false) => (c - v(S)) / h,
            (false, false) => 0.0,
        };
    }
    out
}

/// Perpendicular gradient `∇⊥f = (-∂_y f, ∂_x f)`.
#[must_use]
pub fn perp_gradient(f: &ScalarField) -> VectorField {
    let grad = gradient(f);
    let mut out = VectorField::zeros(&f.grid);
    for &k in &f.grid.interior {
        let k = k as usize;
        out.x[k] = -grad.y[k];
        out.y[k] = grad.x[k];
    }
    out
}

/// Centered (or one-sided) divergence of a node vector field.
#[must_use]
pub fn divergence(a: &VectorField) -> ScalarField {
    let g = &a.grid;
    let mut out = ScalarField::zeros(g);
    let h = g.h;
    for &k in &g.interior {
        let k = k as usize;
        let have = |dir: usize| g.mask[g.neighbor(k, dir)];
        let dx = match (have(W), have(E)) {
            (true, true) => (a.x[g.neighbor(k, E)] - a.x[g.neighbor(k, W)]) / (2.0 * h),
            (false, true) => (a.x[g.neighbor(k, E)] - a.x[k]) / h,
            (true, false) => (a.x[k] - a.x[g.neighbor(k, W)]) / h,
            (false, false) => 0.0,
        };
        let dy = match (have(S), have(N)) {
            (true, true) => (a.y[g.neighbor(k, N)] - a.y[g.neighbor(k, S)]) / (2.0 * h),
            (false, true) => (a.y[g.neighbor(k, N)] - a.y[k]) / h,
            (true, false) => (a.y[k] - a.y[g.neighbor(k, S)]) / h,
            (false, false) => 0.0,
        };
        out.data[k] = dx + dy;
    }
    out
}

/// Scalar curl `∂_x a_y - ∂_y a_x` of a node vector field.
#[must_use]
pub fn curl(a: &VectorField) -> ScalarField {
    let g = &a.grid;
    let mut out = ScalarField::zeros(g);
    let h = g.h;
    for &k in &g.interior {
        let k = k as usize;
        let have = |dir: usize| g.mask[g.neighbor(k, dir)];
        let dxy = match (have(W), have(E)) {
            (true, true) => (a.y[g.neighbor(k, E)] - a.y[g.neighbor(k, W)]) / (2.0 * h),
            (false, true) => (a.y[g.neighbor(k, E)] - a.y[k]) / h,
            (true, false) => (a.y[k] - a.y[g.neighbor(k, W)]) / h,
            (false, false) => 0.0,
        };
        let dyx = match (have(S), have(N)) {
            (true, true) => (a.x[g.neighbor(k, N)] - a.x[g.neighbor(k, S)]) / (2.0 * h),
            (false, true) => (a.x[g.neighbor(k, N)] - a.x[k]) / h,
            (true, false) => (a.x[k] - a.x[g.neighbor(k, S)]) / h,
            (false, false) => 0.0,
        };
        out.data[k] = dxy - dyx;
    }
    out
}

/// Five-point Laplacian where the full stencil is masked, shifted one-sided
/// second differences against the mask edge (first-order there).
#[must_use]
pub fn laplacian(f: &ScalarField) -> ScalarField {
    let g = &f.grid;
    let mut out = ScalarField::zeros(g);
    let h2 = g.h * g.h;
    let second = |k: usize, step: isize| -> Option<f64> {
        let k = k as isize;
        let (a, b, c) = (k, k + step, k + 2 * step);
        let inb = |t: isize| t >= 0 && (t as usize) < f.data.len() && g.mask[t as usize];
        if inb(b) && inb(c) {
            Some(f.data[a as usize] - 2.0 * f.data[b as usize] + f.data[c as usize])
        } else {
            None
        }
    };
    for &k in &g.interior {
        let k = k as usize;
        let nxs = g.nx as isize;
        let cx = if g.mask[g.neighbor(k, W)] && g.mask[g.neighbor(k, E)] {
            f.data[k - 1] - 2.0 * f.data[k] + f.data[k + 1]
        } else if g.mask[g.neighbor(k, E)] {
            second(k, 1).unwrap_or(0.0)
        } else if g.mask[g.neighbor(k, W)] {
            second(k, -1).unwrap_or(0.0)
        } else {
            0.0
        };
        let cy = if g.mask[g.neighbor(k, S)] && g.mask[g.neighbor(k, N)] {
            f.data[k - g.nx] - 2.0 * f.data[k] + f.data[k + g.nx]
        } else if g.mask[g.neighbor(k, N)] {
            second(k, nxs).unwrap_or(0.0)
        } else if g.mask[g.neighbor(k, S)] {
            second(k, -nxs).unwrap_or(0.0)
        } else {
            0.0
        };
        out.data[k] = (cx + cy) / h2;
    }
    out
}

/// Deposits point loads `Σ wᵢ δ_{pᵢ}` on the grid as a density field using
/// bilinear weights divided by the cell area.
pub fn dirac_load(
    grid: &std::sync::Arc<crate::grid::Grid>,
    points: &[Point2],
    weights: &[f64],
) -> Result<ScalarField> {
    if points.len() != weights.len() {
        return Err(Error::InvalidParameter(
            "dirac_load: points and weights length mismatch".into(),
        ));
    }
    let mut out = ScalarField::zeros(grid);
    let h2 = grid.h * grid.h;
    for (p, &w) in points.iter().zip(weights) {
        let (ks, ws) = grid.bilinear_stencil(*p).ok_or_else(|| {
            Error::InvalidParameter(format!("dirac_load: point ({}, {}) off the grid", p.x, p.y))
        })?;
        if !ks.iter().all(|&k| grid.mask[k]) {
            return Err(Error::InvalidParameter(format!(
                "dirac_load: point ({}, {}) too close to the boundary",
                p.x, p.y
            )));
        }
        for t in 0..4 {
            out.data[ks[t]] += w * ws[t] / h2;
        }
    }
    Ok(out)
}
