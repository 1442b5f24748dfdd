//! Pinning term and the scalar modulus profile.
//!
//! The sample carries a lattice of small inclusions: inside each cell
//! `δm + δ(-1/2,1/2)²` that fits entirely in the domain, the coupling drops
//! from `1` to `b` on the shrunken copy `δm + λδ·ω` of a reference inclusion
//! `ω`.  The scalar profile `U` minimizes
//!
//! `E(u) = 1/2 ∫ |∇u|² + (1/2ε²)(a² - u²)²`
//!
//! over real fields with natural boundary conditions, and relativizes the
//! full problem: any admissible complex field splits as `u = U v` with
//!
//! `E(U v) = E(U) + F(v)`,
//! `F(v) = 1/2 ∫ U²|∇v|² + (U⁴/2ε²)(1 - |v|²)²`.
//!
//! The discrete energies here are built so that this splitting is exact on
//! the lattice, not just to truncation order: the `F`-kinetic weight on an
//! edge is the product `U_i U_j`, which obeys the per-edge identity
//! `|d(Uv)|² = U_i U_j |dv|² + dU · d(U|v|²)`, and the cross terms then
//! cancel against the discrete Euler-Lagrange equation of `U`.  As a result
//! the decoupling residual is bounded by the nonlinear solver tolerance, and
//! the measured value is essentially rounding noise.

use rayon::prelude::*;
use std::sync::Arc;

use crate::domain::{DomainSpec, Point2};
use crate::field::{ComplexField, ScalarField};
use crate::grid::Grid;
use crate::solve::{pcg, NeumannStencil};
use crate::{Error, Result};

/// Geometry and strength of the pinning term.
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct PinningSpec {
    /// Coupling inside inclusions, `0 < b < 1`.
    pub b: f64,
    /// Inclusion scale within its cell, `0 < λ < 1`.
    pub lambda: f64,
    /// Cell period, `0 < δ < 1`.
    pub delta: f64,
    /// Reference inclusion shape in cell coordinates; must contain the origin
    /// and fit strictly inside the unit cell `(-1/2, 1/2)²`.
    pub omega: DomainSpec,
    /// Coherence length of the modulus profile.
    pub epsilon: f64,
}

impl PinningSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("b", self.b), ("lambda", self.lambda), ("delta", self.delta)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::InvalidParameter(format!(
                    "pinning parameter {name} = {v} outside (0, 1)"
                )));
            }
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "epsilon = {} must be positive",
                self.epsilon
            )));
        }
        self.omega.validate()?;
        let (lo, hi) = self.omega.bounding_box();
        let margin = 1e-9;
        if lo.x <= -0.5 + margin
            || lo.y <= -0.5 + margin
            || hi.x >= 0.5 - margin
            || hi.y >= 0.5 - margin
        {
            return Err(Error::InvalidParameter(
                "inclusion shape must fit strictly inside the unit cell".into(),
            ));
        }
        if !self.omega.contains(Point2::new(0.0, 0.0)) {
            return Err(Error::InvalidParameter(
                "inclusion shape must contain the cell origin".into(),
            ));
        }
        Ok(())
    }
}

/// The sampled coupling field `a ∈ {b, 1}` plus the retained cell centers.
#[derive(Clone, Debug)]
pub struct PinningField {
    pub a: ScalarField,
    /// Centers `δm` of the cells that fit entirely inside the domain.
    pub inclusion_centers: Vec<Point2>,
    pub spec: PinningSpec,
}

impl PinningField {
    /// A uniform coupling (no inclusions) — the unpinned limit.
    #[must_use]
    pub fn uniform(grid: &Arc<Grid>, value: f64, epsilon: f64) -> Self {
        Self {
            a: ScalarField::from_fn(grid, |_| value),
            inclusion_centers: Vec::new(),
            spec: PinningSpec {
                b: value.clamp(f64::MIN_POSITIVE, 1.0),
                lambda: 0.5,
                delta: 0.5,
                omega: DomainSpec::disk(0.25),
                epsilon,
            },
        }
    }

    /// Nearest retained cell center, if any.
    #[must_use]
    pub fn nearest_center(&self, p: Point2) -> Option<Point2> {
        self.inclusion_centers
            .iter()
            .copied()
            .min_by(|a, b| p.dist(*a).partial_cmp(&p.dist(*b)).unwrap())
    }
}

/// Samples the pinning coupling on the grid.
///
/// A cell is retained when its four corners are strictly inside the domain
/// (exact for the convex shapes supported); nodes land in an inclusion when
/// their cell-relative coordinate, rescaled by `λδ`, lies in `ω`.
pub fn build_pinning_term(grid: &Arc<Grid>, spec: &PinningSpec) -> Result<PinningField> {
    spec.validate()?;
    if spec.delta < 4.0 * grid.h {
        return Err(Error::InvalidParameter(format!(
            "cell period δ = {} under-resolved: needs δ ≥ 4h = {}",
            spec.delta,
            4.0 * grid.h
        )));
    }

    let (bmin, bmax) = grid.spec.bounding_box();
    let d = spec.delta;
    let m_min_x = (bmin.x / d).floor() as i64 - 1;
    let m_max_x = (bmax.x / d).ceil() as i64 + 1;
    let m_min_y = (bmin.y / d).floor() as i64 - 1;
    let m_max_y = (bmax.y / d).ceil() as i64 + 1;

    let mut centers = Vec::new();
    for my in m_min_y..=m_max_y {
        for mx in m_min_x..=m_max_x {
            let c = Point2::new(mx as f64 * d, my as f64 * d);
            let corners = [
                Point2::new(c.x - 0.5 * d, c.y - 0.5 * d),
                Point2::new(c.x + 0.5 * d, c.y - 0.5 * d),
                Point2::new(c.x - 0.5 * d, c.y + 0.5 * d),
                Point2::new(c.x + 0.5 * d, c.y + 0.5 * d),
            ];
            if corners.iter().all(|&q| grid.spec.level(q) < 0.0) {
                centers.push(c);
            }
        }
    }

    let scale = spec.lambda * spec.delta;
    let mut a = ScalarField::from_fn(grid, |_| 1.0);
    for &c in &centers {
        // Nodes within the inclusion's bounding box, tested against ω.
        let (wlo, whi) = spec.omega.bounding_box();
        let lo_x = c.x + scale * wlo.x - grid.h;
        let hi_x = c.x + scale * whi.x + grid.h;
        let lo_y = c.y + scale * wlo.y - grid.h;
        let hi_y = c.y + scale * whi.y + grid.h;
        let i0 = (((lo_x - grid.origin.x) / grid.h).floor().max(0.0)) as usize;
        let j0 = (((lo_y - grid.origin.y) / grid.h).floor().max(0.0)) as usize;
        let i1 = ((hi_x - grid.origin.x) / grid.h).ceil() as usize;
        let j1 = ((hi_y - grid.origin.y) / grid.h).ceil() as usize;
        for j in j0..=j1.min(grid.ny - 1) {
            for i in i0..=i1.min(grid.nx - 1) {
                let k = grid.idx(i, j);
                if !grid.mask[k] {
                    continue;
                }
                let p = grid.pos(i, j);
                let rel = Point2::new((p.x - c.x) / scale, (p.y - c.y) / scale);
                if spec.omega.contains(rel) {
                    a.data[k] = spec.b;
                }
            }
        }
    }

    Ok(PinningField { a, inclusion_centers: centers, spec: spec.clone() })
}

/// Scaled Euler-Lagrange residual `ε²(-Δᴺu) - (a² - u²)u` (sup-norm target
/// 1e-8); `-Δᴺ` is the edge-based Neumann Laplacian.
fn lm_residual(
    st: &NeumannStencil,
    h2: f64,
    eps2: f64,
    a: &[f64],
    u: &[f64],
    out: &mut [f64],
) {
    out.par_iter_mut().enumerate().for_each(|(r, o)| {
        let mut lap = st.degree[r] * u[r];
        for dir in 0..4 {
            let nb = st.nbr[r][dir];
            if nb >= 0 {
                lap -= u[nb as usize];
            }
        }
        let cubic = (a[r] * a[r] - u[r] * u[r]) * u[r];
        *o = eps2 * lap / h2 - cubic;
    });
}

/// Solves the scalar modulus problem: gradient flow to a neighborhood, then
/// damped Newton to sup-norm residual `1e-8` (usually far below).
///
/// Guarantees `b ≤ U ≤ 1` up to solver tolerance.
pub fn solve_lassoued_mironescu(pin: &PinningField) -> Result<ScalarField> {
    let grid = &pin.a.grid;
    let st = NeumannStencil::build(grid);
    let h2 = grid.h * grid.h;
    let eps = pin.spec.epsilon;
    let eps2 = eps * eps;
    let n_int = grid.interior.len();

    let a: Vec<f64> = grid.interior.iter().map(|&k| pin.a.data[k as usize]).collect();
    let mut u: Vec<f64> = a.clone();
    let mut r = vec![0.0; n_int];

    let res_inf = |r: &[f64]| -> f64 {
        r.par_chunks(4096)
            .map(|c| c.iter().fold(0.0f64, |m, x| m.max(x.abs())))
            .collect::<Vec<_>>()
            .into_iter()
            .fold(0.0, f64::max)
    };

    // Phase 1: explicit gradient flow on the ε²-scaled equation.
    let dt = 0.8 / (8.0 * eps2 / h2 + 3.0);
    let mut res = f64::INFINITY;
    for _ in 0..20_000 {
        lm_residual(&st, h2, eps2, &a, &u, &mut r);
        res = res_inf(&r);
        if res <= 1e-2 {
            break;
        }
        u.par_iter_mut().zip(&r).for_each(|(ui, ri)| *ui -= dt * ri);
    }
    if res > 1.0 {
        return Err(Error::Nonlinear(format!(
            "modulus gradient flow failed to settle (residual {res:e})"
        )));
    }

    // Phase 2: damped Newton with CG inner solves.
    let target = 1e-11;
    let accept = 1e-8;
    for _ in 0..40 {
        lm_residual(&st, h2, eps2, &a, &u, &mut r);
        res = res_inf(&r);
        if res <= target {
            break;
        }
        // Jacobian of the scaled residual: ε²(-Δᴺ) + (3u² - a²).
        let jdiag: Vec<f64> = (0..n_int)
            .map(|k| eps2 * st.degree[k] / h2 + (3.0 * u[k] * u[k] - a[k] * a[k]))
            .collect();
        let minv: Vec<f64> = jdiag.iter().map(|d| 1.0 / d.max(1e-12)).collect();
        let apply = |x: &[f64], out: &mut [f64]| {
            out.par_iter_mut().enumerate().for_each(|(k, o)| {
                let mut lap = st.degree[k] * x[k];
                for dir in 0..4 {
                    let nb = st.nbr[k][dir];
                    if nb >= 0 {
                        lap -= x[nb as usize];
                    }
                }
                *o = eps2 * lap / h2 + (3.0 * u[k] * u[k] - a[k] * a[k]) * x[k];
            });
        };
        let delta = match pcg(apply, &minv, &r, 1e-10, 1e-6, 20 * grid.n, false) {
            Ok((d, _)) => d,
            // Indefinite Hessian far from the minimizer: fall back to more flow.
            Err(_) => {
                for _ in 0..2000 {
                    lm_residual(&st, h2, eps2, &a, &u, &mut r);
                    u.par_iter_mut().zip(&r).for_each(|(ui, ri)| *ui -= dt * ri);
                }
                continue;
            }
        };
        // Damped update.
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..12 {
            let trial: Vec<f64> = u
                .par_iter()
                .zip(&delta)
                .map(|(ui, di)| ui - step * di)
                .collect();
            lm_residual(&st, h2, eps2, &a, &trial, &mut r);
            let new_res = res_inf(&r);
            if new_res < res {
                u = trial;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    lm_residual(&st, h2, eps2, &a, &u, &mut r);
    res = res_inf(&r);
    if res > accept {
        return Err(Error::Nonlinear(format!(
            "modulus Newton iteration stopped at residual {res:e} (target {accept:e})"
        )));
    }

    // Clamp rounding-level excursions only; anything larger is a solver bug.
    let b = pin.spec.b;
    for x in &mut u {
        if *x < b && *x > b - 1e-9 {
            *x = b;
        }
        if *x > 1.0 && *x < 1.0 + 1e-9 {
            *x = 1.0;
        }
    }

    let mut out = ScalarField::zeros(grid);
    for (r_idx, &k) in grid.interior.iter().enumerate() {
        out.data[k as usize] = u[r_idx];
    }
    Ok(out)
}

/// `E(u) = 1/2 Σ_edges |du|² + (h²/4ε²) Σ_nodes (a² - |u|²)²` for complex `u`.
///
/// The potential quadrature uses uniform `h²` node weights; this matches the
/// Euler-Lagrange operator of the modulus solve, which is what makes the
/// discrete decoupling identity exact.  (The potential density vanishes near
/// the boundary in every use, so cut cells don't need special weights here.)
#[must_use]
pub fn energy_e(u: &ComplexField, a: &ScalarField, epsilon: f64) -> f64 {
    let grid = &u.grid;
    let kin = edge_sum_complex(grid, u, None);
    let h2 = grid.h * grid.h;
    let pot: f64 = grid
        .interior
        .par_chunks(4096)
        .map(|chunk| {
            chunk
                .iter()
                .map(|&k| {
                    let k = k as usize;
                    let q = a.data[k] * a.data[k] - u.data[k].norm_sqr();
                    q * q
                })
                .sum::<f64>()
        })
        .collect::<Vec<_>>()
        .into_iter()
        .sum::<f64>()
        * h2
        / (4.0 * epsilon * epsilon);
    0.5 * kin + pot
}

/// Real-field version of [`energy_e`].
#[must_use]
pub fn energy_e_real(u: &ScalarField, a: &ScalarField, epsilon: f64) -> f64 {
    let grid = &u.grid;
    let mut kin = 0.0;
    for &e in &grid.edges_x {
        let e = e as usize;
        let (i, j) = (e % (grid.nx - 1), e / (grid.nx - 1));
        let k = grid.idx(i, j);
        let d = u.data[k + 1] - u.data[k];
        kin += d * d;
    }
    for &e in &grid.edges_y {
        let e = e as usize;
        let k = e;
        let d = u.data[k + grid.nx] - u.data[k];
        kin += d * d;
    }
    let h2 = grid.h * grid.h;
    let mut pot = 0.0;
    for &k in &grid.interior {
        let k = k as usize;
        let q = a.data[k] * a.data[k] - u.data[k] * u.data[k];
        pot += q * q;
    }
    0.5 * kin + pot * h2 / (4.0 * epsilon * epsilon)
}

/// Edge sum `Σ w_e |du_e|²` with optional per-edge weight `U_i U_j`.
fn edge_sum_complex(grid: &Grid, u: &ComplexField, weight: Option<&ScalarField>) -> f64 {
    let sum_x: f64 = grid
        .edges_x
        .par_chunks(4096)
        .map(|chunk| {
            chunk
                .iter()
                .map(|&e| {
                    let e = e as usize;
                    let (i, j) = (e % (grid.nx - 1), e / (grid.nx - 1));
                    let k = grid.idx(i, j);
                    let d = u.data[k + 1] - u.data[k];
                    let w = weight.map_or(1.0, |uf| uf.data[k] * uf.data[k + 1]);
                    w * d.norm_sqr()
                })
                .sum::<f64>()
        })
        .collect::<Vec<_>>()
        .into_iter()
        .sum();
    let sum_y: f64 = grid
        .edges_y
        .par_chunks(4096)
        .map(|chunk| {
            chunk
                .iter()
                .map(|&e| {
                    let k = e as usize;
                    let d = u.data[k + grid.nx] - u.data[k];
                    let w = weight.map_or(1.0, |uf| uf.data[k] * uf.data[k + grid.nx]);
                    w * d.norm_sqr()
                })
                .sum::<f64>()
        })
        .collect::<Vec<_>>()
        .into_iter()
        .sum();
    sum_x + sum_y
}

/// Relative energy `F(v) = 1/2 Σ U_i U_j |dv|² + (h²/4ε²) Σ U⁴ (1 - |v|²)²`.
#[must_use]
pub fn energy_f(v: &ComplexField, u_profile: &ScalarField, epsilon: f64) -> f64 {
    let grid = &v.grid;
    let kin = edge_sum_complex(grid, v, Some(u_profile));
    let h2 = grid.h * grid.h;
    let pot: f64 = grid
        .interior
        .par_chunks(4096)
        .map(|chunk| {
            chunk
                .iter()
                .map(|&k| {
                    let k = k as usize;
                    let uu = u_profile.data[k] * u_profile.data[k];
                    let w = 1.0 - v.data[k].norm_sqr();
                    uu * uu * w * w
                })
                .sum::<f64>()
        })
        .collect::<Vec<_>>()
        .into_iter()
        .sum::<f64>()
        * h2
        / (4.0 * epsilon * epsilon);
    0.5 * kin + pot
}

/// `|E(Uv) - E(U) - F(v)| / max(1, E(Uv))` — the splitting defect.
#[must_use]
pub fn decoupling_residual(
    pin: &PinningField,
    u_profile: &ScalarField,
    v: &ComplexField,
) -> f64 {
    let grid = &v.grid;
    let mut uv = ComplexField::zeros(grid);
    for &k in &grid.interior {
        let k = k as usize;
        uv.data[k] = v.data[k] * u_profile.data[k];
    }
    let e_uv = energy_e(&uv, &pin.a, pin.spec.epsilon);
    let e_u = energy_e_real(u_profile, &pin.a, pin.spec.epsilon);
    let f_v = energy_f(v, u_profile, pin.spec.epsilon);
    (e_uv - e_u - f_v).abs() / e_uv.abs().max(1.0)
}
