//! Linear solvers on the masked grid.
//!
//! Two symmetric positive definite operators cover every linear solve in the
//! crate:
//!
//! - Dirichlet (`-Δu = f` or `-Δu + u = f`): five-point stencil with a
//!   boundary correction at cut arms.  The ghost value across a cut arm of
//!   fraction `θ` is linearly extrapolated through the boundary crossing,
//!   which folds into a `1/θ` diagonal term and a right-hand-side
//!   contribution `g/(θ h²)` evaluated at the true crossing point — the
//!   operator stays symmetric (unlike the classical unsymmetric cut-arm
//!   stencil) and the scheme remains second-order accurate in practice.
//! - Neumann (`-Δu = f`, zero flux): edge-based Laplacian over active edges,
//!   i.e. the natural operator of the quadratic form `Σ_edges (du)²`; the
//!   constant null space is handled by de-meaning.
//!
//! Both are driven by a matrix-free Jacobi-preconditioned conjugate gradient
//! with deterministic (fixed-chunk) parallel reductions, so repeated runs
//! produce bit-identical fields regardless of thread count.

use rayon::prelude::*;
use std::sync::Arc;

use crate::domain::Point2;
use crate::field::ScalarField;
use crate::grid::Grid;
use crate::{Error, Result};

/// Which equation [`solve_dirichlet`] discretizes: `-Δu = f` (Poisson) or
/// `-Δu + u = f` (screened).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolveKind {
    Poisson,
    Screened,
}

/// Dirichlet boundary data, evaluated at the exact arm-boundary crossings.
pub enum BoundaryData<'a> {
    Const(f64),
    Fn(&'a dyn Fn(Point2) -> f64),
    /// Node samples; interpolated bilinearly at crossings.  Fill with
    /// [`ScalarField::from_fn_all`] so values exist outside the mask.
    Field(&'a ScalarField),
}

impl BoundaryData<'_> {
    fn eval(&self, p: Point2) -> f64 {
        match self {
            BoundaryData::Const(c) => *c,
            BoundaryData::Fn(f) => f(p),
            BoundaryData::Field(f) => f.bilinear(p),
        }
    }
}

/// Convergence record of a linear solve.
#[derive(Clone, Copy, Debug)]
pub struct SolveStats {
    pub iterations: usize,
    pub rel_residual: f64,
}

const CHUNK: usize = 8192;

/// Deterministic parallel dot product: fixed-size chunks reduced in order.
pub(crate) fn det_dot(a: &[f64], b: &[f64]) -> f64 {
    a.par_chunks(CHUNK)
        .zip(b.par_chunks(CHUNK))
        .map(|(ca, cb)| ca.iter().zip(cb).map(|(x, y)| x * y).sum::<f64>())
        .collect::<Vec<_>>()
        .into_iter()
        .sum()
}

/// Matrix-free preconditioned conjugate gradient.
///
/// `apply` computes `out = A x`; `minv` is the inverse diagonal.  The loop
/// aims for `‖r‖ ≤ tol_target · ‖b‖`; if rounding stalls the residual it
/// accepts anything at or below `tol_accept` (the advertised tolerance) and
/// fails otherwise.  `demean` subtracts the mean every iteration (for the
/// singular Neumann operator).
pub(crate) fn pcg(
    apply: impl Fn(&[f64], &mut [f64]) + Sync,
    minv: &[f64],
    b: &[f64],
    tol_target: f64,
    tol_accept: f64,
    maxit: usize,
    demean: bool,
) -> Result<(Vec<f64>, SolveStats)> {
    let n = b.len();
    let bnorm = det_dot(b, b).sqrt();
    if bnorm == 0.0 {
        return Ok((vec![0.0; n], SolveStats { iterations: 0, rel_residual: 0.0 }));
    }
    let mean = |v: &mut [f64]| {
        let m = v.par_chunks(CHUNK).map(|c| c.iter().sum::<f64>()).collect::<Vec<_>>()
            .into_iter()
            .sum::<f64>()
            / n as f64;
        v.par_iter_mut().for_each(|x| *x -= m);
    };

    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    if demean {
        mean(&mut r);
    }
    let mut z: Vec<f64> = r.par_iter().zip(minv).map(|(ri, mi)| ri * mi).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = det_dot(&r, &z);
    let mut rel = 1.0;
    let mut best = f64::INFINITY;
    let mut since_best = 0usize;

    for it in 0..maxit {
        rel = det_dot(&r, &r).sqrt() / bnorm;
        if rel <= tol_target {
            return Ok((x, SolveStats { iterations: it, rel_residual: rel }));
        }
        if rel < 0.5 * best {
            best = rel;
            since_best = 0;
        } else {
            since_best += 1;
            // Rounding floor: no factor-2 progress for a long stretch.
            if since_best > 200 && rel <= tol_accept {
                return Ok((x, SolveStats { iterations: it, rel_residual: rel }));
            }
        }
        apply(&p, &mut ap);
        let pap = det_dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::Solver(format!(
                "conjugate gradient hit non-positive curvature ({pap:e}) at iteration {it}"
            )));
        }
        let alpha = rz / pap;
        x.par_iter_mut().zip(&p).for_each(|(xi, pi)| *xi += alpha * pi);
        r.par_iter_mut().zip(&ap).for_each(|(ri, api)| *ri -= alpha * api);
        if demean {
            mean(&mut r);
        }
        z.par_iter_mut()
            .zip(r.par_iter().zip(minv))
            .for_each(|(zi, (ri, mi))| *zi = ri * mi);
        let rz_new = det_dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        p.par_iter_mut().zip(&z).for_each(|(pi, zi)| *pi = zi + beta * *pi);
    }
    if rel <= tol_accept {
        return Ok((x, SolveStats { iterations: maxit, rel_residual: rel }));
    }
    Err(Error::Solver(format!(
        "conjugate gradient did not reach tolerance {tol_accept:e} in {maxit} iterations (rel residual {rel:e})"
    )))
}

/// Compact representation of the Dirichlet operator on the mask.
struct DirichletStencil {
    nbr: Vec<[i32; 4]>,
    diag: Vec<f64>,
    /// Cut arms: (rank, direction, θ) — needed for the boundary lift.
    cut: Vec<(u32, u8, f64)>,
}

impl DirichletStencil {
    fn build(grid: &Grid, kind: SolveKind) -> Self {
        let n_int = grid.interior.len();
        let mut rank = vec![-1i32; grid.nx * grid.ny];
        for (r, &k) in grid.interior.iter().enumerate() {
            rank[k as usize] = r as i32;
        }
        let mut nbr = vec![[-1i32; 4]; n_int];
        let mut diag = vec![0.0f64; n_int];
        let mut cut = Vec::new();
        let h2 = grid.h * grid.h;
        let shift = if kind == SolveKind::Screened { 1.0 } else { 0.0 };
        for (r, &k) in grid.interior.iter().enumerate() {
            let k = k as usize;
            let mut c = 0.0;
            for dir in 0..4 {
                let nk = grid.neighbor(k, dir);
                if grid.mask[nk] {
                    nbr[r][dir] = rank[nk];
                    c += 1.0;
                } else {
                    let theta = grid.arms[k][dir];
                    c += 1.0 / theta;
                    cut.push((r as u32, dir as u8, theta));
                }
            }
            diag[r] = c / h2 + shift;
        }
        Self { nbr, diag, cut }
    }

    fn apply(&self, h2: f64, x: &[f64], out: &mut [f64]) {
        out.par_iter_mut().enumerate().for_each(|(r, o)| {
            let mut acc = self.diag[r] * x[r];
            for dir in 0..4 {
                let nb = self.nbr[r][dir];
                if nb >= 0 {
                    acc -= x[nb as usize] / h2;
                }
            }
            *o = acc;
        });
    }
}

/// Solves the Dirichlet problem for `kind` with boundary data `boundary`.
///
/// Sign convention: `Poisson` solves `-Δu = rhs`, `Screened` solves
/// `-Δu + u = rhs`.  Relative residual tolerance `1e-10`, iteration cap
/// `50 · n` (the grid's resolution parameter).
pub fn solve_dirichlet(
    grid: &Arc<Grid>,
    kind: SolveKind,
    rhs: &ScalarField,
    boundary: BoundaryData<'_>,
) -> Result<(ScalarField, SolveStats)> {
    if !rhs.same_grid(&ScalarField::zeros(grid)) {
        return Err(Error::InvalidParameter("solve_dirichlet: rhs on a different grid".into()));
    }
    let st = DirichletStencil::build(grid, kind);
    let h2 = grid.h * grid.h;

    let mut b: Vec<f64> = grid.interior.iter().map(|&k| rhs.data[k as usize]).collect();
    for &(r, dir, theta) in &st.cut {
        let k = grid.interior[r as usize] as usize;
        let g = boundary.eval(grid.crossing_point(k, dir as usize));
        b[r as usize] += g / (theta * h2);
    }

    let minv: Vec<f64> = st.diag.iter().map(|d| 1.0 / d).collect();
    let (xs, stats) = pcg(
        |x, out| st.apply(h2, x, out),
        &minv,
        &b,
        1e-12,
        1e-10,
        50 * grid.n,
        false,
    )?;

    let mut out = ScalarField::zeros(grid);
    for (r, &k) in grid.interior.iter().enumerate() {
        out.data[k as usize] = xs[r];
    }
    Ok((out, stats))
}

/// Edge-based Neumann operator `(A u)_k = Σ_active edges at k (u_k - u_nb)/h²`.
pub(crate) struct NeumannStencil {
    pub nbr: Vec<[i32; 4]>,
    pub degree: Vec<f64>,
}

impl NeumannStencil {
    pub fn build(grid: &Grid) -> Self {
        let n_int = grid.interior.len();
        let mut rank = vec![-1i32; grid.nx * grid.ny];
        for (r, &k) in grid.interior.iter().enumerate() {
            rank[k as usize] = r as i32;
        }
        let mut nbr = vec![[-1i32; 4]; n_int];
        let mut degree = vec![0.0f64; n_int];
        for (r, &k) in grid.interior.iter().enumerate() {
            let k = k as usize;
            for dir in 0..4 {
                let nk = grid.neighbor(k, dir);
                if grid.mask[nk] {
                    nbr[r][dir] = rank[nk];
                    degree[r] += 1.0;
                }
            }
        }
        Self { nbr, degree }
    }

    pub fn apply(&self, h2: f64, x: &[f64], out: &mut [f64]) {
        out.par_iter_mut().enumerate().for_each(|(r, o)| {
            let mut acc = self.degree[r] * x[r];
            for dir in 0..4 {
                let nb = self.nbr[r][dir];
                if nb >= 0 {
                    acc -= x[nb as usize];
                }
            }
            *o = acc / h2;
        });
    }
}

/// Solves `-Δu = rhs` with natural zero-flux boundary conditions; returns the
/// mean-zero solution.  The right-hand side is de-meaned internally, so mildly
/// incompatible data (quadrature-level flux imbalance) is projected out.
pub fn solve_neumann_poisson(
    grid: &Arc<Grid>,
    rhs: &ScalarField,
) -> Result<(ScalarField, SolveStats)> {
    let st = NeumannStencil::build(grid);
    let h2 = grid.h * grid.h;
    let n_int = grid.interior.len();

    let mut b: Vec<f64> = grid.interior.iter().map(|&k| rhs.data[k as usize]).collect();
    let mean = b.iter().sum::<f64>() / n_int as f64;
    b.iter_mut().for_each(|x| *x -= mean);

    let minv: Vec<f64> = st.degree.iter().map(|d| h2 / d.max(1.0)).collect();
    let (xs, stats) = pcg(
        |x, out| st.apply(h2, x, out),
        &minv,
        &b,
        1e-12,
        1e-10,
        50 * grid.n,
        true,
    )?;

    let mut out = ScalarField::zeros(grid);
    for (r, &k) in grid.interior.iter().enumerate() {
        out.data[k as usize] = xs[r];
    }
    Ok((out, stats))
}
