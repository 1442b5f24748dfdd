//! Direct minimization of the pinned Ginzburg-Landau energy.
//!
//! The unknown is the decoupled pair `(v, A)`: the order parameter relative
//! to the pinned modulus profile `U`, and the magnetic potential.  The
//! energy relative to the vortex-free pinned state is
//!
//! `𝓕(v, A) = ½∫ U²|∇v - iAv|² + (U⁴/2ε²)(1-|v|²)² + |curl A - h_ex|²`.
//!
//! Discretely the potential lives on grid links as the circulation
//! `θ_e = ∫_e A·dl`, which makes gauge transformations exact: the covariant
//! difference `v_head e^{-iθ} - v_tail` changes by a unimodular factor and
//! the plaquette curl is untouched.  Minimization alternates explicit
//! descent sweeps in `v` and `θ` with full-sweep backtracking, so the energy
//! is non-increasing by construction, with periodic re-projection onto the
//! Coulomb gauge (zero node divergence, tangential at the boundary).

use std::f64::consts::PI;
use std::sync::Arc;

use crate::domain::Point2;
use crate::field::VectorField;
use crate::london::{solve_zeta, LondonData};
use crate::renorm::canonical_phase;
use crate::solve::{pcg, solve_neumann_poisson};
use crate::{ComplexField, Error, Grid, Result, ScalarField};

use num_complex::Complex64;

/// Link circulations of a vector potential: `tx[j·(nx-1)+i]` on the edge
/// `(i,j)-(i+1,j)`, `ty[j·nx+i]` on `(i,j)-(i,j+1)`; the value is `h·A`
/// along the edge.
#[derive(Clone, Debug)]
pub struct LinkField {
    pub grid: Arc<Grid>,
    pub tx: Vec<f64>,
    pub ty: Vec<f64>,
}

impl LinkField {
    #[must_use]
    pub fn zeros(grid: &Arc<Grid>) -> Self {
        Self {
            grid: Arc::clone(grid),
            tx: vec![0.0; (grid.nx - 1) * grid.ny],
            ty: vec![0.0; grid.nx * (grid.ny - 1)],
        }
    }

    /// Links of a pure gradient: `θ_e = φ_head - φ_tail`.  Adding these to a
    /// state's links while rotating `v` by `e^{iφ}` is a gauge transform.
    #[must_use]
    pub fn from_gradient(phi: &ScalarField) -> Self {
        let grid = &phi.grid;
        let mut out = Self::zeros(grid);
        for j in 0..grid.ny {
            for i in 0..grid.nx - 1 {
                out.tx[j * (grid.nx - 1) + i] =
                    phi.data[grid.idx(i + 1, j)] - phi.data[grid.idx(i, j)];
            }
        }
        for j in 0..grid.ny - 1 {
            for i in 0..grid.nx {
                out.ty[j * grid.nx + i] =
                    phi.data[grid.idx(i, j + 1)] - phi.data[grid.idx(i, j)];
            }
        }
        out
    }

    /// Divergence-free links from a stream function given at nodes: the
    /// stream is averaged to plaquette centers and differenced across each
    /// edge, so the plaquette curl is exactly the dual five-point Laplacian
    /// of the averaged stream and the node divergence vanishes identically
    /// at nodes whose four incident links all exist.
    #[must_use]
    pub fn from_stream(psi: &ScalarField) -> Self {
        let grid = &psi.grid;
        let (nx, ny) = (grid.nx, grid.ny);
        // Stream at plaquette centers (index j·(nx-1)+i).
        let mut ps = vec![0.0f64; (nx - 1) * (ny - 1)];
        for j in 0..ny - 1 {
            for i in 0..nx - 1 {
                ps[j * (nx - 1) + i] = 0.25
                    * (psi.data[grid.idx(i, j)]
                        + psi.data[grid.idx(i + 1, j)]
                        + psi.data[grid.idx(i, j + 1)]
                        + psi.data[grid.idx(i + 1, j + 1)]);
            }
        }
        Self::from_plaq_stream(grid, &ps)
    }

    /// Divergence-free links from a stream given directly at plaquette
    /// centers (zero outside the array).  The curl on any plaquette equals
    /// the dual five-point Laplacian of the stream there.
    #[must_use]
    pub fn from_plaq_stream(grid: &Arc<Grid>, ps: &[f64]) -> Self {
        let (nx, ny) = (grid.nx, grid.ny);
        let mut out = Self::zeros(grid);
        // x-link (i,j): A_x = -∂_y ψ across the two plaquettes above/below.
        for j in 0..ny {
            for i in 0..nx - 1 {
                let below = if j > 0 { ps[(j - 1) * (nx - 1) + i] } else { 0.0 };
                let above = if j < ny - 1 { ps[j * (nx - 1) + i] } else { 0.0 };
                out.tx[j * (nx - 1) + i] = below - above;
            }
        }
        // y-link (i,j): A_y = ∂_x ψ across the plaquettes left/right.
        for j in 0..ny - 1 {
            for i in 0..nx {
                let left = if i > 0 { ps[j * (nx - 1) + i - 1] } else { 0.0 };
                let right = if i < nx - 1 { ps[j * (nx - 1) + i] } else { 0.0 };
                out.ty[j * nx + i] = right - left;
            }
        }
        out
    }

    /// Plaquette curl `B_p = circulation / h²`, indexed like `grid.plaq_w`.
    #[must_use]
    pub fn curl(&self) -> Vec<f64> {
        let grid = &self.grid;
        let (nx, _ny) = (grid.nx, grid.ny);
        let h2 = grid.h * grid.h;
        let mut b = vec![0.0f64; grid.plaq_w.len()];
        for &pk in &grid.plaqs {
            let pk = pk as usize;
            let (i, j) = (pk % (nx - 1), pk / (nx - 1));
            let circ = self.tx[pk] + self.ty[j * nx + i + 1]
                - self.tx[pk + (nx - 1)]
                - self.ty[j * nx + i];
            b[pk] = circ / h2;
        }
        b
    }

    /// Node divergence over active links, in physical units (`div A`).
    #[must_use]
    pub fn node_divergence(&self) -> ScalarField {
        let grid = &self.grid;
        let (nx, _) = (grid.nx, grid.ny);
        let h2 = grid.h * grid.h;
        let mut out = ScalarField::zeros(grid);
        for &k in &grid.interior {
            let k = k as usize;
            let (i, j) = (k % nx, k / nx);
            let mut acc = 0.0;
            if grid.mask[k + 1] {
                acc += self.tx[j * (nx - 1) + i];
            }
            if grid.mask[k - 1] {
                acc -= self.tx[j * (nx - 1) + i - 1];
            }
            if grid.mask[k + nx] {
                acc += self.ty[j * nx + i];
            }
            if grid.mask[k - nx] {
                acc -= self.ty[(j - 1) * nx + i];
            }
            out.data[k] = acc / h2;
        }
        out
    }

    /// Vector potential at nodes (average of incident active links / h);
    /// diagnostic/export view, not used by the energy.
    #[must_use]
    pub fn vector_potential(&self) -> VectorField {
        let grid = &self.grid;
        let nx = grid.nx;
        let mut out = VectorField::zeros(grid);
        for &k in &grid.interior {
            let k = k as usize;
            let (i, j) = (k % nx, k / nx);
            let mut ax = 0.0;
            let mut cx = 0;
            if grid.mask[k + 1] {
                ax += self.tx[j * (nx - 1) + i];
                cx += 1;
            }
            if grid.mask[k - 1] {
                ax += self.tx[j * (nx - 1) + i - 1];
                cx += 1;
            }
            let mut ay = 0.0;
            let mut cy = 0;
            if grid.mask[k + nx] {
                ay += self.ty[j * nx + i];
                cy += 1;
            }
            if grid.mask[k - nx] {
                ay += self.ty[(j - 1) * nx + i];
                cy += 1;
            }
            out.x[k] = if cx > 0 { ax / (cx as f64 * grid.h) } else { 0.0 };
            out.y[k] = if cy > 0 { ay / (cy as f64 * grid.h) } else { 0.0 };
        }
        out
    }

    /// Max-norm over active links.
    #[must_use]
    pub fn max_abs(&self) -> f64 {
        let gx = self
            .grid
            .edges_x
            .iter()
            .map(|&e| self.tx[e as usize].abs())
            .fold(0.0f64, f64::max);
        self.grid
            .edges_y
            .iter()
            .map(|&e| self.ty[e as usize].abs())
            .fold(gx, f64::max)
    }
}

/// A full simulation state in the decoupled variables.
#[derive(Clone, Debug)]
pub struct GLState {
    pub v: ComplexField,
    pub a: LinkField,
    pub h_ex: f64,
    pub u: ScalarField,
    pub epsilon: f64,
}

/// Energy components of a state; `total = kinetic + potential + field`.
#[derive(Clone, Copy, Debug, serde::Serialize, serde::Deserialize)]
pub struct EnergyBreakdown {
    pub kinetic: f64,
    pub potential: f64,
    pub field: f64,
    pub total: f64,
}

/// Evaluates the discrete energy of a state.
#[must_use]
pub fn energy_full(state: &GLState) -> EnergyBreakdown {
    let grid = &state.v.grid;
    let (nx, _) = (grid.nx, grid.ny);
    let u = &state.u.data;
    let v = &state.v.data;

    let mut kinetic = 0.0f64;
    for &e in &grid.edges_x {
        let e = e as usize;
        let (i, j) = (e % (nx - 1), e / (nx - 1));
        let t = j * nx + i;
        let (s, c) = state.a.tx[e].sin_cos();
        let z = v[t + 1] * Complex64::new(c, -s) - v[t];
        kinetic += u[t] * u[t + 1] * z.norm_sqr();
    }
    for &e in &grid.edges_y {
        let e = e as usize;
        let (s, c) = state.a.ty[e].sin_cos();
        let z = v[e + nx] * Complex64::new(c, -s) - v[e];
        kinetic += u[e] * u[e + nx] * z.norm_sqr();
    }
    kinetic *= 0.5;

    let h2 = grid.h * grid.h;
    let mut potential = 0.0f64;
    for &k in &grid.interior {
        let k = k as usize;
        let d = 1.0 - v[k].norm_sqr();
        potential += u[k].powi(4) * d * d;
    }
    potential *= h2 / (4.0 * state.epsilon * state.epsilon);

    let b = state.a.curl();
    let mut field = 0.0f64;
    for &pk in &grid.plaqs {
        let pk = pk as usize;
        let d = b[pk] - state.h_ex;
        field += grid.plaq_w[pk] * d * d;
    }
    field *= 0.5;

    EnergyBreakdown { kinetic, potential, field, total: kinetic + potential + field }
}

/// Applies the gauge transform `v ← v e^{iχ}`, `θ ← θ + dχ`.  The energy is
/// exactly invariant (the plaquette curl of a gradient vanishes identically
/// and covariant differences pick up a unimodular factor).
#[must_use]
pub fn gauge_transform(state: &GLState, chi: &ScalarField) -> GLState {
    let grid = &state.v.grid;
    let mut v = state.v.clone();
    for &k in &grid.interior {
        let k = k as usize;
        let (s, c) = chi.data[k].sin_cos();
        v.data[k] *= Complex64::new(c, s);
    }
    let g = LinkField::from_gradient(chi);
    let mut a = state.a.clone();
    for (t, gt) in a.tx.iter_mut().zip(&g.tx) {
        *t += gt;
    }
    for (t, gt) in a.ty.iter_mut().zip(&g.ty) {
        *t += gt;
    }
    GLState { v, a, h_ex: state.h_ex, u: state.u.clone(), epsilon: state.epsilon }
}

/// Projects onto the Coulomb gauge: solves a zero-flux Poisson problem for
/// `χ` such that the transformed links have zero node divergence, and
/// applies the corresponding gauge transform.  Returns the new state and
/// `χ`.  Links across the boundary do not exist, so the tangential boundary
/// condition holds structurally.
pub fn coulomb_project(state: &GLState) -> Result<(GLState, ScalarField)> {
    let grid = &state.v.grid;
    let div = state.a.node_divergence();
    let (chi, _) = solve_neumann_poisson(grid, &div)?;
    Ok((gauge_transform(state, &chi), chi))
}

/// Minimizes the energy over the potential at fixed `v` (damped Newton on
/// the link variables with a Gauss-Newton kinetic weight).  With `v ≡ 0`
/// the result carries `curl A = h_ex` on every active plaquette; with
/// `v ≡ 1` it is the Meissner response.
pub fn solve_a_v(
    v: &ComplexField,
    u: &ScalarField,
    h_ex: f64,
) -> Result<LinkField> {
    let grid = &v.grid;
    let (nx, ny) = (grid.nx, grid.ny);
    let h2 = grid.h * grid.h;
    let h4 = h2 * h2;

    // Unknown order: active x-edges then active y-edges.
    let n_ex = grid.edges_x.len();
    let n = n_ex + grid.edges_y.len();
    let mut theta = vec![0.0f64; n];

    // Per-unknown data: kinetic weight source (uu, v_tail, v_head) and the
    // two adjacent plaquettes with orientation signs.
    struct EdgeInfo {
        uu: f64,
        zprod: Complex64, // v_head · conj(v_tail)
        p_plus: i64,      // plaquette where this edge enters with +1
        p_minus: i64,
    }
    let mut info = Vec::with_capacity(n);
    for &e in &grid.edges_x {
        let e = e as usize;
        let (i, j) = (e % (nx - 1), e / (nx - 1));
        let t = j * nx + i;
        info.push(EdgeInfo {
            uu: u.data[t] * u.data[t + 1],
            zprod: v.data[t + 1] * v.data[t].conj(),
            p_plus: e as i64,
            p_minus: if j > 0 { (e - (nx - 1)) as i64 } else { -1 },
        });
    }
    for &e in &grid.edges_y {
        let e = e as usize;
        let (i, j) = (e % nx, e / nx);
        info.push(EdgeInfo {
            uu: u.data[e] * u.data[e + nx],
            zprod: v.data[e + nx] * v.data[e].conj(),
            p_plus: if i > 0 { (j * (nx - 1) + i - 1) as i64 } else { -1 },
            p_minus: (j * (nx - 1) + i) as i64,
        });
    }

    // Plaquette -> unknown slots (for curl assembly).
    let mut rank_x = vec![-1i64; (nx - 1) * ny];
    for (r, &e) in grid.edges_x.iter().enumerate() {
        rank_x[e as usize] = r as i64;
    }
    let mut rank_y = vec![-1i64; nx * (ny - 1)];
    for (r, &e) in grid.edges_y.iter().enumerate() {
        rank_y[e as usize] = (n_ex + r) as i64;
    }
    // Active plaquettes with their 4 unknown slots (bottom, right, top, left).
    struct Plaq {
        w: f64,
        slots: [usize; 4],
    }
    let mut plist = Vec::with_capacity(grid.plaqs.len());
    let mut prank = vec![-1i64; grid.plaq_w.len()];
    for &pk in &grid.plaqs {
        let pk = pk as usize;
        let (i, j) = (pk % (nx - 1), pk / (nx - 1));
        let slots = [
            rank_x[pk],
            rank_y[j * nx + i + 1],
            rank_x[pk + (nx - 1)],
            rank_y[j * nx + i],
        ];
        debug_assert!(slots.iter().all(|&s| s >= 0));
        prank[pk] = plist.len() as i64;
        plist.push(Plaq { w: grid.plaq_w[pk], slots: slots.map(|s| s as usize) });
    }

    let curls = |theta: &[f64]| -> Vec<f64> {
        plist
            .iter()
            .map(|p| (theta[p.slots[0]] + theta[p.slots[1]] - theta[p.slots[2]] - theta[p.slots[3]]) / h2)
            .collect()
    };
    // Gradient of the energy in the link variables.
    let grad = |theta: &[f64], b: &[f64]| -> Vec<f64> {
        let mut g = vec![0.0f64; n];
        for (r, ei) in info.iter().enumerate() {
            let (s, c) = theta[r].sin_cos();
            // d/dθ of -uu·Re(zprod e^{-iθ}) = -uu·Im(zprod e^{-iθ})
            let im = ei.zprod.im * c - ei.zprod.re * s;
            let mut acc = -ei.uu * im;
            if ei.p_plus >= 0 {
                let pr = prank[ei.p_plus as usize];
                if pr >= 0 {
                    let p = &plist[pr as usize];
                    acc += p.w * (b[pr as usize] - h_ex) / h2;
                }
            }
            if ei.p_minus >= 0 {
                let pr = prank[ei.p_minus as usize];
                if pr >= 0 {
                    let p = &plist[pr as usize];
                    acc -= p.w * (b[pr as usize] - h_ex) / h2;
                }
            }
            g[r] = acc;
        }
        g
    };
    let energy_theta = |theta: &[f64], b: &[f64]| -> f64 {
        let mut kin = 0.0;
        for (r, ei) in info.iter().enumerate() {
            let (s, c) = theta[r].sin_cos();
            kin -= ei.uu * (ei.zprod.re * c + ei.zprod.im * s);
        }
        let mut fld = 0.0;
        for (p, &bp) in plist.iter().zip(b) {
            let d = bp - h_ex;
            fld += 0.5 * p.w * d * d;
        }
        kin + fld
    };
    let inf = |g: &[f64]| g.iter().fold(0.0f64, |a, &x| a.max(x.abs()));

    let tol = 1e-9 * h_ex.abs().max(1.0);
    let b0 = curls(&theta);
    let mut g = grad(&theta, &b0);
    let mut gi = inf(&g);
    let mut e_cur = energy_theta(&theta, &b0);
    for _newton in 0..40 {
        if gi <= tol {
            break;
        }
        // Gauss-Newton weights: positive part of the kinetic curvature.
        let kappa: Vec<f64> = info
            .iter()
            .enumerate()
            .map(|(r, ei)| {
                let (s, c) = theta[r].sin_cos();
                (ei.uu * (ei.zprod.re * c + ei.zprod.im * s)).max(0.0)
            })
            .collect();
        // Diagonal of the field block for Jacobi preconditioning and the
        // Tikhonov term removing the gauge kernel.
        let mut diag = vec![0.0f64; n];
        for p in &plist {
            for &s in &p.slots {
                diag[s] += p.w / h4;
            }
        }
        let mut dmax = 0.0f64;
        for (d, k) in diag.iter_mut().zip(&kappa) {
            *d += k;
            dmax = dmax.max(*d);
        }
        let mu = 1e-10 * dmax.max(1e-300);
        let minv: Vec<f64> = diag.iter().map(|d| 1.0 / (d + mu)).collect();
        let rhs: Vec<f64> = g.iter().map(|x| -x).collect();
        let apply = |x: &[f64], out: &mut [f64]| {
            // c_p = Σ signed x over the plaquette, then gather per edge.
            let c: Vec<f64> = plist
                .iter()
                .map(|p| x[p.slots[0]] + x[p.slots[1]] - x[p.slots[2]] - x[p.slots[3]])
                .collect();
            for (r, o) in out.iter_mut().enumerate() {
                *o = (kappa[r] + mu) * x[r];
            }
            for (p, &cp) in plist.iter().zip(&c) {
                let f = p.w * cp / h4;
                out[p.slots[0]] += f;
                out[p.slots[1]] += f;
                out[p.slots[2]] -= f;
                out[p.slots[3]] -= f;
            }
        };
        let (delta, _) = pcg(apply, &minv, &rhs, 1e-12, 1e-8, 80 * grid.n, false)?;
        // Damped update: require decrease of the energy or of the gradient.
        let mut lambda = 1.0f64;
        let mut accepted = false;
        for _bt in 0..30 {
            let trial: Vec<f64> =
                theta.iter().zip(&delta).map(|(t, d)| t + lambda * d).collect();
            let tb = curls(&trial);
            let te = energy_theta(&trial, &tb);
            let tg = grad(&trial, &tb);
            let tgi = inf(&tg);
            if te <= e_cur + 1e-12 * e_cur.abs().max(1.0) || tgi < 0.7 * gi {
                theta = trial;
                g = tg;
                gi = tgi;
                e_cur = te;
                accepted = true;
                break;
            }
            lambda *= 0.5;
        }
        if !accepted {
            return Err(Error::Nonlinear(
                "potential solve stalled: no descent direction accepted".into(),
            ));
        }
    }
    if gi > tol {
        return Err(Error::Nonlinear(format!(
            "potential solve did not reach tolerance (grad {gi} vs {tol})"
        )));
    }

    let mut out = LinkField::zeros(grid);
    for (r, &e) in grid.edges_x.iter().enumerate() {
        out.tx[e as usize] = theta[r];
    }
    for (r, &e) in grid.edges_y.iter().enumerate() {
        out.ty[e as usize] = theta[n_ex + r];
    }
    Ok(out)
}

/// A prescribed set of vortex points (all with degree +1).
#[derive(Clone, Debug, Default, serde::Serialize, serde::Deserialize)]
pub struct VortexConfig {
    pub points: Vec<Point2>,
    pub degrees: Vec<i32>,
}

impl VortexConfig {
    /// Configuration with unit degree at every point.
    #[must_use]
    pub fn unit(points: Vec<Point2>) -> Self {
        let degrees = vec![1; points.len()];
        Self { points, degrees }
    }

    pub fn validate(&self, grid: &Grid, epsilon: f64) -> Result<()> {
        if self.points.len() != self.degrees.len() {
            return Err(Error::InvalidParameter(format!(
                "{} points but {} degrees",
                self.points.len(),
                self.degrees.len()
            )));
        }
        if self.degrees.iter().any(|&d| d != 1) {
            return Err(Error::InvalidParameter(
                "test configurations require all degrees equal to +1".into(),
            ));
        }
        for (i, p) in self.points.iter().enumerate() {
            if !grid.spec.contains(*p) {
                return Err(Error::InvalidParameter(format!(
                    "vortex point {i} at ({}, {}) lies outside the domain",
                    p.x, p.y
                )));
            }
        }
        for i in 0..self.points.len() {
            for j in 0..i {
                let d = self.points[i].dist(self.points[j]);
                if d < 8.0 * epsilon {
                    return Err(Error::InvalidParameter(format!(
                        "vortex points {j} and {i} are {d:.3e} apart; need ≥ 8ε = {:.3e}",
                        8.0 * epsilon
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Builds the upper-bound test state for a vortex configuration: canonical
/// phase times a radial modulus vanishing linearly over scale `ε` at each
/// point, with the potential carrying the screened London field of the
/// configuration (`curl A = h_ex h₀ + g` with `g` the screened vortex
/// response).  The links come from the dual-grid stream of that curl, so
/// the boundary surface current stays off the active plaquettes.
pub fn build_test_configuration(
    config: &VortexConfig,
    london: &LondonData,
    u: &ScalarField,
    epsilon: f64,
    h_ex: f64,
) -> Result<GLState> {
    let grid = &london.xi0.grid;
    config.validate(grid, epsilon)?;
    if !u.same_grid_scalar(&london.xi0) {
        return Err(Error::InvalidParameter(
            "modulus profile and London data live on different grids".into(),
        ));
    }

    let nxm = grid.nx - 1;
    let avg4 = |f: &ScalarField, pk: usize| -> f64 {
        let (i, j) = (pk % nxm, pk / nxm);
        0.25 * (f.data[grid.idx(i, j)]
            + f.data[grid.idx(i + 1, j)]
            + f.data[grid.idx(i, j + 1)]
            + f.data[grid.idx(i + 1, j + 1)])
    };

    let mut b_target = vec![0.0f64; grid.plaq_w.len()];
    for &pk in &grid.plaqs {
        let pk = pk as usize;
        b_target[pk] = h_ex * (1.0 + avg4(&london.xi0, pk));
    }
    let mut v = if config.points.is_empty() {
        ComplexField::from_fn_all(grid, |_| Complex64::new(1.0, 0.0))
    } else {
        let zeta = solve_zeta(grid, &config.points, &config.degrees)?;
        for &pk in &grid.plaqs {
            let pk = pk as usize;
            b_target[pk] += avg4(&zeta.g, pk);
        }
        canonical_phase(grid, &config.points, &config.degrees)?
    };
    // Radial damping: |v| = Π min(1, |x - z_i|/ε).
    if !config.points.is_empty() {
        for &k in &grid.interior {
            let k = k as usize;
            let p = grid.pos_of(k);
            let mut m = 1.0f64;
            for z in &config.points {
                m *= (p.dist(*z) / epsilon).min(1.0);
            }
            v.data[k] *= m;
        }
    }
    let xi = dual_poisson(grid, &b_target)?;
    let a = LinkField::from_plaq_stream(grid, &xi);
    Ok(GLState { v, a, h_ex, u: u.clone(), epsilon })
}

/// Knobs of the alternating descent.  `dt_v` is the order-parameter step in
/// graph units (stable well below ~0.4); `dt_a` is the link step in raw
/// units (stability requires ~h²/4 because of the field term).
#[derive(Clone, Debug)]
pub struct MinimizeSchedule {
    pub max_sweeps: usize,
    pub tol_rel: f64,
    pub dt_v: f64,
    pub dt_a: f64,
    pub project_every: usize,
    pub trace_every: usize,
}

impl MinimizeSchedule {
    /// Defaults sized for the state's grid and coherence length.
    #[must_use]
    pub fn for_state(state: &GLState) -> Self {
        let h = state.v.grid.h;
        let eps = state.epsilon;
        // Keep the raw potential-term step below ~ε² even if ε < 2h.
        let dt_v = 0.15 * (eps * eps / (4.0 * h * h)).min(1.0);
        Self {
            max_sweeps: 20_000,
            tol_rel: 1e-9,
            dt_v,
            dt_a: 0.2 * h * h,
            project_every: 1000,
            trace_every: 50,
        }
    }
}

/// One row of the energy trace.
#[derive(Clone, Copy, Debug, serde::Serialize, serde::Deserialize)]
pub struct TracePoint {
    pub sweep: usize,
    pub energy: f64,
    pub min_abs_v: f64,
}

/// Result of a minimization run.
#[derive(Debug)]
pub struct MinimizeOutcome {
    pub state: GLState,
    pub energy: EnergyBreakdown,
    pub trace: Vec<TracePoint>,
    pub sweeps: usize,
    pub converged: bool,
    /// Step collapse: backtracking pushed a step below `10⁻⁶` of its initial
    /// value without finding descent.
    pub stalled: bool,
}

/// Alternating explicit descent with full-sweep backtracking; the energy is
/// non-increasing across accepted sweeps, the modulus is clipped to the unit
/// ball (a projection that never increases the energy), and the state is
/// periodically re-projected onto the Coulomb gauge.
pub fn minimize(state0: &GLState, schedule: &MinimizeSchedule) -> Result<MinimizeOutcome> {
    let grid = Arc::clone(&state0.v.grid);
    let (nx, _ny) = (grid.nx, grid.ny);
    let h2 = grid.h * grid.h;
    let eps2 = state0.epsilon * state0.epsilon;
    let u = &state0.u;

    // Flat views of the active structure, built once.
    let n_ex = grid.edges_x.len();
    let n_edges = n_ex + grid.edges_y.len();
    // Per active edge: tail node, head node, uu weight.
    let mut e_tail = Vec::with_capacity(n_edges);
    let mut e_head = Vec::with_capacity(n_edges);
    let mut e_uu = Vec::with_capacity(n_edges);
    for &e in &grid.edges_x {
        let e = e as usize;
        let (i, j) = (e % (nx - 1), e / (nx - 1));
        let t = j * nx + i;
        e_tail.push(t as u32);
        e_head.push((t + 1) as u32);
        e_uu.push(u.data[t] * u.data[t + 1]);
    }
    for &e in &grid.edges_y {
        let e = e as usize;
        e_tail.push(e as u32);
        e_head.push((e + nx) as u32);
        e_uu.push(u.data[e] * u.data[e + nx]);
    }
    // Per interior node: the slots of its ≤4 incident edges with the sign of
    // the node's role (+1 tail, -1 head).
    let mut rank_x = vec![-1i64; (nx - 1) * grid.ny];
    for (r, &e) in grid.edges_x.iter().enumerate() {
        rank_x[e as usize] = r as i64;
    }
    let mut rank_y = vec![-1i64; nx * (grid.ny - 1)];
    for (r, &e) in grid.edges_y.iter().enumerate() {
        rank_y[e as usize] = (n_ex + r) as i64;
    }
    // Plaquettes adjacent to each edge slot (+: B increases with θ).
    let mut plaq_plus = vec![-1i64; n_edges];
    let mut plaq_minus = vec![-1i64; n_edges];
    for (r, &e) in grid.edges_x.iter().enumerate() {
        let e = e as usize;
        let pk_up = e as i64;
        let pk_dn = e as i64 - (nx as i64 - 1);
        plaq_plus[r] = if pk_up < grid.plaq_w.len() as i64 && grid.plaq_w[pk_up as usize] > 0.0 {
            pk_up
        } else {
            -1
        };
        plaq_minus[r] = if pk_dn >= 0 && grid.plaq_w[pk_dn as usize] > 0.0 { pk_dn } else { -1 };
    }
    for (r, &e) in grid.edges_y.iter().enumerate() {
        let e = e as usize;
        let (i, j) = (e % nx, e / nx);
        let pk_w = if i > 0 { (j * (nx - 1) + i - 1) as i64 } else { -1 };
        let pk_e = (j * (nx - 1) + i) as i64;
        plaq_plus[n_ex + r] = if pk_w >= 0 && grid.plaq_w[pk_w as usize] > 0.0 { pk_w } else { -1 };
        plaq_minus[n_ex + r] =
            if pk_e < grid.plaq_w.len() as i64 && grid.plaq_w[pk_e as usize] > 0.0 {
                pk_e
            } else {
                -1
            };
    }

    // Working state: complex order parameter and link angles (flat slots).
    let mut v = state0.v.clone();
    let mut theta = vec![0.0f64; n_edges];
    for (r, &e) in grid.edges_x.iter().enumerate() {
        theta[r] = state0.a.tx[e as usize];
    }
    for (r, &e) in grid.edges_y.iter().enumerate() {
        theta[n_ex + r] = state0.a.ty[e as usize];
    }
    let mut cos_t: Vec<f64> = theta.iter().map(|t| t.cos()).collect();
    let mut sin_t: Vec<f64> = theta.iter().map(|t| t.sin()).collect();

    let kin_pot = |v: &ComplexField, cos_t: &[f64], sin_t: &[f64]| -> f64 {
        let mut kin = 0.0f64;
        for r in 0..n_edges {
            let vh = v.data[e_head[r] as usize];
            let vt = v.data[e_tail[r] as usize];
            let z = vh * Complex64::new(cos_t[r], -sin_t[r]) - vt;
            kin += e_uu[r] * z.norm_sqr();
        }
        let mut pot = 0.0f64;
        for &k in &grid.interior {
            let k = k as usize;
            let d = 1.0 - v.data[k].norm_sqr();
            pot += u.data[k].powi(4) * d * d;
        }
        0.5 * kin + pot * h2 / (4.0 * eps2)
    };
    let curls_into = |theta: &[f64], b: &mut [f64]| {
        for &pk in &grid.plaqs {
            let pk = pk as usize;
            let (i, j) = (pk % (nx - 1), pk / (nx - 1));
            let sb = rank_x[pk] as usize;
            let st = rank_x[pk + (nx - 1)] as usize;
            let sl = rank_y[j * nx + i] as usize;
            let sr = rank_y[j * nx + i + 1] as usize;
            b[pk] = (theta[sb] + theta[sr] - theta[st] - theta[sl]) / h2;
        }
    };
    let field_energy = |b: &[f64]| -> f64 {
        let mut f = 0.0f64;
        for &pk in &grid.plaqs {
            let pk = pk as usize;
            let d = b[pk] - state0.h_ex;
            f += grid.plaq_w[pk] * d * d;
        }
        0.5 * f
    };

    let mut b = vec![0.0f64; grid.plaq_w.len()];
    curls_into(&theta, &mut b);
    let mut b_trial = b.clone();
    let mut e_kp = kin_pot(&v, &cos_t, &sin_t);
    let mut e_f = field_energy(&b);
    let mut dt_v = schedule.dt_v;
    let mut dt_a = schedule.dt_a;
    let dt_v_floor = schedule.dt_v * 1e-6;
    let dt_a_floor = schedule.dt_a * 1e-6;

    let mut trace = Vec::new();
    let mut stalled = false;
    let mut converged = false;
    let mut flat_streak = 0usize;
    let mut sweeps_done = 0usize;

    let zero = Complex64::new(0.0, 0.0);
    let mut g_v: Vec<Complex64> = vec![zero; grid.nx * grid.ny];
    let mut g_t = vec![0.0f64; n_edges];
    // Trial buffers reused across sweeps (the hot path allocates nothing).
    let mut v_trial = v.clone();
    let mut theta_trial = theta.clone();
    let mut cos_trial = cos_t.clone();
    let mut sin_trial = sin_t.clone();

    for sweep in 0..schedule.max_sweeps {
        sweeps_done = sweep + 1;
        let e_before = e_kp + e_f;
        if sweep % schedule.trace_every == 0 {
            trace.push(TracePoint { sweep, energy: e_before, min_abs_v: v.min_abs() });
        }

        // ---- order-parameter sweep ----
        for g in g_v.iter_mut() {
            *g = zero;
        }
        for r in 0..n_edges {
            let t = e_tail[r] as usize;
            let hd = e_head[r] as usize;
            let ph = Complex64::new(cos_t[r], -sin_t[r]);
            let z = v.data[hd] * ph - v.data[t];
            g_v[t] -= e_uu[r] * z;
            g_v[hd] += e_uu[r] * (z * ph.conj());
        }
        for &k in &grid.interior {
            let k = k as usize;
            let u4 = u.data[k].powi(4);
            g_v[k] += (h2 / eps2) * u4 * (v.data[k].norm_sqr() - 1.0) * v.data[k];
        }
        loop {
            for &k in &grid.interior {
                let k = k as usize;
                let mut z = v.data[k] - dt_v * g_v[k];
                let m = z.norm();
                if m > 1.0 {
                    z /= m;
                }
                v_trial.data[k] = z;
            }
            let e_new = kin_pot(&v_trial, &cos_t, &sin_t);
            if e_new <= e_kp + 1e-13 * e_kp.abs().max(1.0) {
                std::mem::swap(&mut v, &mut v_trial);
                e_kp = e_new;
                dt_v = (dt_v * 1.05).min(3.0 * schedule.dt_v);
                break;
            }
            dt_v *= 0.5;
            if dt_v < dt_v_floor {
                stalled = true;
                break;
            }
        }
        if stalled {
            break;
        }

        // ---- link sweep ----
        for r in 0..n_edges {
            let vh = v.data[e_head[r] as usize];
            let vt = v.data[e_tail[r] as usize];
            let zp = vh * vt.conj();
            let im = zp.im * cos_t[r] - zp.re * sin_t[r];
            let mut acc = -e_uu[r] * im;
            if plaq_plus[r] >= 0 {
                let pk = plaq_plus[r] as usize;
                acc += grid.plaq_w[pk] * (b[pk] - state0.h_ex) / h2;
            }
            if plaq_minus[r] >= 0 {
                let pk = plaq_minus[r] as usize;
                acc -= grid.plaq_w[pk] * (b[pk] - state0.h_ex) / h2;
            }
            g_t[r] = acc;
        }
        loop {
            for r in 0..n_edges {
                let t = theta[r] - dt_a * g_t[r];
                theta_trial[r] = t;
                let (s, c) = t.sin_cos();
                cos_trial[r] = c;
                sin_trial[r] = s;
            }
            curls_into(&theta_trial, &mut b_trial);
            let e_kp_new = kin_pot(&v, &cos_trial, &sin_trial);
            let e_f_new = field_energy(&b_trial);
            if e_kp_new + e_f_new <= e_kp + e_f + 1e-13 * (e_kp + e_f).abs().max(1.0) {
                std::mem::swap(&mut theta, &mut theta_trial);
                std::mem::swap(&mut cos_t, &mut cos_trial);
                std::mem::swap(&mut sin_t, &mut sin_trial);
                std::mem::swap(&mut b, &mut b_trial);
                e_kp = e_kp_new;
                e_f = e_f_new;
                dt_a = (dt_a * 1.05).min(3.0 * schedule.dt_a);
                break;
            }
            dt_a *= 0.5;
            if dt_a < dt_a_floor {
                stalled = true;
                break;
            }
        }
        if stalled {
            break;
        }

        // ---- gauge hygiene ----
        if schedule.project_every > 0 && (sweep + 1) % schedule.project_every == 0 {
            let (state_p, _) = coulomb_project(&pack_state(
                state0, &grid, &v, &theta, n_ex,
            ))?;
            v = state_p.v;
            for (r, &e) in grid.edges_x.iter().enumerate() {
                theta[r] = state_p.a.tx[e as usize];
            }
            for (r, &e) in grid.edges_y.iter().enumerate() {
                theta[n_ex + r] = state_p.a.ty[e as usize];
            }
            for r in 0..n_edges {
                let (s, c) = theta[r].sin_cos();
                cos_t[r] = c;
                sin_t[r] = s;
            }
            curls_into(&theta, &mut b);
            e_kp = kin_pot(&v, &cos_t, &sin_t);
            e_f = field_energy(&b);
        }

        let e_after = e_kp + e_f;
        let drop = e_before - e_after;
        if drop <= schedule.tol_rel * e_after.abs().max(1.0) {
            flat_streak += 1;
            if flat_streak >= 10 {
                converged = true;
                break;
            }
        } else {
            flat_streak = 0;
        }
    }

    let state = pack_state(state0, &grid, &v, &theta, n_ex);
    let (state, _) = coulomb_project(&state)?;
    let energy = energy_full(&state);
    trace.push(TracePoint {
        sweep: sweeps_done,
        energy: energy.total,
        min_abs_v: state.v.min_abs(),
    });
    Ok(MinimizeOutcome { state, energy, trace, sweeps: sweeps_done, converged, stalled })
}

fn pack_state(
    proto: &GLState,
    grid: &Arc<Grid>,
    v: &ComplexField,
    theta: &[f64],
    n_ex: usize,
) -> GLState {
    let mut a = LinkField::zeros(grid);
    for (r, &e) in grid.edges_x.iter().enumerate() {
        a.tx[e as usize] = theta[r];
    }
    for (r, &e) in grid.edges_y.iter().enumerate() {
        a.ty[e as usize] = theta[n_ex + r];
    }
    GLState { v: v.clone(), a, h_ex: proto.h_ex, u: proto.u.clone(), epsilon: proto.epsilon }
}

/// Solves the dual-grid Dirichlet problem `Δξ = rhs` on plaquette centers
/// (`ξ = 0` outside the active plaquette set); used to recover the stream
/// function of a link field from its curl.
pub fn dual_poisson(grid: &Arc<Grid>, rhs: &[f64]) -> Result<Vec<f64>> {
    let nxm = grid.nx - 1;
    let nd = grid.plaqs.len();
    let mut rank = vec![-1i64; grid.plaq_w.len()];
    for (r, &pk) in grid.plaqs.iter().enumerate() {
        rank[pk as usize] = r as i64;
    }
    let h2 = grid.h * grid.h;
    let b: Vec<f64> = grid.plaqs.iter().map(|&pk| -rhs[pk as usize]).collect();
    let nbrs: Vec<[i64; 4]> = grid
        .plaqs
        .iter()
        .map(|&pk| {
            let pk = pk as usize;
            let (i, j) = (pk % nxm, pk / nxm);
            [
                if i > 0 { rank[pk - 1] } else { -1 },
                if i + 1 < nxm { rank[pk + 1] } else { -1 },
                if j > 0 { rank[pk - nxm] } else { -1 },
                if (pk + nxm) < rank.len() { rank[pk + nxm] } else { -1 },
            ]
        })
        .collect();
    let apply = |x: &[f64], out: &mut [f64]| {
        for r in 0..nd {
            let mut acc = 4.0 * x[r];
            for &nb in &nbrs[r] {
                if nb >= 0 {
                    acc -= x[nb as usize];
                }
            }
            out[r] = acc / h2;
        }
    };
    let minv = vec![h2 / 4.0; nd];
    let (x, _) = pcg(apply, &minv, &b, 1e-12, 1e-8, 60 * grid.n, false)?;
    let mut out = vec![0.0f64; grid.plaq_w.len()];
    for (r, &pk) in grid.plaqs.iter().enumerate() {
        out[pk as usize] = x[r];
    }
    Ok(out)
}

/// Energy-balance report: the state's excess over the vortex-free energy
/// versus the decomposed right-hand side built from the deviation stream
/// `ζ = ξ - h_ex ξ₀`.
#[derive(Clone, Copy, Debug, serde::Serialize, serde::Deserialize)]
pub struct DecompositionReport {
    /// `𝓕(v, A) - h_ex² J₀`.
    pub excess: f64,
    /// `F(v) + 2π h_ex Σ d_i ξ₀(a_i) + 2π Σ d_i ζ(a_i) + ½∫((Δζ)² + |∇ζ|²)`.
    pub rhs: f64,
    pub residual_abs: f64,
    /// `|excess - rhs| / max(|𝓕|, 1e-12)` — relative to the total energy.
    pub residual_rel: f64,
    pub total: f64,
}

/// Evaluates both sides of the energy decomposition around the London
/// field.  The identity is asymptotic; the report is informational and the
/// tolerance question belongs to the caller.
pub fn decomposition_check(
    state: &GLState,
    config: &VortexConfig,
    london: &LondonData,
) -> Result<DecompositionReport> {
    let grid = &state.v.grid;
    let nxm = grid.nx - 1;
    let breakdown = energy_full(state);
    let excess = breakdown.total - state.h_ex * state.h_ex * london.j0;

    // Stream of the state's links: Δξ = B on the dual grid, ξ = 0 outside.
    let b = state.a.curl();
    let xi = dual_poisson(grid, &b)?;
    // Dual-grid London stream: Δξ₀ = 1 + ξ₀ with the same Dirichlet
    // closure, so the reference carries no boundary kink and ζ measures
    // only the genuine deviation from the vortex-free response.
    let mut rhs0 = vec![0.0f64; grid.plaq_w.len()];
    for &pk in &grid.plaqs {
        let pk = pk as usize;
        let (i, j) = (pk % nxm, pk / nxm);
        let xi0_avg = 0.25
            * (london.xi0.data[grid.idx(i, j)]
                + london.xi0.data[grid.idx(i + 1, j)]
                + london.xi0.data[grid.idx(i, j + 1)]
                + london.xi0.data[grid.idx(i + 1, j + 1)]);
        rhs0[pk] = 1.0 + xi0_avg;
    }
    let xi0_dual = dual_poisson(grid, &rhs0)?;
    let mut zeta = vec![0.0f64; grid.plaq_w.len()];
    for &pk in &grid.plaqs {
        let pk = pk as usize;
        zeta[pk] = xi[pk] - state.h_ex * xi0_dual[pk];
    }

    // ½ Σ (dζ)² over dual edges (ζ = 0 outside active plaquettes) and
    // ½ Σ w (Δζ)², with the dual Laplacian evaluated discretely.
    let h2 = grid.h * grid.h;
    let mut grad_term = 0.0f64;
    let mut lap_term = 0.0f64;
    let active = |pk: usize| grid.plaq_w[pk] > 0.0;
    for &pk in &grid.plaqs {
        let pk = pk as usize;
        let i = pk % nxm;
        // Right and top dual edges (each internal edge counted once; edges
        // to inactive neighbors carry the ζ→0 jump).
        if i + 1 < nxm {
            let d = zeta[pk + 1] - zeta[pk];
            grad_term += d * d;
        } else {
            grad_term += zeta[pk] * zeta[pk];
        }
        if pk + nxm < grid.plaq_w.len() {
            let d = zeta[pk + nxm] - zeta[pk];
            grad_term += d * d;
        } else {
            grad_term += zeta[pk] * zeta[pk];
        }
        // Left/bottom jumps against inactive neighbors.
        if i == 0 || !active(pk - 1) {
            grad_term += zeta[pk] * zeta[pk];
        }
        if pk < nxm || !active(pk - nxm) {
            grad_term += zeta[pk] * zeta[pk];
        }
        let mut lap = -4.0 * zeta[pk];
        if i > 0 {
            lap += zeta[pk - 1];
        }
        if i + 1 < nxm {
            lap += zeta[pk + 1];
        }
        if pk >= nxm {
            lap += zeta[pk - nxm];
        }
        if pk + nxm < grid.plaq_w.len() {
            lap += zeta[pk + nxm];
        }
        lap /= h2;
        lap_term += grid.plaq_w[pk] * lap * lap;
    }
    grad_term *= 0.5;
    lap_term *= 0.5;

    // Gauge-free modulus energy of v.
    let f_v = crate::pinning::energy_f(&state.v, &state.u, state.epsilon);

    // Vortex coupling terms: 2π h_ex Σ d ξ₀(a) + 2π Σ d ζ(a).
    let mut coupling = 0.0f64;
    if !config.points.is_empty() {
        // ζ sampled back to nodes for bilinear evaluation.
        let mut zeta_node = ScalarField::zeros(grid);
        for &k in &grid.interior {
            let k = k as usize;
            let (i, j) = (k % grid.nx, k / grid.nx);
            let mut acc = 0.0;
            let mut cnt = 0.0;
            for (di, dj) in [(0i64, 0i64), (-1, 0), (0, -1), (-1, -1)] {
                let pi = i as i64 + di;
                let pj = j as i64 + dj;
                if pi >= 0 && pj >= 0 && (pi as usize) < nxm && (pj as usize) + 1 < grid.ny {
                    let pk = pj as usize * nxm + pi as usize;
                    if active(pk) {
                        acc += zeta[pk];
                        cnt += 1.0;
                    }
                }
            }
            zeta_node.data[k] = if cnt > 0.0 { acc / cnt } else { 0.0 };
        }
        for (p, &d) in config.points.iter().zip(&config.degrees) {
            coupling += 2.0 * PI * d as f64 * state.h_ex * london.xi0.bilinear(*p);
            coupling += 2.0 * PI * d as f64 * zeta_node.bilinear(*p);
        }
    }

    let rhs = f_v + coupling + grad_term + lap_term;
    let residual_abs = (excess - rhs).abs();
    let residual_rel = residual_abs / breakdown.total.abs().max(1e-12);
    Ok(DecompositionReport { excess, rhs, residual_abs, residual_rel, total: breakdown.total })
}

impl ScalarField {
    fn same_grid_scalar(&self, other: &ScalarField) -> bool {
        Arc::ptr_eq(&self.grid, &other.grid)
            || (self.grid.nx == other.grid.nx && self.grid.ny == other.grid.ny)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::DomainSpec;
    use crate::grid::build_grid;
    use crate::london::build_london;
    use crate::pinning::PinningField;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn bessel_i(nu: u32, x: f64) -> f64 {
        let mut sum = 0.0;
        for k in 0..40u32 {
            let mut t = (x / 2.0).powi((2 * k + nu) as i32);
            for m in 1..=k {
                t /= m as f64;
            }
            for m in 1..=(k + nu) {
                t /= m as f64;
            }
            sum += t;
        }
        sum
    }

    fn uniform_state(n: usize, h_ex: f64, epsilon: f64) -> (Arc<Grid>, GLState) {
        let grid = build_grid(&DomainSpec::disk(1.0), n).unwrap();
        let v = ComplexField::from_fn_all(&grid, |_| Complex64::new(1.0, 0.0));
        let u = PinningField::uniform(&grid, 1.0, epsilon).a;
        let a = LinkField::zeros(&grid);
        (Arc::clone(&grid), GLState { v, a, h_ex, u, epsilon })
    }

    fn smooth_chi(grid: &Arc<Grid>, seed: u64) -> ScalarField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut bumps = Vec::new();
        for _ in 0..4 {
            let cx: f64 = rng.random_range(-0.6..0.6);
            let cy: f64 = rng.random_range(-0.6..0.6);
            let amp: f64 = rng.random_range(-1.0..1.0);
            let w: f64 = rng.random_range(0.15..0.45);
            bumps.push((cx, cy, amp, w));
        }
        ScalarField::from_fn_all(grid, |p| {
            bumps
                .iter()
                .map(|&(cx, cy, a, w)| {
                    let d2 = (p.x - cx).powi(2) + (p.y - cy).powi(2);
                    a * (-d2 / (2.0 * w * w)).exp()
                })
                .sum()
        })
    }

    /// Gaussian bumps tight enough that the field is numerically zero near
    /// the rim of the unit disk.
    fn localized_stream(grid: &Arc<Grid>, seed: u64) -> ScalarField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut bumps = Vec::new();
        for _ in 0..3 {
            let cx: f64 = rng.random_range(-0.2..0.2);
            let cy: f64 = rng.random_range(-0.2..0.2);
            let amp: f64 = rng.random_range(-1.0..1.0);
            let w: f64 = rng.random_range(0.05..0.1);
            bumps.push((cx, cy, amp, w));
        }
        ScalarField::from_fn_all(grid, |p| {
            bumps
                .iter()
                .map(|&(cx, cy, a, w)| {
                    let d2 = (p.x - cx).powi(2) + (p.y - cy).powi(2);
                    a * (-d2 / (2.0 * w * w)).exp()
                })
                .sum()
        })
    }

    #[test]
    fn plug_in_state_reproduces_field_energy_area() {
        let (grid, state) = uniform_state(64, 2.5, 0.05);
        let e = energy_full(&state);
        assert_eq!(e.kinetic, 0.0);
        assert_eq!(e.potential, 0.0);
        let expect = 0.5 * 2.5 * 2.5 * grid.covered_area();
        assert!(
            (e.field - expect).abs() <= 1e-9 * expect,
            "field {} vs area formula {expect}",
            e.field
        );
        assert!((e.field - 0.5 * 2.5 * 2.5 * PI).abs() < 0.01 * e.field);
    }

    #[test]
    fn london_plug_in_matches_j0() {
        let grid = build_grid(&DomainSpec::disk(1.0), 256).unwrap();
        let london = build_london(&grid).unwrap();
        let u = PinningField::uniform(&grid, 1.0, 0.05).a;
        let state =
            build_test_configuration(&VortexConfig::default(), &london, &u, 0.05, 1.0).unwrap();
        let e = energy_full(&state);
        let i0 = bessel_i(0, 1.0);
        let i1 = bessel_i(1, 1.0);
        let j0_exact = 0.5 * PI * (1.0 - 2.0 * i1 / i0);
        assert!(
            (e.total - j0_exact).abs() < 0.01 * j0_exact,
            "𝓕 = {} vs J0 = {j0_exact}",
            e.total
        );
        assert_eq!(e.potential, 0.0);
    }

    #[test]
    fn gauge_transforms_leave_energy_unchanged() {
        let (grid, mut state) = uniform_state(64, 1.5, 0.08);
        // Non-trivial base state: damped modulus + some field.
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for &k in &grid.interior {
            let k = k as usize;
            let p = grid.pos_of(k);
            let m = 1.0 - 0.5 * (-(p.x * p.x + p.y * p.y) / 0.08).exp();
            let ph = 0.3 * p.x * p.y;
            state.v.data[k] = Complex64::from_polar(m, ph);
        }
        let psi = ScalarField::from_fn_all(&grid, |p| 0.4 * (p.x * p.x - 0.3 * p.y));
        state.a = LinkField::from_stream(&psi);
        let e0 = energy_full(&state).total;
        for t in 0..20 {
            let chi = smooth_chi(&grid, 100 + t + rng.random_range(0..1) as u64);
            let st = gauge_transform(&state, &chi);
            let e1 = energy_full(&st).total;
            assert!(
                (e1 - e0).abs() <= 1e-8 * e0.abs().max(1.0),
                "gauge transform {t} drifted energy: {e0} -> {e1}"
            );
            // Curl untouched to machine precision.
            let b0 = state.a.curl();
            let b1 = st.a.curl();
            let mut worst = 0.0f64;
            for &pk in &grid.plaqs {
                worst = worst.max((b0[pk as usize] - b1[pk as usize]).abs());
            }
            assert!(worst <= 1e-10 * state.h_ex.max(1.0), "curl drift {worst}");
        }
    }

    #[test]
    fn projection_kills_gradients_and_keeps_streams() {
        let (grid, mut state) = uniform_state(64, 1.0, 0.08);
        // Pure gradient links vanish after projection.
        let phi = smooth_chi(&grid, 3);
        state.a = LinkField::from_gradient(&phi);
        let (proj, _chi) = coulomb_project(&state).unwrap();
        assert!(
            proj.a.max_abs() <= 1e-6,
            "projected gradient links should vanish, max {}",
            proj.a.max_abs()
        );

        // Stream links supported away from the rim are already
        // divergence-free: unchanged.
        let psi = localized_stream(&grid, 4);
        state.a = LinkField::from_stream(&psi);
        let before = state.a.clone();
        let (proj, _) = coulomb_project(&state).unwrap();
        let mut worst = 0.0f64;
        for &e in &grid.edges_x {
            worst = worst.max((proj.a.tx[e as usize] - before.tx[e as usize]).abs());
        }
        for &e in &grid.edges_y {
            worst = worst.max((proj.a.ty[e as usize] - before.ty[e as usize]).abs());
        }
        assert!(worst <= 1e-8, "stream links moved by {worst}");

        // Random links: divergence killed, curl preserved.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        state.a = LinkField::zeros(&grid);
        for &e in &grid.edges_x {
            state.a.tx[e as usize] = rng.random_range(-0.3..0.3);
        }
        for &e in &grid.edges_y {
            state.a.ty[e as usize] = rng.random_range(-0.3..0.3);
        }
        let b0 = state.a.curl();
        let (proj, _) = coulomb_project(&state).unwrap();
        let div = proj.a.node_divergence();
        assert!(div.max_abs() <= 1e-8, "divergence after projection {}", div.max_abs());
        let b1 = proj.a.curl();
        let mut worst = 0.0f64;
        for &pk in &grid.plaqs {
            worst = worst.max((b0[pk as usize] - b1[pk as usize]).abs());
        }
        assert!(worst <= 1e-10, "projection changed curl by {worst}");
    }

    #[test]
    fn induced_field_oracles() {
        let (grid, state) = uniform_state(128, 1.0, 0.05);
        // v ≡ 1: Meissner screening; center field h_ex / I0(1).
        let a_v = solve_a_v(&state.v, &state.u, 1.0).unwrap();
        let b = a_v.curl();
        // Plaquette nearest the origin.
        let mut best = (f64::INFINITY, 0usize);
        for &pk in &grid.plaqs {
            let pk = pk as usize;
            let (i, j) = (pk % (grid.nx - 1), pk / (grid.nx - 1));
            let c = Point2::new(
                grid.origin.x + (i as f64 + 0.5) * grid.h,
                grid.origin.y + (j as f64 + 0.5) * grid.h,
            );
            let d = c.norm();
            if d < best.0 {
                best = (d, pk);
            }
        }
        let center_field = b[best.1];
        let expect = 1.0 / bessel_i(0, 1.0);
        assert!(
            (center_field - expect).abs() < 2e-3,
            "center field {center_field} vs Meissner {expect}"
        );

        // Optimality against the London plug-in for v ≡ 1.
        let london = build_london(&grid).unwrap();
        let plug =
            build_test_configuration(&VortexConfig::default(), &london, &state.u, 0.05, 1.0)
                .unwrap();
        let mut st_opt = state.clone();
        st_opt.a = a_v;
        let e_opt = energy_full(&st_opt).total;
        let e_plug = energy_full(&plug).total;
        assert!(
            e_opt <= e_plug + 1e-10 * e_plug.abs(),
            "induced field not optimal: {e_opt} vs plug-in {e_plug}"
        );

        // v ≡ 0: no screening current, curl ≡ h_ex.
        let v0 = ComplexField::zeros(&grid);
        let a_0 = solve_a_v(&v0, &state.u, 1.0).unwrap();
        let b0 = a_0.curl();
        let mut worst = 0.0f64;
        for &pk in &grid.plaqs {
            worst = worst.max((b0[pk as usize] - 1.0).abs());
        }
        assert!(worst <= 1e-6, "unscreened curl off by {worst}");

        // Optimality for a handful of structured order parameters.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for t in 0..5 {
            let m0: f64 = rng.random_range(0.4..1.0);
            let vv = ComplexField::from_fn_all(&grid, |p| {
                let m = m0 * (1.0 - 0.6 * (-(p.x * p.x + p.y * p.y) / 0.15).exp());
                Complex64::from_polar(m, 0.5 * t as f64 * p.x)
            });
            let a_vv = solve_a_v(&vv, &state.u, 1.0).unwrap();
            let mut s1 = state.clone();
            s1.v = vv.clone();
            s1.a = a_vv;
            let mut s2 = state.clone();
            s2.v = vv;
            s2.a = plug.a.clone();
            let e1 = energy_full(&s1).total;
            let e2 = energy_full(&s2).total;
            assert!(e1 <= e2 + 1e-9 * e2.abs().max(1.0), "case {t}: {e1} > {e2}");
        }
    }

    #[test]
    fn test_configuration_has_prescribed_winding() {
        let grid = build_grid(&DomainSpec::disk(1.0), 96).unwrap();
        let london = build_london(&grid).unwrap();
        let u = PinningField::uniform(&grid, 1.0, 0.03).a;
        let config = VortexConfig::unit(vec![Point2::new(0.0, 0.0)]);
        let state = build_test_configuration(&config, &london, &u, 0.03, 5.0).unwrap();
        // Winding of v on a square loop of half-width ~0.3.
        let w = square_loop_winding(&state.v, Point2::new(0.0, 0.0), 0.3);
        assert_eq!(w, 1, "test configuration must wind once around its vortex");

        // Separation guard.
        let too_close = VortexConfig::unit(vec![
            Point2::new(0.0, 0.0),
            Point2::new(0.1, 0.0),
        ]);
        let err = build_test_configuration(&too_close, &london, &u, 0.03, 5.0).unwrap_err();
        assert!(err.is_validation());
    }

    fn square_loop_winding(v: &ComplexField, center: Point2, half: f64) -> i32 {
        let grid = &v.grid;
        let i0 = ((center.x - half - grid.origin.x) / grid.h).round() as usize;
        let i1 = ((center.x + half - grid.origin.x) / grid.h).round() as usize;
        let j0 = ((center.y - half - grid.origin.y) / grid.h).round() as usize;
        let j1 = ((center.y + half - grid.origin.y) / grid.h).round() as usize;
        let mut loop_nodes = Vec::new();
        for i in i0..=i1 {
            loop_nodes.push(grid.idx(i, j0));
        }
        for j in j0 + 1..=j1 {
            loop_nodes.push(grid.idx(i1, j));
        }
        for i in (i0..i1).rev() {
            loop_nodes.push(grid.idx(i, j1));
        }
        for j in (j0 + 1..j1).rev() {
            loop_nodes.push(grid.idx(i0, j));
        }
        loop_nodes.push(grid.idx(i0, j0));
        let mut total = 0.0;
        for w in loop_nodes.windows(2) {
            let a = v.data[w[0]];
            let b = v.data[w[1]];
            total += (b * a.conj()).arg();
        }
        (total / (2.0 * PI)).round() as i32
    }

    #[test]
    fn minimizer_below_entry_field_is_vortex_free() {
        let (grid, mut state) = uniform_state(64, 2.0, 0.08);
        let a_v = solve_a_v(&state.v, &state.u, state.h_ex).unwrap();
        state.a = a_v;
        let mut sched = MinimizeSchedule::for_state(&state);
        sched.max_sweeps = 4000;
        let out = minimize(&state, &sched).unwrap();
        assert!(!out.stalled, "minimization stalled");
        // Energy trace monotone non-increasing.
        for w in out.trace.windows(2) {
            assert!(
                w[1].energy <= w[0].energy + 1e-9 * w[0].energy.abs().max(1.0),
                "energy rose between sweeps {} and {}",
                w[0].sweep,
                w[1].sweep
            );
        }
        assert!(out.state.v.min_abs() >= 0.9, "min |v| = {}", out.state.v.min_abs());
        assert!(out.state.v.max_abs() <= 1.0 + 1e-6, "max |v| = {}", out.state.v.max_abs());

        // Seeding independence: smooth random starts land in the same
        // vortex-free well below the entry field.
        for seed in 0..5 {
            let dip = localized_stream(&grid, 40 + seed);
            let phase = smooth_chi(&grid, 80 + seed);
            let mut st = state.clone();
            for &k in &grid.interior {
                let k = k as usize;
                let m = (1.0 - 0.6 * dip.data[k].abs()).clamp(0.2, 1.0);
                st.v.data[k] = Complex64::from_polar(m, 0.7 * phase.data[k]);
            }
            let mut s2 = sched.clone();
            s2.max_sweeps = 4000;
            let o = minimize(&st, &s2).unwrap();
            assert!(
                o.state.v.min_abs() >= 0.9,
                "seed {seed}: min |v| = {}",
                o.state.v.min_abs()
            );
        }
    }

    #[test]
    fn seeded_vortex_survives_above_entry_field() {
        let grid = build_grid(&DomainSpec::disk(1.0), 96).unwrap();
        let london = build_london(&grid).unwrap();
        let epsilon = 0.045;
        let u = PinningField::uniform(&grid, 1.0, epsilon).a;
        // Entry-field analog for the unpinned disk; run 1.5× above it.
        let gamma = crate::critical::bbh_gamma();
        let h0 = (1.0 / epsilon).ln() / (2.0 * london.norm_inf)
            + gamma / (2.0 * PI * london.norm_inf);
        let h_ex = 1.5 * h0;
        let config = VortexConfig::unit(vec![Point2::new(0.0, 0.0)]);
        let state = build_test_configuration(&config, &london, &u, epsilon, h_ex).unwrap();
        let mut sched = MinimizeSchedule::for_state(&state);
        sched.max_sweeps = 3000;
        let out = minimize(&state, &sched).unwrap();
        assert!(
            out.state.v.min_abs() < 0.5,
            "vortex evaporated: min |v| = {}",
            out.state.v.min_abs()
        );
        let w = square_loop_winding(&out.state.v, Point2::new(0.0, 0.0), 0.45);
        assert!(w >= 1, "winding lost: {w}");
    }

    #[test]
    fn decomposition_trivial_for_london_plug_in() {
        let grid = build_grid(&DomainSpec::disk(1.0), 128).unwrap();
        let london = build_london(&grid).unwrap();
        let u = PinningField::uniform(&grid, 1.0, 0.05).a;
        let state =
            build_test_configuration(&VortexConfig::default(), &london, &u, 0.05, 3.0).unwrap();
        let rep = decomposition_check(&state, &VortexConfig::default(), &london).unwrap();
        // ζ is discretization-level noise; both sides are ≈ 0 relative to 𝓕.
        assert!(
            rep.residual_rel <= 0.02,
            "plug-in decomposition residual {} (excess {}, rhs {})",
            rep.residual_rel,
            rep.excess,
            rep.rhs
        );
    }
}
