//! Critical-field ladder and vortex-number predictions.
//!
//! As the applied field `h_ex` grows past the first critical field, vortices
//! enter one by one, filling the wells of the London potential.  Up to
//! `N₀ = #wells` vortices the competition is governed by the renormalized
//! interaction `W̄_d` (minimum over balanced arrangements of `d` vortices on
//! the wells); past `N₀` the wells start holding clusters and two slowly
//! varying corrections `ℒ₁, ℒ₂` of the total energy take over.
//!
//! The module assembles, from the London data and the renormalized
//! energies:
//! - the arrangement set `Λ_d` (occupation numbers differing by at most 1),
//! - the quadratic interaction forms that make `W̄_d` cheap to evaluate,
//! - the ladder of entry fields `K⁽ᴵ⁾` (hull slopes of `d ↦ W̄_d`),
//! - the cluster-regime thresholds `K⁽ᴵᴵ⁾` with their log-correction
//!   ambiguity windows,
//! - the leading-order entry field `H⁰_c1` including the core constant of
//!   the free vortex profile (computed by shooting),
//! - and `predict`, mapping an applied field to the expected vortex count.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, OnceLock};

use crate::domain::Point2;
use crate::london::LondonData;
use crate::renorm::mesoscopic::minimize_w_meso;
use crate::renorm::solve_regular_part;
use crate::{Error, Grid, Result};

/// All occupation vectors of `d` vortices on `n0` wells whose entries are
/// `⌊d/n0⌋` or `⌈d/n0⌉` and sum to `d`.
#[must_use]
pub fn lambda_d_set(n0: usize, d: usize) -> Vec<Vec<u32>> {
    assert!(n0 >= 1, "need at least one well");
    let q = (d / n0) as u32;
    let r = d % n0;
    if r == 0 {
        return vec![vec![q; n0]];
    }
    // Choose which r wells carry the extra vortex.
    let mut out = Vec::new();
    let mut pick: Vec<usize> = (0..r).collect();
    loop {
        let mut v = vec![q; n0];
        for &i in &pick {
            v[i] += 1;
        }
        out.push(v);
        // Next combination in lexicographic order.
        let mut i = r;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if pick[i] != i + n0 - r {
                break;
            }
        }
        if pick[i] == i + n0 - r {
            return out;
        }
        pick[i] += 1;
        for j in i + 1..r {
            pick[j] = pick[j - 1] + 1;
        }
    }
}

/// `ℒ₁(d) = (π/2)(Σ D_k² - d)`, identical for every arrangement in `Λ_d`.
#[must_use]
pub fn l1_coefficient(n0: usize, d: usize) -> f64 {
    let q = d / n0;
    let r = d % n0;
    let sum_sq = (r * (q + 1) * (q + 1) + (n0 - r) * q * q) as f64;
    0.5 * PI * (sum_sq - d as f64)
}

/// `Σ_k (D_k - D_k²) ln D_k` for the balanced arrangement — the cluster
/// self-interaction correction entering `ℒ₂`.
#[must_use]
pub fn balanced_log_correction(n0: usize, d: usize) -> f64 {
    let q = d / n0;
    let r = d % n0;
    let term = |dk: usize| -> f64 {
        if dk <= 1 {
            0.0
        } else {
            ((dk as f64) - (dk * dk) as f64) * (dk as f64).ln()
        }
    };
    r as f64 * term(q + 1) + (n0 - r) as f64 * term(q)
}

/// Pairwise interaction data of the wells: everything needed to evaluate
/// `W̄_d` for any `d` by pure algebra.
#[derive(Clone, Debug)]
pub struct WellSystem {
    pub points: Vec<Point2>,
    pub hessians: Vec<[[f64; 2]; 2]>,
    /// Symmetric `n0 × n0` form: `Σ_{jk} D_j D_k q[j][k]` is the macroscopic
    /// plus finite-size interaction of the occupation vector `D`.
    pub quad: Vec<Vec<f64>>,
}

/// Builds the well interaction forms from `n0` single-well solves each of
/// the regular part and of the source response.
pub fn build_well_system(grid: &Arc<Grid>, london: &LondonData) -> Result<WellSystem> {
    let n0 = london.minima.len();
    if n0 == 0 {
        return Err(Error::Degenerate("no wells in the London potential".into()));
    }
    let points: Vec<Point2> = london.minima.iter().map(|m| m.pos).collect();
    let hessians: Vec<[[f64; 2]; 2]> = london.minima.iter().map(|m| m.hessian).collect();

    let mut quad = vec![vec![0.0; n0]; n0];
    for k in 0..n0 {
        // Macroscopic part: regular kernel of well k sampled at the wells.
        let r_k = solve_regular_part(grid, &points[k..=k], &[1])?;
        // Finite-size part: two-stage source response of well k.
        let z_k = crate::london::solve_zeta(grid, &points[k..=k], &[1])?;
        for j in 0..n0 {
            let mut m_jk = -PI * r_k.bilinear(points[j]);
            if j != k {
                m_jk -= PI * points[j].dist(points[k]).ln();
            }
            let g_jk = PI * z_k.zeta.bilinear(points[j]);
            quad[j][k] = m_jk + g_jk;
        }
    }
    // Symmetrize: the continuum kernels are symmetric; discretization noise
    // is split evenly.
    for j in 0..n0 {
        for k in 0..j {
            let avg = 0.5 * (quad[j][k] + quad[k][j]);
            quad[j][k] = avg;
            quad[k][j] = avg;
        }
    }
    Ok(WellSystem { points, hessians, quad })
}

impl WellSystem {
    #[must_use]
    pub fn n0(&self) -> usize {
        self.points.len()
    }

    /// `Σ_{jk} D_j D_k quad[j][k]`.
    #[must_use]
    pub fn interaction(&self, dvec: &[u32]) -> f64 {
        let mut s = 0.0;
        for j in 0..self.points.len() {
            for k in 0..self.points.len() {
                s += (dvec[j] * dvec[k]) as f64 * self.quad[j][k];
            }
        }
        s
    }
}

/// Everything `predict` needs: the per-count coefficients of
/// `E(d, h) = h² J₀ + d M_Ω (H⁰_c1 - h) + ℒ₁(d) ln h + ℒ₂(d)`.
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct EnergyCoefficients {
    pub n0: usize,
    pub j0: f64,
    pub m_omega: f64,
    pub h0c1: f64,
    /// `W̄_d` for `d = 0..=dmax`.
    pub wbar: Vec<f64>,
    pub l1: Vec<f64>,
    pub l2: Vec<f64>,
}

/// Per-well cluster energies `C(k, q)` for `2 ≤ q ≤ qmax`: the minimized
/// mesoscopic energy of `q` vortices in well `k`.  Entries for `q ≤ 1`
/// vanish and are omitted.  Deterministic: each minimization is seeded from
/// the well index alone.
pub fn build_cluster_table(
    ws: &WellSystem,
    qmax: u32,
) -> Result<HashMap<(usize, u32), f64>> {
    let mut cluster = HashMap::new();
    for k in 0..ws.n0() {
        for q in 2..=qmax {
            let (_, c) = minimize_w_meso(&ws.hessians[k], q as usize, 0xC0FFEE + k as u64)?;
            cluster.insert((k, q), c);
        }
    }
    Ok(cluster)
}

/// Minimal interaction over arrangements, with the argmin set (ties kept
/// within a relative `1e-9`).
#[must_use]
pub fn wbar_of(ws: &WellSystem, cluster: &HashMap<(usize, u32), f64>, d: usize) -> (f64, Vec<Vec<u32>>) {
    let arrangements = lambda_d_set(ws.n0(), d);
    let mut vals: Vec<f64> = Vec::with_capacity(arrangements.len());
    for a in &arrangements {
        let mut v = ws.interaction(a);
        for (k, &dk) in a.iter().enumerate() {
            if dk >= 2 {
                v += cluster[&(k, dk)];
            }
        }
        vals.push(v);
    }
    let best = vals.iter().copied().fold(f64::INFINITY, f64::min);
    let tol = 1e-9 * best.abs().max(1.0);
    let argmin: Vec<Vec<u32>> = arrangements
        .into_iter()
        .zip(&vals)
        .filter(|(_, &v)| v <= best + tol)
        .map(|(a, _)| a)
        .collect();
    (best, argmin)
}

/// Precomputes cluster constants `C(k, D_k)` for all occupations needed up
/// to `dmax`, then assembles the energy coefficient table.
pub fn build_energy_coefficients(
    ws: &WellSystem,
    j0: f64,
    m_omega: f64,
    h0c1: f64,
    dmax: usize,
) -> Result<EnergyCoefficients> {
    let n0 = ws.n0();
    let qmax = dmax.div_ceil(n0) as u32;
    let cluster = build_cluster_table(ws, qmax)?;
    let mut wbar = Vec::with_capacity(dmax + 1);
    for d in 0..=dmax {
        wbar.push(wbar_of(ws, &cluster, d).0);
    }
    Ok(assemble_coefficients(n0, j0, m_omega, h0c1, wbar))
}

/// Assembles `ℒ₁, ℒ₂` from a `W̄` table (index `d = 0..`); mostly useful for
/// tests with synthetic tables.
#[must_use]
pub fn assemble_coefficients(
    n0: usize,
    j0: f64,
    m_omega: f64,
    h0c1: f64,
    wbar: Vec<f64>,
) -> EnergyCoefficients {
    let l1: Vec<f64> = (0..wbar.len()).map(|d| l1_coefficient(n0, d)).collect();
    let l2: Vec<f64> = wbar
        .iter()
        .enumerate()
        .map(|(d, &w)| w + 0.5 * PI * balanced_log_correction(n0, d))
        .collect();
    EnergyCoefficients { n0, j0, m_omega, h0c1, wbar, l1, l2 }
}

/// `E(d, h_ex)`: the predicted minimal energy with exactly `d` vortices.
#[must_use]
pub fn predicted_energy(c: &EnergyCoefficients, d: usize, hex: f64) -> f64 {
    hex * hex * c.j0 + d as f64 * c.m_omega * (c.h0c1 - hex)
        + c.l1[d] * hex.ln()
        + c.l2[d]
}

/// The entry ladder: `d*_0 = 0 < d*_1 < … = N₀` with strictly increasing
/// hull slopes `𝒦*`, plus the derived fields.
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct Ladder {
    pub dstar: Vec<usize>,
    pub kstar: Vec<f64>,
    /// `K⁽ᴵ⁾_k = H⁰_c1 + 𝒦*_k / M_Ω`; `K⁽ᴵ⁾_1` is the first critical field.
    pub ki: Vec<f64>,
    /// Cluster-regime thresholds `K⁽ᴵᴵ⁾_l` for `d = N₀+l-1 → N₀+l`.  The
    /// list ends at the first crossing whose self-consistent field no longer
    /// exists: past that point the per-well clusters are too large for the
    /// expansion behind the thresholds, so the ladder cannot be continued
    /// honestly however deep the coefficient table is.
    pub kii: Vec<f64>,
    /// Self-consistent crossing fields matching `kii` (the other end of the
    /// log-correction ambiguity window).
    pub hstar: Vec<f64>,
}

impl Ladder {
    /// The first critical field.
    #[must_use]
    pub fn hc1(&self) -> f64 {
        self.ki[0]
    }
}

/// Builds the ladder from the coefficient table.
///
/// The `d ≤ N₀` part takes repeated minima of difference quotients of `W̄`
/// (equivalently: the lower convex hull of `d ↦ W̄_d`); ties resolve to the
/// largest jump.  The `d > N₀` part solves the crossing equation
/// `h = H⁰_c1 + Δ⁽¹⁾_d ln h + Δ⁽²⁾_d` both anchored at `ln H⁰_c1` (the
/// `K⁽ᴵᴵ⁾` convention) and self-consistently (`h*`).
///
/// The crossing map `f(h) = H⁰_c1 + Δ⁽¹⁾ ln h + Δ⁽²⁾` is increasing and
/// concave, so a stable fixed point exists iff `f` clears the diagonal at
/// its contraction edge `h = Δ⁽¹⁾`, and iterating from any point above that
/// edge converges to it.  Once the fixed point disappears (large clusters:
/// `Δ⁽¹⁾ ∝ d` has caught up with the crossing field itself) the expansion
/// behind the thresholds has broken down, and the `kii`/`hstar` lists are
/// truncated there instead of being filled with spurious values.
pub fn build_ladder(c: &EnergyCoefficients) -> Result<Ladder> {
    let n0 = c.n0;
    if c.wbar.len() < n0 + 1 {
        return Err(Error::InvalidParameter(format!(
            "need W̄ up to d = N₀ = {n0}, have {}",
            c.wbar.len() - 1
        )));
    }
    let mut dstar = vec![0usize];
    let mut kstar = Vec::new();
    while *dstar.last().unwrap() < n0 {
        let d0 = *dstar.last().unwrap();
        let mut best = c.wbar[d0 + 1] - c.wbar[d0];
        let mut best_d = d0 + 1;
        for d in d0 + 2..=n0 {
            let slope = (c.wbar[d] - c.wbar[d0]) / (d - d0) as f64;
            if slope < best - 1e-12 * best.abs().max(1.0) {
                best = slope;
                best_d = d;
            } else if (slope - best).abs() <= 1e-12 * best.abs().max(1.0) {
                best_d = d; // ties go to the largest jump
            }
        }
        dstar.push(best_d);
        kstar.push(best);
    }
    for w in kstar.windows(2) {
        if !(w[1] > w[0]) {
            return Err(Error::Degenerate(format!(
                "ladder slopes must increase strictly ({} then {})",
                w[0], w[1]
            )));
        }
    }
    let ki: Vec<f64> = kstar.iter().map(|k| c.h0c1 + k / c.m_omega).collect();

    let extra = c.wbar.len() - 1 - n0;
    let mut kii = Vec::with_capacity(extra);
    let mut hstar = Vec::with_capacity(extra);
    for l in 1..=extra {
        let d = n0 + l - 1;
        let d1 = (c.l1[d + 1] - c.l1[d]) / c.m_omega;
        let d2 = (c.l2[d + 1] - c.l2[d]) / c.m_omega;
        let anchored = c.h0c1 + d1 * c.h0c1.ln() + d2;
        let f = |h: f64| c.h0c1 + d1 * h.ln() + d2;
        // The anchored estimate lies in the attraction basin whenever the
        // stable fixed point exists; iterate, then polish with Newton on
        // `h - f(h)` (convex, so Newton is monotone near the root).
        let floor = 1.0 + 1e-9;
        let mut h = anchored.max(c.h0c1).max(d1).max(floor);
        for _ in 0..300 {
            let next = f(h).max(floor);
            let done = (next - h).abs() <= 1e-13 * h;
            h = next;
            if done {
                break;
            }
        }
        for _ in 0..30 {
            let slope = 1.0 - d1 / h;
            if slope <= 1e-6 {
                break;
            }
            let next = (h - (h - f(h)) / slope).max(floor);
            if !next.is_finite() {
                break;
            }
            let done = (next - h).abs() <= 1e-14 * h;
            h = next;
            if done {
                break;
            }
        }
        let exists = h.is_finite()
            && anchored.is_finite()
            && h > d1 * (1.0 + 1e-6)
            && (h - f(h)).abs() <= 1e-9 * h.abs().max(1.0);
        if !exists {
            break;
        }
        kii.push(anchored);
        hstar.push(h);
    }
    Ok(Ladder { dstar, kstar, ki, kii, hstar })
}

/// Outcome of a vortex-count prediction at a given applied field.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Prediction {
    /// The energy minimizer has exactly `d` vortices.
    Definite { d: usize },
    /// The field sits inside a crossing window; both counts are admissible
    /// at the resolution of the expansion.
    Ambiguous { d_lo: usize, d_hi: usize },
}

/// Predicts the optimal vortex count at applied field `hex`.
///
/// Below the first crossing the answer is `0`; each `K⁽ᴵ⁾` crossing jumps
/// to the next ladder rung; each `K⁽ᴵᴵ⁾` crossing adds one vortex, with the
/// interval between the anchored and self-consistent crossing fields
/// reported as ambiguous.  Exact crossings (ties) are ambiguous too, and
/// overlapping windows — common when the `ln h` drift between consecutive
/// crossings exceeds their spacing — merge into one wider ambiguity range.
/// Past the last window the count stays at the final rung: either the
/// coefficient table is exhausted (callers can extend it) or the ladder was
/// truncated at its asymptotic envelope and no deeper table can help.
pub fn predict(c: &EnergyCoefficients, ladder: &Ladder, hex: f64) -> Result<Prediction> {
    if !(hex.is_finite() && hex > 0.0) {
        return Err(Error::InvalidParameter(format!("applied field {hex} must be positive")));
    }
    // Crossing windows in increasing-count order: (lo, hi, d_before, d_after).
    let mut windows: Vec<(f64, f64, usize, usize)> = Vec::new();
    let pad = |x: f64| 1e-9 * x.abs().max(1.0);
    for (k, &f) in ladder.ki.iter().enumerate() {
        windows.push((f - pad(f), f + pad(f), ladder.dstar[k], ladder.dstar[k + 1]));
    }
    for (l, (&a, &b)) in ladder.kii.iter().zip(&ladder.hstar).enumerate() {
        let (lo, hi) = (a.min(b), a.max(b));
        windows.push((lo - pad(lo), hi + pad(hi), c.n0 + l, c.n0 + l + 1));
    }
    for w in &windows {
        if !(w.0.is_finite() && w.1.is_finite()) {
            return Err(Error::Degenerate("non-finite crossing field".into()));
        }
    }
    // Merge overlapping windows until consecutive ones are disjoint.
    loop {
        let mut merged: Vec<(f64, f64, usize, usize)> = Vec::with_capacity(windows.len());
        let mut changed = false;
        for w in windows {
            match merged.last_mut() {
                Some(prev) if w.0 <= prev.1 => {
                    prev.1 = prev.1.max(w.1);
                    prev.0 = prev.0.min(w.0);
                    prev.3 = w.3;
                    changed = true;
                }
                _ => merged.push(w),
            }
        }
        windows = merged;
        if !changed {
            break;
        }
    }
    let mut d = 0usize;
    for &(lo, hi, d_before, d_after) in &windows {
        if hex < lo {
            return Ok(Prediction::Definite { d });
        }
        if hex <= hi {
            return Ok(Prediction::Ambiguous { d_lo: d_before.min(d), d_hi: d_after });
        }
        d = d_after;
    }
    Ok(Prediction::Definite { d })
}

/// Leading-order first critical field
/// `H⁰_c1 = (b² |ln ε| + (1-b²) |ln λδ|) / (2‖ξ₀‖_∞) + γ̃`.
pub fn h0_c1(
    b: f64,
    epsilon: f64,
    lambda: f64,
    delta: f64,
    norm_inf: f64,
    gamma_tilde: f64,
) -> Result<f64> {
    for (name, v) in [("b", b), ("lambda", lambda), ("delta", delta)] {
        if !(v > 0.0 && v <= 1.0) {
            return Err(Error::InvalidParameter(format!("{name} = {v} outside (0, 1]")));
        }
    }
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::InvalidParameter(format!("epsilon = {epsilon} outside (0, 1)")));
    }
    if !(norm_inf > 0.0) {
        return Err(Error::InvalidParameter("potential depth must be positive".into()));
    }
    let core = b * b * epsilon.ln().abs() + (1.0 - b * b) * (lambda * delta).ln().abs();
    Ok(core / (2.0 * norm_inf) + gamma_tilde)
}

/// `γ̃ = (min_ω W_micro + b² (γ + π ln b)) / (2π ‖ξ₀‖_∞)`.
#[must_use]
pub fn gamma_tilde(w_micro_min: f64, b: f64, gamma: f64, norm_inf: f64) -> f64 {
    (w_micro_min + b * b * (gamma + PI * b.ln())) / (2.0 * PI * norm_inf)
}

/// Energy of the free radial vortex profile inside radius `r`, minus
/// `π ln r`: converges to the core constant `γ` as `r → ∞`.
#[must_use]
pub fn bbh_gamma_at(r: f64) -> f64 {
    let t = shooting_profile();
    t.energy_inner + PI * (tail_integral(r) - tail_integral(t.r_match)) - PI * r.ln()
}

/// The core constant `γ` of the free vortex (limit of [`bbh_gamma_at`]).
#[must_use]
pub fn bbh_gamma() -> f64 {
    let t = shooting_profile();
    t.energy_inner - PI * tail_integral(t.r_match)
}

/// Antiderivative of the asymptotic energy density: with
/// `f = 1 - 1/(2r²) - 9/(8r⁴) - 161/(16r⁶)` the density is
/// `r(f'² + f²/r² + (1-f²)²/2) = 1/r - 1/(2r³) + 1/r⁵ + 11/r⁷ + O(r⁻⁹)`.
fn tail_integral(x: f64) -> f64 {
    x.ln() + 1.0 / (4.0 * x * x) - 1.0 / (4.0 * x.powi(4)) + 11.0 / (6.0 * x.powi(6))
}

struct VortexProfile {
    r_match: f64,
    /// `π ∫₀^{r_match} (f'² + f²/r² + (1-f²)²/2) r dr`.
    energy_inner: f64,
}

static PROFILE: OnceLock<VortexProfile> = OnceLock::new();

fn shooting_profile() -> &'static VortexProfile {
    PROFILE.get_or_init(|| {
        // f'' + f'/r - f/r² + f(1-f²) = 0, f(0) = 0, f(∞) = 1; shoot on the
        // initial slope. The deviation from the connecting orbit grows like
        // e^{√2 r}, so bisection against an overshoot horizon converges to
        // the slope whose profile peels off exactly at the horizon. Keeping
        // the energy handoff to the asymptotic series well inside the
        // horizon leaves the integrated profile clean.
        let horizon = 14.0f64;
        let r_match = 10.0f64;
        let dr = 5e-4f64;
        let steps = (horizon / dr).round() as usize;
        let match_step = (r_match / dr).round() as usize;
        // Returns +1 if f crosses above 1 before the horizon, otherwise 0;
        // energy is accumulated only up to r_match.
        let run = |a: f64| -> (i32, f64) {
            let mut r = 1e-8;
            let mut f = a * r;
            let mut fp = a;
            let mut energy = 0.0;
            let dens = |r: f64, f: f64, fp: f64| -> f64 {
                r * (fp * fp + (f / r) * (f / r) + 0.5 * (1.0 - f * f).powi(2))
            };
            let mut d_prev = dens(r, f, fp);
            let rhs = |r: f64, f: f64, fp: f64| -> (f64, f64) {
                (fp, -fp / r + f / (r * r) - f * (1.0 - f * f))
            };
            for step in 0..steps {
                let (k1f, k1p) = rhs(r, f, fp);
                let (k2f, k2p) = rhs(r + 0.5 * dr, f + 0.5 * dr * k1f, fp + 0.5 * dr * k1p);
                let (k3f, k3p) = rhs(r + 0.5 * dr, f + 0.5 * dr * k2f, fp + 0.5 * dr * k2p);
                let (k4f, k4p) = rhs(r + dr, f + dr * k3f, fp + dr * k3p);
                f += dr / 6.0 * (k1f + 2.0 * k2f + 2.0 * k3f + k4f);
                fp += dr / 6.0 * (k1p + 2.0 * k2p + 2.0 * k3p + k4p);
                r += dr;
                if step < match_step {
                    let d = dens(r, f, fp);
                    energy += 0.5 * dr * (d_prev + d);
                    d_prev = d;
                }
                if f >= 1.0 {
                    return (1, energy);
                }
            }
            (0, energy)
        };
        let mut lo = 0.4;
        let mut hi = 0.8;
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            match run(mid).0 {
                1 => hi = mid,
                _ => lo = mid,
            }
        }
        let (_, energy) = run(0.5 * (lo + hi));
        VortexProfile { r_match, energy_inner: PI * energy }
    })
}

/// Full two-stage source solve shared with the London module; re-exported
/// here for the interaction matrix assembly.
pub use crate::london::solve_zeta;

/// Direct evaluation of the arrangement energy
/// `𝒲_d(D) = interaction + Σ_k C(k, D_k)` for one arrangement — the
/// quantity `wbar_of` minimizes.
pub fn script_w(ws: &WellSystem, dvec: &[u32]) -> Result<f64> {
    if dvec.len() != ws.n0() {
        return Err(Error::InvalidParameter(format!(
            "arrangement length {} vs {} wells",
            dvec.len(),
            ws.n0()
        )));
    }
    let mut v = ws.interaction(dvec);
    for (k, &dk) in dvec.iter().enumerate() {
        if dk >= 2 {
            let (_, c) = minimize_w_meso(&ws.hessians[k], dk as usize, 0xC0FFEE + k as u64)?;
            v += c;
        }
    }
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_force_lambda(n0: usize, d: usize) -> Vec<Vec<u32>> {
        let mut out = Vec::new();
        let total = (d + 1).pow(n0 as u32);
        for code in 0..total {
            let mut v = Vec::with_capacity(n0);
            let mut c = code;
            for _ in 0..n0 {
                v.push((c % (d + 1)) as u32);
                c /= d + 1;
            }
            let sum: u32 = v.iter().sum();
            let lo = (d / n0) as u32;
            let hi = d.div_ceil(n0) as u32;
            if sum == d as u32 && v.iter().all(|&x| x == lo || x == hi) {
                out.push(v);
            }
        }
        out
    }

    #[test]
    fn arrangements_match_brute_force() {
        for n0 in 1..=4 {
            for d in 0..=12 {
                let mut fast = lambda_d_set(n0, d);
                let mut brute = brute_force_lambda(n0, d);
                fast.sort();
                brute.sort();
                assert_eq!(fast, brute, "n0 = {n0}, d = {d}");
            }
        }
    }

    #[test]
    fn l_coefficients_are_arrangement_independent() {
        for n0 in 1..=4 {
            for d in 0..=12 {
                for a in lambda_d_set(n0, d) {
                    let sum_sq: u32 = a.iter().map(|x| x * x).sum();
                    let l1 = 0.5 * PI * (sum_sq as f64 - d as f64);
                    assert!((l1 - l1_coefficient(n0, d)).abs() < 1e-12);
                    let corr: f64 = a
                        .iter()
                        .map(|&dk| {
                            if dk <= 1 {
                                0.0
                            } else {
                                (dk as f64 - (dk * dk) as f64) * (dk as f64).ln()
                            }
                        })
                        .sum();
                    assert!((corr - balanced_log_correction(n0, d)).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn small_counts_have_trivial_corrections() {
        for n0 in 1..=4 {
            for d in 0..=n0 {
                assert_eq!(l1_coefficient(n0, d), 0.0);
                assert_eq!(balanced_log_correction(n0, d), 0.0);
            }
            // One vortex past capacity: ℒ₁ = π, ℒ₂ picks up -π ln 2.
            assert!((l1_coefficient(n0, n0 + 1) - PI).abs() < 1e-12);
            assert!(
                (0.5 * PI * balanced_log_correction(n0, n0 + 1) + PI * 2.0f64.ln()).abs()
                    < 1e-12
            );
        }
    }

    fn synthetic(n0: usize, wbar_tail: &[f64]) -> EnergyCoefficients {
        let mut wbar = vec![0.0];
        wbar.extend_from_slice(wbar_tail);
        assemble_coefficients(n0, 0.17, 1.32, 12.0, wbar)
    }

    #[test]
    fn ladder_tables_resolve_exactly() {
        // Convex with a flat start: steps at d = 1 and d = 3.
        let c = synthetic(3, &[1.0, 3.0, 4.0]);
        let l = build_ladder(&c).unwrap();
        assert_eq!(l.dstar, vec![0, 1, 3]);
        assert!((l.kstar[0] - 1.0).abs() < 1e-12 && (l.kstar[1] - 1.5).abs() < 1e-12);

        // Affine: one jump straight to N₀.
        let c = synthetic(3, &[1.0, 2.0, 3.0]);
        let l = build_ladder(&c).unwrap();
        assert_eq!(l.dstar, vec![0, 3]);
        assert_eq!(l.kstar.len(), 1);
        assert!((l.kstar[0] - 1.0).abs() < 1e-12);

        // Strictly convex: every count is a rung.
        let c = synthetic(3, &[1.0, 2.5, 4.5]);
        let l = build_ladder(&c).unwrap();
        assert_eq!(l.dstar, vec![0, 1, 2, 3]);
        assert!((l.kstar[0] - 1.0).abs() < 1e-12);
        assert!((l.kstar[1] - 1.5).abs() < 1e-12);
        assert!((l.kstar[2] - 2.0).abs() < 1e-12);
        for w in l.kstar.windows(2) {
            assert!(w[1] > w[0]);
        }
        assert!((l.hc1() - (12.0 + 1.0 / 1.32)).abs() < 1e-12);
    }

    #[test]
    fn ladder_slopes_are_the_lower_convex_hull() {
        // Independent hull construction (monotone chain on (d, W̄_d)).
        let wbar = [0.0, 2.0, 2.5, 4.2, 4.4, 8.0];
        let c = assemble_coefficients(5, 0.17, 1.32, 12.0, wbar.to_vec());
        let l = build_ladder(&c).unwrap();
        let mut hull: Vec<(f64, f64)> = Vec::new();
        for (d, &w) in wbar.iter().enumerate() {
            let p = (d as f64, w);
            while hull.len() >= 2 {
                let a = hull[hull.len() - 2];
                let b = hull[hull.len() - 1];
                if (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0) <= 1e-12 {
                    hull.pop();
                } else {
                    break;
                }
            }
            hull.push(p);
        }
        let hull_d: Vec<usize> = hull.iter().map(|p| p.0 as usize).collect();
        assert_eq!(l.dstar, hull_d, "ladder rungs must be hull vertices");
        for (k, pair) in hull.windows(2).enumerate() {
            let slope = (pair[1].1 - pair[0].1) / (pair[1].0 - pair[0].0);
            assert!((l.kstar[k] - slope).abs() < 1e-12);
        }
    }

    #[test]
    fn leading_field_example_value() {
        let h = h0_c1(0.5, 1e-3, 0.1, 0.1, 0.21015, 0.0).unwrap();
        assert!((h - 12.33).abs() < 5e-3, "H⁰_c1 = {h}");
        // b → 1 removes the pinning advantage: only the ε term remains.
        let h1 = h0_c1(1.0 - 1e-12, 1e-3, 0.1, 0.1, 0.21015, 0.0).unwrap();
        assert!((h1 - (1e-3f64).ln().abs() / (2.0 * 0.21015)).abs() < 1e-6);
    }

    #[test]
    fn core_constant_is_stable_and_in_range() {
        let g100 = bbh_gamma_at(100.0);
        let g200 = bbh_gamma_at(200.0);
        assert!((g200 - g100).abs() <= 1e-3, "γ(200) - γ(100) = {}", g200 - g100);
        // Frozen reference: two independent high-accuracy methods (collocation
        // and adaptive shooting with early energy handoff) agree on 1.19656.
        let g = bbh_gamma();
        assert!((g - 1.19656).abs() < 1e-3, "γ = {g}");
        assert!((g - g200).abs() < 1e-3);
    }

    #[test]
    fn prediction_matches_direct_argmin() {
        // A 3-well system with a convex table and room for clusters.
        let wbar = vec![0.0, 1.0, 2.5, 4.5, 7.0, 10.0, 13.5, 17.5];
        let c = assemble_coefficients(3, 0.17, 1.32, 12.0, wbar);
        let l = build_ladder(&c).unwrap();
        for s in 0..50 {
            let hex = 10.0 + 8.0 * (s as f64 + 0.5) / 50.0;
            let p = predict(&c, &l, hex).unwrap();
            let dmax = c.wbar.len() - 1;
            let mut best_d = 0;
            for d in 0..=dmax {
                if predicted_energy(&c, d, hex) < predicted_energy(&c, best_d, hex) {
                    best_d = d;
                }
            }
            match p {
                Prediction::Definite { d } => {
                    assert_eq!(d, best_d, "hex = {hex}");
                }
                Prediction::Ambiguous { d_lo, d_hi } => {
                    assert!(
                        best_d == d_lo || best_d == d_hi,
                        "hex = {hex}: argmin {best_d} outside [{d_lo}, {d_hi}]"
                    );
                }
            }
        }
    }

    #[test]
    fn low_fields_predict_no_vortices() {
        let c = synthetic(3, &[1.0, 2.5, 4.5]);
        let l = build_ladder(&c).unwrap();
        let hc1 = l.hc1();
        for s in 1..=10 {
            let hex = (hc1 - 1.0) * s as f64 / 10.0;
            assert_eq!(predict(&c, &l, hex).unwrap(), Prediction::Definite { d: 0 });
        }
        assert!(matches!(
            predict(&c, &l, hc1).unwrap(),
            Prediction::Ambiguous { d_lo: 0, d_hi: 1 }
        ));
    }

    #[test]
    fn cluster_thresholds_carry_log_windows() {
        let wbar = vec![0.0, 1.0, 2.5, 4.5, 7.0, 10.0];
        let c = assemble_coefficients(3, 0.17, 1.32, 12.0, wbar);
        let l = build_ladder(&c).unwrap();
        assert_eq!(l.kii.len(), 2);
        for (i, (kii, hstar)) in l.kii.iter().zip(&l.hstar).enumerate() {
            // Both crossing estimates sit above the ladder, and the
            // self-consistent one exceeds the anchored one because the
            // crossing field exceeds the leading-order entry field.
            assert!(*kii > l.ki[l.ki.len() - 1]);
            assert!(hstar > kii, "window [{kii}, {hstar}] inverted");
            // h* genuinely solves its equation.
            let d = 3 + i;
            let d1 = (c.l1[d + 1] - c.l1[d]) / c.m_omega;
            let d2 = (c.l2[d + 1] - c.l2[d]) / c.m_omega;
            let res = hstar - (c.h0c1 + d1 * hstar.ln() + d2);
            assert!(res.abs() < 1e-9, "fixed point residual {res}");
        }
        // These two windows overlap (log drift beats their spacing), so a
        // field inside either must come back as the merged ambiguity range.
        assert!(l.kii[1] < l.hstar[0]);
        let mid = 0.5 * (l.kii[1] + l.hstar[0]);
        assert_eq!(
            predict(&c, &build_ladder(&c).unwrap(), mid).unwrap(),
            Prediction::Ambiguous { d_lo: 3, d_hi: 5 }
        );
    }
}
