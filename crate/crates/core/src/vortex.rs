//! Vorticity defect detection and multi-scale defect reports.
//!
//! A converged order parameter carries its vortices as small regions where
//! the modulus collapses.  This module finds the sub-threshold components
//! of `|v|`, measures their winding numbers on surrounding contours, merges
//! nearby defect disks into well-separated representatives, and expresses
//! defect locations in the three natural coordinate frames: the domain
//! itself, the well-local blow-up `𝑧̆ = (z - p)/ℓ` with `ℓ = √(D/h_ex)`,
//! and inclusion coordinates `ẑ = (z - y)/(λδ)`.

use std::collections::BTreeMap;
use std::f64::consts::TAU;

use crate::critical::Prediction;
use crate::domain::Point2;
use crate::london::LondonData;
use crate::pinning::PinningField;
use crate::{ComplexField, Error, Grid, Result};

/// One detected vorticity defect.
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct Defect {
    /// Deepest sub-threshold node of the component.
    pub center: Point2,
    /// Largest distance from the center to a node of the component.
    pub radius: f64,
    /// Winding of `v` on the surrounding contour; 0 by convention for
    /// components that reach the boundary.
    pub degree: i32,
    /// The component contains nodes adjacent to the domain boundary, so the
    /// winding is not defined and the degree-0 convention applies.
    pub touches_boundary: bool,
    /// Center of the inclusion containing the defect, when there is one.
    pub inclusion_center: Option<Point2>,
    /// Inclusion-local coordinate `ẑ = (z - y)/(λδ)`, when inside one.
    pub micro_coord: Option<Point2>,
}

/// Defects assigned to one well `p_k`.
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct ClusterEntry {
    /// Total degree `D_k` carried near the well.
    pub count: i32,
    /// Well-local coordinates `𝑧̆ = (z - p_k)/ℓ` of the member defects.
    pub meso_coords: Vec<Point2>,
}

/// Full analysis of a state's defects across the three scales.
#[derive(Clone, Debug, Default, serde::Serialize, serde::Deserialize)]
pub struct DefectReport {
    pub defects: Vec<Defect>,
    /// Well index (into the sorted minima list) → cluster data; only wells
    /// with at least one assigned defect appear.
    pub cluster: BTreeMap<usize, ClusterEntry>,
}

/// Winding number of `v` along a cyclic node loop: the sum of
/// principal-branch phase increments divided by 2π.  For single-valued data
/// the cyclic sum is an exact multiple of 2π up to rounding; the residue
/// check guards against non-finite or near-zero values slipping through.
pub fn degree(v: &ComplexField, contour: &[usize]) -> Result<i32> {
    if contour.len() < 3 {
        return Err(Error::InvalidParameter(format!(
            "winding contour needs at least 3 nodes, got {}",
            contour.len()
        )));
    }
    for &k in contour {
        let m = v.data[k].norm();
        if !(m >= 0.1) {
            return Err(Error::InvalidParameter(format!(
                "contour passes within 0.1 of a zero (|v| = {m:.3e}); winding is unreliable"
            )));
        }
    }
    let mut total = 0.0f64;
    for i in 0..contour.len() {
        let a = v.data[contour[i]];
        let b = v.data[contour[(i + 1) % contour.len()]];
        total += (b * a.conj()).arg();
    }
    let turns = total / TAU;
    let rounded = turns.round();
    if (turns - rounded).abs() > 0.2 {
        return Err(Error::InvalidParameter(format!(
            "winding sum {turns:.4} turns is not near an integer"
        )));
    }
    Ok(rounded as i32)
}

/// Axis-aligned square loop of mask nodes at Chebyshev radius `half` around
/// `center`, traversed counterclockwise.  `None` if any loop node leaves
/// the mask.
#[must_use]
pub fn square_contour(grid: &Grid, center: Point2, half: f64) -> Option<Vec<usize>> {
    let ic = ((center.x - grid.origin.x) / grid.h).round() as i64;
    let jc = ((center.y - grid.origin.y) / grid.h).round() as i64;
    let r = (half / grid.h).ceil().max(1.0) as i64;
    let (i0, i1) = (ic - r, ic + r);
    let (j0, j1) = (jc - r, jc + r);
    if i0 < 0 || j0 < 0 || i1 >= grid.nx as i64 || j1 >= grid.ny as i64 {
        return None;
    }
    let mut out = Vec::with_capacity(8 * r as usize);
    let mut push = |i: i64, j: i64| -> bool {
        let k = grid.idx(i as usize, j as usize);
        if grid.mask[k] {
            out.push(k);
            true
        } else {
            false
        }
    };
    for i in i0..=i1 {
        if !push(i, j0) {
            return None;
        }
    }
    for j in j0 + 1..=j1 {
        if !push(i1, j) {
            return None;
        }
    }
    for i in (i0..i1).rev() {
        if !push(i, j1) {
            return None;
        }
    }
    for j in (j0 + 1..j1).rev() {
        if !push(i0, j) {
            return None;
        }
    }
    Some(out)
}

/// Finds the connected components of `{|v| < threshold}` over mask nodes
/// and measures each one: center (deepest node), radius (max extent), and
/// winding on a contour at 3× the radius, clipped to half the distance to
/// the nearest other component and to the boundary.  Components whose nodes
/// touch the boundary get degree 0 and a flag instead of a contour.
pub fn detect_defects(v: &ComplexField, threshold: f64) -> Result<Vec<Defect>> {
    if !(threshold > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "defect threshold must be positive, got {threshold}"
        )));
    }
    if !v.is_finite_in_mask() {
        return Err(Error::InvalidParameter(
            "order parameter contains non-finite values".into(),
        ));
    }
    let grid = &v.grid;
    let nx = grid.nx;

    let mut comp = vec![-1i64; grid.nx * grid.ny];
    let mut components: Vec<Vec<usize>> = Vec::new();
    let mut stack = Vec::new();
    for &k0 in &grid.interior {
        let k0 = k0 as usize;
        if comp[k0] >= 0 || v.data[k0].norm() >= threshold {
            continue;
        }
        let id = components.len() as i64;
        let mut nodes = Vec::new();
        comp[k0] = id;
        stack.push(k0);
        while let Some(k) = stack.pop() {
            nodes.push(k);
            for nb in [k.wrapping_sub(1), k + 1, k.wrapping_sub(nx), k + nx] {
                if nb < comp.len()
                    && comp[nb] < 0
                    && grid.mask[nb]
                    && v.data[nb].norm() < threshold
                {
                    comp[nb] = id;
                    stack.push(nb);
                }
            }
        }
        components.push(nodes);
    }

    // Geometry of each component.
    struct Raw {
        center: Point2,
        radius: f64,
        touches: bool,
    }
    let mut raw = Vec::with_capacity(components.len());
    for nodes in &components {
        let mut best = (f64::INFINITY, nodes[0]);
        let mut touches = false;
        for &k in nodes {
            let m = v.data[k].norm();
            if m < best.0 {
                best = (m, k);
            }
            for nb in [k - 1, k + 1, k - nx, k + nx] {
                if !grid.mask[nb] {
                    touches = true;
                }
            }
        }
        let center = grid.pos_of(best.1);
        let radius = nodes
            .iter()
            .map(|&k| center.dist(grid.pos_of(k)))
            .fold(0.0f64, f64::max);
        raw.push(Raw { center, radius, touches });
    }

    let mut out = Vec::with_capacity(raw.len());
    for (i, r) in raw.iter().enumerate() {
        if r.touches {
            out.push(Defect {
                center: r.center,
                radius: r.radius,
                degree: 0,
                touches_boundary: true,
                inclusion_center: None,
                micro_coord: None,
            });
            continue;
        }
        let mut half = 3.0 * r.radius.max(grid.h);
        for (j, other) in raw.iter().enumerate() {
            if j != i {
                half = half.min(0.5 * r.center.dist(other.center));
            }
        }
        // The contour's corners sit at √2 × the half-width; keep them inside.
        half = half.min(0.65 * grid.spec.interior_distance(r.center));
        half = half.max(r.radius + 2.0 * grid.h);
        let degree = match square_contour(grid, r.center, half) {
            Some(loop_nodes) => degree(v, &loop_nodes)?,
            // The clipped contour still leaves the mask: boundary convention.
            None => {
                out.push(Defect {
                    center: r.center,
                    radius: r.radius,
                    degree: 0,
                    touches_boundary: true,
                    inclusion_center: None,
                    micro_coord: None,
                });
                continue;
            }
        };
        out.push(Defect {
            center: r.center,
            radius: r.radius,
            degree,
            touches_boundary: false,
            inclusion_center: None,
            micro_coord: None,
        });
    }
    // Deterministic order: by position.
    out.sort_by(|a, b| {
        (a.center.y, a.center.x)
            .partial_cmp(&(b.center.y, b.center.x))
            .unwrap()
    });
    Ok(out)
}

/// Merges a family of radius-`η` disks into a well-separated subfamily:
/// returns indices `J` and a factor `κ ∈ {P⁰, …, P^{N-1}}` such that
/// `∪ B(x_i, η) ⊂ ∪_{j∈J} B(x_j, κη)` while `|x_i - x_j| ≥ (P-1)κη` for
/// distinct members of `J`.  Each merge level absorbs any point lying
/// within `(P-1)κη` of an already-selected representative; when the
/// separation test fails at the inflated scale at least one pair merges,
/// so at most `N-1` inflations occur.
pub fn separate_disks(centers: &[Point2], eta: f64, p: u32) -> Result<(Vec<usize>, f64)> {
    if p < 2 {
        return Err(Error::InvalidParameter(format!(
            "disk merging needs an inflation factor ≥ 2, got {p}"
        )));
    }
    if !(eta > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "disk radius must be positive, got {eta}"
        )));
    }
    let n = centers.len();
    if n == 0 {
        return Ok((Vec::new(), 1.0));
    }
    let pf = f64::from(p);
    let mut kappa = 1.0f64;
    let mut j: Vec<usize> = (0..n).collect();
    loop {
        let sep = (pf - 1.0) * kappa * eta;
        let separated = j
            .iter()
            .enumerate()
            .all(|(a, &ia)| j[..a].iter().all(|&ib| centers[ia].dist(centers[ib]) >= sep));
        if separated {
            debug_assert!(covering_and_separation_hold(centers, eta, p, &j, kappa));
            return Ok((j, kappa));
        }
        let mut next: Vec<usize> = Vec::with_capacity(j.len());
        for &i in &j {
            if next.iter().all(|&s| centers[s].dist(centers[i]) >= sep) {
                next.push(i);
            }
        }
        j = next;
        kappa *= pf;
    }
}

/// Post-hoc verification of the disk-merging contract: every original disk
/// of radius `η` lies inside some selected disk of radius `κη`, and the
/// selected centers are pairwise `(P-1)κη` apart.
#[must_use]
pub fn covering_and_separation_hold(
    centers: &[Point2],
    eta: f64,
    p: u32,
    j: &[usize],
    kappa: f64,
) -> bool {
    let tol = 1e-12 * kappa * eta.max(1.0);
    let covered = centers.iter().all(|x| {
        j.iter()
            .any(|&s| x.dist(centers[s]) + eta <= kappa * eta + tol)
    });
    let sep = (f64::from(p) - 1.0) * kappa * eta;
    let separated = j
        .iter()
        .enumerate()
        .all(|(a, &ia)| j[..a].iter().all(|&ib| centers[ia].dist(centers[ib]) >= sep - tol));
    covered && separated
}

/// Assigns defects to the nearest well of `ξ₀`, computes the per-well total
/// degree `D_k` and blow-up coordinates `𝑧̆ = (z - p_k)/ℓ` with
/// `ℓ = √(D_k/h_ex)`, and maps each defect into inclusion coordinates
/// `ẑ = (z - y)/(λδ)` when it lies inside an inclusion.
pub fn cluster_report(
    defects: &[Defect],
    london: &LondonData,
    h_ex: f64,
    pinning: &PinningField,
) -> Result<DefectReport> {
    if !(h_ex > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "applied field must be positive, got {h_ex}"
        )));
    }
    if london.minima.is_empty() {
        return Err(Error::InvalidParameter(
            "London data has no wells to assign defects to".into(),
        ));
    }
    let scale = pinning.spec.lambda * pinning.spec.delta;
    let mut enriched = Vec::with_capacity(defects.len());
    let mut assignment: Vec<usize> = Vec::with_capacity(defects.len());
    for d in defects {
        let mut best = (f64::INFINITY, 0usize);
        for (k, m) in london.minima.iter().enumerate() {
            let dist = d.center.dist(m.pos);
            if dist < best.0 {
                best = (dist, k);
            }
        }
        assignment.push(best.1);

        let mut e = d.clone();
        if let Some(y) = pinning.nearest_center(d.center) {
            let zhat = Point2::new((d.center.x - y.x) / scale, (d.center.y - y.y) / scale);
            if pinning.spec.omega.contains(zhat) {
                e.inclusion_center = Some(y);
                e.micro_coord = Some(zhat);
            }
        }
        enriched.push(e);
    }

    let mut cluster: BTreeMap<usize, ClusterEntry> = BTreeMap::new();
    for (d, &k) in enriched.iter().zip(&assignment) {
        let entry = cluster
            .entry(k)
            .or_insert_with(|| ClusterEntry { count: 0, meso_coords: Vec::new() });
        entry.count += d.degree;
    }
    for (d, &k) in enriched.iter().zip(&assignment) {
        let entry = cluster.get_mut(&k).expect("entry created above");
        let ell = (f64::from(entry.count.max(1) as u32) / h_ex).sqrt();
        let p = london.minima[k].pos;
        entry
            .meso_coords
            .push(Point2::new((d.center.x - p.x) / ell, (d.center.y - p.y) / ell));
    }
    Ok(DefectReport { defects: enriched, cluster })
}

/// Side-by-side summary of an observed defect report against a count
/// prediction.  Separation and well-distance figures are reported next to
/// their asymptotic scales but never asserted.
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct CompareSummary {
    pub observed_count: i32,
    pub predicted: Prediction,
    pub count_consistent: bool,
    /// Per-well observed degrees, indexed like the minima list.
    pub observed_distribution: Vec<i32>,
    /// Whether the observed distribution appears in the provided optimal
    /// set; absent when no set was supplied or the counts differ.
    pub distribution_in_predicted_set: Option<bool>,
    pub all_degrees_one: bool,
    pub min_pairwise_separation: Option<f64>,
    /// Scale `ln(h_ex)/h_ex` for pairwise separations.
    pub separation_scale: f64,
    pub max_distance_to_wells: Option<f64>,
    /// Scale `ln(h_ex)/√h_ex` for distances to the well set.
    pub well_distance_scale: f64,
}

/// Compares a defect report with a predicted count and (optionally) the set
/// of optimal per-well distributions.
#[must_use]
pub fn compare(
    report: &DefectReport,
    london: &LondonData,
    prediction: &Prediction,
    predicted_distributions: &[Vec<u32>],
    h_ex: f64,
) -> CompareSummary {
    let observed_count: i32 = report.defects.iter().map(|d| d.degree).sum();
    let count_consistent = match *prediction {
        Prediction::Definite { d } => observed_count == d as i32,
        Prediction::Ambiguous { d_lo, d_hi } => {
            observed_count >= d_lo as i32 && observed_count <= d_hi as i32
        }
    };
    let mut observed_distribution = vec![0i32; london.minima.len()];
    for (&k, entry) in &report.cluster {
        if k < observed_distribution.len() {
            observed_distribution[k] = entry.count;
        }
    }
    let distribution_in_predicted_set = if predicted_distributions.is_empty() {
        None
    } else {
        Some(predicted_distributions.iter().any(|d| {
            d.len() == observed_distribution.len()
                && d.iter()
                    .zip(&observed_distribution)
                    .all(|(&a, &b)| i64::from(a) == i64::from(b))
        }))
    };
    let all_degrees_one = report.defects.iter().all(|d| d.degree == 1);

    let mut min_sep = f64::INFINITY;
    for (a, da) in report.defects.iter().enumerate() {
        for db in &report.defects[..a] {
            min_sep = min_sep.min(da.center.dist(db.center));
        }
    }
    let mut max_dist = 0.0f64;
    for d in &report.defects {
        let nearest = london
            .minima
            .iter()
            .map(|m| d.center.dist(m.pos))
            .fold(f64::INFINITY, f64::min);
        max_dist = max_dist.max(nearest);
    }
    CompareSummary {
        observed_count,
        predicted: *prediction,
        count_consistent,
        observed_distribution,
        distribution_in_predicted_set,
        all_degrees_one,
        min_pairwise_separation: if report.defects.len() >= 2 { Some(min_sep) } else { None },
        separation_scale: h_ex.ln() / h_ex,
        max_distance_to_wells: if report.defects.is_empty() { None } else { Some(max_dist) },
        well_distance_scale: h_ex.ln() / h_ex.sqrt(),
    }
}
