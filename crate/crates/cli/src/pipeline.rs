//! Shared builders behind the subcommands: grid + London data, the pinned
//! medium, and the critical-field prediction bundle with adaptive table
//! depth.

use std::collections::{HashMap, HashSet};
use std::sync::Arc;

use glpin_core::critical::{
    assemble_coefficients, bbh_gamma, build_cluster_table, build_ladder, build_well_system,
    gamma_tilde, h0_c1, predict, wbar_of, EnergyCoefficients, Ladder, Prediction, WellSystem,
};
use glpin_core::gl::VortexConfig;
use glpin_core::london::{build_london, london_from_xi0, synthetic_xi0, LondonData};
use glpin_core::pinning::{build_pinning_term, solve_lassoued_mironescu, PinningField};
use glpin_core::renorm::minimize_w_micro;
use glpin_core::{build_grid, Grid, Point2, ScalarField};

use crate::config::RunConfig;
use crate::error::CliError;

/// Grid plus the London-limit data for the configured domain (computed or
/// synthetic, per the config).
pub struct Geometry {
    pub grid: Arc<Grid>,
    pub london: LondonData,
    pub synthetic: bool,
}

pub fn build_geometry(cfg: &RunConfig) -> Result<Geometry, CliError> {
    let grid = build_grid(&cfg.domain, cfg.resolution)?;
    let (london, synthetic) = match &cfg.synthetic_xi0 {
        Some(wells) => (london_from_xi0(synthetic_xi0(&grid, wells))?, true),
        None => (build_london(&grid)?, false),
    };
    Ok(Geometry { grid, london, synthetic })
}

/// The sampled coupling field and its relaxed modulus profile.
pub struct PinnedMedium {
    pub field: PinningField,
    pub u: ScalarField,
}

impl PinnedMedium {
    /// The coherence length the profile was solved at.
    #[must_use]
    pub fn epsilon(&self) -> f64 {
        self.field.spec.epsilon
    }
}

pub fn build_medium(
    grid: &Arc<Grid>,
    cfg: &RunConfig,
    epsilon_override: Option<f64>,
) -> Result<PinnedMedium, CliError> {
    let mut spec = cfg.pinning.clone();
    if let Some(e) = epsilon_override {
        if !(e > 0.0 && e.is_finite()) {
            return Err(CliError::config(format!(
                "flag --epsilon: {e} must be positive and finite"
            )));
        }
        spec.epsilon = e;
    }
    let field = build_pinning_term(grid, &spec)?;
    let u = solve_lassoued_mironescu(&field)?;
    Ok(PinnedMedium { field, u })
}

/// Everything needed to evaluate and explain count predictions: the scale
/// constants, the well interaction system, and the assembled ladder.
pub struct PredictionBundle {
    pub w_micro_min: f64,
    pub micro_argmin: Point2,
    pub gamma: f64,
    pub gamma_tilde: f64,
    pub h0c1: f64,
    pub ws: WellSystem,
    pub cluster: HashMap<(usize, u32), f64>,
    pub coeffs: EnergyCoefficients,
    pub ladder: Ladder,
}

pub fn build_prediction(
    grid: &Arc<Grid>,
    london: &LondonData,
    cfg: &RunConfig,
    dmax: usize,
) -> Result<PredictionBundle, CliError> {
    let p = &cfg.pinning;
    let (micro_argmin, w_micro_min) = minimize_w_micro(&p.omega, p.b)?;
    let gamma = bbh_gamma();
    let gt = gamma_tilde(w_micro_min, p.b, gamma, london.norm_inf);
    let h0c1 = h0_c1(p.b, p.epsilon, p.lambda, p.delta, london.norm_inf, gt)?;
    let ws = build_well_system(grid, london)?;
    let n0 = ws.n0();
    let dmax = dmax.max(n0 + 2);
    let qmax = dmax.div_ceil(n0) as u32;
    let cluster = build_cluster_table(&ws, qmax)?;
    let wbar: Vec<f64> = (0..=dmax).map(|d| wbar_of(&ws, &cluster, d).0).collect();
    let coeffs = assemble_coefficients(n0, london.j0, london.m_omega, h0c1, wbar);
    let ladder = build_ladder(&coeffs)?;
    Ok(PredictionBundle {
        w_micro_min,
        micro_argmin,
        gamma,
        gamma_tilde: gt,
        h0c1,
        ws,
        cluster,
        coeffs,
        ladder,
    })
}

/// A prediction at one field value plus the optimal per-well degree
/// distributions realizing it and a coarse regime label.
pub struct PredictionAt {
    pub prediction: Prediction,
    /// Optimal per-well distributions for the (upper, if ambiguous) count.
    pub distributions: Vec<Vec<u32>>,
    pub regime: String,
}

pub fn predict_at(bundle: &PredictionBundle, hex: f64) -> Result<PredictionAt, CliError> {
    let prediction = predict(&bundle.coeffs, &bundle.ladder, hex)?;
    let top = match prediction {
        Prediction::Definite { d } => d,
        Prediction::Ambiguous { d_hi, .. } => d_hi,
    };
    let mut distributions = wbar_of(&bundle.ws, &bundle.cluster, top).1;
    if let Prediction::Ambiguous { d_lo, .. } = prediction {
        distributions.extend(wbar_of(&bundle.ws, &bundle.cluster, d_lo).1);
    }
    let regime = match prediction {
        Prediction::Ambiguous { .. } => "crossing_window".to_string(),
        Prediction::Definite { d } if d == 0 => "vortex_free".to_string(),
        Prediction::Definite { d } if d <= *bundle.ladder.dstar.last().unwrap_or(&0) => {
            "discrete_ladder".to_string()
        }
        Prediction::Definite { .. } => "dense".to_string(),
    };
    Ok(PredictionAt { prediction, distributions, regime })
}

/// Builds a bundle deep enough that the prediction at `hex` does not
/// saturate the coefficient table, doubling the table depth as needed.
pub fn bundle_for_field(
    grid: &Arc<Grid>,
    london: &LondonData,
    cfg: &RunConfig,
    hex: f64,
    dmax_start: usize,
) -> Result<(PredictionBundle, PredictionAt), CliError> {
    let mut dmax = dmax_start.max(8);
    loop {
        let bundle = build_prediction(grid, london, cfg, dmax)?;
        let at = predict_at(&bundle, hex)?;
        let top = match at.prediction {
            Prediction::Definite { d } => d,
            Prediction::Ambiguous { d_hi, .. } => d_hi,
        };
        if top < bundle.coeffs.wbar.len() - 1 {
            return Ok((bundle, at));
        }
        if dmax >= 96 {
            return Err(CliError::config(format!(
                "applied field {hex} asks for more than {dmax} vortices; outside this \
                 toolkit's desk-scale envelope"
            )));
        }
        dmax *= 2;
    }
}

/// Initial vortex positions realizing a per-well degree distribution: each
/// vortex goes to its own inclusion center near the well (falling back to a
/// ring around the well when inclusions run out), so seeded states start
/// pinned and pairwise separated.
pub fn seed_from_distribution(
    distribution: &[u32],
    london: &LondonData,
    pinning: &PinningField,
) -> Result<VortexConfig, CliError> {
    if distribution.len() != london.minima.len() {
        return Err(CliError::solver(format!(
            "distribution covers {} wells but the potential has {}",
            distribution.len(),
            london.minima.len()
        )));
    }
    let centers = &pinning.inclusion_centers;
    let mut used: HashSet<usize> = HashSet::new();
    let mut points = Vec::new();
    for (k, &q) in distribution.iter().enumerate() {
        if q == 0 {
            continue;
        }
        let p = london.minima[k].pos;
        let mut order: Vec<usize> = (0..centers.len()).filter(|i| !used.contains(i)).collect();
        order.sort_by(|&a, &b| {
            let da = (p.dist(centers[a]), centers[a].y, centers[a].x);
            let db = (p.dist(centers[b]), centers[b].y, centers[b].x);
            da.partial_cmp(&db).unwrap()
        });
        let take = order.len().min(q as usize);
        for &i in &order[..take] {
            used.insert(i);
            points.push(centers[i]);
        }
        let rest = q as usize - take;
        if rest > 0 {
            // More vortices than inclusions: spread the remainder on a ring
            // around the well, inside the domain.
            let r = (0.35 * pinning.spec.delta)
                .max(16.0 * pinning.spec.epsilon)
                .min(0.5 * pinning.a.grid.spec.interior_distance(p).max(f64::MIN_POSITIVE));
            for m in 0..rest {
                let ang = std::f64::consts::TAU * (m as f64 + 0.25) / rest as f64;
                points.push(Point2::new(p.x + r * ang.cos(), p.y + r * ang.sin()));
            }
        }
    }
    Ok(VortexConfig::unit(points))
}
