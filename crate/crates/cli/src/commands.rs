//! Subcommand implementations: artifact layout, report wrappers, and the
//! sweep orchestrator.
//!
//! Every JSON report embeds the toolkit version and the SHA-256 of the
//! config bytes it was produced from, and contains no timestamps, so a rerun
//! with the same config and seeds reproduces every artifact byte for byte.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use glpin_core::critical::Prediction;
use glpin_core::gl::{
    build_test_configuration, decomposition_check, DecompositionReport, EnergyBreakdown,
    GLState, MinimizeOutcome, MinimizeSchedule, VortexConfig,
};
use glpin_core::io::{dump_complex, dump_links, dump_scalar, load_complex, load_links};
use glpin_core::london::Minimum;
use glpin_core::renorm::{minimize_w_meso, minimize_w_micro, w_macro, w_micro};
use glpin_core::vortex::{cluster_report, compare, detect_defects, CompareSummary, DefectReport};
use glpin_core::{DomainSpec, Point2};

use crate::config::{LoadedConfig, RunConfig};
use crate::error::CliError;
use crate::pipeline::{
    self, build_geometry, build_medium, bundle_for_field, Geometry, PinnedMedium,
};

const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Wrapper adding provenance fields to every serialized report.
#[derive(Serialize)]
struct Report<'a, T: Serialize> {
    toolkit_version: &'static str,
    config_sha256: &'a str,
    #[serde(flatten)]
    body: T,
}

fn out_dir(flag: Option<PathBuf>, cfg: &RunConfig) -> PathBuf {
    flag.or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir)
        .map_err(|e| CliError::solver(format!("creating {}: {e}", dir.display())))
}

fn write_json<T: Serialize>(dir: &Path, name: &str, sha: &str, body: T) -> Result<(), CliError> {
    ensure_dir(dir)?;
    let report = Report { toolkit_version: VERSION, config_sha256: sha, body };
    let mut text = serde_json::to_string_pretty(&report)
        .map_err(|e| CliError::solver(format!("serializing {name}: {e}")))?;
    text.push('\n');
    let path = dir.join(name);
    fs::write(&path, text).map_err(|e| CliError::solver(format!("writing {}: {e}", path.display())))
}

fn print_json<T: Serialize>(sha: &str, body: T) -> Result<(), CliError> {
    let report = Report { toolkit_version: VERSION, config_sha256: sha, body };
    let text = serde_json::to_string(&report)
        .map_err(|e| CliError::solver(format!("serializing report: {e}")))?;
    println!("{text}");
    Ok(())
}

fn hex_of(flag: Option<f64>, cfg: &RunConfig, what: &str) -> Result<f64, CliError> {
    let h = flag.or(cfg.h_ex).ok_or_else(|| {
        CliError::config(format!("{what} needs --hex or an `h_ex` config field"))
    })?;
    if !(h > 0.0 && h.is_finite()) {
        return Err(CliError::config(format!("applied field {h} must be positive and finite")));
    }
    Ok(h)
}

// ---------------------------------------------------------------------------
// Background solves

#[derive(Serialize)]
struct LondonReport {
    resolution: usize,
    grid_h: f64,
    synthetic: bool,
    j0: f64,
    norm_inf: f64,
    m_omega: f64,
    identity_residual: f64,
    minima: Vec<Minimum>,
}

pub fn london(loaded: &LoadedConfig, out: Option<PathBuf>) -> Result<(), CliError> {
    let cfg = &loaded.config;
    let geo = build_geometry(cfg)?;
    let dir = out_dir(out, cfg);
    ensure_dir(&dir)?;
    dump_scalar(dir.join("xi0"), &geo.london.xi0)?;
    dump_scalar(dir.join("h0"), &geo.london.h0)?;
    write_json(
        &dir,
        "london.json",
        &loaded.sha256,
        LondonReport {
            resolution: cfg.resolution,
            grid_h: geo.grid.h,
            synthetic: geo.synthetic,
            j0: geo.london.j0,
            norm_inf: geo.london.norm_inf,
            m_omega: geo.london.m_omega,
            identity_residual: geo.london.identity_residual,
            minima: geo.london.minima.clone(),
        },
    )
}

#[derive(Serialize)]
struct PinningReport {
    resolution: usize,
    b: f64,
    lambda: f64,
    delta: f64,
    epsilon: f64,
    inclusion_count: usize,
    /// Fraction of each retained cell covered by its inclusion, `λ² |ω|`.
    cell_area_fraction: f64,
    u_min: f64,
    u_max: f64,
}

pub fn pinning(loaded: &LoadedConfig, out: Option<PathBuf>) -> Result<(), CliError> {
    let cfg = &loaded.config;
    let geo = build_geometry(cfg)?;
    let med = build_medium(&geo.grid, cfg, None)?;
    let dir = out_dir(out, cfg);
    ensure_dir(&dir)?;
    dump_scalar(dir.join("a"), &med.field.a)?;
    dump_scalar(dir.join("u"), &med.u)?;
    let p = &cfg.pinning;
    write_json(
        &dir,
        "pinning.json",
        &loaded.sha256,
        PinningReport {
            resolution: cfg.resolution,
            b: p.b,
            lambda: p.lambda,
            delta: p.delta,
            epsilon: p.epsilon,
            inclusion_count: med.field.inclusion_centers.len(),
            cell_area_fraction: p.lambda * p.lambda * p.omega.area(),
            u_min: med.u.min_in_mask(),
            u_max: med.u.max_abs(),
        },
    )
}

pub fn fields(loaded: &LoadedConfig, out: Option<PathBuf>) -> Result<(), CliError> {
    let cfg = &loaded.config;
    let geo = build_geometry(cfg)?;
    let med = build_medium(&geo.grid, cfg, None)?;
    let dir = out_dir(out, cfg);
    ensure_dir(&dir)?;
    dump_scalar(dir.join("xi0"), &geo.london.xi0)?;
    dump_scalar(dir.join("h0"), &geo.london.h0)?;
    dump_scalar(dir.join("a"), &med.field.a)?;
    dump_scalar(dir.join("u"), &med.u)?;
    #[derive(Serialize)]
    struct FieldsReport {
        resolution: usize,
        grid_h: f64,
        j0: f64,
        norm_inf: f64,
        m_omega: f64,
        inclusion_count: usize,
        u_min: f64,
        u_max: f64,
        dumped: Vec<&'static str>,
    }
    write_json(
        &dir,
        "fields.json",
        &loaded.sha256,
        FieldsReport {
            resolution: cfg.resolution,
            grid_h: geo.grid.h,
            j0: geo.london.j0,
            norm_inf: geo.london.norm_inf,
            m_omega: geo.london.m_omega,
            inclusion_count: med.field.inclusion_centers.len(),
            u_min: med.u.min_in_mask(),
            u_max: med.u.max_abs(),
            dumped: vec!["xi0", "h0", "a", "u"],
        },
    )
}

// ---------------------------------------------------------------------------
// Renormalized energies

pub fn renorm_macro(
    loaded: &LoadedConfig,
    points_file: &Path,
    out: Option<PathBuf>,
) -> Result<(), CliError> {
    let cfg = &loaded.config;
    let text = fs::read_to_string(points_file)
        .map_err(|e| CliError::config(format!("{}: {e}", points_file.display())))?;
    let vc: VortexConfig = serde_json::from_str(&text).map_err(|e| {
        CliError::config(format!(
            "{}:{}:{}: {e}",
            points_file.display(),
            e.line(),
            e.column()
        ))
    })?;
    if vc.points.is_empty() || vc.points.len() != vc.degrees.len() {
        return Err(CliError::config(format!(
            "{}: needs equally many points and degrees, at least one each",
            points_file.display()
        )));
    }
    let geo = build_geometry(cfg)?;
    let value = w_macro(&geo.grid, &vc.points, &vc.degrees)?;
    #[derive(Serialize)]
    struct MacroReport {
        points: Vec<Point2>,
        degrees: Vec<i32>,
        w_macro: f64,
    }
    write_json(
        &out_dir(out, cfg),
        "renorm_macro.json",
        &loaded.sha256,
        MacroReport { points: vc.points, degrees: vc.degrees, w_macro: value },
    )
}

pub fn renorm_meso(
    loaded: &LoadedConfig,
    d: usize,
    well: usize,
    out: Option<PathBuf>,
) -> Result<(), CliError> {
    let cfg = &loaded.config;
    let geo = build_geometry(cfg)?;
    let ws = glpin_core::critical::build_well_system(&geo.grid, &geo.london)?;
    if well >= ws.n0() {
        return Err(CliError::config(format!(
            "flag --well: index {well} but the potential has {} wells",
            ws.n0()
        )));
    }
    let (points, value) = minimize_w_meso(&ws.hessians[well], d, cfg.seeds.meso)?;
    #[derive(Serialize)]
    struct MesoReport {
        well: usize,
        d: usize,
        hessian: [[f64; 2]; 2],
        value: f64,
        points: Vec<Point2>,
    }
    write_json(
        &out_dir(out, cfg),
        "renorm_meso.json",
        &loaded.sha256,
        MesoReport { well, d, hessian: ws.hessians[well], value, points },
    )
}

pub fn renorm_micro(loaded: &LoadedConfig, out: Option<PathBuf>) -> Result<(), CliError> {
    let cfg = &loaded.config;
    let p = &cfg.pinning;
    let (argmin, min_value) = minimize_w_micro(&p.omega, p.b)?;
    let value_at_origin = w_micro(&p.omega, p.b, Point2::new(0.0, 0.0))?;
    #[derive(Serialize)]
    struct MicroReport {
        b: f64,
        omega: DomainSpec,
        argmin: Point2,
        min_value: f64,
        value_at_origin: f64,
    }
    write_json(
        &out_dir(out, cfg),
        "renorm_micro.json",
        &loaded.sha256,
        MicroReport { b: p.b, omega: p.omega, argmin, min_value, value_at_origin },
    )
}

pub fn gamma_bbh(
    loaded: &LoadedConfig,
    r: Option<f64>,
    out: Option<PathBuf>,
) -> Result<(), CliError> {
    if let Some(r) = r {
        if !(r > 1.0 && r.is_finite()) {
            return Err(CliError::config(format!(
                "flag --r: truncation radius {r} must exceed 1"
            )));
        }
    }
    #[derive(Serialize)]
    struct GammaReport {
        gamma: f64,
        #[serde(skip_serializing_if = "Option::is_none")]
        r: Option<f64>,
        #[serde(skip_serializing_if = "Option::is_none")]
        gamma_at_r: Option<f64>,
    }
    let body = GammaReport {
        gamma: glpin_core::critical::bbh_gamma(),
        r,
        gamma_at_r: r.map(glpin_core::critical::bbh_gamma_at),
    };
    if let Some(dir) = out {
        write_json(&dir, "gamma_bbh.json", &loaded.sha256, &body)?;
    }
    print_json(&loaded.sha256, &body)
}

// ---------------------------------------------------------------------------
// Prediction

#[derive(Serialize)]
struct PredictionBody<'a> {
    hex: f64,
    #[serde(flatten)]
    prediction: Prediction,
    /// Optimal per-well degrees (first optimum when several tie).
    degrees: Vec<u32>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    alternate_degrees: Vec<Vec<u32>>,
    regime: &'a str,
}

pub fn predict(
    loaded: &LoadedConfig,
    hex: Option<f64>,
    dmax: Option<usize>,
    out: Option<PathBuf>,
) -> Result<(), CliError> {
    let cfg = &loaded.config;
    let hex = hex_of(hex, cfg, "predict")?;
    let geo = build_geometry(cfg)?;
    let (bundle, at) = bundle_for_field(&geo.grid, &geo.london, cfg, hex, dmax.unwrap_or(8))?;
    let mut distributions = at.distributions.clone();
    let degrees = if distributions.is_empty() {
        vec![0; bundle.ws.n0()]
    } else {
        distributions.remove(0)
    };
    let body = PredictionBody {
        hex,
        prediction: at.prediction,
        degrees: degrees.clone(),
        alternate_degrees: distributions.clone(),
        regime: &at.regime,
    };
    if let Some(dir) = out {
        #[derive(Serialize)]
        struct PredictionFile<'a> {
            #[serde(flatten)]
            body: &'a PredictionBody<'a>,
            h0c1: f64,
            gamma: f64,
            gamma_tilde: f64,
            w_micro_min: f64,
            micro_argmin: Point2,
            ladder: &'a glpin_core::critical::Ladder,
            coefficients: &'a glpin_core::critical::EnergyCoefficients,
        }
        write_json(
            &dir,
            "prediction.json",
            &loaded.sha256,
            PredictionFile {
                body: &body,
                h0c1: bundle.h0c1,
                gamma: bundle.gamma,
                gamma_tilde: bundle.gamma_tilde,
                w_micro_min: bundle.w_micro_min,
                micro_argmin: bundle.micro_argmin,
                ladder: &bundle.ladder,
                coefficients: &bundle.coeffs,
            },
        )?;
    }
    print_json(&loaded.sha256, &body)
}

// ---------------------------------------------------------------------------
// Direct minimization

#[derive(Serialize)]
struct RunReport<'a> {
    hex: f64,
    epsilon: f64,
    resolution: usize,
    seeded: &'a VortexConfig,
    max_sweeps: usize,
    sweeps: usize,
    converged: bool,
    stalled: bool,
    energy: EnergyBreakdown,
    min_abs_v: f64,
    fields: Vec<&'static str>,
}

/// Metadata a later subcommand needs to reinterpret a dumped state.
#[derive(Deserialize)]
struct RunMeta {
    hex: f64,
    epsilon: f64,
}

fn read_run_meta(dir: &Path) -> Result<Option<RunMeta>, CliError> {
    let path = dir.join("run.json");
    if !path.exists() {
        return Ok(None);
    }
    let text = fs::read_to_string(&path)
        .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map(Some)
        .map_err(|e| CliError::config(format!("{}: {e}", path.display())))
}

/// Builds the seeded state, minimizes, and writes the full artifact set
/// (`v`, `theta`, `trace.csv`, `run.json`) into `dir`.
fn run_minimize(
    geo: &Geometry,
    med: &PinnedMedium,
    hex: f64,
    seed: &VortexConfig,
    max_sweeps: Option<usize>,
    dir: &Path,
    sha: &str,
    resolution: usize,
) -> Result<MinimizeOutcome, CliError> {
    let state0 = build_test_configuration(seed, &geo.london, &med.u, med.epsilon(), hex)?;
    let mut sched = MinimizeSchedule::for_state(&state0);
    if let Some(m) = max_sweeps {
        sched.max_sweeps = m;
    }
    let outcome = glpin_core::gl::minimize(&state0, &sched)?;
    ensure_dir(dir)?;
    dump_complex(dir.join("v"), &outcome.state.v)?;
    dump_links(dir.join("theta"), &outcome.state.a)?;
    let mut w = csv::Writer::from_path(dir.join("trace.csv"))
        .map_err(|e| CliError::solver(format!("trace.csv: {e}")))?;
    for t in &outcome.trace {
        w.serialize(t)
            .map_err(|e| CliError::solver(format!("trace.csv: {e}")))?;
    }
    w.flush().map_err(|e| CliError::solver(format!("trace.csv: {e}")))?;
    write_json(
        dir,
        "run.json",
        sha,
        RunReport {
            hex,
            epsilon: med.epsilon(),
            resolution,
            seeded: seed,
            max_sweeps: sched.max_sweeps,
            sweeps: outcome.sweeps,
            converged: outcome.converged,
            stalled: outcome.stalled,
            energy: outcome.energy,
            min_abs_v: outcome.state.v.min_abs(),
            fields: vec!["v", "theta"],
        },
    )?;
    Ok(outcome)
}

#[allow(clippy::too_many_arguments)]
pub fn simulate(
    loaded: &LoadedConfig,
    hex: Option<f64>,
    epsilon: Option<f64>,
    seed_vortices: Option<&Path>,
    max_sweeps: Option<usize>,
    out: Option<PathBuf>,
) -> Result<(), CliError> {
    let cfg = &loaded.config;
    let hex = hex_of(hex, cfg, "simulate")?;
    let geo = build_geometry(cfg)?;
    let med = build_medium(&geo.grid, cfg, epsilon)?;
    let seed = match seed_vortices {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
            let vc: VortexConfig = serde_json::from_str(&text).map_err(|e| {
                CliError::config(format!("{}:{}:{}: {e}", path.display(), e.line(), e.column()))
            })?;
            vc.validate(&geo.grid, med.epsilon())
                .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
            vc
        }
        None => VortexConfig::default(),
    };
    let dir = out_dir(out, cfg);
    run_minimize(&geo, &med, hex, &seed, max_sweeps, &dir, &loaded.sha256, cfg.resolution)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Analysis of a minimized state

fn load_state_v(
    dir: &Path,
    geo: &Geometry,
) -> Result<glpin_core::ComplexField, CliError> {
    load_complex(dir.join("v"), &geo.grid)
        .map_err(|e| CliError::config(format!("state {}: {e}", dir.display())))
}

pub fn analyze(
    loaded: &LoadedConfig,
    state: Option<PathBuf>,
    hex: Option<f64>,
    out: Option<PathBuf>,
) -> Result<(), CliError> {
    let cfg = &loaded.config;
    let state_dir = state.unwrap_or_else(|| out_dir(None, cfg));
    let meta = read_run_meta(&state_dir)?;
    let hex = match (hex, &meta) {
        (Some(h), _) => h,
        (None, Some(m)) => m.hex,
        (None, None) => hex_of(None, cfg, "analyze")?,
    };
    if !(hex > 0.0 && hex.is_finite()) {
        return Err(CliError::config(format!("applied field {hex} must be positive and finite")));
    }
    let geo = build_geometry(cfg)?;
    let med = build_medium(&geo.grid, cfg, meta.as_ref().map(|m| m.epsilon))?;
    let v = load_state_v(&state_dir, &geo)?;
    let threshold = cfg.pinning.b / 2.0;
    let defects = detect_defects(&v, threshold)?;
    let report = cluster_report(&defects, &geo.london, hex, &med.field)?;

    let dir = out.unwrap_or(state_dir);
    #[derive(Serialize)]
    struct AnalyzeBody<'a> {
        hex: f64,
        epsilon: f64,
        threshold: f64,
        #[serde(flatten)]
        report: &'a DefectReport,
    }
    write_json(
        &dir,
        "report.json",
        &loaded.sha256,
        AnalyzeBody { hex, epsilon: med.epsilon(), threshold, report: &report },
    )?;

    let (_, at) = bundle_for_field(&geo.grid, &geo.london, cfg, hex, 8)?;
    let summary = compare(&report, &geo.london, &at.prediction, &at.distributions, hex);
    #[derive(Serialize)]
    struct CompareBody<'a> {
        hex: f64,
        regime: &'a str,
        #[serde(flatten)]
        summary: &'a CompareSummary,
    }
    write_json(
        &dir,
        "compare.json",
        &loaded.sha256,
        CompareBody { hex, regime: &at.regime, summary: &summary },
    )
}

pub fn check_decomposition(
    loaded: &LoadedConfig,
    state: Option<PathBuf>,
    out: Option<PathBuf>,
) -> Result<(), CliError> {
    let cfg = &loaded.config;
    let state_dir = state.unwrap_or_else(|| out_dir(None, cfg));
    let meta = read_run_meta(&state_dir)?.ok_or_else(|| {
        CliError::config(format!(
            "state {}: run.json not found (produced by `simulate`)",
            state_dir.display()
        ))
    })?;
    let geo = build_geometry(cfg)?;
    let med = build_medium(&geo.grid, cfg, Some(meta.epsilon))?;
    let v = load_state_v(&state_dir, &geo)?;
    let a = load_links(state_dir.join("theta"), &geo.grid)
        .map_err(|e| CliError::config(format!("state {}: {e}", state_dir.display())))?;
    let gl_state = GLState {
        v,
        a,
        h_ex: meta.hex,
        u: med.u.clone(),
        epsilon: med.epsilon(),
    };
    let defects = detect_defects(&gl_state.v, cfg.pinning.b / 2.0)?;
    let observed = VortexConfig {
        points: defects
            .iter()
            .filter(|d| d.degree != 0)
            .map(|d| d.center)
            .collect(),
        degrees: defects
            .iter()
            .filter(|d| d.degree != 0)
            .map(|d| d.degree)
            .collect(),
    };
    let rep = decomposition_check(&gl_state, &observed, &geo.london)?;
    #[derive(Serialize)]
    struct DecompBody {
        hex: f64,
        epsilon: f64,
        defect_count: usize,
        defect_degrees: Vec<i32>,
        #[serde(flatten)]
        report: DecompositionReport,
    }
    write_json(
        &out.unwrap_or(state_dir),
        "decomposition.json",
        &loaded.sha256,
        DecompBody {
            hex: meta.hex,
            epsilon: meta.epsilon,
            defect_count: observed.points.len(),
            defect_degrees: observed.degrees,
            report: rep,
        },
    )
}

// ---------------------------------------------------------------------------
// Sweep orchestration

#[derive(Serialize)]
struct SweepRow {
    hex: f64,
    d_observed: i64,
    d_predicted: String,
    energy: f64,
    min_abs_v: f64,
}

pub fn sweep(loaded: &LoadedConfig, out: Option<PathBuf>) -> Result<(), CliError> {
    let cfg = &loaded.config;
    let spec = cfg.sweep.as_ref().ok_or_else(|| {
        CliError::config("the sweep subcommand needs a `sweep` config field".to_string())
    })?;
    let hexes = spec.values();
    let geo = build_geometry(cfg)?;
    let med = build_medium(&geo.grid, cfg, None)?;
    let top_hex = *hexes.last().expect("at least one sweep value");
    let (bundle, _) = bundle_for_field(&geo.grid, &geo.london, cfg, top_hex, 8)?;
    let dir = out_dir(out, cfg);
    ensure_dir(&dir)?;

    let rows: Result<Vec<SweepRow>, CliError> = hexes
        .par_iter()
        .enumerate()
        .map(|(i, &hex)| {
            let at = pipeline::predict_at(&bundle, hex)?;
            let dist = at
                .distributions
                .first()
                .cloned()
                .unwrap_or_else(|| vec![0; bundle.ws.n0()]);
            let seed = pipeline::seed_from_distribution(&dist, &geo.london, &med.field)?;
            let run_dir = dir.join(format!("run_{i:03}"));
            let outcome = run_minimize(
                &geo,
                &med,
                hex,
                &seed,
                None,
                &run_dir,
                &loaded.sha256,
                cfg.resolution,
            )?;
            let defects = detect_defects(&outcome.state.v, cfg.pinning.b / 2.0)?;
            let d_observed: i64 = defects.iter().map(|d| i64::from(d.degree)).sum();
            let d_predicted = match at.prediction {
                Prediction::Definite { d } => d.to_string(),
                Prediction::Ambiguous { d_lo, d_hi } => format!("{d_lo}..{d_hi}"),
            };
            Ok(SweepRow {
                hex,
                d_observed,
                d_predicted,
                energy: outcome.energy.total,
                min_abs_v: outcome.state.v.min_abs(),
            })
        })
        .collect();
    let rows = rows?;

    let mut w = csv::Writer::from_path(dir.join("sweep.csv"))
        .map_err(|e| CliError::solver(format!("sweep.csv: {e}")))?;
    for row in &rows {
        w.serialize(row)
            .map_err(|e| CliError::solver(format!("sweep.csv: {e}")))?;
    }
    w.flush().map_err(|e| CliError::solver(format!("sweep.csv: {e}")))?;
    Ok(())
}
