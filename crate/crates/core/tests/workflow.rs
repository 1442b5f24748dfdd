//! End-to-end workflow at smoke scale (n = 64): seed a vortex configuration
//! from the reduced model, relax the full energy, detect and classify the
//! defects, compare against the prediction, check the energy decomposition,
//! and round-trip the dumped fields.

use std::sync::{Arc, OnceLock};

use glpin_core::critical::{
    build_cluster_table, build_energy_coefficients, build_ladder, build_well_system, predict,
    wbar_of, Prediction,
};
use glpin_core::gl::{
    build_test_configuration, decomposition_check, energy_full, minimize, GLState,
    MinimizeOutcome, MinimizeSchedule, VortexConfig,
};
use glpin_core::io::{dump_complex, dump_links, load_complex, load_links};
use glpin_core::london::{
    build_london, london_from_xi0, synthetic_xi0, GaussianWell, LondonData,
};
use glpin_core::pinning::{
    build_pinning_term, solve_lassoued_mironescu, PinningField, PinningSpec,
};
use glpin_core::vortex::{cluster_report, compare, detect_defects};
use glpin_core::{build_grid, DomainSpec, Grid, Point2, ScalarField};

const N: usize = 64;
const B: f64 = 0.5;
const EPSILON: f64 = 0.06;
const HEX_ABOVE: f64 = 7.0;
const HEX_BELOW: f64 = 3.0;

struct Fixture {
    grid: Arc<Grid>,
    london: LondonData,
    pin: PinningField,
    u: ScalarField,
}

fn fixture() -> &'static Fixture {
    static FIX: OnceLock<Fixture> = OnceLock::new();
    FIX.get_or_init(|| {
        let grid = build_grid(&DomainSpec::disk(1.0), N).expect("grid");
        let london = build_london(&grid).expect("london");
        let spec = PinningSpec {
            b: B,
            lambda: 0.45,
            delta: 0.5,
            omega: DomainSpec::disk(0.25),
            epsilon: EPSILON,
        };
        let pin = build_pinning_term(&grid, &spec).expect("pinning term");
        let u = solve_lassoued_mironescu(&pin).expect("modulus profile");
        Fixture { grid, london, pin, u }
    })
}

/// One seeded relaxation above the first critical field, shared by the
/// detection, decomposition, and round-trip tests.
fn seeded_run() -> &'static MinimizeOutcome {
    static RUN: OnceLock<MinimizeOutcome> = OnceLock::new();
    RUN.get_or_init(|| {
        let f = fixture();
        let config = VortexConfig::unit(vec![Point2::new(0.0, 0.0)]);
        let state = build_test_configuration(&config, &f.london, &f.u, EPSILON, HEX_ABOVE)
            .expect("seeded state");
        let mut sched = MinimizeSchedule::for_state(&state);
        sched.max_sweeps = 5000;
        minimize(&state, &sched).expect("minimize")
    })
}

#[test]
fn seeded_state_above_threshold_keeps_one_pinned_vortex() {
    let f = fixture();
    let run = seeded_run();
    assert!(run.energy.total.is_finite());

    let defects = detect_defects(&run.state.v, B / 2.0).expect("detect");
    assert_eq!(defects.len(), 1, "expected a single defect, got {defects:?}");
    assert_eq!(defects[0].degree, 1);

    let report = cluster_report(&defects, &f.london, HEX_ABOVE, &f.pin).expect("cluster");
    let center = report.defects[0]
        .inclusion_center
        .expect("defect should sit inside an inclusion");
    assert!(
        center.norm() < 1e-9,
        "defect should be pinned at the central inclusion, found {center:?}"
    );
    let entry = report.cluster.get(&0).expect("well 0 entry");
    assert_eq!(entry.count, 1);

    let summary = compare(
        &report,
        &f.london,
        &Prediction::Definite { d: 1 },
        &[vec![1]],
        HEX_ABOVE,
    );
    assert!(summary.count_consistent);
    assert!(summary.all_degrees_one);
    assert_eq!(summary.observed_distribution, vec![1]);
    assert_eq!(summary.distribution_in_predicted_set, Some(true));
}

#[test]
fn vortex_free_state_relaxes_to_the_field_energy() {
    let f = fixture();
    let state = build_test_configuration(&VortexConfig::default(), &f.london, &f.u, EPSILON, HEX_BELOW)
        .expect("vortex-free state");
    let plug = energy_full(&state).total;
    let expected = HEX_BELOW * HEX_BELOW * f.london.j0;
    let rel = (plug - expected).abs() / expected;
    // The link-field energy and the node quadrature behind J₀ treat the
    // boundary strip differently, so the gap closes only at O(h).
    assert!(
        rel < 0.08,
        "plug-in energy {plug} vs h_ex² J₀ = {expected} (rel {rel})"
    );

    let mut sched = MinimizeSchedule::for_state(&state);
    sched.max_sweeps = 3000;
    let run = minimize(&state, &sched).expect("minimize");
    let total = run.energy.total;
    assert!(total <= plug + 1e-9, "descent increased the energy: {plug} -> {total}");
    assert!(
        total >= 0.9 * plug,
        "vortex-free relaxation moved too far from the field energy: {plug} -> {total}"
    );
    let min_abs = run.state.v.min_abs();
    assert!(min_abs > 0.9, "min |v| = {min_abs}, expected a vortex-free state");
    let defects = detect_defects(&run.state.v, B / 2.0).expect("detect");
    assert!(defects.is_empty(), "unexpected defects: {defects:?}");
}

#[test]
fn decomposition_identity_holds_for_the_relaxed_state() {
    let f = fixture();
    let run = seeded_run();
    let defects = detect_defects(&run.state.v, B / 2.0).expect("detect");
    let config = VortexConfig::unit(defects.iter().map(|d| d.center).collect());
    let rep = decomposition_check(&run.state, &config, &f.london).expect("decomposition");
    assert!(
        rep.residual_rel <= 0.05,
        "decomposition residual {} (excess {}, rhs {})",
        rep.residual_rel,
        rep.excess,
        rep.rhs
    );
}

#[test]
fn dumped_state_reloads_bit_for_bit() {
    let f = fixture();
    let run = seeded_run();
    let dir = tempfile::tempdir().expect("tempdir");
    dump_complex(dir.path().join("v"), &run.state.v).expect("dump v");
    dump_links(dir.path().join("theta"), &run.state.a).expect("dump theta");

    let v = load_complex(dir.path().join("v"), &f.grid).expect("load v");
    let a = load_links(dir.path().join("theta"), &f.grid).expect("load theta");
    for (x, y) in run.state.v.data.iter().zip(&v.data) {
        assert_eq!(x.re.to_bits(), y.re.to_bits());
        assert_eq!(x.im.to_bits(), y.im.to_bits());
    }
    for (x, y) in run.state.a.tx.iter().zip(&a.tx) {
        assert_eq!(x.to_bits(), y.to_bits());
    }
    for (x, y) in run.state.a.ty.iter().zip(&a.ty) {
        assert_eq!(x.to_bits(), y.to_bits());
    }

    let rebuilt = GLState {
        v,
        a,
        h_ex: HEX_ABOVE,
        u: f.u.clone(),
        epsilon: EPSILON,
    };
    let e0 = energy_full(&run.state);
    let e1 = energy_full(&rebuilt);
    assert_eq!(e0.total.to_bits(), e1.total.to_bits());
}

#[test]
fn synthetic_double_well_splits_a_pair_across_wells() {
    let grid = build_grid(&DomainSpec::disk(1.0), N).expect("grid");
    let wells = [
        GaussianWell { center: Point2::new(-0.45, 0.0), depth: 0.3, width: 0.22 },
        GaussianWell { center: Point2::new(0.45, 0.0), depth: 0.3, width: 0.22 },
    ];
    let xi0 = synthetic_xi0(&grid, &wells);
    let london = london_from_xi0(xi0).expect("london data");
    assert_eq!(london.minima.len(), 2, "minima: {:?}", london.minima);

    let ws = build_well_system(&grid, &london).expect("well system");
    assert_eq!(ws.n0(), 2);
    let cluster = build_cluster_table(&ws, 2).expect("cluster table");
    let (w2, argmins) = wbar_of(&ws, &cluster, 2);
    assert_eq!(argmins, vec![vec![1, 1]], "optimal split should use both wells");
    let stacked = ws.interaction(&[2, 0]) + cluster[&(0, 2)];
    assert!(
        w2 < stacked,
        "split value {w2} should beat stacking both in one well ({stacked})"
    );

    let coeffs =
        build_energy_coefficients(&ws, london.j0, london.m_omega, 8.0, 4).expect("coefficients");
    let ladder = build_ladder(&coeffs).expect("ladder");
    assert_eq!(*ladder.dstar.first().unwrap(), 0);
    assert_eq!(*ladder.dstar.last().unwrap(), 2);
    assert_eq!(
        predict(&coeffs, &ladder, 1.0).expect("predict"),
        Prediction::Definite { d: 0 }
    );
}
