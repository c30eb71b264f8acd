//! Acceptance suite: one test per criterion, each printing a PASS line with
//! the measured numbers (run with `--nocapture` to see them). The heavy flow
//! runs are shared across criteria through a lazily initialized fixture.

use std::f64::consts::TAU;
use std::sync::OnceLock;

use curvflow::ambient::AmbientSpec;
use curvflow::cfc;
use curvflow::curvfun::{ConeKind, CurvatureFunctionSpec, SupplementaryKind};
use curvflow::dispatch::{run_check_suite, run_oracle_suite};
use curvflow::flow::{Flow, FlowConfig, ForceMode, RunOutcome};
use curvflow::grid::{Grid, ScalarField};
use curvflow::report::jsonl_string;

fn grid1(points: usize) -> Grid {
    Grid::new(1, &[points], &[TAU]).unwrap()
}

fn grid2(points: usize) -> Grid {
    Grid::new(2, &[points, points], &[TAU, TAU]).unwrap()
}

fn config(
    ambient: AmbientSpec,
    curvature: CurvatureFunctionSpec,
    phi: SupplementaryKind,
    force: ForceMode,
) -> FlowConfig {
    let mut cfg = FlowConfig::new(ambient, curvature, phi, force);
    cfg.c_safe = 0.4;
    cfg.tol_eta = 1e-9;
    cfg.cadence = 100;
    cfg.t_max = 200.0;
    cfg
}

struct Shared {
    /// Minkowski torus, n = 1, N = 256, F = H, Φ = id, preserve(0).
    mink_n1_256: RunOutcome,
    /// Same scenario at N = 128 for the decay-rate doubling check.
    mink_n1_128: RunOutcome,
    /// Power law, n = 1, N = 256, F = H on Γ₁, preserve(1).
    pl_area_n1_256: RunOutcome,
    /// Power law, n = 2, F = √H₂, Φ = -1/x, preserve(0) at 32² and 64².
    pl_s2_n2_32: RunOutcome,
    pl_s2_n2_64: RunOutcome,
    /// Power law, n = 1, F = σ_n (class (K*)), Φ = log, preserve(0).
    pl_sn_n1_128: RunOutcome,
    pl_sn_n1_256: RunOutcome,
    /// Minkowski torus, n = 2, N = 64², F = H, preserve(0) (criterion 2
    /// fallback).
    mink_n2_64: RunOutcome,
}

fn shared() -> &'static Shared {
    static SHARED: OnceLock<Shared> = OnceLock::new();
    SHARED.get_or_init(|| {
        let mink = |points: usize| {
            let cfg = config(
                AmbientSpec::minkowski_torus(1, &[TAU]).unwrap(),
                CurvatureFunctionSpec::mean(),
                SupplementaryKind::Identity,
                ForceMode::Preserve { k: 0 },
            );
            let u0 = ScalarField::from_fn(grid1(points), |x| 0.1 * x[0].sin());
            Flow::new(cfg).run(&u0).unwrap()
        };
        let mink_n1_256 = mink(256);
        let mink_n1_128 = mink(128);

        let pl_area_n1_256 = {
            let cfg = config(
                AmbientSpec::conformal_powerlaw(1, &[TAU], -1.0).unwrap(),
                CurvatureFunctionSpec::mean_gamma1(),
                SupplementaryKind::Identity,
                ForceMode::Preserve { k: 1 },
            );
            let u0 = ScalarField::from_fn(grid1(256), |x| -1.0 + 0.1 * x[0].sin());
            Flow::new(cfg).run(&u0).unwrap()
        };

        let pl_s2 = |points: usize| {
            let mut cfg = config(
                AmbientSpec::conformal_powerlaw(2, &[TAU, TAU], -1.0).unwrap(),
                CurvatureFunctionSpec::sqrt_h2(),
                SupplementaryKind::NegReciprocal,
                ForceMode::Preserve { k: 0 },
            );
            cfg.tol_eta = 1e-9;
            cfg.cadence = 20;
            let u0 = ScalarField::from_fn(grid2(points), |x| {
                -1.0 + 0.02 * (x[0].sin() + x[1].cos())
            });
            Flow::new(cfg).run(&u0).unwrap()
        };
        let pl_s2_n2_32 = pl_s2(32);
        let pl_s2_n2_64 = pl_s2(64);

        let pl_sn = |points: usize| {
            let cfg = config(
                AmbientSpec::conformal_powerlaw(1, &[TAU], -1.0).unwrap(),
                CurvatureFunctionSpec::sigma_n(),
                SupplementaryKind::Log,
                ForceMode::Preserve { k: 0 },
            );
            let u0 = ScalarField::from_fn(grid1(points), |x| -1.0 + 0.05 * x[0].sin());
            Flow::new(cfg).run(&u0).unwrap()
        };
        let pl_sn_n1_128 = pl_sn(128);
        let pl_sn_n1_256 = pl_sn(256);

        let mink_n2_64 = {
            let mut cfg = config(
                AmbientSpec::minkowski_torus(2, &[TAU, TAU]).unwrap(),
                CurvatureFunctionSpec::mean(),
                SupplementaryKind::Identity,
                ForceMode::Preserve { k: 0 },
            );
            cfg.tol_eta = 1e-8;
            cfg.cadence = 20;
            let u0 = ScalarField::from_fn(grid2(64), |x| 0.05 * x[0].sin() * x[1].sin());
            Flow::new(cfg).run(&u0).unwrap()
        };

        Shared {
            mink_n1_256,
            mink_n1_128,
            pl_area_n1_256,
            pl_s2_n2_32,
            pl_s2_n2_64,
            pl_sn_n1_128,
            pl_sn_n1_256,
            mink_n2_64,
        }
    })
}

fn drift_of(out: &RunOutcome, name: &str) -> f64 {
    out.report
        .drifts
        .iter()
        .find(|d| d.name == name)
        .unwrap_or_else(|| panic!("missing drift record {name}"))
        .max_rel_drift
}

/// Least-squares slope of log(err) against log(dt).
fn fit_order(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|(dt, _)| dt.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|(_, e)| e.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

// ---------------------------------------------------------------------------

#[test]
fn criterion_01_conservation() {
    let s = shared();
    // preserve(0): enclosed volume in the flat torus
    let vol_drift = drift_of(&s.mink_n1_256, "volume");
    assert_eq!(s.mink_n1_256.report.status, "converged");
    assert!(vol_drift <= 1e-5, "volume drift {vol_drift:.3e}");

    // preserve(1): hypersurface area in the admissible power-law ambient
    let area_drift = drift_of(&s.pl_area_n1_256, "area");
    assert_eq!(s.pl_area_n1_256.report.status, "converged");
    assert!(area_drift <= 1e-5, "area drift {area_drift:.3e}");

    // dt refinement: in the curved ambient the enclosed volume drift is
    // purely temporal and must shrink at the integrator's order (>= 3).
    // (In the flat torus the semi-discrete conservation is exact, so the
    // drift sits at roundoff for every dt and no order is measurable there.)
    let mut pts_vol = Vec::new();
    let mut area_floor = Vec::new();
    for c_safe in [0.45, 0.3, 0.15] {
        for k in [0usize, 1] {
            let mut cfg = config(
                AmbientSpec::conformal_powerlaw(1, &[TAU], -1.0).unwrap(),
                CurvatureFunctionSpec::mean_gamma1(),
                SupplementaryKind::Identity,
                ForceMode::Preserve { k },
            );
            cfg.c_safe = c_safe;
            cfg.tol_eta = 0.0;
            cfg.t_max = 1.0;
            cfg.cadence = 10;
            let flow = Flow::new(cfg);
            let u0 = ScalarField::from_fn(grid1(64), |x| -1.0 + 0.1 * x[0].sin());
            let dt = flow.dt_select(&flow.evaluate(&u0).unwrap()).unwrap();
            let out = flow.run(&u0).unwrap();
            if k == 0 {
                pts_vol.push((dt, drift_of(&out, "volume")));
            } else {
                area_floor.push(drift_of(&out, "area"));
            }
        }
    }
    let order = fit_order(&pts_vol);
    assert!(order >= 3.0, "conservation order {order:.2} from {pts_vol:?}");
    // the area functional saturates at its O(dx^4) commutation floor, far
    // below the tolerance
    let floor = area_floor.iter().cloned().fold(0.0f64, f64::max);
    assert!(floor <= 1e-6, "area commutation floor {floor:.3e}");

    println!(
        "criterion 01 PASS: volume drift {vol_drift:.3e}, area drift {area_drift:.3e}, \
         dt-refinement order {order:.2} (area floor {floor:.3e})"
    );
}

#[test]
fn criterion_02_mixed_volume_flat_ambient() {
    // A compact spacelike graph over the flat torus cannot be admissible for
    // F = sqrt(H2): the total curvature integral vanishes on T², so H₂ must
    // change sign. The auxiliary-ambient candidate demonstrates the blockage
    // and the criterion falls back to k = 0 (k = 1 is blocked the same way:
    // H changes sign on every compact flat-torus graph).
    let flat = AmbientSpec::minkowski_torus(2, &[TAU, TAU]).unwrap();
    let grid = grid2(32);
    // candidate built in the auxiliary curved ambient, where it is strictly
    // convex in kappa, then reinterpreted in the flat ambient
    let candidate = ScalarField::from_fn(grid, |x| -1.0 + 0.05 * (x[0].sin() + x[1].cos()));
    let aux = AmbientSpec::conformal_powerlaw(2, &[TAU, TAU], -1.0).unwrap();
    let geom_aux = curvflow::geometry::graph_geometry(&aux, &candidate).unwrap();
    let mut aux_slack = f64::INFINITY;
    for idx in 0..grid.len() {
        let (inside, slack) = ConeKind::Gamma(2).contains(2, &geom_aux.kappa[idx]);
        assert!(inside, "auxiliary-ambient candidate must be admissible");
        aux_slack = aux_slack.min(slack);
    }
    let geom_flat = curvflow::geometry::graph_geometry(&flat, &candidate).unwrap();
    let mut flat_slack = f64::INFINITY;
    for idx in 0..grid.len() {
        let (_, slack) = ConeKind::Gamma(2).contains(2, &geom_flat.kappa[idx]);
        flat_slack = flat_slack.min(slack);
    }
    assert!(
        flat_slack <= 0.0,
        "no admissible flat-ambient surface is expected (Gauss-Bonnet), slack {flat_slack:.3e}"
    );

    // k = 1 fallback is blocked too: the mean curvature changes sign
    let mean_gamma1 = CurvatureFunctionSpec::mean_gamma1();
    let mut h_slack = f64::INFINITY;
    for idx in 0..grid.len() {
        let (_, slack) = mean_gamma1.cone.contains(2, &geom_flat.kappa[idx]);
        h_slack = h_slack.min(slack);
    }
    assert!(h_slack <= 0.0, "H should change sign on the flat torus");

    // k = 0 runs and preserves the enclosed volume
    let s = shared();
    assert_eq!(s.mink_n2_64.report.status, "converged");
    let drift = drift_of(&s.mink_n2_64, "volume");
    assert!(drift <= 1e-4, "n = 2 volume drift {drift:.3e}");
    println!(
        "criterion 02 PASS: k = 0 fallback drift {drift:.3e}; k = 2 blocked by admissibility \
         (flat-ambient cone slack {flat_slack:.3e} vs auxiliary {aux_slack:.3e}), k = 1 blocked \
         (mean-curvature slack {h_slack:.3e})"
    );
}

#[test]
fn criterion_03_curvature_bound_monotonicity() {
    let s = shared();
    let runs: Vec<(&str, &RunOutcome)> = vec![
        ("minkowski-n1-256", &s.mink_n1_256),
        ("minkowski-n1-128", &s.mink_n1_128),
        ("powerlaw-area-n1-256", &s.pl_area_n1_256),
        ("powerlaw-s2-n2-32", &s.pl_s2_n2_32),
        ("powerlaw-s2-n2-64", &s.pl_s2_n2_64),
        ("powerlaw-sn-n1-128", &s.pl_sn_n1_128),
        ("powerlaw-sn-n1-256", &s.pl_sn_n1_256),
        ("minkowski-n2-64", &s.mink_n2_64),
    ];
    let mut worst = 0.0f64;
    for (name, out) in &runs {
        assert_eq!(out.report.status, "converged", "{name} did not converge");
        let scale = out.records[0].phi_sup - out.records[0].phi_inf;
        let slack = 1e-7 * scale;
        for w in out.records.windows(2) {
            let up = w[1].phi_sup - w[0].phi_sup;
            let down = w[0].phi_inf - w[1].phi_inf;
            assert!(
                up <= slack,
                "{name}: phi_sup increased by {up:.3e} (slack {slack:.3e})"
            );
            assert!(
                down <= slack,
                "{name}: phi_inf decreased by {down:.3e} (slack {slack:.3e})"
            );
            worst = worst.max(up / scale).max(down / scale);
        }
    }
    println!(
        "criterion 03 PASS: {} runs monotone, worst relative excursion {worst:.3e}",
        runs.len()
    );
}

#[test]
fn criterion_04_exponential_decay() {
    let s = shared();
    let families = [
        ("mean/identity", &s.mink_n1_128, &s.mink_n1_256),
        ("sqrtH2/neg-reciprocal", &s.pl_s2_n2_32, &s.pl_s2_n2_64),
        ("sigmaN/log", &s.pl_sn_n1_128, &s.pl_sn_n1_256),
    ];
    let mut summary = Vec::new();
    for (name, coarse, fine) in families {
        let fit_c = coarse.report.decay.as_ref().unwrap_or_else(|| {
            panic!("{name}: no decay fit on the coarse grid")
        });
        let fit_f = fine
            .report
            .decay
            .as_ref()
            .unwrap_or_else(|| panic!("{name}: no decay fit on the fine grid"));
        assert!(fit_f.delta > 0.0, "{name}: delta {}", fit_f.delta);
        assert!(
            fit_f.r_squared >= 0.99,
            "{name}: R^2 {}",
            fit_f.r_squared
        );
        assert!(
            fit_c.r_squared >= 0.99,
            "{name}: coarse R^2 {}",
            fit_c.r_squared
        );
        let rel = (fit_f.delta - fit_c.delta).abs() / fit_f.delta;
        assert!(
            rel <= 0.10,
            "{name}: delta changed {rel:.3} under doubling ({} vs {})",
            fit_c.delta,
            fit_f.delta
        );
        summary.push(format!(
            "{name}: delta {:.4} (doubling shift {:.2e}, R^2 {:.6})",
            fit_f.delta, rel, fit_f.r_squared
        ));
    }
    println!("criterion 04 PASS: {}", summary.join("; "));
}

#[test]
fn criterion_05_limit_is_stable_cfc() {
    let s = shared();
    // c0 = Phi^{-1}(lim f_k), final sup|F - c0| within tolerance
    for (name, out) in [
        ("minkowski-n1-256", &s.mink_n1_256),
        ("powerlaw-sn-n1-256", &s.pl_sn_n1_256),
    ] {
        let c0 = out.report.c0;
        let bound = 1e-6 * c0.abs() + 1e-9;
        assert!(
            out.report.final_sup_f_minus_c0 <= bound,
            "{name}: sup|F - c0| = {:.3e} exceeds {bound:.3e}",
            out.report.final_sup_f_minus_c0
        );
    }

    // strict stability of the power-law CFC graph
    let template = {
        let mut cfg = config(
            AmbientSpec::conformal_powerlaw(1, &[TAU], -1.0).unwrap(),
            CurvatureFunctionSpec::mean_gamma1(),
            SupplementaryKind::Identity,
            ForceMode::Constant { c: 1.0 },
        );
        cfg.cadence = 1000;
        cfg
    };
    let u0 = ScalarField::constant(grid1(256), -1.0);
    let solved = cfc::solve_cfc(&template, 1.0, &u0, 1e-10).unwrap();
    let (_, report) =
        cfc::stability_report(&template.ambient, &template.curvature, &solved.u).unwrap();
    assert!(
        report.lambda_min > 0.0,
        "lambda_min = {} on the power-law CFC",
        report.lambda_min
    );
    assert!(report.eigen_residual <= 1e-8);
    println!(
        "criterion 05 PASS: sup|F - c0| = {:.3e} (flat), {:.3e} (power law, c0 = {:.6}), \
         lambda_min = {:.4} > 0",
        s.mink_n1_256.report.final_sup_f_minus_c0,
        s.pl_sn_n1_256.report.final_sup_f_minus_c0,
        s.pl_sn_n1_256.report.c0,
        report.lambda_min
    );
}

#[test]
fn criterion_06_geometry_oracles() {
    let report = run_oracle_suite().unwrap();
    for pair in &report.pairs {
        assert!(
            pair.order >= 1.9,
            "{}: order {:.2} from errors {:?}",
            pair.name,
            pair.order,
            pair.errors
        );
    }
    assert!(
        report.gauss.order >= 1.9,
        "gauss residual order {:.2}",
        report.gauss.order
    );
    let orders: Vec<String> = report
        .pairs
        .iter()
        .map(|p| format!("{} {:.2}", p.name, p.order))
        .collect();
    println!(
        "criterion 06 PASS: oracle orders {}; gauss order {:.2}",
        orders.join(", "),
        report.gauss.order
    );
}

#[test]
fn criterion_07_algebraic_inequalities() {
    let report = run_check_suite(100_000, 100_000, 10_000).unwrap();
    assert!(
        report.maclaurin.pass,
        "maclaurin worst violation {:.3e}",
        report.maclaurin.worst_violation
    );
    assert!(
        report.fh_inequality.pass,
        "FH worst violation {:.3e}",
        report.fh_inequality.worst_violation
    );
    assert!(
        report.euler_trace.pass,
        "euler trace worst violation {:.3e}",
        report.euler_trace.worst_violation
    );
    println!(
        "criterion 07 PASS: maclaurin {:.1e} over {} pts, FH {:.1e} over {} pts, euler {:.1e} over {} pts",
        report.maclaurin.worst_violation,
        report.maclaurin.samples,
        report.fh_inequality.worst_violation,
        report.fh_inequality.samples,
        report.euler_trace.worst_violation,
        report.euler_trace.samples
    );
}

#[test]
fn criterion_08_foliation_audits() {
    let mut template = config(
        AmbientSpec::conformal_powerlaw(1, &[TAU], -1.0).unwrap(),
        CurvatureFunctionSpec::mean_gamma1(),
        SupplementaryKind::Identity,
        ForceMode::Constant { c: 1.0 },
    );
    template.cadence = 1000;
    template.t_max = 100.0;
    let u0 = ScalarField::constant(grid1(128), -1.1);
    let result = cfc::foliate(&template, 0.8, 2.4, 8, &u0, 1e-8).unwrap();
    assert!(result.violations.is_empty(), "{:?}", result.violations);
    let mut worst_slice_err = 0.0f64;
    for (j, &tau) in result.taus.iter().enumerate() {
        // closed-form slice family of the q = 1 power law: t = -(1/tau)^{1/2}
        let expect = -(1.0 / tau).sqrt();
        for v in &result.graphs[j].values {
            worst_slice_err = worst_slice_err.max((v - expect).abs());
        }
    }
    assert!(
        worst_slice_err <= 1e-6,
        "closed-form match {worst_slice_err:.3e}"
    );
    let min_margin = result
        .ordering_margins
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    assert!(min_margin > 0.0);
    for j in 0..result.taus.len() - 1 {
        assert!(result.areas[j + 1] < result.areas[j]);
        assert!(result.volumes[j + 1] > result.volumes[j]);
    }
    println!(
        "criterion 08 PASS: 8 members, slice match {worst_slice_err:.3e}, min ordering margin \
         {min_margin:.3e}, area span [{:.4}, {:.4}] decreasing, volume span [{:.4}, {:.4}] increasing",
        result.areas[result.areas.len() - 1],
        result.areas[0],
        result.volumes[0],
        result.volumes[result.volumes.len() - 1]
    );
}

#[test]
fn criterion_09_cfc_recovery() {
    let mut template = config(
        AmbientSpec::conformal_powerlaw(1, &[TAU], -1.0).unwrap(),
        CurvatureFunctionSpec::mean_gamma1(),
        SupplementaryKind::Identity,
        ForceMode::Constant { c: 1.0 },
    );
    template.cadence = 500;
    template.tol_eta = 1e-10;
    let u0 = ScalarField::constant(grid1(128), -1.0);
    let solved = cfc::solve_cfc(&template, 1.0, &u0, 1e-11).unwrap();

    let (report_a, final_a) = cfc::recover_cfc(&template, &solved.u, 0.02, 0, 0).unwrap();
    assert_eq!(report_a.status, "converged");
    assert!(
        report_a.sup_distance <= 1e-5,
        "sup distance {:.3e}",
        report_a.sup_distance
    );
    assert!(
        report_a.conserved_drift <= 1e-5,
        "volume drift {:.3e}",
        report_a.conserved_drift
    );

    let (report_b, final_b) = cfc::recover_cfc(&template, &solved.u, 0.02, 0, 1).unwrap();
    assert_eq!(report_b.status, "converged");
    let disagreement = final_a
        .values
        .iter()
        .zip(final_b.values.iter())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    assert!(disagreement <= 2e-5, "modes disagree by {disagreement:.3e}");
    println!(
        "criterion 09 PASS: recovery distance {:.3e}, volume drift {:.3e}, two-mode agreement {:.3e}",
        report_a.sup_distance, report_a.conserved_drift, disagreement
    );
}

#[test]
fn criterion_10_determinism_across_workers() {
    // node-parallel sections engage above 2048 nodes; 64² crosses that
    let make_run = |workers: usize| {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .unwrap();
        pool.install(|| {
            let mut cfg = config(
                AmbientSpec::conformal_powerlaw(2, &[TAU, TAU], -1.0).unwrap(),
                CurvatureFunctionSpec::sqrt_h2(),
                SupplementaryKind::Identity,
                ForceMode::Preserve { k: 0 },
            );
            cfg.max_steps = 40;
            cfg.cadence = 5;
            cfg.t_max = 1e6;
            let u0 = ScalarField::from_fn(grid2(64), |x| {
                -1.0 + 0.02 * (x[0].sin() + x[1].cos())
            });
            Flow::new(cfg).run(&u0).unwrap()
        })
    };
    let a = make_run(1);
    let b = make_run(4);
    assert_eq!(a.state.u.values, b.state.u.values, "final fields differ");
    let sa = jsonl_string(&a.records).unwrap();
    let sb = jsonl_string(&b.records).unwrap();
    assert_eq!(sa, sb, "diagnostics streams differ between worker counts");
    println!(
        "criterion 10 PASS: {} diagnostic samples bit-identical at workers 1 and 4",
        a.records.len()
    );
}
