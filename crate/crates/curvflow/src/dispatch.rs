//! Subcommand implementations over the library: flow runs, CFC solves,
//! foliation sweeps, stability spectra, recovery experiments, and the
//! property/oracle suites.


use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::ambient::AmbientSpec;
use crate::cfc;
use crate::config::RunConfig;
use crate::curvfun::{
    check_fh_inequality, check_maclaurin, sample_cone, ConeKind, CurvatureFunctionSpec,
    CurvatureKind, SupplementaryKind,
};
use crate::error::{Error, Result};
use crate::flow::{Flow, FlowConfig, ForceMode};
use crate::geometry;
use crate::grid::{Grid, ScalarField};
use crate::linalg;
use crate::report;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Flow,
    Cfc,
    Foliate,
    Stability,
    Recover,
    Check,
    Oracle,
}

impl Command {
    pub fn parse(s: &str) -> Result<Command> {
        Ok(match s {
            "flow" => Command::Flow,
            "cfc" => Command::Cfc,
            "foliate" => Command::Foliate,
            "stability" => Command::Stability,
            "recover" => Command::Recover,
            "check" => Command::Check,
            "oracle" => Command::Oracle,
            other => {
                return Err(Error::InvalidArgument(format!(
                    "unknown subcommand {other:?}"
                )))
            }
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Command::Flow => "flow",
            Command::Cfc => "cfc",
            Command::Foliate => "foliate",
            Command::Stability => "stability",
            Command::Recover => "recover",
            Command::Check => "check",
            Command::Oracle => "oracle",
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct DispatchOptions {
    pub workers: usize,
    pub cadence: Option<usize>,
}

impl Default for DispatchOptions {
    fn default() -> Self {
        DispatchOptions {
            workers: 1,
            cadence: None,
        }
    }
}

/// Runs one subcommand inside a worker pool of the requested size and writes
/// its artifacts under the configured output directory.
pub fn dispatch(command: Command, config: &RunConfig, opts: &DispatchOptions) -> Result<()> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.workers)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("worker pool: {e}")))?;
    pool.install(|| run_command(command, config, opts))
}

fn run_command(command: Command, config: &RunConfig, opts: &DispatchOptions) -> Result<()> {
    std::fs::create_dir_all(&config.output_dir)?;
    let mut flow_config = config.flow.clone();
    if let Some(cadence) = opts.cadence {
        flow_config.cadence = cadence;
    }
    match command {
        Command::Flow => cmd_flow(config, &flow_config),
        Command::Cfc => cmd_cfc(config, &flow_config),
        Command::Foliate => cmd_foliate(config, &flow_config),
        Command::Stability => cmd_stability(config, &flow_config),
        Command::Recover => cmd_recover(config, &flow_config),
        Command::Check => cmd_check(config),
        Command::Oracle => cmd_oracle(config),
    }
}

fn cmd_flow(config: &RunConfig, flow_config: &FlowConfig) -> Result<()> {
    let u0 = config.initial_field()?;
    let flow = Flow::new(flow_config.clone());
    let out = flow.run(&u0)?;
    report::write_jsonl(&config.output_dir.join("diagnostics.jsonl"), &out.records)?;
    out.state
        .u
        .write_binary(&config.output_dir.join("final_field.cfld"))?;
    report::write_final_report(
        &config.output_dir.join("report.json"),
        "flow",
        &out.report.status,
        &out.report,
        &config.raw,
    )?;
    if out.report.status != "converged" {
        return Err(Error::NoConvergence(out.report.stop_reason));
    }
    Ok(())
}

#[derive(Serialize)]
struct CfcPayload {
    c: f64,
    residual: f64,
    steps: usize,
    t_used: f64,
    field_file: String,
}

fn cfc_target(config: &RunConfig) -> Result<f64> {
    config.cfc.c.ok_or_else(|| {
        Error::Validation(vec!["this subcommand needs cfc.c in the config".into()])
    })
}

fn cmd_cfc(config: &RunConfig, flow_config: &FlowConfig) -> Result<()> {
    let c = cfc_target(config)?;
    let tol = config.cfc.tol.unwrap_or(1e-8);
    let u0 = config.initial_field()?;
    let result = cfc::solve_cfc(flow_config, c, &u0, tol)?;
    result
        .u
        .write_binary(&config.output_dir.join("cfc_field.cfld"))?;
    report::write_final_report(
        &config.output_dir.join("report.json"),
        "cfc",
        "converged",
        CfcPayload {
            c,
            residual: result.residual,
            steps: result.steps,
            t_used: result.t_used,
            field_file: "cfc_field.cfld".into(),
        },
        &config.raw,
    )
}

#[derive(Serialize)]
struct FoliatePayload {
    taus: Vec<f64>,
    residuals: Vec<f64>,
    areas: Vec<f64>,
    volumes: Vec<f64>,
    ordering_margins: Vec<f64>,
    violations: Vec<String>,
    directory: String,
}

fn cmd_foliate(config: &RunConfig, flow_config: &FlowConfig) -> Result<()> {
    let c1 = config.cfc.c1.ok_or_else(|| {
        Error::Validation(vec!["foliate needs cfc.c1".into()])
    })?;
    let c2 = config.cfc.c2.ok_or_else(|| {
        Error::Validation(vec!["foliate needs cfc.c2".into()])
    })?;
    let m = config.cfc.m.unwrap_or(8);
    let tol = config.cfc.tol.unwrap_or(1e-8);
    let u0 = config.initial_field()?;
    let result = cfc::foliate(flow_config, c1, c2, m, &u0, tol)?;
    let dir = config.output_dir.join("foliation");
    result.write_dir(&dir)?;
    let status = if result.violations.is_empty() {
        "converged"
    } else {
        "monotonicity-violation"
    };
    report::write_final_report(
        &config.output_dir.join("report.json"),
        "foliate",
        status,
        FoliatePayload {
            taus: result.taus.clone(),
            residuals: result.residuals.clone(),
            areas: result.areas.clone(),
            volumes: result.volumes.clone(),
            ordering_margins: result.ordering_margins.clone(),
            violations: result.violations.clone(),
            directory: "foliation".into(),
        },
        &config.raw,
    )
}

fn cmd_stability(config: &RunConfig, flow_config: &FlowConfig) -> Result<()> {
    let c = cfc_target(config)?;
    let tol = config.cfc.tol.unwrap_or(1e-8);
    let u0 = config.initial_field()?;
    let solved = cfc::solve_cfc(flow_config, c, &u0, tol)?;
    let (_, payload) =
        cfc::stability_report(&flow_config.ambient, &flow_config.curvature, &solved.u)?;
    solved
        .u
        .write_binary(&config.output_dir.join("cfc_field.cfld"))?;
    report::write_final_report(
        &config.output_dir.join("report.json"),
        "stability",
        "converged",
        payload,
        &config.raw,
    )
}

fn cmd_recover(config: &RunConfig, flow_config: &FlowConfig) -> Result<()> {
    let c = cfc_target(config)?;
    let tol = config.cfc.tol.unwrap_or(1e-8);
    let amplitude = config.cfc.amplitude.unwrap_or(0.02);
    let k = config.cfc.match_k.unwrap_or(0);
    let mode = config.cfc.mode.unwrap_or(0);
    let u0 = config.initial_field()?;
    let solved = cfc::solve_cfc(flow_config, c, &u0, tol)?;
    let (payload, u_final) = cfc::recover_cfc(flow_config, &solved.u, amplitude, k, mode)?;
    u_final.write_binary(&config.output_dir.join("recovered_field.cfld"))?;
    report::write_final_report(
        &config.output_dir.join("report.json"),
        "recover",
        &payload.status.clone(),
        payload,
        &config.raw,
    )
}

// ----------------------------------------------------------------------------
// The property suites, shared with the acceptance tests.

#[derive(Clone, Debug, Serialize)]
pub struct AuditResult {
    pub name: String,
    pub samples: usize,
    pub worst_violation: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct CheckReport {
    pub maclaurin: AuditResult,
    pub fh_inequality: AuditResult,
    pub euler_trace: AuditResult,
    pub supplementary: AuditResult,
    pub fixed_point: AuditResult,
    pub conservation_smoke: AuditResult,
    pub pass: bool,
}

/// Runs the algebraic inequality and conservation property suites.
pub fn run_check_suite(maclaurin_samples: usize, fh_samples: usize, euler_samples: usize) -> Result<CheckReport> {
    // Maclaurin chain on rejection-sampled Γ₂ points at n = 3
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = 0.0f64;
    for _ in 0..maclaurin_samples {
        let kappa = sample_cone(&ConeKind::Gamma(2), 3, &mut rng);
        for pair in check_maclaurin(&kappa, 3) {
            if pair.applicable {
                worst = worst.max(-pair.slack);
            }
        }
    }
    let maclaurin = AuditResult {
        name: "maclaurin-chain".into(),
        samples: maclaurin_samples,
        worst_violation: worst,
        tolerance: 1e-12,
        pass: worst <= 1e-12,
    };

    // F ≤ F(1,…,1) H / n across the shipped function families
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let specs: Vec<(CurvatureFunctionSpec, usize)> = vec![
        (CurvatureFunctionSpec::mean(), 3),
        (CurvatureFunctionSpec::sqrt_h2(), 2),
        (CurvatureFunctionSpec::sqrt_h2(), 3),
        (CurvatureFunctionSpec::sigma_n(), 3),
        (
            CurvatureFunctionSpec::new(CurvatureKind::KStarProduct { a: 0.5 }, None)?,
            3,
        ),
    ];
    let per_spec = fh_samples / specs.len();
    let mut worst = 0.0f64;
    for (spec, n) in &specs {
        for _ in 0..per_spec {
            let kappa = sample_cone(&spec.cone, *n, &mut rng);
            let slack = check_fh_inequality(spec, &kappa, *n)?;
            worst = worst.max(-slack);
        }
    }
    let fh_inequality = AuditResult {
        name: "fh-inequality".into(),
        samples: per_spec * specs.len(),
        worst_violation: worst,
        tolerance: 1e-12,
        pass: worst <= 1e-12,
    };

    // Euler trace identity F^{ij} h_ij = F on random admissible (h, g)
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut worst = 0.0f64;
    let mut tested = 0usize;
    let spec = CurvatureFunctionSpec::sigma_n();
    while tested < euler_samples {
        let (h, g) = random_admissible_pair(&mut rng);
        let (kappa, _) = match linalg::generalized_sym_eigen(3, &h, &g) {
            Some(x) => x,
            None => continue,
        };
        if kappa[0] <= 1e-6 {
            continue;
        }
        tested += 1;
        let f_ij = spec.tensor(3, &h, &g)?;
        let mut trace = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                trace += f_ij[i][j] * h[i][j];
            }
        }
        let f = spec.value(3, &kappa)?;
        worst = worst.max((trace - f).abs() / f.abs().max(1.0));
    }
    let euler_trace = AuditResult {
        name: "euler-trace".into(),
        samples: tested,
        worst_violation: worst,
        tolerance: 1e-10,
        pass: worst <= 1e-10,
    };

    // Φ' > 0, Φ'' ≤ 0 and Φ⁻¹(Φ(x)) = x sampled on the domains
    let mut worst = 0.0f64;
    for kind in [
        SupplementaryKind::Identity,
        SupplementaryKind::NegReciprocal,
        SupplementaryKind::Log,
    ] {
        let mut prev = f64::INFINITY;
        for i in 1..=1000 {
            let x = i as f64 * 0.01;
            let d = kind.dphi(x)?;
            if d <= 0.0 {
                worst = worst.max(1.0);
            }
            worst = worst.max(d - prev);
            prev = d;
            let back = kind.inverse(kind.value(x)?)?;
            worst = worst.max((back - x).abs() / x.max(1.0));
        }
    }
    let supplementary = AuditResult {
        name: "supplementary-functions".into(),
        samples: 3000,
        worst_violation: worst.max(0.0),
        tolerance: 1e-12,
        pass: worst <= 1e-12,
    };

    // homogeneous states are exact equilibria
    let spec = AmbientSpec::minkowski_torus(1, &[std::f64::consts::TAU])?;
    let grid = Grid::new(1, &[64], &[std::f64::consts::TAU])?;
    let config = FlowConfig::new(
        spec,
        CurvatureFunctionSpec::mean(),
        SupplementaryKind::Identity,
        ForceMode::Preserve { k: 0 },
    );
    let flow = Flow::new(config);
    let u = ScalarField::constant(grid, 0.2);
    let eval = flow.evaluate(&u)?;
    let mut state = crate::flow::FlowState {
        t: 0.0,
        u: u.clone(),
        eval,
        dt_last: 0.0,
    };
    for _ in 0..5 {
        state = flow.step(&state)?;
    }
    let worst = state
        .u
        .values
        .iter()
        .zip(u.values.iter())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    let fixed_point = AuditResult {
        name: "fixed-point-exactness".into(),
        samples: 5,
        worst_violation: worst,
        tolerance: 1e-13,
        pass: worst <= 1e-13,
    };

    // short conservation smoke run
    let spec = AmbientSpec::minkowski_torus(1, &[std::f64::consts::TAU])?;
    let grid = Grid::new(1, &[64], &[std::f64::consts::TAU])?;
    let mut config = FlowConfig::new(
        spec,
        CurvatureFunctionSpec::mean(),
        SupplementaryKind::Identity,
        ForceMode::Preserve { k: 0 },
    );
    config.tol_eta = 1e-6;
    config.cadence = 50;
    let flow = Flow::new(config);
    let u0 = ScalarField::from_fn(grid, |x| 0.1 * x[0].sin());
    let out = flow.run(&u0)?;
    let drift = out
        .report
        .drifts
        .iter()
        .find(|d| d.name == "volume")
        .map(|d| d.max_rel_drift)
        .unwrap_or(f64::NAN);
    let conservation_smoke = AuditResult {
        name: "volume-conservation-smoke".into(),
        samples: out.report.steps,
        worst_violation: drift,
        tolerance: 1e-8,
        pass: drift <= 1e-8,
    };

    let pass = maclaurin.pass
        && fh_inequality.pass
        && euler_trace.pass
        && supplementary.pass
        && fixed_point.pass
        && conservation_smoke.pass;
    Ok(CheckReport {
        maclaurin,
        fh_inequality,
        euler_trace,
        supplementary,
        fixed_point,
        conservation_smoke,
        pass,
    })
}

fn random_admissible_pair(rng: &mut ChaCha8Rng) -> (linalg::Mat3, linalg::Mat3) {
    use rand::Rng;
    let mut a = linalg::ZERO_MAT;
    for i in 0..3 {
        for j in 0..3 {
            a[i][j] = rng.gen_range(-1.0..1.0);
        }
    }
    let mut g = linalg::ZERO_MAT;
    for i in 0..3 {
        for j in 0..3 {
            let mut s = 0.0;
            for k in 0..3 {
                s += a[i][k] * a[j][k];
            }
            g[i][j] = s + if i == j { 0.5 } else { 0.0 };
        }
    }
    let mut h = linalg::ZERO_MAT;
    for i in 0..3 {
        for j in 0..3 {
            h[i][j] = 0.7 * g[i][j];
            if i == j {
                h[i][j] += rng.gen_range(0.0..0.3);
            }
        }
    }
    (h, g)
}

#[derive(Clone, Debug, Serialize)]
pub struct RefinementStudy {
    pub name: String,
    pub grid_points: Vec<usize>,
    pub errors: Vec<f64>,
    /// Mean observed order under doubling.
    pub order: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct OracleReport {
    pub pairs: Vec<RefinementStudy>,
    pub gauss: RefinementStudy,
    pub pass: bool,
}

/// Grid-refinement comparisons of the second-fundamental-form formula
/// against the embedding oracle on three (ambient, graph) pairs, plus the
/// Gauss-equation residual study in the flat ambient.
pub fn run_oracle_suite() -> Result<OracleReport> {
    let tau = std::f64::consts::TAU;
    let mut pairs = Vec::new();

    // pair 1: flat ambient, one-dimensional wave
    {
        let spec = AmbientSpec::minkowski_torus(1, &[tau])?;
        let f = |x: &linalg::Vec3| 0.3 * x[0].sin();
        pairs.push(oracle_refinement(
            "minkowski-n1-sine",
            &spec,
            &[64, 128, 256],
            &f,
        )?);
    }
    // pair 2: flat ambient, two-dimensional mixed modes
    {
        let spec = AmbientSpec::minkowski_torus(2, &[tau, tau])?;
        let f = |x: &linalg::Vec3| 0.15 * x[0].sin() + 0.1 * (2.0 * x[1]).cos();
        pairs.push(oracle_refinement(
            "minkowski-n2-mixed",
            &spec,
            &[16, 32, 64],
            &f,
        )?);
    }
    // pair 3: conformal power-law ambient, wave on a slice
    {
        let spec = AmbientSpec::conformal_powerlaw(1, &[tau], -1.0)?;
        let f = |x: &linalg::Vec3| -1.0 + 0.1 * x[0].sin();
        pairs.push(oracle_refinement(
            "powerlaw-n1-sine",
            &spec,
            &[64, 128, 256],
            &f,
        )?);
    }

    // Gauss-equation residual, flat ambient, n = 2
    let spec = AmbientSpec::minkowski_torus(2, &[tau, tau])?;
    let mut errors = Vec::new();
    let points = vec![16usize, 32, 64];
    for &np in &points {
        let grid = Grid::new(2, &[np, np], &[tau, tau])?;
        let u = ScalarField::from_fn(grid, |x| 0.2 * x[0].sin() * x[1].sin());
        let geom = geometry::graph_geometry(&spec, &u)?;
        let r = geometry::induced_scalar_curvature(&geom)?;
        let mut max_res = 0.0f64;
        for idx in 0..grid.len() {
            let prod = geom.kappa[idx][0] * geom.kappa[idx][1];
            max_res = max_res.max((r.values[idx] + 2.0 * prod).abs());
        }
        errors.push(max_res);
    }
    let gauss = study_from_errors("gauss-equation-residual", points, errors, 1.9);

    let pass = pairs.iter().all(|p| p.pass) && gauss.pass;
    Ok(OracleReport { pairs, gauss, pass })
}

fn oracle_refinement(
    name: &str,
    spec: &AmbientSpec,
    points: &[usize],
    profile: &dyn Fn(&linalg::Vec3) -> f64,
) -> Result<RefinementStudy> {
    let mut errors = Vec::new();
    for &np in points {
        let dims: Vec<usize> = (0..spec.n).map(|_| np).collect();
        let periods: Vec<f64> = (0..spec.n).map(|a| spec.periods[a]).collect();
        let grid = Grid::new(spec.n, &dims, &periods)?;
        let u = ScalarField::from_fn(grid, profile);
        let geom = geometry::graph_geometry(spec, &u)?;
        let oracle = geometry::embedding_oracle_h(spec, &u)?;
        let mut max_err = 0.0f64;
        for idx in 0..grid.len() {
            for i in 0..spec.n {
                for j in 0..spec.n {
                    max_err = max_err.max((geom.h[idx][i][j] - oracle[idx][i][j]).abs());
                }
            }
        }
        errors.push(max_err);
    }
    Ok(study_from_errors(name, points.to_vec(), errors, 1.9))
}

fn study_from_errors(
    name: &str,
    grid_points: Vec<usize>,
    errors: Vec<f64>,
    min_order: f64,
) -> RefinementStudy {
    let mut orders = Vec::new();
    for w in errors.windows(2) {
        orders.push((w[0] / w[1]).log2());
    }
    let order = orders.iter().sum::<f64>() / orders.len() as f64;
    RefinementStudy {
        name: name.into(),
        grid_points,
        errors,
        order,
        pass: order >= min_order,
    }
}

fn cmd_check(config: &RunConfig) -> Result<()> {
    let report = run_check_suite(100_000, 100_000, 10_000)?;
    let status = if report.pass { "pass" } else { "fail" };
    report::write_final_report(
        &config.output_dir.join("check_report.json"),
        "check",
        status,
        &report,
        &config.raw,
    )?;
    if !report.pass {
        return Err(Error::NumericalInstability(
            "property suite reported violations; see check_report.json".into(),
        ));
    }
    Ok(())
}

fn cmd_oracle(config: &RunConfig) -> Result<()> {
    let report = run_oracle_suite()?;
    let status = if report.pass { "pass" } else { "fail" };
    report::write_final_report(
        &config.output_dir.join("oracle_report.json"),
        "oracle",
        status,
        &report,
        &config.raw,
    )?;
    if !report.pass {
        return Err(Error::NumericalInstability(
            "oracle refinement orders below threshold; see oracle_report.json".into(),
        ));
    }
    Ok(())
}
