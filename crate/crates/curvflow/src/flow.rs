//! The volume-preserving curvature-flow engine.
//!
//! The scalar reduction `∂u/∂t = -e^{-ψ} v (Φ(F) - f)` is stepped by
//! classical 4-stage Runge-Kutta with a parabolic time-step restriction; the
//! global term is re-evaluated at every stage. All surface integrals use a
//! fixed-topology pairwise reduction, so diagnostics are bit-identical
//! across runs and worker counts.

use serde::Serialize;

use crate::ambient::AmbientSpec;
use crate::curvfun::{
    elementary_symmetric, CurvatureFunctionSpec, CurvatureKind, SupplementaryKind,
};
use crate::error::{Error, Result};
use crate::geometry::{graph_geometry_with_margin, GraphGeometry, SPACELIKE_MARGIN};
use crate::grid::{deriv, ScalarField};
use crate::linalg::{self, tree_sum};

/// Global-term mode: `Preserve { k }` uses the H_k-weighted mean of Φ(F),
/// `Constant { c }` a fixed value of f (in Φ-scale).
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ForceMode {
    Preserve { k: usize },
    Constant { c: f64 },
}

#[derive(Clone, Debug)]
pub struct FlowConfig {
    pub ambient: AmbientSpec,
    pub curvature: CurvatureFunctionSpec,
    pub phi: SupplementaryKind,
    pub force: ForceMode,
    /// Safety factor of the parabolic step bound.
    pub c_safe: f64,
    /// Stop tolerance on the curvature oscillation (preserve mode) or on
    /// sup|Φ(F) - c| (constant mode).
    pub tol_eta: f64,
    pub t_max: f64,
    pub dt_min: f64,
    /// Denominator floor for the global term, as a fraction of the area.
    pub eps_den_scale: f64,
    /// Diagnostics are sampled every `cadence` steps.
    pub cadence: usize,
    /// Mixed volumes V_{n+1-k} tracked in the diagnostics.
    pub mixed_volume_ks: Vec<usize>,
    pub spacelike_margin: f64,
    pub max_steps: usize,
}

impl FlowConfig {
    pub fn new(
        ambient: AmbientSpec,
        curvature: CurvatureFunctionSpec,
        phi: SupplementaryKind,
        force: ForceMode,
    ) -> FlowConfig {
        let mixed_volume_ks = match force {
            ForceMode::Preserve { k } => vec![k],
            ForceMode::Constant { .. } => vec![0],
        };
        FlowConfig {
            ambient,
            curvature,
            phi,
            force,
            c_safe: 0.1,
            tol_eta: 1e-9,
            t_max: 100.0,
            dt_min: 1e-12,
            eps_den_scale: 1e-10,
            cadence: 100,
            mixed_volume_ks,
            spacelike_margin: SPACELIKE_MARGIN,
            max_steps: usize::MAX,
        }
    }

    /// Checks the (F, Γ, Φ, k) combination against the legality table; the
    /// returned list is empty for a legal configuration.
    pub fn legality_errors(&self) -> Vec<String> {
        legality_errors(
            &self.curvature,
            self.phi,
            &self.force,
            self.ambient.n,
        )
    }
}

/// Combination rules for curvature function, cone, supplementary function
/// and preserved index.
pub fn legality_errors(
    curvature: &CurvatureFunctionSpec,
    phi: SupplementaryKind,
    force: &ForceMode,
    n: usize,
) -> Vec<String> {
    use crate::curvfun::ConeKind;
    let mut errors = Vec::new();
    if matches!(curvature.kind, CurvatureKind::SqrtH2) && n < 2 {
        errors.push("sqrtH2 requires spatial dimension n >= 2".into());
    }
    match force {
        ForceMode::Preserve { k } => {
            if *k > n {
                errors.push(format!(
                    "preserve({k}) is undefined for n = {n}: k must lie in 0..=n"
                ));
            }
            match curvature.kind {
                CurvatureKind::Mean => {
                    if *k > 1 {
                        errors.push(format!(
                            "F = mean allows only k in {{0, 1}} (legality table), got k = {k}"
                        ));
                    }
                    if *k == 0 && curvature.cone == ConeKind::RN
                        && phi != SupplementaryKind::Identity
                    {
                        // on R^n the mean curvature may change sign, which
                        // only the identity reparametrization tolerates;
                        // restricted to Gamma_1 any admissible phi works
                        errors.push(
                            "F = mean with k = 0 on R^n requires the identity supplementary function"
                                .into(),
                        );
                    }
                    if *k == 1 && curvature.cone != ConeKind::Gamma(1) {
                        errors.push(
                            "F = mean with k = 1 requires the cone Gamma_1 (legality table)"
                                .into(),
                        );
                    }
                }
                CurvatureKind::SqrtH2 => {
                    if *k > 2 {
                        errors.push(format!(
                            "F = sqrtH2 allows only k in {{0, 1, 2}} (legality table), got k = {k}"
                        ));
                    }
                    if phi == SupplementaryKind::Log {
                        errors.push(
                            "F = sqrtH2 pairs with identity or neg-reciprocal (legality table)"
                                .into(),
                        );
                    }
                }
                CurvatureKind::SigmaN | CurvatureKind::KStarProduct { .. } => {
                    if phi != SupplementaryKind::Log {
                        errors.push(
                            "curvature functions on Gamma_+ pair with phi = log (legality table)"
                                .into(),
                        );
                    }
                }
            }
        }
        ForceMode::Constant { c } => {
            if curvature.cone == ConeKind::RN && phi != SupplementaryKind::Identity {
                errors.push(
                    "constant-force flow on R^n requires the identity supplementary function"
                        .into(),
                );
            }
            if phi.inverse(*c).is_err() {
                errors.push(format!(
                    "constant force value {c} lies outside the image of {phi:?}"
                ));
            }
        }
    }
    errors
}

/// Per-surface evaluation: geometry plus curvature fields and the global term.
#[derive(Clone, Debug)]
pub struct StageEval {
    pub geometry: GraphGeometry,
    /// F(κ) per node.
    pub f_curv: Vec<f64>,
    /// Φ(F) per node.
    pub phi_curv: Vec<f64>,
    /// Φ'(F) per node.
    pub dphi: Vec<f64>,
    /// Σ_a ∂F/∂κ_a per node (time-step control).
    pub grad_sum: Vec<f64>,
    /// H_k per node for the preserved index (1 for k = 0).
    pub weight: Vec<f64>,
    /// The global term f (or the configured constant).
    pub global: f64,
    pub global_numerator: f64,
    pub global_denominator: f64,
}

impl StageEval {
    pub fn phi_sup(&self) -> f64 {
        self.phi_curv.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn phi_inf(&self) -> f64 {
        self.phi_curv.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn eta(&self) -> f64 {
        self.phi_sup() - self.phi_inf()
    }
}

#[derive(Clone, Debug)]
pub struct FlowState {
    pub t: f64,
    pub u: ScalarField,
    pub eval: StageEval,
    pub dt_last: f64,
}

/// One diagnostics sample. Field names are frozen; they are emitted verbatim
/// as JSON lines.
#[derive(Clone, Debug, Serialize)]
pub struct DiagnosticsRecord {
    pub t: f64,
    pub f: f64,
    pub phi_sup: f64,
    pub phi_inf: f64,
    pub eta: f64,
    pub volume: f64,
    pub area: f64,
    pub mixed_volumes: Vec<MixedVolumeSample>,
    pub max_vtilde: f64,
    pub kappa_min: f64,
    pub kappa_max: f64,
    pub u_min: f64,
    pub u_max: f64,
    pub dt: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct MixedVolumeSample {
    pub k: usize,
    pub value: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct DecayFit {
    pub delta: f64,
    pub amplitude: f64,
    pub r_squared: f64,
    pub samples: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct DriftRecord {
    pub name: String,
    pub initial: f64,
    pub finale: f64,
    pub scale: f64,
    pub max_rel_drift: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ConvergenceReport {
    pub status: String,
    pub stop_reason: String,
    pub t_final: f64,
    pub steps: usize,
    /// c₀ = Φ⁻¹(f at stop).
    pub c0: f64,
    pub final_sup_f_minus_c0: f64,
    pub final_stop_metric: f64,
    pub decay: Option<DecayFit>,
    pub drifts: Vec<DriftRecord>,
}

pub struct RunOutcome {
    pub records: Vec<DiagnosticsRecord>,
    pub state: FlowState,
    pub report: ConvergenceReport,
}

/// Surface integral ∫ φ dμ = Σ φ √g ΠΔξ with the fixed-topology tree sum.
pub fn integrate(values: &[f64], geometry: &GraphGeometry) -> f64 {
    let products: Vec<f64> = values
        .iter()
        .zip(geometry.sqrt_g.iter())
        .map(|(v, s)| v * s)
        .collect();
    tree_sum(&products) * geometry.grid.cell_volume()
}

pub struct Flow {
    pub config: FlowConfig,
}

impl Flow {
    pub fn new(config: FlowConfig) -> Flow {
        Flow { config }
    }

    fn n(&self) -> usize {
        self.config.ambient.n
    }

    /// Geometry, curvature fields, admissibility check and global term.
    pub fn evaluate(&self, u: &ScalarField) -> Result<StageEval> {
        let n = self.n();
        let geometry =
            graph_geometry_with_margin(&self.config.ambient, u, self.config.spacelike_margin)?;
        let len = geometry.len();
        let mut f_curv = vec![0.0; len];
        let mut phi_curv = vec![0.0; len];
        let mut dphi = vec![0.0; len];
        let mut grad_sum = vec![0.0; len];
        let mut weight = vec![1.0; len];
        let k_weight = match self.config.force {
            ForceMode::Preserve { k } => k,
            ForceMode::Constant { .. } => 0,
        };
        let mut worst: Option<(usize, f64)> = None;
        for idx in 0..len {
            let (inside, slack) = self.config.curvature.cone.contains(n, &geometry.kappa[idx]);
            if !inside && worst.map_or(true, |(_, s)| slack < s) {
                worst = Some((idx, slack));
            }
        }
        if let Some((node, slack)) = worst {
            return Err(Error::NotAdmissible { node, slack });
        }
        for idx in 0..len {
            let (fv, grad) = self.config.curvature.value_grad(n, &geometry.kappa[idx])?;
            f_curv[idx] = fv;
            phi_curv[idx] = self.config.phi.value(fv)?;
            dphi[idx] = self.config.phi.dphi(fv)?;
            grad_sum[idx] = (0..n).map(|a| grad[a]).sum();
            if k_weight > 0 {
                weight[idx] = elementary_symmetric(k_weight, &geometry.kappa[idx], n)?;
            }
        }
        let (global, num, den) = match self.config.force {
            ForceMode::Constant { c } => (c, c, 1.0),
            ForceMode::Preserve { .. } => {
                let num = integrate(
                    &phi_curv
                        .iter()
                        .zip(weight.iter())
                        .map(|(p, w)| p * w)
                        .collect::<Vec<f64>>(),
                    &geometry,
                );
                let den = integrate(&weight, &geometry);
                let area = integrate(&vec![1.0; len], &geometry);
                let floor = self.config.eps_den_scale * area;
                if den.abs() < floor {
                    return Err(Error::DegenerateGlobalTerm {
                        denominator: den,
                        floor,
                    });
                }
                (num / den, num, den)
            }
        };
        Ok(StageEval {
            geometry,
            f_curv,
            phi_curv,
            dphi,
            grad_sum,
            weight,
            global,
            global_numerator: num,
            global_denominator: den,
        })
    }

    /// ∂u/∂t = -e^{-ψ} v (Φ(F) - f) per node.
    pub fn rhs(&self, eval: &StageEval) -> Vec<f64> {
        let g = &eval.geometry;
        (0..g.len())
            .map(|idx| -(-g.psi[idx]).exp() * g.v[idx] * (eval.phi_curv[idx] - eval.global))
            .collect()
    }

    /// Parabolic step bound
    /// dt = c_safe min(Δξ)² / max_nodes(Φ'(F) ΣF_{,a} λ_max(g⁻¹)).
    pub fn dt_select(&self, eval: &StageEval) -> Result<f64> {
        let g = &eval.geometry;
        let mut stiffness = 0.0f64;
        for idx in 0..g.len() {
            let lam_max_inv_g = 1.0 / g.lambda_min_g[idx];
            stiffness = stiffness.max(eval.dphi[idx] * eval.grad_sum[idx] * lam_max_inv_g);
        }
        let min_dx = g.grid.min_spacing();
        let dt = if stiffness > 0.0 {
            self.config.c_safe * min_dx * min_dx / stiffness
        } else {
            self.config.c_safe * min_dx * min_dx
        };
        if !(dt > 0.0) || dt < self.config.dt_min {
            return Err(Error::TimeStepUnderflow {
                dt,
                dt_min: self.config.dt_min,
            });
        }
        Ok(dt)
    }

    /// One classical RK4 step; admissibility and the spacelike margin are
    /// re-checked on every stage.
    pub fn step(&self, state: &FlowState) -> Result<FlowState> {
        let dt = self.dt_select(&state.eval)?;
        self.step_with_dt(state, dt)
    }

    pub fn step_with_dt(&self, state: &FlowState, dt: f64) -> Result<FlowState> {
        let grid = state.u.grid;
        let k1 = self.rhs(&state.eval);
        let u2 = shifted(&state.u, &k1, 0.5 * dt);
        let k2 = self.rhs(&self.evaluate(&u2)?);
        let u3 = shifted(&state.u, &k2, 0.5 * dt);
        let k3 = self.rhs(&self.evaluate(&u3)?);
        let u4 = shifted(&state.u, &k3, dt);
        let k4 = self.rhs(&self.evaluate(&u4)?);
        let mut values = state.u.values.clone();
        for idx in 0..values.len() {
            values[idx] +=
                dt / 6.0 * (k1[idx] + 2.0 * k2[idx] + 2.0 * k3[idx] + k4[idx]);
        }
        let u_next = ScalarField { grid, values };
        let eval = self.evaluate(&u_next)?;
        Ok(FlowState {
            t: state.t + dt,
            u: u_next,
            eval,
            dt_last: dt,
        })
    }

    /// Signed enclosed volume between the reference slice and the graph,
    /// inner integrals by adaptive Simpson quadrature.
    pub fn enclosed_volume(&self, u: &ScalarField) -> Result<f64> {
        enclosed_volume(&self.config.ambient, u)
    }

    /// Mixed volume V_{n+1-k}: the enclosed volume at k = 0, otherwise
    /// {(n+1) C(n,k)}⁻¹ ∫ H_{k-1} dμ.
    pub fn mixed_volume(&self, u: &ScalarField, eval: &StageEval, k: usize) -> Result<f64> {
        let n = self.n();
        if k == 0 {
            return self.enclosed_volume(u);
        }
        if k > n {
            return Err(Error::InvalidArgument(format!(
                "mixed volume index {k} out of range for n = {n}"
            )));
        }
        let g = &eval.geometry;
        let mut integrand = vec![0.0; g.len()];
        for idx in 0..g.len() {
            integrand[idx] = elementary_symmetric(k - 1, &g.kappa[idx], n)?;
        }
        let norm = ((n + 1) as f64) * crate::curvfun::binomial(n, k) as f64;
        Ok(integrate(&integrand, g) / norm)
    }

    /// Residual of the volume-element evolution d√g/dt = (Φ - f) H √g,
    /// probed by one explicit Euler step of the full embedding.
    pub fn volume_element_check(&self, u: &ScalarField, eval: &StageEval, dt_probe: f64) -> Result<ScalarField> {
        let grid = u.grid;
        let n = grid.n;
        let len = grid.len();
        let g = &eval.geometry;
        // displacement w^α = dt (Φ - f) ν^α as periodic fields
        let mut w = Vec::with_capacity(n + 1);
        for alpha in 0..=n {
            let values: Vec<f64> = (0..len)
                .map(|idx| dt_probe * (eval.phi_curv[idx] - eval.global) * g.nu[idx][alpha])
                .collect();
            w.push(ScalarField { grid, values });
        }
        // tangents of the moved embedding y = (u + w⁰, ξ + w^k)
        let mut dy = vec![[[0.0; 4]; 3]; len]; // dy[idx][axis][alpha]
        for alpha in 0..=n {
            let base: Option<ScalarField> = if alpha == 0 {
                Some(ScalarField {
                    grid,
                    values: u
                        .values
                        .iter()
                        .zip(w[0].values.iter())
                        .map(|(a, b)| a + b)
                        .collect(),
                })
            } else {
                None
            };
            for axis in 0..n {
                let der = match &base {
                    Some(f) => deriv(f, axis),
                    None => deriv(&w[alpha], axis),
                };
                for idx in 0..len {
                    dy[idx][axis][alpha] = der.values[idx]
                        + if alpha > 0 && alpha - 1 == axis { 1.0 } else { 0.0 };
                }
            }
        }
        let mut residual = vec![0.0; len];
        for idx in 0..len {
            let t_new = u.values[idx] + w[0].values[idx];
            let mut x_new = grid.coords(idx);
            for a in 0..n {
                x_new[a] += w[a + 1].values[idx];
            }
            let glow = self.config.ambient.metric_lower(t_new, &x_new);
            let mut g_new = linalg::ZERO_MAT;
            for i in 0..n {
                for j in 0..n {
                    let mut val = 0.0;
                    for al in 0..=n {
                        for be in 0..=n {
                            val += glow[al][be] * dy[idx][i][al] * dy[idx][j][be];
                        }
                    }
                    g_new[i][j] = val;
                }
            }
            let det_new = linalg::det(n, &g_new);
            if !(det_new > 0.0) {
                return Err(Error::SingularMetric(format!(
                    "probe step degenerates the metric at node {idx}"
                )));
            }
            let sqrt_new = det_new.sqrt();
            let mean_curv: f64 = (0..n).map(|a| g.kappa[idx][a]).sum();
            let rate = (eval.phi_curv[idx] - eval.global) * mean_curv * g.sqrt_g[idx];
            residual[idx] = ((sqrt_new - g.sqrt_g[idx]) / dt_probe - rate).abs();
        }
        Ok(ScalarField {
            grid,
            values: residual,
        })
    }

    fn stop_metric(&self, eval: &StageEval) -> f64 {
        match self.config.force {
            ForceMode::Preserve { .. } => eval.eta(),
            ForceMode::Constant { c } => {
                (eval.phi_sup() - c).max(c - eval.phi_inf()).max(0.0)
            }
        }
    }

    pub fn diagnostics(&self, t: f64, dt: f64, u: &ScalarField, eval: &StageEval) -> Result<DiagnosticsRecord> {
        let g = &eval.geometry;
        let mut mixed = Vec::new();
        for &k in &self.config.mixed_volume_ks {
            mixed.push(MixedVolumeSample {
                k,
                value: self.mixed_volume(u, eval, k)?,
            });
        }
        let area = integrate(&vec![1.0; g.len()], g);
        let volume = self.enclosed_volume(u)?;
        let kappa_min = g
            .kappa
            .iter()
            .map(|k| k[0])
            .fold(f64::INFINITY, f64::min);
        let kappa_max = g
            .kappa
            .iter()
            .map(|k| k[self.n() - 1])
            .fold(f64::NEG_INFINITY, f64::max);
        let max_vtilde = g.vtilde.iter().copied().fold(0.0f64, f64::max);
        Ok(DiagnosticsRecord {
            t,
            f: eval.global,
            phi_sup: eval.phi_sup(),
            phi_inf: eval.phi_inf(),
            eta: eval.eta(),
            volume,
            area,
            mixed_volumes: mixed,
            max_vtilde,
            kappa_min,
            kappa_max,
            u_min: u.min(),
            u_max: u.max(),
            dt,
        })
    }

    /// Runs the flow until the stop metric falls below `tol_eta` or the
    /// horizon `t_max` is reached. A missed tolerance is reported as status
    /// "no-convergence", not as an error.
    pub fn run(&self, u0: &ScalarField) -> Result<RunOutcome> {
        let legal = self.config.legality_errors();
        if !legal.is_empty() {
            return Err(Error::Validation(legal));
        }
        let eval0 = self.evaluate(u0)?;
        let mut state = FlowState {
            t: 0.0,
            u: u0.clone(),
            eval: eval0,
            dt_last: 0.0,
        };
        let mut records = vec![self.diagnostics(0.0, 0.0, &state.u, &state.eval)?];
        let mut steps = 0usize;
        let mut last_recorded = 0usize;
        let (status, stop_reason) = loop {
            let metric = self.stop_metric(&state.eval);
            if metric <= self.config.tol_eta {
                break ("converged".to_string(), format!("stop metric {metric:.3e} below tolerance"));
            }
            if state.t >= self.config.t_max {
                break (
                    "no-convergence".to_string(),
                    format!("t_max reached with stop metric {metric:.3e}"),
                );
            }
            if steps >= self.config.max_steps {
                break (
                    "no-convergence".to_string(),
                    format!("step limit reached with stop metric {metric:.3e}"),
                );
            }
            let dt = self
                .dt_select(&state.eval)?
                .min(self.config.t_max - state.t);
            state = self.step_with_dt(&state, dt)?;
            steps += 1;
            if steps % self.config.cadence == 0 {
                records.push(self.diagnostics(state.t, state.dt_last, &state.u, &state.eval)?);
                last_recorded = steps;
            }
        };
        if last_recorded != steps {
            records.push(self.diagnostics(state.t, state.dt_last, &state.u, &state.eval)?);
        }

        let c0 = self.config.phi.inverse(state.eval.global)?;
        let final_sup = state
            .eval
            .f_curv
            .iter()
            .map(|f| (f - c0).abs())
            .fold(0.0f64, f64::max);
        let metric_series: Vec<(f64, f64)> = records
            .iter()
            .map(|r| {
                let m = match self.config.force {
                    ForceMode::Preserve { .. } => r.eta,
                    ForceMode::Constant { c } => (r.phi_sup - c).max(c - r.phi_inf).max(0.0),
                };
                (r.t, m)
            })
            .collect();
        let window = (metric_series.len() * 3) / 5;
        let decay = fit_decay(&metric_series, window.max(10)).ok();
        let drifts = self.collect_drifts(&records);
        let report = ConvergenceReport {
            status,
            stop_reason,
            t_final: state.t,
            steps,
            c0,
            final_sup_f_minus_c0: final_sup,
            final_stop_metric: self.stop_metric(&state.eval),
            decay,
            drifts,
        };
        Ok(RunOutcome {
            records,
            state,
            report,
        })
    }

    fn collect_drifts(&self, records: &[DiagnosticsRecord]) -> Vec<DriftRecord> {
        let mut out = Vec::new();
        if records.is_empty() {
            return out;
        }
        let first = &records[0];
        let last = &records[records.len() - 1];
        // conserved-quantity scales guard the relative drift against
        // functionals whose initial value happens to vanish
        let vol_scale = first.volume.abs().max(first.area * (first.u_max - first.u_min).max(1e-3));
        let push = |out: &mut Vec<DriftRecord>, name: &str, get: &dyn Fn(&DiagnosticsRecord) -> f64, scale: f64| {
            let initial = get(first);
            let max_drift = records
                .iter()
                .map(|r| (get(r) - initial).abs())
                .fold(0.0f64, f64::max);
            out.push(DriftRecord {
                name: name.to_string(),
                initial,
                finale: get(last),
                scale,
                max_rel_drift: max_drift / scale,
            });
        };
        push(&mut out, "volume", &|r| r.volume, vol_scale);
        push(&mut out, "area", &|r| r.area, first.area.abs().max(1e-300));
        for (pos, &k) in self.config.mixed_volume_ks.iter().enumerate() {
            let scale = if k == 0 {
                vol_scale
            } else {
                first.mixed_volumes[pos].value.abs().max(first.area * 1e-2)
            };
            push(
                &mut out,
                &format!("mixed_volume_{k}"),
                &move |r: &DiagnosticsRecord| r.mixed_volumes[pos].value,
                scale,
            );
        }
        out
    }
}

fn shifted(u: &ScalarField, k: &[f64], factor: f64) -> ScalarField {
    ScalarField {
        grid: u.grid,
        values: u
            .values
            .iter()
            .zip(k.iter())
            .map(|(a, b)| a + factor * b)
            .collect(),
    }
}

/// Signed enclosed volume ∫∫ e^{(n+1)ψ}√det σ between the reference slice
/// and the graph.
pub fn enclosed_volume(spec: &AmbientSpec, u: &ScalarField) -> Result<f64> {
    let grid = u.grid;
    let t_ref = spec.volume_ref_time;
    if !spec.contains_time(t_ref) {
        return Err(Error::Domain(format!(
            "volume reference time {t_ref} outside the ambient interval"
        )));
    }
    let mut inner = vec![0.0; grid.len()];
    for (idx, slot) in inner.iter_mut().enumerate() {
        let x = grid.coords(idx);
        let target = u.values[idx];
        if !spec.contains_time(target) {
            return Err(Error::Domain(format!(
                "graph value {target} at node {idx} outside the ambient interval"
            )));
        }
        *slot = adaptive_simpson(
            &|t| spec.enclosed_volume_density(t, &x),
            t_ref,
            target,
            1e-10,
        )?;
    }
    Ok(tree_sum(&inner) * grid.cell_volume())
}

/// Adaptive Simpson quadrature with the classical 15-fold error control.
pub fn adaptive_simpson(
    f: &dyn Fn(f64) -> Result<f64>,
    a: f64,
    b: f64,
    tol: f64,
) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    let fa = f(a)?;
    let fb = f(b)?;
    let m = 0.5 * (a + b);
    let fm = f(m)?;
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_recurse(f, a, b, fa, fb, fm, whole, tol, 50)
}

#[allow(clippy::too_many_arguments)]
fn simpson_recurse(
    f: &dyn Fn(f64) -> Result<f64>,
    a: f64,
    b: f64,
    fa: f64,
    fb: f64,
    fm: f64,
    whole: f64,
    tol: f64,
    depth: usize,
) -> Result<f64> {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm)?;
    let frm = f(rm)?;
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return Ok(left + right + delta / 15.0);
    }
    Ok(simpson_recurse(f, a, m, fa, fm, flm, left, 0.5 * tol, depth - 1)?
        + simpson_recurse(f, m, b, fm, fb, frm, right, 0.5 * tol, depth - 1)?)
}

/// Least-squares line fit of log(metric) against t over the trailing
/// `window` samples; returns the decay rate δ = -slope.
pub fn fit_decay(samples: &[(f64, f64)], window: usize) -> Result<DecayFit> {
    let eps_floor = 10.0 * f64::EPSILON;
    let usable: Vec<(f64, f64)> = samples
        .iter()
        .filter(|(_, v)| *v > eps_floor)
        .cloned()
        .collect();
    let start = usable.len().saturating_sub(window);
    let tail = &usable[start..];
    if tail.len() < 10 {
        return Err(Error::InsufficientData(format!(
            "decay fit needs at least 10 usable samples, got {}",
            tail.len()
        )));
    }
    let xs: Vec<f64> = tail.iter().map(|(t, _)| *t).collect();
    let ys: Vec<f64> = tail.iter().map(|(_, v)| v.ln()).collect();
    let m = xs.len() as f64;
    let mean_x = xs.iter().sum::<f64>() / m;
    let mean_y = ys.iter().sum::<f64>() / m;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for i in 0..xs.len() {
        let dx = xs[i] - mean_x;
        let dy = ys[i] - mean_y;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if sxx == 0.0 {
        return Err(Error::InsufficientData(
            "decay fit needs spread in time".into(),
        ));
    }
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let r2 = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    Ok(DecayFit {
        delta: -slope,
        amplitude: intercept.exp(),
        r_squared: r2,
        samples: tail.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ambient::AmbientSpec;
    use crate::grid::Grid;
    use std::f64::consts::TAU;

    fn minkowski_flow(points: usize) -> (Flow, Grid) {
        let spec = AmbientSpec::minkowski_torus(1, &[TAU]).unwrap();
        let grid = Grid::new(1, &[points], &[TAU]).unwrap();
        let config = FlowConfig::new(
            spec,
            CurvatureFunctionSpec::mean(),
            SupplementaryKind::Identity,
            ForceMode::Preserve { k: 0 },
        );
        (Flow::new(config), grid)
    }

    #[test]
    fn integrate_examples() {
        let (flow, grid) = minkowski_flow(64);
        let u = ScalarField::constant(grid, 0.0);
        let eval = flow.evaluate(&u).unwrap();
        let area = integrate(&vec![1.0; grid.len()], &eval.geometry);
        assert!((area - TAU).abs() < 1e-12);

        // linearity
        let phi: Vec<f64> = (0..grid.len()).map(|i| (i as f64 * 0.1).sin()).collect();
        let psi: Vec<f64> = (0..grid.len()).map(|i| (i as f64 * 0.07).cos()).collect();
        let combo: Vec<f64> = phi
            .iter()
            .zip(psi.iter())
            .map(|(a, b)| 2.0 * a + 3.0 * b)
            .collect();
        let lhs = integrate(&combo, &eval.geometry);
        let rhs = 2.0 * integrate(&phi, &eval.geometry) + 3.0 * integrate(&psi, &eval.geometry);
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn integrate_matches_adaptive_quadrature_oracle() {
        // area of u = A sin ξ in the flat torus: ∫ √(1 - A² cos² ξ) dξ.
        // The discrete u' carries a sign-definite A²Δξ⁴/30 truncation term,
        // so the 1e-10 match needs a modest amplitude at N = 256.
        let (flow, grid) = minkowski_flow(256);
        let amp = 0.04;
        let u = ScalarField::from_fn(grid, |x| amp * x[0].sin());
        let eval = flow.evaluate(&u).unwrap();
        let area = integrate(&vec![1.0; grid.len()], &eval.geometry);
        let oracle = adaptive_simpson(
            &|x| Ok((1.0 - amp * amp * x.cos() * x.cos()).sqrt()),
            0.0,
            TAU,
            1e-12,
        )
        .unwrap();
        assert!(
            (area - oracle).abs() < 1e-10,
            "area {area} vs oracle {oracle}"
        );
    }

    #[test]
    fn global_term_is_weighted_mean() {
        let (flow, grid) = minkowski_flow(64);
        let u = ScalarField::from_fn(grid, |x| 0.2 * x[0].sin());
        let eval = flow.evaluate(&u).unwrap();
        // k = 0: f is the area-weighted mean of Φ(F)
        assert!(eval.global <= eval.phi_sup() + 1e-14);
        assert!(eval.global >= eval.phi_inf() - 1e-14);
        // constant Φ(F) factors out on a slice
        let slice = ScalarField::constant(grid, 0.1);
        let eval = flow.evaluate(&slice).unwrap();
        assert!((eval.global - eval.phi_curv[0]).abs() < 1e-14);
    }

    #[test]
    fn degenerate_global_term_detected() {
        // preserve(1) for the mean flow needs ∫H dμ bounded away from zero;
        // a sine graph in the flat torus has ∫H ≈ 0
        let spec = AmbientSpec::minkowski_torus(1, &[TAU]).unwrap();
        let grid = Grid::new(1, &[64], &[TAU]).unwrap();
        let config = FlowConfig::new(
            spec,
            CurvatureFunctionSpec::mean(),
            SupplementaryKind::Identity,
            ForceMode::Preserve { k: 1 },
        );
        let flow = Flow::new(config);
        let u = ScalarField::from_fn(grid, |x| 0.1 * x[0].sin());
        match flow.evaluate(&u) {
            Err(Error::DegenerateGlobalTerm { .. }) => {}
            other => panic!("expected DegenerateGlobalTerm, got {other:?}"),
        }
    }

    #[test]
    fn homogeneous_state_is_fixed_point() {
        let (flow, grid) = minkowski_flow(64);
        let u = ScalarField::constant(grid, 0.25);
        let eval = flow.evaluate(&u).unwrap();
        let rhs = flow.rhs(&eval);
        assert!(rhs.iter().all(|v| v.abs() < 1e-14));
        let state = FlowState {
            t: 0.0,
            u: u.clone(),
            eval,
            dt_last: 0.0,
        };
        let next = flow.step(&state).unwrap();
        for idx in 0..grid.len() {
            assert!((next.u.values[idx] - u.values[idx]).abs() < 1e-13);
        }
    }

    #[test]
    fn rhs_sign_follows_curvature_excess() {
        let (flow, grid) = minkowski_flow(64);
        let u = ScalarField::from_fn(grid, |x| 0.2 * x[0].sin());
        let eval = flow.evaluate(&u).unwrap();
        let rhs = flow.rhs(&eval);
        for idx in 0..grid.len() {
            if eval.phi_curv[idx] > eval.global {
                assert!(rhs[idx] < 0.0);
            } else if eval.phi_curv[idx] < eval.global {
                assert!(rhs[idx] > 0.0);
            }
        }
    }

    #[test]
    fn dt_scales_with_grid_spacing() {
        let (flow_a, grid_a) = minkowski_flow(64);
        let (flow_b, grid_b) = minkowski_flow(128);
        let u_a = ScalarField::constant(grid_a, 0.0);
        let u_b = ScalarField::constant(grid_b, 0.0);
        let dt_a = flow_a.dt_select(&flow_a.evaluate(&u_a).unwrap()).unwrap();
        let dt_b = flow_b.dt_select(&flow_b.evaluate(&u_b).unwrap()).unwrap();
        let ratio = dt_a / dt_b;
        assert!((ratio - 4.0).abs() < 1e-9, "dt ratio {ratio}");
        // mean curvature with identity Φ: stiffness is n λ_max(g⁻¹) = 1 here
        let expect = 0.1 * grid_a.spacing[0] * grid_a.spacing[0];
        assert!((dt_a - expect).abs() < 1e-15);
    }

    #[test]
    fn euler_substep_reversibility() {
        let (flow, grid) = minkowski_flow(64);
        let u0 = ScalarField::from_fn(grid, |x| 0.1 * x[0].sin());
        let eval0 = flow.evaluate(&u0).unwrap();
        let dt = flow.dt_select(&eval0).unwrap();
        for scale in [1.0, 0.5] {
            let h = dt * scale;
            let k = flow.rhs(&eval0);
            let u1 = shifted(&u0, &k, h);
            let k_back = flow.rhs(&flow.evaluate(&u1).unwrap());
            let u2 = shifted(&u1, &k_back, -h);
            let err: f64 = u0
                .values
                .iter()
                .zip(u2.values.iter())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            // O(h²) return error
            assert!(err < 10.0 * h * h, "reversibility error {err} at h = {h}");
        }
    }

    #[test]
    fn perturbation_does_not_amplify() {
        // deterministic noise on a homogeneous state stays bounded over 100
        // steps at the default safety factor
        let (flow, grid) = minkowski_flow(64);
        let u = ScalarField::from_fn(grid, |x| {
            1e-8 * ((17.0 * x[0]).sin() + (5.0 * x[0]).cos())
        });
        let eval = flow.evaluate(&u).unwrap();
        let mut state = FlowState {
            t: 0.0,
            u,
            eval,
            dt_last: 0.0,
        };
        let initial = state.u.sup_norm();
        for _ in 0..100 {
            state = flow.step(&state).unwrap();
            assert!(
                state.u.sup_norm() <= initial * (1.0 + 1e-9),
                "perturbation grew"
            );
        }
    }

    #[test]
    fn flow_conserves_enclosed_volume_semi_discretely() {
        let (mut flow, grid) = minkowski_flow(64);
        flow.config.cadence = 50;
        flow.config.tol_eta = 1e-7;
        let u0 = ScalarField::from_fn(grid, |x| 0.1 * x[0].sin());
        let out = flow.run(&u0).unwrap();
        assert_eq!(out.report.status, "converged");
        let drift = out
            .report
            .drifts
            .iter()
            .find(|d| d.name == "volume")
            .unwrap();
        assert!(
            drift.max_rel_drift < 1e-9,
            "volume drift {:.3e}",
            drift.max_rel_drift
        );
        // the flat limit slice has |H| at the stop tolerance
        assert!(out.report.final_sup_f_minus_c0 < 1e-6);
        // Φ bounds stay monotone along the samples
        for w in out.records.windows(2) {
            assert!(w[1].phi_sup <= w[0].phi_sup + 1e-10);
            assert!(w[1].phi_inf >= w[0].phi_inf - 1e-10);
        }
    }

    #[test]
    fn determinism_bitwise() {
        let (mut flow, grid) = minkowski_flow(64);
        flow.config.max_steps = 50;
        flow.config.t_max = 1e9;
        flow.config.cadence = 10;
        let u0 = ScalarField::from_fn(grid, |x| 0.1 * x[0].sin());
        let a = flow.run(&u0).unwrap();
        let b = flow.run(&u0).unwrap();
        assert_eq!(a.state.u.values, b.state.u.values);
        for (ra, rb) in a.records.iter().zip(b.records.iter()) {
            assert_eq!(
                serde_json::to_string(ra).unwrap(),
                serde_json::to_string(rb).unwrap()
            );
        }
    }

    #[test]
    fn enclosed_volume_examples() {
        let spec = AmbientSpec::minkowski_torus(1, &[TAU]).unwrap();
        let grid = Grid::new(1, &[32], &[TAU]).unwrap();
        let u = ScalarField::constant(grid, 0.7);
        let v = enclosed_volume(&spec, &u).unwrap();
        assert!((v - 0.7 * TAU).abs() < 1e-10);

        let zero = ScalarField::constant(grid, 0.0);
        assert_eq!(enclosed_volume(&spec, &zero).unwrap(), 0.0);

        // de Sitter-like density 1/t²: antiderivative check on [-1, -0.1]
        let ds = AmbientSpec::conformal_de_sitter(1, &[TAU]).unwrap();
        let u = ScalarField::constant(grid, -0.1);
        let v = enclosed_volume(&ds, &u).unwrap();
        assert!(
            (v - 9.0 * TAU).abs() < 1e-8 * 9.0 * TAU,
            "v = {v}, expected {}",
            9.0 * TAU
        );
    }

    #[test]
    fn mixed_volume_examples() {
        let (flow, grid) = minkowski_flow(64);
        let u = ScalarField::constant(grid, 0.0);
        let eval = flow.evaluate(&u).unwrap();
        // k = 1: V_n = |M| / ((n+1) n)
        let v1 = flow.mixed_volume(&u, &eval, 1).unwrap();
        let area = integrate(&vec![1.0; grid.len()], &eval.geometry);
        assert!((v1 - area / 2.0).abs() < 1e-12);

        // flat slice has H_{k-1} = 0 for k >= 2 (n = 2 case)
        let spec2 = AmbientSpec::minkowski_torus(2, &[TAU, TAU]).unwrap();
        let grid2 = Grid::new(2, &[16, 16], &[TAU, TAU]).unwrap();
        let config2 = FlowConfig::new(
            spec2,
            CurvatureFunctionSpec::mean(),
            SupplementaryKind::Identity,
            ForceMode::Preserve { k: 0 },
        );
        let flow2 = Flow::new(config2);
        let u2 = ScalarField::constant(grid2, 0.0);
        let eval2 = flow2.evaluate(&u2).unwrap();
        let v2 = flow2.mixed_volume(&u2, &eval2, 2).unwrap();
        assert!(v2.abs() < 1e-14);

        // independent integrand assembly: k = 2 at n = 2 integrates H₁ = κ₁ + κ₂
        let wavy = ScalarField::from_fn(grid2, |x| 0.1 * (x[0] + x[1]).sin());
        let eval_w = flow2.evaluate(&wavy).unwrap();
        let direct: Vec<f64> = (0..grid2.len())
            .map(|i| eval_w.geometry.kappa[i][0] + eval_w.geometry.kappa[i][1])
            .collect();
        let expect = integrate(&direct, &eval_w.geometry) / (3.0 * 1.0);
        let got = flow2.mixed_volume(&wavy, &eval_w, 2).unwrap();
        assert!((got - expect).abs() < 1e-12);
    }

    #[test]
    fn volume_element_residual_is_first_order() {
        let (flow, grid) = minkowski_flow(64);
        let u = ScalarField::from_fn(grid, |x| 0.15 * x[0].sin());
        let eval = flow.evaluate(&u).unwrap();

        // at a homogeneous fixed point the residual vanishes to roundoff
        let slice = ScalarField::constant(grid, 0.0);
        let eval_slice = flow.evaluate(&slice).unwrap();
        let res0 = flow.volume_element_check(&slice, &eval_slice, 1e-3).unwrap();
        assert!(res0.sup_norm() < 1e-12);

        let r1 = flow.volume_element_check(&u, &eval, 2e-3).unwrap().sup_norm();
        let r2 = flow.volume_element_check(&u, &eval, 1e-3).unwrap().sup_norm();
        let ratio = r1 / r2;
        assert!(
            (ratio - 2.0).abs() < 0.2,
            "probe residual should be first order, ratio {ratio}"
        );
    }

    #[test]
    fn fit_decay_examples() {
        // exact log-linear data
        let samples: Vec<(f64, f64)> = (0..40)
            .map(|i| {
                let t = i as f64 * 0.1;
                (t, 3.0 * (-2.0 * t).exp())
            })
            .collect();
        let fit = fit_decay(&samples, 40).unwrap();
        assert!((fit.delta - 2.0).abs() < 1e-10);
        assert!((fit.amplitude - 3.0).abs() < 1e-9);
        assert!((fit.r_squared - 1.0).abs() < 1e-10);

        // multiplicative noise keeps the rate within a few percent
        let noisy: Vec<(f64, f64)> = (0..200)
            .map(|i| {
                let t = i as f64 * 0.05;
                let jitter = 1.0 + 0.01 * ((i * 2654435761usize % 997) as f64 / 997.0 - 0.5);
                (t, 3.0 * (-2.0 * t).exp() * jitter)
            })
            .collect();
        let fit = fit_decay(&noisy, 200).unwrap();
        assert!((fit.delta - 2.0).abs() < 0.1, "delta {}", fit.delta);

        assert!(matches!(
            fit_decay(&samples[..5], 5),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn legality_table_rejects_bad_combinations() {
        let errs = legality_errors(
            &CurvatureFunctionSpec::sqrt_h2(),
            SupplementaryKind::Identity,
            &ForceMode::Preserve { k: 3 },
            3,
        );
        assert!(errs.iter().any(|e| e.contains("k in {0, 1, 2}")));

        let errs = legality_errors(
            &CurvatureFunctionSpec::sigma_n(),
            SupplementaryKind::Identity,
            &ForceMode::Preserve { k: 0 },
            2,
        );
        assert!(!errs.is_empty());

        let errs = legality_errors(
            &CurvatureFunctionSpec::mean(),
            SupplementaryKind::Identity,
            &ForceMode::Preserve { k: 0 },
            1,
        );
        assert!(errs.is_empty());
    }
}
