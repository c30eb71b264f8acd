//! Constant-F-curvature (CFC) hypersurfaces: pseudo-time solves through the
//! constant-force flow, barrier checks, foliation sweeps with monotonicity
//! audits, the linearized stability operator, and the recovery of a CFC
//! surface as the limit of a volume- or area-preserving flow.

use std::path::Path;

use serde::Serialize;

use crate::ambient::AmbientSpec;
use crate::curvfun::CurvatureFunctionSpec;
use crate::error::{Error, Result};
use crate::flow::{enclosed_volume, integrate, Flow, FlowConfig, ForceMode};
use crate::geometry::graph_geometry_with_margin;
use crate::grid::{deriv, deriv2, ScalarField};
use crate::linalg::{self, tree_dot, Mat3, Vec3};

/// A converged constant-curvature graph.
#[derive(Clone, Debug)]
pub struct CfcResult {
    pub c: f64,
    pub u: ScalarField,
    /// sup |F - c| on the converged graph.
    pub residual: f64,
    pub steps: usize,
    pub t_used: f64,
}

/// Solves F ≡ c by running the flow in constant-force mode, f = Φ(c), until
/// sup |Φ(F) - Φ(c)| falls below `tol`.
pub fn solve_cfc(
    template: &FlowConfig,
    c: f64,
    u0: &ScalarField,
    tol: f64,
) -> Result<CfcResult> {
    let mut config = template.clone();
    config.force = ForceMode::Constant {
        c: config.phi.value(c)?,
    };
    config.tol_eta = tol;
    let flow = Flow::new(config);
    let out = flow.run(u0)?;
    if out.report.status != "converged" {
        return Err(Error::NoConvergence(format!(
            "constant-force flow for c = {c}: {}",
            out.report.stop_reason
        )));
    }
    let residual = out
        .state
        .eval
        .f_curv
        .iter()
        .map(|f| (f - c).abs())
        .fold(0.0f64, f64::max);
    Ok(CfcResult {
        c,
        u: out.state.u,
        residual,
        steps: out.report.steps,
        t_used: out.state.t,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum BarrierSide {
    Future,
    Past,
}

#[derive(Clone, Debug, Serialize)]
pub struct BarrierReport {
    pub side: BarrierSide,
    pub c: f64,
    /// min and max of F - c over the graph.
    pub min_slack: f64,
    pub max_slack: f64,
    pub holds: bool,
}

/// F per node of an admissible graph (shared by barrier checks and the
/// stability operator).
fn curvature_field(
    ambient: &AmbientSpec,
    curvature: &CurvatureFunctionSpec,
    u: &ScalarField,
) -> Result<(crate::geometry::GraphGeometry, Vec<f64>)> {
    let geometry = graph_geometry_with_margin(ambient, u, crate::geometry::SPACELIKE_MARGIN)?;
    let n = ambient.n;
    let mut worst: Option<(usize, f64)> = None;
    for idx in 0..geometry.len() {
        let (inside, slack) = curvature.cone.contains(n, &geometry.kappa[idx]);
        if !inside && worst.map_or(true, |(_, s)| slack < s) {
            worst = Some((idx, slack));
        }
    }
    if let Some((node, slack)) = worst {
        return Err(Error::NotAdmissible { node, slack });
    }
    let mut f = vec![0.0; geometry.len()];
    for idx in 0..geometry.len() {
        f[idx] = curvature.value(n, &geometry.kappa[idx])?;
    }
    Ok((geometry, f))
}

/// Future barrier: F ≥ c everywhere; past barrier: F ≤ c everywhere.
pub fn barrier_check(
    ambient: &AmbientSpec,
    curvature: &CurvatureFunctionSpec,
    u: &ScalarField,
    c: f64,
    side: BarrierSide,
) -> Result<BarrierReport> {
    let (_, f) = curvature_field(ambient, curvature, u)?;
    let min_slack = f.iter().map(|v| v - c).fold(f64::INFINITY, f64::min);
    let max_slack = f.iter().map(|v| v - c).fold(f64::NEG_INFINITY, f64::max);
    let holds = match side {
        BarrierSide::Future => min_slack >= 0.0,
        BarrierSide::Past => max_slack <= 0.0,
    };
    Ok(BarrierReport {
        side,
        c,
        min_slack,
        max_slack,
        holds,
    })
}

/// A family of CFC graphs indexed by curvature value, with ordering, area
/// and volume audits.
#[derive(Clone, Debug)]
pub struct FoliationResult {
    pub taus: Vec<f64>,
    pub graphs: Vec<ScalarField>,
    pub residuals: Vec<f64>,
    pub areas: Vec<f64>,
    pub volumes: Vec<f64>,
    /// min over nodes of u(τ_{j+1}) - u(τ_j) per adjacent pair.
    pub ordering_margins: Vec<f64>,
    /// Monotonicity violations are reported here, never thrown.
    pub violations: Vec<String>,
}

#[derive(Serialize)]
struct FoliationManifest<'a> {
    taus: &'a [f64],
    residuals: &'a [f64],
    areas: &'a [f64],
    volumes: &'a [f64],
    ordering_margins: &'a [f64],
    violations: &'a [String],
    field_files: Vec<String>,
}

impl FoliationResult {
    /// Writes one field file per τ plus a JSON manifest with the audits.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut field_files = Vec::new();
        for (j, graph) in self.graphs.iter().enumerate() {
            let name = format!("tau_{j:03}.cfld");
            graph.write_binary(&dir.join(&name))?;
            field_files.push(name);
        }
        let manifest = FoliationManifest {
            taus: &self.taus,
            residuals: &self.residuals,
            areas: &self.areas,
            volumes: &self.volumes,
            ordering_margins: &self.ordering_margins,
            violations: &self.violations,
            field_files,
        };
        let json = serde_json::to_string_pretty(&manifest)
            .map_err(|e| Error::Io(e.to_string()))?;
        std::fs::write(dir.join("manifest.json"), json)?;
        Ok(())
    }
}

/// Solves the CFC family for m values in [c1, c2] (warm-started along τ) and
/// audits nodewise ordering, strictly decreasing area and strictly
/// increasing enclosed volume.
pub fn foliate(
    template: &FlowConfig,
    c1: f64,
    c2: f64,
    m: usize,
    u0: &ScalarField,
    tol: f64,
) -> Result<FoliationResult> {
    if !(c1 > 0.0 && c2 > c1) {
        return Err(Error::InvalidArgument(format!(
            "foliation needs 0 < c1 < c2, got c1 = {c1}, c2 = {c2}"
        )));
    }
    if m < 2 {
        return Err(Error::InvalidArgument(format!(
            "foliation needs at least two members, got m = {m}"
        )));
    }
    let mut taus = Vec::with_capacity(m);
    for j in 0..m {
        taus.push(c1 + (c2 - c1) * j as f64 / (m - 1) as f64);
    }
    let mut graphs = Vec::with_capacity(m);
    let mut residuals = Vec::with_capacity(m);
    let mut areas = Vec::with_capacity(m);
    let mut volumes = Vec::with_capacity(m);
    let mut seed = u0.clone();
    for &tau in &taus {
        let solved = solve_cfc(template, tau, &seed, tol)?;
        seed = solved.u.clone();
        let (geometry, _) = curvature_field(&template.ambient, &template.curvature, &solved.u)?;
        areas.push(integrate(&vec![1.0; geometry.len()], &geometry));
        volumes.push(enclosed_volume(&template.ambient, &solved.u)?);
        residuals.push(solved.residual);
        graphs.push(solved.u);
    }
    let mut ordering_margins = Vec::new();
    let mut violations = Vec::new();
    for j in 0..m - 1 {
        let mut margin = f64::INFINITY;
        let mut worst_node = 0;
        for idx in 0..graphs[j].values.len() {
            let gap = graphs[j + 1].values[idx] - graphs[j].values[idx];
            if gap < margin {
                margin = gap;
                worst_node = idx;
            }
        }
        ordering_margins.push(margin);
        if margin <= 0.0 {
            violations.push(format!(
                "ordering violated between tau {} and {} at node {worst_node} (gap {margin:.3e})",
                taus[j],
                taus[j + 1]
            ));
        }
        if areas[j + 1] >= areas[j] {
            violations.push(format!(
                "area not strictly decreasing between tau {} and {}",
                taus[j],
                taus[j + 1]
            ));
        }
        if volumes[j + 1] <= volumes[j] {
            violations.push(format!(
                "volume not strictly increasing between tau {} and {}",
                taus[j],
                taus[j + 1]
            ));
        }
    }
    Ok(FoliationResult {
        taus,
        graphs,
        residuals,
        areas,
        volumes,
        ordering_margins,
        violations,
    })
}

/// Discretized linearization B u = -F^{ij} u_{;ij} + {F^{ij} h_i^k h_kj +
/// F^{ij} R̄(ν, x_i, ν, x_j)} u with 4th-order stencils.
pub struct StabilityOperator {
    pub grid: crate::grid::Grid,
    pub n: usize,
    /// Coefficients of ∂²_{ij} (upper triangle, with the i≠j factor 2
    /// already folded in): -F^{ij}.
    second: Vec<Mat3>,
    /// Coefficients of ∂_k: +F^{ij} Γ^k_{ij}.
    first: Vec<Vec3>,
    /// Zeroth-order coefficient field.
    pub zeroth: Vec<f64>,
}

impl StabilityOperator {
    pub fn assemble(
        ambient: &AmbientSpec,
        curvature: &CurvatureFunctionSpec,
        u: &ScalarField,
    ) -> Result<StabilityOperator> {
        let (geometry, _) = curvature_field(ambient, curvature, u)?;
        let grid = u.grid;
        let n = grid.n;
        let len = grid.len();
        let mut second = vec![linalg::ZERO_MAT; len];
        let mut first = vec![linalg::ZERO_VEC; len];
        let mut zeroth = vec![0.0; len];
        for idx in 0..len {
            let f_ij = curvature.tensor(n, &geometry.h[idx], &geometry.g[idx])?;
            for i in 0..n {
                for j in 0..n {
                    second[idx][i][j] = -f_ij[i][j];
                }
            }
            for k in 0..n {
                let mut b = 0.0;
                for i in 0..n {
                    for j in 0..n {
                        b += f_ij[i][j] * geometry.chris[idx][k][i][j];
                    }
                }
                first[idx][k] = b;
            }
            // F^{ij} h_i^k h_kj = F^{ij} (h g⁻¹ h)_{ij}
            let mut hgh = linalg::ZERO_MAT;
            for i in 0..n {
                for j in 0..n {
                    let mut s = 0.0;
                    for a in 0..n {
                        for b in 0..n {
                            s += geometry.h[idx][i][a]
                                * geometry.g_inv[idx][a][b]
                                * geometry.h[idx][b][j];
                        }
                    }
                    hgh[i][j] = s;
                }
            }
            let mut c0 = 0.0;
            for i in 0..n {
                for j in 0..n {
                    c0 += f_ij[i][j] * hgh[i][j];
                }
            }
            // curvature contraction F^{ij} R̄(ν, x_i, ν, x_j)
            let x = grid.coords(idx);
            let t = u.values[idx];
            let sample = ambient.riemann(t, &x)?;
            let nu = geometry.nu[idx];
            let mut tangents = [[0.0; 4]; 3];
            for (a, tan) in tangents.iter_mut().enumerate().take(n) {
                tan[0] = geometry.du[idx][a];
                tan[a + 1] = 1.0;
            }
            for i in 0..n {
                for j in 0..n {
                    let mut r = 0.0;
                    for al in 0..=n {
                        for be in 0..=n {
                            for ga in 0..=n {
                                for de in 0..=n {
                                    r += sample.comps[al][be][ga][de]
                                        * nu[al]
                                        * tangents[i][be]
                                        * nu[ga]
                                        * tangents[j][de];
                                }
                            }
                        }
                    }
                    c0 += f_ij[i][j] * r;
                }
            }
            zeroth[idx] = c0;
        }
        Ok(StabilityOperator {
            grid,
            n,
            second,
            first,
            zeroth,
        })
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// B v.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let field = ScalarField {
            grid: self.grid,
            values: v.to_vec(),
        };
        let mut out = vec![0.0; v.len()];
        for i in 0..self.n {
            for j in i..self.n {
                let dij = deriv2(&field, i, j);
                let factor = if i == j { 1.0 } else { 2.0 };
                for idx in 0..v.len() {
                    out[idx] += factor * self.second[idx][i][j] * dij.values[idx];
                }
            }
        }
        for k in 0..self.n {
            let dk = deriv(&field, k);
            for idx in 0..v.len() {
                out[idx] += self.first[idx][k] * dk.values[idx];
            }
        }
        for idx in 0..v.len() {
            out[idx] += self.zeroth[idx] * v[idx];
        }
        out
    }

    /// Bᵀ v, using the exact transposes of the centered stencils
    /// (D_k ᵀ = -D_k, D_{ij} ᵀ = D_{ij}).
    pub fn apply_transpose(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; v.len()];
        for i in 0..self.n {
            for j in i..self.n {
                let factor = if i == j { 1.0 } else { 2.0 };
                let weighted = ScalarField {
                    grid: self.grid,
                    values: (0..v.len())
                        .map(|idx| factor * self.second[idx][i][j] * v[idx])
                        .collect(),
                };
                let dij = deriv2(&weighted, i, j);
                for idx in 0..v.len() {
                    out[idx] += dij.values[idx];
                }
            }
        }
        for k in 0..self.n {
            let weighted = ScalarField {
                grid: self.grid,
                values: (0..v.len())
                    .map(|idx| self.first[idx][k] * v[idx])
                    .collect(),
            };
            let dk = deriv(&weighted, k);
            for idx in 0..v.len() {
                out[idx] -= dk.values[idx];
            }
        }
        for idx in 0..v.len() {
            out[idx] += self.zeroth[idx] * v[idx];
        }
        out
    }

    pub fn apply_symmetrized(&self, v: &[f64]) -> Vec<f64> {
        let a = self.apply(v);
        let b = self.apply_transpose(v);
        a.iter().zip(b.iter()).map(|(x, y)| 0.5 * (x + y)).collect()
    }

    /// Probe-based estimate of ‖B - Bᵀ‖ / ‖B‖.
    pub fn symmetry_defect(&self) -> f64 {
        let len = self.len();
        let mut max_asym = 0.0f64;
        let mut max_norm = 1e-300f64;
        for probe in 0..8 {
            let v: Vec<f64> = (0..len)
                .map(|i| (0.7 + probe as f64 * 1.3 + i as f64 * 0.618).sin())
                .collect();
            let bv = self.apply(&v);
            let btv = self.apply_transpose(&v);
            let asym: f64 = bv
                .iter()
                .zip(btv.iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            let norm: f64 = bv.iter().map(|a| a * a).sum::<f64>().sqrt();
            max_asym = max_asym.max(asym);
            max_norm = max_norm.max(norm);
        }
        max_asym / max_norm
    }

    /// Crude upper bound on the spectral radius of the symmetrized operator
    /// by power iteration.
    fn norm_estimate(&self) -> f64 {
        let len = self.len();
        let mut v: Vec<f64> = (0..len).map(|i| ((i as f64) * 0.37).sin() + 0.5).collect();
        normalize_vec(&mut v);
        let mut lam = 1.0f64;
        for _ in 0..30 {
            let mut w = self.apply_symmetrized(&v);
            lam = tree_dot(&w, &w).sqrt();
            if lam == 0.0 {
                return 1.0;
            }
            normalize_vec(&mut w);
            v = w;
        }
        lam
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct StabilityReport {
    pub lambda_min: f64,
    pub eigen_residual: f64,
    pub symmetry_defect: f64,
    pub zeroth_min: f64,
    pub zeroth_max: f64,
    pub iterations: usize,
}

/// Smallest eigenvalue of the symmetrized operator (B + Bᵀ)/2 by shifted
/// inverse power iteration with Rayleigh-quotient re-shifting. The inner
/// solves use a dense Cholesky at n = 1 and matrix-free conjugate gradients
/// at n = 2, 3; a shift that lands above λ₁ is detected through the failed
/// factorization and backed off.
pub fn lambda_min(op: &StabilityOperator) -> Result<(f64, Vec<f64>, f64, usize)> {
    let len = op.len();
    let norm_b = op.norm_estimate().max(1e-300);
    let dense_base = if op.n == 1 {
        let mut cols = Vec::with_capacity(len);
        for j in 0..len {
            let mut e = vec![0.0; len];
            e[j] = 1.0;
            cols.push(op.apply_symmetrized(&e));
        }
        let mut m = nalgebra::DMatrix::<f64>::zeros(len, len);
        for j in 0..len {
            for i in 0..len {
                m[(i, j)] = 0.5 * (cols[j][i] + cols[i][j]);
            }
        }
        Some(m)
    } else {
        None
    };

    let mut v: Vec<f64> = (0..len)
        .map(|i| 1.0 + 0.3 * ((i as f64) * 0.73).sin())
        .collect();
    normalize_vec(&mut v);
    // the first shift is certainly below the spectrum
    let mut shift = -norm_b - 1.0;
    let mut lambda = 0.0;
    let mut iterations = 0usize;
    for _outer in 0..60 {
        // prepare the inner solver for (Bs - shift I)
        let dense_chol = match &dense_base {
            Some(m) => {
                let mut shifted = m.clone();
                for i in 0..len {
                    shifted[(i, i)] -= shift;
                }
                match shifted.cholesky() {
                    Some(c) => Some(c),
                    None => {
                        // shift landed above λ₁: back off toward -norm_b
                        shift -= (lambda - shift).abs().max(1e-3 * norm_b);
                        continue;
                    }
                }
            }
            None => None,
        };
        let mut pd_failure = false;
        for _inner in 0..4 {
            iterations += 1;
            let solved = match &dense_chol {
                Some(chol) => {
                    let b = nalgebra::DVector::from_column_slice(&v);
                    chol.solve(&b).iter().copied().collect::<Vec<f64>>()
                }
                None => match conjugate_gradient(op, shift, &v, 1e-13, 40 * len) {
                    Ok(x) => x,
                    Err(_) => {
                        pd_failure = true;
                        break;
                    }
                },
            };
            v = solved;
            normalize_vec(&mut v);
        }
        if pd_failure {
            shift -= (lambda - shift).abs().max(1e-3 * norm_b);
            continue;
        }
        let bw = op.apply_symmetrized(&v);
        lambda = tree_dot(&v, &bw);
        let mut res = 0.0f64;
        for i in 0..len {
            res += (bw[i] - lambda * v[i]) * (bw[i] - lambda * v[i]);
        }
        let res = res.sqrt() / norm_b;
        if res <= 1e-8 {
            return Ok((lambda, v, res, iterations));
        }
        // re-shift just below the current Rayleigh quotient
        shift = lambda - (2.0 * res * norm_b).max(1e-4 * norm_b);
    }
    Err(Error::EigenSolveFailure(format!(
        "inverse power iteration stalled at lambda = {lambda}"
    )))
}

/// Full stability report for a converged CFC graph.
pub fn stability_report(
    ambient: &AmbientSpec,
    curvature: &CurvatureFunctionSpec,
    u: &ScalarField,
) -> Result<(StabilityOperator, StabilityReport)> {
    let op = StabilityOperator::assemble(ambient, curvature, u)?;
    let defect = op.symmetry_defect();
    let (lam, _vec, residual, iterations) = lambda_min(&op)?;
    let z_min = op.zeroth.iter().copied().fold(f64::INFINITY, f64::min);
    let z_max = op.zeroth.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let report = StabilityReport {
        lambda_min: lam,
        eigen_residual: residual,
        symmetry_defect: defect,
        zeroth_min: z_min,
        zeroth_max: z_max,
        iterations,
    };
    Ok((op, report))
}

fn conjugate_gradient(
    op: &StabilityOperator,
    shift: f64,
    rhs: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<Vec<f64>> {
    let len = rhs.len();
    let apply = |v: &[f64]| -> Vec<f64> {
        let mut out = op.apply_symmetrized(v);
        for i in 0..len {
            out[i] -= shift * v[i];
        }
        out
    };
    let mut x = vec![0.0; len];
    let mut r = rhs.to_vec();
    let mut p = r.clone();
    let mut rs = tree_dot(&r, &r);
    let rhs_norm = rs.sqrt().max(1e-300);
    for _ in 0..max_iter {
        if rs.sqrt() <= tol * rhs_norm {
            return Ok(x);
        }
        let ap = apply(&p);
        let pap = tree_dot(&p, &ap);
        if pap <= 0.0 {
            // the shifted operator is not positive definite
            return Err(Error::EigenSolveFailure(
                "indefinite shifted operator in conjugate gradients".into(),
            ));
        }
        let alpha = rs / pap;
        for i in 0..len {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rs_new = tree_dot(&r, &r);
        let beta = rs_new / rs;
        for i in 0..len {
            p[i] = r[i] + beta * p[i];
        }
        rs = rs_new;
    }
    Err(Error::EigenSolveFailure(
        "conjugate gradient inner solve did not converge".into(),
    ))
}

fn normalize_vec(v: &mut [f64]) {
    let norm = tree_dot(v, v).sqrt();
    if norm > 0.0 {
        for x in v.iter_mut() {
            *x /= norm;
        }
    }
}

/// Report of a CFC-recovery experiment.
#[derive(Clone, Debug, Serialize)]
pub struct RecoveryReport {
    pub amplitude: f64,
    pub preserve_k: usize,
    pub matched_shift: f64,
    pub sup_distance: f64,
    pub conserved_drift: f64,
    pub status: String,
}

/// A catalog of fixed smooth zero-mean perturbation modes.
pub fn perturbation_mode(grid: &crate::grid::Grid, mode: usize) -> ScalarField {
    ScalarField::from_fn(*grid, |x| {
        let base = match mode % 4 {
            0 => (std::f64::consts::TAU * x[0] / grid.periods[0]).sin(),
            1 => (2.0 * std::f64::consts::TAU * x[0] / grid.periods[0]).cos(),
            2 => (std::f64::consts::TAU * x[0] / grid.periods[0]).cos(),
            _ => (2.0 * std::f64::consts::TAU * x[0] / grid.periods[0]).sin(),
        };
        if grid.n >= 2 {
            base * (std::f64::consts::TAU * x[1] / grid.periods[1]).cos()
        } else {
            base
        }
    })
}

/// Perturbs a CFC graph by `amplitude` times a fixed zero-mean mode, shifts
/// it back onto the conserved-quantity level set (volume for k = 0, area for
/// k = 1) by bisection, then runs the preserve(k) flow and reports the
/// distance back to the CFC graph.
pub fn recover_cfc(
    template: &FlowConfig,
    u_c: &ScalarField,
    amplitude: f64,
    k: usize,
    mode: usize,
) -> Result<(RecoveryReport, ScalarField)> {
    if k > 1 {
        return Err(Error::InvalidArgument(
            "recovery matches volume (k = 0) or area (k = 1)".into(),
        ));
    }
    let mut config = template.clone();
    config.force = ForceMode::Preserve { k };
    if !config.mixed_volume_ks.contains(&k) {
        config.mixed_volume_ks.push(k);
    }
    let flow = Flow::new(config);

    let w = perturbation_mode(&u_c.grid, mode);
    let perturbed = ScalarField {
        grid: u_c.grid,
        values: u_c
            .values
            .iter()
            .zip(w.values.iter())
            .map(|(a, b)| a + amplitude * b)
            .collect(),
    };

    let functional = |u: &ScalarField| -> Result<f64> {
        if k == 0 {
            enclosed_volume(&flow.config.ambient, u)
        } else {
            let geometry = graph_geometry_with_margin(
                &flow.config.ambient,
                u,
                flow.config.spacelike_margin,
            )?;
            Ok(integrate(&vec![1.0; geometry.len()], &geometry))
        }
    };
    let target = functional(u_c)?;
    let shifted = |s: f64| -> ScalarField {
        ScalarField {
            grid: perturbed.grid,
            values: perturbed.values.iter().map(|v| v + s).collect(),
        }
    };
    // bracket the matching shift, then bisect to 1e-12 on the functional
    let span = 2.0 * amplitude.abs() + 1e-6;
    let mut lo = -span;
    let mut hi = span;
    let mut f_lo = functional(&shifted(lo))? - target;
    let mut f_hi = functional(&shifted(hi))? - target;
    let mut widen = 0;
    while f_lo.signum() == f_hi.signum() {
        lo *= 2.0;
        hi *= 2.0;
        f_lo = functional(&shifted(lo))? - target;
        f_hi = functional(&shifted(hi))? - target;
        widen += 1;
        if widen > 20 {
            return Err(Error::NoConvergence(
                "could not bracket the conserved-quantity matching shift".into(),
            ));
        }
    }
    let scale = target.abs().max(1.0);
    let mut shift = 0.0;
    for _ in 0..200 {
        shift = 0.5 * (lo + hi);
        let fm = functional(&shifted(shift))? - target;
        if fm.abs() <= 1e-12 * scale {
            break;
        }
        if fm.signum() == f_lo.signum() {
            lo = shift;
            f_lo = fm;
        } else {
            hi = shift;
        }
    }
    let u0 = shifted(shift);

    let out = flow.run(&u0)?;
    let sup_distance = out
        .state
        .u
        .values
        .iter()
        .zip(u_c.values.iter())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    let conserved_name = format!("mixed_volume_{k}");
    let conserved_drift = out
        .report
        .drifts
        .iter()
        .find(|d| d.name == conserved_name || (k == 0 && d.name == "volume"))
        .map(|d| d.max_rel_drift)
        .unwrap_or(f64::NAN);
    let report = RecoveryReport {
        amplitude,
        preserve_k: k,
        matched_shift: shift,
        sup_distance,
        conserved_drift,
        status: out.report.status.clone(),
    };
    Ok((report, out.state.u))
}
