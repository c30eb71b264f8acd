//! Graph-hypersurface geometry over the torus Cauchy surface.
//!
//! For a spacelike graph `x⁰ = u(x)` the induced metric, normal, second
//! fundamental form and principal curvatures are assembled from the scalar
//! flow formulas; `embedding_oracle_h` recomputes the second fundamental
//! form through the full embedding with independent 2nd-order stencils and
//! is used only as a test oracle.

use rayon::prelude::*;

use crate::ambient::AmbientSpec;
use crate::error::{Error, Result};
use crate::grid::{deriv, deriv2, deriv2_2nd_order, deriv_2nd_order, Grid, ScalarField};
use crate::linalg::{self, Mat3, Vec3};

/// Default margin for the spacelike condition σ^{ij}u_i u_j < 1 - margin.
pub const SPACELIKE_MARGIN: f64 = 1e-6;

/// Node count above which per-node work is distributed over the worker pool.
const PARALLEL_THRESHOLD: usize = 2048;

/// All per-node geometric quantities of a spacelike graph.
#[derive(Clone, Debug)]
pub struct GraphGeometry {
    pub grid: Grid,
    /// Coordinate partials u_i (4th-order stencils).
    pub du: Vec<Vec3>,
    /// ŭ^i = σ^{ij} u_j.
    pub breve_u: Vec<Vec3>,
    pub v: Vec<f64>,
    pub vtilde: Vec<f64>,
    pub psi: Vec<f64>,
    /// Induced metric g_ij = e^{2ψ}(σ_ij - u_i u_j).
    pub g: Vec<Mat3>,
    /// Closed-form inverse g^{ij} = e^{-2ψ}(σ^{ij} + ŭ^i ŭ^j / v²).
    pub g_inv: Vec<Mat3>,
    /// Volume density √det g in ξ-coordinates.
    pub sqrt_g: Vec<f64>,
    /// Smallest eigenvalue of g_ij (time-step control).
    pub lambda_min_g: Vec<f64>,
    /// Past-directed unit normal ν^α = -v⁻¹ e^{-ψ} (1, ŭ^i).
    pub nu: Vec<[f64; 4]>,
    /// Induced-metric Christoffel symbols Γ^k_ij.
    pub chris: Vec<[Mat3; 3]>,
    /// Second fundamental form.
    pub h: Vec<Mat3>,
    /// Principal curvatures, ascending.
    pub kappa: Vec<Vec3>,
}

impl GraphGeometry {
    pub fn len(&self) -> usize {
        self.v.len()
    }

    pub fn is_empty(&self) -> bool {
        self.v.is_empty()
    }
}

struct NodeBase {
    sigma: Mat3,
    sigma_inv: Mat3,
    det_sigma: f64,
    psi: f64,
    du: Vec3,
    breve_u: Vec3,
    du_norm2: f64,
}

/// Computes the full [`GraphGeometry`] of a spacelike graph.
pub fn graph_geometry(spec: &AmbientSpec, u: &ScalarField) -> Result<GraphGeometry> {
    graph_geometry_with_margin(spec, u, SPACELIKE_MARGIN)
}

pub fn graph_geometry_with_margin(
    spec: &AmbientSpec,
    u: &ScalarField,
    margin: f64,
) -> Result<GraphGeometry> {
    let grid = u.grid;
    let n = grid.n;
    if n != spec.n {
        return Err(Error::InvalidArgument(format!(
            "grid dimension {n} does not match ambient dimension {}",
            spec.n
        )));
    }
    let len = grid.len();
    let coords: Vec<Vec3> = (0..len).map(|idx| grid.coords(idx)).collect();

    let mut du_fields = Vec::with_capacity(n);
    for a in 0..n {
        du_fields.push(deriv(u, a));
    }
    let mut d2u_fields = vec![vec![None; 3]; 3];
    for a in 0..n {
        for b in a..n {
            d2u_fields[a][b] = Some(deriv2(u, a, b));
        }
    }

    // first pass: ambient data, spacelike check, metric and normal
    let base: Vec<Result<NodeBase>> = map_nodes(len, |idx| {
        let x = &coords[idx];
        let t = u.values[idx];
        if !spec.contains_time(t) {
            return Err(Error::Domain(format!(
                "graph value {t} at node {idx} leaves the time interval"
            )));
        }
        let sigma = spec.sigma(t, x);
        let (sigma_inv, det_sigma) = if n == 1 {
            if !(sigma[0][0] > 0.0) {
                return Err(Error::SingularMetric(format!(
                    "σ not positive definite at node {idx}"
                )));
            }
            let mut inv = linalg::ZERO_MAT;
            inv[0][0] = 1.0 / sigma[0][0];
            (inv, sigma[0][0])
        } else {
            match linalg::cholesky(n, &sigma) {
                Some(_) => (
                    linalg::sym_inverse(n, &sigma).unwrap(),
                    linalg::det(n, &sigma),
                ),
                None => {
                    return Err(Error::SingularMetric(format!(
                        "σ not positive definite at node {idx}"
                    )))
                }
            }
        };
        let mut du = linalg::ZERO_VEC;
        for a in 0..n {
            du[a] = du_fields[a].values[idx];
        }
        let breve_u = linalg::mat_vec(n, &sigma_inv, &du);
        let du_norm2 = linalg::dot(n, &breve_u, &du);
        Ok(NodeBase {
            sigma,
            sigma_inv,
            det_sigma,
            psi: spec.psi(t, x),
            du,
            breve_u,
            du_norm2,
        })
    });

    let mut worst_node = 0usize;
    let mut worst_norm = -1.0f64;
    let mut bases = Vec::with_capacity(len);
    for (idx, b) in base.into_iter().enumerate() {
        let b = b?;
        if b.du_norm2 > worst_norm {
            worst_norm = b.du_norm2;
            worst_node = idx;
        }
        bases.push(b);
    }
    if worst_norm >= 1.0 - margin {
        return Err(Error::NotSpacelike {
            node: worst_node,
            du_norm: worst_norm.max(0.0).sqrt(),
        });
    }

    let mut v = vec![0.0; len];
    let mut vtilde = vec![0.0; len];
    let mut psi = vec![0.0; len];
    let mut g = vec![linalg::ZERO_MAT; len];
    let mut g_inv = vec![linalg::ZERO_MAT; len];
    let mut sqrt_g = vec![0.0; len];
    let mut lambda_min_g = vec![0.0; len];
    let mut nu = vec![[0.0; 4]; len];
    let mut du = vec![linalg::ZERO_VEC; len];
    let mut breve_u = vec![linalg::ZERO_VEC; len];

    for (idx, b) in bases.iter().enumerate() {
        let vv = (1.0 - b.du_norm2).sqrt();
        let e2 = (2.0 * b.psi).exp();
        let mut gm = linalg::ZERO_MAT;
        let mut gi = linalg::ZERO_MAT;
        for i in 0..n {
            for j in 0..n {
                gm[i][j] = e2 * (b.sigma[i][j] - b.du[i] * b.du[j]);
                gi[i][j] = (b.sigma_inv[i][j] + b.breve_u[i] * b.breve_u[j] / (vv * vv)) / e2;
            }
        }
        v[idx] = vv;
        vtilde[idx] = 1.0 / vv;
        psi[idx] = b.psi;
        sqrt_g[idx] = vv * ((n as f64) * b.psi).exp() * b.det_sigma.sqrt();
        lambda_min_g[idx] = if n == 1 {
            gm[0][0]
        } else {
            linalg::sym_min_eigenvalue(n, &gm)
        };
        let pref = -1.0 / (vv * b.psi.exp());
        let mut normal = [pref, 0.0, 0.0, 0.0];
        for i in 0..n {
            normal[i + 1] = pref * b.breve_u[i];
        }
        nu[idx] = normal;
        g[idx] = gm;
        g_inv[idx] = gi;
        du[idx] = b.du;
        breve_u[idx] = b.breve_u;
    }

    // induced-metric Christoffels from derivative fields of g_ij
    let chris = christoffels_from_metric(&grid, &g, &g_inv, deriv);

    // second pass: covariant Hessian, second fundamental form, curvatures;
    // the x⁰-row ambient Christoffels are evaluated inline with the σ data
    // already cached
    let h_kappa: Vec<Result<(Mat3, Vec3)>> = map_nodes(len, |idx| {
        let x = &coords[idx];
        let t = u.values[idx];
        let b = &bases[idx];
        let psi_t = spec.psi_dt(t, x);
        let sig_t = spec.sigma_dt(t, x);
        let mut psi_x = linalg::ZERO_VEC;
        for i in 0..n {
            psi_x[i] = spec.psi_dx(t, x, i);
        }
        let mut h = linalg::ZERO_MAT;
        for i in 0..n {
            for j in i..n {
                let u_ij = d2u_fields[i][j].as_ref().unwrap().values[idx];
                let mut cov = u_ij;
                for k in 0..n {
                    cov -= chris[idx][k][i][j] * b.du[k];
                }
                let bracket = cov
                    + psi_t * b.du[i] * b.du[j]
                    + psi_x[i] * b.du[j]
                    + psi_x[j] * b.du[i]
                    + (psi_t * b.sigma[i][j] + 0.5 * sig_t[i][j]);
                let val = -b.psi.exp() * v[idx] * bracket;
                h[i][j] = val;
                h[j][i] = val;
            }
        }
        let kappa = linalg::generalized_eigenvalues(n, &h, &g[idx]).ok_or_else(|| {
            Error::SingularMetric("induced metric is not positive definite".into())
        })?;
        Ok((h, kappa))
    });

    let mut h = vec![linalg::ZERO_MAT; len];
    let mut kappa = vec![linalg::ZERO_VEC; len];
    for (idx, r) in h_kappa.into_iter().enumerate() {
        let (hm, k) = r?;
        h[idx] = hm;
        kappa[idx] = k;
    }

    Ok(GraphGeometry {
        grid,
        du,
        breve_u,
        v,
        vtilde,
        psi,
        g,
        g_inv,
        sqrt_g,
        lambda_min_g,
        nu,
        chris,
        h,
        kappa,
    })
}

fn map_nodes<T: Send>(len: usize, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
    if len >= PARALLEL_THRESHOLD {
        (0..len).into_par_iter().map(f).collect()
    } else {
        (0..len).map(f).collect()
    }
}

/// Christoffel symbols of a metric field by the supplied derivative stencil.
fn christoffels_from_metric(
    grid: &Grid,
    g: &[Mat3],
    g_inv: &[Mat3],
    d: fn(&ScalarField, usize) -> ScalarField,
) -> Vec<[Mat3; 3]> {
    let n = grid.n;
    let len = grid.len();
    if n == 1 {
        // Γ¹₁₁ = g¹¹ ∂₁g₁₁ / 2
        let comp = ScalarField {
            grid: *grid,
            values: g.iter().map(|m| m[0][0]).collect(),
        };
        let der = d(&comp, 0);
        let mut chris = vec![[linalg::ZERO_MAT; 3]; len];
        for idx in 0..len {
            chris[idx][0][0][0] = 0.5 * g_inv[idx][0][0] * der.values[idx];
        }
        return chris;
    }
    // dg[a][i][j] = ∂_a g_ij as fields
    let mut dg = vec![[linalg::ZERO_MAT; 3]; len];
    for i in 0..n {
        for j in i..n {
            let comp = ScalarField {
                grid: *grid,
                values: g.iter().map(|m| m[i][j]).collect(),
            };
            for a in 0..n {
                let der = d(&comp, a);
                for idx in 0..len {
                    dg[idx][a][i][j] = der.values[idx];
                    dg[idx][a][j][i] = der.values[idx];
                }
            }
        }
    }
    let mut chris = vec![[linalg::ZERO_MAT; 3]; len];
    for idx in 0..len {
        for k in 0..n {
            for i in 0..n {
                for j in i..n {
                    let mut val = 0.0;
                    for l in 0..n {
                        val += 0.5
                            * g_inv[idx][k][l]
                            * (dg[idx][j][l][i] + dg[idx][i][l][j] - dg[idx][l][i][j]);
                    }
                    chris[idx][k][i][j] = val;
                    chris[idx][k][j][i] = val;
                }
            }
        }
    }
    chris
}

/// Principal curvatures: ascending eigenvalues of h_ij relative to SPD g_ij.
pub fn principal_curvatures(n: usize, h: &Mat3, g: &Mat3) -> Result<Vec3> {
    match linalg::generalized_sym_eigen(n, h, g) {
        Some((vals, _)) => Ok(vals),
        None => Err(Error::SingularMetric(
            "induced metric is not positive definite".into(),
        )),
    }
}

/// Independent second-fundamental-form oracle through the full embedding
/// x(ξ) = (u(ξ), ξ) with 2nd-order stencils: h_ij = -⟨x_ij, ν⟩.
pub fn embedding_oracle_h(spec: &AmbientSpec, u: &ScalarField) -> Result<Vec<Mat3>> {
    let grid = u.grid;
    let n = grid.n;
    let len = grid.len();

    let mut du_fields = Vec::with_capacity(n);
    for a in 0..n {
        du_fields.push(deriv_2nd_order(u, a));
    }
    let mut d2u = vec![vec![None; 3]; 3];
    for a in 0..n {
        for b in a..n {
            d2u[a][b] = Some(deriv2_2nd_order(u, a, b));
        }
    }

    // induced metric from the embedding tangents, then its Christoffels with
    // the same 2nd-order stencils
    let mut g = vec![linalg::ZERO_MAT; len];
    let mut g_inv = vec![linalg::ZERO_MAT; len];
    for idx in 0..len {
        let x = grid.coords(idx);
        let t = u.values[idx];
        let glow = spec.metric_lower(t, &x);
        let mut tangents = [[0.0; 4]; 3];
        for (a, tan) in tangents.iter_mut().enumerate().take(n) {
            tan[0] = du_fields[a].values[idx];
            tan[a + 1] = 1.0;
        }
        for i in 0..n {
            for j in 0..n {
                let mut val = 0.0;
                for al in 0..=n {
                    for be in 0..=n {
                        val += glow[al][be] * tangents[i][al] * tangents[j][be];
                    }
                }
                g[idx][i][j] = val;
            }
        }
        g_inv[idx] = linalg::sym_inverse(n, &g[idx]).ok_or_else(|| {
            Error::SingularMetric(format!("embedding metric singular at node {idx}"))
        })?;
    }
    let chris = christoffels_from_metric(&grid, &g, &g_inv, deriv_2nd_order);

    let mut out = vec![linalg::ZERO_MAT; len];
    for idx in 0..len {
        let x = grid.coords(idx);
        let t = u.values[idx];
        let glow = spec.metric_lower(t, &x);
        let gamma = spec.christoffel_full(t, &x)?;
        let sigma = spec.sigma(t, &x);
        let sigma_inv = linalg::sym_inverse(n, &sigma)
            .ok_or_else(|| Error::SingularMetric(format!("σ singular at node {idx}")))?;
        let mut du = linalg::ZERO_VEC;
        for a in 0..n {
            du[a] = du_fields[a].values[idx];
        }
        let breve = linalg::mat_vec(n, &sigma_inv, &du);
        let v2 = 1.0 - linalg::dot(n, &breve, &du);
        if !(v2 > 0.0) {
            return Err(Error::NotSpacelike {
                node: idx,
                du_norm: (1.0 - v2).sqrt(),
            });
        }
        let pref = -1.0 / (v2.sqrt() * spec.psi(t, &x).exp());
        let mut nu = [pref, 0.0, 0.0, 0.0];
        for i in 0..n {
            nu[i + 1] = pref * breve[i];
        }
        let mut tangents = [[0.0; 4]; 3];
        for (a, tan) in tangents.iter_mut().enumerate().take(n) {
            tan[0] = du[a];
            tan[a + 1] = 1.0;
        }
        for i in 0..n {
            for j in i..n {
                // x_ij^α = x_{,ij}^α - Γ^k_ij x_k^α + Γ̄^α_βγ x_i^β x_j^γ
                let mut xij = [0.0; 4];
                xij[0] = d2u[i][j].as_ref().unwrap().values[idx];
                for k in 0..n {
                    for al in 0..=n {
                        xij[al] -= chris[idx][k][i][j] * tangents[k][al];
                    }
                }
                for al in 0..=n {
                    let mut corr = 0.0;
                    for be in 0..=n {
                        for ga in 0..=n {
                            corr += gamma[al][be][ga] * tangents[i][be] * tangents[j][ga];
                        }
                    }
                    xij[al] += corr;
                }
                let mut val = 0.0;
                for al in 0..=n {
                    for be in 0..=n {
                        val -= glow[al][be] * xij[al] * nu[be];
                    }
                }
                out[idx][i][j] = val;
                out[idx][j][i] = val;
            }
        }
    }
    Ok(out)
}

/// Scalar curvature of the induced metric (n = 2 only), by finite differences
/// of the induced Christoffel symbols.
pub fn induced_scalar_curvature(geometry: &GraphGeometry) -> Result<ScalarField> {
    let grid = geometry.grid;
    let n = grid.n;
    if n != 2 {
        return Err(Error::NotSupported(format!(
            "scalar curvature check requires n = 2, got n = {n}"
        )));
    }
    let len = grid.len();
    // ∂_a Γ^k_ij as fields
    let mut dchris = vec![[[linalg::ZERO_MAT; 3]; 3]; len];
    for k in 0..n {
        for i in 0..n {
            for j in i..n {
                let comp = ScalarField {
                    grid,
                    values: geometry.chris.iter().map(|c| c[k][i][j]).collect(),
                };
                for a in 0..n {
                    let der = deriv(&comp, a);
                    for idx in 0..len {
                        dchris[idx][a][k][i][j] = der.values[idx];
                        dchris[idx][a][k][j][i] = der.values[idx];
                    }
                }
            }
        }
    }
    let mut values = vec![0.0; len];
    for idx in 0..len {
        let ch = &geometry.chris[idx];
        let dch = &dchris[idx];
        let mut scalar = 0.0;
        for i in 0..n {
            for j in 0..n {
                // Ric_ij = ∂_k Γ^k_ij - ∂_j Γ^k_ik + Γ^k_km Γ^m_ij - Γ^k_jm Γ^m_ik
                let mut ric = 0.0;
                for k in 0..n {
                    ric += dch[k][k][i][j] - dch[j][k][i][k];
                    for m in 0..n {
                        ric += ch[k][k][m] * ch[m][i][j] - ch[k][j][m] * ch[m][i][k];
                    }
                }
                scalar += geometry.g_inv[idx][i][j] * ric;
            }
        }
        values[idx] = scalar;
    }
    Ok(ScalarField { grid, values })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ambient::AmbientSpec;
    use crate::grid::Grid;
    use std::f64::consts::TAU;

    fn minkowski(n: usize) -> AmbientSpec {
        let periods: Vec<f64> = (0..n).map(|_| TAU).collect();
        AmbientSpec::minkowski_torus(n, &periods).unwrap()
    }

    #[test]
    fn flat_slice_geometry() {
        let spec = minkowski(2);
        let grid = Grid::new(2, &[16, 16], &[TAU, TAU]).unwrap();
        let u = ScalarField::constant(grid, 0.0);
        let geom = graph_geometry(&spec, &u).unwrap();
        for idx in 0..grid.len() {
            assert_eq!(geom.v[idx], 1.0);
            for i in 0..2 {
                for j in 0..2 {
                    let expect = if i == j { 1.0 } else { 0.0 };
                    assert!((geom.g[idx][i][j] - expect).abs() < 1e-15);
                    assert!(geom.h[idx][i][j].abs() < 1e-15);
                }
            }
            assert!(geom.kappa[idx][0].abs() < 1e-15);
            assert!(geom.kappa[idx][1].abs() < 1e-15);
            // past-directed unit normal
            assert!(geom.nu[idx][0] < 0.0);
        }
    }

    #[test]
    fn conformal_slice_curvature_closed_form() {
        // slices of e^{2ψ(t)}(-(dt)² + δ) have κ_i = -e^{-ψ(c)} ψ'(c)
        let spec = AmbientSpec::conformal_powerlaw(1, &[TAU], -1.0).unwrap();
        let grid = Grid::new(1, &[32], &[TAU]).unwrap();
        let c = -1.25;
        let u = ScalarField::constant(grid, c);
        let geom = graph_geometry(&spec, &u).unwrap();
        // ψ = log(-t), ψ' = 1/t, so κ = -e^{-ψ}ψ' = -(1/-t)(1/t) = 1/t²
        let expect = 1.0 / (c * c);
        for idx in 0..grid.len() {
            assert!(
                (geom.kappa[idx][0] - expect).abs() < 1e-10,
                "κ = {} expected {expect}",
                geom.kappa[idx][0]
            );
        }
    }

    #[test]
    fn normal_is_unit_and_past_directed() {
        let spec = minkowski(2);
        let grid = Grid::new(2, &[24, 24], &[TAU, TAU]).unwrap();
        let u = ScalarField::from_fn(grid, |x| 0.2 * (x[0]).sin() * (x[1]).cos());
        let geom = graph_geometry(&spec, &u).unwrap();
        for idx in 0..grid.len() {
            let x = grid.coords(idx);
            let glow = spec.metric_lower(u.values[idx], &x);
            let nu = geom.nu[idx];
            let mut norm = 0.0;
            for a in 0..3 {
                for b in 0..3 {
                    norm += glow[a][b] * nu[a] * nu[b];
                }
            }
            assert!((norm + 1.0).abs() < 1e-8, "<ν,ν> = {norm}");
            assert!(nu[0] < 0.0);
        }
    }

    #[test]
    fn inverse_metric_closed_form_matches_direct_inverse() {
        let spec = minkowski(2);
        let grid = Grid::new(2, &[16, 16], &[TAU, TAU]).unwrap();
        let u = ScalarField::from_fn(grid, |x| 0.15 * (x[0] + 2.0 * x[1]).sin());
        let geom = graph_geometry(&spec, &u).unwrap();
        for idx in 0..grid.len() {
            let direct = linalg::sym_inverse(2, &geom.g[idx]).unwrap();
            for i in 0..2 {
                for j in 0..2 {
                    let scale = direct[i][j].abs().max(1.0);
                    assert!(
                        (geom.g_inv[idx][i][j] - direct[i][j]).abs() <= 1e-10 * scale,
                        "closed-form inverse mismatch"
                    );
                }
            }
        }
    }

    #[test]
    fn gradient_norm_identity() {
        // ||Du||²_g = e^{-2ψ} |Du|² / v²
        let spec = AmbientSpec::conformal_powerlaw(2, &[TAU, TAU], -1.0).unwrap();
        let grid = Grid::new(2, &[16, 16], &[TAU, TAU]).unwrap();
        let u = ScalarField::from_fn(grid, |x| -1.0 + 0.1 * (x[0]).sin() * (x[1]).sin());
        let geom = graph_geometry(&spec, &u).unwrap();
        for idx in 0..grid.len() {
            let lhs = linalg::quad_form(2, &geom.g_inv[idx], &geom.du[idx], &geom.du[idx]);
            let du2 = linalg::dot(2, &geom.breve_u[idx], &geom.du[idx]);
            let rhs = (-2.0 * geom.psi[idx]).exp() * du2 / (geom.v[idx] * geom.v[idx]);
            assert!(
                (lhs - rhs).abs() < 1e-10 * rhs.max(1e-30),
                "identity violated"
            );
        }
    }

    #[test]
    fn rejects_non_spacelike_graph() {
        let spec = minkowski(1);
        let grid = Grid::new(1, &[64], &[TAU]).unwrap();
        let u = ScalarField::from_fn(grid, |x| 1.2 * (x[0]).sin());
        match graph_geometry(&spec, &u) {
            Err(Error::NotSpacelike { du_norm, .. }) => {
                assert!(du_norm > 1.0);
            }
            other => panic!("expected NotSpacelike, got {other:?}"),
        }
    }

    #[test]
    fn curve_curvature_matches_hand_formula() {
        // n = 1 graph in flat ambient: κ = -u'' / (1 - u'²)^{3/2}
        let spec = minkowski(1);
        let grid = Grid::new(1, &[256], &[TAU]).unwrap();
        let amp = 0.3;
        let u = ScalarField::from_fn(grid, |x| amp * (x[0]).sin());
        let geom = graph_geometry(&spec, &u).unwrap();
        for idx in 0..grid.len() {
            let x = grid.coords(idx)[0];
            let up = amp * x.cos();
            let upp = -amp * x.sin();
            let expect = -upp / (1.0 - up * up).powf(1.5);
            assert!(
                (geom.kappa[idx][0] - expect).abs() < 1e-6,
                "κ mismatch at x = {x}: {} vs {expect}",
                geom.kappa[idx][0]
            );
        }
    }

    #[test]
    fn oracle_agrees_with_formula_path() {
        let spec = minkowski(2);
        let grid = Grid::new(2, &[48, 48], &[TAU, TAU]).unwrap();
        let u = ScalarField::from_fn(grid, |x| 0.15 * (x[0]).sin() + 0.1 * (2.0 * x[1]).cos());
        let geom = graph_geometry(&spec, &u).unwrap();
        let oracle = embedding_oracle_h(&spec, &u).unwrap();
        let mut max_err = 0.0f64;
        for idx in 0..grid.len() {
            for i in 0..2 {
                for j in 0..2 {
                    max_err = max_err.max((geom.h[idx][i][j] - oracle[idx][i][j]).abs());
                }
            }
        }
        assert!(max_err < 5e-3, "oracle disagreement {max_err:.3e}");
    }

    #[test]
    fn oracle_zero_on_flat_slice() {
        let spec = minkowski(2);
        let grid = Grid::new(2, &[16, 16], &[TAU, TAU]).unwrap();
        let u = ScalarField::constant(grid, 0.0);
        let oracle = embedding_oracle_h(&spec, &u).unwrap();
        for hm in &oracle {
            for i in 0..2 {
                for j in 0..2 {
                    assert!(hm[i][j].abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn principal_curvature_examples() {
        let g = linalg::identity(2);
        let k = principal_curvatures(2, &g, &g).unwrap();
        assert_eq!(&k[..2], &[1.0, 1.0]);

        let mut h = linalg::ZERO_MAT;
        h[0][0] = 3.0;
        h[1][1] = -1.0;
        let k = principal_curvatures(2, &h, &g).unwrap();
        assert_eq!(&k[..2], &[-1.0, 3.0]);

        let bad = linalg::ZERO_MAT;
        assert!(principal_curvatures(2, &h, &bad).is_err());
    }

    #[test]
    fn principal_curvatures_match_char_poly_roots() {
        // brute-force oracle: roots of det(h - κ g) by scanning + bisection
        let g = [[2.0, 0.4, 0.1], [0.4, 1.5, -0.2], [0.1, -0.2, 1.0]];
        let h = [[0.7, -0.3, 0.2], [-0.3, -0.5, 0.4], [0.2, 0.4, 1.1]];
        let kappa = principal_curvatures(3, &h, &g).unwrap();
        let poly = |k: f64| {
            let mut m = linalg::ZERO_MAT;
            for i in 0..3 {
                for j in 0..3 {
                    m[i][j] = h[i][j] - k * g[i][j];
                }
            }
            linalg::det(3, &m)
        };
        let mut roots = Vec::new();
        let (lo, hi, steps) = (-10.0, 10.0, 20000);
        let dx = (hi - lo) / steps as f64;
        let mut prev = poly(lo);
        for s in 1..=steps {
            let x = lo + s as f64 * dx;
            let cur = poly(x);
            if prev * cur < 0.0 {
                let (mut a, mut b) = (x - dx, x);
                for _ in 0..200 {
                    let mid = 0.5 * (a + b);
                    if poly(a) * poly(mid) <= 0.0 {
                        b = mid;
                    } else {
                        a = mid;
                    }
                }
                roots.push(0.5 * (a + b));
            }
            prev = cur;
        }
        assert_eq!(roots.len(), 3, "oracle found {} roots", roots.len());
        for (a, b) in kappa.iter().zip(roots.iter()) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }

    #[test]
    fn scalar_curvature_flat_slice_is_zero() {
        let spec = minkowski(2);
        let grid = Grid::new(2, &[16, 16], &[TAU, TAU]).unwrap();
        let u = ScalarField::constant(grid, 0.3);
        let geom = graph_geometry(&spec, &u).unwrap();
        let r = induced_scalar_curvature(&geom).unwrap();
        assert!(r.sup_norm() < 1e-12);
    }

    #[test]
    fn gauss_equation_in_flat_ambient() {
        // R = -2 κ₁ κ₂ for spacelike graphs in the Minkowski torus
        let spec = minkowski(2);
        let grid = Grid::new(2, &[64, 64], &[TAU, TAU]).unwrap();
        let u = ScalarField::from_fn(grid, |x| 0.2 * (x[0]).sin() * (x[1]).sin());
        let geom = graph_geometry(&spec, &u).unwrap();
        let r = induced_scalar_curvature(&geom).unwrap();
        let mut max_res = 0.0f64;
        for idx in 0..grid.len() {
            let prod = geom.kappa[idx][0] * geom.kappa[idx][1];
            max_res = max_res.max((r.values[idx] + 2.0 * prod).abs());
            if prod > 1e-3 {
                assert!(r.values[idx] < 0.0, "Lorentzian sign flip violated");
            }
        }
        assert!(max_res < 5e-3, "Gauss residual {max_res:.3e}");
    }

    #[test]
    fn scalar_curvature_unsupported_for_n1() {
        let spec = minkowski(1);
        let grid = Grid::new(1, &[16], &[TAU]).unwrap();
        let u = ScalarField::constant(grid, 0.0);
        let geom = graph_geometry(&spec, &u).unwrap();
        assert!(matches!(
            induced_scalar_curvature(&geom),
            Err(Error::NotSupported(_))
        ));
    }
}
