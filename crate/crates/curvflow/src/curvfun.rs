//! Symmetric curvature functions, their cones, derivatives, supplementary
//! functions and the algebraic inequalities between them.
//!
//! The flowed functions are the mean curvature H, the root of the second
//! symmetric polynomial √H₂, the n-th root of the Gauss curvature H_n^{1/n},
//! and a product family σ_n^a · (1/H₁(κ⁻¹))^{1-a} on the positive cone; all
//! are symmetric, strictly monotone and homogeneous of degree one on their
//! cones.

use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{self, Mat3, Vec3};

/// Admissibility cone of a curvature function.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConeKind {
    /// All of ℝⁿ.
    RN,
    /// Γ_k = {H₁ > 0, …, H_k > 0}.
    Gamma(usize),
    /// The positive cone Γ₊ = {κ_i > 0}.
    GammaPlus,
}

impl ConeKind {
    /// Strict membership together with the minimum slack over the defining
    /// inequalities (infinite for ℝⁿ).
    pub fn contains(&self, n: usize, kappa: &Vec3) -> (bool, f64) {
        match self {
            ConeKind::RN => (true, f64::INFINITY),
            ConeKind::GammaPlus => {
                let slack = (0..n).map(|i| kappa[i]).fold(f64::INFINITY, f64::min);
                (slack > 0.0, slack)
            }
            ConeKind::Gamma(k) => {
                let mut slack = f64::INFINITY;
                for j in 1..=*k {
                    slack = slack.min(elementary_symmetric(j, kappa, n).unwrap());
                }
                (slack > 0.0, slack)
            }
        }
    }

    pub fn name(&self) -> String {
        match self {
            ConeKind::RN => "R^n".into(),
            ConeKind::Gamma(k) => format!("Gamma_{k}"),
            ConeKind::GammaPlus => "Gamma_+".into(),
        }
    }
}

/// Which curvature function is flowed.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum CurvatureKind {
    /// F = H = Σ κ_i.
    Mean,
    /// F = √H₂ on Γ₂ (needs n ≥ 2).
    SqrtH2,
    /// F = H_n^{1/n} on Γ₊.
    SigmaN,
    /// F = σ_n^a · (1/H₁(κ⁻¹))^{1-a} on Γ₊, homogeneous of degree one.
    KStarProduct { a: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CurvatureFunctionSpec {
    pub kind: CurvatureKind,
    pub cone: ConeKind,
}

impl CurvatureFunctionSpec {
    /// Builds a spec, checking the cone tag against the function kind.
    pub fn new(kind: CurvatureKind, cone: Option<ConeKind>) -> Result<CurvatureFunctionSpec> {
        let default = match kind {
            CurvatureKind::Mean => ConeKind::RN,
            CurvatureKind::SqrtH2 => ConeKind::Gamma(2),
            CurvatureKind::SigmaN | CurvatureKind::KStarProduct { .. } => ConeKind::GammaPlus,
        };
        let cone = cone.unwrap_or(default);
        let legal = match kind {
            CurvatureKind::Mean => matches!(cone, ConeKind::RN | ConeKind::Gamma(1)),
            CurvatureKind::SqrtH2 => matches!(cone, ConeKind::Gamma(2)),
            CurvatureKind::SigmaN | CurvatureKind::KStarProduct { .. } => {
                matches!(cone, ConeKind::GammaPlus)
            }
        };
        if !legal {
            return Err(Error::InvalidArgument(format!(
                "cone {} is not admissible for {:?}",
                cone.name(),
                kind
            )));
        }
        if let CurvatureKind::KStarProduct { a } = kind {
            if !(a > 0.0 && a <= 1.0) {
                return Err(Error::InvalidArgument(format!(
                    "kstar-product exponent must lie in (0, 1], got {a}"
                )));
            }
        }
        Ok(CurvatureFunctionSpec { kind, cone })
    }

    pub fn mean() -> CurvatureFunctionSpec {
        CurvatureFunctionSpec::new(CurvatureKind::Mean, None).unwrap()
    }

    pub fn mean_gamma1() -> CurvatureFunctionSpec {
        CurvatureFunctionSpec::new(CurvatureKind::Mean, Some(ConeKind::Gamma(1))).unwrap()
    }

    pub fn sqrt_h2() -> CurvatureFunctionSpec {
        CurvatureFunctionSpec::new(CurvatureKind::SqrtH2, None).unwrap()
    }

    pub fn sigma_n() -> CurvatureFunctionSpec {
        CurvatureFunctionSpec::new(CurvatureKind::SigmaN, None).unwrap()
    }

    /// F(1, …, 1).
    pub fn f_one(&self, n: usize) -> f64 {
        match self.kind {
            CurvatureKind::Mean => n as f64,
            CurvatureKind::SqrtH2 => (binomial(n, 2) as f64).sqrt(),
            CurvatureKind::SigmaN => 1.0,
            CurvatureKind::KStarProduct { a } => (n as f64).powf(a - 1.0),
        }
    }

    /// Value and gradient ∂F/∂κ_i at an admissible point.
    pub fn value_grad(&self, n: usize, kappa: &Vec3) -> Result<(f64, Vec3)> {
        let (inside, slack) = self.cone.contains(n, kappa);
        if !inside {
            return Err(Error::NotAdmissible { node: 0, slack });
        }
        let mut grad = linalg::ZERO_VEC;
        let value = match self.kind {
            CurvatureKind::Mean => {
                for g in grad.iter_mut().take(n) {
                    *g = 1.0;
                }
                (0..n).map(|i| kappa[i]).sum()
            }
            CurvatureKind::SqrtH2 => {
                let h1: f64 = (0..n).map(|i| kappa[i]).sum();
                let h2 = elementary_symmetric(2, kappa, n)?;
                let f = h2.sqrt();
                for i in 0..n {
                    grad[i] = (h1 - kappa[i]) / (2.0 * f);
                }
                f
            }
            CurvatureKind::SigmaN => {
                let prod: f64 = (0..n).map(|i| kappa[i]).product();
                let f = prod.powf(1.0 / n as f64);
                for i in 0..n {
                    grad[i] = f / (n as f64 * kappa[i]);
                }
                f
            }
            CurvatureKind::KStarProduct { a } => {
                let prod: f64 = (0..n).map(|i| kappa[i]).product();
                let sigma_n = prod.powf(1.0 / n as f64);
                let s: f64 = (0..n).map(|i| 1.0 / kappa[i]).sum();
                let h_tilde = 1.0 / s;
                let f = sigma_n.powf(a) * h_tilde.powf(1.0 - a);
                for i in 0..n {
                    grad[i] =
                        f * (a / (n as f64 * kappa[i]) + (1.0 - a) / (s * kappa[i] * kappa[i]));
                }
                f
            }
        };
        Ok((value, grad))
    }

    pub fn value(&self, n: usize, kappa: &Vec3) -> Result<f64> {
        Ok(self.value_grad(n, kappa)?.0)
    }

    /// The contravariant tensor F^{ij} = Σ_a F_{,a} e_a^i e_a^j built in the
    /// g-orthonormal eigenframe of the shape operator. For the (smooth,
    /// symmetric) functions shipped here the result does not depend on the
    /// basis chosen inside a degenerate eigenspace.
    pub fn tensor(&self, n: usize, h: &Mat3, g: &Mat3) -> Result<Mat3> {
        let (kappa, evecs) = linalg::generalized_sym_eigen(n, h, g).ok_or_else(|| {
            Error::SingularMetric("metric not positive definite in F^{ij}".into())
        })?;
        let (_, grad) = self.value_grad(n, &kappa)?;
        let mut out = linalg::ZERO_MAT;
        for a in 0..n {
            for i in 0..n {
                for j in 0..n {
                    out[i][j] += grad[a] * evecs[i][a] * evecs[j][a];
                }
            }
        }
        Ok(out)
    }
}

/// Supplementary reparametrization Φ with Φ' > 0 and Φ'' ≤ 0.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SupplementaryKind {
    Identity,
    /// Φ(x) = -1/x on x > 0.
    NegReciprocal,
    /// Φ(x) = log x on x > 0.
    Log,
}

impl SupplementaryKind {
    pub fn domain(&self) -> (f64, f64) {
        match self {
            SupplementaryKind::Identity => (f64::NEG_INFINITY, f64::INFINITY),
            SupplementaryKind::NegReciprocal | SupplementaryKind::Log => (0.0, f64::INFINITY),
        }
    }

    fn check_domain(&self, x: f64) -> Result<()> {
        let (lo, hi) = self.domain();
        if x <= lo || x >= hi || !x.is_finite() {
            return Err(Error::Domain(format!("{self:?} is undefined at F = {x}")));
        }
        Ok(())
    }

    pub fn value(&self, x: f64) -> Result<f64> {
        self.check_domain(x)?;
        Ok(match self {
            SupplementaryKind::Identity => x,
            SupplementaryKind::NegReciprocal => -1.0 / x,
            SupplementaryKind::Log => x.ln(),
        })
    }

    pub fn dphi(&self, x: f64) -> Result<f64> {
        self.check_domain(x)?;
        Ok(match self {
            SupplementaryKind::Identity => 1.0,
            SupplementaryKind::NegReciprocal => 1.0 / (x * x),
            SupplementaryKind::Log => 1.0 / x,
        })
    }

    pub fn inverse(&self, y: f64) -> Result<f64> {
        match self {
            SupplementaryKind::Identity => Ok(y),
            SupplementaryKind::NegReciprocal => {
                if y >= 0.0 {
                    return Err(Error::Domain(format!("-1/x has image (-inf, 0), got {y}")));
                }
                Ok(-1.0 / y)
            }
            SupplementaryKind::Log => Ok(y.exp()),
        }
    }
}

/// Elementary symmetric polynomial H_k by the Newton-identity recurrence
/// (H₀ = 1).
pub fn elementary_symmetric(k: usize, kappa: &Vec3, n: usize) -> Result<f64> {
    if k > n {
        return Err(Error::InvalidArgument(format!(
            "elementary symmetric index {k} out of range for n = {n}"
        )));
    }
    if k == 0 {
        return Ok(1.0);
    }
    // power sums p_j, then m e_m = Σ_{i=1}^{m} (-1)^{i-1} e_{m-i} p_i
    let mut p = [0.0f64; 4];
    for j in 1..=k {
        p[j] = (0..n).map(|i| kappa[i].powi(j as i32)).sum();
    }
    let mut e = [0.0f64; 4];
    e[0] = 1.0;
    for m in 1..=k {
        let mut acc = 0.0;
        let mut sign = 1.0;
        for i in 1..=m {
            acc += sign * e[m - i] * p[i];
            sign = -sign;
        }
        e[m] = acc / m as f64;
    }
    Ok(e[k])
}

/// Gradient entry ∂H_k/∂κ_i = H_{k-1} of the remaining entries.
pub fn elementary_symmetric_grad(k: usize, kappa: &Vec3, n: usize, i: usize) -> Result<f64> {
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!(
            "gradient index {k} out of range for n = {n}"
        )));
    }
    let mut rest = linalg::ZERO_VEC;
    let mut m = 0;
    for j in 0..n {
        if j != i {
            rest[m] = kappa[j];
            m += 1;
        }
    }
    elementary_symmetric(k - 1, &rest, n - 1)
}

pub fn binomial(n: usize, k: usize) -> u64 {
    if k > n {
        return 0;
    }
    let mut r = 1u64;
    for i in 0..k {
        r = r * (n - i) as u64 / (i + 1) as u64;
    }
    r
}

/// One link of the normalized-power Maclaurin chain.
#[derive(Clone, Copy, Debug)]
pub struct MaclaurinPair {
    /// Index of the higher root σ̃_{k+1} on the small side.
    pub upper: usize,
    /// Index of the lower root σ̃_k on the large side.
    pub lower: usize,
    /// The inequality needs κ ∈ Γ_{k+1}.
    pub applicable: bool,
    /// σ̃_k - σ̃_{k+1} when applicable.
    pub slack: f64,
}

/// Checks σ̃_{k+1} ≤ σ̃_k with σ̃_k = (H_k / C(n,k))^{1/k} for every adjacent
/// pair; each link requires κ ∈ Γ_{k+1}.
pub fn check_maclaurin(kappa: &Vec3, n: usize) -> Vec<MaclaurinPair> {
    let mut out = Vec::new();
    for k in 1..n {
        let (applicable, _) = ConeKind::Gamma(k + 1).contains(n, kappa);
        let slack = if applicable {
            let lower = normalized_root(k, kappa, n);
            let upper = normalized_root(k + 1, kappa, n);
            lower - upper
        } else {
            f64::NAN
        };
        out.push(MaclaurinPair {
            upper: k + 1,
            lower: k,
            applicable,
            slack,
        });
    }
    out
}

/// σ̃_k = (H_k / C(n,k))^{1/k}.
pub fn normalized_root(k: usize, kappa: &Vec3, n: usize) -> f64 {
    let hk = elementary_symmetric(k, kappa, n).unwrap();
    (hk / binomial(n, k) as f64).powf(1.0 / k as f64)
}

/// Slack of F ≤ F(1,…,1) H / n for a concave degree-one curvature function.
pub fn check_fh_inequality(spec: &CurvatureFunctionSpec, kappa: &Vec3, n: usize) -> Result<f64> {
    let (inside, slack) = spec.cone.contains(n, kappa);
    if !inside {
        return Err(Error::NotAdmissible { node: 0, slack });
    }
    let f = spec.value(n, kappa)?;
    let h: f64 = (0..n).map(|i| kappa[i]).sum();
    Ok(spec.f_one(n) * h / n as f64 - f)
}

/// Draws a point of the given cone by rejection sampling from a box; used by
/// the sampling audits.
pub fn sample_cone(cone: &ConeKind, n: usize, rng: &mut impl Rng) -> Vec3 {
    loop {
        let mut kappa = linalg::ZERO_VEC;
        for k in kappa.iter_mut().take(n) {
            *k = match cone {
                ConeKind::GammaPlus => rng.gen_range(1e-3..3.0),
                _ => rng.gen_range(-3.0..3.0),
            };
        }
        let (inside, _) = cone.contains(n, &kappa);
        if inside {
            return kappa;
        }
    }
}
