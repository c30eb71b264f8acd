//! TOML run configuration: scenario presets, grid, curvature selections,
//! tolerances and output paths, with aggregated validation against the
//! flow legality table.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Deserialize;

use crate::ambient::{AmbientSpec, MetricModel, WarpedTable};
use crate::curvfun::{ConeKind, CurvatureFunctionSpec, CurvatureKind, SupplementaryKind};
use crate::error::{Error, Result};
use crate::flow::{legality_errors, FlowConfig, ForceMode};
use crate::grid::{Grid, ScalarField};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub ambient: AmbientSection,
    pub grid: GridSection,
    pub curvature: CurvatureSection,
    pub force: ForceSection,
    pub initial: InitialSection,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub cfc: CfcSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AmbientSection {
    pub preset: String,
    /// Power-law exponent p in e^ψ = (-t)^{-p}.
    pub p: Option<f64>,
    pub h_amb: Option<f64>,
    pub volume_ref_time: Option<f64>,
    /// JSON file with the tabulated (ψ, σ) data for "warped-general".
    pub table_file: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub n: usize,
    pub points: Vec<usize>,
    pub periods: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurvatureSection {
    /// "mean" | "sqrtH2" | "sigmaN" | "kstar-product:a=<float>".
    pub function: String,
    /// "rn" | "gamma1" | "gamma2" | "gamma-plus" (defaults per function).
    pub cone: Option<String>,
    /// "identity" | "neg-reciprocal" | "log".
    pub phi: String,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForceSection {
    /// "preserve" | "constant".
    pub mode: String,
    pub k: Option<usize>,
    pub c: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSection {
    /// "slice" | "file".
    pub kind: String,
    /// Slice value for kind = "slice".
    pub time: Option<f64>,
    #[serde(default)]
    pub modes: Vec<ModeSection>,
    pub file: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeSection {
    /// Integer wave numbers per axis in sin(2π Σ_a w_a ξ_a / L_a + phase).
    pub waves: Vec<i64>,
    pub amplitude: f64,
    #[serde(default)]
    pub phase: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
#[serde(default)]
pub struct RunSection {
    pub c_safe: f64,
    pub tol_eta: f64,
    pub t_max: f64,
    pub dt_min: f64,
    pub eps_den_scale: f64,
    pub cadence: usize,
    pub max_steps: usize,
    pub mixed_volume_ks: Option<Vec<usize>>,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            c_safe: 0.1,
            tol_eta: 1e-9,
            t_max: 100.0,
            dt_min: 1e-12,
            eps_den_scale: 1e-10,
            cadence: 100,
            max_steps: usize::MAX,
            mixed_volume_ks: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
#[serde(default)]
pub struct CfcSection {
    pub c: Option<f64>,
    pub c1: Option<f64>,
    pub c2: Option<f64>,
    pub m: Option<usize>,
    pub tol: Option<f64>,
    pub amplitude: Option<f64>,
    pub mode: Option<usize>,
    pub match_k: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
#[serde(default)]
pub struct OutputSection {
    pub directory: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            directory: PathBuf::from("out"),
        }
    }
}

/// Fully validated run configuration.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub flow: FlowConfig,
    pub grid: Grid,
    pub initial: InitialSection,
    pub cfc: CfcSection,
    pub output_dir: PathBuf,
    /// The resolved raw document, echoed into every report.
    pub raw: toml::Value,
}

impl RunConfig {
    /// Builds the initial graph field from the `[initial]` section.
    pub fn initial_field(&self) -> Result<ScalarField> {
        build_initial(&self.initial, &self.grid)
    }
}

pub fn build_initial(section: &InitialSection, grid: &Grid) -> Result<ScalarField> {
    match section.kind.as_str() {
        "file" => {
            let path = section.file.as_ref().ok_or_else(|| {
                Error::Validation(vec!["initial.kind = \"file\" needs initial.file".into()])
            })?;
            let field = ScalarField::read_binary(path)?;
            if field.grid != *grid {
                return Err(Error::Validation(vec![format!(
                    "initial field grid {:?} does not match configured grid {:?}",
                    field.grid, grid
                )]));
            }
            Ok(field)
        }
        "slice" => {
            let base = section.time.ok_or_else(|| {
                Error::Validation(vec!["initial.kind = \"slice\" needs initial.time".into()])
            })?;
            let modes = section.modes.clone();
            let grid_copy = *grid;
            Ok(ScalarField::from_fn(grid_copy, move |x| {
                let mut v = base;
                for mode in &modes {
                    let mut arg = mode.phase;
                    for (a, &w) in mode.waves.iter().enumerate().take(grid_copy.n) {
                        arg += std::f64::consts::TAU * w as f64 * x[a] / grid_copy.periods[a];
                    }
                    v += mode.amplitude * arg.sin();
                }
                v
            }))
        }
        other => Err(Error::Validation(vec![format!(
            "unknown initial kind {other:?} (expected \"slice\" or \"file\")"
        )])),
    }
}

/// Parses and validates a configuration file; every validation problem found
/// is reported, not only the first.
pub fn parse_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Parse(format!("cannot read {}: {e}", path.display())))?;
    parse_config_str(&text, path.parent().unwrap_or(Path::new(".")))
}

pub fn parse_config_str(text: &str, base_dir: &Path) -> Result<RunConfig> {
    let file: ConfigFile =
        toml::from_str(text).map_err(|e| Error::Parse(format!("config parse error: {e}")))?;
    let raw: toml::Value = toml::from_str(text).unwrap();
    resolve(file, base_dir, raw)
}

fn resolve(file: ConfigFile, base_dir: &Path, raw: toml::Value) -> Result<RunConfig> {
    let mut errors: Vec<String> = Vec::new();

    let grid = match Grid::new(file.grid.n, &file.grid.points, &file.grid.periods) {
        Ok(g) => Some(g),
        Err(e) => {
            errors.push(format!("grid: {e}"));
            None
        }
    };

    let ambient = resolve_ambient(&file.ambient, &file.grid, base_dir, &mut errors);
    let curvature = resolve_curvature(&file.curvature, &mut errors);
    let phi = match file.curvature.phi.as_str() {
        "identity" => Some(SupplementaryKind::Identity),
        "neg-reciprocal" => Some(SupplementaryKind::NegReciprocal),
        "log" => Some(SupplementaryKind::Log),
        other => {
            errors.push(format!(
                "curvature.phi: unknown supplementary function {other:?}"
            ));
            None
        }
    };
    let force = match file.force.mode.as_str() {
        "preserve" => match file.force.k {
            Some(k) => Some(ForceMode::Preserve { k }),
            None => {
                errors.push("force.mode = \"preserve\" needs force.k".into());
                None
            }
        },
        "constant" => match file.force.c {
            Some(c) => Some(ForceMode::Constant { c }),
            None => {
                errors.push("force.mode = \"constant\" needs force.c".into());
                None
            }
        },
        other => {
            errors.push(format!("force.mode: unknown mode {other:?}"));
            None
        }
    };

    if file.run.c_safe <= 0.0 || file.run.c_safe > 0.5 {
        errors.push(format!(
            "run.c_safe = {} outside the stable range (0, 0.5]",
            file.run.c_safe
        ));
    }
    if file.run.cadence == 0 {
        errors.push("run.cadence must be at least 1".into());
    }
    if let (Some(c1), Some(c2)) = (file.cfc.c1, file.cfc.c2) {
        if !(c1 > 0.0 && c2 > c1) {
            errors.push(format!("cfc: need 0 < c1 < c2, got c1 = {c1}, c2 = {c2}"));
        }
    }

    if let (Some(ambient), Some(curvature), Some(phi), Some(force)) =
        (ambient.clone(), curvature, phi, force)
    {
        errors.extend(legality_errors(&curvature, phi, &force, ambient.n));
        if errors.is_empty() {
            let grid = grid.unwrap();
            let mut flow = FlowConfig::new(ambient, curvature, phi, force);
            flow.c_safe = file.run.c_safe;
            flow.tol_eta = file.run.tol_eta;
            flow.t_max = file.run.t_max;
            flow.dt_min = file.run.dt_min;
            flow.eps_den_scale = file.run.eps_den_scale;
            flow.cadence = file.run.cadence;
            flow.max_steps = file.run.max_steps;
            if let Some(ks) = file.run.mixed_volume_ks.clone() {
                flow.mixed_volume_ks = ks;
            }
            return Ok(RunConfig {
                flow,
                grid,
                initial: file.initial,
                cfc: file.cfc,
                output_dir: file.output.directory,
                raw,
            });
        }
    }
    Err(Error::Validation(errors))
}

fn resolve_ambient(
    section: &AmbientSection,
    grid: &GridSection,
    base_dir: &Path,
    errors: &mut Vec<String>,
) -> Option<AmbientSpec> {
    let mut spec = match section.preset.as_str() {
        "minkowski-torus" => AmbientSpec::minkowski_torus(grid.n, &grid.periods),
        "conformal-desitter" => AmbientSpec::conformal_de_sitter(grid.n, &grid.periods),
        "conformal-powerlaw" => {
            let p = match section.p {
                Some(p) => p,
                None => {
                    errors.push("ambient: conformal-powerlaw needs parameter p".into());
                    return None;
                }
            };
            AmbientSpec::conformal_powerlaw(grid.n, &grid.periods, p)
        }
        "warped-general" => {
            let path = match &section.table_file {
                Some(p) => base_dir.join(p),
                None => {
                    errors.push("ambient: warped-general needs table_file".into());
                    return None;
                }
            };
            match load_warped_table(&path, grid.n) {
                Ok(table) => {
                    let t0 = table.t_range.0;
                    let t1 = table.t_range.1;
                    Ok(AmbientSpec {
                        n: grid.n,
                        time_interval: (t0, t1),
                        periods: {
                            let mut p = [1.0; 3];
                            for (a, &x) in grid.periods.iter().enumerate() {
                                p[a] = x;
                            }
                            p
                        },
                        metric: MetricModel::WarpedGeneral(Arc::new(table)),
                        h_amb: 1e-4,
                        volume_ref_time: 0.5 * (t0 + t1),
                    })
                }
                Err(e) => {
                    errors.push(format!("ambient: {e}"));
                    return None;
                }
            }
        }
        other => {
            errors.push(format!("ambient: unknown preset {other:?}"));
            return None;
        }
    };
    match &mut spec {
        Ok(spec) => {
            if let Some(h) = section.h_amb {
                if h > 0.0 {
                    spec.h_amb = h;
                } else {
                    errors.push(format!("ambient.h_amb must be positive, got {h}"));
                }
            }
            if let Some(t) = section.volume_ref_time {
                spec.volume_ref_time = t;
            }
            if !spec.contains_time(spec.volume_ref_time) {
                errors.push(format!(
                    "ambient.volume_ref_time = {} outside the time interval",
                    spec.volume_ref_time
                ));
            }
        }
        Err(e) => {
            errors.push(format!("ambient: {e}"));
            return None;
        }
    }
    spec.ok()
}

#[derive(Deserialize)]
struct WarpedTableFile {
    t_range: (f64, f64),
    t_samples: usize,
    points: Vec<usize>,
    periods: Vec<f64>,
    psi: Vec<f64>,
    sigma: Vec<Vec<f64>>,
}

fn load_warped_table(path: &Path, n: usize) -> Result<WarpedTable> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Parse(format!("cannot read {}: {e}", path.display())))?;
    let file: WarpedTableFile = serde_json::from_str(&text)
        .map_err(|e| Error::Parse(format!("warped table parse error: {e}")))?;
    if file.points.len() != n || file.periods.len() != n {
        return Err(Error::Validation(vec![format!(
            "warped table dimensions do not match n = {n}"
        )]));
    }
    let spatial: usize = file.points.iter().product();
    if file.psi.len() != file.t_samples * spatial {
        return Err(Error::Validation(vec![
            "warped table psi length mismatch".into(),
        ]));
    }
    let comps = n * (n + 1) / 2;
    if file.sigma.len() != comps
        || file.sigma.iter().any(|c| c.len() != file.t_samples * spatial)
    {
        return Err(Error::Validation(vec![
            "warped table sigma length mismatch".into(),
        ]));
    }
    if file.t_samples < 4 {
        return Err(Error::Validation(vec![
            "warped table needs at least 4 time samples".into(),
        ]));
    }
    let mut dims = [1usize; 3];
    let mut periods = [1.0f64; 3];
    for a in 0..n {
        dims[a] = file.points[a];
        periods[a] = file.periods[a];
    }
    Ok(WarpedTable {
        n,
        t_range: file.t_range,
        t_samples: file.t_samples,
        dims,
        periods,
        psi: file.psi,
        sigma: file.sigma,
    })
}

fn resolve_curvature(
    section: &CurvatureSection,
    errors: &mut Vec<String>,
) -> Option<CurvatureFunctionSpec> {
    let kind = if section.function == "mean" {
        CurvatureKind::Mean
    } else if section.function == "sqrtH2" {
        CurvatureKind::SqrtH2
    } else if section.function == "sigmaN" {
        CurvatureKind::SigmaN
    } else if let Some(rest) = section.function.strip_prefix("kstar-product:a=") {
        match rest.parse::<f64>() {
            Ok(a) => CurvatureKind::KStarProduct { a },
            Err(_) => {
                errors.push(format!(
                    "curvature.function: cannot parse exponent in {:?}",
                    section.function
                ));
                return None;
            }
        }
    } else {
        errors.push(format!(
            "curvature.function: unknown function {:?}",
            section.function
        ));
        return None;
    };
    let cone = match section.cone.as_deref() {
        None => None,
        Some("rn") => Some(ConeKind::RN),
        Some("gamma1") => Some(ConeKind::Gamma(1)),
        Some("gamma2") => Some(ConeKind::Gamma(2)),
        Some("gamma-plus") => Some(ConeKind::GammaPlus),
        Some(other) => {
            errors.push(format!("curvature.cone: unknown cone {other:?}"));
            return None;
        }
    };
    match CurvatureFunctionSpec::new(kind, cone) {
        Ok(spec) => Some(spec),
        Err(e) => {
            errors.push(format!("curvature: {e}"));
            None
        }
    }
}
