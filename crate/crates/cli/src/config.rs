//! Scenario configuration: JSON schema, defaults, validation.
//!
//! The empty document `{}` is a complete configuration; every field defaults
//! to the benchmark operating point (omega_m = 10, J = 1, eps = 3,
//! gamma_p = 1e-5, kappa_b = 0.15, delta_b = 10, nbar_p = 10, target level
//! j = 1). All rates are in units of the optomechanical coupling.

use serde::{Deserialize, Serialize};

use optomech::model::{AlphaConvention, PhiGOrder, SeriesControl, SystemParams};
use optomech::observables::WignerGridSpec;

use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputKind {
    Populations,
    Wigner,
    Metrics,
    Selectivity,
    FullModelValidation,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetuningMode {
    /// Solve the selective-resonance condition for delta_a (default).
    Solve,
    /// Use params.delta_a as given.
    Fixed,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ParamsDoc {
    omega_m: Option<f64>,
    j: Option<f64>,
    eps: Option<f64>,
    delta_a: Option<f64>,
    delta_b: Option<f64>,
    kappa_b: Option<f64>,
    kappa_a: Option<f64>,
    gamma_p: Option<f64>,
    nbar_p: Option<f64>,
    alpha_convention: Option<AlphaConvention>,
    phi_g_order: Option<PhiGOrder>,
}

#[derive(Clone, Copy, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct WignerDoc {
    pub xmin: f64,
    pub xmax: f64,
    pub ymin: f64,
    pub ymax: f64,
    pub nx: usize,
    pub ny: usize,
}

#[derive(Clone, Copy, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ValidationDoc {
    pub n_c: Option<usize>,
    pub nbar_p: Option<f64>,
    pub gamma_p: Option<f64>,
    pub kappa_a: Option<f64>,
    pub kappa_b: Option<f64>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SeriesDoc {
    max_terms: Option<usize>,
    tail_tol: Option<f64>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepGridDoc {
    pub eta: Vec<f64>,
    pub target_j: Vec<usize>,
    /// Optional fixed detunings, row-major over eta x target_j; when absent
    /// each point solves its own selective root.
    pub delta_a: Option<Vec<f64>>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepPointDoc {
    pub eta: Option<f64>,
    pub target_j: Option<usize>,
    pub delta_a: Option<f64>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepDoc {
    pub grid: Option<SweepGridDoc>,
    pub points: Option<Vec<SweepPointDoc>>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigDoc {
    params: Option<ParamsDoc>,
    target_j: Option<usize>,
    bracket: Option<[f64; 2]>,
    detuning: Option<DetuningMode>,
    outputs: Option<Vec<OutputKind>>,
    wigner: Option<WignerDoc>,
    validation: Option<ValidationDoc>,
    series: Option<SeriesDoc>,
    out_dir: Option<String>,
    sweep: Option<SweepDoc>,
    parallel: Option<usize>,
}

/// Reduced-scale parameters of the full three-mode validation run.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct ValidationParams {
    pub n_c: usize,
    pub nbar_p: f64,
    pub gamma_p: f64,
    pub kappa_a: f64,
    pub kappa_b: f64,
}

/// One fully resolved scenario.
#[derive(Clone, Debug)]
pub struct ScenarioConfig {
    pub params: SystemParams,
    /// kappa_a fell back to kappa_b (it is not an independent input of the
    /// underlying model and only the full-model validation reads it).
    pub kappa_a_defaulted: bool,
    pub target_j: usize,
    pub bracket: Option<(f64, f64)>,
    pub detuning: DetuningMode,
    pub outputs: Vec<OutputKind>,
    pub wigner: Option<WignerGridSpec>,
    pub validation: ValidationParams,
    pub series: SeriesControl,
    pub out_dir: Option<String>,
    pub sweep: Option<SweepDoc>,
    pub parallel: Option<usize>,
}

pub const DEFAULT_OUTPUTS: [OutputKind; 3] = [
    OutputKind::Populations,
    OutputKind::Metrics,
    OutputKind::Selectivity,
];

/// Parses and validates a JSON configuration document.
pub fn parse_config(text: &str) -> Result<ScenarioConfig, CliError> {
    let doc: ConfigDoc =
        serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;

    let mut params = SystemParams::default();
    let mut kappa_a_defaulted = true;
    if let Some(p) = &doc.params {
        if let Some(v) = p.omega_m {
            params.omega_m = v;
        }
        if let Some(v) = p.j {
            params.j = v;
        }
        if let Some(v) = p.eps {
            params.eps = v;
        }
        if let Some(v) = p.delta_a {
            params.delta_a = v;
        }
        if let Some(v) = p.delta_b {
            params.delta_b = v;
        }
        if let Some(v) = p.kappa_b {
            params.kappa_b = v;
        }
        if let Some(v) = p.gamma_p {
            params.gamma_p = v;
        }
        if let Some(v) = p.nbar_p {
            params.nbar_p = v;
        }
        if let Some(v) = p.alpha_convention {
            params.alpha_convention = v;
        }
        if let Some(v) = p.phi_g_order {
            params.phi_g_order = v;
        }
        match p.kappa_a {
            Some(v) => {
                params.kappa_a = v;
                kappa_a_defaulted = false;
            }
            None => params.kappa_a = params.kappa_b,
        }
    } else {
        params.kappa_a = params.kappa_b;
    }
    params.validate().map_err(|e| CliError::Config(e.to_string()))?;

    let outputs = doc.outputs.unwrap_or_else(|| DEFAULT_OUTPUTS.to_vec());
    if outputs.is_empty() {
        return Err(CliError::Config("outputs must be nonempty".into()));
    }

    let wigner = match doc.wigner {
        Some(w) => {
            if !(w.xmin < w.xmax) || !(w.ymin < w.ymax) || w.nx < 2 || w.ny < 2 {
                return Err(CliError::Config(
                    "wigner grid must satisfy xmin < xmax, ymin < ymax, nx >= 2, ny >= 2".into(),
                ));
            }
            Some(WignerGridSpec {
                x_min: w.xmin,
                x_max: w.xmax,
                y_min: w.ymin,
                y_max: w.ymax,
                nx: w.nx,
                ny: w.ny,
            })
        }
        None => None,
    };

    let vdoc = doc.validation;
    let validation = ValidationParams {
        n_c: vdoc.and_then(|v| v.n_c).unwrap_or(8),
        nbar_p: vdoc.and_then(|v| v.nbar_p).unwrap_or(0.5),
        gamma_p: vdoc.and_then(|v| v.gamma_p).unwrap_or(1e-3),
        kappa_a: vdoc.and_then(|v| v.kappa_a).unwrap_or(0.15),
        kappa_b: vdoc.and_then(|v| v.kappa_b).unwrap_or(0.15),
    };
    if !(validation.n_c >= 2 && validation.nbar_p >= 0.0 && validation.gamma_p > 0.0) {
        return Err(CliError::Config(
            "validation requires n_c >= 2, nbar_p >= 0, gamma_p > 0".into(),
        ));
    }

    let mut series = SeriesControl::default();
    if let Some(s) = &doc.series {
        if let Some(v) = s.max_terms {
            if v == 0 {
                return Err(CliError::Config("series.max_terms must be >= 1".into()));
            }
            series.max_terms = v;
        }
        if let Some(v) = s.tail_tol {
            if !(v > 0.0) {
                return Err(CliError::Config("series.tail_tol must be > 0".into()));
            }
            series.tail_tol = v;
        }
    }

    let bracket = match doc.bracket {
        Some([lo, hi]) => {
            if !(lo < hi) {
                return Err(CliError::Config(format!(
                    "bracket must satisfy lo < hi (got [{lo}, {hi}])"
                )));
            }
            Some((lo, hi))
        }
        None => None,
    };

    if let Some(sw) = &doc.sweep {
        match (&sw.grid, &sw.points) {
            (Some(g), None) => {
                if g.eta.is_empty() || g.target_j.is_empty() {
                    return Err(CliError::Config("sweep grid must be nonempty".into()));
                }
                if let Some(da) = &g.delta_a {
                    if da.len() != g.eta.len() * g.target_j.len() {
                        return Err(CliError::Config(format!(
                            "sweep.grid.delta_a must have {} entries (eta x target_j)",
                            g.eta.len() * g.target_j.len()
                        )));
                    }
                }
            }
            (None, Some(pts)) => {
                if pts.is_empty() {
                    return Err(CliError::Config("sweep points must be nonempty".into()));
                }
            }
            _ => {
                return Err(CliError::Config(
                    "sweep needs exactly one of `grid` or `points`".into(),
                ))
            }
        }
    }

    Ok(ScenarioConfig {
        params,
        kappa_a_defaulted,
        target_j: doc.target_j.unwrap_or(1),
        bracket,
        detuning: doc.detuning.unwrap_or(DetuningMode::Solve),
        outputs,
        wigner,
        validation,
        series,
        out_dir: doc.out_dir,
        sweep: doc.sweep,
        parallel: doc.parallel,
    })
}
