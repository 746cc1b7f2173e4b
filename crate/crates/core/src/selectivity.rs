//! Solving the selective-resonance condition and auditing the validity of
//! the scheme.
//!
//! A level j is selected when its transition detuning `phi_j` vanishes while
//! every other `phi_n` stays large against the coupling `alpha_n`. The phase
//! factor has poles at `delta_a = 0, +-omega_m` and no available derivative,
//! so the root finder is bracketed bisection polished by guarded secant
//! steps.

use serde::Serialize;
use thiserror::Error;

use crate::model::{
    alpha_n_pair, phi_n, AlphaConvention, ModelError, SeriesControl, SystemParams,
};
use crate::observables::{self, ObsError};

#[derive(Debug, Error)]
pub enum SelectivityError {
    #[error("bracket ({lo}, {hi}) contains a pole of phi at {pole}")]
    PoleInBracket { lo: f64, hi: f64, pole: f64 },
    #[error("phi_j does not change sign over ({lo}, {hi}): phi(lo) = {phi_lo:.6e}, phi(hi) = {phi_hi:.6e}")]
    NoSignChange {
        lo: f64,
        hi: f64,
        phi_lo: f64,
        phi_hi: f64,
    },
    #[error("root refinement stalled: residual {residual:.3e} after {iterations} iterations")]
    ToleranceNotReached { residual: f64, iterations: usize },
    #[error("empty bracket: lo = {lo} >= hi = {hi}")]
    EmptyBracket { lo: f64, hi: f64 },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Obs(#[from] ObsError),
}

/// Flag for one validity ratio: OK below 0.2, WARN below 0.5, FAIL beyond
/// (thresholds configurable through [`SolveOptions`]).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum ConditionFlag {
    Ok,
    Warn,
    Fail,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct RatioFlag {
    pub ratio: f64,
    pub flag: ConditionFlag,
}

/// The large-detuning and weak-coupling ratios the scheme relies on; each
/// should be small for the effective description to hold.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct ConditionRatios {
    /// J / |delta_a - delta_b|
    pub j_over_delta_ab: RatioFlag,
    /// eps / |delta_a|
    pub eps_over_delta_a: RatioFlag,
    /// eta eps / |delta_a - omega_m|
    pub eta_eps_over_delta_minus: RatioFlag,
    /// eta eps / |delta_a + omega_m|
    pub eta_eps_over_delta_plus: RatioFlag,
    /// |alpha_j| / kappa_b
    pub alpha_j_over_kappa_b: RatioFlag,
}

/// Per-level row of the selectivity table.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct LevelEntry {
    pub n: usize,
    pub alpha_n: f64,
    pub phi_n: f64,
    /// |phi_n| / |alpha_n|; large everywhere except the selected level.
    pub phi_over_alpha: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SelectivityReport {
    pub target_j: usize,
    /// Solved root, or the fixed detuning for audit-only reports.
    pub delta_a_root: f64,
    /// |phi_j| at `delta_a_root`.
    pub residual: f64,
    /// Whether `delta_a_root` was solved for (vs. taken from the input).
    pub solved: bool,
    pub bracket: Option<(f64, f64)>,
    /// phi_j(root - d) * phi_j(root + d) < 0 for d = 1e-6.
    pub sign_change_verified: bool,
    pub levels: Vec<LevelEntry>,
    pub conditions: ConditionRatios,
    /// zeta_{j+1} varpi_j / zeta_j, the truncation quality of the stationary
    /// populations (small = sharp cutoff above level j).
    pub zeta_truncation_ratio: f64,
    pub alpha_convention: AlphaConvention,
    pub alpha_j_derived: f64,
    pub alpha_j_literal: f64,
}

#[derive(Clone, Copy, Debug)]
pub struct SolveOptions {
    pub residual_tol: f64,
    pub max_iter: usize,
    /// (OK, WARN) thresholds for the condition flags.
    pub thresholds: (f64, f64),
    /// Levels beyond j reported in the table.
    pub extra_levels: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            residual_tol: 1e-9,
            max_iter: 200,
            thresholds: (0.2, 0.5),
            extra_levels: 5,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct RootResult {
    pub root: f64,
    pub residual: f64,
    pub iterations: usize,
}

/// Known-good starting brackets for the benchmark regimes, keyed on
/// (eta, j): the working neighborhoods are seeded +-0.5 around the nominal
/// detunings -9.7, -9.6 (eta = 0.1) and -7.5, -6.6 (eta = 0.3), clipped away
/// from the poles.
pub const SEED_DETUNINGS: [(f64, usize, f64); 4] = [
    (0.1, 1, -9.7),
    (0.1, 2, -9.6),
    (0.3, 1, -7.5),
    (0.3, 2, -6.6),
];

const POLE_MARGIN: f64 = 0.02;

fn poles(p: &SystemParams) -> [f64; 3] {
    [0.0, p.omega_m, -p.omega_m]
}

fn clip_bracket(p: &SystemParams, lo: f64, hi: f64) -> (f64, f64) {
    let mut lo = lo;
    let mut hi = hi;
    for pole in poles(p) {
        if lo < pole + POLE_MARGIN && hi > pole - POLE_MARGIN {
            // pole overlaps bracket: shrink the nearer endpoint
            if (pole - lo).abs() < (hi - pole).abs() {
                lo = lo.max(pole + POLE_MARGIN);
            } else {
                hi = hi.min(pole - POLE_MARGIN);
            }
        }
    }
    (lo, hi)
}

/// Seeded default bracket for (params, j), when the regime is a known one.
pub fn default_bracket(p: &SystemParams, j: usize) -> Option<(f64, f64)> {
    let eta = p.eta();
    SEED_DETUNINGS
        .iter()
        .find(|(e, jj, _)| (eta - e).abs() < 1e-6 && *jj == j)
        .map(|(_, _, center)| clip_bracket(p, center - 0.5, center + 0.5))
}

/// Scans `[lo, hi]` (skipping pole neighborhoods) for sign-change intervals
/// of phi_j, sorted by midpoint distance to `near`.
pub fn scan_brackets(
    p: &SystemParams,
    j: usize,
    lo: f64,
    hi: f64,
    points: usize,
    near: f64,
    ctrl: &SeriesControl,
) -> Vec<(f64, f64)> {
    let n = points.max(8);
    let h = (hi - lo) / n as f64;
    let mut out: Vec<(f64, f64)> = Vec::new();
    let mut prev: Option<(f64, f64)> = None;
    for i in 0..=n {
        let x = lo + h * i as f64;
        if poles(p).iter().any(|pole| (x - pole).abs() < POLE_MARGIN) {
            prev = None;
            continue;
        }
        let mut probe = p.clone();
        probe.delta_a = x;
        match phi_n(&probe, j, ctrl) {
            Ok(f) => {
                if let Some((xp, fp)) = prev {
                    if fp.signum() != f.signum()
                        && fp != 0.0
                        && !poles(p).iter().any(|pole| *pole > xp && *pole < x)
                    {
                        out.push((xp, x));
                    }
                }
                prev = Some((x, f));
            }
            Err(_) => prev = None,
        }
    }
    out.sort_by(|a, b| {
        let da = ((a.0 + a.1) / 2.0 - near).abs();
        let db = ((b.0 + b.1) / 2.0 - near).abs();
        da.partial_cmp(&db).unwrap()
    });
    out
}

/// Bracketed root finding: bisection until the interval is small, then
/// secant steps that fall back to bisection whenever they would leave the
/// bracket. Converges on the residual, not the interval.
pub fn find_root_bracketed(
    mut f: impl FnMut(f64) -> Result<f64, SelectivityError>,
    lo: f64,
    hi: f64,
    opts: &SolveOptions,
) -> Result<RootResult, SelectivityError> {
    if !(lo < hi) {
        return Err(SelectivityError::EmptyBracket { lo, hi });
    }
    let mut a = lo;
    let mut b = hi;
    let mut fa = f(a)?;
    let fb = f(b)?;
    if fa == 0.0 {
        return Ok(RootResult {
            root: a,
            residual: 0.0,
            iterations: 0,
        });
    }
    if fb == 0.0 {
        return Ok(RootResult {
            root: b,
            residual: 0.0,
            iterations: 0,
        });
    }
    if fa.signum() == fb.signum() {
        return Err(SelectivityError::NoSignChange {
            lo,
            hi,
            phi_lo: fa,
            phi_hi: fb,
        });
    }

    let mut x_prev = a;
    let mut f_prev = fa;
    let mut x = b;
    let mut f_cur = fb;
    for it in 0..opts.max_iter {
        // candidate secant step, demoted to bisection when it leaves the
        // bracket or the secant is degenerate
        let mut x_new = if f_cur != f_prev {
            x - f_cur * (x - x_prev) / (f_cur - f_prev)
        } else {
            f64::NAN
        };
        if !x_new.is_finite() || x_new <= a || x_new >= b {
            x_new = 0.5 * (a + b);
        }
        let f_new = f(x_new)?;
        if f_new.abs() < opts.residual_tol {
            return Ok(RootResult {
                root: x_new,
                residual: f_new.abs(),
                iterations: it + 1,
            });
        }
        if fa.signum() != f_new.signum() {
            b = x_new;
        } else {
            a = x_new;
            fa = f_new;
        }
        x_prev = x;
        f_prev = f_cur;
        x = x_new;
        f_cur = f_new;
    }
    Err(SelectivityError::ToleranceNotReached {
        residual: f_cur.abs(),
        iterations: opts.max_iter,
    })
}

fn flag(ratio: f64, thresholds: (f64, f64)) -> RatioFlag {
    let f = if ratio < thresholds.0 {
        ConditionFlag::Ok
    } else if ratio < thresholds.1 {
        ConditionFlag::Warn
    } else {
        ConditionFlag::Fail
    };
    RatioFlag { ratio, flag: f }
}

fn condition_ratios(
    p: &SystemParams,
    alpha_j: f64,
    thresholds: (f64, f64),
) -> ConditionRatios {
    let eta = p.eta();
    ConditionRatios {
        j_over_delta_ab: flag(p.j / (p.delta_a - p.delta_b).abs(), thresholds),
        eps_over_delta_a: flag(p.eps / p.delta_a.abs(), thresholds),
        eta_eps_over_delta_minus: flag(eta * p.eps / (p.delta_a - p.omega_m).abs(), thresholds),
        eta_eps_over_delta_plus: flag(eta * p.eps / (p.delta_a + p.omega_m).abs(), thresholds),
        alpha_j_over_kappa_b: flag(alpha_j.abs() / p.kappa_b, thresholds),
    }
}

fn build_report(
    p_at_root: &SystemParams,
    j: usize,
    solved: bool,
    bracket: Option<(f64, f64)>,
    residual: f64,
    sign_change_verified: bool,
    ctrl: &SeriesControl,
    opts: &SolveOptions,
) -> Result<SelectivityReport, SelectivityError> {
    let n_max = j + opts.extra_levels;
    let mut levels = Vec::with_capacity(n_max + 1);
    for n in 0..=n_max {
        let pair = alpha_n_pair(p_at_root, n, ctrl)?;
        let alpha = pair.get(p_at_root.alpha_convention);
        let phi = phi_n(p_at_root, n, ctrl)?;
        levels.push(LevelEntry {
            n,
            alpha_n: alpha,
            phi_n: phi,
            phi_over_alpha: phi.abs() / alpha.abs().max(f64::MIN_POSITIVE),
        });
    }
    let pair_j = alpha_n_pair(p_at_root, j, ctrl)?;
    let alpha_j = pair_j.get(p_at_root.alpha_convention);
    let big_gamma = 2.0 * alpha_j * alpha_j / p_at_root.kappa_b;
    let factors =
        observables::occupation_factors(p_at_root.gamma_p, p_at_root.nbar_p, j, big_gamma)?;
    Ok(SelectivityReport {
        target_j: j,
        delta_a_root: p_at_root.delta_a,
        residual,
        solved,
        bracket,
        sign_change_verified,
        levels,
        conditions: condition_ratios(p_at_root, alpha_j, opts.thresholds),
        zeta_truncation_ratio: factors.zeta1 * factors.varpi_j,
        alpha_convention: p_at_root.alpha_convention,
        alpha_j_derived: pair_j.derived,
        alpha_j_literal: pair_j.literal,
    })
}

/// Solves `phi_j(delta_a) = 0` over the given bracket and assembles the full
/// report at the root.
pub fn solve_detuning(
    p: &SystemParams,
    j: usize,
    bracket: (f64, f64),
    ctrl: &SeriesControl,
    opts: &SolveOptions,
) -> Result<SelectivityReport, SelectivityError> {
    let (lo, hi) = bracket;
    if !(lo < hi) {
        return Err(SelectivityError::EmptyBracket { lo, hi });
    }
    for pole in poles(p) {
        if lo < pole && hi > pole {
            return Err(SelectivityError::PoleInBracket { lo, hi, pole });
        }
    }
    let phi_at = |delta: f64| -> Result<f64, SelectivityError> {
        let mut probe = p.clone();
        probe.delta_a = delta;
        Ok(phi_n(&probe, j, ctrl)?)
    };
    let result = find_root_bracketed(phi_at, lo, hi, opts)?;
    if result.residual >= opts.residual_tol {
        return Err(SelectivityError::ToleranceNotReached {
            residual: result.residual,
            iterations: result.iterations,
        });
    }
    let delta = 1e-6;
    let sign_change_verified = match (phi_at(result.root - delta), phi_at(result.root + delta)) {
        (Ok(l), Ok(r)) => l.signum() != r.signum(),
        _ => false,
    };
    let mut p_root = p.clone();
    p_root.delta_a = result.root;
    build_report(
        &p_root,
        j,
        true,
        Some(bracket),
        result.residual,
        sign_change_verified,
        ctrl,
        opts,
    )
}

/// Condition audit at the detuning already in `p` (no solving).
pub fn audit_conditions(
    p: &SystemParams,
    j: usize,
    ctrl: &SeriesControl,
    opts: &SolveOptions,
) -> Result<SelectivityReport, SelectivityError> {
    let residual = {
        let phi = phi_n(p, j, ctrl)?;
        phi.abs()
    };
    build_report(p, j, false, None, residual, false, ctrl, opts)
}
