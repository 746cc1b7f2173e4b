//! Measurements on the stationary phonon state.
//!
//! Distributions carry an analytic geometric tail wherever one exists, and
//! every moment-like quantity (mean, second factorial moment, entropy,
//! purity overlaps) folds the closed-form tail sums in rather than truncating
//! silently. With a hot bath the occupation ratio is close to one and a
//! naively truncated second factorial moment visibly corrupts g2(0), so this
//! is load-bearing, not cosmetic.

use serde::Serialize;
use thiserror::Error;

use crate::model::{self, ModelError, SeriesControl, SystemParams};

#[derive(Debug, Error)]
pub enum ObsError {
    #[error("populations are not normalized: total = {total:.15}")]
    NotNormalized { total: f64 },
    #[error("negative population at level {level}: {value:.3e}")]
    NegativePopulation { level: usize, value: f64 },
    #[error("degenerate rates: gamma_p (j+1) + eps_j = 0")]
    DegenerateRates,
    #[error("second-order correlation undefined: mean phonon number is zero")]
    UndefinedCorrelation,
    #[error("window must retain at least j + 2 levels (j = {j}, window = {window})")]
    WindowTooSmall { j: usize, window: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Analytic continuation of a distribution beyond its stored window:
/// `p_n = coeff * ratio^n` for `n >= start`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GeometricTail {
    pub coeff: f64,
    pub ratio: f64,
    pub start: usize,
}

impl GeometricTail {
    pub fn new(coeff: f64, ratio: f64, start: usize) -> Self {
        debug_assert!((0.0..1.0).contains(&ratio));
        Self {
            coeff,
            ratio,
            start,
        }
    }

    /// Total omitted mass `sum_{n >= start} coeff ratio^n`.
    pub fn mass(&self) -> f64 {
        self.coeff * self.ratio.powi(self.start as i32) / (1.0 - self.ratio)
    }

    /// `sum_{n >= start} n p_n`.
    pub fn mean_sum(&self) -> f64 {
        let (x, nn) = (self.ratio, self.start as f64);
        self.coeff * x.powi(self.start as i32) * (nn * (1.0 - x) + x) / ((1.0 - x) * (1.0 - x))
    }

    /// `sum_{n >= start} n (n-1) p_n`.
    pub fn second_factorial_sum(&self) -> f64 {
        let (x, nn) = (self.ratio, self.start as f64);
        let xn = x.powi(self.start as i32);
        let omx = 1.0 - x;
        self.coeff
            * (nn * (nn - 1.0) * xn / omx
                + 2.0 * nn * xn * x / (omx * omx)
                + 2.0 * xn * x * x / (omx * omx * omx))
    }

    /// `sum_{n >= start} p_n ln p_n` (exact, using ln p_n = ln coeff + n ln ratio).
    pub fn entropy_sum(&self) -> f64 {
        if self.coeff <= 0.0 {
            return 0.0;
        }
        self.coeff.ln() * self.mass() + self.ratio.ln() * self.mean_sum()
    }

    /// `sum_{n >= start} p_n^2`.
    pub fn square_sum(&self) -> f64 {
        let x2 = self.ratio * self.ratio;
        self.coeff * self.coeff * x2.powi(self.start as i32) / (1.0 - x2)
    }

    /// `sum_{n >= start} p_n q_n` against another geometric law
    /// `q_n = c2 r2^n` (valid over the whole axis).
    pub fn cross_sum(&self, c2: f64, r2: f64) -> f64 {
        let xr = self.ratio * r2;
        self.coeff * c2 * xr.powi(self.start as i32) / (1.0 - xr)
    }
}

/// Normalized diagonal phonon populations over a truncated window, plus an
/// optional analytic tail. Stored window mass + tail mass = 1.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PhononDistribution {
    p: Vec<f64>,
    tail: Option<GeometricTail>,
}

impl PhononDistribution {
    pub fn new(p: Vec<f64>) -> Result<Self, ObsError> {
        Self::build(p, None)
    }

    pub fn with_tail(p: Vec<f64>, tail: GeometricTail) -> Result<Self, ObsError> {
        Self::build(p, Some(tail))
    }

    fn build(p: Vec<f64>, tail: Option<GeometricTail>) -> Result<Self, ObsError> {
        for (level, &value) in p.iter().enumerate() {
            if value < -1e-14 {
                return Err(ObsError::NegativePopulation { level, value });
            }
        }
        let total: f64 = p.iter().sum::<f64>() + tail.map_or(0.0, |t| t.mass());
        if (total - 1.0).abs() > 1e-10 {
            return Err(ObsError::NotNormalized { total });
        }
        Ok(Self { p, tail })
    }

    pub fn p(&self) -> &[f64] {
        &self.p
    }

    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }

    pub fn tail(&self) -> Option<&GeometricTail> {
        self.tail.as_ref()
    }

    /// Upper bound on the mass omitted from the stored window.
    pub fn truncation_tail(&self) -> f64 {
        self.tail.map_or(0.0, |t| t.mass())
    }

    /// Populations extended from the tail model until the remaining mass
    /// drops below `tol`.
    pub fn materialize(&self, tol: f64) -> Vec<f64> {
        let mut out = self.p.clone();
        if let Some(t) = self.tail {
            let mut n = t.start;
            let mut remaining = t.mass();
            while remaining > tol && n < 100_000 {
                let pn = t.coeff * t.ratio.powi(n as i32);
                out.push(pn);
                remaining -= pn;
                n += 1;
            }
        }
        out
    }
}

/// Closed-form occupation factors of the engineered stationary state.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct OccupationFactors {
    /// zeta_1 = nbar_p / (nbar_p + 1)
    pub zeta1: f64,
    /// eps_j = 2 alpha_j^2 / (kappa_b (nbar_p + 1))
    pub eps_j: f64,
    /// varpi_j = gamma_p (j+1) / (gamma_p (j+1) + eps_j)
    pub varpi_j: f64,
    /// ground population rho_00 = 1 / ((nbar_p+1)(1 - zeta_{j+1} + varpi_j zeta_{j+1}))
    pub rho00: f64,
}

pub fn occupation_factors(
    gamma_p: f64,
    nbar_p: f64,
    j: usize,
    big_gamma_j: f64,
) -> Result<OccupationFactors, ObsError> {
    let zeta1 = nbar_p / (nbar_p + 1.0);
    let eps_j = big_gamma_j / (nbar_p + 1.0);
    let denom = gamma_p * (j as f64 + 1.0) + eps_j;
    if denom == 0.0 {
        return Err(ObsError::DegenerateRates);
    }
    let varpi_j = gamma_p * (j as f64 + 1.0) / denom;
    let zeta_j1 = zeta1.powi(j as i32 + 1);
    let rho00 = 1.0 / ((nbar_p + 1.0) * (1.0 - zeta_j1 + varpi_j * zeta_j1));
    Ok(OccupationFactors {
        zeta1,
        eps_j,
        varpi_j,
        rho00,
    })
}

/// Closed-form stationary populations of the engineered master equation:
/// `p_n = zeta_1^n rho00` for `n <= j` and `zeta_1^n varpi_j rho00` beyond,
/// stored over `n_c` levels with the exact geometric remainder as the tail,
/// so normalization holds to machine precision at any window size.
pub fn analytic_populations_from_rates(
    gamma_p: f64,
    nbar_p: f64,
    j: usize,
    big_gamma_j: f64,
    n_c: usize,
) -> Result<PhononDistribution, ObsError> {
    if n_c < j + 2 {
        return Err(ObsError::WindowTooSmall { j, window: n_c });
    }
    let f = occupation_factors(gamma_p, nbar_p, j, big_gamma_j)?;
    let mut p = Vec::with_capacity(n_c);
    let mut zn = 1.0;
    for n in 0..n_c {
        let weight = if n <= j { 1.0 } else { f.varpi_j };
        p.push(zn * weight * f.rho00);
        zn *= f.zeta1;
    }
    if f.zeta1 > 0.0 {
        let tail = GeometricTail::new(f.varpi_j * f.rho00, f.zeta1, n_c);
        Ok(PhononDistribution::with_tail(p, tail)?)
    } else {
        Ok(PhononDistribution::new(p)?)
    }
}

/// As [`analytic_populations_from_rates`], with the selective rate derived
/// from the model: `Gamma_j = 2 alpha_j^2 / kappa_b` under the active
/// coupling convention.
pub fn analytic_populations(
    p: &SystemParams,
    j: usize,
    n_c: usize,
    ctrl: &SeriesControl,
) -> Result<PhononDistribution, ObsError> {
    let alpha = model::alpha_n(p, j, ctrl)?;
    let big_gamma = 2.0 * alpha * alpha / p.kappa_b;
    analytic_populations_from_rates(p.gamma_p, p.nbar_p, j, big_gamma, n_c)
}

/// Thermal state with mean occupancy `nbar`: `p_n = nbar^n / (nbar+1)^{n+1}`.
pub fn thermal_reference(nbar: f64, n_c: usize) -> PhononDistribution {
    let w = nbar / (nbar + 1.0);
    let c0 = 1.0 / (nbar + 1.0);
    let mut p = Vec::with_capacity(n_c);
    let mut pn = c0;
    for _ in 0..n_c {
        p.push(pn);
        pn *= w;
    }
    if w > 0.0 {
        let tail = GeometricTail::new(c0, w, n_c);
        PhononDistribution::with_tail(p, tail).expect("thermal law is normalized")
    } else {
        let mut p = p;
        p[0] = 1.0;
        for v in p.iter_mut().skip(1) {
            *v = 0.0;
        }
        PhononDistribution::new(p).expect("vacuum is normalized")
    }
}

/// Mean phonon number, tail included.
pub fn mean_phonon(dist: &PhononDistribution) -> f64 {
    let stored: f64 = dist
        .p()
        .iter()
        .enumerate()
        .map(|(n, p)| n as f64 * p)
        .sum();
    stored + dist.tail().map_or(0.0, |t| t.mean_sum())
}

/// Second-order correlation at zero delay:
/// `g2(0) = sum n(n-1) p_n / (sum n p_n)^2`.
pub fn g2_zero(dist: &PhononDistribution) -> Result<f64, ObsError> {
    let mean = mean_phonon(dist);
    if mean <= 0.0 {
        return Err(ObsError::UndefinedCorrelation);
    }
    let stored: f64 = dist
        .p()
        .iter()
        .enumerate()
        .map(|(n, p)| (n * n.saturating_sub(1)) as f64 * p)
        .sum();
    let num = stored + dist.tail().map_or(0.0, |t| t.second_factorial_sum());
    Ok(num / (mean * mean))
}

/// Relative-entropy non-Gaussianity for Fock-diagonal states:
/// `delta = sum p_n ln p_n + (nbar+1) ln(nbar+1) - nbar ln nbar`,
/// with `0 ln 0 = 0`. Zero exactly on thermal inputs; tiny negative
/// round-off is clipped to zero.
pub fn non_gaussianity_fock(dist: &PhononDistribution) -> f64 {
    let nbar = mean_phonon(dist);
    let stored: f64 = dist
        .p()
        .iter()
        .map(|&p| if p > 0.0 { p * p.ln() } else { 0.0 })
        .sum();
    let neg_entropy = stored + dist.tail().map_or(0.0, |t| t.entropy_sum());
    let reference = if nbar > 0.0 {
        (nbar + 1.0) * (nbar + 1.0).ln() - nbar * nbar.ln()
    } else {
        0.0
    };
    let delta = neg_entropy + reference;
    if delta < 0.0 && delta > -1e-12 {
        0.0
    } else {
        delta
    }
}

/// Hilbert-Schmidt non-Gaussianity against the thermal reference with the
/// same mean occupancy:
/// `delta = (1 + (Tr rho_G^2 - 2 Tr rho_G rho) / Tr rho^2) / 2`.
pub fn non_gaussianity_hs(dist: &PhononDistribution) -> f64 {
    let nbar = mean_phonon(dist);
    let w = nbar / (nbar + 1.0);
    let c0 = 1.0 / (nbar + 1.0);

    // Tr rho^2
    let mut tr_rho2: f64 = dist.p().iter().map(|p| p * p).sum();
    if let Some(t) = dist.tail() {
        tr_rho2 += t.square_sum();
    }
    // Tr rho_G rho
    let mut cross: f64 = dist
        .p()
        .iter()
        .enumerate()
        .map(|(n, p)| p * c0 * w.powi(n as i32))
        .sum();
    if let Some(t) = dist.tail() {
        if w > 0.0 {
            cross += t.cross_sum(c0, w);
        }
    }
    // Tr rho_G^2 = (1 - w) / (1 + w)
    let tr_g2 = if nbar > 0.0 {
        (1.0 - w) / (1.0 + w)
    } else {
        1.0
    };

    0.5 * (1.0 + (tr_g2 - 2.0 * cross) / tr_rho2)
}

/// Laguerre polynomial `L_n(x)` by the three-term recurrence
/// `(k+1) L_{k+1} = (2k+1-x) L_k - k L_{k-1}`.
pub fn laguerre(n: usize, x: f64) -> f64 {
    match n {
        0 => 1.0,
        1 => 1.0 - x,
        _ => {
            let mut l0 = 1.0;
            let mut l1 = 1.0 - x;
            for k in 1..n {
                let l2 = ((2.0 * k as f64 + 1.0 - x) * l1 - k as f64 * l0) / (k as f64 + 1.0);
                l0 = l1;
                l1 = l2;
            }
            l1
        }
    }
}

/// Rectangular phase-space grid specification.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct WignerGridSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub nx: usize,
    pub ny: usize,
}

impl WignerGridSpec {
    /// Default production grid: spans `|xi| <= max(5, 3 sqrt(nbar+1))`,
    /// widened so that every level holding more than dust is inside the
    /// grid (level n lives out to `|xi| ~ sqrt(n + 1/2)`). The mean alone
    /// underestimates the span for cold states with a thin hot tail, and
    /// the quadrature-mass contract is 1e-4. Point counts keep the step
    /// near 0.05 so the Simpson error stays inside the same budget;
    /// 201x201 minimum.
    pub fn auto(dist: &PhononDistribution) -> Self {
        let budget = 2e-5;
        let mut n_eff = 0usize;
        if let Some(t) = dist.tail() {
            if t.ratio > 0.0 && t.mass() > budget {
                // smallest N with coeff ratio^N / (1 - ratio) <= budget
                let target = budget * (1.0 - t.ratio) / t.coeff;
                n_eff = (target.ln() / t.ratio.ln()).ceil().max(0.0) as usize;
            }
        }
        let mut from_above = dist.truncation_tail();
        for n in (0..dist.len()).rev() {
            from_above += dist.p()[n];
            if from_above > budget {
                n_eff = n_eff.max(n);
                break;
            }
        }
        let r_support = (n_eff as f64 + 0.5).sqrt() + 2.0;
        let r = 5.0_f64
            .max(3.0 * (mean_phonon(dist) + 1.0).sqrt())
            .max(r_support);
        let mut n = (2.0 * r / 0.05).round() as usize + 1;
        if n % 2 == 0 {
            n += 1;
        }
        let n = n.max(201);
        Self {
            x_min: -r,
            x_max: r,
            y_min: -r,
            y_max: r,
            nx: n,
            ny: n,
        }
    }
}

/// Wigner function samples on a rectangular grid, with the quadrature mass
/// over the grid and a coverage verdict (`|mass - 1| <= 1e-4`).
#[derive(Clone, Debug)]
pub struct WignerGrid {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    values: Vec<f64>,
    pub quadrature_mass: f64,
    pub coverage_ok: bool,
}

impl WignerGrid {
    /// Value at grid point (ix, iy).
    pub fn w(&self, ix: usize, iy: usize) -> f64 {
        self.values[iy * self.x.len() + ix]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }
}

/// Wigner function of a Fock-diagonal state:
/// `W(xi) = (2/pi) sum_n (-1)^n e^{-2|xi|^2} p_n L_n(4 |xi|^2)`.
///
/// Rotational symmetry is automatic (the sum depends on `|xi|` only); the
/// quadrature mass uses composite Simpson weights along each axis.
pub fn wigner(dist: &PhononDistribution, spec: &WignerGridSpec) -> WignerGrid {
    let pops = dist.materialize(1e-14);
    let xs = linspace(spec.x_min, spec.x_max, spec.nx);
    let ys = linspace(spec.y_min, spec.y_max, spec.ny);
    let mut values = vec![0.0; spec.nx * spec.ny];
    for (iy, &y) in ys.iter().enumerate() {
        for (ix, &x) in xs.iter().enumerate() {
            let u = 4.0 * (x * x + y * y);
            values[iy * spec.nx + ix] = wigner_point(&pops, u);
        }
    }
    let wx = simpson_weights(&xs);
    let wy = simpson_weights(&ys);
    let mut mass = 0.0;
    for (iy, wyv) in wy.iter().enumerate() {
        let mut row = 0.0;
        for (ix, wxv) in wx.iter().enumerate() {
            row += wxv * values[iy * spec.nx + ix];
        }
        mass += wyv * row;
    }
    WignerGrid {
        x: xs,
        y: ys,
        values,
        quadrature_mass: mass,
        coverage_ok: (mass - 1.0).abs() <= 1e-4,
    }
}

/// Single-point Wigner value at squared radius argument `u = 4 |xi|^2`,
/// running the Laguerre recurrence across the populations.
///
/// The classical bound |e^{-u/2} L_n(u)| <= 1 keeps the accumulated error
/// below machine epsilon at any radius; past u ~ 1400 the envelope
/// underflows while the raw recurrence overflows, so the value (below
/// 1e-300) is returned as zero before the recurrence can produce inf * 0.
fn wigner_point(pops: &[f64], u: f64) -> f64 {
    if u > 1400.0 {
        return 0.0;
    }
    let mut acc = 0.0;
    let mut l0 = 1.0;
    let mut l1 = 1.0 - u;
    for (n, &p) in pops.iter().enumerate() {
        let ln = match n {
            0 => l0,
            1 => l1,
            _ => {
                let k = n - 1;
                let l2 = ((2.0 * k as f64 + 1.0 - u) * l1 - k as f64 * l0) / (k as f64 + 1.0);
                l0 = l1;
                l1 = l2;
                l2
            }
        };
        let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
        acc += sign * p * ln;
    }
    2.0 / std::f64::consts::PI * (-u / 2.0).exp() * acc
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let h = (hi - lo) / (n - 1) as f64;
    (0..n).map(|i| lo + h * i as f64).collect()
}

/// Composite Simpson weights; odd point counts use pure Simpson, even counts
/// close the last interval with a trapezoid.
fn simpson_weights(xs: &[f64]) -> Vec<f64> {
    let n = xs.len();
    if n < 2 {
        return vec![0.0; n];
    }
    let h = xs[1] - xs[0];
    let mut w = vec![0.0; n];
    let simpson_end = if n % 2 == 1 { n - 1 } else { n - 2 };
    let mut i = 0;
    while i + 2 <= simpson_end {
        w[i] += h / 3.0;
        w[i + 1] += 4.0 * h / 3.0;
        w[i + 2] += h / 3.0;
        i += 2;
    }
    if n % 2 == 0 {
        w[n - 2] += h / 2.0;
        w[n - 1] += h / 2.0;
    }
    w
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn fock_dist(n: usize, size: usize) -> PhononDistribution {
        let mut p = vec![0.0; size];
        p[n] = 1.0;
        PhononDistribution::new(p).unwrap()
    }

    #[test]
    fn tail_sums_match_brute_force() {
        let t = GeometricTail::new(0.031, 10.0 / 11.0, 17);
        let brute = |f: &dyn Fn(usize, f64) -> f64| -> f64 {
            (t.start..6000)
                .map(|n| f(n, t.coeff * t.ratio.powi(n as i32)))
                .sum()
        };
        assert!((t.mass() - brute(&|_, p| p)).abs() < 1e-13);
        assert!((t.mean_sum() - brute(&|n, p| n as f64 * p)).abs() < 1e-10);
        assert!(
            (t.second_factorial_sum() - brute(&|n, p| (n * (n - 1)) as f64 * p)).abs() < 1e-8
        );
        assert!((t.entropy_sum() - brute(&|_, p| p * p.ln())).abs() < 1e-10);
        assert!((t.square_sum() - brute(&|_, p| p * p)).abs() < 1e-14);
        let (c2, r2) = (0.21, 0.55);
        assert!((t.cross_sum(c2, r2) - brute(&|n, p| p * c2 * r2.powi(n as i32))).abs() < 1e-14);
    }

    #[test]
    fn strong_pumping_limit_populations() {
        // varpi -> 0: only the lowest j+1 levels survive
        let d = analytic_populations_from_rates(1e-5, 10.0, 1, 1e12, 40).unwrap();
        assert!((d.p()[0] - 0.5238095238095238).abs() < 1e-12);
        assert!((d.p()[1] - 0.47619047619047616).abs() < 1e-12);
        assert!(d.p()[2] < 1e-12);
        assert!((mean_phonon(&d) - 0.47619047619047616).abs() < 1e-10);
    }

    #[test]
    fn pump_off_reduces_to_thermal() {
        let nbar = 3.0;
        let d = analytic_populations_from_rates(1e-4, nbar, 2, 0.0, 25).unwrap();
        let t = thermal_reference(nbar, 25);
        for (a, b) in d.p().iter().zip(t.p()) {
            assert!((a - b).abs() < 1e-15);
        }
        let f = occupation_factors(1e-4, nbar, 2, 0.0).unwrap();
        assert!((f.varpi_j - 1.0).abs() < 1e-15);
        assert!((f.rho00 - 1.0 / (nbar + 1.0)).abs() < 1e-15);
    }

    #[test]
    fn normalization_identity_any_window() {
        // rho00 must invert sum_{n<=j} zeta^n + varpi sum_{n>j} zeta^n,
        // via independent geometric summation.
        for (gamma, nbar, j, big_gamma) in [
            (1e-5, 10.0, 1usize, 0.3),
            (2e-4, 0.7, 3, 1e-3),
            (1e-3, 4.2, 0, 42.0),
        ] {
            let f = occupation_factors(gamma, nbar, j, big_gamma).unwrap();
            let mut oracle = 0.0;
            let mut zn = 1.0;
            for n in 0..5000 {
                let w = if n <= j { 1.0 } else { f.varpi_j };
                oracle += zn * w;
                zn *= f.zeta1;
                if zn < 1e-25 {
                    break;
                }
            }
            assert!(
                ((1.0 / f.rho00) - oracle).abs() < 1e-12 * oracle,
                "rho00 normalization mismatch"
            );
            for n_c in [j + 2, 12, 300] {
                let d =
                    analytic_populations_from_rates(gamma, nbar, j, big_gamma, n_c).unwrap();
                let total: f64 = d.p().iter().sum::<f64>() + d.truncation_tail();
                assert!((total - 1.0).abs() < 1e-14, "n_c={n_c}: total={total}");
            }
        }
    }

    #[test]
    fn tail_ratio_is_exactly_thermal_beyond_j() {
        let d = analytic_populations_from_rates(1e-5, 10.0, 2, 0.37, 60).unwrap();
        let zeta = 10.0 / 11.0;
        for n in 3..59 {
            let ratio = d.p()[n + 1] / d.p()[n];
            assert!(((ratio - zeta) / zeta).abs() < 1e-15, "n={n}: {ratio}");
        }
        let t = d.tail().unwrap();
        assert_eq!(t.ratio, zeta);
    }

    #[test]
    fn degenerate_rates_rejected() {
        assert!(matches!(
            analytic_populations_from_rates(0.0, 1.0, 1, 0.0, 10),
            Err(ObsError::DegenerateRates)
        ));
    }

    #[test]
    fn thermal_reference_values() {
        let v = thermal_reference(0.0, 5);
        assert_eq!(v.p()[0], 1.0);
        assert!(g2_zero(&v).is_err());

        let t = thermal_reference(10.0, 30);
        assert!((t.p()[0] - 1.0 / 11.0).abs() < 1e-15);
        assert!((mean_phonon(&t) - 10.0).abs() < 1e-12);
        assert!((g2_zero(&t).unwrap() - 2.0).abs() < 1e-10);
        assert!(non_gaussianity_fock(&t).abs() < 1e-10);
        assert!(non_gaussianity_hs(&t).abs() < 1e-12);
    }

    #[test]
    fn mean_and_g2_fock_states() {
        let d = fock_dist(2, 6);
        assert_eq!(mean_phonon(&d), 2.0);
        assert!((g2_zero(&d).unwrap() - 0.5).abs() < 1e-15);

        let vac = fock_dist(0, 4);
        assert_eq!(mean_phonon(&vac), 0.0);
        assert!(matches!(
            g2_zero(&vac),
            Err(ObsError::UndefinedCorrelation)
        ));
        assert_eq!(non_gaussianity_fock(&vac), 0.0);
    }

    #[test]
    fn g2_two_point_support_is_zero() {
        let p = PhononDistribution::new(vec![0.3, 0.7]).unwrap();
        assert_eq!(g2_zero(&p).unwrap(), 0.0);
    }

    #[test]
    fn non_gaussianity_nonnegative_and_zero_only_on_thermal() {
        for nbar in [0.3, 1.0, 10.0] {
            assert!(non_gaussianity_fock(&thermal_reference(nbar, 60)).abs() < 1e-10);
        }
        let d = analytic_populations_from_rates(1e-5, 10.0, 1, 0.2, 250).unwrap();
        assert!(non_gaussianity_fock(&d) > 1e-3);
        let f1 = fock_dist(1, 8);
        assert!(non_gaussianity_fock(&f1) > 0.5);
    }

    #[test]
    fn hs_distance_fock_one_oracle() {
        // |1><1| against thermal nbar = 1: delta = (1 + (1/3 - 1/2)) / 2 = 5/12
        let d = fock_dist(1, 12);
        let direct: f64 = {
            let w: f64 = 0.5;
            let tr_g2: f64 = (0..200).map(|n| (0.5 * w.powi(n)).powi(2)).sum();
            let cross = 0.5 * w; // p_G(1)
            0.5 * (1.0 + (tr_g2 - 2.0 * cross) / 1.0)
        };
        let hs = non_gaussianity_hs(&d);
        assert!((hs - direct).abs() < 1e-12);
        assert!((hs - 5.0 / 12.0).abs() < 1e-12);
    }

    #[test]
    fn hs_distance_decreases_when_mixing_toward_reference() {
        let nbar: f64 = 1.0;
        let size = 400usize;
        let fock: Vec<f64> = {
            let mut p = vec![0.0; size];
            p[1] = 1.0;
            p
        };
        let w = nbar / (nbar + 1.0);
        let therm: Vec<f64> = (0..size).map(|n| w.powi(n as i32) / (nbar + 1.0)).collect();
        let mut last = f64::INFINITY;
        for lambda in [0.0, 0.5, 1.0] {
            let mix: Vec<f64> = fock
                .iter()
                .zip(&therm)
                .map(|(a, b)| (1.0 - lambda) * a + lambda * b)
                .collect();
            let norm: f64 = mix.iter().sum();
            let d = PhononDistribution::new(mix.iter().map(|v| v / norm).collect()).unwrap();
            let hs = non_gaussianity_hs(&d);
            assert!(hs < last + 1e-12, "lambda={lambda}: {hs} !< {last}");
            last = hs;
        }
        assert!(last.abs() < 1e-3); // lambda = 1 is (nearly) the reference
    }

    #[test]
    fn laguerre_base_cases_and_recurrence() {
        assert_eq!(laguerre(0, 1.7), 1.0);
        assert_eq!(laguerre(1, 1.7), 1.0 - 1.7);
        assert!((laguerre(2, 2.0) - (-1.0)).abs() < 1e-15);
        // 50-digit-grade series value for L_10(4) = 19551/14175
        assert!((laguerre(10, 4.0) - 1.3792592592592593).abs() < 1e-12);
        // stability spot check: values stay finite and bounded for large n, x
        let v = laguerre(500, 100.0);
        assert!(v.is_finite());
    }

    #[test]
    fn wigner_origin_values() {
        let vac = fock_dist(0, 4);
        let spec = WignerGridSpec {
            x_min: -4.0,
            x_max: 4.0,
            y_min: -4.0,
            y_max: 4.0,
            nx: 81,
            ny: 81,
        };
        let g = wigner(&vac, &spec);
        let center = g.w(40, 40);
        assert!((center - 2.0 / PI).abs() < 1e-12);

        let one = fock_dist(1, 4);
        let g1 = wigner(&one, &spec);
        assert!((g1.w(40, 40) + 2.0 / PI).abs() < 1e-12);
    }

    #[test]
    fn wigner_mass_and_symmetry() {
        let d = analytic_populations_from_rates(1e-5, 10.0, 1, 0.25, 260).unwrap();
        let g = wigner(&d, &WignerGridSpec::auto(&d));
        assert!(
            (g.quadrature_mass - 1.0).abs() < 1e-4,
            "mass {}",
            g.quadrature_mass
        );
        assert!(g.coverage_ok);
        // radial symmetry: same |xi| from different (x, y) splits
        let pops = d.materialize(1e-14);
        let w_a = super::wigner_point(&pops, 4.0 * (0.6f64.powi(2) + 0.8f64.powi(2)));
        let w_b = super::wigner_point(&pops, 4.0 * 1.0f64);
        assert!((w_a - w_b).abs() < 1e-12);
    }

    #[test]
    fn wigner_of_trapped_state_is_positive_ring() {
        // strongly trapped two-level mixture: the Wigner function stays
        // positive everywhere but is a ring, not a bell (center is a local
        // depression because p0 and p1 nearly cancel at the origin)
        let mut p = SystemParams::default();
        p.omega_m = 1.0 / 0.3;
        p.delta_a = -7.5;
        p.alpha_convention = crate::model::AlphaConvention::Literal;
        let ctrl = crate::model::SeriesControl::default();
        let d = analytic_populations(&p, 1, 260, &ctrl).unwrap();
        let g = wigner(&d, &WignerGridSpec::auto(&d));
        assert!(g.min_value() > -1e-10);
        let n = g.x.len();
        let center = g.w(n / 2, n / 2);
        let max = g.values().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert!(
            max > 3.0 * center,
            "expected ring structure: center {center:.4}, max {max:.4}"
        );
    }

    #[test]
    fn wigner_coverage_warning_on_small_grid() {
        let d = thermal_reference(10.0, 300);
        let spec = WignerGridSpec {
            x_min: -1.0,
            x_max: 1.0,
            y_min: -1.0,
            y_max: 1.0,
            nx: 41,
            ny: 41,
        };
        let g = wigner(&d, &spec);
        assert!(!g.coverage_ok);
    }

    #[test]
    fn wigner_finite_on_extreme_grids() {
        // corners of very wide grids push u = 4|xi|^2 past the range where
        // the envelope underflows; values must stay finite (and zero), never
        // NaN from 0 * inf
        let d = thermal_reference(10.0, 400);
        let spec = WignerGridSpec {
            x_min: -25.0,
            x_max: 25.0,
            y_min: -25.0,
            y_max: 25.0,
            nx: 41,
            ny: 41,
        };
        let g = wigner(&d, &spec);
        assert!(g.values().iter().all(|v| v.is_finite()));
        assert_eq!(g.w(0, 0), 0.0);
        assert!(g.quadrature_mass.is_finite());
    }

    #[test]
    fn simpson_integrates_gaussian() {
        let xs = linspace(-6.0, 6.0, 201);
        let w = simpson_weights(&xs);
        let total: f64 = xs
            .iter()
            .zip(&w)
            .map(|(x, wv)| wv * (-x * x / 2.0).exp())
            .sum();
        assert!((total - (2.0 * PI).sqrt()).abs() < 1e-8);
    }
}
