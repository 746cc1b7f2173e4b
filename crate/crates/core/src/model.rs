//! System parameters and model-specific builders.
//!
//! Scalars here come from the adiabatic elimination of the driven cavity
//! pair: the series functions `f1`/`f2` encode the phonon-number dependence
//! of the drive coupling after the polaron transformation, `g_func` is the
//! combinatorial kernel entering the level-dependent coupling `alpha_n` and
//! phase factor `phi_n`, and `chi_e`/`alpha_bar` are the second-order energy
//! shift and coupling of the eliminated transition.
//!
//! All rates are in units of the optomechanical coupling (g = 1); the
//! Lamb-Dicke parameter is therefore `eta = 1/omega_m`.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fock::{annihilation, identity, number, tensor, FockError, FockSpace, Operator};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("series `{context}` did not converge within {terms} terms (last term {last_term:.3e})")]
    SeriesDivergence {
        context: &'static str,
        last_term: f64,
        terms: usize,
    },
    #[error("pole in `{context}` at delta_a = {at}")]
    Pole { context: &'static str, at: f64 },
    #[error("Lamb-Dicke parameter out of range: eta = {eta}, need 0 <= eta < 1")]
    InvalidEta { eta: f64 },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("arguments out of range for g(x, y): x = {x}, y = {y}")]
    RangeError { x: usize, y: usize },
    #[error(transparent)]
    Fock(#[from] FockError),
}

/// Which prefactor multiplies the level-dependent coupling `alpha_n`.
///
/// The two conventions differ in whether the cavity-exchange factor
/// `J / (delta_a - omega_m)` from the adiabatic elimination is included.
/// Quoted benchmark statistics are reproducible only under one of them, so
/// every metrics output reports both.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlphaConvention {
    /// `alpha_n = e^{eta^2/2} J eps / (delta_a - omega_m) * eta sqrt(n+1) * sum_m g(m, n)`
    Derived,
    /// `alpha_n = e^{eta^2/2} eps * eta sqrt(n+1) * sum_m g(m, n)`
    Literal,
}

/// Argument order of the second `g` kernel inside the `phi_n` double sum.
///
/// With the summation index in the first slot (`g(k, n)`) the k-series picks
/// up the `eta^{2k}/k!(k+1)!` decay and converges absolutely. With the fixed
/// level in the first slot (`g(n, k)`) the k-terms grow polynomially and the
/// series has no limit; that variant is retained for diagnostics only and
/// reports a divergence error when evaluated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhiGOrder {
    IndexFirst,
    LevelFirst,
}

/// Physical rates and detunings of the three-mode system, in units of the
/// optomechanical coupling.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SystemParams {
    /// Mechanical frequency omega_m. Also fixes eta = 1/omega_m.
    pub omega_m: f64,
    /// Inter-cavity coupling J.
    pub j: f64,
    /// Drive amplitude eps on cavity a.
    pub eps: f64,
    /// Drive detuning from cavity a.
    pub delta_a: f64,
    /// Drive detuning from cavity b.
    pub delta_b: f64,
    /// Cavity-b decay rate.
    pub kappa_b: f64,
    /// Cavity-a decay rate; only the full-model validation uses it.
    pub kappa_a: f64,
    /// Mechanical damping rate.
    pub gamma_p: f64,
    /// Thermal occupation of the mechanical bath.
    pub nbar_p: f64,
    pub alpha_convention: AlphaConvention,
    pub phi_g_order: PhiGOrder,
}

impl Default for SystemParams {
    /// Benchmark operating point: a level-selective regime with a slow, hot
    /// mechanical bath and a fast cavity.
    fn default() -> Self {
        Self {
            omega_m: 10.0,
            j: 1.0,
            eps: 3.0,
            delta_a: -9.7,
            delta_b: 10.0,
            kappa_b: 0.15,
            kappa_a: 0.15,
            gamma_p: 1e-5,
            nbar_p: 10.0,
            alpha_convention: AlphaConvention::Derived,
            phi_g_order: PhiGOrder::IndexFirst,
        }
    }
}

impl SystemParams {
    /// Lamb-Dicke parameter, derived: eta = 1/omega_m.
    pub fn eta(&self) -> f64 {
        1.0 / self.omega_m
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let mut problems = Vec::new();
        if !(self.omega_m > 0.0) {
            problems.push(format!("omega_m must be > 0 (got {})", self.omega_m));
        }
        if !(self.kappa_b > 0.0) {
            problems.push(format!("kappa_b must be > 0 (got {})", self.kappa_b));
        }
        if !(self.kappa_a > 0.0) {
            problems.push(format!("kappa_a must be > 0 (got {})", self.kappa_a));
        }
        if !(self.gamma_p >= 0.0) {
            problems.push(format!("gamma_p must be >= 0 (got {})", self.gamma_p));
        }
        if !(self.nbar_p >= 0.0) {
            problems.push(format!("nbar_p must be >= 0 (got {})", self.nbar_p));
        }
        if !(self.eps >= 0.0) {
            problems.push(format!("eps must be >= 0 (got {})", self.eps));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(ModelError::InvalidParams(problems.join("; ")))
        }
    }
}

/// Truncation control for the series evaluators.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesControl {
    pub max_terms: usize,
    /// Relative magnitude below which further terms are dropped.
    pub tail_tol: f64,
}

impl Default for SeriesControl {
    fn default() -> Self {
        // eta^{2m} < 1e-14 by m ~ 14 for eta <= 0.3; 40 leaves margin for the
        // factorial growth in the numerators.
        Self {
            max_terms: 40,
            tail_tol: 1e-14,
        }
    }
}

/// A converged partial sum together with the magnitude of the first dropped
/// term.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SeriesSum {
    pub value: f64,
    pub last_term: f64,
    pub terms: usize,
}

/// Sums t_0 + t_1 + ... with t_{m+1} = t_m * ratio(m), stopping once the next
/// term is below `tail_tol` relative to the accumulated sum.
fn series_sum(
    ctrl: &SeriesControl,
    t0: f64,
    mut ratio: impl FnMut(usize) -> f64,
    context: &'static str,
) -> Result<SeriesSum, ModelError> {
    let mut sum = 0.0;
    let mut term = t0;
    for m in 0..ctrl.max_terms.max(1) {
        sum += term;
        let next = term * ratio(m);
        let scale = sum.abs().max(ctrl.tail_tol);
        if next.abs() <= ctrl.tail_tol * scale {
            return Ok(SeriesSum {
                value: sum,
                last_term: next,
                terms: m + 1,
            });
        }
        term = next;
    }
    Err(ModelError::SeriesDivergence {
        context,
        last_term: term,
        terms: ctrl.max_terms,
    })
}

fn check_eta(eta: f64) -> Result<(), ModelError> {
    if !(0.0..1.0).contains(&eta) || !eta.is_finite() {
        return Err(ModelError::InvalidEta { eta });
    }
    Ok(())
}

/// Diagonal element `<n| f1(c c^dag) |n> = sum_m (-1)^m eta^{2m} (n+m)! / (n! (m!)^2)`.
pub fn f1_element(n: usize, eta: f64, ctrl: &SeriesControl) -> Result<SeriesSum, ModelError> {
    check_eta(eta)?;
    let e2 = eta * eta;
    series_sum(
        ctrl,
        1.0,
        |m| -e2 * (n + m + 1) as f64 / (((m + 1) * (m + 1)) as f64),
        "f1",
    )
}

/// Diagonal element `<n| f2(c c^dag) |n> = sum_m (-1)^m eta^{2m+1} (n+m)! / (n! m! (m+1)!)`.
pub fn f2_element(n: usize, eta: f64, ctrl: &SeriesControl) -> Result<SeriesSum, ModelError> {
    check_eta(eta)?;
    let e2 = eta * eta;
    series_sum(
        ctrl,
        eta,
        |m| -e2 * (n + m + 1) as f64 / (((m + 1) * (m + 2)) as f64),
        "f2",
    )
}

/// Coupling kernel `g(x, y) = (-1)^x eta^{2x} (x+y+1)! / (x! (x+1)! (y+1)!)`,
/// evaluated by multiplicative accumulation (no explicit factorials).
pub fn g_func(x: usize, y: usize, eta: f64) -> Result<f64, ModelError> {
    if x + y + 1 > 400 {
        return Err(ModelError::RangeError { x, y });
    }
    let e2 = eta * eta;
    let mut g = 1.0;
    for i in 1..=x {
        g *= -e2 * (y + 1 + i) as f64 / ((i * (i + 1)) as f64);
    }
    if !g.is_finite() {
        return Err(ModelError::RangeError { x, y });
    }
    Ok(g)
}

/// `sum_m g(m, n)`, the row sum entering `alpha_n`.
pub fn g_row_sum(n: usize, eta: f64, ctrl: &SeriesControl) -> Result<SeriesSum, ModelError> {
    check_eta(eta)?;
    let e2 = eta * eta;
    series_sum(
        ctrl,
        1.0,
        |m| -e2 * (m + n + 2) as f64 / (((m + 1) * (m + 2)) as f64),
        "g-row-sum",
    )
}

/// Cross-coupling `chi_e = J^2 / (omega_m - delta_a)` of the eliminated
/// single-photon state.
pub fn chi_e(p: &SystemParams) -> Result<f64, ModelError> {
    let denom = p.omega_m - p.delta_a;
    if denom.abs() < 1e-12 {
        return Err(ModelError::Pole {
            context: "chi_e",
            at: p.delta_a,
        });
    }
    Ok(p.j * p.j / denom)
}

/// Second-order drive coupling `alpha = e^{eta^2/2} J eps / (delta_a - omega_m)`.
pub fn alpha_bar(p: &SystemParams) -> Result<f64, ModelError> {
    let denom = p.delta_a - p.omega_m;
    if denom.abs() < 1e-12 {
        return Err(ModelError::Pole {
            context: "alpha_bar",
            at: p.delta_a,
        });
    }
    let eta = p.eta();
    Ok((eta * eta / 2.0).exp() * p.j * p.eps / denom)
}

/// `alpha_n` evaluated under both prefactor conventions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct AlphaPair {
    pub derived: f64,
    pub literal: f64,
}

impl AlphaPair {
    pub fn get(&self, conv: AlphaConvention) -> f64 {
        match conv {
            AlphaConvention::Derived => self.derived,
            AlphaConvention::Literal => self.literal,
        }
    }
}

/// Level-dependent selective coupling, both conventions.
pub fn alpha_n_pair(
    p: &SystemParams,
    n: usize,
    ctrl: &SeriesControl,
) -> Result<AlphaPair, ModelError> {
    let eta = p.eta();
    check_eta(eta)?;
    let row = g_row_sum(n, eta, ctrl)?.value;
    let base = (eta * eta / 2.0).exp() * eta * ((n + 1) as f64).sqrt() * row;
    let literal = p.eps * base;
    let denom = p.delta_a - p.omega_m;
    if denom.abs() < 1e-12 {
        return Err(ModelError::Pole {
            context: "alpha_n (derived prefactor)",
            at: p.delta_a,
        });
    }
    let derived = p.j / denom * p.eps * base;
    Ok(AlphaPair { derived, literal })
}

/// Level-dependent selective coupling under the active convention.
pub fn alpha_n(p: &SystemParams, n: usize, ctrl: &SeriesControl) -> Result<f64, ModelError> {
    match p.alpha_convention {
        AlphaConvention::Literal => {
            let eta = p.eta();
            check_eta(eta)?;
            let row = g_row_sum(n, eta, ctrl)?.value;
            Ok(p.eps * (eta * eta / 2.0).exp() * eta * ((n + 1) as f64).sqrt() * row)
        }
        AlphaConvention::Derived => Ok(alpha_n_pair(p, n, ctrl)?.derived),
    }
}

/// Detuning of the `|g, n+1> <-> |e, n>` transition:
///
/// `phi_n = -chi_e - e^{eta^2} eps^2 sum_{m,k} g(m,n) g2(k) [ (m+1)(n+1)(k+1)/delta_a
///          + eta^2/(delta_a - omega_m)
///          + eta^2 (n+m+2)(n+k+2) / ((delta_a + omega_m)(n+1)(n+2)) ]`
///
/// where `g2(k)` follows [`SystemParams::phi_g_order`]. The bracket is
/// separable in m and k, so the double sum is evaluated as three products of
/// one-dimensional series, each truncated by `ctrl`.
pub fn phi_n(p: &SystemParams, n: usize, ctrl: &SeriesControl) -> Result<f64, ModelError> {
    let eta = p.eta();
    check_eta(eta)?;
    for (pole, what) in [
        (0.0, "phi_n at delta_a = 0"),
        (p.omega_m, "phi_n at delta_a = omega_m"),
        (-p.omega_m, "phi_n at delta_a = -omega_m"),
    ] {
        if (p.delta_a - pole).abs() < 1e-9 {
            return Err(ModelError::Pole {
                context: what,
                at: p.delta_a,
            });
        }
    }
    let e2 = eta * eta;
    let nf = n as f64;

    // m-side sums over g(m, n) with weights 1, (m+1), (n+m+2).
    let ratio_g = |m: usize| -e2 * (m + n + 2) as f64 / (((m + 1) * (m + 2)) as f64);
    let m0 = series_sum(ctrl, 1.0, ratio_g, "phi m-sum")?.value;
    let m1 = series_sum(
        ctrl,
        1.0,
        |m| ratio_g(m) * (m + 2) as f64 / (m + 1) as f64,
        "phi m-sum (m+1)",
    )?
    .value;
    let m2 = series_sum(
        ctrl,
        nf + 2.0,
        |m| ratio_g(m) * (n + m + 3) as f64 / (n + m + 2) as f64,
        "phi m-sum (n+m+2)",
    )?
    .value;

    // k-side sums; kernel depends on the configured argument order.
    let (k0, k1, k2) = match p.phi_g_order {
        PhiGOrder::IndexFirst => (m0, m1, m2),
        PhiGOrder::LevelFirst => {
            // g(n, k) as a function of k: t0 = (-eta^2)^n / n!, ratio
            // (n+k+2)/(k+2) >= 1, which grows without bound.
            let mut t0 = 1.0;
            for i in 1..=n {
                t0 *= -e2 / i as f64;
            }
            let ratio_l = |k: usize| (n + k + 2) as f64 / (k + 2) as f64;
            let k0 = series_sum(ctrl, t0, ratio_l, "phi k-sum (level-first)")?.value;
            let k1 = series_sum(
                ctrl,
                t0,
                |k| ratio_l(k) * (k + 2) as f64 / (k + 1) as f64,
                "phi k-sum (level-first, k+1)",
            )?
            .value;
            let k2 = series_sum(
                ctrl,
                t0 * (nf + 2.0),
                |k| ratio_l(k) * (n + k + 3) as f64 / (n + k + 2) as f64,
                "phi k-sum (level-first, n+k+2)",
            )?
            .value;
            (k0, k1, k2)
        }
    };

    let a = (nf + 1.0) / p.delta_a;
    let b = e2 / (p.delta_a - p.omega_m);
    let c = e2 / ((p.delta_a + p.omega_m) * (nf + 1.0) * (nf + 2.0));
    let double_sum = a * m1 * k1 + b * m0 * k0 + c * m2 * k2;

    Ok(-chi_e(p)? - e2.exp() * p.eps * p.eps * double_sum)
}

/// Composite space of the full model: two two-level cavities and the
/// truncated mechanical mode, ordered cavity a, cavity b, phonon.
pub fn three_mode_space(n_c: usize) -> Result<(FockSpace, FockSpace, FockSpace), ModelError> {
    let qubit = FockSpace::new(2)?;
    let phonon = FockSpace::new(n_c)?;
    Ok((qubit, qubit, phonon))
}

/// Embeds single-mode operators into the three-mode product space.
pub struct ThreeModeOps {
    pub a: Operator,
    pub b: Operator,
    pub c: Operator,
}

pub fn three_mode_ops(n_c: usize) -> Result<ThreeModeOps, ModelError> {
    let (sa, sb, sc) = three_mode_space(n_c)?;
    let (ia, ib, ic) = (identity(sa), identity(sb), identity(sc));
    let a = tensor(&tensor(&annihilation(sa), &ib), &ic);
    let b = tensor(&tensor(&ia, &annihilation(sb)), &ic);
    let c = tensor(&tensor(&ia, &ib), &annihilation(sc));
    Ok(ThreeModeOps { a, b, c })
}

/// Full three-mode Hamiltonian (g = 1):
///
/// `H = delta_a a^dag a + delta_b b^dag b + omega_m c^dag c
///      + (a^dag a + b^dag b)(c + c^dag) + J (a^dag b + a b^dag) + eps (a + a^dag)`
///
/// Hermitian exactly, by assembling every non-diagonal piece as `X + X^dag`.
pub fn build_full_hamiltonian(p: &SystemParams, n_c: usize) -> Result<Operator, ModelError> {
    p.validate()?;
    let (sa, sb, sc) = three_mode_space(n_c)?;
    let (ia, ib, ic) = (identity(sa), identity(sb), identity(sc));
    let ops = three_mode_ops(n_c)?;

    let n_a = tensor(&tensor(&number(sa), &ib), &ic);
    let n_b = tensor(&tensor(&ia, &number(sb)), &ic);
    let n_c_op = tensor(&tensor(&ia, &ib), &number(sc));

    let c_plus = &ops.c + &ops.c.adjoint();
    let photon_sum = &n_a + &n_b;
    let coupling = &photon_sum * &c_plus;

    let x = &(&ops.a.adjoint() * &ops.b).scale_re(p.j) + &ops.a.scale_re(p.eps);
    let diag = &(&n_a.scale_re(p.delta_a) + &n_b.scale_re(p.delta_b)) + &n_c_op.scale_re(p.omega_m);

    let h = &(&diag + &coupling) + &(&x + &x.adjoint());
    Ok(h)
}

/// Unitary conjugation `e^S H e^{-S}` with
/// `S = eta (a^dag a + b^dag b)(c^dag - c)`, computed through the Hermitian
/// eigendecomposition of `iS` (so the transform is unitary to machine
/// precision).
pub fn polaron_transform(h: &Operator, eta: f64) -> Result<Operator, ModelError> {
    let dims = h.space().modes();
    if dims.len() != 3 {
        return Err(ModelError::InvalidParams(format!(
            "polaron transform needs a three-mode operator, got {} modes",
            dims.len()
        )));
    }
    if eta == 0.0 {
        return Ok(h.clone());
    }
    let sa = FockSpace::new(dims[0])?;
    let sb = FockSpace::new(dims[1])?;
    let sc = FockSpace::new(dims[2])?;
    let (ia, ib, ic) = (identity(sa), identity(sb), identity(sc));
    let n_a = tensor(&tensor(&number(sa), &ib), &ic);
    let n_b = tensor(&tensor(&ia, &number(sb)), &ic);
    let c_op = tensor(&tensor(&ia, &ib), &annihilation(sc));
    let photon_sum = &n_a + &n_b;
    let displacement = &c_op.adjoint() - &c_op;
    let s = (&photon_sum * &displacement).scale_re(eta);

    // K = iS is Hermitian; e^S = U e^{-i lambda} U^dag.
    let k = s.mat().map(|z| z * C64::new(0.0, 1.0));
    let eig = nalgebra::SymmetricEigen::new(k);
    let phases = eig
        .eigenvalues
        .map(|lam| C64::new(0.0, -lam).exp());
    let e_s = &eig.eigenvectors * DMatrix::from_diagonal(&phases) * eig.eigenvectors.adjoint();
    let transformed = &e_s * h.mat() * e_s.adjoint();
    Ok(Operator::new(h.space().clone(), transformed)?)
}
