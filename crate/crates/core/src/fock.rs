//! Operator primitives on truncated Fock spaces.
//!
//! Everything downstream (Hamiltonians, Liouvillians, steady states) is built
//! from the handful of constructions here: ladder operators on a single
//! truncated mode, projector-style transfer operators, Kronecker products for
//! composite spaces, and the Lindblad dissipator.
//!
//! Composite spaces fix their basis ordering as mode 0 slowest: for a product
//! space (d0, d1, d2) the basis index is `((i0 * d1) + i1) * d2 + i2`. This
//! ordering is load-bearing for reproducible output files and must not
//! change.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use thiserror::Error;

/// Entrywise tolerance for operators flagged Hermitian.
pub const HERMITIAN_TOL: f64 = 1e-12;
/// Hermiticity/trace tolerance for density matrices.
pub const DENSITY_TOL: f64 = 1e-10;
/// Numerical positive-semidefiniteness floor for density matrices.
pub const PSD_TOL: f64 = -1e-8;

#[derive(Debug, Error)]
pub enum FockError {
    #[error("invalid Fock space: dim = {dim}, need at least 2 levels")]
    InvalidSpace { dim: usize },
    #[error("level index {index} out of range for space of dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },
    #[error("operand shapes differ: {left} vs {right}")]
    ShapeMismatch { left: usize, right: usize },
    #[error("matrix is not Hermitian: max |M - M^\u{2020}| = {deviation:.3e}")]
    NotHermitian { deviation: f64 },
    #[error("density matrix trace is {trace:.12}, expected 1")]
    BadTrace { trace: f64 },
    #[error("density matrix is not positive semidefinite: min eigenvalue {min_eig:.3e}")]
    NotPositive { min_eig: f64 },
}

/// A single truncated bosonic mode retaining levels |0>..|dim-1>.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FockSpace {
    dim: usize,
}

impl FockSpace {
    pub fn new(dim: usize) -> Result<Self, FockError> {
        if dim < 2 {
            return Err(FockError::InvalidSpace { dim });
        }
        Ok(Self { dim })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
}

/// Product of truncated modes, mode 0 slowest.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Space {
    dims: Vec<usize>,
}

impl Space {
    pub fn single(f: FockSpace) -> Self {
        Self { dims: vec![f.dim] }
    }

    pub fn product(modes: &[FockSpace]) -> Self {
        Self {
            dims: modes.iter().map(|f| f.dim).collect(),
        }
    }

    pub fn modes(&self) -> &[usize] {
        &self.dims
    }

    pub fn total(&self) -> usize {
        self.dims.iter().product()
    }

    fn joined(&self, other: &Space) -> Space {
        let mut dims = self.dims.clone();
        dims.extend_from_slice(&other.dims);
        Space { dims }
    }
}

impl From<FockSpace> for Space {
    fn from(f: FockSpace) -> Self {
        Space::single(f)
    }
}

/// Complex square matrix tagged with the (possibly composite) space it acts
/// on.
#[derive(Clone, Debug, PartialEq)]
pub struct Operator {
    space: Space,
    mat: DMatrix<C64>,
}

impl Operator {
    pub fn new(space: Space, mat: DMatrix<C64>) -> Result<Self, FockError> {
        if mat.nrows() != mat.ncols() {
            return Err(FockError::ShapeMismatch {
                left: mat.nrows(),
                right: mat.ncols(),
            });
        }
        if mat.nrows() != space.total() {
            return Err(FockError::ShapeMismatch {
                left: space.total(),
                right: mat.nrows(),
            });
        }
        Ok(Self { space, mat })
    }

    pub fn zeros(space: Space) -> Self {
        let n = space.total();
        Self {
            space,
            mat: DMatrix::zeros(n, n),
        }
    }

    pub fn space(&self) -> &Space {
        &self.space
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn mat(&self) -> &DMatrix<C64> {
        &self.mat
    }

    pub fn into_mat(self) -> DMatrix<C64> {
        self.mat
    }

    pub fn adjoint(&self) -> Operator {
        Operator {
            space: self.space.clone(),
            mat: self.mat.adjoint(),
        }
    }

    pub fn scale(&self, s: C64) -> Operator {
        Operator {
            space: self.space.clone(),
            mat: self.mat.map(|z| z * s),
        }
    }

    pub fn scale_re(&self, s: f64) -> Operator {
        self.scale(C64::new(s, 0.0))
    }

    /// Max entrywise deviation from Hermiticity.
    pub fn hermiticity_deviation(&self) -> f64 {
        max_abs(&(&self.mat - self.mat.adjoint()))
    }

    /// Checks `M = M^dagger` to the Hermitian-operator tolerance.
    pub fn assert_hermitian(&self) -> Result<(), FockError> {
        let dev = self.hermiticity_deviation();
        if dev > HERMITIAN_TOL {
            return Err(FockError::NotHermitian { deviation: dev });
        }
        Ok(())
    }
}

impl std::ops::Add for &Operator {
    type Output = Operator;
    fn add(self, rhs: &Operator) -> Operator {
        assert_eq!(self.space, rhs.space, "operator spaces differ");
        Operator {
            space: self.space.clone(),
            mat: &self.mat + &rhs.mat,
        }
    }
}

impl std::ops::Sub for &Operator {
    type Output = Operator;
    fn sub(self, rhs: &Operator) -> Operator {
        assert_eq!(self.space, rhs.space, "operator spaces differ");
        Operator {
            space: self.space.clone(),
            mat: &self.mat - &rhs.mat,
        }
    }
}

impl std::ops::Mul for &Operator {
    type Output = Operator;
    fn mul(self, rhs: &Operator) -> Operator {
        assert_eq!(self.space, rhs.space, "operator spaces differ");
        Operator {
            space: self.space.clone(),
            mat: &self.mat * &rhs.mat,
        }
    }
}

/// Annihilation operator on a truncated mode: `<n-1|c|n> = sqrt(n)`.
pub fn annihilation(space: FockSpace) -> Operator {
    let d = space.dim();
    let mut mat = DMatrix::<C64>::zeros(d, d);
    for n in 1..d {
        mat[(n - 1, n)] = C64::new((n as f64).sqrt(), 0.0);
    }
    Operator {
        space: space.into(),
        mat,
    }
}

/// Number operator `c^dagger c` (diagonal 0..dim-1).
pub fn number(space: FockSpace) -> Operator {
    let d = space.dim();
    let mut mat = DMatrix::<C64>::zeros(d, d);
    for n in 0..d {
        mat[(n, n)] = C64::new(n as f64, 0.0);
    }
    Operator {
        space: space.into(),
        mat,
    }
}

/// Identity on a truncated mode.
pub fn identity(space: FockSpace) -> Operator {
    Operator {
        space: space.into(),
        mat: DMatrix::identity(space.dim(), space.dim()),
    }
}

/// Level-transfer operator `|j><k|`: a single unit entry at (j, k).
///
/// With k = j+1 this is the selective annihilation operator of the
/// engineered decay channel; with j = k it is a level projector.
pub fn projector_transfer(space: FockSpace, j: usize, k: usize) -> Result<Operator, FockError> {
    let d = space.dim();
    for index in [j, k] {
        if index >= d {
            return Err(FockError::IndexOutOfRange { index, dim: d });
        }
    }
    let mut mat = DMatrix::<C64>::zeros(d, d);
    mat[(j, k)] = C64::new(1.0, 0.0);
    Ok(Operator {
        space: space.into(),
        mat,
    })
}

/// Kronecker product `A (x) B` on the joined space.
pub fn tensor(a: &Operator, b: &Operator) -> Operator {
    Operator {
        space: a.space.joined(&b.space),
        mat: a.mat.kronecker(&b.mat),
    }
}

/// Lindblad dissipator `D(O)[rho] = 2 O rho O^dag - rho O^dag O - O^dag O rho`.
///
/// The output is traceless and Hermitian-preserving; both properties follow
/// from the form and are exercised by the property tests below.
pub fn dissipator(o: &Operator, rho: &DensityMatrix) -> Result<DMatrix<C64>, FockError> {
    dissipator_mat(&o.mat, rho.mat()).ok_or(FockError::ShapeMismatch {
        left: o.dim(),
        right: rho.dim(),
    })
}

pub(crate) fn dissipator_mat(o: &DMatrix<C64>, rho: &DMatrix<C64>) -> Option<DMatrix<C64>> {
    if o.nrows() != rho.nrows() || o.ncols() != rho.ncols() {
        return None;
    }
    let od = o.adjoint();
    let odo = &od * o;
    Some((o * rho * &od).map(|z| 2.0 * z) - rho * &odo - &odo * rho)
}

/// Density matrix: Hermitian, unit trace, numerically positive semidefinite.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    space: Space,
    mat: DMatrix<C64>,
}

impl DensityMatrix {
    /// Validates all three density-matrix invariants.
    pub fn new(space: Space, mat: DMatrix<C64>) -> Result<Self, FockError> {
        if mat.nrows() != mat.ncols() || mat.nrows() != space.total() {
            return Err(FockError::ShapeMismatch {
                left: space.total(),
                right: mat.nrows(),
            });
        }
        let herm_dev = max_abs(&(&mat - mat.adjoint()));
        if herm_dev > DENSITY_TOL {
            return Err(FockError::NotHermitian {
                deviation: herm_dev,
            });
        }
        let trace = mat.trace();
        if (trace.re - 1.0).abs() > DENSITY_TOL || trace.im.abs() > DENSITY_TOL {
            return Err(FockError::BadTrace { trace: trace.re });
        }
        let herm = (&mat + mat.adjoint()).map(|z| z * 0.5);
        let eig = nalgebra::SymmetricEigen::new(herm);
        let min_eig = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
        if min_eig < PSD_TOL {
            return Err(FockError::NotPositive { min_eig });
        }
        Ok(Self { space, mat })
    }

    /// Skips validation; for internal constructions known valid by form.
    pub(crate) fn from_parts_unchecked(space: Space, mat: DMatrix<C64>) -> Self {
        Self { space, mat }
    }

    /// Pure Fock state `|n><n|`.
    pub fn fock_state(space: FockSpace, n: usize) -> Result<Self, FockError> {
        let d = space.dim();
        if n >= d {
            return Err(FockError::IndexOutOfRange { index: n, dim: d });
        }
        let mut mat = DMatrix::<C64>::zeros(d, d);
        mat[(n, n)] = C64::new(1.0, 0.0);
        Ok(Self {
            space: space.into(),
            mat,
        })
    }

    /// Diagonal state from populations (renormalized over the window).
    pub fn from_populations(space: FockSpace, pops: &[f64]) -> Result<Self, FockError> {
        let d = space.dim();
        if pops.len() != d {
            return Err(FockError::ShapeMismatch {
                left: d,
                right: pops.len(),
            });
        }
        let norm: f64 = pops.iter().sum();
        let mut mat = DMatrix::<C64>::zeros(d, d);
        for (n, &p) in pops.iter().enumerate() {
            mat[(n, n)] = C64::new(p / norm, 0.0);
        }
        Ok(Self {
            space: space.into(),
            mat,
        })
    }

    /// Truncated thermal state with Bose-Einstein ratio nbar/(nbar+1),
    /// renormalized over the retained window.
    pub fn thermal(space: FockSpace, nbar: f64) -> Result<Self, FockError> {
        let d = space.dim();
        let ratio = if nbar > 0.0 { nbar / (nbar + 1.0) } else { 0.0 };
        let mut pops = Vec::with_capacity(d);
        let mut p = 1.0;
        for _ in 0..d {
            pops.push(p);
            p *= ratio;
        }
        Self::from_populations(space, &pops)
    }

    pub fn space(&self) -> &Space {
        &self.space
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn mat(&self) -> &DMatrix<C64> {
        &self.mat
    }

    pub fn trace(&self) -> C64 {
        self.mat.trace()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim()).map(|n| self.mat[(n, n)].re).collect()
    }

    /// Diagonal marginal of one mode of a composite space.
    pub fn mode_marginal(&self, mode: usize) -> Result<Vec<f64>, FockError> {
        let dims = self.space.modes();
        if mode >= dims.len() {
            return Err(FockError::IndexOutOfRange {
                index: mode,
                dim: dims.len(),
            });
        }
        let stride_after: usize = dims[mode + 1..].iter().product();
        let block = stride_after * dims[mode];
        let mut marginal = vec![0.0; dims[mode]];
        for idx in 0..self.dim() {
            let level = (idx % block) / stride_after;
            marginal[level] += self.mat[(idx, idx)].re;
        }
        Ok(marginal)
    }
}

pub(crate) fn max_abs(m: &DMatrix<C64>) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}
