//! Dense finite-dimensional Hilbert-space algebra.
//!
//! Composite spaces use the row-major Kronecker convention: for subsystem
//! dimensions `[d0, d1, ...]` the basis index is `i0 * (d1 * d2 * ...) + i1 * (...) + ...`,
//! so subsystem 0 is the most significant digit.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
pub use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

/// Hermiticity tolerance for density matrices.
pub const HERMITIAN_TOL: f64 = 1e-10;
/// Unit-trace tolerance for density matrices.
pub const TRACE_TOL: f64 = 1e-9;
/// Smallest eigenvalue accepted as "positive semidefinite".
pub const POSITIVITY_FLOOR: f64 = -1e-8;
/// Norm tolerance for state vectors after renormalization.
pub const NORM_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct HilbertSpace {
    dims: Vec<usize>,
}

impl HilbertSpace {
    pub fn new(dims: impl Into<Vec<usize>>) -> Result<Self> {
        let dims = dims.into();
        if dims.is_empty() {
            return Err(Error::InvalidSpace("no subsystems".into()));
        }
        if let Some(pos) = dims.iter().position(|&d| d == 0) {
            return Err(Error::InvalidSpace(format!("subsystem {pos} has dimension 0")));
        }
        Ok(Self { dims })
    }

    /// A single subsystem of dimension `dim`.
    pub fn single(dim: usize) -> Result<Self> {
        Self::new(vec![dim])
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn n_subsystems(&self) -> usize {
        self.dims.len()
    }

    pub fn dim(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn concat(&self, other: &HilbertSpace) -> HilbertSpace {
        let mut dims = self.dims.clone();
        dims.extend_from_slice(&other.dims);
        HilbertSpace { dims }
    }

    /// Stride of subsystem `k` in the flattened basis index.
    fn stride(&self, k: usize) -> usize {
        self.dims[k + 1..].iter().product()
    }
}

impl fmt::Display for HilbertSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.dims.iter().map(|d| d.to_string()).collect();
        write!(f, "[{}]", parts.join("⊗"))
    }
}

/// A dense complex matrix acting on a labeled Hilbert space.
#[derive(Clone, Debug, PartialEq)]
pub struct Operator {
    space: HilbertSpace,
    matrix: CMatrix,
}

impl Operator {
    pub fn new(space: HilbertSpace, matrix: CMatrix) -> Result<Self> {
        let d = space.dim();
        if matrix.nrows() != d || matrix.ncols() != d {
            return Err(Error::DimensionMismatch(format!(
                "matrix is {}x{} but space {} has dimension {}",
                matrix.nrows(),
                matrix.ncols(),
                space,
                d
            )));
        }
        Ok(Self { space, matrix })
    }

    pub fn zeros(space: &HilbertSpace) -> Self {
        let d = space.dim();
        Self { space: space.clone(), matrix: CMatrix::zeros(d, d) }
    }

    pub fn identity(space: &HilbertSpace) -> Self {
        let d = space.dim();
        Self { space: space.clone(), matrix: CMatrix::identity(d, d) }
    }

    /// `|i⟩⟨j|` in the flattened basis (0-based).
    pub fn transition(space: &HilbertSpace, i: usize, j: usize) -> Result<Self> {
        let d = space.dim();
        if i >= d || j >= d {
            return Err(Error::DimensionMismatch(format!(
                "basis index ({i}, {j}) out of range for dimension {d}"
            )));
        }
        let mut op = Self::zeros(space);
        op.matrix[(i, j)] = ONE;
        Ok(op)
    }

    pub fn projector(space: &HilbertSpace, i: usize) -> Result<Self> {
        Self::transition(space, i, i)
    }

    pub fn space(&self) -> &HilbertSpace {
        &self.space
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn dagger(&self) -> Self {
        Self { space: self.space.clone(), matrix: self.matrix.adjoint() }
    }

    pub fn trace(&self) -> C64 {
        self.matrix.trace()
    }

    pub fn scaled(&self, c: C64) -> Self {
        Self { space: self.space.clone(), matrix: &self.matrix * c }
    }

    /// Largest elementwise modulus of `M - M†`.
    pub fn hermiticity_defect(&self) -> f64 {
        let d = self.dim();
        let mut worst = 0.0f64;
        for i in 0..d {
            for j in i..d {
                let diff = (self.matrix[(i, j)] - self.matrix[(j, i)].conj()).norm();
                worst = worst.max(diff);
            }
        }
        worst
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermiticity_defect() <= tol
    }

    pub fn max_abs_diff(&self, other: &Operator) -> f64 {
        self.check_same_space(other, "max_abs_diff");
        self.matrix.iter().zip(other.matrix.iter()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }

    pub fn commutator(&self, other: &Operator) -> Operator {
        &(self * other) - &(other * self)
    }

    /// Smallest eigenvalue of the Hermitian part `(M + M†)/2`.
    pub fn min_hermitian_eigenvalue(&self) -> f64 {
        let herm = (&self.matrix + self.matrix.adjoint()) * C64::new(0.5, 0.0);
        SymmetricEigen::new(herm).eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
    }

    fn check_same_space(&self, other: &Operator, what: &str) {
        assert_eq!(
            self.space, other.space,
            "{what}: operators live on different spaces ({} vs {})",
            self.space, other.space
        );
    }
}

impl Add for &Operator {
    type Output = Operator;
    fn add(self, rhs: &Operator) -> Operator {
        self.check_same_space(rhs, "add");
        Operator { space: self.space.clone(), matrix: &self.matrix + &rhs.matrix }
    }
}

impl Sub for &Operator {
    type Output = Operator;
    fn sub(self, rhs: &Operator) -> Operator {
        self.check_same_space(rhs, "sub");
        Operator { space: self.space.clone(), matrix: &self.matrix - &rhs.matrix }
    }
}

impl Mul for &Operator {
    type Output = Operator;
    fn mul(self, rhs: &Operator) -> Operator {
        self.check_same_space(rhs, "mul");
        Operator { space: self.space.clone(), matrix: &self.matrix * &rhs.matrix }
    }
}

impl Mul<C64> for &Operator {
    type Output = Operator;
    fn mul(self, rhs: C64) -> Operator {
        self.scaled(rhs)
    }
}

impl Mul<f64> for &Operator {
    type Output = Operator;
    fn mul(self, rhs: f64) -> Operator {
        self.scaled(C64::new(rhs, 0.0))
    }
}

impl Neg for &Operator {
    type Output = Operator;
    fn neg(self) -> Operator {
        self.scaled(-ONE)
    }
}

/// Hermitian, unit-trace, positive semidefinite operator.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    op: Operator,
}

impl DensityMatrix {
    pub fn new(op: Operator) -> Result<Self> {
        check_density(&op, 0.0)?;
        Ok(Self { op })
    }

    /// Wraps an operator without checking invariants. Callers must have
    /// produced it from a trace- and Hermiticity-preserving map.
    pub(crate) fn new_unchecked(op: Operator) -> Self {
        Self { op }
    }

    /// `|i⟩⟨i|` (0-based).
    pub fn basis(space: &HilbertSpace, i: usize) -> Result<Self> {
        Ok(Self { op: Operator::projector(space, i)? })
    }

    pub fn pure(psi: &StateVector) -> Self {
        let m = &psi.amplitudes * psi.amplitudes.adjoint();
        Self { op: Operator { space: psi.space.clone(), matrix: m } }
    }

    pub fn as_operator(&self) -> &Operator {
        &self.op
    }

    pub fn into_operator(self) -> Operator {
        self.op
    }

    pub fn space(&self) -> &HilbertSpace {
        self.op.space()
    }

    pub fn matrix(&self) -> &CMatrix {
        self.op.matrix()
    }

    pub fn purity(&self) -> f64 {
        (self.op.matrix() * self.op.matrix()).trace().re
    }

    /// Re-checks the density-matrix invariants, labeling failures with `time`.
    pub fn check_at(&self, time: f64) -> Result<()> {
        check_density(&self.op, time)
    }
}

fn check_density(op: &Operator, time: f64) -> Result<()> {
    let herm = op.hermiticity_defect();
    if herm > HERMITIAN_TOL {
        return Err(Error::Invariant { time, detail: format!("hermiticity defect {herm:e}") });
    }
    let tr = op.trace();
    if (tr - ONE).norm() > TRACE_TOL {
        return Err(Error::Invariant { time, detail: format!("trace {tr}") });
    }
    let min_eig = op.min_hermitian_eigenvalue();
    if min_eig < POSITIVITY_FLOOR {
        return Err(Error::Invariant { time, detail: format!("eigenvalue {min_eig:e}") });
    }
    Ok(())
}

/// A normalized pure state.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    space: HilbertSpace,
    amplitudes: CVector,
}

impl StateVector {
    pub fn new(space: HilbertSpace, amplitudes: CVector) -> Result<Self> {
        if amplitudes.len() != space.dim() {
            return Err(Error::DimensionMismatch(format!(
                "{} amplitudes for space {}",
                amplitudes.len(),
                space
            )));
        }
        let norm = amplitudes.norm();
        if (norm - 1.0).abs() > NORM_TOL {
            return Err(Error::param("amplitudes", format!("state norm {norm} is not 1")));
        }
        Ok(Self { space, amplitudes })
    }

    pub fn basis(space: &HilbertSpace, i: usize) -> Result<Self> {
        let d = space.dim();
        if i >= d {
            return Err(Error::DimensionMismatch(format!("basis index {i} ≥ dimension {d}")));
        }
        let mut amplitudes = CVector::zeros(d);
        amplitudes[i] = ONE;
        Ok(Self { space: space.clone(), amplitudes })
    }

    pub fn space(&self) -> &HilbertSpace {
        &self.space
    }

    pub fn amplitudes(&self) -> &CVector {
        &self.amplitudes
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.norm()
    }

    pub fn tensor(&self, other: &StateVector) -> StateVector {
        StateVector {
            space: self.space.concat(&other.space),
            amplitudes: self.amplitudes.kronecker(&other.amplitudes),
        }
    }

    /// `⟨ψ|A|ψ⟩`.
    pub fn expectation(&self, op: &Operator) -> Result<C64> {
        if op.space() != &self.space {
            return Err(Error::DimensionMismatch(format!(
                "operator on {} vs state on {}",
                op.space(),
                self.space
            )));
        }
        Ok(self.amplitudes.dotc(&(op.matrix() * &self.amplitudes)))
    }
}

/// Kronecker product; the result lives on the concatenated space.
pub fn tensor(a: &Operator, b: &Operator) -> Operator {
    Operator { space: a.space.concat(&b.space), matrix: a.matrix.kronecker(&b.matrix) }
}

/// Embeds `op` on subsystem `target` of `space`, identity elsewhere.
pub fn lift(op: &Operator, target: usize, space: &HilbertSpace) -> Result<Operator> {
    let count = space.n_subsystems();
    if target >= count {
        return Err(Error::SubsystemIndex { index: target, count });
    }
    if op.dim() != space.dims()[target] {
        return Err(Error::DimensionMismatch(format!(
            "operator of dimension {} cannot act on subsystem {target} of {space}",
            op.dim()
        )));
    }
    let mut matrix = CMatrix::identity(1, 1);
    for (k, &d) in space.dims().iter().enumerate() {
        let factor = if k == target { op.matrix.clone() } else { CMatrix::identity(d, d) };
        matrix = matrix.kronecker(&factor);
    }
    Ok(Operator { space: space.clone(), matrix })
}

/// Traces out every subsystem except `keep`.
pub fn partial_trace_operator(op: &Operator, keep: usize) -> Result<Operator> {
    let space = op.space();
    let count = space.n_subsystems();
    if keep >= count {
        return Err(Error::SubsystemIndex { index: keep, count });
    }
    let dk = space.dims()[keep];
    let stride = space.stride(keep);
    let d = space.dim();
    // Index with the `keep` digit zeroed, identifying the traced-out digits.
    let rest = |idx: usize| idx - ((idx / stride) % dk) * stride;
    let digit = |idx: usize| (idx / stride) % dk;
    let mut out = CMatrix::zeros(dk, dk);
    for r in 0..d {
        let rr = rest(r);
        for c in 0..d {
            if rest(c) == rr {
                out[(digit(r), digit(c))] += op.matrix[(r, c)];
            }
        }
    }
    Operator::new(HilbertSpace::single(dk)?, out)
}

/// Reduced density matrix on subsystem `keep`.
pub fn partial_trace(rho: &DensityMatrix, keep: usize) -> Result<DensityMatrix> {
    Ok(DensityMatrix::new_unchecked(partial_trace_operator(rho.as_operator(), keep)?))
}

/// `Tr(ρ·A)`.
pub fn expectation(rho: &DensityMatrix, op: &Operator) -> Result<C64> {
    trace_product(rho.as_operator(), op)
}

/// `Tr(A·B)` without forming the product.
pub fn trace_product(a: &Operator, b: &Operator) -> Result<C64> {
    if a.space() != b.space() {
        return Err(Error::DimensionMismatch(format!("{} vs {}", a.space(), b.space())));
    }
    let d = a.dim();
    let mut acc = ZERO;
    for i in 0..d {
        for j in 0..d {
            acc += a.matrix[(i, j)] * b.matrix[(j, i)];
        }
    }
    Ok(acc)
}
