//! Operator algebra on truncated transmon ⊗ Fock spaces.
//!
//! Basis states are ordered with the transmon index varying slowest:
//! `|q, n⟩ ↦ q * (fock_cutoff + 1) + n` with `q = 0, 1, 2` for `g, e, f`.
//! Qubit blocks (`ρ_gg`, `ρ_ge`, ...) are therefore contiguous submatrices.
//!
//! The Pauli `σ_z` is `+1` on `|g⟩` and `−1` on `|e⟩`.

mod lindblad;
mod measures;
mod states;

pub use lindblad::{lindblad_evolve, unnormalized_trace, Collapse, DEFAULT_DT};
pub use measures::{concurrence_two_qubit, fidelity_to_pure, purity};
pub(crate) use states::hermitian_eigenvalues;
pub use states::{DensityMatrix, KetState, RawMatrix, ReducedState};

use std::fmt;
use std::ops::{Add, Mul, Sub};
use std::str::FromStr;

use nalgebra::{Complex, DMatrix, DVector};

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

pub(crate) const ZERO: C64 = C64::new(0.0, 0.0);
pub(crate) const ONE: C64 = C64::new(1.0, 0.0);
pub(crate) const I: C64 = C64::new(0.0, 1.0);

/// Truncated transmon ⊗ Fock space.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct HilbertSpec {
    transmon_levels: usize,
    fock_cutoff: usize,
}

impl HilbertSpec {
    /// Two transmon levels and photon numbers `0..=4`; dimension 10.
    pub const RECONSTRUCTION: HilbertSpec = HilbertSpec {
        transmon_levels: 2,
        fock_cutoff: 4,
    };

    pub fn new(transmon_levels: usize, fock_cutoff: usize) -> Result<Self> {
        if !(2..=3).contains(&transmon_levels) {
            return Err(Error::InvalidSpace(format!(
                "transmon_levels must be 2 or 3, got {transmon_levels}"
            )));
        }
        if fock_cutoff < 1 {
            return Err(Error::InvalidSpace("fock_cutoff must be at least 1".into()));
        }
        Ok(HilbertSpec {
            transmon_levels,
            fock_cutoff,
        })
    }

    pub fn transmon_levels(&self) -> usize {
        self.transmon_levels
    }

    pub fn fock_cutoff(&self) -> usize {
        self.fock_cutoff
    }

    pub fn fock_dim(&self) -> usize {
        self.fock_cutoff + 1
    }

    pub fn dim(&self) -> usize {
        self.transmon_levels * self.fock_dim()
    }

    /// Flat index of `|level, n⟩`.
    pub fn index(&self, level: Level, n: usize) -> usize {
        debug_assert!(n <= self.fock_cutoff);
        level.index() * self.fock_dim() + n
    }

    pub(crate) fn check(&self, other: &HilbertSpec) -> Result<()> {
        if self != other {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: other.dim(),
            });
        }
        Ok(())
    }
}

impl fmt::Display for HilbertSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} transmon levels x Fock 0..={}",
            self.transmon_levels, self.fock_cutoff
        )
    }
}

/// Transmon level.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Level {
    G,
    E,
    F,
}

impl Level {
    pub fn index(self) -> usize {
        match self {
            Level::G => 0,
            Level::E => 1,
            Level::F => 2,
        }
    }
}

/// Qubit operator label: identity or one of the three Pauli matrices.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Sigma {
    Identity,
    X,
    Y,
    Z,
}

impl Sigma {
    pub const ALL: [Sigma; 4] = [Sigma::Identity, Sigma::X, Sigma::Y, Sigma::Z];

    /// Column code used in moment tables (`0` = identity, then x, y, z).
    pub fn code(self) -> usize {
        match self {
            Sigma::Identity => 0,
            Sigma::X => 1,
            Sigma::Y => 2,
            Sigma::Z => 3,
        }
    }

    pub fn from_code(code: usize) -> Result<Self> {
        Sigma::ALL
            .get(code)
            .copied()
            .ok_or_else(|| Error::InvalidArgument(format!("sigma index {code} out of range")))
    }

    /// 2×2 matrix in the `(g, e)` ordering.
    pub fn matrix(self) -> CMatrix {
        match self {
            Sigma::Identity => CMatrix::identity(2, 2),
            Sigma::X => CMatrix::from_row_slice(2, 2, &[ZERO, ONE, ONE, ZERO]),
            // σ_y|g⟩ = i|e⟩
            Sigma::Y => CMatrix::from_row_slice(2, 2, &[ZERO, -I, I, ZERO]),
            Sigma::Z => CMatrix::from_row_slice(2, 2, &[ONE, ZERO, ZERO, -ONE]),
        }
    }
}

impl fmt::Display for Sigma {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sigma::Identity => "I",
            Sigma::X => "x",
            Sigma::Y => "y",
            Sigma::Z => "z",
        })
    }
}

impl FromStr for Sigma {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "I" | "i" | "id" | "identity" | "0" => Ok(Sigma::Identity),
            "x" | "X" | "1" => Ok(Sigma::X),
            "y" | "Y" | "2" => Ok(Sigma::Y),
            "z" | "Z" | "3" => Ok(Sigma::Z),
            other => Err(Error::InvalidArgument(format!("unknown Pauli axis {other:?}"))),
        }
    }
}

/// Dense operator on a [`HilbertSpec`].
#[derive(Clone, Debug, PartialEq)]
pub struct Operator {
    space: HilbertSpec,
    matrix: CMatrix,
}

impl Operator {
    pub fn new(space: HilbertSpec, matrix: CMatrix) -> Result<Self> {
        if matrix.nrows() != space.dim() || matrix.ncols() != space.dim() {
            return Err(Error::DimensionMismatch {
                expected: space.dim(),
                found: matrix.nrows().max(matrix.ncols()),
            });
        }
        Ok(Operator { space, matrix })
    }

    pub fn identity(space: HilbertSpec) -> Self {
        Operator {
            space,
            matrix: CMatrix::identity(space.dim(), space.dim()),
        }
    }

    pub fn zeros(space: HilbertSpec) -> Self {
        Operator {
            space,
            matrix: CMatrix::zeros(space.dim(), space.dim()),
        }
    }

    pub fn space(&self) -> HilbertSpec {
        self.space
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    pub fn dagger(&self) -> Operator {
        Operator {
            space: self.space,
            matrix: self.matrix.adjoint(),
        }
    }

    pub fn scale(&self, factor: C64) -> Operator {
        Operator {
            space: self.space,
            matrix: &self.matrix * factor,
        }
    }

    pub fn powi(&self, exponent: usize) -> Operator {
        let mut out = Operator::identity(self.space);
        for _ in 0..exponent {
            out.matrix = &out.matrix * &self.matrix;
        }
        out
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        max_abs_diff(&self.matrix, &self.matrix.adjoint()) <= tol
    }

    /// Apply to a ket's amplitudes.
    pub fn apply(&self, ket: &KetState) -> Result<CVector> {
        self.space.check(&ket.space())?;
        Ok(&self.matrix * ket.amplitudes())
    }
}

impl Mul<&Operator> for &Operator {
    type Output = Operator;

    fn mul(self, rhs: &Operator) -> Operator {
        assert_eq!(self.space, rhs.space, "operator spaces differ");
        Operator {
            space: self.space,
            matrix: &self.matrix * &rhs.matrix,
        }
    }
}

impl Add<&Operator> for &Operator {
    type Output = Operator;

    fn add(self, rhs: &Operator) -> Operator {
        assert_eq!(self.space, rhs.space, "operator spaces differ");
        Operator {
            space: self.space,
            matrix: &self.matrix + &rhs.matrix,
        }
    }
}

impl Sub<&Operator> for &Operator {
    type Output = Operator;

    fn sub(self, rhs: &Operator) -> Operator {
        assert_eq!(self.space, rhs.space, "operator spaces differ");
        Operator {
            space: self.space,
            matrix: &self.matrix - &rhs.matrix,
        }
    }
}

pub(crate) fn max_abs_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

/// Fock-space ladder operator `a` on `0..=cutoff`.
pub fn fock_annihilation(cutoff: usize) -> CMatrix {
    let d = cutoff + 1;
    let mut a = CMatrix::zeros(d, d);
    for n in 1..d {
        a[(n - 1, n)] = C64::new((n as f64).sqrt(), 0.0);
    }
    a
}

/// Transmon lowering with harmonic matrix elements: `|e⟩→|g⟩` (1), `|f⟩→|e⟩` (√2).
pub fn transmon_lowering_matrix(levels: usize) -> CMatrix {
    let mut l = CMatrix::zeros(levels, levels);
    for q in 1..levels {
        l[(q - 1, q)] = C64::new((q as f64).sqrt(), 0.0);
    }
    l
}

/// Kronecker product with the transmon factor first.
pub fn tensor(transmon: &CMatrix, field: &CMatrix) -> Result<Operator> {
    if !transmon.is_square() || !field.is_square() {
        return Err(Error::InvalidArgument("tensor factors must be square".into()));
    }
    let space = HilbertSpec::new(transmon.nrows(), field.nrows().saturating_sub(1))?;
    Operator::new(space, transmon.kronecker(field))
}

/// Field operator `a`, identity on the transmon.
pub fn annihilation(space: HilbertSpec) -> Operator {
    Operator {
        space,
        matrix: CMatrix::identity(space.transmon_levels, space.transmon_levels)
            .kronecker(&fock_annihilation(space.fock_cutoff)),
    }
}

pub fn creation(space: HilbertSpec) -> Operator {
    annihilation(space).dagger()
}

pub fn number(space: HilbertSpec) -> Operator {
    let a = annihilation(space);
    &a.dagger() * &a
}

/// Normally ordered `(a†)ⁿ aᵐ` on the truncated space.
///
/// Products of truncated ladder matrices equal the projection of the
/// untruncated operator for normally ordered words.
pub fn normal_ordered(space: HilbertSpec, n: usize, m: usize) -> Operator {
    let a = annihilation(space);
    &a.dagger().powi(n) * &a.powi(m)
}

/// Transmon lowering (σ⁻, plus √2 |e⟩⟨f| for three levels); identity on the field.
pub fn transmon_lowering(space: HilbertSpec) -> Operator {
    Operator {
        space,
        matrix: transmon_lowering_matrix(space.transmon_levels)
            .kronecker(&CMatrix::identity(space.fock_dim(), space.fock_dim())),
    }
}

/// Embed a 2×2 qubit matrix into the `(g, e)` block of the transmon factor.
pub fn qubit_block(levels: usize, m2: &CMatrix) -> CMatrix {
    let mut out = CMatrix::zeros(levels, levels);
    out.view_mut((0, 0), (2, 2)).copy_from(m2);
    out
}

/// Pauli operator acting on the `(g, e)` block, identity on the field.
pub fn pauli(space: HilbertSpec, axis: Sigma) -> Operator {
    let q = qubit_block(space.transmon_levels, &axis.matrix());
    Operator {
        space,
        matrix: q.kronecker(&CMatrix::identity(space.fock_dim(), space.fock_dim())),
    }
}

/// Lift a transmon-factor matrix to the joint space.
pub fn qubit_operator(space: HilbertSpec, transmon: &CMatrix) -> Result<Operator> {
    if transmon.nrows() != space.transmon_levels || !transmon.is_square() {
        return Err(Error::DimensionMismatch {
            expected: space.transmon_levels,
            found: transmon.nrows(),
        });
    }
    Ok(Operator {
        space,
        matrix: transmon.kronecker(&CMatrix::identity(space.fock_dim(), space.fock_dim())),
    })
}

/// Lift a Fock-factor matrix to the joint space.
pub fn field_operator(space: HilbertSpec, field: &CMatrix) -> Result<Operator> {
    if field.nrows() != space.fock_dim() || !field.is_square() {
        return Err(Error::DimensionMismatch {
            expected: space.fock_dim(),
            found: field.nrows(),
        });
    }
    Ok(Operator {
        space,
        matrix: CMatrix::identity(space.transmon_levels, space.transmon_levels).kronecker(field),
    })
}

/// `e^{iφ a†a}`: a rotation of the field quadratures by the local-oscillator phase.
pub fn field_phase(space: HilbertSpec, phi: f64) -> Operator {
    let d = space.fock_dim();
    let diag = CMatrix::from_diagonal(&CVector::from_iterator(
        d,
        (0..d).map(|n| C64::from_polar(1.0, phi * n as f64)),
    ));
    field_operator(space, &diag).expect("dimension matches by construction")
}

/// `tr(ρ · op)`.
pub fn expectation(rho: &DensityMatrix, op: &Operator) -> Result<C64> {
    rho.space().check(&op.space)?;
    Ok(trace_of_product(rho.matrix(), &op.matrix))
}

/// `tr(A · B)` without forming the product.
pub(crate) fn trace_of_product(a: &CMatrix, b: &CMatrix) -> C64 {
    let d = a.nrows();
    let mut acc = ZERO;
    for i in 0..d {
        for k in 0..d {
            acc += a[(i, k)] * b[(k, i)];
        }
    }
    acc
}

pub fn partial_trace_field(rho: &DensityMatrix) -> ReducedState {
    let space = rho.space();
    let (tl, fd) = (space.transmon_levels, space.fock_dim());
    let m = rho.matrix();
    let mut out = CMatrix::zeros(tl, tl);
    for p in 0..tl {
        for q in 0..tl {
            out[(p, q)] = (0..fd).map(|n| m[(p * fd + n, q * fd + n)]).sum();
        }
    }
    ReducedState::from_matrix(out)
}

pub fn partial_trace_qubit(rho: &DensityMatrix) -> ReducedState {
    let space = rho.space();
    let (tl, fd) = (space.transmon_levels, space.fock_dim());
    let m = rho.matrix();
    let mut out = CMatrix::zeros(fd, fd);
    for q in 0..tl {
        out += m.view((q * fd, q * fd), (fd, fd));
    }
    ReducedState::from_matrix(out)
}
