use nalgebra::SymmetricEigen;

use super::{max_abs_diff, CMatrix, CVector, HilbertSpec, Level, C64, ONE};
use crate::error::{Error, Result};

pub(crate) const HERMITIAN_TOL: f64 = 1e-9;
pub(crate) const TRACE_TOL: f64 = 1e-9;
pub(crate) const POSITIVITY_TOL: f64 = 1e-9;

/// Normalized state vector.
#[derive(Clone, Debug, PartialEq)]
pub struct KetState {
    space: HilbertSpec,
    amplitudes: CVector,
}

impl KetState {
    pub fn new(space: HilbertSpec, amplitudes: CVector) -> Result<Self> {
        if amplitudes.len() != space.dim() {
            return Err(Error::DimensionMismatch {
                expected: space.dim(),
                found: amplitudes.len(),
            });
        }
        let norm = amplitudes.norm();
        if (norm - 1.0).abs() > 1e-12 {
            return Err(Error::NotPhysical(format!("ket norm is {norm}")));
        }
        Ok(KetState { space, amplitudes })
    }

    /// Normalize the given amplitudes.
    pub fn normalized(space: HilbertSpec, amplitudes: CVector) -> Result<Self> {
        let norm = amplitudes.norm();
        if !(norm > 0.0) {
            return Err(Error::NotPhysical("zero vector".into()));
        }
        KetState::new(space, amplitudes / C64::new(norm, 0.0))
    }

    /// Builds `Σ cₖ |levelₖ, nₖ⟩`, normalized.
    pub fn from_components(space: HilbertSpec, terms: &[(Level, usize, C64)]) -> Result<Self> {
        let mut v = CVector::zeros(space.dim());
        for &(level, n, c) in terms {
            if level.index() >= space.transmon_levels() || n > space.fock_cutoff() {
                return Err(Error::InvalidArgument(format!(
                    "|{n},{level:?}⟩ is outside {space}"
                )));
            }
            v[space.index(level, n)] += c;
        }
        KetState::normalized(space, v)
    }

    pub fn basis(space: HilbertSpec, level: Level, n: usize) -> Self {
        let mut v = CVector::zeros(space.dim());
        v[space.index(level, n)] = ONE;
        KetState { space, amplitudes: v }
    }

    pub fn space(&self) -> HilbertSpec {
        self.space
    }

    pub fn amplitudes(&self) -> &CVector {
        &self.amplitudes
    }

    pub fn amplitude(&self, level: Level, n: usize) -> C64 {
        self.amplitudes[self.space.index(level, n)]
    }
}

fn hermitize(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()) * C64::new(0.5, 0.0)
}

fn real_trace(m: &CMatrix) -> f64 {
    m.trace().re
}

pub(crate) fn hermitian_eigenvalues(m: &CMatrix) -> Vec<f64> {
    let eig = SymmetricEigen::new(hermitize(m));
    let mut v: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    v.sort_by(|a, b| a.total_cmp(b));
    v
}

/// Positive semidefinite, Hermitian, unit-trace density operator.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    space: HilbertSpec,
    matrix: CMatrix,
}

impl DensityMatrix {
    /// Checks Hermiticity, unit trace and positivity at 1e-9.
    pub fn new(space: HilbertSpec, matrix: CMatrix) -> Result<Self> {
        if matrix.nrows() != space.dim() || matrix.ncols() != space.dim() {
            return Err(Error::DimensionMismatch {
                expected: space.dim(),
                found: matrix.nrows(),
            });
        }
        let herm = max_abs_diff(&matrix, &matrix.adjoint());
        if herm > HERMITIAN_TOL {
            return Err(Error::NotPhysical(format!("not Hermitian ({herm:.2e})")));
        }
        let tr = matrix.trace();
        if (tr.re - 1.0).abs() > TRACE_TOL || tr.im.abs() > TRACE_TOL {
            return Err(Error::NotPhysical(format!("trace is {tr}")));
        }
        let min = hermitian_eigenvalues(&matrix)[0];
        if min < -POSITIVITY_TOL {
            return Err(Error::NotPhysical(format!("negative eigenvalue {min:.3e}")));
        }
        Ok(DensityMatrix { space, matrix })
    }

    /// Hermitizes and trace-normalizes without an eigenvalue check; used for
    /// integrator and optimizer outputs whose positivity is established by
    /// construction or by tests.
    pub(crate) fn from_matrix_unchecked(space: HilbertSpec, matrix: CMatrix) -> Self {
        let mut m = hermitize(&matrix);
        let tr = real_trace(&m);
        m /= C64::new(tr, 0.0);
        DensityMatrix { space, matrix: m }
    }

    pub fn from_ket(ket: &KetState) -> Self {
        let v = ket.amplitudes();
        DensityMatrix {
            space: ket.space(),
            matrix: v * v.adjoint(),
        }
    }

    pub fn maximally_mixed(space: HilbertSpec) -> Self {
        let d = space.dim();
        DensityMatrix {
            space,
            matrix: CMatrix::identity(d, d) / C64::new(d as f64, 0.0),
        }
    }

    /// Convex mixture `Σ wₖ ρₖ`; weights are renormalized.
    pub fn mixture(parts: &[(f64, &DensityMatrix)]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::InvalidArgument("empty mixture".into()))?;
        let space = first.1.space;
        let mut m = CMatrix::zeros(space.dim(), space.dim());
        let mut total = 0.0;
        for (w, rho) in parts {
            space.check(&rho.space)?;
            if *w < 0.0 {
                return Err(Error::InvalidArgument("negative mixture weight".into()));
            }
            m += &rho.matrix * C64::new(*w, 0.0);
            total += w;
        }
        Ok(DensityMatrix::from_matrix_unchecked(space, m / C64::new(total, 0.0)))
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

    pub fn eigenvalues(&self) -> Vec<f64> {
        hermitian_eigenvalues(&self.matrix)
    }

    pub fn population(&self, level: Level, n: usize) -> f64 {
        let i = self.space.index(level, n);
        self.matrix[(i, i)].re
    }

    /// Conjugate by a unitary: `U ρ U†`.
    pub fn transformed(&self, unitary: &super::Operator) -> Result<Self> {
        self.space.check(&unitary.space())?;
        let u = unitary.matrix();
        Ok(DensityMatrix::from_matrix_unchecked(
            self.space,
            u * &self.matrix * u.adjoint(),
        ))
    }
}

/// Hermitian, unit-trace matrix that may have negative eigenvalues, such as a
/// linear-inversion estimate.
#[derive(Clone, Debug, PartialEq)]
pub struct RawMatrix {
    space: HilbertSpec,
    matrix: CMatrix,
}

impl RawMatrix {
    /// Hermitizes and normalizes the trace.
    pub fn new(space: HilbertSpec, matrix: CMatrix) -> Result<Self> {
        if matrix.nrows() != space.dim() || matrix.ncols() != space.dim() {
            return Err(Error::DimensionMismatch {
                expected: space.dim(),
                found: matrix.nrows(),
            });
        }
        let mut m = hermitize(&matrix);
        let tr = real_trace(&m);
        if tr.abs() < 1e-300 {
            return Err(Error::NotPhysical("zero trace".into()));
        }
        m /= C64::new(tr, 0.0);
        Ok(RawMatrix { space, matrix: m })
    }

    pub fn space(&self) -> HilbertSpec {
        self.space
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn min_eigenvalue(&self) -> f64 {
        hermitian_eigenvalues(&self.matrix)[0]
    }

    /// Succeeds only if the matrix is already physical.
    pub fn into_density(self) -> Result<DensityMatrix> {
        DensityMatrix::new(self.space, self.matrix)
    }

    /// Clip negative eigenvalues to zero and renormalize.
    pub fn project_positive(&self) -> DensityMatrix {
        let eig = SymmetricEigen::new(self.matrix.clone());
        let d = self.space.dim();
        let mut m = CMatrix::zeros(d, d);
        for (k, &lam) in eig.eigenvalues.iter().enumerate() {
            if lam > 0.0 {
                let v = eig.eigenvectors.column(k);
                m += v * v.adjoint() * C64::new(lam, 0.0);
            }
        }
        if real_trace(&m) <= 0.0 {
            return DensityMatrix::maximally_mixed(self.space);
        }
        DensityMatrix::from_matrix_unchecked(self.space, m)
    }
}

/// State of a single factor (qubit or field) after a partial trace.
#[derive(Clone, Debug, PartialEq)]
pub struct ReducedState {
    matrix: CMatrix,
}

impl ReducedState {
    pub(crate) fn from_matrix(matrix: CMatrix) -> Self {
        ReducedState { matrix }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn trace(&self) -> f64 {
        real_trace(&self.matrix)
    }

    pub fn purity(&self) -> f64 {
        super::trace_of_product(&self.matrix, &self.matrix).re
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        max_abs_diff(&self.matrix, &self.matrix.adjoint()) <= tol
    }
}
