use nalgebra::SymmetricEigen;

use super::states::{hermitian_eigenvalues, POSITIVITY_TOL};
use super::{trace_of_product, CMatrix, DensityMatrix, KetState, Sigma, C64};
use crate::error::{Error, Result};

/// `⟨target|ρ|target⟩`.
pub fn fidelity_to_pure(rho: &DensityMatrix, target: &KetState) -> Result<f64> {
    rho.space().check(&target.space())?;
    let v = target.amplitudes();
    let f = (v.adjoint() * rho.matrix() * v)[(0, 0)];
    if f.im.abs() > 1e-9 {
        return Err(Error::NotPhysical(format!(
            "fidelity has imaginary part {:.3e}",
            f.im
        )));
    }
    Ok(f.re.clamp(0.0, 1.0))
}

pub fn purity(rho: &DensityMatrix) -> f64 {
    trace_of_product(rho.matrix(), rho.matrix()).re
}

/// Wootters concurrence of a two-qubit density matrix.
///
/// The square roots of the eigenvalues of `ρ (σ_y⊗σ_y) ρ* (σ_y⊗σ_y)` equal
/// the singular-value-like spectrum of `√ρ ρ̃ √ρ`, which is Hermitian; that
/// form is used here.
pub fn concurrence_two_qubit(rho4: &CMatrix) -> Result<f64> {
    if rho4.nrows() != 4 || rho4.ncols() != 4 {
        return Err(Error::DimensionMismatch {
            expected: 4,
            found: rho4.nrows(),
        });
    }
    let eig = SymmetricEigen::new((rho4 + rho4.adjoint()) * C64::new(0.5, 0.0));
    if let Some(min) = eig.eigenvalues.iter().copied().reduce(f64::min) {
        if min < -POSITIVITY_TOL {
            return Err(Error::NotPhysical(format!("negative eigenvalue {min:.3e}")));
        }
    }
    let mut sqrt_rho = CMatrix::zeros(4, 4);
    for (k, &lam) in eig.eigenvalues.iter().enumerate() {
        let v = eig.eigenvectors.column(k);
        sqrt_rho += v * v.adjoint() * C64::new(lam.max(0.0).sqrt(), 0.0);
    }
    let yy = Sigma::Y.matrix().kronecker(&Sigma::Y.matrix());
    let tilde = &yy * rho4.conjugate() * &yy;
    let r = &sqrt_rho * tilde * &sqrt_rho;
    let mut lambdas: Vec<f64> = hermitian_eigenvalues(&r)
        .into_iter()
        .map(|x| x.max(0.0).sqrt())
        .collect();
    lambdas.sort_by(|a, b| b.total_cmp(a));
    Ok((lambdas[0] - lambdas[1] - lambdas[2] - lambdas[3]).max(0.0))
}
