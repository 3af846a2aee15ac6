use super::moments::MomentSet;
use crate::error::{Error, Result};
use crate::hilbert::{normal_ordered, pauli, CMatrix, HilbertSpec, RawMatrix, C64};
use crate::Sigma;

/// `(a†)ⁿ aᵐ σ_i` on `space`.
pub fn moment_operator(space: HilbertSpec, n: usize, m: usize, sigma: Sigma) -> CMatrix {
    normal_ordered(space, n, m).matrix() * pauli(space, sigma).matrix()
}

/// Labels `(n, m, σ)` of the operators spanning the qubit⊗field matrices.
pub fn operator_labels(space: HilbertSpec) -> Vec<(usize, usize, Sigma)> {
    let c = space.fock_cutoff();
    let mut out = Vec::with_capacity(4 * (c + 1) * (c + 1));
    for n in 0..=c {
        for m in 0..=c {
            for s in Sigma::ALL {
                out.push((n, m, s));
            }
        }
    }
    out
}

/// Solve `tr(B_k ρ) = ⟨B_k⟩` for all `B_k = (a†)ⁿaᵐσ_i` with `n, m ≤ cutoff`.
///
/// The system is square: the operators form a basis of the `d × d` matrices.
/// The solution is Hermitized and trace-normalized but may be non-positive.
pub fn moments_to_rho_linear(moments: &MomentSet, space: HilbertSpec) -> Result<RawMatrix> {
    if space.transmon_levels() != 2 {
        return Err(Error::InvalidSpace("linear inversion needs a two-level qubit".into()));
    }
    let d = space.dim();
    let labels = operator_labels(space);
    let mut a = CMatrix::zeros(d * d, d * d);
    let mut rhs = nalgebra::DVector::<C64>::zeros(d * d);
    for (k, &(n, m, s)) in labels.iter().enumerate() {
        let b = moment_operator(space, n, m, s);
        // tr(Bρ) = Σ_ij B_ji ρ_ij
        for i in 0..d {
            for j in 0..d {
                a[(k, i * d + j)] = b[(j, i)];
            }
        }
        rhs[k] = moments.value(n, m, s)?;
    }
    let lu = a.lu();
    let x = lu
        .solve(&rhs)
        .ok_or_else(|| Error::Singular("moment operator basis is degenerate".into()))?;
    let rho = CMatrix::from_fn(d, d, |i, j| x[i * d + j]);
    RawMatrix::new(space, rho)
}
