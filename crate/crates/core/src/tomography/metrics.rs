use std::io::Write;

use crate::error::{Error, Result};
use crate::hilbert::{
    concurrence_two_qubit, fidelity_to_pure, field_phase, purity, CMatrix, DensityMatrix, KetState, Level,
};
use crate::optimize::scan_minimize;

/// Concurrence of `ρ` restricted to `{|0⟩,|1⟩} ⊗ {|g⟩,|e⟩}` and the weight of
/// that subspace.
pub fn qubit_photon_concurrence(rho: &DensityMatrix) -> Result<(f64, f64)> {
    let space = rho.space();
    let idx = [
        space.index(Level::G, 0),
        space.index(Level::G, 1),
        space.index(Level::E, 0),
        space.index(Level::E, 1),
    ];
    let m = rho.matrix();
    let mut block = CMatrix::from_fn(4, 4, |i, j| m[(idx[i], idx[j])]);
    let weight = block.trace().re;
    if weight < 1e-6 {
        return Err(Error::NotPhysical(format!("two-qubit subspace weight {weight:.3e}")));
    }
    block /= crate::hilbert::C64::new(weight, 0.0);
    Ok((concurrence_two_qubit(&block)?, weight))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Metrics {
    pub fidelity: f64,
    pub concurrence: f64,
    /// Weight of the `{0,1}⊗{g,e}` block used for the concurrence.
    pub subspace_weight: f64,
    pub purity: f64,
    pub max_imag: f64,
    /// `P(n)` for `n = 0..=cutoff`.
    pub photon_populations: Vec<f64>,
    /// Local-oscillator phase applied before evaluation.
    pub phase: f64,
}

fn max_imag(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.im.abs()).fold(0.0, f64::max)
}

/// Apply the local-oscillator phase minimizing the largest imaginary entry,
/// then evaluate against `target`.
///
/// `φ` and `φ + π` give the same imaginary magnitudes (parity flips the
/// sign of odd coherences); the one with the higher fidelity is kept.
pub fn phase_optimized(rho: &DensityMatrix, target: &KetState) -> Result<(DensityMatrix, f64)> {
    let space = rho.space();
    space.check(&target.space())?;
    let rotate = |phi: f64| rho.transformed(&field_phase(space, phi)).expect("same space");
    let (phi, _) = scan_minimize(|phi| max_imag(rotate(phi).matrix()), 0.0, 2.0 * std::f64::consts::PI, 721);
    let a = rotate(phi);
    let b = rotate(phi + std::f64::consts::PI);
    if fidelity_to_pure(&b, target)? > fidelity_to_pure(&a, target)? {
        Ok((b, (phi + std::f64::consts::PI).rem_euclid(2.0 * std::f64::consts::PI)))
    } else {
        Ok((a, phi.rem_euclid(2.0 * std::f64::consts::PI)))
    }
}

pub fn report_metrics(rho: &DensityMatrix, target: &KetState) -> Result<Metrics> {
    let (rotated, phase) = phase_optimized(rho, target)?;
    let space = rho.space();
    let (concurrence, subspace_weight) = qubit_photon_concurrence(&rotated)?;
    let photon_populations = (0..=space.fock_cutoff())
        .map(|n| (0..space.transmon_levels()).map(|q| rotated.matrix()[(q * space.fock_dim() + n, q * space.fock_dim() + n)].re).sum())
        .collect();
    Ok(Metrics {
        fidelity: fidelity_to_pure(&rotated, target)?,
        concurrence,
        subspace_weight,
        purity: purity(&rotated),
        max_imag: max_imag(rotated.matrix()),
        photon_populations,
        phase,
    })
}

impl Metrics {
    /// `key = value` lines.
    pub fn write_summary<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "fidelity = {:.6}", self.fidelity)?;
        writeln!(w, "concurrence = {:.6}", self.concurrence)?;
        writeln!(w, "subspace_weight = {:.6}", self.subspace_weight)?;
        writeln!(w, "purity = {:.6}", self.purity)?;
        writeln!(w, "max_imag = {:.6}", self.max_imag)?;
        writeln!(w, "lo_phase = {:.6}", self.phase)?;
        for (n, p) in self.photon_populations.iter().enumerate() {
            writeln!(w, "p{n} = {p:.6}")?;
        }
        Ok(())
    }
}

/// Basis labels `g0, g1, …, e4` in matrix order.
pub fn basis_labels(rho_dim_levels: usize, fock_dim: usize) -> Vec<String> {
    let names = ['g', 'e', 'f'];
    (0..rho_dim_levels)
        .flat_map(|q| (0..fock_dim).map(move |n| format!("{}{n}", names[q])))
        .collect()
}

/// One labelled CSV matrix of the real or imaginary part.
pub fn write_matrix_csv<W: Write>(m: &CMatrix, labels: &[String], imaginary: bool, mut w: W) -> Result<()> {
    writeln!(w, ",{}", labels.join(","))?;
    for i in 0..m.nrows() {
        write!(w, "{}", labels[i])?;
        for j in 0..m.ncols() {
            let z = m[(i, j)];
            write!(w, ",{:.9}", if imaginary { z.im } else { z.re })?;
        }
        writeln!(w)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{HilbertSpec, C64};

    #[test]
    fn bell_is_maximally_entangled() {
        let rho = DensityMatrix::from_ket(&crate::dynamics::bell_target());
        let (c, w) = qubit_photon_concurrence(&rho).unwrap();
        assert!((c - 1.0).abs() < 1e-9 && (w - 1.0).abs() < 1e-12);
    }

    #[test]
    fn classical_mixture_is_separable() {
        let s = HilbertSpec::RECONSTRUCTION;
        let a = DensityMatrix::from_ket(&KetState::basis(s, Level::E, 0));
        let b = DensityMatrix::from_ket(&KetState::basis(s, Level::G, 1));
        let rho = DensityMatrix::mixture(&[(0.5, &a), (0.5, &b)]).unwrap();
        assert!(qubit_photon_concurrence(&rho).unwrap().0.abs() < 1e-9);
        let far = DensityMatrix::from_ket(&KetState::basis(s, Level::E, 3));
        assert!(qubit_photon_concurrence(&far).is_err());
    }

    #[test]
    fn phase_twist_is_removed() {
        let target = crate::dynamics::bell_target();
        let s = target.space();
        let rho = DensityMatrix::from_ket(&target)
            .transformed(&field_phase(s, std::f64::consts::PI / 5.0))
            .unwrap();
        let m = report_metrics(&rho, &target).unwrap();
        assert!(m.max_imag < 1e-9, "{}", m.max_imag);
        assert!((m.fidelity - 1.0).abs() < 1e-9);
        assert!((m.photon_populations[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn csv_layout() {
        let labels = basis_labels(2, 5);
        assert_eq!(labels[0], "g0");
        assert_eq!(labels[9], "e4");
        let mut m = CMatrix::zeros(10, 10);
        m[(0, 1)] = C64::new(0.25, -0.5);
        let mut buf = Vec::new();
        write_matrix_csv(&m, &labels, true, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 11);
        assert!(text.lines().nth(1).unwrap().starts_with("g0,0.000000000,-0.500000000"));
    }
}
