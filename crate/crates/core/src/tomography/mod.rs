//! From histograms back to a joint qubit–field state.
//!
//! Conditional qubit populations per quadrature bin give raw moments
//! `⟨(S†)ⁿSᵐσ_i⟩` of the noisy amplitude; a vacuum reference removes the
//! amplifier noise; the resulting `⟨(a†)ⁿaᵐσ_i⟩` fix the density matrix
//! either by direct inversion or by a positive least-squares fit.

mod grid;
mod linear;
mod metrics;
mod mle;
mod moments;

pub use grid::{extract_populations, BlochGrid, MIN_COUNT};
pub use linear::{moment_operator, moments_to_rho_linear, operator_labels};
pub use metrics::{
    basis_labels, phase_optimized, qubit_photon_concurrence, report_metrics, write_matrix_csv, Metrics,
};
pub use mle::{mle_rho, physicality, MleConfig, MleOutcome};
pub use moments::{
    bootstrap_errors, combine_bases, deconvolve, identity_moments, raw_moments, Moment, MomentSet, MAX_ORDER,
};
