//! Synthetic heterodyne records and their histograms.
//!
//! A shot is a triplet `(X, P, Q)`: the amplified field amplitude
//! `S = X + iP = α + ν` with `α` Husimi-distributed and `ν` amplifier noise,
//! and a dispersive readout quadrature `Q` of the qubit measured along `σ_z`
//! after a basis rotation.

mod filter;
mod histogram;
mod povm;
mod readout;
mod sampler;

use std::io::{Read, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub use filter::{matched_filter, matched_filter_weights};
pub use histogram::{BinAxis, Histogram3D};
pub use povm::povm_matrix;
pub use readout::{discrimination_fidelity, readout_reference_histograms, Histogram1D, ReadoutModel};
pub use sampler::{sample_shots, ShotSampler};

use crate::error::{Error, Result};
use crate::hilbert::DensityMatrix;
use crate::Basis;

#[derive(Clone, Debug, PartialEq)]
pub struct DetectorConfig {
    pub eta: f64,
    pub readout_mu_g: f64,
    pub readout_mu_e: f64,
    pub readout_sigma: f64,
    pub readout_decay_mix: f64,
    /// X and P bins cover `[−hist_range_xp, hist_range_xp)`.
    pub hist_range_xp: f64,
    pub hist_bins_xp: usize,
    pub hist_bins_q: usize,
    /// `None` means midpoint ± 5σ.
    pub hist_range_q: Option<(f64, f64)>,
    pub seed: u64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            eta: 0.15,
            readout_mu_g: -1.0,
            readout_mu_e: 1.0,
            readout_sigma: 1.2,
            readout_decay_mix: 0.35,
            hist_range_xp: 12.0,
            hist_bins_xp: 128,
            hist_bins_q: 8,
            hist_range_q: None,
            seed: 0x5eed,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: String| Err(Error::InvalidArgument(what));
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return bad(format!("eta = {} outside (0, 1]", self.eta));
        }
        if self.hist_bins_xp < 2 || self.hist_bins_q < 2 {
            return bad("histograms need at least 2 bins per axis".into());
        }
        if self.readout_mu_g == self.readout_mu_e {
            return bad("readout means must differ".into());
        }
        if !(self.readout_sigma > 0.0) {
            return bad(format!("readout sigma {}", self.readout_sigma));
        }
        if !(0.0..=1.0).contains(&self.readout_decay_mix) {
            return bad(format!("decay mix {} outside [0, 1]", self.readout_decay_mix));
        }
        if !(self.hist_range_xp > 0.0) || !self.hist_range_xp.is_finite() {
            return bad(format!("X/P range {}", self.hist_range_xp));
        }
        let (lo, hi) = self.q_range();
        if !(hi > lo) {
            return bad(format!("Q range [{lo}, {hi})"));
        }
        Ok(())
    }

    /// Added-noise photon number `N = 1/η − 1`.
    pub fn added_noise(&self) -> f64 {
        1.0 / self.eta - 1.0
    }

    pub fn q_range(&self) -> (f64, f64) {
        self.hist_range_q.unwrap_or_else(|| {
            let mid = 0.5 * (self.readout_mu_g + self.readout_mu_e);
            (mid - 5.0 * self.readout_sigma, mid + 5.0 * self.readout_sigma)
        })
    }

    pub fn q_axis(&self) -> Result<BinAxis> {
        let (lo, hi) = self.q_range();
        BinAxis::uniform(lo, hi, self.hist_bins_q)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Shot {
    pub basis: Basis,
    pub x: f64,
    pub p: f64,
    pub q: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ShotBatch {
    pub basis: Basis,
    pub shots: Vec<Shot>,
}

impl ShotBatch {
    pub fn len(&self) -> usize {
        self.shots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shots.is_empty()
    }

    /// Shot log: per shot one basis byte then `X, P, Q` as little-endian f64.
    pub fn write_log<W: Write>(&self, mut w: W) -> Result<()> {
        let mut buf = Vec::with_capacity(self.shots.len() * 25);
        for s in &self.shots {
            buf.push(s.basis.tag());
            for v in [s.x, s.p, s.q] {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_log<R: Read>(mut r: R) -> Result<Self> {
        let mut raw = Vec::new();
        r.read_to_end(&mut raw)?;
        if raw.is_empty() || raw.len() % 25 != 0 {
            return Err(Error::Format(format!("shot log of {} bytes", raw.len())));
        }
        let mut shots = Vec::with_capacity(raw.len() / 25);
        for rec in raw.chunks_exact(25) {
            let f = |i: usize| f64::from_le_bytes(rec[1 + 8 * i..9 + 8 * i].try_into().expect("8 bytes"));
            shots.push(Shot {
                basis: Basis::from_tag(rec[0])?,
                x: f(0),
                p: f(1),
                q: f(2),
            });
        }
        let basis = shots[0].basis;
        if let Some(bad) = shots.iter().find(|s| s.basis != basis) {
            return Err(Error::BasisMismatch {
                expected: basis,
                found: bad.basis,
            });
        }
        Ok(ShotBatch { basis, shots })
    }
}

/// Independent random streams share the configured seed and differ in purpose.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RunTag {
    Signal = 0,
    VacuumReference = 1,
    ReadoutReference = 2,
}

/// RNG for one `(run, basis, batch)` stream.
pub fn stream_rng(seed: u64, run: RunTag, basis: Basis, batch: u32) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let b = Basis::ALL.iter().position(|&x| x == basis).expect("basis listed") as u64;
    rng.set_stream(((run as u64) << 40) | (b << 32) | batch as u64);
    rng
}

/// Histograms for `batches` independent batches of `shots_per_batch` shots.
///
/// Batches run in parallel on the current rayon pool; each owns its stream,
/// so the result does not depend on the worker count.
pub fn acquire(
    rho: &DensityMatrix,
    basis: Basis,
    config: &DetectorConfig,
    run: RunTag,
    shots_per_batch: usize,
    batches: usize,
) -> Result<Vec<Histogram3D>> {
    config.validate()?;
    if shots_per_batch == 0 || batches == 0 {
        return Err(Error::InvalidArgument("need at least one shot and one batch".into()));
    }
    let sampler = ShotSampler::new(rho, basis, config)?;
    let template = Histogram3D::for_config(basis, config)?;
    (0..batches)
        .into_par_iter()
        .map(|b| {
            let mut rng = stream_rng(config.seed, run, basis, b as u32);
            let mut hist = template.empty_like();
            sampler.fill(&mut rng, shots_per_batch, &mut hist)?;
            Ok(hist)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{HilbertSpec, KetState, Level};

    #[test]
    fn default_q_range_is_five_sigma_about_midpoint() {
        let c = DetectorConfig::default();
        assert_eq!(c.q_range(), (-6.0, 6.0));
        assert!(c.validate().is_ok());
        let bad = DetectorConfig {
            readout_mu_e: -1.0,
            ..c.clone()
        };
        assert!(bad.validate().is_err());
        assert!(DetectorConfig { eta: 0.0, ..c.clone() }.validate().is_err());
        assert!(DetectorConfig { hist_bins_q: 1, ..c }.validate().is_err());
    }

    #[test]
    fn shot_log_round_trip() {
        let s = HilbertSpec::RECONSTRUCTION;
        let rho = DensityMatrix::from_ket(&KetState::basis(s, Level::G, 0));
        let batch = sample_shots(&rho, Basis::Y, 50, &DetectorConfig::default()).unwrap();
        let mut buf = Vec::new();
        batch.write_log(&mut buf).unwrap();
        assert_eq!(buf.len(), 50 * 25);
        assert_eq!(ShotBatch::read_log(&buf[..]).unwrap(), batch);
        assert!(ShotBatch::read_log(&buf[..24]).is_err());
    }

    #[test]
    fn streams_are_distinct() {
        use rand::Rng;
        let a: u64 = stream_rng(1, RunTag::Signal, Basis::X, 0).random();
        let b: u64 = stream_rng(1, RunTag::Signal, Basis::X, 1).random();
        let c: u64 = stream_rng(1, RunTag::VacuumReference, Basis::X, 0).random();
        let d: u64 = stream_rng(1, RunTag::Signal, Basis::X, 0).random();
        assert!(a != b && a != c);
        assert_eq!(a, d);
    }
}
