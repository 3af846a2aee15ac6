//! Prepare → sample → histogram → reconstruct, for one experiment.

use std::fmt;
use std::str::FromStr;

use crate::detection::{acquire, readout_reference_histograms, DetectorConfig, Histogram1D, Histogram3D, RunTag};
use crate::dynamics::{
    bell_target, prepare_bell, prepare_sequence, prepare_two_photon, two_photon_target, ExperimentParams, PulseSequence,
};
use crate::error::{Error, Result};
use crate::hilbert::{DensityMatrix, HilbertSpec, KetState, Level, RawMatrix};
use crate::tomography::{
    bootstrap_errors, combine_bases, deconvolve, extract_populations, identity_moments, mle_rho, moments_to_rho_linear,
    raw_moments, report_metrics, BlochGrid, Metrics, MleConfig, MleOutcome, MomentSet, MIN_COUNT,
};
use crate::Basis;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Experiment {
    Bell,
    TwoPhoton,
    ReferenceG,
    ReferenceE,
    VacuumReference,
}

impl Experiment {
    pub fn label(self) -> &'static str {
        match self {
            Experiment::Bell => "bell",
            Experiment::TwoPhoton => "two_photon",
            Experiment::ReferenceG => "reference_g",
            Experiment::ReferenceE => "reference_e",
            Experiment::VacuumReference => "vacuum_reference",
        }
    }

    /// Ideal state on the reconstruction space.
    pub fn target(self) -> KetState {
        let s = HilbertSpec::RECONSTRUCTION;
        match self {
            Experiment::Bell => bell_target(),
            Experiment::TwoPhoton => two_photon_target(),
            Experiment::ReferenceE => KetState::basis(s, Level::E, 0),
            Experiment::ReferenceG | Experiment::VacuumReference => KetState::basis(s, Level::G, 0),
        }
    }

    /// Prepared state on the reconstruction space and the ideal target.
    pub fn prepare(self, params: &ExperimentParams, ideal: bool) -> Result<(DensityMatrix, KetState)> {
        self.prepare_with(params, ideal, None)
    }

    /// As [`Experiment::prepare`], with `sequence` replacing the default
    /// preparation sequence. Reference experiments take no sequence.
    pub fn prepare_with(
        self,
        params: &ExperimentParams,
        ideal: bool,
        sequence: Option<&PulseSequence>,
    ) -> Result<(DensityMatrix, KetState)> {
        let target = self.target();
        let rho = match (self, sequence) {
            (Experiment::Bell | Experiment::TwoPhoton, Some(seq)) => prepare_sequence(seq, params, ideal, &target)?,
            (Experiment::Bell, None) => prepare_bell(params, ideal)?,
            (Experiment::TwoPhoton, None) => prepare_two_photon(params, ideal)?,
            (_, Some(_)) => {
                return Err(Error::InvalidArgument(format!("experiment {self} takes no pulse sequence")));
            }
            (_, None) => DensityMatrix::from_ket(&target),
        };
        Ok((rho, target))
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [
            Experiment::Bell,
            Experiment::TwoPhoton,
            Experiment::ReferenceG,
            Experiment::ReferenceE,
            Experiment::VacuumReference,
        ]
        .into_iter()
        .find(|e| e.label() == s.trim())
        .ok_or_else(|| Error::InvalidArgument(format!("unknown experiment {s:?}")))
    }
}

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub experiment: Experiment,
    pub params: ExperimentParams,
    pub detector: DetectorConfig,
    pub shots_per_basis: usize,
    pub batches: usize,
    /// Disable all decoherence during preparation.
    pub ideal: bool,
    pub max_order: usize,
    pub mle: MleConfig,
    /// Replaces the experiment's default preparation sequence.
    pub sequence: Option<PulseSequence>,
}

impl RunConfig {
    pub fn new(experiment: Experiment) -> Self {
        RunConfig {
            experiment,
            params: ExperimentParams::default(),
            detector: DetectorConfig::default(),
            shots_per_basis: 1_000_000,
            batches: 16,
            ideal: false,
            max_order: 8,
            mle: MleConfig::default(),
            sequence: None,
        }
    }

    pub fn validate(&self) -> Result<Vec<String>> {
        self.detector.validate()?;
        if self.batches < 2 {
            return Err(Error::InvalidArgument("need at least 2 batches".into()));
        }
        if self.shots_per_basis < self.batches * 100 {
            return Err(Error::InvalidArgument(format!(
                "shots_per_basis = {} is below 100 per batch",
                self.shots_per_basis
            )));
        }
        if self.sequence.is_some() && !matches!(self.experiment, Experiment::Bell | Experiment::TwoPhoton) {
            return Err(Error::InvalidArgument(format!(
                "experiment {} takes no pulse sequence",
                self.experiment
            )));
        }
        if self.max_order > crate::tomography::MAX_ORDER {
            return Err(Error::InvalidArgument(format!("max_order {}", self.max_order)));
        }
        self.params.validate()
    }

    pub fn shots_per_batch(&self) -> usize {
        self.shots_per_basis / self.batches
    }
}

/// Raw identity moments of a vacuum-input run, per batch and pooled.
#[derive(Clone, Debug)]
pub struct VacuumReference {
    pub batches: Vec<MomentSet>,
    pub pooled: MomentSet,
    pub histogram: Histogram3D,
}

/// Vacuum-input run with as many shots as all three signal bases together.
pub fn vacuum_reference(detector: &DetectorConfig, shots_per_batch: usize, batches: usize, max_order: usize) -> Result<VacuumReference> {
    let (rho, _) = Experiment::VacuumReference.prepare(&ExperimentParams::default(), true)?;
    let hists = acquire(&rho, Basis::Z, detector, RunTag::VacuumReference, 3 * shots_per_batch, batches)?;
    let per_batch = hists
        .iter()
        .map(|h| identity_moments(h, max_order))
        .collect::<Result<Vec<_>>>()?;
    let histogram = Histogram3D::merge_all(&hists)?;
    Ok(VacuumReference {
        pooled: identity_moments(&histogram, max_order)?,
        batches: per_batch,
        histogram,
    })
}

#[derive(Clone, Debug)]
pub struct RunResult {
    pub prepared: DensityMatrix,
    pub target: KetState,
    /// Merged histogram per basis, in `Basis::ALL` order.
    pub histograms: Vec<Histogram3D>,
    /// Populations with the display threshold, per basis.
    pub grids: Vec<BlochGrid>,
    pub readout_g: Histogram1D,
    pub readout_e: Histogram1D,
    /// Raw signal moments with batch errors.
    pub raw: MomentSet,
    /// Deconvolved moments with batch errors.
    pub moments: MomentSet,
    /// Same values with errors propagated in quadrature from raw batch errors.
    pub moments_propagated: MomentSet,
    pub linear: RawMatrix,
    pub mle: MleOutcome,
    pub metrics: Metrics,
}

fn batch_std(sets: &[MomentSet], max_order: usize) -> Result<MomentSet> {
    let b = sets.len() as f64;
    let mut out = MomentSet::new(max_order)?;
    for (key, _) in sets[0].iter() {
        let vals = sets
            .iter()
            .map(|s| s.value(key.0, key.1, key.2))
            .collect::<Result<Vec<_>>>()?;
        let mean = vals.iter().sum::<crate::hilbert::C64>() / b;
        let var = vals.iter().map(|v| (v - mean).norm_sqr()).sum::<f64>() / (b - 1.0);
        out.insert(
            key.0,
            key.1,
            key.2,
            crate::tomography::Moment {
                value: mean,
                std_error: (var / b).sqrt(),
            },
        )?;
    }
    Ok(out)
}

/// Runs one experiment. `reference` may come from a cache; it is computed
/// when absent and must match the detector and batch layout otherwise.
pub fn run(config: &RunConfig, reference: Option<&VacuumReference>) -> Result<RunResult> {
    config.validate()?;
    let det = &config.detector;
    let order = config.max_order;
    let per_batch = config.shots_per_batch();
    let (prepared, target) = config.experiment.prepare_with(&config.params, config.ideal, config.sequence.as_ref())?;

    let computed;
    let reference = match reference {
        Some(r) => r,
        None => {
            computed = vacuum_reference(det, per_batch, config.batches, order)?;
            &computed
        }
    };
    if reference.batches.len() != config.batches || reference.pooled.max_order() < order {
        return Err(Error::InvalidArgument("vacuum reference does not match the run layout".into()));
    }

    let (readout_g, readout_e) = readout_reference_histograms(det, config.shots_per_basis)?;

    let mut per_basis_batches = Vec::with_capacity(3);
    let mut histograms = Vec::with_capacity(3);
    for basis in Basis::ALL {
        let hists = acquire(&prepared, basis, det, RunTag::Signal, per_batch, config.batches)?;
        histograms.push(Histogram3D::merge_all(&hists)?);
        per_basis_batches.push(hists);
    }

    let basis_raw = |hist: &Histogram3D| -> Result<MomentSet> {
        let grid = extract_populations(hist, &readout_g, &readout_e, 1)?;
        raw_moments(hist, &grid, order)
    };
    let combine = |hists: [&Histogram3D; 3]| -> Result<MomentSet> {
        let sets = Basis::ALL
            .iter()
            .zip(hists)
            .map(|(&b, h)| Ok((b, basis_raw(h)?)))
            .collect::<Result<Vec<_>>>()?;
        combine_bases(&sets)
    };

    let mut raw_batches = Vec::with_capacity(config.batches);
    for b in 0..config.batches {
        raw_batches.push(combine([
            &per_basis_batches[0][b],
            &per_basis_batches[1][b],
            &per_basis_batches[2][b],
        ])?);
    }
    let pairs: Vec<(MomentSet, MomentSet)> = raw_batches
        .iter()
        .cloned()
        .zip(reference.batches.iter().cloned())
        .collect();
    let boot = bootstrap_errors(&pairs, order)?;

    let raw_pooled = combine([&histograms[0], &histograms[1], &histograms[2]])?;
    let raw = raw_pooled.with_errors_from(&batch_std(&raw_batches, order)?)?;
    let ref_pooled = reference
        .pooled
        .with_errors_from(&batch_std(&reference.batches, reference.pooled.max_order())?)?;
    let moments_propagated = deconvolve(&raw, &ref_pooled, order)?;
    let moments = moments_propagated.with_errors_from(&boot)?;

    let space = HilbertSpec::RECONSTRUCTION;
    let linear = moments_to_rho_linear(&moments, space)?;
    let mle = match mle_rho(&moments, space, &config.mle) {
        Ok(out) => out,
        Err(Error::MleNotConverged(out)) => *out,
        Err(e) => return Err(e),
    };
    let metrics = report_metrics(&mle.rho, &target)?;
    let grids = histograms
        .iter()
        .map(|h| extract_populations(h, &readout_g, &readout_e, MIN_COUNT))
        .collect::<Result<Vec<_>>>()?;

    Ok(RunResult {
        prepared,
        target,
        histograms,
        grids,
        readout_g,
        readout_e,
        raw,
        moments,
        moments_propagated,
        linear,
        mle,
        metrics,
    })
}
