//! Simulation and reconstruction of entanglement between a superconducting
//! qubit and an itinerant microwave photon.
//!
//! The crate covers the whole chain: Lindblad dynamics of the transmon and
//! resonator during state preparation, noisy heterodyne detection of the
//! emitted field together with a dispersive qubit readout, histogram
//! accumulation, and reconstruction of the joint state from moments.

pub mod detection;
pub mod dynamics;
pub mod error;
pub mod hilbert;
pub mod optimize;
pub mod pipeline;
pub mod tomography;

pub use detection::{DetectorConfig, Histogram3D, Shot, ShotBatch};
pub use dynamics::{Basis, ExperimentParams, PulseSequence};
pub use error::{Error, Result};
pub use hilbert::{DensityMatrix, HilbertSpec, KetState, Sigma};
pub use pipeline::{run, Experiment, RunConfig, RunResult, VacuumReference};
pub use tomography::{BlochGrid, Metrics, MomentSet};
