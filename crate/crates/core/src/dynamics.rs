//! Pulse sequences for joint qubit–photon state preparation.
//!
//! Sequences are piecewise-constant Hamiltonians integrated with
//! [`lindblad_evolve`]. The cavity field at the end of preparation is taken
//! as the state of the propagating mode ([`emit_snapshot`]); cavity decay
//! only acts during idle segments.

use std::f64::consts::{FRAC_PI_2, PI, SQRT_2};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::hilbert::{
    annihilation, field_phase, fidelity_to_pure, lindblad_evolve, pauli, qubit_block,
    qubit_operator, transmon_lowering, CMatrix, Collapse, DensityMatrix, HilbertSpec, KetState,
    Level, Operator, Sigma, C64, DEFAULT_DT,
};
use crate::optimize::scan_minimize;

/// Physical rates and timings. Rates are angular (rad/s) or inverse seconds.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentParams {
    pub g_coupling: f64,
    pub kappa: f64,
    pub t1: f64,
    pub t2_star: f64,
    pub eta: f64,
    pub qubit_wait: f64,
    pub pi_pulse_len: f64,
    /// Dispersive shift; kept for the record, the readout model does not use it.
    pub chi: f64,
    pub prep_fock_cutoff: usize,
    pub dt: f64,
}

impl Default for ExperimentParams {
    fn default() -> Self {
        ExperimentParams {
            g_coupling: 2.0 * PI * 65e6,
            kappa: 1.0 / 25e-9,
            t1: 1.0e-6,
            t2_star: 220e-9,
            eta: 0.15,
            qubit_wait: 60e-9,
            pi_pulse_len: 10e-9,
            chi: 2.0 * PI * 2.1e6,
            prep_fock_cutoff: 6,
            dt: DEFAULT_DT,
        }
    }
}

impl ExperimentParams {
    /// Hard errors for invalid values; returns warnings when the timescale
    /// ordering `1/g < 1/κ < min(T1, T2*)` does not hold.
    pub fn validate(&self) -> Result<Vec<String>> {
        let positive = [
            ("g_coupling", self.g_coupling),
            ("kappa", self.kappa),
            ("t1", self.t1),
            ("t2_star", self.t2_star),
            ("pi_pulse_len", self.pi_pulse_len),
            ("dt", self.dt),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return Err(Error::InvalidArgument(format!("eta must be in (0, 1], got {}", self.eta)));
        }
        if !(self.qubit_wait >= 0.0) {
            return Err(Error::InvalidArgument("qubit_wait must be non-negative".into()));
        }
        if self.t2_star > 2.0 * self.t1 {
            return Err(Error::InvalidArgument("T2* cannot exceed 2 T1".into()));
        }
        if self.prep_fock_cutoff < 2 {
            return Err(Error::InvalidArgument("prep_fock_cutoff must be at least 2".into()));
        }
        let mut warnings = Vec::new();
        if 1.0 / self.g_coupling >= 1.0 / self.kappa {
            warnings.push("1/g is not shorter than 1/kappa".to_string());
        }
        if 1.0 / self.kappa >= self.t1.min(self.t2_star) {
            warnings.push("1/kappa is not shorter than min(T1, T2*)".to_string());
        }
        Ok(warnings)
    }

    /// Pure-dephasing rate `1/T2* − 1/(2 T1)`.
    pub fn dephasing_rate(&self) -> f64 {
        (1.0 / self.t2_star - 0.5 / self.t1).max(0.0)
    }
}

/// Transmon transition addressed by a drive or swap.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Transition {
    GE,
    GF,
    EF,
}

impl Transition {
    fn levels(self) -> (usize, usize) {
        match self {
            Transition::GE => (0, 1),
            Transition::GF => (0, 2),
            Transition::EF => (1, 2),
        }
    }

    fn check(self, space: HilbertSpec) -> Result<()> {
        if self.levels().1 >= space.transmon_levels() {
            return Err(Error::InvalidArgument(format!(
                "transition {self} needs three transmon levels"
            )));
        }
        Ok(())
    }
}

impl fmt::Display for Transition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Transition::GE => "g-e",
            Transition::GF => "g-f",
            Transition::EF => "e-f",
        })
    }
}

impl FromStr for Transition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "g-e" | "ge" => Ok(Transition::GE),
            "g-f" | "gf" => Ok(Transition::GF),
            "e-f" | "ef" => Ok(Transition::EF),
            other => Err(Error::InvalidArgument(format!("unknown transition {other:?}"))),
        }
    }
}

/// Drive axis in the rotating frame.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
}

impl Axis {
    fn phase(self) -> f64 {
        match self {
            Axis::X => 0.0,
            Axis::Y => FRAC_PI_2,
        }
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Axis::X => "x",
            Axis::Y => "y",
        })
    }
}

impl FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "x" | "X" => Ok(Axis::X),
            "y" | "Y" => Ok(Axis::Y),
            other => Err(Error::InvalidArgument(format!("unknown drive axis {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Segment {
    /// Resonant Rabi drive rotating the transition by `angle` in `duration`.
    CarrierPulse {
        transition: Transition,
        angle: f64,
        axis: Axis,
        duration: f64,
    },
    /// Resonant Jaynes–Cummings exchange with the cavity.
    ResonantSwap { transition: Transition, duration: f64 },
    /// Free evolution; the only segment with cavity decay.
    Idle { duration: f64 },
}

impl Segment {
    pub fn duration(&self) -> f64 {
        match *self {
            Segment::CarrierPulse { duration, .. }
            | Segment::ResonantSwap { duration, .. }
            | Segment::Idle { duration } => duration,
        }
    }

    fn uses_f(&self) -> bool {
        match *self {
            Segment::CarrierPulse { transition, .. } | Segment::ResonantSwap { transition, .. } => {
                transition != Transition::GE
            }
            Segment::Idle { .. } => false,
        }
    }
}

/// Radians, or `pi` optionally signed and divided by a number (`-pi/2`).
fn parse_angle(s: &str) -> Result<f64> {
    let bad = || Error::InvalidArgument(format!("bad angle {s:?}"));
    let (sign, rest) = match s.strip_prefix('-') {
        Some(r) => (-1.0, r),
        None => (1.0, s),
    };
    let value = match rest.strip_prefix("pi") {
        Some("") => PI,
        Some(d) => PI / d.strip_prefix('/').ok_or_else(bad)?.parse::<f64>().map_err(|_| bad())?,
        None => rest.parse::<f64>().map_err(|_| bad())?,
    };
    Some(sign * value).filter(|v| v.is_finite()).ok_or_else(bad)
}

/// Records: `pulse <transition> <angle> <axis> <duration>`,
/// `swap <transition> <duration>`, `idle <duration>`; durations in seconds.
impl FromStr for Segment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let fields: Vec<&str> = s.split_whitespace().collect();
        let duration = |v: &str| {
            v.parse::<f64>()
                .map_err(|_| Error::InvalidArgument(format!("bad duration {v:?} in segment {s:?}")))
        };
        match fields.as_slice() {
            ["pulse", t, angle, axis, d] => Ok(Segment::CarrierPulse {
                transition: t.parse()?,
                angle: parse_angle(angle)?,
                axis: axis.parse()?,
                duration: duration(d)?,
            }),
            ["swap", t, d] => Ok(Segment::ResonantSwap {
                transition: t.parse()?,
                duration: duration(d)?,
            }),
            ["idle", d] => Ok(Segment::Idle { duration: duration(d)? }),
            _ => Err(Error::InvalidArgument(format!("unrecognized segment {s:?}"))),
        }
    }
}

impl fmt::Display for Segment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Segment::CarrierPulse {
                transition,
                angle,
                axis,
                duration,
            } => write!(f, "pulse {transition} {angle:e} {axis} {duration:e}"),
            Segment::ResonantSwap { transition, duration } => write!(f, "swap {transition} {duration:e}"),
            Segment::Idle { duration } => write!(f, "idle {duration:e}"),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PulseSequence {
    segments: Vec<Segment>,
}

impl PulseSequence {
    pub fn new(segments: Vec<Segment>) -> Result<Self> {
        for s in &segments {
            if !(s.duration() >= 0.0) || !s.duration().is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "segment duration {} is invalid",
                    s.duration()
                )));
            }
        }
        Ok(PulseSequence { segments })
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn total_duration(&self) -> f64 {
        self.segments.iter().map(Segment::duration).sum()
    }

    /// Whether any segment addresses the transmon f level.
    pub fn uses_f(&self) -> bool {
        self.segments.iter().any(Segment::uses_f)
    }

    /// π-pulse on g-e followed by a π/(4g) swap.
    pub fn bell(params: &ExperimentParams) -> Self {
        PulseSequence {
            segments: vec![
                Segment::CarrierPulse {
                    transition: Transition::GE,
                    angle: PI,
                    axis: Axis::X,
                    duration: params.pi_pulse_len,
                },
                Segment::ResonantSwap {
                    transition: Transition::GE,
                    duration: PI / (4.0 * params.g_coupling),
                },
            ],
        }
    }

    /// g-f π-pulse, full e-f swap, half g-e swap on the two-photon
    /// manifold, then a π/2 rotation about −y on g-e.
    pub fn two_photon(params: &ExperimentParams) -> Self {
        let g = params.g_coupling;
        PulseSequence {
            segments: vec![
                Segment::CarrierPulse {
                    transition: Transition::GF,
                    angle: PI,
                    axis: Axis::X,
                    duration: params.pi_pulse_len,
                },
                Segment::ResonantSwap {
                    transition: Transition::EF,
                    duration: PI / (2.0 * SQRT_2 * g),
                },
                Segment::ResonantSwap {
                    transition: Transition::GE,
                    duration: PI / (4.0 * SQRT_2 * g),
                },
                Segment::CarrierPulse {
                    transition: Transition::GE,
                    angle: -FRAC_PI_2,
                    axis: Axis::Y,
                    duration: params.pi_pulse_len,
                },
            ],
        }
    }
}

/// Segment records separated by `;`, in order.
impl FromStr for PulseSequence {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let segments = s
            .split(';')
            .map(str::trim)
            .filter(|r| !r.is_empty())
            .map(str::parse)
            .collect::<Result<Vec<Segment>>>()?;
        if segments.is_empty() {
            return Err(Error::InvalidArgument("empty pulse sequence".into()));
        }
        PulseSequence::new(segments)
    }
}

impl fmt::Display for PulseSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, s) in self.segments.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{s}")?;
        }
        Ok(())
    }
}

/// Unit-weight transmon transition operator `|lower⟩⟨upper|` on the joint space.
fn transition_lowering(space: HilbertSpec, transition: Transition, weighted: bool) -> Operator {
    let (lo, hi) = transition.levels();
    let tl = space.transmon_levels();
    let mut m = CMatrix::zeros(tl, tl);
    let w = if weighted && transition == Transition::EF {
        SQRT_2
    } else {
        1.0
    };
    m[(lo, hi)] = C64::new(w, 0.0);
    qubit_operator(space, &m).expect("transmon factor has the space's dimension")
}

/// Resonant Jaynes–Cummings Hamiltonian `g (a† L + a L†)` in the rotating frame.
///
/// `L` carries the harmonic matrix element: 1 for g-e, √2 for e-f.
pub fn jc_hamiltonian(space: HilbertSpec, transition: Transition, g: f64) -> Result<Operator> {
    if transition == Transition::GF {
        return Err(Error::InvalidArgument("no direct g-f cavity exchange".into()));
    }
    transition.check(space)?;
    let a = annihilation(space);
    let l = transition_lowering(space, transition, true);
    let h = &(&a.dagger() * &l) + &(&a * &l.dagger());
    Ok(h.scale(C64::new(g, 0.0)))
}

/// `Ω/2 (σ⁺ e^{iφ} + σ⁻ e^{−iφ})` on the given transition.
fn drive_hamiltonian(space: HilbertSpec, transition: Transition, rabi: f64, phase: f64) -> Result<Operator> {
    transition.check(space)?;
    let lower = transition_lowering(space, transition, false);
    let raise = lower.dagger().scale(C64::from_polar(1.0, phase));
    let h = &raise + &raise.dagger();
    Ok(h.scale(C64::new(0.5 * rabi, 0.0)))
}

fn qubit_collapse(space: HilbertSpec, params: &ExperimentParams) -> Vec<Collapse> {
    vec![
        Collapse::new(transmon_lowering(space), 1.0 / params.t1),
        Collapse::new(
            pauli(space, Sigma::Z).scale(C64::new(1.0 / SQRT_2, 0.0)),
            params.dephasing_rate(),
        ),
    ]
}

/// Run `seq` from `|0, g⟩`. With `ideal` set, all decoherence is off.
pub fn run_sequence(
    seq: &PulseSequence,
    params: &ExperimentParams,
    space: HilbertSpec,
    ideal: bool,
) -> Result<DensityMatrix> {
    let mut rho = DensityMatrix::from_ket(&KetState::basis(space, Level::G, 0));
    let qubit = if ideal { Vec::new() } else { qubit_collapse(space, params) };
    for segment in &seq.segments {
        let (h, collapse) = match *segment {
            Segment::CarrierPulse {
                transition,
                angle,
                axis,
                duration,
            } => {
                let rabi = if duration > 0.0 { angle / duration } else { 0.0 };
                (drive_hamiltonian(space, transition, rabi, axis.phase())?, qubit.clone())
            }
            Segment::ResonantSwap { transition, .. } => {
                (jc_hamiltonian(space, transition, params.g_coupling)?, qubit.clone())
            }
            Segment::Idle { .. } => {
                let mut c = qubit.clone();
                if !ideal {
                    c.push(Collapse::new(annihilation(space), params.kappa));
                }
                (Operator::zeros(space), c)
            }
        };
        rho = lindblad_evolve(&rho, &h, &collapse, segment.duration(), params.dt)?;
    }
    Ok(rho)
}

const MAX_F_POPULATION: f64 = 1e-3;

/// Identify the cavity mode with the propagating mode and truncate to the
/// two-level ⊗ Fock(0..=4) reconstruction space.
pub fn emit_snapshot(rho: &DensityMatrix) -> Result<DensityMatrix> {
    let prep = rho.space();
    let target = HilbertSpec::RECONSTRUCTION;
    if prep.transmon_levels() == 3 {
        let f_pop: f64 = (0..prep.fock_dim()).map(|n| rho.population(Level::F, n)).sum();
        if f_pop > MAX_F_POPULATION {
            return Err(Error::LeakedPopulation(f_pop));
        }
    }
    let keep_fock = target.fock_dim().min(prep.fock_dim());
    let mut idx = Vec::with_capacity(target.dim());
    let mut tgt = Vec::with_capacity(target.dim());
    for level in [Level::G, Level::E] {
        for n in 0..keep_fock {
            idx.push(prep.index(level, n));
            tgt.push(target.index(level, n));
        }
    }
    let mut m = CMatrix::zeros(target.dim(), target.dim());
    for (a, &i) in idx.iter().enumerate() {
        for (b, &j) in idx.iter().enumerate() {
            m[(tgt[a], tgt[b])] = rho.matrix()[(i, j)];
        }
    }
    if m.trace().re <= 0.0 {
        return Err(Error::NotPhysical("no weight left after truncation".into()));
    }
    Ok(DensityMatrix::from_matrix_unchecked(target, m))
}

/// Weight kept by [`emit_snapshot`] before renormalization.
pub fn snapshot_weight(rho: &DensityMatrix) -> f64 {
    let prep = rho.space();
    let keep = HilbertSpec::RECONSTRUCTION.fock_dim().min(prep.fock_dim());
    [Level::G, Level::E]
        .iter()
        .flat_map(|&l| (0..keep).map(move |n| (l, n)))
        .map(|(l, n)| rho.population(l, n))
        .sum()
}

/// Qubit-only T1 and dephasing for `duration`.
pub fn qubit_idle(rho: &DensityMatrix, params: &ExperimentParams, duration: f64) -> Result<DensityMatrix> {
    let space = rho.space();
    let h = Operator::zeros(space);
    lindblad_evolve(rho, &h, &qubit_collapse(space, params), duration, params.dt)
}

/// Local-oscillator phase `φ` maximizing the overlap with `target`, and the
/// rotated state `e^{iφ a†a} ρ e^{−iφ a†a}`.
pub fn align_field_phase(rho: &DensityMatrix, target: &KetState) -> Result<(DensityMatrix, f64)> {
    let space = rho.space();
    let mut objective = |phi: f64| -> f64 {
        let r = rho
            .transformed(&field_phase(space, phi))
            .expect("same space");
        -fidelity_to_pure(&r, target).unwrap_or(0.0)
    };
    let (phi, _) = scan_minimize(&mut objective, 0.0, 2.0 * PI, 721);
    let phi = phi.rem_euclid(2.0 * PI);
    Ok((rho.transformed(&field_phase(space, phi))?, phi))
}

/// `(|0e⟩ + |1g⟩)/√2` on the reconstruction space.
pub fn bell_target() -> KetState {
    let one = C64::new(1.0, 0.0);
    KetState::from_components(
        HilbertSpec::RECONSTRUCTION,
        &[(Level::E, 0, one), (Level::G, 1, one)],
    )
    .expect("valid components")
}

/// `½(|1⟩+|2⟩)|g⟩ + ½(|1⟩−|2⟩)|e⟩` on the reconstruction space.
pub fn two_photon_target() -> KetState {
    let one = C64::new(1.0, 0.0);
    KetState::from_components(
        HilbertSpec::RECONSTRUCTION,
        &[
            (Level::G, 1, one),
            (Level::G, 2, one),
            (Level::E, 1, one),
            (Level::E, 2, -one),
        ],
    )
    .expect("valid components")
}

fn finish(prepared: DensityMatrix, params: &ExperimentParams, ideal: bool, target: &KetState) -> Result<DensityMatrix> {
    let mut rho = emit_snapshot(&prepared)?;
    if !ideal && params.qubit_wait > 0.0 {
        rho = qubit_idle(&rho, params, params.qubit_wait)?;
    }
    Ok(align_field_phase(&rho, target)?.0)
}

/// Bell-state preparation, emission and the qubit wait before tomography.
///
/// The free local-oscillator phase is fixed so the overlap with
/// [`bell_target`] is real and maximal.
pub fn prepare_bell(params: &ExperimentParams, ideal: bool) -> Result<DensityMatrix> {
    prepare_sequence(&PulseSequence::bell(params), params, ideal, &bell_target())
}

/// Two-photon entangled-state preparation using the transmon f level.
///
/// The qubit-frame phase is fixed by the final π/2 pulse axis; the field
/// phase is aligned to [`two_photon_target`].
pub fn prepare_two_photon(params: &ExperimentParams, ideal: bool) -> Result<DensityMatrix> {
    prepare_sequence(&PulseSequence::two_photon(params), params, ideal, &two_photon_target())
}

/// Runs `seq`, emits the field and applies the qubit wait, with the field
/// phase aligned to `target`. Three transmon levels are simulated when the
/// sequence touches f.
pub fn prepare_sequence(
    seq: &PulseSequence,
    params: &ExperimentParams,
    ideal: bool,
    target: &KetState,
) -> Result<DensityMatrix> {
    params.validate()?;
    let levels = if seq.uses_f() { 3 } else { 2 };
    let space = HilbertSpec::new(levels, params.prep_fock_cutoff)?;
    let rho = run_sequence(seq, params, space, ideal)?;
    finish(rho, params, ideal, target)
}

/// Qubit tomography basis.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Basis {
    X,
    Y,
    Z,
}

impl Basis {
    pub const ALL: [Basis; 3] = [Basis::X, Basis::Y, Basis::Z];

    pub fn sigma(self) -> Sigma {
        match self {
            Basis::X => Sigma::X,
            Basis::Y => Sigma::Y,
            Basis::Z => Sigma::Z,
        }
    }

    pub fn tag(self) -> u8 {
        match self {
            Basis::X => b'x',
            Basis::Y => b'y',
            Basis::Z => b'z',
        }
    }

    pub fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            b'x' => Ok(Basis::X),
            b'y' => Ok(Basis::Y),
            b'z' => Ok(Basis::Z),
            other => Err(Error::Format(format!("unknown basis tag {other:#04x}"))),
        }
    }
}

impl fmt::Display for Basis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.tag() as char)
    }
}

impl FromStr for Basis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "x" | "X" => Ok(Basis::X),
            "y" | "Y" => Ok(Basis::Y),
            "z" | "Z" => Ok(Basis::Z),
            other => Err(Error::InvalidArgument(format!("unknown basis {other:?}"))),
        }
    }
}

/// Pre-measurement rotation that maps the chosen Bloch axis onto `z`, so
/// that a `+x` (`+y`) Bloch vector reads out as `σ_z = +1`.
pub fn tomography_rotation(basis: Basis) -> Operator {
    let space = HilbertSpec::RECONSTRUCTION;
    let c = C64::new((PI / 4.0).cos(), 0.0);
    let s = (PI / 4.0).sin();
    let q = match basis {
        Basis::Z => CMatrix::identity(2, 2),
        // exp(+iπσ_y/4)
        Basis::X => CMatrix::identity(2, 2) * c + Sigma::Y.matrix() * C64::new(0.0, s),
        // exp(−iπσ_x/4)
        Basis::Y => CMatrix::identity(2, 2) * c - Sigma::X.matrix() * C64::new(0.0, s),
    };
    qubit_operator(space, &qubit_block(2, &q)).expect("2x2 factor")
}
