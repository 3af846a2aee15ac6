//! Fixed-step RK4 integration of the Lindblad master equation.

use super::{CMatrix, DensityMatrix, Operator, C64, I};
use crate::error::{Error, Result};

/// Default integrator step: 0.01 ns.
pub const DEFAULT_DT: f64 = 1e-11;

const MAX_TRACE_DRIFT: f64 = 1e-4;

/// Jump operator `L` with rate `γ`, contributing `γ (LρL† − ½{L†L, ρ})`.
#[derive(Clone, Debug)]
pub struct Collapse {
    pub op: Operator,
    pub rate: f64,
}

impl Collapse {
    pub fn new(op: Operator, rate: f64) -> Self {
        Collapse { op, rate }
    }
}

struct Generator {
    /// `−i H_eff` with `H_eff = H − (i/2) Σ γ L†L`.
    drift: CMatrix,
    /// `√γ L`.
    jumps: Vec<CMatrix>,
}

impl Generator {
    fn new(hamiltonian: &Operator, collapse: &[Collapse]) -> Self {
        let d = hamiltonian.matrix().nrows();
        let mut h_eff = hamiltonian.matrix().clone();
        let mut jumps = Vec::with_capacity(collapse.len());
        for c in collapse.iter().filter(|c| c.rate > 0.0) {
            let l = c.op.matrix();
            h_eff -= l.adjoint() * l * C64::new(0.0, 0.5 * c.rate);
            jumps.push(l * C64::new(c.rate.sqrt(), 0.0));
        }
        debug_assert_eq!(h_eff.nrows(), d);
        Generator {
            drift: h_eff * (-I),
            jumps,
        }
    }

    fn apply(&self, rho: &CMatrix) -> CMatrix {
        let a = &self.drift * rho;
        let mut out = &a + a.adjoint();
        for j in &self.jumps {
            out += j * rho * j.adjoint();
        }
        out
    }
}

/// Integrate `dρ/dt = −i[H, ρ] + Σ γ (LρL† − ½{L†L, ρ})` for `duration` seconds.
///
/// The step is `duration / ceil(duration / dt)`. The result is re-Hermitized
/// and trace-normalized; a trace drift above 1e-4 before normalization is
/// reported as an error.
pub fn lindblad_evolve(
    rho: &DensityMatrix,
    hamiltonian: &Operator,
    collapse: &[Collapse],
    duration: f64,
    dt: f64,
) -> Result<DensityMatrix> {
    let space = rho.space();
    space.check(&hamiltonian.space())?;
    for c in collapse {
        space.check(&c.op.space())?;
        if !(c.rate >= 0.0) || !c.rate.is_finite() {
            return Err(Error::InvalidArgument(format!("collapse rate {}", c.rate)));
        }
    }
    if !(duration >= 0.0) || !duration.is_finite() {
        return Err(Error::InvalidArgument(format!("duration {duration}")));
    }
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!("time step {dt}")));
    }
    if duration == 0.0 {
        return Ok(rho.clone());
    }
    let state = integrate(rho.matrix(), hamiltonian, collapse, duration, dt);
    if state.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::NonFinite);
    }
    let drift = (state.trace().re - rho.matrix().trace().re).abs();
    if drift > MAX_TRACE_DRIFT {
        return Err(Error::TraceDrift { drift });
    }
    Ok(DensityMatrix::from_matrix_unchecked(space, state))
}

fn integrate(
    rho: &CMatrix,
    hamiltonian: &Operator,
    collapse: &[Collapse],
    duration: f64,
    dt: f64,
) -> CMatrix {
    let steps = (duration / dt).ceil().max(1.0) as usize;
    let h = duration / steps as f64;
    let gen = Generator::new(hamiltonian, collapse);

    let half = C64::new(0.5 * h, 0.0);
    let full = C64::new(h, 0.0);
    let sixth = C64::new(h / 6.0, 0.0);
    let two = C64::new(2.0, 0.0);

    let mut state = rho.clone();
    for _ in 0..steps {
        let k1 = gen.apply(&state);
        let k2 = gen.apply(&(&state + &k1 * half));
        let k3 = gen.apply(&(&state + &k2 * half));
        let k4 = gen.apply(&(&state + &k3 * full));
        state += (k1 + k2 * two + k3 * two + k4) * sixth;
    }
    state
}

/// Trace of the RK4 output before renormalization.
pub fn unnormalized_trace(
    rho: &DensityMatrix,
    hamiltonian: &Operator,
    collapse: &[Collapse],
    duration: f64,
    dt: f64,
) -> f64 {
    integrate(rho.matrix(), hamiltonian, collapse, duration, dt)
        .trace()
        .re
}
