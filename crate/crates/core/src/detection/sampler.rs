use rand::Rng;
use rand_distr::StandardNormal;

use super::povm::{factorials, PovmKernel};
use super::readout::ReadoutModel;
use super::{stream_rng, DetectorConfig, Histogram3D, RunTag, Shot, ShotBatch};
use crate::dynamics::tomography_rotation;
use crate::error::{Error, Result};
use crate::hilbert::{hermitian_eigenvalues, CMatrix, DensityMatrix, C64};
use crate::Basis;

const MAX_ATTEMPTS: usize = 10_000;
const MAX_FIELD_DIM: usize = 8;
const SUPPORT_TOL: f64 = 1e-14;

/// Per-state precomputation for drawing shots in one tomography basis.
#[derive(Clone, Debug)]
pub struct ShotSampler {
    basis: Basis,
    /// Fock support of the field marginal.
    dim: usize,
    /// Row-major `dim × dim` blocks `⟨g|ρ|g⟩`, `⟨e|ρ|e⟩` and their sum.
    block_g: Vec<C64>,
    block_e: Vec<C64>,
    field: Vec<C64>,
    inv_sqrt_fact: Vec<f64>,
    /// Gaussian envelope `e^{−|α|²/w}/(πw)` scaled by `bound`.
    width: f64,
    bound: f64,
    noise_std: f64,
    kernel: PovmKernel,
    readout: ReadoutModel,
}

impl ShotSampler {
    pub fn new(rho: &DensityMatrix, basis: Basis, config: &DetectorConfig) -> Result<Self> {
        config.validate()?;
        let space = rho.space();
        if space.transmon_levels() != 2 {
            return Err(Error::InvalidSpace("detection needs a two-level qubit".into()));
        }
        if space.fock_dim() > MAX_FIELD_DIM {
            return Err(Error::InvalidSpace(format!(
                "field dimension {} above {MAX_FIELD_DIM}",
                space.fock_dim()
            )));
        }
        let rotated = rho.transformed(&rotation_on(space, basis)?)?;
        let m = rotated.matrix();
        let f = space.fock_dim();
        let field_full: CMatrix = m.view((0, 0), (f, f)) + m.view((f, f), (f, f));
        let dim = (0..f)
            .rev()
            .find(|&n| field_full[(n, n)].re > SUPPORT_TOL)
            .map_or(1, |n| n + 1);

        let take = |r0: usize| -> Vec<C64> {
            let mut v = Vec::with_capacity(dim * dim);
            for i in 0..dim {
                for j in 0..dim {
                    v.push(m[(r0 + i, r0 + j)]);
                }
            }
            v
        };
        let block_g = take(0);
        let block_e = take(f);
        let field: Vec<C64> = block_g.iter().zip(&block_e).map(|(a, b)| a + b).collect();
        let field_mat = CMatrix::from_row_slice(dim, dim, &field);
        let lambda_max = hermitian_eigenvalues(&field_mat).last().copied().unwrap_or(1.0).max(0.0);
        let (width, bound) = envelope(dim, lambda_max);
        let noise = config.added_noise();
        Ok(ShotSampler {
            basis,
            dim,
            block_g,
            block_e,
            field,
            inv_sqrt_fact: factorials(dim).iter().map(|x| 1.0 / x.sqrt()).collect(),
            width,
            bound,
            noise_std: (noise / 2.0).sqrt(),
            kernel: PovmKernel::new(noise, dim),
            readout: ReadoutModel::new(config),
        })
    }

    pub fn basis(&self) -> Basis {
        self.basis
    }

    /// Husimi density `⟨α|ρ_f|α⟩/π`.
    pub fn husimi(&self, alpha: C64) -> f64 {
        let d = self.dim;
        let mut c = [C64::new(0.0, 0.0); MAX_FIELD_DIM];
        let mut pow = C64::new(1.0, 0.0);
        for n in 0..d {
            c[n] = pow * self.inv_sqrt_fact[n];
            pow *= alpha;
        }
        let mut acc = 0.0;
        for n in 0..d {
            let mut row = C64::new(0.0, 0.0);
            for k in 0..d {
                row += self.field[n * d + k] * c[k];
            }
            acc += (c[n].conj() * row).re;
        }
        (-alpha.norm_sqr()).exp() * acc.max(0.0) / std::f64::consts::PI
    }

    /// Excited-state probability conditioned on the noisy outcome `S`.
    pub fn excited_probability(&self, s: C64) -> f64 {
        let [g, e] = self.kernel.traces(s, &[&self.block_g[..], &self.block_e[..]]);
        let (g, e) = (g.max(0.0), e.max(0.0));
        if g + e > 0.0 {
            e / (g + e)
        } else {
            0.5
        }
    }

    fn draw_alpha<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<C64> {
        let scale = (self.width / 2.0).sqrt();
        let envelope_norm = 1.0 / (std::f64::consts::PI * self.width);
        for _ in 0..MAX_ATTEMPTS {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            let alpha = C64::new(re * scale, im * scale);
            let u: f64 = rng.random();
            let env = envelope_norm * (-alpha.norm_sqr() / self.width).exp();
            let q = self.husimi(alpha);
            if q > self.bound * env {
                return Err(Error::NotPhysical(format!("Husimi density above sampling envelope at {alpha}")));
            }
            if u * self.bound * env < q {
                return Ok(alpha);
            }
        }
        Err(Error::SamplerExhausted(MAX_ATTEMPTS))
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Shot> {
        let alpha = self.draw_alpha(rng)?;
        let nx: f64 = rng.sample(StandardNormal);
        let np: f64 = rng.sample(StandardNormal);
        let s = alpha + C64::new(nx * self.noise_std, np * self.noise_std);
        let excited = rng.random::<f64>() < self.excited_probability(s);
        let q = self.readout.sample(rng, excited);
        Ok(Shot {
            basis: self.basis,
            x: s.re,
            p: s.im,
            q,
        })
    }

    pub fn fill<R: Rng + ?Sized>(&self, rng: &mut R, n: usize, hist: &mut Histogram3D) -> Result<()> {
        if hist.basis() != self.basis {
            return Err(Error::BasisMismatch {
                expected: hist.basis(),
                found: self.basis,
            });
        }
        for _ in 0..n {
            let s = self.draw(rng)?;
            hist.push(s.x, s.p, s.q);
        }
        Ok(())
    }

    pub fn batch<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Result<ShotBatch> {
        let shots = (0..n).map(|_| self.draw(rng)).collect::<Result<Vec<_>>>()?;
        Ok(ShotBatch {
            basis: self.basis,
            shots,
        })
    }
}

/// Shots from the configured seed's first signal stream for `basis`.
pub fn sample_shots(rho: &DensityMatrix, basis: Basis, n_shots: usize, config: &DetectorConfig) -> Result<ShotBatch> {
    if n_shots == 0 {
        return Err(Error::InvalidArgument("n_shots must be positive".into()));
    }
    let sampler = ShotSampler::new(rho, basis, config)?;
    let mut rng = stream_rng(config.seed, RunTag::Signal, basis, 0);
    sampler.batch(&mut rng, n_shots)
}

fn rotation_on(space: crate::hilbert::HilbertSpec, basis: Basis) -> Result<crate::hilbert::Operator> {
    let r = tomography_rotation(basis);
    let f = crate::hilbert::HilbertSpec::RECONSTRUCTION.fock_dim();
    let qubit = CMatrix::from_fn(2, 2, |i, j| r.matrix()[(i * f, j * f)]);
    crate::hilbert::qubit_operator(space, &qubit)
}

/// Envelope width `w` and the constant `M` with `Q(α) ≤ M e^{−|α|²/w}/(πw)`.
///
/// `Q(α) ≤ λ_max e^{−r²} Σ_{n<d} r^{2n}/n! / π`; the supremum over `r` of the
/// ratio is located on a grid and padded.
fn envelope(dim: usize, lambda_max: f64) -> (f64, f64) {
    if dim == 1 {
        return (1.0, lambda_max.max(f64::MIN_POSITIVE) * 1.01);
    }
    let fact = factorials(dim);
    let mut best = (f64::INFINITY, f64::INFINITY);
    for w in [1.25, 1.5, 1.75, 2.0, 2.5, 3.0, 4.0, 5.0] {
        let mut sup: f64 = 0.0;
        for i in 0..=4000 {
            let r2 = (i as f64 * 0.005).powi(2);
            let poly: f64 = (0..dim).map(|n| r2.powi(n as i32) / fact[n]).sum();
            sup = sup.max(w * (-r2 * (1.0 - 1.0 / w)).exp() * poly);
        }
        let m = sup * lambda_max * 1.01;
        if m < best.1 {
            best = (w, m);
        }
    }
    best
}
