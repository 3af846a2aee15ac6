//! Fock-basis matrix of the noisy heterodyne POVM.
//!
//! For added noise with `E|ν|² = N`, the effect for outcome `S` is
//! `Π(S) = (1/π) ∫ d²α e^{−|S−α|²/N}/(πN) |α⟩⟨α|`, whose matrix elements are
//!
//! ```text
//! ⟨n|Π(S)|m⟩ = e^{−|S|²/(1+N)} / (π(1+N))
//!              · Σ_k C(n,k) C(m,k) k! sᵏ μ^{n−k} μ̄^{m−k} / √(n! m!)
//! ```
//!
//! with `μ = S/(1+N)` and `s = N/(1+N)`. Equivalently
//! `Π(S) ∝ Σ_k (sᵏ/k!) φ_k φ_k†` with `φ_k[n] = √n! μ^{n−k}/(n−k)!` for `n ≥ k`,
//! which is the form used on the hot path.

use crate::hilbert::{CMatrix, C64};

pub(crate) fn factorials(n: usize) -> Vec<f64> {
    let mut f = vec![1.0; n + 1];
    for k in 1..=n {
        f[k] = f[k - 1] * k as f64;
    }
    f
}

/// Full matrix of `Π(S)` on Fock states `0..dim`.
pub fn povm_matrix(s: C64, noise: f64, dim: usize) -> CMatrix {
    let fact = factorials(dim);
    let mu = s / (1.0 + noise);
    let sv = noise / (1.0 + noise);
    let pref = (-s.norm_sqr() / (1.0 + noise)).exp() / (std::f64::consts::PI * (1.0 + noise));
    let mut out = CMatrix::zeros(dim, dim);
    for n in 0..dim {
        for m in 0..dim {
            let mut acc = C64::new(0.0, 0.0);
            for k in 0..=n.min(m) {
                let c = fact[n] / (fact[k] * fact[n - k]) * fact[m] / (fact[k] * fact[m - k]) * fact[k];
                acc += mu.powu((n - k) as u32) * mu.conj().powu((m - k) as u32) * (c * sv.powi(k as i32));
            }
            out[(n, m)] = acc * (pref / (fact[n] * fact[m]).sqrt());
        }
    }
    out
}

/// Evaluates `tr(Π(S) ρ_block)` up to the common factor `e^{−|S|²/(1+N)}/(π(1+N))`
/// for several field blocks at once.
#[derive(Clone, Debug)]
pub(crate) struct PovmKernel {
    dim: usize,
    noise: f64,
    sqrt_fact: Vec<f64>,
    inv_fact: Vec<f64>,
    /// `s^k / k!`
    weights: Vec<f64>,
}

impl PovmKernel {
    pub(crate) fn new(noise: f64, dim: usize) -> Self {
        let fact = factorials(dim);
        let s = noise / (1.0 + noise);
        PovmKernel {
            dim,
            noise,
            sqrt_fact: fact.iter().map(|f| f.sqrt()).collect(),
            inv_fact: fact.iter().map(|f| 1.0 / f).collect(),
            weights: (0..dim).map(|k| s.powi(k as i32) / fact[k]).collect(),
        }
    }

    /// Unnormalized `tr(Π(S) B)` for each block `B` (row-major `dim × dim`).
    pub(crate) fn traces<const B: usize>(&self, s: C64, blocks: &[&[C64]; B]) -> [f64; B] {
        let d = self.dim;
        let mu = s / (1.0 + self.noise);
        let mut mu_pow = [C64::new(0.0, 0.0); 8];
        mu_pow[0] = C64::new(1.0, 0.0);
        for j in 1..d {
            mu_pow[j] = mu_pow[j - 1] * mu;
        }
        let mut out = [0.0; B];
        let mut phi = [C64::new(0.0, 0.0); 8];
        for k in 0..d {
            let w = self.weights[k];
            if w == 0.0 {
                continue;
            }
            for n in 0..d {
                phi[n] = if n >= k {
                    mu_pow[n - k] * (self.sqrt_fact[n] * self.inv_fact[n - k])
                } else {
                    C64::new(0.0, 0.0)
                };
            }
            for (b, block) in blocks.iter().enumerate() {
                // φ† B φ, real for Hermitian B
                let mut acc = 0.0;
                for m in k..d {
                    let mut row = C64::new(0.0, 0.0);
                    for n in k..d {
                        row += block[m * d + n] * phi[n];
                    }
                    acc += (phi[m].conj() * row).re;
                }
                out[b] += w * acc;
            }
        }
        out
    }
}
