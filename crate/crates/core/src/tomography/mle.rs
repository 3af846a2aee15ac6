//! Weighted least-squares fit of a positive density matrix to moments.
//!
//! `ρ = TT†/tr(TT†)` with `T` lower-triangular and a real diagonal, so the
//! estimate is positive and normalized for every parameter vector. The
//! objective `χ² = Σ_k |tr(B_k ρ) − m_k|²/σ_k²` is minimized by
//! Levenberg–Marquardt on the real and imaginary residuals.
//!
//! Plain LM on `T` crawls once columns of `T` approach zero, which is where
//! nearly pure optima live. A log-determinant barrier Newton pass on `ρ`
//! supplies the starting factor, leaving LM a short polish.

use nalgebra::{DMatrix, DVector};

use super::linear::{moment_operator, moments_to_rho_linear};
use super::moments::MomentSet;
use crate::error::{Error, Result};
use crate::hilbert::{hermitian_eigenvalues, CMatrix, DensityMatrix, HilbertSpec, C64};
use crate::Sigma;

#[derive(Clone, Debug)]
pub struct MleConfig {
    pub max_order: usize,
    pub max_iterations: usize,
    /// Stop when χ² improved by less than this fraction over `window` iterations.
    pub rel_tolerance: f64,
    pub window: usize,
    pub gradient_tolerance: f64,
}

impl Default for MleConfig {
    fn default() -> Self {
        MleConfig {
            max_order: 8,
            max_iterations: 50_000,
            rel_tolerance: 1e-10,
            window: 50,
            gradient_tolerance: 1e-8,
        }
    }
}

#[derive(Clone, Debug)]
pub struct MleOutcome {
    /// Best state found.
    pub rho: DensityMatrix,
    pub chi2_initial: f64,
    pub chi2_final: f64,
    pub iterations: usize,
    pub gradient_norm: f64,
    /// Moments entering `χ²`.
    pub terms: usize,
    pub converged: bool,
}

struct Problem {
    d: usize,
    ops: Vec<CMatrix>,
    targets: Vec<C64>,
    inv_sigma: Vec<f64>,
}

/// Parameter layout: diagonal `T_ii` (real) first, then `Re T_ij, Im T_ij`
/// for `i > j` in row-major order.
fn unpack(d: usize, x: &DVector<f64>) -> CMatrix {
    let mut t = CMatrix::zeros(d, d);
    for i in 0..d {
        t[(i, i)] = C64::new(x[i], 0.0);
    }
    let mut k = d;
    for i in 0..d {
        for j in 0..i {
            t[(i, j)] = C64::new(x[k], x[k + 1]);
            k += 2;
        }
    }
    t
}

fn pack(t: &CMatrix) -> DVector<f64> {
    let d = t.nrows();
    let mut x = DVector::zeros(d * d);
    for i in 0..d {
        x[i] = t[(i, i)].re;
    }
    let mut k = d;
    for i in 0..d {
        for j in 0..i {
            x[k] = t[(i, j)].re;
            x[k + 1] = t[(i, j)].im;
            k += 2;
        }
    }
    x
}

impl Problem {
    fn chi2_of(&self, rho: &CMatrix) -> f64 {
        let tr = rho.trace().re;
        self.ops
            .iter()
            .zip(&self.targets)
            .zip(&self.inv_sigma)
            .map(|((b, &m), &w)| ((trace_product(b, rho) / tr - m) * w).norm_sqr())
            .sum()
    }

    fn residuals(&self, x: &DVector<f64>) -> DVector<f64> {
        let t = unpack(self.d, x);
        let a = &t * t.adjoint();
        let tr = a.trace().re;
        let mut r = DVector::zeros(2 * self.ops.len());
        for (k, b) in self.ops.iter().enumerate() {
            let v = trace_product(b, &a) / tr - self.targets[k];
            r[2 * k] = v.re * self.inv_sigma[k];
            r[2 * k + 1] = v.im * self.inv_sigma[k];
        }
        r
    }

    /// Residuals and their Jacobian.
    ///
    /// With `A = TT†`, a real step in `T_ij` changes `tr(BA)` by
    /// `(T†B)_ji + (BT)_ij` and `tr A` by `2 Re T_ij`; an imaginary step by
    /// `i(T†B)_ji − i(BT)_ij` and `2 Im T_ij`.
    fn jacobian(&self, x: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
        let d = self.d;
        let t = unpack(d, x);
        let a = &t * t.adjoint();
        let tr = a.trace().re;
        let npar = d * d;
        let mut r = DVector::zeros(2 * self.ops.len());
        let mut jac = DMatrix::zeros(2 * self.ops.len(), npar);
        let td = t.adjoint();
        for (k, b) in self.ops.iter().enumerate() {
            let tb = &td * b;
            let bt = b * &t;
            let expv = trace_product(b, &a) / tr;
            let v = expv - self.targets[k];
            let w = self.inv_sigma[k];
            r[2 * k] = v.re * w;
            r[2 * k + 1] = v.im * w;
            let mut put = |col: usize, dtrba: C64, dtr: f64| {
                let g = (dtrba - expv * dtr) / tr;
                jac[(2 * k, col)] = g.re * w;
                jac[(2 * k + 1, col)] = g.im * w;
            };
            for i in 0..d {
                put(i, tb[(i, i)] + bt[(i, i)], 2.0 * t[(i, i)].re);
            }
            let mut col = d;
            for i in 0..d {
                for j in 0..i {
                    let (p, q) = (tb[(j, i)], bt[(i, j)]);
                    put(col, p + q, 2.0 * t[(i, j)].re);
                    put(col + 1, C64::new(0.0, 1.0) * (p - q), 2.0 * t[(i, j)].im);
                    col += 2;
                }
            }
        }
        (r, jac)
    }
}

fn trace_product(b: &CMatrix, a: &CMatrix) -> C64 {
    let d = a.nrows();
    let mut acc = C64::new(0.0, 0.0);
    for i in 0..d {
        for j in 0..d {
            acc += b[(i, j)] * a[(j, i)];
        }
    }
    acc
}

fn chi2(r: &DVector<f64>) -> f64 {
    r.norm_squared()
}

fn density_from(space: HilbertSpec, x: &DVector<f64>) -> DensityMatrix {
    let t = unpack(space.dim(), x);
    DensityMatrix::from_matrix_unchecked(space, &t * t.adjoint())
}

/// Coordinates of a Hermitian matrix in the orthonormal basis `e_ii`,
/// `(e_ij + e_ji)/√2`, `i(e_ij − e_ji)/√2` (`i < j`). Equals `tr(M G_a)`.
fn hermitian_coords(m: &CMatrix) -> DVector<f64> {
    let d = m.nrows();
    let mut x = DVector::zeros(d * d);
    let mut k = d;
    for i in 0..d {
        x[i] = m[(i, i)].re;
        for j in i + 1..d {
            x[k] = std::f64::consts::SQRT_2 * m[(i, j)].re;
            x[k + 1] = std::f64::consts::SQRT_2 * m[(i, j)].im;
            k += 2;
        }
    }
    x
}

fn hermitian_basis(d: usize) -> Vec<CMatrix> {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let mut out: Vec<CMatrix> = (0..d)
        .map(|i| {
            let mut g = CMatrix::zeros(d, d);
            g[(i, i)] = C64::new(1.0, 0.0);
            g
        })
        .collect();
    for i in 0..d {
        for j in i + 1..d {
            let mut s = CMatrix::zeros(d, d);
            s[(i, j)] = C64::new(h, 0.0);
            s[(j, i)] = C64::new(h, 0.0);
            let mut a = CMatrix::zeros(d, d);
            a[(i, j)] = C64::new(0.0, h);
            a[(j, i)] = C64::new(0.0, -h);
            out.push(s);
            out.push(a);
        }
    }
    out
}

/// `None` unless `m` is positive definite. The complex Cholesky in nalgebra
/// does not reject indefinite input, so the spectrum decides.
fn log_det(m: &CMatrix) -> Option<f64> {
    let ev = hermitian_eigenvalues(m);
    (ev[0] > 0.0).then(|| ev.iter().map(|v| v.ln()).sum())
}

fn positive_factor(m: &CMatrix) -> Option<CMatrix> {
    log_det(m)?;
    Some(m.clone().cholesky()?.l())
}

/// Log-determinant barrier Newton method on `ρ` itself, where `χ²` is a
/// convex quadratic on the trace-one slice. Returns a positive definite
/// state close to the constrained minimum; `start` must be positive definite.
fn barrier_minimize(problem: &Problem, start: &CMatrix) -> CMatrix {
    let d = problem.d;
    let n = d * d;
    let basis = hermitian_basis(d);
    let rows = 2 * problem.ops.len();
    let mut a = DMatrix::zeros(rows, n);
    let mut b = DVector::zeros(rows);
    for (k, op) in problem.ops.iter().enumerate() {
        let w = problem.inv_sigma[k];
        let c = hermitian_coords(&(op + op.adjoint())) * 0.5;
        let s = hermitian_coords(&((op - op.adjoint()) * C64::new(0.0, -0.5)));
        // tr(Bρ) = tr(B_h ρ) + i tr(B_a ρ) with B_h, B_a Hermitian parts
        a.row_mut(2 * k).copy_from(&(c.transpose() * w));
        a.row_mut(2 * k + 1).copy_from(&(s.transpose() * w));
        b[2 * k] = problem.targets[k].re * w;
        b[2 * k + 1] = problem.targets[k].im * w;
    }
    let ata = a.transpose() * &a * 2.0;
    let atb = a.transpose() * &b * 2.0;
    let trace_row = hermitian_coords(&CMatrix::identity(d, d));
    let to_matrix = |x: &DVector<f64>| -> CMatrix {
        basis
            .iter()
            .zip(x.iter())
            .fold(CMatrix::zeros(d, d), |acc, (g, &c)| acc + g * C64::new(c, 0.0))
    };
    let chi2_of = |x: &DVector<f64>| (&a * x - &b).norm_squared();

    let mut x = hermitian_coords(start);
    let mut mu = chi2_of(&x).max(1.0) / d as f64;
    let mu_floor = mu * 1e-14;
    while mu > mu_floor {
        for _ in 0..100 {
            let rho = to_matrix(&x);
            let Some(inv) = rho.clone().try_inverse() else { break };
            let mut hess = ata.clone();
            for (i, g) in basis.iter().enumerate() {
                let col = hermitian_coords(&(&inv * g * &inv)) * mu;
                for j in 0..n {
                    hess[(i, j)] += col[j];
                }
            }
            let grad = &ata * &x - &atb - hermitian_coords(&inv) * mu;
            let mut kkt = DMatrix::zeros(n + 1, n + 1);
            kkt.view_mut((0, 0), (n, n)).copy_from(&hess);
            for i in 0..n {
                kkt[(i, n)] = trace_row[i];
                kkt[(n, i)] = trace_row[i];
            }
            let mut rhs = DVector::zeros(n + 1);
            rhs.rows_mut(0, n).copy_from(&(-&grad));
            let Some(sol) = kkt.lu().solve(&rhs) else { break };
            let dx = sol.rows(0, n).into_owned();
            let decrement = -grad.dot(&dx);
            if !(decrement > 1e-12 * mu) {
                break;
            }
            let f = |x: &DVector<f64>| log_det(&to_matrix(x)).map(|ld| chi2_of(x) - mu * ld);
            let f0 = f(&x).unwrap_or(f64::INFINITY);
            let mut t = 1.0;
            let mut moved = false;
            for _ in 0..60 {
                let trial = &x + &dx * t;
                if let Some(ft) = f(&trial) {
                    if ft <= f0 - 0.25 * t * decrement {
                        x = trial;
                        moved = true;
                        break;
                    }
                }
                t *= 0.5;
            }
            if !moved {
                break;
            }
        }
        mu *= 0.1;
    }
    to_matrix(&x)
}

fn mixed_with_identity(m: &CMatrix, eps: f64) -> CMatrix {
    let d = m.nrows();
    m * C64::new(1.0 - eps, 0.0) + CMatrix::identity(d, d) * C64::new(eps / d as f64, 0.0)
}

/// Maximum-likelihood-style estimate under Gaussian moment errors.
///
/// Uses every stored moment with `n ≥ m`, `n + m ≤ max_order` and both
/// indices within the Fock cutoff; moments outside the cutoff vanish
/// identically on the truncated space and carry no information.
pub fn mle_rho(moments: &MomentSet, space: HilbertSpec, config: &MleConfig) -> Result<MleOutcome> {
    let c = space.fock_cutoff();
    let mut ops = Vec::new();
    let mut targets = Vec::new();
    let mut inv_sigma = Vec::new();
    for ((n, m, s), mo) in moments.iter() {
        if n + m > config.max_order || n > c || m > c {
            continue;
        }
        if n == 0 && m == 0 && s == Sigma::Identity {
            continue;
        }
        if !(mo.std_error > 0.0) || !mo.std_error.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "moment ({n},{m},{s}) has std error {}",
                mo.std_error
            )));
        }
        ops.push(moment_operator(space, n, m, s));
        targets.push(mo.value);
        inv_sigma.push(1.0 / mo.std_error);
    }
    if ops.is_empty() {
        return Err(Error::NoData("no moments for the fit".into()));
    }
    let problem = Problem {
        d: space.dim(),
        ops,
        targets,
        inv_sigma,
    };

    // the positive part of the linear estimate is the reference start; the
    // barrier stage needs an interior point and hands LM a full-rank factor
    let projected = moments_to_rho_linear(moments, space)?.project_positive();
    let chi2_initial = problem.chi2_of(projected.matrix());
    let interior = barrier_minimize(&problem, &mixed_with_identity(projected.matrix(), 0.5));
    let factor = positive_factor(&interior)
        .or_else(|| positive_factor(&mixed_with_identity(projected.matrix(), 1e-3)))
        .ok_or_else(|| Error::Singular("no Cholesky factor for the starting state".into()))?;
    let mut x = pack(&factor);
    let (mut r, mut jac) = problem.jacobian(&x);
    let mut current = chi2(&r);
    let mut history = vec![current];
    let mut lambda = 1e-3;
    let mut gradient_norm = f64::INFINITY;
    let mut converged = false;
    let mut iterations = 0;
    let npar = x.len();

    while iterations < config.max_iterations {
        iterations += 1;
        let jt = jac.transpose();
        let jtj = &jt * &jac;
        let grad = &jt * &r;
        gradient_norm = 2.0 * grad.norm();
        if gradient_norm < config.gradient_tolerance {
            converged = true;
            break;
        }
        // Columns of T near zero have vanishing curvature; a floor relative
        // to the stiffest direction keeps their steps bounded.
        let floor = 1e-6 * (0..npar).map(|i| jtj[(i, i)]).fold(0.0, f64::max);
        let mut damped = jtj.clone();
        for i in 0..npar {
            damped[(i, i)] += lambda * jtj[(i, i)].max(floor);
        }
        let step = damped.cholesky().map(|ch| ch.solve(&(-&grad)));
        let mut accepted = false;
        if let Some(step) = step {
            let trial = &x + &step;
            let rt = problem.residuals(&trial);
            let ct = chi2(&rt);
            if ct.is_finite() && ct < current {
                x = trial;
                current = ct;
                (r, jac) = problem.jacobian(&x);
                lambda = (lambda / 3.0).max(1e-15);
                accepted = true;
            }
        }
        if !accepted {
            lambda = (lambda * 4.0).min(1e20);
        }
        history.push(current);
        if history.len() > config.window {
            let old = history[history.len() - 1 - config.window];
            if old - current <= config.rel_tolerance * old {
                converged = true;
                break;
            }
        }
        // keep the scale of T bounded; ρ is invariant under T → cT
        let scale = unpack(problem.d, &x).norm();
        if !(0.1..10.0).contains(&scale) {
            x /= scale;
            (r, jac) = problem.jacobian(&x);
        }
    }

    // the start itself is admissible and already optimal for exact data
    let (rho, chi2_final) = if current <= chi2_initial {
        (density_from(space, &x), current)
    } else {
        (projected, chi2_initial)
    };
    let outcome = MleOutcome {
        rho,
        chi2_initial,
        chi2_final,
        iterations,
        gradient_norm,
        terms: problem.ops.len(),
        converged,
    };
    if converged {
        Ok(outcome)
    } else {
        Err(Error::MleNotConverged(Box::new(outcome)))
    }
}

/// Smallest eigenvalue, trace deviation and Hermiticity defect of `rho`.
pub fn physicality(rho: &DensityMatrix) -> (f64, f64, f64) {
    let m = rho.matrix();
    let herm = (m - m.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max);
    let min_eig = hermitian_eigenvalues(m).first().copied().unwrap_or(0.0);
    (min_eig, (m.trace().re - 1.0).abs(), herm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{expectation, fidelity_to_pure, Operator};
    use crate::tomography::linear::operator_labels;
    use crate::tomography::moments::Moment;

    fn exact_moments(rho: &DensityMatrix, sigma: f64) -> MomentSet {
        let space = rho.space();
        let mut set = MomentSet::new(8).unwrap();
        for (n, m, s) in operator_labels(space) {
            if n >= m {
                let op = Operator::new(space, moment_operator(space, n, m, s)).unwrap();
                set.insert(n, m, s, Moment { value: expectation(rho, &op).unwrap(), std_error: sigma })
                    .unwrap();
            }
        }
        set
    }

    #[test]
    fn pure_state_recovered() {
        let target = crate::dynamics::bell_target();
        let rho = DensityMatrix::from_ket(&target);
        let out = mle_rho(&exact_moments(&rho, 1e-6), rho.space(), &MleConfig::default()).unwrap();
        assert!(fidelity_to_pure(&out.rho, &target).unwrap() >= 1.0 - 1e-6);
        assert!(out.chi2_final <= out.chi2_initial);
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let rho = DensityMatrix::from_ket(&crate::dynamics::two_photon_target());
        let set = exact_moments(&rho, 0.1);
        let space = rho.space();
        let ops: Vec<_> = set.iter().map(|((n, m, s), _)| moment_operator(space, n, m, s)).collect();
        let n = ops.len();
        let p = Problem {
            d: 10,
            ops,
            targets: set.iter().map(|(_, m)| m.value).collect(),
            inv_sigma: vec![10.0; n],
        };
        let x = DVector::from_fn(100, |i, _| ((i * 7919) % 101) as f64 / 101.0 - 0.3);
        let (_, jac) = p.jacobian(&x);
        let h = 1e-6;
        for col in [0, 5, 10, 11, 57, 99] {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[col] += h;
            xm[col] -= h;
            let fd = (p.residuals(&xp) - p.residuals(&xm)) / (2.0 * h);
            let err = (fd - jac.column(col)).amax();
            assert!(err < 1e-5, "column {col}: {err}");
        }
    }

    #[test]
    fn output_is_physical() {
        let a = DensityMatrix::from_ket(&crate::dynamics::bell_target());
        let b = DensityMatrix::maximally_mixed(a.space());
        let rho = DensityMatrix::mixture(&[(0.7, &a), (0.3, &b)]).unwrap();
        let mut set = exact_moments(&rho, 0.01);
        // push the data outside the physical set
        let v = set.get(2, 2, Sigma::Identity).unwrap().value;
        set.insert(2, 2, Sigma::Identity, Moment { value: v - 0.3, std_error: 0.01 }).unwrap();
        let out = mle_rho(&set, rho.space(), &MleConfig::default()).unwrap();
        let (min_eig, tr, herm) = physicality(&out.rho);
        assert!(min_eig >= -1e-12 && tr <= 1e-12 && herm <= 1e-12);
        assert!(out.chi2_final <= out.chi2_initial);
    }

    #[test]
    fn zero_error_is_rejected() {
        let rho = DensityMatrix::from_ket(&crate::dynamics::bell_target());
        assert!(mle_rho(&exact_moments(&rho, 0.0), rho.space(), &MleConfig::default()).is_err());
    }

    #[test]
    fn iteration_cap_reports_best_state() {
        let rho = DensityMatrix::from_ket(&crate::dynamics::bell_target());
        let cfg = MleConfig {
            max_iterations: 2,
            ..MleConfig::default()
        };
        match mle_rho(&exact_moments(&rho, 1e-6), rho.space(), &cfg) {
            Err(Error::MleNotConverged(out)) => {
                assert_eq!(out.iterations, 2);
                assert!(out.chi2_final <= out.chi2_initial);
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }
}
