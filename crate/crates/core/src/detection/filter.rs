use crate::error::{Error, Result};
use crate::hilbert::C64;

/// Samples of `√κ e^{−κt/2}` at `t = k·dt`, rescaled so that `Σ f² dt = 1`.
pub fn matched_filter_weights(len: usize, dt: f64, kappa: f64) -> Result<Vec<f64>> {
    if !(kappa > 0.0) || !kappa.is_finite() {
        return Err(Error::InvalidArgument(format!("kappa = {kappa}")));
    }
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!("dt = {dt}")));
    }
    if (len as f64) * dt < 5.0 / kappa {
        return Err(Error::InvalidArgument(format!(
            "trace of {:.3e} s is shorter than 5/κ = {:.3e} s",
            len as f64 * dt,
            5.0 / kappa
        )));
    }
    let mut f: Vec<f64> = (0..len)
        .map(|k| kappa.sqrt() * (-0.5 * kappa * k as f64 * dt).exp())
        .collect();
    let norm = (f.iter().map(|x| x * x).sum::<f64>() * dt).sqrt();
    for x in &mut f {
        *x /= norm;
    }
    Ok(f)
}

/// `Σ f(t_k) s(t_k) dt`, returned as `X + iP`.
pub fn matched_filter(trace: &[C64], dt: f64, kappa: f64) -> Result<C64> {
    let f = matched_filter_weights(trace.len(), dt, kappa)?;
    Ok(f.iter().zip(trace).map(|(w, s)| s * (w * dt)).sum())
}
