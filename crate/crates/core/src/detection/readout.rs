//! Two-Gaussian dispersive readout and its reference distributions.

use std::io::{BufRead, Write};

use rand::Rng;
use rand_distr::StandardNormal;

use super::{stream_rng, BinAxis, DetectorConfig, RunTag};
use crate::error::{Error, Result};
use crate::Basis;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReadoutModel {
    pub mu_g: f64,
    pub mu_e: f64,
    pub sigma: f64,
    /// Probability that an excited qubit reads out like a ground one.
    pub decay_mix: f64,
}

impl ReadoutModel {
    pub fn new(config: &DetectorConfig) -> Self {
        ReadoutModel {
            mu_g: config.readout_mu_g,
            mu_e: config.readout_mu_e,
            sigma: config.readout_sigma,
            decay_mix: config.readout_decay_mix,
        }
    }

    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, excited: bool) -> f64 {
        let z: f64 = rng.sample(StandardNormal);
        let mu = if excited && rng.random::<f64>() >= self.decay_mix {
            self.mu_e
        } else {
            self.mu_g
        };
        mu + self.sigma * z
    }

    fn cdf(&self, mu: f64, t: f64) -> f64 {
        0.5 * libm::erfc(-(t - mu) / (self.sigma * std::f64::consts::SQRT_2))
    }

    /// `P(Q < t | ground) − P(Q < t | excited)`.
    pub fn separation_at(&self, t: f64) -> f64 {
        let g = self.cdf(self.mu_g, t);
        let e = self.decay_mix * g + (1.0 - self.decay_mix) * self.cdf(self.mu_e, t);
        if self.mu_g < self.mu_e {
            g - e
        } else {
            e - g
        }
    }
}

/// Single-shot fidelity `1 − P(e|g) − P(g|e)` with the best threshold.
///
/// Both components share σ, so the optimum sits at the midpoint of the means.
pub fn discrimination_fidelity(config: &DetectorConfig) -> f64 {
    let m = ReadoutModel::new(config);
    m.separation_at(0.5 * (m.mu_g + m.mu_e))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Histogram1D {
    axis: BinAxis,
    counts: Vec<u64>,
    overflow: u64,
}

impl Histogram1D {
    pub fn new(axis: BinAxis) -> Self {
        Histogram1D {
            counts: vec![0; axis.bins()],
            axis,
            overflow: 0,
        }
    }

    pub fn from_counts(axis: BinAxis, counts: Vec<u64>) -> Result<Self> {
        if counts.len() != axis.bins() {
            return Err(Error::DimensionMismatch {
                expected: axis.bins(),
                found: counts.len(),
            });
        }
        Ok(Histogram1D {
            axis,
            counts,
            overflow: 0,
        })
    }

    pub fn push(&mut self, q: f64) {
        match self.axis.locate(q) {
            Some(i) => self.counts[i] += 1,
            None => self.overflow += 1,
        }
    }

    pub fn axis(&self) -> &BinAxis {
        &self.axis
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn overflow(&self) -> u64 {
        self.overflow
    }

    pub fn in_range(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// In-range counts normalized to unit sum.
    pub fn normalized(&self) -> Result<Vec<f64>> {
        let total = self.in_range();
        if total == 0 {
            return Err(Error::NoData("empty reference histogram".into()));
        }
        Ok(self.counts.iter().map(|&c| c as f64 / total as f64).collect())
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# overflow={}", self.overflow)?;
        writeln!(w, "q_lo,q_hi,count")?;
        for (i, c) in self.counts.iter().enumerate() {
            writeln!(w, "{},{},{}", self.axis.edges()[i], self.axis.edges()[i + 1], c)?;
        }
        Ok(())
    }

    /// Inverse of [`Histogram1D::write_csv`]; the bins must be uniform.
    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut overflow = 0;
        let mut rows: Vec<(f64, f64, u64)> = Vec::new();
        for (lineno, line) in r.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            let bad = || Error::Format(format!("readout CSV line {}: {line:?}", lineno + 1));
            if let Some(v) = line.strip_prefix("# overflow=") {
                overflow = v.parse().map_err(|_| bad())?;
                continue;
            }
            if line.is_empty() || line.starts_with('#') || line.starts_with("q_lo") {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 3 {
                return Err(bad());
            }
            rows.push((
                f[0].parse().map_err(|_| bad())?,
                f[1].parse().map_err(|_| bad())?,
                f[2].parse().map_err(|_| bad())?,
            ));
        }
        let (Some(first), Some(last)) = (rows.first(), rows.last()) else {
            return Err(Error::Format("readout CSV has no bins".into()));
        };
        let axis = BinAxis::uniform(first.0, last.1, rows.len())?;
        if axis.edges().iter().zip(rows.iter().map(|r| r.0)).any(|(a, b)| *a != b) {
            return Err(Error::Format("readout CSV bins are not uniform".into()));
        }
        let mut h = Histogram1D::from_counts(axis, rows.iter().map(|r| r.2).collect())?;
        h.overflow = overflow;
        Ok(h)
    }
}

/// Q histograms of `|0g⟩` and `|0e⟩` preparations on the configured Q bins.
pub fn readout_reference_histograms(config: &DetectorConfig, n_shots: usize) -> Result<(Histogram1D, Histogram1D)> {
    config.validate()?;
    if n_shots == 0 {
        return Err(Error::InvalidArgument("n_shots must be positive".into()));
    }
    let model = ReadoutModel::new(config);
    let axis = config.q_axis()?;
    let mut out = [Histogram1D::new(axis.clone()), Histogram1D::new(axis)];
    for (k, hist) in out.iter_mut().enumerate() {
        let mut rng = stream_rng(config.seed, RunTag::ReadoutReference, Basis::Z, k as u32);
        for _ in 0..n_shots {
            hist.push(model.sample(&mut rng, k == 1));
        }
    }
    let [g, e] = out;
    Ok((g, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip() {
        let c = DetectorConfig::default();
        let (g, _) = readout_reference_histograms(&c, 5000).unwrap();
        let mut buf = Vec::new();
        g.write_csv(&mut buf).unwrap();
        assert_eq!(Histogram1D::read_csv(buf.as_slice()).unwrap(), g);
        assert!(Histogram1D::read_csv("q_lo,q_hi,count\n".as_bytes()).is_err());
    }

    /// Trapezoid integration of the two configured densities up to `t`.
    fn fidelity_by_quadrature(c: &DetectorConfig, t: f64) -> f64 {
        let pdf = |x: f64, mu: f64| {
            (-(x - mu).powi(2) / (2.0 * c.readout_sigma.powi(2))).exp()
                / (c.readout_sigma * (2.0 * std::f64::consts::PI).sqrt())
        };
        let lo = -20.0;
        let n = 200_000;
        let h = (t - lo) / n as f64;
        let mut pg = 0.0;
        let mut pe = 0.0;
        for i in 0..=n {
            let x = lo + i as f64 * h;
            let w = if i == 0 || i == n { 0.5 * h } else { h };
            pg += w * pdf(x, c.readout_mu_g);
            pe += w * (c.readout_decay_mix * pdf(x, c.readout_mu_g) + (1.0 - c.readout_decay_mix) * pdf(x, c.readout_mu_e));
        }
        pg - pe
    }

    #[test]
    fn default_fidelity_near_37_percent() {
        let c = DetectorConfig::default();
        let f = discrimination_fidelity(&c);
        let best = (-300..=300)
            .map(|i| fidelity_by_quadrature(&c, i as f64 * 0.01))
            .fold(f64::MIN, f64::max);
        assert!((f - best).abs() < 1e-6, "{f} vs {best}");
        assert!((f - 0.37).abs() < 0.03, "{f}");
    }

    #[test]
    fn references_follow_model() {
        let c = DetectorConfig::default();
        let n = 200_000;
        let (g, e) = readout_reference_histograms(&c, n).unwrap();
        assert_eq!(g.in_range() + g.overflow(), n as u64);
        let mean = |h: &Histogram1D| {
            h.counts()
                .iter()
                .enumerate()
                .map(|(i, &k)| h.axis().center(i) * k as f64)
                .sum::<f64>()
                / h.in_range() as f64
        };
        // centers of 1.5-wide bins add variance, not bias, for a symmetric density
        let tol = 3.0 * (1.2f64.powi(2) + 1.5f64.powi(2) / 12.0).sqrt() / (n as f64).sqrt() + 0.01;
        assert!((mean(&g) + 1.0).abs() < tol, "{}", mean(&g));
        assert!(mean(&e) > mean(&g));
    }

    #[test]
    fn no_decay_gives_single_gaussian_at_mu_e() {
        let c = DetectorConfig {
            readout_decay_mix: 0.0,
            ..DetectorConfig::default()
        };
        let m = ReadoutModel::new(&c);
        let mut rng = stream_rng(3, RunTag::ReadoutReference, Basis::Z, 9);
        let n = 100_000;
        let xs: Vec<f64> = (0..n).map(|_| m.sample(&mut rng, true)).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        assert!((mean - 1.0).abs() < 3.0 * 1.2 / (n as f64).sqrt());
        assert!((var.sqrt() - 1.2).abs() < 0.01);
    }
}
