use std::io::Write;

use crate::detection::{Histogram1D, Histogram3D};
use crate::error::{Error, Result};
use crate::Basis;

/// Default shot count below which a column is not fitted.
pub const MIN_COUNT: u64 = 10;

/// Excited-state weight per `(X, P)` bin.
#[derive(Clone, Debug, PartialEq)]
pub struct BlochGrid {
    basis: Basis,
    bins_x: usize,
    bins_p: usize,
    /// Least-squares weight, not clipped.
    fit: Vec<f64>,
    counts: Vec<u64>,
    valid: Vec<bool>,
}

impl BlochGrid {
    pub fn basis(&self) -> Basis {
        self.basis
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.bins_x, self.bins_p)
    }

    fn at(&self, ix: usize, ip: usize) -> usize {
        ix * self.bins_p + ip
    }

    /// Excited weight clipped to `[0, 1]`; `None` for invalid bins.
    pub fn w_e(&self, ix: usize, ip: usize) -> Option<f64> {
        let i = self.at(ix, ip);
        self.valid[i].then(|| self.fit[i].clamp(0.0, 1.0))
    }

    /// Unclipped fit; linear in the column counts.
    pub fn w_fit(&self, ix: usize, ip: usize) -> Option<f64> {
        let i = self.at(ix, ip);
        self.valid[i].then_some(self.fit[i])
    }

    pub fn shot_count(&self, ix: usize, ip: usize) -> u64 {
        self.counts[self.at(ix, ip)]
    }

    pub fn is_valid(&self, ix: usize, ip: usize) -> bool {
        self.valid[self.at(ix, ip)]
    }

    pub fn valid_bins(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    /// `x,p,count,valid,w_e,sigma` rows, `sigma = 1 − 2 w_e`; the grid of
    /// conditional Bloch components.
    pub fn write_csv<W: Write>(&self, hist: &Histogram3D, mut w: W) -> Result<()> {
        writeln!(w, "# basis={}", self.basis)?;
        writeln!(w, "x,p,count,valid,w_e,sigma")?;
        for ix in 0..self.bins_x {
            for ip in 0..self.bins_p {
                let c = self.shot_count(ix, ip);
                if c == 0 {
                    continue;
                }
                let (x, p) = (hist.x_axis().center(ix), hist.p_axis().center(ip));
                match self.w_e(ix, ip) {
                    Some(we) => writeln!(w, "{x},{p},{c},1,{we},{}", 1.0 - 2.0 * we)?,
                    None => writeln!(w, "{x},{p},{c},0,,")?,
                }
            }
        }
        Ok(())
    }
}

/// Fit every Q column with `count ≥ min_count` to `w·ref_e + (1 − w)·ref_g`.
///
/// Both references and the column are normalized to unit sum. The fit is the
/// closed-form least-squares solution
/// `w = Σ_j (f_j − g_j)(e_j − g_j) / Σ_j (e_j − g_j)²`.
pub fn extract_populations(
    hist: &Histogram3D,
    ref_g: &Histogram1D,
    ref_e: &Histogram1D,
    min_count: u64,
) -> Result<BlochGrid> {
    if ref_g.axis() != hist.q_axis() || ref_e.axis() != hist.q_axis() {
        return Err(Error::EdgeMismatch);
    }
    let g = ref_g.normalized()?;
    let e = ref_e.normalized()?;
    let d: Vec<f64> = e.iter().zip(&g).map(|(a, b)| a - b).collect();
    let dd: f64 = d.iter().map(|x| x * x).sum();
    if dd == 0.0 {
        return Err(Error::Singular("reference histograms are identical".into()));
    }
    let (bins_x, bins_p) = (hist.x_axis().bins(), hist.p_axis().bins());
    let n = bins_x * bins_p;
    let mut fit = vec![0.0; n];
    let mut counts = vec![0; n];
    let mut valid = vec![false; n];
    let min_count = min_count.max(1);
    for ix in 0..bins_x {
        for ip in 0..bins_p {
            let i = ix * bins_p + ip;
            let col = hist.column(ix, ip);
            let total: u64 = col.iter().sum();
            counts[i] = total;
            if total < min_count {
                continue;
            }
            let inv = 1.0 / total as f64;
            fit[i] = col
                .iter()
                .zip(&g)
                .zip(&d)
                .map(|((&c, gj), dj)| (c as f64 * inv - gj) * dj)
                .sum::<f64>()
                / dd;
            valid[i] = true;
        }
    }
    Ok(BlochGrid {
        basis: hist.basis(),
        bins_x,
        bins_p,
        fit,
        counts,
        valid,
    })
}
