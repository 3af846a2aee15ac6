//! Binned `(X, P, Q)` counts and their file formats.
//!
//! Binary layout (little-endian):
//!
//! ```text
//! magic    b"QPH3"
//! basis    u8   (b'x' | b'y' | b'z')
//! bins     u32 × 3   (X, P, Q)
//! overflow u64
//! edges    f64 × (bins_x + 1), f64 × (bins_p + 1), f64 × (bins_q + 1)
//! counts   u64 × bins_x·bins_p·bins_q, Q fastest, then P, then X
//! ```

use std::io::{Read, Write};

use super::{DetectorConfig, Shot};
use crate::error::{Error, Result};
use crate::Basis;

const MAGIC: &[u8; 4] = b"QPH3";

/// Uniform bins on `[lo, hi)`.
#[derive(Clone, Debug, PartialEq)]
pub struct BinAxis {
    edges: Vec<f64>,
    lo: f64,
    hi: f64,
    inv_width: f64,
}

impl BinAxis {
    pub fn uniform(lo: f64, hi: f64, bins: usize) -> Result<Self> {
        if bins < 2 {
            return Err(Error::InvalidArgument(format!("need at least 2 bins, got {bins}")));
        }
        if !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::InvalidArgument(format!("bad bin range [{lo}, {hi})")));
        }
        let width = (hi - lo) / bins as f64;
        let mut edges: Vec<f64> = (0..=bins).map(|i| lo + i as f64 * width).collect();
        edges[bins] = hi;
        Ok(BinAxis {
            edges,
            lo,
            hi,
            inv_width: 1.0 / width,
        })
    }

    fn from_edges(edges: Vec<f64>) -> Result<Self> {
        if edges.len() < 3 || edges.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Format("histogram edges must increase".into()));
        }
        let lo = edges[0];
        let hi = edges[edges.len() - 1];
        let bins = edges.len() - 1;
        Ok(BinAxis {
            inv_width: bins as f64 / (hi - lo),
            lo,
            hi,
            edges,
        })
    }

    pub fn bins(&self) -> usize {
        self.edges.len() - 1
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn range(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    pub fn center(&self, i: usize) -> f64 {
        0.5 * (self.edges[i] + self.edges[i + 1])
    }

    /// Bin containing `x`, left edge inclusive.
    #[inline]
    pub fn locate(&self, x: f64) -> Option<usize> {
        if !(x >= self.lo && x < self.hi) {
            return None;
        }
        let last = self.edges.len() - 2;
        let mut i = (((x - self.lo) * self.inv_width) as usize).min(last);
        if x < self.edges[i] {
            i -= 1;
        } else if x >= self.edges[i + 1] {
            i += 1;
        }
        Some(i)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Histogram3D {
    basis: Basis,
    x: BinAxis,
    p: BinAxis,
    q: BinAxis,
    counts: Vec<u64>,
    overflow: u64,
}

impl Histogram3D {
    pub fn new(basis: Basis, x: BinAxis, p: BinAxis, q: BinAxis) -> Self {
        let n = x.bins() * p.bins() * q.bins();
        Histogram3D {
            basis,
            x,
            p,
            q,
            counts: vec![0; n],
            overflow: 0,
        }
    }

    pub fn for_config(basis: Basis, config: &DetectorConfig) -> Result<Self> {
        let r = config.hist_range_xp;
        let (qlo, qhi) = config.q_range();
        Ok(Histogram3D::new(
            basis,
            BinAxis::uniform(-r, r, config.hist_bins_xp)?,
            BinAxis::uniform(-r, r, config.hist_bins_xp)?,
            BinAxis::uniform(qlo, qhi, config.hist_bins_q)?,
        ))
    }

    pub fn basis(&self) -> Basis {
        self.basis
    }

    pub fn x_axis(&self) -> &BinAxis {
        &self.x
    }

    pub fn p_axis(&self) -> &BinAxis {
        &self.p
    }

    pub fn q_axis(&self) -> &BinAxis {
        &self.q
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn overflow(&self) -> u64 {
        self.overflow
    }

    /// In-range shots.
    pub fn in_range(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn total(&self) -> u64 {
        self.in_range() + self.overflow
    }

    #[inline]
    pub fn index(&self, ix: usize, ip: usize, iq: usize) -> usize {
        (ix * self.p.bins() + ip) * self.q.bins() + iq
    }

    /// Q-column of the `(X, P)` bin.
    pub fn column(&self, ix: usize, ip: usize) -> &[u64] {
        let start = self.index(ix, ip, 0);
        &self.counts[start..start + self.q.bins()]
    }

    /// Record one outcome; no basis check.
    #[inline]
    pub fn push(&mut self, x: f64, p: f64, q: f64) {
        match (self.x.locate(x), self.p.locate(p), self.q.locate(q)) {
            (Some(ix), Some(ip), Some(iq)) => {
                let i = self.index(ix, ip, iq);
                self.counts[i] += 1;
            }
            _ => self.overflow += 1,
        }
    }

    pub fn accumulate(&mut self, shots: &[Shot]) -> Result<()> {
        if let Some(bad) = shots.iter().find(|s| s.basis != self.basis) {
            return Err(Error::BasisMismatch {
                expected: self.basis,
                found: bad.basis,
            });
        }
        for s in shots {
            self.push(s.x, s.p, s.q);
        }
        Ok(())
    }

    pub fn empty_like(&self) -> Self {
        Histogram3D::new(self.basis, self.x.clone(), self.p.clone(), self.q.clone())
    }

    fn check_compatible(&self, other: &Histogram3D) -> Result<()> {
        if self.basis != other.basis {
            return Err(Error::BasisMismatch {
                expected: self.basis,
                found: other.basis,
            });
        }
        if self.x != other.x || self.p != other.p || self.q != other.q {
            return Err(Error::EdgeMismatch);
        }
        Ok(())
    }

    pub fn merge_into(&mut self, other: &Histogram3D) -> Result<()> {
        self.check_compatible(other)?;
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.overflow += other.overflow;
        Ok(())
    }

    pub fn merge(&self, other: &Histogram3D) -> Result<Histogram3D> {
        let mut out = self.clone();
        out.merge_into(other)?;
        Ok(out)
    }

    /// Sum of several histograms with identical binning.
    pub fn merge_all<'a, I: IntoIterator<Item = &'a Histogram3D>>(parts: I) -> Result<Histogram3D> {
        let mut it = parts.into_iter();
        let mut out = it
            .next()
            .ok_or_else(|| Error::NoData("nothing to merge".into()))?
            .clone();
        for h in it {
            out.merge_into(h)?;
        }
        Ok(out)
    }

    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&[self.basis.tag()])?;
        for axis in [&self.x, &self.p, &self.q] {
            w.write_all(&(axis.bins() as u32).to_le_bytes())?;
        }
        w.write_all(&self.overflow.to_le_bytes())?;
        for axis in [&self.x, &self.p, &self.q] {
            for e in axis.edges() {
                w.write_all(&e.to_le_bytes())?;
            }
        }
        let mut buf = Vec::with_capacity(self.counts.len() * 8);
        for c in &self.counts {
            buf.extend_from_slice(&c.to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("not a histogram file".into()));
        }
        let mut tag = [0u8; 1];
        r.read_exact(&mut tag)?;
        let basis = Basis::from_tag(tag[0])?;
        let mut bins = [0usize; 3];
        for b in &mut bins {
            let mut u = [0u8; 4];
            r.read_exact(&mut u)?;
            *b = u32::from_le_bytes(u) as usize;
        }
        let overflow = read_u64(&mut r)?;
        let mut axes = Vec::with_capacity(3);
        for &b in &bins {
            let mut edges = Vec::with_capacity(b + 1);
            for _ in 0..=b {
                edges.push(f64::from_le_bytes(read_u64(&mut r)?.to_le_bytes()));
            }
            axes.push(BinAxis::from_edges(edges)?);
        }
        let n = bins[0] * bins[1] * bins[2];
        let mut raw = vec![0u8; n * 8];
        r.read_exact(&mut raw)?;
        let counts = raw
            .chunks_exact(8)
            .map(|c| u64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        let q = axes.pop().expect("three axes");
        let p = axes.pop().expect("three axes");
        let x = axes.pop().expect("three axes");
        Ok(Histogram3D {
            basis,
            x,
            p,
            q,
            counts,
            overflow,
        })
    }

    /// Non-empty bins as `x_center,p_center,q_center,count` rows.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# basis={} overflow={}", self.basis, self.overflow)?;
        writeln!(w, "x,p,q,count")?;
        for ix in 0..self.x.bins() {
            for ip in 0..self.p.bins() {
                for (iq, &c) in self.column(ix, ip).iter().enumerate() {
                    if c > 0 {
                        writeln!(
                            w,
                            "{},{},{},{}",
                            self.x.center(ix),
                            self.p.center(ip),
                            self.q.center(iq),
                            c
                        )?;
                    }
                }
            }
        }
        Ok(())
    }
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(basis: Basis) -> Histogram3D {
        Histogram3D::new(
            basis,
            BinAxis::uniform(-2.0, 2.0, 4).unwrap(),
            BinAxis::uniform(-2.0, 2.0, 4).unwrap(),
            BinAxis::uniform(-1.0, 1.0, 2).unwrap(),
        )
    }

    fn shot(x: f64, p: f64, q: f64) -> Shot {
        Shot {
            basis: Basis::Z,
            x,
            p,
            q,
        }
    }

    #[test]
    fn known_coordinates_fill_unit_bins() {
        let mut h = small(Basis::Z);
        h.accumulate(&[shot(-1.5, 0.2, -0.5), shot(0.0, 0.0, 0.0), shot(1.99, -2.0, 0.99)])
            .unwrap();
        assert_eq!(h.counts()[h.index(0, 2, 0)], 1);
        assert_eq!(h.counts()[h.index(2, 2, 1)], 1);
        assert_eq!(h.counts()[h.index(3, 0, 1)], 1);
        assert_eq!(h.in_range(), 3);
        assert_eq!(h.overflow(), 0);
    }

    #[test]
    fn upper_bound_overflows() {
        let mut h = small(Basis::Z);
        h.accumulate(&[shot(2.0, 0.0, 0.0), shot(0.0, 0.0, 1.0), shot(f64::NAN, 0.0, 0.0)])
            .unwrap();
        assert_eq!(h.in_range(), 0);
        assert_eq!(h.overflow(), 3);
        let mut h = small(Basis::Z);
        h.push(-2.0, -2.0, -1.0);
        assert_eq!(h.counts()[0], 1);
    }

    #[test]
    fn basis_and_edge_checks() {
        let mut h = small(Basis::X);
        assert!(matches!(h.accumulate(&[shot(0.0, 0.0, 0.0)]), Err(Error::BasisMismatch { .. })));
        assert!(small(Basis::X).merge(&small(Basis::Z)).is_err());
        let other = Histogram3D::new(
            Basis::X,
            BinAxis::uniform(-3.0, 3.0, 4).unwrap(),
            BinAxis::uniform(-2.0, 2.0, 4).unwrap(),
            BinAxis::uniform(-1.0, 1.0, 2).unwrap(),
        );
        assert!(matches!(small(Basis::X).merge(&other), Err(Error::EdgeMismatch)));
    }

    #[test]
    fn merge_identity_and_commutation() {
        let mut a = small(Basis::Z);
        let mut b = small(Basis::Z);
        a.accumulate(&[shot(0.1, 0.1, 0.1), shot(5.0, 0.0, 0.0)]).unwrap();
        b.accumulate(&[shot(-0.1, 1.1, -0.1)]).unwrap();
        assert_eq!(a.merge(&a.empty_like()).unwrap(), a);
        assert_eq!(a.merge(&b).unwrap(), b.merge(&a).unwrap());
        assert_eq!(a.merge(&b).unwrap().total(), 3);
    }

    #[test]
    fn binary_round_trip() {
        let mut h = small(Basis::Y);
        h.push(0.3, -0.7, 0.5);
        h.push(9.0, 0.0, 0.0);
        let mut buf = Vec::new();
        h.write_binary(&mut buf).unwrap();
        assert_eq!(buf.len(), 4 + 1 + 12 + 8 + 8 * (5 + 5 + 3) + 8 * 32);
        assert_eq!(Histogram3D::read_binary(&buf[..]).unwrap(), h);
        buf[0] = b'X';
        assert!(Histogram3D::read_binary(&buf[..]).is_err());
    }
}
