use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use super::grid::BlochGrid;
use crate::detection::Histogram3D;
use crate::error::{Error, Result};
use crate::hilbert::C64;
use crate::{Basis, Sigma};

/// Highest total order `n + m` handled anywhere.
pub const MAX_ORDER: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Moment {
    pub value: C64,
    /// `√(var Re + var Im)`.
    pub std_error: f64,
}

impl Moment {
    pub fn exact(value: C64) -> Self {
        Moment { value, std_error: 0.0 }
    }

    fn conj(self) -> Self {
        Moment {
            value: self.value.conj(),
            std_error: self.std_error,
        }
    }
}

/// `⟨(a†)ⁿ aᵐ σ_i⟩` for `n + m ≤ max_order`.
///
/// Only `n ≥ m` is stored; lookups with `n < m` return the conjugate.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentSet {
    max_order: usize,
    entries: BTreeMap<(usize, usize, Sigma), Moment>,
}

impl MomentSet {
    pub fn new(max_order: usize) -> Result<Self> {
        if max_order > MAX_ORDER {
            return Err(Error::InvalidArgument(format!("moment order {max_order} above {MAX_ORDER}")));
        }
        Ok(MomentSet {
            max_order,
            entries: BTreeMap::new(),
        })
    }

    pub fn max_order(&self) -> usize {
        self.max_order
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn insert(&mut self, n: usize, m: usize, sigma: Sigma, moment: Moment) -> Result<()> {
        if n + m > self.max_order {
            return Err(Error::InvalidArgument(format!(
                "moment ({n},{m}) above order {}",
                self.max_order
            )));
        }
        let (key, moment) = if n >= m {
            ((n, m, sigma), moment)
        } else {
            ((m, n, sigma), moment.conj())
        };
        self.entries.insert(key, moment);
        Ok(())
    }

    pub fn get(&self, n: usize, m: usize, sigma: Sigma) -> Result<Moment> {
        let found = if n >= m {
            self.entries.get(&(n, m, sigma)).copied()
        } else {
            self.entries.get(&(m, n, sigma)).map(|x| x.conj())
        };
        found.ok_or(Error::MissingMoment { n, m, sigma })
    }

    pub fn value(&self, n: usize, m: usize, sigma: Sigma) -> Result<C64> {
        self.get(n, m, sigma).map(|x| x.value)
    }

    /// Stored entries, `n ≥ m`, ordered by `(n, m, σ)`.
    pub fn iter(&self) -> impl Iterator<Item = ((usize, usize, Sigma), Moment)> + '_ {
        self.entries.iter().map(|(k, v)| (*k, *v))
    }

    /// Same values with the errors of `other` (matched by key).
    pub fn with_errors_from(&self, other: &MomentSet) -> Result<MomentSet> {
        let mut out = self.clone();
        for (key, m) in out.entries.iter_mut() {
            m.std_error = other.get(key.0, key.1, key.2)?.std_error;
        }
        Ok(out)
    }

    /// Text table `n m sigma_index real imag std_error`, including the
    /// conjugate rows `n < m`.
    pub fn write_table<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# n\tm\tsigma_index\treal\timag\tstd_error")?;
        let mut rows: Vec<(usize, usize, Sigma, Moment)> = Vec::new();
        for ((n, m, s), v) in self.iter() {
            rows.push((n, m, s, v));
            if n != m {
                rows.push((m, n, s, v.conj()));
            }
        }
        rows.sort_by_key(|r| (r.0 + r.1, r.0, r.1, r.2));
        for (n, m, s, v) in rows {
            writeln!(
                w,
                "{n}\t{m}\t{}\t{:.17e}\t{:.17e}\t{:.17e}",
                s.code(),
                v.value.re,
                v.value.im,
                v.std_error
            )?;
        }
        Ok(())
    }

    pub fn read_table<R: BufRead>(r: R) -> Result<MomentSet> {
        let mut rows = Vec::new();
        for (lineno, line) in r.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let f: Vec<&str> = line.split_whitespace().collect();
            let bad = || Error::Format(format!("moment table line {}: {line:?}", lineno + 1));
            if f.len() != 6 {
                return Err(bad());
            }
            let int = |s: &str| s.parse::<usize>().map_err(|_| bad());
            let float = |s: &str| s.parse::<f64>().map_err(|_| bad());
            rows.push((
                int(f[0])?,
                int(f[1])?,
                Sigma::from_code(int(f[2])?)?,
                Moment {
                    value: C64::new(float(f[3])?, float(f[4])?),
                    std_error: float(f[5])?,
                },
            ));
        }
        let order = rows.iter().map(|r| r.0 + r.1).max().unwrap_or(0);
        let mut set = MomentSet::new(order)?;
        for (n, m, s, v) in rows {
            if n >= m {
                set.insert(n, m, s, v)?;
            }
        }
        Ok(set)
    }
}

struct BinPowers {
    pow: [C64; MAX_ORDER + 1],
}

impl BinPowers {
    fn new(s: C64, order: usize) -> Self {
        let mut pow = [C64::new(0.0, 0.0); MAX_ORDER + 1];
        pow[0] = C64::new(1.0, 0.0);
        for k in 1..=order {
            pow[k] = pow[k - 1] * s;
        }
        BinPowers { pow }
    }

    /// `S̄ⁿ Sᵐ`
    fn term(&self, n: usize, m: usize) -> C64 {
        self.pow[n].conj() * self.pow[m]
    }
}

fn pairs(max_order: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..=max_order).flat_map(move |total| (0..=total / 2).map(move |m| (total - m, m)))
}

/// Identity moments `⟨(S†)ⁿ Sᵐ⟩` over all populated bins, using bin centres.
pub fn identity_moments(hist: &Histogram3D, max_order: usize) -> Result<MomentSet> {
    let mut set = MomentSet::new(max_order)?;
    let total = hist.in_range();
    if total == 0 {
        return Err(Error::NoData(format!("no in-range shots in basis {}", hist.basis())));
    }
    let mut acc = vec![C64::new(0.0, 0.0); (max_order + 1) * (max_order + 1)];
    let stride = max_order + 1;
    for ix in 0..hist.x_axis().bins() {
        let x = hist.x_axis().center(ix);
        for ip in 0..hist.p_axis().bins() {
            let c: u64 = hist.column(ix, ip).iter().sum();
            if c == 0 {
                continue;
            }
            let pw = BinPowers::new(C64::new(x, hist.p_axis().center(ip)), max_order);
            for (n, m) in pairs(max_order) {
                acc[n * stride + m] += pw.term(n, m) * c as f64;
            }
        }
    }
    for (n, m) in pairs(max_order) {
        set.insert(n, m, Sigma::Identity, Moment::exact(acc[n * stride + m] / total as f64))?;
    }
    set.insert(0, 0, Sigma::Identity, Moment::exact(C64::new(1.0, 0.0)))?;
    Ok(set)
}

/// `⟨(S†)ⁿ Sᵐ⟩` and `⟨(S†)ⁿ Sᵐ σ_basis⟩` from one basis histogram.
///
/// Sums run over the grid's valid bins with `p_b = count_b / Σ_valid count`
/// and `σ = 1 − 2w` per bin, where `w` is the unclipped fit so the estimate
/// stays linear in the counts.
pub fn raw_moments(hist: &Histogram3D, grid: &BlochGrid, max_order: usize) -> Result<MomentSet> {
    if grid.basis() != hist.basis() {
        return Err(Error::BasisMismatch {
            expected: hist.basis(),
            found: grid.basis(),
        });
    }
    if grid.shape() != (hist.x_axis().bins(), hist.p_axis().bins()) {
        return Err(Error::EdgeMismatch);
    }
    let mut set = MomentSet::new(max_order)?;
    let stride = max_order + 1;
    let mut acc_id = vec![C64::new(0.0, 0.0); stride * stride];
    let mut acc_s = vec![C64::new(0.0, 0.0); stride * stride];
    let mut total = 0u64;
    for ix in 0..hist.x_axis().bins() {
        let x = hist.x_axis().center(ix);
        for ip in 0..hist.p_axis().bins() {
            let Some(w) = grid.w_fit(ix, ip) else { continue };
            let c = grid.shot_count(ix, ip);
            total += c;
            let pw = BinPowers::new(C64::new(x, hist.p_axis().center(ip)), max_order);
            let b = 1.0 - 2.0 * w;
            for (n, m) in pairs(max_order) {
                let t = pw.term(n, m) * c as f64;
                acc_id[n * stride + m] += t;
                acc_s[n * stride + m] += t * b;
            }
        }
    }
    if total == 0 {
        return Err(Error::NoData(format!("no valid bins in basis {}", hist.basis())));
    }
    let sigma = hist.basis().sigma();
    let norm = 1.0 / total as f64;
    for (n, m) in pairs(max_order) {
        set.insert(n, m, Sigma::Identity, Moment::exact(acc_id[n * stride + m] * norm))?;
        set.insert(n, m, sigma, Moment::exact(acc_s[n * stride + m] * norm))?;
    }
    set.insert(0, 0, Sigma::Identity, Moment::exact(C64::new(1.0, 0.0)))?;
    Ok(set)
}

/// Full raw set from one set per basis: σ moments from their own basis,
/// identity moments averaged over the three.
pub fn combine_bases(per_basis: &[(Basis, MomentSet)]) -> Result<MomentSet> {
    let order = per_basis
        .iter()
        .map(|(_, s)| s.max_order())
        .min()
        .ok_or_else(|| Error::NoData("no basis moment sets".into()))?;
    for b in Basis::ALL {
        if !per_basis.iter().any(|(x, _)| *x == b) {
            return Err(Error::NoData(format!("missing basis {b}")));
        }
    }
    let mut out = MomentSet::new(order)?;
    let k = per_basis.len() as f64;
    for (n, m) in pairs(order) {
        let mut id = C64::new(0.0, 0.0);
        for (b, set) in per_basis {
            id += set.value(n, m, Sigma::Identity)?;
            out.insert(n, m, b.sigma(), set.get(n, m, b.sigma())?)?;
        }
        out.insert(n, m, Sigma::Identity, Moment::exact(id / k))?;
    }
    out.insert(0, 0, Sigma::Identity, Moment::exact(C64::new(1.0, 0.0)))?;
    Ok(out)
}

pub(crate) fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Remove amplifier noise: with `S = a + h†`,
/// `⟨(S†)ⁿSᵐσ⟩ = Σ_{j≤n,k≤m} C(n,j) C(m,k) ⟨(a†)ʲaᵏσ⟩ ⟨hⁿ⁻ʲ(h†)ᵐ⁻ᵏ⟩`,
/// and `⟨hᵖ(h†)^q⟩` is read off the vacuum-input reference as
/// `⟨(S†)ᵖS^q⟩_ref`. Solved in increasing order; errors add in quadrature.
pub fn deconvolve(raw: &MomentSet, reference: &MomentSet, max_order: usize) -> Result<MomentSet> {
    let mut out = MomentSet::new(max_order)?;
    let sigmas: Vec<Sigma> = Sigma::ALL
        .into_iter()
        .filter(|&s| raw.get(0, 0, s).is_ok())
        .collect();
    for (n, m) in pairs(max_order) {
        for &s in &sigmas {
            let r = raw.get(n, m, s)?;
            let mut value = r.value;
            let mut var = r.std_error * r.std_error;
            for j in 0..=n {
                for k in 0..=m {
                    if j == n && k == m {
                        continue;
                    }
                    let c = binomial(n, j) * binomial(m, k);
                    let a = out.get(j, k, s)?;
                    let h = reference.get(n - j, m - k, Sigma::Identity)?;
                    value -= a.value * h.value * c;
                    var += c * c * (h.value.norm_sqr() * a.std_error.powi(2) + a.value.norm_sqr() * h.std_error.powi(2));
                }
            }
            out.insert(
                n,
                m,
                s,
                Moment {
                    value,
                    std_error: var.sqrt(),
                },
            )?;
        }
    }
    if sigmas.contains(&Sigma::Identity) {
        out.insert(0, 0, Sigma::Identity, Moment::exact(C64::new(1.0, 0.0)))?;
    }
    Ok(out)
}

/// Batch statistics: each `(raw, reference)` pair is deconvolved, and the
/// error is the sample standard deviation across batches over `√B`.
/// Values are the batch means.
pub fn bootstrap_errors(batches: &[(MomentSet, MomentSet)], max_order: usize) -> Result<MomentSet> {
    if batches.len() < 2 {
        return Err(Error::InvalidArgument(format!("{} batches; need at least 2", batches.len())));
    }
    let decon: Vec<MomentSet> = batches
        .iter()
        .map(|(raw, reference)| deconvolve(raw, reference, max_order))
        .collect::<Result<_>>()?;
    let b = decon.len() as f64;
    let mut out = MomentSet::new(max_order)?;
    for (key, _) in decon[0].iter() {
        let vals: Vec<C64> = decon
            .iter()
            .map(|d| d.value(key.0, key.1, key.2))
            .collect::<Result<_>>()?;
        let mean = vals.iter().sum::<C64>() / b;
        let var = vals.iter().map(|v| (v - mean).norm_sqr()).sum::<f64>() / (b - 1.0);
        out.insert(
            key.0,
            key.1,
            key.2,
            Moment {
                value: mean,
                std_error: (var / b).sqrt(),
            },
        )?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detection::{BinAxis, Histogram1D};
    use crate::tomography::grid::extract_populations;

    #[test]
    fn single_bin_at_one() {
        let xp = BinAxis::uniform(-2.0, 2.0, 4).unwrap();
        let q = BinAxis::uniform(-3.0, 3.0, 2).unwrap();
        let mut h = Histogram3D::new(Basis::Z, xp.clone(), xp, q.clone());
        for _ in 0..20 {
            h.push(1.2, -0.5, -1.0);
        }
        let g = Histogram1D::from_counts(q.clone(), vec![9, 1]).unwrap();
        let e = Histogram1D::from_counts(q, vec![1, 9]).unwrap();
        let grid = extract_populations(&h, &g, &e, 10).unwrap();
        let w = grid.w_fit(3, 1).unwrap();
        let raw = raw_moments(&h, &grid, 4).unwrap();
        let s = C64::new(1.5, -0.5);
        assert!((raw.value(1, 0, Sigma::Identity).unwrap() - s.conj()).norm() < 1e-15);
        assert!((raw.value(0, 1, Sigma::Z).unwrap() - s * (1.0 - 2.0 * w)).norm() < 1e-15);
        assert_eq!(raw.value(0, 0, Sigma::Identity).unwrap(), C64::new(1.0, 0.0));
    }

    #[test]
    fn conjugate_lookup() {
        let mut set = MomentSet::new(4).unwrap();
        set.insert(0, 2, Sigma::X, Moment::exact(C64::new(0.3, 0.4))).unwrap();
        assert_eq!(set.value(2, 0, Sigma::X).unwrap(), C64::new(0.3, -0.4));
        assert_eq!(set.value(0, 2, Sigma::X).unwrap(), C64::new(0.3, 0.4));
        assert!(matches!(set.get(1, 1, Sigma::X), Err(Error::MissingMoment { .. })));
        assert!(set.insert(3, 2, Sigma::X, Moment::exact(C64::new(0.0, 0.0))).is_err());
    }

    #[test]
    fn table_round_trip() {
        let mut set = MomentSet::new(2).unwrap();
        set.insert(1, 0, Sigma::Y, Moment { value: C64::new(0.1, -1.0 / 3.0), std_error: 0.02 })
            .unwrap();
        set.insert(1, 1, Sigma::Identity, Moment { value: C64::new(0.5, 0.0), std_error: 1e-3 })
            .unwrap();
        let mut buf = Vec::new();
        set.write_table(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().count(), 4);
        let back = MomentSet::read_table(&buf[..]).unwrap();
        assert_eq!(back.value(1, 0, Sigma::Y).unwrap(), set.value(1, 0, Sigma::Y).unwrap());
        assert_eq!(back.get(1, 1, Sigma::Identity).unwrap(), set.get(1, 1, Sigma::Identity).unwrap());
        assert!(MomentSet::read_table(&b"1 0 9 0 0 0\n"[..]).is_err());
    }

    fn vacuum_reference(noise: f64, order: usize) -> MomentSet {
        // ⟨hᵖ(h†)^q⟩ = δ_pq p! (1+N)^p for a thermal-like noise mode
        let mut set = MomentSet::new(order).unwrap();
        for (n, m) in pairs(order) {
            let v = if n == m {
                (1..=n).map(|k| k as f64).product::<f64>() * (1.0 + noise).powi(n as i32)
            } else {
                0.0
            };
            set.insert(n, m, Sigma::Identity, Moment::exact(C64::new(v, 0.0))).unwrap();
        }
        set
    }

    #[test]
    fn single_photon_bookkeeping() {
        let noise = 5.6;
        let mut raw = MomentSet::new(2).unwrap();
        for (n, m) in pairs(2) {
            raw.insert(n, m, Sigma::Identity, Moment::exact(C64::new(0.0, 0.0))).unwrap();
        }
        raw.insert(0, 0, Sigma::Identity, Moment::exact(C64::new(1.0, 0.0))).unwrap();
        raw.insert(1, 1, Sigma::Identity, Moment::exact(C64::new(1.0 + (1.0 + noise), 0.0)))
            .unwrap();
        let out = deconvolve(&raw, &vacuum_reference(noise, 2), 2).unwrap();
        assert!((out.value(1, 1, Sigma::Identity).unwrap().re - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_noise_reference_is_identity() {
        let mut reference = MomentSet::new(4).unwrap();
        let mut raw = MomentSet::new(4).unwrap();
        for (n, m) in pairs(4) {
            let v = if n + m == 0 { 1.0 } else { 0.0 };
            reference.insert(n, m, Sigma::Identity, Moment::exact(C64::new(v, 0.0))).unwrap();
            for s in Sigma::ALL {
                let x = C64::new(0.1 * n as f64 + 0.01 * s.code() as f64, 0.07 * m as f64 - 0.02);
                let x = if n == m { C64::new(x.re, 0.0) } else { x };
                raw.insert(n, m, s, Moment { value: x, std_error: 0.01 }).unwrap();
            }
        }
        raw.insert(0, 0, Sigma::Identity, Moment::exact(C64::new(1.0, 0.0))).unwrap();
        let out = deconvolve(&raw, &reference, 4).unwrap();
        for (k, v) in raw.iter() {
            let o = out.get(k.0, k.1, k.2).unwrap();
            assert!((o.value - v.value).norm() < 1e-15);
            assert!((o.std_error - v.std_error).abs() < 1e-15);
        }
    }

    #[test]
    fn missing_reference_order_is_an_error() {
        let reference = vacuum_reference(1.0, 2);
        let mut raw = MomentSet::new(3).unwrap();
        for (n, m) in pairs(3) {
            raw.insert(n, m, Sigma::Identity, Moment::exact(C64::new(0.0, 0.0))).unwrap();
        }
        assert!(matches!(deconvolve(&raw, &reference, 3), Err(Error::MissingMoment { .. })));
    }

    #[test]
    fn identical_batches_have_zero_error() {
        let reference = vacuum_reference(2.0, 2);
        let mut raw = MomentSet::new(2).unwrap();
        for (n, m) in pairs(2) {
            raw.insert(n, m, Sigma::Identity, Moment::exact(C64::new(1.0 + n as f64, 0.0))).unwrap();
        }
        let batches = vec![(raw.clone(), reference.clone()); 8];
        let out = bootstrap_errors(&batches, 2).unwrap();
        assert!(out.iter().all(|(_, m)| m.std_error == 0.0));
        assert!(bootstrap_errors(&batches[..1], 2).is_err());
    }
}
