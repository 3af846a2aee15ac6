//! One-dimensional grid scan with golden-section refinement.

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Minimize `f` on `[lo, hi]`: evaluate `points` equally spaced samples
/// (both ends included), then refine around the best sample.
pub fn scan_minimize<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64, points: usize) -> (f64, f64) {
    assert!(points >= 2 && hi > lo);
    let step = (hi - lo) / (points - 1) as f64;
    let mut best = (lo, f(lo));
    for k in 1..points {
        let x = lo + k as f64 * step;
        let v = f(x);
        if v < best.1 {
            best = (x, v);
        }
    }
    let (x, v) = golden_section(&mut f, best.0 - step, best.0 + step, 1e-12);
    if v < best.1 {
        (x, v)
    } else {
        best
    }
}

fn golden_section<F: FnMut(f64) -> f64>(f: &mut F, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let mut c = b - (b - a) * INV_PHI;
    let mut d = a + (b - a) * INV_PHI;
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..200 {
        if (b - a).abs() <= tol {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - (b - a) * INV_PHI;
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + (b - a) * INV_PHI;
            fd = f(d);
        }
    }
    if fc < fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_parabola_minimum() {
        let (x, v) = scan_minimize(|x| (x - 1.234).powi(2) + 0.5, 0.0, 3.0, 31);
        assert!((x - 1.234).abs() < 1e-6);
        assert!((v - 0.5).abs() < 1e-12);
    }

    #[test]
    fn picks_global_of_multimodal() {
        let (x, _) = scan_minimize(|x| (3.0 * x).cos() + 0.1 * x, 0.0, 2.0 * std::f64::consts::PI, 721);
        // minima near π/3, π, 5π/3; the tilt favours the first
        assert!((x - std::f64::consts::PI / 3.0).abs() < 0.05);
    }
}
