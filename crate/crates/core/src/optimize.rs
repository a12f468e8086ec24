//! One-dimensional minimization of unimodal functions.

const INV_PHI: f64 = 0.618_033_988_749_894_8;

/// Golden-section search for the minimizer of a unimodal `f` on `[lo, hi]`.
///
/// Stops once the bracket is narrower than `tol` and returns its midpoint,
/// so the result is within `tol / 2` of the true minimizer.
pub fn golden_section_min<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64, tol: f64) -> f64 {
    assert!(lo <= hi, "empty bracket [{lo}, {hi}]");
    assert!(tol > 0.0);
    let (mut a, mut b) = (lo, hi);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while b - a > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    let mid = 0.5 * (a + b);
    // The interior probes can miss a minimizer sitting on the boundary.
    let candidates = [(lo, f(lo)), (mid, f(mid)), (hi, f(hi))];
    candidates
        .into_iter()
        .min_by(|x, y| x.1.total_cmp(&y.1))
        .map(|(x, _)| x)
        .unwrap_or(mid)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_parabola_vertex() {
        let x = golden_section_min(|x| (x - 3.25).powi(2), -10.0, 10.0, 1e-9);
        assert!((x - 3.25).abs() < 1e-9);
    }

    #[test]
    fn monotone_ends_at_boundary() {
        assert_eq!(golden_section_min(|x| -x, 0.0, 5.0, 1e-6), 5.0);
        assert_eq!(golden_section_min(|x| x, 0.0, 5.0, 1e-6), 0.0);
    }

    #[test]
    fn degenerate_bracket() {
        assert_eq!(golden_section_min(|x| x * x, 2.0, 2.0, 1e-6), 2.0);
    }
}
