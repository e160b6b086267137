//! One-dimensional searches used by the per-pair subproblems.

use crate::scalar::Scalar;

/// Maximizes a unimodal `f` on `[lo, hi]` by golden-section search.
///
/// Returns `(x, f(x))` for the best point evaluated, endpoints included, so a
/// maximum on the boundary is found exactly.
pub fn golden_section_max<T: Scalar>(mut f: impl FnMut(T) -> T, lo: T, hi: T, tol: T) -> (T, T) {
    let f_lo = f(lo);
    let f_hi = f(hi);
    let mut best = if f_hi > f_lo { (hi, f_hi) } else { (lo, f_lo) };
    if hi <= lo {
        return best;
    }
    let tol = tol.max(T::epsilon().sqrt() * (T::one() + hi.abs().max(lo.abs())) * T::lit(1e-3));
    let inv_phi = (T::lit(5.0).sqrt() - T::one()) / T::lit(2.0);
    let (mut a, mut b) = (lo, hi);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..200 {
        if b - a <= tol {
            break;
        }
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    for (x, fx) in [(c, fc), (d, fd)] {
        if fx > best.1 {
            best = (x, fx);
        }
    }
    best
}

/// Grid scan followed by golden-section refinement around the best grid point.
///
/// Suitable for objectives that are not known to be unimodal.
pub fn scan_then_refine<T: Scalar>(mut f: impl FnMut(T) -> T, lo: T, hi: T, points: usize, tol: T) -> (T, T) {
    let points = points.max(2);
    let step = (hi - lo) / T::lit((points - 1) as f64);
    let mut best = (lo, f(lo));
    let mut best_i = 0;
    for i in 1..points {
        let x = if i == points - 1 { hi } else { lo + step * T::lit(i as f64) };
        let fx = f(x);
        if fx > best.1 {
            best = (x, fx);
            best_i = i;
        }
    }
    let a = if best_i == 0 { lo } else { best.0 - step };
    let b = if best_i == points - 1 { hi } else { best.0 + step };
    let refined = golden_section_max(&mut f, a.max(lo), b.min(hi), tol);
    if refined.1 > best.1 {
        refined
    } else {
        best
    }
}

/// Bisection for a sign change of `f` on `[lo, hi]`.
///
/// Requires `f(lo) < 0 <= f(hi)`. Returns the final bracket `(a, b)` with
/// `f(a) < 0 <= f(b)` and `b - a <= tol`.
pub fn bisect_bracket<T: Scalar>(mut f: impl FnMut(T) -> T, lo: T, hi: T, tol: T) -> (T, T) {
    let (mut a, mut b) = (lo, hi);
    for _ in 0..200 {
        if b - a <= tol {
            break;
        }
        let mid = a + (b - a) / T::lit(2.0);
        if mid <= a || mid >= b {
            break;
        }
        if f(mid) < T::zero() {
            a = mid;
        } else {
            b = mid;
        }
    }
    (a, b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn finds_interior_maximum() {
        let (x, fx) = golden_section_max(|x: f64| -(x - 0.3) * (x - 0.3), 0.0, 1.0, 1e-10);
        assert_relative_eq!(x, 0.3, epsilon = 1e-6);
        assert!(fx <= 0.0 && fx > -1e-12);
    }

    #[test]
    fn finds_boundary_maximum() {
        assert_eq!(golden_section_max(|x: f64| x, 0.0, 1.0, 1e-10).0, 1.0);
        assert_eq!(golden_section_max(|x: f64| -x, 0.0, 1.0, 1e-10).0, 0.0);
    }

    #[test]
    fn works_in_f32() {
        let (x, _) = golden_section_max(|x: f32| -(x - 0.7).abs(), 0.0, 1.0, 1e-6);
        assert!((x - 0.7).abs() < 1e-3);
    }

    #[test]
    fn scan_escapes_local_maximum() {
        // Two bumps; the taller one is near 0.8.
        let f = |x: f64| (-(x - 0.2).powi(2) * 200.0).exp() * 0.5 + (-(x - 0.8).powi(2) * 200.0).exp();
        let (x, _) = scan_then_refine(f, 0.0, 1.0, 41, 1e-10);
        assert_relative_eq!(x, 0.8, epsilon = 1e-5);
    }

    #[test]
    fn bisection_bracket_keeps_signs() {
        let f = |x: f64| x * x - 0.5;
        let (a, b) = bisect_bracket(f, 0.0, 1.0, 1e-13);
        assert!(f(a) < 0.0 && f(b) >= 0.0);
        assert!(b - a <= 1e-13);
        assert_relative_eq!(a, 0.5f64.sqrt(), epsilon = 1e-12);
    }
}
