//! Per-pair subproblems. With the time shares fixed, each pair's amplitude and
//! power variables only enter its own two rates, so the max-min over all users
//! splits into one max-min per pair.

use crate::scalar::Scalar;
use crate::search::{bisect_bracket, golden_section_max, scan_then_refine};
use crate::star_noma::{decoding_order, LinkParams, Tie};

use super::surrogate::{amplitude_surrogate_bound, power_surrogate_bound, GainCoefficients};
use super::SolverOptions;

/// One transmitted/reflected pair. The free amplitude variable is the
/// transmitted user's split `beta_t`; the reflected user gets `1 - beta_t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairProblem<T> {
    pub tu: GainCoefficients<T>,
    pub ru: GainCoefficients<T>,
    pub link: LinkParams<T>,
}

/// Unit (un-time-shared) rates of a pair and its decoding order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairRates<T> {
    pub tu: T,
    pub ru: T,
    /// Decoding order of the transmitted user; the reflected user has the complement.
    pub pi_tu: u8,
}

impl<T: Scalar> PairRates<T> {
    pub fn min(&self) -> T {
        self.tu.min(self.ru)
    }
}

fn log2_1p<T: Scalar>(x: T) -> T {
    x.ln_1p() / T::LN_2()
}

impl<T: Scalar> PairProblem<T> {
    pub fn gains(&self, beta_t: T) -> (T, T) {
        (self.tu.gain(beta_t), self.ru.gain(T::one() - beta_t))
    }

    pub fn order(&self, beta_t: T) -> u8 {
        let (g_t, g_r) = self.gains(beta_t);
        decoding_order(g_t, g_r, Tie::First).0
    }

    /// Rates at `(beta_t, rho_t)` with the decoding order given by the gains.
    pub fn rates(&self, beta_t: T, rho_t: T) -> PairRates<T> {
        let (g_t, g_r) = self.gains(beta_t);
        let pi_tu = decoding_order(g_t, g_r, Tie::First).0;
        self.rates_with_order(g_t, g_r, rho_t, pi_tu)
    }

    pub fn rates_with_order(&self, g_t: T, g_r: T, rho_t: T, pi_tu: u8) -> PairRates<T> {
        let LinkParams { power, noise } = self.link;
        let rho_r = T::one() - rho_t;
        let (int_t, int_r) = if pi_tu == 1 { (T::zero(), g_r * rho_t * power) } else { (g_t * rho_r * power, T::zero()) };
        PairRates {
            tu: log2_1p(g_t * rho_t * power / (int_t + noise)),
            ru: log2_1p(g_r * rho_r * power / (int_r + noise)),
            pi_tu,
        }
    }

    /// Pair max-min value `min(r_t, r_r)` at `(beta_t, rho_t)`.
    pub fn value(&self, beta_t: T, rho_t: T) -> T {
        self.rates(beta_t, rho_t).min()
    }

    /// Whether the amplitude split has any effect on this pair.
    pub fn amplitude_matters(&self) -> bool {
        !(self.tu.is_flat() && self.ru.is_flat())
    }

    /// Intervals of `beta_t` on which the decoding order is constant, with the
    /// transmitted user's order on each. Only valid for aligned coefficients,
    /// where `g_t - g_r` is nondecreasing in `beta_t`.
    fn order_regions(&self, tol: T) -> Vec<(T, T, u8)> {
        let diff = |b: T| {
            let (g_t, g_r) = self.gains(b);
            g_t - g_r
        };
        if diff(T::zero()) >= T::zero() {
            return vec![(T::zero(), T::one(), 1)];
        }
        if diff(T::one()) < T::zero() {
            return vec![(T::zero(), T::one(), 0)];
        }
        let (lo, hi) = bisect_bracket(diff, T::zero(), T::one(), tol);
        vec![(T::zero(), lo, 0), (hi, T::one(), 1)]
    }
}

/// Power share of the user decoding last that equalizes the two unit rates.
///
/// With SNR scales `a = P g_s / n` and `b = P g_w / n`, equal rates mean
/// `b x^2 + (a + b) x - a b = 0` for `x = a rho_s`.
pub fn equalizing_power<T: Scalar>(g_strong: T, g_weak: T, link: LinkParams<T>) -> T {
    let a = link.power * g_strong / link.noise;
    let b = link.power * g_weak / link.noise;
    if b <= T::zero() {
        return if a > T::zero() { T::one() } else { T::lit(0.5) };
    }
    let s = a + b;
    let rho = T::lit(2.0) * b / (s + (s * s + T::lit(4.0) * a * b * b).sqrt());
    rho.max(T::zero()).min(T::one())
}

/// Optimizes `beta_t` with `rho_t` fixed by successive convex approximation.
///
/// On each interval where the decoding order is constant, the rate of the
/// interfered user is replaced by its concave surrogate (interference term
/// bounded by its tangent), the resulting concave max-min is solved by
/// golden-section search, and the expansion point is moved there. The best
/// interval wins. Never returns a point worse than `beta_t` under the exact rates.
pub fn optimize_pair_amplitude<T: Scalar>(p: &PairProblem<T>, beta_t: T, rho_t: T, opts: &SolverOptions) -> T {
    if !p.amplitude_matters() {
        return T::lit(0.5);
    }
    if !(p.tu.is_aligned() && p.ru.is_aligned()) {
        return optimize_pair_amplitude_direct(p, beta_t, rho_t, opts);
    }
    let one_d = T::lit(opts.one_d_tol);
    let mut best = (beta_t, p.value(beta_t, rho_t));
    for (lo, hi, pi_tu) in p.order_regions(T::lit(1e-13).max(T::epsilon() * T::lit(16.0))) {
        if hi < lo {
            continue;
        }
        let (x, fx) = sca_amplitude_in_region(p, beta_t.max(lo).min(hi), rho_t, pi_tu, lo, hi, one_d, opts);
        if fx > best.1 {
            best = (x, fx);
        }
    }
    best.0
}

#[allow(clippy::too_many_arguments)]
fn sca_amplitude_in_region<T: Scalar>(
    p: &PairProblem<T>,
    start: T,
    rho_t: T,
    pi_tu: u8,
    lo: T,
    hi: T,
    one_d: T,
    opts: &SolverOptions,
) -> (T, T) {
    let LinkParams { power, noise } = p.link;
    let floor = T::lit(opts.beta_floor);
    let rho_r = T::one() - rho_t;
    // Strong user's rate is exact and concave. The weak user's own split is
    // beta_t (transmitted weak) or 1 - beta_t (reflected weak).
    let (strong, weak, rho_s, weak_is_tu) = if pi_tu == 1 { (p.tu, p.ru, rho_t, false) } else { (p.ru, p.tu, rho_r, true) };
    let own = move |b: T, tu: bool| if tu { b } else { T::one() - b };
    let exact = |b: T| {
        let g_s = strong.gain(own(b, !weak_is_tu));
        let g_w = weak.gain(own(b, weak_is_tu));
        let (g_t, g_r) = if weak_is_tu { (g_w, g_s) } else { (g_s, g_w) };
        p.rates_with_order(g_t, g_r, rho_t, pi_tu).min()
    };
    let l2 = power * rho_s;
    let mut x = start;
    let mut fx = exact(x);
    for _ in 0..opts.max_sca_iters {
        let eps = own(x, weak_is_tu).max(floor).min(T::one());
        let Ok(bound) = amplitude_surrogate_bound(eps, &weak, l2, noise) else { break };
        let surrogate = |b: T| {
            let g_s = strong.gain(own(b, !weak_is_tu));
            let g_w = weak.gain(own(b, weak_is_tu));
            let r_s = log2_1p(g_s * rho_s * power / noise);
            let r_w = (power * g_w + noise).log2() - bound.eval(own(b, weak_is_tu));
            r_s.min(r_w)
        };
        let (x_new, s_new) = golden_section_max(surrogate, lo, hi, one_d);
        let f_new = exact(x_new);
        if f_new < fx {
            break;
        }
        let gain = s_new - fx;
        x = x_new;
        fx = f_new;
        if gain < T::lit(opts.sca_tol) {
            break;
        }
    }
    // With the order fixed both rates are concave in the split, so the exact
    // region objective is concave and shares the SCA limit point. The MM steps
    // crawl when the strong user holds nearly all the power; finish with an
    // exact search so the result does not depend on that rate.
    let (xp, fp) = golden_section_max(exact, lo, hi, one_d);
    if fp > fx {
        (xp, fp)
    } else {
        (x, fx)
    }
}

/// Amplitude search on the exact pair value, for phase profiles where the
/// gain is not concave in the split.
pub fn optimize_pair_amplitude_direct<T: Scalar>(p: &PairProblem<T>, beta_t: T, rho_t: T, opts: &SolverOptions) -> T {
    let current = p.value(beta_t, rho_t);
    let (x, fx) = scan_then_refine(|b| p.value(b, rho_t), T::zero(), T::one(), opts.init_scan_points, T::lit(opts.one_d_tol));
    if fx > current {
        x
    } else {
        beta_t
    }
}

/// Optimizes `rho_t` with the amplitudes (hence gains and order) fixed.
///
/// The interfered user's interference term `log2(L3 rho_s + n)` is bounded by
/// its tangent, making its rate affine in the strong user's share `rho_s`; the
/// max-min with the concave strong-user rate is solved by golden section and
/// the expansion point moved to the solution until the gain stalls.
pub fn optimize_pair_power<T: Scalar>(p: &PairProblem<T>, beta_t: T, rho_t: T, opts: &SolverOptions) -> T {
    let (g_t, g_r) = p.gains(beta_t);
    let pi_tu = decoding_order(g_t, g_r, Tie::First).0;
    let (g_s, g_w) = if pi_tu == 1 { (g_t, g_r) } else { (g_r, g_t) };
    let to_rho_t = |rho_s: T| if pi_tu == 1 { rho_s } else { T::one() - rho_s };
    if g_s <= T::zero() {
        return T::lit(0.5);
    }
    if g_w <= T::zero() {
        return to_rho_t(T::one());
    }
    let LinkParams { power, noise } = p.link;
    let exact = |rho_s: T| p.rates_with_order(g_t, g_r, to_rho_t(rho_s), pi_tu).min();
    let l3 = power * g_w;
    let weak_total = (power * g_w + noise).log2();
    let mut x = if pi_tu == 1 { rho_t } else { T::one() - rho_t };
    let mut fx = exact(x);
    let start = (x, fx);
    for _ in 0..opts.max_sca_iters {
        let Ok(bound) = power_surrogate_bound(x.max(T::zero()).min(T::one()), l3, noise) else { break };
        let surrogate = |rho_s: T| {
            let r_s = log2_1p(g_s * rho_s * power / noise);
            let r_w = weak_total - bound.eval(rho_s);
            r_s.min(r_w)
        };
        let (x_new, s_new) = golden_section_max(surrogate, T::zero(), T::one(), T::lit(opts.one_d_tol));
        let f_new = exact(x_new);
        if f_new < fx {
            break;
        }
        let gain = s_new - fx;
        x = x_new;
        fx = f_new;
        if gain < T::lit(opts.sca_tol) {
            break;
        }
    }
    // min(increasing, decreasing) is unimodal in rho_s; same exact finish as the amplitude block.
    let (xp, fp) = golden_section_max(exact, T::zero(), T::one(), T::lit(opts.one_d_tol));
    if fp > fx {
        (x, fx) = (xp, fp);
    }
    if fx >= start.1 {
        to_rho_t(x)
    } else {
        to_rho_t(start.0)
    }
}

/// Initial point for a pair: best grid value of the split, with the power
/// share either rate-equalizing (when optimized) or fixed.
pub fn scan_initial_point<T: Scalar>(
    p: &PairProblem<T>,
    betas: &[T],
    fixed_rho_t: Option<T>,
) -> (T, T) {
    let mut best: Option<(T, T, T)> = None;
    for &b in betas {
        let rho_t = match fixed_rho_t {
            Some(r) => r,
            None => {
                let (g_t, g_r) = p.gains(b);
                let pi_tu = decoding_order(g_t, g_r, Tie::First).0;
                let rho_s = if pi_tu == 1 { equalizing_power(g_t, g_r, p.link) } else { equalizing_power(g_r, g_t, p.link) };
                if pi_tu == 1 {
                    rho_s
                } else {
                    T::one() - rho_s
                }
            }
        };
        let v = p.value(b, rho_t);
        if best.is_none_or(|(_, _, bv)| v > bv) {
            best = Some((b, rho_t, v));
        }
    }
    let (b, r, _) = best.expect("at least one candidate split");
    (b, r)
}
