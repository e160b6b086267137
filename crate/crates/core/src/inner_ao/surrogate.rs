//! Gain decomposition and the first-order upper bounds used by the SCA steps.

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// `|h(beta)|^2 = a + b sqrt(beta) + c beta` for a fixed phase profile.
///
/// With phases aligned to the direct link, `a = |h_direct|^2`, `b = 2 |h_direct| |e|`
/// and `c = |e|^2` where `e` is the unit-amplitude cascade. For arbitrary phases
/// `b = 2 Re(conj(h_direct) e)` can be negative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GainCoefficients<T> {
    pub a: T,
    pub b: T,
    pub c: T,
}

impl<T: Scalar> GainCoefficients<T> {
    pub fn new(h_direct: Complex<T>, h_ris_user: &[Complex<T>], h_bs_ris: &[Complex<T>], theta: &[T]) -> Result<Self> {
        if h_ris_user.len() != h_bs_ris.len() || theta.len() != h_bs_ris.len() {
            return Err(Error::DimensionMismatch {
                expected: h_bs_ris.len(),
                got: h_ris_user.len().min(theta.len()),
            });
        }
        let e: Complex<T> = h_ris_user
            .iter()
            .zip(h_bs_ris)
            .zip(theta)
            .map(|((s, b), &t)| s.conj() * Complex::from_polar(T::one(), t) * b)
            .fold(Complex::new(T::zero(), T::zero()), |acc, x| acc + x);
        Ok(Self {
            a: h_direct.norm_sqr(),
            b: T::lit(2.0) * (h_direct.conj() * e).re,
            c: e.norm_sqr(),
        })
    }

    /// Channel power at amplitude split `beta` (clamped to be nonnegative).
    pub fn gain(&self, beta: T) -> T {
        let beta = beta.max(T::zero());
        (self.a + self.b * beta.sqrt() + self.c * beta).max(T::zero())
    }

    /// `d gain / d beta`; infinite at `beta = 0` when `b > 0`.
    pub fn slope(&self, beta: T) -> T {
        self.b / (T::lit(2.0) * beta.sqrt()) + self.c
    }

    /// True when the gain does not depend on `beta` (no surface path).
    pub fn is_flat(&self) -> bool {
        self.b == T::zero() && self.c == T::zero()
    }

    /// True when `gain` is concave and nondecreasing in `beta`, which holds for aligned phases.
    pub fn is_aligned(&self) -> bool {
        self.b >= T::zero()
    }
}

/// Affine function `value + slope * (x - at)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Affine<T> {
    pub at: T,
    pub value: T,
    pub slope: T,
}

impl<T: Scalar> Affine<T> {
    pub fn eval(&self, x: T) -> T {
        self.value + self.slope * (x - self.at)
    }
}

/// Tangent upper bound of `log2(l2 * gain(beta) + noise)` at `beta_eps`.
///
/// The function is concave in `beta` for aligned coefficients, so the tangent
/// lies above it on `[0, 1]` and touches it at `beta_eps`.
pub fn amplitude_surrogate_bound<T: Scalar>(beta_eps: T, coeffs: &GainCoefficients<T>, l2: T, noise: T) -> Result<Affine<T>> {
    if !(beta_eps >= T::zero() && beta_eps <= T::one()) {
        return Err(Error::InvalidArgument(format!("expansion point {beta_eps} outside [0, 1]")));
    }
    if beta_eps == T::zero() && coeffs.b > T::zero() {
        return Err(Error::InvalidArgument(
            "expansion at beta = 0 has an unbounded slope; shift the point into (0, 1]".into(),
        ));
    }
    let inner = l2 * coeffs.gain(beta_eps) + noise;
    let slope = if l2 == T::zero() { T::zero() } else { l2 * coeffs.slope(beta_eps) / (T::LN_2() * inner) };
    Ok(Affine { at: beta_eps, value: inner.log2(), slope })
}

/// Tangent upper bound of `log2(l3 * rho_paired + noise)` at `rho_eps`.
pub fn power_surrogate_bound<T: Scalar>(rho_eps: T, l3: T, noise: T) -> Result<Affine<T>> {
    if !(rho_eps >= T::zero() && rho_eps <= T::one()) {
        return Err(Error::InvalidArgument(format!("expansion point {rho_eps} outside [0, 1]")));
    }
    let inner = l3 * rho_eps + noise;
    Ok(Affine { at: rho_eps, value: inner.log2(), slope: l3 / (T::LN_2() * inner) })
}
