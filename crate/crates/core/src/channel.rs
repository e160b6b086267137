//! Channel synthesis: Rayleigh direct links and line-of-sight links through a
//! uniform planar array.

use std::path::Path;

use num_complex::Complex;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::scenario::{distance, Position3D, SystemConfig, UserSet};

/// Planar array layout: `elements_y x elements_z` elements with the given spacings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArrayGeometry<T> {
    pub elements_y: usize,
    pub elements_z: usize,
    pub spacing_y: T,
    pub spacing_z: T,
    pub wavelength: T,
}

impl<T: Scalar> ArrayGeometry<T> {
    pub fn from_config(config: &SystemConfig) -> Self {
        Self {
            elements_y: config.elements_y,
            elements_z: config.elements_z,
            spacing_y: T::lit(config.element_spacing_y_m),
            spacing_z: T::lit(config.element_spacing_z_m),
            wavelength: T::lit(config.wavelength_m()),
        }
    }

    pub fn num_elements(&self) -> usize {
        self.elements_y * self.elements_z
    }
}

/// One realization of every link in the scenario.
///
/// `direct[k]` is the BS-user scalar channel, `bs_ris` the BS-RIS vector and
/// `ris_user[k]` the RIS-user vector of user `k` (global user indexing).
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization<T> {
    pub direct: Vec<Complex<T>>,
    pub bs_ris: Vec<Complex<T>>,
    pub ris_user: Vec<Vec<Complex<T>>>,
}

impl<T: Scalar> ChannelRealization<T> {
    pub fn num_users(&self) -> usize {
        self.direct.len()
    }

    pub fn num_elements(&self) -> usize {
        self.bs_ris.len()
    }

    /// Per-element cascade `conj(h_ris_user[k][m]) * h_bs_ris[m]`.
    pub fn cascade(&self, k: usize) -> Vec<Complex<T>> {
        self.ris_user[k]
            .iter()
            .zip(&self.bs_ris)
            .map(|(s, b)| s.conj() * b)
            .collect()
    }

    /// Copy with the RIS-user vectors of the selected users set to zero.
    pub fn with_cascade_zeroed(&self, mut zero: impl FnMut(usize) -> bool) -> Self {
        let mut out = self.clone();
        for (k, link) in out.ris_user.iter_mut().enumerate() {
            if zero(k) {
                link.iter_mut().for_each(|h| *h = Complex::new(T::zero(), T::zero()));
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        if self.ris_user.len() != self.direct.len() {
            return Err(Error::DimensionMismatch { expected: self.direct.len(), got: self.ris_user.len() });
        }
        let m = self.bs_ris.len();
        for link in &self.ris_user {
            if link.len() != m {
                return Err(Error::DimensionMismatch { expected: m, got: link.len() });
            }
        }
        Ok(())
    }

    /// Writes every complex entry as one CSV row `link,user,element,re,im`.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
        let mut row = |link: &str, user: usize, element: usize, h: Complex<T>| {
            w.serialize(ChannelEntry {
                link: link.to_string(),
                user,
                element,
                re: h.re.as_f64(),
                im: h.im.as_f64(),
            })
        };
        for (k, h) in self.direct.iter().enumerate() {
            row("direct", k, 0, *h).map_err(|e| Error::csv(path, e))?;
        }
        for (m, h) in self.bs_ris.iter().enumerate() {
            row("bs_ris", 0, m, *h).map_err(|e| Error::csv(path, e))?;
        }
        for (k, link) in self.ris_user.iter().enumerate() {
            for (m, h) in link.iter().enumerate() {
                row("ris_user", k, m, *h).map_err(|e| Error::csv(path, e))?;
            }
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut r = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
        let mut direct = Vec::new();
        let mut bs_ris = Vec::new();
        let mut ris_user: Vec<Vec<Complex<T>>> = Vec::new();
        let put = |v: &mut Vec<Complex<T>>, i: usize, h: Complex<T>| {
            if v.len() <= i {
                v.resize(i + 1, Complex::new(T::zero(), T::zero()));
            }
            v[i] = h;
        };
        for entry in r.deserialize::<ChannelEntry>() {
            let e = entry.map_err(|e| Error::csv(path, e))?;
            let h = Complex::new(T::lit(e.re), T::lit(e.im));
            match e.link.as_str() {
                "direct" => put(&mut direct, e.user, h),
                "bs_ris" => put(&mut bs_ris, e.element, h),
                "ris_user" => {
                    if ris_user.len() <= e.user {
                        ris_user.resize(e.user + 1, Vec::new());
                    }
                    put(&mut ris_user[e.user], e.element, h);
                }
                other => return Err(Error::InvalidArgument(format!("unknown link kind {other:?}"))),
            }
        }
        let out = Self { direct, bs_ris, ris_user };
        out.validate()?;
        Ok(out)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ChannelEntry {
    link: String,
    user: usize,
    element: usize,
    re: f64,
    im: f64,
}

/// Circularly-symmetric complex Gaussian with unit variance.
fn unit_complex_gaussian<T: Scalar, R: Rng + ?Sized>(rng: &mut R) -> Complex<T> {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    let s = std::f64::consts::FRAC_1_SQRT_2;
    Complex::new(T::lit(re * s), T::lit(im * s))
}

/// Path gain `sqrt(reference_gain / d^exponent)`.
pub fn path_amplitude<T: Scalar>(d: T, exponent: T, reference_gain: T) -> T {
    (reference_gain / d.powf(exponent)).sqrt()
}

/// Rayleigh-faded direct link at distance `d`: `E|h|^2 = reference_gain / d^exponent`.
pub fn sample_direct<T: Scalar, R: Rng + ?Sized>(d: T, exponent: T, reference_gain: T, rng: &mut R) -> Result<Complex<T>> {
    if !(d > T::zero()) {
        return Err(Error::InvalidArgument(format!("link distance must be positive, got {d}")));
    }
    Ok(unit_complex_gaussian::<T, R>(rng) * path_amplitude(d, exponent, reference_gain))
}

/// Planar-array response for direction cosines `(u_y, u_z)`.
///
/// Entry `m = m_y * elements_z + m_z` is
/// `exp(-j 2 pi path_distance / lambda) * exp(-j 2 pi (m_y d_y u_y + m_z d_z u_z) / lambda)`.
pub fn array_response<T: Scalar>(u_y: T, u_z: T, geometry: &ArrayGeometry<T>, path_distance: T) -> Result<Vec<Complex<T>>> {
    let slack = T::lit(1e-9);
    if u_y * u_y + u_z * u_z > T::one() + slack {
        return Err(Error::InvalidArgument(format!(
            "direction cosines ({u_y}, {u_z}) lie outside the unit disk"
        )));
    }
    let two_pi_over_lambda = T::TAU() / geometry.wavelength;
    let lead = -two_pi_over_lambda * path_distance;
    let mut out = Vec::with_capacity(geometry.num_elements());
    for m_y in 0..geometry.elements_y {
        let phase_y = T::lit(m_y as f64) * geometry.spacing_y * u_y;
        for m_z in 0..geometry.elements_z {
            let phase_z = T::lit(m_z as f64) * geometry.spacing_z * u_z;
            let phase = lead - two_pi_over_lambda * (phase_y + phase_z);
            out.push(Complex::from_polar(T::one(), phase));
        }
    }
    Ok(out)
}

/// Direction cosines `(u_y, u_z)` of the unit vector from `from` to `to`.
pub fn direction_cosines<T: Scalar>(from: Position3D<T>, to: Position3D<T>) -> Result<(T, T, T)> {
    let d = distance(from, to);
    if !(d > T::zero()) {
        return Err(Error::InvalidArgument("coincident positions have no direction".into()));
    }
    Ok(((to.y - from.y) / d, (to.z - from.z) / d, d))
}

/// Synthesizes all links for one scenario drop.
///
/// Direct-link fading is drawn user by user in global index order from `rng`.
pub fn build_channels<T: Scalar, R: Rng + ?Sized>(
    config: &SystemConfig,
    users: &UserSet<T>,
    rng: &mut R,
) -> Result<ChannelRealization<T>> {
    let geometry = ArrayGeometry::<T>::from_config(config);
    let delta0 = T::lit(config.reference_gain);
    let q_s: Position3D<T> = config.ris_position_m.cast();
    let q_b: Position3D<T> = config.bs_position().cast();

    let (u_y, u_z, d_bs) = direction_cosines(q_s, q_b)?;
    let gain_bs = path_amplitude(d_bs, T::lit(config.path_loss_bs_ris), delta0);
    let bs_ris = array_response(u_y, u_z, &geometry, d_bs)?
        .into_iter()
        .map(|h| h * gain_bs)
        .collect();

    let mut direct = Vec::with_capacity(users.len());
    let mut ris_user = Vec::with_capacity(users.len());
    for &q_k in &users.positions {
        direct.push(sample_direct(distance(q_b, q_k), T::lit(config.path_loss_direct), delta0, rng)?);
        let (u_y, u_z, d_sk) = direction_cosines(q_s, q_k)?;
        let gain = path_amplitude(d_sk, T::lit(config.path_loss_ris_user), delta0);
        ris_user.push(array_response(u_y, u_z, &geometry, d_sk)?.into_iter().map(|h| h * gain).collect());
    }
    Ok(ChannelRealization { direct, bs_ris, ris_user })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{generate_users, stream_rng, Stream};
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn geometry(my: usize, mz: usize) -> ArrayGeometry<f64> {
        ArrayGeometry { elements_y: my, elements_z: mz, spacing_y: 0.2, spacing_z: 0.2, wavelength: 0.4 }
    }

    fn mean_power(d: f64, alpha: f64, delta0: f64, n: usize, seed: u64) -> f64 {
        let mut rng = stream_rng(seed, Stream::Fading);
        (0..n).map(|_| sample_direct(d, alpha, delta0, &mut rng).unwrap().norm_sqr()).sum::<f64>() / n as f64
    }

    #[test]
    fn direct_power_at_reference_distance() {
        let m = mean_power(1.0, 3.0, 1.0, 100_000, 1);
        assert!((m - 1.0).abs() < 0.02, "mean {m}");
    }

    #[test]
    fn direct_power_matches_path_loss() {
        // |h|^2 is exponential with mean mu, so the sample mean has std mu / sqrt(n).
        let n = 200_000;
        let mu = 1e-3 / 1000.0;
        let m = mean_power(10.0, 3.0, 1e-3, n, 2);
        assert!((m - mu).abs() < 3.0 * mu / (n as f64).sqrt(), "mean {m} vs {mu}");
    }

    #[test]
    fn direct_draw_is_deterministic_and_rejects_bad_distance() {
        let a = sample_direct(5.0, 3.0, 1e-3, &mut stream_rng(9, Stream::Fading)).unwrap();
        let b = sample_direct(5.0, 3.0, 1e-3, &mut stream_rng(9, Stream::Fading)).unwrap();
        assert_eq!(a, b);
        assert!(sample_direct(0.0, 3.0, 1e-3, &mut stream_rng(9, Stream::Fading)).is_err());
    }

    #[test]
    fn broadside_response_is_flat() {
        let a = array_response(0.0, 0.0, &geometry(3, 2), 12.3).unwrap();
        let lead = Complex::from_polar(1.0, -2.0 * PI * 12.3 / 0.4);
        for h in a {
            assert_relative_eq!(h.re, lead.re, epsilon = 1e-12);
            assert_relative_eq!(h.im, lead.im, epsilon = 1e-12);
        }
    }

    #[test]
    fn single_element_is_unit_modulus() {
        let a = array_response(0.3, -0.4, &geometry(1, 1), 7.0).unwrap();
        assert_eq!(a.len(), 1);
        assert_relative_eq!(a[0].norm(), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn kronecker_ordering_half_wavelength() {
        // d = lambda / 2 and u_y = 1: phases over (m_y, m_z) = (0,0),(0,1),(1,0),(1,1) are 0, 0, pi, pi.
        let a = array_response(1.0, 0.0, &geometry(2, 2), 0.0).unwrap();
        let expected = [0.0, 0.0, PI, PI];
        for (h, phi) in a.iter().zip(expected) {
            let want = Complex::from_polar(1.0, -phi);
            assert_relative_eq!(h.re, want.re, epsilon = 1e-12);
            assert_relative_eq!(h.im, want.im, epsilon = 1e-12);
        }
    }

    #[test]
    fn rejects_direction_outside_unit_disk() {
        assert!(array_response(0.9, 0.9, &geometry(2, 2), 1.0).is_err());
    }

    fn drop(seed: u64) -> (SystemConfig, UserSet<f64>, ChannelRealization<f64>) {
        let config = SystemConfig { users_per_side: 3, elements_y: 4, elements_z: 5, ..Default::default() };
        let users = generate_users(&config, &mut stream_rng(seed, Stream::Placement)).unwrap();
        let ch = build_channels(&config, &users, &mut stream_rng(seed, Stream::Fading)).unwrap();
        (config, users, ch)
    }

    #[test]
    fn bs_ris_norm_is_exact() {
        let (config, _, ch) = drop(4);
        let d = distance(config.ris_position_m, config.bs_position());
        let expect = config.num_elements() as f64 * config.reference_gain / d.powf(config.path_loss_bs_ris);
        let norm2: f64 = ch.bs_ris.iter().map(|h| h.norm_sqr()).sum();
        assert_relative_eq!(norm2, expect, max_relative = 1e-12);
        assert_eq!(ch.num_elements(), 20);
        assert_eq!(ch.num_users(), 6);
    }

    #[test]
    fn ris_user_entries_share_one_magnitude() {
        let (config, users, ch) = drop(5);
        for (k, link) in ch.ris_user.iter().enumerate() {
            let d = distance(config.ris_position_m, users.positions[k]);
            let amp = path_amplitude(d, config.path_loss_ris_user, config.reference_gain);
            for h in link {
                assert_relative_eq!(h.norm(), amp, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn equidistant_users_have_equal_magnitudes() {
        let config = SystemConfig { users_per_side: 1, elements_y: 3, elements_z: 3, ..Default::default() };
        let q_s = config.ris_position_m;
        let users = UserSet::from_sides(
            vec![Position3D::new(q_s.x + 60.0, q_s.y + 80.0, 0.0)],
            vec![Position3D::new(q_s.x - 100.0, q_s.y, 0.0)],
        )
        .unwrap();
        let ch = build_channels(&config, &users, &mut stream_rng(0, Stream::Fading)).unwrap();
        assert_relative_eq!(ch.ris_user[0][0].norm(), ch.ris_user[1][4].norm(), max_relative = 1e-12);
    }

    #[test]
    fn doubling_ris_distance_scales_amplitude() {
        let a1 = path_amplitude(50.0, 2.3, 1e-3);
        let a2 = path_amplitude(100.0, 2.3, 1e-3);
        assert_relative_eq!(a2 / a1, 2f64.powf(-1.15), max_relative = 1e-12);
    }

    #[test]
    fn csv_round_trip() {
        let (_, _, ch) = drop(6);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ch.csv");
        ch.write_csv(&path).unwrap();
        let back = ChannelRealization::<f64>::read_csv(&path).unwrap();
        assert_eq!(back, ch);
    }

    #[test]
    fn f32_channels_track_f64() {
        let config = SystemConfig { users_per_side: 2, elements_y: 3, elements_z: 3, ..Default::default() };
        let users64: UserSet<f64> = generate_users(&config, &mut stream_rng(8, Stream::Placement)).unwrap();
        let users32: UserSet<f32> = generate_users(&config, &mut stream_rng(8, Stream::Placement)).unwrap();
        let c64 = build_channels(&config, &users64, &mut stream_rng(8, Stream::Fading)).unwrap();
        let c32 = build_channels(&config, &users32, &mut stream_rng(8, Stream::Fading)).unwrap();
        for (a, b) in c64.direct.iter().zip(&c32.direct) {
            assert_relative_eq!(a.norm(), b.norm() as f64, max_relative = 1e-5);
        }
    }

    proptest! {
        #[test]
        fn response_magnitude_ignores_path_distance(uy in -0.7f64..0.7, uz in -0.7f64..0.7, d in 1.0f64..500.0) {
            let g = geometry(3, 3);
            let a = array_response(uy, uz, &g, d).unwrap();
            let b = array_response(uy, uz, &g, 0.0).unwrap();
            let ratio = a[0] / b[0];
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x.norm() - 1.0).abs() < 1e-12);
                prop_assert!((x - y * ratio).norm() < 1e-9);
            }
        }
    }
}
