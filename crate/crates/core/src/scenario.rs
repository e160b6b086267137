//! Scenario configuration, geometry and random user placement.
//!
//! The RIS plane is the y-z plane through the RIS position. The base station
//! sits on the negative-x side; users on that side are served by reflection,
//! users on the positive-x side by transmission through the surface.

use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha20Rng;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inner_ao::SolverOptions;
use crate::matching::MatchingOptions;
use crate::scalar::Scalar;

/// Speed of light used for the carrier wavelength (m/s), as in the reference setup.
pub const SPEED_OF_LIGHT: f64 = 3.0e8;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Position3D<T> {
    pub x: T,
    pub y: T,
    pub z: T,
}

impl<T: Scalar> Position3D<T> {
    pub fn new(x: T, y: T, z: T) -> Self {
        Self { x, y, z }
    }

    pub fn cast<U: Scalar>(self) -> Position3D<U> {
        Position3D {
            x: U::lit(self.x.as_f64()),
            y: U::lit(self.y.as_f64()),
            z: U::lit(self.z.as_f64()),
        }
    }
}

/// Euclidean distance between two points.
pub fn distance<T: Scalar>(a: Position3D<T>, b: Position3D<T>) -> T {
    let dx = a.x - b.x;
    let dy = a.y - b.y;
    let dz = a.z - b.z;
    (dx * dx + dy * dy + dz * dz).sqrt()
}

pub fn dbm_to_watts(value_dbm: f64) -> f64 {
    10f64.powf(value_dbm / 10.0) * 1e-3
}

pub fn watts_to_dbm(watts: f64) -> f64 {
    10.0 * (watts * 1e3).log10()
}

/// Which side of the surface a user is on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    /// Opposite side from the base station; served through the surface.
    Transmitted,
    /// Base-station side; served by reflection.
    Reflected,
}

/// Power budget for the orthogonal (one user per slot) baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TdmaPower {
    /// Every slot transmits at the full BS power.
    #[default]
    FullPerSlot,
    /// The BS power is divided evenly over the 2K slots.
    SplitAcrossSlots,
}

/// Every physical and solver parameter of a run.
///
/// Unit-bearing fields carry their unit in the name: `_dbm`, `_hz`, `_m`.
/// Linear quantities (reference gain, path-loss exponents) are dimensionless.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemConfig {
    /// Users per side (K). There are K transmitted and K reflected users.
    pub users_per_side: usize,
    pub elements_y: usize,
    pub elements_z: usize,
    pub element_spacing_y_m: f64,
    pub element_spacing_z_m: f64,
    pub carrier_frequency_hz: f64,
    pub bs_power_dbm: f64,
    pub noise_density_dbm_per_hz: f64,
    pub bandwidth_hz: f64,
    /// Channel power at 1 m (linear).
    pub reference_gain: f64,
    /// Path-loss exponent of the BS-user link.
    pub path_loss_direct: f64,
    /// Path-loss exponent of the BS-RIS link.
    pub path_loss_bs_ris: f64,
    /// Path-loss exponent of the RIS-user links.
    pub path_loss_ris_user: f64,
    pub ris_position_m: Position3D<f64>,
    /// Ground distance from the RIS projection to the BS, along -x.
    pub bs_ris_distance_2d_m: f64,
    pub bs_height_m: f64,
    /// Explicit BS position; overrides `bs_ris_distance_2d_m` and `bs_height_m` when set.
    pub bs_position_m: Option<Position3D<f64>>,
    /// Side length of the square user region centered on the RIS ground projection.
    pub region_side_m: f64,
    pub seed: u64,
    pub tdma_power: TdmaPower,
    pub solver: SolverOptions,
    pub matching: MatchingOptions,
}

impl Default for SystemConfig {
    fn default() -> Self {
        let carrier = 750e6;
        let wavelength = SPEED_OF_LIGHT / carrier;
        Self {
            users_per_side: 4,
            elements_y: 10,
            elements_z: 10,
            element_spacing_y_m: wavelength / 10.0,
            element_spacing_z_m: wavelength / 10.0,
            carrier_frequency_hz: carrier,
            bs_power_dbm: 30.0,
            noise_density_dbm_per_hz: -150.0,
            bandwidth_hz: 1e6,
            reference_gain: 1e-3,
            path_loss_direct: 3.0,
            path_loss_bs_ris: 2.0,
            path_loss_ris_user: 2.3,
            ris_position_m: Position3D::new(0.0, 0.0, 20.0),
            bs_ris_distance_2d_m: 50.0,
            bs_height_m: 25.0,
            bs_position_m: None,
            region_side_m: 1000.0,
            seed: 0,
            tdma_power: TdmaPower::default(),
            solver: SolverOptions::default(),
            matching: MatchingOptions::default(),
        }
    }
}

/// Linear-unit quantities derived from a validated configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkBudget {
    pub power_w: f64,
    pub noise_w: f64,
    pub wavelength_m: f64,
}

impl SystemConfig {
    pub fn from_json_str(text: &str) -> std::result::Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// Loads and validates a JSON configuration file.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let config: Self = serde_json::from_str(&text).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn num_elements(&self) -> usize {
        self.elements_y * self.elements_z
    }

    pub fn wavelength_m(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_frequency_hz
    }

    pub fn bs_position(&self) -> Position3D<f64> {
        self.bs_position_m.unwrap_or(Position3D::new(
            self.ris_position_m.x - self.bs_ris_distance_2d_m,
            self.ris_position_m.y,
            self.bs_height_m,
        ))
    }

    pub fn link_budget(&self) -> LinkBudget {
        LinkBudget {
            power_w: dbm_to_watts(self.bs_power_dbm),
            noise_w: dbm_to_watts(self.noise_density_dbm_per_hz) * self.bandwidth_hz,
            wavelength_m: self.wavelength_m(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        if self.users_per_side == 0 {
            return bad("users_per_side must be at least 1");
        }
        if self.elements_y == 0 || self.elements_z == 0 {
            return bad("element counts must be at least 1");
        }
        let positive = [
            ("element_spacing_y_m", self.element_spacing_y_m),
            ("element_spacing_z_m", self.element_spacing_z_m),
            ("carrier_frequency_hz", self.carrier_frequency_hz),
            ("bandwidth_hz", self.bandwidth_hz),
            ("reference_gain", self.reference_gain),
            ("path_loss_direct", self.path_loss_direct),
            ("path_loss_bs_ris", self.path_loss_bs_ris),
            ("path_loss_ris_user", self.path_loss_ris_user),
            ("region_side_m", self.region_side_m),
            ("ris_position_m.z", self.ris_position_m.z),
            ("bs_position.z", self.bs_position().z),
        ];
        for (name, value) in positive {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::InvalidConfig(format!("{name} must be positive and finite, got {value}")));
            }
        }
        if !self.bs_power_dbm.is_finite() || !self.noise_density_dbm_per_hz.is_finite() {
            return bad("power levels must be finite");
        }
        if self.path_loss_direct < self.path_loss_bs_ris {
            return bad("path_loss_direct must be >= path_loss_bs_ris");
        }
        if self.bs_position().x >= self.ris_position_m.x {
            return bad("the BS must lie on the reflection (negative-x) side of the RIS plane");
        }
        if distance(self.bs_position(), self.ris_position_m) <= 0.0 {
            return bad("BS and RIS positions coincide");
        }
        self.solver.validate()?;
        Ok(())
    }
}

/// Independent random streams derived from one seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Placement = 0,
    Fading = 1,
    Phase = 2,
    Pairing = 3,
}

/// ChaCha20 generator for one named stream of `seed`.
///
/// Streams share the key but use disjoint ChaCha stream ids, so draws from one
/// never shift another.
pub fn stream_rng(seed: u64, stream: Stream) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

/// User positions, transmitted users first (indices `0..K`), reflected users after
/// (indices `K..2K`).
#[derive(Debug, Clone, PartialEq)]
pub struct UserSet<T> {
    pub positions: Vec<Position3D<T>>,
    pub sides: Vec<Side>,
}

impl<T: Scalar> UserSet<T> {
    /// Builds a set from explicit positions. Both sides must have the same count.
    pub fn from_sides(transmitted: Vec<Position3D<T>>, reflected: Vec<Position3D<T>>) -> Result<Self> {
        if transmitted.len() != reflected.len() {
            return Err(Error::InvalidArgument(format!(
                "unequal side counts: {} transmitted, {} reflected",
                transmitted.len(),
                reflected.len()
            )));
        }
        if transmitted.is_empty() {
            return Err(Error::InvalidArgument("empty user set".into()));
        }
        let k = transmitted.len();
        let mut sides = vec![Side::Transmitted; k];
        sides.extend(std::iter::repeat_n(Side::Reflected, k));
        let mut positions = transmitted;
        positions.extend(reflected);
        Ok(Self { positions, sides })
    }

    pub fn users_per_side(&self) -> usize {
        self.positions.len() / 2
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn transmitted(&self) -> &[Position3D<T>] {
        &self.positions[..self.users_per_side()]
    }

    pub fn reflected(&self) -> &[Position3D<T>] {
        &self.positions[self.users_per_side()..]
    }
}

/// Global user index of transmitted user `i`.
#[inline]
pub fn tu_index(i: usize) -> usize {
    i
}

/// Global user index of reflected user `j` when there are `k` users per side.
#[inline]
pub fn ru_index(k: usize, j: usize) -> usize {
    k + j
}

/// Draws K users uniformly in each half of the square region.
///
/// Transmitted users get x in (x_S, x_S + L/2], reflected users x in [x_S - L/2, x_S),
/// y uniform in [y_S - L/2, y_S + L/2], z = 0.
pub fn generate_users<T: Scalar, R: Rng + ?Sized>(config: &SystemConfig, rng: &mut R) -> Result<UserSet<T>> {
    if !(config.region_side_m > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "region_side_m must be positive, got {}",
            config.region_side_m
        )));
    }
    if config.users_per_side == 0 {
        return Err(Error::InvalidConfig("users_per_side must be at least 1".into()));
    }
    let half = config.region_side_m / 2.0;
    let center = config.ris_position_m;
    let draw = |sign: f64, rng: &mut R| {
        // 1 - U(0,1] keeps users strictly off the surface plane.
        let u: f64 = 1.0 - rng.random::<f64>();
        let v: f64 = rng.random::<f64>() * 2.0 - 1.0;
        Position3D::new(
            T::lit(center.x + sign * u * half),
            T::lit(center.y + v * half),
            T::zero(),
        )
    };
    let transmitted = (0..config.users_per_side).map(|_| draw(1.0, rng)).collect();
    let reflected = (0..config.users_per_side).map(|_| draw(-1.0, rng)).collect();
    UserSet::from_sides(transmitted, reflected)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn dbm_examples() {
        assert_relative_eq!(dbm_to_watts(30.0), 1.0, max_relative = 1e-15);
        assert_relative_eq!(dbm_to_watts(0.0), 1e-3, max_relative = 1e-15);
        assert_relative_eq!(dbm_to_watts(-90.0), 1e-12, max_relative = 1e-14);
    }

    #[test]
    fn default_noise_is_minus_90_dbm() {
        let budget = SystemConfig::default().link_budget();
        assert_relative_eq!(budget.noise_w, 1e-12, max_relative = 1e-12);
        assert_relative_eq!(budget.power_w, 1.0, max_relative = 1e-15);
        assert_relative_eq!(budget.wavelength_m, 0.4, max_relative = 1e-15);
    }

    #[test]
    fn distance_examples() {
        let o = Position3D::new(0.0, 0.0, 0.0);
        assert_eq!(distance(o, Position3D::new(0.0, 0.0, 20.0)), 20.0);
        assert_eq!(distance(Position3D::new(3.0, 4.0, 0.0), o), 5.0);
        let qb = Position3D::new(-100.0, 0.0, 25.0);
        let qs = Position3D::new(0.0, 0.0, 20.0);
        assert_relative_eq!(distance(qb, qs), (100.0f64 * 100.0 + 25.0).sqrt(), max_relative = 1e-15);
    }

    #[test]
    fn placement_is_deterministic() {
        let config = SystemConfig { users_per_side: 1, ..Default::default() };
        let a: UserSet<f64> = generate_users(&config, &mut stream_rng(11, Stream::Placement)).unwrap();
        let b: UserSet<f64> = generate_users(&config, &mut stream_rng(11, Stream::Placement)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 2);
    }

    #[test]
    fn sides_split_on_the_ris_plane() {
        let config = SystemConfig { users_per_side: 4, ..Default::default() };
        let users: UserSet<f64> = generate_users(&config, &mut stream_rng(3, Stream::Placement)).unwrap();
        assert_eq!(users.transmitted().iter().filter(|p| p.x > 0.0).count(), 4);
        assert_eq!(users.reflected().iter().filter(|p| p.x < 0.0).count(), 4);
        assert!(users.positions.iter().all(|p| p.z == 0.0));
        assert_eq!(users.sides.iter().filter(|s| **s == Side::Transmitted).count(), 4);
    }

    #[test]
    fn users_stay_inside_region() {
        let config = SystemConfig { users_per_side: 3, region_side_m: 1000.0, ..Default::default() };
        for seed in 0..50 {
            let users: UserSet<f64> = generate_users(&config, &mut stream_rng(seed, Stream::Placement)).unwrap();
            assert!(users.positions.iter().all(|p| p.x.abs() <= 500.0 && p.y.abs() <= 500.0));
        }
    }

    #[test]
    fn rejects_non_positive_region() {
        let config = SystemConfig { region_side_m: 0.0, ..Default::default() };
        let err = generate_users::<f64, _>(&config, &mut stream_rng(0, Stream::Placement)).unwrap_err();
        assert!(matches!(err, Error::InvalidConfig(_)));
    }

    #[test]
    fn streams_are_independent() {
        let mut a = stream_rng(5, Stream::Placement);
        let mut b = stream_rng(5, Stream::Fading);
        let xa: u64 = rand::Rng::random(&mut a);
        let xb: u64 = rand::Rng::random(&mut b);
        assert_ne!(xa, xb);
    }

    #[test]
    fn default_config_validates_and_round_trips_json() {
        let config = SystemConfig::default();
        config.validate().unwrap();
        let text = serde_json::to_string_pretty(&config).unwrap();
        let back = SystemConfig::from_json_str(&text).unwrap();
        assert_eq!(config, back);
        // Partial documents fill in defaults.
        let partial = SystemConfig::from_json_str(r#"{"users_per_side": 2, "bs_power_dbm": 20.0}"#).unwrap();
        assert_eq!(partial.users_per_side, 2);
        assert_relative_eq!(partial.link_budget().power_w, 0.1, max_relative = 1e-14);
    }

    #[test]
    fn validation_catches_bad_values() {
        let c = SystemConfig { path_loss_direct: 1.5, ..Default::default() };
        assert!(c.validate().is_err());
        let c = SystemConfig { elements_y: 0, ..Default::default() };
        assert!(c.validate().is_err());
        assert!(SystemConfig::from_json_str(r#"{"no_such_field": 1}"#).is_err());
    }

    proptest! {
        #[test]
        fn dbm_round_trip(w in 1e-20f64..1e6) {
            let back = dbm_to_watts(watts_to_dbm(w));
            prop_assert!(((back - w) / w).abs() < 1e-12);
        }
    }
}
