//! STAR-RIS assisted hybrid NOMA-TDMA downlink: channel synthesis, max-min
//! rate optimization (alternating optimization with successive convex
//! approximation, plus swap matching for pairing), comparison frameworks, and
//! a Monte Carlo harness.
//!
//! The numerical code is generic over the scalar type through [`Scalar`];
//! the aliases below fix it to `f64`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod channel;
pub mod error;
pub mod harness;
pub mod inner_ao;
pub mod matching;
pub mod scalar;
pub mod scenario;
pub mod search;
pub mod star_noma;

pub use error::{Error, Result};
pub use matching::Matching;
pub use scalar::Scalar;
pub use scenario::SystemConfig;

pub type ChannelRealization = channel::ChannelRealization<f64>;
pub type LinkParams = star_noma::LinkParams<f64>;
pub type AllocationState = star_noma::AllocationState<f64>;
pub type RateReport = star_noma::RateReport<f64>;
pub type Solution = inner_ao::Solution<f64>;
pub type PairProblem = inner_ao::PairProblem<f64>;
pub type Instance = baselines::Instance<f64>;
pub type FrameworkSolution = baselines::FrameworkSolution<f64>;
