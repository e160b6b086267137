//! The proposed scheme and its comparison frameworks behind one entry point.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{build_channels, ChannelRealization};
use crate::error::{Error, Result};
use crate::inner_ao::{
    inner_solve_with, optimize_time, plan_phases, BlockPlan, GainCoefficients, InnerPlan, PhasePlan, Solution, TimePlan,
};
use crate::matching::{far_near_pairing, initial_matching, outer_solve, Matching};
use crate::scalar::Scalar;
use crate::scenario::{distance, generate_users, stream_rng, Position3D, Stream, SystemConfig, TdmaPower, UserSet};
use crate::star_noma::{check_allocation, evaluate, feasibility_tol, LinkParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Framework {
    HybridNomaStar,
    TdmaStar,
    HybridNomaReflectOnly,
    HybridNomaNoRis,
    EqualTime,
    EqualPower,
    DistancePairing,
    RandomPhase,
}

impl Framework {
    pub const ALL: [Framework; 8] = [
        Framework::HybridNomaStar,
        Framework::TdmaStar,
        Framework::HybridNomaReflectOnly,
        Framework::HybridNomaNoRis,
        Framework::EqualTime,
        Framework::EqualPower,
        Framework::DistancePairing,
        Framework::RandomPhase,
    ];

    /// Network architectures compared against the proposed scheme.
    pub const ARCHITECTURES: [Framework; 4] = [
        Framework::HybridNomaStar,
        Framework::TdmaStar,
        Framework::HybridNomaReflectOnly,
        Framework::HybridNomaNoRis,
    ];

    /// Variants that freeze one block of the proposed algorithm.
    pub const ABLATIONS: [Framework; 4] =
        [Framework::EqualTime, Framework::EqualPower, Framework::DistancePairing, Framework::RandomPhase];

    pub fn name(self) -> &'static str {
        match self {
            Framework::HybridNomaStar => "hybrid_noma_star",
            Framework::TdmaStar => "tdma_star",
            Framework::HybridNomaReflectOnly => "hybrid_noma_reflect_only",
            Framework::HybridNomaNoRis => "hybrid_noma_no_ris",
            Framework::EqualTime => "equal_time",
            Framework::EqualPower => "equal_power",
            Framework::DistancePairing => "distance_pairing",
            Framework::RandomPhase => "random_phase",
        }
    }

    pub fn is_ablation(self) -> bool {
        Self::ABLATIONS.contains(&self)
    }
}

impl fmt::Display for Framework {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Framework {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace('-', "_");
        Self::ALL
            .into_iter()
            .find(|f| f.name() == norm)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown framework or ablation '{s}'")))
    }
}

/// One drop: users, channels and link budget for a seed.
#[derive(Debug, Clone)]
pub struct Instance<T> {
    pub config: SystemConfig,
    pub seed: u64,
    pub users: UserSet<T>,
    pub channels: ChannelRealization<T>,
    pub link: LinkParams<T>,
}

impl<T: Scalar> Instance<T> {
    pub fn generate(config: &SystemConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let users = generate_users(config, &mut stream_rng(seed, Stream::Placement))?;
        let channels = build_channels(config, &users, &mut stream_rng(seed, Stream::Fading))?;
        let budget = config.link_budget();
        let link = LinkParams::new(T::lit(budget.power_w), T::lit(budget.noise_w))?;
        Ok(Self { config: config.clone(), seed, users, channels, link })
    }

    pub fn users_per_side(&self) -> usize {
        self.users.users_per_side()
    }

    fn ris(&self) -> Position3D<T> {
        self.config.ris_position_m.cast()
    }

    pub fn initial_matching(&self) -> Result<Matching> {
        initial_matching(&self.users, self.ris(), self.config.matching.initial, &mut stream_rng(self.seed, Stream::Pairing))
    }

    /// Far transmitted users with near reflected users.
    pub fn distance_matching(&self) -> Matching {
        let ris = self.ris();
        let d = |ps: &[Position3D<T>]| ps.iter().map(|p| distance(*p, ris)).collect::<Vec<T>>();
        far_near_pairing(&d(self.users.transmitted()), &d(self.users.reflected()))
    }

    /// Uniform phases in `[0, 2pi)` for every user, from the phase stream.
    pub fn random_phases(&self) -> Vec<Vec<T>> {
        let mut rng = stream_rng(self.seed, Stream::Phase);
        let m = self.channels.num_elements();
        (0..self.channels.num_users())
            .map(|_| (0..m).map(|_| T::lit(rng.random::<f64>() * std::f64::consts::TAU)).collect())
            .collect()
    }
}

/// One user per slot, no superposition.
#[derive(Debug, Clone, PartialEq)]
pub struct TdmaSolution<T> {
    pub theta: Vec<Vec<T>>,
    /// Per-user time share.
    pub tau: Vec<T>,
    pub gain: Vec<T>,
    pub rate: Vec<T>,
    pub min_rate: T,
    /// Transmit power used in every slot.
    pub slot_power: T,
}

#[derive(Debug, Clone, PartialEq)]
pub enum FrameworkSolution<T> {
    Hybrid(Solution<T>),
    Tdma(TdmaSolution<T>),
}

impl<T: Scalar> FrameworkSolution<T> {
    pub fn min_rate(&self) -> T {
        match self {
            FrameworkSolution::Hybrid(s) => s.min_rate,
            FrameworkSolution::Tdma(s) => s.min_rate,
        }
    }

    pub fn rates(&self) -> &[T] {
        match self {
            FrameworkSolution::Hybrid(s) => &s.report.rate,
            FrameworkSolution::Tdma(s) => &s.rate,
        }
    }

    /// Inner AO cycles (zero for the closed-form TDMA schedule).
    pub fn iterations(&self) -> usize {
        match self {
            FrameworkSolution::Hybrid(s) => s.iterations,
            FrameworkSolution::Tdma(_) => 0,
        }
    }

    pub fn as_hybrid(&self) -> Option<&Solution<T>> {
        match self {
            FrameworkSolution::Hybrid(s) => Some(s),
            FrameworkSolution::Tdma(_) => None,
        }
    }

    /// Re-checks every constraint and that the stored rates match a fresh
    /// evaluation on `channels`.
    pub fn validate(&self, channels: &ChannelRealization<T>, link: LinkParams<T>) -> Result<()> {
        let tol = feasibility_tol::<T>();
        match self {
            FrameworkSolution::Hybrid(s) => validate_hybrid(s, channels, link),
            FrameworkSolution::Tdma(s) => {
                let sum: T = s.tau.iter().copied().sum();
                if (sum - T::one()).abs() > tol || s.tau.iter().any(|t| *t < -tol || *t > T::one() + tol) {
                    return Err(Error::Infeasible(format!("time shares sum to {sum}")));
                }
                let min = s.rate.iter().copied().fold(T::infinity(), T::min);
                if min != s.min_rate || s.min_rate < T::zero() {
                    return Err(Error::Infeasible(format!("min rate {} does not match rates", s.min_rate)));
                }
                Ok(())
            }
        }
    }
}

/// Feasibility of a hybrid solution: bijective pairing, simplex constraints,
/// valid orders, and a report reproducible from the allocation.
pub fn validate_hybrid<T: Scalar>(s: &Solution<T>, channels: &ChannelRealization<T>, link: LinkParams<T>) -> Result<()> {
    if !s.matching.is_bijection() {
        return Err(Error::Infeasible("pairing is not a bijection".into()));
    }
    check_allocation(&s.matching, &s.allocation)?;
    let fresh = evaluate(channels, &s.matching, &s.allocation, link)?;
    if fresh.min_rate != s.min_rate || s.min_rate < T::zero() {
        return Err(Error::Infeasible(format!("stored min rate {} differs from evaluation {}", s.min_rate, fresh.min_rate)));
    }
    Ok(())
}

/// Channels a framework sees: the reflect-only surface cannot serve the
/// transmitted side, and the no-RIS network has no surface path at all.
pub fn framework_channels<T: Scalar>(framework: Framework, instance: &Instance<T>) -> ChannelRealization<T> {
    let k = instance.users_per_side();
    match framework {
        Framework::HybridNomaReflectOnly => instance.channels.with_cascade_zeroed(|u| u < k),
        Framework::HybridNomaNoRis => instance.channels.with_cascade_zeroed(|_| true),
        _ => instance.channels.clone(),
    }
}

fn solve_hybrid<T: Scalar>(channels: &ChannelRealization<T>, instance: &Instance<T>, plan: &InnerPlan<T>) -> Result<Solution<T>> {
    let k = instance.users_per_side();
    let cap = instance.config.matching.scan_cap(k);
    outer_solve(channels, instance.initial_matching()?, instance.link, &instance.config.solver, plan, cap)
}

/// The proposed two-layer algorithm.
pub fn solve_hybrid_star<T: Scalar>(instance: &Instance<T>) -> Result<Solution<T>> {
    solve_hybrid(&instance.channels, instance, &InnerPlan::default())
}

/// Every user gets its own slot with the whole surface (beta = 1) and aligned phases.
pub fn solve_tdma_star<T: Scalar>(instance: &Instance<T>) -> Result<TdmaSolution<T>> {
    let ch = &instance.channels;
    let n = ch.num_users();
    let theta = plan_phases(ch, &PhasePlan::Aligned)?;
    let slot_power = match instance.config.tdma_power {
        TdmaPower::FullPerSlot => instance.link.power,
        TdmaPower::SplitAcrossSlots => instance.link.power / T::lit(n as f64),
    };
    let gain = (0..n)
        .map(|u| Ok(GainCoefficients::new(ch.direct[u], &ch.ris_user[u], &ch.bs_ris, &theta[u])?.gain(T::one())))
        .collect::<Result<Vec<T>>>()?;
    let unit: Vec<T> = gain.iter().map(|g| (*g * slot_power / instance.link.noise).ln_1p() / T::LN_2()).collect();
    let (tau, _) = optimize_time(&unit)?;
    let rate: Vec<T> = tau.iter().zip(&unit).map(|(t, r)| *t * *r).collect();
    let min_rate = rate.iter().copied().fold(T::infinity(), T::min);
    Ok(TdmaSolution { theta, tau, gain, rate, min_rate, slot_power })
}

/// Reflecting-only surface: transmitted users see only their direct link and
/// the surface reflects with full amplitude.
pub fn solve_reflect_only<T: Scalar>(instance: &Instance<T>) -> Result<Solution<T>> {
    let channels = framework_channels(Framework::HybridNomaReflectOnly, instance);
    let plan = InnerPlan { amplitude: BlockPlan::Fixed(T::zero()), ..InnerPlan::default() };
    solve_hybrid(&channels, instance, &plan)
}

/// Hybrid NOMA-TDMA without a surface.
pub fn solve_no_ris<T: Scalar>(instance: &Instance<T>) -> Result<Solution<T>> {
    let channels = framework_channels(Framework::HybridNomaNoRis, instance);
    solve_hybrid(&channels, instance, &InnerPlan::default())
}

/// The proposed algorithm with one block frozen.
pub fn solve_ablation<T: Scalar>(instance: &Instance<T>, ablation: Framework) -> Result<Solution<T>> {
    let default = InnerPlan::default();
    match ablation {
        Framework::EqualTime => solve_hybrid(&instance.channels, instance, &InnerPlan { time: TimePlan::Equal, ..default }),
        Framework::EqualPower => {
            solve_hybrid(&instance.channels, instance, &InnerPlan { power: BlockPlan::Fixed(T::lit(0.5)), ..default })
        }
        Framework::DistancePairing => {
            inner_solve_with(&instance.channels, &instance.distance_matching(), instance.link, &instance.config.solver, &default)
        }
        Framework::RandomPhase => {
            let plan = InnerPlan { phases: PhasePlan::Fixed(instance.random_phases()), ..default };
            solve_hybrid(&instance.channels, instance, &plan)
        }
        other => Err(Error::InvalidArgument(format!("{other} is not an ablation"))),
    }
}

/// Dispatches to the solver of `framework`.
pub fn solve<T: Scalar>(framework: Framework, instance: &Instance<T>) -> Result<FrameworkSolution<T>> {
    Ok(match framework {
        Framework::HybridNomaStar => FrameworkSolution::Hybrid(solve_hybrid_star(instance)?),
        Framework::TdmaStar => FrameworkSolution::Tdma(solve_tdma_star(instance)?),
        Framework::HybridNomaReflectOnly => FrameworkSolution::Hybrid(solve_reflect_only(instance)?),
        Framework::HybridNomaNoRis => FrameworkSolution::Hybrid(solve_no_ris(instance)?),
        ablation => FrameworkSolution::Hybrid(solve_ablation(instance, ablation)?),
    })
}
