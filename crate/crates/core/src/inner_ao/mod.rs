//! Inner layer: for a fixed pairing, alternate over decoding order, phases,
//! amplitude splits, power splits and time shares.

mod pair;
mod surrogate;

pub use pair::{
    equalizing_power, optimize_pair_amplitude, optimize_pair_amplitude_direct, optimize_pair_power, scan_initial_point,
    PairProblem, PairRates,
};
pub use surrogate::{amplitude_surrogate_bound, power_surrogate_bound, Affine, GainCoefficients};

use serde::{Deserialize, Serialize};

use crate::channel::ChannelRealization;
use crate::error::{Error, Result};
use crate::matching::{Matching, OuterStep};
use crate::scalar::Scalar;
use crate::scenario::ru_index;
use crate::star_noma::{decoding_order, evaluate, optimal_phase, AllocationState, LinkParams, RateReport, StarProfile, Tie};

/// How the first iterate is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitStrategy {
    /// `beta = initial_beta`, `rho = initial_rho` for every pair.
    Fixed,
    /// Per pair, the best split on a uniform grid of `init_scan_points`
    /// amplitudes, each with its rate-equalizing power split.
    #[default]
    Scan,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    /// Stop when the relative objective gain of one full cycle falls below this.
    pub inner_tol: f64,
    pub max_inner_iters: usize,
    /// Stop an SCA loop when its surrogate improvement falls below this.
    pub sca_tol: f64,
    pub max_sca_iters: usize,
    /// Interval width at which scalar searches stop.
    pub one_d_tol: f64,
    pub initial_beta: f64,
    pub initial_rho: f64,
    pub init: InitStrategy,
    pub init_scan_points: usize,
    /// Smallest amplitude used as an expansion point.
    pub beta_floor: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            inner_tol: 1e-4,
            max_inner_iters: 50,
            sca_tol: 1e-9,
            max_sca_iters: 100,
            one_d_tol: 1e-10,
            initial_beta: 0.5,
            initial_rho: 0.5,
            init: InitStrategy::Scan,
            init_scan_points: 65,
            beta_floor: 1e-6,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("inner_tol", self.inner_tol),
            ("sca_tol", self.sca_tol),
            ("one_d_tol", self.one_d_tol),
            ("beta_floor", self.beta_floor),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidConfig(format!("solver.{name} must be positive, got {v}")));
            }
        }
        if self.max_inner_iters == 0 || self.max_sca_iters == 0 {
            return Err(Error::InvalidConfig("solver iteration caps must be at least 1".into()));
        }
        if self.init_scan_points < 2 {
            return Err(Error::InvalidConfig("solver.init_scan_points must be at least 2".into()));
        }
        for (name, v) in [("initial_beta", self.initial_beta), ("initial_rho", self.initial_rho)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidConfig(format!("solver.{name} must lie in [0, 1], got {v}")));
            }
        }
        if self.beta_floor >= 1.0 {
            return Err(Error::InvalidConfig("solver.beta_floor must be below 1".into()));
        }
        Ok(())
    }
}

/// Which blocks the inner loop optimizes; the rest stay at fixed values.
#[derive(Debug, Clone, PartialEq)]
pub struct InnerPlan<T> {
    pub phases: PhasePlan<T>,
    pub amplitude: BlockPlan<T>,
    pub power: BlockPlan<T>,
    pub time: TimePlan,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PhasePlan<T> {
    /// Every user's phases aligned with its direct link.
    Aligned,
    /// Per-user phase vectors held fixed.
    Fixed(Vec<Vec<T>>),
}

/// A per-pair scalar block; the fixed value is the transmitted user's share.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BlockPlan<T> {
    Optimize,
    Fixed(T),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimePlan {
    Optimize,
    Equal,
}

impl<T> Default for InnerPlan<T> {
    fn default() -> Self {
        Self {
            phases: PhasePlan::Aligned,
            amplitude: BlockPlan::Optimize,
            power: BlockPlan::Optimize,
            time: TimePlan::Optimize,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Block {
    Init,
    Order,
    Phase,
    Amplitude,
    Power,
    Time,
}

impl Block {
    pub fn name(self) -> &'static str {
        match self {
            Block::Init => "init",
            Block::Order => "order",
            Block::Phase => "phase",
            Block::Amplitude => "amplitude",
            Block::Power => "power",
            Block::Time => "time",
        }
    }
}

/// Objective after one block of one inner iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint<T> {
    pub iteration: usize,
    pub block: Block,
    pub objective: T,
}

/// Result of the inner (and possibly outer) solve.
#[derive(Debug, Clone, PartialEq)]
pub struct Solution<T> {
    pub matching: Matching,
    pub allocation: AllocationState<T>,
    pub report: RateReport<T>,
    pub min_rate: T,
    pub inner_trace: Vec<TracePoint<T>>,
    /// Full AO cycles run.
    pub iterations: usize,
    /// Whether the relative-improvement test fired before the iteration cap.
    pub converged: bool,
    /// Swap attempts of the outer layer; empty for a fixed pairing.
    pub outer_trace: Vec<OuterStep<T>>,
    /// Whether the outer scan cap stopped the swap search early.
    pub outer_cap_hit: bool,
}

/// Closed-form max-min time shares for per-pair unit rates.
///
/// Returns `(tau, S)`. With every rate positive, all pairs end up at the same
/// time-weighted rate `S = 1 / sum(1 / r)`; a zero rate forces `S = 0` and
/// uniform shares.
pub fn optimize_time<T: Scalar>(unit_rates: &[T]) -> Result<(Vec<T>, T)> {
    if unit_rates.is_empty() {
        return Err(Error::InvalidArgument("no pairs to schedule".into()));
    }
    if let Some(bad) = unit_rates.iter().find(|r| !(**r >= T::zero() && r.is_finite())) {
        return Err(Error::InvalidArgument(format!("unit rate {bad} is not a finite nonnegative number")));
    }
    let n = T::lit(unit_rates.len() as f64);
    if unit_rates.iter().any(|r| *r <= T::zero()) {
        return Ok((vec![T::one() / n; unit_rates.len()], T::zero()));
    }
    let inv_sum: T = unit_rates.iter().map(|r| T::one() / *r).sum();
    let s = T::one() / inv_sum;
    let mut tau: Vec<T> = unit_rates.iter().map(|r| s / *r).collect();
    // Renormalize so the shares sum to one to working precision.
    let total: T = tau.iter().copied().sum();
    for t in &mut tau {
        *t = *t / total;
    }
    Ok((tau, s))
}

/// Per-user phases for a plan.
pub fn plan_phases<T: Scalar>(channels: &ChannelRealization<T>, plan: &PhasePlan<T>) -> Result<Vec<Vec<T>>> {
    match plan {
        PhasePlan::Aligned => Ok((0..channels.num_users())
            .map(|u| optimal_phase(channels.direct[u], &channels.ris_user[u], &channels.bs_ris))
            .collect()),
        PhasePlan::Fixed(theta) => {
            if theta.len() != channels.num_users() {
                return Err(Error::DimensionMismatch { expected: channels.num_users(), got: theta.len() });
            }
            Ok(theta.clone())
        }
    }
}

/// Pair subproblems of `matching` under the given phases, indexed by transmitted user.
pub fn pair_problems<T: Scalar>(
    channels: &ChannelRealization<T>,
    matching: &Matching,
    theta: &[Vec<T>],
    link: LinkParams<T>,
) -> Result<Vec<PairProblem<T>>> {
    let k = matching.users_per_side();
    let coeffs = |u: usize| GainCoefficients::new(channels.direct[u], &channels.ris_user[u], &channels.bs_ris, &theta[u]);
    matching
        .pairs()
        .map(|(t, r)| Ok(PairProblem { tu: coeffs(t)?, ru: coeffs(ru_index(k, r))?, link }))
        .collect()
}

/// Amplitude block over all pairs; never lowers any pair's min rate.
pub fn optimize_amplitudes<T: Scalar>(pairs: &[PairProblem<T>], beta_t: &[T], rho_t: &[T], opts: &SolverOptions) -> Vec<T> {
    pairs
        .iter()
        .zip(beta_t.iter().zip(rho_t))
        .map(|(p, (&b, &r))| {
            let next = optimize_pair_amplitude(p, b, r, opts);
            if p.value(next, r) >= p.value(b, r) {
                next
            } else {
                b
            }
        })
        .collect()
}

/// Power block over all pairs; never lowers any pair's min rate.
pub fn optimize_powers<T: Scalar>(pairs: &[PairProblem<T>], beta_t: &[T], rho_t: &[T], opts: &SolverOptions) -> Vec<T> {
    pairs
        .iter()
        .zip(beta_t.iter().zip(rho_t))
        .map(|(p, (&b, &r))| {
            let next = optimize_pair_power(p, b, r, opts);
            if p.value(b, next) >= p.value(b, r) {
                next
            } else {
                r
            }
        })
        .collect()
}

/// Iterate of the inner loop, in per-pair form (index = transmitted user).
struct Iterate<T> {
    beta_t: Vec<T>,
    rho_t: Vec<T>,
    tau: Vec<T>,
}

impl<T: Scalar> Iterate<T> {
    fn allocation(&self, pairs: &[PairProblem<T>], matching: &Matching, theta: &[Vec<T>]) -> AllocationState<T> {
        let k = matching.users_per_side();
        let mut beta = vec![T::zero(); 2 * k];
        let mut rho = vec![T::zero(); 2 * k];
        let mut pi = vec![0u8; 2 * k];
        for (t, r) in matching.pairs() {
            let ur = ru_index(k, r);
            beta[t] = self.beta_t[t];
            beta[ur] = T::one() - self.beta_t[t];
            rho[t] = self.rho_t[t];
            rho[ur] = T::one() - self.rho_t[t];
            let (g_t, g_r) = pairs[t].gains(self.beta_t[t]);
            let (pt, pr) = decoding_order(g_t, g_r, Tie::First);
            pi[t] = pt;
            pi[ur] = pr;
        }
        AllocationState {
            star: StarProfile { beta, theta: theta.to_vec() },
            rho,
            tau: self.tau.clone(),
            pi,
        }
    }
}

/// Inner solve with every block optimized.
pub fn inner_solve<T: Scalar>(
    channels: &ChannelRealization<T>,
    matching: &Matching,
    link: LinkParams<T>,
    options: &SolverOptions,
) -> Result<Solution<T>> {
    inner_solve_with(channels, matching, link, options, &InnerPlan::default())
}

/// Inner solve with some blocks held fixed.
///
/// The objective is re-evaluated from the model after every block and the
/// trace records it; each block only accepts changes that do not lower it.
pub fn inner_solve_with<T: Scalar>(
    channels: &ChannelRealization<T>,
    matching: &Matching,
    link: LinkParams<T>,
    options: &SolverOptions,
    plan: &InnerPlan<T>,
) -> Result<Solution<T>> {
    options.validate()?;
    channels.validate()?;
    let k = matching.users_per_side();
    if channels.num_users() != 2 * k {
        return Err(Error::DimensionMismatch { expected: 2 * k, got: channels.num_users() });
    }
    for (name, block) in [("amplitude", plan.amplitude), ("power", plan.power)] {
        if let BlockPlan::Fixed(v) = block {
            if !(v >= T::zero() && v <= T::one()) {
                return Err(Error::InvalidArgument(format!("fixed {name} share {v} outside [0, 1]")));
            }
        }
    }
    let theta = plan_phases(channels, &plan.phases)?;
    let pairs = pair_problems(channels, matching, &theta, link)?;

    let fixed_beta = match plan.amplitude {
        BlockPlan::Fixed(v) => Some(v),
        BlockPlan::Optimize => None,
    };
    let fixed_rho = match plan.power {
        BlockPlan::Fixed(v) => Some(v),
        BlockPlan::Optimize => None,
    };
    let equal_tau = vec![T::one() / T::lit(k as f64); k];
    let mut it = Iterate { beta_t: vec![T::zero(); k], rho_t: vec![T::zero(); k], tau: equal_tau };
    let grid: Vec<T> = match fixed_beta {
        Some(b) => vec![b],
        None => {
            let n = options.init_scan_points;
            (0..n).map(|i| T::lit(i as f64 / (n - 1) as f64)).collect()
        }
    };
    for (t, p) in pairs.iter().enumerate() {
        let (b, r) = match options.init {
            InitStrategy::Scan => scan_initial_point(p, &grid, fixed_rho),
            InitStrategy::Fixed => (
                fixed_beta.unwrap_or(T::lit(options.initial_beta)),
                fixed_rho.unwrap_or(T::lit(options.initial_rho)),
            ),
        };
        it.beta_t[t] = b;
        it.rho_t[t] = r;
    }

    let eval = |it: &Iterate<T>, iteration: usize| -> Result<(AllocationState<T>, RateReport<T>)> {
        let allocation = it.allocation(&pairs, matching, &theta);
        let report = evaluate(channels, matching, &allocation, link)
            .map_err(|e| Error::Inner { iteration, source: Box::new(e) })?;
        Ok((allocation, report))
    };
    let (mut allocation, mut report) = eval(&it, 0)?;
    let mut trace = vec![TracePoint { iteration: 0, block: Block::Init, objective: report.min_rate }];
    let mut converged = false;
    let mut iterations = 0;

    for iteration in 1..=options.max_inner_iters {
        iterations = iteration;
        let start = report.min_rate;
        // Order and phase blocks: the order follows the gains and phases stay
        // at their plan values, so both leave the iterate as is.
        for block in [Block::Order, Block::Phase] {
            trace.push(TracePoint { iteration, block, objective: report.min_rate });
        }
        if fixed_beta.is_none() {
            it.beta_t = optimize_amplitudes(&pairs, &it.beta_t, &it.rho_t, options);
        }
        report = eval(&it, iteration)?.1;
        trace.push(TracePoint { iteration, block: Block::Amplitude, objective: report.min_rate });
        if fixed_rho.is_none() {
            it.rho_t = optimize_powers(&pairs, &it.beta_t, &it.rho_t, options);
        }
        (allocation, report) = eval(&it, iteration)?;
        trace.push(TracePoint { iteration, block: Block::Power, objective: report.min_rate });
        if plan.time == TimePlan::Optimize {
            let unit: Vec<T> = pairs.iter().zip(it.beta_t.iter().zip(&it.rho_t)).map(|(p, (&b, &r))| p.value(b, r)).collect();
            let (tau, _) = optimize_time(&unit).map_err(|e| Error::Inner { iteration, source: Box::new(e) })?;
            let before = it.tau.clone();
            it.tau = tau;
            let (a, r) = eval(&it, iteration)?;
            if r.min_rate >= report.min_rate {
                (allocation, report) = (a, r);
            } else {
                it.tau = before;
            }
        }
        trace.push(TracePoint { iteration, block: Block::Time, objective: report.min_rate });
        let gain = report.min_rate - start;
        if gain <= T::lit(options.inner_tol) * start.abs().max(T::min_positive_value()) {
            converged = true;
            break;
        }
    }

    Ok(Solution {
        matching: matching.clone(),
        min_rate: report.min_rate,
        allocation,
        report,
        inner_trace: trace,
        iterations,
        converged,
        outer_trace: Vec::new(),
        outer_cap_hit: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::build_channels;
    use crate::scenario::{generate_users, stream_rng, Stream, SystemConfig};
    use approx::assert_relative_eq;

    fn scenario(seed: u64, k: usize, m: usize) -> (ChannelRealization<f64>, LinkParams<f64>) {
        let config = SystemConfig { users_per_side: k, elements_y: m, elements_z: 1, seed, ..Default::default() };
        let users = generate_users::<f64, _>(&config, &mut stream_rng(seed, Stream::Placement)).unwrap();
        let ch = build_channels(&config, &users, &mut stream_rng(seed, Stream::Fading)).unwrap();
        let lb = config.link_budget();
        (ch, LinkParams::new(lb.power_w, lb.noise_w).unwrap())
    }

    #[test]
    fn time_examples() {
        let (tau, s) = optimize_time(&[1.0, 1.0]).unwrap();
        assert_eq!((tau, s), (vec![0.5, 0.5], 0.5));
        let (tau, s) = optimize_time(&[1.0, 3.0]).unwrap();
        assert_relative_eq!(tau[0], 0.75, max_relative = 1e-15);
        assert_relative_eq!(tau[1], 0.25, max_relative = 1e-15);
        assert_relative_eq!(s, 0.75, max_relative = 1e-15);
        assert_eq!(optimize_time(&[2.5]).unwrap(), (vec![1.0], 2.5));
        assert_eq!(optimize_time(&[0.0, 2.0]).unwrap(), (vec![0.5, 0.5], 0.0));
        assert!(optimize_time::<f64>(&[]).is_err());
        assert!(optimize_time(&[-1.0]).is_err());
    }

    #[test]
    fn options_validation() {
        assert!(SolverOptions::default().validate().is_ok());
        let bad = SolverOptions { inner_tol: 0.0, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = SolverOptions { max_sca_iters: 0, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = SolverOptions { initial_rho: 1.5, ..Default::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn trace_is_monotone() {
        for seed in 0..10 {
            let (ch, link) = scenario(seed, 3, 8);
            let sol = inner_solve(&ch, &Matching::identity(3), link, &SolverOptions::default()).unwrap();
            for w in sol.inner_trace.windows(2) {
                assert!(w[1].objective >= w[0].objective - 1e-9, "seed {seed}: {w:?}");
            }
            assert_eq!(sol.min_rate, sol.report.min_rate);
        }
    }

    #[test]
    fn fixed_start_is_also_monotone() {
        let opts = SolverOptions { init: InitStrategy::Fixed, ..Default::default() };
        let (ch, link) = scenario(3, 2, 4);
        let sol = inner_solve(&ch, &Matching::identity(2), link, &opts).unwrap();
        assert_eq!(sol.inner_trace[0].block, Block::Init);
        for w in sol.inner_trace.windows(2) {
            assert!(w[1].objective >= w[0].objective - 1e-9);
        }
    }

    #[test]
    fn time_shares_equalize_pair_rates() {
        let (ch, link) = scenario(5, 3, 8);
        let sol = inner_solve(&ch, &Matching::identity(3), link, &SolverOptions::default()).unwrap();
        let k = 3;
        let pair_min: Vec<f64> = (0..k).map(|t| sol.report.rate[t].min(sol.report.rate[k + t])).collect();
        for r in &pair_min {
            assert_relative_eq!(*r, sol.min_rate, max_relative = 1e-9);
        }
    }

    #[test]
    fn no_ris_reduces_to_power_and_time() {
        let (ch, link) = scenario(6, 2, 4);
        let bare = ch.with_cascade_zeroed(|_| true);
        let sol = inner_solve(&bare, &Matching::identity(2), link, &SolverOptions::default()).unwrap();
        for u in 0..4 {
            assert_relative_eq!(sol.report.gain[u], ch.direct[u].norm_sqr(), max_relative = 1e-12);
        }
        assert!(sol.allocation.star.beta.iter().all(|&b| b == 0.5));
    }

    #[test]
    fn fixed_blocks_are_respected() {
        let (ch, link) = scenario(7, 2, 4);
        let plan = InnerPlan { power: BlockPlan::Fixed(0.5), time: TimePlan::Equal, ..Default::default() };
        let sol = inner_solve_with(&ch, &Matching::identity(2), link, &SolverOptions::default(), &plan).unwrap();
        assert!(sol.allocation.rho.iter().all(|&r| r == 0.5));
        assert!(sol.allocation.tau.iter().all(|&t| t == 0.5));
    }

    #[test]
    fn works_in_f32() {
        let (ch, link) = scenario(8, 2, 4);
        let cast = |v: &[num_complex::Complex<f64>]| v.iter().map(|z| num_complex::Complex::new(z.re as f32, z.im as f32)).collect::<Vec<_>>();
        let ch32 = ChannelRealization {
            direct: cast(&ch.direct),
            bs_ris: cast(&ch.bs_ris),
            ris_user: ch.ris_user.iter().map(|v| cast(v)).collect(),
        };
        let link32 = LinkParams::new(link.power as f32, link.noise as f32).unwrap();
        let opts = SolverOptions { one_d_tol: 1e-6, sca_tol: 1e-6, ..Default::default() };
        let s32 = inner_solve(&ch32, &Matching::identity(2), link32, &opts).unwrap();
        let s64 = inner_solve(&ch, &Matching::identity(2), link, &SolverOptions::default()).unwrap();
        assert_relative_eq!(s32.min_rate as f64, s64.min_rate, max_relative = 1e-3);
    }
}
