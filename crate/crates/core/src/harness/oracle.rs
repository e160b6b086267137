//! Brute-force references for the optimizer: a generic LP solver, grid
//! searches on the exact rate expressions, and exhaustive pairing enumeration.
//!
//! Everything here recomputes rates from the channel vectors directly and does
//! not go through the solver's per-pair reformulation.

use rand::Rng;

use crate::baselines::Instance;
use crate::channel::ChannelRealization;
use crate::error::{Error, Result};
use crate::inner_ao::{inner_solve, inner_solve_with, optimize_time, plan_phases, InnerPlan, PhasePlan, PairProblem, GainCoefficients, SolverOptions};
use crate::matching::{all_matchings, outer_solve, swap, Matching};
use crate::scenario::{stream_rng, Stream, SystemConfig};
use crate::star_noma::{combined_gain, decoding_order, optimal_phase, rate, sinr, LinkParams, Tie};

/// Maximizes `c . x` subject to `A x <= b`, `x >= 0`, with `b >= 0`.
///
/// Dense tableau simplex with Bland's rule, so degenerate pivots cannot cycle.
pub fn simplex_max(c: &[f64], a: &[Vec<f64>], b: &[f64]) -> Result<(Vec<f64>, f64)> {
    let (m, n) = (a.len(), c.len());
    if b.len() != m || a.iter().any(|row| row.len() != n) {
        return Err(Error::DimensionMismatch { expected: m, got: b.len() });
    }
    if b.iter().any(|v| *v < 0.0) {
        return Err(Error::InvalidArgument("simplex needs b >= 0 so the origin is feasible".into()));
    }
    // Tableau rows: [A | I | b]; objective row: [-c | 0 | 0].
    let width = n + m + 1;
    let mut t = vec![vec![0.0; width]; m + 1];
    for i in 0..m {
        t[i][..n].copy_from_slice(&a[i]);
        t[i][n + i] = 1.0;
        t[i][width - 1] = b[i];
    }
    for j in 0..n {
        t[m][j] = -c[j];
    }
    let mut basis: Vec<usize> = (n..n + m).collect();
    let eps = 1e-12;
    for _ in 0..10_000 {
        let Some(enter) = (0..n + m).find(|&j| t[m][j] < -eps) else {
            let mut x = vec![0.0; n];
            for (i, &bv) in basis.iter().enumerate() {
                if bv < n {
                    x[bv] = t[i][width - 1];
                }
            }
            return Ok((x, t[m][width - 1]));
        };
        let mut leave: Option<(usize, f64)> = None;
        for i in 0..m {
            if t[i][enter] > eps {
                let ratio = t[i][width - 1] / t[i][enter];
                leave = match leave {
                    Some((li, lr)) if ratio > lr || (ratio == lr && basis[i] > basis[li]) => Some((li, lr)),
                    _ => Some((i, ratio)),
                };
            }
        }
        let Some((row, _)) = leave else {
            return Err(Error::Infeasible("linear program is unbounded".into()));
        };
        let p = t[row][enter];
        for v in &mut t[row] {
            *v /= p;
        }
        for i in 0..=m {
            if i != row {
                let f = t[i][enter];
                if f != 0.0 {
                    let pivot = t[row].clone();
                    for (x, y) in t[i].iter_mut().zip(&pivot) {
                        *x -= f * y;
                    }
                }
            }
        }
        basis[row] = enter;
    }
    Err(Error::Infeasible("simplex iteration limit".into()))
}

/// Max-min time allocation as an LP: maximize `S` s.t. `S <= tau_p r_p`,
/// `sum tau <= 1`, all variables nonnegative. Returns `(tau, S)`.
pub fn lp_time_allocation(rates: &[f64]) -> Result<(Vec<f64>, f64)> {
    let k = rates.len();
    // Variables: [S, tau_0, ..., tau_{k-1}].
    let mut c = vec![0.0; k + 1];
    c[0] = 1.0;
    let mut a = Vec::with_capacity(k + 1);
    for (p, r) in rates.iter().enumerate() {
        let mut row = vec![0.0; k + 1];
        row[0] = 1.0;
        row[p + 1] = -r;
        a.push(row);
    }
    let mut sum = vec![1.0; k + 1];
    sum[0] = 0.0;
    a.push(sum);
    let mut b = vec![0.0; k];
    b.push(1.0);
    let (x, s) = simplex_max(&c, &a, &b)?;
    Ok((x[1..].to_vec(), s))
}

/// Rates `(transmitted, reflected)` of pair `(tu, ru)` at unit time share,
/// from the channel vectors with the order given by the gains.
pub fn exact_pair_rates(
    channels: &ChannelRealization<f64>,
    tu: usize,
    ru: usize,
    theta: &[Vec<f64>],
    beta_t: f64,
    rho_t: f64,
    link: LinkParams<f64>,
) -> Result<(f64, f64)> {
    let g = |u: usize, beta: f64| -> Result<f64> {
        Ok(combined_gain(channels.direct[u], &channels.ris_user[u], &channels.bs_ris, beta, &theta[u])?.norm_sqr())
    };
    let (g_t, g_r) = (g(tu, beta_t)?, g(ru, 1.0 - beta_t)?);
    let (pi_t, pi_r) = decoding_order(g_t, g_r, Tie::First);
    let r_t = rate(1.0, sinr(g_t, rho_t, 1.0 - rho_t, pi_r, link.power, link.noise)?);
    let r_r = rate(1.0, sinr(g_r, 1.0 - rho_t, rho_t, pi_t, link.power, link.noise)?);
    Ok((r_t, r_r))
}

fn grid(step: f64) -> impl Iterator<Item = f64> {
    let n = (1.0 / step).round() as usize;
    (0..=n).map(move |i| i as f64 / n as f64)
}

/// Best pair min rate over a `beta_t` grid with `rho_t` fixed: `(beta_t, value)`.
pub fn grid_amplitude(
    channels: &ChannelRealization<f64>,
    tu: usize,
    ru: usize,
    theta: &[Vec<f64>],
    rho_t: f64,
    link: LinkParams<f64>,
    step: f64,
) -> Result<(f64, f64)> {
    let mut best = (0.0, f64::MIN);
    for b in grid(step) {
        let (x, y) = exact_pair_rates(channels, tu, ru, theta, b, rho_t, link)?;
        if x.min(y) > best.1 {
            best = (b, x.min(y));
        }
    }
    Ok(best)
}

/// Best pair min rate over a `rho_t` grid with `beta_t` fixed: `(rho_t, value)`.
pub fn grid_power(
    channels: &ChannelRealization<f64>,
    tu: usize,
    ru: usize,
    theta: &[Vec<f64>],
    beta_t: f64,
    link: LinkParams<f64>,
    step: f64,
) -> Result<(f64, f64)> {
    let mut best = (0.0, f64::MIN);
    for r in grid(step) {
        let (x, y) = exact_pair_rates(channels, tu, ru, theta, beta_t, r, link)?;
        if x.min(y) > best.1 {
            best = (r, x.min(y));
        }
    }
    Ok(best)
}

/// Joint grid over `(beta_t, rho_t)` for a single pair with aligned phases and
/// `tau = 1`. Returns `(beta_t, rho_t, value)`.
pub fn grid_joint_single_pair(channels: &ChannelRealization<f64>, link: LinkParams<f64>, step: f64) -> Result<(f64, f64, f64)> {
    if channels.num_users() != 2 {
        return Err(Error::DimensionMismatch { expected: 2, got: channels.num_users() });
    }
    let theta: Vec<Vec<f64>> =
        (0..2).map(|u| optimal_phase(channels.direct[u], &channels.ris_user[u], &channels.bs_ris)).collect();
    let gain = |u: usize, beta: f64| -> Result<f64> {
        Ok(combined_gain(channels.direct[u], &channels.ris_user[u], &channels.bs_ris, beta, &theta[u])?.norm_sqr())
    };
    let rhos: Vec<f64> = grid(step).collect();
    let mut best = (0.0, 0.0, f64::MIN);
    for b in grid(step) {
        let (g_t, g_r) = (gain(0, b)?, gain(1, 1.0 - b)?);
        let (pi_t, pi_r) = decoding_order(g_t, g_r, Tie::First);
        for &r in &rhos {
            let r_t = rate(1.0, sinr(g_t, r, 1.0 - r, pi_r, link.power, link.noise)?);
            let r_r = rate(1.0, sinr(g_r, 1.0 - r, r, pi_t, link.power, link.noise)?);
            if r_t.min(r_r) > best.2 {
                best = (b, r, r_t.min(r_r));
            }
        }
    }
    Ok(best)
}

/// Best pairing by enumerating all `K!` matchings: `(matching, utility)`.
pub fn best_matching(
    channels: &ChannelRealization<f64>,
    link: LinkParams<f64>,
    options: &SolverOptions,
    plan: &InnerPlan<f64>,
) -> Result<(Matching, f64)> {
    let k = channels.num_users() / 2;
    let mut best: Option<(Matching, f64)> = None;
    for m in all_matchings(k) {
        let w = inner_solve_with(channels, &m, link, options, plan)?.min_rate;
        if best.as_ref().is_none_or(|(_, bw)| w > *bw) {
            best = Some((m, w));
        }
    }
    best.ok_or_else(|| Error::InvalidArgument("no users".into()))
}

/// Whether some single swap of `matching` strictly raises the utility.
pub fn has_swap_blocking_pair(
    channels: &ChannelRealization<f64>,
    matching: &Matching,
    link: LinkParams<f64>,
    options: &SolverOptions,
    plan: &InnerPlan<f64>,
) -> Result<bool> {
    let k = matching.users_per_side();
    let w = inner_solve_with(channels, matching, link, options, plan)?.min_rate;
    for a in 0..k {
        for b in a + 1..k {
            if inner_solve_with(channels, &swap(matching, a, b)?, link, options, plan)?.min_rate > w {
                return Ok(true);
            }
        }
    }
    Ok(false)
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleCheck {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn small_config(k: usize, m: usize) -> SystemConfig {
    SystemConfig { users_per_side: k, elements_y: m, elements_z: 1, ..SystemConfig::default() }
}

/// A fast subset of the oracle comparisons, for a pass/fail report.
pub fn run_suite(base_seed: u64, instances: usize) -> Result<Vec<OracleCheck>> {
    let opts = SolverOptions::default();
    let mut out = Vec::new();

    let mut rng = stream_rng(base_seed, Stream::Fading);
    let mut worst_lp = 0.0f64;
    for i in 0..instances.max(1) {
        let k = rng.random_range(1..=6);
        let mut r: Vec<f64> = (0..k).map(|_| rng.random_range(0.0..8.0)).collect();
        if i == 0 {
            r[0] = 0.0;
        }
        let (_, s_closed) = optimize_time(&r)?;
        let (_, s_lp) = lp_time_allocation(&r)?;
        worst_lp = worst_lp.max((s_closed - s_lp).abs());
    }
    out.push(OracleCheck {
        name: "time_shares_vs_lp",
        passed: worst_lp <= 1e-9,
        detail: format!("max |S_closed - S_lp| = {worst_lp:.3e}"),
    });

    let mut worst_pair = 0.0f64;
    let mut worst_joint = 0.0f64;
    for i in 0..instances.max(1) {
        let inst = Instance::<f64>::generate(&small_config(1, 8), base_seed + i as u64)?;
        let ch = &inst.channels;
        let theta = plan_phases(ch, &PhasePlan::Aligned)?;
        let coeffs = |u: usize| GainCoefficients::new(ch.direct[u], &ch.ris_user[u], &ch.bs_ris, &theta[u]);
        let p = PairProblem { tu: coeffs(0)?, ru: coeffs(1)?, link: inst.link };
        let rho_t = 0.2 + 0.6 * (i as f64 / instances.max(1) as f64);
        let b = crate::inner_ao::optimize_pair_amplitude(&p, 0.5, rho_t, &opts);
        let (_, ob) = grid_amplitude(ch, 0, 1, &theta, rho_t, inst.link, 1e-3)?;
        let (x, y) = exact_pair_rates(ch, 0, 1, &theta, b, rho_t, inst.link)?;
        worst_pair = worst_pair.max((ob - x.min(y)) / ob);
        let sol = inner_solve(ch, &Matching::identity(1), inst.link, &opts)?;
        let (_, _, oj) = grid_joint_single_pair(ch, inst.link, 1e-2)?;
        worst_joint = worst_joint.max((oj - sol.min_rate) / oj);
    }
    out.push(OracleCheck {
        name: "amplitude_vs_grid",
        passed: worst_pair <= 1e-3,
        detail: format!("worst relative shortfall {worst_pair:.3e}"),
    });
    out.push(OracleCheck {
        name: "single_pair_vs_joint_grid",
        passed: worst_joint <= 1e-2,
        detail: format!("worst relative shortfall {worst_joint:.3e}"),
    });

    let mut hits = 0;
    let mut exceeded = false;
    let n = instances.max(1);
    for i in 0..n {
        let inst = Instance::<f64>::generate(&small_config(2, 4), base_seed + 1000 + i as u64)?;
        let plan = InnerPlan::default();
        let sol = outer_solve(&inst.channels, inst.initial_matching()?, inst.link, &opts, &plan, 1)?;
        let (_, best) = best_matching(&inst.channels, inst.link, &opts, &plan)?;
        exceeded |= sol.min_rate > best;
        hits += usize::from(sol.min_rate == best);
    }
    out.push(OracleCheck {
        name: "matching_vs_enumeration",
        passed: !exceeded && hits * 5 >= n * 4,
        detail: format!("{hits}/{n} optimal, exceeded = {exceeded}"),
    });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn simplex_textbook_problem() {
        // max 3x + 5y, x <= 4, 2y <= 12, 3x + 2y <= 18 -> (2, 6), 36.
        let (x, v) = simplex_max(&[3.0, 5.0], &[vec![1.0, 0.0], vec![0.0, 2.0], vec![3.0, 2.0]], &[4.0, 12.0, 18.0]).unwrap();
        assert_relative_eq!(v, 36.0, epsilon = 1e-12);
        assert_relative_eq!(x[0], 2.0, epsilon = 1e-12);
        assert_relative_eq!(x[1], 6.0, epsilon = 1e-12);
    }

    #[test]
    fn simplex_detects_unbounded() {
        assert!(simplex_max(&[1.0], &[vec![-1.0]], &[1.0]).is_err());
    }

    #[test]
    fn lp_time_examples() {
        let (tau, s) = lp_time_allocation(&[1.0, 3.0]).unwrap();
        assert_relative_eq!(s, 0.75, epsilon = 1e-12);
        assert_relative_eq!(tau[0], 0.75, epsilon = 1e-12);
        let (_, s) = lp_time_allocation(&[0.0, 3.0]).unwrap();
        assert_eq!(s, 0.0);
    }

    #[test]
    fn suite_passes() {
        for c in run_suite(1, 4).unwrap() {
            assert!(c.passed, "{}: {}", c.name, c.detail);
        }
    }
}
