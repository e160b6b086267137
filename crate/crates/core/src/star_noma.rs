//! Physical-layer model of the STAR-RIS hybrid NOMA downlink: combined channel
//! gain, phase alignment, SIC decoding order, SINR and time-shared rates.

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::channel::ChannelRealization;
use crate::error::{Error, Result};
use crate::matching::Matching;
use crate::scalar::Scalar;
use crate::scenario::ru_index;

/// Transmit power and receiver noise power, both in watts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkParams<T> {
    pub power: T,
    pub noise: T,
}

impl<T: Scalar> LinkParams<T> {
    pub fn new(power: T, noise: T) -> Result<Self> {
        if !(power > T::zero()) || !(noise > T::zero()) {
            return Err(Error::InvalidArgument(format!("power ({power}) and noise ({noise}) must be positive")));
        }
        Ok(Self { power, noise })
    }
}

/// Absolute slack used when checking simplex-type constraints.
pub fn feasibility_tol<T: Scalar>() -> T {
    T::lit(1e-9).max(T::epsilon() * T::lit(64.0))
}

/// Per-user surface configuration: amplitude split `beta` and per-element phases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StarProfile<T> {
    pub beta: Vec<T>,
    pub theta: Vec<Vec<T>>,
}

/// Complete resource allocation for a fixed pairing.
///
/// Per-user vectors use global user indexing (transmitted users first); `tau`
/// is indexed by pair, and pair `p` is the pair of transmitted user `p`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationState<T> {
    pub star: StarProfile<T>,
    pub rho: Vec<T>,
    pub tau: Vec<T>,
    pub pi: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateReport<T> {
    /// `|h_k|^2` of the equivalent combined channel.
    pub gain: Vec<T>,
    pub sinr: Vec<T>,
    /// Time-share weighted rate in bit/s/Hz.
    pub rate: Vec<T>,
    pub min_rate: T,
}

/// Which pair member receives decoding order 1 when the two gains are equal.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tie {
    First,
    Second,
}

/// Equivalent combined channel `h_direct + sum_m conj(h_ris_user[m]) sqrt(beta) e^{j theta_m} h_bs_ris[m]`.
pub fn combined_gain<T: Scalar>(
    h_direct: Complex<T>,
    h_ris_user: &[Complex<T>],
    h_bs_ris: &[Complex<T>],
    beta: T,
    theta: &[T],
) -> Result<Complex<T>> {
    if h_ris_user.len() != h_bs_ris.len() {
        return Err(Error::DimensionMismatch { expected: h_bs_ris.len(), got: h_ris_user.len() });
    }
    if theta.len() != h_bs_ris.len() {
        return Err(Error::DimensionMismatch { expected: h_bs_ris.len(), got: theta.len() });
    }
    if !(beta >= T::zero() && beta <= T::one()) {
        return Err(Error::InvalidArgument(format!("amplitude split {beta} outside [0, 1]")));
    }
    let cascade: Complex<T> = h_ris_user
        .iter()
        .zip(h_bs_ris)
        .zip(theta)
        .map(|((s, b), &t)| s.conj() * Complex::from_polar(T::one(), t) * b)
        .fold(Complex::new(T::zero(), T::zero()), |acc, x| acc + x);
    Ok(h_direct + cascade * beta.sqrt())
}

fn wrap_phase<T: Scalar>(x: T) -> T {
    let tau = T::TAU();
    let mut r = x % tau;
    if r < T::zero() {
        r = r + tau;
    }
    if r >= tau {
        r = T::zero();
    }
    r
}

/// Phases that align every cascaded element with the direct link.
///
/// With a zero direct link the common reference phase is 0.
pub fn optimal_phase<T: Scalar>(h_direct: Complex<T>, h_ris_user: &[Complex<T>], h_bs_ris: &[Complex<T>]) -> Vec<T> {
    let reference = if h_direct.norm_sqr() > T::zero() { h_direct.arg() } else { T::zero() };
    h_ris_user
        .iter()
        .zip(h_bs_ris)
        .map(|(s, b)| wrap_phase(reference - s.conj().arg() - b.arg()))
        .collect()
}

/// SIC decoding order from the two `|h|` values: the stronger user gets 1.
pub fn decoding_order<T: Scalar>(g_first: T, g_second: T, tie: Tie) -> (u8, u8) {
    if g_first > g_second {
        (1, 0)
    } else if g_first < g_second {
        (0, 1)
    } else {
        match tie {
            Tie::First => (1, 0),
            Tie::Second => (0, 1),
        }
    }
}

/// SINR of a user with channel power `g2` when its partner has order `pi_paired`.
pub fn sinr<T: Scalar>(g2: T, rho: T, rho_paired: T, pi_paired: u8, power: T, noise: T) -> Result<T> {
    if !(noise > T::zero()) {
        return Err(Error::InvalidArgument(format!("noise power must be positive, got {noise}")));
    }
    let interference = if pi_paired == 1 { g2 * rho_paired * power } else { T::zero() };
    Ok(g2 * rho * power / (interference + noise))
}

pub fn rate<T: Scalar>(tau: T, sinr: T) -> T {
    tau * sinr.ln_1p() / T::LN_2()
}

/// Combined-channel power `|h_k|^2` of user `k` under the given profile.
pub fn user_gain<T: Scalar>(channels: &ChannelRealization<T>, k: usize, beta: T, theta: &[T]) -> Result<T> {
    Ok(combined_gain(channels.direct[k], &channels.ris_user[k], &channels.bs_ris, beta, theta)?.norm_sqr())
}

fn check_dims<T: Scalar>(channels: &ChannelRealization<T>, matching: &Matching, a: &AllocationState<T>) -> Result<()> {
    let n = channels.num_users();
    let k = matching.users_per_side();
    if n != 2 * k {
        return Err(Error::DimensionMismatch { expected: 2 * k, got: n });
    }
    for len in [a.star.beta.len(), a.star.theta.len(), a.rho.len(), a.pi.len()] {
        if len != n {
            return Err(Error::DimensionMismatch { expected: n, got: len });
        }
    }
    if a.tau.len() != k {
        return Err(Error::DimensionMismatch { expected: k, got: a.tau.len() });
    }
    Ok(())
}

/// Checks every allocation constraint except SIC feasibility, naming the first violation.
pub fn check_allocation<T: Scalar>(matching: &Matching, a: &AllocationState<T>) -> Result<()> {
    let tol = feasibility_tol::<T>();
    let k = matching.users_per_side();
    let unit = |name: &str, user: usize, v: T| -> Result<()> {
        if v >= -tol && v <= T::one() + tol && v.is_finite() {
            Ok(())
        } else {
            Err(Error::Infeasible(format!("{name}[{user}] = {v} outside [0, 1]")))
        }
    };
    for (t, r) in matching.pairs() {
        let (ut, ur) = (t, ru_index(k, r));
        unit("beta", ut, a.star.beta[ut])?;
        unit("beta", ur, a.star.beta[ur])?;
        unit("rho", ut, a.rho[ut])?;
        unit("rho", ur, a.rho[ur])?;
        unit("tau", t, a.tau[t])?;
        let bsum = a.star.beta[ut] + a.star.beta[ur];
        if (bsum - T::one()).abs() > tol {
            return Err(Error::Infeasible(format!("energy split: beta[{ut}] + beta[{ur}] = {bsum}")));
        }
        let rsum = a.rho[ut] + a.rho[ur];
        if (rsum - T::one()).abs() > tol {
            return Err(Error::Infeasible(format!("power split: rho[{ut}] + rho[{ur}] = {rsum}")));
        }
        let (pt, pr) = (a.pi[ut], a.pi[ur]);
        if !matches!((pt, pr), (0, 1) | (1, 0)) {
            return Err(Error::Infeasible(format!("decoding order of pair ({ut}, {ur}) is ({pt}, {pr})")));
        }
    }
    let tsum: T = a.tau.iter().copied().sum();
    if (tsum - T::one()).abs() > tol {
        return Err(Error::Infeasible(format!("time shares sum to {tsum}")));
    }
    let two_pi = T::TAU();
    for (user, th) in a.star.theta.iter().enumerate() {
        if let Some(bad) = th.iter().find(|&&x| !(x >= T::zero() && x < two_pi + tol)) {
            return Err(Error::Infeasible(format!("theta of user {user} has entry {bad} outside [0, 2pi)")));
        }
    }
    Ok(())
}

/// Recomputes gains, SINRs and rates from the model equations.
///
/// Rejects allocations that break a simplex constraint, carry an invalid order,
/// or whose decoding order is not SIC-feasible (the user decoding last must not
/// be the weaker one).
pub fn evaluate<T: Scalar>(
    channels: &ChannelRealization<T>,
    matching: &Matching,
    allocation: &AllocationState<T>,
    link: LinkParams<T>,
) -> Result<RateReport<T>> {
    check_dims(channels, matching, allocation)?;
    check_allocation(matching, allocation)?;
    let n = channels.num_users();
    let k = matching.users_per_side();
    let gain = (0..n)
        .map(|u| user_gain(channels, u, allocation.star.beta[u].max(T::zero()).min(T::one()), &allocation.star.theta[u]))
        .collect::<Result<Vec<T>>>()?;
    let slack = T::one() - feasibility_tol::<T>();
    let mut sinr_v = vec![T::zero(); n];
    let mut rate_v = vec![T::zero(); n];
    for (t, r) in matching.pairs() {
        let (ut, ur) = (t, ru_index(k, r));
        let (strong, weak) = if allocation.pi[ut] == 1 { (ut, ur) } else { (ur, ut) };
        if gain[strong] < gain[weak] * slack {
            return Err(Error::Infeasible(format!(
                "decoding order: user {strong} decodes last with |h|^2 = {} below partner {weak} ({})",
                gain[strong], gain[weak]
            )));
        }
        for (u, p) in [(ut, ur), (ur, ut)] {
            let s = sinr(gain[u], allocation.rho[u], allocation.rho[p], allocation.pi[p], link.power, link.noise)?;
            sinr_v[u] = s;
            rate_v[u] = rate(allocation.tau[t].max(T::zero()), s);
        }
    }
    let min_rate = rate_v.iter().copied().fold(T::infinity(), T::min);
    Ok(RateReport { gain, sinr: sinr_v, rate: rate_v, min_rate })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{stream_rng, Stream};
    use approx::assert_relative_eq;
    use rand::Rng;
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> Complex<f64> {
        Complex::new(re, im)
    }

    fn random_vec(rng: &mut impl Rng, m: usize) -> Vec<Complex<f64>> {
        (0..m).map(|_| c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)).collect()
    }

    #[test]
    fn zero_beta_leaves_direct_link() {
        let h = combined_gain(c(0.3, -0.2), &[c(1.0, 1.0)], &[c(2.0, 0.5)], 0.0, &[1.0]).unwrap();
        assert_eq!(h, c(0.3, -0.2));
    }

    #[test]
    fn aligned_single_element_magnitude() {
        let s = [c(0.0, 2.0)];
        let b = [c(1.5, 0.0)];
        let theta = optimal_phase(c(0.0, 0.0), &s, &b);
        let h = combined_gain(c(0.0, 0.0), &s, &b, 0.36, &theta).unwrap();
        assert_relative_eq!(h.norm(), 0.6 * 2.0 * 1.5, max_relative = 1e-12);
    }

    #[test]
    fn combined_gain_matches_matrix_form() {
        // h_d + h_su^H diag(sqrt(beta) e^{j theta}) h_bs written as an explicit matrix product.
        let mut rng = stream_rng(1, Stream::Fading);
        let m = 7;
        let s = random_vec(&mut rng, m);
        let b = random_vec(&mut rng, m);
        let theta: Vec<f64> = (0..m).map(|_| rng.random::<f64>() * 2.0 * PI).collect();
        let beta: f64 = 0.42;
        let mut v = vec![vec![c(0.0, 0.0); m]; m];
        for i in 0..m {
            v[i][i] = Complex::from_polar(beta.sqrt(), theta[i]);
        }
        let vb: Vec<Complex<f64>> = (0..m).map(|i| (0..m).map(|j| v[i][j] * b[j]).sum()).collect();
        let oracle = c(0.1, 0.2) + (0..m).map(|i| s[i].conj() * vb[i]).sum::<Complex<f64>>();
        let got = combined_gain(c(0.1, 0.2), &s, &b, beta, &theta).unwrap();
        assert_relative_eq!(got.re, oracle.re, epsilon = 1e-12);
        assert_relative_eq!(got.im, oracle.im, epsilon = 1e-12);
    }

    #[test]
    fn combined_gain_rejects_mismatch() {
        assert!(matches!(
            combined_gain(c(1.0, 0.0), &[c(1.0, 0.0)], &[c(1.0, 0.0), c(1.0, 0.0)], 0.5, &[0.0, 0.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn phase_examples() {
        let theta = optimal_phase(c(1.0, 0.0), &[c(1.0, 0.0), c(2.0, 0.0)], &[c(1.0, 0.0), c(3.0, 0.0)]);
        assert_eq!(theta, vec![0.0, 0.0]);
        // arg(h_d) = pi/2 and both cascade factors contribute pi/4.
        let s = [Complex::from_polar(1.0, -PI / 4.0)];
        let b = [Complex::from_polar(1.0, PI / 4.0)];
        let theta = optimal_phase(c(0.0, 1.0), &s, &b);
        assert!(theta[0].abs() < 1e-12 || (theta[0] - 2.0 * PI).abs() < 1e-12);
    }

    #[test]
    fn aligned_phase_beats_random_phases() {
        let mut rng = stream_rng(2, Stream::Phase);
        for _ in 0..20 {
            let m = 9;
            let s = random_vec(&mut rng, m);
            let b = random_vec(&mut rng, m);
            let hd = c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5);
            let beta = rng.random::<f64>();
            let best = optimal_phase(hd, &s, &b);
            assert!(best.iter().all(|&x| (0.0..2.0 * PI).contains(&x)));
            let top = combined_gain(hd, &s, &b, beta, &best).unwrap().norm();
            let bound = hd.norm() + beta.sqrt() * s.iter().zip(&b).map(|(x, y)| x.norm() * y.norm()).sum::<f64>();
            assert_relative_eq!(top, bound, max_relative = 1e-9);
            for _ in 0..1000 {
                let th: Vec<f64> = (0..m).map(|_| rng.random::<f64>() * 2.0 * PI).collect();
                let other = combined_gain(hd, &s, &b, beta, &th).unwrap().norm();
                assert!(other <= top * (1.0 + 1e-9));
            }
        }
    }

    #[test]
    fn decoding_order_examples() {
        assert_eq!(decoding_order(0.5, 1.0, Tie::First), (0, 1));
        assert_eq!(decoding_order(1.0, 0.5, Tie::First), (1, 0));
        assert_eq!(decoding_order(1.0, 1.0, Tie::First), (1, 0));
        assert_eq!(decoding_order(1.0, 1.0, Tie::Second), (0, 1));
        for scale in [1e-12, 3.0, 1e9] {
            assert_eq!(decoding_order(0.5 * scale, scale, Tie::First), (0, 1));
        }
    }

    #[test]
    fn sinr_examples() {
        assert_relative_eq!(sinr(2.0, 0.3, 0.7, 1, 1.0, 0.1).unwrap(), 0.4, max_relative = 1e-12);
        assert_relative_eq!(sinr(2.0, 0.3, 0.7, 0, 1.0, 0.1).unwrap(), 6.0, max_relative = 1e-12);
        assert_eq!(sinr(2.0, 0.0, 1.0, 1, 1.0, 0.1).unwrap(), 0.0);
        assert!(sinr(2.0, 0.3, 0.7, 1, 1.0, 0.0).is_err());
    }

    #[test]
    fn rate_examples() {
        assert_relative_eq!(rate(1.0, 1.0), 1.0, max_relative = 1e-15);
        assert_relative_eq!(rate(0.5, 3.0), 1.0, max_relative = 1e-15);
        assert_eq!(rate(0.0, 5.0), 0.0);
        assert_relative_eq!(rate(1.0f32, 3.0f32), 2.0f32, max_relative = 1e-6);
    }

    fn one_pair(hd: [Complex<f64>; 2]) -> ChannelRealization<f64> {
        ChannelRealization { direct: hd.to_vec(), bs_ris: vec![c(1e-3, 0.0)], ris_user: vec![vec![c(0.0, 0.0)]; 2] }
    }

    fn alloc(pi: [u8; 2], rho_t: f64, tau: Vec<f64>) -> AllocationState<f64> {
        AllocationState {
            star: StarProfile { beta: vec![0.5, 0.5], theta: vec![vec![0.0]; 2] },
            rho: vec![rho_t, 1.0 - rho_t],
            tau,
            pi: pi.to_vec(),
        }
    }

    #[test]
    fn equal_gains_favor_the_decoding_last_user() {
        let ch = one_pair([c(1e-5, 0.0), c(0.0, 1e-5)]);
        let link = LinkParams::new(1.0, 1e-12).unwrap();
        let rep = evaluate(&ch, &Matching::identity(1), &alloc([1, 0], 0.5, vec![1.0]), link).unwrap();
        assert!(rep.rate[0] >= rep.rate[1]);
        assert_eq!(rep.min_rate, rep.rate[1]);
        assert!(rep.rate.iter().all(|&r| r >= rep.min_rate));
    }

    #[test]
    fn zero_time_share_zeroes_rates() {
        let ch = ChannelRealization {
            direct: vec![c(1e-5, 0.0); 4],
            bs_ris: vec![c(1e-3, 0.0)],
            ris_user: vec![vec![c(0.0, 0.0)]; 4],
        };
        let mut a = alloc([1, 0], 0.3, vec![1.0, 0.0]);
        a.star.beta = vec![0.5; 4];
        a.star.theta = vec![vec![0.0]; 4];
        a.rho = vec![0.3, 0.3, 0.7, 0.7];
        a.pi = vec![1, 1, 0, 0];
        let rep = evaluate(&ch, &Matching::identity(2), &a, LinkParams::new(1.0, 1e-12).unwrap()).unwrap();
        assert_eq!(rep.rate[1], 0.0);
        assert_eq!(rep.rate[3], 0.0);
        assert_eq!(rep.min_rate, 0.0);
    }

    #[test]
    fn evaluate_names_violated_constraint() {
        let ch = one_pair([c(2e-5, 0.0), c(1e-5, 0.0)]);
        let link = LinkParams::new(1.0, 1e-12).unwrap();
        let m = Matching::identity(1);
        let mut a = alloc([1, 0], 0.4, vec![1.0]);
        a.rho[1] = 0.5;
        let msg = evaluate(&ch, &m, &a, link).unwrap_err().to_string();
        assert!(msg.contains("power split"), "{msg}");
        let a = alloc([1, 0], 0.4, vec![0.9]);
        assert!(evaluate(&ch, &m, &a, link).unwrap_err().to_string().contains("time shares"));
        let a = alloc([1, 1], 0.4, vec![1.0]);
        assert!(evaluate(&ch, &m, &a, link).unwrap_err().to_string().contains("decoding order"));
        // The weaker user may not decode last.
        let a = alloc([0, 1], 0.4, vec![1.0]);
        assert!(evaluate(&ch, &m, &a, link).unwrap_err().to_string().contains("decoding order"));
    }

    #[test]
    fn evaluate_is_pure() {
        let ch = one_pair([c(2e-5, 1e-6), c(1e-5, 0.0)]);
        let link = LinkParams::new(1.0, 1e-12).unwrap();
        let a = alloc([1, 0], 0.2, vec![1.0]);
        let m = Matching::identity(1);
        assert_eq!(evaluate(&ch, &m, &a, link).unwrap(), evaluate(&ch, &m, &a, link).unwrap());
    }
}
