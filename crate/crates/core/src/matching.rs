//! Outer layer: pairing transmitted with reflected users by swap matching.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::ChannelRealization;
use crate::error::{Error, Result};
use crate::inner_ao::{inner_solve_with, InnerPlan, Solution, SolverOptions};
use crate::scalar::Scalar;
use crate::scenario::{distance, Position3D, UserSet};
use crate::star_noma::LinkParams;

/// One-to-one pairing; `ru_of_tu[t]` is the reflected partner of transmitted user `t`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Matching {
    ru_of_tu: Vec<usize>,
}

impl Matching {
    pub fn new(ru_of_tu: Vec<usize>) -> Result<Self> {
        let k = ru_of_tu.len();
        if k == 0 {
            return Err(Error::InvalidArgument("empty matching".into()));
        }
        let mut seen = vec![false; k];
        for &r in &ru_of_tu {
            if r >= k || seen[r] {
                return Err(Error::InvalidArgument(format!("not a bijection: {ru_of_tu:?}")));
            }
            seen[r] = true;
        }
        Ok(Self { ru_of_tu })
    }

    pub fn identity(k: usize) -> Self {
        Self { ru_of_tu: (0..k).collect() }
    }

    pub fn users_per_side(&self) -> usize {
        self.ru_of_tu.len()
    }

    /// `(transmitted, reflected)` side indices, in transmitted order.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.ru_of_tu.iter().copied().enumerate()
    }

    pub fn ru_of(&self, tu: usize) -> usize {
        self.ru_of_tu[tu]
    }

    pub fn tu_of(&self, ru: usize) -> usize {
        self.ru_of_tu.iter().position(|&r| r == ru).expect("matching is a bijection")
    }

    /// Canonical encoding used as the utility cache key.
    pub fn key(&self) -> &[usize] {
        &self.ru_of_tu
    }

    pub fn is_bijection(&self) -> bool {
        Matching::new(self.ru_of_tu.clone()).is_ok()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialPairing {
    /// Transmitted user `i` with reflected user `i`.
    Index,
    /// Uniform random permutation from the pairing stream.
    Random,
    /// Farthest transmitted user with the nearest reflected user, and so on.
    #[default]
    Distance,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MatchingOptions {
    pub initial: InitialPairing,
    /// Cap on full swap scans; `None` means `max(1, K(K-1)/2)`.
    pub max_outer_scans: Option<usize>,
}

impl MatchingOptions {
    pub fn scan_cap(&self, k: usize) -> usize {
        self.max_outer_scans.unwrap_or((k * k.saturating_sub(1) / 2).max(1))
    }
}

/// Starting pairing of the swap search.
pub fn initial_matching<T: Scalar, R: Rng + ?Sized>(
    users: &UserSet<T>,
    ris: Position3D<T>,
    policy: InitialPairing,
    rng: &mut R,
) -> Result<Matching> {
    let k = users.users_per_side();
    if users.transmitted().len() != users.reflected().len() || k == 0 {
        return Err(Error::InvalidArgument(format!(
            "need equal nonempty sides, got {} transmitted and {} reflected",
            users.transmitted().len(),
            users.reflected().len()
        )));
    }
    match policy {
        InitialPairing::Index => Ok(Matching::identity(k)),
        InitialPairing::Random => {
            let mut perm: Vec<usize> = (0..k).collect();
            perm.shuffle(rng);
            Matching::new(perm)
        }
        InitialPairing::Distance => {
            let tu_d: Vec<T> = users.transmitted().iter().map(|p| distance(*p, ris)).collect();
            let ru_d: Vec<T> = users.reflected().iter().map(|p| distance(*p, ris)).collect();
            Ok(far_near_pairing(&tu_d, &ru_d))
        }
    }
}

/// Zips transmitted users by descending distance with reflected users by ascending distance.
pub fn far_near_pairing<T: Scalar>(tu_distance: &[T], ru_distance: &[T]) -> Matching {
    let mut tus: Vec<usize> = (0..tu_distance.len()).collect();
    let mut rus: Vec<usize> = (0..ru_distance.len()).collect();
    tus.sort_by(|&a, &b| tu_distance[b].partial_cmp(&tu_distance[a]).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b)));
    rus.sort_by(|&a, &b| ru_distance[a].partial_cmp(&ru_distance[b]).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b)));
    let mut ru_of_tu = vec![0; tus.len()];
    for (t, r) in tus.into_iter().zip(rus) {
        ru_of_tu[t] = r;
    }
    Matching { ru_of_tu }
}

/// The two transmitted users exchange partners.
pub fn swap(matching: &Matching, tu_a: usize, tu_b: usize) -> Result<Matching> {
    let k = matching.users_per_side();
    if tu_a == tu_b {
        return Err(Error::InvalidArgument(format!("swap of user {tu_a} with itself")));
    }
    if tu_a >= k || tu_b >= k {
        return Err(Error::InvalidArgument(format!("swap indices ({tu_a}, {tu_b}) out of range for {k} pairs")));
    }
    let mut next = matching.clone();
    next.ru_of_tu.swap(tu_a, tu_b);
    Ok(next)
}

/// Memoized inner solutions keyed by pairing.
#[derive(Debug, Clone)]
pub struct UtilityCache<T> {
    entries: HashMap<Vec<usize>, Solution<T>>,
    hits: usize,
}

impl<T> Default for UtilityCache<T> {
    fn default() -> Self {
        Self { entries: HashMap::new(), hits: 0 }
    }
}

impl<T: Scalar> UtilityCache<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn hits(&self) -> usize {
        self.hits
    }

    pub fn solution(&mut self, matching: &Matching, solve: impl FnOnce(&Matching) -> Result<Solution<T>>) -> Result<&Solution<T>> {
        let key = matching.key().to_vec();
        if self.entries.contains_key(&key) {
            self.hits += 1;
        } else {
            let sol = solve(matching)?;
            self.entries.insert(key.clone(), sol);
        }
        Ok(&self.entries[&key])
    }
}

/// Inner-layer optimum of the min rate under `matching`, memoized.
pub fn utility<T: Scalar>(
    cache: &mut UtilityCache<T>,
    matching: &Matching,
    channels: &ChannelRealization<T>,
    link: LinkParams<T>,
    options: &SolverOptions,
    plan: &InnerPlan<T>,
) -> Result<T> {
    Ok(cache.solution(matching, |m| inner_solve_with(channels, m, link, options, plan))?.min_rate)
}

/// One swap attempt of the outer scan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OuterStep<T> {
    pub scan: usize,
    pub tu_a: usize,
    pub tu_b: usize,
    /// Utility of the swapped pairing.
    pub candidate: T,
    pub accepted: bool,
    /// Utility held after the attempt.
    pub utility: T,
}

/// Swap matching from `initial`.
///
/// Scans transmitted-user pairs `(a, b)`, `a < b`, in lexicographic order and
/// accepts a swap as soon as it strictly raises the utility. Stops after a
/// scan with no accepted swap, or after `max_scans` scans.
pub fn outer_solve<T: Scalar>(
    channels: &ChannelRealization<T>,
    initial: Matching,
    link: LinkParams<T>,
    options: &SolverOptions,
    plan: &InnerPlan<T>,
    max_scans: usize,
) -> Result<Solution<T>> {
    let k = initial.users_per_side();
    let mut cache = UtilityCache::new();
    let mut current = initial;
    let mut best = utility(&mut cache, &current, channels, link, options, plan)?;
    let mut trace = Vec::new();
    let mut cap_hit = false;
    if k >= 2 {
        for scan in 1..=max_scans.max(1) {
            let mut accepted_any = false;
            for a in 0..k {
                for b in a + 1..k {
                    let candidate = swap(&current, a, b)?;
                    let w = utility(&mut cache, &candidate, channels, link, options, plan)?;
                    let accepted = w > best;
                    if accepted {
                        current = candidate;
                        best = w;
                        accepted_any = true;
                    }
                    trace.push(OuterStep { scan, tu_a: a, tu_b: b, candidate: w, accepted, utility: best });
                }
            }
            if !accepted_any {
                break;
            }
            if scan == max_scans.max(1) {
                cap_hit = true;
            }
        }
    }
    debug_assert!(current.is_bijection());
    let mut sol = cache.entries.remove(current.key()).expect("current pairing was evaluated");
    sol.outer_trace = trace;
    sol.outer_cap_hit = cap_hit;
    Ok(sol)
}

/// All `K!` pairings, for exhaustive checks at small `K`.
pub fn all_matchings(k: usize) -> Vec<Matching> {
    fn rec(prefix: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Matching>) {
        if prefix.len() == used.len() {
            out.push(Matching { ru_of_tu: prefix.clone() });
            return;
        }
        for r in 0..used.len() {
            if !used[r] {
                used[r] = true;
                prefix.push(r);
                rec(prefix, used, out);
                prefix.pop();
                used[r] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::with_capacity(k), &mut vec![false; k], &mut out);
    out
}
