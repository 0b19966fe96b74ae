//! Arm-selection policies.
//!
//! All four policies are functions of the per-arm counters in
//! [`ArmStatistics`], the arm graph, the round index and a random source.
//! None of them keeps hidden state, so a trial is reproduced exactly by
//! replaying its random streams.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::environment::UmabGraph;
use crate::error::{Error, Result};
use crate::numerics::{kl_bernoulli, klucb_index_unchecked, sample_beta, BetaPosterior};

/// Default log-log coefficient `c` of the KL-UCB exploration function.
pub const DEFAULT_KLUCB_C: f64 = 3.0;

/// Per-arm counters: cumulative reward `S_i`, pulls `T_i` and the number of
/// rounds `L_i` in which arm `i` was the leader.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArmStatistics {
    successes: Vec<u64>,
    pulls: Vec<u64>,
    leader_counts: Vec<u64>,
}

impl ArmStatistics {
    pub fn new(num_arms: usize) -> Self {
        ArmStatistics {
            successes: vec![0; num_arms],
            pulls: vec![0; num_arms],
            leader_counts: vec![0; num_arms],
        }
    }

    /// Statistics with given `S_i`, `T_i` and zero leader counts.
    pub fn from_counts(successes: Vec<u64>, pulls: Vec<u64>) -> Result<Self> {
        if successes.len() != pulls.len() {
            return Err(Error::InvalidEnvironment(format!(
                "{} success counters for {} arms",
                successes.len(),
                pulls.len()
            )));
        }
        if let Some((&s, &t)) = successes.iter().zip(&pulls).find(|(s, t)| s > t) {
            return Err(Error::InconsistentCounts {
                successes: s,
                pulls: t,
            });
        }
        let leader_counts = vec![0; pulls.len()];
        Ok(ArmStatistics {
            successes,
            pulls,
            leader_counts,
        })
    }

    pub fn with_leader_count(mut self, arm: usize, count: u64) -> Self {
        self.leader_counts[arm] = count;
        self
    }

    pub fn num_arms(&self) -> usize {
        self.pulls.len()
    }

    #[inline]
    pub fn successes(&self, arm: usize) -> u64 {
        self.successes[arm]
    }

    #[inline]
    pub fn pulls(&self, arm: usize) -> u64 {
        self.pulls[arm]
    }

    #[inline]
    pub fn leader_count(&self, arm: usize) -> u64 {
        self.leader_counts[arm]
    }

    pub fn pull_counts(&self) -> &[u64] {
        &self.pulls
    }

    pub fn total_pulls(&self) -> u64 {
        self.pulls.iter().sum()
    }

    /// `S_i / T_i`, or 0 for an arm that was never pulled.
    #[inline]
    pub fn empirical_mean(&self, arm: usize) -> f64 {
        match self.pulls[arm] {
            0 => 0.0,
            t => self.successes[arm] as f64 / t as f64,
        }
    }

    #[inline]
    pub fn posterior(&self, arm: usize) -> BetaPosterior {
        BetaPosterior::from_counts_unchecked(self.successes[arm], self.pulls[arm])
    }

    /// Records `reward` for the chosen arm and bumps the leader's counter.
    pub fn update(&mut self, decision: PolicyDecision, reward: u32) -> Result<()> {
        if reward > 1 {
            return Err(Error::InvalidReward(reward));
        }
        let arm = decision.chosen_arm;
        if arm >= self.num_arms() {
            return Err(Error::ArmOutOfRange {
                arm,
                num_arms: self.num_arms(),
            });
        }
        self.successes[arm] += u64::from(reward);
        self.pulls[arm] += 1;
        if let Some(leader) = decision.leader {
            self.leader_counts[leader] += 1;
        }
        Ok(())
    }
}

/// The arm pulled at a round, plus the leader for leader-based policies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PolicyDecision {
    pub chosen_arm: usize,
    pub leader: Option<usize>,
}

impl PolicyDecision {
    pub fn pull(arm: usize) -> Self {
        PolicyDecision {
            chosen_arm: arm,
            leader: None,
        }
    }

    pub fn with_leader(arm: usize, leader: usize) -> Self {
        PolicyDecision {
            chosen_arm: arm,
            leader: Some(leader),
        }
    }
}

/// Anything that can pick an arm each round.
pub trait Policy {
    fn decide(
        &mut self,
        graph: &UmabGraph,
        stats: &ArmStatistics,
        round: u64,
        rng: &mut dyn RngCore,
    ) -> PolicyDecision;
}

/// Running argmax that breaks ties uniformly at random (reservoir sampling).
struct RandomTieArgmax {
    best: f64,
    arm: usize,
    ties: u32,
}

impl RandomTieArgmax {
    fn new() -> Self {
        RandomTieArgmax {
            best: f64::NEG_INFINITY,
            arm: usize::MAX,
            ties: 0,
        }
    }

    #[inline]
    fn offer<R: Rng + ?Sized>(&mut self, arm: usize, value: f64, rng: &mut R) {
        if value > self.best {
            self.best = value;
            self.arm = arm;
            self.ties = 1;
        } else if value == self.best {
            self.ties += 1;
            if rng.gen_range(0..self.ties) == 0 {
                self.arm = arm;
            }
        }
    }
}

/// Arm with the highest empirical mean; ties broken uniformly at random.
pub fn select_leader<R: Rng + ?Sized>(stats: &ArmStatistics, rng: &mut R) -> usize {
    let mut argmax = RandomTieArgmax::new();
    for arm in 0..stats.num_arms() {
        argmax.offer(arm, stats.empirical_mean(arm), rng);
    }
    argmax.arm
}

/// `N+(arm)` in ascending order.
fn closed_neighborhood(graph: &UmabGraph, arm: usize) -> impl Iterator<Item = usize> + Clone + '_ {
    let neighbors = graph.neighbors(arm);
    let split = neighbors.partition_point(|&j| j < arm);
    neighbors[..split]
        .iter()
        .copied()
        .chain(std::iter::once(arm))
        .chain(neighbors[split..].iter().copied())
}

fn thompson_argmax<R: Rng + ?Sized>(
    stats: &ArmStatistics,
    arms: impl Iterator<Item = usize>,
    rng: &mut R,
) -> usize {
    let mut argmax = RandomTieArgmax::new();
    for arm in arms {
        let theta = sample_beta(stats.posterior(arm), rng);
        argmax.offer(arm, theta, rng);
    }
    argmax.arm
}

/// One round of Unimodal Thompson Sampling.
///
/// The leader is pulled whenever its leader count is a multiple of
/// `|N+(leader)|`; otherwise Thompson sampling runs over `N+(leader)`.
pub fn uts_step<R: Rng + ?Sized>(
    stats: &ArmStatistics,
    graph: &UmabGraph,
    rng: &mut R,
) -> PolicyDecision {
    let leader = select_leader(stats, rng);
    let period = graph.closed_degree(leader) as u64;
    if stats.leader_count(leader).is_multiple_of(period) {
        return PolicyDecision::with_leader(leader, leader);
    }
    let chosen = thompson_argmax(stats, closed_neighborhood(graph, leader), rng);
    PolicyDecision::with_leader(chosen, leader)
}

/// One round of Thompson Sampling over all arms with uniform Beta priors.
pub fn ts_step<R: Rng + ?Sized>(stats: &ArmStatistics, rng: &mut R) -> PolicyDecision {
    PolicyDecision::pull(thompson_argmax(stats, 0..stats.num_arms(), rng))
}

/// `f(t) = log t + c log(max(log t, 1))` for `t >= 1`.
#[inline]
pub fn exploration_budget(t: u64, c: f64) -> f64 {
    let log_t = (t.max(1) as f64).ln();
    log_t + c * log_t.max(1.0).ln()
}

/// Argmax of KL-UCB indices over `arms` (ascending), lowest index on ties.
/// Unpulled arms get index 1.
///
/// Arms whose index provably falls below the current best are skipped after a
/// single divergence evaluation; this never changes the result.
fn klucb_argmax(
    stats: &ArmStatistics,
    arms: impl Iterator<Item = usize> + Clone,
    budget: f64,
) -> usize {
    let index_of = |arm: usize| match stats.pulls(arm) {
        0 => 1.0,
        t => klucb_index_unchecked(stats.empirical_mean(arm), t, budget),
    };
    // seed the search with the empirically best arm to maximise pruning
    let seed_arm = arms
        .clone()
        .max_by(|&a, &b| {
            let key = |i: usize| {
                if stats.pulls(i) == 0 {
                    2.0
                } else {
                    stats.empirical_mean(i)
                }
            };
            key(a).total_cmp(&key(b)).then(b.cmp(&a))
        })
        .expect("candidate set is never empty");
    let mut best_arm = seed_arm;
    let mut best = index_of(seed_arm);
    for arm in arms {
        if arm == seed_arm {
            continue;
        }
        let pulls = stats.pulls(arm);
        if pulls > 0 {
            let mean = stats.empirical_mean(arm);
            if mean < best && pulls as f64 * kl_bernoulli(mean, best) > budget {
                continue;
            }
        }
        let value = index_of(arm);
        if value > best || (value == best && arm < best_arm) {
            best = value;
            best_arm = arm;
        }
    }
    best_arm
}

/// One round of KL-UCB over all arms at round `round` (1-based).
///
/// Unpulled arms are swept first in ascending order; afterwards the arm with
/// the largest index for budget `f(round)` is chosen, lowest index on ties.
pub fn klucb_step(stats: &ArmStatistics, round: u64, c: f64) -> PolicyDecision {
    if let Some(arm) = (0..stats.num_arms()).find(|&i| stats.pulls(i) == 0) {
        return PolicyDecision::pull(arm);
    }
    let budget = exploration_budget(round, c);
    PolicyDecision::pull(klucb_argmax(stats, 0..stats.num_arms(), budget))
}

/// One round of OSUB.
///
/// The leader is pulled whenever its leader count is a multiple of
/// `max_degree + 1`; otherwise the arm of `N+(leader)` with the largest
/// KL-UCB index for budget `f(L_leader)` is pulled.
pub fn osub_step<R: Rng + ?Sized>(
    stats: &ArmStatistics,
    graph: &UmabGraph,
    max_degree: usize,
    c: f64,
    rng: &mut R,
) -> PolicyDecision {
    let leader = select_leader(stats, rng);
    let leader_count = stats.leader_count(leader);
    if leader_count.is_multiple_of(max_degree as u64 + 1) {
        return PolicyDecision::with_leader(leader, leader);
    }
    let budget = exploration_budget(leader_count, c);
    let chosen = klucb_argmax(stats, closed_neighborhood(graph, leader), budget);
    PolicyDecision::with_leader(chosen, leader)
}

/// Configurable policy identifiers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyId {
    Uts,
    Ts,
    Klucb,
    Osub,
}

impl PolicyId {
    pub const ALL: [PolicyId; 4] = [PolicyId::Uts, PolicyId::Ts, PolicyId::Klucb, PolicyId::Osub];

    pub fn as_str(self) -> &'static str {
        match self {
            PolicyId::Uts => "uts",
            PolicyId::Ts => "ts",
            PolicyId::Klucb => "klucb",
            PolicyId::Osub => "osub",
        }
    }
}

impl fmt::Display for PolicyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PolicyId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PolicyId::ALL
            .into_iter()
            .find(|id| id.as_str() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown policy `{s}`, expected one of uts, ts, klucb, osub"
                ))
            })
    }
}

/// A fully parameterised built-in policy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PolicyKind {
    Uts,
    Ts,
    Klucb { c: f64 },
    Osub { c: f64 },
}

impl PolicyKind {
    pub fn new(id: PolicyId, klucb_c: Option<f64>) -> Result<Self> {
        let c = klucb_c.unwrap_or(DEFAULT_KLUCB_C);
        if !(c >= 0.0 && c.is_finite()) {
            return Err(Error::Config(format!(
                "klucb_c must be a finite number >= 0, got {c}"
            )));
        }
        Ok(match id {
            PolicyId::Uts => PolicyKind::Uts,
            PolicyId::Ts => PolicyKind::Ts,
            PolicyId::Klucb => PolicyKind::Klucb { c },
            PolicyId::Osub => PolicyKind::Osub { c },
        })
    }

    pub fn id(&self) -> PolicyId {
        match self {
            PolicyKind::Uts => PolicyId::Uts,
            PolicyKind::Ts => PolicyId::Ts,
            PolicyKind::Klucb { .. } => PolicyId::Klucb,
            PolicyKind::Osub { .. } => PolicyId::Osub,
        }
    }

    /// Per-trial policy instance bound to `graph`.
    pub fn instantiate(&self, graph: &UmabGraph) -> BuiltinPolicy {
        BuiltinPolicy {
            kind: *self,
            max_degree: graph.max_degree(),
            initial_sweep: false,
        }
    }
}

/// [`PolicyKind`] with graph-wide quantities precomputed.
#[derive(Debug, Clone)]
pub struct BuiltinPolicy {
    kind: PolicyKind,
    max_degree: usize,
    initial_sweep: bool,
}

impl BuiltinPolicy {
    /// Pull every never-pulled arm once, in ascending order, before the
    /// policy's own rule takes over. Sweep rounds carry no leader.
    pub fn with_initial_sweep(mut self, enabled: bool) -> Self {
        self.initial_sweep = enabled;
        self
    }
}

impl Policy for BuiltinPolicy {
    fn decide(
        &mut self,
        graph: &UmabGraph,
        stats: &ArmStatistics,
        round: u64,
        rng: &mut dyn RngCore,
    ) -> PolicyDecision {
        if self.initial_sweep {
            if let Some(arm) = stats.pull_counts().iter().position(|&n| n == 0) {
                return PolicyDecision::pull(arm);
            }
        }
        match self.kind {
            PolicyKind::Uts => uts_step(stats, graph, rng),
            PolicyKind::Ts => ts_step(stats, rng),
            PolicyKind::Klucb { c } => klucb_step(stats, round, c),
            PolicyKind::Osub { c } => osub_step(stats, graph, self.max_degree, c, rng),
        }
    }
}

/// Control policy that pulls an arm uniformly at random every round.
#[derive(Debug, Clone, Copy, Default)]
pub struct UniformRandom;

impl Policy for UniformRandom {
    fn decide(
        &mut self,
        _graph: &UmabGraph,
        stats: &ArmStatistics,
        _round: u64,
        rng: &mut dyn RngCore,
    ) -> PolicyDecision {
        PolicyDecision::pull(rng.gen_range(0..stats.num_arms()))
    }
}

/// Test policy that always pulls the same arm.
#[derive(Debug, Clone, Copy)]
pub struct FixedArm(pub usize);

impl Policy for FixedArm {
    fn decide(
        &mut self,
        _graph: &UmabGraph,
        _stats: &ArmStatistics,
        _round: u64,
        _rng: &mut dyn RngCore,
    ) -> PolicyDecision {
        PolicyDecision::pull(self.0)
    }
}
