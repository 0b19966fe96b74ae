//! Simulation library for graph-structured unimodal multi-armed bandits.
//!
//! The crate provides
//!
//! * Bernoulli environments on undirected arm graphs ([`environment`]),
//!   including triangular line graphs and connected Erdős–Rényi graphs with
//!   distance-based means;
//! * four learning policies behind one interface ([`policies`]): Unimodal
//!   Thompson Sampling (UTS), plain Thompson Sampling, KL-UCB and OSUB;
//! * a seeded Monte Carlo harness that aggregates cumulative pseudo-regret
//!   with 95% confidence intervals ([`simulator`]);
//! * file-driven experiments and the CSV/JSON artifacts they emit
//!   ([`experiment`]).
//!
//! Arms are 0-based everywhere in the API and 1-based in files.

pub mod environment;
pub mod error;
pub mod experiment;
pub mod numerics;
pub mod policies;
pub mod seed;
pub mod simulator;

pub use environment::{BernoulliEnvironment, UmabGraph};
pub use error::{Error, Result};
pub use numerics::{kl_bernoulli, klucb_index, sample_beta, BetaPosterior, Probability};
pub use policies::{ArmStatistics, Policy, PolicyDecision, PolicyKind};
pub use simulator::{EnsembleSummary, TrialTrace};

/// Random source owned by a single trial.
pub type TrialRng = rand_chacha::ChaCha8Rng;
