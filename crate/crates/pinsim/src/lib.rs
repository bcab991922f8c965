//! Dynamic thread-to-CPU pinning by distributed reinforcement learning.
//!
//! Each running thread is treated as an independent agent holding a mixed
//! strategy over the available CPUs. A resource manager periodically measures
//! every thread's processing speed, turns the measurements into one shared
//! utility, reinforces the placements that produced them, and samples the
//! next assignments from slightly perturbed strategies. Under this shared
//! (identical-interest) utility, globally efficient placements are Nash
//! equilibria, and the perturbed dynamics spend most of their time near them.
//!
//! The crate is organized around that loop:
//!
//! - [`simplex`]: probability-simplex primitives (projection, perturbation,
//!   sampling).
//! - [`game`]: the assignment game — platform, contention speed model,
//!   objective, shared utility.
//! - [`learner`]: nominal strategies and the constant-step reinforcement
//!   update.
//! - [`oracle`]: brute-force ground truth — pure Nash enumeration, expected
//!   payoffs, mean-field drift.
//! - [`sim`]: the discrete-time closed loop with arrivals, completions,
//!   measurement noise, baseline policies, and convergence metrics.

pub mod error;
pub mod game;
pub mod learner;
pub mod oracle;
pub mod profiles;
pub mod sim;
pub mod simplex;

pub use error::{Error, Result};
pub use game::{AssignmentProfile, GameSpec, Platform, ThreadSpec};
pub use learner::{LearnerConfig, StrategyState};
pub use oracle::{DriftReport, EquilibriumReport};
pub use sim::{BaselinePolicy, CompletionSummary, Scenario, Trace};
pub use simplex::SimplexPoint;
