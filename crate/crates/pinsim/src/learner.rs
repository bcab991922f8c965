//! The resource manager's learning loop: per-thread nominal strategies,
//! perturbed action selection, and the constant-step-size reinforcement
//! update.
//!
//! Each period the manager measures every thread's speed, turns the
//! measurements into one shared utility, pulls every nominal strategy toward
//! the vertex of the action it just played (proportionally to that utility),
//! and samples the next placements from the perturbed strategies.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{objective_value, AssignmentProfile, GameSpec};
use crate::simplex::{perturb, project_to_simplex, sample_index, SimplexPoint};

/// Learner parameters. The step size stays constant for the whole run; it is
/// never decayed, which is what keeps the scheme adaptive to arrivals,
/// departures, and load changes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LearnerConfig {
    /// Constant reinforcement step size, in (0, 1].
    pub epsilon: f64,
    /// Uniform mutation mass mixed into every played strategy, in [0, 1].
    pub lambda: f64,
}

impl LearnerConfig {
    pub fn new(epsilon: f64, lambda: f64) -> Result<Self> {
        let cfg = Self { epsilon, lambda };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.epsilon.is_finite() || self.epsilon <= 0.0 || self.epsilon > 1.0 {
            return Err(Error::invalid(format!(
                "epsilon must be in (0, 1], got {}",
                self.epsilon
            )));
        }
        if !self.lambda.is_finite() || !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::invalid(format!(
                "lambda must be in [0, 1], got {}",
                self.lambda
            )));
        }
        Ok(())
    }
}

/// Nominal strategies of all active agents plus the learner parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyState {
    nominal: Vec<SimplexPoint>,
    config: LearnerConfig,
    num_actions: usize,
    step_count: u64,
}

impl StrategyState {
    pub fn nominal(&self) -> &[SimplexPoint] {
        &self.nominal
    }

    pub fn config(&self) -> &LearnerConfig {
        &self.config
    }

    pub fn num_agents(&self) -> usize {
        self.nominal.len()
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// A state with no agents yet; arrivals populate it.
    pub fn empty(m_actions: usize, config: LearnerConfig) -> Result<Self> {
        config.validate()?;
        if m_actions == 0 {
            return Err(Error::invalid("need at least one action"));
        }
        Ok(Self {
            nominal: Vec::new(),
            config,
            num_actions: m_actions,
            step_count: 0,
        })
    }

    /// A state seated at explicit strategies, e.g. to resume a run.
    pub fn with_strategies(nominal: Vec<SimplexPoint>, config: LearnerConfig) -> Result<Self> {
        config.validate()?;
        let m_actions = match nominal.first() {
            Some(x) => x.len(),
            None => return Err(Error::invalid("need at least one agent")),
        };
        if nominal.iter().any(|x| x.len() != m_actions) {
            return Err(Error::invalid("agents must share one action count"));
        }
        Ok(Self {
            nominal,
            config,
            num_actions: m_actions,
            step_count: 0,
        })
    }

    /// Adds a newly arrived agent with the uniform strategy. Existing agents'
    /// strategies are untouched.
    pub fn push_uniform_agent(&mut self) {
        self.nominal
            .push(SimplexPoint::uniform(self.num_actions).expect("num_actions >= 1"));
    }

    /// Removes a departed agent's row. Remaining strategies are untouched.
    pub fn remove_agent(&mut self, index: usize) -> Result<()> {
        if index >= self.nominal.len() {
            return Err(Error::invalid(format!(
                "cannot remove agent {index}, state has {}",
                self.nominal.len()
            )));
        }
        self.nominal.remove(index);
        Ok(())
    }
}

/// Fresh state with every nominal strategy at the uniform distribution, the
/// maximally uninformed prior.
pub fn init_state(n_agents: usize, m_actions: usize, config: LearnerConfig) -> Result<StrategyState> {
    if n_agents == 0 {
        return Err(Error::invalid("need at least one agent"));
    }
    let mut state = StrategyState::empty(m_actions, config)?;
    for _ in 0..n_agents {
        state.push_uniform_agent();
    }
    Ok(state)
}

/// Derives an independent child stream from a parent stream.
pub(crate) fn fork_rng<R: RngCore + ?Sized>(rng: &mut R) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(rng.next_u64())
}

/// Samples one placement per agent from the lambda-perturbed strategies.
/// Each agent draws from its own forked sub-stream, so draws are independent
/// across agents and reproducible given the parent stream position.
pub fn select_actions<R: Rng + ?Sized>(
    state: &StrategyState,
    rng: &mut R,
) -> Result<AssignmentProfile> {
    let lambda = state.config.lambda;
    let mut cpu_of = Vec::with_capacity(state.num_agents());
    for x in &state.nominal {
        let sigma = perturb(x, lambda)?;
        let mut agent_rng = fork_rng(rng);
        cpu_of.push(sample_index(&sigma, &mut agent_rng));
    }
    Ok(AssignmentProfile::new(cpu_of))
}

/// One reinforcement step: each agent's nominal strategy moves toward the
/// vertex of the action it played, by fraction `epsilon * utility`, then is
/// projected back onto the simplex (a no-op while utilities stay in (0, 1]).
pub fn update_nominal(
    state: &StrategyState,
    profile: &AssignmentProfile,
    utilities: &[f64],
) -> Result<StrategyState> {
    let n = state.num_agents();
    if profile.len() != n || utilities.len() != n {
        return Err(Error::invalid(format!(
            "state has {n} agents but profile has {} and utilities {}",
            profile.len(),
            utilities.len()
        )));
    }
    for (i, u) in utilities.iter().enumerate() {
        if !u.is_finite() || *u <= 0.0 || *u > 1.0 {
            return Err(Error::invalid(format!(
                "utility for agent {i} must be in (0, 1], got {u} \
                 (normalization contract broken)"
            )));
        }
    }

    let epsilon = state.config.epsilon;
    let mut nominal = Vec::with_capacity(n);
    for (i, x) in state.nominal.iter().enumerate() {
        let chosen = profile.cpu_of()[i];
        if chosen >= state.num_actions {
            return Err(Error::invalid(format!(
                "agent {i} played action {chosen}, state has {} actions",
                state.num_actions
            )));
        }
        let gain = epsilon * utilities[i];
        let raw: Vec<f64> = x
            .weights()
            .iter()
            .enumerate()
            .map(|(j, w)| {
                let target = if j == chosen { 1.0 } else { 0.0 };
                w + gain * (target - w)
            })
            .collect();
        nominal.push(project_to_simplex(&raw)?);
    }

    Ok(StrategyState {
        nominal,
        config: state.config,
        num_actions: state.num_actions,
        step_count: state.step_count + 1,
    })
}

/// Converts a vector of measured speeds into the shared utility fed to the
/// update: the objective over the measurements, divided by the game's speed
/// scale, clamped to 1 so measurement noise cannot break the (0, 1] contract.
pub fn utility_from_measurements(game: &GameSpec, measured_speeds: &[f64]) -> Result<f64> {
    if measured_speeds.len() != game.num_agents() {
        return Err(Error::invalid(format!(
            "got {} measurements for {} threads",
            measured_speeds.len(),
            game.num_agents()
        )));
    }
    for (i, v) in measured_speeds.iter().enumerate() {
        if !v.is_finite() || *v <= 0.0 {
            return Err(Error::Measurement(format!(
                "measured speed for thread {i} must be positive, got {v}"
            )));
        }
    }
    let f = objective_value(measured_speeds, game.gamma)?;
    let u = f / game.speed_scale;
    if u <= 0.0 {
        return Err(Error::Measurement(format!(
            "measured objective {f} is not positive; cannot reinforce"
        )));
    }
    Ok(u.min(1.0))
}

/// One full manager period: reinforce the profile that produced the
/// measurements, then sample the next placements. Returns the successor
/// state and the profile to apply for the coming period.
pub fn rm_step<R: Rng + ?Sized>(
    state: &StrategyState,
    game: &GameSpec,
    profile: &AssignmentProfile,
    measured_speeds: &[f64],
    rng: &mut R,
) -> Result<(StrategyState, AssignmentProfile)> {
    if game.num_agents() != state.num_agents() {
        return Err(Error::invalid(format!(
            "game has {} threads but state has {} agents",
            game.num_agents(),
            state.num_agents()
        )));
    }
    let u = utility_from_measurements(game, measured_speeds)?;
    let utilities = vec![u; state.num_agents()];
    let next_state = update_nominal(state, profile, &utilities)?;
    let next_profile = select_actions(&next_state, rng)?;
    Ok((next_state, next_profile))
}
