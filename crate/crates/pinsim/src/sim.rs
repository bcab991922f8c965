//! Discrete-time closed-loop simulation of the resource manager and its
//! threads: per-period measurement, learning update, re-pinning, work
//! accounting, arrivals and completions, plus baseline schedulers and
//! convergence metrics.
//!
//! One simulation step is one manager period. `period_sec` only converts
//! steps to seconds for reporting; nothing here runs in real time.

use std::io;
use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{speeds, AssignmentProfile, GameSpec, Platform, ThreadSpec};
use crate::learner::{
    fork_rng, rm_step, select_actions, utility_from_measurements, LearnerConfig, StrategyState,
};
use crate::simplex::{vertex_distance, SimplexPoint};

/// Floor on the multiplicative noise factor, keeping every measurement
/// strictly positive as the learner requires.
pub const NOISE_FLOOR: f64 = 0.01;

/// A complete experiment description: the platform, the workload, and the
/// learner/game parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub platform: Platform,
    pub threads: Vec<ThreadSpec>,
    /// Manager period in seconds; converts steps to reported times.
    pub period_sec: f64,
    pub horizon_steps: usize,
    /// Coefficient of variation of the multiplicative measurement noise.
    pub noise_cv: f64,
    pub gamma: f64,
    pub epsilon: f64,
    pub lambda: f64,
    pub speed_scale: f64,
    pub seed: u64,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        self.platform.validate()?;
        if self.threads.is_empty() {
            return Err(Error::invalid("scenario needs at least one thread"));
        }
        for (i, t) in self.threads.iter().enumerate() {
            t.validate()
                .map_err(|e| Error::invalid(format!("thread {i}: {e}")))?;
        }
        if !self.period_sec.is_finite() || self.period_sec <= 0.0 {
            return Err(Error::invalid(format!(
                "period_sec must be positive, got {}",
                self.period_sec
            )));
        }
        if self.horizon_steps == 0 {
            return Err(Error::invalid("horizon_steps must be at least 1"));
        }
        if !self.noise_cv.is_finite() || self.noise_cv < 0.0 {
            return Err(Error::invalid(format!(
                "noise_cv must be non-negative, got {}",
                self.noise_cv
            )));
        }
        if !self.gamma.is_finite() || self.gamma < 0.0 {
            return Err(Error::invalid(format!(
                "gamma must be non-negative, got {}",
                self.gamma
            )));
        }
        if !self.speed_scale.is_finite() || self.speed_scale <= 0.0 {
            return Err(Error::invalid(format!(
                "speed_scale must be positive, got {}",
                self.speed_scale
            )));
        }
        self.learner_config()?;
        Ok(())
    }

    pub fn learner_config(&self) -> Result<LearnerConfig> {
        LearnerConfig::new(self.epsilon, self.lambda)
    }

    /// The assignment game over a given set of threads (by scenario index).
    pub fn game_for(&self, thread_ids: &[usize]) -> Result<GameSpec> {
        let demands = thread_ids
            .iter()
            .map(|&t| {
                self.threads
                    .get(t)
                    .map(|th| th.demand)
                    .ok_or_else(|| Error::invalid(format!("thread id {t} out of range")))
            })
            .collect::<Result<Vec<f64>>>()?;
        GameSpec::new(self.platform.clone(), demands, self.gamma, self.speed_scale)
    }

    /// The game over all threads, useful for equilibrium reports.
    pub fn full_game(&self) -> Result<GameSpec> {
        self.game_for(&(0..self.threads.len()).collect::<Vec<_>>())
    }
}

/// Multiplicative measurement noise: factor drawn from a Gaussian with mean
/// one, truncated below at [`NOISE_FLOOR`].
#[derive(Debug, Clone)]
pub struct NoiseModel {
    dist: Option<Normal<f64>>,
}

impl NoiseModel {
    pub fn new(cv: f64) -> Result<Self> {
        if !cv.is_finite() || cv < 0.0 {
            return Err(Error::invalid(format!("noise_cv must be >= 0, got {cv}")));
        }
        let dist = if cv > 0.0 {
            Some(Normal::new(1.0, cv).expect("finite positive std dev"))
        } else {
            None
        };
        Ok(Self { dist })
    }

    pub fn factor<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match &self.dist {
            None => 1.0,
            Some(d) => d.sample(rng).max(NOISE_FLOOR),
        }
    }
}

/// Boundary between the decision loop and whatever executes the threads.
/// A live implementation would pin OS threads and read hardware counters;
/// the simulated one computes contention speeds and synthesizes noise.
pub trait ExecutionBackend {
    /// Pins the active threads according to `profile`, effective for the
    /// next measurement period.
    fn apply_assignments(&mut self, profile: &AssignmentProfile) -> Result<()>;

    /// Measured per-thread speeds for the period under the last applied
    /// assignments, in active-thread order.
    fn measure_speeds(&mut self) -> Result<Vec<f64>>;
}

/// The in-process backend: proportional-share contention model plus
/// multiplicative Gaussian measurement noise.
pub struct SimulatedBackend {
    platform: Platform,
    gamma: f64,
    speed_scale: f64,
    noise: NoiseModel,
    rng: ChaCha8Rng,
    game: Option<GameSpec>,
    profile: Option<AssignmentProfile>,
    last_true_speeds: Vec<f64>,
}

impl SimulatedBackend {
    pub fn new(scenario: &Scenario, noise_rng: ChaCha8Rng) -> Result<Self> {
        Ok(Self {
            platform: scenario.platform.clone(),
            gamma: scenario.gamma,
            speed_scale: scenario.speed_scale,
            noise: NoiseModel::new(scenario.noise_cv)?,
            rng: noise_rng,
            game: None,
            profile: None,
            last_true_speeds: Vec::new(),
        })
    }

    /// Installs the demands of the currently active threads; call whenever
    /// the active set changes.
    pub fn set_active_demands(&mut self, demands: Vec<f64>) -> Result<()> {
        self.game = if demands.is_empty() {
            None
        } else {
            Some(GameSpec::new(
                self.platform.clone(),
                demands,
                self.gamma,
                self.speed_scale,
            )?)
        };
        self.profile = None;
        Ok(())
    }

    pub fn game(&self) -> Option<&GameSpec> {
        self.game.as_ref()
    }

    /// True (noise-free) speeds of the last measured period; the simulator
    /// uses these for work accounting.
    pub fn last_true_speeds(&self) -> &[f64] {
        &self.last_true_speeds
    }
}

impl ExecutionBackend for SimulatedBackend {
    fn apply_assignments(&mut self, profile: &AssignmentProfile) -> Result<()> {
        let game = self
            .game
            .as_ref()
            .ok_or_else(|| Error::invalid("no active threads installed"))?;
        profile.validate_for(game)?;
        self.profile = Some(profile.clone());
        Ok(())
    }

    fn measure_speeds(&mut self) -> Result<Vec<f64>> {
        let game = self
            .game
            .as_ref()
            .ok_or_else(|| Error::invalid("no active threads installed"))?;
        let profile = self
            .profile
            .as_ref()
            .ok_or_else(|| Error::invalid("no assignments applied"))?;
        self.last_true_speeds = speeds(profile, game)?;
        Ok(self
            .last_true_speeds
            .iter()
            .map(|v| v * self.noise.factor(&mut self.rng))
            .collect())
    }
}

/// Everything observed during one manager period.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    /// Scenario thread ids active this period, in arrival order.
    pub active: Vec<usize>,
    /// Assignment under which this period ran, per active thread.
    pub profile: AssignmentProfile,
    pub true_speeds: Vec<f64>,
    pub measured_speeds: Vec<f64>,
    /// Shared utility computed from the measurements; `None` when no thread
    /// was active.
    pub utility: Option<f64>,
    /// Nominal strategies that produced `profile` (pinned vertices for
    /// baseline policies), per active thread.
    pub strategies: Vec<SimplexPoint>,
}

/// When a thread finished: the number of elapsed periods and the wall time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompletionRecord {
    /// Periods executed when cumulative work first reached the target.
    pub step: usize,
    pub time_sec: f64,
}

/// Time-indexed record of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub period_sec: f64,
    pub steps: Vec<StepRecord>,
    /// Completion per scenario thread; `None` for unfinished threads.
    pub completions: Vec<Option<CompletionRecord>>,
}

impl Trace {
    /// Completion time of the last-finishing thread.
    pub fn makespan_sec(&self) -> Result<f64> {
        let mut latest = 0.0_f64;
        for (t, c) in self.completions.iter().enumerate() {
            match c {
                Some(rec) => latest = latest.max(rec.time_sec),
                None => {
                    return Err(Error::invalid(format!(
                        "trace is incomplete: thread {t} never completed"
                    )))
                }
            }
        }
        Ok(latest)
    }

    pub fn is_complete(&self) -> bool {
        self.completions.iter().all(|c| c.is_some())
    }
}

/// Non-learning placement policies used as comparison points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BaselinePolicy {
    /// Uniformly random CPU fixed at each thread's arrival.
    StaticRandom,
    /// Thread `i` pinned to CPU `i mod m`.
    RoundRobin,
    /// Each arrival placed on the CPU with the least resident demand,
    /// never migrated afterwards.
    GreedyLeastLoaded,
}

impl BaselinePolicy {
    pub fn name(&self) -> &'static str {
        match self {
            BaselinePolicy::StaticRandom => "static-random",
            BaselinePolicy::RoundRobin => "round-robin",
            BaselinePolicy::GreedyLeastLoaded => "greedy-least-loaded",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "static-random" => Ok(BaselinePolicy::StaticRandom),
            "round-robin" => Ok(BaselinePolicy::RoundRobin),
            "greedy-least-loaded" => Ok(BaselinePolicy::GreedyLeastLoaded),
            other => Err(Error::invalid(format!(
                "unknown baseline policy '{other}' (expected static-random, \
                 round-robin, or greedy-least-loaded)"
            ))),
        }
    }
}

enum Mode {
    Learner,
    Baseline(BaselinePolicy),
}

/// Runs the closed learning loop for one scenario. Deterministic given the
/// scenario (including its seed).
pub fn run(scenario: &Scenario) -> Result<Trace> {
    run_loop(scenario, Mode::Learner)
}

/// Runs the same loop with assignments chosen by a baseline policy instead
/// of the learner. Noise draws share the learner run's stream layout, so a
/// baseline run with the same seed sees the same measurement noise.
pub fn run_baseline(scenario: &Scenario, policy: BaselinePolicy) -> Result<Trace> {
    run_loop(scenario, Mode::Baseline(policy))
}

fn run_loop(scenario: &Scenario, mode: Mode) -> Result<Trace> {
    scenario.validate()?;
    let threads = &scenario.threads;
    let n = threads.len();
    let m = scenario.platform.num_cpus();
    let config = scenario.learner_config()?;

    let mut master = ChaCha8Rng::seed_from_u64(scenario.seed);
    let noise_rng = fork_rng(&mut master);
    let mut policy_rng = fork_rng(&mut master);
    let mut backend = SimulatedBackend::new(scenario, noise_rng)?;

    let mut state = StrategyState::empty(m, config)?;
    let mut active: Vec<usize> = Vec::new();
    let mut assignment: Vec<usize> = Vec::new();
    let mut work_done = vec![0.0_f64; n];
    let mut completions: Vec<Option<CompletionRecord>> = vec![None; n];
    let mut steps = Vec::new();

    for step in 0..scenario.horizon_steps {
        // Activate arrivals in thread-id order.
        let mut arrived = false;
        for (t, th) in threads.iter().enumerate() {
            if th.arrival_step != step {
                continue;
            }
            arrived = true;
            let cpu = match mode {
                Mode::Learner => {
                    state.push_uniform_agent();
                    let uniform = SimplexPoint::uniform(m)?;
                    let sigma = crate::simplex::perturb(&uniform, config.lambda)?;
                    let mut sub = fork_rng(&mut policy_rng);
                    crate::simplex::sample_index(&sigma, &mut sub)
                }
                Mode::Baseline(BaselinePolicy::StaticRandom) => policy_rng.gen_range(0..m),
                Mode::Baseline(BaselinePolicy::RoundRobin) => t % m,
                Mode::Baseline(BaselinePolicy::GreedyLeastLoaded) => {
                    let mut resident = vec![0.0_f64; m];
                    for (slot, &other) in active.iter().enumerate() {
                        resident[assignment[slot]] += threads[other].demand;
                    }
                    let mut best = 0;
                    for j in 1..m {
                        if resident[j] < resident[best] {
                            best = j;
                        }
                    }
                    best
                }
            };
            active.push(t);
            assignment.push(cpu);
        }
        if arrived {
            backend.set_active_demands(active.iter().map(|&t| threads[t].demand).collect())?;
        }

        if active.is_empty() {
            let pending = threads
                .iter()
                .any(|th| th.arrival_step > step);
            if !pending {
                break;
            }
            steps.push(StepRecord {
                step,
                active: Vec::new(),
                profile: AssignmentProfile::new(Vec::new()),
                true_speeds: Vec::new(),
                measured_speeds: Vec::new(),
                utility: None,
                strategies: Vec::new(),
            });
            continue;
        }

        let game = backend
            .game()
            .expect("active set is non-empty")
            .clone();
        let profile = AssignmentProfile::new(assignment.clone());
        backend.apply_assignments(&profile)?;
        let measured = backend.measure_speeds()?;
        let true_speeds = backend.last_true_speeds().to_vec();
        // A measurement the learner cannot use (noise drove the objective
        // non-positive) skips this period's update; the run goes on.
        let utility = match utility_from_measurements(&game, &measured) {
            Ok(u) => Some(u),
            Err(Error::Measurement(_)) => None,
            Err(e) => return Err(e),
        };

        let strategies = match mode {
            Mode::Learner => state.nominal().to_vec(),
            Mode::Baseline(_) => assignment
                .iter()
                .map(|&j| SimplexPoint::vertex(m, j))
                .collect::<Result<Vec<_>>>()?,
        };

        steps.push(StepRecord {
            step,
            active: active.clone(),
            profile: profile.clone(),
            true_speeds: true_speeds.clone(),
            measured_speeds: measured.clone(),
            utility,
            strategies,
        });

        // Learning update and next-period assignments. On a skipped
        // measurement the strategies stay put but placements are still
        // re-sampled, keeping the assignment stream alive.
        if let Mode::Learner = mode {
            match utility {
                Some(_) => {
                    let (next_state, next_profile) =
                        rm_step(&state, &game, &profile, &measured, &mut policy_rng)?;
                    state = next_state;
                    assignment = next_profile.cpu_of().to_vec();
                }
                None => {
                    assignment = select_actions(&state, &mut policy_rng)?.cpu_of().to_vec();
                }
            }
        }

        // Credit true work done this period and detect completions.
        let mut retired = false;
        for (slot, &t) in active.iter().enumerate() {
            let th = &threads[t];
            if th.total_work.is_finite() {
                work_done[t] += true_speeds[slot] * scenario.period_sec;
                if work_done[t] >= th.total_work && completions[t].is_none() {
                    completions[t] = Some(CompletionRecord {
                        step: step + 1,
                        time_sec: (step + 1) as f64 * scenario.period_sec,
                    });
                    retired = true;
                }
            }
        }

        if retired {
            for slot in (0..active.len()).rev() {
                if completions[active[slot]].is_some() {
                    active.remove(slot);
                    assignment.remove(slot);
                    if let Mode::Learner = mode {
                        state.remove_agent(slot)?;
                    }
                }
            }
            backend.set_active_demands(active.iter().map(|&t| threads[t].demand).collect())?;

            let pending = threads
                .iter()
                .any(|th| th.arrival_step > step);
            if active.is_empty() && !pending {
                break;
            }
        }
    }

    Ok(Trace {
        period_sec: scenario.period_sec,
        steps,
        completions,
    })
}

/// Fraction of the window's steps whose nominal strategy profile lies within
/// sup-norm `delta` of some profile in `nash_set`. Steps whose active-agent
/// count differs from a candidate profile's length count as far.
pub fn time_fraction_near(
    trace: &Trace,
    nash_set: &[AssignmentProfile],
    delta: f64,
    window: Range<usize>,
) -> Result<f64> {
    if nash_set.is_empty() {
        return Err(Error::invalid("nash_set must be non-empty"));
    }
    if window.is_empty() {
        return Err(Error::invalid("window must be non-empty"));
    }
    if window.end > trace.steps.len() {
        return Err(Error::invalid(format!(
            "window {}..{} exceeds trace length {}",
            window.start,
            window.end,
            trace.steps.len()
        )));
    }
    if !delta.is_finite() || delta <= 0.0 {
        return Err(Error::invalid(format!("delta must be positive, got {delta}")));
    }

    let mut near = 0usize;
    for record in &trace.steps[window.clone()] {
        let hit = nash_set.iter().any(|p| {
            p.len() == record.strategies.len()
                && vertex_distance(&record.strategies, p.cpu_of())
                    .map(|d| d < delta)
                    .unwrap_or(false)
        });
        if hit {
            near += 1;
        }
    }
    Ok(near as f64 / window.len() as f64)
}

/// Makespan statistics across replicate runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionSummary {
    pub makespans_sec: Vec<f64>,
    pub mean_sec: f64,
    /// Sample standard deviation (n - 1 denominator).
    pub sd_sec: f64,
    /// False when only one sample exists; `sd_sec` is then reported as 0.
    pub sd_defined: bool,
}

/// Mean and sample standard deviation of a set of makespans.
pub fn summarize_makespans(makespans: &[f64]) -> Result<CompletionSummary> {
    if makespans.is_empty() {
        return Err(Error::invalid("no makespans to summarize"));
    }
    if makespans.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid("makespans must be finite"));
    }
    let n = makespans.len() as f64;
    let mean = makespans.iter().sum::<f64>() / n;
    let (sd, sd_defined) = if makespans.len() < 2 {
        (0.0, false)
    } else {
        let ss: f64 = makespans.iter().map(|x| (x - mean) * (x - mean)).sum();
        ((ss / (n - 1.0)).sqrt(), true)
    };
    Ok(CompletionSummary {
        makespans_sec: makespans.to_vec(),
        mean_sec: mean,
        sd_sec: sd,
        sd_defined,
    })
}

/// Extracts every trace's makespan and summarizes them. Errors if any trace
/// has an unfinished thread, naming the trace and thread.
pub fn completion_stats(traces: &[Trace]) -> Result<CompletionSummary> {
    let makespans = traces
        .iter()
        .enumerate()
        .map(|(i, tr)| {
            tr.makespan_sec()
                .map_err(|e| Error::invalid(format!("trace {i}: {e}")))
        })
        .collect::<Result<Vec<f64>>>()?;
    summarize_makespans(&makespans)
}

/// Writes a trace as CSV, one row per (step, active thread).
pub fn write_trace_csv<W: io::Write>(trace: &Trace, out: &mut W) -> io::Result<()> {
    writeln!(
        out,
        "step,time_sec,thread_id,cpu,true_speed,measured_speed,utility,strategy_max,strategy_argmax"
    )?;
    for record in &trace.steps {
        let time_sec = record.step as f64 * trace.period_sec;
        let utility = record.utility.unwrap_or(f64::NAN);
        for (slot, &thread_id) in record.active.iter().enumerate() {
            let (argmax, max) = record.strategies[slot].argmax();
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                record.step,
                time_sec,
                thread_id,
                record.profile.cpu_of()[slot],
                record.true_speeds[slot],
                record.measured_speeds[slot],
                utility,
                max,
                argmax
            )?;
        }
    }
    Ok(())
}
