//! The assignment game: platform description, contention speed model,
//! the global objective, and the shared (identical-interest) utility.
//!
//! Every active thread is an agent whose action is the CPU it runs on.
//! All agents receive the same utility, the normalized global objective,
//! so locally optimal play lines up with globally efficient placements.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::profiles::{profile_count, ProfileIter, ENUMERATION_CAP};

/// The machine: per-CPU capacities and exogenous background loads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Platform {
    /// Work-units per second each CPU can deliver.
    #[serde(rename = "capacities")]
    pub cpu_capacities: Vec<f64>,
    /// Fraction of each CPU already consumed by outside processes, in [0, 1).
    #[serde(rename = "loads")]
    pub exogenous_loads: Vec<f64>,
}

impl Platform {
    pub fn new(cpu_capacities: Vec<f64>, exogenous_loads: Vec<f64>) -> Result<Self> {
        let p = Self {
            cpu_capacities,
            exogenous_loads,
        };
        p.validate()?;
        Ok(p)
    }

    /// A platform of `m` identical unit-capacity CPUs with no background load.
    pub fn idle_unit_cpus(m: usize) -> Result<Self> {
        Self::new(vec![1.0; m], vec![0.0; m])
    }

    pub fn validate(&self) -> Result<()> {
        if self.cpu_capacities.is_empty() {
            return Err(Error::invalid("platform needs at least one CPU"));
        }
        if self.cpu_capacities.len() != self.exogenous_loads.len() {
            return Err(Error::invalid(format!(
                "platform has {} capacities but {} loads",
                self.cpu_capacities.len(),
                self.exogenous_loads.len()
            )));
        }
        for (j, c) in self.cpu_capacities.iter().enumerate() {
            if !c.is_finite() || *c <= 0.0 {
                return Err(Error::invalid(format!("cpu {j} capacity must be > 0, got {c}")));
            }
        }
        for (j, w) in self.exogenous_loads.iter().enumerate() {
            if !w.is_finite() || !(0.0..1.0).contains(w) {
                return Err(Error::invalid(format!(
                    "cpu {j} exogenous load must be in [0, 1), got {w}"
                )));
            }
        }
        Ok(())
    }

    /// Number of CPUs.
    pub fn num_cpus(&self) -> usize {
        self.cpu_capacities.len()
    }

    /// Capacity left over for managed threads on CPU `j`.
    pub fn available_capacity(&self, j: usize) -> f64 {
        self.cpu_capacities[j] * (1.0 - self.exogenous_loads[j])
    }
}

/// One thread of the managed application.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThreadSpec {
    /// Maximum work-units per second the thread can consume.
    pub demand: f64,
    /// Work-units until completion; `f64::INFINITY` for a thread that never
    /// finishes (steady-state workloads). Serialized as `null` in JSON,
    /// where infinity has no literal.
    #[serde(with = "total_work_serde", default = "infinite_work")]
    pub total_work: f64,
    /// Simulation step at which the thread starts running.
    #[serde(default)]
    pub arrival_step: usize,
}

fn infinite_work() -> f64 {
    f64::INFINITY
}

mod total_work_serde {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

impl ThreadSpec {
    pub fn validate(&self) -> Result<()> {
        if !self.demand.is_finite() || self.demand <= 0.0 {
            return Err(Error::invalid(format!(
                "thread demand must be positive and finite, got {}",
                self.demand
            )));
        }
        if self.total_work.is_nan() || self.total_work <= 0.0 {
            return Err(Error::invalid(format!(
                "thread total_work must be positive (possibly infinite), got {}",
                self.total_work
            )));
        }
        Ok(())
    }
}

/// A frozen assignment game over the currently active threads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameSpec {
    pub platform: Platform,
    /// Demand of each active thread, one entry per agent.
    pub demands: Vec<f64>,
    /// Weight of the speed-variance penalty in the objective.
    pub gamma: f64,
    /// Normalization constant dividing the objective so utilities land
    /// in (0, 1].
    pub speed_scale: f64,
}

impl GameSpec {
    pub fn new(platform: Platform, demands: Vec<f64>, gamma: f64, speed_scale: f64) -> Result<Self> {
        let g = Self {
            platform,
            demands,
            gamma,
            speed_scale,
        };
        g.validate_shape()?;
        Ok(g)
    }

    /// Structural checks only; positivity of utilities over all profiles is
    /// what [`validate_game`] establishes.
    pub fn validate_shape(&self) -> Result<()> {
        self.platform.validate()?;
        if self.demands.is_empty() {
            return Err(Error::invalid("game needs at least one thread"));
        }
        for (i, d) in self.demands.iter().enumerate() {
            if !d.is_finite() || *d <= 0.0 {
                return Err(Error::invalid(format!(
                    "thread {i} demand must be positive, got {d}"
                )));
            }
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
        Ok(())
    }

    pub fn num_agents(&self) -> usize {
        self.demands.len()
    }

    pub fn num_cpus(&self) -> usize {
        self.platform.num_cpus()
    }
}

/// A pure assignment: the CPU index (0-based) of each active thread.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AssignmentProfile {
    cpu_of: Vec<usize>,
}

impl AssignmentProfile {
    pub fn new(cpu_of: Vec<usize>) -> Self {
        Self { cpu_of }
    }

    pub fn cpu_of(&self) -> &[usize] {
        &self.cpu_of
    }

    pub fn len(&self) -> usize {
        self.cpu_of.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cpu_of.is_empty()
    }

    /// Copy of this profile with agent `i` moved to CPU `j`.
    pub fn with_move(&self, i: usize, j: usize) -> Self {
        let mut cpu_of = self.cpu_of.clone();
        cpu_of[i] = j;
        Self { cpu_of }
    }

    /// Copy of this profile without agent `i`'s entry.
    pub fn without_agent(&self, i: usize) -> Self {
        let mut cpu_of = self.cpu_of.clone();
        cpu_of.remove(i);
        Self { cpu_of }
    }

    pub fn validate_for(&self, game: &GameSpec) -> Result<()> {
        if self.cpu_of.len() != game.num_agents() {
            return Err(Error::invalid(format!(
                "profile covers {} threads but game has {}",
                self.cpu_of.len(),
                game.num_agents()
            )));
        }
        let m = game.num_cpus();
        for (i, j) in self.cpu_of.iter().enumerate() {
            if *j >= m {
                return Err(Error::invalid(format!(
                    "thread {i} assigned to cpu {j}, platform has {m} CPUs"
                )));
            }
        }
        Ok(())
    }
}

impl From<Vec<usize>> for AssignmentProfile {
    fn from(cpu_of: Vec<usize>) -> Self {
        Self::new(cpu_of)
    }
}

/// Processing speed of every thread under a pure assignment.
///
/// Each CPU shares its available capacity in proportion to resident demand,
/// capping every thread at its own demand. Slack freed by a capped thread is
/// not redistributed.
pub fn speeds(profile: &AssignmentProfile, game: &GameSpec) -> Result<Vec<f64>> {
    profile.validate_for(game)?;
    let m = game.num_cpus();
    let mut resident_demand = vec![0.0_f64; m];
    for (i, &j) in profile.cpu_of().iter().enumerate() {
        resident_demand[j] += game.demands[i];
    }
    let mut out = Vec::with_capacity(game.num_agents());
    for (i, &j) in profile.cpu_of().iter().enumerate() {
        let available = game.platform.available_capacity(j);
        let share = (available / resident_demand[j]).min(1.0);
        out.push(game.demands[i] * share);
    }
    Ok(out)
}

/// The global objective: mean speed minus `gamma` times the population
/// variance of speeds. With `gamma = 0` this is exactly the mean.
pub fn objective_value(speed_vector: &[f64], gamma: f64) -> Result<f64> {
    if speed_vector.is_empty() {
        return Err(Error::invalid("objective needs at least one speed"));
    }
    if !gamma.is_finite() || gamma < 0.0 {
        return Err(Error::invalid(format!("gamma must be non-negative, got {gamma}")));
    }
    let n = speed_vector.len() as f64;
    let mean = speed_vector.iter().sum::<f64>() / n;
    let penalty: f64 = speed_vector.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    Ok(mean - gamma * penalty)
}

/// The shared utility of a pure profile: objective over true speeds,
/// divided by `speed_scale`. Positive for well-configured games.
pub fn common_utility(profile: &AssignmentProfile, game: &GameSpec) -> Result<f64> {
    let v = speeds(profile, game)?;
    let f = objective_value(&v, game.gamma)?;
    let u = f / game.speed_scale;
    if u <= 0.0 {
        return Err(Error::Configuration(format!(
            "utility {u} is not positive at profile {:?}; lower gamma or adjust the platform",
            profile.cpu_of()
        )));
    }
    Ok(u)
}

/// Per-agent utilities: every agent receives the identical common utility.
pub fn utilities(profile: &AssignmentProfile, game: &GameSpec) -> Result<Vec<f64>> {
    let u = common_utility(profile, game)?;
    Ok(vec![u; game.num_agents()])
}

/// Outcome of sweeping a game's pure profiles for configuration defects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameDiagnostics {
    /// Profiles actually evaluated.
    pub profiles_checked: u64,
    /// True when every pure profile was evaluated; false when the game was
    /// too large and a random sample was used instead.
    pub exhaustive: bool,
    pub f_min: f64,
    pub f_max: f64,
    pub f_min_profile: AssignmentProfile,
    pub f_max_profile: AssignmentProfile,
}

/// Number of random profiles checked when a game exceeds the enumeration cap.
pub const VALIDATION_SAMPLES: u64 = 10_000;

/// Verifies the positive-utility contract: `f > 0` on every pure profile and
/// `speed_scale >= max f`. Exhaustive below the enumeration cap, sampled
/// (with `exhaustive: false` flagging the caveat) above it.
pub fn validate_game(game: &GameSpec) -> Result<GameDiagnostics> {
    use rand::Rng;
    use rand::SeedableRng;

    game.validate_shape()?;
    let n = game.num_agents();
    let m = game.num_cpus();

    let mut f_min = f64::INFINITY;
    let mut f_max = f64::NEG_INFINITY;
    let mut f_min_profile = AssignmentProfile::new(vec![0; n]);
    let mut f_max_profile = f_min_profile.clone();
    let mut checked: u64 = 0;

    let exhaustive = profile_count(n, m) <= ENUMERATION_CAP;
    let mut visit = |profile: AssignmentProfile| -> Result<()> {
        let v = speeds(&profile, game)?;
        let f = objective_value(&v, game.gamma)?;
        if f < f_min {
            f_min = f;
            f_min_profile = profile.clone();
        }
        if f > f_max {
            f_max = f;
            f_max_profile = profile;
        }
        checked += 1;
        Ok(())
    };

    if exhaustive {
        for profile in ProfileIter::new(n, m) {
            visit(profile)?;
        }
    } else {
        // Fixed seed so diagnostics are reproducible run to run.
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x7061636b);
        for _ in 0..VALIDATION_SAMPLES {
            let profile = AssignmentProfile::new((0..n).map(|_| rng.gen_range(0..m)).collect());
            visit(profile)?;
        }
    }

    if f_min <= 0.0 {
        return Err(Error::Configuration(format!(
            "objective f = {f_min} is not positive at witness profile {:?} \
             (gamma = {} is too large for this platform)",
            f_min_profile.cpu_of(),
            game.gamma
        )));
    }
    if game.speed_scale < f_max {
        return Err(Error::Configuration(format!(
            "speed_scale {} is below the maximum objective {f_max} reached at profile {:?}",
            game.speed_scale,
            f_max_profile.cpu_of()
        )));
    }

    Ok(GameDiagnostics {
        profiles_checked: checked,
        exhaustive,
        f_min,
        f_max,
        f_min_profile,
        f_max_profile,
    })
}
