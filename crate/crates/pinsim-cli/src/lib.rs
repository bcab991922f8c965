//! Experiment orchestration behind the `pinsim` binary: scenario file
//! ingestion, replicated runs with optional baselines, and CSV/JSON artifact
//! emission for external plotting.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;

use pinsim::oracle::{enumerate_pure_nash, EquilibriumReport, NASH_TOLERANCE};
use pinsim::sim::{
    completion_stats, run, run_baseline, time_fraction_near, write_trace_csv, BaselinePolicy,
    CompletionSummary, Scenario, Trace,
};

/// One experiment invocation: which scenario, how many replicates, what to
/// compare against, and where artifacts go.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub scenario_path: PathBuf,
    pub replicates: usize,
    pub baseline: Option<BaselinePolicy>,
    pub output_dir: PathBuf,
    /// Also enumerate the full game's pure Nash set, write it as JSON, and
    /// report how much time each run spends near it.
    pub report_nash: bool,
    /// Neighborhood radius for the time-near-equilibrium metric.
    pub delta: f64,
    /// Overrides the scenario's base seed when set.
    pub seed_override: Option<u64>,
}

/// Reads and validates a scenario JSON document.
pub fn parse_scenario(path: &Path) -> Result<Scenario> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("cannot read scenario file {}", path.display()))?;
    let scenario: Scenario = serde_json::from_str(&text)
        .with_context(|| format!("cannot parse scenario file {}", path.display()))?;
    scenario
        .validate()
        .with_context(|| format!("invalid scenario in {}", path.display()))?;
    Ok(scenario)
}

/// Canonical JSON form of a scenario; parsing it back yields an equal value.
pub fn scenario_to_json(scenario: &Scenario) -> Result<String> {
    Ok(serde_json::to_string_pretty(scenario)?)
}

#[derive(Debug, Clone, Serialize)]
struct FractionSummary {
    delta: f64,
    window_fraction: f64,
    per_run: Vec<f64>,
    mean: f64,
}

/// The summary.json document written after an experiment.
#[derive(Debug, Clone, Serialize)]
struct ExperimentSummary {
    scenario: String,
    replicates: usize,
    base_seed: u64,
    run_seeds: Vec<u64>,
    rl_makespans: Option<CompletionSummary>,
    rl_incomplete: Option<String>,
    baseline_policy: Option<String>,
    baseline_makespans: Option<CompletionSummary>,
    baseline_incomplete: Option<String>,
    time_near_equilibrium: Option<FractionSummary>,
    equilibrium_report: Option<String>,
    equilibrium_skipped: Option<String>,
}

/// Artifacts produced by [`run_experiment`], with everything needed for a
/// console summary.
pub struct ExperimentOutcome {
    pub rl_traces: Vec<Trace>,
    pub baseline_traces: Vec<Trace>,
    pub rl_stats: Option<CompletionSummary>,
    pub baseline_stats: Option<CompletionSummary>,
    pub fractions: Option<Vec<f64>>,
    pub files_written: Vec<PathBuf>,
}

/// Fraction of each run used for the time-near-equilibrium window (the last
/// fifth of executed steps).
pub const METRIC_WINDOW_FRACTION: f64 = 0.2;

/// Runs `replicates` seeded learner runs (seed, seed+1, ...), optional
/// matched baseline runs, and writes one trace CSV per run plus a summary
/// JSON (and an equilibrium report when requested) into the output
/// directory. Artifacts are byte-deterministic given identical inputs.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutcome> {
    if config.replicates == 0 {
        bail!("replicates must be at least 1");
    }
    if config.report_nash && (!config.delta.is_finite() || config.delta <= 0.0) {
        bail!("delta must be positive when the equilibrium report is enabled");
    }
    let mut scenario = parse_scenario(&config.scenario_path)?;
    if let Some(seed) = config.seed_override {
        scenario.seed = seed;
    }

    fs::create_dir_all(&config.output_dir).with_context(|| {
        format!("cannot create output directory {}", config.output_dir.display())
    })?;
    let mut files_written = Vec::new();

    let run_seeds: Vec<u64> = (0..config.replicates)
        .map(|i| scenario.seed.wrapping_add(i as u64))
        .collect();

    // Equilibrium report first; a too-large game downgrades to a note.
    let mut nash_set = None;
    let mut equilibrium_file = None;
    let mut equilibrium_skipped = None;
    if config.report_nash {
        match full_game_report(&scenario) {
            Ok(report) => {
                let path = config.output_dir.join("equilibrium.json");
                write_atomic(&path, serde_json::to_string_pretty(&report)?.as_bytes())?;
                files_written.push(path);
                equilibrium_file = Some("equilibrium.json".to_string());
                nash_set = Some(report);
            }
            Err(e) => {
                eprintln!("equilibrium report skipped: {e}");
                equilibrium_skipped = Some(e.to_string());
            }
        }
    }

    // Learner runs.
    let mut rl_traces = Vec::with_capacity(config.replicates);
    for (i, &seed) in run_seeds.iter().enumerate() {
        let mut replicate = scenario.clone();
        replicate.seed = seed;
        let trace = run(&replicate).with_context(|| format!("learner run {i} failed"))?;
        let path = config.output_dir.join(format!("trace_rl_{i}.csv"));
        write_trace_file(&trace, &path)?;
        files_written.push(path);
        rl_traces.push(trace);
    }

    // Matched baseline runs.
    let mut baseline_traces = Vec::new();
    if let Some(policy) = config.baseline {
        for (i, &seed) in run_seeds.iter().enumerate() {
            let mut replicate = scenario.clone();
            replicate.seed = seed;
            let trace = run_baseline(&replicate, policy)
                .with_context(|| format!("baseline run {i} failed"))?;
            let path = config
                .output_dir
                .join(format!("trace_{}_{i}.csv", policy.name()));
            write_trace_file(&trace, &path)?;
            files_written.push(path);
            baseline_traces.push(trace);
        }
    }

    let (rl_stats, rl_incomplete) = split_stats(&rl_traces);
    let (baseline_stats, baseline_incomplete) = if baseline_traces.is_empty() {
        (None, None)
    } else {
        split_stats(&baseline_traces)
    };

    let fractions = match &nash_set {
        Some(report) if !report.pure_nash.is_empty() => {
            let mut per_run = Vec::with_capacity(rl_traces.len());
            for trace in &rl_traces {
                per_run.push(tail_fraction_near(trace, &report.pure_nash, config.delta)?);
            }
            Some(per_run)
        }
        _ => None,
    };

    let summary = ExperimentSummary {
        scenario: config.scenario_path.display().to_string(),
        replicates: config.replicates,
        base_seed: scenario.seed,
        run_seeds,
        rl_makespans: rl_stats.clone(),
        rl_incomplete,
        baseline_policy: config.baseline.map(|p| p.name().to_string()),
        baseline_makespans: baseline_stats.clone(),
        baseline_incomplete,
        time_near_equilibrium: fractions.as_ref().map(|per_run| {
            let mean = per_run.iter().sum::<f64>() / per_run.len() as f64;
            FractionSummary {
                delta: config.delta,
                window_fraction: METRIC_WINDOW_FRACTION,
                per_run: per_run.clone(),
                mean,
            }
        }),
        equilibrium_report: equilibrium_file,
        equilibrium_skipped,
    };
    let summary_path = config.output_dir.join("summary.json");
    write_atomic(&summary_path, serde_json::to_string_pretty(&summary)?.as_bytes())?;
    files_written.push(summary_path);

    Ok(ExperimentOutcome {
        rl_traces,
        baseline_traces,
        rl_stats,
        baseline_stats,
        fractions,
        files_written,
    })
}

/// Pure-Nash report for the game over all of the scenario's threads.
pub fn full_game_report(scenario: &Scenario) -> Result<EquilibriumReport> {
    let game = scenario.full_game()?;
    Ok(enumerate_pure_nash(&game, NASH_TOLERANCE)?)
}

/// Time fraction near the Nash set over the last fifth of a run.
pub fn tail_fraction_near(
    trace: &Trace,
    nash_set: &[pinsim::AssignmentProfile],
    delta: f64,
) -> Result<f64> {
    let len = trace.steps.len();
    if len == 0 {
        bail!("trace has no steps");
    }
    let start = len - ((len as f64 * METRIC_WINDOW_FRACTION).ceil() as usize).clamp(1, len);
    Ok(time_fraction_near(trace, nash_set, delta, start..len)?)
}

fn split_stats(traces: &[Trace]) -> (Option<CompletionSummary>, Option<String>) {
    match completion_stats(traces) {
        Ok(stats) => (Some(stats), None),
        Err(e) => (None, Some(e.to_string())),
    }
}

fn write_trace_file(trace: &Trace, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    write_trace_csv(trace, &mut buf)?;
    write_atomic(path, &buf)
}

fn write_atomic(path: &Path, data: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp)
            .with_context(|| format!("cannot create {}", tmp.display()))?;
        f.write_all(data)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path).with_context(|| format!("cannot finalize {}", path.display()))?;
    Ok(())
}

/// Console table in the style of a completion-time comparison: one line per
/// run, then mean and standard deviation.
pub fn print_makespan_table(
    rl: Option<&CompletionSummary>,
    baseline_name: Option<&str>,
    baseline: Option<&CompletionSummary>,
) {
    match (rl, baseline) {
        (None, None) => {
            println!("no completed runs to summarize (threads with infinite work never finish)");
        }
        _ => {
            let rows = rl
                .map(|s| s.makespans_sec.len())
                .or_else(|| baseline.map(|s| s.makespans_sec.len()))
                .unwrap_or(0);
            print!("{:<8}", "run");
            print!("{:>16}", "learner (sec)");
            if baseline.is_some() {
                print!("{:>24}", format!("{} (sec)", baseline_name.unwrap_or("baseline")));
            }
            println!();
            for i in 0..rows {
                print!("{:<8}", i + 1);
                match rl {
                    Some(s) => print!("{:>16.1}", s.makespans_sec[i]),
                    None => print!("{:>16}", "-"),
                }
                if let Some(s) = baseline {
                    print!("{:>24.1}", s.makespans_sec[i]);
                }
                println!();
            }
            print!("{:<8}", "mean");
            match rl {
                Some(s) => print!("{:>16.1}", s.mean_sec),
                None => print!("{:>16}", "-"),
            }
            if let Some(s) = baseline {
                print!("{:>24.1}", s.mean_sec);
            }
            println!();
            print!("{:<8}", "s.d.");
            match rl {
                Some(s) => print!("{:>16.2}", s.sd_sec),
                None => print!("{:>16}", "-"),
            }
            if let Some(s) = baseline {
                print!("{:>24.2}", s.sd_sec);
            }
            println!();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use pinsim::{Platform, ThreadSpec};

    fn tiny_scenario() -> Scenario {
        Scenario {
            platform: Platform::idle_unit_cpus(2).unwrap(),
            threads: vec![
                ThreadSpec { demand: 1.0, total_work: 3.0, arrival_step: 0 },
                ThreadSpec { demand: 1.0, total_work: f64::INFINITY, arrival_step: 2 },
            ],
            period_sec: 0.3,
            horizon_steps: 40,
            noise_cv: 0.0,
            gamma: 0.0,
            epsilon: 0.05,
            lambda: 0.01,
            speed_scale: 1.0,
            seed: 9,
        }
    }

    #[test]
    fn scenario_round_trips_through_canonical_json() {
        let scenario = tiny_scenario();
        let text = scenario_to_json(&scenario).unwrap();
        // Infinite work appears as null in the document.
        assert!(text.contains("null"));

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("canonical.json");
        fs::write(&path, &text).unwrap();
        assert_eq!(parse_scenario(&path).unwrap(), scenario);
    }

    #[test]
    fn parse_rejects_unknown_fields() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("typo.json");
        let mut doc: serde_json::Value =
            serde_json::from_str(&scenario_to_json(&tiny_scenario()).unwrap()).unwrap();
        doc["lamda"] = serde_json::json!(0.5);
        fs::write(&path, serde_json::to_string(&doc).unwrap()).unwrap();
        let err = parse_scenario(&path).unwrap_err();
        assert!(format!("{err:#}").contains("lamda"));
    }

    #[test]
    fn parse_rejects_out_of_range_lambda() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.json");
        let mut scenario = tiny_scenario();
        scenario.lambda = 1.5;
        // Serialize the raw document without validation.
        fs::write(&path, serde_json::to_string(&scenario).unwrap()).unwrap();
        let err = parse_scenario(&path).unwrap_err();
        let chain = format!("{err:#}");
        assert!(chain.contains("lambda"), "{chain}");
    }

    #[test]
    fn parse_names_missing_fields() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("missing.json");
        fs::write(&path, r#"{"platform": {"capacities": [1.0], "loads": [0.0]}}"#).unwrap();
        let err = parse_scenario(&path).unwrap_err();
        let chain = format!("{err:#}");
        assert!(chain.contains("missing field"), "{chain}");
    }
}
