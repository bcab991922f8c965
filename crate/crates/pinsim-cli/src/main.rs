//! `pinsim`: run pinning experiments, enumerate equilibria, validate
//! scenarios.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use pinsim::game::validate_game;
use pinsim::sim::BaselinePolicy;
use pinsim_cli::{
    full_game_report, parse_scenario, print_makespan_table, run_experiment, ExperimentConfig,
};

#[derive(Parser)]
#[command(name = "pinsim", version, about = "Learning-based dynamic thread pinning simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario with seeded replicates and write trace/summary artifacts.
    Run {
        /// Scenario JSON file.
        scenario: PathBuf,
        /// Number of seeded replicate runs (seeds are base, base+1, ...).
        #[arg(long, default_value_t = 1)]
        replicates: usize,
        /// Also run a matched baseline policy on the same seeds.
        #[arg(long, value_parser = parse_policy)]
        baseline: Option<BaselinePolicy>,
        /// Neighborhood radius for the time-near-equilibrium metric.
        #[arg(long, default_value_t = 0.1)]
        delta: f64,
        /// Output directory for CSV traces and JSON reports.
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Override the scenario's base seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Enumerate the full game's pure Nash set, write equilibrium.json,
        /// and report time spent near it.
        #[arg(long)]
        report_nash: bool,
    },
    /// Enumerate pure Nash equilibria and efficient assignments of a
    /// scenario's full game.
    Nash {
        /// Scenario JSON file.
        scenario: PathBuf,
        /// Write the report as JSON into this directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a scenario file and its game configuration, printing
    /// diagnostics.
    Validate {
        /// Scenario JSON file.
        scenario: PathBuf,
    },
}

fn parse_policy(s: &str) -> Result<BaselinePolicy, String> {
    BaselinePolicy::parse(s).map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run {
            scenario,
            replicates,
            baseline,
            delta,
            out,
            seed,
            report_nash,
        } => {
            let config = ExperimentConfig {
                scenario_path: scenario,
                replicates,
                baseline,
                output_dir: out,
                report_nash,
                delta,
                seed_override: seed,
            };
            let outcome = run_experiment(&config)?;

            print_makespan_table(
                outcome.rl_stats.as_ref(),
                baseline.map(|p| p.name()),
                outcome.baseline_stats.as_ref(),
            );
            if let Some(fractions) = &outcome.fractions {
                let mean = fractions.iter().sum::<f64>() / fractions.len() as f64;
                println!(
                    "time near equilibrium (delta {delta}, last fifth of each run): mean {mean:.3}"
                );
            }
            println!("wrote {} files:", outcome.files_written.len());
            for f in &outcome.files_written {
                println!("  {}", f.display());
            }
            Ok(())
        }
        Command::Nash { scenario, out } => {
            let sc = parse_scenario(&scenario)?;
            let report = full_game_report(&sc)?;
            println!(
                "pure Nash profiles ({}), efficient profiles ({}), max objective {:.6}:",
                report.pure_nash.len(),
                report.efficient.len(),
                report.f_max()
            );
            for p in &report.pure_nash {
                let tag = if report.efficient.contains(p) { "  [efficient]" } else { "" };
                println!("  {:?}{tag}", p.cpu_of());
            }
            if let Some(dir) = out {
                std::fs::create_dir_all(&dir)
                    .with_context(|| format!("cannot create {}", dir.display()))?;
                let path = dir.join("equilibrium.json");
                std::fs::write(&path, serde_json::to_string_pretty(&report)?)?;
                println!("wrote {}", path.display());
            }
            Ok(())
        }
        Command::Validate { scenario } => {
            let sc = parse_scenario(&scenario)?;
            println!("scenario ok: {} threads, {} CPUs", sc.threads.len(), sc.platform.num_cpus());
            let game = sc.full_game()?;
            let diag = validate_game(&game)?;
            println!(
                "game ok: f in [{:.6}, {:.6}] over {} profiles{}",
                diag.f_min,
                diag.f_max,
                diag.profiles_checked,
                if diag.exhaustive { "" } else { " (sampled, not exhaustive)" }
            );
            Ok(())
        }
    }
}
