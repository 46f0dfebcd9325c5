use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use aliasplan::belief_io::load_belief;
use aliasplan::checks::{verify_bounds, write_check_csv};
use aliasplan::episode::{decision_rows, plan, run_disambiguation, write_decision_csv, write_episode_csv, Method};
use aliasplan::experiments::{
    experiment_budget, experiment_runtime, selection_label, verdict_label, write_budget_csv, write_runtime_csv,
    RuntimeConfig,
};
use aliasplan::scenario::{fig2, load_scenario, ScenarioError};
use aliasplan_core::planner::PlannerConfig;
use aliasplan_core::simplification::BoundError;
use aliasplan_core::PlanError;
use clap::{Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "aliasplan", version, about = "Belief space planning under perceptual aliasing")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one disambiguation episode and write its decision trace.
    Simulate {
        scenario: PathBuf,
        #[arg(long, value_enum, default_value_t = Method::D2aBsp)]
        method: Method,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// CSV output; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Plan one step from a belief file, or from the scenario prior.
    Plan {
        scenario: PathBuf,
        #[arg(long)]
        belief: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Method::D2aBsp)]
        method: Method,
        /// Overrides the scenario's planner seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Planning time of the exhaustive and the bounded planner against the
    /// number of prior modes.
    ExperimentRuntime {
        #[arg(long, value_delimiter = ',', default_values_t = vec![2, 4, 8])]
        m0: Vec<usize>,
        #[arg(long, default_value_t = 10)]
        seeds: u64,
        #[arg(long, default_value_t = 5)]
        steps: usize,
        #[arg(long, default_value_t = 32)]
        samples: usize,
        /// Timed runs per session; the fastest is reported.
        #[arg(long, default_value_t = 5)]
        repeats: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Single-hypothesis intervals under the component budget.
    ExperimentBudget {
        /// Defaults to the bundled two-mode scenario.
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Randomized soundness checks of the bounds.
    VerifyBounds {
        #[arg(long, default_value_t = 100_000)]
        instances: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Failures mapped to exit codes.
#[derive(Debug)]
enum Failure {
    /// Bad input: exit code 1.
    Invalid(String),
    /// A bound check or bound arithmetic failed: exit code 2.
    Assertion(String),
}

impl From<ScenarioError> for Failure {
    fn from(e: ScenarioError) -> Self {
        Self::Invalid(e.to_string())
    }
}

impl From<PlanError> for Failure {
    fn from(e: PlanError) -> Self {
        match e {
            PlanError::Bound(BoundError::Inverted { .. }) => Self::Assertion(e.to_string()),
            other => Self::Invalid(other.to_string()),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Self::Invalid(e.to_string())
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Self::Invalid(e.to_string())
    }
}

fn output(path: &Option<PathBuf>) -> Result<Box<dyn Write>, Failure> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).map_err(|e| Failure::Invalid(format!("cannot create {}: {e}", p.display())))?,
        )),
        None => Box::new(io::stdout().lock()),
    })
}

fn scenario_or_fig2(path: Option<&Path>) -> Result<aliasplan::Scenario, Failure> {
    Ok(match path {
        Some(p) => load_scenario(p)?,
        None => fig2(),
    })
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Simulate {
            scenario,
            method,
            seed,
            out,
        } => {
            let s = load_scenario(&scenario)?;
            let report = run_disambiguation(&s, method, seed).map_err(|e| match e {
                aliasplan::episode::EpisodeError::Plan { source, .. } => Failure::from(source),
                other => Failure::Invalid(other.to_string()),
            })?;
            write_episode_csv(&s, &report, output(&out)?)?;
            let names: Vec<&str> = report.actions().iter().map(|a| s.action_name(*a)).collect();
            eprintln!(
                "{method}: {} steps [{}], {:?}, final entropy {:.4}, weight at true pose {:.4}, planning {:.3} s",
                report.steps.len(),
                names.join(" "),
                report.termination,
                report.final_entropy,
                report.truth_weight,
                report.planning_time.as_secs_f64()
            );
        }
        Command::Plan {
            scenario,
            belief,
            method,
            seed,
            out,
        } => {
            let s = load_scenario(&scenario)?;
            let b = match belief {
                Some(p) => load_belief(p)?,
                None => s.prior.clone(),
            };
            let config = PlannerConfig {
                rng_seed: seed.unwrap_or(s.planner.rng_seed),
                ..s.planner.clone()
            };
            let outcome = plan(&s.world, &b, &s.actions(), &config, method)?;
            write_decision_csv(&decision_rows(&s, b.step(), &outcome), output(&out)?)?;
            eprintln!(
                "{method}: {} ({}guaranteed, {} of {} hypotheses)",
                s.action_name(outcome.chosen),
                if outcome.guaranteed { "" } else { "not " },
                outcome.selection_size(),
                b.len()
            );
        }
        Command::ExperimentRuntime {
            m0,
            seeds,
            steps,
            samples,
            repeats,
            out,
        } => {
            if m0.is_empty() || m0.contains(&0) {
                return Err(Failure::Invalid("--m0 needs positive mode counts".into()));
            }
            let config = RuntimeConfig {
                m0,
                seeds,
                steps,
                n_obs_samples: samples,
                repeats,
            };
            let rows = experiment_runtime(&config).map_err(|e| Failure::Invalid(e.to_string()))?;
            write_runtime_csv(&rows, output(&out)?)?;
            for pair in rows.chunks(2) {
                if let [a, b] = pair {
                    eprintln!(
                        "M0={}: {} {:.4} s, {} {:.4} s, ratio {:.3}",
                        a.m0,
                        a.method,
                        a.mean_time_s,
                        b.method,
                        b.mean_time_s,
                        b.mean_time_s / a.mean_time_s
                    );
                }
            }
        }
        Command::ExperimentBudget { scenario, out } => {
            let s = scenario_or_fig2(scenario.as_deref())?;
            let report = experiment_budget(&s)?;
            write_budget_csv(&s, &report, output(&out)?)?;
            eprintln!(
                "budget {}, largest |L| {}, hypotheses usable {}",
                report.budget, report.l_max, report.k_max
            );
            for sel in &report.selections {
                eprintln!("{}: {}", selection_label(&sel.selection), verdict_label(&s, sel.verdict));
            }
            eprintln!("full evaluation: argmin {}", s.action_name(report.argmin));
        }
        Command::VerifyBounds { instances, seed, out } => {
            let rows = verify_bounds(instances, seed);
            write_check_csv(&rows, output(&out)?)?;
            let failed: Vec<&str> = rows.iter().filter(|r| r.violations > 0).map(|r| r.check).collect();
            if !failed.is_empty() {
                return Err(Failure::Assertion(format!("violations in {}", failed.join(", "))));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Invalid(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Assertion(msg)) => {
            eprintln!("internal assertion failed: {msg}");
            ExitCode::from(2)
        }
    }
}
