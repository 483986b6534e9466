use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use repsim::error::{Error, Result};
use repsim::pipeline::{execute, plan, Resolved, RunConfig, RunOptions, RunOutcome, Stage};

#[derive(Parser)]
#[command(name = "repsim", version, about = "Representational similarity across models and datasets")]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true, default_value = "repsim.toml")]
    config: PathBuf,
    /// Worker threads (0 = all cores). Outputs do not depend on this.
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    /// Overrides `sampling.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Print the task plan and exit.
    #[arg(long, global = true)]
    dry_run: bool,
    /// Record failing tasks in the manifest and keep going.
    #[arg(long, global = true)]
    allow_partial: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Check the config and that every embedding loads.
    Validate,
    /// Similarity matrices per dataset plus their mean and std.
    Sim,
    /// Cross-dataset consistency for every model-set pair.
    Consistency,
    /// Stratified subsample convergence.
    Convergence,
    /// Bootstrap stability of pairwise similarities.
    Bootstrap,
    /// Linear probe accuracies.
    Probe,
    /// Correlation between similarity and probe accuracy gaps.
    GapCorr,
    /// Similarity, consistency and, when enabled, probes and gap correlations.
    Report,
}

impl Command {
    fn stage(self) -> Stage {
        match self {
            Command::Validate => Stage::Validate,
            Command::Sim => Stage::Sim,
            Command::Consistency => Stage::Consistency,
            Command::Convergence => Stage::Convergence,
            Command::Bootstrap => Stage::Bootstrap,
            Command::Probe => Stage::Probe,
            Command::GapCorr => Stage::GapCorr,
            Command::Report => Stage::Report,
        }
    }
}

fn run(cli: &Cli) -> Result<RunOutcome> {
    let mut config = RunConfig::load(&cli.config)?;
    if let Some(seed) = cli.seed {
        config.sampling.seed = seed;
    }
    let resolved = Resolved::new(config)?;
    let stage = cli.command.stage();
    if cli.dry_run {
        for (i, task) in plan(&resolved, stage).iter().enumerate() {
            println!("{i:>6}  {task}");
        }
        return Ok(RunOutcome::default());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.jobs)
        .build()
        .map_err(|e| Error::config("jobs", e.to_string()))?;
    let opts = RunOptions {
        allow_partial: cli.allow_partial,
        jobs: pool.current_num_threads(),
    };
    pool.install(|| execute(&resolved, stage, opts))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(outcome) => {
            if !cli.dry_run {
                eprintln!("{} files written", outcome.files.len());
            }
            for f in &outcome.failures {
                eprintln!("failed: {}: {}", f.task, f.error);
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
