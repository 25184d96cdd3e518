//! `attachfuzz`: runs fuzzing campaigns against the simulated attach
//! procedure, compares campaigns and reproduces crash seeds.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use attachfuzz::campaign::{compare_campaigns, parse_key_values, run_campaign, CampaignConfig};
use attachfuzz::dissector::registry_table;
use attachfuzz::seed::Seed;
use attachfuzz::sim::{reproduce, Harness, ReproMode, SimConfig};
use clap::{Args, Parser, Subcommand};
use log::info;

const EXIT_USAGE: u8 = 1;
const EXIT_RUNTIME: u8 = 2;
const EXIT_NOT_REPRODUCED: u8 = 3;

/// Context marker for errors caused by bad arguments or configuration.
#[derive(Debug)]
struct Usage;

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("invalid configuration")
    }
}

#[derive(Debug, Parser)]
#[command(name = "attachfuzz", version, about = "Coverage-guided fuzzing of a simulated LTE attach procedure")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a campaign of sets x iterations and write CSV output.
    Run(Box<RunArgs>),
    /// Compare two campaigns (CSV file or campaign directory each).
    Compare {
        a: PathBuf,
        b: PathBuf,
        /// Campaign whose median final coverage counts as zero.
        #[arg(long)]
        baseline: Option<PathBuf>,
    },
    /// Replay a crash seed and check that the recorded crash recurs.
    Reproduce {
        seed: PathBuf,
        /// full regenerates patches from the recorded seed; replay-all
        /// delivers the recorded bytes.
        #[arg(long, default_value = "replay-all")]
        mode: ReproMode,
    },
    /// Print the message schema registry.
    DumpSchemas,
    /// Print the unfuzzed attach trace as MAC-layer hex lines.
    Trace,
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Flat `key = value` configuration file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// nofuzz, random or coverage.
    #[arg(long)]
    mode: Option<String>,
    /// DL or UL.
    #[arg(long)]
    direction: Option<String>,
    /// RRC or MAC.
    #[arg(long)]
    layer: Option<String>,
    /// grey or black.
    #[arg(long)]
    feedback: Option<String>,
    /// Initial expected number of mutated fields per packet.
    #[arg(long)]
    k: Option<String>,
    /// Step size of the coverage-driven probability updates.
    #[arg(long)]
    beta: Option<String>,
    /// Chance of replaying a stored packet instead of mutating.
    #[arg(long)]
    replay_prob: Option<String>,
    /// Chance of mutating; defaults to 1 - replay_prob.
    #[arg(long)]
    mut_prob: Option<String>,
    /// Iterations per set.
    #[arg(long)]
    iterations: Option<String>,
    /// Independent sets, seeded rng_seed + set index.
    #[arg(long)]
    sets: Option<String>,
    /// Base seed, decimal or 0x-prefixed hex.
    #[arg(long)]
    rng_seed: Option<String>,
    /// Directory for CSV files and crash seeds.
    #[arg(long)]
    out_dir: Option<String>,
    /// Also write per-iteration mutation rates and probability tables.
    #[arg(long)]
    diagnostics: bool,
}

impl RunArgs {
    fn config(&self) -> Result<CampaignConfig> {
        let mut pairs = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                parse_key_values(&text, &path.display().to_string())?
            }
            None => Vec::new(),
        };
        let flags = [
            ("mode", &self.mode),
            ("direction", &self.direction),
            ("layer", &self.layer),
            ("feedback", &self.feedback),
            ("k", &self.k),
            ("beta", &self.beta),
            ("replay_prob", &self.replay_prob),
            ("mut_prob", &self.mut_prob),
            ("iterations", &self.iterations),
            ("sets", &self.sets),
            ("rng_seed", &self.rng_seed),
            ("out_dir", &self.out_dir),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                pairs.push((key.to_string(), v.clone()));
            }
        }
        if self.diagnostics {
            pairs.push(("diagnostics".into(), "true".into()));
        }
        Ok(CampaignConfig::from_pairs(&pairs)?)
    }
}

fn run(args: &RunArgs) -> Result<ExitCode> {
    let config = args.config().context(Usage)?;
    info!("campaign config: {config:?}");
    let summary = run_campaign(&config)?;
    print!("{}", summary.summary_csv());
    if let Some(dir) = &config.out_dir {
        info!("results written to {}", dir.display());
    }
    Ok(ExitCode::SUCCESS)
}

fn reproduce_seed(path: &Path, mode: ReproMode) -> Result<ExitCode> {
    let seed = Seed::load(path)?;
    let outcome = reproduce(&seed, mode);
    let observed = outcome.bug.as_ref();
    let expected = seed.outcome.as_ref();
    let reproduced = match (expected, observed) {
        (Some(e), Some(o)) => e.bug_id == o.id && e.component == o.component,
        (None, Some(_)) => true,
        (_, None) => false,
    };
    match observed {
        Some(bug) => println!("{} {} {} after {} packets", bug.effect, bug.id, bug.component, outcome.packets_exchanged),
        None => println!("no crash ({:?} after {} packets)", outcome.terminal, outcome.packets_exchanged),
    }
    if reproduced {
        println!("reproduced ({mode})");
        Ok(ExitCode::SUCCESS)
    } else {
        if let Some(e) = expected {
            println!("not reproduced: expected {} {} {}", e.effect, e.bug_id, e.component);
        }
        Ok(ExitCode::from(EXIT_NOT_REPRODUCED))
    }
}

fn trace() -> Result<ExitCode> {
    let mut harness = Harness::new(SimConfig::default());
    for packet in harness.run_benign().trace {
        println!("{}", packet.hex_line());
    }
    Ok(ExitCode::SUCCESS)
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Run(args) => run(&args),
        Command::Compare { a, b, baseline } => {
            let comparison = compare_campaigns(&a, &b, baseline.as_deref())?;
            print!("{}", comparison.report());
            Ok(ExitCode::SUCCESS)
        }
        Command::Reproduce { seed, mode } => reproduce_seed(&seed, mode),
        Command::DumpSchemas => {
            print!("{}", registry_table());
            Ok(ExitCode::SUCCESS)
        }
        Command::Trace => trace(),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            let usage = e.downcast_ref::<Usage>().is_some()
                || e.downcast_ref::<attachfuzz::Error>()
                    .is_some_and(|e| matches!(e, attachfuzz::Error::Config(_)));
            ExitCode::from(if usage { EXIT_USAGE } else { EXIT_RUNTIME })
        }
    }
}
