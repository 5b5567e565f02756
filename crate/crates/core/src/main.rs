use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use stratasim::harness;
use stratasim::{Alternative, ExperimentConfig, Result};

#[derive(Parser, Debug)]
#[command(name = "stratasim", version, about = "Island-model evolution with hereditary stratigraphy phylogeny tracking")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate one experiment and write genomes.csv, run_summary.json and pedigree.csv.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Overrides the seed in the config.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Rebuild a phylogeny from a genome export.
    Reconstruct {
        genomes: PathBuf,
        /// Output phylogeny CSV.
        #[arg(long)]
        out: PathBuf,
        /// Number of genomes to subsample uniformly; all by default.
        #[arg(long)]
        subsample: Option<usize>,
        /// Subsampling seed; defaults to the config seed, else 0.
        #[arg(long)]
        seed: Option<u64>,
        /// Experiment config supplying the surface layout; defaults to the
        /// run_summary.json next to the genome file.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Trie descent past ranks a genome no longer holds:
        /// skip-uninformative or conservative.
        #[arg(long, default_value = "skip-uninformative")]
        descent: String,
    },
    /// Compute phylometrics for a phylogeny CSV.
    Metrics {
        phylogeny: PathBuf,
        /// Output JSON.
        #[arg(long)]
        out: PathBuf,
    },
    /// Mann-Whitney U test of one metric across two directories of metric files.
    Compare {
        dir_a: PathBuf,
        dir_b: PathBuf,
        #[arg(long)]
        metric: String,
        /// less (A<B), greater (A>B) or two-sided.
        #[arg(long, default_value = "greater")]
        alternative: String,
        /// Output JSON; printed to stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Measure simulation throughput.
    Bench {
        #[arg(long)]
        config: PathBuf,
        /// Output JSON; printed to stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Check surface site assignment against the replay oracle and the gap bound.
    SurfaceCheck {
        #[arg(long, default_value_t = 1 << 16)]
        max_depth: u64,
    },
}

fn load_config(path: &Path, seed: Option<u64>) -> Result<ExperimentConfig> {
    let mut config = ExperimentConfig::load(path)?;
    if let Some(seed) = seed {
        config.seed = seed;
    }
    Ok(config)
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn dispatch(command: Command) -> Result<bool> {
    match command {
        Command::Run { config, out, seed } => {
            let summary = harness::cmd_run(&load_config(&config, seed)?, &out)?;
            eprintln!(
                "{} rounds, {} PE-generations in {:.3}s",
                summary.rounds, summary.pe_generations, summary.wall_seconds
            );
        }
        Command::Reconstruct { genomes, out, subsample, seed, config, descent } => {
            let (surface, config_seed) = match config {
                Some(path) => {
                    let config = ExperimentConfig::load(&path)?;
                    (Some(config.surface), Some(config.seed))
                }
                None => (None, None),
            };
            let surface = harness::resolve_surface(&genomes, surface)?;
            let seed = seed.or(config_seed).unwrap_or(0);
            let table = harness::cmd_reconstruct(&genomes, surface, subsample, seed, descent.parse()?, &out)?;
            eprintln!("{} nodes", table.len());
        }
        Command::Metrics { phylogeny, out } => {
            harness::cmd_metrics(&phylogeny, &out)?;
        }
        Command::Compare { dir_a, dir_b, metric, alternative, out } => {
            let alternative: Alternative = alternative.parse()?;
            let comparison = harness::cmd_compare(&dir_a, &dir_b, &metric, alternative, out.as_deref())?;
            if out.is_none() {
                print_json(&comparison)?;
            }
        }
        Command::Bench { config, out, seed } => {
            let report = harness::cmd_bench(&load_config(&config, seed)?, out.as_deref())?;
            if out.is_none() {
                print_json(&report)?;
            }
            if !report.meets_target {
                eprintln!(
                    "warning: {:.0} replications/s is below the {:.0} target",
                    report.replications_per_sec, report.target_replications_per_sec
                );
            }
        }
        Command::SurfaceCheck { max_depth } => {
            let outcomes = harness::surface_check(max_depth);
            for c in &outcomes {
                println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            return Ok(outcomes.iter().all(|c| c.passed));
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match dispatch(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(u8::try_from(e.exit_code()).unwrap_or(2))
        }
    }
}

