//! Orchestration behind the command-line subcommands.

use std::collections::HashMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::island::PedigreeRecord;
use crate::io;
use crate::mesh::{self, RunStats, SampledGenome, SimState};
use crate::metrics::{self, MetricsReport};
use crate::phylogeny::PhylogenyTable;
use crate::stats::{self, Alternative, MannWhitney};
use crate::surface::{self, SurfaceConfig, SurfacePolicy};
use crate::trie::{self, DescentRule};

pub const GENOMES_FILE: &str = "genomes.csv";
pub const PEDIGREE_FILE: &str = "pedigree.csv";
pub const SUMMARY_FILE: &str = "run_summary.json";

/// Informational throughput target for [`cmd_bench`], in agent replications per second.
pub const TARGET_REPLICATIONS_PER_SEC: f64 = 1e5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub mesh_width: u32,
    pub mesh_height: u32,
    pub seed: u64,
    pub rounds: u64,
    pub wall_seconds: f64,
    pub pe_generations: u64,
    pub pe_generations_per_sec: f64,
    pub total_replications: u64,
    pub pop_size: usize,
    pub halt_generations: u64,
    pub surface: SurfaceConfig,
    pub sample_per_pe: usize,
    pub subsample_total: Option<usize>,
}

/// Everything a finished simulation produced, before it is written out.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub summary: RunSummary,
    pub genomes: Vec<SampledGenome>,
    pub pedigree: Option<Vec<PedigreeRecord>>,
    pub sim: SimState,
}

/// Runs an experiment to completion and samples the end-state genomes.
pub fn execute(config: &ExperimentConfig) -> Result<RunOutput> {
    config.validate()?;
    let mut sim = mesh::init_sim(config.mesh, config.pe, config.treatment, config.surface, config.seed, config.exact_tracking)?;
    let stats = mesh::run(&mut sim)?;
    let genomes = mesh::sample_genomes(&sim, config.sample_per_pe(), &mut mesh::sampling_rng(config.seed))?;
    let summary = summarize(config, &stats);
    Ok(RunOutput { summary, genomes, pedigree: sim.pedigree(), sim })
}

fn summarize(config: &ExperimentConfig, stats: &RunStats) -> RunSummary {
    RunSummary {
        mesh_width: config.mesh.width,
        mesh_height: config.mesh.height,
        seed: config.seed,
        rounds: stats.rounds,
        wall_seconds: stats.wall_seconds,
        pe_generations: stats.pe_generations,
        pe_generations_per_sec: stats.pe_generations_per_sec,
        total_replications: stats.total_replications,
        pop_size: config.pe.pop_size,
        halt_generations: config.mesh.halt_generations,
        surface: config.surface,
        sample_per_pe: config.sample_per_pe(),
        subsample_total: config.subsample_total,
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(|e| {
        std::io::Error::new(e.kind(), format!("cannot create {}: {e}", path.display()))
    })?))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).map_err(|e| {
        std::io::Error::new(e.kind(), format!("cannot open {}: {e}", path.display()))
    })?))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// `run`: simulate and write `genomes.csv`, `run_summary.json` and, with
/// exact tracking, `pedigree.csv` into `out_dir`.
pub fn cmd_run(config: &ExperimentConfig, out_dir: &Path) -> Result<RunSummary> {
    let output = execute(config)?;
    fs::create_dir_all(out_dir)?;
    io::write_genomes(create(&out_dir.join(GENOMES_FILE))?, &output.genomes)?;
    if let Some(pedigree) = &output.pedigree {
        io::write_pedigree(create(&out_dir.join(PEDIGREE_FILE))?, pedigree)?;
    }
    write_json(&out_dir.join(SUMMARY_FILE), &output.summary)?;
    Ok(output.summary)
}

/// Taxon label used for a sampled genome: `x-y-slot`.
pub fn taxon_label(sample: &SampledGenome) -> String {
    format!("{}-{}-{}", sample.coordinate.0, sample.coordinate.1, sample.slot)
}

/// Label-to-lineage map for scoring reconstructions against a pedigree.
pub fn lineage_map(samples: &[SampledGenome]) -> HashMap<String, u64> {
    samples.iter().map(|s| (taxon_label(s), s.genome.lineage_id)).collect()
}

/// Uniform subsample without replacement, kept in input order.
pub fn subsample<T: Clone>(items: &[T], count: usize, seed: u64) -> Result<Vec<T>> {
    if count > items.len() {
        return Err(Error::Argument(format!("subsample of {count} exceeds the {} available rows", items.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picks = index::sample(&mut rng, items.len(), count).into_vec();
    picks.sort_unstable();
    Ok(picks.into_iter().map(|i| items[i].clone()).collect())
}

/// Subsamples (optionally), builds the trie, assigns naive origin times.
pub fn reconstruct_samples(
    samples: &[SampledGenome],
    subsample_size: Option<usize>,
    seed: u64,
    rule: DescentRule,
) -> Result<PhylogenyTable> {
    let chosen = match subsample_size {
        Some(n) => subsample(samples, n, seed)?,
        None => samples.to_vec(),
    };
    let annotations: Vec<_> = chosen.iter().map(|s| s.genome.annotation.clone()).collect();
    let labels: Vec<String> = chosen.iter().map(taxon_label).collect();
    trie::reconstruct(&annotations, &labels, rule)
}

/// Surface shape for a genome file: explicit, else from the `run_summary.json` beside it.
pub fn resolve_surface(genomes_path: &Path, explicit: Option<SurfaceConfig>) -> Result<SurfaceConfig> {
    if let Some(surface) = explicit {
        surface.validate()?;
        return Ok(surface);
    }
    let summary_path = genomes_path.parent().unwrap_or(Path::new(".")).join(SUMMARY_FILE);
    let text = fs::read_to_string(&summary_path).map_err(|_| {
        Error::Config(format!(
            "no surface configuration given and {} is unreadable; pass --config",
            summary_path.display()
        ))
    })?;
    let summary: RunSummary = serde_json::from_str(&text)
        .map_err(|e| Error::Data(format!("{}: {e}", summary_path.display())))?;
    summary.surface.validate()?;
    Ok(summary.surface)
}

/// `reconstruct`: genome file to phylogeny CSV.
pub fn cmd_reconstruct(
    genomes_path: &Path,
    surface: SurfaceConfig,
    subsample_size: Option<usize>,
    seed: u64,
    rule: DescentRule,
    out: &Path,
) -> Result<PhylogenyTable> {
    let samples = io::read_genomes(open(genomes_path)?, surface)?;
    if samples.is_empty() {
        return Err(Error::Data(format!("{} holds no genomes", genomes_path.display())));
    }
    let table = reconstruct_samples(&samples, subsample_size, seed, rule)?;
    io::write_phylogeny(create(out)?, &table)?;
    Ok(table)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsFile {
    #[serde(flatten)]
    pub report: MetricsReport,
    /// Always `"exact"`: pairwise sums come from per-edge leaf counts.
    pub mode: String,
    pub pair_budget: Option<u64>,
    pub input_digest: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    io::encode_hex(&Sha256::digest(bytes))
}

/// `metrics`: phylogeny CSV to metrics JSON.
pub fn cmd_metrics(phylogeny_path: &Path, out: &Path) -> Result<MetricsFile> {
    let bytes = fs::read(phylogeny_path)?;
    let table = io::read_phylogeny(bytes.as_slice())?;
    let report = metrics::compute_report(&table).map_err(|e| match e {
        Error::Argument(msg) => Error::Data(msg),
        other => other,
    })?;
    let file = MetricsFile {
        report,
        mode: "exact".into(),
        pair_budget: None,
        input_digest: format!("sha256:{}", sha256_hex(&bytes)),
    };
    write_json(out, &file)?;
    Ok(file)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub metric: String,
    pub files_a: Vec<PathBuf>,
    pub files_b: Vec<PathBuf>,
    pub values_a: Vec<f64>,
    pub values_b: Vec<f64>,
    #[serde(flatten)]
    pub test: MannWhitney,
}

/// Minimum replicate count per side for [`cmd_compare`].
pub const MIN_REPLICATES: usize = 3;

/// Reads `metric` from every `*.json` file in `dir`, in file-name order.
pub fn collect_metric(dir: &Path, metric: &str) -> Result<(Vec<PathBuf>, Vec<f64>)> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::Data(format!("cannot list {}: {e}", dir.display())))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|ext| ext == "json"))
        .collect();
    files.sort();
    let values = files
        .iter()
        .map(|path| {
            let text = fs::read_to_string(path)?;
            let doc: serde_json::Value =
                serde_json::from_str(&text).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
            doc.get(metric)
                .and_then(serde_json::Value::as_f64)
                .ok_or_else(|| Error::Data(format!("{} has no numeric {metric:?}", path.display())))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok((files, values))
}

/// `compare`: one-sided (or two-sided) Mann–Whitney U between two replicate sets.
pub fn cmd_compare(dir_a: &Path, dir_b: &Path, metric: &str, alternative: Alternative, out: Option<&Path>) -> Result<Comparison> {
    if !metrics::METRIC_NAMES.contains(&metric) {
        return Err(Error::Argument(format!(
            "unknown metric {metric:?}; expected one of {:?}",
            metrics::METRIC_NAMES
        )));
    }
    let (files_a, values_a) = collect_metric(dir_a, metric)?;
    let (files_b, values_b) = collect_metric(dir_b, metric)?;
    for (dir, n) in [(dir_a, values_a.len()), (dir_b, values_b.len())] {
        if n < MIN_REPLICATES {
            return Err(Error::Data(format!(
                "{} holds {n} metric files; at least {MIN_REPLICATES} replicates are required",
                dir.display()
            )));
        }
    }
    let test = stats::mann_whitney_u(&values_a, &values_b, alternative)?;
    let comparison = Comparison { metric: metric.to_string(), files_a, files_b, values_a, values_b, test };
    if let Some(out) = out {
        write_json(out, &comparison)?;
    }
    Ok(comparison)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub mesh_width: u32,
    pub mesh_height: u32,
    pub pop_size: usize,
    pub warmup_rounds: u64,
    pub measured_rounds: u64,
    pub measured_pe_generations: u64,
    pub wall_seconds: f64,
    pub pe_generations_per_sec: f64,
    pub replications_per_sec: f64,
    pub replications_per_day: f64,
    pub target_replications_per_sec: f64,
    pub meets_target: bool,
}

/// `bench`: warm up for a tenth of the run, then time the remainder.
pub fn cmd_bench(config: &ExperimentConfig, out: Option<&Path>) -> Result<BenchReport> {
    config.validate()?;
    let mut sim = mesh::init_sim(config.mesh, config.pe, config.treatment, config.surface, config.seed, false)?;
    let warmup_rounds = (config.mesh.halt_generations / 10).max(1);
    for _ in 0..warmup_rounds {
        if sim.all_halted() {
            break;
        }
        sim.step_round()?;
    }
    let (first_round, first_generations) = (sim.round, sim.pe_generations());
    let start = Instant::now();
    while !sim.all_halted() {
        sim.step_round()?;
    }
    let wall_seconds = start.elapsed().as_secs_f64().max(1e-9);
    let measured_pe_generations = sim.pe_generations() - first_generations;
    let pe_generations_per_sec = measured_pe_generations as f64 / wall_seconds;
    let replications_per_sec = pe_generations_per_sec * config.pe.pop_size as f64;
    let report = BenchReport {
        mesh_width: config.mesh.width,
        mesh_height: config.mesh.height,
        pop_size: config.pe.pop_size,
        warmup_rounds: first_round,
        measured_rounds: sim.round - first_round,
        measured_pe_generations,
        wall_seconds,
        pe_generations_per_sec,
        replications_per_sec,
        replications_per_day: replications_per_sec * 86_400.0,
        target_replications_per_sec: TARGET_REPLICATIONS_PER_SEC,
        meets_target: replications_per_sec >= TARGET_REPLICATIONS_PER_SEC,
    };
    if let Some(out) = out {
        write_json(out, &report)?;
    }
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// `surface-check`: oracle equivalence for both policies and the steady gap bound.
pub fn surface_check(max_depth: u64) -> Vec<CheckOutcome> {
    let mut outcomes = Vec::new();
    for policy in [SurfacePolicy::Steady, SurfacePolicy::Ring] {
        for sites in [4u64, 8, 64, 256] {
            let result = surface::check_oracle_equivalence(policy, sites, max_depth);
            outcomes.push(CheckOutcome {
                name: format!("oracle-equivalence {policy} S={sites} T<={max_depth}"),
                passed: result.is_ok(),
                detail: result.err().unwrap_or_else(|| "agrees with replay".into()),
            });
        }
    }
    for sites in [4u64, 8, 64] {
        let outcome = match surface::count_steady_gap_violations(sites, max_depth) {
            Ok(0) => (true, "no violations".to_string()),
            Ok(n) => (false, format!("{n} depths violate the bound")),
            Err(e) => (false, e.to_string()),
        };
        outcomes.push(CheckOutcome {
            name: format!("steady-gap-bound S={sites} T<={max_depth}"),
            passed: outcome.0,
            detail: outcome.1,
        });
    }
    outcomes
}
