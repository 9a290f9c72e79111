//! Command-line entry point. Every run writes `manifest.json` next to its
//! outputs; `replay` re-executes a manifest and reproduces the outputs
//! byte for byte.

mod manifest;

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use rayon::prelude::*;
use serde::{de::DeserializeOwned, Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::gibbs::{geweke_diagnostic, run_chain, summarize_selection, PriorConfig, RhoGrid, Schedule, Variant};
use crate::hsm::{partition_and_fit, PartitionConfig};
use crate::io;
use crate::seeds;
use crate::sim::{aggregate, preprocess_genes, run_benchmark, simulate_dataset, BenchmarkConfig, SimSetting};

pub use manifest::{file_digest, InputDigest, RunManifest};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_IO: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "dreamespase", version, about = "Spatial spike-and-slab regression on sub-region outcomes")]
pub struct Cli {
    /// Master seed; every random stream derives from it.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (results do not depend on it).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Command configuration JSON; omitted fields take their defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Log more (repeat for debug output).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit the point-process interaction model on each grid cell of each biopsy.
    HsmFit {
        /// `biopsy_id,x,y,type` cell table.
        #[arg(long)]
        cells: PathBuf,
    },
    /// Run the Gibbs sampler and summarise selections.
    Fit {
        /// `biopsy_id,subregion_id,y` (or per-subregion `theta_mean` output).
        #[arg(long)]
        outcomes: PathBuf,
        /// `biopsy_id,node_a,node_b` edge list.
        #[arg(long)]
        adjacency: PathBuf,
        /// `biopsy_id,<covariate>,…` table.
        #[arg(long)]
        covariates: PathBuf,
    },
    /// Write simulated data sets with their ground truth.
    Simulate,
    /// Run the selection benchmark and write metric tables.
    Evaluate,
    /// Combine correlated genes into gene-set covariates.
    Preprocess {
        /// `gene,group,<sample>,…` expression table.
        #[arg(long)]
        genes: PathBuf,
    },
    /// Geweke diagnostic of a log-likelihood trace.
    Diagnose {
        /// `iteration,log_likelihood` trace.
        #[arg(long)]
        trace: PathBuf,
    },
    /// Re-run the command recorded in a manifest.
    Replay {
        manifest: PathBuf,
    },
}

/// Maps an error to the process exit code.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Io(_) => EXIT_IO,
        Error::Csv(c) if c.is_io_error() => EXIT_IO,
        Error::Validation(_)
        | Error::Domain(_)
        | Error::DimensionMismatch { .. }
        | Error::Empty(_)
        | Error::Csv(_)
        | Error::Json(_) => EXIT_VALIDATION,
        Error::SingularPrecision { .. }
        | Error::NotPositiveDefinite { .. }
        | Error::Degenerate(_)
        | Error::Unidentified(_)
        | Error::NonConvergence(_)
        | Error::Numerical(_) => EXIT_NUMERICAL,
    }
}

/// Parses arguments, runs the command and returns the exit code.
pub fn main_with_args<I: IntoIterator<Item = T>, T: Into<OsString> + Clone>(args: I) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    match run(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

/// A command with everything needed to execute it.
#[derive(Debug, Clone)]
pub struct Job {
    pub command: String,
    pub seed: u64,
    pub config: Value,
    pub inputs: BTreeMap<String, PathBuf>,
}

pub fn run(cli: Cli) -> Result<()> {
    let out = cli.out.clone().ok_or_else(|| Error::Validation("--out <dir> is required".into()))?;
    let user_config = match &cli.config {
        Some(p) => Some(read_value(p)?),
        None => None,
    };
    let (job, expected) = match cli.command {
        Command::Replay { manifest } => {
            let m: RunManifest = io::read_json(&manifest)?;
            m.check_inputs()?;
            let inputs = m.inputs.iter().map(|(k, v)| (k.clone(), v.path.clone())).collect();
            let job = Job { command: m.command.clone(), seed: m.seed, config: m.config.clone(), inputs };
            (job, Some(m))
        }
        other => {
            let (name, inputs): (&str, Vec<(&str, PathBuf)>) = match other {
                Command::HsmFit { cells } => ("hsm-fit", vec![("cells", cells)]),
                Command::Fit { outcomes, adjacency, covariates } => {
                    ("fit", vec![("outcomes", outcomes), ("adjacency", adjacency), ("covariates", covariates)])
                }
                Command::Simulate => ("simulate", vec![]),
                Command::Evaluate => ("evaluate", vec![]),
                Command::Preprocess { genes } => ("preprocess", vec![("genes", genes)]),
                Command::Diagnose { trace } => ("diagnose", vec![("trace", trace)]),
                Command::Replay { .. } => unreachable!(),
            };
            let config = user_config.unwrap_or(Value::Object(Default::default()));
            // a fit config may carry its own seed; the flag wins
            let seed = cli.seed.or_else(|| config.get("seed").and_then(Value::as_u64)).unwrap_or(0);
            let job = Job {
                command: name.into(),
                seed,
                config,
                inputs: inputs.into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
            };
            (job, None)
        }
    };
    let manifest = with_threads(cli.threads, || execute(&job, &out, cli.threads))?;
    if let Some(expected) = expected {
        if manifest.outputs != expected.outputs {
            log::warn!("replayed outputs differ from the recorded digests");
        }
    }
    Ok(())
}

fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    match threads {
        Some(0) => Err(Error::Validation("--threads must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Validation(format!("thread pool: {e}")))?
            .install(f),
        None => f(),
    }
}

fn read_value(path: &Path) -> Result<Value> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Validation(format!("{}: {e}", path.display())))
}

/// Deserialises a command configuration, reporting the failing field path.
pub fn parse_config<T: DeserializeOwned>(value: &Value) -> Result<T> {
    serde_path_to_error::deserialize(value.clone())
        .map_err(|e| Error::Validation(format!("config: at `{}`: {}", e.path(), e.inner())))
}

/// Output directory built beside the target and moved into place only
/// when the command succeeds.
struct Stage {
    target: PathBuf,
    dir: PathBuf,
    created: bool,
}

impl Stage {
    fn new(target: &Path) -> Self {
        let name = target.file_name().map_or_else(|| "out".into(), |n| n.to_string_lossy().into_owned());
        let dir = target.with_file_name(format!(".{name}.staging-{}", std::process::id()));
        Self { target: target.to_path_buf(), dir, created: false }
    }

    /// Path for an output file, creating directories on first use.
    fn file(&mut self, rel: &str) -> Result<PathBuf> {
        if !self.created {
            if self.dir.exists() {
                std::fs::remove_dir_all(&self.dir)?;
            }
            std::fs::create_dir_all(&self.dir)?;
            self.created = true;
        }
        let p = self.dir.join(rel);
        if let Some(parent) = p.parent() {
            std::fs::create_dir_all(parent)?;
        }
        Ok(p)
    }

    fn commit(mut self) -> Result<()> {
        if !self.target.exists() {
            std::fs::rename(&self.dir, &self.target)?;
        } else {
            for entry in std::fs::read_dir(&self.dir)? {
                let entry = entry?;
                let dest = self.target.join(entry.file_name());
                if dest.is_dir() {
                    std::fs::remove_dir_all(&dest)?;
                }
                std::fs::rename(entry.path(), dest)?;
            }
            std::fs::remove_dir(&self.dir)?;
        }
        self.created = false;
        Ok(())
    }
}

impl Drop for Stage {
    fn drop(&mut self) {
        if self.created {
            let _ = std::fs::remove_dir_all(&self.dir);
        }
    }
}

/// Runs a job into `out` and returns the manifest written with it.
pub fn execute(job: &Job, out: &Path, threads: Option<usize>) -> Result<RunManifest> {
    let start = Instant::now();
    let mut inputs = BTreeMap::new();
    for (role, path) in &job.inputs {
        inputs.insert(role.clone(), InputDigest { path: path.clone(), sha256: file_digest(path)? });
    }
    let mut stage = Stage::new(out);
    let mut timings = BTreeMap::new();
    let config = match job.command.as_str() {
        "hsm-fit" => cmd_hsm_fit(job, &mut stage, &mut timings)?,
        "fit" => cmd_fit(job, &mut stage, &mut timings)?,
        "simulate" => cmd_simulate(job, &mut stage, &mut timings)?,
        "evaluate" => cmd_evaluate(job, &mut stage, &mut timings)?,
        "preprocess" => cmd_preprocess(job, &mut stage, &mut timings)?,
        "diagnose" => cmd_diagnose(job, &mut stage, &mut timings)?,
        other => return Err(Error::Validation(format!("unknown command `{other}`"))),
    };
    let outputs = manifest::digest_tree(&stage.dir)?;
    timings.insert("total_seconds".into(), start.elapsed().as_secs_f64());
    let manifest = RunManifest {
        command: job.command.clone(),
        version: env!("CARGO_PKG_VERSION").into(),
        seed: job.seed,
        threads,
        config,
        inputs,
        outputs,
        timings,
    };
    io::write_json(&stage.file("manifest.json")?, &manifest)?;
    stage.commit()?;
    Ok(manifest)
}

fn input<'a>(job: &'a Job, role: &str) -> Result<&'a Path> {
    job.inputs
        .get(role)
        .map(PathBuf::as_path)
        .ok_or_else(|| Error::Validation(format!("`{}` needs input `{role}`", job.command)))
}

fn resolved<T: Serialize>(config: &T) -> Result<Value> {
    Ok(serde_json::to_value(config)?)
}

fn timed<T>(timings: &mut BTreeMap<String, f64>, name: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
    let start = Instant::now();
    let out = f()?;
    timings.insert(format!("{name}_seconds"), start.elapsed().as_secs_f64());
    Ok(out)
}

// ---------------------------------------------------------------- hsm-fit

#[derive(Debug, Serialize)]
struct HsmDropped {
    biopsies: Vec<(String, String)>,
    subregions: BTreeMap<String, Vec<usize>>,
}

fn cmd_hsm_fit(job: &Job, stage: &mut Stage, timings: &mut BTreeMap<String, f64>) -> Result<Value> {
    let cfg: PartitionConfig = parse_config(&job.config)?;
    if cfg.rows == 0 || cfg.cols == 0 || !(cfg.r > 0.0) {
        return Err(Error::Validation("config: rows, cols and r must be positive".into()));
    }
    let patterns = io::read_cells(input(job, "cells")?)?;
    let fits: Vec<(String, Result<crate::hsm::PartitionFit>)> = timed(timings, "fitting", || {
        Ok(patterns
            .par_iter()
            .map(|(id, pat)| {
                if pat.n2() == 0 || pat.n1() == 0 {
                    return (id.clone(), Err(Error::Empty("one cell type is absent".into())));
                }
                (id.clone(), partition_and_fit(pat, &cfg, seeds::derive_seed(job.seed, "hsm-fit"), id))
            })
            .collect())
    })?;
    let mut kept = Vec::new();
    let mut dropped = HsmDropped { biopsies: Vec::new(), subregions: BTreeMap::new() };
    for (id, fit) in fits {
        match fit {
            Ok(f) => {
                if !f.dropped.is_empty() {
                    dropped.subregions.insert(id.clone(), f.dropped.clone());
                }
                kept.push((id, f));
            }
            Err(Error::Empty(msg)) => {
                log::warn!("biopsy {id} dropped: {msg}");
                dropped.biopsies.push((id, msg));
            }
            Err(e) => return Err(e),
        }
    }
    if kept.is_empty() {
        return Err(Error::Empty("every biopsy was dropped".into()));
    }
    io::write_hsm_output(&stage.file("subregions.csv")?, kept.iter().map(|(id, f)| (id.as_str(), f.cells.as_slice())))?;
    io::write_adjacency(&stage.file("adjacency.csv")?, kept.iter().map(|(id, f)| (id.as_str(), &f.adjacency)))?;
    io::write_json(&stage.file("dropped.json")?, &dropped)?;
    resolved(&cfg)
}

// ---------------------------------------------------------------- fit

/// Configuration of `fit`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    pub variant: Variant,
    pub phi: f64,
    pub rho_grid: RhoGrid,
    pub sigma2_spike: f64,
    pub sigma2_slab: f64,
    pub xi2_spike: f64,
    pub xi2_slab: f64,
    pub a_tau: f64,
    pub b_tau: f64,
    pub a_nu: f64,
    pub b_nu: f64,
    pub beta_gamma: (f64, f64),
    pub beta_d: (f64, f64),
    pub standardize: bool,
    /// Selection threshold on inclusion probabilities.
    pub threshold: f64,
    /// Geweke window fractions of the post-burn-in trace.
    pub geweke_first: f64,
    pub geweke_last: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        let p = PriorConfig::default();
        Self {
            iterations: 20_000,
            burn_in: 10_000,
            thin: 10,
            seed: 0,
            variant: Variant::Spatial,
            phi: p.phi,
            rho_grid: p.rho_grid,
            sigma2_spike: p.sigma2_spike,
            sigma2_slab: p.sigma2_slab,
            xi2_spike: p.xi2_spike,
            xi2_slab: p.xi2_slab,
            a_tau: p.a_tau,
            b_tau: p.b_tau,
            a_nu: p.a_nu,
            b_nu: p.b_nu,
            beta_gamma: p.beta_gamma,
            beta_d: p.beta_d,
            standardize: true,
            threshold: 0.5,
            geweke_first: 0.1,
            geweke_last: 0.5,
        }
    }
}

impl FitConfig {
    pub fn prior(&self) -> PriorConfig {
        PriorConfig {
            sigma2_spike: self.sigma2_spike,
            sigma2_slab: self.sigma2_slab,
            xi2_spike: self.xi2_spike,
            xi2_slab: self.xi2_slab,
            a_tau: self.a_tau,
            b_tau: self.b_tau,
            a_nu: self.a_nu,
            b_nu: self.b_nu,
            phi: self.phi,
            rho_grid: self.rho_grid.clone(),
            beta_gamma: self.beta_gamma,
            beta_d: self.beta_d,
        }
    }

    pub fn schedule(&self) -> Schedule {
        Schedule { iterations: self.iterations, burn_in: self.burn_in, thin: self.thin, seed: self.seed }
    }

    pub fn validate(&self) -> Result<()> {
        self.prior().validate().map_err(|e| Error::Validation(format!("config: {e}")))?;
        self.schedule().validate().map_err(|e| Error::Validation(format!("config: {e}")))?;
        if !(0.0..1.0).contains(&self.threshold) {
            return Err(Error::Validation("config: threshold must lie in [0, 1)".into()));
        }
        let (a, b) = (self.geweke_first, self.geweke_last);
        if !(a > 0.0 && b > 0.0 && a + b <= 1.0) {
            return Err(Error::Validation("config: geweke fractions must be positive and sum to at most 1".into()));
        }
        Ok(())
    }
}

fn cmd_fit(job: &Job, stage: &mut Stage, timings: &mut BTreeMap<String, f64>) -> Result<Value> {
    let mut cfg: FitConfig = parse_config(&job.config)?;
    cfg.seed = job.seed;
    cfg.validate()?;
    let covariates = io::read_covariates(input(job, "covariates")?)?;
    let outcomes = io::read_outcomes(input(job, "outcomes")?)?;
    let edges = io::read_adjacency(input(job, "adjacency")?)?;
    let biopsies = io::assemble_biopsies(&outcomes, &edges, &covariates)?;

    let schedule = cfg.schedule();
    let post = timed(timings, "sampling", || run_chain(&biopsies, &cfg.prior(), schedule, cfg.variant, cfg.standardize))?;
    let mut report = summarize_selection(&post, cfg.threshold)?;
    report.covariates = covariates.names.clone();
    report.geweke = match geweke_diagnostic(&post.log_likelihood[schedule.burn_in..], cfg.geweke_first, cfg.geweke_last) {
        Ok(g) => Some(g),
        Err(e) => {
            log::warn!("Geweke diagnostic unavailable: {e}");
            None
        }
    };
    for (family, draws) in io::posterior_families(&post, &covariates.names) {
        io::write_long(&stage.file(&format!("posterior_{family}.csv"))?, &draws)?;
    }
    io::write_trace(&stage.file("loglik.csv")?, &post.log_likelihood)?;
    io::write_json(&stage.file("selection.json")?, &report)?;
    resolved(&cfg)
}

// ---------------------------------------------------------------- simulate

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    /// Design; its `seed` is replaced per replicate from `--seed`.
    pub setting: SimSetting,
    pub replicates: usize,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self { setting: SimSetting::default(), replicates: 1 }
    }
}

fn cmd_simulate(job: &Job, stage: &mut Stage, timings: &mut BTreeMap<String, f64>) -> Result<Value> {
    let mut cfg: SimulateConfig = parse_config(&job.config)?;
    cfg.setting.seed = 0;
    cfg.setting.validate().map_err(|e| Error::Validation(format!("config: setting: {e}")))?;
    if cfg.replicates == 0 {
        return Err(Error::Validation("config: replicates must be at least 1".into()));
    }
    let reps = timed(timings, "simulation", || {
        (0..cfg.replicates)
            .into_par_iter()
            .map(|r| {
                let seed = seeds::derive_seed(job.seed, &format!("simulate/rep-{r}"));
                simulate_dataset(&SimSetting { seed, ..cfg.setting.clone() })
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let names: Vec<String> = (1..=cfg.setting.p).map(|j| format!("x{j}")).collect();
    for (r, rep) in reps.iter().enumerate() {
        let dir = format!("rep_{r:03}");
        io::write_outcomes(&stage.file(&format!("{dir}/outcomes.csv"))?, &rep.biopsies)?;
        io::write_adjacency(
            &stage.file(&format!("{dir}/adjacency.csv"))?,
            rep.biopsies.iter().map(|b| (b.id.as_str(), b.adjacency.as_ref())),
        )?;
        let table = io::CovariateTable {
            names: names.clone(),
            rows: rep.biopsies.iter().map(|b| (b.id.clone(), b.x.clone())).collect(),
        };
        io::write_covariates(&stage.file(&format!("{dir}/covariates.csv"))?, &table)?;
        io::write_json(&stage.file(&format!("{dir}/truth.json"))?, &rep.truth)?;
    }
    let summary: Vec<_> = reps.iter().enumerate().map(|(r, rep)| io::SimulationSummaryRow::new(r, rep)).collect();
    io::write_simulation_summary(&stage.file("summary.csv")?, &summary)?;
    resolved(&cfg)
}

// ---------------------------------------------------------------- evaluate

fn cmd_evaluate(job: &Job, stage: &mut Stage, timings: &mut BTreeMap<String, f64>) -> Result<Value> {
    let cfg: BenchmarkConfig = parse_config(&job.config)?;
    cfg.validate().map_err(|e| Error::Validation(format!("config: {e}")))?;
    let results = timed(timings, "benchmark", || run_benchmark(&cfg, job.seed))?;
    for m in &cfg.methods {
        let secs = results.iter().filter(|r| r.method == *m).map(|r| r.seconds).sum();
        timings.insert(format!("{}_fit_seconds", m.name()), secs);
    }
    let rows = aggregate(&cfg, &results);
    io::write_replicate_metrics(&stage.file("replicates.csv")?, &results)?;
    let summary: Vec<_> = results.iter().map(io::ReplicateSummaryRow::from).collect();
    io::write_replicate_summary(&stage.file("replicate_summary.csv")?, &summary)?;
    io::write_aggregate(&stage.file("aggregate.csv")?, &io::aggregate_table(&rows))?;
    resolved(&cfg)
}

// ---------------------------------------------------------------- preprocess

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessConfig {
    /// Genes join a set when their correlation exceeds this.
    pub threshold: f64,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self { threshold: 0.8 }
    }
}

fn cmd_preprocess(job: &Job, stage: &mut Stage, _timings: &mut BTreeMap<String, f64>) -> Result<Value> {
    let cfg: PreprocessConfig = parse_config(&job.config)?;
    let m = io::read_gene_matrix(input(job, "genes")?)?;
    let sets = preprocess_genes(&m, cfg.threshold).map_err(|e| Error::Validation(format!("config: {e}")))?;
    io::write_covariates(&stage.file("covariates.csv")?, &io::gene_set_covariates(&m, &sets))?;
    io::write_json(&stage.file("gene_sets.json")?, &sets)?;
    resolved(&cfg)
}

// ---------------------------------------------------------------- diagnose

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnoseConfig {
    /// Leading iterations to discard.
    pub burn_in: usize,
    pub first: f64,
    pub last: f64,
}

impl Default for DiagnoseConfig {
    fn default() -> Self {
        Self { burn_in: 0, first: 0.1, last: 0.5 }
    }
}

#[derive(Debug, Serialize)]
struct Diagnosis {
    iterations: usize,
    burn_in: usize,
    z: f64,
    p: f64,
    converged_at_0_05: bool,
}

fn cmd_diagnose(job: &Job, stage: &mut Stage, _timings: &mut BTreeMap<String, f64>) -> Result<Value> {
    let cfg: DiagnoseConfig = parse_config(&job.config)?;
    let trace = io::read_trace(input(job, "trace")?)?;
    if cfg.burn_in >= trace.len() {
        return Err(Error::Validation(format!(
            "config: burn_in {} leaves nothing of a {}-iteration trace",
            cfg.burn_in,
            trace.len()
        )));
    }
    let g = geweke_diagnostic(&trace[cfg.burn_in..], cfg.first, cfg.last)
        .map_err(|e| Error::Validation(format!("config: {e}")))?;
    let d = Diagnosis { iterations: trace.len(), burn_in: cfg.burn_in, z: g.z, p: g.p, converged_at_0_05: g.p > 0.05 };
    io::write_json(&stage.file("geweke.json")?, &d)?;
    resolved(&cfg)
}
