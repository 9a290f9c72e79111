use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gibbs::{geweke_diagnostic, run_chain, summarize_selection, PriorConfig, Schedule, Variant};
use crate::seeds;
use crate::sim::{
    add_auc, analyst_model, metrics_from_flags, simulate_dataset, CvConfig, MetricsTable, SimReplicate,
    SimSetting,
};

/// A method compared in the benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Analyst,
    Nsds,
    Dreamespase,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Analyst => "analyst",
            Method::Nsds => "nsds",
            Method::Dreamespase => "dreamespase",
        }
    }
}

/// Chain length settings shared by the two Bayesian methods.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChainSettings {
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
}

impl Default for ChainSettings {
    fn default() -> Self {
        Self { iterations: 20_000, burn_in: 10_000, thin: 10 }
    }
}

/// Prior used for the benchmark fits. The fixed-effect spike and slab are
/// narrower than the application defaults; see the README.
pub fn benchmark_prior() -> PriorConfig {
    PriorConfig { sigma2_spike: 0.001, sigma2_slab: 1.0, ..PriorConfig::default() }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkConfig {
    pub settings: Vec<SimSetting>,
    pub replicates: usize,
    pub methods: Vec<Method>,
    pub chain: ChainSettings,
    pub prior: PriorConfig,
    pub threshold: f64,
    /// FPR limits for AUC_p.
    pub auc_p: Vec<f64>,
    pub cv_folds: usize,
    pub standardize: bool,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            settings: vec![SimSetting::default()],
            replicates: 10,
            methods: vec![Method::Analyst, Method::Nsds, Method::Dreamespase],
            chain: ChainSettings::default(),
            prior: benchmark_prior(),
            threshold: 0.5,
            auc_p: vec![0.1, 0.2],
            cv_folds: 3,
            standardize: true,
        }
    }
}

impl BenchmarkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.settings.is_empty() || self.replicates == 0 || self.methods.is_empty() {
            return Err(Error::Validation("benchmark needs settings, replicates and methods".into()));
        }
        for (k, s) in self.settings.iter().enumerate() {
            s.validate().map_err(|e| Error::Validation(format!("settings[{k}]: {e}")))?;
        }
        Schedule { iterations: self.chain.iterations, burn_in: self.chain.burn_in, thin: self.chain.thin, seed: 0 }
            .validate()
            .map_err(|e| Error::Validation(format!("chain: {e}")))?;
        self.prior.validate().map_err(|e| Error::Validation(format!("prior: {e}")))?;
        if !(0.0..1.0).contains(&self.threshold) {
            return Err(Error::Validation("threshold must lie in [0, 1)".into()));
        }
        if self.auc_p.iter().any(|&p| !(p > 0.0 && p <= 1.0)) {
            return Err(Error::Validation("auc_p values must lie in (0, 1]".into()));
        }
        Ok(())
    }
}

/// One method on one simulated replicate.
#[derive(Debug, Clone, Serialize)]
pub struct ReplicateResult {
    pub setting: usize,
    pub replicate: usize,
    pub method: Method,
    pub metrics: MetricsTable,
    pub snr_fixed: f64,
    pub snr_rand: f64,
    pub tau2: f64,
    pub nu2: f64,
    /// Geweke p-value of the log-likelihood trace (Bayesian methods).
    pub geweke_p: Option<f64>,
    pub seconds: f64,
}

/// Pooled results for one (setting, method).
#[derive(Debug, Clone, Serialize)]
pub struct AggregateRow {
    pub setting: usize,
    pub relative_dimensionality: f64,
    pub method: Method,
    pub replicates: usize,
    pub metrics: MetricsTable,
}

/// Runs one method on one simulated data set.
pub fn run_method(
    method: Method,
    rep: &SimReplicate,
    cfg: &BenchmarkConfig,
    seed: u64,
) -> Result<(MetricsTable, Option<f64>)> {
    let truth = &rep.truth;
    match method {
        Method::Analyst => {
            let cv = CvConfig { folds: cfg.cv_folds, seed, ..Default::default() };
            let r = analyst_model(&rep.biopsies, &cv)?;
            let mut m = metrics_from_flags(truth, &r.fixed_selected, &r.random_selected)?;
            add_auc(&mut m, truth, &r.fixed_score, &r.random_score, &cfg.auc_p)?;
            Ok((m, None))
        }
        Method::Nsds | Method::Dreamespase => {
            let variant = if method == Method::Nsds { Variant::Nsds } else { Variant::Spatial };
            let schedule = Schedule {
                iterations: cfg.chain.iterations,
                burn_in: cfg.chain.burn_in,
                thin: cfg.chain.thin,
                seed,
            };
            let post = run_chain(&rep.biopsies, &cfg.prior, schedule, variant, cfg.standardize)?;
            let report = summarize_selection(&post, cfg.threshold)?;
            let mut m = metrics_from_flags(truth, &report.fixed_selected, &report.random_selected)?;
            add_auc(&mut m, truth, &report.fixed_probability, &report.random_probability, &cfg.auc_p)?;
            let geweke = geweke_diagnostic(&post.log_likelihood[schedule.burn_in..], 0.1, 0.5).ok().map(|g| g.p);
            Ok((m, geweke))
        }
    }
}

/// Simulates every (setting, replicate) and runs every method on it.
/// Seeds derive from `(seed, setting, replicate, method)`, so the output
/// does not depend on the thread count.
pub fn run_benchmark(cfg: &BenchmarkConfig, seed: u64) -> Result<Vec<ReplicateResult>> {
    cfg.validate()?;
    let tasks: Vec<(usize, usize)> =
        (0..cfg.settings.len()).flat_map(|s| (0..cfg.replicates).map(move |r| (s, r))).collect();
    let per_task: Vec<Result<Vec<ReplicateResult>>> = tasks
        .par_iter()
        .map(|&(s, r)| {
            let setting = SimSetting {
                seed: seeds::derive_seed(seed, &format!("simulate/setting-{s}/rep-{r}")),
                ..cfg.settings[s].clone()
            };
            let rep = simulate_dataset(&setting)?;
            cfg.methods
                .iter()
                .map(|&method| {
                    let start = std::time::Instant::now();
                    let mseed = seeds::derive_seed(seed, &format!("fit/setting-{s}/rep-{r}/{}", method.name()));
                    let (metrics, geweke_p) = run_method(method, &rep, cfg, mseed)?;
                    log::info!("setting {s} replicate {r} {}: done", method.name());
                    Ok(ReplicateResult {
                        setting: s,
                        replicate: r,
                        method,
                        metrics,
                        snr_fixed: rep.snr_fixed,
                        snr_rand: rep.snr_rand,
                        tau2: rep.tau2,
                        nu2: rep.nu2,
                        geweke_p,
                        seconds: start.elapsed().as_secs_f64(),
                    })
                })
                .collect()
        })
        .collect();
    let mut out = Vec::new();
    for r in per_task {
        out.extend(r?);
    }
    Ok(out)
}

/// Pools counts and averages AUC per (setting, method).
pub fn aggregate(cfg: &BenchmarkConfig, results: &[ReplicateResult]) -> Vec<AggregateRow> {
    let mut groups: BTreeMap<(usize, Method), Vec<&ReplicateResult>> = BTreeMap::new();
    for r in results {
        groups.entry((r.setting, r.method)).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|((setting, method), rs)| {
            let mut metrics = MetricsTable::default();
            for r in &rs {
                metrics.add_counts(&r.metrics);
            }
            let fixed: Vec<&[(f64, f64)]> = rs.iter().map(|r| r.metrics.fixed_auc.as_slice()).collect();
            let random: Vec<&[(f64, f64)]> = rs.iter().map(|r| r.metrics.random_auc.as_slice()).collect();
            metrics.fixed_auc = crate::sim::mean_auc(&fixed);
            metrics.random_auc = crate::sim::mean_auc(&random);
            AggregateRow {
                setting,
                relative_dimensionality: cfg.settings[setting].relative_dimensionality(),
                method,
                replicates: rs.len(),
                metrics,
            }
        })
        .collect()
}
