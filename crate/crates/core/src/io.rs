//! CSV and JSON readers and writers for every file the command line
//! consumes or emits. Parse errors carry the file and line number.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::gibbs::PosteriorSamples;
use crate::hsm::{CellFit, MarkedPattern, Point, Window};
use crate::sim::{AggregateRow, GeneMatrix, GeneSets, Method, MetricsTable, ReplicateResult, SimReplicate, SizeClass};
use crate::spatial::{AdjacencyMatrix, BiopsyGraph};

/// Header fields and records of a CSV file, each record with its line.
struct Table {
    path: String,
    header: Vec<String>,
    rows: Vec<(u64, csv::StringRecord)>,
}

impl Table {
    fn read(path: &Path) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
        let header = rdr.headers()?.iter().map(str::to_string).collect();
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| {
                let line = e.position().map_or(0, |p| p.line());
                Error::Validation(format!("{}:{line}: {e}", path.display()))
            })?;
            rows.push((rec.position().map_or(0, |p| p.line()), rec));
        }
        Ok(Self { path: path.display().to_string(), header, rows })
    }

    fn expect_header(&self, expected: &[&str]) -> Result<()> {
        if self.header.len() < expected.len() || self.header.iter().zip(expected).any(|(a, b)| a != b) {
            return Err(Error::Validation(format!(
                "{}:1: expected header starting `{}`, found `{}`",
                self.path,
                expected.join(","),
                self.header.join(",")
            )));
        }
        Ok(())
    }

    fn err(&self, line: u64, msg: impl std::fmt::Display) -> Error {
        Error::Validation(format!("{}:{line}: {msg}", self.path))
    }

    fn field<T: std::str::FromStr>(&self, line: u64, rec: &csv::StringRecord, k: usize) -> Result<T> {
        let raw = rec.get(k).ok_or_else(|| self.err(line, format!("missing column {}", k + 1)))?;
        raw.parse()
            .map_err(|_| self.err(line, format!("cannot parse `{raw}` in column `{}`", self.header[k])))
    }

    fn finite(&self, line: u64, rec: &csv::StringRecord, k: usize) -> Result<f64> {
        let v: f64 = self.field(line, rec, k)?;
        if !v.is_finite() {
            return Err(self.err(line, format!("non-finite value in column `{}`", self.header[k])));
        }
        Ok(v)
    }
}

fn writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    Ok(csv::Writer::from_writer(BufWriter::new(File::create(path)?)))
}

/// Serialises `value` as pretty JSON with a trailing newline.
pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut f = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut f, value)?;
    f.write_all(b"\n")?;
    f.flush()?;
    Ok(())
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de)
        .map_err(|e| Error::Validation(format!("{}: at `{}`: {}", path.display(), e.path(), e.inner())))
}

// ---------------------------------------------------------------- adjacency

/// Edge lists per biopsy, `biopsy_id,node_a,node_b`, in file order.
pub fn read_adjacency(path: &Path) -> Result<BTreeMap<String, Vec<(usize, usize)>>> {
    let t = Table::read(path)?;
    t.expect_header(&["biopsy_id", "node_a", "node_b"])?;
    let mut out: BTreeMap<String, Vec<(usize, usize)>> = BTreeMap::new();
    for (line, rec) in &t.rows {
        let id: String = t.field(*line, rec, 0)?;
        let a = t.field(*line, rec, 1)?;
        let b = t.field(*line, rec, 2)?;
        if a == b {
            return Err(t.err(*line, format!("self edge at node {a}")));
        }
        out.entry(id).or_default().push((a, b));
    }
    Ok(out)
}

/// Writes each edge once with `node_a < node_b`.
pub fn write_adjacency<'a>(path: &Path, graphs: impl IntoIterator<Item = (&'a str, &'a AdjacencyMatrix)>) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["biopsy_id", "node_a", "node_b"])?;
    for (id, adj) in graphs {
        for (a, b) in adj.edges() {
            w.write_record([id, &a.to_string(), &b.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

// ---------------------------------------------------------------- outcomes

/// Sub-region outcomes per biopsy, `biopsy_id,subregion_id,y`. Within a
/// biopsy, row order defines the node indices used by the adjacency file.
/// A `theta_mean` column is accepted in place of `y`, so per-subregion
/// interaction estimates can be fitted directly.
pub fn read_outcomes(path: &Path) -> Result<BTreeMap<String, Vec<(String, f64)>>> {
    let t = Table::read(path)?;
    if t.header.len() < 3 || t.header[0] != "biopsy_id" || t.header[1] != "subregion_id" {
        return Err(t.err(1, "expected header `biopsy_id,subregion_id,y` (or `theta_mean` in place of `y`)"));
    }
    let col = t
        .header
        .iter()
        .position(|h| h == "y")
        .or_else(|| t.header.iter().position(|h| h == "theta_mean"))
        .ok_or_else(|| t.err(1, "no `y` or `theta_mean` column"))?;
    let mut out: BTreeMap<String, Vec<(String, f64)>> = BTreeMap::new();
    for (line, rec) in &t.rows {
        let id: String = t.field(*line, rec, 0)?;
        let sub: String = t.field(*line, rec, 1)?;
        let y = t.finite(*line, rec, col)?;
        let list = out.entry(id.clone()).or_default();
        if list.iter().any(|(s, _)| *s == sub) {
            return Err(t.err(*line, format!("duplicate sub-region {sub} in biopsy {id}")));
        }
        list.push((sub, y));
    }
    Ok(out)
}

pub fn write_outcomes(path: &Path, biopsies: &[BiopsyGraph]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["biopsy_id", "subregion_id", "y"])?;
    for b in biopsies {
        for (k, y) in b.y.iter().enumerate() {
            w.write_record([b.id.as_str(), &k.to_string(), &y.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

// ---------------------------------------------------------------- covariates

/// Wide covariate table, `biopsy_id,<name>,<name>,…`.
#[derive(Debug, Clone, PartialEq)]
pub struct CovariateTable {
    pub names: Vec<String>,
    pub rows: Vec<(String, Vec<f64>)>,
}

pub fn read_covariates(path: &Path) -> Result<CovariateTable> {
    let t = Table::read(path)?;
    if t.header.first().map(String::as_str) != Some("biopsy_id") || t.header.len() < 2 {
        return Err(t.err(1, "expected header `biopsy_id,<covariate>,…` with at least one covariate"));
    }
    let names: Vec<String> = t.header[1..].to_vec();
    let mut seen = std::collections::HashSet::new();
    let mut rows = Vec::with_capacity(t.rows.len());
    for (line, rec) in &t.rows {
        if rec.len() != t.header.len() {
            return Err(t.err(*line, format!("{} fields, header has {}", rec.len(), t.header.len())));
        }
        let id: String = t.field(*line, rec, 0)?;
        if !seen.insert(id.clone()) {
            return Err(t.err(*line, format!("duplicate biopsy {id}")));
        }
        let x = (1..t.header.len()).map(|k| t.finite(*line, rec, k)).collect::<Result<Vec<_>>>()?;
        rows.push((id, x));
    }
    Ok(CovariateTable { names, rows })
}

pub fn write_covariates(path: &Path, table: &CovariateTable) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(std::iter::once("biopsy_id").chain(table.names.iter().map(String::as_str)))?;
    for (id, x) in &table.rows {
        w.write_record(std::iter::once(id.clone()).chain(x.iter().map(f64::to_string)))?;
    }
    w.flush()?;
    Ok(())
}

/// Joins outcomes, adjacency and covariates into biopsy graphs, in
/// covariate-file order. Biopsies with identical graphs share one
/// adjacency. Every biopsy must appear in all three files and no sub-region
/// may be isolated.
pub fn assemble_biopsies(
    outcomes: &BTreeMap<String, Vec<(String, f64)>>,
    edges: &BTreeMap<String, Vec<(usize, usize)>>,
    covariates: &CovariateTable,
) -> Result<Vec<BiopsyGraph>> {
    let ids: Vec<&String> = covariates.rows.iter().map(|r| &r.0).collect();
    for id in outcomes.keys() {
        if !ids.contains(&id) {
            return Err(Error::Validation(format!("biopsy {id} has outcomes but no covariates")));
        }
    }
    for id in edges.keys() {
        if !outcomes.contains_key(id) {
            return Err(Error::Validation(format!("biopsy {id} has adjacency but no outcomes")));
        }
    }
    let mut shared: Vec<Arc<AdjacencyMatrix>> = Vec::new();
    covariates
        .rows
        .iter()
        .map(|(id, x)| {
            let ys = outcomes
                .get(id)
                .ok_or_else(|| Error::Validation(format!("biopsy {id} has covariates but no outcomes")))?;
            let n = ys.len();
            let adj = match edges.get(id) {
                Some(e) => AdjacencyMatrix::from_edges(n, e)
                    .map_err(|err| Error::Validation(format!("biopsy {id}: {err}")))?,
                None if n == 1 => {
                    return Err(Error::Validation(format!("biopsy {id}: single sub-region has no neighbour")))
                }
                None => return Err(Error::Validation(format!("biopsy {id} has no adjacency"))),
            };
            if let Some(&node) = adj.isolated_nodes().first() {
                return Err(Error::Validation(format!(
                    "biopsy {id}: sub-region {} (node {node}) has no neighbour",
                    ys[node].0
                )));
            }
            let adj = match shared.iter().find(|a| ***a == adj) {
                Some(a) => a.clone(),
                None => {
                    let a = Arc::new(adj);
                    shared.push(a.clone());
                    a
                }
            };
            BiopsyGraph::new(id.clone(), adj, ys.iter().map(|v| v.1).collect(), x.clone())
        })
        .collect()
}

// ---------------------------------------------------------------- cells

/// Marked point patterns per biopsy from `biopsy_id,x,y,type`, each in
/// the bounding box of its points.
pub fn read_cells(path: &Path) -> Result<BTreeMap<String, MarkedPattern>> {
    let t = Table::read(path)?;
    t.expect_header(&["biopsy_id", "x", "y", "type"])?;
    let mut pts: BTreeMap<String, (Vec<Point>, Vec<Point>)> = BTreeMap::new();
    for (line, rec) in &t.rows {
        let id: String = t.field(*line, rec, 0)?;
        let p = [t.finite(*line, rec, 1)?, t.finite(*line, rec, 2)?];
        let code: u8 = t.field(*line, rec, 3)?;
        let entry = pts.entry(id).or_default();
        match code {
            1 => entry.0.push(p),
            2 => entry.1.push(p),
            other => return Err(t.err(*line, format!("unknown type code {other}, expected 1 or 2"))),
        }
    }
    pts.into_iter()
        .map(|(id, (p1, p2))| {
            let window = Window::bounding(p1.iter().chain(&p2).copied())
                .map_err(|e| Error::Validation(format!("biopsy {id}: {e}")))?;
            Ok((id, MarkedPattern::new(window, p1, p2)?))
        })
        .collect()
}

pub fn write_cells(path: &Path, patterns: &BTreeMap<String, MarkedPattern>) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["biopsy_id", "x", "y", "type"])?;
    for (id, pat) in patterns {
        for (code, list) in [("1", &pat.points_1), ("2", &pat.points_2)] {
            for p in list {
                w.write_record([id.as_str(), &p[0].to_string(), &p[1].to_string(), code])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Per-subregion interaction estimates,
/// `biopsy_id,subregion_id,theta_mean,theta_sd,n1,n2`.
pub fn write_hsm_output<'a>(path: &Path, fits: impl IntoIterator<Item = (&'a str, &'a [CellFit])>) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["biopsy_id", "subregion_id", "theta_mean", "theta_sd", "n1", "n2"])?;
    for (id, cells) in fits {
        for c in cells {
            w.write_record([
                id,
                &c.subregion_id.to_string(),
                &c.theta_mean.to_string(),
                &c.theta_sd.to_string(),
                &c.n1.to_string(),
                &c.n2.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Rows of the per-subregion output; the grid row and column are not stored.
pub fn read_hsm_output(path: &Path) -> Result<Vec<(String, CellFit)>> {
    let t = Table::read(path)?;
    t.expect_header(&["biopsy_id", "subregion_id", "theta_mean", "theta_sd", "n1", "n2"])?;
    t.rows
        .iter()
        .map(|(line, rec)| {
            Ok((
                t.field(*line, rec, 0)?,
                CellFit {
                    subregion_id: t.field(*line, rec, 1)?,
                    row: 0,
                    col: 0,
                    theta_mean: t.finite(*line, rec, 2)?,
                    theta_sd: t.finite(*line, rec, 3)?,
                    n1: t.field(*line, rec, 4)?,
                    n2: t.field(*line, rec, 5)?,
                },
            ))
        })
        .collect()
}

// ---------------------------------------------------------------- posterior

/// Long-format draws of one parameter family.
#[derive(Debug, Clone, PartialEq)]
pub struct LongDraws {
    pub rows: Vec<(usize, String, f64)>,
}

fn bool_value(b: bool) -> f64 {
    if b { 1.0 } else { 0.0 }
}

/// One long-format table per parameter family, in write order.
pub fn posterior_families(post: &PosteriorSamples, names: &[String]) -> Vec<(&'static str, LongDraws)> {
    let vector = |draws: &dyn Fn(usize) -> Vec<f64>| LongDraws {
        rows: (0..post.len())
            .flat_map(|t| draws(t).into_iter().enumerate().map(move |(j, v)| (t, names[j].clone(), v)))
            .collect(),
    };
    let scalar = |name: &str, v: &[f64]| LongDraws {
        rows: v.iter().enumerate().map(|(t, &v)| (t, name.to_string(), v)).collect(),
    };
    vec![
        ("alpha", vector(&|t| post.alpha[t].clone())),
        ("gamma", vector(&|t| post.gamma[t].iter().map(|&b| bool_value(b)).collect())),
        ("psi2", vector(&|t| post.psi2[t].clone())),
        ("d", vector(&|t| post.d[t].iter().map(|&b| bool_value(b)).collect())),
        ("p_gamma", scalar("p_gamma", &post.p_gamma)),
        ("p_d", scalar("p_d", &post.p_d)),
        ("tau2", scalar("tau2", &post.tau2)),
        ("rho", scalar("rho", &post.rho)),
        ("nu2", scalar("nu2", &post.nu2)),
    ]
}

pub fn write_long(path: &Path, draws: &LongDraws) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["draw_index", "name", "value"])?;
    for (t, name, v) in &draws.rows {
        w.write_record([&t.to_string(), name.as_str(), &v.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_long(path: &Path) -> Result<LongDraws> {
    let t = Table::read(path)?;
    t.expect_header(&["draw_index", "name", "value"])?;
    let rows = t
        .rows
        .iter()
        .map(|(line, rec)| Ok((t.field(*line, rec, 0)?, t.field(*line, rec, 1)?, t.field(*line, rec, 2)?)))
        .collect::<Result<_>>()?;
    Ok(LongDraws { rows })
}

/// Log-likelihood after every sweep, `iteration,log_likelihood` (1-based).
pub fn write_trace(path: &Path, trace: &[f64]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["iteration", "log_likelihood"])?;
    for (t, v) in trace.iter().enumerate() {
        w.write_record([(t + 1).to_string(), v.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trace(path: &Path) -> Result<Vec<f64>> {
    let t = Table::read(path)?;
    t.expect_header(&["iteration", "log_likelihood"])?;
    let mut out = Vec::with_capacity(t.rows.len());
    for (line, rec) in &t.rows {
        let it: usize = t.field(*line, rec, 0)?;
        if it != out.len() + 1 {
            return Err(t.err(*line, format!("iteration {it} out of sequence")));
        }
        out.push(t.field(*line, rec, 1)?);
    }
    Ok(out)
}

// ---------------------------------------------------------------- genes

/// Expression matrix `gene,group,<sample>,<sample>,…`.
pub fn read_gene_matrix(path: &Path) -> Result<GeneMatrix> {
    let t = Table::read(path)?;
    t.expect_header(&["gene", "group"])?;
    let samples: Vec<String> = t.header[2..].to_vec();
    let mut m = GeneMatrix { genes: Vec::new(), groups: Vec::new(), samples, values: Vec::new() };
    for (line, rec) in &t.rows {
        if rec.len() != t.header.len() {
            return Err(t.err(*line, format!("{} fields, header has {}", rec.len(), t.header.len())));
        }
        let gene: String = t.field(*line, rec, 0)?;
        if m.genes.contains(&gene) {
            return Err(t.err(*line, format!("duplicate gene {gene}")));
        }
        m.genes.push(gene);
        m.groups.push(t.field(*line, rec, 1)?);
        m.values.push((2..t.header.len()).map(|k| t.finite(*line, rec, k)).collect::<Result<_>>()?);
    }
    m.validate()?;
    Ok(m)
}

pub fn write_gene_matrix(path: &Path, m: &GeneMatrix) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["gene", "group"].into_iter().map(String::from).chain(m.samples.iter().cloned()))?;
    for g in 0..m.genes.len() {
        w.write_record(
            [m.genes[g].clone(), m.groups[g].clone()].into_iter().chain(m.values[g].iter().map(f64::to_string)),
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Gene-set covariates as a covariate table with one row per sample.
pub fn gene_set_covariates(m: &GeneMatrix, sets: &GeneSets) -> CovariateTable {
    CovariateTable {
        names: sets.sets.iter().map(|s| s.name.clone()).collect(),
        rows: m
            .samples
            .iter()
            .enumerate()
            .map(|(s, id)| (id.clone(), sets.covariates.iter().map(|c| c[s]).collect()))
            .collect(),
    }
}

// ---------------------------------------------------------------- benchmark

/// One row of the long per-replicate metrics file.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MetricRow {
    pub setting: usize,
    pub replicate: usize,
    pub method: Method,
    pub kind: String,
    pub metric: String,
    pub size: String,
    pub value: f64,
}

/// `(kind, metric, size, value)` rows of one metrics table. TPR rows are
/// per size; FPR and AUC rows use size `all`. AUC values are unnormalised
/// (`auc_p`) and divided by `p` (`auc_p_norm`).
pub fn metric_rows(m: &MetricsTable) -> Vec<(String, String, String, f64)> {
    let mut out = Vec::new();
    for (kind, c, auc) in [("fixed", &m.fixed, &m.fixed_auc), ("random", &m.random, &m.random_auc)] {
        for size in SizeClass::SIZES {
            let v = c.tpr(size).unwrap_or(f64::NAN);
            out.push((kind.into(), "tpr".into(), size.name().into(), v));
        }
        out.push((kind.into(), "fpr".into(), "all".into(), c.fpr().unwrap_or(f64::NAN)));
        for &(p, a) in auc {
            out.push((kind.into(), format!("auc_{p}"), "all".into(), a));
            out.push((kind.into(), format!("auc_{p}_norm"), "all".into(), a / p));
        }
    }
    out
}

pub fn write_replicate_metrics(path: &Path, results: &[ReplicateResult]) -> Result<()> {
    let mut w = writer(path)?;
    for r in results {
        for (kind, metric, size, value) in metric_rows(&r.metrics) {
            w.serialize(MetricRow { setting: r.setting, replicate: r.replicate, method: r.method, kind, metric, size, value })?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_replicate_metrics(path: &Path) -> Result<Vec<MetricRow>> {
    read_rows(path)
}

/// Per-replicate simulation facts: achieved SNRs, variances, Geweke p.
/// Wall-clock times go to the run manifest so outputs stay reproducible.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ReplicateSummaryRow {
    pub setting: usize,
    pub replicate: usize,
    pub method: Method,
    pub snr_fixed: f64,
    pub snr_rand: f64,
    pub tau2: f64,
    pub nu2: f64,
    pub geweke_p: Option<f64>,
}

impl From<&ReplicateResult> for ReplicateSummaryRow {
    fn from(r: &ReplicateResult) -> Self {
        Self {
            setting: r.setting,
            replicate: r.replicate,
            method: r.method,
            snr_fixed: r.snr_fixed,
            snr_rand: r.snr_rand,
            tau2: r.tau2,
            nu2: r.nu2,
            geweke_p: r.geweke_p,
        }
    }
}

pub fn write_replicate_summary(path: &Path, rows: &[ReplicateSummaryRow]) -> Result<()> {
    write_rows(path, rows)
}

pub fn read_replicate_summary(path: &Path) -> Result<Vec<ReplicateSummaryRow>> {
    read_rows(path)
}

/// One line of `simulate`'s summary: achieved SNRs and the variances used.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SimulationSummaryRow {
    pub replicate: usize,
    pub snr_fixed: f64,
    pub snr_rand: f64,
    pub tau2: f64,
    pub nu2: f64,
    pub rho: f64,
    pub phi: f64,
    pub var_y: f64,
    pub attempts: usize,
}

impl SimulationSummaryRow {
    pub fn new(replicate: usize, rep: &SimReplicate) -> Self {
        Self {
            replicate,
            snr_fixed: rep.snr_fixed,
            snr_rand: rep.snr_rand,
            tau2: rep.tau2,
            nu2: rep.nu2,
            rho: rep.rho,
            phi: rep.phi,
            var_y: rep.var_y,
            attempts: rep.attempts,
        }
    }
}

pub fn write_simulation_summary(path: &Path, rows: &[SimulationSummaryRow]) -> Result<()> {
    write_rows(path, rows)
}

pub fn read_simulation_summary(path: &Path) -> Result<Vec<SimulationSummaryRow>> {
    read_rows(path)
}

fn write_rows<T: serde::Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = writer(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn read_rows<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut rdr = csv::Reader::from_path(path)?;
    rdr.deserialize()
        .enumerate()
        .map(|(k, r)| r.map_err(|e| Error::Validation(format!("{}:{}: {e}", path.display(), k + 2))))
        .collect()
}

/// The comparison table: one row per (setting, kind, metric, size), one
/// value column per method.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateTable {
    pub methods: Vec<Method>,
    /// `(setting, 2p/N, kind, metric, size, values per method)`.
    pub rows: Vec<(usize, f64, String, String, String, Vec<f64>)>,
}

pub fn aggregate_table(rows: &[AggregateRow]) -> AggregateTable {
    let mut methods: Vec<Method> = rows.iter().map(|r| r.method).collect();
    methods.sort();
    methods.dedup();
    let mut settings: Vec<(usize, f64)> = rows.iter().map(|r| (r.setting, r.relative_dimensionality)).collect();
    settings.dedup_by_key(|s| s.0);
    let mut out = Vec::new();
    for (setting, dim) in settings {
        let per_method: Vec<Vec<(String, String, String, f64)>> = methods
            .iter()
            .map(|m| {
                rows.iter()
                    .find(|r| r.setting == setting && r.method == *m)
                    .map_or_else(Vec::new, |r| metric_rows(&r.metrics))
            })
            .collect();
        let keys = per_method.iter().max_by_key(|v| v.len()).cloned().unwrap_or_default();
        for (kind, metric, size, _) in keys {
            let values = per_method
                .iter()
                .map(|v| {
                    v.iter().find(|r| r.0 == kind && r.1 == metric && r.2 == size).map_or(f64::NAN, |r| r.3)
                })
                .collect();
            out.push((setting, dim, kind, metric, size, values));
        }
    }
    AggregateTable { methods, rows: out }
}

pub fn write_aggregate(path: &Path, table: &AggregateTable) -> Result<()> {
    let mut w = writer(path)?;
    let head = ["setting", "two_p_over_n", "kind", "metric", "size"].map(String::from);
    w.write_record(head.into_iter().chain(table.methods.iter().map(|m| m.name().to_string())))?;
    for (setting, dim, kind, metric, size, values) in &table.rows {
        w.write_record(
            [setting.to_string(), dim.to_string(), kind.clone(), metric.clone(), size.clone()]
                .into_iter()
                .chain(values.iter().map(f64::to_string)),
        )?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_aggregate(path: &Path) -> Result<AggregateTable> {
    let t = Table::read(path)?;
    t.expect_header(&["setting", "two_p_over_n", "kind", "metric", "size"])?;
    let methods = t.header[5..]
        .iter()
        .map(|h| {
            serde_json::from_value(serde_json::Value::String(h.clone()))
                .map_err(|_| t.err(1, format!("unknown method column `{h}`")))
        })
        .collect::<Result<Vec<Method>>>()?;
    let rows = t
        .rows
        .iter()
        .map(|(line, rec)| {
            Ok((
                t.field(*line, rec, 0)?,
                t.field(*line, rec, 1)?,
                t.field(*line, rec, 2)?,
                t.field(*line, rec, 3)?,
                t.field(*line, rec, 4)?,
                (5..t.header.len()).map(|k| t.field(*line, rec, k)).collect::<Result<_>>()?,
            ))
        })
        .collect::<Result<_>>()?;
    Ok(AggregateTable { methods, rows })
}

/// Biopsy lookup by id for callers that join files themselves.
pub fn index_by_id(biopsies: &[BiopsyGraph]) -> HashMap<&str, &BiopsyGraph> {
    biopsies.iter().map(|b| (b.id.as_str(), b)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spatial::build_lattice_adjacency;

    fn dir() -> tempfile::TempDir {
        tempfile::tempdir().unwrap()
    }

    fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
        let p = dir.join(name);
        std::fs::write(&p, text).unwrap();
        p
    }

    fn toy_biopsies() -> Vec<BiopsyGraph> {
        let adj = Arc::new(build_lattice_adjacency(2, 2).unwrap());
        (0..3)
            .map(|i| {
                let y = (0..4).map(|k| 0.1 * (i * 4 + k) as f64 - 0.37).collect();
                BiopsyGraph::new(format!("b{i}"), adj.clone(), y, vec![i as f64 * 1.5, -0.25]).unwrap()
            })
            .collect()
    }

    #[test]
    fn biopsy_files_round_trip() {
        let d = dir();
        let bs = toy_biopsies();
        let (o, a, c) = (d.path().join("o.csv"), d.path().join("a.csv"), d.path().join("c.csv"));
        write_outcomes(&o, &bs).unwrap();
        write_adjacency(&a, bs.iter().map(|b| (b.id.as_str(), b.adjacency.as_ref()))).unwrap();
        let table = CovariateTable {
            names: vec!["x1".into(), "x2".into()],
            rows: bs.iter().map(|b| (b.id.clone(), b.x.clone())).collect(),
        };
        write_covariates(&c, &table).unwrap();
        assert_eq!(read_covariates(&c).unwrap(), table);
        let back = assemble_biopsies(&read_outcomes(&o).unwrap(), &read_adjacency(&a).unwrap(), &table).unwrap();
        for (x, y) in bs.iter().zip(&back) {
            assert_eq!((&x.id, &x.y, &x.x), (&y.id, &y.y, &y.x));
            assert_eq!(*x.adjacency, *y.adjacency);
        }
        assert!(Arc::ptr_eq(&back[0].adjacency, &back[2].adjacency));
    }

    #[test]
    fn assembly_rejects_mismatches() {
        let d = dir();
        let o = read_outcomes(&write(d.path(), "o.csv", "biopsy_id,subregion_id,y\na,0,1\na,1,2\na,2,3\n")).unwrap();
        let cov = CovariateTable { names: vec!["x".into()], rows: vec![("a".into(), vec![1.0])] };
        let isolated = read_adjacency(&write(d.path(), "a.csv", "biopsy_id,node_a,node_b\na,0,1\n")).unwrap();
        let err = assemble_biopsies(&o, &isolated, &cov).unwrap_err().to_string();
        assert!(err.contains("sub-region 2"), "{err}");
        let other = CovariateTable { names: vec!["x".into()], rows: vec![("z".into(), vec![1.0])] };
        let chain = read_adjacency(&write(d.path(), "b.csv", "biopsy_id,node_a,node_b\na,0,1\na,1,2\n")).unwrap();
        assert!(assemble_biopsies(&o, &chain, &other).is_err());
        assert!(assemble_biopsies(&o, &chain, &cov).is_ok());
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let d = dir();
        let p = write(d.path(), "c.csv", "biopsy_id,x1\na,1.0\nb,oops\n");
        let err = read_covariates(&p).unwrap_err().to_string();
        assert!(err.contains(":3:") && err.contains("oops"), "{err}");
        let p = write(d.path(), "c2.csv", "biopsy_id,x1\na,NaN\n");
        assert!(read_covariates(&p).unwrap_err().to_string().contains("non-finite"));
        let p = write(d.path(), "cells.csv", "biopsy_id,x,y,type\na,0,0,1\na,1,1,3\n");
        let err = read_cells(&p).unwrap_err().to_string();
        assert!(err.contains(":3:") && err.contains("type code 3"), "{err}");
        let p = write(d.path(), "bad.csv", "id,x,y,type\n");
        assert!(read_cells(&p).unwrap_err().to_string().contains(":1:"));
    }

    #[test]
    fn cells_round_trip() {
        let d = dir();
        let p = write(d.path(), "cells.csv", "biopsy_id,x,y,type\na,0,0,1\na,2.5,1,2\nb,1,1,2\nb,3,4,1\n");
        let cells = read_cells(&p).unwrap();
        assert_eq!(cells["a"].window, Window::new(0.0, 2.5, 0.0, 1.0).unwrap());
        let q = d.path().join("out.csv");
        write_cells(&q, &cells).unwrap();
        assert_eq!(read_cells(&q).unwrap(), cells);
    }

    #[test]
    fn hsm_output_round_trips() {
        let d = dir();
        let cells = vec![CellFit { subregion_id: 5, row: 1, col: 1, n1: 10, n2: 7, theta_mean: -0.1234567890123, theta_sd: 0.5 }];
        let p = d.path().join("h.csv");
        write_hsm_output(&p, [("b1", cells.as_slice())]).unwrap();
        let back = read_hsm_output(&p).unwrap();
        assert_eq!(back[0].0, "b1");
        assert_eq!(back[0].1, CellFit { row: 0, col: 0, ..cells[0].clone() });
        // the fitter accepts this file as outcomes
        assert_eq!(read_outcomes(&p).unwrap()["b1"], vec![("5".to_string(), -0.1234567890123)]);
    }

    #[test]
    fn long_and_trace_round_trip_exactly() {
        let d = dir();
        let draws = LongDraws { rows: vec![(0, "a".into(), 0.1 + 0.2), (1, "a".into(), -1e-300), (1, "b".into(), 3.0)] };
        let p = d.path().join("l.csv");
        write_long(&p, &draws).unwrap();
        assert_eq!(read_long(&p).unwrap(), draws);
        let trace = vec![-1.5, std::f64::consts::PI, -123456.789];
        let q = d.path().join("t.csv");
        write_trace(&q, &trace).unwrap();
        assert_eq!(read_trace(&q).unwrap(), trace);
    }

    #[test]
    fn gene_matrix_round_trips() {
        let d = dir();
        let p = write(d.path(), "g.csv", "gene,group,s1,s2,s3\nA,x,1,2,3\nB,x,2,4,6.5\nC,y,0,1,0\n");
        let m = read_gene_matrix(&p).unwrap();
        assert_eq!(m.samples, vec!["s1", "s2", "s3"]);
        let q = d.path().join("g2.csv");
        write_gene_matrix(&q, &m).unwrap();
        assert_eq!(read_gene_matrix(&q).unwrap(), m);
        let sets = crate::sim::preprocess_genes(&m, 0.8).unwrap();
        let cov = gene_set_covariates(&m, &sets);
        assert_eq!(cov.names, vec!["A+B", "C"]);
        assert_eq!(cov.rows[1], ("s2".to_string(), vec![3.0, 1.0]));
    }

    #[test]
    fn aggregate_round_trips() {
        let d = dir();
        let mut m = MetricsTable::default();
        m.fixed.n_true = [2, 2, 2];
        m.fixed.true_positive = [1, 2, 2];
        m.fixed.n_null = 10;
        m.fixed.false_positive = 1;
        m.random = m.fixed.clone();
        m.fixed_auc = vec![(0.1, 0.08)];
        m.random_auc = vec![(0.1, 0.05)];
        let rows: Vec<AggregateRow> = [Method::Analyst, Method::Dreamespase]
            .into_iter()
            .map(|method| AggregateRow { setting: 0, relative_dimensionality: 0.5, method, replicates: 1, metrics: m.clone() })
            .collect();
        let table = aggregate_table(&rows);
        assert_eq!(table.rows.len(), 2 * (3 + 1 + 2));
        let p = d.path().join("agg.csv");
        write_aggregate(&p, &table).unwrap();
        assert_eq!(read_aggregate(&p).unwrap(), table);
    }
}
