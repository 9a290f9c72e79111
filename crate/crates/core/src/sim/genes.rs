use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Expression values, one row per gene, with a grouping label per gene.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneMatrix {
    pub genes: Vec<String>,
    pub groups: Vec<String>,
    pub samples: Vec<String>,
    /// `values[g][s]`.
    pub values: Vec<Vec<f64>>,
}

impl GeneMatrix {
    pub fn validate(&self) -> Result<()> {
        let g = self.genes.len();
        if self.groups.len() != g || self.values.len() != g {
            return Err(Error::Validation("gene, group and value rows differ in length".into()));
        }
        if self.samples.len() < 2 {
            return Err(Error::Validation("need at least two samples".into()));
        }
        for (name, row) in self.genes.iter().zip(&self.values) {
            if row.len() != self.samples.len() {
                return Err(Error::Validation(format!("gene {name}: {} values for {} samples", row.len(), self.samples.len())));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::Validation(format!("gene {name}: non-finite value")));
            }
        }
        Ok(())
    }
}

/// One combined covariate.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneSet {
    pub name: String,
    pub group: String,
    pub genes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneSets {
    pub threshold: f64,
    pub sets: Vec<GeneSet>,
    pub excluded: Vec<String>,
    /// Mean expression of each set's genes, `covariates[set][sample]`.
    #[serde(skip)]
    pub covariates: Vec<Vec<f64>>,
}

impl GeneSets {
    pub fn multi_gene_sets(&self) -> usize {
        self.sets.iter().filter(|s| s.genes.len() > 1).count()
    }
}

struct DisjointSets {
    parent: Vec<usize>,
}

impl DisjointSets {
    fn new(n: usize) -> Self {
        Self { parent: (0..n).collect() }
    }

    fn find(&mut self, mut i: usize) -> usize {
        while self.parent[i] != i {
            self.parent[i] = self.parent[self.parent[i]];
            i = self.parent[i];
        }
        i
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // smaller index as root keeps component order stable
            self.parent[ra.max(rb)] = ra.min(rb);
        }
    }
}

/// Pearson correlation of two rows; `None` if either is constant.
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    (saa > 0.0 && sbb > 0.0).then(|| sab / (saa * sbb).sqrt())
}

/// Components of the graph joining genes of one group whose correlation
/// exceeds `threshold` (strictly). Indices refer to `rows`.
pub fn correlation_components(rows: &[&[f64]], threshold: f64) -> Vec<Vec<usize>> {
    let n = rows.len();
    let mut ds = DisjointSets::new(n);
    for i in 0..n {
        for j in i + 1..n {
            if pearson(rows[i], rows[j]).is_some_and(|r| r > threshold) {
                ds.union(i, j);
            }
        }
    }
    let mut comps: Vec<Vec<usize>> = Vec::new();
    let mut slot = vec![usize::MAX; n];
    for i in 0..n {
        let r = ds.find(i);
        if slot[r] == usize::MAX {
            slot[r] = comps.len();
            comps.push(Vec::new());
        }
        comps[slot[r]].push(i);
    }
    comps
}

/// Groups correlated genes within each gene group into sets and averages
/// each set into one covariate. Sets appear in order of first gene.
pub fn preprocess_genes(m: &GeneMatrix, threshold: f64) -> Result<GeneSets> {
    m.validate()?;
    if !(-1.0..=1.0).contains(&threshold) {
        return Err(Error::Domain(format!("correlation threshold {threshold} outside [-1, 1]")));
    }
    let mut excluded = Vec::new();
    let usable: Vec<usize> = (0..m.genes.len())
        .filter(|&g| {
            let row = &m.values[g];
            let constant = row.iter().all(|&v| v == row[0]);
            if constant {
                log::warn!("gene {} has zero variance; excluded", m.genes[g]);
                excluded.push(m.genes[g].clone());
            }
            !constant
        })
        .collect();

    let mut group_order: Vec<&str> = Vec::new();
    for &g in &usable {
        if !group_order.contains(&m.groups[g].as_str()) {
            group_order.push(&m.groups[g]);
        }
    }
    let mut found: Vec<(usize, GeneSet, Vec<f64>)> = Vec::new();
    for group in group_order {
        let members: Vec<usize> = usable.iter().copied().filter(|&g| m.groups[g] == group).collect();
        let rows: Vec<&[f64]> = members.iter().map(|&g| m.values[g].as_slice()).collect();
        for comp in correlation_components(&rows, threshold) {
            let genes: Vec<usize> = comp.iter().map(|&k| members[k]).collect();
            let names: Vec<String> = genes.iter().map(|&g| m.genes[g].clone()).collect();
            let cov: Vec<f64> = (0..m.samples.len())
                .map(|s| genes.iter().map(|&g| m.values[g][s]).sum::<f64>() / genes.len() as f64)
                .collect();
            found.push((genes[0], GeneSet { name: names.join("+"), group: group.to_string(), genes: names }, cov));
        }
    }
    found.sort_by_key(|f| f.0);
    let (sets, covariates) = found.into_iter().map(|(_, s, c)| (s, c)).unzip();
    Ok(GeneSets { threshold, sets, excluded, covariates })
}
