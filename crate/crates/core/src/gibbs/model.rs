use std::collections::HashMap;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gibbs::PriorConfig;
use crate::spatial::{car_precision, AdjacencyMatrix, BiopsyGraph};

/// Which covariate random-effect structure to fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// CAR structure `D_w − φ W` on each biopsy graph.
    #[default]
    Spatial,
    /// Non-spatial comparator: `φ = 0`, `W = I`, exchangeable effects.
    Nsds,
}

/// Data prepared for sampling: standardised covariates and the quantities
/// that stay fixed across sweeps.
#[derive(Debug, Clone)]
pub struct Model {
    pub biopsies: Vec<BiopsyGraph>,
    pub p: usize,
    pub variant: Variant,
    /// Correlation used in the covariate CAR (`φ`, or 0 for NSDS).
    pub eta_corr: f64,
    eta_structure: Vec<Arc<AdjacencyMatrix>>,
    /// Eigendecomposition of each biopsy's covariate CAR base matrix, for
    /// graphs small enough that dense products beat a sparse factor.
    pub(crate) eta_spectral: Vec<Option<Arc<Spectral>>>,
    /// `Σ_i n_i x_i x_iᵀ`.
    pub(crate) xtnx: DMatrix<f64>,
    /// `Σ_i log det(D_w − v_k W_i)` per grid value.
    pub(crate) rho_logdet: Vec<f64>,
    pub covariate_center: Vec<f64>,
    pub covariate_scale: Vec<f64>,
}

impl Model {
    pub fn new(
        biopsies: &[BiopsyGraph],
        prior: &PriorConfig,
        variant: Variant,
        standardize: bool,
    ) -> Result<Self> {
        prior.validate()?;
        let first = biopsies
            .first()
            .ok_or_else(|| Error::Validation("no biopsies".into()))?;
        let p = first.x.len();
        for b in biopsies {
            if b.x.len() != p {
                return Err(Error::Validation(format!(
                    "biopsy {}: {} covariates, expected {p}",
                    b.id,
                    b.x.len()
                )));
            }
            if b.y.len() != b.adjacency.n() {
                return Err(Error::Validation(format!(
                    "biopsy {}: {} outcomes for {} sub-regions",
                    b.id,
                    b.y.len(),
                    b.adjacency.n()
                )));
            }
            if let Some(&node) = b.adjacency.isolated_nodes().first() {
                return Err(Error::Validation(format!(
                    "biopsy {}: sub-region {node} has no neighbours",
                    b.id
                )));
            }
            if b.x.iter().chain(&b.y).any(|v| !v.is_finite()) {
                return Err(Error::Validation(format!("biopsy {}: non-finite value", b.id)));
            }
        }

        let n_b = biopsies.len() as f64;
        let mut center = vec![0.0; p];
        let mut scale = vec![1.0; p];
        if standardize {
            for j in 0..p {
                let mean = biopsies.iter().map(|b| b.x[j]).sum::<f64>() / n_b;
                let var = biopsies.iter().map(|b| (b.x[j] - mean).powi(2)).sum::<f64>() / n_b;
                center[j] = mean;
                scale[j] = if var > 0.0 { var.sqrt() } else { 1.0 };
            }
        }
        let biopsies: Vec<BiopsyGraph> = biopsies
            .iter()
            .map(|b| {
                let mut b = b.clone();
                for j in 0..p {
                    b.x[j] = (b.x[j] - center[j]) / scale[j];
                }
                b
            })
            .collect();

        let (eta_corr, eta_structure) = match variant {
            Variant::Spatial => (
                prior.phi,
                biopsies.iter().map(|b| b.adjacency.clone()).collect::<Vec<_>>(),
            ),
            Variant::Nsds => (
                0.0,
                biopsies
                    .iter()
                    .map(|b| AdjacencyMatrix::identity(b.n()).map(Arc::new))
                    .collect::<Result<Vec<_>>>()?,
            ),
        };

        let mut cache: HashMap<*const AdjacencyMatrix, Arc<Spectral>> = HashMap::new();
        let eta_spectral = eta_structure
            .iter()
            .map(|adj| {
                if adj.n() > SPECTRAL_MAX_NODES {
                    return None;
                }
                Some(
                    cache
                        .entry(Arc::as_ptr(adj))
                        .or_insert_with(|| Arc::new(Spectral::new(&adj.dense_car_base(eta_corr))))
                        .clone(),
                )
            })
            .collect();

        let mut xtnx = DMatrix::zeros(p, p);
        for b in &biopsies {
            let x = nalgebra::DVector::from_column_slice(&b.x);
            xtnx += (b.n() as f64) * &x * x.transpose();
        }

        let mut rho_logdet = vec![0.0; prior.rho_grid.len()];
        for (k, &v) in prior.rho_grid.values.iter().enumerate() {
            for b in &biopsies {
                rho_logdet[k] += car_precision(b.adjacency.clone(), v, 1.0)?.base_logdet();
            }
        }

        Ok(Self {
            biopsies,
            p,
            variant,
            eta_corr,
            eta_structure,
            eta_spectral,
            xtnx,
            rho_logdet,
            covariate_center: center,
            covariate_scale: scale,
        })
    }

    /// Total number of sub-regions `S`.
    pub fn total_subregions(&self) -> usize {
        self.biopsies.iter().map(BiopsyGraph::n).sum()
    }

    pub fn n_biopsies(&self) -> usize {
        self.biopsies.len()
    }

    /// Graph carrying the covariate random effects of biopsy `i`.
    pub fn eta_structure(&self, i: usize) -> &Arc<AdjacencyMatrix> {
        &self.eta_structure[i]
    }

    /// Sample variance of all sub-region outcomes.
    pub fn outcome_variance(&self) -> f64 {
        let all: Vec<f64> = self.biopsies.iter().flat_map(|b| b.y.iter().copied()).collect();
        let n = all.len() as f64;
        let mean = all.iter().sum::<f64>() / n;
        let var = all.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
        if var > 0.0 {
            var
        } else {
            1.0
        }
    }
}

/// Graphs up to this size use the spectral path for covariate effects.
pub(crate) const SPECTRAL_MAX_NODES: usize = 64;

/// `Q = U diag(λ) Uᵀ` for a symmetric positive definite `Q`.
#[derive(Debug, Clone)]
pub(crate) struct Spectral {
    n: usize,
    /// `U` and `Uᵀ`, row-major.
    u: Vec<f64>,
    ut: Vec<f64>,
    lambda: Vec<f64>,
}

impl Spectral {
    pub(crate) fn new(q: &DMatrix<f64>) -> Self {
        let n = q.nrows();
        let eig = q.clone().symmetric_eigen();
        let mut u = vec![0.0; n * n];
        let mut ut = vec![0.0; n * n];
        for k in 0..n {
            for s in 0..n {
                u[s * n + k] = eig.eigenvectors[(s, k)];
                ut[k * n + s] = eig.eigenvectors[(s, k)];
            }
        }
        Self { n, u, ut, lambda: eig.eigenvalues.iter().copied().collect() }
    }

    /// Overwrites `b` with a draw from `N(P⁻¹ b, P⁻¹)`, `P = a Q + c I`,
    /// using standard normals `z`. `w` is scratch of length `n`.
    pub(crate) fn sample_canonical(&self, a: f64, c: f64, b: &mut [f64], z: &[f64], w: &mut [f64]) {
        let n = self.n;
        w.iter_mut().for_each(|v| *v = 0.0);
        for (s, &bs) in b.iter().enumerate() {
            for (wk, u) in w.iter_mut().zip(&self.u[s * n..(s + 1) * n]) {
                *wk += u * bs;
            }
        }
        for k in 0..n {
            let prec = a * self.lambda[k] + c;
            w[k] = w[k] / prec + z[k] / prec.sqrt();
        }
        b.iter_mut().for_each(|v| *v = 0.0);
        for k in 0..n {
            let row = &self.ut[k * n..(k + 1) * n];
            let wk = w[k];
            for (v, u) in b.iter_mut().zip(row) {
                *v += u * wk;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spatial::build_lattice_adjacency;

    #[test]
    fn spectral_draw_matches_dense_gaussian() {
        let adj = build_lattice_adjacency(3, 4).unwrap();
        let q = adj.dense_car_base(0.3);
        let sp = Spectral::new(&q);
        let (a, c) = (2.5, 0.7);
        let prec: DMatrix<f64> = a * &q + c * DMatrix::<f64>::identity(12, 12);
        let cov = prec.clone().try_inverse().unwrap();
        let b: Vec<f64> = (0..12).map(|k| (k as f64 * 0.7).sin()).collect();
        let mut w = vec![0.0; 12];

        let mut mean = b.clone();
        sp.sample_canonical(a, c, &mut mean, &[0.0; 12], &mut w);
        let dense_mean = &cov * nalgebra::DVector::from_column_slice(&b);
        for k in 0..12 {
            assert!((mean[k] - dense_mean[k]).abs() < 1e-12);
        }

        // the draw is mean + M z; M Mᵀ must equal the covariance
        let mut m = DMatrix::zeros(12, 12);
        for k in 0..12 {
            let mut z = [0.0; 12];
            z[k] = 1.0;
            let mut x = vec![0.0; 12];
            sp.sample_canonical(a, c, &mut x, &z, &mut w);
            for s in 0..12 {
                m[(s, k)] = x[s];
            }
        }
        let implied = &m * m.transpose();
        assert!((implied - cov).abs().max() < 1e-12);
    }
}
