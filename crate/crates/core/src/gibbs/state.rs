use serde::{Deserialize, Serialize};

use crate::gibbs::{Model, PriorConfig};

/// Every unknown of the regression model at one iteration.
///
/// `eta[i]` stores the `n_i × p` matrix of covariate random effects of
/// biopsy `i` column-major, so column `j` is `eta[i][j*n_i .. (j+1)*n_i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainState {
    pub alpha: Vec<f64>,
    pub gamma: Vec<bool>,
    pub p_gamma: f64,
    pub psi2: Vec<f64>,
    pub d: Vec<bool>,
    pub p_d: f64,
    pub eta: Vec<Vec<f64>>,
    pub delta: Vec<Vec<f64>>,
    pub tau2: f64,
    pub rho_index: usize,
    pub rho: f64,
    pub nu2: f64,
}

impl ChainState {
    /// Deterministic starting point: everything switched off, variances at
    /// the outcome variance, `ρ` at its smallest grid value.
    pub fn initial(model: &Model, prior: &PriorConfig) -> Self {
        let p = model.p;
        let var_y = model.outcome_variance();
        let rho_index = prior.rho_grid.argmin();
        Self {
            alpha: vec![0.0; p],
            gamma: vec![false; p],
            p_gamma: 0.5,
            psi2: vec![prior.xi2_spike; p],
            d: vec![false; p],
            p_d: 0.5,
            eta: model.biopsies.iter().map(|b| vec![0.0; b.n() * p]).collect(),
            delta: model.biopsies.iter().map(|b| vec![0.0; b.n()]).collect(),
            tau2: var_y,
            rho_index,
            rho: prior.rho_grid.values[rho_index],
            nu2: var_y,
        }
    }

    pub fn eta_column(&self, i: usize, j: usize, n: usize) -> &[f64] {
        &self.eta[i][j * n..(j + 1) * n]
    }

    pub fn set_rho(&mut self, prior: &PriorConfig, k: usize) {
        self.rho_index = k;
        self.rho = prior.rho_grid.values[k];
    }

    pub fn is_finite(&self) -> bool {
        self.alpha.iter().chain(&self.psi2).all(|v| v.is_finite())
            && self.eta.iter().flatten().all(|v| v.is_finite())
            && self.delta.iter().flatten().all(|v| v.is_finite())
            && self.tau2.is_finite()
            && self.nu2.is_finite()
            && self.p_gamma.is_finite()
            && self.p_d.is_finite()
    }

    /// Short text summary used when a chain aborts.
    pub fn dump(&self) -> String {
        let finite_eta = self.eta.iter().flatten().filter(|v| v.is_finite()).count();
        let total_eta: usize = self.eta.iter().map(Vec::len).sum();
        format!(
            "alpha={:?} psi2={:?} p_gamma={} p_d={} tau2={} rho={} nu2={} finite eta {}/{}",
            self.alpha, self.psi2, self.p_gamma, self.p_d, self.tau2, self.rho, self.nu2, finite_eta, total_eta
        )
    }
}
