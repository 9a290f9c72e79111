use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gibbs::{GewekeResult, PosteriorSamples};

/// Posterior inclusion probabilities and the thresholded model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub covariates: Vec<String>,
    pub threshold: f64,
    pub fixed_probability: Vec<f64>,
    pub random_probability: Vec<f64>,
    pub alpha_mean: Vec<f64>,
    pub psi2_mean: Vec<f64>,
    pub fixed_selected: Vec<bool>,
    pub random_selected: Vec<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub geweke: Option<GewekeResult>,
}

fn indicator_mean(draws: &[Vec<bool>], j: usize) -> f64 {
    draws.iter().filter(|d| d[j]).count() as f64 / draws.len() as f64
}

fn value_mean(draws: &[Vec<f64>], j: usize) -> f64 {
    draws.iter().map(|d| d[j]).sum::<f64>() / draws.len() as f64
}

/// Median-probability model: covariate `j` is selected when its inclusion
/// probability is strictly above `threshold`.
pub fn summarize_selection(samples: &PosteriorSamples, threshold: f64) -> Result<SelectionReport> {
    if samples.is_empty() {
        return Err(Error::Empty("no posterior draws".into()));
    }
    let p = samples.p();
    let fixed_probability: Vec<f64> = (0..p).map(|j| indicator_mean(&samples.gamma, j)).collect();
    let random_probability: Vec<f64> = (0..p).map(|j| indicator_mean(&samples.d, j)).collect();
    Ok(SelectionReport {
        covariates: (0..p).map(|j| format!("x{}", j + 1)).collect(),
        threshold,
        fixed_selected: fixed_probability.iter().map(|&q| q > threshold).collect(),
        random_selected: random_probability.iter().map(|&q| q > threshold).collect(),
        fixed_probability,
        random_probability,
        alpha_mean: (0..p).map(|j| value_mean(&samples.alpha, j)).collect(),
        psi2_mean: (0..p).map(|j| value_mean(&samples.psi2, j)).collect(),
        geweke: None,
    })
}
