use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::sim::{cv_lasso, CvConfig};
use crate::spatial::BiopsyGraph;

/// Selections of the two-stage lasso comparator.
#[derive(Debug, Clone, Serialize)]
pub struct AnalystResult {
    pub fixed_selected: Vec<bool>,
    pub random_selected: Vec<bool>,
    /// Largest λ at which each covariate enters; the ROC ranking.
    pub fixed_score: Vec<f64>,
    pub random_score: Vec<f64>,
    pub fixed_lambda: f64,
    pub random_lambda: f64,
}

/// Fixed stage: lasso of sub-region outcomes on the biopsy covariates, one
/// row per sub-region. Random stage: lasso of each biopsy's outcome standard
/// deviation on the absolute covariates. λ minimises K-fold CV error in
/// both; the fixed stage folds over sub-region rows.
pub fn analyst_model(biopsies: &[BiopsyGraph], cv: &CvConfig) -> Result<AnalystResult> {
    if biopsies.len() < cv.folds.max(3) {
        return Err(Error::Validation(format!(
            "analyst model needs at least {} biopsies, got {}",
            cv.folds.max(3),
            biopsies.len()
        )));
    }
    let p = biopsies[0].x.len();
    if biopsies.iter().any(|b| b.x.len() != p) {
        return Err(Error::Validation("biopsies disagree on covariate count".into()));
    }

    // one row per sub-region, folds drawn over rows as a plain 3-fold CV
    // would; sub-regions of one biopsy can land in different folds
    let rows: Vec<(usize, f64)> =
        biopsies.iter().enumerate().flat_map(|(i, b)| b.y.iter().map(move |&y| (i, y))).collect();
    let x = DMatrix::from_fn(rows.len(), p, |r, j| biopsies[rows[r].0].x[j]);
    let y: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let groups: Vec<usize> = (0..rows.len()).collect();
    let fixed = cv_lasso(&x, &y, None, &groups, &CvConfig { seed: cv.seed, ..*cv })?;

    let keep: Vec<usize> = (0..biopsies.len()).filter(|&i| biopsies[i].n() >= 2).collect();
    if keep.len() < biopsies.len() {
        log::warn!("{} single-sub-region biopsies left out of the random stage", biopsies.len() - keep.len());
    }
    let xa = DMatrix::from_fn(keep.len(), p, |r, j| biopsies[keep[r]].x[j].abs());
    let sds: Vec<f64> = keep
        .iter()
        .map(|&i| {
            let y = &biopsies[i].y;
            let m = y.iter().sum::<f64>() / y.len() as f64;
            (y.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (y.len() - 1) as f64).sqrt()
        })
        .collect();
    let random = cv_lasso(&xa, &sds, None, &(0..keep.len()).collect::<Vec<_>>(), &CvConfig {
        seed: cv.seed.wrapping_add(1),
        ..*cv
    })?;

    Ok(AnalystResult {
        fixed_selected: fixed.best_fit().selected(),
        random_selected: random.best_fit().selected(),
        fixed_score: fixed.entry_lambda(),
        random_score: random.entry_lambda(),
        fixed_lambda: fixed.best_fit().lambda,
        random_lambda: random.best_fit().lambda,
    })
}
