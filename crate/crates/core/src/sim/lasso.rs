use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::seeds;

/// Convergence when the largest squared coefficient change, on the
/// standardised scale, falls below this fraction of the null deviance.
pub const LASSO_TOL: f64 = 1e-14;
/// A path stops moving once the fit explains this share of the deviance.
pub const LASSO_MAX_DEV_RATIO: f64 = 0.999;
pub const LASSO_MAX_CYCLES: usize = 100_000;

/// Lasso solution on the original covariate scale.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LassoFit {
    pub lambda: f64,
    pub intercept: f64,
    pub coef: Vec<f64>,
    pub cycles: usize,
}

impl LassoFit {
    pub fn selected(&self) -> Vec<bool> {
        self.coef.iter().map(|&b| b != 0.0).collect()
    }
}

/// Weighted, standardised design: columns have weighted mean 0 and
/// weighted variance 1; constant columns are flagged and never enter.
struct Standardized {
    n: usize,
    p: usize,
    /// Column-major standardised design.
    xs: Vec<f64>,
    /// Weights normalised to sum to 1.
    w: Vec<f64>,
    yc: Vec<f64>,
    x_mean: Vec<f64>,
    x_sd: Vec<f64>,
    y_mean: f64,
    usable: Vec<bool>,
}

impl Standardized {
    fn new(x: &DMatrix<f64>, y: &[f64], weights: Option<&[f64]>) -> Result<Self> {
        let (n, p) = x.shape();
        if y.len() != n {
            return Err(Error::DimensionMismatch { expected: n, found: y.len() });
        }
        if n < 2 {
            return Err(Error::Validation("lasso needs at least two observations".into()));
        }
        let w: Vec<f64> = match weights {
            Some(w) if w.len() != n => return Err(Error::DimensionMismatch { expected: n, found: w.len() }),
            Some(w) => w.to_vec(),
            None => vec![1.0; n],
        };
        if w.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) || !(w.iter().sum::<f64>() > 0.0) {
            return Err(Error::Validation("lasso weights must be non-negative with a positive sum".into()));
        }
        if x.iter().chain(y).any(|v| !v.is_finite()) {
            return Err(Error::Validation("non-finite value in lasso input".into()));
        }
        let total: f64 = w.iter().sum();
        let w: Vec<f64> = w.iter().map(|v| v / total).collect();
        let y_mean: f64 = w.iter().zip(y).map(|(w, y)| w * y).sum();
        let yc = y.iter().map(|v| v - y_mean).collect();
        let mut xs = vec![0.0; n * p];
        let mut x_mean = vec![0.0; p];
        let mut x_sd = vec![1.0; p];
        let mut usable = vec![false; p];
        for j in 0..p {
            let col = x.column(j);
            let m: f64 = w.iter().zip(col.iter()).map(|(w, x)| w * x).sum();
            let v: f64 = w.iter().zip(col.iter()).map(|(w, x)| w * (x - m) * (x - m)).sum();
            x_mean[j] = m;
            if v > 1e-12 * (1.0 + m * m) {
                let sd = v.sqrt();
                x_sd[j] = sd;
                usable[j] = true;
                for (dst, x) in xs[j * n..(j + 1) * n].iter_mut().zip(col.iter()) {
                    *dst = (x - m) / sd;
                }
            }
        }
        Ok(Self { n, p, xs, w, yc, x_mean, x_sd, y_mean, usable })
    }

    fn col(&self, j: usize) -> &[f64] {
        &self.xs[j * self.n..(j + 1) * self.n]
    }

    /// Smallest λ with an all-zero solution.
    fn lambda_max(&self) -> f64 {
        (0..self.p)
            .filter(|&j| self.usable[j])
            .map(|j| self.col(j).iter().zip(&self.w).zip(&self.yc).map(|((x, w), y)| w * x * y).sum::<f64>().abs())
            .fold(0.0, f64::max)
    }

    /// `½ Σ w r² + λ ‖β‖₁` on the standardised scale.
    fn objective(&self, beta: &[f64], r: &[f64], lambda: f64) -> f64 {
        0.5 * self.w.iter().zip(r).map(|(w, r)| w * r * r).sum::<f64>()
            + lambda * beta.iter().map(|b| b.abs()).sum::<f64>()
    }

    /// Cyclic coordinate descent from `beta`, updating it in place.
    fn descend(&self, beta: &mut [f64], lambda: f64, mut trace: Option<&mut Vec<f64>>) -> Result<usize> {
        let mut r = self.yc.clone();
        for j in 0..self.p {
            if beta[j] != 0.0 {
                for (r, x) in r.iter_mut().zip(self.col(j)) {
                    *r -= x * beta[j];
                }
            }
        }
        if let Some(t) = trace.as_deref_mut() {
            t.push(self.objective(beta, &r, lambda));
        }
        let null_dev: f64 = self.w.iter().zip(&self.yc).map(|(w, y)| w * y * y).sum::<f64>().max(f64::MIN_POSITIVE);
        for cycle in 1..=LASSO_MAX_CYCLES {
            let mut max_change = 0.0f64;
            for j in 0..self.p {
                if !self.usable[j] {
                    continue;
                }
                let x = self.col(j);
                let old = beta[j];
                let z = x.iter().zip(&self.w).zip(&r).map(|((x, w), r)| w * x * r).sum::<f64>() + old;
                let new = soft_threshold(z, lambda);
                if new != old {
                    let d = new - old;
                    for (r, x) in r.iter_mut().zip(x) {
                        *r -= x * d;
                    }
                    beta[j] = new;
                    max_change = max_change.max(d * d);
                }
            }
            if let Some(t) = trace.as_deref_mut() {
                t.push(self.objective(beta, &r, lambda));
            }
            if max_change < LASSO_TOL * null_dev {
                return Ok(cycle);
            }
        }
        Err(Error::NonConvergence(format!(
            "lasso at lambda {lambda:e} did not converge in {LASSO_MAX_CYCLES} cycles; iterate {beta:?}"
        )))
    }

    /// Share of the weighted deviance explained by `beta`.
    fn dev_ratio(&self, beta: &[f64]) -> f64 {
        let mut r = self.yc.clone();
        for j in (0..self.p).filter(|&j| beta[j] != 0.0) {
            for (r, x) in r.iter_mut().zip(self.col(j)) {
                *r -= x * beta[j];
            }
        }
        let null: f64 = self.w.iter().zip(&self.yc).map(|(w, y)| w * y * y).sum();
        let res: f64 = self.w.iter().zip(&r).map(|(w, r)| w * r * r).sum();
        if null > 0.0 { 1.0 - res / null } else { 1.0 }
    }

    fn unstandardize(&self, beta: &[f64], lambda: f64, cycles: usize) -> LassoFit {
        let coef: Vec<f64> = (0..self.p).map(|j| if self.usable[j] { beta[j] / self.x_sd[j] } else { 0.0 }).collect();
        let intercept = self.y_mean - coef.iter().zip(&self.x_mean).map(|(b, m)| b * m).sum::<f64>();
        LassoFit { lambda, intercept, coef, cycles }
    }
}

fn soft_threshold(z: f64, lambda: f64) -> f64 {
    if z > lambda {
        z - lambda
    } else if z < -lambda {
        z + lambda
    } else {
        0.0
    }
}

/// Minimises `(1/2n) Σ (y − b₀ − xᵀβ)² + λ ‖β‖₁` over standardised columns
/// (λ applies to the standardised coefficients) with an unpenalised intercept.
pub fn lasso_cd(x: &DMatrix<f64>, y: &[f64], lambda: f64) -> Result<LassoFit> {
    lasso_cd_weighted(x, y, None, lambda)
}

/// As [`lasso_cd`] with observation weights (normalised internally), so a
/// row repeated `k` times is the same as one row of weight `k`.
pub fn lasso_cd_weighted(x: &DMatrix<f64>, y: &[f64], weights: Option<&[f64]>, lambda: f64) -> Result<LassoFit> {
    if !(lambda >= 0.0) {
        return Err(Error::Domain(format!("lambda must be >= 0, got {lambda}")));
    }
    let s = Standardized::new(x, y, weights)?;
    let mut beta = vec![0.0; s.p];
    let cycles = s.descend(&mut beta, lambda, None)?;
    Ok(s.unstandardize(&beta, lambda, cycles))
}

/// Objective value after every cycle, starting from zero coefficients.
pub fn lasso_objective_trace(x: &DMatrix<f64>, y: &[f64], lambda: f64) -> Result<Vec<f64>> {
    let s = Standardized::new(x, y, None)?;
    let mut beta = vec![0.0; s.p];
    let mut trace = Vec::new();
    s.descend(&mut beta, lambda, Some(&mut trace))?;
    Ok(trace)
}

/// Largest useful λ (all coefficients zero at and above it).
pub fn lambda_max(x: &DMatrix<f64>, y: &[f64], weights: Option<&[f64]>) -> Result<f64> {
    Ok(Standardized::new(x, y, weights)?.lambda_max())
}

/// `count` log-spaced values from `λ_max` down to `ratio · λ_max`.
pub fn lambda_grid(lambda_max: f64, count: usize, ratio: f64) -> Vec<f64> {
    if count == 0 || !(lambda_max > 0.0) {
        return Vec::new();
    }
    if count == 1 {
        return vec![lambda_max];
    }
    let step = ratio.ln() / (count - 1) as f64;
    (0..count).map(|k| lambda_max * (step * k as f64).exp()).collect()
}

/// Solutions along a decreasing λ sequence with warm starts. Once the fit
/// explains [`LASSO_MAX_DEV_RATIO`] of the deviance the remaining entries
/// repeat that solution (reported with `cycles == 0`).
pub fn lasso_path(x: &DMatrix<f64>, y: &[f64], weights: Option<&[f64]>, lambdas: &[f64]) -> Result<Vec<LassoFit>> {
    if lambdas.windows(2).any(|w| w[1] > w[0]) {
        return Err(Error::Validation("lambda path must be non-increasing".into()));
    }
    let s = Standardized::new(x, y, weights)?;
    let mut beta = vec![0.0; s.p];
    let mut saturated = false;
    lambdas
        .iter()
        .map(|&l| {
            // past saturation the solution is held; smaller λ only chases noise
            let cycles = if saturated { 0 } else { s.descend(&mut beta, l, None)? };
            saturated = saturated || s.dev_ratio(&beta) >= LASSO_MAX_DEV_RATIO;
            Ok(s.unstandardize(&beta, l, cycles))
        })
        .collect()
}

/// Settings for cross-validated λ choice.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CvConfig {
    pub folds: usize,
    pub n_lambda: usize,
    pub lambda_ratio: f64,
    pub seed: u64,
    /// Fold assignments to try before giving up on degenerate folds.
    pub max_refolds: usize,
}

impl Default for CvConfig {
    fn default() -> Self {
        Self { folds: 3, n_lambda: 100, lambda_ratio: 1e-3, seed: 0, max_refolds: 10 }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CvLasso {
    pub lambdas: Vec<f64>,
    pub cv_error: Vec<f64>,
    pub best: usize,
    /// Full-data solutions along the path.
    pub path: Vec<LassoFit>,
}

impl CvLasso {
    pub fn best_fit(&self) -> &LassoFit {
        &self.path[self.best]
    }

    /// Per covariate, the largest λ on the path at which it is non-zero
    /// (0 if never): a ranking score for ROC curves.
    pub fn entry_lambda(&self) -> Vec<f64> {
        let p = self.path.first().map_or(0, |f| f.coef.len());
        (0..p)
            .map(|j| self.path.iter().find(|f| f.coef[j] != 0.0).map_or(0.0, |f| f.lambda))
            .collect()
    }
}

/// K-fold cross-validated lasso where whole groups (biopsies) share a fold.
/// The λ with the smallest weighted held-out squared error is chosen.
pub fn cv_lasso(
    x: &DMatrix<f64>,
    y: &[f64],
    weights: Option<&[f64]>,
    groups: &[usize],
    cfg: &CvConfig,
) -> Result<CvLasso> {
    let n = x.nrows();
    if groups.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: groups.len() });
    }
    let mut ids: Vec<usize> = groups.to_vec();
    ids.sort_unstable();
    ids.dedup();
    if cfg.folds < 2 || ids.len() < cfg.folds {
        return Err(Error::Validation(format!("{} groups cannot fill {} folds", ids.len(), cfg.folds)));
    }
    let w: Vec<f64> = weights.map_or_else(|| vec![1.0; n], <[f64]>::to_vec);
    let lmax = lambda_max(x, y, Some(&w))?;
    let lambdas = if lmax > 0.0 { lambda_grid(lmax, cfg.n_lambda, cfg.lambda_ratio) } else { vec![0.0] };
    let path = lasso_path(x, y, Some(&w), &lambdas)?;

    for attempt in 0..cfg.max_refolds.max(1) {
        let mut rng = seeds::stream(cfg.seed, &format!("cv-folds/{attempt}"));
        let mut order = ids.clone();
        order.shuffle(&mut rng);
        let fold_of_group: std::collections::HashMap<usize, usize> =
            order.iter().enumerate().map(|(k, &g)| (g, k % cfg.folds)).collect();
        let fold: Vec<usize> = groups.iter().map(|g| fold_of_group[g]).collect();
        match cv_errors(x, y, &w, &fold, cfg.folds, &lambdas) {
            Ok(cv_error) => {
                let best = cv_error
                    .iter()
                    .enumerate()
                    .min_by(|a, b| a.1.total_cmp(b.1))
                    .map(|(k, _)| k)
                    .expect("non-empty lambda grid");
                return Ok(CvLasso { lambdas, cv_error, best, path });
            }
            Err(Error::Degenerate(msg)) => {
                log::warn!("cross-validation fold assignment {attempt} degenerate ({msg}); refolding");
            }
            Err(e) => return Err(e),
        }
    }
    Err(Error::Degenerate(format!("no usable fold assignment in {} attempts", cfg.max_refolds)))
}

fn cv_errors(
    x: &DMatrix<f64>,
    y: &[f64],
    w: &[f64],
    fold: &[usize],
    folds: usize,
    lambdas: &[f64],
) -> Result<Vec<f64>> {
    let n = x.nrows();
    let mut err = vec![0.0; lambdas.len()];
    let mut wsum = 0.0;
    for k in 0..folds {
        let train: Vec<usize> = (0..n).filter(|&r| fold[r] != k).collect();
        let test: Vec<usize> = (0..n).filter(|&r| fold[r] == k).collect();
        let yt: Vec<f64> = train.iter().map(|&r| y[r]).collect();
        let first = yt[0];
        if yt.iter().all(|&v| v == first) {
            return Err(Error::Degenerate(format!("constant outcome in training fold {k}")));
        }
        let xt = x.select_rows(&train);
        let wt: Vec<f64> = train.iter().map(|&r| w[r]).collect();
        let fits = lasso_path(&xt, &yt, Some(&wt), lambdas)?;
        for (e, fit) in err.iter_mut().zip(&fits) {
            for &r in &test {
                let pred = fit.intercept + x.row(r).iter().zip(&fit.coef).map(|(x, b)| x * b).sum::<f64>();
                *e += w[r] * (y[r] - pred).powi(2);
            }
        }
        wsum += test.iter().map(|&r| w[r]).sum::<f64>();
    }
    Ok(err.into_iter().map(|e| e / wsum).collect())
}
