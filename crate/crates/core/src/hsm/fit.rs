use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hsm::{make_quadrature, MarkedPattern, PseudoLikelihood};

/// Independent normal priors on `(β₁, β₂, θ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HsmPrior {
    pub mean: [f64; 3],
    pub sd: [f64; 3],
}

impl Default for HsmPrior {
    fn default() -> Self {
        Self { mean: [0.0; 3], sd: [10.0, 10.0, 2.0] }
    }
}

impl HsmPrior {
    fn log_density(&self, x: &[f64; 3]) -> f64 {
        (0..3).map(|k| -0.5 * ((x[k] - self.mean[k]) / self.sd[k]).powi(2)).sum()
    }
}

/// Random-walk Metropolis settings for the pseudo-posterior.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MhConfig {
    pub iterations: usize,
    pub burn_in: usize,
    /// Initial proposal standard deviations for `(β₁, β₂, θ)`.
    pub step: [f64; 3],
    /// Quadrature nodes per axis.
    pub resolution: usize,
}

impl Default for MhConfig {
    fn default() -> Self {
        Self { iterations: 6000, burn_in: 2000, step: [0.1, 0.1, 0.1], resolution: 48 }
    }
}

/// Post-burn-in draws of `(β₁, β₂, θ)` and their summaries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HsmPosterior {
    pub draws: Vec<[f64; 3]>,
    /// Per-coordinate acceptance rates after adaptation stopped.
    pub acceptance: [f64; 3],
    pub step: [f64; 3],
    pub mean: [f64; 3],
    pub sd: [f64; 3],
}

impl HsmPosterior {
    pub fn theta_mean(&self) -> f64 {
        self.mean[2]
    }

    pub fn theta_sd(&self) -> f64 {
        self.sd[2]
    }

    pub fn theta_draws(&self) -> Vec<f64> {
        self.draws.iter().map(|d| d[2]).collect()
    }
}

const TARGET_ACCEPTANCE: f64 = 0.44;

/// Metropolis-within-Gibbs on the log-pseudolikelihood plus log-prior.
/// Proposal scales adapt by Robbins–Monro during burn-in and are frozen
/// afterwards.
pub fn fit_hsm_mh<R: Rng + ?Sized>(
    pattern: &MarkedPattern,
    r: f64,
    prior: &HsmPrior,
    mh: &MhConfig,
    rng: &mut R,
) -> Result<HsmPosterior> {
    if pattern.n1() == 0 || pattern.n2() == 0 {
        return Err(Error::Unidentified(format!(
            "interaction needs both types (n1 = {}, n2 = {})",
            pattern.n1(),
            pattern.n2()
        )));
    }
    if !(r > 0.0) {
        return Err(Error::Domain(format!("interaction radius must be positive, got {r}")));
    }
    if mh.burn_in >= mh.iterations {
        return Err(Error::Validation("MH burn_in must be below iterations".into()));
    }
    if prior.sd.iter().any(|&s| !(s > 0.0)) || mh.step.iter().any(|&s| !(s > 0.0)) {
        return Err(Error::Validation("prior sd and MH steps must be positive".into()));
    }
    let quad = make_quadrature(&pattern.window, mh.resolution)?;
    let pl = PseudoLikelihood::new(pattern, r, &quad);
    let target = |x: &[f64; 3]| {
        let v = pl.eval(x[0], x[1], x[2]) + prior.log_density(x);
        if v.is_nan() {
            f64::NEG_INFINITY
        } else {
            v
        }
    };

    let area = pattern.window.area();
    let mut x = [(pattern.n1() as f64 / area).ln(), (pattern.n2() as f64 / area).ln(), 0.0];
    let mut lp = target(&x);
    let mut log_step = mh.step.map(f64::ln);
    let mut accepted = [0usize; 3];
    let mut draws = Vec::with_capacity(mh.iterations - mh.burn_in);

    for t in 0..mh.iterations {
        for k in 0..3 {
            let mut y = x;
            y[k] += log_step[k].exp() * rng.sample::<f64, _>(StandardNormal);
            let lq = target(&y);
            let accept = lq - lp >= 0.0 || rng.random::<f64>().ln() < lq - lp;
            if accept {
                x = y;
                lp = lq;
            }
            if t < mh.burn_in {
                let gain = (t as f64 + 1.0).powf(-0.6);
                log_step[k] += gain * (f64::from(u8::from(accept)) - TARGET_ACCEPTANCE);
            } else if accept {
                accepted[k] += 1;
            }
        }
        if t >= mh.burn_in {
            draws.push(x);
        }
    }

    let n = draws.len() as f64;
    let acceptance = accepted.map(|a| a as f64 / n);
    if acceptance.iter().any(|a| !(0.1..=0.6).contains(a)) {
        log::warn!("HSM Metropolis acceptance {acceptance:?} outside [0.1, 0.6]");
    }
    let mut mean = [0.0; 3];
    let mut sd = [0.0; 3];
    for k in 0..3 {
        mean[k] = draws.iter().map(|d| d[k]).sum::<f64>() / n;
        sd[k] = (draws.iter().map(|d| (d[k] - mean[k]).powi(2)).sum::<f64>() / (n - 1.0).max(1.0)).sqrt();
    }
    Ok(HsmPosterior { draws, acceptance, step: log_step.map(f64::exp), mean, sd })
}
