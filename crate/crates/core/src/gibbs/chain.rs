use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gibbs::updates::*;
use crate::gibbs::{ChainState, Model, PriorConfig, Variant};
use crate::seeds;
use crate::spatial::BiopsyGraph;

/// Chain length, burn-in, thinning and seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schedule {
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
}

impl Schedule {
    pub fn validate(&self) -> Result<()> {
        if self.burn_in >= self.iterations {
            return Err(Error::Validation(format!(
                "burn_in ({}) must be below iterations ({})",
                self.burn_in, self.iterations
            )));
        }
        if self.thin == 0 {
            return Err(Error::Validation("thin must be at least 1".into()));
        }
        Ok(())
    }

    /// Whether iteration `t` (1-based) is recorded.
    pub fn keeps(&self, t: usize) -> bool {
        t > self.burn_in && (t - self.burn_in).is_multiple_of(self.thin)
    }

    pub fn kept_draws(&self) -> usize {
        (self.iterations - self.burn_in) / self.thin
    }
}

/// Kept draws of a chain.
///
/// Scalars and length-`p` vectors are stored per draw. The sub-region
/// effects `η` and `δ` are only accumulated as posterior means, since a
/// per-draw copy grows with `S · p` and no summary needs more.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSamples {
    pub schedule: Schedule,
    pub variant: Variant,
    pub alpha: Vec<Vec<f64>>,
    pub gamma: Vec<Vec<bool>>,
    pub p_gamma: Vec<f64>,
    pub psi2: Vec<Vec<f64>>,
    pub d: Vec<Vec<bool>>,
    pub p_d: Vec<f64>,
    pub tau2: Vec<f64>,
    pub rho: Vec<f64>,
    pub nu2: Vec<f64>,
    pub eta_mean: Vec<Vec<f64>>,
    pub delta_mean: Vec<Vec<f64>>,
    /// Log-likelihood after every sweep, burn-in included.
    pub log_likelihood: Vec<f64>,
    pub final_state: ChainState,
}

impl PosteriorSamples {
    pub fn len(&self) -> usize {
        self.alpha.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alpha.is_empty()
    }

    pub fn p(&self) -> usize {
        self.final_state.alpha.len()
    }
}

/// One full scan in the fixed order α, γ, P_γ, η, ψ², d, P_d, δ, τ², ρ, ν².
pub fn sweep<R: Rng + ?Sized>(
    state: &mut ChainState,
    model: &Model,
    prior: &PriorConfig,
    rng: &mut R,
) -> Result<()> {
    state.alpha = update_alpha(state, model, prior, rng)?;
    state.gamma = update_gamma(state, prior, rng);
    state.p_gamma = update_p_gamma(state, prior, rng)?;
    state.eta = update_eta(state, model, rng)?;
    state.psi2 = update_psi2(state, model, prior, rng);
    state.d = update_d(state, prior, rng);
    state.p_d = update_p_d(state, prior, rng)?;
    state.delta = update_delta(state, model, rng)?;
    state.tau2 = update_tau2(state, model, prior, rng)?;
    let k = update_rho(state, model, prior, rng)?;
    state.set_rho(prior, k);
    state.nu2 = update_nu2(state, model, prior, rng)?;
    Ok(())
}

/// Builds the model from raw biopsies and runs one chain.
pub fn run_chain(
    biopsies: &[BiopsyGraph],
    prior: &PriorConfig,
    schedule: Schedule,
    variant: Variant,
    standardize: bool,
) -> Result<PosteriorSamples> {
    let model = Model::new(biopsies, prior, variant, standardize)?;
    run_model_chain(&model, prior, schedule)
}

pub fn run_model_chain(model: &Model, prior: &PriorConfig, schedule: Schedule) -> Result<PosteriorSamples> {
    schedule.validate()?;
    let mut rng = seeds::stream(schedule.seed, "gibbs");
    let mut state = ChainState::initial(model, prior);
    let kept = schedule.kept_draws();
    let mut out = PosteriorSamples {
        schedule,
        variant: model.variant,
        alpha: Vec::with_capacity(kept),
        gamma: Vec::with_capacity(kept),
        p_gamma: Vec::with_capacity(kept),
        psi2: Vec::with_capacity(kept),
        d: Vec::with_capacity(kept),
        p_d: Vec::with_capacity(kept),
        tau2: Vec::with_capacity(kept),
        rho: Vec::with_capacity(kept),
        nu2: Vec::with_capacity(kept),
        eta_mean: state.eta.iter().map(|e| vec![0.0; e.len()]).collect(),
        delta_mean: state.delta.iter().map(|e| vec![0.0; e.len()]).collect(),
        log_likelihood: Vec::with_capacity(schedule.iterations),
        final_state: state.clone(),
    };

    for t in 1..=schedule.iterations {
        sweep(&mut state, model, prior, &mut rng).map_err(|e| {
            log::error!("iteration {t}: {e}; state {}", state.dump());
            e
        })?;
        let ll = log_likelihood(&state, model);
        if !ll.is_finite() || !state.is_finite() {
            return Err(Error::Numerical(format!(
                "non-finite chain at iteration {t}: log-likelihood {ll}; {}",
                state.dump()
            )));
        }
        out.log_likelihood.push(ll);
        if schedule.keeps(t) {
            out.alpha.push(state.alpha.clone());
            out.gamma.push(state.gamma.clone());
            out.p_gamma.push(state.p_gamma);
            out.psi2.push(state.psi2.clone());
            out.d.push(state.d.clone());
            out.p_d.push(state.p_d);
            out.tau2.push(state.tau2);
            out.rho.push(state.rho);
            out.nu2.push(state.nu2);
            accumulate(&mut out.eta_mean, &state.eta);
            accumulate(&mut out.delta_mean, &state.delta);
        }
    }
    let n = out.alpha.len().max(1) as f64;
    for v in out.eta_mean.iter_mut().chain(out.delta_mean.iter_mut()).flatten() {
        *v /= n;
    }
    out.final_state = state;
    Ok(out)
}

fn accumulate(sum: &mut [Vec<f64>], x: &[Vec<f64>]) {
    for (s, x) in sum.iter_mut().zip(x) {
        for (s, x) in s.iter_mut().zip(x) {
            *s += x;
        }
    }
}
