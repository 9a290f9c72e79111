//! Full-conditional draws for every unknown of the regression model.
//!
//! Each update reads the current state and returns the new value of one
//! parameter block; the sweep in [`crate::gibbs::chain`] writes it back.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::gibbs::{ChainState, Model, PriorConfig};
use crate::samplers::{gumbel_max_categorical, sample_beta, sample_gig, sample_inverse_gamma, GigParams};
use crate::spatial::EnvelopeCholesky;

/// Smallest value a random-effect variance may take.
pub const PSI2_FLOOR: f64 = 1e-12;
const GIG_B_FLOOR: f64 = 1e-300;

/// Mean component left out of a residual.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Component {
    /// Keep everything: `Y − μ`.
    None,
    /// `α ᵀ x_i`.
    Fixed,
    /// All covariate random effects `η_i x_i`.
    Eta,
    /// A single column `η_{i(j)} x_{ij}`.
    EtaColumn(usize),
    /// Global spatial effect `δ_i`.
    Delta,
}

/// `Y_i` minus every mean component except `drop`, for each biopsy.
pub fn residual(state: &ChainState, model: &Model, drop: Component) -> Vec<Vec<f64>> {
    model
        .biopsies
        .iter()
        .enumerate()
        .map(|(i, b)| {
            let n = b.n();
            let fixed: f64 = if drop == Component::Fixed {
                0.0
            } else {
                state.alpha.iter().zip(&b.x).map(|(a, x)| a * x).sum()
            };
            let mut r: Vec<f64> = b.y.iter().map(|y| y - fixed).collect();
            if drop != Component::Eta {
                for j in 0..model.p {
                    if drop == Component::EtaColumn(j) {
                        continue;
                    }
                    let xj = b.x[j];
                    if xj == 0.0 {
                        continue;
                    }
                    for (r, e) in r.iter_mut().zip(state.eta_column(i, j, n)) {
                        *r -= e * xj;
                    }
                }
            }
            if drop != Component::Delta {
                for (r, d) in r.iter_mut().zip(&state.delta[i]) {
                    *r -= d;
                }
            }
            r
        })
        .collect()
}

/// Joint Gaussian draw of the fixed effects.
///
/// Only biopsy means of the partial residual carry information about `α`:
/// `Ȳ*_i ~ N(αᵀ x_i, ν²/n_i)`, so the precision is
/// `Γ⁻¹ + ν⁻² Σ n_i x_i x_iᵀ`.
pub fn update_alpha<R: Rng + ?Sized>(
    state: &ChainState,
    model: &Model,
    prior: &PriorConfig,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let p = model.p;
    let inv_nu2 = 1.0 / state.nu2;
    let mut prec: DMatrix<f64> = &model.xtnx * inv_nu2;
    for j in 0..p {
        let v = if state.gamma[j] { prior.sigma2_slab } else { prior.sigma2_spike };
        prec[(j, j)] += 1.0 / v;
    }
    let r = residual(state, model, Component::Fixed);
    let mut rhs = DVector::zeros(p);
    for (b, ri) in model.biopsies.iter().zip(&r) {
        let total: f64 = ri.iter().sum();
        for j in 0..p {
            rhs[j] += b.x[j] * total * inv_nu2;
        }
    }
    let chol = prec
        .cholesky()
        .ok_or_else(|| Error::Numerical("alpha posterior precision is singular".into()))?;
    let mean = chol.solve(&rhs);
    let z = DVector::from_fn(p, |_, _| rng.sample::<f64, _>(StandardNormal));
    let noise = chol
        .l()
        .transpose()
        .solve_upper_triangular(&z)
        .ok_or_else(|| Error::Numerical("alpha factor solve failed".into()))?;
    Ok((mean + noise).iter().copied().collect())
}

fn log_normal0(x: f64, var: f64) -> f64 {
    -0.5 * (2.0 * PI * var).ln() - 0.5 * x * x / var
}

/// `P(γ_j = 1 | α_j, P_γ)` for the normal spike-and-slab.
pub fn gamma_inclusion_probability(alpha_j: f64, p_gamma: f64, prior: &PriorConfig) -> f64 {
    let log_odds = log_normal0(alpha_j, prior.sigma2_slab) + p_gamma.ln()
        - log_normal0(alpha_j, prior.sigma2_spike)
        - (1.0 - p_gamma).ln();
    1.0 / (1.0 + (-log_odds).exp())
}

pub fn update_gamma<R: Rng + ?Sized>(state: &ChainState, prior: &PriorConfig, rng: &mut R) -> Vec<bool> {
    state
        .alpha
        .iter()
        .map(|&a| rng.random::<f64>() < gamma_inclusion_probability(a, state.p_gamma, prior))
        .collect()
}

/// Beta–Bernoulli update shared by `P_γ` and `P_d`.
pub fn update_inclusion_rate<R: Rng + ?Sized>(
    indicators: &[bool],
    beta: (f64, f64),
    rng: &mut R,
) -> Result<f64> {
    let on = indicators.iter().filter(|&&b| b).count() as f64;
    let off = indicators.len() as f64 - on;
    sample_beta(beta.0 + on, beta.1 + off, rng)
}

pub fn update_p_gamma<R: Rng + ?Sized>(state: &ChainState, prior: &PriorConfig, rng: &mut R) -> Result<f64> {
    update_inclusion_rate(&state.gamma, prior.beta_gamma, rng)
}

pub fn update_p_d<R: Rng + ?Sized>(state: &ChainState, prior: &PriorConfig, rng: &mut R) -> Result<f64> {
    update_inclusion_rate(&state.d, prior.beta_d, rng)
}

/// Column-by-column Gaussian draws of the covariate random effects.
///
/// Column `j` of biopsy `i` has precision `ψ_j⁻² Q_i + (x_ij²/ν²) I` and
/// canonical mean `(x_ij/ν²) r`, with `r` the residual excluding only that
/// column. The residual is refreshed after every column so later columns
/// condition on the new draws.
pub fn update_eta<R: Rng + ?Sized>(
    state: &ChainState,
    model: &Model,
    rng: &mut R,
) -> Result<Vec<Vec<f64>>> {
    let p = model.p;
    let inv_nu2 = 1.0 / state.nu2;
    let full = residual(state, model, Component::None);
    let mut out = state.eta.clone();
    let c = model.eta_corr;
    let mut z = Vec::new();
    let mut w = Vec::new();
    for (i, (b, mut r)) in model.biopsies.iter().zip(full).enumerate() {
        let n = b.n();
        let adj = model.eta_structure(i);
        let spectral = model.eta_spectral[i].as_deref();
        let self_term = if adj.is_identity() { c } else { 0.0 };
        let mut chol = spectral.is_none().then(|| EnvelopeCholesky::with_pattern(adj));
        w.resize(n, 0.0);
        let eta_i = &mut out[i];
        for j in 0..p {
            let x = b.x[j];
            let col = &mut eta_i[j * n..(j + 1) * n];
            for (r, e) in r.iter_mut().zip(col.iter()) {
                *r += e * x;
            }
            let inv_psi2 = 1.0 / state.psi2[j].max(PSI2_FLOOR);
            let lik = x * x * inv_nu2;
            for (e, r) in col.iter_mut().zip(r.iter()) {
                *e = x * inv_nu2 * r;
            }
            z.clear();
            z.extend((0..n).map(|_| rng.sample::<f64, _>(StandardNormal)));
            match (spectral, chol.as_mut()) {
                (Some(sp), _) => sp.sample_canonical(inv_psi2, lik, col, &z, &mut w),
                (None, Some(chol)) => {
                    chol.factor(adj, |s| inv_psi2 * (adj.degree(s) as f64 - self_term) + lik, -c * inv_psi2)?;
                    chol.sample_canonical(col, &z);
                }
                (None, None) => unreachable!("one solver is always present"),
            }
            for (r, e) in r.iter_mut().zip(col.iter()) {
                *r -= e * x;
            }
        }
    }
    Ok(out)
}

/// Gaussian draw of the global spatial effect of every biopsy.
pub fn update_delta<R: Rng + ?Sized>(
    state: &ChainState,
    model: &Model,
    rng: &mut R,
) -> Result<Vec<Vec<f64>>> {
    let inv_nu2 = 1.0 / state.nu2;
    let inv_tau2 = 1.0 / state.tau2;
    let rho = state.rho;
    let r = residual(state, model, Component::Delta);
    let mut out = Vec::with_capacity(model.n_biopsies());
    for (b, ri) in model.biopsies.iter().zip(r) {
        let adj = &b.adjacency;
        let mut chol = EnvelopeCholesky::with_pattern(adj);
        chol.factor(adj, |s| inv_tau2 * adj.degree(s) as f64 + inv_nu2, -rho * inv_tau2)?;
        let mut v: Vec<f64> = ri.iter().map(|r| r * inv_nu2).collect();
        let z: Vec<f64> = (0..b.n()).map(|_| rng.sample(StandardNormal)).collect();
        chol.sample_canonical(&mut v, &z);
        out.push(v);
    }
    Ok(out)
}

/// GIG parameters of the full conditional of `ψ_j²`.
pub fn psi2_conditional(state: &ChainState, model: &Model, prior: &PriorConfig, j: usize) -> GigParams {
    let s = model.total_subregions() as f64;
    let mut b = 0.0;
    for (i, bio) in model.biopsies.iter().enumerate() {
        let col = state.eta_column(i, j, bio.n());
        b += model.eta_structure(i).car_quad_form(col, model.eta_corr);
    }
    if !(b > GIG_B_FLOOR) {
        log::debug!("psi2[{j}]: quadratic form {b:e} floored");
        b = GIG_B_FLOOR;
    }
    let xi2 = if state.d[j] { prior.xi2_slab } else { prior.xi2_spike };
    GigParams {
        a: 1.0 / xi2,
        b,
        c: -s / 2.0 + 0.5,
    }
}

pub fn update_psi2<R: Rng + ?Sized>(
    state: &ChainState,
    model: &Model,
    prior: &PriorConfig,
    rng: &mut R,
) -> Vec<f64> {
    (0..model.p)
        .map(|j| {
            let params = psi2_conditional(state, model, prior, j);
            sample_gig(&params, rng).max(PSI2_FLOOR)
        })
        .collect()
}

fn log_half_normal0(x: f64, var: f64) -> f64 {
    2f64.ln() + log_normal0(x, var)
}

/// `P(d_j = 1 | ψ_j, P_d)` for the half-normal spike-and-slab on `ψ_j`.
pub fn d_inclusion_probability(psi2_j: f64, p_d: f64, prior: &PriorConfig) -> f64 {
    let psi = psi2_j.sqrt();
    let log_odds = log_half_normal0(psi, prior.xi2_slab) + p_d.ln()
        - log_half_normal0(psi, prior.xi2_spike)
        - (1.0 - p_d).ln();
    1.0 / (1.0 + (-log_odds).exp())
}

pub fn update_d<R: Rng + ?Sized>(state: &ChainState, prior: &PriorConfig, rng: &mut R) -> Vec<bool> {
    state
        .psi2
        .iter()
        .map(|&v| rng.random::<f64>() < d_inclusion_probability(v, state.p_d, prior))
        .collect()
}

/// Inverse-gamma `(shape, rate)` of the conditional of `τ²`.
pub fn tau2_conditional(state: &ChainState, model: &Model, prior: &PriorConfig) -> (f64, f64) {
    let s = model.total_subregions() as f64;
    let q: f64 = model
        .biopsies
        .iter()
        .zip(&state.delta)
        .map(|(b, d)| b.adjacency.car_quad_form(d, state.rho))
        .sum();
    (prior.a_tau + s / 2.0, prior.b_tau + 0.5 * q)
}

pub fn update_tau2<R: Rng + ?Sized>(
    state: &ChainState,
    model: &Model,
    prior: &PriorConfig,
    rng: &mut R,
) -> Result<f64> {
    let (shape, rate) = tau2_conditional(state, model, prior);
    sample_inverse_gamma(shape, rate, rng)
}

/// Unnormalised log-probabilities of each `ρ` grid value.
pub fn rho_log_weights(state: &ChainState, model: &Model, prior: &PriorConfig) -> Vec<f64> {
    let (mut qd, mut qw) = (0.0, 0.0);
    for (b, d) in model.biopsies.iter().zip(&state.delta) {
        qd += b.adjacency.quad_degree(d);
        qw += b.adjacency.quad_adjacency(d);
    }
    prior
        .rho_grid
        .values
        .iter()
        .zip(&prior.rho_grid.probs)
        .zip(&model.rho_logdet)
        .map(|((&v, &pk), &ld)| {
            if pk == 0.0 {
                f64::NEG_INFINITY
            } else {
                0.5 * ld - 0.5 / state.tau2 * (qd - v * qw) + pk.ln()
            }
        })
        .collect()
}

/// Index into the `ρ` grid.
pub fn update_rho<R: Rng + ?Sized>(
    state: &ChainState,
    model: &Model,
    prior: &PriorConfig,
    rng: &mut R,
) -> Result<usize> {
    gumbel_max_categorical(&rho_log_weights(state, model, prior), rng)
}

/// Inverse-gamma `(shape, rate)` of the conditional of `ν²`.
pub fn nu2_conditional(state: &ChainState, model: &Model, prior: &PriorConfig) -> (f64, f64) {
    let s = model.total_subregions() as f64;
    let sse: f64 = residual(state, model, Component::None)
        .iter()
        .flatten()
        .map(|e| e * e)
        .sum();
    (prior.a_nu + s / 2.0, prior.b_nu + 0.5 * sse)
}

pub fn update_nu2<R: Rng + ?Sized>(
    state: &ChainState,
    model: &Model,
    prior: &PriorConfig,
    rng: &mut R,
) -> Result<f64> {
    let (shape, rate) = nu2_conditional(state, model, prior);
    sample_inverse_gamma(shape, rate, rng)
}

/// `Σ_i Σ_s log N(y_is; μ_is, ν²)`.
pub fn log_likelihood(state: &ChainState, model: &Model) -> f64 {
    let r = residual(state, model, Component::None);
    let s = model.total_subregions() as f64;
    let sse: f64 = r.iter().flatten().map(|e| e * e).sum();
    -0.5 * s * (2.0 * PI * state.nu2).ln() - 0.5 * sse / state.nu2
}
