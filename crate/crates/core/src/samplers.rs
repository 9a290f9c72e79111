//! Random-variate generators needed by the Gibbs sweep.
//!
//! All generators take the caller's random stream and have no other state.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::error::{Error, Result};

/// Generalised inverse Gaussian with density `∝ x^{c−1} exp(−(a x + b/x)/2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GigParams {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl GigParams {
    pub fn new(a: f64, b: f64, c: f64) -> Result<Self> {
        if !(a > 0.0) || !(b > 0.0) || !a.is_finite() || !b.is_finite() || !c.is_finite() {
            return Err(Error::Domain(format!(
                "GIG needs a > 0, b > 0, finite c; got a={a}, b={b}, c={c}"
            )));
        }
        Ok(Self { a, b, c })
    }

    /// Unnormalised log-density.
    pub fn log_kernel(&self, x: f64) -> f64 {
        (self.c - 1.0) * x.ln() - 0.5 * (self.a * x + self.b / x)
    }
}

/// Draws from GIG(a, b, c).
///
/// Works on the two-parameter form `x^{λ−1} exp(−ω(x + 1/x)/2)` with
/// `λ = |c|`, `ω = √(ab)`, then rescales by `√(b/a)` and inverts when
/// `c < 0`. The kernel is chosen by region of `(λ, ω)`: ratio-of-uniforms
/// with mode shift for `λ > 2` or `ω > 3`, ratio-of-uniforms without shift
/// for moderately sized parameters, and a three-piece dominating density
/// for `λ < 1` with small `ω`. Every acceptance test is done in log space so
/// `|c|` in the thousands is fine.
pub fn sample_gig<R: Rng + ?Sized>(params: &GigParams, rng: &mut R) -> f64 {
    let lambda = params.c.abs();
    let omega = (params.a * params.b).sqrt();
    let scale = (params.b / params.a).sqrt();
    let x = if lambda > 2.0 || omega > 3.0 {
        rou_shift(lambda, omega, rng)
    } else if lambda >= 1.0 - 2.25 * omega * omega || omega > 0.2 {
        rou_noshift(lambda, omega, rng)
    } else {
        three_region(lambda, omega, rng)
    };
    if params.c < 0.0 {
        scale / x
    } else {
        scale * x
    }
}

fn gig_mode(lambda: f64, omega: f64) -> f64 {
    if lambda >= 1.0 {
        (((lambda - 1.0) * (lambda - 1.0) + omega * omega).sqrt() + (lambda - 1.0)) / omega
    } else {
        omega / (((1.0 - lambda) * (1.0 - lambda) + omega * omega).sqrt() + (1.0 - lambda))
    }
}

fn open_unit<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    }
}

fn rou_shift<R: Rng + ?Sized>(lambda: f64, omega: f64, rng: &mut R) -> f64 {
    let t = 0.5 * (lambda - 1.0);
    let s = 0.25 * omega;
    let xm = gig_mode(lambda, omega);
    let log_sqrt_h = |x: f64| t * x.ln() - s * (x + 1.0 / x);
    let nc = log_sqrt_h(xm);

    // extremes of (x − m)·sqrt(h(x)) are roots of a cubic
    let a = -(2.0 * (lambda + 1.0) / omega + xm);
    let b = 2.0 * (lambda - 1.0) * xm / omega - 1.0;
    let c = xm;
    let p = b - a * a / 3.0;
    let q = 2.0 * a * a * a / 27.0 - a * b / 3.0 + c;
    let arg = (-q / (2.0 * (-(p * p * p) / 27.0).sqrt())).clamp(-1.0, 1.0);
    let fi = arg.acos();
    let fak = 2.0 * (-p / 3.0).sqrt();
    let y1 = fak * (fi / 3.0).cos() - a / 3.0;
    let y2 = fak * (fi / 3.0 + 4.0 / 3.0 * PI).cos() - a / 3.0;
    let uplus = (y1 - xm) * (log_sqrt_h(y1) - nc).exp();
    let uminus = (y2 - xm) * (log_sqrt_h(y2) - nc).exp();

    loop {
        let u = uminus + rng.random::<f64>() * (uplus - uminus);
        let v = open_unit(rng);
        let x = u / v + xm;
        if x > 0.0 && v.ln() <= log_sqrt_h(x) - nc {
            return x;
        }
    }
}

fn rou_noshift<R: Rng + ?Sized>(lambda: f64, omega: f64, rng: &mut R) -> f64 {
    let t = 0.5 * (lambda - 1.0);
    let s = 0.25 * omega;
    let xm = gig_mode(lambda, omega);
    let nc = t * xm.ln() - s * (xm + 1.0 / xm);
    let ym = ((lambda + 1.0) + ((lambda + 1.0) * (lambda + 1.0) + omega * omega).sqrt()) / omega;
    let um = (0.5 * (lambda + 1.0) * ym.ln() - s * (ym + 1.0 / ym) - nc).exp();
    loop {
        let u = um * rng.random::<f64>();
        let v = open_unit(rng);
        let x = u / v;
        if x > 0.0 && v.ln() <= t * x.ln() - s * (x + 1.0 / x) - nc {
            return x;
        }
    }
}

/// `0 ≤ λ < 1`, `ω ≤ 1`: constant / power / exponential hat pieces.
fn three_region<R: Rng + ?Sized>(lambda: f64, omega: f64, rng: &mut R) -> f64 {
    let xm = gig_mode(lambda, omega);
    let x0 = omega / (1.0 - lambda);
    let k0 = ((lambda - 1.0) * xm.ln() - 0.5 * omega * (xm + 1.0 / xm)).exp();
    let a0 = k0 * x0;
    let (k1, a1, k2, a2);
    if x0 >= 2.0 / omega {
        k1 = 0.0;
        a1 = 0.0;
        k2 = x0.powf(lambda - 1.0);
        a2 = k2 * 2.0 * (-omega * x0 / 2.0).exp() / omega;
    } else {
        k1 = (-omega).exp();
        a1 = if lambda == 0.0 {
            k1 * (2.0 / (omega * omega)).ln()
        } else {
            k1 / lambda * ((2.0 / omega).powf(lambda) - x0.powf(lambda))
        };
        k2 = (2.0 / omega).powf(lambda - 1.0);
        a2 = k2 * 2.0 * (-1.0f64).exp() / omega;
    }
    let total = a0 + a1 + a2;
    loop {
        let mut v = total * rng.random::<f64>();
        let (x, hx);
        if v <= a0 {
            x = x0 * v / a0;
            hx = k0;
        } else {
            v -= a0;
            if v <= a1 {
                if lambda == 0.0 {
                    x = omega * (omega.exp() * v).exp();
                    hx = k1 / x;
                } else {
                    x = (x0.powf(lambda) + lambda / k1 * v).powf(1.0 / lambda);
                    hx = k1 * x.powf(lambda - 1.0);
                }
            } else {
                v -= a1;
                let lo = x0.max(2.0 / omega);
                x = -2.0 / omega * ((-omega / 2.0 * lo).exp() - omega / (2.0 * k2) * v).ln();
                hx = k2 * (-omega / 2.0 * x).exp();
            }
        }
        if !(x > 0.0) || !x.is_finite() {
            continue;
        }
        let u = open_unit(rng) * hx;
        if u.ln() <= (lambda - 1.0) * x.ln() - omega / 2.0 * (x + 1.0 / x) {
            return x;
        }
    }
}

/// Index of `max_j (w_j + g_j)` with `g_j` i.i.d. standard Gumbel.
///
/// `−∞` weights are never selected. Uniforms are clamped away from 0 and 1
/// so the noise is always finite.
pub fn gumbel_max_categorical<R: Rng + ?Sized>(log_weights: &[f64], rng: &mut R) -> Result<usize> {
    if log_weights.is_empty() {
        return Err(Error::Domain("no categories".into()));
    }
    if log_weights.iter().any(|w| w.is_nan() || *w == f64::INFINITY) {
        return Err(Error::Domain("log-weights must be finite or -inf".into()));
    }
    const EPS: f64 = 1e-300;
    let mut best = None;
    let mut best_val = f64::NEG_INFINITY;
    for (j, &w) in log_weights.iter().enumerate() {
        let u: f64 = rng.random::<f64>().clamp(EPS, 1.0 - f64::EPSILON / 2.0);
        if w == f64::NEG_INFINITY {
            continue;
        }
        let g = -(-u.ln()).ln();
        let val = w + g;
        if best.is_none() || val > best_val {
            best = Some(j);
            best_val = val;
        }
    }
    best.ok_or_else(|| Error::Domain("all log-weights are -inf".into()))
}

/// `|z| · sd`.
pub fn sample_half_normal<R: Rng + ?Sized>(sd: f64, rng: &mut R) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    z.abs() * sd
}

/// Reciprocal of a Gamma(shape, rate) draw.
pub fn sample_inverse_gamma<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> Result<f64> {
    if !(shape > 0.0) || !(rate > 0.0) {
        return Err(Error::Domain(format!(
            "inverse gamma needs shape, rate > 0; got {shape}, {rate}"
        )));
    }
    let g = Gamma::new(shape, 1.0 / rate).map_err(|e| Error::Domain(e.to_string()))?;
    loop {
        let x = g.sample(rng);
        if x > 0.0 {
            return Ok(1.0 / x);
        }
    }
}

/// Beta(a, b) draw.
pub fn sample_beta<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> Result<f64> {
    rand_distr::Beta::new(a, b)
        .map(|d| d.sample(rng))
        .map_err(|e| Error::Domain(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn gig_rejects_bad_params() {
        assert!(GigParams::new(0.0, 1.0, 1.0).is_err());
        assert!(GigParams::new(1.0, -1.0, 1.0).is_err());
        assert!(GigParams::new(1.0, 1.0, f64::NAN).is_err());
    }

    #[test]
    fn gig_scaling_family() {
        // X ~ GIG(a, b, c)  =>  kX ~ GIG(a/k, b k, c); same uniforms give
        // exactly proportional draws because only the scale factor changes.
        let p = GigParams::new(2.0, 3.0, 0.7).unwrap();
        let k = 2.5;
        let q = GigParams::new(2.0 / k, 3.0 * k, 0.7).unwrap();
        for seed in 0..20 {
            let x = sample_gig(&p, &mut rng(seed));
            let y = sample_gig(&q, &mut rng(seed));
            assert!((k * x - y).abs() < 1e-9 * y, "{x} {y}");
        }
    }

    #[test]
    fn gig_reduces_to_inverse_gaussian() {
        // c = -1/2, a = 1, b = 1 is IG(mu = sqrt(b/a) = 1, lambda = b = 1): mean 1, var 1
        let p = GigParams::new(1.0, 1.0, -0.5).unwrap();
        let mut r = rng(3);
        let n = 200_000;
        let mean = (0..n).map(|_| sample_gig(&p, &mut r)).sum::<f64>() / n as f64;
        assert!((mean - 1.0).abs() < 3.0 / (n as f64).sqrt(), "{mean}");
    }

    #[test]
    fn gumbel_single_finite_entry() {
        let w = [f64::NEG_INFINITY, 0.3, f64::NEG_INFINITY];
        let mut r = rng(1);
        for _ in 0..100 {
            assert_eq!(gumbel_max_categorical(&w, &mut r).unwrap(), 1);
        }
    }

    #[test]
    fn gumbel_errors() {
        let mut r = rng(1);
        assert!(gumbel_max_categorical(&[], &mut r).is_err());
        assert!(gumbel_max_categorical(&[f64::NEG_INFINITY; 2], &mut r).is_err());
        assert!(gumbel_max_categorical(&[f64::NAN], &mut r).is_err());
    }

    #[test]
    fn gumbel_two_categories() {
        let w = [1f64.ln(), 3f64.ln()];
        let mut r = rng(2);
        let n = 100_000;
        let ones = (0..n).filter(|_| gumbel_max_categorical(&w, &mut r).unwrap() == 1).count();
        let f = ones as f64 / n as f64;
        assert!((f - 0.75).abs() < 0.01, "{f}");
    }

    #[test]
    fn half_normal_scale_family_and_sign() {
        for seed in 0..50 {
            let a = sample_half_normal(1.0, &mut rng(seed));
            let b = sample_half_normal(2.0, &mut rng(seed));
            assert!(a >= 0.0);
            assert_eq!(2.0 * a, b);
        }
    }

    #[test]
    fn half_normal_mean() {
        let mut r = rng(4);
        let n = 1_000_000;
        let xs: Vec<f64> = (0..n).map(|_| sample_half_normal(1.0, &mut r)).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let expect = (2.0 / PI).sqrt();
        let se = (1.0 - 2.0 / PI).sqrt() / (n as f64).sqrt();
        assert!((mean - expect).abs() < 3.0 * se, "{mean}");
    }

    #[test]
    fn inverse_gamma_mean_and_support() {
        let mut r = rng(5);
        let n = 400_000;
        let xs: Vec<f64> = (0..n).map(|_| sample_inverse_gamma(3.0, 2.0, &mut r).unwrap()).collect();
        assert!(xs.iter().all(|&x| x > 0.0));
        let mean = xs.iter().sum::<f64>() / n as f64;
        // var = rate^2 / ((shape-1)^2 (shape-2)) = 1
        assert!((mean - 1.0).abs() < 3.0 / (n as f64).sqrt(), "{mean}");
        let a = sample_inverse_gamma(3.0, 2.0, &mut rng(9)).unwrap();
        let b = sample_inverse_gamma(3.0, 2.0, &mut rng(9)).unwrap();
        assert_eq!(a, b);
        assert!(sample_inverse_gamma(0.0, 1.0, &mut r).is_err());
    }
}
