//! Distribution-test helpers shared by the integration targets.
#![allow(dead_code)]

use statrs::distribution::{ContinuousCDF, Normal};

/// Kolmogorov–Smirnov distance between a sample and a continuous CDF.
pub fn ks_continuous(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    s.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// Largest CDF gap between category counts and probabilities.
pub fn ks_discrete(counts: &[usize], probs: &[f64]) -> f64 {
    let n: usize = counts.iter().sum();
    let (mut fe, mut ft, mut d) = (0.0, 0.0, 0.0f64);
    for (c, p) in counts.iter().zip(probs) {
        fe += *c as f64 / n as f64;
        ft += p;
        d = d.max((fe - ft).abs());
    }
    d
}

pub fn std_normal_cdf(x: f64) -> f64 {
    Normal::new(0.0, 1.0).unwrap().cdf(x)
}

/// CDF of a univariate density known up to a constant, tabulated by
/// trapezoid quadrature in a transformed coordinate `u` where the support
/// is the whole real line.
pub struct NumericCdf {
    u0: f64,
    du: f64,
    cdf: Vec<f64>,
    to_u: fn(f64) -> f64,
}

fn ln_id(x: f64) -> f64 {
    x.ln()
}

fn logit(x: f64) -> f64 {
    (x / (1.0 - x)).ln()
}

fn ident(x: f64) -> f64 {
    x
}

impl NumericCdf {
    fn build(mut log_u: impl FnMut(f64) -> f64, to_u: fn(f64) -> f64, lo: f64, hi: f64) -> Self {
        // coarse scan for the bulk, then a fine grid over it
        let coarse = 40_000;
        let step = (hi - lo) / coarse as f64;
        let vals: Vec<f64> = (0..=coarse).map(|k| log_u(lo + k as f64 * step)).collect();
        let max = vals.iter().copied().filter(|v| v.is_finite()).fold(f64::NEG_INFINITY, f64::max);
        assert!(max.is_finite(), "density vanishes on the scan range");
        let keep: Vec<usize> = (0..=coarse).filter(|&k| vals[k] > max - 45.0).collect();
        let a = lo + (keep[0].saturating_sub(2)) as f64 * step;
        let b = lo + ((keep[keep.len() - 1] + 2).min(coarse)) as f64 * step;
        let fine = 400_000;
        let du = (b - a) / fine as f64;
        let dens: Vec<f64> = (0..=fine)
            .map(|k| {
                let v = log_u(a + k as f64 * du) - max;
                if v.is_finite() { v.exp() } else { 0.0 }
            })
            .collect();
        let mut cdf = vec![0.0; fine + 1];
        for k in 1..=fine {
            cdf[k] = cdf[k - 1] + 0.5 * (dens[k - 1] + dens[k]) * du;
        }
        let total = cdf[fine];
        for c in &mut cdf {
            *c /= total;
        }
        Self { u0: a, du, cdf, to_u }
    }

    /// Density on `(0, ∞)` given `log f(x)`.
    pub fn positive(mut log_f: impl FnMut(f64) -> f64) -> Self {
        Self::build(|u| log_f(u.exp()) + u, ln_id, -80.0, 80.0)
    }

    /// Density on `(0, 1)` given `log f(x)`.
    pub fn unit(mut log_f: impl FnMut(f64) -> f64) -> Self {
        Self::build(
            |u| {
                let x = 1.0 / (1.0 + (-u).exp());
                log_f(x) + x.ln() + (1.0 - x).ln()
            },
            logit,
            -60.0,
            60.0,
        )
    }

    /// Density on the real line given `log f(x)`, scanned over `[lo, hi]`.
    pub fn real(log_f: impl FnMut(f64) -> f64, lo: f64, hi: f64) -> Self {
        Self::build(log_f, ident, lo, hi)
    }

    pub fn cdf(&self, x: f64) -> f64 {
        let t = ((self.to_u)(x) - self.u0) / self.du;
        if !(t > 0.0) {
            return 0.0;
        }
        let k = t.floor() as usize;
        if k + 1 >= self.cdf.len() {
            return 1.0;
        }
        let w = t - k as f64;
        self.cdf[k] * (1.0 - w) + self.cdf[k + 1] * w
    }
}
