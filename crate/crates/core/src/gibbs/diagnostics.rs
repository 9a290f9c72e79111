use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GewekeResult {
    pub z: f64,
    pub p: f64,
}

/// Geweke comparison of the means of the first `frac_a` and last `frac_b`
/// of a trace, each with an autoregressive spectral estimate of the
/// variance of its mean.
pub fn geweke_diagnostic(trace: &[f64], frac_a: f64, frac_b: f64) -> Result<GewekeResult> {
    if trace.len() < 100 {
        return Err(Error::Degenerate(format!(
            "Geweke diagnostic needs at least 100 values, got {}",
            trace.len()
        )));
    }
    if !(frac_a > 0.0 && frac_b > 0.0 && frac_a + frac_b <= 1.0) {
        return Err(Error::Domain(format!("bad segment fractions {frac_a}, {frac_b}")));
    }
    if trace.iter().any(|v| !v.is_finite()) {
        return Err(Error::Degenerate("non-finite value in trace".into()));
    }
    let n = trace.len();
    let a = &trace[..((frac_a * n as f64).floor() as usize).max(2)];
    let b = &trace[n - ((frac_b * n as f64).floor() as usize).max(2)..];
    let va = spectrum0(a)? / a.len() as f64;
    let vb = spectrum0(b)? / b.len() as f64;
    let z = (mean(a) - mean(b)) / (va + vb).sqrt();
    if !z.is_finite() {
        return Err(Error::Degenerate("Geweke statistic is not finite".into()));
    }
    let p = 2.0 * (1.0 - Normal::standard().cdf(z.abs()));
    Ok(GewekeResult { z, p })
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Spectral density at frequency zero from a Yule–Walker autoregression
/// whose order is chosen by AIC.
pub fn spectrum0(x: &[f64]) -> Result<f64> {
    let n = x.len();
    let m = mean(x);
    let max_order = ((10.0 * (n as f64).log10()).floor() as usize).min(n - 1);
    let acov: Vec<f64> = (0..=max_order)
        .map(|k| x[..n - k].iter().zip(&x[k..]).map(|(a, b)| (a - m) * (b - m)).sum::<f64>() / n as f64)
        .collect();
    let scale = acov[0].abs().max(m.abs()).max(f64::MIN_POSITIVE);
    if acov[0] <= 1e-24 * scale * scale || acov[0] == 0.0 {
        return Err(Error::Degenerate("trace has zero variance".into()));
    }

    // Levinson–Durbin recursion, remembering the coefficients at each order.
    let mut phi: Vec<f64> = Vec::new();
    let mut v = acov[0];
    let mut best = (n as f64 * v.ln(), 0usize, v, Vec::new());
    for k in 1..=max_order {
        let num = acov[k] - phi.iter().enumerate().map(|(j, p)| p * acov[k - 1 - j]).sum::<f64>();
        let refl = num / v;
        if !refl.is_finite() || refl.abs() >= 1.0 {
            break;
        }
        let prev = phi.clone();
        phi.push(refl);
        for j in 0..k - 1 {
            phi[j] = prev[j] - refl * prev[k - 2 - j];
        }
        v *= 1.0 - refl * refl;
        let aic = n as f64 * v.ln() + 2.0 * k as f64;
        if aic < best.0 {
            best = (aic, k, v, phi.clone());
        }
    }
    let (_, order, v, coef) = best;
    let var_pred = v * n as f64 / (n - (order + 1)) as f64;
    let denom = 1.0 - coef.iter().sum::<f64>();
    Ok(var_pred / (denom * denom))
}
