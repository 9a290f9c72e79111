use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::spatial::{car_precision, AdjacencyMatrix};
use std::sync::Arc;

/// `αᵀ Σ_x α / var(Y)`.
pub fn snr_fixed(alpha: &[f64], sigma_x: &DMatrix<f64>, var_y: f64) -> Result<f64> {
    if !(var_y > 0.0) {
        return Err(Error::Domain(format!("var(Y) must be positive, got {var_y}")));
    }
    if sigma_x.nrows() != alpha.len() || sigma_x.ncols() != alpha.len() {
        return Err(Error::DimensionMismatch { expected: alpha.len(), found: sigma_x.nrows() });
    }
    let a = nalgebra::DVector::from_column_slice(alpha);
    Ok((a.transpose() * sigma_x * &a)[(0, 0)] / var_y)
}

/// Diagonal of `(D_w − c W)⁻¹`, by one sparse solve per node.
pub fn car_inverse_diagonal(adj: &Arc<AdjacencyMatrix>, c: f64) -> Result<Vec<f64>> {
    let prec = car_precision(adj.clone(), c, 1.0)?;
    let n = adj.n();
    let mut e = vec![0.0; n];
    Ok((0..n)
        .map(|j| {
            e.iter_mut().for_each(|v| *v = 0.0);
            e[j] = 1.0;
            prec.base_factor().solve(&mut e);
            e[j]
        })
        .collect())
}

/// Mean over sub-regions of `Σ_k ψ_k² [(D_w − φW)⁻¹]_jj (μ_k² + σ_k²)`,
/// divided by `var(Y)`.
pub fn snr_random(
    psi2: &[f64],
    phi: f64,
    adj: &Arc<AdjacencyMatrix>,
    mu: &[f64],
    sigma2: &[f64],
    var_y: f64,
) -> Result<f64> {
    if !(var_y > 0.0) {
        return Err(Error::Domain(format!("var(Y) must be positive, got {var_y}")));
    }
    if mu.len() != psi2.len() || sigma2.len() != psi2.len() {
        return Err(Error::DimensionMismatch { expected: psi2.len(), found: mu.len().min(sigma2.len()) });
    }
    let weight: f64 = psi2.iter().zip(mu).zip(sigma2).map(|((p, m), s)| p * (m * m + s)).sum();
    let diag = car_inverse_diagonal(adj, phi)?;
    let mean_diag = diag.iter().sum::<f64>() / diag.len() as f64;
    Ok(weight * mean_diag / var_y)
}
