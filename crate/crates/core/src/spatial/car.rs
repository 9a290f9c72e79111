use std::f64::consts::PI;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::spatial::{AdjacencyMatrix, EnvelopeCholesky};

/// CAR precision `(1/scale) · (D_w − c W)` with a cached factor of the
/// unscaled base matrix.
#[derive(Debug, Clone)]
pub struct CarPrecision {
    adjacency: Arc<AdjacencyMatrix>,
    c: f64,
    scale: f64,
    chol: Arc<EnvelopeCholesky>,
}

impl CarPrecision {
    pub fn n(&self) -> usize {
        self.adjacency.n()
    }

    pub fn adjacency(&self) -> &AdjacencyMatrix {
        &self.adjacency
    }

    pub fn correlation(&self) -> f64 {
        self.c
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Factor of `D_w − c W`.
    pub fn base_factor(&self) -> &EnvelopeCholesky {
        &self.chol
    }

    /// Same `(adjacency, c)` factor, different variance multiplier.
    pub fn with_scale(&self, scale: f64) -> Result<Self> {
        check_scale(scale)?;
        Ok(Self {
            scale,
            ..self.clone()
        })
    }

    /// `log det(D_w − c W)`.
    pub fn base_logdet(&self) -> f64 {
        self.chol.logdet()
    }

    /// Log-determinant of the full precision.
    pub fn logdet(&self) -> f64 {
        self.base_logdet() - self.n() as f64 * self.scale.ln()
    }

    /// `vᵀ · precision · v`.
    pub fn quad_form(&self, v: &[f64]) -> f64 {
        self.adjacency.car_quad_form(v, self.c) / self.scale
    }

    pub fn dense(&self) -> nalgebra::DMatrix<f64> {
        self.adjacency.dense_car_base(self.c) / self.scale
    }
}

fn check_scale(scale: f64) -> Result<()> {
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(Error::Domain(format!("CAR scale must be positive, got {scale}")));
    }
    Ok(())
}

/// Builds `(1/scale)(D_w − c W)` and factors it.
pub fn car_precision(adj: Arc<AdjacencyMatrix>, c: f64, scale: f64) -> Result<CarPrecision> {
    if !(c > -1.0 && c < 1.0) {
        return Err(Error::Domain(format!("CAR correlation {c} outside (-1, 1)")));
    }
    check_scale(scale)?;
    if let Some(&node) = adj.isolated_nodes().first() {
        return Err(Error::SingularPrecision { node });
    }
    let mut chol = EnvelopeCholesky::with_pattern(&adj);
    let self_term = if adj.is_identity() { c } else { 0.0 };
    chol.factor(&adj, |i| adj.degree(i) as f64 - self_term, -c)?;
    Ok(CarPrecision {
        adjacency: adj,
        c,
        scale,
        chol: Arc::new(chol),
    })
}

/// Zero-mean Gaussian log-density under the CAR precision.
pub fn car_log_density(v: &[f64], prec: &CarPrecision) -> Result<f64> {
    if v.len() != prec.n() {
        return Err(Error::DimensionMismatch {
            expected: prec.n(),
            found: v.len(),
        });
    }
    let n = prec.n() as f64;
    Ok(-0.5 * n * (2.0 * PI).ln() + 0.5 * prec.logdet() - 0.5 * prec.quad_form(v))
}

/// One exact draw `√scale · L⁻ᵀ z` with `z` standard normal.
pub fn sample_car<R: Rng + ?Sized>(prec: &CarPrecision, rng: &mut R) -> Vec<f64> {
    let sd = prec.scale.sqrt();
    let mut z: Vec<f64> = (0..prec.n()).map(|_| rng.sample(StandardNormal)).collect();
    prec.chol.solve_upper(&mut z);
    for x in &mut z {
        *x *= sd;
    }
    z
}
