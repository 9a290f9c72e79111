use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hsm::{Mark, MarkedPattern, Point, PointIndex, Window};

/// Parameters of the two-type hierarchical Strauss density
/// `f(x) ∝ exp(n₁β₁ + n₂β₂ + θ S_R(x₁, x₂))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HsmParams {
    pub beta1: f64,
    pub beta2: f64,
    pub theta: f64,
    pub r: f64,
}

impl HsmParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.r > 0.0) || !self.r.is_finite() {
            return Err(Error::Domain(format!("interaction radius must be positive, got {}", self.r)));
        }
        if ![self.beta1, self.beta2, self.theta].iter().all(|v| v.is_finite()) {
            return Err(Error::Domain("non-finite HSM parameter".into()));
        }
        Ok(())
    }
}

/// Number of (type-1, type-2) pairs at distance at most `r`.
pub fn s_r_count(pattern: &MarkedPattern, r: f64) -> usize {
    let index = PointIndex::new(&pattern.points_2, &pattern.window, r);
    pattern.points_1.iter().map(|&p| index.count_within(p)).sum()
}

/// Conditional intensity of adding a point of type `mark` at `u`.
///
/// The density has no within-type term, so the neighbour count only
/// involves points of the other type and the add-point and remove-point
/// cases coincide.
pub fn papangelou(u: Point, mark: Mark, pattern: &MarkedPattern, params: &HsmParams) -> Result<f64> {
    if !pattern.window.contains(u) {
        return Err(Error::Domain(format!("location ({}, {}) outside window", u[0], u[1])));
    }
    let (beta, other) = match mark {
        Mark::First => (params.beta1, &pattern.points_2),
        Mark::Second => (params.beta2, &pattern.points_1),
    };
    let r2 = params.r * params.r;
    let c = other
        .iter()
        .filter(|p| (p[0] - u[0]).powi(2) + (p[1] - u[1]).powi(2) <= r2)
        .count();
    Ok((beta + params.theta * c as f64).exp())
}

/// Quadrature nodes and weights over a window.
#[derive(Debug, Clone, PartialEq)]
pub struct Quadrature {
    pub nodes: Vec<Point>,
    pub weights: Vec<f64>,
}

/// Regular centre-point grid with `resolution` nodes per axis and equal
/// weights.
pub fn make_quadrature(window: &Window, resolution: usize) -> Result<Quadrature> {
    if resolution < 2 {
        return Err(Error::Domain(format!("quadrature resolution must be at least 2, got {resolution}")));
    }
    let (dx, dy) = (window.width() / resolution as f64, window.height() / resolution as f64);
    let mut nodes = Vec::with_capacity(resolution * resolution);
    for iy in 0..resolution {
        for ix in 0..resolution {
            nodes.push([window.x0 + (ix as f64 + 0.5) * dx, window.y0 + (iy as f64 + 0.5) * dy]);
        }
    }
    let w = window.area() / nodes.len() as f64;
    Ok(Quadrature { weights: vec![w; nodes.len()], nodes })
}

/// Sufficient statistics of the log-pseudolikelihood for a fixed pattern,
/// radius and quadrature: counts, `S_R`, and the quadrature weight carried
/// by each distinct neighbour count.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoLikelihood {
    pub n1: usize,
    pub n2: usize,
    pub s_r: usize,
    /// `(c, Σw)` over nodes with `c` type-2 neighbours (drives type-1 intensity).
    pub groups_1: Vec<(f64, f64)>,
    /// `(c, Σw)` over nodes with `c` type-1 neighbours (drives type-2 intensity).
    pub groups_2: Vec<(f64, f64)>,
}

impl PseudoLikelihood {
    pub fn new(pattern: &MarkedPattern, r: f64, quad: &Quadrature) -> Self {
        let idx_1 = PointIndex::new(&pattern.points_1, &pattern.window, r);
        let idx_2 = PointIndex::new(&pattern.points_2, &pattern.window, r);
        let mut g1: BTreeMap<usize, f64> = BTreeMap::new();
        let mut g2: BTreeMap<usize, f64> = BTreeMap::new();
        for (&u, &w) in quad.nodes.iter().zip(&quad.weights) {
            *g1.entry(idx_2.count_within(u)).or_default() += w;
            *g2.entry(idx_1.count_within(u)).or_default() += w;
        }
        let s_r = pattern.points_1.iter().map(|&p| idx_2.count_within(p)).sum();
        Self {
            n1: pattern.n1(),
            n2: pattern.n2(),
            s_r,
            groups_1: g1.into_iter().map(|(c, w)| (c as f64, w)).collect(),
            groups_2: g2.into_iter().map(|(c, w)| (c as f64, w)).collect(),
        }
    }

    /// `Σ log λ(x_i) − Σ_u w_u (λ₁(u) + λ₂(u))`. Every type-1 point
    /// contributes `β₁ + θ·c₂` and every type-2 point `β₂ + θ·c₁`, so the
    /// point sum is `n₁β₁ + n₂β₂ + 2θS_R`.
    pub fn eval(&self, beta1: f64, beta2: f64, theta: f64) -> f64 {
        let points = self.n1 as f64 * beta1 + self.n2 as f64 * beta2 + 2.0 * theta * self.s_r as f64;
        let integral_1: f64 = self.groups_1.iter().map(|(c, w)| w * (beta1 + theta * c).exp()).sum();
        let integral_2: f64 = self.groups_2.iter().map(|(c, w)| w * (beta2 + theta * c).exp()).sum();
        points - integral_1 - integral_2
    }
}

pub fn log_pseudolikelihood(params: &HsmParams, pattern: &MarkedPattern, quad: &Quadrature) -> Result<f64> {
    params.validate()?;
    Ok(PseudoLikelihood::new(pattern, params.r, quad).eval(params.beta1, params.beta2, params.theta))
}
