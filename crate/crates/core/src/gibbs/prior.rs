use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Discrete prior on the global CAR correlation.
#[derive(Debug, Clone, PartialEq)]
pub struct RhoGrid {
    pub values: Vec<f64>,
    pub probs: Vec<f64>,
}

impl RhoGrid {
    /// `K` equispaced values `0, 1/K, …, (K−1)/K` with equal mass.
    pub fn uniform(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::Validation("rho grid needs at least one value".into()));
        }
        Ok(Self {
            values: (0..k).map(|i| i as f64 / k as f64).collect(),
            probs: vec![1.0 / k as f64; k],
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Index of the smallest grid value.
    pub fn argmin(&self) -> usize {
        self.values
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() || self.values.len() != self.probs.len() {
            return Err(Error::Validation(
                "rho_grid: values and probs must be non-empty and of equal length".into(),
            ));
        }
        for &v in &self.values {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::Validation(format!("rho_grid: value {v} outside [0, 1)")));
            }
        }
        let mut sorted = self.values.clone();
        sorted.sort_by(f64::total_cmp);
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Validation("rho_grid: values must be distinct".into()));
        }
        if self.probs.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
            return Err(Error::Validation("rho_grid: probabilities must lie in [0, 1]".into()));
        }
        let total: f64 = self.probs.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Validation(format!(
                "rho_grid: probabilities sum to {total}, not 1"
            )));
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum RhoGridRepr {
    Explicit { values: Vec<f64>, probs: Vec<f64> },
    Shorthand(String),
}

impl Serialize for RhoGrid {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        RhoGridRepr::Explicit {
            values: self.values.clone(),
            probs: self.probs.clone(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for RhoGrid {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        match RhoGridRepr::deserialize(d)? {
            RhoGridRepr::Explicit { values, probs } => Ok(Self { values, probs }),
            RhoGridRepr::Shorthand(s) => {
                let k = s
                    .strip_prefix("uniform:")
                    .and_then(|k| k.trim().parse::<usize>().ok())
                    .ok_or_else(|| serde::de::Error::custom(format!("bad rho_grid '{s}', expected \"uniform:K\"")))?;
                RhoGrid::uniform(k).map_err(serde::de::Error::custom)
            }
        }
    }
}

/// Hyperparameters of the regression model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorConfig {
    /// Fixed-effect spike and slab variances.
    pub sigma2_spike: f64,
    pub sigma2_slab: f64,
    /// Variances of the half-normal spike and slab on each `ψ_j`.
    pub xi2_spike: f64,
    pub xi2_slab: f64,
    pub a_tau: f64,
    pub b_tau: f64,
    pub a_nu: f64,
    pub b_nu: f64,
    /// Covariate-CAR correlation, held fixed.
    pub phi: f64,
    pub rho_grid: RhoGrid,
    pub beta_gamma: (f64, f64),
    pub beta_d: (f64, f64),
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self {
            sigma2_spike: 0.03,
            sigma2_slab: 100.0,
            xi2_spike: 0.01,
            xi2_slab: 1.0,
            a_tau: 0.001,
            b_tau: 0.001,
            a_nu: 0.001,
            b_nu: 0.001,
            phi: 0.3,
            rho_grid: RhoGrid::uniform(20).expect("non-empty grid"),
            beta_gamma: (1.0, 1.0),
            beta_d: (1.0, 1.0),
        }
    }
}

impl PriorConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("sigma2_spike", self.sigma2_spike),
            ("sigma2_slab", self.sigma2_slab),
            ("xi2_spike", self.xi2_spike),
            ("xi2_slab", self.xi2_slab),
            ("a_tau", self.a_tau),
            ("b_tau", self.b_tau),
            ("a_nu", self.a_nu),
            ("b_nu", self.b_nu),
            ("beta_gamma.0", self.beta_gamma.0),
            ("beta_gamma.1", self.beta_gamma.1),
            ("beta_d.0", self.beta_d.0),
            ("beta_d.1", self.beta_d.1),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Validation(format!("{name} must be positive, got {v}")));
            }
        }
        if self.sigma2_spike >= self.sigma2_slab {
            return Err(Error::Validation("sigma2_spike must be below sigma2_slab".into()));
        }
        if self.xi2_spike >= self.xi2_slab {
            return Err(Error::Validation("xi2_spike must be below xi2_slab".into()));
        }
        if !(self.phi > -1.0 && self.phi < 1.0) {
            return Err(Error::Validation(format!("phi = {} outside (-1, 1)", self.phi)));
        }
        self.rho_grid.validate()
    }
}
