//! Sub-region graphs, CAR precisions and Gaussian draws under them.

mod adjacency;
mod car;
mod envelope;

pub use adjacency::{build_lattice_adjacency, parse_lattice_shorthand, AdjacencyMatrix};
pub use car::{car_log_density, car_precision, sample_car, CarPrecision};
pub use envelope::EnvelopeCholesky;

use std::sync::Arc;

/// One biopsy: its sub-region graph, sub-region outcomes and the
/// biopsy-level covariates shared by all of its sub-regions.
#[derive(Debug, Clone)]
pub struct BiopsyGraph {
    pub id: String,
    pub adjacency: Arc<AdjacencyMatrix>,
    pub y: Vec<f64>,
    pub x: Vec<f64>,
}

impl BiopsyGraph {
    pub fn new(
        id: impl Into<String>,
        adjacency: Arc<AdjacencyMatrix>,
        y: Vec<f64>,
        x: Vec<f64>,
    ) -> crate::Result<Self> {
        if y.len() != adjacency.n() {
            return Err(crate::Error::DimensionMismatch {
                expected: adjacency.n(),
                found: y.len(),
            });
        }
        Ok(Self {
            id: id.into(),
            adjacency,
            y,
            x,
        })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }
}
