//! Two-type hierarchical Strauss point process: pair counts, conditional
//! intensities, a quadrature pseudolikelihood, Metropolis fitting, a
//! simulator and grid partitioning of whole biopsies.

mod fit;
mod partition;
mod pattern;
mod simulate;
mod strauss;

pub use fit::{fit_hsm_mh, HsmPosterior, HsmPrior, MhConfig};
pub use partition::{partition_and_fit, split_grid, CellFit, PartitionConfig, PartitionFit};
pub use pattern::{Mark, MarkedPattern, Point, PointIndex, Window};
pub use simulate::{
    beta2_for_expected_count, simulate_hsm, simulate_poisson, simulate_second_type_exact,
    simulate_second_type_mh, DEFAULT_SWEEPS,
};
pub use strauss::{
    log_pseudolikelihood, make_quadrature, papangelou, s_r_count, HsmParams, PseudoLikelihood, Quadrature,
};
