//! Simulation designs, comparators and selection metrics.

mod analyst;
mod benchmark;
mod dataset;
mod genes;
mod lasso;
mod metrics;
mod snr;

pub use dataset::{simulate_dataset, GroundTruth, NoiseSpec, SimReplicate, SimSetting, SizeClass};
pub use snr::{car_inverse_diagonal, snr_fixed, snr_random};
pub use metrics::{
    add_auc, auc_p, auc_p_normalized, auc_p_standardized, interpolate_tpr, mean_auc, metrics_from_flags,
    roc_curve, selection_metrics, KindCounts, MetricsTable,
};
pub use lasso::{
    cv_lasso, lambda_grid, lambda_max, lasso_cd, lasso_cd_weighted, lasso_objective_trace, lasso_path, CvConfig,
    CvLasso, LassoFit,
};
pub use analyst::{analyst_model, AnalystResult};
pub use genes::{correlation_components, pearson, preprocess_genes, GeneMatrix, GeneSet, GeneSets};
pub use benchmark::{
    aggregate, benchmark_prior, run_benchmark, run_method, AggregateRow, BenchmarkConfig, ChainSettings, Method,
    ReplicateResult,
};
