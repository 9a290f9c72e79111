//! Gibbs sampler for the spatially structured selection model.

mod chain;
mod diagnostics;
mod model;
mod prior;
mod selection;
mod state;
pub mod updates;

pub use chain::{run_chain, run_model_chain, sweep, PosteriorSamples, Schedule};
pub use diagnostics::{geweke_diagnostic, spectrum0, GewekeResult};
pub use model::{Model, Variant};
pub use prior::{PriorConfig, RhoGrid};
pub use selection::{summarize_selection, SelectionReport};
pub use state::ChainState;
