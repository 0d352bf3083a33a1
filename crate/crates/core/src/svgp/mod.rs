//! Sparse variational GP engine: predictive marginals, the uncollapsed
//! ELBO and the collapsed bound.

pub mod bound;
pub mod checkpoint;
pub mod likelihood;
pub mod state;

pub use bound::{
    collapsed_bound, collapsed_bound_with_jitter, collapsed_optimal_q, collapsed_optimal_q_with_jitter, collapsed_state, elbo, elbo_with_order, expected_log_lik};
pub use checkpoint::Checkpoint;
pub use likelihood::{log_ndtr, Likelihood, DEFAULT_GH_ORDER};
pub use state::{Predictive, SvgpState};
