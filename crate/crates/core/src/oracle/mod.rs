//! Brute-force verification on finite index sets.
//!
//! Every divergence here is an explicit KL between finite-dimensional
//! Gaussians, so the sparse-GP objectives can be checked against direct
//! computation: the full-index-set KL, the data-and-inducing KL, and the
//! marginal-likelihood slack of the ELBO all agree; the chain rule splits a
//! joint KL; augmenting with non-deterministic variables opens a gap; and
//! deterministic linear augmentation closes it.

pub mod augmentation;
pub mod identities;
pub mod model;
pub mod random;

pub use augmentation::{
    augmentation_gap, induced_augmentation_gap, mismatched_conditional, prior_conditional,
    pushforward_check, AugmentationGap, PushforwardReport, MISMATCH_COV_SCALE,
};
pub use identities::{
    check_finite_equivalence, full_kl, kl_chain_rule_decompose, svgp_state, titsias_kl,
    ChainRuleTerms, EquivalenceReport,
};
pub use model::{exact_posterior, log_marginal_likelihood, ApproxPosterior, FiniteModel};
pub use random::{random_instance, run_instance, InstanceReport, Overlap};
