//! Kernels, jittered Cholesky factorization and multivariate-normal algebra.

pub mod kernel;
pub mod linalg;
pub mod mvn;

pub use kernel::{kernel_matrix, Kernel, KernelFamily};
pub use linalg::{cholesky_jittered, DEFAULT_JITTER, MAX_RELATIVE_JITTER};
pub use mvn::{
    expected_conditional_kl, mvn_condition, mvn_kl, mvn_logpdf, mvn_marginal, ConditionalGaussian,
    GaussianDist,
};
