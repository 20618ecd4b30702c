//! Distribution distances, analytic Gaussian oracles, and the numeric
//! verification machinery for the Wasserstein convergence bounds.

pub mod assignment;
pub mod bounds;
pub mod metrics;
pub mod oracles;

pub use bounds::{
    alpha1_threshold, check_corollary1_gaussian, check_corollary2, check_theorem1,
    estimate_epsilon, jvp_fd_suite, BoundReport, Corollary2Config, EpsilonEstimate, FdReport,
    Theorem1Config,
};
pub use metrics::{energy_distance, w2_exact, w2_gaussian, W2Method, W2Report};
pub use oracles::{
    conditional_velocity, gauss_meanflow_u, gauss_velocity, marginal_velocity, posterior_mixture,
    GaussMeanFlow, GaussPosteriorEps, GaussPosteriorMeanFlow,
};
