//! Gaussian-process regression with a heteroscedastic Student-t likelihood.
//!
//! Two latent GPs model the location `f1` and the log-scale `f2` of each
//! observation. The posterior over `f = [f1; f2]` is approximated at its mode
//! either with the observed Hessian `W` or with the Fisher information
//! `E[W]`, the mode is found by natural-gradient iterations, and the model
//! parameters are chosen by maximizing the approximate marginal posterior.

pub mod cli;
pub mod data;
pub mod error;
pub mod hyperprior;
pub mod kernel;
pub mod laplace;
pub mod likelihood;
pub mod optimize;
pub mod params;
pub mod predict;
pub mod special;
pub mod weibull;

pub use error::{Error, Result};
pub use kernel::{KernelSpec, PosDefMatrix};
pub use laplace::{
    find_mode, find_mode_from, fit_laplace, laplace_posterior, log_marginal_gradient, Curvature, LaplaceFit, ModeFinderConfig,
    ModeMethod, Objective,
};
pub use likelihood::{LatentState, LikelihoodDerivatives};
pub use optimize::{fixed_nu_profile, map_estimate, MapResult, OptimizerConfig};
pub use params::HyperParams;
pub use predict::{evaluate, log_predictive_density, predict_latent, EvalReport, PredictiveQuadrature, PredictiveSummary};
