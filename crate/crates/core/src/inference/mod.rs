//! Posterior sampling of the latent field of a log-Gaussian Cox process.

mod diagnostics;
mod likelihood;
mod model;
mod sampler;

pub use diagnostics::{effective_sample_size, split_rhat};
pub use likelihood::{grad_voronoi_loglik, voronoi_loglik, LikelihoodWorkspace};
pub use model::{default_scale_grid, geometric_grid, LgcpModel, ScaleEntry, ScalePrior, JITTER};
pub use sampler::{
    sample_posterior, ChainSummary, McmcConfig, McmcDiagnostics, PosteriorDraw, PosteriorSample,
};

/// `log π(β | l_k, data)` up to a constant.
pub fn log_posterior(
    model: &LgcpModel,
    ws: &LikelihoodWorkspace,
    beta: &[f64],
    k: usize,
) -> crate::Result<f64> {
    Ok(voronoi_loglik(ws, model.lambda0(), beta)? + model.log_prior(beta, k)?)
}

/// Gradient of [`log_posterior`] in `β`.
pub fn grad_log_posterior(
    model: &LgcpModel,
    ws: &LikelihoodWorkspace,
    beta: &[f64],
    k: usize,
) -> Vec<f64> {
    grad_voronoi_loglik(ws, model.lambda0(), beta)
        .into_iter()
        .zip(model.grad_log_prior(beta, k))
        .map(|(a, b)| a + b)
        .collect()
}
