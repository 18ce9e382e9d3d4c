use std::sync::Arc;

use pointsynth::geometry::{RectDomain, Tessellation};
use pointsynth::inference::{
    geometric_grid, sample_posterior, LgcpModel, LikelihoodWorkspace, McmcConfig, ScalePrior,
};
use pointsynth::pointprocess::{
    power_covariance, sample_gaussian_vector, sample_loglinear, LogLinearIntensity,
};
use pointsynth::rng::seeded;

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

#[test]
fn recovers_simulated_field() {
    let domain = RectDomain::square(0.0, 1.0).unwrap();
    let tess = Arc::new(Tessellation::triangular(&domain, 6, 6).unwrap());
    let (l_true, ratio) = (0.3, 3.0);
    let mut rng = seeded(2024);
    let cov = power_covariance(tess.vertices(), ratio * l_true, l_true, 2.0);
    let truth = sample_gaussian_vector(
        &(cov + nalgebra::DMatrix::identity(36, 36) * 1e-8),
        &mut rng,
    )
    .unwrap();
    let lambda0 = 400f64.ln();
    let field = LogLinearIntensity::new(tess.clone(), lambda0, truth.clone()).unwrap();
    let (pts, _) = sample_loglinear(&field, &mut rng);

    let grid = geometric_grid(0.02, 1.0, 15).unwrap();
    let model = LgcpModel::planar(
        &tess,
        (pts.len() as f64).ln(),
        ratio,
        2.0,
        &grid,
        ScalePrior::LogUniform,
    )
    .unwrap();
    let ws = LikelihoodWorkspace::planar(&tess, &pts).unwrap();
    let post = sample_posterior(&model, &ws, &McmcConfig::default(), &mut rng).unwrap();
    let r = pearson(&post.posterior_mean(), &truth);
    assert!(r > 0.5);
    assert!(post.diagnostics.rhat_beta_max < 1.1);
    assert!(post.diagnostics.rhat_scale < 1.1);
}
