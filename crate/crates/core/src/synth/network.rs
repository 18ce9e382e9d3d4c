use serde::{Deserialize, Serialize};

use super::planar::laplace_release;
use super::{CalibrationRecord, Method, NetworkSynthesis, SynthesisReport, MCMC_STREAM};
use crate::error::{Error, Result};
use crate::inference::{
    geometric_grid, sample_posterior, LgcpModel, LikelihoodWorkspace, McmcConfig, ScalePrior,
};
use crate::network_cov::{network_covariance, ConductanceGraph, CorrelationClass};
use crate::pointprocess::{
    sample_loglinear_network, sample_piecewise_constant_network, NetworkIntensityModel,
    NetworkLogLinear, NetworkPattern, NetworkPiecewiseConstant,
};
use crate::privacy::{lgcp_delta_bound_network, LaplaceScale, PrivacyBudget};
use crate::rng::stream;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetworkLgcpOptions {
    pub mcmc: McmcConfig,
    pub prior: ScalePrior,
    /// Correlation class; its scale is replaced by each grid value.
    pub class: CorrelationClass,
    /// Scales `φ`; defaults to 15 log-spaced values on `[d/50, d]` with
    /// `d` the network diameter.
    pub phi_grid: Option<Vec<f64>>,
    /// Upper limit on `σ` where the δ bound leaves it unconstrained.
    pub sigma_cap: f64,
}

impl Default for NetworkLgcpOptions {
    fn default() -> Self {
        NetworkLgcpOptions {
            mcmc: McmcConfig::default(),
            prior: ScalePrior::LogUniform,
            class: CorrelationClass::Exponential {
                alpha: 1.0,
                phi: 1.0,
            },
            phi_grid: None,
            sigma_cap: 3.0,
        }
    }
}

/// LGCP synthesizer on a (discretized) network: resistance-metric
/// covariance over the nodes, node-interpolated log-intensity, baseline
/// `ln(|D| / |L|)`.
///
/// The δ bound is quadratic in `σ`, so for each scale `φ` the largest
/// admissible `σ_max(φ) = √(δ / bound(σ = 1, φ))` is used.
pub fn synth_lgcp_network(
    data: &NetworkPattern,
    budget: &PrivacyBudget,
    options: &NetworkLgcpOptions,
    replicates: usize,
    seed: u64,
) -> Result<NetworkSynthesis> {
    budget.require_delta("the LGCP synthesizer")?;
    options.class.validate()?;
    let net = data.network();
    let n = data.len();
    let lambda0 = (n as f64 / net.total_length()).ln();
    let grid = match &options.phi_grid {
        Some(g) => g.clone(),
        None => geometric_grid(net.diameter() / 50.0, net.diameter(), 15)?,
    };
    let graph = ConductanceGraph::new(net.clone(), 0)?;

    let mut warnings = Vec::new();
    let mut candidates = Vec::new();
    let mut sigma_max = Vec::new();
    for &phi in &grid {
        let unit = network_covariance(&graph, &options.class.with_phi(phi), 1.0)?;
        let b1 = lgcp_delta_bound_network(net, &unit, budget.alpha, budget.epsilon)?;
        let mut sigma = if b1 > 0.0 {
            (budget.delta / b1).sqrt()
        } else {
            f64::INFINITY
        };
        if sigma > options.sigma_cap {
            warnings.push(format!(
                "phi = {phi:.4e}: sigma capped at {}",
                options.sigma_cap
            ));
            sigma = options.sigma_cap;
        }
        sigma_max.push((phi, sigma));
        candidates.push((phi, sigma, unit * (sigma * sigma)));
    }

    if n == 0 {
        let patterns = vec![NetworkPattern::new(net.clone(), Vec::new())?; replicates];
        let field = NetworkPiecewiseConstant::new(net.clone(), vec![0.0; net.n_segments()])?;
        warnings.push("empty input: zero baseline intensity".into());
        return Ok(NetworkSynthesis {
            report: SynthesisReport {
                method: Method::Lgcp,
                network: true,
                budget: *budget,
                calibration: CalibrationRecord::LgcpNetwork {
                    lambda0,
                    sigma_max,
                    delta_bound: 0.0,
                },
                n_input: 0,
                counts: vec![0; replicates],
                seed,
                mcmc: None,
                warnings,
            },
            patterns,
            intensities: vec![NetworkIntensityModel::PiecewiseConstant(field); replicates],
        });
    }

    let p = match options.class {
        CorrelationClass::Exponential { alpha, .. } | CorrelationClass::Matern { alpha, .. } => {
            alpha
        }
    };
    let model = LgcpModel::from_scales(lambda0, p, None, options.prior, candidates)?;
    let mut delta_bound: f64 = 0.0;
    for s in model.scales() {
        delta_bound = delta_bound.max(lgcp_delta_bound_network(
            net,
            &s.covariance,
            budget.alpha,
            budget.epsilon,
        )?);
    }
    if delta_bound > budget.delta * (1.0 + 1e-6) {
        return Err(Error::CalibrationInfeasible(format!(
            "numeric delta bound {delta_bound:.6e} exceeds the budget {:.6e}",
            budget.delta
        )));
    }
    sigma_max.retain(|(phi, _)| model.scales().iter().any(|s| s.l == *phi));

    let ws = LikelihoodWorkspace::network(net, data.locations())?;
    let posterior = sample_posterior(&model, &ws, &options.mcmc, &mut stream(seed, MCMC_STREAM))?;
    warnings.extend(model.warnings().iter().cloned());
    let mut patterns = Vec::with_capacity(replicates);
    let mut intensities = Vec::with_capacity(replicates);
    for (k, draw) in posterior.thinned(replicates).into_iter().enumerate() {
        let field = NetworkLogLinear::new(net.clone(), lambda0, draw.beta.clone())?;
        let (locs, diag) = sample_loglinear_network(&field, &mut stream(seed, k as u64));
        warnings.extend(diag.warnings);
        patterns.push(NetworkPattern::new(net.clone(), locs)?);
        intensities.push(NetworkIntensityModel::LogLinear(field));
    }
    Ok(NetworkSynthesis {
        report: SynthesisReport {
            method: Method::Lgcp,
            network: true,
            budget: *budget,
            calibration: CalibrationRecord::LgcpNetwork {
                lambda0,
                sigma_max,
                delta_bound,
            },
            n_input: n,
            counts: patterns.iter().map(|p| p.len()).collect(),
            seed,
            mcmc: Some(posterior.diagnostics),
            warnings,
        },
        patterns,
        intensities,
    })
}

/// Laplace synthesizer with network segments as cells and segment lengths
/// as cell measures; points are placed uniformly along each segment.
pub fn synth_laplace_network(
    data: &NetworkPattern,
    budget: &PrivacyBudget,
    scale: LaplaceScale,
    replicates: usize,
    seed: u64,
) -> Result<NetworkSynthesis> {
    let net = data.network();
    let lengths: Vec<f64> = net.segments().iter().map(|s| s.length).collect();
    let sens = scale.sensitivity(&lengths)?;
    let noise_scale = sens.delta1 / budget.epsilon;
    let mut counts = vec![0usize; lengths.len()];
    for loc in data.locations() {
        counts[loc.seg] += 1;
    }
    let values: Vec<f64> = match scale {
        LaplaceScale::Density => counts
            .iter()
            .zip(&lengths)
            .map(|(&c, l)| c as f64 / l)
            .collect(),
        LaplaceScale::Count => counts.iter().map(|&c| c as f64).collect(),
    };
    let mut patterns = Vec::with_capacity(replicates);
    let mut intensities = Vec::with_capacity(replicates);
    for k in 0..replicates {
        let mut rng = stream(seed, k as u64);
        let gamma = laplace_release(&values, noise_scale, &mut rng);
        let model = NetworkPiecewiseConstant::new(net.clone(), gamma)?;
        let locs = sample_piecewise_constant_network(&model, &mut rng);
        patterns.push(NetworkPattern::new(net.clone(), locs)?);
        intensities.push(NetworkIntensityModel::PiecewiseConstant(model));
    }
    Ok(NetworkSynthesis {
        report: SynthesisReport {
            method: Method::Lap,
            network: true,
            budget: *budget,
            calibration: CalibrationRecord::Laplace {
                scale,
                sensitivity: sens.delta1,
                noise_scale,
            },
            n_input: data.len(),
            counts: patterns.iter().map(|p| p.len()).collect(),
            seed,
            mcmc: None,
            warnings: Vec::new(),
        },
        patterns,
        intensities,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{LinearNetwork, NetLocation, Point};
    use crate::pointprocess::{sample_homogeneous_network, NetworkIntensity};
    use crate::rng::seeded;
    use std::sync::Arc;

    fn grid_net() -> Arc<LinearNetwork> {
        let mut nodes = Vec::new();
        for j in 0..3 {
            for i in 0..3 {
                nodes.push(Point::new(i as f64 * 100.0, j as f64 * 100.0));
            }
        }
        let mut edges = Vec::new();
        for j in 0..3 {
            for i in 0..3 {
                let v = j * 3 + i;
                if i < 2 {
                    edges.push((v, v + 1));
                }
                if j < 2 {
                    edges.push((v, v + 3));
                }
            }
        }
        let net = LinearNetwork::new(nodes, &edges).unwrap();
        Arc::new(net.discretize(50.0).unwrap().network)
    }

    fn quick() -> NetworkLgcpOptions {
        NetworkLgcpOptions {
            mcmc: McmcConfig {
                chains: 2,
                warmup: 150,
                draws: 150,
                ..McmcConfig::default()
            },
            ..NetworkLgcpOptions::default()
        }
    }

    #[test]
    fn single_segment_constant_field_matches_rate() {
        let net = Arc::new(
            LinearNetwork::new(vec![Point::new(0.0, 0.0), Point::new(10.0, 0.0)], &[(0, 1)])
                .unwrap(),
        );
        let locs = sample_homogeneous_network(&net, 3.0, &mut seeded(1)).unwrap();
        let data = NetworkPattern::new(net.clone(), locs).unwrap();
        let n = data.len() as f64;
        let b = PrivacyBudget::new(1.0, 0.01, 1.0).unwrap();
        let s = synth_lgcp_network(&data, &b, &quick(), 300, 4).unwrap();
        // a single segment has no cell pairs, so sigma sits at its cap
        let mean = s.report.counts.iter().sum::<usize>() as f64 / 300.0;
        let mean_integral = s.intensities.iter().map(|m| m.integral()).sum::<f64>() / 300.0;
        assert!((mean - mean_integral).abs() < 4.0 * (mean_integral / 300.0).sqrt() + 0.05 * n);
    }

    #[test]
    fn network_bound_respects_budget_and_keeps_count() {
        let net = grid_net();
        let locs = sample_homogeneous_network(&net, 0.05, &mut seeded(2)).unwrap();
        let data = NetworkPattern::new(net.clone(), locs).unwrap();
        let n = data.len() as f64;
        let b = PrivacyBudget::new(1.0, 1.0 / n, 50.0).unwrap();
        let s = synth_lgcp_network(&data, &b, &quick(), 20, 9).unwrap();
        let CalibrationRecord::LgcpNetwork {
            delta_bound,
            sigma_max,
            ..
        } = &s.report.calibration
        else {
            panic!()
        };
        assert!(*delta_bound <= b.delta * (1.0 + 1e-6));
        assert!(sigma_max.iter().all(|(_, s)| *s > 0.0));
        let mean = s.report.counts.iter().sum::<usize>() as f64 / 20.0;
        assert!((mean / n - 1.0).abs() < 0.3, "{mean} vs {n}");
    }

    #[test]
    fn laplace_network_noiseless_limit() {
        let net = grid_net();
        let locs = vec![
            NetLocation::new(0, 10.0),
            NetLocation::new(0, 20.0),
            NetLocation::new(3, 1.0),
        ];
        let data = NetworkPattern::new(net.clone(), locs).unwrap();
        let b = PrivacyBudget::new(1e12, 0.0, 10.0).unwrap();
        let s = synth_laplace_network(&data, &b, LaplaceScale::Density, 1, 0).unwrap();
        let NetworkIntensityModel::PiecewiseConstant(m) = &s.intensities[0] else {
            panic!()
        };
        for (k, g) in m.gamma().iter().enumerate() {
            let len = net.segments()[k].length;
            let want = match k {
                0 => 2.0 / len,
                3 => 1.0 / len,
                _ => 0.0,
            };
            assert!((g - want).abs() < 1e-9);
        }
    }

    #[test]
    fn laplace_network_outputs_lie_on_segments() {
        let net = grid_net();
        let locs = sample_homogeneous_network(&net, 0.02, &mut seeded(3)).unwrap();
        let data = NetworkPattern::new(net.clone(), locs).unwrap();
        let b = PrivacyBudget::new(0.5, 0.0, 10.0).unwrap();
        let s = synth_laplace_network(&data, &b, LaplaceScale::Count, 3, 1).unwrap();
        for p in &s.patterns {
            for l in p.locations() {
                net.check_location(l).unwrap();
            }
        }
    }
}
