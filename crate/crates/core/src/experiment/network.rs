use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    original_row, summarize_cell, validate_common, AlphaSpec, DeltaSpec, ExperimentOutput,
    UnitOutcome,
};
use crate::error::{invalid, Result};
use crate::eval::{khat_network, mise, r_grid, KCurve};
use crate::geometry::{LinearNetwork, Point};
use crate::pointprocess::NetworkPattern;
use crate::privacy::{LaplaceScale, PrivacyBudget};
use crate::rng::{derive_seed, seeded};
use crate::synth::{synth_laplace_network, synth_lgcp_network, Method, NetworkLgcpOptions};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct NetworkExperimentConfig {
    pub methods: Vec<Method>,
    pub epsilons: Vec<f64>,
    pub n_syn: usize,
    pub delta: DeltaSpec,
    pub alpha: AlphaSpec,
    /// Maximum segment length after discretization.
    pub resolution: f64,
    pub laplace_scale: LaplaceScale,
    pub lgcp: NetworkLgcpOptions,
    /// Points on the K-function distance grid, which spans a quarter of
    /// the network diameter.
    pub r_points: usize,
    pub seed: u64,
}

impl Default for NetworkExperimentConfig {
    fn default() -> Self {
        NetworkExperimentConfig {
            methods: vec![Method::Lgcp, Method::Lap],
            epsilons: vec![0.1, 1.0, 10.0],
            n_syn: 30,
            delta: DeltaSpec::InverseN,
            alpha: AlphaSpec::Auto,
            resolution: 50.0,
            laplace_scale: LaplaceScale::Count,
            lgcp: NetworkLgcpOptions::default(),
            r_points: 50,
            seed: 1,
        }
    }
}

impl NetworkExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        validate_common(&self.epsilons, &self.methods, self.n_syn)?;
        if self.methods.contains(&Method::Kernel) {
            return Err(invalid(
                "the kernel synthesizer is only available in the plane",
            ));
        }
        if !(self.resolution > 0.0) {
            return Err(invalid(format!(
                "resolution must be positive, got {}",
                self.resolution
            )));
        }
        if self.r_points < 2 {
            return Err(invalid("need at least two K-function distances"));
        }
        Ok(())
    }
}

/// Discretizes the pattern's network at the configured resolution and runs
/// every method and budget on it. MISE compares homogeneous network
/// K-functions.
pub fn run_network_experiment(
    data: &NetworkPattern,
    dataset: &str,
    cfg: &NetworkExperimentConfig,
) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let disc = data.network().discretize(cfg.resolution)?;
    let locs = data
        .locations()
        .iter()
        .map(|l| disc.map_location(l))
        .collect();
    let net = Arc::new(disc.network);
    let data = NetworkPattern::new(net.clone(), locs)?;
    let alpha = match cfg.alpha {
        AlphaSpec::Auto => cfg.resolution,
        AlphaSpec::Value(a) => a,
    };
    let r = r_grid(net.diameter() / 4.0, cfg.r_points);
    let k_ori = khat_network(&data, &r, None)?;

    let mut out = ExperimentOutput {
        rows: Vec::new(),
        cells: Vec::new(),
        curves: Vec::new(),
        config: serde_json::to_value(cfg)?,
    };
    original_row(&mut out, dataset, &[data.len()], &[&k_ori]);

    let mut units = Vec::new();
    for &m in &cfg.methods {
        for &eps in &cfg.epsilons {
            units.push((m, eps));
        }
    }
    let seed_of = |m: Method| derive_seed(cfg.seed, &[0, 2, m as u64 + 1]);
    let results: Vec<_> = units
        .par_iter()
        .map(|&(m, eps)| {
            let seed = seed_of(m);
            let run = || {
                let delta = cfg.delta.resolve(data.len())?;
                let budget = PrivacyBudget::new(eps, delta, alpha)?;
                let syn = match m {
                    Method::Lgcp => synth_lgcp_network(&data, &budget, &cfg.lgcp, cfg.n_syn, seed)?,
                    Method::Lap => {
                        synth_laplace_network(&data, &budget, cfg.laplace_scale, cfg.n_syn, seed)?
                    }
                    Method::Kernel => unreachable!("rejected by validate"),
                };
                let curves = syn
                    .patterns
                    .par_iter()
                    .map(|p| khat_network(p, &r, None))
                    .collect::<Result<Vec<KCurve>>>()?;
                let mut o = UnitOutcome {
                    counts: syn.report.counts.clone(),
                    ..UnitOutcome::default()
                };
                for c in &curves {
                    o.add_curve(c);
                }
                match mise(&k_ori, &curves) {
                    Ok(v) => o.mise = Some(v),
                    Err(e) => o.messages.push(format!("MISE skipped: {e}")),
                }
                Ok((o, syn.report))
            };
            (seed, run())
        })
        .collect();
    for ((m, eps), res) in units.into_iter().zip(results) {
        summarize_cell(&mut out, dataset, m, eps, vec![res]);
    }
    Ok(out)
}

/// Street grid standing in for a small city extract: a 415 m × 556 m box
/// (0.005° × 0.005° at latitude 41.8°) with 5 north-south and 6 east-west
/// streets, and `n` points clustered around two intersections.
pub fn chicago_like(n: usize, seed: u64) -> Result<NetworkPattern> {
    let (w, h) = (415.0, 556.0);
    let (nx, ny) = (5, 6);
    let mut nodes = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            nodes.push(Point::new(
                w * i as f64 / (nx - 1) as f64,
                h * j as f64 / (ny - 1) as f64,
            ));
        }
    }
    let mut edges = Vec::new();
    for j in 0..ny {
        for i in 0..nx {
            let v = j * nx + i;
            if i + 1 < nx {
                edges.push((v, v + 1));
            }
            if j + 1 < ny {
                edges.push((v, v + nx));
            }
        }
    }
    let net = Arc::new(LinearNetwork::new(nodes, &edges)?);
    let hot = [
        (Point::new(w / 2.0, 2.0 * h / 5.0), 6.0),
        (Point::new(3.0 * w / 4.0, 4.0 * h / 5.0), 4.0),
    ];
    let spread = 70.0f64;
    let lambda = |p: &Point| {
        1.0 + hot
            .iter()
            .map(|(c, a)| a * (-p.distance(c).powi(2) / (2.0 * spread * spread)).exp())
            .sum::<f64>()
    };
    let bound = 11.0;
    let mut rng = seeded(seed);
    let mut locs = Vec::with_capacity(n);
    while locs.len() < n {
        let loc = net.sample_uniform(&mut rng);
        if rng.random::<f64>() * bound < lambda(&net.location_point(&loc)) {
            locs.push(loc);
        }
    }
    NetworkPattern::new(net, locs)
}
