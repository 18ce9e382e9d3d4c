use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::diagnostics::{effective_sample_size, split_rhat};
use super::likelihood::{grad_voronoi_loglik, voronoi_loglik, LikelihoodWorkspace};
use super::model::LgcpModel;
use crate::error::{invalid, Result};
use crate::linalg::Cholesky;
use crate::rng::{stream, SynthRng};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct McmcConfig {
    pub chains: usize,
    pub warmup: usize,
    pub draws: usize,
    /// Base number of leapfrog steps; each trajectory uses a uniform
    /// multiple in `[0.8, 1.2]` of it.
    pub leapfrog_steps: usize,
    pub target_accept: f64,
    /// Metropolis moves on the scale grid per iteration.
    pub scale_moves: usize,
}

impl Default for McmcConfig {
    fn default() -> Self {
        McmcConfig {
            chains: 4,
            warmup: 500,
            draws: 500,
            leapfrog_steps: 16,
            target_accept: 0.8,
            scale_moves: 2,
        }
    }
}

impl McmcConfig {
    fn validate(&self) -> Result<()> {
        if self.chains == 0 || self.draws == 0 || self.leapfrog_steps == 0 {
            return Err(invalid("chains, draws and leapfrog steps must be positive"));
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return Err(invalid(format!(
                "target acceptance must lie in (0, 1), got {}",
                self.target_accept
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PosteriorDraw {
    pub beta: Vec<f64>,
    pub l: f64,
    pub sigma: f64,
    pub scale_index: usize,
    pub log_posterior: f64,
    pub accept_prob: f64,
    pub divergent: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ChainSummary {
    pub step_size: f64,
    pub mean_accept: f64,
    pub divergences: usize,
    pub scale_accept_rate: f64,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct McmcDiagnostics {
    /// Largest split R̂ over the field components.
    pub rhat_beta_max: f64,
    /// Split R̂ of `log l`.
    pub rhat_scale: f64,
    pub ess_min: f64,
    pub divergence_rate: f64,
    pub mean_accept: f64,
    pub chains: Vec<ChainSummary>,
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug)]
pub struct PosteriorSample {
    /// Post-warmup draws, one vector per chain.
    pub chains: Vec<Vec<PosteriorDraw>>,
    pub diagnostics: McmcDiagnostics,
}

impl PosteriorSample {
    pub fn all_draws(&self) -> impl Iterator<Item = &PosteriorDraw> {
        self.chains.iter().flatten()
    }

    /// Every `⌈total / count⌉`-th draw over the concatenated chains.
    pub fn thinned(&self, count: usize) -> Vec<&PosteriorDraw> {
        let all: Vec<&PosteriorDraw> = self.all_draws().collect();
        if count == 0 || all.is_empty() {
            return Vec::new();
        }
        let stride = all.len().div_ceil(count).max(1);
        all.into_iter().step_by(stride).take(count).collect()
    }

    pub fn posterior_mean(&self) -> Vec<f64> {
        let mut acc = Vec::new();
        let mut n = 0.0;
        for d in self.all_draws() {
            if acc.is_empty() {
                acc = vec![0.0; d.beta.len()];
            }
            for (a, b) in acc.iter_mut().zip(&d.beta) {
                *a += b;
            }
            n += 1.0;
        }
        acc.iter().map(|a| a / n).collect()
    }
}

/// Posterior in whitened coordinates. With `Σ_k = L Lᵀ`, `β = L z`, and a
/// metric factor `K Kᵀ = I + Lᵀ D L` taken from the Laplace approximation at
/// the mode (`D = α ∘ exp(w)`), HMC runs on `v = Kᵀ z`, where the target is
/// close to a unit-covariance normal.
struct Target<'a> {
    model: &'a LgcpModel,
    ws: &'a LikelihoodWorkspace,
}

struct Metric {
    factors: Vec<Cholesky>,
    /// Per-scale center in whitened coordinates.
    modes: Vec<Vec<f64>>,
}

fn curvature_factor(l: &DMatrix<f64>, d: &[f64]) -> Cholesky {
    let n = d.len();
    let mut sl = l.clone();
    for i in 0..n {
        let w = d[i].max(0.0).sqrt();
        for j in 0..n {
            sl[(i, j)] *= w;
        }
    }
    let b = sl.transpose() * &sl + DMatrix::identity(n, n);
    Cholesky::new(&b).expect("identity plus a Gram matrix is positive definite")
}

impl Metric {
    /// Laplace approximation per scale: damped Newton to the mode in
    /// whitened coordinates, curvature evaluated there.
    fn laplace(model: &LgcpModel, ws: &LikelihoodWorkspace, start: &[f64]) -> Self {
        let lambda0 = model.lambda0();
        let mut factors = Vec::new();
        let mut modes = Vec::new();
        for s in model.scales() {
            let objective = |z: &[f64]| -> f64 {
                let beta = s.chol.mul_lower(z);
                voronoi_loglik(ws, lambda0, &beta).unwrap_or(f64::NEG_INFINITY)
                    - 0.5 * z.iter().map(|x| x * x).sum::<f64>()
            };
            let mut z = s.chol.solve_lower(start);
            let mut f = objective(&z);
            if !f.is_finite() {
                z = vec![0.0; start.len()];
                f = objective(&z);
            }
            for _ in 0..30 {
                let beta = s.chol.mul_lower(&z);
                let d: Vec<f64> = (0..beta.len())
                    .map(|i| ws.dual()[i] * (beta[i] + lambda0).exp())
                    .collect();
                let g = grad_voronoi_loglik(ws, lambda0, &beta);
                let lt_g = s.chol.mul_upper(&g);
                let grad: Vec<f64> = z.iter().zip(&lt_g).map(|(zi, gi)| gi - zi).collect();
                let h = curvature_factor(s.chol.l(), &d);
                let step = h.solve(&grad);
                let mut t = 1.0;
                let mut moved = false;
                for _ in 0..30 {
                    let cand: Vec<f64> = z.iter().zip(&step).map(|(a, b)| a + t * b).collect();
                    let fc = objective(&cand);
                    if fc >= f {
                        z = cand;
                        f = fc;
                        moved = true;
                        break;
                    }
                    t *= 0.5;
                }
                let size = step.iter().map(|x| x * x).sum::<f64>().sqrt() * t;
                if !moved || size < 1e-8 {
                    break;
                }
            }
            let beta = s.chol.mul_lower(&z);
            let d: Vec<f64> = (0..beta.len())
                .map(|i| ws.dual()[i] * (beta[i] + lambda0).exp())
                .collect();
            factors.push(curvature_factor(s.chol.l(), &d));
            modes.push(z);
        }
        Metric { factors, modes }
    }
}

struct Eval {
    u: f64,
    grad: Vec<f64>,
}

impl Target<'_> {
    fn z_of(&self, metric: &Metric, k: usize, v: &[f64]) -> Vec<f64> {
        metric.factors[k].solve_upper(v)
    }

    fn v_of(&self, metric: &Metric, k: usize, beta: &[f64]) -> Vec<f64> {
        let z = self.model.scales()[k].chol.solve_lower(beta);
        metric.factors[k].mul_upper(&z)
    }

    fn beta_of(&self, metric: &Metric, k: usize, v: &[f64]) -> Vec<f64> {
        self.model.scales()[k]
            .chol
            .mul_lower(&self.z_of(metric, k, v))
    }

    fn eval(&self, metric: &Metric, k: usize, v: &[f64]) -> Eval {
        let chol = &self.model.scales()[k].chol;
        let z = self.z_of(metric, k, v);
        let beta = chol.mul_lower(&z);
        let ll = match voronoi_loglik(self.ws, self.model.lambda0(), &beta) {
            Ok(x) if x.is_finite() => x,
            _ => {
                return Eval {
                    u: f64::INFINITY,
                    grad: vec![0.0; v.len()],
                }
            }
        };
        let g = grad_voronoi_loglik(self.ws, self.model.lambda0(), &beta);
        let lt_g = chol.mul_upper(&g);
        let gz: Vec<f64> = z.iter().zip(&lt_g).map(|(zi, gi)| zi - gi).collect();
        Eval {
            u: -ll + 0.5 * z.iter().map(|x| x * x).sum::<f64>(),
            grad: metric.factors[k].solve_lower(&gz),
        }
    }

    fn loglik(&self, beta: &[f64]) -> f64 {
        voronoi_loglik(self.ws, self.model.lambda0(), beta).unwrap_or(f64::NEG_INFINITY)
    }

    fn log_posterior(&self, k: usize, beta: &[f64]) -> f64 {
        self.loglik(beta) + self.model.log_prior(beta, k).unwrap_or(f64::NEG_INFINITY)
    }
}

struct Leapfrog {
    accept_prob: f64,
    divergent: bool,
}

fn normal_vec(n: usize, rng: &mut SynthRng) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

/// One HMC transition; replaces `v` and `cur` on acceptance.
#[allow(clippy::too_many_arguments)]
fn hmc_step(
    target: &Target,
    metric: &Metric,
    k: usize,
    v: &mut Vec<f64>,
    cur: &mut Eval,
    eps: f64,
    steps: usize,
    rng: &mut SynthRng,
) -> Leapfrog {
    let n = v.len();
    let mut p = normal_vec(n, rng);
    let h0 = cur.u + 0.5 * p.iter().map(|x| x * x).sum::<f64>();
    let mut vn = v.clone();
    let mut e = Eval {
        u: cur.u,
        grad: cur.grad.clone(),
    };
    for _ in 0..steps {
        for i in 0..n {
            p[i] -= 0.5 * eps * e.grad[i];
            vn[i] += eps * p[i];
        }
        e = target.eval(metric, k, &vn);
        if !e.u.is_finite() {
            break;
        }
        for i in 0..n {
            p[i] -= 0.5 * eps * e.grad[i];
        }
    }
    let delta = e.u + 0.5 * p.iter().map(|x| x * x).sum::<f64>() - h0;
    if !delta.is_finite() || delta > 1000.0 {
        return Leapfrog {
            accept_prob: 0.0,
            divergent: true,
        };
    }
    let a = (-delta).exp().min(1.0);
    if rng.random::<f64>() < a {
        *v = vn;
        *cur = e;
    }
    Leapfrog {
        accept_prob: a,
        divergent: false,
    }
}

/// Doubles or halves a unit step until the one-step acceptance crosses 1/2.
fn initial_step(
    target: &Target,
    metric: &Metric,
    k: usize,
    v: &[f64],
    cur: &Eval,
    rng: &mut SynthRng,
) -> f64 {
    let n = v.len();
    let log_half = 0.5f64.ln();
    let one_step = |eps: f64, rng: &mut SynthRng| -> f64 {
        let p0 = normal_vec(n, rng);
        let mut p = p0.clone();
        let vn: Vec<f64> = (0..n)
            .map(|i| {
                p[i] -= 0.5 * eps * cur.grad[i];
                v[i] + eps * p[i]
            })
            .collect();
        let e = target.eval(metric, k, &vn);
        for i in 0..n {
            p[i] -= 0.5 * eps * e.grad[i];
        }
        let h0 = cur.u + 0.5 * p0.iter().map(|x| x * x).sum::<f64>();
        let h1 = e.u + 0.5 * p.iter().map(|x| x * x).sum::<f64>();
        let d = h0 - h1;
        if d.is_finite() {
            d
        } else {
            f64::NEG_INFINITY
        }
    };
    let mut eps = 1.0;
    let up = one_step(eps, rng) > log_half;
    for _ in 0..60 {
        let d = one_step(eps, rng);
        if up && d <= log_half || !up && d > log_half {
            break;
        }
        eps = if up { eps * 2.0 } else { eps * 0.5 };
    }
    eps
}

/// Dual-averaging step-size adaptation.
struct DualAveraging {
    mu: f64,
    h_bar: f64,
    log_eps_bar: f64,
    m: f64,
    target: f64,
}

impl DualAveraging {
    const GAMMA: f64 = 0.05;
    const T0: f64 = 10.0;
    const KAPPA: f64 = 0.75;

    fn new(eps0: f64, target: f64) -> Self {
        DualAveraging {
            mu: (10.0 * eps0).ln(),
            h_bar: 0.0,
            log_eps_bar: 0.0,
            m: 0.0,
            target,
        }
    }

    fn update(&mut self, accept: f64) -> f64 {
        self.m += 1.0;
        let w = 1.0 / (self.m + Self::T0);
        self.h_bar = (1.0 - w) * self.h_bar + w * (self.target - accept);
        let log_eps = self.mu - self.m.sqrt() / Self::GAMMA * self.h_bar;
        let eta = self.m.powf(-Self::KAPPA);
        self.log_eps_bar = eta * log_eps + (1.0 - eta) * self.log_eps_bar;
        log_eps.exp()
    }

    fn final_step(&self) -> f64 {
        self.log_eps_bar.exp()
    }
}

fn run_chain(
    target: &Target,
    metric: &Metric,
    config: &McmcConfig,
    mut rng: SynthRng,
) -> (Vec<PosteriorDraw>, ChainSummary) {
    let model = target.model;
    let n_scales = model.scales().len();
    // start overdispersed around the Laplace mode of a random scale
    let mut k = rng.random_range(0..n_scales);
    let center = metric.factors[k].mul_upper(&metric.modes[k]);
    let mut v: Vec<f64> = center
        .iter()
        .map(|c| {
            let e: f64 = StandardNormal.sample(&mut rng);
            c + e
        })
        .collect();
    let mut cur = target.eval(metric, k, &v);
    if !cur.u.is_finite() {
        v = center;
        cur = target.eval(metric, k, &v);
    }
    let mut beta;
    let mut eps = initial_step(target, metric, k, &v, &cur, &mut rng);
    let mut adapt = DualAveraging::new(eps, config.target_accept);

    let mut draws = Vec::with_capacity(config.draws);
    let (mut acc_sum, mut divergences) = (0.0, 0usize);
    let (mut scale_tries, mut scale_accepts) = (0usize, 0usize);
    for it in 0..config.warmup + config.draws {
        let jitter = rng.random_range(0.8..1.2);
        let steps = ((config.leapfrog_steps as f64 * jitter).round() as usize).max(1);
        let step = hmc_step(target, metric, k, &mut v, &mut cur, eps, steps, &mut rng);
        beta = target.beta_of(metric, k, &v);
        if it < config.warmup {
            eps = adapt.update(step.accept_prob);
            if it + 1 == config.warmup {
                eps = adapt.final_step();
            }
        }

        if n_scales > 1 {
            for _ in 0..config.scale_moves {
                // field held fixed in the centered, whitened and
                // metric-whitened coordinates in turn; each is reversible for
                // the joint target (the last with its Jacobian)
                for frame in 0..3 {
                    let proposal = if rng.random::<bool>() {
                        k + 1
                    } else {
                        k.wrapping_sub(1)
                    };
                    if proposal >= n_scales {
                        continue;
                    }
                    scale_tries += 1;
                    let (from, to) = (&model.scales()[k], &model.scales()[proposal]);
                    let (log_ratio, new_beta) = match frame {
                        0 => {
                            let now = model.log_prior(&beta, k).unwrap_or(f64::NEG_INFINITY);
                            let prop = model
                                .log_prior(&beta, proposal)
                                .unwrap_or(f64::NEG_INFINITY);
                            (prop - now, beta.clone())
                        }
                        1 => {
                            let z = from.chol.solve_lower(&beta);
                            let nb = to.chol.mul_lower(&z);
                            let lr = target.loglik(&nb) - target.loglik(&beta) + to.log_weight
                                - from.log_weight;
                            (lr, nb)
                        }
                        _ => {
                            let z = from.chol.solve_lower(&beta);
                            let dz: Vec<f64> =
                                z.iter().zip(&metric.modes[k]).map(|(a, m)| a - m).collect();
                            let u = metric.factors[k].mul_upper(&dz);
                            let nz: Vec<f64> = metric.factors[proposal]
                                .solve_upper(&u)
                                .iter()
                                .zip(&metric.modes[proposal])
                                .map(|(a, m)| a + m)
                                .collect();
                            let nb = to.chol.mul_lower(&nz);
                            let sq = |x: &[f64]| x.iter().map(|a| a * a).sum::<f64>();
                            let lr = target.loglik(&nb) - target.loglik(&beta) - 0.5 * sq(&nz)
                                + 0.5 * sq(&z)
                                + to.log_weight
                                - from.log_weight
                                + 0.5
                                    * (metric.factors[k].log_det()
                                        - metric.factors[proposal].log_det());
                            (lr, nb)
                        }
                    };
                    if rng.random::<f64>().ln() < log_ratio {
                        k = proposal;
                        beta = new_beta;
                        scale_accepts += 1;
                    }
                }
            }
        }

        v = target.v_of(metric, k, &beta);
        cur = target.eval(metric, k, &v);

        if it >= config.warmup {
            acc_sum += step.accept_prob;
            divergences += step.divergent as usize;
            let s = &model.scales()[k];
            draws.push(PosteriorDraw {
                log_posterior: target.log_posterior(k, &beta),
                beta: beta.clone(),
                l: s.l,
                sigma: s.sigma,
                scale_index: k,
                accept_prob: step.accept_prob,
                divergent: step.divergent,
            });
        }
    }
    let summary = ChainSummary {
        step_size: eps,
        mean_accept: acc_sum / config.draws as f64,
        divergences,
        scale_accept_rate: if scale_tries > 0 {
            scale_accepts as f64 / scale_tries as f64
        } else {
            0.0
        },
    };
    (draws, summary)
}

/// Metropolis-within-Gibbs posterior sampler: HMC for the field given the
/// scale (in whitened coordinates, with dual-averaging step size and
/// jittered path length), then random-walk moves on the scale grid given
/// the field. Chains run in parallel on independent streams derived from a
/// single draw of `rng`.
pub fn sample_posterior<R: Rng + ?Sized>(
    model: &LgcpModel,
    ws: &LikelihoodWorkspace,
    config: &McmcConfig,
    rng: &mut R,
) -> Result<PosteriorSample> {
    config.validate()?;
    if ws.dim() != model.dim() {
        return Err(invalid(format!(
            "workspace has {} vertices, model {}",
            ws.dim(),
            model.dim()
        )));
    }
    let seed: u64 = rng.random();
    let target = Target { model, ws };
    let metric = Metric::laplace(model, ws, &vec![0.0; model.dim()]);
    let results: Vec<(Vec<PosteriorDraw>, ChainSummary)> = (0..config.chains)
        .into_par_iter()
        .map(|c| run_chain(&target, &metric, config, stream(seed, c as u64)))
        .collect();
    let (chains, summaries): (Vec<_>, Vec<_>) = results.into_iter().unzip();

    let n = model.dim();
    let mut rhat_beta_max: f64 = 0.0;
    let mut ess_min = f64::INFINITY;
    for i in 0..n {
        let series: Vec<Vec<f64>> = chains
            .iter()
            .map(|c| c.iter().map(|d| d.beta[i]).collect())
            .collect();
        let r = split_rhat(&series);
        rhat_beta_max = if r.is_nan() {
            f64::NAN
        } else {
            rhat_beta_max.max(r)
        };
        ess_min = ess_min.min(effective_sample_size(&series));
    }
    let log_l: Vec<Vec<f64>> = chains
        .iter()
        .map(|c| c.iter().map(|d| d.l.ln()).collect())
        .collect();
    let total = (config.chains * config.draws) as f64;
    let divergences: usize = summaries.iter().map(|s| s.divergences).sum();
    let mut diagnostics = McmcDiagnostics {
        rhat_beta_max,
        rhat_scale: split_rhat(&log_l),
        ess_min,
        divergence_rate: divergences as f64 / total,
        mean_accept: summaries.iter().map(|s| s.mean_accept).sum::<f64>() / summaries.len() as f64,
        chains: summaries,
        warnings: model.warnings().to_vec(),
    };
    if diagnostics.divergence_rate > 0.1 {
        diagnostics.warnings.push(format!(
            "divergence rate {:.3} exceeds 0.1",
            diagnostics.divergence_rate
        ));
    }
    if diagnostics.rhat_beta_max > 1.1 {
        diagnostics.warnings.push(format!(
            "max R-hat {:.3} exceeds 1.1",
            diagnostics.rhat_beta_max
        ));
    }
    for w in &diagnostics.warnings {
        log::warn!("{w}");
    }
    Ok(PosteriorSample {
        chains,
        diagnostics,
    })
}
