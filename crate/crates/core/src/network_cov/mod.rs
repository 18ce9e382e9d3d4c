//! Covariances on linear networks built from the resistance metric.

mod bessel;

pub use bessel::bessel_k;

use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{invalid, Error, Result};
use crate::geometry::{LinearNetwork, NetLocation};
use crate::linalg::Cholesky;

/// Conductance matrix of a network with its inverse.
///
/// Each segment `(u, v)` has conductance `1 / length`; `C` holds the node
/// conductance sums on its diagonal, minus the pairwise conductances off it,
/// and an extra 1 at the anchor node, which makes it positive definite.
#[derive(Clone, Debug)]
pub struct ConductanceGraph {
    net: Arc<LinearNetwork>,
    anchor: usize,
    c: DMatrix<f64>,
    c_inv: DMatrix<f64>,
}

impl ConductanceGraph {
    pub fn new(net: Arc<LinearNetwork>, anchor: usize) -> Result<Self> {
        let n = net.n_nodes();
        if anchor >= n {
            return Err(invalid(format!(
                "anchor {anchor} out of range for {n} nodes"
            )));
        }
        let mut c = DMatrix::zeros(n, n);
        for s in net.segments() {
            let g = 1.0 / s.length;
            c[(s.a, s.a)] += g;
            c[(s.b, s.b)] += g;
            c[(s.a, s.b)] -= g;
            c[(s.b, s.a)] -= g;
        }
        c[(anchor, anchor)] += 1.0;
        let chol = Cholesky::new(&c).map_err(|e| match e {
            Error::NotPositiveDefinite { .. } => Error::Disconnected { components: 2 },
            other => other,
        })?;
        let c_inv = chol.inverse();
        Ok(ConductanceGraph {
            net,
            anchor,
            c,
            c_inv,
        })
    }

    pub fn network(&self) -> &Arc<LinearNetwork> {
        &self.net
    }

    pub fn anchor(&self) -> usize {
        self.anchor
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.c
    }

    pub fn inverse(&self) -> &DMatrix<f64> {
        &self.c_inv
    }

    fn weights(&self, loc: &NetLocation) -> ([(usize, f64); 2], f64, f64) {
        let s = &self.net.segments()[loc.seg];
        let t = (loc.offset / s.length).clamp(0.0, 1.0);
        ([(s.a, 1.0 - t), (s.b, t)], t, s.length)
    }

    /// `d_R(u, v) = Var(Z(u) − Z(v))` for the field that interpolates the
    /// node field linearly along each segment and adds an independent
    /// Brownian bridge per segment.
    pub fn resistance(&self, u: &NetLocation, v: &NetLocation) -> f64 {
        let (wu, tu, lu) = self.weights(u);
        let (wv, tv, lv) = self.weights(v);
        let q = [wu[0], wu[1], (wv[0].0, -wv[0].1), (wv[1].0, -wv[1].1)];
        let mut vertex = 0.0;
        for &(i, a) in &q {
            for &(j, b) in &q {
                vertex += a * b * self.c_inv[(i, j)];
            }
        }
        let bridge = if u.seg == v.seg {
            lu * (tu * (1.0 - tu) + tv * (1.0 - tv) - 2.0 * (tu.min(tv) - tu * tv))
        } else {
            lu * tu * (1.0 - tu) + lv * tv * (1.0 - tv)
        };
        (vertex + bridge).max(0.0)
    }

    /// Node-to-node resistance matrix.
    pub fn node_resistances(&self) -> DMatrix<f64> {
        let n = self.c_inv.nrows();
        DMatrix::from_fn(n, n, |i, j| {
            (self.c_inv[(i, i)] + self.c_inv[(j, j)] - 2.0 * self.c_inv[(i, j)]).max(0.0)
        })
    }
}

/// Isotropic correlation functions of the resistance metric that stay
/// strictly positive definite on every network.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum CorrelationClass {
    /// `exp(−t^α / φ)` with `α ∈ (0, 1]`.
    Exponential { alpha: f64, phi: f64 },
    /// `2^{1−α}/Γ(α) (t/φ)^α K_α(t/φ)` with `α ∈ (0, 1/2]`.
    Matern { alpha: f64, phi: f64 },
}

impl CorrelationClass {
    pub fn exponential(alpha: f64, phi: f64) -> Result<Self> {
        let c = CorrelationClass::Exponential { alpha, phi };
        c.validate()?;
        Ok(c)
    }

    pub fn matern(alpha: f64, phi: f64) -> Result<Self> {
        let c = CorrelationClass::Matern { alpha, phi };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let (alpha, phi, hi) = match *self {
            CorrelationClass::Exponential { alpha, phi } => (alpha, phi, 1.0),
            CorrelationClass::Matern { alpha, phi } => (alpha, phi, 0.5),
        };
        if !(alpha > 0.0 && alpha <= hi) {
            return Err(invalid(format!("shape {alpha} outside (0, {hi}]")));
        }
        if !(phi > 0.0) || !phi.is_finite() {
            return Err(invalid(format!("scale must be positive, got {phi}")));
        }
        Ok(())
    }

    pub fn phi(&self) -> f64 {
        match *self {
            CorrelationClass::Exponential { phi, .. } | CorrelationClass::Matern { phi, .. } => phi,
        }
    }

    /// Same class and shape with another scale.
    pub fn with_phi(&self, phi: f64) -> Self {
        match *self {
            CorrelationClass::Exponential { alpha, .. } => {
                CorrelationClass::Exponential { alpha, phi }
            }
            CorrelationClass::Matern { alpha, .. } => CorrelationClass::Matern { alpha, phi },
        }
    }

    pub fn value(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 1.0;
        }
        match *self {
            CorrelationClass::Exponential { alpha, phi } => (-t.powf(alpha) / phi).exp(),
            CorrelationClass::Matern { alpha, phi } => {
                let s = t / phi;
                if s > 700.0 {
                    return 0.0;
                }
                let v = 2f64.powf(1.0 - alpha) / gamma(alpha) * s.powf(alpha) * bessel_k(alpha, s);
                v.min(1.0)
            }
        }
    }
}

/// `σ² r₀(d_R(a, b))` over all network nodes.
pub fn network_covariance(
    graph: &ConductanceGraph,
    class: &CorrelationClass,
    sigma: f64,
) -> Result<DMatrix<f64>> {
    class.validate()?;
    if !(sigma > 0.0) {
        return Err(invalid(format!("sigma must be positive, got {sigma}")));
    }
    let r = graph.node_resistances();
    let s2 = sigma * sigma;
    Ok(r.map(|d| s2 * class.value(d)))
}

/// `σ² r₀(d_R(a, b))` between arbitrary locations.
pub fn network_covariance_at(
    graph: &ConductanceGraph,
    class: &CorrelationClass,
    sigma: f64,
    locations: &[NetLocation],
) -> Result<DMatrix<f64>> {
    class.validate()?;
    for loc in locations {
        graph.network().check_location(loc)?;
    }
    let n = locations.len();
    let s2 = sigma * sigma;
    Ok(DMatrix::from_fn(n, n, |i, j| {
        s2 * class.value(graph.resistance(&locations[i], &locations[j]))
    }))
}
