use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::Tessellation;
use crate::linalg::Cholesky;
use crate::pointprocess::power_covariance;

/// Jitter added to the covariance diagonal, relative to `σ²`, when the
/// first factorization fails.
pub const JITTER: f64 = 1e-10;

/// Prior on the correlation scale `l`, discretized on the scale grid.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ScalePrior {
    /// Uniform in `log l` over the grid span.
    LogUniform,
    LogNormal {
        mu: f64,
        sd: f64,
    },
}

impl ScalePrior {
    fn log_density(&self, l: f64) -> f64 {
        match *self {
            ScalePrior::LogUniform => 0.0,
            ScalePrior::LogNormal { mu, sd } => {
                let z = (l.ln() - mu) / sd;
                -0.5 * z * z
            }
        }
    }
}

/// `n` log-spaced values from `lo` to `hi`.
pub fn geometric_grid(lo: f64, hi: f64, n: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi >= lo) || n == 0 {
        return Err(invalid(format!("bad grid [{lo}, {hi}] with {n} points")));
    }
    if n == 1 {
        return Ok(vec![lo]);
    }
    let step = (hi / lo).ln() / (n - 1) as f64;
    Ok((0..n).map(|i| lo * (step * i as f64).exp()).collect())
}

/// Default scale grid: 15 values from `B/50` to `B`.
pub fn default_scale_grid(diameter: f64) -> Vec<f64> {
    geometric_grid(diameter / 50.0, diameter, 15).expect("positive diameter")
}

/// One admissible `(l, σ)` with its factorized covariance.
#[derive(Clone, Debug)]
pub struct ScaleEntry {
    pub l: f64,
    pub sigma: f64,
    /// Covariance actually used, including any jitter.
    pub covariance: DMatrix<f64>,
    pub chol: Cholesky,
    pub jittered: bool,
    /// Normalized log prior mass of this grid point.
    pub log_weight: f64,
}

/// Latent Gaussian field prior plus baseline for the LGCP.
#[derive(Clone, Debug)]
pub struct LgcpModel {
    lambda0: f64,
    p: f64,
    ratio: Option<f64>,
    prior: ScalePrior,
    scales: Vec<ScaleEntry>,
    warnings: Vec<String>,
}

impl LgcpModel {
    /// Builds the model from candidate `(l, σ, Σ)` triples. Candidates whose
    /// covariance cannot be factorized even after jitter are dropped with a
    /// warning.
    pub fn from_scales(
        lambda0: f64,
        p: f64,
        ratio: Option<f64>,
        prior: ScalePrior,
        candidates: Vec<(f64, f64, DMatrix<f64>)>,
    ) -> Result<Self> {
        if !lambda0.is_finite() {
            return Err(invalid(format!("baseline must be finite, got {lambda0}")));
        }
        if let Some(r) = ratio {
            if !(r > 0.0) || !r.is_finite() {
                return Err(invalid(format!("ratio must be positive, got {r}")));
            }
        }
        let mut warnings = Vec::new();
        let mut scales = Vec::new();
        let mut dim = None;
        for (l, sigma, mut cov) in candidates {
            if !(l > 0.0) || !(sigma > 0.0) {
                return Err(invalid(format!(
                    "scale {l} and sigma {sigma} must be positive"
                )));
            }
            if *dim.get_or_insert(cov.nrows()) != cov.nrows() {
                return Err(invalid("covariances differ in dimension"));
            }
            match Cholesky::with_jitter(&cov, JITTER * sigma * sigma) {
                Ok((chol, jittered)) => {
                    if jittered {
                        for i in 0..cov.nrows() {
                            cov[(i, i)] += JITTER * sigma * sigma;
                        }
                        warnings.push(format!("l = {l:.4e}: covariance jittered"));
                    }
                    scales.push(ScaleEntry {
                        l,
                        sigma,
                        covariance: cov,
                        chol,
                        jittered,
                        log_weight: prior.log_density(l),
                    });
                }
                Err(e) => warnings.push(format!("l = {l:.4e} excluded: {e}")),
            }
        }
        if scales.is_empty() {
            return Err(Error::Numeric(format!(
                "no admissible covariance scale: {}",
                warnings.join("; ")
            )));
        }
        let max = scales
            .iter()
            .map(|s| s.log_weight)
            .fold(f64::NEG_INFINITY, f64::max);
        let log_norm = max
            + scales
                .iter()
                .map(|s| (s.log_weight - max).exp())
                .sum::<f64>()
                .ln();
        for s in &mut scales {
            s.log_weight -= log_norm;
        }
        for w in &warnings {
            log::warn!("{w}");
        }
        Ok(LgcpModel {
            lambda0,
            p,
            ratio,
            prior,
            scales,
            warnings,
        })
    }

    /// Power covariance over the tessellation vertices with `σ = R l`.
    pub fn planar(
        tess: &Tessellation,
        lambda0: f64,
        ratio: f64,
        p: f64,
        grid: &[f64],
        prior: ScalePrior,
    ) -> Result<Self> {
        if !(p > 0.0 && p <= 2.0) {
            return Err(invalid(format!("exponent must lie in (0, 2], got {p}")));
        }
        let candidates = grid
            .iter()
            .map(|&l| {
                (
                    l,
                    ratio * l,
                    power_covariance(tess.vertices(), ratio * l, l, p),
                )
            })
            .collect();
        Self::from_scales(lambda0, p, Some(ratio), prior, candidates)
    }

    pub fn lambda0(&self) -> f64 {
        self.lambda0
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn ratio(&self) -> Option<f64> {
        self.ratio
    }

    pub fn prior(&self) -> ScalePrior {
        self.prior
    }

    pub fn scales(&self) -> &[ScaleEntry] {
        &self.scales
    }

    pub fn dim(&self) -> usize {
        self.scales[0].chol.dim()
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    /// Gaussian log-density of `beta` under scale `k` plus `log π(l_k)`.
    pub fn log_prior(&self, beta: &[f64], k: usize) -> Result<f64> {
        let s = self
            .scales
            .get(k)
            .ok_or_else(|| invalid(format!("scale index {k} out of range")))?;
        if beta.len() != self.dim() {
            return Err(invalid(format!(
                "beta has {} entries for {}",
                beta.len(),
                self.dim()
            )));
        }
        let n = beta.len() as f64;
        Ok(
            -0.5 * s.chol.quad_form(beta) - 0.5 * s.chol.log_det() - 0.5 * n * (2.0 * PI).ln()
                + s.log_weight,
        )
    }

    /// `∇_β` of the Gaussian part of [`log_prior`](Self::log_prior): `−Σ⁻¹ β`.
    pub fn grad_log_prior(&self, beta: &[f64], k: usize) -> Vec<f64> {
        self.scales[k]
            .chol
            .solve(beta)
            .into_iter()
            .map(|v| -v)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::RectDomain;
    use nalgebra::DVector;

    #[test]
    fn zero_field_log_prior() {
        let t = Tessellation::triangular(&RectDomain::square(0.0, 1.0).unwrap(), 4, 4).unwrap();
        let grid = geometric_grid(0.2, 0.5, 3).unwrap();
        let m = LgcpModel::planar(&t, 0.0, 0.5, 2.0, &grid, ScalePrior::LogUniform).unwrap();
        for k in 0..m.scales().len() {
            let s = &m.scales()[k];
            let want = -0.5 * (s.chol.log_det() + 16.0 * (2.0 * PI).ln()) - 3f64.ln();
            assert!((m.log_prior(&[0.0; 16], k).unwrap() - want).abs() < 1e-12);
            assert_eq!(s.sigma, 0.5 * s.l);
        }
    }

    #[test]
    fn identity_covariance_is_standard_normal() {
        let m = LgcpModel::from_scales(
            0.0,
            2.0,
            None,
            ScalePrior::LogUniform,
            vec![(1.0, 1.0, DMatrix::identity(5, 5))],
        )
        .unwrap();
        let beta = [0.3, -1.0, 2.0, 0.0, 0.5];
        let want: f64 = beta
            .iter()
            .map(|b| -0.5 * b * b - 0.5 * (2.0 * PI).ln())
            .sum();
        assert!((m.log_prior(&beta, 0).unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn quadratic_form_matches_dense_solve() {
        let t = Tessellation::square(&RectDomain::square(0.0, 1.0).unwrap(), 7, 7).unwrap();
        let m = LgcpModel::planar(&t, 0.0, 1.0, 1.0, &[0.3], ScalePrior::LogUniform).unwrap();
        let beta: Vec<f64> = (0..49).map(|i| ((i * 7) % 11) as f64 / 5.0 - 1.0).collect();
        let cov = power_covariance(t.vertices(), 0.3, 0.3, 1.0);
        let x = cov
            .clone()
            .lu()
            .solve(&DVector::from_column_slice(&beta))
            .unwrap();
        let quad: f64 = beta.iter().zip(x.iter()).map(|(a, b)| a * b).sum();
        let det = cov.determinant().ln();
        let want = -0.5 * quad - 0.5 * det - 0.5 * 49.0 * (2.0 * PI).ln();
        let got = m.log_prior(&beta, 0).unwrap();
        assert!((got - want).abs() < 1e-8 * want.abs());
        let g = m.grad_log_prior(&beta, 0);
        for (a, b) in g.iter().zip(x.iter()) {
            assert!((a + b).abs() < 1e-8 * b.abs().max(1.0));
        }
    }

    #[test]
    fn lognormal_weights_normalized() {
        let t = Tessellation::triangular(&RectDomain::square(0.0, 1.0).unwrap(), 3, 3).unwrap();
        let grid = geometric_grid(0.05, 1.0, 6).unwrap();
        let prior = ScalePrior::LogNormal { mu: -1.0, sd: 0.5 };
        let m = LgcpModel::planar(&t, 0.0, 0.1, 2.0, &grid, prior).unwrap();
        let total: f64 = m.scales().iter().map(|s| s.log_weight.exp()).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn singular_scale_excluded() {
        let bad = DMatrix::from_element(3, 3, 1.0);
        let good = DMatrix::identity(3, 3);
        let m = LgcpModel::from_scales(
            0.0,
            2.0,
            None,
            ScalePrior::LogUniform,
            vec![(1.0, 1.0, bad.clone()), (2.0, 1.0, good)],
        );
        // the all-ones matrix is rescued by jitter
        assert_eq!(m.unwrap().scales().len(), 2);
        let mut worse = bad;
        worse[(2, 2)] = -1.0;
        let m = LgcpModel::from_scales(
            0.0,
            2.0,
            None,
            ScalePrior::LogUniform,
            vec![(1.0, 1.0, worse), (2.0, 1.0, DMatrix::identity(3, 3))],
        )
        .unwrap();
        assert_eq!(m.scales().len(), 1);
        assert_eq!(m.warnings().len(), 1);
    }

    #[test]
    fn default_grid_span() {
        let g = default_scale_grid(10.0);
        assert_eq!(g.len(), 15);
        assert!((g[0] - 0.2).abs() < 1e-12 && (g[14] - 10.0).abs() < 1e-9);
    }
}
