use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// What the Laplace synthesizer perturbs per cell.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LaplaceScale {
    /// `Σ_x ψ_i(x) = n_i / |S_i|`, sensitivity `1/m₁ + 1/m₂`.
    Density,
    /// Cell counts `n_i`, sensitivity 2.
    Count,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LaplaceSensitivity {
    pub delta1: f64,
}

/// L1 sensitivity of the per-cell density vector when one point moves
/// between two cells: `max_{p≠q} 1/|S_p| + 1/|S_q|`.
pub fn laplace_sensitivity(measures: &[f64]) -> Result<LaplaceSensitivity> {
    if measures.len() < 2 {
        return Err(invalid("sensitivity needs at least two cells"));
    }
    if let Some(m) = measures.iter().find(|m| !(**m > 0.0)) {
        return Err(invalid(format!("cell measure must be positive, got {m}")));
    }
    let (mut m1, mut m2) = (f64::INFINITY, f64::INFINITY);
    for &m in measures {
        if m < m1 {
            m2 = m1;
            m1 = m;
        } else if m < m2 {
            m2 = m;
        }
    }
    Ok(LaplaceSensitivity {
        delta1: 1.0 / m1 + 1.0 / m2,
    })
}

impl LaplaceScale {
    pub fn sensitivity(self, measures: &[f64]) -> Result<LaplaceSensitivity> {
        match self {
            LaplaceScale::Density => laplace_sensitivity(measures),
            LaplaceScale::Count => {
                if measures.len() < 2 {
                    return Err(invalid("sensitivity needs at least two cells"));
                }
                Ok(LaplaceSensitivity { delta1: 2.0 })
            }
        }
    }
}

/// Draw from the Laplace distribution with scale `b` by inverting its CDF.
pub fn sample_laplace<R: Rng + ?Sized>(b: f64, rng: &mut R) -> f64 {
    let u: f64 = rng.random::<f64>() - 0.5;
    -b * u.signum() * (-2.0 * u.abs()).ln_1p()
}

/// `log p(τ | D) − log p(τ | D′)` for the pre-clamp release
/// `τ = f(·) + Lap(b)^N`.
pub fn laplace_log_density_ratio(tau: &[f64], f_d: &[f64], f_dprime: &[f64], b: f64) -> f64 {
    tau.iter()
        .zip(f_d.iter().zip(f_dprime))
        .map(|(t, (a, c))| ((t - c).abs() - (t - a).abs()) / b)
        .sum()
}
