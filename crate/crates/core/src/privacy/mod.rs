//! Privacy calibration: bandwidth for the kernel synthesizer, covariance
//! ratio for the LGCP synthesizer, sensitivity for the Laplace synthesizer.

mod kernel;
mod laplace;
mod lgcp;

pub use kernel::{
    calibrate_kernel, check_kernel_shape, edge_ratio_bound, edge_ratio_max, kernel_condition,
    poisson_tail_k, KernelCalibration, KernelShape, EDGE_RATIO_SAFETY,
};
pub use laplace::{
    laplace_log_density_ratio, laplace_sensitivity, sample_laplace, LaplaceScale,
    LaplaceSensitivity,
};
pub use lgcp::{
    alpha_ceiling, calibrate_lgcp_ratio, corollary_coefficient, lgcp_delta_bound,
    lgcp_delta_bound_network, network_segment_pairs, square_coefficient, LgcpCalibration,
};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// `(ε, δ)` under the α-neighborhood: datasets are neighbors when one point
/// moves by at most `alpha`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrivacyBudget {
    pub epsilon: f64,
    pub delta: f64,
    pub alpha: f64,
}

impl PrivacyBudget {
    pub fn new(epsilon: f64, delta: f64, alpha: f64) -> Result<Self> {
        if !(epsilon > 0.0) || !epsilon.is_finite() {
            return Err(invalid(format!("epsilon must be positive, got {epsilon}")));
        }
        if !(0.0..1.0).contains(&delta) {
            return Err(invalid(format!("delta must lie in [0, 1), got {delta}")));
        }
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(invalid(format!("alpha must be positive, got {alpha}")));
        }
        Ok(PrivacyBudget {
            epsilon,
            delta,
            alpha,
        })
    }

    /// Kernel and LGCP synthesizers only give approximate DP.
    pub fn require_delta(&self, what: &str) -> Result<()> {
        if self.delta > 0.0 {
            Ok(())
        } else {
            Err(invalid(format!("{what} requires delta > 0")))
        }
    }
}
