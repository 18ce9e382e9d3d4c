//! End-to-end synthesizers: calibration, inference and sampling composed
//! into one call per mechanism.
//!
//! Every synthesizer takes an explicit seed. Replicate `k` draws from
//! stream `k` of that seed, and posterior sampling uses its own stream, so
//! the same inputs and seed reproduce the output exactly.

mod network;
mod planar;

pub use network::{synth_laplace_network, synth_lgcp_network, NetworkLgcpOptions};
pub use planar::{synth_kernel, synth_laplace, synth_lgcp, LgcpOptions};

use serde::{Deserialize, Serialize};

use crate::inference::McmcDiagnostics;
use crate::pointprocess::{IntensityModel, NetworkIntensityModel, NetworkPattern, PlanarPattern};
use crate::privacy::{KernelCalibration, LaplaceScale, LgcpCalibration, PrivacyBudget};

/// Stream index reserved for posterior sampling.
const MCMC_STREAM: u64 = 1 << 40;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Kernel,
    Lgcp,
    Lap,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Kernel => "kernel",
            Method::Lgcp => "lgcp",
            Method::Lap => "lap",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = crate::Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "kernel" | "kern" => Ok(Method::Kernel),
            "lgcp" => Ok(Method::Lgcp),
            "lap" | "laplace" => Ok(Method::Lap),
            other => Err(crate::error::invalid(format!("unknown method {other:?}"))),
        }
    }
}

/// Calibrated parameters of one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CalibrationRecord {
    Kernel(KernelCalibration),
    Lgcp {
        ratio: LgcpCalibration,
        lambda0: f64,
        /// Largest numeric δ bound over the admissible scales.
        delta_bound: f64,
    },
    LgcpNetwork {
        lambda0: f64,
        /// `(φ, σ_max(φ))` for every admissible scale.
        sigma_max: Vec<(f64, f64)>,
        delta_bound: f64,
    },
    Laplace {
        scale: LaplaceScale,
        sensitivity: f64,
        /// Laplace scale `Δ / ε`.
        noise_scale: f64,
    },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SynthesisReport {
    pub method: Method,
    pub network: bool,
    pub budget: PrivacyBudget,
    pub calibration: CalibrationRecord,
    pub n_input: usize,
    /// Point count of each synthetic pattern.
    pub counts: Vec<usize>,
    pub seed: u64,
    pub mcmc: Option<McmcDiagnostics>,
    pub warnings: Vec<String>,
}

impl SynthesisReport {
    /// Calibration as `key = value` lines: ε, δ, α, then whichever of h, k,
    /// R_max, Δ and the bound slack the mechanism has.
    pub fn calibration_text(&self) -> String {
        let mut lines = vec![
            format!("method = {}", self.method.name()),
            format!("epsilon = {}", self.budget.epsilon),
            format!("delta = {}", self.budget.delta),
            format!("alpha = {}", self.budget.alpha),
        ];
        match &self.calibration {
            CalibrationRecord::Kernel(c) => {
                lines.push(format!("h = {}", c.h));
                lines.push(format!("k = {}", c.k));
                lines.push(format!("r_alpha_h = {}", c.r_alpha_h));
                lines.push(format!("bound_slack = {}", c.slack()));
            }
            CalibrationRecord::Lgcp {
                ratio,
                lambda0,
                delta_bound,
            } => {
                lines.push(format!("R_max = {}", ratio.r_max));
                lines.push(format!("lambda0 = {lambda0}"));
                lines.push(format!("delta_bound = {delta_bound}"));
                lines.push(format!("bound_slack = {}", self.budget.delta - delta_bound));
            }
            CalibrationRecord::LgcpNetwork {
                lambda0,
                sigma_max,
                delta_bound,
            } => {
                let smallest = sigma_max.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
                lines.push(format!("sigma_max_min = {smallest}"));
                lines.push(format!("lambda0 = {lambda0}"));
                lines.push(format!("delta_bound = {delta_bound}"));
                lines.push(format!("bound_slack = {}", self.budget.delta - delta_bound));
            }
            CalibrationRecord::Laplace {
                scale,
                sensitivity,
                noise_scale,
            } => {
                lines.push(format!("scale = {scale:?}").to_lowercase());
                lines.push(format!("Delta = {sensitivity}"));
                lines.push(format!("noise_scale = {noise_scale}"));
            }
        }
        lines.join("\n") + "\n"
    }
}

/// Synthetic planar patterns with the intensity each was drawn from.
#[derive(Clone, Debug)]
pub struct PlanarSynthesis {
    pub report: SynthesisReport,
    pub patterns: Vec<PlanarPattern>,
    pub intensities: Vec<IntensityModel>,
}

#[derive(Clone, Debug)]
pub struct NetworkSynthesis {
    pub report: SynthesisReport,
    pub patterns: Vec<NetworkPattern>,
    pub intensities: Vec<NetworkIntensityModel>,
}
