use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};
use serde::{Deserialize, Serialize};

use pointsynth::experiment::{AlphaSpec, DeltaSpec};
use pointsynth::geometry::TessellationKind;
use pointsynth::inference::McmcConfig;
use pointsynth::io::Format;
use pointsynth::privacy::LaplaceScale;
use pointsynth::synth::Method;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Draw patterns from a built-in intensity.
    Simulate,
    /// Synthesize from an input pattern.
    Synthesize,
    /// Score synthetic patterns against an original.
    Evaluate,
    /// Run a full sweep over methods and budgets.
    Experiment,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tess {
    Tri,
    Sqr,
}

impl From<Tess> for TessellationKind {
    fn from(t: Tess) -> Self {
        match t {
            Tess::Tri => TessellationKind::Triangular,
            Tess::Sqr => TessellationKind::Square,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    Count,
    Density,
}

impl From<Scale> for LaplaceScale {
    fn from(s: Scale) -> Self {
        match s {
            Scale::Count => LaplaceScale::Count,
            Scale::Density => LaplaceScale::Density,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputFormat {
    Csv,
    Geojson,
}

/// Every setting, from flags or from a TOML file whose keys are the long
/// flag names with `_` for `-`. Flags override the file.
#[derive(Clone, Debug, Default, Parser, Serialize, Deserialize)]
#[command(
    name = "pointsynth",
    version,
    about = "Differentially private synthetic point patterns"
)]
#[serde(default, deny_unknown_fields)]
pub struct Settings {
    /// TOML configuration file.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub mode: Option<Mode>,
    /// Synthesizers, comma separated: kernel, lgcp, lap.
    #[arg(long, value_delimiter = ',')]
    pub method: Option<Vec<Method>>,
    /// Privacy budgets ε, comma separated.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub eps: Option<Vec<f64>>,
    /// δ as a number or `1/n`.
    #[arg(long)]
    pub delta: Option<DeltaSpec>,
    /// Neighborhood radius α as a number or `auto`.
    #[arg(long)]
    pub alpha: Option<AlphaSpec>,
    /// Knots per side of the tessellation; the Laplace grid has one cell
    /// fewer per side.
    #[arg(long)]
    pub knots: Option<usize>,
    #[arg(long, value_enum)]
    pub tess: Option<Tess>,
    /// Maximum segment length after network discretization.
    #[arg(long)]
    pub resolution: Option<f64>,
    /// What the Laplace synthesizer perturbs.
    #[arg(long, value_enum)]
    pub laplace_scale: Option<Scale>,
    /// Original datasets per built-in intensity.
    #[arg(long)]
    pub n_ori: Option<usize>,
    /// Synthetic patterns per dataset and budget.
    #[arg(long)]
    pub n_syn: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Built-in intensities (lambda1..lambda4) or `chicago_like`.
    #[arg(long, value_delimiter = ',')]
    pub intensity: Option<Vec<String>>,
    /// Points drawn for `chicago_like`.
    #[arg(long)]
    pub n_points: Option<usize>,
    /// Original point file.
    #[arg(long)]
    pub points: Option<PathBuf>,
    /// Network file (edge list CSV or GeoJSON lines); switches to network mode.
    #[arg(long)]
    pub network: Option<PathBuf>,
    /// Synthetic point files to evaluate.
    #[arg(long, value_delimiter = ',')]
    pub synthetic: Option<Vec<PathBuf>>,
    /// Input format; guessed from the file extension when absent.
    #[arg(long, value_enum)]
    pub format: Option<InputFormat>,
    /// Planar window `x_min,y_min,x_max,y_max`; the points' bounding box
    /// when absent.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub domain: Option<Vec<f64>>,
    /// Treat input coordinates as lon/lat and project them to meters.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub lonlat: Option<bool>,
    /// Largest snapping distance onto the network; 1% of the network's
    /// bounding-box diagonal when absent.
    #[arg(long)]
    pub tolerance: Option<f64>,
    /// Points on the network K-function grid.
    #[arg(long)]
    pub r_points: Option<usize>,
    #[arg(long)]
    pub chains: Option<usize>,
    #[arg(long)]
    pub warmup: Option<usize>,
    #[arg(long)]
    pub draws: Option<usize>,
}

impl Settings {
    /// Command-line settings layered over the configuration file, if any.
    pub fn load(cli: Settings) -> Result<Settings, String> {
        let Some(path) = cli.config.clone() else {
            return Ok(cli);
        };
        let text = std::fs::read_to_string(&path)
            .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        let file: Settings =
            toml::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
        let mut merged = serde_json::to_value(&file).map_err(|e| e.to_string())?;
        let flags = serde_json::to_value(&cli).map_err(|e| e.to_string())?;
        if let (Some(m), Some(f)) = (merged.as_object_mut(), flags.as_object()) {
            for (k, v) in f {
                if !v.is_null() {
                    m.insert(k.clone(), v.clone());
                }
            }
        }
        let mut out: Settings = serde_json::from_value(merged).map_err(|e| e.to_string())?;
        out.config = Some(path);
        Ok(out)
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out
            .clone()
            .unwrap_or_else(|| PathBuf::from("pointsynth-out"))
    }

    pub fn format_of(&self, path: &Path) -> Format {
        match self.format {
            Some(InputFormat::Csv) => Format::Csv,
            Some(InputFormat::Geojson) => Format::GeoJson,
            None => Format::from_path(path),
        }
    }

    pub fn mcmc(&self, base: McmcConfig) -> McmcConfig {
        McmcConfig {
            chains: self.chains.unwrap_or(base.chains),
            warmup: self.warmup.unwrap_or(base.warmup),
            draws: self.draws.unwrap_or(base.draws),
            ..base
        }
    }

    pub fn epsilons(&self) -> Vec<f64> {
        self.eps.clone().unwrap_or_else(|| vec![0.1, 1.0, 10.0])
    }
}
