use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{CalibrationRecord, Method, PlanarSynthesis, SynthesisReport, MCMC_STREAM};
use crate::error::{invalid, Error, Result};
use crate::geometry::Tessellation;
use crate::inference::{
    default_scale_grid, sample_posterior, LgcpModel, LikelihoodWorkspace, McmcConfig, ScalePrior,
};
use crate::pointprocess::{
    sample_kernel_mixture, sample_loglinear, sample_piecewise_constant, CellGrid, IntensityModel,
    KernelIntensity, LogLinearIntensity, PiecewiseConstant, PlanarPattern,
};
use crate::privacy::{
    calibrate_kernel, calibrate_lgcp_ratio, lgcp_delta_bound, sample_laplace, LaplaceScale,
    PrivacyBudget,
};
use crate::rng::stream;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LgcpOptions {
    pub mcmc: McmcConfig,
    pub prior: ScalePrior,
    /// Correlation scales `l`; defaults to 15 log-spaced values on
    /// `[B/50, B]`.
    pub scale_grid: Option<Vec<f64>>,
}

impl Default for LgcpOptions {
    fn default() -> Self {
        LgcpOptions {
            mcmc: McmcConfig::default(),
            prior: ScalePrior::LogUniform,
            scale_grid: None,
        }
    }
}

/// Edge-corrected Gaussian kernel synthesizer at the smallest bandwidth the
/// budget admits. The output is not truncated at `k` points.
pub fn synth_kernel(
    data: &PlanarPattern,
    budget: &PrivacyBudget,
    replicates: usize,
    seed: u64,
) -> Result<PlanarSynthesis> {
    let domain = *data.domain();
    let cal = calibrate_kernel(budget, &domain, data.len())?;
    let model = KernelIntensity::new(domain, data.points().to_vec(), cal.h)?;
    let mut patterns = Vec::with_capacity(replicates);
    for k in 0..replicates {
        let pts = sample_kernel_mixture(&model, &mut stream(seed, k as u64));
        patterns.push(PlanarPattern::new(domain, pts)?);
    }
    let mut warnings = Vec::new();
    if !cal.grid_monotone {
        warnings.push("bandwidth feasibility was not monotone on the search grid".into());
    }
    Ok(PlanarSynthesis {
        report: SynthesisReport {
            method: Method::Kernel,
            network: false,
            budget: *budget,
            calibration: CalibrationRecord::Kernel(cal),
            n_input: data.len(),
            counts: patterns.iter().map(|p| p.len()).collect(),
            seed,
            mcmc: None,
            warnings,
        },
        intensities: vec![IntensityModel::KernelMixture(model); patterns.len()],
        patterns,
    })
}

/// LGCP synthesizer: power covariance with `p = 2` and `σ = R_max l`,
/// baseline `λ₀ = ln(|D| / |S|)`, one pattern per thinned posterior draw.
pub fn synth_lgcp(
    data: &PlanarPattern,
    budget: &PrivacyBudget,
    tess: &Arc<Tessellation>,
    options: &LgcpOptions,
    replicates: usize,
    seed: u64,
) -> Result<PlanarSynthesis> {
    let domain = *data.domain();
    if *tess.domain() != domain {
        return Err(invalid("tessellation and data live on different domains"));
    }
    let cal = calibrate_lgcp_ratio(budget, tess)?;
    let n = data.len();
    let lambda0 = (n as f64 / domain.area()).ln();
    let grid = options
        .scale_grid
        .clone()
        .unwrap_or_else(|| default_scale_grid(domain.diameter()));

    if n == 0 {
        // the baseline intensity is zero, so every release is empty
        let patterns = vec![PlanarPattern::empty(domain); replicates];
        let intensity = IntensityModel::Homogeneous { domain, rate: 0.0 };
        return Ok(PlanarSynthesis {
            report: SynthesisReport {
                method: Method::Lgcp,
                network: false,
                budget: *budget,
                calibration: CalibrationRecord::Lgcp {
                    ratio: cal,
                    lambda0,
                    delta_bound: 0.0,
                },
                n_input: 0,
                counts: vec![0; replicates],
                seed,
                mcmc: None,
                warnings: vec!["empty input: zero baseline intensity".into()],
            },
            intensities: vec![intensity; replicates],
            patterns,
        });
    }

    let model = LgcpModel::planar(tess, lambda0, cal.r_max, 2.0, &grid, options.prior)?;
    let mut delta_bound: f64 = 0.0;
    for s in model.scales() {
        delta_bound = delta_bound.max(lgcp_delta_bound(
            tess,
            &s.covariance,
            budget.alpha,
            budget.epsilon,
        )?);
    }
    if delta_bound > budget.delta * (1.0 + 1e-9) {
        return Err(Error::CalibrationInfeasible(format!(
            "numeric delta bound {delta_bound:.6e} exceeds the budget {:.6e}",
            budget.delta
        )));
    }

    let ws = LikelihoodWorkspace::planar(tess, data.points())?;
    let posterior = sample_posterior(&model, &ws, &options.mcmc, &mut stream(seed, MCMC_STREAM))?;
    let mut patterns = Vec::with_capacity(replicates);
    let mut intensities = Vec::with_capacity(replicates);
    let mut warnings = model.warnings().to_vec();
    for (k, draw) in posterior.thinned(replicates).into_iter().enumerate() {
        let field = LogLinearIntensity::new(tess.clone(), lambda0, draw.beta.clone())?;
        let (pts, diag) = sample_loglinear(&field, &mut stream(seed, k as u64));
        warnings.extend(diag.warnings);
        patterns.push(PlanarPattern::new(domain, pts)?);
        intensities.push(IntensityModel::LogLinear(field));
    }
    Ok(PlanarSynthesis {
        report: SynthesisReport {
            method: Method::Lgcp,
            network: false,
            budget: *budget,
            calibration: CalibrationRecord::Lgcp {
                ratio: cal,
                lambda0,
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

/// Per-cell release `f_i + Lap(Δ/ε)`, clamped at zero.
pub(super) fn laplace_release<R: rand::Rng + ?Sized>(
    values: &[f64],
    noise_scale: f64,
    rng: &mut R,
) -> Vec<f64> {
    values
        .iter()
        .map(|v| (v + sample_laplace(noise_scale, rng)).max(0.0))
        .collect()
}

/// Laplace synthesizer on a regular cell grid.
///
/// With [`LaplaceScale::Density`] cell `i` releases `n_i / |S_i|` plus
/// noise, which is then its expected synthetic count; with
/// [`LaplaceScale::Count`] it releases `n_i` plus noise.
pub fn synth_laplace(
    data: &PlanarPattern,
    budget: &PrivacyBudget,
    grid: &CellGrid,
    scale: LaplaceScale,
    replicates: usize,
    seed: u64,
) -> Result<PlanarSynthesis> {
    if grid.domain != *data.domain() {
        return Err(invalid("cell grid and data live on different domains"));
    }
    let areas = grid.cell_areas();
    let sens = scale.sensitivity(&areas)?;
    let noise_scale = sens.delta1 / budget.epsilon;
    let counts = grid.counts(data.points());
    let values: Vec<f64> = match scale {
        LaplaceScale::Density => counts
            .iter()
            .zip(&areas)
            .map(|(&c, a)| c as f64 / a)
            .collect(),
        LaplaceScale::Count => counts.iter().map(|&c| c as f64).collect(),
    };
    let mut patterns = Vec::with_capacity(replicates);
    let mut intensities = Vec::with_capacity(replicates);
    for k in 0..replicates {
        let mut rng = stream(seed, k as u64);
        let gamma = laplace_release(&values, noise_scale, &mut rng);
        let model = PiecewiseConstant::new(*grid, gamma)?;
        let pts = sample_piecewise_constant(&model, &mut rng);
        patterns.push(PlanarPattern::new(*data.domain(), pts)?);
        intensities.push(IntensityModel::PiecewiseConstant(model));
    }
    Ok(PlanarSynthesis {
        report: SynthesisReport {
            method: Method::Lap,
            network: false,
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
    use crate::geometry::{Point, RectDomain};
    use crate::pointprocess::{sample_homogeneous, PlanarIntensity};
    use crate::rng::seeded;

    fn unit() -> RectDomain {
        RectDomain::square(0.0, 1.0).unwrap()
    }

    fn uniform_data(n_rate: f64, seed: u64) -> PlanarPattern {
        let pts = sample_homogeneous(&unit(), n_rate, &mut seeded(seed)).unwrap();
        PlanarPattern::new(unit(), pts).unwrap()
    }

    fn quick_mcmc() -> LgcpOptions {
        LgcpOptions {
            mcmc: McmcConfig {
                chains: 2,
                warmup: 150,
                draws: 150,
                ..McmcConfig::default()
            },
            ..LgcpOptions::default()
        }
    }

    #[test]
    fn kernel_empty_input_gives_empty_output() {
        let b = PrivacyBudget::new(1.0, 0.1, 0.05).unwrap();
        let s = synth_kernel(&PlanarPattern::empty(unit()), &b, 20, 3).unwrap();
        assert!(s.patterns.iter().all(|p| p.is_empty()));
    }

    #[test]
    fn kernel_mean_count_matches_input() {
        let data = uniform_data(30.0, 1);
        let b = PrivacyBudget::new(1.0, 1.0 / data.len() as f64, 0.05).unwrap();
        let s = synth_kernel(&data, &b, 2000, 7).unwrap();
        let mean = s.report.counts.iter().sum::<usize>() as f64 / 2000.0;
        let n = data.len() as f64;
        assert!(
            (mean - n).abs() < 4.0 * (n / 2000.0).sqrt(),
            "{mean} vs {n}"
        );
    }

    #[test]
    fn calibration_text_lists_budget_and_parameters() {
        let data = uniform_data(20.0, 4);
        let b = PrivacyBudget::new(1.0, 0.05, 0.05).unwrap();
        let text = synth_kernel(&data, &b, 1, 0)
            .unwrap()
            .report
            .calibration_text();
        for key in [
            "epsilon = 1",
            "delta = 0.05",
            "alpha = 0.05",
            "h = ",
            "k = ",
            "bound_slack = ",
        ] {
            assert!(text.contains(key), "{key} missing from {text}");
        }
        let g = CellGrid::new(unit(), 4, 4).unwrap();
        let text = synth_laplace(&data, &b, &g, LaplaceScale::Count, 1, 0)
            .unwrap()
            .report
            .calibration_text();
        assert!(
            text.contains("Delta = 2\n") && text.contains("noise_scale = 2\n"),
            "{text}"
        );
    }

    #[test]
    fn kernel_and_lgcp_reject_pure_dp() {
        let data = uniform_data(10.0, 2);
        let b = PrivacyBudget::new(1.0, 0.0, 0.05).unwrap();
        assert!(synth_kernel(&data, &b, 1, 0).is_err());
        let t = Arc::new(Tessellation::triangular(&unit(), 6, 6).unwrap());
        assert!(synth_lgcp(&data, &b, &t, &quick_mcmc(), 1, 0).is_err());
        let g = CellGrid::new(unit(), 5, 5).unwrap();
        assert!(synth_laplace(&data, &b, &g, LaplaceScale::Density, 1, 0).is_ok());
    }

    #[test]
    fn runs_are_reproducible() {
        let data = uniform_data(20.0, 3);
        let b = PrivacyBudget::new(1.0, 0.05, 0.05).unwrap();
        let t = Arc::new(Tessellation::triangular(&unit(), 5, 5).unwrap());
        let a = synth_lgcp(&data, &b, &t, &quick_mcmc(), 3, 11).unwrap();
        let c = synth_lgcp(&data, &b, &t, &quick_mcmc(), 3, 11).unwrap();
        assert_eq!(a.patterns, c.patterns);
        let g = CellGrid::new(unit(), 4, 4).unwrap();
        let a = synth_laplace(&data, &b, &g, LaplaceScale::Count, 3, 5).unwrap();
        let c = synth_laplace(&data, &b, &g, LaplaceScale::Count, 3, 5).unwrap();
        assert_eq!(a.patterns, c.patterns);
    }

    #[test]
    fn lgcp_tiny_ratio_is_nearly_homogeneous() {
        let data = uniform_data(40.0, 4);
        let n = data.len() as f64;
        let b = PrivacyBudget::new(0.01, 1e-6, 0.05).unwrap();
        let t = Arc::new(Tessellation::triangular(&unit(), 6, 6).unwrap());
        let s = synth_lgcp(&data, &b, &t, &quick_mcmc(), 40, 2).unwrap();
        for m in &s.intensities {
            let IntensityModel::LogLinear(f) = m else {
                panic!()
            };
            assert!(f.beta().iter().all(|v| v.abs() < 1e-3));
            assert!((f.integral() / n - 1.0).abs() < 1e-2);
        }
        let CalibrationRecord::Lgcp { delta_bound, .. } = s.report.calibration else {
            panic!()
        };
        assert!(delta_bound <= 1e-6);
    }

    #[test]
    fn lgcp_numeric_bound_respects_budget() {
        let data = uniform_data(50.0, 5);
        let b = PrivacyBudget::new(1.0, 1.0 / data.len() as f64, 0.1).unwrap();
        let t = Arc::new(Tessellation::triangular(&unit(), 8, 8).unwrap());
        let s = synth_lgcp(&data, &b, &t, &quick_mcmc(), 2, 0).unwrap();
        let CalibrationRecord::Lgcp { delta_bound, .. } = s.report.calibration else {
            panic!()
        };
        assert!(delta_bound > 0.0 && delta_bound <= b.delta);
    }

    #[test]
    fn lgcp_refuses_alpha_above_grid_ceiling() {
        let data = uniform_data(10.0, 6);
        let b = PrivacyBudget::new(1.0, 0.1, 0.5).unwrap();
        let t = Arc::new(Tessellation::triangular(&unit(), 6, 6).unwrap());
        assert!(matches!(
            synth_lgcp(&data, &b, &t, &quick_mcmc(), 1, 0),
            Err(Error::CalibrationInfeasible(_))
        ));
    }

    #[test]
    fn laplace_noiseless_limit() {
        let pts = vec![
            Point::new(0.1, 0.1),
            Point::new(0.2, 0.3),
            Point::new(0.9, 0.9),
        ];
        let data = PlanarPattern::new(unit(), pts).unwrap();
        let g = CellGrid::new(unit(), 2, 2).unwrap();
        let b = PrivacyBudget::new(1e12, 0.0, 0.1).unwrap();
        let s = synth_laplace(&data, &b, &g, LaplaceScale::Density, 1, 0).unwrap();
        let IntensityModel::PiecewiseConstant(m) = &s.intensities[0] else {
            panic!()
        };
        let want = [8.0, 0.0, 0.0, 4.0];
        for (g, w) in m.gamma().iter().zip(want) {
            assert!((g - w).abs() < 1e-9);
        }
    }

    #[test]
    fn laplace_small_budget_inflates_counts() {
        let data = uniform_data(19.0, 8);
        let g = CellGrid::new(unit(), 10, 10).unwrap();
        let b = PrivacyBudget::new(0.1, 0.0, 0.1).unwrap();
        let s = synth_laplace(&data, &b, &g, LaplaceScale::Count, 5, 0).unwrap();
        let mean = s.report.counts.iter().sum::<usize>() as f64 / 5.0;
        // E max(0, Lap(20)) = 10 per empty cell
        assert!(mean > 800.0 && mean < 1200.0, "{mean}");
    }
}
