//! Batch experiments: datasets drawn from built-in intensities (or a
//! network pattern), synthetic replicates for each method and budget, and
//! summary metrics written as CSV plus JSON manifests.
//!
//! The synthesis seed of a cell depends on the dataset, the original
//! replicate and the method but not on ε, so the budgets of one method are
//! compared on common random numbers.

mod network;

pub use network::{chicago_like, run_network_experiment, NetworkExperimentConfig};

use std::fmt;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{invalid, Error, Result};
use crate::eval::{default_r_grid, kernel_estimate, khat_inhom, mise, pmse, KCurve};
use crate::geometry::{Point, RectDomain, Tessellation, TessellationKind};
use crate::pointprocess::{sample_thinning, CellGrid, FnIntensity, PlanarPattern};
use crate::privacy::{alpha_ceiling, LaplaceScale, PrivacyBudget};
use crate::rng::{derive_seed, stream};
use crate::synth::{synth_kernel, synth_laplace, synth_lgcp, LgcpOptions, Method, SynthesisReport};

#[derive(Deserialize)]
#[serde(untagged)]
enum NumOrText {
    Num(f64),
    Text(String),
}

/// δ as a number or as `1/n` of the input size.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DeltaSpec {
    Value(f64),
    InverseN,
}

impl DeltaSpec {
    pub fn resolve(self, n: usize) -> Result<f64> {
        match self {
            DeltaSpec::Value(d) => Ok(d),
            DeltaSpec::InverseN if n >= 2 => Ok(1.0 / n as f64),
            DeltaSpec::InverseN => Err(invalid(format!(
                "delta = 1/n needs at least two points, got {n}"
            ))),
        }
    }
}

impl FromStr for DeltaSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        if t.eq_ignore_ascii_case("1/n") {
            return Ok(DeltaSpec::InverseN);
        }
        t.parse()
            .map(DeltaSpec::Value)
            .map_err(|_| invalid(format!("delta must be a number or 1/n, got {s:?}")))
    }
}

impl fmt::Display for DeltaSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DeltaSpec::Value(d) => write!(f, "{d}"),
            DeltaSpec::InverseN => f.write_str("1/n"),
        }
    }
}

impl Serialize for DeltaSpec {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            DeltaSpec::Value(d) => s.serialize_f64(*d),
            DeltaSpec::InverseN => s.serialize_str("1/n"),
        }
    }
}

impl<'de> Deserialize<'de> for DeltaSpec {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        match NumOrText::deserialize(d)? {
            NumOrText::Num(v) => Ok(DeltaSpec::Value(v)),
            NumOrText::Text(t) => t.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// α as a number or `auto`: the tessellation's pair-census ceiling in the
/// plane, the discretization resolution on networks.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum AlphaSpec {
    Value(f64),
    Auto,
}

impl FromStr for AlphaSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        if t.eq_ignore_ascii_case("auto") {
            return Ok(AlphaSpec::Auto);
        }
        t.parse()
            .map(AlphaSpec::Value)
            .map_err(|_| invalid(format!("alpha must be a number or auto, got {s:?}")))
    }
}

impl fmt::Display for AlphaSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AlphaSpec::Value(a) => write!(f, "{a}"),
            AlphaSpec::Auto => f.write_str("auto"),
        }
    }
}

impl Serialize for AlphaSpec {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            AlphaSpec::Value(a) => s.serialize_f64(*a),
            AlphaSpec::Auto => s.serialize_str("auto"),
        }
    }
}

impl<'de> Deserialize<'de> for AlphaSpec {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        match NumOrText::deserialize(d)? {
            NumOrText::Num(v) => Ok(AlphaSpec::Value(v)),
            NumOrText::Text(t) => t.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// The four simulation intensities and their domains.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Builtin {
    Lambda1,
    Lambda2,
    Lambda3,
    Lambda4,
}

impl Builtin {
    pub const ALL: [Builtin; 4] = [
        Builtin::Lambda1,
        Builtin::Lambda2,
        Builtin::Lambda3,
        Builtin::Lambda4,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Builtin::Lambda1 => "lambda1",
            Builtin::Lambda2 => "lambda2",
            Builtin::Lambda3 => "lambda3",
            Builtin::Lambda4 => "lambda4",
        }
    }

    pub fn domain(self) -> RectDomain {
        let (lo, hi) = match self {
            Builtin::Lambda1 => (0.0, 1.0),
            Builtin::Lambda2 => (-10.0, 10.0),
            Builtin::Lambda3 => (0.0, 10.0),
            Builtin::Lambda4 => (-5.0, 5.0),
        };
        RectDomain::square(lo, hi).expect("built-in domains are valid")
    }

    pub fn value(self, p: &Point) -> f64 {
        let (x, y) = (p.x, p.y);
        match self {
            Builtin::Lambda1 => 10.0,
            Builtin::Lambda2 => (-(x * x + y * y) / 25.0).exp(),
            Builtin::Lambda3 => 0.5 + 5.0 * (-(x - y).powi(2)).exp(),
            Builtin::Lambda4 => {
                5.0 * (-((x - 3.0).powi(2) + (y - 3.0).powi(2)) / 2.0).exp()
                    + 5.0 * (-((x + 3.0).powi(2) + (y + 3.0).powi(2)) / 2.0).exp()
            }
        }
    }

    /// Upper bound used for thinning.
    pub fn bound(self) -> f64 {
        match self {
            Builtin::Lambda1 => 10.0,
            Builtin::Lambda2 => 1.0,
            Builtin::Lambda3 => 5.5,
            // the second bump adds 5e^{-36} at the first one's center
            Builtin::Lambda4 => 5.0 + 1e-12,
        }
    }

    pub fn intensity(self) -> Result<FnIntensity> {
        FnIntensity::new(self.domain(), self.bound(), move |p| self.value(p))
    }

    pub fn label(self) -> u64 {
        self as u64 + 1
    }
}

impl FromStr for Builtin {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "lambda1" | "l1" | "1" => Ok(Builtin::Lambda1),
            "lambda2" | "l2" | "2" => Ok(Builtin::Lambda2),
            "lambda3" | "l3" | "3" => Ok(Builtin::Lambda3),
            "lambda4" | "l4" | "4" => Ok(Builtin::Lambda4),
            other => Err(invalid(format!("unknown intensity {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellStatus {
    Ok,
    Infeasible,
    Failed,
}

/// One line of the results table. Original-data rows use method `ori` and
/// leave ε and the comparison metrics empty.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub dataset: String,
    pub method: String,
    pub epsilon: Option<f64>,
    pub pmse_mean: Option<f64>,
    pub pmse_std: Option<f64>,
    pub npoints_mean: Option<f64>,
    pub mise: Option<f64>,
    pub status: CellStatus,
}

/// Everything needed to trace one results row back to its inputs.
#[derive(Clone, Debug, Serialize)]
pub struct CellManifest {
    pub dataset: String,
    pub method: Method,
    pub epsilon: f64,
    pub status: CellStatus,
    pub messages: Vec<String>,
    /// Synthesis seed per original dataset.
    pub seeds: Vec<u64>,
    pub reports: Vec<SynthesisReport>,
    /// `key = value` calibration block of each report.
    pub calibration: Vec<String>,
    pub kcurve: String,
}

impl CellManifest {
    fn stem(&self) -> String {
        cell_stem(&self.dataset, self.method, self.epsilon)
    }
}

fn cell_stem(dataset: &str, method: Method, epsilon: f64) -> String {
    format!("{dataset}_{}_eps{epsilon}", method.name())
}

/// Results, curves and manifests of one experiment.
#[derive(Clone, Debug)]
pub struct ExperimentOutput {
    pub rows: Vec<ResultRow>,
    pub cells: Vec<CellManifest>,
    /// Mean K curves keyed by file stem.
    pub curves: Vec<(String, KCurve)>,
    pub config: serde_json::Value,
}

impl ExperimentOutput {
    /// True when some cell is infeasible or failed.
    pub fn partial(&self) -> bool {
        self.rows.iter().any(|r| r.status != CellStatus::Ok)
    }

    pub fn row(&self, dataset: &str, method: &str, epsilon: Option<f64>) -> Option<&ResultRow> {
        self.rows
            .iter()
            .find(|r| r.dataset == dataset && r.method == method && r.epsilon == epsilon)
    }

    pub fn write_results_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for row in &self.rows {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Writes `results.csv`, `manifest.json`, `kcurves/*.csv` and
    /// `manifests/*.json` under `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir.join("kcurves"))?;
        fs::create_dir_all(dir.join("manifests"))?;
        self.write_results_csv(BufWriter::new(File::create(dir.join("results.csv"))?))?;
        for (stem, curve) in &self.curves {
            curve.write_csv(BufWriter::new(File::create(
                dir.join("kcurves").join(format!("{stem}.csv")),
            )?))?;
        }
        for cell in &self.cells {
            let f = File::create(dir.join("manifests").join(format!("{}.json", cell.stem())))?;
            serde_json::to_writer_pretty(BufWriter::new(f), cell)?;
        }
        let top = serde_json::json!({
            "version": env!("CARGO_PKG_VERSION"),
            "config": self.config,
            "partial": self.partial(),
            "cells": self.cells.iter().map(|c| format!("manifests/{}.json", c.stem())).collect::<Vec<_>>(),
        });
        serde_json::to_writer_pretty(
            BufWriter::new(File::create(dir.join("manifest.json"))?),
            &top,
        )?;
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct PlanarExperimentConfig {
    pub intensities: Vec<Builtin>,
    pub methods: Vec<Method>,
    pub epsilons: Vec<f64>,
    pub n_ori: usize,
    pub n_syn: usize,
    pub delta: DeltaSpec,
    pub alpha: AlphaSpec,
    /// Knots per axis of the LGCP tessellation; the Laplace grid has
    /// `knots − 1` cells per axis so both share the same spacing.
    pub knots: usize,
    pub tess: TessellationKind,
    pub laplace_scale: LaplaceScale,
    pub lgcp: LgcpOptions,
    pub seed: u64,
}

impl Default for PlanarExperimentConfig {
    fn default() -> Self {
        PlanarExperimentConfig {
            intensities: Builtin::ALL.to_vec(),
            methods: vec![Method::Kernel, Method::Lgcp, Method::Lap],
            epsilons: vec![0.1, 1.0, 10.0],
            n_ori: 10,
            n_syn: 10,
            delta: DeltaSpec::InverseN,
            alpha: AlphaSpec::Auto,
            knots: 11,
            tess: TessellationKind::Triangular,
            laplace_scale: LaplaceScale::Count,
            lgcp: LgcpOptions::default(),
            seed: 1,
        }
    }
}

pub(crate) fn validate_common(epsilons: &[f64], methods: &[Method], n_syn: usize) -> Result<()> {
    if epsilons.is_empty() || epsilons.iter().any(|e| !(*e > 0.0) || !e.is_finite()) {
        return Err(invalid(
            "epsilons must be a nonempty list of positive numbers",
        ));
    }
    if methods.is_empty() {
        return Err(invalid("no methods selected"));
    }
    if n_syn == 0 {
        return Err(invalid("n_syn must be positive"));
    }
    Ok(())
}

impl PlanarExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        validate_common(&self.epsilons, &self.methods, self.n_syn)?;
        if self.intensities.is_empty() || self.n_ori == 0 {
            return Err(invalid(
                "need at least one intensity and one original dataset",
            ));
        }
        if self.knots < 3 {
            return Err(invalid(format!(
                "need at least 3 knots per axis, got {}",
                self.knots
            )));
        }
        if let AlphaSpec::Value(a) = self.alpha {
            if !(a > 0.0) {
                return Err(invalid(format!("alpha must be positive, got {a}")));
            }
        }
        if let DeltaSpec::Value(d) = self.delta {
            if !(0.0..1.0).contains(&d) {
                return Err(invalid(format!("delta must lie in [0, 1), got {d}")));
            }
        }
        Ok(())
    }
}

/// Metrics of one original dataset under one method and budget.
#[derive(Clone, Debug, Default)]
pub(crate) struct UnitOutcome {
    pub pmse: Vec<f64>,
    pub counts: Vec<usize>,
    pub k_sum: Option<KCurve>,
    pub n_curves: usize,
    pub mise: Option<f64>,
    pub messages: Vec<String>,
}

impl UnitOutcome {
    pub(crate) fn add_curve(&mut self, c: &KCurve) {
        match &mut self.k_sum {
            Some(acc) => acc.k.iter_mut().zip(&c.k).for_each(|(a, b)| *a += b),
            None => self.k_sum = Some(c.clone()),
        }
        self.n_curves += 1;
    }
}

fn mean_std(v: &[f64]) -> (Option<f64>, Option<f64>) {
    if v.is_empty() {
        return (None, None);
    }
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (Some(m), None);
    }
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (Some(m), Some(var.sqrt()))
}

fn mean_curve(sum: Option<KCurve>, n: usize) -> Option<KCurve> {
    sum.map(|mut c| {
        c.k.iter_mut().for_each(|k| *k /= n as f64);
        c
    })
}

/// Folds the unit results of one (method, ε) cell into a results row,
/// a manifest and a mean curve.
pub(crate) fn summarize_cell(
    out: &mut ExperimentOutput,
    dataset: &str,
    method: Method,
    epsilon: f64,
    units: Vec<(u64, Result<(UnitOutcome, SynthesisReport)>)>,
) {
    let stem = cell_stem(dataset, method, epsilon);
    let mut status = CellStatus::Ok;
    let mut messages = Vec::new();
    let mut seeds = Vec::new();
    let mut reports = Vec::new();
    let (mut pm, mut counts, mut mises) = (Vec::new(), Vec::new(), Vec::new());
    let (mut k_sum, mut n_curves) = (None::<KCurve>, 0usize);
    for (seed, u) in units {
        seeds.push(seed);
        match u {
            Ok((o, report)) => {
                pm.extend(o.pmse);
                counts.extend(o.counts.iter().map(|&c| c as f64));
                mises.extend(o.mise);
                messages.extend(o.messages);
                if let Some(c) = o.k_sum {
                    match &mut k_sum {
                        Some(acc) => acc.k.iter_mut().zip(&c.k).for_each(|(a, b)| *a += b),
                        None => k_sum = Some(c),
                    }
                    n_curves += o.n_curves;
                }
                reports.push(report);
            }
            Err(e) => {
                let s = if matches!(e, Error::CalibrationInfeasible(_)) {
                    CellStatus::Infeasible
                } else {
                    CellStatus::Failed
                };
                if status == CellStatus::Ok || s == CellStatus::Failed {
                    status = s;
                }
                log::warn!("{stem}: {e}");
                messages.push(e.to_string());
            }
        }
    }
    let (pmse_mean, pmse_std) = mean_std(&pm);
    out.rows.push(ResultRow {
        dataset: dataset.to_string(),
        method: method.name().to_string(),
        epsilon: Some(epsilon),
        pmse_mean,
        pmse_std,
        npoints_mean: mean_std(&counts).0,
        mise: mean_std(&mises).0,
        status,
    });
    if let Some(c) = mean_curve(k_sum, n_curves) {
        out.curves.push((stem.clone(), c));
    }
    out.cells.push(CellManifest {
        dataset: dataset.to_string(),
        method,
        epsilon,
        status,
        messages,
        seeds,
        calibration: reports.iter().map(|r| r.calibration_text()).collect(),
        reports,
        kcurve: format!("kcurves/{stem}.csv"),
    });
}

pub(crate) fn original_row(
    out: &mut ExperimentOutput,
    dataset: &str,
    counts: &[usize],
    k_ori: &[&KCurve],
) {
    let c: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
    out.rows.push(ResultRow {
        dataset: dataset.to_string(),
        method: "ori".into(),
        epsilon: None,
        pmse_mean: None,
        pmse_std: None,
        npoints_mean: mean_std(&c).0,
        mise: None,
        status: CellStatus::Ok,
    });
    if let Some(first) = k_ori.first() {
        let mut acc = (*first).clone();
        for c in &k_ori[1..] {
            acc.k.iter_mut().zip(&c.k).for_each(|(a, b)| *a += b);
        }
        if let Some(c) = mean_curve(Some(acc), k_ori.len()) {
            out.curves.push((format!("{dataset}_ori"), c));
        }
    }
}

fn method_label(m: Method) -> u64 {
    m as u64 + 1
}

/// Samples `n_ori` datasets per built-in intensity and evaluates every
/// method and budget on them. Failed cells are recorded, not raised.
pub fn run_planar_experiment(cfg: &PlanarExperimentConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let mut out = ExperimentOutput {
        rows: Vec::new(),
        cells: Vec::new(),
        curves: Vec::new(),
        config: serde_json::to_value(cfg)?,
    };
    for &b in &cfg.intensities {
        run_builtin(cfg, b, &mut out)?;
    }
    Ok(out)
}

fn run_builtin(cfg: &PlanarExperimentConfig, b: Builtin, out: &mut ExperimentOutput) -> Result<()> {
    let domain = b.domain();
    let truth = b.intensity()?;
    let r = default_r_grid(&domain);
    let data_seed = derive_seed(cfg.seed, &[b.label(), 0]);
    let originals = (0..cfg.n_ori)
        .map(|j| {
            let (pts, _) = sample_thinning(&truth, &mut stream(data_seed, j as u64))?;
            PlanarPattern::new(domain, pts)
        })
        .collect::<Result<Vec<_>>>()?;
    let k_ori: Vec<Result<KCurve>> = originals
        .par_iter()
        .map(|d| khat_inhom(d, &kernel_estimate(d)?, &r))
        .collect();
    let ok_curves: Vec<&KCurve> = k_ori.iter().filter_map(|k| k.as_ref().ok()).collect();
    original_row(
        out,
        b.name(),
        &originals.iter().map(|d| d.len()).collect::<Vec<_>>(),
        &ok_curves,
    );

    let tess = Arc::new(match cfg.tess {
        TessellationKind::Triangular => Tessellation::triangular(&domain, cfg.knots, cfg.knots)?,
        TessellationKind::Square => Tessellation::square(&domain, cfg.knots, cfg.knots)?,
    });
    let grid = CellGrid::new(domain, cfg.knots - 1, cfg.knots - 1)?;
    let alpha = match cfg.alpha {
        AlphaSpec::Auto => alpha_ceiling(&tess),
        AlphaSpec::Value(a) => a,
    };

    let mut units = Vec::new();
    for &m in &cfg.methods {
        for &eps in &cfg.epsilons {
            for j in 0..cfg.n_ori {
                units.push((m, eps, j));
            }
        }
    }
    let results: Vec<(u64, Result<(UnitOutcome, SynthesisReport)>)> = units
        .par_iter()
        .map(|&(m, eps, j)| {
            let seed = derive_seed(cfg.seed, &[b.label(), 1, j as u64, method_label(m)]);
            let data = &originals[j];
            let run = || -> Result<(UnitOutcome, SynthesisReport)> {
                let delta = cfg.delta.resolve(data.len())?;
                let budget = PrivacyBudget::new(eps, delta, alpha)?;
                let syn = match m {
                    Method::Kernel => synth_kernel(data, &budget, cfg.n_syn, seed)?,
                    Method::Lgcp => synth_lgcp(data, &budget, &tess, &cfg.lgcp, cfg.n_syn, seed)?,
                    Method::Lap => {
                        synth_laplace(data, &budget, &grid, cfg.laplace_scale, cfg.n_syn, seed)?
                    }
                };
                let mut o = UnitOutcome::default();
                let mut curves = Vec::new();
                for (p, lam) in syn.patterns.iter().zip(&syn.intensities) {
                    o.counts.push(p.len());
                    match pmse(data.points(), p.points(), &truth, lam) {
                        Ok(v) => o.pmse.push(v),
                        Err(e) => o.messages.push(format!("pMSE skipped: {e}")),
                    }
                    let k = khat_inhom(p, lam, &r)?;
                    o.add_curve(&k);
                    curves.push(k);
                }
                if let Ok(k0) = &k_ori[j] {
                    match mise(k0, &curves) {
                        Ok(v) => o.mise = Some(v),
                        Err(e) => o.messages.push(format!("MISE skipped: {e}")),
                    }
                }
                Ok((o, syn.report))
            };
            (seed, run())
        })
        .collect();

    let mut it = results.into_iter();
    for &m in &cfg.methods {
        for &eps in &cfg.epsilons {
            let cell: Vec<_> = it.by_ref().take(cfg.n_ori).collect();
            summarize_cell(out, b.name(), m, eps, cell);
        }
    }
    Ok(())
}
