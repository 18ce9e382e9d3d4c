use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use log::{info, warn};
use serde::Serialize;
use serde_json::json;

use pointsynth::eval::{
    default_r_grid, kernel_estimate, khat_inhom, khat_network, mise, pmse, r_grid, KCurve,
};
use pointsynth::experiment::{
    chicago_like, run_network_experiment, run_planar_experiment, AlphaSpec, Builtin, CellStatus,
    DeltaSpec, ExperimentOutput, NetworkExperimentConfig, PlanarExperimentConfig,
};
use pointsynth::geometry::{LinearNetwork, Point, RectDomain, Tessellation, TessellationKind};
use pointsynth::io::{
    dedup_points, read_lines, read_points, snap_to_network, write_lines_csv, write_network_csv,
    write_planar_csv, IngestReport, Projection,
};
use pointsynth::pointprocess::{sample_thinning, CellGrid, NetworkPattern, PlanarPattern};
use pointsynth::privacy::{alpha_ceiling, PrivacyBudget};
use pointsynth::rng::{derive_seed, stream};
use pointsynth::synth::{
    synth_kernel, synth_laplace, synth_laplace_network, synth_lgcp, synth_lgcp_network,
    LgcpOptions, Method, NetworkLgcpOptions, SynthesisReport,
};

use crate::config::{Mode, Settings, Tess};

/// Why a run stopped early; both map to exit code 1.
#[derive(Debug)]
pub enum Failure {
    Config(String),
    Runtime(String),
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Config(m) => write!(f, "configuration error: {m}"),
            Failure::Runtime(m) => write!(f, "{m}"),
        }
    }
}

fn config(msg: impl Into<String>) -> Failure {
    Failure::Config(msg.into())
}

trait Context<T> {
    fn ctx(self, what: &str) -> Result<T, Failure>;
}

impl<T, E: std::fmt::Display> Context<T> for Result<T, E> {
    fn ctx(self, what: &str) -> Result<T, Failure> {
        self.map_err(|e| Failure::Runtime(format!("{what}: {e}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Complete,
    Partial,
}

pub fn run(s: &Settings) -> Result<Status, Failure> {
    match s.mode {
        Some(Mode::Simulate) => simulate(s),
        Some(Mode::Synthesize) => synthesize(s),
        Some(Mode::Evaluate) => evaluate(s),
        Some(Mode::Experiment) => experiment(s),
        None => Err(config("--mode is required")),
    }
}

fn create_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).ctx(&format!("creating {}", dir.display()))
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path)
        .map(BufWriter::new)
        .ctx(&format!("creating {}", path.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    serde_json::to_writer_pretty(create(path)?, value).ctx(&format!("writing {}", path.display()))
}

fn require_file(path: &Option<PathBuf>, flag: &str) -> Result<PathBuf, Failure> {
    let p = path
        .clone()
        .ok_or_else(|| config(format!("{flag} is required in this mode")))?;
    if !p.is_file() {
        return Err(config(format!("{} does not exist", p.display())));
    }
    Ok(p)
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "data".into())
}

enum Target {
    Builtins(Vec<Builtin>),
    ChicagoLike,
}

fn targets(s: &Settings) -> Result<Target, Failure> {
    let names = s.intensity.clone().unwrap_or_default();
    if names.iter().any(|n| n == "chicago_like") {
        if names.len() > 1 {
            return Err(config(
                "chicago_like cannot be combined with planar intensities",
            ));
        }
        return Ok(Target::ChicagoLike);
    }
    if names.is_empty() {
        return Ok(Target::Builtins(Builtin::ALL.to_vec()));
    }
    names
        .iter()
        .map(|n| n.parse::<Builtin>().map_err(|e| config(e.to_string())))
        .collect::<Result<_, _>>()
        .map(Target::Builtins)
}

// ------------------------------------------------------------ ingestion

struct PlanarInput {
    pattern: PlanarPattern,
    report: IngestReport,
    projection: Option<Projection>,
}

fn planar_window(s: &Settings) -> Result<Option<RectDomain>, Failure> {
    let Some(d) = &s.domain else { return Ok(None) };
    if d.len() != 4 {
        return Err(config("--domain takes x_min,y_min,x_max,y_max"));
    }
    Ok(Some(
        RectDomain::new(d[0], d[1], d[2], d[3]).map_err(|e| config(e.to_string()))?,
    ))
}

fn bounding_box(points: &[Point]) -> Option<RectDomain> {
    let first = points.first()?;
    let (mut lo, mut hi) = (*first, *first);
    for p in points {
        lo = Point::new(lo.x.min(p.x), lo.y.min(p.y));
        hi = Point::new(hi.x.max(p.x), hi.y.max(p.y));
    }
    RectDomain::new(lo.x, lo.y, hi.x, hi.y).ok()
}

fn ingest_planar_input(s: &Settings, path: &Path) -> Result<PlanarInput, Failure> {
    let raw = read_points(path, s.format_of(path)).ctx(&format!("reading {}", path.display()))?;
    let mut report = IngestReport {
        read: raw.len(),
        ..IngestReport::default()
    };
    if raw.is_empty() {
        report
            .warnings
            .push(format!("{} holds no points", path.display()));
    }
    let (pts, dup) = dedup_points(&raw);
    report.duplicates = dup;
    let window = planar_window(s)?;
    let projection = if s.lonlat.unwrap_or(false) {
        let anchor = match window {
            Some(w) => w.corners().to_vec(),
            None => pts.clone(),
        };
        Projection::about_bbox(&anchor)
    } else {
        None
    };
    let project = |p: &Point| projection.map_or(*p, |pr| pr.forward(p));
    let pts: Vec<Point> = pts.iter().map(project).collect();
    let domain = match window {
        Some(w) => {
            let (a, b) = (
                project(&Point::new(w.x_min, w.y_min)),
                project(&Point::new(w.x_max, w.y_max)),
            );
            RectDomain::new(a.x, a.y, b.x, b.y).map_err(|e| config(e.to_string()))?
        }
        None => bounding_box(&pts)
            .ok_or_else(|| config("cannot infer a window from these points; pass --domain"))?,
    };
    let inside: Vec<Point> = pts.iter().filter(|p| domain.contains(p)).copied().collect();
    report.rejected = pts.len() - inside.len();
    if report.rejected > 0 {
        report
            .warnings
            .push(format!("{} points lie outside the window", report.rejected));
    }
    for w in &report.warnings {
        warn!("{w}");
    }
    let pattern = PlanarPattern::new(domain, inside).ctx("building the pattern")?;
    Ok(PlanarInput {
        pattern,
        report,
        projection,
    })
}

struct NetworkInput {
    network: Arc<LinearNetwork>,
    projection: Option<Projection>,
    tolerance: f64,
}

fn ingest_network(s: &Settings, path: &Path) -> Result<NetworkInput, Failure> {
    let lines = read_lines(path, s.format_of(path)).ctx(&format!("reading {}", path.display()))?;
    let vertices: Vec<Point> = lines.iter().flatten().copied().collect();
    let projection = if s.lonlat.unwrap_or(false) {
        Projection::about_bbox(&vertices)
    } else {
        None
    };
    let lines: Vec<Vec<Point>> = lines
        .iter()
        .map(|l| {
            l.iter()
                .map(|p| projection.map_or(*p, |pr| pr.forward(p)))
                .collect()
        })
        .collect();
    let network = LinearNetwork::from_polylines(&lines, 1e-6).ctx("building the network")?;
    let diagonal = bounding_box(network.nodes()).map_or(1.0, |b| b.diameter());
    let tolerance = s.tolerance.unwrap_or(0.01 * diagonal);
    if !(tolerance >= 0.0) {
        return Err(config(format!(
            "tolerance must be non-negative, got {tolerance}"
        )));
    }
    Ok(NetworkInput {
        network: Arc::new(network),
        projection,
        tolerance,
    })
}

fn snap_points(
    s: &Settings,
    input: &NetworkInput,
    path: &Path,
    dedup: bool,
) -> Result<(NetworkPattern, IngestReport), Failure> {
    let raw = read_points(path, s.format_of(path)).ctx(&format!("reading {}", path.display()))?;
    let mut report = IngestReport {
        read: raw.len(),
        ..IngestReport::default()
    };
    if raw.is_empty() {
        report
            .warnings
            .push(format!("{} holds no points", path.display()));
    }
    let pts = if dedup {
        let (p, d) = dedup_points(&raw);
        report.duplicates = d;
        p
    } else {
        raw
    };
    let pts: Vec<Point> = pts
        .iter()
        .map(|p| input.projection.map_or(*p, |pr| pr.forward(p)))
        .collect();
    let (locs, rejects) = snap_to_network(&input.network, &pts, input.tolerance);
    report.rejected = rejects.len();
    if !rejects.is_empty() {
        let listed: Vec<String> = rejects
            .iter()
            .take(10)
            .map(|(i, d)| format!("#{i} at {d:.3}"))
            .collect();
        report.warnings.push(format!(
            "{} points farther than {} from the network: {}{}",
            rejects.len(),
            input.tolerance,
            listed.join(", "),
            if rejects.len() > 10 { ", ..." } else { "" }
        ));
    }
    for w in &report.warnings {
        warn!("{w}");
    }
    let pattern = NetworkPattern::new(input.network.clone(), locs).ctx("building the pattern")?;
    Ok((pattern, report))
}

// ------------------------------------------------------------ simulate

fn simulate(s: &Settings) -> Result<Status, Failure> {
    let dir = s.out_dir();
    create_dir(&dir)?;
    let seed = s.seed.unwrap_or(1);
    let mut files = Vec::new();
    match targets(s)? {
        Target::ChicagoLike => {
            let n = s.n_points.unwrap_or(85);
            let data = chicago_like(n, seed).ctx("simulating chicago_like")?;
            let net_path = dir.join("chicago_like_network.csv");
            write_lines_csv(data.network(), create(&net_path)?).ctx("writing the network")?;
            let pts_path = dir.join("chicago_like_points.csv");
            write_network_csv(&data, create(&pts_path)?).ctx("writing points")?;
            files.push(json!({"intensity": "chicago_like", "network": net_path, "points": pts_path, "count": n}));
        }
        Target::Builtins(list) => {
            let n_ori = s.n_ori.unwrap_or(1);
            for b in list {
                let truth = b.intensity().ctx("building the intensity")?;
                let data_seed = derive_seed(seed, &[b.label(), 0]);
                for j in 0..n_ori {
                    let (pts, diag) = sample_thinning(&truth, &mut stream(data_seed, j as u64))
                        .ctx("sampling")?;
                    let pattern = PlanarPattern::new(b.domain(), pts).ctx("sampling")?;
                    let path = dir.join(format!("{}_{j:03}.csv", b.name()));
                    write_planar_csv(&pattern, create(&path)?).ctx("writing points")?;
                    info!("{}: {} points", path.display(), pattern.len());
                    files.push(json!({
                        "intensity": b.name(),
                        "domain": b.domain(),
                        "path": path,
                        "count": pattern.len(),
                        "warnings": diag.warnings,
                    }));
                }
            }
        }
    }
    write_json(
        &dir.join("manifest.json"),
        &json!({"mode": "simulate", "seed": seed, "files": files}),
    )?;
    Ok(Status::Complete)
}

// ------------------------------------------------------------ synthesize

#[derive(Serialize)]
struct CellRecord {
    method: Method,
    epsilon: f64,
    status: CellStatus,
    seed: u64,
    message: Option<String>,
    directory: Option<PathBuf>,
    calibration: Option<String>,
    report: Option<SynthesisReport>,
}

fn budgets(s: &Settings, n: usize, alpha: f64) -> Result<Vec<PrivacyBudget>, Failure> {
    let delta = s
        .delta
        .unwrap_or(DeltaSpec::InverseN)
        .resolve(n)
        .map_err(|e| config(e.to_string()))?;
    s.epsilons()
        .iter()
        .map(|&e| PrivacyBudget::new(e, delta, alpha).map_err(|err| config(err.to_string())))
        .collect()
}

fn methods(s: &Settings, network: bool) -> Result<Vec<Method>, Failure> {
    let m = s.method.clone().unwrap_or_else(|| {
        if network {
            vec![Method::Lgcp, Method::Lap]
        } else {
            vec![Method::Kernel, Method::Lgcp, Method::Lap]
        }
    });
    if m.is_empty() {
        return Err(config("no method selected"));
    }
    if network && m.contains(&Method::Kernel) {
        return Err(config(
            "the kernel synthesizer is only available in the plane",
        ));
    }
    Ok(m)
}

fn knots(s: &Settings) -> Result<usize, Failure> {
    let k = s.knots.unwrap_or(11);
    if k < 2 {
        return Err(config(format!("knots must be at least 2, got {k}")));
    }
    Ok(k)
}

fn tess_kind(s: &Settings) -> TessellationKind {
    s.tess.unwrap_or(Tess::Tri).into()
}

fn resolution(s: &Settings) -> Result<f64, Failure> {
    let r = s.resolution.unwrap_or(50.0);
    if !(r > 0.0) {
        return Err(config(format!("resolution must be positive, got {r}")));
    }
    Ok(r)
}

fn n_syn(s: &Settings, default: usize) -> Result<usize, Failure> {
    match s.n_syn.unwrap_or(default) {
        0 => Err(config("n_syn must be positive")),
        n => Ok(n),
    }
}

fn synthesize(s: &Settings) -> Result<Status, Failure> {
    let points = require_file(&s.points, "--points")?;
    let network = s.network.clone();
    let methods = methods(s, network.is_some())?;
    let replicates = n_syn(s, 10)?;
    let seed = s.seed.unwrap_or(1);
    let dir = s.out_dir();

    type Job<'a> =
        Box<dyn Fn(Method, &PrivacyBudget, u64, &Path) -> pointsynth::Result<SynthesisReport> + 'a>;
    let (n, alpha, ingest, job): (usize, f64, IngestReport, Job) = if let Some(net_path) = network {
        if !net_path.is_file() {
            return Err(config(format!("{} does not exist", net_path.display())));
        }
        let input = ingest_network(s, &net_path)?;
        let (data, report) = snap_points(s, &input, &points, true)?;
        let res = resolution(s)?;
        let alpha = match s.alpha.unwrap_or(AlphaSpec::Auto) {
            AlphaSpec::Auto => res,
            AlphaSpec::Value(a) => a,
        };
        let disc = data
            .network()
            .discretize(res)
            .ctx("discretizing the network")?;
        let locs = data
            .locations()
            .iter()
            .map(|l| disc.map_location(l))
            .collect();
        let data =
            NetworkPattern::new(Arc::new(disc.network), locs).ctx("discretizing the network")?;
        let lgcp = NetworkLgcpOptions {
            mcmc: s.mcmc(NetworkLgcpOptions::default().mcmc),
            ..NetworkLgcpOptions::default()
        };
        let scale = s
            .laplace_scale
            .unwrap_or(crate::config::Scale::Count)
            .into();
        let n = data.len();
        let job: Job = Box::new(move |m, budget, cell_seed, out| {
            let syn = match m {
                Method::Lgcp => synth_lgcp_network(&data, budget, &lgcp, replicates, cell_seed)?,
                Method::Lap => synth_laplace_network(&data, budget, scale, replicates, cell_seed)?,
                Method::Kernel => unreachable!("rejected with the configuration"),
            };
            for (k, p) in syn.patterns.iter().enumerate() {
                write_network_csv(p, File::create(out.join(format!("syn_{k:03}.csv")))?)?;
            }
            Ok(syn.report)
        });
        (n, alpha, report, job)
    } else {
        let input = ingest_planar_input(s, &points)?;
        let data = input.pattern;
        let domain = *data.domain();
        let k = knots(s)?;
        let tess = match tess_kind(s) {
            TessellationKind::Triangular => Tessellation::triangular(&domain, k, k),
            TessellationKind::Square => Tessellation::square(&domain, k, k),
        };
        let tess = Arc::new(tess.map_err(|e| config(e.to_string()))?);
        let grid = CellGrid::new(domain, k - 1, k - 1).map_err(|e| config(e.to_string()))?;
        let alpha = match s.alpha.unwrap_or(AlphaSpec::Auto) {
            AlphaSpec::Auto => alpha_ceiling(&tess),
            AlphaSpec::Value(a) => a,
        };
        let lgcp = LgcpOptions {
            mcmc: s.mcmc(LgcpOptions::default().mcmc),
            ..LgcpOptions::default()
        };
        let scale = s
            .laplace_scale
            .unwrap_or(crate::config::Scale::Count)
            .into();
        let n = data.len();
        let job: Job = Box::new(move |m, budget, cell_seed, out| {
            let syn = match m {
                Method::Kernel => synth_kernel(&data, budget, replicates, cell_seed)?,
                Method::Lgcp => synth_lgcp(&data, budget, &tess, &lgcp, replicates, cell_seed)?,
                Method::Lap => synth_laplace(&data, budget, &grid, scale, replicates, cell_seed)?,
            };
            for (k, p) in syn.patterns.iter().enumerate() {
                write_planar_csv(p, File::create(out.join(format!("syn_{k:03}.csv")))?)?;
            }
            Ok(syn.report)
        });
        (n, alpha, input.report, job)
    };
    let budgets = budgets(s, n, alpha)?;
    create_dir(&dir)?;

    let mut cells = Vec::new();
    for &m in &methods {
        let cell_seed = derive_seed(seed, &[3, m as u64 + 1]);
        for budget in &budgets {
            let sub = dir.join(format!("{}_eps{}", m.name(), budget.epsilon));
            create_dir(&sub)?;
            let mut record = CellRecord {
                method: m,
                epsilon: budget.epsilon,
                status: CellStatus::Ok,
                seed: cell_seed,
                message: None,
                directory: Some(sub.clone()),
                calibration: None,
                report: None,
            };
            match job(m, budget, cell_seed, &sub) {
                Ok(report) => {
                    info!(
                        "{} at eps {}: {} patterns",
                        m.name(),
                        budget.epsilon,
                        report.counts.len()
                    );
                    record.calibration = Some(report.calibration_text());
                    record.report = Some(report);
                }
                Err(e) => {
                    warn!("{} at eps {}: {e}", m.name(), budget.epsilon);
                    record.status = match e {
                        pointsynth::Error::CalibrationInfeasible(_) => CellStatus::Infeasible,
                        _ => CellStatus::Failed,
                    };
                    record.message = Some(e.to_string());
                }
            }
            write_json(&sub.join("manifest.json"), &record)?;
            cells.push(record);
        }
    }
    let partial = cells.iter().any(|c| c.status != CellStatus::Ok);
    write_json(
        &dir.join("manifest.json"),
        &json!({
            "mode": "synthesize",
            "settings": s,
            "input": {"points": points, "count": n, "ingest": ingest},
            "alpha": alpha,
            "cells": cells,
        }),
    )?;
    Ok(if partial {
        Status::Partial
    } else {
        Status::Complete
    })
}

// ------------------------------------------------------------ evaluate

#[derive(Serialize)]
struct Scored {
    file: PathBuf,
    npoints: usize,
    pmse: Option<f64>,
    message: Option<String>,
}

fn write_curve(dir: &Path, name: &str, k: &KCurve) -> Result<(), Failure> {
    let path = dir.join(format!("{name}.csv"));
    k.write_csv(create(&path)?)
        .ctx(&format!("writing {}", path.display()))
}

fn evaluate(s: &Settings) -> Result<Status, Failure> {
    let points = require_file(&s.points, "--points")?;
    let synthetic = s.synthetic.clone().unwrap_or_default();
    if synthetic.is_empty() {
        return Err(config("--synthetic needs at least one file"));
    }
    for f in &synthetic {
        if !f.is_file() {
            return Err(config(format!("{} does not exist", f.display())));
        }
    }
    let dir = s.out_dir();
    let curves_dir = dir.join("kcurves");
    create_dir(&curves_dir)?;

    let mut scored = Vec::new();
    let mut curves = Vec::new();
    let k_ori = if let Some(net_path) = &s.network {
        if !net_path.is_file() {
            return Err(config(format!("{} does not exist", net_path.display())));
        }
        let input = ingest_network(s, net_path)?;
        let (ori, _) = snap_points(s, &input, &points, true)?;
        let r_points = s.r_points.unwrap_or(50);
        if r_points < 2 {
            return Err(config("r_points must be at least 2"));
        }
        let r = r_grid(input.network.diameter() / 4.0, r_points);
        let k_ori = khat_network(&ori, &r, None).ctx("K-function of the original")?;
        for f in &synthetic {
            let (syn, _) = snap_points(s, &input, f, false)?;
            let k = khat_network(&syn, &r, None);
            scored.push(Scored {
                file: f.clone(),
                npoints: syn.len(),
                pmse: None,
                message: k.as_ref().err().map(|e| e.to_string()),
            });
            if let Ok(k) = k {
                write_curve(&curves_dir, &stem(f), &k)?;
                curves.push(k);
            }
        }
        k_ori
    } else {
        let input = ingest_planar_input(s, &points)?;
        let ori = input.pattern;
        let domain = *ori.domain();
        let r = default_r_grid(&domain);
        let lam_ori = kernel_estimate(&ori).ctx("intensity of the original")?;
        let k_ori = khat_inhom(&ori, &lam_ori, &r).ctx("K-function of the original")?;
        for f in &synthetic {
            let raw = read_points(f, s.format_of(f)).ctx(&format!("reading {}", f.display()))?;
            let pts: Vec<Point> = raw
                .iter()
                .map(|p| input.projection.map_or(*p, |pr| pr.forward(p)))
                .filter(|p| domain.contains(p))
                .collect();
            let syn = PlanarPattern::new(domain, pts).ctx("building the pattern")?;
            let res = (|| {
                let lam = kernel_estimate(&syn)?;
                let k = khat_inhom(&syn, &lam, &r)?;
                let score = pmse(ori.points(), syn.points(), &lam_ori, &lam)?;
                Ok::<_, pointsynth::Error>((k, score))
            })();
            match res {
                Ok((k, score)) => {
                    write_curve(&curves_dir, &stem(f), &k)?;
                    curves.push(k);
                    scored.push(Scored {
                        file: f.clone(),
                        npoints: syn.len(),
                        pmse: Some(score),
                        message: None,
                    });
                }
                Err(e) => scored.push(Scored {
                    file: f.clone(),
                    npoints: syn.len(),
                    pmse: None,
                    message: Some(e.to_string()),
                }),
            }
        }
        k_ori
    };
    write_curve(&curves_dir, "original", &k_ori)?;
    let mise = mise(&k_ori, &curves).ok();

    let mut w = csv::Writer::from_writer(create(&dir.join("evaluation.csv"))?);
    w.write_record(["file", "npoints", "pmse"])
        .ctx("writing evaluation.csv")?;
    for r in &scored {
        w.write_record([
            r.file.display().to_string(),
            r.npoints.to_string(),
            r.pmse.map(|v| v.to_string()).unwrap_or_default(),
        ])
        .ctx("writing evaluation.csv")?;
    }
    w.flush().ctx("writing evaluation.csv")?;

    let values: Vec<f64> = scored.iter().filter_map(|r| r.pmse).collect();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let npoints: Vec<f64> = scored.iter().map(|r| r.npoints as f64).collect();
    let partial = scored.iter().any(|r| r.message.is_some());
    write_json(
        &dir.join("manifest.json"),
        &json!({
            "mode": "evaluate",
            "original": points,
            "npoints_mean": mean(&npoints),
            "pmse_mean": (!values.is_empty()).then(|| mean(&values)),
            "mise": mise,
            "files": scored,
        }),
    )?;
    Ok(if partial {
        Status::Partial
    } else {
        Status::Complete
    })
}

// ------------------------------------------------------------ experiment

fn experiment(s: &Settings) -> Result<Status, Failure> {
    let dir = s.out_dir();
    let seed = s.seed.unwrap_or(1);
    let delta = s.delta.unwrap_or(DeltaSpec::InverseN);
    let alpha = s.alpha.unwrap_or(AlphaSpec::Auto);
    let scale = s
        .laplace_scale
        .unwrap_or(crate::config::Scale::Count)
        .into();
    let network_run = |data: &NetworkPattern, name: &str| -> Result<ExperimentOutput, Failure> {
        let base = NetworkExperimentConfig::default();
        let cfg = NetworkExperimentConfig {
            methods: methods(s, true)?,
            epsilons: s.epsilons(),
            n_syn: n_syn(s, base.n_syn)?,
            delta,
            alpha,
            resolution: resolution(s)?,
            laplace_scale: scale,
            lgcp: NetworkLgcpOptions {
                mcmc: s.mcmc(base.lgcp.mcmc.clone()),
                ..base.lgcp
            },
            r_points: s.r_points.unwrap_or(base.r_points),
            seed,
        };
        cfg.validate().map_err(|e| config(e.to_string()))?;
        run_network_experiment(data, name, &cfg).ctx("network experiment")
    };
    let out = if let Some(net_path) = &s.network {
        let points = require_file(&s.points, "--points")?;
        if !net_path.is_file() {
            return Err(config(format!("{} does not exist", net_path.display())));
        }
        let input = ingest_network(s, net_path)?;
        let (data, _) = snap_points(s, &input, &points, true)?;
        network_run(&data, &stem(&points))?
    } else {
        match targets(s)? {
            Target::ChicagoLike => {
                let data =
                    chicago_like(s.n_points.unwrap_or(85), seed).ctx("simulating chicago_like")?;
                network_run(&data, "chicago_like")?
            }
            Target::Builtins(intensities) => {
                let base = PlanarExperimentConfig::default();
                let cfg = PlanarExperimentConfig {
                    intensities,
                    methods: methods(s, false)?,
                    epsilons: s.epsilons(),
                    n_ori: s.n_ori.unwrap_or(base.n_ori),
                    n_syn: n_syn(s, base.n_syn)?,
                    delta,
                    alpha,
                    knots: knots(s)?,
                    tess: tess_kind(s),
                    laplace_scale: scale,
                    lgcp: LgcpOptions {
                        mcmc: s.mcmc(base.lgcp.mcmc.clone()),
                        ..base.lgcp
                    },
                    seed,
                };
                cfg.validate().map_err(|e| config(e.to_string()))?;
                run_planar_experiment(&cfg).ctx("planar experiment")?
            }
        }
    };
    out.write(&dir)
        .ctx(&format!("writing results to {}", dir.display()))?;
    for row in out.rows.iter().filter(|r| r.status != CellStatus::Ok) {
        warn!(
            "{} {} at eps {:?} is {:?}",
            row.dataset, row.method, row.epsilon, row.status
        );
    }
    info!(
        "wrote {} result rows to {}",
        out.rows.len(),
        dir.join("results.csv").display()
    );
    Ok(if out.partial() {
        Status::Partial
    } else {
        Status::Complete
    })
}
