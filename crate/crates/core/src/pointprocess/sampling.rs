use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use statrs::distribution::{ContinuousCDF, Normal};

use super::intensity::{
    std_normal_cdf, CellGrid, FnIntensity, IntensityModel, KernelIntensity, LogLinearIntensity,
    NetworkLogLinear, NetworkPiecewiseConstant, PiecewiseConstant, PlanarIntensity,
};
use crate::error::{invalid, Result};
use crate::geometry::{LinearNetwork, NetLocation, Point, RectDomain};

/// Candidate cap per cell for thinning samplers.
const MAX_CANDIDATES: usize = 1_000_000;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SamplerDiagnostics {
    pub candidates: usize,
    pub accepted: usize,
    pub warnings: Vec<String>,
}

pub fn poisson_count<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> usize {
    if !(mean > 0.0) {
        return 0;
    }
    Poisson::new(mean).map_or(0, |p| p.sample(rng) as usize)
}

fn uniform_in<R: Rng + ?Sized>(x0: f64, y0: f64, x1: f64, y1: f64, rng: &mut R) -> Point {
    Point::new(
        x0 + rng.random::<f64>() * (x1 - x0),
        y0 + rng.random::<f64>() * (y1 - y0),
    )
}

pub fn sample_homogeneous<R: Rng + ?Sized>(
    domain: &RectDomain,
    rate: f64,
    rng: &mut R,
) -> Result<Vec<Point>> {
    if !(rate >= 0.0) {
        return Err(invalid(format!("rate must be nonnegative, got {rate}")));
    }
    let n = poisson_count(rate * domain.area(), rng);
    Ok((0..n)
        .map(|_| uniform_in(domain.x_min, domain.y_min, domain.x_max, domain.y_max, rng))
        .collect())
}

pub fn sample_homogeneous_network<R: Rng + ?Sized>(
    net: &LinearNetwork,
    rate: f64,
    rng: &mut R,
) -> Result<Vec<NetLocation>> {
    if !(rate >= 0.0) {
        return Err(invalid(format!("rate must be nonnegative, got {rate}")));
    }
    let n = poisson_count(rate * net.total_length(), rng);
    Ok((0..n).map(|_| net.sample_uniform(rng)).collect())
}

/// Lewis–Shedler thinning of a homogeneous process at the intensity's
/// bound. Values above the bound are reported in the diagnostics.
pub fn sample_thinning<R: Rng + ?Sized>(
    model: &FnIntensity,
    rng: &mut R,
) -> Result<(Vec<Point>, SamplerDiagnostics)> {
    let candidates = sample_homogeneous(model.domain(), model.bound(), rng)?;
    let mut diag = SamplerDiagnostics {
        candidates: candidates.len(),
        ..SamplerDiagnostics::default()
    };
    let mut out = Vec::new();
    let mut exceeded = 0usize;
    for s in candidates {
        let v = model.value(&s);
        if v > model.bound() {
            exceeded += 1;
        }
        if rng.random::<f64>() * model.bound() < v {
            out.push(s);
        }
    }
    if exceeded > 0 {
        diag.warnings.push(format!(
            "intensity exceeded its bound at {exceeded} candidates"
        ));
    }
    diag.accepted = out.len();
    Ok((out, diag))
}

/// Draw from `N(mu, sd²)` conditioned on `[lo, hi]`, where `lo ≤ mu ≤ hi`.
///
/// Plain rejection when the interval holds at least a quarter of the mass,
/// inverse-CDF otherwise. The interval always contains the mean, so the
/// inverse-CDF branch works away from the extreme tails.
pub fn sample_truncated_normal<R: Rng + ?Sized>(
    mu: f64,
    sd: f64,
    lo: f64,
    hi: f64,
    rng: &mut R,
) -> f64 {
    let a = (lo - mu) / sd;
    let b = (hi - mu) / sd;
    let (pa, pb) = (std_normal_cdf(a), std_normal_cdf(b));
    if pb - pa >= 0.25 {
        loop {
            let z: f64 = StandardNormal.sample(rng);
            if z >= a && z <= b {
                return mu + sd * z;
            }
        }
    }
    let std = Normal::standard();
    let u = pa + rng.random::<f64>() * (pb - pa);
    let z = std.inverse_cdf(u).clamp(a, b);
    mu + sd * z
}

/// Exact sampler for the edge-corrected kernel mixture: `Poisson(n)` points,
/// each from a uniformly chosen component truncated to the rectangle.
pub fn sample_kernel_mixture<R: Rng + ?Sized>(model: &KernelIntensity, rng: &mut R) -> Vec<Point> {
    let centers = model.centers();
    if centers.is_empty() {
        return Vec::new();
    }
    let d = model.domain();
    let h = model.bandwidth();
    let n = poisson_count(centers.len() as f64, rng);
    (0..n)
        .map(|_| {
            let c = centers[rng.random_range(0..centers.len())];
            Point::new(
                sample_truncated_normal(c.x, h, d.x_min, d.x_max, rng),
                sample_truncated_normal(c.y, h, d.y_min, d.y_max, rng),
            )
        })
        .collect()
}

/// Per-cell thinning with the vertex maximum of the log-intensity as the
/// envelope; exact because the log-intensity is linear (or bilinear) on
/// each cell.
pub fn sample_loglinear<R: Rng + ?Sized>(
    model: &LogLinearIntensity,
    rng: &mut R,
) -> (Vec<Point>, SamplerDiagnostics) {
    let tess = model.tessellation();
    let beta = model.beta();
    let mut diag = SamplerDiagnostics::default();
    let mut out = Vec::new();
    for c in 0..tess.n_cells() {
        let verts = tess.cell(c);
        let log_bar = model.lambda0()
            + verts
                .iter()
                .map(|&v| beta[v])
                .fold(f64::NEG_INFINITY, f64::max);
        let mean = log_bar.exp() * tess.cell_area(c);
        let mut m = poisson_count(mean, rng);
        if m > MAX_CANDIDATES {
            diag.warnings.push(format!(
                "cell {c}: {m} candidates capped at {MAX_CANDIDATES}"
            ));
            m = MAX_CANDIDATES;
        }
        diag.candidates += m;
        for _ in 0..m {
            let s = tess.sample_in_cell(c, rng);
            let Ok(w) = tess.eval_basis(&s) else { continue };
            let log_l = model.lambda0() + w.dot(beta);
            if rng.random::<f64>() < (log_l - log_bar).exp() {
                out.push(s);
            }
        }
    }
    diag.accepted = out.len();
    (out, diag)
}

/// Per-cell independent `Poisson(γ_i)` counts placed uniformly.
pub fn sample_piecewise_constant<R: Rng + ?Sized>(
    model: &PiecewiseConstant,
    rng: &mut R,
) -> Vec<Point> {
    let grid: &CellGrid = model.grid();
    let mut out = Vec::new();
    for (c, &g) in model.gamma().iter().enumerate() {
        let (x0, y0, x1, y1) = grid.cell_bounds(c);
        for _ in 0..poisson_count(g, rng) {
            out.push(uniform_in(x0, y0, x1, y1, rng));
        }
    }
    out
}

pub fn sample_model<R: Rng + ?Sized>(
    model: &IntensityModel,
    rng: &mut R,
) -> Result<(Vec<Point>, SamplerDiagnostics)> {
    let pts = match model {
        IntensityModel::Homogeneous { domain, rate } => sample_homogeneous(domain, *rate, rng)?,
        IntensityModel::KernelMixture(k) => sample_kernel_mixture(k, rng),
        IntensityModel::LogLinear(l) => return Ok(sample_loglinear(l, rng)),
        IntensityModel::PiecewiseConstant(p) => sample_piecewise_constant(p, rng),
    };
    let diag = SamplerDiagnostics {
        candidates: pts.len(),
        accepted: pts.len(),
        warnings: Vec::new(),
    };
    Ok((pts, diag))
}

pub fn sample_loglinear_network<R: Rng + ?Sized>(
    model: &NetworkLogLinear,
    rng: &mut R,
) -> (Vec<NetLocation>, SamplerDiagnostics) {
    let net = model.network();
    let beta = model.beta();
    let mut diag = SamplerDiagnostics::default();
    let mut out = Vec::new();
    for (k, s) in net.segments().iter().enumerate() {
        let log_bar = model.lambda0() + beta[s.a].max(beta[s.b]);
        let mut m = poisson_count(log_bar.exp() * s.length, rng);
        if m > MAX_CANDIDATES {
            diag.warnings.push(format!(
                "segment {k}: {m} candidates capped at {MAX_CANDIDATES}"
            ));
            m = MAX_CANDIDATES;
        }
        diag.candidates += m;
        for _ in 0..m {
            let t: f64 = rng.random();
            let log_l = model.lambda0() + (1.0 - t) * beta[s.a] + t * beta[s.b];
            if rng.random::<f64>() < (log_l - log_bar).exp() {
                out.push(NetLocation::new(k, t * s.length));
            }
        }
    }
    diag.accepted = out.len();
    (out, diag)
}

pub fn sample_piecewise_constant_network<R: Rng + ?Sized>(
    model: &NetworkPiecewiseConstant,
    rng: &mut R,
) -> Vec<NetLocation> {
    let net = model.network();
    let mut out = Vec::new();
    for (k, &g) in model.gamma().iter().enumerate() {
        let len = net.segments()[k].length;
        for _ in 0..poisson_count(g, rng) {
            out.push(NetLocation::new(k, rng.random::<f64>() * len));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Tessellation;
    use crate::pointprocess::PlanarIntensity;
    use crate::rng::seeded;
    use std::sync::Arc;

    fn unit() -> RectDomain {
        RectDomain::square(0.0, 1.0).unwrap()
    }

    #[test]
    fn homogeneous_zero_rate_and_errors() {
        let mut rng = seeded(1);
        assert!(sample_homogeneous(&unit(), 0.0, &mut rng)
            .unwrap()
            .is_empty());
        assert!(sample_homogeneous(&unit(), -1.0, &mut rng).is_err());
    }

    #[test]
    fn homogeneous_mean_count() {
        let mut rng = seeded(2);
        let reps = 10_000;
        let total: usize = (0..reps)
            .map(|_| sample_homogeneous(&unit(), 10.0, &mut rng).unwrap().len())
            .sum();
        let mean = total as f64 / reps as f64;
        assert!((mean - 10.0).abs() < 3.0 * (10.0f64 / reps as f64).sqrt());
    }

    #[test]
    fn thinning_mean_count_and_shape() {
        let d = RectDomain::square(0.0, 10.0).unwrap();
        let f = FnIntensity::new(d, 5.5, |p| 0.5 + 5.0 * (-(p.x - p.y).powi(2)).exp()).unwrap();
        // ∫ = 50 + 5 ∫∫ exp(−(x−y)²) = 50 + 5 (10√π erf(10) + e^{−100} − 1)
        let exact = 50.0 + 5.0 * (10.0 * std::f64::consts::PI.sqrt() - 1.0);
        assert!((f.integral() - exact).abs() < 1e-6 * exact);
        let mut rng = seeded(4);
        let reps = 2000;
        let (mut total, mut near) = (0usize, 0usize);
        for _ in 0..reps {
            let (pts, diag) = sample_thinning(&f, &mut rng).unwrap();
            assert!(diag.warnings.is_empty());
            total += pts.len();
            near += pts.iter().filter(|p| (p.x - p.y).abs() < 1.0).count();
        }
        let mean = total as f64 / reps as f64;
        assert!(
            (mean - exact).abs() < 4.0 * (exact / reps as f64).sqrt(),
            "{mean} vs {exact}"
        );
        // ∫_{-1}^{1} (10 − |t|) λ(t) dt / ∫_{-10}^{10} (10 − |t|) λ(t) dt by adaptive quadrature
        let frac = near as f64 / total as f64;
        assert!((frac - 0.606348).abs() < 0.005, "{frac}");
    }

    #[test]
    fn deterministic_given_seed() {
        let a = sample_homogeneous(&unit(), 50.0, &mut seeded(9)).unwrap();
        let b = sample_homogeneous(&unit(), 50.0, &mut seeded(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn truncated_normal_stays_inside_and_matches_mean() {
        let mut rng = seeded(3);
        // narrow interval relative to sd exercises the inverse-CDF branch
        let mut s = 0.0;
        for _ in 0..20_000 {
            let x = sample_truncated_normal(0.0, 10.0, -0.1, 0.3, &mut rng);
            assert!((-0.1..=0.3).contains(&x));
            s += x;
        }
        // nearly uniform on [-0.1, 0.3]
        assert!((s / 20_000.0 - 0.1).abs() < 0.005);
        for _ in 0..1000 {
            let x = sample_truncated_normal(0.0, 1.0, 0.0, 5.0, &mut rng);
            assert!((0.0..=5.0).contains(&x));
        }
    }

    #[test]
    fn kernel_empty_data() {
        let k = KernelIntensity::new(unit(), vec![], 0.1).unwrap();
        assert!(sample_kernel_mixture(&k, &mut seeded(1)).is_empty());
    }

    #[test]
    fn kernel_concentrates_near_single_point() {
        // with h = 0.01 B, P(|Z| > 4 h) in 2-D is exp(-8) < 0.1%
        let d = unit();
        let c = d.center();
        let h = 0.01 * d.diameter();
        let k = KernelIntensity::new(d, vec![c], h).unwrap();
        let mut rng = seeded(4);
        let (mut near, mut total) = (0usize, 0usize);
        for _ in 0..5000 {
            for p in sample_kernel_mixture(&k, &mut rng) {
                total += 1;
                if p.distance(&c) <= 4.0 * h {
                    near += 1;
                }
            }
        }
        assert!(near as f64 >= 0.99 * total as f64);
    }

    #[test]
    fn loglinear_constant_field_count() {
        let tess = Arc::new(Tessellation::triangular(&unit(), 5, 5).unwrap());
        let model =
            LogLinearIntensity::new(tess.clone(), 3.0f64.ln() + 1.0, vec![0.0; 25]).unwrap();
        let mut rng = seeded(5);
        let reps = 4000;
        let total: usize = (0..reps)
            .map(|_| sample_loglinear(&model, &mut rng).0.len())
            .sum();
        let expect = 3.0 * std::f64::consts::E;
        let mean = total as f64 / reps as f64;
        assert!((mean - expect).abs() < 3.0 * (expect / reps as f64).sqrt());
    }

    #[test]
    fn loglinear_vanishing_cell() {
        let tess = Arc::new(Tessellation::square(&unit(), 2, 2).unwrap());
        let model = LogLinearIntensity::new(tess, 0.0, vec![-200.0; 4]).unwrap();
        let (pts, _) = sample_loglinear(&model, &mut seeded(6));
        assert!(pts.is_empty());
    }

    #[test]
    fn loglinear_matches_quadrature() {
        let tess = Arc::new(Tessellation::triangular(&unit(), 6, 6).unwrap());
        let beta: Vec<f64> = tess
            .vertices()
            .iter()
            .map(|v| 2.0 * v.x - v.y * v.y)
            .collect();
        let model = LogLinearIntensity::new(tess, 3.0, beta).unwrap();
        let mut rng = seeded(7);
        let reps = 2000;
        let total: usize = (0..reps)
            .map(|_| sample_loglinear(&model, &mut rng).0.len())
            .sum();
        let mean = total as f64 / reps as f64;
        let exact = model.integral();
        assert!((mean - exact).abs() < 3.0 * (exact / reps as f64).sqrt());
        assert!((mean - model.dual_integral()).abs() < 0.02 * model.dual_integral());
    }

    #[test]
    fn piecewise_constant_counts() {
        let grid = CellGrid::new(unit(), 2, 1).unwrap();
        let model = PiecewiseConstant::new(grid, vec![0.0, 5.0]).unwrap();
        let mut rng = seeded(8);
        let reps = 10_000;
        let mut total = 0;
        for _ in 0..reps {
            let pts = sample_piecewise_constant(&model, &mut rng);
            assert!(pts.iter().all(|p| p.x >= 0.5));
            total += pts.len();
        }
        let mean = total as f64 / reps as f64;
        assert!((mean - 5.0).abs() < 3.0 * (5.0f64 / reps as f64).sqrt());
    }

    #[test]
    fn network_samplers() {
        let net = Arc::new(
            LinearNetwork::new(vec![Point::new(0.0, 0.0), Point::new(4.0, 0.0)], &[(0, 1)])
                .unwrap(),
        );
        let mut rng = seeded(10);
        let model = NetworkLogLinear::new(net.clone(), 1.0f64.ln(), vec![0.0, 0.0]).unwrap();
        let reps = 5000;
        let total: usize = (0..reps)
            .map(|_| sample_loglinear_network(&model, &mut rng).0.len())
            .sum();
        let mean = total as f64 / reps as f64;
        assert!((mean - 4.0).abs() < 3.0 * (4.0f64 / reps as f64).sqrt());
        let pc = NetworkPiecewiseConstant::new(net.clone(), vec![2.0]).unwrap();
        let locs = sample_piecewise_constant_network(&pc, &mut rng);
        assert!(locs.iter().all(|l| net.check_location(l).is_ok()));
        let hom = sample_homogeneous_network(&net, 2.0, &mut rng).unwrap();
        assert!(hom.iter().all(|l| net.check_location(l).is_ok()));
    }
}
