//! Utility metrics: K-functions with edge corrections, intensity-based
//! pMSE, and the integrated squared relative error of K curves.

mod network;

pub use network::{khat_network, perimeter_count, PerimeterProfile};

use std::f64::consts::PI;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::{Point, RectDomain};
use crate::pointprocess::{KernelIntensity, PlanarIntensity, PlanarPattern};

/// Estimated K-function on a grid of distances.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KCurve {
    pub r: Vec<f64>,
    pub k: Vec<f64>,
}

impl KCurve {
    pub fn zeros(r: &[f64]) -> Self {
        KCurve {
            r: r.to_vec(),
            k: vec![0.0; r.len()],
        }
    }

    /// Evaluates the step function `r ↦ Σ_{d ≤ r} w` from unsorted
    /// `(d, w)` contributions, scaled by `scale`.
    pub(crate) fn from_pairs(r: &[f64], mut pairs: Vec<(f64, f64)>, scale: f64) -> Self {
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut k = Vec::with_capacity(r.len());
        let mut acc = 0.0;
        let mut next = 0;
        for &ri in r {
            while next < pairs.len() && pairs[next].0 <= ri {
                acc += pairs[next].1;
                next += 1;
            }
            k.push(acc * scale);
        }
        KCurve { r: r.to_vec(), k }
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["r", "khat"])?;
        for (r, k) in self.r.iter().zip(&self.k) {
            w.write_record([r.to_string(), k.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `n` equally spaced distances from 0 to `max`.
pub fn r_grid(max: f64, n: usize) -> Vec<f64> {
    if n < 2 {
        return vec![0.0; n];
    }
    (0..n).map(|i| max * i as f64 / (n - 1) as f64).collect()
}

/// Default planar grid: 50 points on `[0, B/4]`.
pub fn default_r_grid(domain: &RectDomain) -> Vec<f64> {
    r_grid(domain.diameter() / 4.0, 50)
}

/// Merges arcs given in half-turn units (`θ / π`), each as
/// `(center, half_width)`, and returns the covered length in `[0, 2]`.
fn covered_half_turns(arcs: &[(f64, f64)]) -> f64 {
    let mut pieces: Vec<(f64, f64)> = Vec::new();
    for &(c, w) in arcs {
        if w <= 0.0 {
            continue;
        }
        if w >= 1.0 {
            return 2.0;
        }
        let (lo, hi) = (c - w, c + w);
        let wrap = |x: f64| x.rem_euclid(2.0);
        let (a, b) = (wrap(lo), wrap(hi));
        if a < b {
            pieces.push((a, b));
        } else {
            pieces.push((a, 2.0));
            pieces.push((0.0, b));
        }
    }
    pieces.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut total = 0.0;
    let mut cur: Option<(f64, f64)> = None;
    for (a, b) in pieces {
        cur = match cur {
            Some((ca, cb)) if a <= cb => Some((ca, cb.max(b))),
            Some((ca, cb)) => {
                total += cb - ca;
                Some((a, b))
            }
            None => Some((a, b)),
        };
    }
    if let Some((a, b)) = cur {
        total += b - a;
    }
    total
}

/// Fraction of the circle of radius `d` around `x` that lies in the
/// rectangle, by intersecting the angular intervals each side removes.
pub fn circle_arc_fraction(domain: &RectDomain, x: &Point, d: f64) -> Result<f64> {
    if !(d > 0.0) {
        return Err(invalid(format!("radius must be positive, got {d}")));
    }
    if !domain.contains(x) {
        return Err(Error::OutOfDomain { x: x.x, y: x.y });
    }
    // the part of the circle beyond a side at distance g is an arc of half
    // width acos(g / d) around the outward normal
    let half = |g: f64| {
        if g >= d {
            0.0
        } else {
            (g / d).acos() / PI
        }
    };
    let arcs = [
        (0.0, half(domain.x_max - x.x)),
        (0.5, half(domain.y_max - x.y)),
        (1.0, half(x.x - domain.x_min)),
        (1.5, half(x.y - domain.y_min)),
    ];
    Ok(1.0 - covered_half_turns(&arcs) / 2.0)
}

/// Inhomogeneous K-function with the isotropic edge correction:
/// `(1/|S|) Σ_i Σ_{j≠i} 1(d_ij ≤ r) / (λ(x_i) λ(x_j) p(x_i, d_ij))`.
///
/// Coincident points and pairs whose circle has no arc inside the domain
/// are skipped.
pub fn khat_inhom<I: PlanarIntensity + ?Sized>(
    pattern: &PlanarPattern,
    lambda: &I,
    r: &[f64],
) -> Result<KCurve> {
    let pts = pattern.points();
    let domain = pattern.domain();
    if pts.len() < 2 {
        return Ok(KCurve::zeros(r));
    }
    let lam: Vec<f64> = pts.iter().map(|p| lambda.value(p)).collect();
    if let Some(i) = lam.iter().position(|l| !(*l > 0.0)) {
        return Err(Error::Evaluation(format!(
            "intensity is {} at point {i} ({}, {})",
            lam[i], pts[i].x, pts[i].y
        )));
    }
    let r_max = r.iter().copied().fold(0.0, f64::max);
    let mut pairs = Vec::new();
    for i in 0..pts.len() {
        for j in 0..pts.len() {
            if i == j {
                continue;
            }
            let d = pts[i].distance(&pts[j]);
            if d == 0.0 || d > r_max {
                continue;
            }
            let p = circle_arc_fraction(domain, &pts[i], d)?;
            if p > 0.0 {
                pairs.push((d, 1.0 / (lam[i] * lam[j] * p)));
            }
        }
    }
    Ok(KCurve::from_pairs(r, pairs, 1.0 / domain.area()))
}

/// Edge-corrected Gaussian kernel estimate of a pattern's intensity with
/// Scott's bandwidth `h = (s_x + s_y)/2 · n^{-1/6}`; falls back to `B/10`
/// when the spread is zero.
pub fn kernel_estimate(pattern: &PlanarPattern) -> Result<KernelIntensity> {
    let pts = pattern.points();
    let n = pts.len() as f64;
    let sd = |f: fn(&Point) -> f64| {
        if pts.len() < 2 {
            return 0.0;
        }
        let m = pts.iter().map(f).sum::<f64>() / n;
        (pts.iter().map(|p| (f(p) - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    let spread = 0.5 * (sd(|p| p.x) + sd(|p| p.y));
    let h = if spread > 0.0 {
        spread * n.powf(-1.0 / 6.0)
    } else {
        pattern.domain().diameter() / 10.0
    };
    KernelIntensity::new(*pattern.domain(), pts.to_vec(), h)
}

/// pMSE from normalized intensities at the concatenated points: the first
/// `n` entries belong to the original data, the rest to the synthetic data.
/// A point where both intensities vanish gets `p̂ = 1/2`.
pub fn pmse_from_values(values: &[(f64, f64)], n: usize) -> Result<f64> {
    let total = values.len();
    if total == 0 || n > total {
        return Err(Error::Evaluation("pMSE needs at least one point".into()));
    }
    let null = (total - n) as f64 / total as f64;
    let sum: f64 = values
        .iter()
        .map(|&(lo, ls)| {
            let p = if lo + ls > 0.0 { ls / (lo + ls) } else { 0.5 };
            (p - null) * (p - null)
        })
        .sum();
    Ok(sum / total as f64)
}

fn normalizer(integral: f64) -> f64 {
    if integral > 0.0 && integral.is_finite() {
        1.0 / integral
    } else {
        0.0
    }
}

/// Propensity mean squared error with `p̂ = λ'_norm / (λ_norm + λ'_norm)`,
/// where both intensities are normalized by their integrals.
pub fn pmse<A, B>(original: &[Point], synthetic: &[Point], lam_ori: &A, lam_syn: &B) -> Result<f64>
where
    A: PlanarIntensity + ?Sized,
    B: PlanarIntensity + ?Sized,
{
    let (co, cs) = (
        normalizer(lam_ori.integral()),
        normalizer(lam_syn.integral()),
    );
    let values: Vec<(f64, f64)> = original
        .iter()
        .chain(synthetic)
        .map(|p| (co * lam_ori.value(p), cs * lam_syn.value(p)))
        .collect();
    pmse_from_values(&values, original.len())
}

/// `mean_k ∫ (K_k / K_ori − 1)² dr` by the trapezoidal rule over the grid
/// points where `K_ori > 0`.
pub fn mise(k_ori: &KCurve, k_syn: &[KCurve]) -> Result<f64> {
    if k_syn.is_empty() {
        return Err(Error::Evaluation("no synthetic curves".into()));
    }
    let keep: Vec<usize> = (0..k_ori.r.len()).filter(|&i| k_ori.k[i] > 0.0).collect();
    if keep.is_empty() {
        return Err(Error::Evaluation(
            "original K-function is zero on the whole grid".into(),
        ));
    }
    let mut total = 0.0;
    for c in k_syn {
        if c.r != k_ori.r {
            return Err(invalid("K curves use different distance grids"));
        }
        let f = |i: usize| (c.k[i] / k_ori.k[i] - 1.0).powi(2);
        total += keep
            .windows(2)
            .map(|w| 0.5 * (f(w[0]) + f(w[1])) * (k_ori.r[w[1]] - k_ori.r[w[0]]))
            .sum::<f64>();
    }
    Ok(total / k_syn.len() as f64)
}
