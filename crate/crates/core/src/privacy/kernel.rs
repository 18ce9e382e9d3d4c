use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use super::PrivacyBudget;
use crate::error::{invalid, Error, Result};
use crate::geometry::RectDomain;
use crate::pointprocess::log_edge_correction_1d;

/// Multiplier applied to the numerically maximized edge-correction ratio.
pub const EDGE_RATIO_SAFETY: f64 = 1.05;

const ANGLES: usize = 4096;
const BRACKET_POINTS: usize = 200;

/// Kernel families a caller may ask for. Only the Gaussian kernel has full
/// support; the others leave zero-intensity regions and cannot be private.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelShape {
    Gaussian,
    Epanechnikov,
    Uniform,
}

pub fn check_kernel_shape(shape: KernelShape) -> Result<()> {
    match shape {
        KernelShape::Gaussian => Ok(()),
        other => Err(invalid(format!(
            "{other:?} kernel has bounded support; synthetic points outside the support \
             of one dataset but inside another's have unbounded density ratio"
        ))),
    }
}

/// Smallest `k ≥ 0` with `P(Poisson(n) ≤ k) ≥ 1 − δ`.
pub fn poisson_tail_k(n: f64, delta: f64) -> Result<u64> {
    if !(n >= 0.0) || !n.is_finite() {
        return Err(invalid(format!(
            "Poisson mean must be nonnegative, got {n}"
        )));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(invalid(format!(
            "delta must lie in (0, 1) for a finite cutoff, got {delta}"
        )));
    }
    if n == 0.0 {
        return Ok(0);
    }
    let log_delta = delta.ln();
    let mut extra = 40.0 * n.sqrt() + 100.0;
    loop {
        let top = (n + extra).ceil() as usize;
        let log_pmf: Vec<f64> = (0..=top)
            .map(|k| -n + k as f64 * n.ln() - ln_gamma(k as f64 + 1.0))
            .collect();
        // mass beyond `top` is below pmf(top) · n / (top + 1 − n) · …; require
        // it to be negligible against δ before trusting the suffix sums
        if log_pmf[top] + 2f64.ln() > log_delta - 30.0 {
            extra *= 2.0;
            continue;
        }
        // suffix log-sum-exp: tail[k] = log P(Y > k)
        let mut tail = vec![f64::NEG_INFINITY; top + 1];
        let mut acc = f64::NEG_INFINITY;
        for k in (0..top).rev() {
            acc = log_add(acc, log_pmf[k + 1]);
            tail[k] = acc;
        }
        return Ok(tail.iter().position(|&t| t <= log_delta).unwrap_or(top) as u64);
    }
}

fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// Largest change of `log c(x)` over shifts of at most `a` in one dimension.
///
/// `log c` is concave and symmetric on `[lo, hi]`, so the steepest window
/// starts at the boundary and extends at most to the midpoint.
fn window_max(lo: f64, hi: f64, h: f64, a: f64) -> f64 {
    let reach = a.min(0.5 * (hi - lo));
    log_edge_correction_1d(lo + reach, lo, hi, h) - log_edge_correction_1d(lo, lo, hi, h)
}

/// `max_{|x − y| ≤ α} |log c_h(x) − log c_h(y)|` on a rectangle.
///
/// `log c_h` separates into `F(x₁) + G(x₂)`; swapping coordinates of the two
/// points independently aligns the signs of the two differences, so the
/// maximum is `max_θ M₁(α cos θ) + M₂(α sin θ)` with `Mᵢ` the per-axis window
/// maxima. The angle is searched on a fine grid followed by golden-section
/// refinement around the best grid point.
pub fn edge_ratio_max(domain: &RectDomain, h: f64, alpha: f64) -> f64 {
    let f = |theta: f64| {
        window_max(domain.x_min, domain.x_max, h, alpha * theta.cos())
            + window_max(domain.y_min, domain.y_max, h, alpha * theta.sin())
    };
    let step = std::f64::consts::FRAC_PI_2 / ANGLES as f64;
    let (mut best_i, mut best) = (0, f(0.0));
    for i in 1..=ANGLES {
        let v = f(i as f64 * step);
        if v > best {
            best = v;
            best_i = i;
        }
    }
    let lo = (best_i as f64 - 1.0).max(0.0) * step;
    let hi = (best_i as f64 + 1.0).min(ANGLES as f64) * step;
    best.max(golden_max(&f, lo, hi))
}

fn golden_max(f: &impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..60 {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    fc.max(fd)
}

/// `r_α(h)` as used in calibration: the maximized ratio times the safety
/// factor.
pub fn edge_ratio_bound(domain: &RectDomain, h: f64, alpha: f64) -> f64 {
    EDGE_RATIO_SAFETY * edge_ratio_max(domain, h, alpha)
}

/// Left-hand side `(2αB + α²)/(2h²) + r_α(h)` of the bandwidth condition.
pub fn kernel_condition(domain: &RectDomain, alpha: f64, h: f64) -> f64 {
    let b = domain.diameter();
    (2.0 * alpha * b + alpha * alpha) / (2.0 * h * h) + edge_ratio_bound(domain, h, alpha)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelCalibration {
    pub h: f64,
    pub k: u64,
    pub r_alpha_h: f64,
    /// `(2αB + α²)/(2h²) + r_α(h)` at the returned `h`.
    pub lhs: f64,
    /// `ε / k` (infinite when `k = 0`).
    pub rhs: f64,
    /// Whether the feasible set looked like an up-set on the search grid.
    pub grid_monotone: bool,
}

impl KernelCalibration {
    pub fn slack(&self) -> f64 {
        self.rhs - self.lhs
    }
}

/// Smallest bandwidth satisfying the kernel DP condition for `n` data points.
///
/// Searches a geometric grid on `[α ε^{-1/2} 10⁻³, 10⁴ B]`, takes the lowest
/// grid point above which every grid point is feasible, bisects the last
/// infeasible interval to 1e-6 relative, and re-verifies the result.
pub fn calibrate_kernel(
    budget: &PrivacyBudget,
    domain: &RectDomain,
    n: usize,
) -> Result<KernelCalibration> {
    budget.require_delta("the kernel synthesizer")?;
    let k = poisson_tail_k(n as f64, budget.delta)?;
    let alpha = budget.alpha;
    if alpha > domain.diameter() {
        return Err(invalid(format!(
            "alpha {alpha} exceeds the domain diameter {}",
            domain.diameter()
        )));
    }
    let rhs = if k == 0 {
        f64::INFINITY
    } else {
        budget.epsilon / k as f64
    };
    let lo = alpha * budget.epsilon.powf(-0.5) * 1e-3;
    let hi = 1e4 * domain.diameter();
    let feasible = |h: f64| kernel_condition(domain, alpha, h) <= rhs;

    let grid: Vec<f64> = (0..BRACKET_POINTS)
        .map(|i| lo * (hi / lo).powf(i as f64 / (BRACKET_POINTS - 1) as f64))
        .collect();
    let ok: Vec<bool> = grid.iter().map(|&h| feasible(h)).collect();
    if !ok[BRACKET_POINTS - 1] {
        let h = hi;
        let b = domain.diameter();
        let shift = (2.0 * alpha * b + alpha * alpha) / (2.0 * h * h);
        let edge = edge_ratio_bound(domain, h, alpha);
        return Err(Error::CalibrationInfeasible(format!(
            "no bandwidth up to {h:.4e} satisfies the condition: shift term {shift:.4e} + \
             edge term {edge:.4e} > eps/k = {rhs:.4e} (k = {k})"
        )));
    }
    let first = (0..BRACKET_POINTS)
        .rev()
        .take_while(|&i| ok[i])
        .last()
        .unwrap_or(BRACKET_POINTS - 1);
    let grid_monotone = ok[..first].iter().all(|&v| !v);

    let mut h = grid[first];
    if first > 0 {
        let (mut a, mut b) = (grid[first - 1], grid[first]);
        while (b - a) > 1e-6 * b {
            let m = 0.5 * (a + b);
            if feasible(m) {
                b = m;
            } else {
                a = m;
            }
        }
        h = b;
    }
    let lhs = kernel_condition(domain, alpha, h);
    if !(lhs <= rhs) {
        return Err(Error::CalibrationInfeasible(format!(
            "re-verification failed at h = {h:e}: {lhs:e} > {rhs:e}"
        )));
    }
    Ok(KernelCalibration {
        h,
        k,
        r_alpha_h: edge_ratio_bound(domain, h, alpha),
        lhs,
        rhs,
        grid_monotone,
    })
}
